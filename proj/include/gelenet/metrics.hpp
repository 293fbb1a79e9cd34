#pragma once

#include "gelenet/image.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gelenet::metrics {

inline constexpr std::size_t kThresholds = 256;
inline constexpr double kBetaSquared = 0.3;
inline constexpr double kEpsilon = 1e-8;

struct PrPoint {
    double precision = 0.0;
    double recall = 0.0;
};

struct FMeasures {
    double f_max = 0.0, f_mean = 0.0, f_adp = 0.0;
    std::array<PrPoint, kThresholds> pr_curve{};
    std::array<double, kThresholds> f_curve{};
};

struct EMeasures {
    double e_max = 0.0, e_mean = 0.0, e_adp = 0.0;
    std::array<double, kThresholds> e_curve{};
};

struct MetricReport {
    double s_measure = 0.0;
    double f_max = 0.0, f_mean = 0.0, f_adp = 0.0;
    double e_max = 0.0, e_mean = 0.0, e_adp = 0.0;
    double mae = 0.0;
    std::array<PrPoint, kThresholds> pr_curve{};
    std::array<double, kThresholds> f_curve{};
};

// All functions take single-channel maps of equal size: S in [0,1], G binary.

double mae(const Image& s, const Image& g);

/// Threshold t (0..255) binarizes S as S >= t/255.
double threshold_value(std::size_t t);
/// min(2 mean(S), 1).
double adaptive_threshold(const Image& s);

/// Fβ with β² = 0.3 from a binarized prediction; 0 when undefined.
double f_beta(const std::vector<bool>& prediction, const Image& g, PrPoint* pr = nullptr);
FMeasures f_measure_family(const Image& s, const Image& g);

/// Enhanced-alignment score of a binary prediction against G.
double e_measure(const std::vector<bool>& prediction, const Image& g);
EMeasures e_measure_family(const Image& s, const Image& g);

double s_object(const Image& s, const Image& g);
double s_region(const Image& s, const Image& g);
double s_measure(const Image& s, const Image& g, double alpha = 0.5);

MetricReport evaluate(const Image& s, const Image& g);
/// Pointwise mean over reports, summed in the given order; throws on an empty list.
MetricReport aggregate(const std::vector<MetricReport>& reports);

/// key: value lines.
void write_text_report(std::ostream& os, const MetricReport& r);
std::string to_json(const MetricReport& r, int indent = 2);
/// 256 rows (plus header): t, threshold, precision, recall, f.
void write_curves_csv(std::ostream& os, const MetricReport& r);

} // namespace gelenet::metrics
