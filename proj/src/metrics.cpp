#include "gelenet/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace gelenet::metrics {

namespace {

void check_pair(const Image& s, const Image& g, const char* who)
{
    if (s.channels != 1 || g.channels != 1)
        throw ShapeError(std::string(who) + ": expected single-channel maps");
    if (s.height != g.height || s.width != g.width)
        throw ShapeError(std::string(who) + ": prediction " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                         " and ground truth " + std::to_string(g.height) + "x" + std::to_string(g.width) + " differ");
    if (s.plane() == 0)
        throw ShapeError(std::string(who) + ": empty map");
}

double mean_of(const std::vector<double>& v)
{
    double sum = 0.0;
    for (double x : v)
        sum += x;
    return sum / static_cast<double>(v.size());
}

std::vector<bool> binarize(const Image& s, double threshold)
{
    std::vector<bool> b(s.values.size());
    for (std::size_t i = 0; i < b.size(); ++i)
        b[i] = s.values[i] >= threshold;
    return b;
}

bool is_foreground(double g) { return g >= 0.5; }

// Degenerate ground truth: 0 = all background, 1 = all foreground, -1 = mixed.
int degenerate_kind(const Image& g)
{
    std::size_t fg = 0;
    for (double v : g.values)
        fg += is_foreground(v);
    if (fg == 0)
        return 0;
    if (fg == g.values.size())
        return 1;
    return -1;
}

// Structural similarity of one block; the alpha/beta split keeps constant blocks well defined.
double block_ssim(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    sxx /= n - 1.0 + kEpsilon;
    syy /= n - 1.0 + kEpsilon;
    sxy /= n - 1.0 + kEpsilon;
    const double alpha = 4.0 * mx * my * sxy;
    const double beta = (mx * mx + my * my) * (sxx + syy);
    if (alpha != 0.0)
        return alpha / (beta + kEpsilon);
    if (beta == 0.0)
        return 1.0;
    return 0.0;
}

double object_score(const std::vector<double>& x)
{
    if (x.empty())
        return 0.0;
    const double m = mean_of(x);
    double var = 0.0;
    for (double v : x)
        var += (v - m) * (v - m);
    const double sigma = x.size() > 1 ? std::sqrt(var / static_cast<double>(x.size() - 1)) : 0.0;
    return 2.0 * m / (m * m + 1.0 + sigma + kEpsilon);
}

} // namespace

double mae(const Image& s, const Image& g)
{
    check_pair(s, g, "mae");
    double sum = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i)
        sum += std::abs(s.values[i] - g.values[i]);
    return sum / static_cast<double>(s.values.size());
}

double threshold_value(std::size_t t) { return static_cast<double>(t) / 255.0; }

double adaptive_threshold(const Image& s)
{
    return std::min(2.0 * mean_of(s.values), 1.0);
}

double f_beta(const std::vector<bool>& prediction, const Image& g, PrPoint* pr)
{
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const bool gt = is_foreground(g.values[i]);
        if (prediction[i])
            (gt ? tp : fp) += 1.0;
        else if (gt)
            fn += 1.0;
    }
    const double p = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    if (pr != nullptr)
        *pr = PrPoint{p, r};
    const double denom = kBetaSquared * p + r;
    return denom > 0.0 ? (1.0 + kBetaSquared) * p * r / denom : 0.0;
}

FMeasures f_measure_family(const Image& s, const Image& g)
{
    check_pair(s, g, "f_measure");
    FMeasures out;
    double sum = 0.0;
    for (std::size_t t = 0; t < kThresholds; ++t) {
        out.f_curve[t] = f_beta(binarize(s, threshold_value(t)), g, &out.pr_curve[t]);
        sum += out.f_curve[t];
        out.f_max = std::max(out.f_max, out.f_curve[t]);
    }
    out.f_mean = sum / static_cast<double>(kThresholds);
    out.f_adp = f_beta(binarize(s, adaptive_threshold(s)), g);
    return out;
}

double e_measure(const std::vector<bool>& prediction, const Image& g)
{
    const std::size_t n = prediction.size();
    double mean_b = 0.0;
    for (bool b : prediction)
        mean_b += b ? 1.0 : 0.0;
    mean_b /= static_cast<double>(n);

    const int kind = degenerate_kind(g);
    if (kind == 0)
        return 1.0 - mean_b;
    if (kind == 1)
        return mean_b;

    double mean_g = 0.0;
    for (double v : g.values)
        mean_g += is_foreground(v) ? 1.0 : 0.0;
    mean_g /= static_cast<double>(n);

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pb = (prediction[i] ? 1.0 : 0.0) - mean_b;
        const double pg = (is_foreground(g.values[i]) ? 1.0 : 0.0) - mean_g;
        const double xi = 2.0 * pg * pb / (pg * pg + pb * pb + kEpsilon);
        sum += (xi + 1.0) * (xi + 1.0) / 4.0;
    }
    return sum / static_cast<double>(n);
}

EMeasures e_measure_family(const Image& s, const Image& g)
{
    check_pair(s, g, "e_measure");
    EMeasures out;
    double sum = 0.0;
    for (std::size_t t = 0; t < kThresholds; ++t) {
        out.e_curve[t] = e_measure(binarize(s, threshold_value(t)), g);
        sum += out.e_curve[t];
        out.e_max = std::max(out.e_max, out.e_curve[t]);
    }
    out.e_mean = sum / static_cast<double>(kThresholds);
    out.e_adp = e_measure(binarize(s, adaptive_threshold(s)), g);
    return out;
}

double s_object(const Image& s, const Image& g)
{
    check_pair(s, g, "s_object");
    std::vector<double> fg, bg;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (is_foreground(g.values[i]))
            fg.push_back(s.values[i]);
        else
            bg.push_back(1.0 - s.values[i]);
    }
    const double mu = static_cast<double>(fg.size()) / static_cast<double>(s.values.size());
    return mu * object_score(fg) + (1.0 - mu) * object_score(bg);
}

double s_region(const Image& s, const Image& g)
{
    check_pair(s, g, "s_region");
    const std::size_t rows = g.height, cols = g.width;

    // Centroid with 1-based coordinates, rounded; falls back to the image centre.
    double total = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t y = 0; y < rows; ++y)
        for (std::size_t x = 0; x < cols; ++x)
            if (is_foreground(g.at(0, y, x))) {
                total += 1.0;
                sx += static_cast<double>(x + 1);
                sy += static_cast<double>(y + 1);
            }
    std::size_t cx, cy;
    if (total == 0.0) {
        cx = static_cast<std::size_t>(std::lround(static_cast<double>(cols) / 2.0));
        cy = static_cast<std::size_t>(std::lround(static_cast<double>(rows) / 2.0));
    } else {
        cx = static_cast<std::size_t>(std::lround(sx / total));
        cy = static_cast<std::size_t>(std::lround(sy / total));
    }
    // Block boundaries: rows [0,cy) | [cy,rows), cols [0,cx) | [cx,cols).
    const std::size_t y_lo[2] = {0, cy}, y_hi[2] = {cy, rows};
    const std::size_t x_lo[2] = {0, cx}, x_hi[2] = {cx, cols};
    const double area = static_cast<double>(rows * cols);

    double score = 0.0;
    for (int by = 0; by < 2; ++by)
        for (int bx = 0; bx < 2; ++bx) {
            std::vector<double> px, gy;
            for (std::size_t y = y_lo[by]; y < y_hi[by]; ++y)
                for (std::size_t x = x_lo[bx]; x < x_hi[bx]; ++x) {
                    px.push_back(s.at(0, y, x));
                    gy.push_back(is_foreground(g.at(0, y, x)) ? 1.0 : 0.0);
                }
            if (px.empty())
                continue;
            score += static_cast<double>(px.size()) / area * block_ssim(px, gy);
        }
    return score;
}

double s_measure(const Image& s, const Image& g, double alpha)
{
    check_pair(s, g, "s_measure");
    const int kind = degenerate_kind(g);
    if (kind == 0)
        return 1.0 - mean_of(s.values);
    if (kind == 1)
        return mean_of(s.values);
    const double q = alpha * s_object(s, g) + (1.0 - alpha) * s_region(s, g);
    return std::max(q, 0.0);
}

MetricReport evaluate(const Image& s, const Image& g)
{
    MetricReport r;
    r.mae = mae(s, g);
    r.s_measure = s_measure(s, g);
    const FMeasures f = f_measure_family(s, g);
    r.f_max = f.f_max;
    r.f_mean = f.f_mean;
    r.f_adp = f.f_adp;
    r.pr_curve = f.pr_curve;
    r.f_curve = f.f_curve;
    const EMeasures e = e_measure_family(s, g);
    r.e_max = e.e_max;
    r.e_mean = e.e_mean;
    r.e_adp = e.e_adp;
    return r;
}

MetricReport aggregate(const std::vector<MetricReport>& reports)
{
    if (reports.empty())
        throw std::invalid_argument("aggregate: no images to aggregate");
    MetricReport out;
    for (const MetricReport& r : reports) {
        out.s_measure += r.s_measure;
        out.f_max += r.f_max;
        out.f_mean += r.f_mean;
        out.f_adp += r.f_adp;
        out.e_max += r.e_max;
        out.e_mean += r.e_mean;
        out.e_adp += r.e_adp;
        out.mae += r.mae;
        for (std::size_t t = 0; t < kThresholds; ++t) {
            out.pr_curve[t].precision += r.pr_curve[t].precision;
            out.pr_curve[t].recall += r.pr_curve[t].recall;
            out.f_curve[t] += r.f_curve[t];
        }
    }
    const double n = static_cast<double>(reports.size());
    for (double* v : {&out.s_measure, &out.f_max, &out.f_mean, &out.f_adp, &out.e_max, &out.e_mean, &out.e_adp,
                      &out.mae})
        *v /= n;
    for (std::size_t t = 0; t < kThresholds; ++t) {
        out.pr_curve[t].precision /= n;
        out.pr_curve[t].recall /= n;
        out.f_curve[t] /= n;
    }
    return out;
}

void write_text_report(std::ostream& os, const MetricReport& r)
{
    const auto old = os.precision(10);
    os << "s_measure: " << r.s_measure << '\n'
       << "f_max: " << r.f_max << '\n'
       << "f_mean: " << r.f_mean << '\n'
       << "f_adp: " << r.f_adp << '\n'
       << "e_max: " << r.e_max << '\n'
       << "e_mean: " << r.e_mean << '\n'
       << "e_adp: " << r.e_adp << '\n'
       << "mae: " << r.mae << '\n';
    os.precision(old);
}

std::string to_json(const MetricReport& r, int indent)
{
    nlohmann::ordered_json j;
    j["s_measure"] = r.s_measure;
    j["f_max"] = r.f_max;
    j["f_mean"] = r.f_mean;
    j["f_adp"] = r.f_adp;
    j["e_max"] = r.e_max;
    j["e_mean"] = r.e_mean;
    j["e_adp"] = r.e_adp;
    j["mae"] = r.mae;
    auto& precision = j["precision"] = nlohmann::ordered_json::array();
    auto& recall = j["recall"] = nlohmann::ordered_json::array();
    auto& f = j["f_curve"] = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < kThresholds; ++t) {
        precision.push_back(r.pr_curve[t].precision);
        recall.push_back(r.pr_curve[t].recall);
        f.push_back(r.f_curve[t]);
    }
    return j.dump(indent);
}

void write_curves_csv(std::ostream& os, const MetricReport& r)
{
    const auto old = os.precision(12);
    os << "t,threshold,precision,recall,f_beta\n";
    for (std::size_t t = 0; t < kThresholds; ++t)
        os << t << ',' << threshold_value(t) << ',' << r.pr_curve[t].precision << ',' << r.pr_curve[t].recall << ','
           << r.f_curve[t] << '\n';
    os.precision(old);
}

} // namespace gelenet::metrics
