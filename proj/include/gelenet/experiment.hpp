#pragma once

#include "gelenet/config.hpp"
#include "gelenet/metrics.hpp"
#include "gelenet/module_checks.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace gelenet {

/// NaN/inf during training or a failed gradient check; maps to exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<Sample> load_dataset(const ExperimentConfig& cfg);

struct LossRecord {
    std::size_t iteration = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double iou = 0.0;
    double bce = 0.0;
};

struct TrainOptions {
    /// Called after every iteration; may be empty.
    std::function<void(const LossRecord&)> on_iteration;
};

/**
 * Mini-batch Adam over `data`: per-epoch shuffle from an RNG seeded with
 * cfg.seed, optional random D4 augmentation, step-decayed learning rate.
 * Stops after cfg.epochs or cfg.max_iterations (when nonzero).
 */
std::vector<LossRecord> train_model(GeleNet& model, const std::vector<Sample>& data, const ExperimentConfig& cfg,
                                    const TrainOptions& options = {});

/// Saliency maps for all samples, in order, at the model input resolution.
std::vector<Image> predict_maps(const GeleNet& model, const std::vector<Sample>& data, std::size_t batch_size);

/// Per-image reports and their aggregate; evaluates up to `threads` images concurrently.
metrics::MetricReport evaluate_maps(const std::vector<Image>& predictions, const std::vector<Image>& truths,
                                    std::size_t threads, std::vector<metrics::MetricReport>* per_image = nullptr);

/// GELENET_THREADS if set (>= 1), otherwise the hardware concurrency.
std::size_t evaluation_threads();

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& trace);

// Subcommand bodies. Each writes its artifacts below cfg.out_dir (or `out`) and a summary to `log`.

struct TrainSummary {
    std::vector<LossRecord> trace;
    metrics::MetricReport train_report;
    std::filesystem::path checkpoint;
};
TrainSummary run_train(const ExperimentConfig& cfg, std::ostream& log);

/// One grayscale PNG per input image (files or directories of PNGs), at the input's own resolution.
/// With `debug_maps`, also <stem>_{low,high}_a{1..4}.png, <stem>_{low,high}_a_ori.png (attention maps
/// at feature resolution) and <stem>_ktm_C.png (the correlation matrix scaled by its maximum).
std::vector<std::filesystem::path> run_infer(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                                             const std::vector<std::filesystem::path>& inputs,
                                             const std::filesystem::path& out_dir, std::ostream& log,
                                             bool debug_maps = false);

/// Predictions matched to ground truths by filename stem; ground truth is a directory or a manifest.
metrics::MetricReport run_eval(const std::filesystem::path& predictions, const std::filesystem::path& ground_truth,
                               const std::filesystem::path& out_dir, std::ostream& log);

struct GradcheckSummary {
    std::vector<ModuleCheck> modules;
    bool passed = true;
};
/// `corrupt_op`, when non-empty, scales that op's backward by 1.5 as a negative control.
GradcheckSummary run_gradcheck(double tolerance, const std::string& corrupt_op, std::uint64_t seed,
                               std::ostream& log);

struct AblationRow {
    Variant variant;
    metrics::MetricReport report; // averaged over seeds
    std::vector<double> f_adp_per_seed;
};
std::vector<AblationRow> run_ablate(const ExperimentConfig& cfg, const std::vector<std::string>& variants,
                                    std::size_t seeds, std::ostream& log);
void write_ablation_table(std::ostream& os, const std::vector<AblationRow>& rows);

} // namespace gelenet
