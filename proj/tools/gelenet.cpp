// Experiment driver: train, infer, eval, gradcheck, ablate.

#include "gelenet/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using namespace gelenet;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kNumerical = 2;

struct CommonFlags {
    std::string config;
    std::string preset;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("--config", f.config, "key=value experiment config file");
    cmd->add_option("--preset", f.preset, "built-in preset applied before --config")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--out", f.out, "output directory (overrides out_dir)");
    cmd->add_option("--seed", f.seed, "seed (overrides the config)");
}

// Unknown keys and malformed values abort here, before any compute.
ExperimentConfig resolve(const CommonFlags& f)
{
    ExperimentConfig cfg;
    if (!f.preset.empty())
        apply_preset(cfg, f.preset);
    if (!f.config.empty())
        apply_config_file(cfg, f.config);
    if (!f.out.empty())
        cfg.out_dir = f.out;
    if (f.seed)
        cfg.seed = *f.seed;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"GeleNet salient object detection: training, inference, evaluation and diagnostics"};
    app.require_subcommand(1);

    CommonFlags train_flags, infer_flags, grad_flags, ablate_flags;
    std::string eval_out;

    auto* train = app.add_subcommand("train", "train a model and report training-set metrics");
    add_common(train, train_flags);

    auto* infer = app.add_subcommand("infer", "write saliency maps for PNG images");
    add_common(infer, infer_flags);
    std::string checkpoint;
    std::vector<std::string> inputs;
    infer->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();
    infer->add_option("inputs", inputs, "PNG files or directories")->required();
    bool debug_maps = false;
    infer->add_flag("--debug-maps", debug_maps, "also write attention maps and the KTM correlation as PNGs");

    auto* eval = app.add_subcommand("eval", "score saliency maps against ground truth");
    std::string pred_dir, gt;
    eval->add_option("predictions", pred_dir, "directory of predicted maps")->required();
    eval->add_option("ground_truth", gt, "directory of masks or a manifest")->required();
    eval->add_option("--out", eval_out, "report directory")->default_val("eval");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every module");
    add_common(grad, grad_flags);
    std::optional<double> tolerance;
    std::string corrupt;
    grad->add_option("--tolerance", tolerance, "maximum relative error (default from config, 1e-3)");
    grad->add_option("--corrupt", corrupt, "scale the backward rule of this op (negative control)");

    auto* ablate = app.add_subcommand("ablate", "train module variants under one seed and data set");
    add_common(ablate, ablate_flags);
    std::vector<std::string> variants;
    std::optional<std::size_t> seeds;
    ablate->add_option("variants", variants, "variant names (default: ablate.variants from config)");
    ablate->add_option("--seeds", seeds, "number of consecutive seeds to average");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (*train) {
            run_train(resolve(train_flags), std::cout);
        } else if (*infer) {
            const ExperimentConfig cfg = resolve(infer_flags);
            std::vector<fs::path> paths(inputs.begin(), inputs.end());
            run_infer(cfg, checkpoint, paths, infer_flags.out.empty() ? cfg.out_dir / "maps" : fs::path(infer_flags.out),
                      std::cout, debug_maps);
        } else if (*eval) {
            run_eval(pred_dir, gt, eval_out, std::cout);
        } else if (*grad) {
            const ExperimentConfig cfg = resolve(grad_flags);
            const double tol = tolerance.value_or(cfg.gradcheck_tolerance);
            if (!(tol > 0.0))
                throw ConfigError("--tolerance must be positive");
            if (!run_gradcheck(tol, corrupt, cfg.seed, std::cout).passed)
                return kNumerical;
        } else if (*ablate) {
            const ExperimentConfig cfg = resolve(ablate_flags);
            const auto rows = run_ablate(cfg, variants.empty() ? cfg.ablate_variants : variants,
                                         seeds.value_or(cfg.ablate_seeds), std::cout);
            write_ablation_table(std::cout, rows);
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    }
    return kOk;
}
