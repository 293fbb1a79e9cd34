#pragma once

#include "gelenet/data.hpp"
#include "gelenet/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gelenet {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DataSource { synthetic, manifest };

struct ExperimentConfig {
    ModelConfig model = ModelConfig::full(BackboneConfig::paper());

    std::size_t epochs = 45;
    std::size_t batch_size = 8;
    double lr = 1e-4;
    double lr_decay_factor = 0.1;
    int lr_decay_period = 30;
    std::size_t max_iterations = 0; // 0: no cap
    bool augment = true;

    std::uint64_t seed = 0;

    DataSource data_source = DataSource::synthetic;
    std::filesystem::path manifest;
    SynthConfig synth;

    std::filesystem::path out_dir = "runs/gelenet";

    double gradcheck_tolerance = 1e-3;
    std::vector<std::string> ablate_variants;
    std::size_t ablate_seeds = 1;

    std::size_t input_size() const { return model.backbone.input_size; }
    /// Cross-field checks (size divisibility, positive counts, known variants).
    void validate() const;
};

/// Built-in preset files for `include = desk` / `include = paper` and --preset.
std::string_view preset_text(std::string_view name);
std::vector<std::string> preset_names();

/**
 * Flat `key = value` lines, `#` comments. `include = NAME|PATH` pulls in a
 * built-in preset or another file (relative to the including file) at that
 * point; later assignments override earlier ones. Unknown keys are errors.
 */
void apply_config_text(ExperimentConfig& cfg, std::string_view text, const std::filesystem::path& origin);
void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);
void apply_preset(ExperimentConfig& cfg, std::string_view name);
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Canonical dump with every key; re-applying it reproduces the configuration.
std::string dump_config(const ExperimentConfig& cfg);

std::vector<std::string> known_config_keys();

} // namespace gelenet
