#pragma once

#include "gelenet/tensor.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gelenet {

/// Named trainable tensor plus its Adam moment buffers.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor m;
    Tensor v;
    long step_count = 0;
    bool trainable = true;
    /// Structural 0/1 mask re-applied to the value after every optimizer step.
    std::optional<std::vector<double>> mask;

    void apply_mask();
};

/// Owns the parameters of one model. Names are unique; addresses are stable.
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet&) = delete;
    ParameterSet& operator=(const ParameterSet&) = delete;
    ParameterSet(ParameterSet&&) = default;
    ParameterSet& operator=(ParameterSet&&) = default;

    Parameter& create(const std::string& name, Shape shape, double fill = 0.0);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    Parameter* find(const std::string& name);

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.cbegin(); }
    auto end() const { return params_.cend(); }

    void clear_grads();

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Checkpoint layout (all integers unsigned 64-bit little-endian):
//   "GELENET1" | records...
//   record: name_length | name bytes | n | c | h | w | n*c*h*w float64 LE values
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);

/// Loads values into an existing parameter set. Every record must match a
/// parameter by name and shape, and every parameter must be present.
void load_checkpoint(ParameterSet& params, const std::filesystem::path& path);

} // namespace gelenet
