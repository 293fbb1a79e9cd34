#pragma once

#include "gelenet/gradcheck.hpp"

#include <string>
#include <vector>

namespace gelenet {

struct ModuleCheck {
    std::string module;
    GradCheckResult result;
    double seconds = 0.0;
};

inline const std::vector<std::string> kCheckedModules = {"backbone", "dswsam", "swsam", "ktm", "predictor", "loss"};

/**
 * Finite-difference check of one module on batch-2 random inputs with all
 * parameters perturbed away from their structured initial values (zero γ,
 * uniform fusion weights, zero biases) so every path carries gradient.
 */
ModuleCheck check_module(const std::string& module, const GradCheckOptions& options);
std::vector<ModuleCheck> check_all_modules(const GradCheckOptions& options);

} // namespace gelenet
