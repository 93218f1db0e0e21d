#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hetgp/gp.hpp"
#include "hetgp/iterative.hpp"

namespace hetgp {

inline constexpr const char* kArtifactName = "hetgp";
inline constexpr const char* kArtifactVersion = "1.0.0";

/// One CLI invocation. `overrides` is merged into the experiment's default settings.
struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 1;
    std::optional<int> trials;
    std::filesystem::path output_dir = "out";
    nlohmann::json overrides = nlohmann::json::object();
};

struct CheckResult {
    std::string name;
    bool passed = false;
    nlohmann::json detail = nlohmann::json::object();
};

struct ExperimentResult {
    std::string experiment;
    nlohmann::json settings;
    /// Emitted files, relative to the output directory, excluding the manifest.
    std::vector<std::string> files;
    std::vector<CheckResult> checks;

    [[nodiscard]] bool all_passed() const;
};

[[nodiscard]] const std::vector<std::string>& experiment_names();

/// Default settings object for an experiment; throws InputError for unknown names.
[[nodiscard]] nlohmann::json default_settings(const std::string& experiment);

/// Defaults with `overrides` merged in and `trials` applied. Unknown keys and type
/// mismatches throw InputError naming the key.
[[nodiscard]] nlohmann::json resolve_settings(const ExperimentConfig& config);

[[nodiscard]] ExperimentResult run_motivating(const ExperimentConfig& config);
[[nodiscard]] ExperimentResult run_qualitative_n(const ExperimentConfig& config);
[[nodiscard]] ExperimentResult run_convergence_stats(const ExperimentConfig& config);
[[nodiscard]] ExperimentResult run_control_mc(const ExperimentConfig& config);
[[nodiscard]] ExperimentResult run_theory_checks(const ExperimentConfig& config);

/// Dispatches on config.experiment and writes manifest.json next to the outputs.
[[nodiscard]] ExperimentResult run_experiment(const ExperimentConfig& config);

/// Manifest document: resolved settings, seed, version, checks and a SHA-256 per file.
[[nodiscard]] nlohmann::json make_manifest(const ExperimentConfig& config,
                                           const ExperimentResult& result);

/// Mean of `width` over grid points with lo <= x <= hi.
[[nodiscard]] double mean_over_interval(const std::vector<double>& x,
                                        const std::vector<double>& width, double lo, double hi);

/// Smallest |y| for which a single sample pulls the fitted noise adjustment above zero
/// on the first iteration: (1 + s) / sqrt(s).
[[nodiscard]] double single_point_distrust_threshold(double sigma0_sq);

/// Fixed point of the closed-form step for one sample, found by bisection on
/// [-s/(1+s), (y^2 - s)/(1+s)]. Requires s >= y^2.
[[nodiscard]] double scalar_fixed_point(double y, double sigma0_sq);

/// Random dataset in the K = I regime: N uniform in [1, max_n], inputs spaced by
/// `spacing`, outputs uniform in (-1, 1).
[[nodiscard]] Dataset random_identity_regime_dataset(std::uint64_t seed, int max_n,
                                                     double spacing);

}  // namespace hetgp
