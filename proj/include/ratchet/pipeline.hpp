#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ratchet/experiment.hpp"
#include "ratchet/params.hpp"

namespace ratchet::pipeline {

enum class Analysis { zero_one, corrdim, fits };

std::string to_string(Analysis a);
Analysis parse_analysis(const std::string& s);

struct ZeroOneSettings {
    std::size_t n_c = 100;
    /// f_max = factor * Omega_R / (2 pi); the default is twice the golden ratio.
    double f_max_factor = 3.2360679774997896;
    std::size_t stride = 1;
};

struct CorrDimSettings {
    std::uint64_t pair_budget = 500'000'000;
    std::uint64_t seed = 24301;
    std::size_t m_min = 2;
    std::size_t m_max = 12;
    double r2_min = 0.99;
};

struct FitSettings {
    double ie_threshold = 0.1;
    /// "cumulative" or "time_average".
    std::string ie_measure = "cumulative";
    /// Smallest N used in the per-g scaling fits; one entry per g, or one for all.
    std::vector<int> fit_min_N;
    double revival_threshold = 0.75;
    double revival_burn_in = 0.5;
    double revival_envelope_TR = 0.0;
    double revival_merge_gap_TR = 0.0;
};

struct ExperimentConfig {
    std::string name = "custom";
    std::vector<Model> models{Model::gp3};
    RatchetParams params = RatchetParams::standard();
    std::vector<double> g_values{0.0};
    std::vector<int> N_values;
    std::vector<ObservableSpec> observables{ObservableSpec{}};
    std::vector<Analysis> analysis;
    std::filesystem::path output_dir = "out";
    SamplingPlan sampling;
    ZeroOneSettings zero_one;
    CorrDimSettings corrdim;
    FitSettings fits;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    /// Canonical key-value text; parse_config(to_ini()) reproduces the config.
    std::string to_ini() const;
    /// FNV-1a of to_ini() without output_dir.
    std::uint64_t hash() const;
    int min_fit_N(std::size_t g_index) const;
};

/// Parses the sectioned key-value format written by to_ini. Lists are comma
/// separated; g_values also accepts start:stop:step.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sets "section.key" entries (values in config syntax) on top of `base` and
/// re-validates through parse_config.
ExperimentConfig apply_overrides(const ExperimentConfig& base,
                                 const std::vector<std::pair<std::string, std::string>>& overrides);

std::vector<std::string> recipe_names();
/// Desk-scale unless `full`: at most 200 T_R and N <= 24.
ExperimentConfig recipe(const std::string& name, bool full = false);

struct RunRecord {
    Model model = Model::gp3;
    double g = 0.0;
    int N = 0;
    std::string dir;  // relative to the experiment directory
    std::vector<std::string> files;
    double wall_seconds = 0.0;
    bool ok = false;
    std::string error;
    std::vector<std::string> warnings;
};

struct RunManifest {
    std::string name;
    std::string config_hash;
    std::string code_version;
    std::filesystem::path root;  // output_dir / name
    std::vector<RunRecord> runs;
    std::vector<std::string> summary_files;
    std::vector<std::string> warnings;
    bool cached = false;

    bool all_ok() const;
    std::string to_json() const;
};

/// "gp3_g0.14" or "ls3_g0.03_N12".
std::string run_dir_name(Model m, double g, int N);

/// Worker count from RATCHET_WORKERS (default 1).
std::size_t workers_from_env();

/// Runs every (model, g, N) combination and the requested analyses, then writes
/// summary tables and manifest.json under output_dir/name. A failed run is
/// recorded and the sweep continues. An existing manifest with the same config
/// hash and all files present is returned without recomputation.
RunManifest run_experiment(const ExperimentConfig& cfg, std::size_t workers = 1);

}  // namespace ratchet::pipeline
