// Command-line front end: simulate, analyze, recipe, fit.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ratchet/dimension.hpp"
#include "ratchet/fitting.hpp"
#include "ratchet/pipeline.hpp"
#include "ratchet/time_series.hpp"
#include "ratchet/zero_one.hpp"

using namespace ratchet;
using json = nlohmann::json;

namespace {

void emit(const std::string& text, const std::string& output) {
    if (output.empty()) {
        std::cout << text << '\n';
    } else {
        write_file_atomic(output, text + "\n");
        std::cerr << "wrote " << output << '\n';
    }
}

int report(const pipeline::RunManifest& m) {
    std::size_t failed = 0;
    for (const auto& r : m.runs) {
        if (r.ok) continue;
        ++failed;
        std::cerr << "run " << r.dir << " failed: " << r.error << '\n';
    }
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << (m.root / "manifest.json").string() << '\n';
    std::cerr << m.runs.size() - failed << "/" << m.runs.size() << " runs ok" << (m.cached ? " (cached)" : "") << '\n';
    return m.all_ok() ? 0 : 1;
}

// Plain comma-separated table with a header row.
std::map<std::string, std::vector<double>> read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    std::vector<std::string> names;
    {
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) names.push_back(cell);
    }
    std::map<std::string, std::vector<double>> cols;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::size_t k = 0;
        for (std::string cell; std::getline(ss, cell, ','); ++k) {
            if (k >= names.size()) throw std::runtime_error(path + ":" + std::to_string(row) + ": too many cells");
            cols[names[k]].push_back(cell.empty() ? std::nan("") : std::stod(cell));
        }
    }
    return cols;
}

const TimeSeries& pick(const std::vector<TimeSeries>& series, const std::string& column) {
    if (series.empty()) throw std::runtime_error("no data columns");
    if (column.empty()) return series.front();
    for (const auto& s : series)
        if (s.label == column) return s;
    throw std::runtime_error("no column '" + column + "'");
}

struct SimulateArgs {
    std::string config;
    std::vector<std::string> set;
    std::string models, g_values, N_values, observables, analysis, output, name;
    double duration = 0.0;
    std::size_t workers = 0;
};

pipeline::ExperimentConfig build_config(const SimulateArgs& a) {
    auto cfg = a.config.empty() ? pipeline::ExperimentConfig{} : pipeline::load_config(a.config);
    std::vector<std::pair<std::string, std::string>> ov;
    const auto add = [&](const char* key, const std::string& v) {
        if (!v.empty()) ov.emplace_back(key, v);
    };
    add("experiment.name", a.name);
    add("experiment.models", a.models);
    add("experiment.g_values", a.g_values);
    add("experiment.N_values", a.N_values);
    add("experiment.observables", a.observables);
    add("experiment.analysis", a.analysis);
    add("experiment.output_dir", a.output);
    if (a.duration > 0.0) add("sampling.duration_TR", std::to_string(a.duration));
    for (const auto& kv : a.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects section.key=value, got '" + kv + "'");
        ov.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!ov.empty()) cfg = pipeline::apply_overrides(cfg, ov);
    cfg.validate();
    return cfg;
}

struct AnalyzeArgs {
    std::string csv, column, method = "zero_one", output;
    double f_max = 0.0;
    std::size_t n_c = 100;
    std::size_t m_max = 12, tau = 0, theiler = 0;
    std::uint64_t pair_budget = 500'000'000, seed = 24301;
    double threshold = 0.75, burn_in = 0.5, envelope = 0.0, merge_gap = 0.0;
};

int analyze(const AnalyzeArgs& a) {
    const auto all = read_csv(a.csv);
    const TimeSeries& s = pick(all, a.column);
    if (a.method == "zero_one") {
        double f_max = a.f_max;
        if (f_max <= 0.0) f_max = 2.0 * std::numbers::phi * RatchetParams::standard().rabi_frequency() / (2.0 * std::numbers::pi);
        chaos::ZeroOneOptions opt;
        opt.n_c = a.n_c;
        auto r = chaos::zero_one_test(s, 1.0 / s.dt, f_max, opt);
        r.label = s.label;
        emit(r.to_json(), a.output);
        return r.degenerate ? 1 : 0;
    }
    if (a.method == "corrdim") {
        auto cfg = dimension::default_embedding_config(s.view());
        cfg.dims_m.clear();
        for (std::size_t m = 2; m <= a.m_max; ++m) cfg.dims_m.push_back(m);
        if (a.tau > 0) cfg.delay_tau = a.tau;
        if (a.theiler > 0) cfg.theiler_w = a.theiler;
        cfg.sampling.max_pairs = a.pair_budget;
        cfg.sampling.seed = a.seed;
        const auto e = dimension::correlation_dimension(s, cfg);
        emit(e.to_json(), a.output);
        if (!e.ok) std::cerr << "no estimate: " << e.failure << '\n';
        return e.ok ? 0 : 1;
    }
    if (a.method == "onset") {
        try {
            const auto r = fitting::depletion_onset_time(fitting::onset_window(s));
            json j = json::parse(r.fit.to_json());
            j["onset"] = r.onset;
            emit(j.dump(2), a.output);
            return 0;
        } catch (const fitting::FitRejected& e) {
            std::cerr << "no onset: " << e.what() << '\n';
            return 1;
        }
    }
    if (a.method == "revival") {
        fitting::RevivalOptions opt;
        opt.threshold = a.threshold;
        opt.burn_in_level = a.burn_in;
        opt.envelope_window = a.envelope;
        opt.merge_gap = a.merge_gap;
        const auto r = fitting::revival_time(s, opt);
        json j{{"label", s.label}, {"found", r.found}, {"never_decayed", r.never_decayed}};
        if (r.found) {
            j["time"] = r.time;
            j["start"] = r.start;
            j["end"] = r.end;
        }
        emit(j.dump(2), a.output);
        return 0;
    }
    throw std::invalid_argument("unknown method " + a.method);
}

struct FitArgs {
    std::string csv, x = "x", y = "y", model = "linear", output;
    std::vector<double> init;
    std::size_t max_iter = 500;
};

int fit(const FitArgs& a) {
    const auto cols = read_table(a.csv);
    const auto col = [&](const std::string& n) -> const std::vector<double>& {
        const auto it = cols.find(n);
        if (it == cols.end()) throw std::runtime_error("no column '" + n + "' in " + a.csv);
        return it->second;
    };
    std::vector<double> x, y;
    const auto& xs = col(a.x);
    const auto& ys = col(a.y);
    for (std::size_t i = 0; i < std::min(xs.size(), ys.size()); ++i)
        if (std::isfinite(xs[i]) && std::isfinite(ys[i])) {
            x.push_back(xs[i]);
            y.push_back(ys[i]);
        }

    fitting::FitResult r;
    if (a.model == "linear") {
        r = fitting::linear_fit(x, y);
    } else {
        const auto spec = fitting::model_by_name(a.model);
        std::vector<double> init = a.init;
        if (init.empty()) {
            if (a.model == "tanh_onset") init = fitting::init_tanh_onset(x, y);
            else if (a.model == "power_offset") init = fitting::init_power_offset(x, y);
            else init = fitting::init_shifted_power(x, y);
        }
        if (init.size() != spec.arity())
            throw std::invalid_argument("--init needs " + std::to_string(spec.arity()) + " values");
        fitting::FitOptions opt;
        opt.max_iter = a.max_iter;
        r = fitting::nonlinear_fit(spec, x, y, init, opt);
    }
    emit(r.to_json(), a.output);
    return r.converged ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ring ratchet simulations and nonlinear time-series analysis"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Run a configured sweep");
    s->add_option("config", sim.config, "Config file")->check(CLI::ExistingFile);
    s->add_option("--set", sim.set, "Override, section.key=value (repeatable)");
    s->add_option("--models", sim.models, "dnls, gp3, ls3 (comma list)");
    s->add_option("-g,--g-values", sim.g_values, "List or start:stop:step");
    s->add_option("-N,--N-values", sim.N_values, "Particle numbers for ls3");
    s->add_option("--observables", sim.observables, "current, local_density(3), depletion, fidelity");
    s->add_option("--analysis", sim.analysis, "zero_one, corrdim, fits");
    s->add_option("--duration", sim.duration, "Duration in Rabi periods")->check(CLI::PositiveNumber);
    s->add_option("--name", sim.name, "Experiment name");
    s->add_option("-o,--output", sim.output, "Output directory");
    s->add_option("-j,--workers", sim.workers, "Parallel runs (default RATCHET_WORKERS or 1)");
    bool print_config = false;
    s->add_flag("--print-config", print_config, "Print the effective config and exit");

    std::string recipe_name, recipe_output;
    bool full = false, list = false;
    std::size_t recipe_workers = 0;
    auto* r = app.add_subcommand("recipe", "Run a named reproduction protocol");
    r->add_option("name", recipe_name, "Recipe name");
    r->add_flag("--full", full, "Full protocol instead of desk scale");
    r->add_flag("--list", list, "List recipe names");
    r->add_option("-o,--output", recipe_output, "Output directory");
    r->add_option("-j,--workers", recipe_workers, "Parallel runs (default RATCHET_WORKERS or 1)");

    AnalyzeArgs an;
    auto* a = app.add_subcommand("analyze", "Analyse one column of a trajectory CSV");
    a->add_option("csv", an.csv, "Trajectory CSV (t, columns...)")->required()->check(CLI::ExistingFile);
    a->add_option("-c,--column", an.column, "Column label (default first)");
    a->add_option("-m,--method", an.method, "zero_one, corrdim, onset, revival")
        ->check(CLI::IsMember({"zero_one", "corrdim", "onset", "revival"}));
    a->add_option("--f-max", an.f_max, "zero_one: highest frequency of interest");
    a->add_option("--n-c", an.n_c, "zero_one: number of c values");
    a->add_option("--m-max", an.m_max, "corrdim: largest embedding dimension")->check(CLI::Range(3, 64));
    a->add_option("--tau", an.tau, "corrdim: delay (default from mutual information)");
    a->add_option("--theiler", an.theiler, "corrdim: Theiler window (default sqrt N)");
    a->add_option("--pair-budget", an.pair_budget, "corrdim: pair budget");
    a->add_option("--seed", an.seed, "corrdim: pair sampling seed");
    a->add_option("--threshold", an.threshold, "revival: fidelity threshold");
    a->add_option("--burn-in", an.burn_in, "revival: level the fidelity must first drop below");
    a->add_option("--envelope", an.envelope, "revival: sliding-maximum window (time units)");
    a->add_option("--merge-gap", an.merge_gap, "revival: peak merge gap (time units)");
    a->add_option("-o,--output", an.output, "Write JSON here instead of stdout");

    FitArgs fa;
    auto* f = app.add_subcommand("fit", "Fit a model to two CSV columns");
    f->add_option("csv", fa.csv, "CSV with a header row")->required()->check(CLI::ExistingFile);
    f->add_option("-x", fa.x, "Abscissa column");
    f->add_option("-y", fa.y, "Ordinate column");
    f->add_option("--model", fa.model, "linear, tanh_onset, power_offset, shifted_power")
        ->check(CLI::IsMember({"linear", "tanh_onset", "power_offset", "shifted_power"}));
    f->add_option("--init", fa.init, "Starting parameters")->delimiter(',');
    f->add_option("--max-iter", fa.max_iter, "Iteration cap");
    f->add_option("-o,--output", fa.output, "Write JSON here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (s->parsed()) {
            const auto cfg = build_config(sim);
            if (print_config) {
                std::cout << cfg.to_ini();
                return 0;
            }
            return report(pipeline::run_experiment(cfg, sim.workers ? sim.workers : pipeline::workers_from_env()));
        }
        if (r->parsed()) {
            if (list) {
                for (const auto& n : pipeline::recipe_names()) std::cout << n << '\n';
                return 0;
            }
            if (recipe_name.empty()) throw std::invalid_argument("recipe: name required (see --list)");
            auto cfg = pipeline::recipe(recipe_name, full);
            if (!recipe_output.empty()) cfg.output_dir = recipe_output;
            return report(
                pipeline::run_experiment(cfg, recipe_workers ? recipe_workers : pipeline::workers_from_env()));
        }
        if (a->parsed()) return analyze(an);
        if (f->parsed()) return fit(fa);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
