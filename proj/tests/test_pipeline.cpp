#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "json.hpp"
#include "ratchet/pipeline.hpp"
#include "ratchet/time_series.hpp"

using namespace ratchet;
using namespace ratchet::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / "ratchet_pipeline" / name;
    fs::remove_all(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_rejects(const std::string& text, const std::string& field) {
    CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains(field.c_str()), std::invalid_argument);
}

}  // namespace

TEST_CASE("config round trip and hash") {
    const auto c = parse_config(R"(
[experiment]
name = sweep
models = gp3, dnls
g_values = 0:0.02:0.005
observables = current, local_density(3)
analysis = zero_one
output_dir = /tmp/x

[sampling]
duration_TR = 50
)");
    CHECK(c.g_values.size() == 5);
    CHECK(c.g_values[4] == doctest::Approx(0.02));
    CHECK(c.observables[1].label() == "density_3");
    CHECK(c.params.drive_freq_omega == doctest::Approx(1.0));
    const auto back = parse_config(c.to_ini());
    CHECK(back.to_ini() == c.to_ini());
    CHECK(back.hash() == c.hash());

    auto moved = c;
    moved.output_dir = "/elsewhere";
    CHECK(moved.hash() == c.hash());
    auto changed = c;
    changed.sampling.duration_TR = 51;
    CHECK(changed.hash() != c.hash());
}

TEST_CASE("config validation names the field") {
    check_rejects("[experiment]\nmodels = gp3\nobservables = density_3\n", "observables");
    check_rejects("[experiment]\nmodels = dnls\nobservables = fidelity\n", "observables");
    check_rejects("[experiment]\nmodels = ls3\n", "N_values");
    check_rejects("[experiment]\nmodels = gp3\nN_values = 4\n", "N_values");
    check_rejects("[sampling]\nduration_TR = 0\n", "duration_TR");
    check_rejects("[sampling]\nduration_TR = abc\n", "duration_TR");
    check_rejects("[experiment]\ng_values = 0.1:0:0.01\n", "g_values");
    check_rejects("[experiment]\ng_values = -0.1\n", "g_values");
    check_rejects("[experiment]\ncolour = blue\n", "colour");
    check_rejects("[extras]\nx = 1\n", "extras");
    check_rejects("[fits]\nie_measure = median\n", "ie_measure");
    check_rejects("[params]\nL = 2\n", "sites_L");
    CHECK_THROWS_AS(parse_config("[experiment]\nmodels = bose\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[experiment]\nanalysis = lyapunov\n"), std::invalid_argument);
}

TEST_CASE("recipes") {
    CHECK(recipe_names().size() == 7);
    for (const auto& n : recipe_names()) {
        CHECK_NOTHROW(recipe(n).validate());
        CHECK_NOTHROW(recipe(n, true).validate());
        CHECK(recipe(n).sampling.duration_TR <= 200.0);
        for (int N : recipe(n).N_values) CHECK(N <= 24);
    }
    CHECK_THROWS_AS(recipe("fig99"), std::invalid_argument);

    const auto f3 = recipe("fig3");
    CHECK(f3.g_values.size() == 69);
    CHECK(f3.g_values.back() == doctest::Approx(0.34));
    CHECK(f3.models.size() == 2);
    CHECK(f3.observables.size() == 2);

    const auto t1 = recipe("table1", true);
    CHECK(t1.g_values == std::vector<double>{0.03, 0.14, 0.34});
    CHECK(t1.sampling.duration_TR == 1000.0);

    const auto f7 = recipe("fig7", true);
    CHECK(f7.N_values.back() == 40);
    CHECK(f7.g_values == std::vector<double>{0.03, 0.14, 0.34});
    CHECK(f7.models == std::vector<Model>{Model::ls3});

    const auto f8 = recipe("fig8");
    CHECK(f8.N_values == std::vector<int>{6, 12, 18});
    CHECK(f8.sampling.duration_TR == 100.0);
}

TEST_CASE("run directory names and workers") {
    CHECK(run_dir_name(Model::gp3, 0.14, 0) == "gp3_g0.14");
    CHECK(run_dir_name(Model::ls3, 0.03, 12) == "ls3_g0.03_N12");
    ::setenv("RATCHET_WORKERS", "3", 1);
    CHECK(workers_from_env() == 3);
    ::setenv("RATCHET_WORKERS", "zero", 1);
    CHECK_THROWS_AS(workers_from_env(), std::invalid_argument);
    ::unsetenv("RATCHET_WORKERS");
    CHECK(workers_from_env() == 1);
}

TEST_CASE("single Rabi run") {
    ExperimentConfig c;
    c.name = "rabi";
    c.output_dir = fresh_dir("rabi");
    c.sampling.duration_TR = 10;
    const auto man = run_experiment(c);
    REQUIRE(man.all_ok());
    REQUIRE(man.runs.size() == 1);
    const auto traj = read_csv(man.root / "gp3_g0" / "trajectory.csv");
    REQUIRE(traj.size() == 1);
    CHECK(traj[0].size() == 1001);
    const double w = c.params.rabi_frequency();
    for (std::size_t i = 0; i < traj[0].size(); i += 37)
        CHECK(traj[0].values[i] == doctest::Approx(0.8 * std::pow(std::sin(0.5 * w * traj[0].time_at(i)), 2)).epsilon(1e-6));
    CHECK(fs::exists(man.root / "manifest.json"));
    CHECK(fs::exists(man.root / "config.ini"));
    CHECK(parse_config(slurp(man.root / "config.ini")).hash() == c.hash());
}

TEST_CASE("sweep outputs, cache and byte reproducibility") {
    ExperimentConfig c;
    c.name = "mini";
    c.models = {Model::gp3, Model::dnls};
    c.g_values = {0.03, 0.14};
    c.observables = {ObservableSpec{}, {ObservableSpec::Kind::local_density, 3}};
    c.analysis = {Analysis::zero_one};
    c.sampling.duration_TR = 5;
    c.sampling.density_per_TR = 100;
    c.output_dir = fresh_dir("a");
    const auto a = run_experiment(c, 2);
    REQUIRE(a.all_ok());
    CHECK_FALSE(a.cached);
    CHECK(a.runs.size() == 4);

    const auto j = nlohmann::json::parse(slurp(a.root / "manifest.json"));
    CHECK(j["config_hash"].get<std::string>() == a.config_hash);
    for (const auto& r : j["runs"])
        for (const auto& f : r["files"]) CHECK(fs::exists(a.root / f.get<std::string>()));
    for (const auto& f : j["summary_files"]) CHECK(fs::exists(a.root / f.get<std::string>()));
    CHECK(fs::exists(a.root / "summary_zero_one.csv"));
    const auto analysis = nlohmann::json::parse(slurp(a.root / "dnls_g0.14" / "analysis.json"));
    CHECK(analysis["zero_one"].contains("density_3"));

    const auto again = run_experiment(c, 1);
    CHECK(again.cached);

    c.output_dir = fresh_dir("b");
    const auto b = run_experiment(c, 1);
    for (const auto& r : a.runs)
        for (const auto& f : r.files) CHECK(slurp(a.root / f) == slurp(b.root / f));
    for (const auto& f : a.summary_files) CHECK(slurp(a.root / f) == slurp(b.root / f));
}

TEST_CASE("many-body fits and failed runs") {
    ExperimentConfig c;
    c.name = "mb";
    c.models = {Model::ls3};
    c.g_values = {0.03};
    c.N_values = {2, 4, 6, 8, 10};
    c.observables = {ObservableSpec{}, {ObservableSpec::Kind::depletion, 0}, {ObservableSpec::Kind::fidelity, 0}};
    c.analysis = {Analysis::fits};
    c.sampling.duration_TR = 30;
    c.output_dir = fresh_dir("mb");
    const auto m = run_experiment(c);
    REQUIRE(m.all_ok());
    for (const char* f : {"summary_integrated_error.csv", "summary_onset.csv", "summary_revival.csv", "fits.json"})
        CHECK(fs::exists(m.root / f));
    const auto fits = nlohmann::json::parse(slurp(m.root / "fits.json"));
    CHECK_FALSE(fits.empty());

    // too short for a correlation-dimension estimate: the run fails, the sweep does not
    ExperimentConfig s;
    s.name = "short";
    s.g_values = {0.0, 0.1};
    s.analysis = {Analysis::corrdim};
    s.sampling.duration_TR = 0.5;
    s.output_dir = fresh_dir("short");
    const auto bad = run_experiment(s);
    CHECK_FALSE(bad.all_ok());
    CHECK(bad.runs.size() == 2);
    for (const auto& r : bad.runs) {
        CHECK_FALSE(r.ok);
        CHECK_FALSE(r.error.empty());
    }
    CHECK(fs::exists(bad.root / "manifest.json"));
}
