#include "ratchet/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "ratchet/dimension.hpp"
#include "ratchet/fitting.hpp"
#include "ratchet/manybody.hpp"
#include "ratchet/parallel.hpp"
#include "ratchet/zero_one.hpp"

#ifndef RATCHET_VERSION
#define RATCHET_VERSION "dev"
#endif

namespace ratchet::pipeline {

namespace pt = boost::property_tree;
using nlohmann::json;

std::string to_string(Analysis a) {
    switch (a) {
        case Analysis::zero_one: return "zero_one";
        case Analysis::corrdim: return "corrdim";
        case Analysis::fits: return "fits";
    }
    return "?";
}

Analysis parse_analysis(const std::string& s) {
    if (s == "zero_one") return Analysis::zero_one;
    if (s == "corrdim") return Analysis::corrdim;
    if (s == "fits") return Analysis::fits;
    throw std::invalid_argument("unknown analysis '" + s + "' (expected zero_one, corrdim, fits)");
}

namespace {

/// Shortest text that parses back to the same double.
std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc{} || r.ptr != end) throw std::invalid_argument(key + ": '" + v + "' is not a number");
    return out;
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc{} || r.ptr != end) throw std::invalid_argument(key + ": '" + v + "' is not an integer");
    return out;
}

std::vector<double> parse_g_values(const std::string& key, const std::string& v) {
    if (v.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(v);
        std::string p;
        while (std::getline(ss, p, ':')) parts.push_back(trim(p));
        if (parts.size() != 3) throw std::invalid_argument(key + ": range must be start:stop:step");
        const double a = to_double(key, parts[0]), b = to_double(key, parts[1]), st = to_double(key, parts[2]);
        if (!(st > 0.0) || b < a) throw std::invalid_argument(key + ": range needs step > 0 and stop >= start");
        std::vector<double> out;
        const auto n = static_cast<long long>(std::floor((b - a) / st + 1e-9));
        for (long long i = 0; i <= n; ++i) out.push_back(std::round((a + static_cast<double>(i) * st) * 1e12) / 1e12);
        return out;
    }
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
    return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += f(xs[i]);
    }
    return out;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::string ini_text(const ExperimentConfig& c, bool with_output) {
    std::ostringstream os;
    os << "[experiment]\n"
       << "name = " << c.name << '\n'
       << "models = " << join(c.models, [](Model m) { return ratchet::to_string(m); }) << '\n'
       << "g_values = " << join(c.g_values, fmt) << '\n'
       << "N_values = " << join(c.N_values, [](int n) { return std::to_string(n); }) << '\n'
       << "observables = " << join(c.observables, [](const ObservableSpec& o) { return o.label(); }) << '\n'
       << "analysis = " << join(c.analysis, [](Analysis a) { return to_string(a); }) << '\n';
    if (with_output) os << "output_dir = " << c.output_dir.string() << '\n';
    const auto& p = c.params;
    os << "\n[params]\n"
       << "J = " << fmt(p.hop_J) << '\n'
       << "E_plus = " << fmt(p.drive_plus_E) << '\n'
       << "E_minus = " << fmt(p.drive_minus_E) << '\n'
       << "omega = " << fmt(p.drive_freq_omega) << '\n'
       << "L = " << p.sites_L << '\n'
       << "hbar = " << fmt(p.hbar) << '\n';
    const auto& s = c.sampling;
    os << "\n[sampling]\n"
       << "duration_TR = " << fmt(s.duration_TR) << '\n'
       << "current_per_TR = " << fmt(s.current_per_TR) << '\n'
       << "density_per_TR = " << fmt(s.density_per_TR) << '\n'
       << "manybody_per_TR = " << fmt(s.manybody_per_TR) << '\n'
       << "dt_max = " << fmt(s.dt_max) << '\n';
    os << "\n[zero_one]\n"
       << "n_c = " << c.zero_one.n_c << '\n'
       << "f_max_factor = " << fmt(c.zero_one.f_max_factor) << '\n'
       << "stride = " << c.zero_one.stride << '\n';
    os << "\n[corrdim]\n"
       << "pair_budget = " << c.corrdim.pair_budget << '\n'
       << "seed = " << c.corrdim.seed << '\n'
       << "m_min = " << c.corrdim.m_min << '\n'
       << "m_max = " << c.corrdim.m_max << '\n'
       << "r2_min = " << fmt(c.corrdim.r2_min) << '\n';
    const auto& f = c.fits;
    os << "\n[fits]\n"
       << "ie_threshold = " << fmt(f.ie_threshold) << '\n'
       << "ie_measure = " << f.ie_measure << '\n'
       << "fit_min_N = " << join(f.fit_min_N, [](int n) { return std::to_string(n); }) << '\n'
       << "revival_threshold = " << fmt(f.revival_threshold) << '\n'
       << "revival_burn_in = " << fmt(f.revival_burn_in) << '\n'
       << "revival_envelope_TR = " << fmt(f.revival_envelope_TR) << '\n'
       << "revival_merge_gap_TR = " << fmt(f.revival_merge_gap_TR) << '\n';
    return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
    const auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("ExperimentConfig." + field + ": " + why);
    };
    if (name.empty() || name.find_first_of("/\\") != std::string::npos) fail("name", "must be a plain directory name");
    if (models.empty()) fail("models", "at least one model required");
    params.validate();
    if (g_values.empty()) fail("g_values", "at least one value required");
    for (double g : g_values)
        if (!std::isfinite(g) || g < 0.0) fail("g_values", "values must be finite and >= 0");
    const bool has_ls3 = std::find(models.begin(), models.end(), Model::ls3) != models.end();
    if (has_ls3 && N_values.empty()) fail("N_values", "required for the ls3 model");
    for (int n : N_values)
        if (n < 1 || n > manybody::FockBasis::kMaxParticles) fail("N_values", "each N must lie in [1, 60]");
    if (!has_ls3 && !N_values.empty()) fail("N_values", "only meaningful for the ls3 model");
    if (observables.empty()) fail("observables", "at least one observable required");
    for (const auto& o : observables) {
        const bool any = std::any_of(models.begin(), models.end(), [&](Model m) { return o.supported_by(m); });
        if (!any) {
            if (o.kind == ObservableSpec::Kind::local_density) fail("observables", "local_density requires the dnls model");
            fail("observables", o.label() + " requires the ls3 model");
        }
        if (o.kind == ObservableSpec::Kind::local_density && (o.site < 0 || o.site >= params.sites_L))
            fail("observables", o.label() + " names a site outside the ring");
    }
    if (!(sampling.duration_TR > 0.0)) fail("duration_TR", "must be positive");
    if (!(sampling.current_per_TR > 0.0)) fail("current_per_TR", "must be positive");
    if (!(sampling.density_per_TR > 0.0)) fail("density_per_TR", "must be positive");
    if (!(sampling.manybody_per_TR > 0.0)) fail("manybody_per_TR", "must be positive");
    if (sampling.dt_max < 0.0) fail("dt_max", "must be >= 0");
    if (zero_one.n_c < 10) fail("zero_one.n_c", "must be >= 10");
    if (!(zero_one.f_max_factor > 0.0)) fail("zero_one.f_max_factor", "must be positive");
    if (zero_one.stride < 1) fail("zero_one.stride", "must be >= 1");
    if (corrdim.pair_budget < 1000) fail("corrdim.pair_budget", "must be >= 1000");
    if (corrdim.m_min < 1 || corrdim.m_max < corrdim.m_min + 2) fail("corrdim.m_max", "need m_min >= 1 and m_max >= m_min + 2");
    if (!(corrdim.r2_min > 0.0 && corrdim.r2_min <= 1.0)) fail("corrdim.r2_min", "must lie in (0, 1]");
    if (!(fits.ie_threshold > 0.0)) fail("fits.ie_threshold", "must be positive");
    if (fits.ie_measure != "cumulative" && fits.ie_measure != "time_average")
        fail("fits.ie_measure", "must be cumulative or time_average");
    if (!fits.fit_min_N.empty() && fits.fit_min_N.size() != 1 && fits.fit_min_N.size() != g_values.size())
        fail("fits.fit_min_N", "give one value or one per g");
    if (!(fits.revival_threshold > 0.0 && fits.revival_threshold <= 1.0)) fail("fits.revival_threshold", "must lie in (0, 1]");
    if (!(fits.revival_burn_in > 0.0 && fits.revival_burn_in <= 1.0)) fail("fits.revival_burn_in", "must lie in (0, 1]");
    if (fits.revival_envelope_TR < 0.0) fail("fits.revival_envelope_TR", "must be >= 0");
    if (fits.revival_merge_gap_TR < 0.0) fail("fits.revival_merge_gap_TR", "must be >= 0");
}

std::string ExperimentConfig::to_ini() const { return ini_text(*this, true); }

std::uint64_t ExperimentConfig::hash() const { return fnv1a(ini_text(*this, false)); }

int ExperimentConfig::min_fit_N(std::size_t g_index) const {
    if (fits.fit_min_N.empty()) return 0;
    if (fits.fit_min_N.size() == 1) return fits.fit_min_N.front();
    return fits.fit_min_N.at(g_index);
}

ExperimentConfig parse_config(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }

    ExperimentConfig c;
    static const std::map<std::string, std::set<std::string>> known{
        {"experiment", {"name", "models", "model", "g_values", "N_values", "observables", "analysis", "output_dir"}},
        {"params", {"J", "E_plus", "E_minus", "omega", "L", "hbar"}},
        {"sampling", {"duration_TR", "current_per_TR", "density_per_TR", "manybody_per_TR", "dt_max"}},
        {"zero_one", {"n_c", "f_max_factor", "stride"}},
        {"corrdim", {"pair_budget", "seed", "m_min", "m_max", "r2_min"}},
        {"fits", {"ie_threshold", "ie_measure", "fit_min_N", "revival_threshold", "revival_burn_in",
                  "revival_envelope_TR", "revival_merge_gap_TR"}},
    };
    bool omega_given = false;
    for (const auto& [section, body] : tree) {
        const auto ks = known.find(section);
        if (ks == known.end()) throw std::invalid_argument("config: unknown section [" + section + "]");
        for (const auto& [key, node] : body) {
            if (!ks->second.count(key)) throw std::invalid_argument("config: unknown key " + section + "." + key);
            const std::string v = trim(node.data());
            const std::string field = section + "." + key;
            if (section == "experiment") {
                if (key == "name") c.name = v;
                else if (key == "models" || key == "model") {
                    c.models.clear();
                    for (const auto& s : split_list(v)) c.models.push_back(parse_model(s));
                } else if (key == "g_values") c.g_values = parse_g_values(field, v);
                else if (key == "N_values") {
                    c.N_values.clear();
                    for (const auto& s : split_list(v)) c.N_values.push_back(static_cast<int>(to_int(field, s)));
                } else if (key == "observables") {
                    c.observables.clear();
                    for (const auto& s : split_list(v)) c.observables.push_back(parse_observable(s));
                } else if (key == "analysis") {
                    c.analysis.clear();
                    for (const auto& s : split_list(v)) c.analysis.push_back(parse_analysis(s));
                } else if (key == "output_dir") c.output_dir = v;
            } else if (section == "params") {
                if (key == "J") c.params.hop_J = to_double(field, v);
                else if (key == "E_plus") c.params.drive_plus_E = to_double(field, v);
                else if (key == "E_minus") c.params.drive_minus_E = to_double(field, v);
                else if (key == "omega") {
                    omega_given = v != "resonant";
                    if (omega_given) c.params.drive_freq_omega = to_double(field, v);
                } else if (key == "L") c.params.sites_L = static_cast<int>(to_int(field, v));
                else if (key == "hbar") c.params.hbar = to_double(field, v);
            } else if (section == "sampling") {
                const double d = to_double(field, v);
                if (key == "duration_TR") c.sampling.duration_TR = d;
                else if (key == "current_per_TR") c.sampling.current_per_TR = d;
                else if (key == "density_per_TR") c.sampling.density_per_TR = d;
                else if (key == "manybody_per_TR") c.sampling.manybody_per_TR = d;
                else if (key == "dt_max") c.sampling.dt_max = d;
            } else if (section == "zero_one") {
                if (key == "n_c") c.zero_one.n_c = static_cast<std::size_t>(to_int(field, v));
                else if (key == "f_max_factor") c.zero_one.f_max_factor = to_double(field, v);
                else if (key == "stride") c.zero_one.stride = static_cast<std::size_t>(to_int(field, v));
            } else if (section == "corrdim") {
                if (key == "pair_budget") c.corrdim.pair_budget = static_cast<std::uint64_t>(to_double(field, v));
                else if (key == "seed") c.corrdim.seed = static_cast<std::uint64_t>(to_int(field, v));
                else if (key == "m_min") c.corrdim.m_min = static_cast<std::size_t>(to_int(field, v));
                else if (key == "m_max") c.corrdim.m_max = static_cast<std::size_t>(to_int(field, v));
                else if (key == "r2_min") c.corrdim.r2_min = to_double(field, v);
            } else if (section == "fits") {
                if (key == "ie_threshold") c.fits.ie_threshold = to_double(field, v);
                else if (key == "ie_measure") c.fits.ie_measure = v;
                else if (key == "fit_min_N") {
                    c.fits.fit_min_N.clear();
                    for (const auto& s : split_list(v)) c.fits.fit_min_N.push_back(static_cast<int>(to_int(field, s)));
                } else if (key == "revival_threshold") c.fits.revival_threshold = to_double(field, v);
                else if (key == "revival_burn_in") c.fits.revival_burn_in = to_double(field, v);
                else if (key == "revival_envelope_TR") c.fits.revival_envelope_TR = to_double(field, v);
                else if (key == "revival_merge_gap_TR") c.fits.revival_merge_gap_TR = to_double(field, v);
            }
        }
    }
    if (!omega_given) c.params.drive_freq_omega = resonant_drive_frequency(c.params.hop_J, c.params.sites_L, c.params.hbar);
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

ExperimentConfig apply_overrides(const ExperimentConfig& base,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
    pt::ptree tree;
    std::istringstream in(base.to_ini());
    pt::ini_parser::read_ini(in, tree);
    for (const auto& [key, value] : overrides) {
        const auto dot = key.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == key.size())
            throw std::invalid_argument("override: expected section.key, got '" + key + "'");
        tree.put(pt::ptree::path_type(key, '.'), value);
    }
    std::ostringstream out;
    pt::ini_parser::write_ini(out, tree);
    return parse_config(out.str());
}

std::vector<std::string> recipe_names() { return {"fig3", "table1", "fig6", "fig7", "fig8", "fig9", "fig10"}; }

ExperimentConfig recipe(const std::string& name, bool full) {
    using K = ObservableSpec::Kind;
    ExperimentConfig c;
    c.name = name;
    const double long_run = full ? 1000.0 : 200.0;
    const auto even_N = [&](int hi) {
        std::vector<int> ns;
        for (int n = 2; n <= (full ? hi : std::min(hi, 24)); n += 2) ns.push_back(n);
        return ns;
    };
    const auto g_sweep = [] { return parse_g_values("g_values", "0:0.34:0.005"); };

    if (name == "fig3") {
        c.models = {Model::gp3, Model::dnls};
        c.g_values = g_sweep();
        c.observables = {{K::current, 0}, {K::local_density, 3}};
        c.analysis = {Analysis::zero_one};
        c.sampling.duration_TR = long_run;
    } else if (name == "table1") {
        c.models = {Model::gp3, Model::dnls};
        c.g_values = {0.03, 0.14, 0.34};
        c.observables = {{K::current, 0}, {K::local_density, 3}};
        c.analysis = {Analysis::corrdim};
        c.sampling.duration_TR = long_run;
    } else if (name == "fig6") {
        c.models = {Model::gp3, Model::dnls};
        c.g_values = g_sweep();
        c.observables = {{K::current, 0}};
        c.analysis = {Analysis::corrdim};
        c.sampling.duration_TR = long_run;
        if (!full) c.corrdim.pair_budget = 50'000'000;
    } else if (name == "fig7") {
        c.models = {Model::ls3};
        c.g_values = {0.03, 0.14, 0.34};
        c.N_values = even_N(40);
        c.observables = {{K::current, 0}};
        c.analysis = {Analysis::fits};
        c.sampling.duration_TR = 150.0;
        c.sampling.manybody_per_TR = 100.0;
        c.fits.fit_min_N = {2, 10, 2};
    } else if (name == "fig8") {
        c.models = {Model::ls3};
        c.g_values = {0.03, 0.14, 0.34};
        c.N_values = {6, 12, 18};
        c.observables = {{K::depletion, 0}};
        c.sampling.duration_TR = 100.0;
    } else if (name == "fig9") {
        c.models = {Model::ls3};
        c.g_values = {0.03, 0.14};
        c.N_values = {6, 12, 18};
        c.observables = {{K::fidelity, 0}};
        c.analysis = {Analysis::fits};
        c.sampling.duration_TR = 150.0;
        c.sampling.manybody_per_TR = 100.0;
        c.fits.revival_burn_in = 0.75;
        c.fits.revival_envelope_TR = 1.0;
        c.fits.revival_merge_gap_TR = 1.0;
    } else if (name == "fig10") {
        c.models = {Model::ls3};
        c.g_values = {0.03, 0.14, 0.34};
        c.N_values = even_N(40);
        c.observables = {{K::depletion, 0}};
        c.analysis = {Analysis::fits};
        c.sampling.duration_TR = 60.0;
        c.sampling.manybody_per_TR = 20.0;
        c.fits.fit_min_N = {2, 10, 2};
    } else {
        std::string known;
        for (const auto& n : recipe_names()) known += (known.empty() ? "" : ", ") + n;
        throw std::invalid_argument("unknown recipe '" + name + "' (known: " + known + ")");
    }
    c.validate();
    return c;
}

bool RunManifest::all_ok() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunRecord& r) { return r.ok; });
}

std::string RunManifest::to_json() const {
    json j;
    j["name"] = name;
    j["config_hash"] = config_hash;
    j["code_version"] = code_version;
    j["summary_files"] = summary_files;
    j["warnings"] = warnings;
    auto& arr = j["runs"] = json::array();
    for (const auto& r : runs) {
        json e{{"model", ratchet::to_string(r.model)}, {"g", r.g},          {"N", r.N},
               {"dir", r.dir},                          {"files", r.files}, {"wall_seconds", r.wall_seconds},
               {"ok", r.ok},                            {"warnings", r.warnings}};
        if (!r.ok) e["error"] = r.error;
        arr.push_back(std::move(e));
    }
    return j.dump(2);
}

std::string run_dir_name(Model m, double g, int N) {
    std::string s = ratchet::to_string(m) + "_g" + fmt(g);
    if (m == Model::ls3) s += "_N" + std::to_string(N);
    return s;
}

std::size_t workers_from_env() {
    const char* v = std::getenv("RATCHET_WORKERS");
    if (!v || !*v) return 1;
    try {
        const long long n = to_int("RATCHET_WORKERS", v);
        if (n < 1) throw std::invalid_argument("RATCHET_WORKERS must be >= 1");
        return static_cast<std::size_t>(n);
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument(std::string("RATCHET_WORKERS: '") + v + "' is not a positive integer");
    }
}

namespace {

struct DimensionRow {
    std::string label;
    bool ok;
    double d2, d2_err;
    std::size_t plateau_start_m;
};

struct RunOutcome {
    RunRecord rec;
    std::vector<std::pair<std::string, double>> K;
    std::vector<DimensionRow> d2;
    std::optional<double> t_ie;  // in T_R
    std::optional<double> onset;  // in T_R
    std::optional<double> revival;  // in T_R
    bool never_decayed = false;
};

bool wants(const ExperimentConfig& c, Analysis a) {
    return std::find(c.analysis.begin(), c.analysis.end(), a) != c.analysis.end();
}

void write_text(const std::filesystem::path& root, RunRecord& rec, const std::string& file, const std::string& text) {
    write_file_atomic(root / rec.dir / file, text);
    rec.files.push_back(rec.dir + "/" + file);
}

void write_series(const std::filesystem::path& root, RunRecord& rec, const std::vector<TimeSeries>& series) {
    // One CSV per sampling grid; the first grid gets the plain name.
    std::vector<bool> done(series.size(), false);
    bool first = true;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (done[i]) continue;
        std::vector<TimeSeries> group;
        for (std::size_t k = i; k < series.size(); ++k)
            if (!done[k] && series[k].dt == series[i].dt && series[k].size() == series[i].size()) {
                group.push_back(series[k]);
                done[k] = true;
            }
        const std::string file = first ? "trajectory.csv" : "trajectory_" + series[i].label + ".csv";
        write_csv(root / rec.dir / file, group);
        rec.files.push_back(rec.dir + "/" + file);
        first = false;
    }
}

RunOutcome execute_run(const ExperimentConfig& cfg, Model model, double g, int N, const std::filesystem::path& root,
                       std::size_t threads) {
    RunOutcome out;
    out.rec.model = model;
    out.rec.g = g;
    out.rec.N = N;
    out.rec.dir = run_dir_name(model, g, N);
    const auto t0 = std::chrono::steady_clock::now();

    RatchetParams p = cfg.params;
    p.coupling_g = g;
    const double t_rabi = p.rabi_period();
    std::vector<ObservableSpec> obs;
    for (const auto& o : cfg.observables)
        if (o.supported_by(model)) obs.push_back(o);

    const auto series = model == Model::ls3 ? simulate_3ls(p, N, obs, cfg.sampling)
                                            : simulate_meanfield(model, p, obs, cfg.sampling);
    write_series(root, out.rec, series);

    json analysis;
    analysis["model"] = ratchet::to_string(model);
    analysis["g"] = g;
    if (model == Model::ls3) analysis["N"] = N;
    analysis["rabi_period"] = t_rabi;

    if (wants(cfg, Analysis::zero_one)) {
        json z = json::object();
        for (const auto& s : series) {
            chaos::ZeroOneOptions zo;
            zo.n_c = cfg.zero_one.n_c;
            zo.stride = cfg.zero_one.stride;
            zo.method = zo.stride > 1 ? chaos::MsdMethod::direct : chaos::MsdMethod::fft;
            zo.threads = threads;
            const double f_max = cfg.zero_one.f_max_factor * p.rabi_frequency() / (2.0 * std::numbers::pi);
            const auto r = chaos::zero_one_test(s, 1.0 / s.dt, f_max, zo);
            if (r.degenerate) out.rec.warnings.push_back(s.label + ": 0-1 test degenerate (constant series)");
            z[s.label] = json::parse(r.to_json());
            out.K.emplace_back(s.label, r.K_median);
        }
        analysis["zero_one"] = z;
    }

    if (wants(cfg, Analysis::corrdim)) {
        json d = json::object();
        for (const auto& s : series) {
            auto ec = dimension::default_embedding_config(s.values);
            ec.dims_m.clear();
            for (std::size_t m = cfg.corrdim.m_min; m <= cfg.corrdim.m_max; ++m) ec.dims_m.push_back(m);
            ec.r2_min = cfg.corrdim.r2_min;
            ec.sampling.max_pairs = cfg.corrdim.pair_budget;
            ec.sampling.seed = cfg.corrdim.seed;
            ec.sampling.threads = threads;
            const auto est = dimension::correlation_dimension(s, ec);
            if (!est.ok) out.rec.warnings.push_back(s.label + ": " + est.failure);
            const std::string table = "corrsum_" + s.label + ".csv";
            est.write_correlation_csv(root / out.rec.dir / table);
            out.rec.files.push_back(out.rec.dir + "/" + table);
            d[s.label] = json::parse(est.to_json());
            out.d2.push_back({s.label, est.ok, est.d2, est.d2_err, est.plateau_start_m});
        }
        analysis["corrdim"] = d;
    }

    if (wants(cfg, Analysis::fits) && model == Model::ls3) {
        json f = json::object();
        for (const auto& s : series) {
            if (s.label == "current") {
                const auto mf = gp3_current_on_manybody_grid(p, cfg.sampling);
                const auto measure = cfg.fits.ie_measure == "cumulative" ? manybody::ErrorMeasure::cumulative
                                                                         : manybody::ErrorMeasure::time_average;
                const auto ie = manybody::integrated_error_time(s, mf, cfg.fits.ie_threshold, measure, t_rabi);
                f["integrated_error"] = {{"exceeded", ie.exceeded}, {"time_TR", ie.time / t_rabi},
                                         {"threshold", cfg.fits.ie_threshold}, {"measure", cfg.fits.ie_measure}};
                if (ie.exceeded) out.t_ie = ie.time / t_rabi;
                else out.rec.warnings.push_back("integrated error never exceeded the threshold");
            } else if (s.label == "depletion") {
                try {
                    const auto on = fitting::depletion_onset_time(fitting::onset_window(s));
                    out.onset = on.onset / t_rabi;
                    f["onset"] = {{"onset_TR", on.onset / t_rabi}, {"fit", json::parse(on.fit.to_json())}};
                } catch (const fitting::FitRejected& e) {
                    f["onset"] = {{"rejected", e.what()}};
                    out.rec.warnings.push_back(e.what());
                }
            } else if (s.label == "fidelity") {
                fitting::RevivalOptions ro;
                ro.threshold = cfg.fits.revival_threshold;
                ro.burn_in_level = cfg.fits.revival_burn_in;
                ro.envelope_window = cfg.fits.revival_envelope_TR * t_rabi;
                ro.merge_gap = cfg.fits.revival_merge_gap_TR * t_rabi;
                const auto r = fitting::revival_time(s, ro);
                out.never_decayed = r.never_decayed;
                if (r.found) out.revival = r.time / t_rabi;
                f["revival"] = {{"found", r.found}, {"never_decayed", r.never_decayed},
                                {"time_TR", r.found ? json(r.time / t_rabi) : json(nullptr)}};
            }
        }
        analysis["fits"] = f;
    }

    write_text(root, out.rec, "analysis.json", analysis.dump(2));
    out.rec.ok = true;
    out.rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::optional<RunManifest> cached_manifest(const std::filesystem::path& root, const std::string& hash) {
    std::ifstream in(root / "manifest.json");
    if (!in) return std::nullopt;
    json j;
    try {
        in >> j;
    } catch (const json::exception&) {
        return std::nullopt;
    }
    if (j.value("config_hash", "") != hash || j.value("code_version", "") != RATCHET_VERSION) return std::nullopt;
    RunManifest m;
    m.name = j.value("name", "");
    m.config_hash = hash;
    m.code_version = RATCHET_VERSION;
    m.root = root;
    m.cached = true;
    for (const auto& s : j["summary_files"]) {
        m.summary_files.push_back(s.get<std::string>());
        if (!std::filesystem::exists(root / m.summary_files.back())) return std::nullopt;
    }
    for (const auto& w : j["warnings"]) m.warnings.push_back(w.get<std::string>());
    for (const auto& r : j["runs"]) {
        RunRecord rec;
        rec.model = parse_model(r["model"].get<std::string>());
        rec.g = r["g"].get<double>();
        rec.N = r["N"].get<int>();
        rec.dir = r["dir"].get<std::string>();
        rec.ok = r["ok"].get<bool>();
        if (!rec.ok) return std::nullopt;
        rec.wall_seconds = r["wall_seconds"].get<double>();
        for (const auto& f : r["files"]) {
            rec.files.push_back(f.get<std::string>());
            if (!std::filesystem::exists(root / rec.files.back())) return std::nullopt;
        }
        for (const auto& w : r["warnings"]) rec.warnings.push_back(w.get<std::string>());
        m.runs.push_back(std::move(rec));
    }
    return m;
}

std::optional<fitting::FitResult> scaling_fit(const std::string& model, const std::vector<double>& x,
                                              const std::vector<double>& y) {
    try {
        if (model == "linear") {
            if (x.size() < 3) return std::nullopt;
            return fitting::linear_fit(x, y);
        }
        if (x.size() < 4) return std::nullopt;
        const auto spec = fitting::model_by_name(model);
        const auto init = model == "power_offset" ? fitting::init_power_offset(x, y) : fitting::init_shifted_power(x, y);
        return fitting::nonlinear_fit(spec, x, y, init);
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
}

void write_summaries(const ExperimentConfig& cfg, const std::vector<RunOutcome>& outcomes, RunManifest& man) {
    const auto& root = man.root;
    const auto add = [&](const std::string& file, const std::string& text) {
        write_file_atomic(root / file, text);
        man.summary_files.push_back(file);
    };

    if (wants(cfg, Analysis::zero_one)) {
        std::ostringstream os;
        os << "model,observable,g,N,K\n" << std::setprecision(10);
        for (const auto& o : outcomes)
            for (const auto& [label, k] : o.K)
                os << ratchet::to_string(o.rec.model) << ',' << label << ',' << fmt(o.rec.g) << ',' << o.rec.N << ',' << k
                   << '\n';
        add("summary_zero_one.csv", os.str());
    }
    if (wants(cfg, Analysis::corrdim)) {
        std::ostringstream os;
        os << "model,observable,g,N,ok,d2,d2_err,plateau_start_m\n" << std::setprecision(10);
        for (const auto& o : outcomes)
            for (const auto& d : o.d2)
                os << ratchet::to_string(o.rec.model) << ',' << d.label << ',' << fmt(o.rec.g) << ',' << o.rec.N << ','
                   << (d.ok ? 1 : 0) << ',' << d.d2 << ',' << d.d2_err << ',' << d.plateau_start_m << '\n';
        add("summary_corrdim.csv", os.str());
    }
    if (!wants(cfg, Analysis::fits)) return;

    struct Table {
        std::string key, file, column, model;
        std::optional<double> RunOutcome::*field;
    };
    const Table tables[] = {
        {"integrated_error", "summary_integrated_error.csv", "T_IE_TR", "power_offset", &RunOutcome::t_ie},
        {"onset", "summary_onset.csv", "onset_TR", "shifted_power", &RunOutcome::onset},
        {"revival", "summary_revival.csv", "revival_TR", "linear", &RunOutcome::revival},
    };
    json fits = json::object();
    for (const auto& t : tables) {
        const bool any = std::any_of(outcomes.begin(), outcomes.end(), [&](const RunOutcome& o) {
            return o.rec.model == Model::ls3 && o.rec.ok && (o.*t.field).has_value();
        });
        const bool relevant = std::any_of(cfg.observables.begin(), cfg.observables.end(), [&](const ObservableSpec& o) {
            return (t.key == "integrated_error" && o.kind == ObservableSpec::Kind::current) ||
                   (t.key == "onset" && o.kind == ObservableSpec::Kind::depletion) ||
                   (t.key == "revival" && o.kind == ObservableSpec::Kind::fidelity);
        });
        if (!relevant) continue;
        std::ostringstream os;
        os << "g,N," << t.column << '\n' << std::setprecision(10);
        json per_g = json::object();
        for (std::size_t gi = 0; gi < cfg.g_values.size(); ++gi) {
            const double g = cfg.g_values[gi];
            std::vector<double> xs, ys;
            for (const auto& o : outcomes) {
                if (o.rec.model != Model::ls3 || o.rec.g != g) continue;
                const auto& v = o.*t.field;
                os << fmt(g) << ',' << o.rec.N << ',' << (v ? fmt(*v) : std::string("nan")) << '\n';
                if (v && o.rec.N >= cfg.min_fit_N(gi)) {
                    xs.push_back(o.rec.N);
                    ys.push_back(*v);
                }
            }
            const auto fit = any ? scaling_fit(t.model, xs, ys) : std::nullopt;
            per_g[fmt(g)] = fit ? json::parse(fit->to_json()) : json(nullptr);
            if (!fit) man.warnings.push_back(t.key + " at g = " + fmt(g) + ": too few points for a " + t.model + " fit");
        }
        add(t.file, os.str());
        fits[t.key] = per_g;
    }
    add("fits.json", fits.dump(2));
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg, std::size_t workers) {
    cfg.validate();
    if (workers < 1) throw std::invalid_argument("run_experiment: workers must be >= 1");
    const auto root = cfg.output_dir / cfg.name;
    const auto hash = hex(cfg.hash());
    if (auto m = cached_manifest(root, hash)) return *m;
    std::filesystem::create_directories(root);
    write_file_atomic(root / "config.ini", cfg.to_ini());

    struct Job {
        Model model;
        double g;
        int N;
    };
    std::vector<Job> jobs;
    for (Model m : cfg.models)
        for (double g : cfg.g_values) {
            if (m == Model::ls3) {
                for (int n : cfg.N_values) jobs.push_back({m, g, n});
            } else {
                jobs.push_back({m, g, 0});
            }
        }

    // Inner analyses get the cores only when runs themselves are serial.
    const std::size_t inner = workers > 1 ? 1 : 0;
    std::vector<RunOutcome> outcomes(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        const auto& j = jobs[i];
        try {
            outcomes[i] = execute_run(cfg, j.model, j.g, j.N, root, inner);
        } catch (const std::exception& e) {
            auto& rec = outcomes[i].rec;
            rec = RunRecord{};
            rec.model = j.model;
            rec.g = j.g;
            rec.N = j.N;
            rec.dir = run_dir_name(j.model, j.g, j.N);
            rec.ok = false;
            rec.error = e.what();
        }
    });

    RunManifest man;
    man.name = cfg.name;
    man.config_hash = hash;
    man.code_version = RATCHET_VERSION;
    man.root = root;
    for (const auto& o : outcomes) man.runs.push_back(o.rec);
    write_summaries(cfg, outcomes, man);
    write_file_atomic(root / "manifest.json", man.to_json());
    return man;
}

}  // namespace ratchet::pipeline
