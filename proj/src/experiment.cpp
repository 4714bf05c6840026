#include "ratchet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <stdexcept>

#include "ratchet/meanfield.hpp"

namespace ratchet {

std::string to_string(Model m) {
    switch (m) {
        case Model::dnls: return "dnls";
        case Model::gp3: return "gp3";
        case Model::ls3: return "ls3";
    }
    return "?";
}

Model parse_model(const std::string& s) {
    if (s == "dnls") return Model::dnls;
    if (s == "gp3") return Model::gp3;
    if (s == "ls3") return Model::ls3;
    throw std::invalid_argument("unknown model '" + s + "' (expected dnls, gp3 or ls3)");
}

std::string ObservableSpec::label() const {
    switch (kind) {
        case Kind::current: return "current";
        case Kind::local_density: return "density_" + std::to_string(site);
        case Kind::depletion: return "depletion";
        case Kind::fidelity: return "fidelity";
    }
    return "?";
}

bool ObservableSpec::supported_by(Model m) const {
    switch (kind) {
        case Kind::current: return true;
        case Kind::local_density: return m == Model::dnls;
        case Kind::depletion:
        case Kind::fidelity: return m == Model::ls3;
    }
    return false;
}

ObservableSpec parse_observable(const std::string& s) {
    using K = ObservableSpec::Kind;
    if (s == "current") return {K::current, 0};
    if (s == "depletion") return {K::depletion, 0};
    if (s == "fidelity") return {K::fidelity, 0};
    static const std::regex density(R"((?:density_|local_density\()(\d+)\)?)");
    std::smatch m;
    if (std::regex_match(s, m, density)) return {K::local_density, std::stoi(m[1].str())};
    throw std::invalid_argument("unknown observable '" + s +
                                "' (expected current, density_<site>, local_density(<site>), depletion, fidelity)");
}

namespace {

double rate_of(const ObservableSpec& o, const SamplingPlan& plan) {
    return o.kind == ObservableSpec::Kind::local_density ? plan.density_per_TR : plan.current_per_TR;
}

void check_plan(const SamplingPlan& plan) {
    if (!(plan.duration_TR > 0.0)) throw std::invalid_argument("SamplingPlan.duration_TR: must be positive");
    if (!(plan.current_per_TR > 0.0) || !(plan.density_per_TR > 0.0) || !(plan.manybody_per_TR > 0.0))
        throw std::invalid_argument("SamplingPlan: sampling rates must be positive");
    if (plan.dt_max < 0.0) throw std::invalid_argument("SamplingPlan.dt_max: must be >= 0");
}

}  // namespace

double default_step(Model model, const RatchetParams& p) {
    return p.drive_period() / (model == Model::dnls ? 4000.0 : 200.0);
}

std::vector<TimeSeries> simulate_meanfield(Model model, const RatchetParams& p,
                                           const std::vector<ObservableSpec>& observables, const SamplingPlan& plan) {
    if (model == Model::ls3) throw std::invalid_argument("simulate_meanfield: ls3 is not a mean-field model");
    if (observables.empty()) throw std::invalid_argument("simulate_meanfield: no observables");
    p.validate();
    check_plan(plan);

    const double t_rabi = p.rabi_period();
    double finest = 0.0;
    for (const auto& o : observables) {
        if (!o.supported_by(model))
            throw std::invalid_argument("simulate_meanfield: observable " + o.label() + " not available for " +
                                        to_string(model));
        if (o.kind == ObservableSpec::Kind::local_density && (o.site < 0 || o.site >= p.sites_L))
            throw std::out_of_range("simulate_meanfield: density site " + std::to_string(o.site) + " outside the ring");
        finest = std::max(finest, rate_of(o, plan));
    }
    // Every rate must be a whole multiple of the coarser ones for the shared grid.
    std::vector<std::size_t> decim;
    for (const auto& o : observables) {
        const double ratio = finest / rate_of(o, plan);
        const auto k = static_cast<std::size_t>(std::llround(ratio));
        if (std::abs(ratio - static_cast<double>(k)) > 1e-9 * ratio)
            throw std::invalid_argument("simulate_meanfield: sampling rates must divide the finest rate");
        decim.push_back(k);
    }

    const double interval = t_rabi / finest;
    const double dt_max = plan.dt_max > 0.0 ? plan.dt_max : default_step(model, p);
    const auto stride = static_cast<std::size_t>(std::ceil(interval / dt_max - 1e-9));
    const double h = interval / static_cast<double>(stride);
    const auto samples = static_cast<std::size_t>(std::llround(plan.duration_TR * finest));
    const double t1 = static_cast<double>(samples) * interval;

    std::vector<meanfield::Observable> obs;
    for (const auto& o : observables) {
        if (o.kind == ObservableSpec::Kind::local_density) {
            obs.push_back(meanfield::local_density_observable(o.site));
        } else {
            obs.push_back(model == Model::dnls ? meanfield::lattice_current_observable()
                                               : meanfield::mode_current_observable());
        }
    }

    meanfield::EvolveResult res;
    if (model == Model::dnls) {
        res = meanfield::rk4_evolve(meanfield::initial_state_dnls(p).amps, meanfield::make_dnls_rhs(p), 0.0, t1, h, obs,
                                    stride);
    } else {
        res = meanfield::rk4_evolve(meanfield::initial_state_3gp().amps, meanfield::make_gp3_rhs(p), 0.0, t1, h, obs,
                                    stride);
    }
    std::vector<TimeSeries> out;
    for (std::size_t i = 0; i < observables.size(); ++i) {
        auto s = decim[i] == 1 ? std::move(res.series[i]) : res.series[i].decimate(decim[i]);
        s.label = observables[i].label();
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<TimeSeries> simulate_3ls(const RatchetParams& p, int particles,
                                     const std::vector<ObservableSpec>& observables, const SamplingPlan& plan,
                                     std::shared_ptr<const manybody::Eigensystem> eig) {
    if (observables.empty()) throw std::invalid_argument("simulate_3ls: no observables");
    p.validate();
    check_plan(plan);
    for (const auto& o : observables)
        if (!o.supported_by(Model::ls3))
            throw std::invalid_argument("simulate_3ls: observable " + o.label() + " not available for ls3");

    const auto basis = manybody::build_fock_basis(particles);
    if (!eig) eig = std::make_shared<const manybody::Eigensystem>(
                  manybody::Eigensystem::diagonalize(manybody::build_h3ls(p, *basis)));
    if (eig->size() != basis->size()) throw std::invalid_argument("simulate_3ls: eigensystem does not match N");
    const manybody::Propagator prop(eig, manybody::initial_state_3ls(basis), p.hbar);

    const double interval = p.rabi_period() / plan.manybody_per_TR;
    const auto samples = static_cast<std::size_t>(std::llround(plan.duration_TR * plan.manybody_per_TR)) + 1;
    const bool need_state = std::any_of(observables.begin(), observables.end(), [](const ObservableSpec& o) {
        return o.kind != ObservableSpec::Kind::fidelity;
    });

    std::vector<TimeSeries> out;
    for (const auto& o : observables) out.emplace_back(interval, std::vector<double>(samples), o.label());
    for (std::size_t i = 0; i < samples; ++i) {
        const double t = static_cast<double>(i) * interval;
        manybody::ManyBodyState psi;
        if (need_state) psi = prop.state_at(t);
        for (std::size_t k = 0; k < observables.size(); ++k) {
            double v = 0.0;
            switch (observables[k].kind) {
                case ObservableSpec::Kind::current: v = manybody::current_3ls(psi); break;
                case ObservableSpec::Kind::depletion: v = manybody::depletion(manybody::spdm(psi), particles); break;
                case ObservableSpec::Kind::fidelity: v = prop.fidelity_at(t); break;
                case ObservableSpec::Kind::local_density: break;
            }
            out[k].values[i] = v;
        }
    }
    return out;
}

TimeSeries gp3_current_on_manybody_grid(const RatchetParams& p, const SamplingPlan& plan) {
    SamplingPlan mf = plan;
    mf.current_per_TR = plan.manybody_per_TR;
    auto s = simulate_meanfield(Model::gp3, p, {ObservableSpec{}}, mf);
    return std::move(s.front());
}

}  // namespace ratchet
