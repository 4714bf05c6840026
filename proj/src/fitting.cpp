#include "ratchet/fitting.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace ratchet::fitting {

namespace {

void check_xy(std::span<const double> x, std::span<const double> y, std::size_t min_len, const char* who) {
    if (x.size() != y.size()) throw std::invalid_argument(std::string(who) + ": x and y lengths differ");
    if (x.size() < min_len)
        throw std::invalid_argument(std::string(who) + ": need at least " + std::to_string(min_len) + " points");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw std::invalid_argument(std::string(who) + ": non-finite data at index " + std::to_string(i));
}

double r_squared(std::span<const double> y, double ss_res) {
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_tot = 0.0;
    for (double v : y) ss_tot += (v - mean) * (v - mean);
    return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
}

/// First time the series crosses `level`, linearly interpolated; NaN if never.
double first_crossing(std::span<const double> x, std::span<const double> y, double level) {
    for (std::size_t i = 1; i < y.size(); ++i) {
        const double a = y[i - 1] - level, b = y[i] - level;
        if (a == 0.0) return x[i - 1];
        if ((a < 0.0) != (b < 0.0)) return x[i - 1] + (x[i] - x[i - 1]) * a / (a - b);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

struct Residuals {
    Eigen::VectorXd r;
    double ssr;
};

Residuals residuals(const ModelSpec& m, Params p, std::span<const double> x, std::span<const double> y) {
    Residuals out{Eigen::VectorXd(static_cast<Eigen::Index>(x.size())), 0.0};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - m.eval(p, x[i]);
        out.r(static_cast<Eigen::Index>(i)) = r;
        out.ssr += r * r;
    }
    if (!std::isfinite(out.ssr)) out.ssr = std::numeric_limits<double>::infinity();
    return out;
}

Eigen::MatrixXd jacobian(const ModelSpec& m, Params p, std::span<const double> x) {
    Eigen::MatrixXd J(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(m.arity()));
    std::vector<double> g(m.arity());
    for (std::size_t i = 0; i < x.size(); ++i) {
        m.jacobian(p, x[i], g);
        for (std::size_t k = 0; k < g.size(); ++k) J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = g[k];
    }
    return J;
}

double gradient_cosine(const Eigen::MatrixXd& J, const Eigen::VectorXd& r) {
    const double rn = r.norm();
    if (rn == 0.0) return 0.0;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < J.cols(); ++k) {
        const double cn = J.col(k).norm();
        if (cn > 0.0) worst = std::max(worst, std::abs(J.col(k).dot(r)) / (cn * rn));
    }
    return worst;
}

}  // namespace

ModelSpec linear_model() {
    return {"linear",
            {"slope", "intercept"},
            [](Params p, double x) { return p[0] * x + p[1]; },
            [](Params, double x, std::span<double> g) {
                g[0] = x;
                g[1] = 1.0;
            },
            [](Params, std::span<const double>) { return true; }};
}

ModelSpec tanh_onset_model() {
    return {"tanh_onset",
            {"A", "B", "C", "D"},
            [](Params p, double x) { return p[0] * std::tanh(p[1] * (x + p[2])) + p[3]; },
            [](Params p, double x, std::span<double> g) {
                const double u = p[1] * (x + p[2]);
                const double t = std::tanh(u);
                const double sech2 = 1.0 - t * t;
                g[0] = t;
                g[1] = p[0] * sech2 * (x + p[2]);
                g[2] = p[0] * sech2 * p[1];
                g[3] = 1.0;
            },
            [](Params p, std::span<const double>) {
                return std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); });
            }};
}

ModelSpec power_offset_model() {
    return {"power_offset",
            {"a", "b", "c"},
            [](Params p, double x) { return p[0] * std::pow(x, p[1]) + p[2]; },
            [](Params p, double x, std::span<double> g) {
                const double xb = std::pow(x, p[1]);
                g[0] = xb;
                g[1] = p[0] * xb * std::log(x);
                g[2] = 1.0;
            },
            [](Params p, std::span<const double> x) {
                if (!std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); })) return false;
                if (std::abs(p[1]) > 50.0) return false;
                return std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0; });
            }};
}

ModelSpec shifted_power_model() {
    return {"shifted_power",
            {"alpha", "beta", "delta"},
            [](Params p, double x) { return p[0] * std::pow(x + p[1], p[2]); },
            [](Params p, double x, std::span<double> g) {
                const double s = x + p[1];
                const double sd = std::pow(s, p[2]);
                g[0] = sd;
                g[1] = p[0] * p[2] * sd / s;
                g[2] = p[0] * sd * std::log(s);
            },
            [](Params p, std::span<const double> x) {
                if (!std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); })) return false;
                if (std::abs(p[2]) > 50.0) return false;
                return std::all_of(x.begin(), x.end(), [&](double v) { return v + p[1] > 0.0; });
            }};
}

ModelSpec model_by_name(const std::string& name) {
    if (name == "linear") return linear_model();
    if (name == "tanh_onset") return tanh_onset_model();
    if (name == "power_offset") return power_offset_model();
    if (name == "shifted_power") return shifted_power_model();
    throw std::invalid_argument("unknown model '" + name + "' (expected linear, tanh_onset, power_offset, shifted_power)");
}

double FitResult::param(const std::string& name) const {
    for (std::size_t i = 0; i < param_names.size(); ++i)
        if (param_names[i] == name) return params[i];
    throw std::out_of_range("FitResult: no parameter '" + name + "' in model " + model);
}

double FitResult::err(const std::string& name) const {
    for (std::size_t i = 0; i < param_names.size(); ++i)
        if (param_names[i] == name) return std_errs[i];
    throw std::out_of_range("FitResult: no parameter '" + name + "' in model " + model);
}

std::string FitResult::to_json() const {
    nlohmann::json j;
    j["model"] = model;
    nlohmann::json p = nlohmann::json::object(), e = nlohmann::json::object();
    for (std::size_t i = 0; i < params.size(); ++i) {
        p[param_names[i]] = params[i];
        e[param_names[i]] = std::isfinite(std_errs[i]) ? nlohmann::json(std_errs[i]) : nlohmann::json(nullptr);
    }
    j["params"] = p;
    j["std_errs"] = e;
    j["r2"] = r2;
    j["converged"] = converged;
    j["iterations"] = iterations;
    j["residual_norm"] = residual_norm;
    return j.dump(2);
}

FitResult linear_fit(std::span<const double> x, std::span<const double> y) {
    check_xy(x, y, 3, "linear_fit");
    const auto n = static_cast<double>(x.size());
    double xm = 0.0, ym = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xm += x[i];
        ym += y[i];
    }
    xm /= n;
    ym /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - xm) * (x[i] - xm);
        sxy += (x[i] - xm) * (y[i] - ym);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("linear_fit: x values are all equal");
    const double b = sxy / sxx;
    const double a = ym - b * xm;
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (a + b * x[i]);
        ssr += r * r;
    }
    const double s2 = ssr / (n - 2.0);
    FitResult f;
    f.model = "linear";
    f.param_names = {"slope", "intercept"};
    f.params = {b, a};
    f.std_errs = {std::sqrt(s2 / sxx), std::sqrt(s2 * (1.0 / n + xm * xm / sxx))};
    f.r2 = r_squared(y, ssr);
    f.converged = true;
    f.iterations = 1;
    f.residual_norm = std::sqrt(ssr);
    return f;
}

FitResult nonlinear_fit(const ModelSpec& model, std::span<const double> x, std::span<const double> y,
                        std::vector<double> p, const FitOptions& opt) {
    check_xy(x, y, model.arity() + 1, "nonlinear_fit");
    if (p.size() != model.arity())
        throw std::invalid_argument("nonlinear_fit: model " + model.name + " takes " + std::to_string(model.arity()) +
                                    " parameters, got " + std::to_string(p.size()));
    if (opt.max_iter < 1) throw std::invalid_argument("nonlinear_fit: max_iter must be >= 1");
    if (!model.in_domain(p, x)) throw std::invalid_argument("nonlinear_fit: initial parameters outside the model domain");

    const auto k = static_cast<Eigen::Index>(model.arity());
    auto res = residuals(model, p, x, y);
    if (!std::isfinite(res.ssr)) throw std::invalid_argument("nonlinear_fit: model is not finite at the initial point");

    FitResult f;
    f.model = model.name;
    f.param_names = model.param_names;
    double lambda = 1e-3;
    double y_sq = 0.0;
    for (double v : y) y_sq += v * v;
    // An exact fit leaves only rounding in the residual, where the cosine is meaningless.
    const auto exact = [&] { return res.ssr <= 1e-26 * y_sq; };
    std::vector<double> trial(p.size());
    for (f.iterations = 1; f.iterations <= opt.max_iter; ++f.iterations) {
        const Eigen::MatrixXd J = jacobian(model, p, x);
        if (exact() || gradient_cosine(J, res.r) <= opt.gtol) {
            f.converged = true;
            break;
        }
        const Eigen::MatrixXd A = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * res.r;
        bool accepted = false;
        double rel_step = 0.0;
        while (lambda < 1e16) {
            Eigen::MatrixXd damped = A;
            for (Eigen::Index i = 0; i < k; ++i) damped(i, i) += lambda * std::max(A(i, i), 1e-12);
            const Eigen::VectorXd step = damped.ldlt().solve(g);
            if (!step.allFinite()) {
                lambda *= 4.0;
                continue;
            }
            double pn = 0.0;
            for (Eigen::Index i = 0; i < k; ++i) {
                trial[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(i)] + step(i);
                pn += p[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(i)];
            }
            if (model.in_domain(trial, x)) {
                auto next = residuals(model, trial, x, y);
                if (next.ssr < res.ssr) {
                    rel_step = step.norm() / (std::sqrt(pn) + opt.xtol);
                    p = trial;
                    res = std::move(next);
                    lambda = std::max(lambda / 3.0, 1e-12);
                    accepted = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if (!accepted) {
            // No downhill step exists at any damping: a stationary point up to rounding.
            f.converged = exact() || gradient_cosine(J, res.r) <= 1e-4;
            break;
        }
        if (rel_step <= opt.xtol) {
            f.converged = exact() || gradient_cosine(jacobian(model, p, x), res.r) <= 1e-4;
            break;
        }
    }
    f.iterations = std::min(f.iterations, opt.max_iter);

    f.params = p;
    f.residual_norm = std::sqrt(res.ssr);
    f.r2 = r_squared(y, res.ssr);
    f.std_errs.assign(p.size(), std::numeric_limits<double>::quiet_NaN());
    const Eigen::MatrixXd J = jacobian(model, p, x);
    const Eigen::MatrixXd A = J.transpose() * J;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.isInvertible()) {
        const double dof = static_cast<double>(x.size()) - static_cast<double>(p.size());
        const Eigen::MatrixXd cov = lu.inverse() * (res.ssr / dof);
        for (Eigen::Index i = 0; i < k; ++i) f.std_errs[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, cov(i, i)));
    } else {
        f.converged = false;
    }
    return f;
}

std::vector<double> init_tanh_onset(std::span<const double> x, std::span<const double> y) {
    check_xy(x, y, 5, "init_tanh_onset");
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) throw std::invalid_argument("init_tanh_onset: flat data");
    const double sign = y.back() >= y.front() ? 1.0 : -1.0;
    const double mid = 0.5 * (*hi + *lo);
    double t_mid = first_crossing(x, y, mid);
    if (!std::isfinite(t_mid)) t_mid = 0.5 * (x.front() + x.back());
    const double base = sign > 0 ? *lo : *hi;
    const double t10 = first_crossing(x, y, base + sign * 0.1 * range);
    const double t90 = first_crossing(x, y, base + sign * 0.9 * range);
    double rise = std::abs(t90 - t10);
    if (!std::isfinite(rise) || rise <= 0.0) rise = 0.25 * (x.back() - x.front());
    return {sign * 0.5 * range, 2.0 * std::atanh(0.8) / rise, -t_mid, mid};
}

namespace {

std::vector<double> loglog_power(std::span<const double> x, std::span<const double> y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0.0 && y[i] > 0.0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    if (lx.size() < 3) throw std::invalid_argument("power-law initialisation needs 3 points with x, y > 0");
    const auto f = linear_fit(lx, ly);
    return {std::exp(f.params[1]), f.params[0]};
}

}  // namespace

std::vector<double> init_power_offset(std::span<const double> x, std::span<const double> y) {
    check_xy(x, y, 3, "init_power_offset");
    const auto ab = loglog_power(x, y);
    return {ab[0], ab[1], 0.0};
}

std::vector<double> init_shifted_power(std::span<const double> x, std::span<const double> y) {
    check_xy(x, y, 3, "init_shifted_power");
    const auto ab = loglog_power(x, y);
    return {ab[0], 0.0, ab[1]};
}

TimeSeries onset_window(const TimeSeries& d) {
    d.validate();
    const double peak = *std::max_element(d.values.begin(), d.values.end());
    std::size_t half = d.size();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d.values[i] >= 0.5 * peak) {
            half = i;
            break;
        }
    const std::size_t end = std::min(d.size(), 2 * half + 1);
    return d.slice(0, std::max<std::size_t>(end, 8));
}

OnsetResult depletion_onset_time(const TimeSeries& d, const FitOptions& opt) {
    d.validate();
    const std::size_t n = d.size();
    if (n < 8) throw FitRejected("depletion_onset_time: need at least 8 samples");
    const std::size_t tail = std::max<std::size_t>(1, n / 5);
    double late = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) late += d.values[i];
    late /= static_cast<double>(tail);
    const double peak = *std::max_element(d.values.begin(), d.values.end());
    if (!(late > 0.0) || d.values.front() > 0.2 * late || peak < 0.8 * late || d.values.back() <= d.values.front())
        throw FitRejected("depletion_onset_time: series shows no rising onset");

    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = d.time_at(i);
    OnsetResult out;
    out.fit = nonlinear_fit(tanh_onset_model(), t, d.values, init_tanh_onset(t, d.values), opt);
    out.onset = -out.fit.params[2];
    if (!(out.fit.r2 >= 0.9))
        throw FitRejected("depletion_onset_time: tanh fit rejected (R^2 = " + std::to_string(out.fit.r2) + ")");
    if (!(out.onset >= t.front() && out.onset <= t.back()))
        throw FitRejected("depletion_onset_time: turning point " + std::to_string(out.onset) + " outside the data");
    return out;
}

std::vector<double> sliding_max(std::span<const double> x, std::size_t half) {
    std::vector<double> out(x.size());
    std::deque<std::size_t> q;  // indices with decreasing values
    const std::size_t n = x.size();
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t hi = std::min(n - 1, i + half);
        for (; next <= hi; ++next) {
            while (!q.empty() && x[q.back()] <= x[next]) q.pop_back();
            q.push_back(next);
        }
        while (q.front() + half < i) q.pop_front();
        out[i] = x[q.front()];
    }
    return out;
}

RevivalResult revival_time(const TimeSeries& fidelity, const RevivalOptions& opt) {
    fidelity.validate();
    if (!(opt.threshold > 0.0 && opt.threshold <= 1.0)) throw std::invalid_argument("revival_time: threshold must be in (0, 1]");
    if (!(opt.merge_gap >= 0.0) || !(opt.envelope_window >= 0.0))
        throw std::invalid_argument("revival_time: window and gap must be >= 0");
    const auto half = static_cast<std::size_t>(std::llround(0.5 * opt.envelope_window / fidelity.dt));
    const auto f = half > 0 ? sliding_max(fidelity.values, half) : fidelity.values;

    RevivalResult r;
    std::size_t i = 0;
    while (i < f.size() && f[i] >= opt.burn_in_level) ++i;
    if (i == f.size()) {
        r.never_decayed = true;
        return r;
    }
    while (i < f.size() && f[i] < opt.threshold) ++i;
    if (i == f.size()) return r;

    const auto gap = static_cast<std::size_t>(std::llround(opt.merge_gap / fidelity.dt));
    double sum = 0.0;
    std::size_t count = 0, last = i;
    for (std::size_t k = i; k < f.size(); ++k) {
        if (f[k] >= opt.threshold) {
            sum += fidelity.time_at(k);
            ++count;
            last = k;
        } else if (k - last > gap) {
            break;
        }
    }
    r.found = true;
    r.time = sum / static_cast<double>(count);
    r.start = fidelity.time_at(i);
    r.end = fidelity.time_at(last);
    return r;
}

}  // namespace ratchet::fitting
