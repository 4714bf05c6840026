#include "ratchet/dimension.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <iomanip>
#include <stdexcept>

#include "ratchet/parallel.hpp"

namespace ratchet::dimension {

namespace {

struct Range {
    double lo, hi;
};

Range range_of(std::span<const double> x) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    return {*lo, *hi};
}

struct LineFit {
    double slope, slope_err, r2;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    double xm = 0.0, ym = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xm += x[i];
        ym += y[i];
    }
    xm /= n;
    ym /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - xm) * (x[i] - xm);
        sxy += (x[i] - xm) * (y[i] - ym);
        syy += (y[i] - ym) * (y[i] - ym);
    }
    const double b = sxy / sxx;
    const double ssr = std::max(0.0, syy - b * sxy);
    return {b, n > 2 ? std::sqrt(ssr / (n - 2.0) / sxx) : 0.0, syy > 0.0 ? 1.0 - ssr / syy : 0.0};
}

/// Histogram bin of a distance: the number of radii <= d. Bin eps.size() means
/// the pair lies beyond every radius.
std::size_t bin_of(std::span<const double> eps, double d) {
    return static_cast<std::size_t>(std::upper_bound(eps.begin(), eps.end(), d) - eps.begin());
}

void check_grid(std::span<const double> eps) {
    if (eps.empty()) throw std::invalid_argument("correlation sum: empty radius grid");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0) || !std::isfinite(eps[i]))
            throw std::invalid_argument("correlation sum: radii must be positive and finite");
        if (i > 0 && !(eps[i] > eps[i - 1])) throw std::invalid_argument("correlation sum: radii must be ascending");
    }
}

/// Work unit of the pair loop: either a j-range (exhaustive) or a batch of random draws.
struct PairPlan {
    bool exhaustive;
    std::uint64_t total;
    std::vector<std::pair<std::size_t, std::size_t>> j_ranges;
    std::vector<std::uint64_t> batch_sizes;
};

constexpr std::uint64_t kBatch = 1u << 20;

PairPlan plan_pairs(std::size_t n, std::size_t w, const PairSampling& s) {
    if (n <= w + 1) throw std::invalid_argument("correlation sum: no pairs survive the Theiler window");
    const std::uint64_t m = n - w - 1;
    const std::uint64_t admissible = m * (m + 1) / 2;
    PairPlan plan{admissible <= s.max_pairs, 0, {}, {}};
    if (plan.exhaustive) {
        plan.total = admissible;
        // j from w+1..n-1 pairs with k = 0..j-w-1; cut into chunks of ~kBatch pairs.
        std::size_t start = w + 1;
        std::uint64_t acc = 0;
        for (std::size_t j = w + 1; j < n; ++j) {
            acc += j - w;
            if (acc >= kBatch || j + 1 == n) {
                plan.j_ranges.emplace_back(start, j + 1);
                start = j + 1;
                acc = 0;
            }
        }
    } else {
        if (s.max_pairs == 0) throw std::invalid_argument("correlation sum: max_pairs must be positive");
        plan.total = s.max_pairs;
        for (std::uint64_t left = s.max_pairs; left > 0;) {
            const auto b = std::min(left, kBatch);
            plan.batch_sizes.push_back(b);
            left -= b;
        }
    }
    return plan;
}

/// Runs visit(j, k, hist) over every planned pair, one histogram per work unit,
/// and returns their element-wise sum (integer, so independent of scheduling).
template <typename Visit>
std::vector<std::uint64_t> run_pairs(const PairPlan& plan, std::size_t n, std::size_t w, const PairSampling& s,
                                     std::size_t hist_size, Visit visit) {
    const std::size_t units = plan.exhaustive ? plan.j_ranges.size() : plan.batch_sizes.size();
    std::vector<std::vector<std::uint64_t>> hists(units);
    parallel_for(units, s.threads, [&](std::size_t u) {
        auto& h = hists[u];
        h.assign(hist_size, 0);
        if (plan.exhaustive) {
            const auto [j0, j1] = plan.j_ranges[u];
            for (std::size_t j = j0; j < j1; ++j)
                for (std::size_t k = 0; k + w < j; ++k) visit(j, k, h);
        } else {
            std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                              static_cast<std::uint32_t>(u)};
            std::mt19937_64 rng(seq);
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (std::uint64_t got = 0; got < plan.batch_sizes[u];) {
                const std::size_t a = pick(rng);
                const std::size_t b = pick(rng);
                const std::size_t j = std::max(a, b), k = std::min(a, b);
                if (j - k <= w) continue;
                visit(j, k, h);
                ++got;
            }
        }
    });
    std::vector<std::uint64_t> total(hist_size, 0);
    for (const auto& h : hists)
        for (std::size_t i = 0; i < hist_size; ++i) total[i] += h[i];
    return total;
}

std::vector<double> cumulate(std::span<const std::uint64_t> hist, std::size_t neps, std::uint64_t pairs) {
    std::vector<double> C(neps);
    std::uint64_t acc = 0;
    for (std::size_t i = 0; i < neps; ++i) {
        acc += hist[i];
        C[i] = static_cast<double>(acc) / static_cast<double>(pairs);
    }
    return C;
}

}  // namespace

MutualInformation mutual_information(std::span<const double> x, std::size_t lag, std::size_t bins) {
    if (bins < 4) throw std::invalid_argument("mutual_information: need at least 4 bins");
    if (x.size() < lag + 100) throw std::invalid_argument("mutual_information: fewer than 100 samples after the lag");
    const auto [lo, hi] = range_of(x);
    if (!(hi > lo)) return {0.0, true};

    const double scale = static_cast<double>(bins) / (hi - lo);
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        idx[i] = std::min(bins - 1, static_cast<std::size_t>((x[i] - lo) * scale));

    const std::size_t n = x.size() - lag;
    std::vector<std::uint64_t> joint(bins * bins, 0), a(bins, 0), b(bins, 0);
    for (std::size_t t = 0; t < n; ++t) {
        ++joint[idx[t] * bins + idx[t + lag]];
        ++a[idx[t]];
        ++b[idx[t + lag]];
    }
    const double inv = 1.0 / static_cast<double>(n);
    double mi = 0.0;
    for (std::size_t i = 0; i < bins; ++i)
        for (std::size_t j = 0; j < bins; ++j) {
            const auto c = joint[i * bins + j];
            if (c == 0) continue;
            const double pij = static_cast<double>(c) * inv;
            mi += pij * std::log(pij / (static_cast<double>(a[i]) * inv * static_cast<double>(b[j]) * inv));
        }
    return {std::max(0.0, mi), false};
}

DelaySelection select_delay(std::span<const double> x, std::size_t max_lag, std::size_t bins, std::size_t smooth) {
    if (max_lag < 2) throw std::invalid_argument("select_delay: max_lag must be >= 2");
    if (max_lag >= x.size() / 10)
        throw std::invalid_argument("select_delay: max_lag " + std::to_string(max_lag) + " must be below N/10 = " +
                                    std::to_string(x.size() / 10));
    const std::size_t last = max_lag + smooth;
    DelaySelection sel;
    sel.mi.resize(last + 1);
    for (std::size_t l = 0; l <= last; ++l) {
        const auto r = mutual_information(x, l, bins);
        if (r.degenerate) throw std::invalid_argument("select_delay: constant series has no delay");
        sel.mi[l] = r.nats;
    }

    if (sel.mi[1] < 0.05 * sel.mi[0]) {
        sel.tau = 1;
        sel.warning = true;
        sel.mi.resize(max_lag + 1);
        return sel;
    }

    std::vector<double> s(last + 1);
    for (std::size_t l = 0; l <= last; ++l) {
        const std::size_t a = l >= smooth ? l - smooth : 0;
        const std::size_t b = std::min(last, l + smooth);
        double acc = 0.0;
        for (std::size_t k = a; k <= b; ++k) acc += sel.mi[k];
        s[l] = acc / static_cast<double>(b - a + 1);
    }
    for (std::size_t l = 1; l < max_lag; ++l)
        if (s[l - 1] > s[l] && s[l] <= s[l + 1]) {
            sel.tau = l;
            sel.mi.resize(max_lag + 1);
            return sel;
        }

    const auto it = std::min_element(sel.mi.begin() + 1, sel.mi.begin() + static_cast<std::ptrdiff_t>(max_lag) + 1);
    sel.tau = static_cast<std::size_t>(it - sel.mi.begin());
    sel.warning = true;
    sel.mi.resize(max_lag + 1);
    return sel;
}

PointCloud delay_embed(std::span<const double> x, std::size_t m, std::size_t tau) {
    if (m < 1 || tau < 1) throw std::invalid_argument("delay_embed: m and tau must be >= 1");
    const std::size_t span = (m - 1) * tau;
    if (x.size() < span + m)
        throw std::invalid_argument("delay_embed: series of length " + std::to_string(x.size()) +
                                    " too short for m = " + std::to_string(m) + ", tau = " + std::to_string(tau));
    const std::size_t n = x.size() - span;
    PointCloud pc{m, std::vector<double>(n * m)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < m; ++d) pc.coords[i * m + d] = x[i + d * tau];
    return pc;
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0) || !(hi > lo) || n < 2) throw std::invalid_argument("log_grid: need 0 < lo < hi and n >= 2");
    std::vector<double> g(n);
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < n; ++i) g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

CorrelationSum correlation_sum(const PointCloud& points, std::span<const double> eps, std::size_t theiler_w,
                               const PairSampling& sampling) {
    check_grid(eps);
    const std::size_t n = points.size();
    const std::size_t dim = points.dim;
    const auto plan = plan_pairs(n, theiler_w, sampling);
    const std::size_t neps = eps.size();
    // slot neps + 1 counts pairs at exactly zero distance
    const auto hist = run_pairs(plan, n, theiler_w, sampling, neps + 2,
                                [&](std::size_t j, std::size_t k, std::vector<std::uint64_t>& h) {
                                    const double* a = points.coords.data() + j * dim;
                                    const double* b = points.coords.data() + k * dim;
                                    double d = 0.0;
                                    for (std::size_t c = 0; c < dim; ++c) d = std::max(d, std::abs(a[c] - b[c]));
                                    ++h[bin_of(eps, d)];
                                    if (d == 0.0) ++h[neps + 1];
                                });
    CorrelationSum res{cumulate(hist, neps, plan.total), plan.total, plan.exhaustive, hist[neps + 1] == plan.total};
    return res;
}

std::vector<CorrelationSum> embedded_correlation_sums(std::span<const double> x, std::size_t tau, std::size_t m_max,
                                                      std::span<const double> eps, std::size_t theiler_w,
                                                      const PairSampling& sampling) {
    check_grid(eps);
    if (m_max < 1 || tau < 1) throw std::invalid_argument("embedded_correlation_sums: m_max and tau must be >= 1");
    const std::size_t span = (m_max - 1) * tau;
    if (x.size() < span + m_max) throw std::invalid_argument("embedded_correlation_sums: series too short for m_max");
    const std::size_t n = x.size() - span;
    const std::size_t neps = eps.size();
    const double top = eps.back();
    const auto plan = plan_pairs(n, theiler_w, sampling);

    // Layout: m_max rows of neps + 1 bins, then m_max "escaped at m" counters.
    const std::size_t row = neps + 1;
    const std::size_t escape = m_max * row;
    const double* data = x.data();
    auto hist = run_pairs(plan, n, theiler_w, sampling, escape + m_max,
                          [&](std::size_t j, std::size_t k, std::vector<std::uint64_t>& h) {
                              double d = 0.0;
                              for (std::size_t m = 0; m < m_max; ++m) {
                                  d = std::max(d, std::abs(data[j + m * tau] - data[k + m * tau]));
                                  if (d >= top) {
                                      // beyond every radius for this and all larger m
                                      ++h[escape + m];
                                      return;
                                  }
                                  ++h[m * row + bin_of(eps, d)];
                              }
                          });

    std::vector<CorrelationSum> out;
    out.reserve(m_max);
    std::uint64_t escaped = 0;
    for (std::size_t m = 0; m < m_max; ++m) {
        escaped += hist[escape + m];
        hist[m * row + neps] += escaped;
        CorrelationSum cs;
        cs.C = cumulate(std::span(hist).subspan(m * row, row), neps, plan.total);
        cs.pairs = plan.total;
        cs.exhaustive = plan.exhaustive;
        cs.degenerate = false;
        out.push_back(std::move(cs));
    }
    return out;
}

std::optional<ScalingRegion> find_scaling_region(std::span<const double> log_eps, std::span<const double> log_C,
                                                 double r2_min, std::size_t min_points) {
    if (log_eps.size() != log_C.size()) throw std::invalid_argument("find_scaling_region: length mismatch");
    if (log_eps.size() < 12) throw std::invalid_argument("find_scaling_region: need at least 12 grid points");
    if (min_points < 3) throw std::invalid_argument("find_scaling_region: min_points must be >= 3");

    std::vector<std::size_t> keep;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < log_C.size(); ++i)
        if (std::isfinite(log_C[i]) && log_C[i] < 0.0 && std::isfinite(log_eps[i])) {
            keep.push_back(i);
            xs.push_back(log_eps[i]);
            ys.push_back(log_C[i]);
        }
    const std::size_t n = keep.size();
    for (std::size_t len = n; len >= min_points && len <= n; --len) {
        std::optional<ScalingRegion> best;
        for (std::size_t s = 0; s + len <= n; ++s) {
            const auto f = fit_line(std::span(xs).subspan(s, len), std::span(ys).subspan(s, len));
            if (!(f.r2 >= r2_min)) continue;
            if (!best || f.slope_err < best->slope_err)
                best = ScalingRegion{keep[s], keep[s + len - 1], f.slope, f.slope_err, f.r2};
        }
        if (best) return best;
    }
    return std::nullopt;
}

void EmbeddingConfig::validate(std::size_t n) const {
    if (delay_tau < 1) throw std::invalid_argument("EmbeddingConfig.delay_tau: must be >= 1");
    if (dims_m.empty()) throw std::invalid_argument("EmbeddingConfig.dims_m: empty");
    for (std::size_t i = 0; i < dims_m.size(); ++i) {
        if (dims_m[i] < 1) throw std::invalid_argument("EmbeddingConfig.dims_m: dimensions must be >= 1");
        if (i > 0 && dims_m[i] <= dims_m[i - 1])
            throw std::invalid_argument("EmbeddingConfig.dims_m: must be strictly ascending");
    }
    if (dims_m.back() * delay_tau >= n)
        throw std::invalid_argument("EmbeddingConfig: max(m) * tau = " + std::to_string(dims_m.back() * delay_tau) +
                                    " must be below the series length " + std::to_string(n));
    if (!epsilon_grid.empty()) {
        if (epsilon_grid.size() < 12) throw std::invalid_argument("EmbeddingConfig.epsilon_grid: need >= 12 radii");
        check_grid(epsilon_grid);
    }
    if (!(r2_min > 0.0 && r2_min <= 1.0)) throw std::invalid_argument("EmbeddingConfig.r2_min: must be in (0, 1]");
    if (!(plateau_tol > 0.0)) throw std::invalid_argument("EmbeddingConfig.plateau_tol: must be positive");
    if (plateau_min < 2) throw std::invalid_argument("EmbeddingConfig.plateau_min: must be >= 2");
    if (!(drift_tol >= 0.0)) throw std::invalid_argument("EmbeddingConfig.drift_tol: must be >= 0");
}

EmbeddingConfig default_embedding_config(std::span<const double> x) {
    EmbeddingConfig cfg;
    const std::size_t max_lag = std::min<std::size_t>(x.size() / 10 - 1, 1000);
    cfg.delay_tau = select_delay(x, max_lag).tau;
    cfg.theiler_w = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.size()))));
    return cfg;
}

void assign_plateau(DimensionEstimate& est, const EmbeddingConfig& cfg) {
    est.ok = false;
    const auto& pm = est.per_m;
    std::size_t end = pm.size();
    while (end > 0 && !pm[end - 1].accepted) --end;
    if (end == 0) {
        est.failure = "no embedding dimension has an acceptable scaling region";
        return;
    }
    // earliest start such that [start, end) is accepted with small consecutive steps
    std::size_t start = end - 1;
    while (start > 0 && pm[start - 1].accepted &&
           std::abs(pm[start].region.slope - pm[start - 1].region.slope) <= cfg.plateau_tol)
        --start;
    const std::size_t count = end - start;
    if (count < cfg.plateau_min) {
        est.failure = "no plateau: only " + std::to_string(count) + " trailing dimension(s) agree within tolerance";
        return;
    }

    std::vector<double> ms, ss;
    double mean = 0.0, se2 = 0.0;
    for (std::size_t i = start; i < end; ++i) {
        ms.push_back(static_cast<double>(pm[i].m));
        ss.push_back(pm[i].region.slope);
        mean += pm[i].region.slope;
        se2 += pm[i].region.slope_err * pm[i].region.slope_err;
    }
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (double s : ss) var += (s - mean) * (s - mean);
    var /= static_cast<double>(count - 1);
    const double trend = fit_line(ms, ss).slope;
    if (trend > cfg.drift_tol) {
        est.failure = "slopes still rising at max m (trend " + std::to_string(trend) + " per m)";
        return;
    }
    const double drift = std::max(0.0, trend) * 0.5 * (ms.back() - ms.front());
    est.ok = true;
    est.failure.clear();
    est.d2 = mean;
    est.d2_err = std::sqrt(se2 / static_cast<double>(count) + var + drift * drift);
    est.plateau_start_m = pm[start].m;
}

DimensionEstimate correlation_dimension(const TimeSeries& series, const EmbeddingConfig& cfg) {
    series.validate();
    const auto& x = series.values;
    cfg.validate(x.size());

    DimensionEstimate est;
    est.label = series.label;
    est.tau = cfg.delay_tau;
    est.w = cfg.theiler_w;
    est.seed = cfg.sampling.seed;
    if (cfg.epsilon_grid.empty()) {
        const auto [lo, hi] = range_of(x);
        if (!(hi > lo)) throw std::invalid_argument("correlation_dimension: constant series");
        est.epsilon = log_grid(1e-3 * (hi - lo), hi - lo, 40);
    } else {
        est.epsilon = cfg.epsilon_grid;
    }

    const auto sums = embedded_correlation_sums(x, cfg.delay_tau, cfg.dims_m.back(), est.epsilon, cfg.theiler_w,
                                                cfg.sampling);
    std::vector<double> log_eps(est.epsilon.size());
    for (std::size_t i = 0; i < log_eps.size(); ++i) log_eps[i] = std::log(est.epsilon[i]);

    for (std::size_t m : cfg.dims_m) {
        const auto& C = sums[m - 1].C;
        std::vector<double> log_c(C.size());
        for (std::size_t i = 0; i < C.size(); ++i) log_c[i] = C[i] > 0.0 ? std::log(C[i]) : -INFINITY;
        SlopeAtM s{m, false, {}};
        if (const auto r = find_scaling_region(log_eps, log_c, cfg.r2_min)) {
            s.accepted = true;
            s.region = *r;
        }
        est.per_m.push_back(s);
        est.C.push_back(C);
    }
    assign_plateau(est, cfg);
    return est;
}

std::string DimensionEstimate::to_json() const {
    nlohmann::json j;
    j["label"] = label;
    j["ok"] = ok;
    if (!ok) j["failure"] = failure;
    j["tau"] = tau;
    j["w"] = w;
    j["seed"] = seed;
    j["d2"] = d2;
    j["d2_err"] = d2_err;
    j["plateau_start_m"] = plateau_start_m;
    auto& arr = j["per_m"] = nlohmann::json::array();
    for (const auto& s : per_m) {
        nlohmann::json e{{"m", s.m}, {"accepted", s.accepted}};
        if (s.accepted) {
            e["slope"] = s.region.slope;
            e["slope_err"] = s.region.slope_err;
            e["scaling_lo"] = s.region.lo;
            e["scaling_hi"] = s.region.hi;
            e["r2"] = s.region.r2;
        }
        arr.push_back(std::move(e));
    }
    return j.dump(2);
}

void DimensionEstimate::write_correlation_csv(const std::filesystem::path& path) const {
    std::ostringstream os;
    os << "eps";
    for (const auto& s : per_m) os << ",C_m" << s.m;
    os << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < epsilon.size(); ++i) {
        os << epsilon[i];
        for (const auto& c : C) os << ',' << c[i];
        os << '\n';
    }
    write_file_atomic(path, os.str());
}

}  // namespace ratchet::dimension
