#include "ratchet/zero_one.hpp"

#include <fftw3.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "ratchet/parallel.hpp"

namespace ratchet::chaos {

namespace {

// The FFTW planner is not reentrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

class FftBuffer {
public:
    explicit FftBuffer(std::size_t n) : n_(n), data_(fftw_alloc_complex(n)) {
        if (!data_) throw std::bad_alloc();
    }
    ~FftBuffer() { fftw_free(data_); }
    FftBuffer(const FftBuffer&) = delete;
    FftBuffer& operator=(const FftBuffer&) = delete;

    fftw_complex* data() { return data_; }
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    fftw_complex* data_;
};

class FftPlan {
public:
    FftPlan(FftBuffer& buf, int sign) {
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_1d(static_cast<int>(buf.size()), buf.data(), buf.data(), sign, FFTW_ESTIMATE);
        if (!plan_) throw std::runtime_error("FFTW could not create a plan of size " + std::to_string(buf.size()));
    }
    ~FftPlan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_ = nullptr;
};

double mean_of(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

void check_j(std::size_t n, std::size_t j) {
    if (j < 1 || j > n / 10)
        throw std::out_of_range("modified_msd: j = " + std::to_string(j) + " outside [1, " + std::to_string(n / 10) + "]");
}

/// S(j) = sum_{i=0}^{N-1-j} |z_{i+j} - z_i|^2 for j = 1..jmax.
std::vector<double> displacement_sums_fft(const PQTrajectory& pq, std::size_t jmax) {
    const std::size_t n = pq.p.size();
    FftBuffer buf(2 * n);
    FftPlan forward(buf, FFTW_FORWARD);
    FftPlan backward(buf, FFTW_BACKWARD);
    auto* z = buf.data();
    for (std::size_t i = 0; i < n; ++i) {
        z[i][0] = pq.p[i];
        z[i][1] = pq.q[i];
    }
    for (std::size_t i = n; i < 2 * n; ++i) z[i][0] = z[i][1] = 0.0;
    forward.execute();
    for (std::size_t k = 0; k < 2 * n; ++k) {
        z[k][0] = z[k][0] * z[k][0] + z[k][1] * z[k][1];
        z[k][1] = 0.0;
    }
    backward.execute();
    // z[j] / 2n now holds sum_i z_{i+j} conj(z_i); subtract from the two power sums.
    std::vector<double> pw(n);
    for (std::size_t i = 0; i < n; ++i) pw[i] = pq.p[i] * pq.p[i] + pq.q[i] * pq.q[i];
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + pw[i];

    std::vector<double> out(jmax);
    const double scale = 1.0 / static_cast<double>(2 * n);
    for (std::size_t j = 1; j <= jmax; ++j) {
        const double head = prefix[n - j];
        const double tail = prefix[n] - prefix[j];
        out[j - 1] = std::max(0.0, head + tail - 2.0 * z[j][0] * scale);
    }
    return out;
}

double displacement_mean_direct(const PQTrajectory& pq, std::size_t j, std::size_t stride) {
    const std::size_t n = pq.p.size();
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + j < n; i += stride) {
        const double dp = pq.p[i + j] - pq.p[i];
        const double dq = pq.q[i + j] - pq.q[i];
        s += dp * dp + dq * dq;
        ++count;
    }
    return s / static_cast<double>(count);
}

double oscillatory_term(double mean, std::size_t j, double c) {
    return mean * mean * (1.0 - std::cos(static_cast<double>(j) * c)) / (1.0 - std::cos(c));
}

}  // namespace

PQTrajectory pq_map(std::span<const double> x, double c) {
    if (!(c > 0.0 && c < std::numbers::pi)) throw std::invalid_argument("pq_map: c = " + std::to_string(c) + " outside (0, pi)");
    if (x.size() < 10) throw std::invalid_argument("pq_map: series needs at least 10 samples");
    PQTrajectory t{c, std::vector<double>(x.size()), std::vector<double>(x.size())};
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double arg = static_cast<double>(i + 1) * c;
        sp += x[i] * std::cos(arg);
        sq += x[i] * std::sin(arg);
        t.p[i] = sp;
        t.q[i] = sq;
    }
    return t;
}

std::vector<double> modified_msd_curve(std::span<const double> x, const PQTrajectory& pq, std::size_t jmax,
                                       MsdMethod method, std::size_t stride) {
    const std::size_t n = x.size();
    if (pq.p.size() != n || pq.q.size() != n) throw std::invalid_argument("modified_msd: trajectory length differs from series");
    if (stride < 1) throw std::invalid_argument("modified_msd: stride must be >= 1");
    check_j(n, jmax);
    const double mu = mean_of(x);

    std::vector<double> m(jmax);
    if (method == MsdMethod::fft) {
        const auto sums = displacement_sums_fft(pq, jmax);
        for (std::size_t j = 1; j <= jmax; ++j) m[j - 1] = sums[j - 1] / static_cast<double>(n - j);
    } else {
        for (std::size_t j = 1; j <= jmax; ++j) m[j - 1] = displacement_mean_direct(pq, j, stride);
    }
    for (std::size_t j = 1; j <= jmax; ++j) m[j - 1] -= oscillatory_term(mu, j, pq.c);
    return m;
}

double modified_msd(std::span<const double> x, const PQTrajectory& pq, std::size_t j, std::size_t stride) {
    check_j(x.size(), j);
    if (pq.p.size() != x.size()) throw std::invalid_argument("modified_msd: trajectory length differs from series");
    if (stride < 1) throw std::invalid_argument("modified_msd: stride must be >= 1");
    return displacement_mean_direct(pq, j, stride) - oscillatory_term(mean_of(x), j, pq.c);
}

KcValue kc_statistic(std::span<const double> x, double c, MsdMethod method, std::size_t stride) {
    const auto pq = pq_map(x, c);
    const std::size_t jmax = x.size() / 10;
    const auto m = modified_msd_curve(x, pq, jmax, method, stride);

    const double jm = 0.5 * static_cast<double>(jmax + 1);
    const double mm = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(jmax);
    const double mu = mean_of(x);
    double cov = 0.0, vj = 0.0, vm = 0.0, scale = 0.0;
    for (std::size_t j = 1; j <= jmax; ++j) {
        const double a = static_cast<double>(j) - jm;
        const double b = m[j - 1] - mm;
        cov += a * b;
        vj += a * a;
        vm += b * b;
        scale = std::max(scale, std::abs(m[j - 1] + oscillatory_term(mu, j, c)));
    }
    // A constant series cancels D against the oscillatory term exactly; what is
    // left is rounding noise relative to D and must not count as growth.
    if (std::sqrt(vm / static_cast<double>(jmax)) <= 1e-9 * scale) return {c, 0.0, true};
    return {c, std::clamp(cov / std::sqrt(vj * vm), -1.0, 1.0), false};
}

std::vector<double> golden_c_grid(double c_max, std::size_t n_c) {
    // Fractional parts of k phi mapped onto (0, c_max). Folding modulo c_max/pi instead
    // collapses to zero when c_max/pi divides phi, which the default f_max makes exact.
    const double phi = std::numbers::phi;
    std::vector<double> cs;
    cs.reserve(n_c);
    for (std::size_t k = 1; k <= n_c; ++k) {
        const double c = std::fmod(static_cast<double>(k) * phi, 1.0) * c_max;
        if (c > 0.0 && c < c_max) cs.push_back(c);
    }
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }), cs.end());
    return cs;
}

ZeroOneResult zero_one_test(const TimeSeries& series, double sample_freq, double f_max, const ZeroOneOptions& opt) {
    series.validate();
    if (!(sample_freq > 0.0) || !(f_max > 0.0)) throw std::invalid_argument("zero_one_test: frequencies must be positive");
    if (opt.n_c < 10) throw std::invalid_argument("zero_one_test: n_c must be >= 10");
    if (series.size() < 100) throw std::invalid_argument("zero_one_test: need at least 100 samples");
    const double c_max = 2.0 * std::numbers::pi * f_max / sample_freq;
    if (c_max >= std::numbers::pi)
        throw std::invalid_argument("zero_one_test: c_max = " + std::to_string(c_max) +
                                    " >= pi; sampling too coarse for f_max");

    ZeroOneResult res;
    res.label = series.label;
    res.c_max = c_max;
    const auto cs = golden_c_grid(c_max, opt.n_c);
    res.n_c = cs.size();
    res.per_c.resize(cs.size());
    parallel_for(cs.size(), opt.threads,
                 [&](std::size_t k) { res.per_c[k] = kc_statistic(series.values, cs[k], opt.method, opt.stride); });

    res.degenerate = std::all_of(res.per_c.begin(), res.per_c.end(), [](const KcValue& v) { return v.degenerate; });
    std::vector<double> ks;
    ks.reserve(res.per_c.size());
    for (const auto& v : res.per_c) ks.push_back(v.K);
    std::sort(ks.begin(), ks.end());
    const std::size_t h = ks.size() / 2;
    res.K_median = ks.size() % 2 ? ks[h] : 0.5 * (ks[h - 1] + ks[h]);
    return res;
}

std::string ZeroOneResult::to_json() const {
    nlohmann::json j;
    j["label"] = label;
    j["K_median"] = K_median;
    j["c_max"] = c_max;
    j["n_c"] = n_c;
    j["degenerate"] = degenerate;
    auto& arr = j["per_c"] = nlohmann::json::array();
    for (const auto& v : per_c) arr.push_back({{"c", v.c}, {"K", v.K}, {"degenerate", v.degenerate}});
    return j.dump(2);
}

}  // namespace ratchet::chaos
