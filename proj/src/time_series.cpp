#include "ratchet/time_series.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace ratchet {

void TimeSeries::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw std::invalid_argument("TimeSeries '" + label + "': dt must be positive");
    if (values.size() < 2)
        throw std::invalid_argument("TimeSeries '" + label + "': needs at least two samples");
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw std::invalid_argument("TimeSeries '" + label + "': non-finite sample at index " +
                                        std::to_string(i));
}

TimeSeries TimeSeries::slice(std::size_t first, std::size_t last) const {
    last = std::min(last, values.size());
    if (first > last) first = last;
    return {dt, {values.begin() + static_cast<std::ptrdiff_t>(first), values.begin() + static_cast<std::ptrdiff_t>(last)},
            label};
}

TimeSeries TimeSeries::decimate(std::size_t stride) const {
    if (stride == 0) throw std::invalid_argument("TimeSeries::decimate: stride must be >= 1");
    std::vector<double> out;
    out.reserve(values.size() / stride + 1);
    for (std::size_t i = 0; i < values.size(); i += stride) out.push_back(values[i]);
    return {dt * static_cast<double>(stride), std::move(out), label};
}

TimeSeries TimeSeries::normalized_by_max() const {
    double peak = 0.0;
    for (double v : values) peak = std::max(peak, std::abs(v));
    TimeSeries out = *this;
    if (peak > 0.0)
        for (double& v : out.values) v /= peak;
    return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_csv(const std::filesystem::path& path, std::span<const TimeSeries> series) {
    if (series.empty()) throw std::invalid_argument("write_csv: no series");
    const auto n = series.front().size();
    const double dt = series.front().dt;
    for (const auto& s : series)
        if (s.size() != n || s.dt != dt)
            throw std::invalid_argument("write_csv: series '" + s.label + "' does not share the time grid");

    std::ostringstream os;
    os << "t";
    for (const auto& s : series) os << ',' << s.label;
    os << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < n; ++i) {
        os << static_cast<double>(i) * dt;
        for (const auto& s : series) os << ',' << s.values[i];
        os << '\n';
    }
    write_file_atomic(path, os.str());
}

std::vector<TimeSeries> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");

    std::vector<std::string> header;
    {
        std::stringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header.front() != "t")
        throw std::runtime_error(path.string() + ": expected header 't,<observable>...'");

    std::vector<double> times;
    std::vector<std::vector<double>> cols(header.size() - 1);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ls, cell, ',')) {
            const double v = std::stod(cell);
            if (c == 0)
                times.push_back(v);
            else if (c <= cols.size())
                cols[c - 1].push_back(v);
            ++c;
        }
        if (c != header.size()) throw std::runtime_error(path.string() + ": ragged row");
    }
    if (times.size() < 2) throw std::runtime_error(path.string() + ": fewer than two rows");
    const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);

    std::vector<TimeSeries> out;
    for (std::size_t c = 0; c < cols.size(); ++c) out.emplace_back(dt, std::move(cols[c]), header[c + 1]);
    return out;
}

}  // namespace ratchet
