#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ratchet {

/// Uniformly sampled real observable record.
struct TimeSeries {
    double dt = 1.0;
    std::vector<double> values;
    std::string label;

    TimeSeries() = default;
    TimeSeries(double dt_, std::vector<double> v, std::string l = {})
        : dt(dt_), values(std::move(v)), label(std::move(l)) {}

    std::size_t size() const { return values.size(); }
    double time_at(std::size_t i) const { return static_cast<double>(i) * dt; }
    double duration() const { return values.empty() ? 0.0 : time_at(values.size() - 1); }
    std::span<const double> view() const { return values; }

    /// dt > 0, at least two samples, every value finite.
    void validate() const;

    /// Keeps samples [first, last).
    TimeSeries slice(std::size_t first, std::size_t last) const;
    /// Every stride-th sample starting at 0.
    TimeSeries decimate(std::size_t stride) const;
    /// Divides by max |x|; a zero series is returned unchanged.
    TimeSeries normalized_by_max() const;
};

/// Writes `t,<label>...` CSV; all series must share dt and length.
void write_csv(const std::filesystem::path& path, std::span<const TimeSeries> series);
/// Reads a CSV produced by write_csv (or any `t,...` table on a uniform grid).
std::vector<TimeSeries> read_csv(const std::filesystem::path& path);

/// Writes `content` via a temporary file and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace ratchet
