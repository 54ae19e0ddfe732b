#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sbomchain {

/// Uppercases the `cve-` prefix and validates `CVE-\d{4}-\d{4,}`.
std::optional<std::string> normalize_cve_id(std::string_view raw);
bool is_cve_id(std::string_view id);
/// Accepts `CWE-79` as well as the NVD `NVD-CWE-*` placeholders (rejected).
std::optional<std::string> normalize_cwe_id(std::string_view raw);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);

/// Shortest decimal form that round-trips a double.
std::string format_double(double value);
/// Fixed-precision rendering for reports.
std::string format_fixed(double value, int digits);

/// Seeded generator with portable sampling helpers. std::shuffle and the
/// std distributions are implementation-defined, so all sampling that feeds
/// checkpoints or splits goes through here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace sbomchain
