#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sbomchain {

enum class Severity { Low, Medium, High, Critical, Unknown };

std::string_view to_string(Severity s);
/// Case-insensitive; anything unrecognised maps to Unknown.
Severity parse_severity(std::string_view s);
/// LOW/MEDIUM/HIGH/CRITICAL one-hot; Unknown is all zero.
std::array<double, 4> severity_one_hot(Severity s);

struct CveMeta {
    std::string cve_id;
    double cvss_base = 0.0;
    Severity severity = Severity::Unknown;
    int published_year = 0;
    bool exploited = false;
    int reference_count = 0;
    int cwe_count = 0;
    std::vector<std::string> cwe_ids;

    bool operator==(const CveMeta&) const = default;
};

/// Result of cross-checking an exploited list against a store.
struct CoverageReport {
    std::size_t listed = 0;
    std::size_t matched = 0;
    std::vector<std::string> missing_from_snapshot;
};

class MetaStore {
public:
    MetaStore() = default;

    /// Exact match after id normalisation; absent ids return nullopt.
    std::optional<CveMeta> lookup(std::string_view cve_id) const;
    bool contains(std::string_view cve_id) const { return lookup(cve_id).has_value(); }

    const std::map<std::string, CveMeta>& records() const { return index_; }
    const std::string& snapshot_digest() const { return digest_; }
    std::size_t duplicates_within_files() const { return duplicates_; }
    std::size_t size() const { return index_.size(); }

    /// Copy with exploited=true for every member of `ids`; all others false.
    MetaStore with_exploited(const std::set<std::string>& ids, CoverageReport* coverage = nullptr) const;

    /// Builds a store from records directly (tests, synthetic corpora).
    static MetaStore from_records(std::vector<CveMeta> records);

private:
    friend MetaStore load_snapshot(const std::vector<std::filesystem::path>& paths);
    friend MetaStore load_snapshot_bytes(const std::vector<std::string>& contents);

    std::map<std::string, CveMeta> index_;
    std::string digest_;
    std::size_t duplicates_ = 0;
};

/// Loads NVD API 2.0 documents and/or simplified snapshot arrays. Later
/// inputs override earlier ones. Throws Error{MalformedSnapshot}.
MetaStore load_snapshot(const std::vector<std::filesystem::path>& paths);
MetaStore load_snapshot_bytes(const std::vector<std::string>& contents);

/// KEV-shaped CSV or JSON. Throws Error{MalformedList}.
std::set<std::string> load_exploited_list(const std::filesystem::path& path);
std::set<std::string> parse_exploited_list(std::string_view contents);

/// Simplified snapshot format: JSON array with keys cve_id, cvss_base,
/// severity, published_year, exploited, reference_count, cwe_ids.
std::string write_snapshot(const std::vector<CveMeta>& records);

struct NvdClientConfig {
    std::string base_url = "https://services.nvd.nist.gov";
    std::string path = "/rest/json/cves/2.0";
    std::optional<std::string> api_key;
    /// Query parameter accepting a comma-separated id list. NVD 2.0 has
    /// none, so ids are fetched one request each unless this is set.
    std::optional<std::string> batch_param;
    std::chrono::milliseconds request_interval{6000};
    int max_attempts = 3;
    std::chrono::milliseconds backoff_base{2000};
    int results_per_page = 2000;
    std::function<void(std::chrono::milliseconds)> sleep;

    /// Defaults with the API key taken from NVD_API_KEY; a key shortens the interval.
    static NvdClientConfig from_environment();
};

struct FetchStats {
    std::size_t requests = 0;
    std::size_t records = 0;
};

/// Queries the NVD REST API and writes a simplified snapshot to `out`.
/// Throws Error{NetworkError} or Error{RateLimited} once retries are exhausted.
FetchStats fetch_live(const std::vector<std::string>& cve_ids, const NvdClientConfig& config,
                      const std::filesystem::path& out);

} // namespace sbomchain
