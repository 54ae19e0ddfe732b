#include "sbomchain/nvd_store.hpp"

#include "sbomchain/error.hpp"
#include "sbomchain/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <sstream>

namespace sbomchain {

using nlohmann::json;

std::string_view to_string(Severity s) {
    switch (s) {
    case Severity::Low: return "LOW";
    case Severity::Medium: return "MEDIUM";
    case Severity::High: return "HIGH";
    case Severity::Critical: return "CRITICAL";
    case Severity::Unknown: return "UNKNOWN";
    }
    return "UNKNOWN";
}

Severity parse_severity(std::string_view s) {
    std::string up(s);
    for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (up == "LOW") return Severity::Low;
    if (up == "MEDIUM" || up == "MODERATE") return Severity::Medium;
    if (up == "HIGH") return Severity::High;
    if (up == "CRITICAL") return Severity::Critical;
    return Severity::Unknown;
}

std::array<double, 4> severity_one_hot(Severity s) {
    std::array<double, 4> out{0.0, 0.0, 0.0, 0.0};
    switch (s) {
    case Severity::Low: out[0] = 1.0; break;
    case Severity::Medium: out[1] = 1.0; break;
    case Severity::High: out[2] = 1.0; break;
    case Severity::Critical: out[3] = 1.0; break;
    case Severity::Unknown: break;
    }
    return out;
}

namespace {

[[noreturn]] void malformed(const std::string& what) {
    throw Error(ErrorKind::MalformedSnapshot, what);
}

std::vector<std::string> dedup_cwes(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    for (const auto& r : raw) {
        auto id = normalize_cwe_id(r);
        if (id && std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
    }
    return out;
}

int year_from_timestamp(const std::string& ts) {
    if (ts.size() < 4) return 0;
    int year = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(ts[i]))) return 0;
        year = year * 10 + (ts[i] - '0');
    }
    return year;
}

Severity severity_from_v2_score(double score) {
    if (score >= 7.0) return Severity::High;
    if (score >= 4.0) return Severity::Medium;
    return Severity::Low;
}

// Picks the Primary entry when several sources scored the CVE.
const json* pick_metric(const json& metrics, const char* key) {
    auto it = metrics.find(key);
    if (it == metrics.end() || !it->is_array() || it->empty()) return nullptr;
    for (const auto& m : *it) {
        if (m.is_object() && m.value("type", "") == "Primary") return &m;
    }
    return it->front().is_object() ? &it->front() : nullptr;
}

CveMeta from_nvd_item(const json& cve) {
    CveMeta meta;
    auto id = normalize_cve_id(cve.value("id", ""));
    if (!id) malformed("NVD item without a valid CVE id");
    meta.cve_id = *id;
    meta.published_year = year_from_timestamp(cve.value("published", ""));
    if (auto refs = cve.find("references"); refs != cve.end() && refs->is_array()) {
        meta.reference_count = static_cast<int>(refs->size());
    }
    std::vector<std::string> cwes;
    if (auto weak = cve.find("weaknesses"); weak != cve.end() && weak->is_array()) {
        for (const auto& w : *weak) {
            auto desc = w.find("description");
            if (desc == w.end() || !desc->is_array()) continue;
            for (const auto& d : *desc) {
                if (d.is_object() && d.contains("value") && d["value"].is_string()) {
                    cwes.push_back(d["value"].get<std::string>());
                }
            }
        }
    }
    meta.cwe_ids = dedup_cwes(cwes);
    meta.cwe_count = static_cast<int>(meta.cwe_ids.size());

    auto metrics = cve.find("metrics");
    if (metrics == cve.end() || !metrics->is_object()) return meta;
    for (const char* key : {"cvssMetricV31", "cvssMetricV30"}) {
        if (const json* m = pick_metric(*metrics, key)) {
            const json& data = m->value("cvssData", json::object());
            meta.cvss_base = std::clamp(data.value("baseScore", 0.0), 0.0, 10.0);
            meta.severity = parse_severity(data.value("baseSeverity", ""));
            return meta;
        }
    }
    if (const json* m = pick_metric(*metrics, "cvssMetricV2")) {
        const json& data = m->value("cvssData", json::object());
        meta.cvss_base = std::clamp(data.value("baseScore", 0.0), 0.0, 10.0);
        meta.severity = parse_severity(m->value("baseSeverity", ""));
        if (meta.severity == Severity::Unknown) meta.severity = severity_from_v2_score(meta.cvss_base);
    }
    return meta;
}

CveMeta from_simplified(const json& item) {
    CveMeta meta;
    auto id = normalize_cve_id(item.value("cve_id", ""));
    if (!id) malformed("simplified record without a valid cve_id");
    meta.cve_id = *id;
    try {
        if (auto s = item.find("cvss_base"); s != item.end() && !s->is_null()) {
            meta.cvss_base = s->get<double>();
            if (!(meta.cvss_base >= 0.0 && meta.cvss_base <= 10.0)) malformed(meta.cve_id + ": cvss_base out of range");
        }
        if (auto s = item.find("severity"); s != item.end() && !s->is_null()) {
            meta.severity = parse_severity(s->get<std::string>());
        }
        meta.published_year = item.value("published_year", 0);
        meta.exploited = item.value("exploited", false);
        meta.reference_count = item.value("reference_count", 0);
        if (meta.reference_count < 0) malformed(meta.cve_id + ": negative reference_count");
        if (auto c = item.find("cwe_ids"); c != item.end() && !c->is_null()) {
            meta.cwe_ids = dedup_cwes(c->get<std::vector<std::string>>());
        }
    } catch (const json::exception& e) {
        malformed(meta.cve_id + ": " + e.what());
    }
    meta.cwe_count = static_cast<int>(meta.cwe_ids.size());
    return meta;
}

std::vector<CveMeta> parse_snapshot_document(const std::string& contents, std::size_t& duplicates) {
    json doc;
    try {
        doc = json::parse(contents);
    } catch (const json::parse_error& e) {
        malformed(e.what());
    }
    const json* items = &doc;
    if (doc.is_object()) {
        auto it = doc.find("vulnerabilities");
        if (it == doc.end() || !it->is_array()) malformed("object without a vulnerabilities array");
        items = &*it;
    } else if (!doc.is_array()) {
        malformed("snapshot is neither an array nor an NVD response");
    }

    std::vector<CveMeta> out;
    std::map<std::string, std::size_t> position;
    for (const auto& item : *items) {
        if (!item.is_object()) malformed("snapshot entry is not an object");
        CveMeta meta;
        if (item.contains("cve_id")) {
            meta = from_simplified(item);
        } else if (auto cve = item.find("cve"); cve != item.end() && cve->is_object()) {
            meta = from_nvd_item(*cve);
        } else if (item.contains("id")) {
            meta = from_nvd_item(item);
        } else {
            malformed("unrecognised snapshot entry");
        }
        if (auto it = position.find(meta.cve_id); it != position.end()) {
            ++duplicates;
            out[it->second] = std::move(meta);
        } else {
            position.emplace(meta.cve_id, out.size());
            out.push_back(std::move(meta));
        }
    }
    return out;
}

// Minimal RFC 4180 field splitter for one line.
std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

} // namespace

std::optional<CveMeta> MetaStore::lookup(std::string_view cve_id) const {
    auto id = normalize_cve_id(cve_id);
    if (!id) return std::nullopt;
    auto it = index_.find(*id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

MetaStore MetaStore::with_exploited(const std::set<std::string>& ids, CoverageReport* coverage) const {
    MetaStore copy = *this;
    for (auto& [id, meta] : copy.index_) meta.exploited = ids.contains(id);
    if (coverage) {
        *coverage = CoverageReport{};
        coverage->listed = ids.size();
        for (const auto& id : ids) {
            if (index_.contains(id)) {
                ++coverage->matched;
            } else {
                coverage->missing_from_snapshot.push_back(id);
            }
        }
    }
    std::string joined = copy.digest_ + "|kev";
    for (const auto& id : ids) joined += "|" + id;
    copy.digest_ = sha256_hex(joined);
    return copy;
}

MetaStore MetaStore::from_records(std::vector<CveMeta> records) {
    MetaStore store;
    std::string joined;
    for (auto& r : records) {
        r.cwe_ids = dedup_cwes(r.cwe_ids);
        r.cwe_count = static_cast<int>(r.cwe_ids.size());
        store.index_[r.cve_id] = r;
    }
    store.digest_ = sha256_hex(write_snapshot(records));
    return store;
}

MetaStore load_snapshot_bytes(const std::vector<std::string>& contents) {
    MetaStore store;
    std::string digests;
    for (const auto& file : contents) {
        for (auto& meta : parse_snapshot_document(file, store.duplicates_)) {
            store.index_[meta.cve_id] = std::move(meta);
        }
        digests += sha256_hex(file);
    }
    store.digest_ = sha256_hex(digests);
    return store;
}

MetaStore load_snapshot(const std::vector<std::filesystem::path>& paths) {
    std::vector<std::string> contents;
    contents.reserve(paths.size());
    for (const auto& p : paths) contents.push_back(read_file(p));
    return load_snapshot_bytes(contents);
}

std::set<std::string> parse_exploited_list(std::string_view contents) {
    std::set<std::string> ids;
    std::size_t first = contents.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return ids;

    if (contents[first] == '[' || contents[first] == '{') {
        json doc;
        try {
            doc = json::parse(contents.begin(), contents.end());
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::MalformedList, e.what());
        }
        const json* items = &doc;
        if (doc.is_object()) {
            auto it = doc.find("vulnerabilities");
            if (it == doc.end() || !it->is_array()) throw Error(ErrorKind::MalformedList, "no vulnerabilities array");
            items = &*it;
        }
        for (const auto& item : *items) {
            std::string raw;
            if (item.is_string()) {
                raw = item.get<std::string>();
            } else if (item.is_object() && item.contains("cveID") && item["cveID"].is_string()) {
                raw = item["cveID"].get<std::string>();
            } else {
                throw Error(ErrorKind::MalformedList, "entry without cveID");
            }
            auto id = normalize_cve_id(raw);
            if (!id) throw Error(ErrorKind::MalformedList, "invalid CVE id " + raw);
            ids.insert(*id);
        }
        return ids;
    }

    std::istringstream in{std::string(contents)};
    std::string line;
    std::optional<std::size_t> column;
    bool header_checked = false;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = split_csv_line(line);
        if (!header_checked) {
            header_checked = true;
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (fields[i] == "cveID") column = i;
            }
            if (column) continue;
        }
        if (column) {
            if (*column >= fields.size()) throw Error(ErrorKind::MalformedList, "short CSV row");
            auto id = normalize_cve_id(fields[*column]);
            if (!id) throw Error(ErrorKind::MalformedList, "invalid CVE id " + fields[*column]);
            ids.insert(*id);
        } else {
            auto id = normalize_cve_id(fields.front());
            if (!id) throw Error(ErrorKind::MalformedList, "invalid CVE id " + fields.front());
            ids.insert(*id);
        }
    }
    return ids;
}

std::set<std::string> load_exploited_list(const std::filesystem::path& path) {
    return parse_exploited_list(read_file(path));
}

std::string write_snapshot(const std::vector<CveMeta>& records) {
    json arr = json::array();
    for (const auto& r : records) {
        arr.push_back({{"cve_id", r.cve_id},
                       {"cvss_base", r.cvss_base},
                       {"severity", std::string(to_string(r.severity))},
                       {"published_year", r.published_year},
                       {"exploited", r.exploited},
                       {"reference_count", r.reference_count},
                       {"cwe_ids", r.cwe_ids}});
    }
    return arr.dump(2) + "\n";
}

} // namespace sbomchain
