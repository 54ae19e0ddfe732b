#include "sbomchain/sbom.hpp"

#include "sbomchain/error.hpp"
#include "sbomchain/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace sbomchain {

using nlohmann::json;

namespace {

std::string string_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) return {};
    return it->get<std::string>();
}

std::vector<std::string> parse_licenses(const json& component) {
    std::vector<std::string> out;
    auto it = component.find("licenses");
    if (it == component.end() || !it->is_array()) return out;
    for (const auto& entry : *it) {
        if (!entry.is_object()) continue;
        if (auto lic = entry.find("license"); lic != entry.end() && lic->is_object()) {
            std::string id = string_field(*lic, "id");
            if (id.empty()) id = string_field(*lic, "name");
            if (!id.empty()) out.push_back(std::move(id));
        } else if (auto expr = entry.find("expression"); expr != entry.end() && expr->is_string()) {
            out.push_back(expr->get<std::string>());
        }
    }
    return out;
}

// Depth-first flattening of nested `components` in document order.
void collect_components(const json& list, std::vector<const json*>& out) {
    if (!list.is_array()) return;
    for (const auto& c : list) {
        if (!c.is_object()) continue;
        out.push_back(&c);
        if (auto nested = c.find("components"); nested != c.end()) collect_components(*nested, out);
    }
}

std::vector<std::string> parse_cwes(const json& vuln) {
    std::vector<std::string> out;
    auto it = vuln.find("cwes");
    if (it == vuln.end() || !it->is_array()) return out;
    for (const auto& cwe : *it) {
        std::optional<std::string> id;
        if (cwe.is_number_integer()) {
            id = "CWE-" + std::to_string(cwe.get<long long>());
        } else if (cwe.is_string()) {
            id = normalize_cwe_id(cwe.get<std::string>());
        }
        if (id && std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
    }
    return out;
}

struct RatingHint {
    std::optional<std::string> severity;
    std::optional<double> score;
};

RatingHint parse_ratings(const json& vuln) {
    RatingHint hint;
    auto it = vuln.find("ratings");
    if (it == vuln.end() || !it->is_array()) return hint;
    for (const auto& rating : *it) {
        if (!rating.is_object()) continue;
        std::optional<double> score;
        if (auto s = rating.find("score"); s != rating.end() && s->is_number()) {
            double v = s->get<double>();
            if (v >= 0.0 && v <= 10.0) score = v;
        }
        std::string sev = string_field(rating, "severity");
        if (score && (!hint.score || *score > *hint.score)) {
            hint.score = score;
            if (!sev.empty()) hint.severity = sev;
        } else if (!hint.severity && !sev.empty()) {
            hint.severity = sev;
        }
    }
    return hint;
}

} // namespace

const ComponentRecord* EnrichedSbom::find_component(std::string_view id) const {
    for (const auto& c : components) {
        if (c.component_id == id) return &c;
    }
    return nullptr;
}

EnrichedSbom parse_cyclonedx(std::string_view bytes, std::string sbom_id) {
    json doc;
    try {
        doc = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::MalformedDocument, e.what());
    }
    if (!doc.is_object()) throw Error(ErrorKind::MalformedDocument, "top level is not an object");
    if (string_field(doc, "bomFormat") != "CycloneDX") {
        throw Error(ErrorKind::MalformedDocument, "bomFormat is not CycloneDX");
    }
    auto version_it = doc.find("specVersion");
    if (version_it == doc.end() || !version_it->is_string()) {
        throw Error(ErrorKind::MalformedDocument, "missing specVersion");
    }
    const std::string spec_version = version_it->get<std::string>();
    if (spec_version != "1.4" && spec_version != "1.5" && spec_version != "1.6") {
        throw Error(ErrorKind::UnsupportedSpecVersion, "specVersion " + spec_version);
    }

    EnrichedSbom sbom;
    sbom.sbom_id = sbom_id.empty() ? sha256_hex(bytes).substr(0, 16) : std::move(sbom_id);
    sbom.spec_version = spec_version;

    std::vector<const json*> raw_components;
    if (auto meta = doc.find("metadata"); meta != doc.end() && meta->is_object()) {
        if (auto mc = meta->find("component"); mc != meta->end() && mc->is_object() && mc->contains("bom-ref")) {
            raw_components.push_back(&*mc);
        }
    }
    if (auto comps = doc.find("components"); comps != doc.end()) {
        if (!comps->is_array()) throw Error(ErrorKind::MalformedDocument, "components is not an array");
        collect_components(*comps, raw_components);
    }

    std::unordered_set<std::string> ids;
    for (std::size_t index = 0; index < raw_components.size(); ++index) {
        const json& raw = *raw_components[index];
        ComponentRecord rec;
        rec.name = string_field(raw, "name");
        rec.version = string_field(raw, "version");
        if (rec.name.empty()) {
            ++sbom.counters.unnamed_components_dropped;
            continue;
        }
        rec.component_id = string_field(raw, "bom-ref");
        if (rec.component_id.empty()) {
            rec.component_id = rec.name + "@" + rec.version + "#" + std::to_string(index);
        }
        if (!ids.insert(rec.component_id).second) {
            ++sbom.counters.duplicate_components_dropped;
            continue;
        }
        if (std::string purl = string_field(raw, "purl"); !purl.empty()) rec.purl = std::move(purl);
        rec.licenses = parse_licenses(raw);
        sbom.components.push_back(std::move(rec));
    }

    std::set<DependencyRelation> seen_edges;
    if (auto deps = doc.find("dependencies"); deps != doc.end()) {
        if (!deps->is_array()) throw Error(ErrorKind::MalformedDocument, "dependencies is not an array");
        for (const auto& entry : *deps) {
            if (!entry.is_object()) continue;
            const std::string from = string_field(entry, "ref");
            auto targets = entry.find("dependsOn");
            if (targets == entry.end() || !targets->is_array()) continue;
            for (const auto& t : *targets) {
                if (!t.is_string()) continue;
                const std::string to = t.get<std::string>();
                if (!ids.contains(from) || !ids.contains(to)) {
                    ++sbom.counters.dangling_dropped;
                    continue;
                }
                if (from == to) {
                    ++sbom.counters.self_loops_dropped;
                    continue;
                }
                DependencyRelation rel{from, to};
                if (seen_edges.insert(rel).second) sbom.dependencies.push_back(std::move(rel));
            }
        }
    }

    std::unordered_map<std::string, std::size_t> finding_index;
    if (auto vulns = doc.find("vulnerabilities"); vulns != doc.end()) {
        if (!vulns->is_array()) throw Error(ErrorKind::MalformedDocument, "vulnerabilities is not an array");
        for (const auto& vuln : *vulns) {
            if (!vuln.is_object()) continue;
            auto cve = normalize_cve_id(string_field(vuln, "id"));
            if (!cve) {
                ++sbom.counters.non_cve_dropped;
                continue;
            }
            const RatingHint hint = parse_ratings(vuln);
            const std::vector<std::string> cwes = parse_cwes(vuln);
            auto affects = vuln.find("affects");
            if (affects == vuln.end() || !affects->is_array()) continue;
            for (const auto& a : *affects) {
                if (!a.is_object()) continue;
                const std::string ref = string_field(a, "ref");
                if (!ids.contains(ref)) {
                    ++sbom.counters.dangling_dropped;
                    continue;
                }
                const std::string key = ref + '\n' + *cve;
                if (auto it = finding_index.find(key); it != finding_index.end()) {
                    auto& existing = sbom.findings[it->second].cwe_ids;
                    for (const auto& c : cwes) {
                        if (std::find(existing.begin(), existing.end(), c) == existing.end()) existing.push_back(c);
                    }
                    continue;
                }
                finding_index.emplace(key, sbom.findings.size());
                sbom.findings.push_back(VulnFinding{ref, *cve, hint.severity, hint.score, cwes});
            }
        }
    }

    std::unordered_set<std::string> targets;
    for (const auto& d : sbom.dependencies) targets.insert(d.to_id);
    for (const auto& c : sbom.components) {
        if (!targets.contains(c.component_id)) sbom.root_ids.push_back(c.component_id);
    }
    return sbom;
}

IngestReport parse_report(const EnrichedSbom& sbom) {
    IngestReport r;
    r.sbom_id = sbom.sbom_id;
    r.components = sbom.components.size();
    r.dependency_edges = sbom.dependencies.size();
    r.findings = sbom.findings.size();
    r.dangling_dropped = sbom.counters.dangling_dropped;
    r.non_cve_dropped = sbom.counters.non_cve_dropped;
    r.self_loops_dropped = sbom.counters.self_loops_dropped;
    r.duplicate_components_dropped = sbom.counters.duplicate_components_dropped;
    r.components_without_version = static_cast<std::size_t>(
        std::count_if(sbom.components.begin(), sbom.components.end(),
                      [](const ComponentRecord& c) { return c.version.empty(); }));
    return r;
}

std::string report_to_json(const IngestReport& r) {
    json j = json::object();
    j["sbom_id"] = r.sbom_id;
    j["components"] = r.components;
    j["dependency_edges"] = r.dependency_edges;
    j["findings"] = r.findings;
    j["dangling_dropped"] = r.dangling_dropped;
    j["non_cve_dropped"] = r.non_cve_dropped;
    j["components_without_version"] = r.components_without_version;
    j["self_loops_dropped"] = r.self_loops_dropped;
    j["duplicate_components_dropped"] = r.duplicate_components_dropped;
    return j.dump(2);
}

std::map<std::string, DependencyKind> direct_dependency_set(const EnrichedSbom& sbom) {
    std::map<std::string, DependencyKind> kinds;
    for (const auto& c : sbom.components) kinds[c.component_id] = DependencyKind::Transitive;
    std::unordered_set<std::string> roots(sbom.root_ids.begin(), sbom.root_ids.end());
    for (const auto& r : sbom.root_ids) kinds[r] = DependencyKind::Direct;
    for (const auto& d : sbom.dependencies) {
        if (roots.contains(d.from_id)) kinds[d.to_id] = DependencyKind::Direct;
    }
    return kinds;
}

} // namespace sbomchain
