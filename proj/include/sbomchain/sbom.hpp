#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sbomchain {

struct ComponentRecord {
    std::string component_id;
    std::string name;
    std::string version;
    std::optional<std::string> purl;
    std::vector<std::string> licenses;

    bool operator==(const ComponentRecord&) const = default;
};

struct DependencyRelation {
    std::string from_id;
    std::string to_id;

    bool operator==(const DependencyRelation&) const = default;
    auto operator<=>(const DependencyRelation&) const = default;
};

struct VulnFinding {
    std::string component_id;
    std::string cve_id;
    std::optional<std::string> severity_hint;
    std::optional<double> cvss_hint;
    std::vector<std::string> cwe_ids;

    bool operator==(const VulnFinding&) const = default;
};

/// Drop counters accumulated while parsing.
struct ParseCounters {
    std::size_t dangling_dropped = 0;   // dependency endpoints or affects refs not declared
    std::size_t non_cve_dropped = 0;    // advisory ids that are not CVE ids
    std::size_t self_loops_dropped = 0;
    std::size_t duplicate_components_dropped = 0;
    std::size_t unnamed_components_dropped = 0;

    bool operator==(const ParseCounters&) const = default;
};

struct EnrichedSbom {
    std::string sbom_id;
    std::string spec_version;
    std::vector<ComponentRecord> components;
    std::vector<DependencyRelation> dependencies;
    std::vector<VulnFinding> findings;
    std::vector<std::string> root_ids;
    ParseCounters counters;

    const ComponentRecord* find_component(std::string_view id) const;
    bool operator==(const EnrichedSbom&) const = default;
};

struct IngestReport {
    std::string sbom_id;
    std::size_t components = 0;
    std::size_t dependency_edges = 0;
    std::size_t findings = 0;
    std::size_t dangling_dropped = 0;
    std::size_t non_cve_dropped = 0;
    std::size_t components_without_version = 0;
    std::size_t self_loops_dropped = 0;
    std::size_t duplicate_components_dropped = 0;

    bool operator==(const IngestReport&) const = default;
};

enum class DependencyKind { Direct, Transitive };

/// Parses a CycloneDX 1.4-1.6 JSON document with embedded `vulnerabilities`.
/// Throws Error{MalformedDocument} or Error{UnsupportedSpecVersion}.
/// An empty `sbom_id` is replaced by a digest prefix of the bytes.
EnrichedSbom parse_cyclonedx(std::string_view bytes, std::string sbom_id = {});

IngestReport parse_report(const EnrichedSbom& sbom);
std::string report_to_json(const IngestReport& report);

/// Roots and the direct targets of roots are `Direct`; everything else is `Transitive`.
std::map<std::string, DependencyKind> direct_dependency_set(const EnrichedSbom& sbom);

} // namespace sbomchain
