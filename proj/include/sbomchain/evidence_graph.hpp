#pragma once

#include "sbomchain/nvd_store.hpp"
#include "sbomchain/sbom.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sbomchain {

enum class NodeType : std::size_t { Component = 0, Cve = 1, Cwe = 2 };
enum class Relation : std::size_t { DependsOn = 0, HasVulnerability = 1, HasCwe = 2 };

inline constexpr std::size_t kNodeTypeCount = 3;
inline constexpr std::size_t kRelationCount = 3;
inline constexpr std::array<NodeType, kNodeTypeCount> kNodeTypes{NodeType::Component, NodeType::Cve, NodeType::Cwe};
inline constexpr std::array<Relation, kRelationCount> kRelations{Relation::DependsOn, Relation::HasVulnerability,
                                                                 Relation::HasCwe};

std::string_view to_string(NodeType t);
std::string_view to_string(Relation r);
/// Throws Error{UnknownRelation}.
Relation parse_relation(std::string_view name);
NodeType source_type(Relation r);
NodeType target_type(Relation r);

enum class LeakagePolicy { Strict, PaperLiteral };
std::string_view to_string(LeakagePolicy p);
LeakagePolicy parse_leakage_policy(std::string_view name);

enum class NormMode { ZScore, Identity };

struct ColumnSpec {
    std::string name;
    NormMode mode;
};

/// Column layouts per node type. Component rows have 12 columns, CVE rows 7,
/// CWE rows 1.
struct FeatureSpec {
    LeakagePolicy leakage_policy = LeakagePolicy::Strict;
    std::array<std::vector<ColumnSpec>, kNodeTypeCount> columns;

    static FeatureSpec standard(LeakagePolicy policy = LeakagePolicy::Strict);
    std::size_t width(NodeType t) const { return columns[static_cast<std::size_t>(t)].size(); }
};

inline constexpr std::size_t kComponentFeatureCount = 12;
inline constexpr std::size_t kCveFeatureCount = 7;
inline constexpr std::size_t kCweFeatureCount = 1;
/// Component columns derived from vulnerability data, zeroed under STRICT.
inline constexpr std::size_t kVulnerabilityDerivedColumns = 8;

/// Dense row-major feature rows.
struct FeatureMatrix {
    std::size_t cols = 0;
    std::vector<double> values;

    std::size_t rows() const { return cols == 0 ? 0 : values.size() / cols; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
    void append_row(std::span<const double> row);

    bool operator==(const FeatureMatrix&) const = default;
};

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;

    bool operator==(const Edge&) const = default;
    auto operator<=>(const Edge&) const = default;
};

inline constexpr std::string_view kHasAnyCveLabel = "has-any-CVE";

struct EvidenceGraph {
    std::string graph_id;
    LeakagePolicy leakage_policy = LeakagePolicy::Strict;
    /// Which rule produced `labels`; builds from SBOMs use has-any-CVE.
    std::string label_source{kHasAnyCveLabel};
    std::array<std::vector<std::string>, kNodeTypeCount> node_ids;
    /// Display names for component nodes (name@version).
    std::vector<std::string> component_names;
    std::array<std::vector<Edge>, kRelationCount> edges;
    std::array<FeatureMatrix, kNodeTypeCount> features;
    std::vector<int> labels;

    std::size_t node_count(NodeType t) const { return node_ids[static_cast<std::size_t>(t)].size(); }
    const std::vector<Edge>& edges_of(Relation r) const { return edges[static_cast<std::size_t>(r)]; }
    std::vector<Edge>& edges_of(Relation r) { return edges[static_cast<std::size_t>(r)]; }
    const FeatureMatrix& features_of(NodeType t) const { return features[static_cast<std::size_t>(t)]; }
    std::size_t positive_count() const;

    bool operator==(const EvidenceGraph&) const = default;
};

/// Per-CVE metadata from the store, falling back to SBOM rating hints for
/// ids the store does not know.
MetaStore effective_store(const EnrichedSbom& sbom, const MetaStore& store);

EvidenceGraph build_graph(const EnrichedSbom& sbom, const MetaStore& store, const FeatureSpec& spec);

FeatureMatrix component_features(const EnrichedSbom& sbom, const MetaStore& store, const EvidenceGraph& graph,
                                 const FeatureSpec& spec);
FeatureMatrix cve_features(const MetaStore& store, const EvidenceGraph& graph);
FeatureMatrix cwe_features(const EvidenceGraph& graph);

/// Same graph with the relation's edge list emptied.
EvidenceGraph mask_edge_type(const EvidenceGraph& graph, Relation relation);
EvidenceGraph mask_edge_type(const EvidenceGraph& graph, std::string_view relation);

enum class GraphFormat { Dot, Json };
/// Throws Error{UnknownFormat}.
GraphFormat parse_graph_format(std::string_view name);
std::string export_graph(const EvidenceGraph& graph, GraphFormat format);
std::string export_graph(const EvidenceGraph& graph, std::string_view format);
/// Inverse of the JSON export. Throws Error{MalformedDocument}.
EvidenceGraph import_graph_json(std::string_view bytes);

/// Disjoint union; node indices of later graphs are offset.
EvidenceGraph disjoint_union(std::span<const EvidenceGraph* const> graphs);

/// Per-type column statistics for z-score normalisation.
struct NormStats {
    std::array<std::vector<double>, kNodeTypeCount> mean;
    std::array<std::vector<double>, kNodeTypeCount> stddev;

    bool empty() const { return mean[0].empty(); }
    bool operator==(const NormStats&) const = default;
};

/// Statistics over the rows of `graphs` (the training split); identity
/// columns get mean 0 / std 1.
NormStats compute_norm_stats(std::span<const EvidenceGraph> graphs, const FeatureSpec& spec);
/// Zero-variance columns pass through unchanged.
EvidenceGraph normalize(const EvidenceGraph& graph, const NormStats& stats);

} // namespace sbomchain
