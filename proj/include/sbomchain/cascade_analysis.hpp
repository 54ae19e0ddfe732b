#pragma once

#include "sbomchain/cascade_predictor.hpp"
#include "sbomchain/evidence_graph.hpp"

#include <json.hpp>

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sbomchain {

struct CandidateChain {
    std::vector<std::string> cve_ids;
    std::vector<double> link_scores;
    double chain_score = 0.0;
};

/// Simple paths of 2..max_length CVEs in the undirected link graph of pairs
/// scoring >= tau, one per path with the smaller endpoint first, sorted by
/// geometric-mean score descending then ids. Throws Error{InvalidArgument}
/// unless 0 < tau < 1 and max_length >= 2.
std::vector<CandidateChain> compose_chains(std::span<const mlp::RankedPair> ranking, double tau,
                                           std::size_t max_length = 4);

nlohmann::json chains_to_json(std::span<const CandidateChain> chains, double tau, std::size_t max_length);
/// Throws Error{MalformedDocument}.
std::vector<CandidateChain> chains_from_json(const nlohmann::json& j);

struct ProjectionResult {
    std::string chain_id;
    std::string graph_id;
    std::vector<std::string> chain;
    std::map<std::string, std::vector<std::string>> mapped;
    std::vector<std::string> unmapped_cves;
    std::vector<std::string> induced_nodes;
    std::vector<std::pair<std::string, std::string>> induced_edges;
    /// Weakly connected components of the induced subgraph.
    std::size_t connectivity = 0;
    bool fully_mapped = false;
};

/// Maps chain CVEs to components through HAS_VULNERABILITY and takes the
/// DEPENDS_ON subgraph induced by those components. `graph` must be unmasked.
ProjectionResult project_chain(const std::string& chain_id, const std::vector<std::string>& chain,
                               const EvidenceGraph& graph);

/// CONNECTED, PARTIAL, DISCONNECTED or UNMAPPED.
std::string_view verdict(const ProjectionResult& p);

nlohmann::json projection_to_json(const ProjectionResult& p);
ProjectionResult projection_from_json(const nlohmann::json& j);

enum class ReportFormat { Json, Dot, Text };

/// Throws Error{UnknownFormat}.
ReportFormat parse_report_format(std::string_view name);
std::string_view file_extension(ReportFormat f);

std::string triage_report(std::span<const ProjectionResult> projections, std::span<const CandidateChain> candidates,
                          ReportFormat format, std::size_t top_k = 20);

} // namespace sbomchain
