#pragma once

#include "sbomchain/chain_corpus.hpp"
#include "sbomchain/evidence_graph.hpp"
#include "sbomchain/nvd_store.hpp"
#include "sbomchain/sbom.hpp"

#include <json.hpp>

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sbomchain {

/// Planted labelling rules.
/// VULN_VIA_DEP: positive iff some direct dependency is in the vulnerable seed set.
/// IS_DIRECT: positive iff the component is a root or a direct dependency of one.
inline constexpr std::string_view kRuleVulnViaDep = "VULN_VIA_DEP";
inline constexpr std::string_view kRuleIsDirect = "IS_DIRECT";

struct SynthSpec {
    std::size_t graph_count = 80;
    std::size_t min_components = 8;
    std::size_t max_components = 16;
    /// Probability of each forward edge i -> j (i < j) in the random DAG.
    double density = 0.25;
    double seed_fraction = 0.15;
    std::string rule{kRuleVulnViaDep};
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static SynthSpec from_json(const nlohmann::json& j);
    /// Throws Error{InvalidArgument}.
    void validate() const;
};

struct SynthCorpus {
    std::vector<EnrichedSbom> sboms;
    MetaStore store;
    std::vector<EvidenceGraph> graphs;
    /// Seed component ids per graph.
    std::vector<std::set<std::string>> seeds;
    nlohmann::json manifest;
};

/// Labels for `sbom` under `rule`. Throws Error{InvalidArgument} for unknown rules.
std::vector<int> apply_rule(std::string_view rule, const EnrichedSbom& sbom, const std::set<std::string>& seeds);

/// Graphs use STRICT features, keep HAS_VULNERABILITY edges, and carry the
/// rule's labels with label_source set to the rule id.
SynthCorpus generate_synth_corpus(const SynthSpec& spec);

struct SynthChainSpec {
    std::size_t chains = 60;
    std::size_t min_length = 2;
    std::size_t max_length = 4;
    std::uint64_t seed = 11;
};

struct SynthChainCorpus {
    std::vector<ChainRecord> chains;
    std::vector<CveMeta> records;
};

/// Every chain gets its own (cvss, published year) combination shared by all
/// its CVEs, so within-chain pairs are exactly those with zero CVSS
/// difference and zero year gap. Exploited flag, references and CWE counts
/// are noise.
SynthChainCorpus generate_synth_chain_corpus(const SynthChainSpec& spec);

} // namespace sbomchain
