#pragma once

// Independent reference implementations used by unit and acceptance tests.

#include "sbomchain/cascade_analysis.hpp"
#include "sbomchain/cascade_predictor.hpp"
#include "sbomchain/evidence_graph.hpp"
#include "sbomchain/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline double auc(const std::vector<double>& s, const std::vector<int>& y) {
    double credit = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] != 1 || y[j] != 0) continue;
            pairs += 1.0;
            credit += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    return credit / pairs;
}

/// Every ordered sequence of distinct CVEs of length 2..max_length whose
/// consecutive links all score >= tau, one direction per path, with its
/// geometric-mean score.
inline std::vector<std::pair<std::vector<std::string>, double>> chains(
    const std::vector<sbomchain::mlp::RankedPair>& links, double tau, std::size_t max_length) {
    std::map<std::pair<std::string, std::string>, double> score;
    std::set<std::string> nodes;
    for (const auto& l : links) {
        auto key = std::minmax(l.cve_a, l.cve_b);
        auto& s = score[{key.first, key.second}];
        s = std::max(s, l.probability);
        nodes.insert(l.cve_a);
        nodes.insert(l.cve_b);
    }
    const std::vector<std::string> ids(nodes.begin(), nodes.end());
    std::vector<std::pair<std::vector<std::string>, double>> out;
    std::vector<std::string> seq;
    std::function<void()> extend = [&] {
        if (seq.size() >= 2 && seq.front() < seq.back()) {
            double log_sum = 0.0;
            for (std::size_t i = 1; i < seq.size(); ++i) {
                auto key = std::minmax(seq[i - 1], seq[i]);
                log_sum += std::log(score.at({key.first, key.second}));
            }
            out.emplace_back(seq, std::exp(log_sum / static_cast<double>(seq.size() - 1)));
        }
        if (seq.size() == max_length) return;
        for (const auto& next : ids) {
            if (std::find(seq.begin(), seq.end(), next) != seq.end()) continue;
            if (!seq.empty()) {
                auto key = std::minmax(seq.back(), next);
                auto it = score.find({key.first, key.second});
                if (it == score.end() || it->second < tau) continue;
            }
            seq.push_back(next);
            extend();
            seq.pop_back();
        }
    };
    extend();
    return out;
}

/// Empty when `compose_chains` output matches the enumeration, else a description.
inline std::string compare_chains(const std::vector<sbomchain::CandidateChain>& got,
                                  const std::vector<std::pair<std::vector<std::string>, double>>& want) {
    std::map<std::vector<std::string>, double> expected(want.begin(), want.end());
    if (got.size() != want.size()) {
        return "count " + std::to_string(got.size()) + " vs " + std::to_string(want.size());
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
        auto it = expected.find(got[i].cve_ids);
        if (it == expected.end()) return "unexpected chain";
        if (std::abs(it->second - got[i].chain_score) > 1e-12) return "score mismatch";
        if (got[i].link_scores.size() + 1 != got[i].cve_ids.size()) return "link score count";
        if (i > 0 && got[i - 1].chain_score < got[i].chain_score) return "not sorted by score";
    }
    return {};
}

/// Random undirected link list over `n` CVEs.
inline std::vector<sbomchain::mlp::RankedPair> random_links(sbomchain::Rng& rng, std::size_t n, double density) {
    std::vector<sbomchain::mlp::RankedPair> links;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!rng.bernoulli(density)) continue;
            char a[24], b[24];
            std::snprintf(a, sizeof a, "CVE-2020-%04zu", 1000 + i);
            std::snprintf(b, sizeof b, "CVE-2020-%04zu", 1000 + j);
            const double p = std::round(rng.uniform(0.01, 0.99) * 100.0) / 100.0;
            if (rng.bernoulli(0.5)) links.push_back({a, b, p});
            else links.push_back({b, a, p});
        }
    }
    return links;
}

/// Checks a projection against the graph it came from. Empty string when sound.
inline std::string check_projection(const sbomchain::ProjectionResult& p, const std::vector<std::string>& chain,
                                    const sbomchain::EvidenceGraph& g) {
    using namespace sbomchain;
    const auto& comp = g.node_ids[0];
    const auto& cves = g.node_ids[1];
    std::map<std::string, std::set<std::string>> hosts;
    for (const auto& e : g.edges_of(Relation::HasVulnerability)) hosts[cves[e.dst]].insert(comp[e.src]);

    std::set<std::string> expected_nodes;
    std::vector<std::string> expected_unmapped;
    for (const auto& cve : chain) {
        auto it = hosts.find(cve);
        if (it == hosts.end()) {
            expected_unmapped.push_back(cve);
            if (p.mapped.contains(cve)) return "unmapped cve listed as mapped: " + cve;
            continue;
        }
        auto m = p.mapped.find(cve);
        if (m == p.mapped.end()) return "mapped cve missing: " + cve;
        if (std::set<std::string>(m->second.begin(), m->second.end()) != it->second) return "wrong hosts for " + cve;
        expected_nodes.insert(it->second.begin(), it->second.end());
    }
    if (p.chain != chain) return "chain not preserved";
    if (std::set<std::string>(p.unmapped_cves.begin(), p.unmapped_cves.end()) !=
        std::set<std::string>(expected_unmapped.begin(), expected_unmapped.end())) {
        return "unmapped set differs";
    }
    if (std::set<std::string>(p.induced_nodes.begin(), p.induced_nodes.end()) != expected_nodes ||
        p.induced_nodes.size() != expected_nodes.size()) {
        return "induced nodes differ";
    }
    std::set<std::pair<std::string, std::string>> expected_edges;
    for (const auto& e : g.edges_of(Relation::DependsOn)) {
        if (expected_nodes.contains(comp[e.src]) && expected_nodes.contains(comp[e.dst])) {
            expected_edges.emplace(comp[e.src], comp[e.dst]);
        }
    }
    if (std::set<std::pair<std::string, std::string>>(p.induced_edges.begin(), p.induced_edges.end()) != expected_edges ||
        p.induced_edges.size() != expected_edges.size()) {
        return "induced edges differ";
    }
    // weakly connected components by repeated flooding
    std::set<std::string> unseen = expected_nodes;
    std::size_t components = 0;
    while (!unseen.empty()) {
        ++components;
        std::vector<std::string> stack{*unseen.begin()};
        unseen.erase(unseen.begin());
        while (!stack.empty()) {
            const std::string cur = stack.back();
            stack.pop_back();
            for (const auto& [a, b] : expected_edges) {
                const std::string* other = a == cur ? &b : b == cur ? &a : nullptr;
                if (other && unseen.erase(*other)) stack.push_back(*other);
            }
        }
    }
    if (p.connectivity != components) return "connectivity " + std::to_string(p.connectivity) + " vs " + std::to_string(components);
    if (p.fully_mapped != expected_unmapped.empty()) return "fully_mapped flag";
    if (p.induced_nodes.empty() && p.fully_mapped) return "empty projection marked fully mapped";
    return {};
}

} // namespace oracle
