#include "sbomchain/cascade_analysis.hpp"

#include "sbomchain/error.hpp"
#include "sbomchain/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace sbomchain {

using nlohmann::json;

std::vector<CandidateChain> compose_chains(std::span<const mlp::RankedPair> ranking, double tau, std::size_t max_length) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must lie in (0,1)");
    if (max_length < 2) throw Error(ErrorKind::InvalidArgument, "max chain length must be >= 2");

    std::map<std::pair<std::string, std::string>, double> links;
    for (const auto& r : ranking) {
        if (r.cve_a == r.cve_b || !(r.probability >= tau)) continue;
        auto key = canonical_pair(r.cve_a, r.cve_b);
        auto [it, fresh] = links.emplace(key, r.probability);
        if (!fresh) it->second = std::max(it->second, r.probability);
    }
    std::set<std::string> node_set;
    for (const auto& [k, _] : links) node_set.insert({k.first, k.second});
    const std::vector<std::string> nodes(node_set.begin(), node_set.end());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = i;
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(nodes.size());
    for (const auto& [k, s] : links) {
        const auto a = index[k.first], b = index[k.second];
        adj[a].emplace_back(b, s);
        adj[b].emplace_back(a, s);
    }
    for (auto& row : adj) std::sort(row.begin(), row.end());

    std::vector<CandidateChain> out;
    std::vector<std::size_t> path;
    std::vector<double> scores;
    std::vector<char> on_path(nodes.size(), 0);
    auto emit = [&] {
        if (path.size() < 2 || nodes[path.front()] > nodes[path.back()]) return;
        CandidateChain c;
        for (auto v : path) c.cve_ids.push_back(nodes[v]);
        c.link_scores = scores;
        double log_sum = 0.0;
        for (double s : scores) log_sum += std::log(s);
        c.chain_score = std::exp(log_sum / static_cast<double>(scores.size()));
        out.push_back(std::move(c));
    };
    auto extend = [&](auto&& self, std::size_t v) -> void {
        emit();
        if (path.size() == max_length) return;
        for (const auto& [w, s] : adj[v]) {
            if (on_path[w]) continue;
            on_path[w] = 1;
            path.push_back(w);
            scores.push_back(s);
            self(self, w);
            path.pop_back();
            scores.pop_back();
            on_path[w] = 0;
        }
    };
    for (std::size_t v = 0; v < nodes.size(); ++v) {
        on_path[v] = 1;
        path.push_back(v);
        extend(extend, v);
        path.pop_back();
        on_path[v] = 0;
    }
    std::sort(out.begin(), out.end(), [](const CandidateChain& x, const CandidateChain& y) {
        if (x.chain_score != y.chain_score) return x.chain_score > y.chain_score;
        return x.cve_ids < y.cve_ids;
    });
    return out;
}

json chains_to_json(std::span<const CandidateChain> chains, double tau, std::size_t max_length) {
    json arr = json::array();
    for (const auto& c : chains) {
        arr.push_back({{"cve_ids", c.cve_ids}, {"link_scores", c.link_scores}, {"chain_score", c.chain_score}});
    }
    return {{"tau", tau}, {"max_length", max_length}, {"count", chains.size()}, {"chains", arr}};
}

std::vector<CandidateChain> chains_from_json(const json& j) {
    std::vector<CandidateChain> out;
    try {
        for (const auto& c : j.at("chains")) {
            out.push_back({c.at("cve_ids").get<std::vector<std::string>>(),
                           c.at("link_scores").get<std::vector<double>>(), c.at("chain_score").get<double>()});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedDocument, std::string("chains file: ") + e.what());
    }
    return out;
}

ProjectionResult project_chain(const std::string& chain_id, const std::vector<std::string>& chain,
                               const EvidenceGraph& graph) {
    ProjectionResult r;
    r.chain_id = chain_id;
    r.graph_id = graph.graph_id;
    r.chain = chain;
    const auto& comps = graph.node_ids[static_cast<std::size_t>(NodeType::Component)];
    const auto& cves = graph.node_ids[static_cast<std::size_t>(NodeType::Cve)];
    std::map<std::size_t, std::set<std::size_t>> by_cve;
    for (const auto& e : graph.edges_of(Relation::HasVulnerability)) by_cve[e.dst].insert(e.src);

    std::set<std::size_t> members;
    for (const auto& id : chain) {
        const auto it = std::find(cves.begin(), cves.end(), id);
        const auto hit = it == cves.end() ? by_cve.end() : by_cve.find(static_cast<std::size_t>(it - cves.begin()));
        if (hit == by_cve.end()) {
            r.unmapped_cves.push_back(id);
            continue;
        }
        auto& list = r.mapped[id];
        for (auto c : hit->second) {
            list.push_back(comps[c]);
            members.insert(c);
        }
    }
    r.fully_mapped = r.unmapped_cves.empty();
    for (auto c : members) r.induced_nodes.push_back(comps[c]);

    std::vector<std::size_t> parent(comps.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : graph.edges_of(Relation::DependsOn)) {
        if (!members.contains(e.src) || !members.contains(e.dst) || !seen.insert({e.src, e.dst}).second) continue;
        r.induced_edges.emplace_back(comps[e.src], comps[e.dst]);
        parent[find(e.src)] = find(e.dst);
    }
    std::set<std::size_t> roots;
    for (auto c : members) roots.insert(find(c));
    r.connectivity = roots.size();
    return r;
}

std::string_view verdict(const ProjectionResult& p) {
    if (p.induced_nodes.empty()) return "UNMAPPED";
    if (p.connectivity > 1) return "DISCONNECTED";
    return p.fully_mapped ? "CONNECTED" : "PARTIAL";
}

json projection_to_json(const ProjectionResult& p) {
    json edges = json::array();
    for (const auto& [s, d] : p.induced_edges) edges.push_back({s, d});
    return {{"chain_id", p.chain_id},
            {"graph_id", p.graph_id},
            {"chain", p.chain},
            {"mapped", p.mapped},
            {"unmapped_cves", p.unmapped_cves},
            {"induced_nodes", p.induced_nodes},
            {"induced_edges", edges},
            {"connectivity", p.connectivity},
            {"fully_mapped", p.fully_mapped},
            {"verdict", std::string(verdict(p))}};
}

ProjectionResult projection_from_json(const json& j) {
    ProjectionResult p;
    try {
        p.chain_id = j.at("chain_id").get<std::string>();
        p.graph_id = j.at("graph_id").get<std::string>();
        p.chain = j.at("chain").get<std::vector<std::string>>();
        p.mapped = j.at("mapped").get<std::map<std::string, std::vector<std::string>>>();
        p.unmapped_cves = j.at("unmapped_cves").get<std::vector<std::string>>();
        p.induced_nodes = j.at("induced_nodes").get<std::vector<std::string>>();
        for (const auto& e : j.at("induced_edges")) {
            p.induced_edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
        }
        p.connectivity = j.at("connectivity").get<std::size_t>();
        p.fully_mapped = j.at("fully_mapped").get<bool>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedDocument, std::string("projection: ") + e.what());
    }
    return p;
}

ReportFormat parse_report_format(std::string_view name) {
    std::string low(name);
    std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
    if (low == "json") return ReportFormat::Json;
    if (low == "dot") return ReportFormat::Dot;
    if (low == "text" || low == "txt") return ReportFormat::Text;
    throw Error(ErrorKind::UnknownFormat, "unknown report format '" + std::string(name) + "'");
}

std::string_view file_extension(ReportFormat f) {
    switch (f) {
    case ReportFormat::Json: return "json";
    case ReportFormat::Dot: return "dot";
    case ReportFormat::Text: return "txt";
    }
    return "txt";
}

namespace {

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::string dot_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string scores_text(const std::vector<double>& scores) {
    std::vector<std::string> parts;
    for (double s : scores) parts.push_back(format_fixed(s, 4));
    return join(parts, " ");
}

std::string text_report(std::span<const ProjectionResult> projections, std::span<const CandidateChain> top,
                        std::size_t total_candidates) {
    std::ostringstream out;
    out << "chain triage report\n";
    out << "projections: " << projections.size() << "\n";
    out << "candidate chains: " << total_candidates << " (showing " << top.size() << ")\n";
    for (const auto& p : projections) {
        out << "\n== chain " << p.chain_id << " on " << p.graph_id << "\n";
        out << "cves: " << join(p.chain, " ") << "\n";
        out << "mapping:\n";
        for (const auto& id : p.chain) {
            const auto it = p.mapped.find(id);
            out << "  " << id << " -> " << (it == p.mapped.end() ? "(not in sbom)" : join(it->second, ", ")) << "\n";
        }
        out << "induced subgraph: " << p.induced_nodes.size() << " nodes, " << p.induced_edges.size() << " edges, "
            << p.connectivity << " weakly connected\n";
        for (const auto& [s, d] : p.induced_edges) out << "  " << s << " -> " << d << "\n";
        out << "verdict: " << verdict(p) << "\n";
    }
    out << "\n== top candidate chains\n";
    std::size_t rank = 1;
    for (const auto& c : top) {
        out << rank++ << ". " << join(c.cve_ids, " - ") << "  score " << format_fixed(c.chain_score, 4) << "  links "
            << scores_text(c.link_scores) << "\n";
    }
    return out.str();
}

std::string dot_report(std::span<const ProjectionResult> projections, std::span<const CandidateChain> top) {
    std::ostringstream out;
    out << "digraph triage {\n  rankdir=LR;\n  node [shape=box];\n";
    for (std::size_t i = 0; i < projections.size(); ++i) {
        const auto& p = projections[i];
        const std::string prefix = "p" + std::to_string(i) + ":";
        std::map<std::string, std::vector<std::string>> cves_of;
        for (const auto& [cve, comps] : p.mapped) {
            for (const auto& c : comps) cves_of[c].push_back(cve);
        }
        out << "  subgraph cluster_" << i << " {\n";
        out << "    label=" << dot_quote(p.chain_id + " @ " + p.graph_id + " : " + std::string(verdict(p))) << ";\n";
        for (const auto& n : p.induced_nodes) {
            out << "    " << dot_quote(prefix + n) << " [label=" << dot_quote(n + "\\n" + join(cves_of[n], "\\n"))
                << "];\n";
        }
        for (const auto& [s, d] : p.induced_edges) {
            std::set<std::string> annot(cves_of[s].begin(), cves_of[s].end());
            annot.insert(cves_of[d].begin(), cves_of[d].end());
            out << "    " << dot_quote(prefix + s) << " -> " << dot_quote(prefix + d)
                << " [label=" << dot_quote(join({annot.begin(), annot.end()}, ",")) << "];\n";
        }
        out << "  }\n";
    }
    std::size_t rank = 1;
    for (const auto& c : top) {
        out << "  // candidate " << rank++ << ": " << join(c.cve_ids, " - ") << " score "
            << format_fixed(c.chain_score, 4) << "\n";
    }
    out << "}\n";
    return out.str();
}

} // namespace

std::string triage_report(std::span<const ProjectionResult> projections, std::span<const CandidateChain> candidates,
                          ReportFormat format, std::size_t top_k) {
    const auto top = candidates.first(std::min(top_k, candidates.size()));
    switch (format) {
    case ReportFormat::Text: return text_report(projections, top, candidates.size());
    case ReportFormat::Dot: return dot_report(projections, top);
    case ReportFormat::Json: {
        json proj = json::array();
        std::map<std::string, std::size_t> verdicts;
        for (const auto& p : projections) {
            proj.push_back(projection_to_json(p));
            ++verdicts[std::string(verdict(p))];
        }
        json cands = json::array();
        for (const auto& c : top) {
            cands.push_back({{"cve_ids", c.cve_ids}, {"link_scores", c.link_scores}, {"chain_score", c.chain_score}});
        }
        json j = {{"projections", proj},
                  {"verdicts", verdicts},
                  {"candidate_count", candidates.size()},
                  {"top_k", top_k},
                  {"top_candidates", cands}};
        return j.dump(2) + "\n";
    }
    }
    return {};
}

} // namespace sbomchain
