#include "sbomchain/evidence_graph.hpp"

#include "sbomchain/error.hpp"
#include "sbomchain/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace sbomchain {

using nlohmann::json;

std::string_view to_string(NodeType t) {
    switch (t) {
    case NodeType::Component: return "component";
    case NodeType::Cve: return "cve";
    case NodeType::Cwe: return "cwe";
    }
    return "component";
}

std::string_view to_string(Relation r) {
    switch (r) {
    case Relation::DependsOn: return "DEPENDS_ON";
    case Relation::HasVulnerability: return "HAS_VULNERABILITY";
    case Relation::HasCwe: return "HAS_CWE";
    }
    return "DEPENDS_ON";
}

Relation parse_relation(std::string_view name) {
    for (Relation r : kRelations) {
        if (to_string(r) == name) return r;
    }
    throw Error(ErrorKind::UnknownRelation, std::string(name));
}

NodeType source_type(Relation r) {
    switch (r) {
    case Relation::DependsOn: return NodeType::Component;
    case Relation::HasVulnerability: return NodeType::Component;
    case Relation::HasCwe: return NodeType::Cve;
    }
    return NodeType::Component;
}

NodeType target_type(Relation r) {
    switch (r) {
    case Relation::DependsOn: return NodeType::Component;
    case Relation::HasVulnerability: return NodeType::Cve;
    case Relation::HasCwe: return NodeType::Cwe;
    }
    return NodeType::Component;
}

std::string_view to_string(LeakagePolicy p) {
    return p == LeakagePolicy::Strict ? "STRICT" : "PAPER_LITERAL";
}

LeakagePolicy parse_leakage_policy(std::string_view name) {
    if (name == "STRICT") return LeakagePolicy::Strict;
    if (name == "PAPER_LITERAL") return LeakagePolicy::PaperLiteral;
    throw Error(ErrorKind::InvalidArgument, "unknown leakage policy " + std::string(name));
}

FeatureSpec FeatureSpec::standard(LeakagePolicy policy) {
    FeatureSpec spec;
    spec.leakage_policy = policy;
    const auto z = NormMode::ZScore;
    const auto id = NormMode::Identity;
    spec.columns[0] = {{"cvss_max", z},       {"cvss_mean", z},     {"cve_count", z},   {"max_sev_low", id},
                       {"max_sev_medium", id}, {"max_sev_high", id}, {"max_sev_critical", id}, {"is_direct", id},
                       {"out_degree", z},     {"in_degree", z},     {"license_known", id}, {"license_count", z}};
    spec.columns[1] = {{"cvss_base", z}, {"cvss_bin_0_4", id}, {"cvss_bin_4_7", id}, {"cvss_bin_7_9", id},
                       {"cvss_bin_9_10", id}, {"recency", id}, {"exploited", id}};
    spec.columns[2] = {{"mapped_cve_share", id}};
    return spec;
}

void FeatureMatrix::append_row(std::span<const double> row) {
    if (row.size() != cols) throw Error(ErrorKind::ShapeMismatch, "feature row width");
    values.insert(values.end(), row.begin(), row.end());
}

std::size_t EvidenceGraph::positive_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

namespace {

int severity_rank(Severity s) {
    switch (s) {
    case Severity::Low: return 1;
    case Severity::Medium: return 2;
    case Severity::High: return 3;
    case Severity::Critical: return 4;
    case Severity::Unknown: return 0;
    }
    return 0;
}

std::size_t index_of(const std::vector<std::string>& ids, std::string_view id) {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    return static_cast<std::size_t>(it - ids.begin());
}

double recency(int year) {
    return std::clamp((static_cast<double>(year) - 2000.0) / 30.0, 0.0, 1.0);
}

} // namespace

MetaStore effective_store(const EnrichedSbom& sbom, const MetaStore& store) {
    std::map<std::string, CveMeta> merged;
    for (const auto& f : sbom.findings) {
        if (merged.contains(f.cve_id)) {
            auto& m = merged[f.cve_id];
            if (!store.contains(f.cve_id)) {
                if (f.cvss_hint && *f.cvss_hint > m.cvss_base) {
                    m.cvss_base = *f.cvss_hint;
                    if (f.severity_hint) m.severity = parse_severity(*f.severity_hint);
                }
                for (const auto& c : f.cwe_ids) {
                    if (std::find(m.cwe_ids.begin(), m.cwe_ids.end(), c) == m.cwe_ids.end()) m.cwe_ids.push_back(c);
                }
            }
            continue;
        }
        if (auto known = store.lookup(f.cve_id)) {
            merged[f.cve_id] = *known;
            continue;
        }
        CveMeta m;
        m.cve_id = f.cve_id;
        m.cvss_base = f.cvss_hint.value_or(0.0);
        m.severity = f.severity_hint ? parse_severity(*f.severity_hint) : Severity::Unknown;
        m.cwe_ids = f.cwe_ids;
        merged[f.cve_id] = m;
    }
    std::vector<CveMeta> records;
    for (auto& [id, m] : merged) records.push_back(std::move(m));
    return MetaStore::from_records(std::move(records));
}

EvidenceGraph build_graph(const EnrichedSbom& sbom, const MetaStore& store, const FeatureSpec& spec) {
    const MetaStore meta = effective_store(sbom, store);

    EvidenceGraph g;
    g.graph_id = sbom.sbom_id;
    g.leakage_policy = spec.leakage_policy;

    auto& comp_ids = g.node_ids[0];
    std::unordered_map<std::string, std::size_t> comp_index;
    for (const auto& c : sbom.components) {
        comp_index.emplace(c.component_id, comp_ids.size());
        comp_ids.push_back(c.component_id);
        g.component_names.push_back(c.version.empty() ? c.name : c.name + "@" + c.version);
    }

    std::set<std::string> cve_set;
    for (const auto& f : sbom.findings) cve_set.insert(f.cve_id);
    g.node_ids[1].assign(cve_set.begin(), cve_set.end());

    std::set<std::string> cwe_set;
    for (const auto& cve : g.node_ids[1]) {
        const auto record = meta.lookup(cve);
        cwe_set.insert(record->cwe_ids.begin(), record->cwe_ids.end());
    }
    g.node_ids[2].assign(cwe_set.begin(), cwe_set.end());

    for (const auto& d : sbom.dependencies) {
        g.edges_of(Relation::DependsOn).push_back({comp_index.at(d.from_id), comp_index.at(d.to_id)});
    }
    auto& vuln_edges = g.edges_of(Relation::HasVulnerability);
    for (const auto& f : sbom.findings) {
        vuln_edges.push_back({comp_index.at(f.component_id), index_of(g.node_ids[1], f.cve_id)});
    }
    std::sort(vuln_edges.begin(), vuln_edges.end());
    vuln_edges.erase(std::unique(vuln_edges.begin(), vuln_edges.end()), vuln_edges.end());

    auto& cwe_edges = g.edges_of(Relation::HasCwe);
    for (std::size_t i = 0; i < g.node_ids[1].size(); ++i) {
        const auto record = meta.lookup(g.node_ids[1][i]);
        for (const auto& cwe : record->cwe_ids) {
            cwe_edges.push_back({i, index_of(g.node_ids[2], cwe)});
        }
    }
    std::sort(cwe_edges.begin(), cwe_edges.end());

    g.labels.assign(comp_ids.size(), 0);
    for (const auto& e : vuln_edges) g.labels[e.src] = 1;

    g.features[0] = component_features(sbom, meta, g, spec);
    g.features[1] = cve_features(meta, g);
    g.features[2] = cwe_features(g);
    return g;
}

FeatureMatrix component_features(const EnrichedSbom& sbom, const MetaStore& store, const EvidenceGraph& graph,
                                 const FeatureSpec& spec) {
    const std::size_t n = graph.node_count(NodeType::Component);
    FeatureMatrix m{kComponentFeatureCount, std::vector<double>(n * kComponentFeatureCount, 0.0)};

    std::vector<std::vector<std::size_t>> cves_of(n);
    for (const auto& e : graph.edges_of(Relation::HasVulnerability)) cves_of[e.src].push_back(e.dst);
    std::vector<double> out_deg(n, 0.0), in_deg(n, 0.0);
    for (const auto& e : graph.edges_of(Relation::DependsOn)) {
        out_deg[e.src] += 1.0;
        in_deg[e.dst] += 1.0;
    }
    const auto kinds = direct_dependency_set(sbom);
    std::unordered_map<std::string, const ComponentRecord*> records;
    for (const auto& c : sbom.components) records.emplace(c.component_id, &c);

    for (std::size_t i = 0; i < n; ++i) {
        const std::string& id = graph.node_ids[0][i];
        if (spec.leakage_policy == LeakagePolicy::PaperLiteral && !cves_of[i].empty()) {
            double max_cvss = 0.0, sum = 0.0;
            Severity max_sev = Severity::Unknown;
            for (std::size_t c : cves_of[i]) {
                const auto meta = store.lookup(graph.node_ids[1][c]);
                const double score = meta ? meta->cvss_base : 0.0;
                const Severity sev = meta ? meta->severity : Severity::Unknown;
                max_cvss = std::max(max_cvss, score);
                sum += score;
                if (severity_rank(sev) > severity_rank(max_sev)) max_sev = sev;
            }
            m.at(i, 0) = max_cvss;
            m.at(i, 1) = sum / static_cast<double>(cves_of[i].size());
            m.at(i, 2) = static_cast<double>(cves_of[i].size());
            const auto hot = severity_one_hot(max_sev);
            for (std::size_t k = 0; k < 4; ++k) m.at(i, 3 + k) = hot[k];
        }
        // is_direct sits inside the masked block; the IS_DIRECT rule would leak through it otherwise
        auto kind = kinds.find(id);
        if (spec.leakage_policy == LeakagePolicy::PaperLiteral) {
            m.at(i, 7) = (kind != kinds.end() && kind->second == DependencyKind::Direct) ? 1.0 : 0.0;
        }
        m.at(i, 8) = out_deg[i];
        m.at(i, 9) = in_deg[i];
        auto rec = records.find(id);
        const std::size_t licenses = rec != records.end() ? rec->second->licenses.size() : 0;
        m.at(i, 10) = licenses > 0 ? 1.0 : 0.0;
        m.at(i, 11) = static_cast<double>(licenses);
    }
    return m;
}

FeatureMatrix cve_features(const MetaStore& store, const EvidenceGraph& graph) {
    FeatureMatrix m{kCveFeatureCount, {}};
    for (const auto& id : graph.node_ids[1]) {
        const CveMeta meta = store.lookup(id).value_or(CveMeta{});
        std::array<double, kCveFeatureCount> row{};
        row[0] = meta.cvss_base;
        const double s = meta.cvss_base;
        const std::size_t bin = s < 4.0 ? 0 : s < 7.0 ? 1 : s < 9.0 ? 2 : 3;
        row[1 + bin] = 1.0;
        row[5] = meta.published_year == 0 ? 0.0 : recency(meta.published_year);
        row[6] = meta.exploited ? 1.0 : 0.0;
        m.append_row(row);
    }
    return m;
}

FeatureMatrix cwe_features(const EvidenceGraph& graph) {
    FeatureMatrix m{kCweFeatureCount, {}};
    std::vector<std::set<std::size_t>> mapped(graph.node_count(NodeType::Cwe));
    for (const auto& e : graph.edges_of(Relation::HasCwe)) mapped[e.dst].insert(e.src);
    const double total = std::max<double>(1.0, static_cast<double>(graph.node_count(NodeType::Cve)));
    for (const auto& cves : mapped) {
        const double share = static_cast<double>(cves.size()) / total;
        m.append_row(std::span<const double>(&share, 1));
    }
    return m;
}

EvidenceGraph mask_edge_type(const EvidenceGraph& graph, Relation relation) {
    EvidenceGraph out = graph;
    out.edges_of(relation).clear();
    return out;
}

EvidenceGraph mask_edge_type(const EvidenceGraph& graph, std::string_view relation) {
    return mask_edge_type(graph, parse_relation(relation));
}

GraphFormat parse_graph_format(std::string_view name) {
    if (name == "DOT" || name == "dot") return GraphFormat::Dot;
    if (name == "JSON" || name == "json") return GraphFormat::Json;
    throw Error(ErrorKind::UnknownFormat, std::string(name));
}

namespace {

std::string dot_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

constexpr std::array<std::string_view, kNodeTypeCount> kDotPrefix{"comp:", "cve:", "cwe:"};

std::string export_dot(const EvidenceGraph& g) {
    std::ostringstream os;
    os << "digraph \"" << dot_escape(g.graph_id) << "\" {\n";
    for (NodeType t : kNodeTypes) {
        const auto ti = static_cast<std::size_t>(t);
        const char* shape = t == NodeType::Component ? "box" : t == NodeType::Cve ? "ellipse" : "diamond";
        for (std::size_t i = 0; i < g.node_ids[ti].size(); ++i) {
            std::string label = t == NodeType::Component && i < g.component_names.size() ? g.component_names[i]
                                                                                           : g.node_ids[ti][i];
            os << "  \"" << kDotPrefix[ti] << dot_escape(g.node_ids[ti][i]) << "\" [shape=" << shape << ", label=\""
               << dot_escape(label) << "\"";
            if (t == NodeType::Component && i < g.labels.size() && g.labels[i] == 1) os << ", color=red";
            os << "];\n";
        }
    }
    for (Relation r : kRelations) {
        const auto st = static_cast<std::size_t>(source_type(r));
        const auto dt = static_cast<std::size_t>(target_type(r));
        for (const auto& e : g.edges_of(r)) {
            os << "  \"" << kDotPrefix[st] << dot_escape(g.node_ids[st][e.src]) << "\" -> \"" << kDotPrefix[dt]
               << dot_escape(g.node_ids[dt][e.dst]) << "\" [label=\"" << to_string(r) << "\"];\n";
        }
    }
    os << "}\n";
    return os.str();
}

json matrix_to_json(const FeatureMatrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

std::string export_json(const EvidenceGraph& g) {
    const FeatureSpec spec = FeatureSpec::standard(g.leakage_policy);
    json j;
    j["graph_id"] = g.graph_id;
    j["leakage_policy"] = std::string(to_string(g.leakage_policy));
    j["label_source"] = g.label_source;
    j["component_names"] = g.component_names;
    j["labels"] = g.labels;
    for (NodeType t : kNodeTypes) {
        const auto ti = static_cast<std::size_t>(t);
        const std::string key(to_string(t));
        j["nodes"][key] = g.node_ids[ti];
        j["features"][key] = matrix_to_json(g.features[ti]);
        json cols = json::array();
        for (const auto& c : spec.columns[ti]) cols.push_back(c.name);
        j["feature_columns"][key] = cols;
    }
    for (Relation r : kRelations) {
        json list = json::array();
        for (const auto& e : g.edges_of(r)) list.push_back({e.src, e.dst});
        j["edges"][std::string(to_string(r))] = list;
    }
    return j.dump(1) + "\n";
}

} // namespace

std::string export_graph(const EvidenceGraph& graph, GraphFormat format) {
    return format == GraphFormat::Dot ? export_dot(graph) : export_json(graph);
}

std::string export_graph(const EvidenceGraph& graph, std::string_view format) {
    return export_graph(graph, parse_graph_format(format));
}

EvidenceGraph import_graph_json(std::string_view bytes) {
    EvidenceGraph g;
    try {
        const json j = json::parse(bytes.begin(), bytes.end());
        g.graph_id = j.at("graph_id").get<std::string>();
        g.leakage_policy = parse_leakage_policy(j.at("leakage_policy").get<std::string>());
        g.label_source = j.at("label_source").get<std::string>();
        g.component_names = j.at("component_names").get<std::vector<std::string>>();
        g.labels = j.at("labels").get<std::vector<int>>();
        for (NodeType t : kNodeTypes) {
            const auto ti = static_cast<std::size_t>(t);
            const std::string key(to_string(t));
            g.node_ids[ti] = j.at("nodes").at(key).get<std::vector<std::string>>();
            g.features[ti].cols = j.at("feature_columns").at(key).size();
            for (const auto& row : j.at("features").at(key)) {
                g.features[ti].append_row(row.get<std::vector<double>>());
            }
            if (g.features[ti].rows() != g.node_ids[ti].size()) {
                throw Error(ErrorKind::MalformedDocument, "feature row count differs from node count");
            }
        }
        for (Relation r : kRelations) {
            const std::size_t ns = g.node_count(source_type(r));
            const std::size_t nd = g.node_count(target_type(r));
            for (const auto& e : j.at("edges").at(std::string(to_string(r)))) {
                Edge edge{e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()};
                if (edge.src >= ns || edge.dst >= nd) throw Error(ErrorKind::MalformedDocument, "edge out of range");
                g.edges_of(r).push_back(edge);
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedDocument, std::string("graph json: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::MalformedDocument) throw;
        throw Error(ErrorKind::MalformedDocument, e.what());
    }
    if (g.labels.size() != g.node_count(NodeType::Component)) {
        throw Error(ErrorKind::MalformedDocument, "label count differs from component count");
    }
    return g;
}

EvidenceGraph disjoint_union(std::span<const EvidenceGraph* const> graphs) {
    EvidenceGraph out;
    if (graphs.empty()) return out;
    out.leakage_policy = graphs.front()->leakage_policy;
    out.label_source = graphs.front()->label_source;
    for (std::size_t t = 0; t < kNodeTypeCount; ++t) out.features[t].cols = graphs.front()->features[t].cols;
    for (const EvidenceGraph* g : graphs) {
        out.graph_id += (out.graph_id.empty() ? "" : "+") + g->graph_id;
        std::array<std::size_t, kNodeTypeCount> offset{};
        for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
            offset[t] = out.node_ids[t].size();
            out.node_ids[t].insert(out.node_ids[t].end(), g->node_ids[t].begin(), g->node_ids[t].end());
            if (g->features[t].cols != out.features[t].cols) {
                throw Error(ErrorKind::FeatureSpecMismatch, "feature widths differ across batch");
            }
            out.features[t].values.insert(out.features[t].values.end(), g->features[t].values.begin(),
                                          g->features[t].values.end());
        }
        for (Relation r : kRelations) {
            const std::size_t so = offset[static_cast<std::size_t>(source_type(r))];
            const std::size_t d_o = offset[static_cast<std::size_t>(target_type(r))];
            for (const auto& e : g->edges_of(r)) out.edges_of(r).push_back({e.src + so, e.dst + d_o});
        }
        out.component_names.insert(out.component_names.end(), g->component_names.begin(), g->component_names.end());
        out.labels.insert(out.labels.end(), g->labels.begin(), g->labels.end());
    }
    return out;
}

NormStats compute_norm_stats(std::span<const EvidenceGraph> graphs, const FeatureSpec& spec) {
    NormStats stats;
    for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
        const std::size_t w = spec.columns[t].size();
        std::vector<double> sum(w, 0.0), sq(w, 0.0);
        std::size_t rows = 0;
        for (const auto& g : graphs) {
            const auto& m = g.features[t];
            if (m.cols != w) throw Error(ErrorKind::FeatureSpecMismatch, "feature width differs from spec");
            for (std::size_t r = 0; r < m.rows(); ++r) {
                for (std::size_t c = 0; c < w; ++c) sum[c] += m.at(r, c);
            }
            rows += m.rows();
        }
        stats.mean[t].assign(w, 0.0);
        stats.stddev[t].assign(w, 1.0);
        if (rows == 0) continue;
        for (std::size_t c = 0; c < w; ++c) {
            if (spec.columns[t][c].mode == NormMode::ZScore) stats.mean[t][c] = sum[c] / static_cast<double>(rows);
        }
        for (const auto& g : graphs) {
            const auto& m = g.features[t];
            for (std::size_t r = 0; r < m.rows(); ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                    const double d = m.at(r, c) - stats.mean[t][c];
                    sq[c] += d * d;
                }
            }
        }
        for (std::size_t c = 0; c < w; ++c) {
            if (spec.columns[t][c].mode != NormMode::ZScore) continue;
            const double sd = std::sqrt(sq[c] / static_cast<double>(rows));
            if (sd > 1e-12) {
                stats.stddev[t][c] = sd;
            } else {
                // zero variance: pass through unchanged
                stats.mean[t][c] = 0.0;
                stats.stddev[t][c] = 1.0;
            }
        }
    }
    return stats;
}

EvidenceGraph normalize(const EvidenceGraph& graph, const NormStats& stats) {
    EvidenceGraph out = graph;
    for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
        auto& m = out.features[t];
        if (m.values.empty()) {
            m.cols = stats.mean[t].size();
            continue;
        }
        if (stats.mean[t].size() != m.cols) throw Error(ErrorKind::FeatureSpecMismatch, "norm stats width");
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t c = 0; c < m.cols; ++c) {
                m.at(r, c) = (m.at(r, c) - stats.mean[t][c]) / stats.stddev[t][c];
            }
        }
    }
    return out;
}

} // namespace sbomchain
