#include "sbomchain/synth.hpp"

#include "sbomchain/error.hpp"
#include "sbomchain/util.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace sbomchain {

using nlohmann::json;

json SynthSpec::to_json() const {
    return {{"graph_count", graph_count},     {"min_components", min_components},
            {"max_components", max_components}, {"density", density},
            {"seed_fraction", seed_fraction}, {"rule", rule},
            {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const json& j) {
    SynthSpec s;
    try {
        s.graph_count = j.value("graph_count", s.graph_count);
        s.min_components = j.value("min_components", s.min_components);
        s.max_components = j.value("max_components", s.max_components);
        s.density = j.value("density", s.density);
        s.seed_fraction = j.value("seed_fraction", s.seed_fraction);
        s.rule = j.value("rule", s.rule);
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("synth spec: ") + e.what());
    }
    s.validate();
    return s;
}

void SynthSpec::validate() const {
    if (graph_count == 0 || min_components < 2 || max_components < min_components) {
        throw Error(ErrorKind::InvalidArgument, "synth spec: need graphs >= 1 and 2 <= min_components <= max_components");
    }
    if (!(density >= 0.0 && density < 1.0) || !(seed_fraction > 0.0 && seed_fraction < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "synth spec: density in [0,1), seed_fraction in (0,1)");
    }
    if (rule != kRuleVulnViaDep && rule != kRuleIsDirect) {
        throw Error(ErrorKind::InvalidArgument, "synth spec: unknown rule " + rule);
    }
}

std::vector<int> apply_rule(std::string_view rule, const EnrichedSbom& sbom, const std::set<std::string>& seeds) {
    std::vector<int> labels(sbom.components.size(), 0);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < sbom.components.size(); ++i) index[sbom.components[i].component_id] = i;
    if (rule == kRuleVulnViaDep) {
        for (const auto& d : sbom.dependencies) {
            if (seeds.contains(d.to_id)) labels[index.at(d.from_id)] = 1;
        }
    } else if (rule == kRuleIsDirect) {
        const auto kinds = direct_dependency_set(sbom);
        for (std::size_t i = 0; i < sbom.components.size(); ++i) {
            labels[i] = kinds.at(sbom.components[i].component_id) == DependencyKind::Direct ? 1 : 0;
        }
    } else {
        throw Error(ErrorKind::InvalidArgument, "unknown rule " + std::string(rule));
    }
    return labels;
}

namespace {

const std::vector<std::string> kLicenses{"MIT", "Apache-2.0", "BSD-3-Clause", "GPL-3.0-only"};

Severity severity_for(double cvss) {
    if (cvss >= 9.0) return Severity::Critical;
    if (cvss >= 7.0) return Severity::High;
    if (cvss >= 4.0) return Severity::Medium;
    return Severity::Low;
}

std::string synth_cve_id(int year, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "CVE-%04d-9%04zu", year, n);
    return buf;
}

} // namespace

SynthCorpus generate_synth_corpus(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SynthCorpus corpus;

    // shared CVE pool
    std::vector<CveMeta> pool;
    const std::size_t pool_size = 40;
    for (std::size_t i = 0; i < pool_size; ++i) {
        CveMeta m;
        m.published_year = 2010 + static_cast<int>(rng.below(15));
        m.cve_id = synth_cve_id(m.published_year, i);
        m.cvss_base = static_cast<double>(20 + rng.below(81)) / 10.0;
        m.severity = severity_for(m.cvss_base);
        m.exploited = rng.bernoulli(0.1);
        m.reference_count = static_cast<int>(rng.below(30));
        m.cwe_ids = {"CWE-" + std::to_string(20 + rng.below(6) * 100)};
        m.cwe_count = 1;
        pool.push_back(m);
    }
    corpus.store = MetaStore::from_records(pool);

    json graphs_meta = json::array();
    std::string digest_input;
    const FeatureSpec features = FeatureSpec::standard(LeakagePolicy::Strict);
    for (std::size_t g = 0; g < spec.graph_count; ++g) {
        EnrichedSbom sbom;
        char gid[32];
        std::snprintf(gid, sizeof gid, "synth-%04zu", g);
        sbom.sbom_id = gid;
        sbom.spec_version = "1.5";
        const std::size_t n = spec.min_components + rng.below(spec.max_components - spec.min_components + 1);
        for (std::size_t i = 0; i < n; ++i) {
            ComponentRecord c;
            c.name = "pkg" + std::to_string(i);
            c.version = "1." + std::to_string(rng.below(10));
            c.component_id = sbom.sbom_id + "/" + c.name;
            if (rng.bernoulli(0.8)) c.licenses.push_back(kLicenses[rng.below(kLicenses.size())]);
            sbom.components.push_back(std::move(c));
        }
        std::vector<char> has_parent(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (rng.bernoulli(spec.density)) {
                    sbom.dependencies.push_back({sbom.components[i].component_id, sbom.components[j].component_id});
                    has_parent[j] = 1;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!has_parent[i]) sbom.root_ids.push_back(sbom.components[i].component_id);
        }

        const auto seed_count =
            std::max<std::size_t>(1, static_cast<std::size_t>(spec.seed_fraction * static_cast<double>(n) + 0.5));
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);
        std::set<std::string> seeds;
        for (std::size_t k = 0; k < seed_count; ++k) {
            const auto& comp = sbom.components[order[k]];
            seeds.insert(comp.component_id);
            const std::size_t findings = 1 + rng.below(3);
            std::set<std::size_t> picked;
            while (picked.size() < findings) picked.insert(rng.below(pool_size));
            for (auto p : picked) {
                VulnFinding f;
                f.component_id = comp.component_id;
                f.cve_id = pool[p].cve_id;
                sbom.findings.push_back(std::move(f));
            }
        }

        EvidenceGraph graph = build_graph(sbom, corpus.store, features);
        graph.labels = apply_rule(spec.rule, sbom, seeds);
        graph.label_source = spec.rule;
        const std::string exported = export_graph(graph, GraphFormat::Json);
        digest_input += sha256_hex(exported);
        graphs_meta.push_back({{"graph_id", graph.graph_id},
                               {"components", n},
                               {"dependency_edges", sbom.dependencies.size()},
                               {"seeds", seeds.size()},
                               {"positives", graph.positive_count()},
                               {"negatives", n - graph.positive_count()}});
        corpus.sboms.push_back(std::move(sbom));
        corpus.graphs.push_back(std::move(graph));
        corpus.seeds.push_back(std::move(seeds));
    }

    std::size_t pos = 0, total = 0;
    for (const auto& g : corpus.graphs) {
        pos += g.positive_count();
        total += g.labels.size();
    }
    corpus.manifest = {{"rule", spec.rule},
                       {"seed", spec.seed},
                       {"spec", spec.to_json()},
                       {"leakage_policy", std::string(to_string(LeakagePolicy::Strict))},
                       {"components", total},
                       {"positives", pos},
                       {"graphs", graphs_meta},
                       {"digest", sha256_hex(digest_input)}};
    return corpus;
}

SynthChainCorpus generate_synth_chain_corpus(const SynthChainSpec& spec) {
    if (spec.chains == 0 || spec.min_length < 2 || spec.max_length < spec.min_length) {
        throw Error(ErrorKind::InvalidArgument, "synthetic chain spec: need chains >= 1 and 2 <= min <= max length");
    }
    Rng rng(spec.seed);
    std::vector<std::pair<int, int>> combos;  // (cvss tenths, year)
    for (int c = 5; c <= 100; c += 5) {
        for (int y = 2005; y <= 2024; ++y) combos.emplace_back(c, y);
    }
    if (spec.chains > combos.size()) throw Error(ErrorKind::InvalidArgument, "too many synthetic chains");
    rng.shuffle(combos);

    SynthChainCorpus out;
    std::size_t serial = 0;
    for (std::size_t k = 0; k < spec.chains; ++k) {
        const auto [tenths, year] = combos[k];
        ChainRecord chain;
        char cid[32];
        std::snprintf(cid, sizeof cid, "synth-chain-%03zu", k);
        chain.chain_id = cid;
        chain.source_type = rng.bernoulli(0.75) ? SourceType::Disclosure : SourceType::Incident;
        chain.reference = "synthetic";
        chain.year = year;
        const std::size_t len = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
        for (std::size_t i = 0; i < len; ++i) {
            CveMeta m;
            m.cve_id = synth_cve_id(year, serial++);
            m.cvss_base = tenths / 10.0;
            m.severity = severity_for(m.cvss_base);
            m.published_year = year;
            m.exploited = rng.bernoulli(0.5);
            m.reference_count = static_cast<int>(rng.below(60));
            const std::size_t cwes = rng.below(3);
            for (std::size_t c = 0; c < cwes; ++c) m.cwe_ids.push_back("CWE-" + std::to_string(100 + c * 100 + rng.below(50)));
            std::sort(m.cwe_ids.begin(), m.cwe_ids.end());
            m.cwe_ids.erase(std::unique(m.cwe_ids.begin(), m.cwe_ids.end()), m.cwe_ids.end());
            m.cwe_count = static_cast<int>(m.cwe_ids.size());
            chain.cve_ids.push_back(m.cve_id);
            out.records.push_back(std::move(m));
        }
        out.chains.push_back(std::move(chain));
    }
    return out;
}

} // namespace sbomchain
