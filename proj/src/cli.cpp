#include "sbomchain/cli.hpp"

#include "sbomchain/cascade_analysis.hpp"
#include "sbomchain/chain_corpus.hpp"
#include "sbomchain/error.hpp"
#include "sbomchain/evidence_graph.hpp"
#include "sbomchain/nvd_store.hpp"
#include "sbomchain/sbom.hpp"
#include "sbomchain/synth.hpp"
#include "sbomchain/util.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <map>
#include <ostream>
#include <set>

namespace sbomchain::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json RunConfig::to_json() const {
    return {{"sbom_dir", sbom_dir},
            {"snapshots", snapshots},
            {"kev", kev},
            {"chains", chains},
            {"out_dir", out_dir},
            {"hgat", hgat.to_json()},
            {"mlp", mlp.to_json()},
            {"split", {{"train", split.train}, {"val", split.val}, {"test", split.test}, {"strategy", split_strategy}}},
            {"negative_ratio", negative_ratio},
            {"tau", tau},
            {"max_length", max_length},
            {"top_k", top_k},
            {"seed", seed},
            {"leakage_policy", leakage_policy}};
}

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || base.empty()) return p;
    return (base / p).lexically_normal().string();
}

} // namespace

void RunConfig::merge_json(const json& j, const fs::path& base) {
    static const std::set<std::string> known{"sbom_dir", "snapshots", "kev",  "chains",  "out_dir",
                                             "hgat",     "mlp",       "split", "negative_ratio", "tau",
                                             "max_length", "top_k",   "seed",  "leakage_policy"};
    if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
    for (const auto& [k, _] : j.items()) {
        if (!known.contains(k)) throw Error(ErrorKind::InvalidArgument, "unknown config key '" + k + "'");
    }
    try {
        if (j.contains("sbom_dir")) sbom_dir = resolve(base, j["sbom_dir"].get<std::string>());
        if (j.contains("snapshots")) {
            snapshots.clear();
            for (const auto& s : j["snapshots"]) snapshots.push_back(resolve(base, s.get<std::string>()));
        }
        if (j.contains("kev")) kev = resolve(base, j["kev"].get<std::string>());
        if (j.contains("chains")) chains = resolve(base, j["chains"].get<std::string>());
        if (j.contains("out_dir")) out_dir = resolve(base, j["out_dir"].get<std::string>());
        if (j.contains("hgat")) {
            json merged = hgat.to_json();
            merged.update(j["hgat"]);
            hgat = hgat::HgatConfig::from_json(merged);
        }
        if (j.contains("mlp")) {
            json merged = mlp.to_json();
            merged.update(j["mlp"]);
            mlp = mlp::MlpConfig::from_json(merged);
        }
        if (j.contains("split")) {
            const auto& s = j["split"];
            split.train = s.value("train", split.train);
            split.val = s.value("val", split.val);
            split.test = s.value("test", split.test);
            split_strategy = s.value("strategy", split_strategy);
        }
        negative_ratio = j.value("negative_ratio", negative_ratio);
        tau = j.value("tau", tau);
        max_length = j.value("max_length", max_length);
        top_k = j.value("top_k", top_k);
        seed = j.value("seed", seed);
        leakage_policy = j.value("leakage_policy", leakage_policy);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
    }
}

void RunConfig::finalize() {
    hgat.seed = seed;
    mlp.seed = seed;
    mlp.negative_ratio = negative_ratio;
    hgat.leakage_policy = parse_leakage_policy(leakage_policy);
    leakage_policy = std::string(to_string(hgat.leakage_policy));
    split_strategy = std::string(to_string(parse_split_strategy(split_strategy)));
    hgat.validate();
    mlp.validate();
    split_sizes(0, split);
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must lie in (0,1)");
    if (max_length < 2) throw Error(ErrorKind::InvalidArgument, "max_length must be >= 2");
}

namespace {

// ---------------------------------------------------------------- helpers

fs::path out_file(const RunConfig& cfg, const std::string& name) { return fs::path(cfg.out_dir) / name; }

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    const std::string bytes = read_file(path);
    try {
        return json::parse(bytes);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedDocument, path.string() + ": " + e.what());
    }
}

std::vector<fs::path> files_with_suffix(const fs::path& dir, std::string_view suffix) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.size() > suffix.size() && name.ends_with(suffix)) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void remove_with_suffix(const fs::path& dir, std::string_view suffix) {
    if (!fs::is_directory(dir)) return;
    for (const auto& p : files_with_suffix(dir, suffix)) fs::remove(p);
}

std::string sbom_id_for(const fs::path& p) {
    std::string name = p.filename().string();
    for (std::string_view suffix : {".json", ".cdx", ".bom"}) {
        if (name.size() > suffix.size() && name.ends_with(suffix)) name.resize(name.size() - suffix.size());
    }
    return name;
}

void require(const std::string& value, const std::string& what) {
    if (value.empty()) throw Error(ErrorKind::InvalidArgument, what + " is required");
}

std::vector<EnrichedSbom> load_sboms(const RunConfig& cfg) {
    require(cfg.sbom_dir, "--sbom-dir");
    std::vector<EnrichedSbom> out;
    for (const auto& p : files_with_suffix(cfg.sbom_dir, ".json")) {
        try {
            out.push_back(parse_cyclonedx(read_file(p), sbom_id_for(p)));
        } catch (const Error& e) {
            throw Error(e.kind(), p.filename().string() + ": " + e.what());
        }
    }
    return out;
}

MetaStore load_store(const RunConfig& cfg, std::ostream& out) {
    std::vector<fs::path> paths(cfg.snapshots.begin(), cfg.snapshots.end());
    MetaStore store = load_snapshot(paths);
    if (!cfg.kev.empty()) {
        CoverageReport coverage;
        store = store.with_exploited(load_exploited_list(cfg.kev), &coverage);
        out << "exploited list: " << coverage.matched << "/" << coverage.listed << " ids in snapshot\n";
    }
    return store;
}

std::vector<EvidenceGraph> load_graphs(const fs::path& dir) {
    std::vector<EvidenceGraph> out;
    for (const auto& p : files_with_suffix(dir, ".graph.json")) out.push_back(import_graph_json(read_file(p)));
    return out;
}

void write_graphs(const fs::path& dir, const std::vector<EvidenceGraph>& graphs, bool dot) {
    remove_with_suffix(dir, ".graph.json");
    remove_with_suffix(dir, ".dot");
    for (const auto& g : graphs) {
        write_file(dir / (g.graph_id + ".graph.json"), export_graph(g, GraphFormat::Json));
        if (dot) write_file(dir / (g.graph_id + ".dot"), export_graph(g, GraphFormat::Dot));
    }
}

IdSplit load_splits(const fs::path& path) {
    const json j = read_json(path);
    IdSplit s;
    try {
        s.train = j.at("train").get<std::vector<std::string>>();
        s.val = j.at("val").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedDocument, path.string() + ": " + e.what());
    }
    return s;
}

std::vector<EvidenceGraph> select(const std::vector<EvidenceGraph>& graphs, const std::vector<std::string>& ids) {
    std::map<std::string, const EvidenceGraph*> by_id;
    for (const auto& g : graphs) by_id[g.graph_id] = &g;
    std::vector<EvidenceGraph> out;
    for (const auto& id : ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorKind::InvalidArgument, "split names unknown graph " + id);
        out.push_back(*it->second);
    }
    return out;
}

std::vector<EvidenceGraph> fold_graphs(const std::vector<EvidenceGraph>& graphs, const IdSplit& split,
                                       const std::string& fold) {
    if (fold == "train") return select(graphs, split.train);
    if (fold == "val") return select(graphs, split.val);
    if (fold == "test") return select(graphs, split.test);
    if (fold == "all") return graphs;
    throw Error(ErrorKind::InvalidArgument, "fold must be train, val, test or all");
}

// ---------------------------------------------------------------- options

struct Paths {
    std::string graphs;
    std::string splits;
    std::string checkpoint;
    std::string pairs;
    std::string pair_splits;
    std::string ranking;
    std::string chains_json;
    std::string projections;
    std::string output;
};

struct Extra {
    std::string fold = "test";
    std::string predictions;
    std::string mask_relation;
    std::vector<std::string> formats;
    bool dot = false;
    double tolerance = 1e-4;
    std::size_t sample = 0;
    std::vector<std::string> ids;
    std::string base_url;
    SynthSpec synth;
    std::string synth_kind = "graphs";
    SynthChainSpec synth_chains;
};

Paths default_paths(const RunConfig& cfg, Paths p) {
    auto def = [&](std::string& v, const char* name) {
        if (v.empty()) v = out_file(cfg, name).string();
    };
    def(p.graphs, "graphs");
    def(p.splits, "splits.json");
    def(p.pairs, "pairs.csv");
    def(p.pair_splits, "pair_splits.json");
    def(p.ranking, "ranking.csv");
    def(p.chains_json, "chains.json");
    def(p.projections, "projections");
    return p;
}

// ---------------------------------------------------------------- commands

int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
    json reports = json::array();
    for (const auto& sbom : load_sboms(cfg)) {
        const auto report = parse_report(sbom);
        reports.push_back(json::parse(report_to_json(report)));
        out << sbom.sbom_id << ": " << report.components << " components, " << report.dependency_edges
            << " dependency edges, " << report.findings << " findings\n";
    }
    write_json(out_file(cfg, "ingest.json"), {{"sboms", reports}});
    return kExitOk;
}

int cmd_build_graphs(const RunConfig& cfg, const Paths& paths, const Extra& extra, std::ostream& out) {
    const MetaStore store = load_store(cfg, out);
    const FeatureSpec spec = FeatureSpec::standard(cfg.hgat.leakage_policy);
    std::vector<EvidenceGraph> graphs;
    for (const auto& sbom : load_sboms(cfg)) graphs.push_back(build_graph(sbom, store, spec));
    write_graphs(paths.graphs, graphs, extra.dot);
    std::size_t pos = 0, comps = 0;
    for (const auto& g : graphs) {
        pos += g.positive_count();
        comps += g.labels.size();
    }
    out << "graphs: " << graphs.size() << ", components: " << comps << ", positive: " << pos << "\n";
    return kExitOk;
}

int cmd_split(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    std::vector<std::string> ids;
    for (const auto& g : load_graphs(paths.graphs)) ids.push_back(g.graph_id);
    const IdSplit s = split_sboms(ids, cfg.split, cfg.seed);
    write_json(paths.splits, {{"seed", cfg.seed},
                              {"fractions", {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test}}},
                              {"train", s.train},
                              {"val", s.val},
                              {"test", s.test}});
    out << "split: " << s.train.size() << "/" << s.val.size() << "/" << s.test.size() << "\n";
    return kExitOk;
}

int cmd_train_hgat(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    const auto graphs = load_graphs(paths.graphs);
    const IdSplit split = load_splits(paths.splits);
    const auto train = select(graphs, split.train);
    const auto val = select(graphs, split.val);
    const auto result = hgat::train_hgat(train, val, cfg.hgat);
    const fs::path ckpt = paths.checkpoint.empty() ? out_file(cfg, "hgat.ckpt.json") : fs::path(paths.checkpoint);
    tensor::save_checkpoint(result.checkpoint, ckpt);
    write_file(out_file(cfg, "hgat_history.json"), hgat::history_to_json(result.history) + "\n");
    const auto& best = result.history[static_cast<std::size_t>(result.best_epoch - 1)];
    out << "hgat: best epoch " << result.best_epoch;
    if (best.validation) {
        out << ", validation f1 "
            << (best.validation->f1 ? format_fixed(*best.validation->f1, 4) : std::string("absent"));
    }
    out << "\n";
    return kExitOk;
}

json eval_hgat_json(const RunConfig& cfg, const Paths& paths, const std::string& fold, const std::string& mask_name) {
    const auto graphs = load_graphs(paths.graphs);
    const IdSplit split = load_splits(paths.splits);
    const auto selected = fold_graphs(graphs, split, fold);
    std::optional<Relation> mask;
    if (!mask_name.empty()) mask = parse_relation(mask_name);
    const fs::path ckpt_path = paths.checkpoint.empty() ? out_file(cfg, "hgat.ckpt.json") : fs::path(paths.checkpoint);
    const auto ckpt = tensor::load_checkpoint(ckpt_path);
    const auto m = hgat::evaluate_hgat(ckpt, selected, mask);
    json j = json::parse(metrics_to_json(m));
    j["fold"] = fold;
    j["mask_relation"] = mask ? json(std::string(to_string(*mask))) : json(nullptr);
    j["negative_rate"] = m.support == 0 ? 0.0
                                        : static_cast<double>(m.counts.tn + m.counts.fp) / static_cast<double>(m.support);
    return j;
}

int cmd_eval_hgat(const RunConfig& cfg, const Paths& paths, const Extra& extra, std::ostream& out) {
    const json j = eval_hgat_json(cfg, paths, extra.fold, extra.mask_relation);
    const std::string name = paths.output.empty() ? "metrics_hgat.json" : paths.output;
    write_json(out_file(cfg, name), j);
    if (!extra.predictions.empty()) {
        const auto graphs = fold_graphs(load_graphs(paths.graphs), load_splits(paths.splits), extra.fold);
        const fs::path ckpt_path = paths.checkpoint.empty() ? out_file(cfg, "hgat.ckpt.json") : fs::path(paths.checkpoint);
        const auto ckpt = tensor::load_checkpoint(ckpt_path);
        std::optional<Relation> mask;
        if (!extra.mask_relation.empty()) mask = parse_relation(extra.mask_relation);
        std::string csv = "graph_id,component_id,label,prediction,score\n";
        for (const auto& g : graphs) {
            const auto preds = hgat::predict_components(ckpt, g, mask);
            for (std::size_t i = 0; i < preds.size(); ++i) {
                csv += g.graph_id + "," + preds[i].component_id + "," + std::to_string(g.labels[i]) + "," +
                       std::to_string(preds[i].label) + "," + format_double(preds[i].score) + "\n";
            }
        }
        write_file(extra.predictions, csv);
    }
    out << "hgat " << extra.fold << (extra.mask_relation.empty() ? "" : " masked " + extra.mask_relation) << ": "
        << j.dump() << "\n";
    return kExitOk;
}

json pair_key(const PairExample& e) { return json::array({e.cve_a, e.cve_b}); }

int cmd_pairs(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    require(cfg.chains, "--chains");
    auto chains = load_chains(cfg.chains);
    const MetaStore store = load_store(cfg, out);
    fill_chain_years(chains, store);
    std::vector<PairExample> examples = positive_pairs(chains);
    const std::size_t positives = examples.size();
    const auto negatives = sample_negatives(chains, cfg.negative_ratio, cfg.seed);
    examples.insert(examples.end(), negatives.begin(), negatives.end());
    std::sort(examples.begin(), examples.end(), [](const PairExample& x, const PairExample& y) {
        return std::tie(x.cve_a, x.cve_b) < std::tie(y.cve_a, y.cve_b);
    });
    const auto strategy = parse_split_strategy(cfg.split_strategy);
    const PairSplit split = split_pairs(examples, chains, strategy, cfg.split, cfg.seed);

    write_file(paths.pairs, pairs_to_csv(examples));
    auto keys = [](const std::vector<PairExample>& v) {
        json arr = json::array();
        for (const auto& e : v) arr.push_back(pair_key(e));
        return arr;
    };
    write_json(paths.pair_splits, {{"strategy", std::string(to_string(strategy))},
                                   {"seed", cfg.seed},
                                   {"train", keys(split.train)},
                                   {"val", keys(split.val)},
                                   {"test", keys(split.test)}});
    const auto coverage = mlp::pair_coverage(examples, store);
    json stats = json::parse(corpus_stats_to_json(corpus_stats(chains)));
    stats["positives"] = positives;
    stats["negatives"] = negatives.size();
    stats["pairs_missing_one_cve"] = coverage.one_missing;
    stats["pairs_missing_both_cves"] = coverage.both_missing;
    write_json(out_file(cfg, "corpus_stats.json"), stats);
    out << "pairs: " << positives << " positive, " << negatives.size() << " negative; split "
        << split.train.size() << "/" << split.val.size() << "/" << split.test.size() << "\n";
    return kExitOk;
}

std::array<std::vector<PairExample>, 3> load_pair_folds(const Paths& paths) {
    const auto examples = parse_pairs_csv(read_file(paths.pairs));
    std::map<std::pair<std::string, std::string>, PairExample> by_key;
    for (const auto& e : examples) by_key[{e.cve_a, e.cve_b}] = e;
    const json j = read_json(paths.pair_splits);
    std::array<std::vector<PairExample>, 3> folds;
    const std::array<const char*, 3> names{"train", "val", "test"};
    try {
        for (std::size_t f = 0; f < 3; ++f) {
            for (const auto& k : j.at(names[f])) {
                const auto it = by_key.find({k.at(0).get<std::string>(), k.at(1).get<std::string>()});
                if (it == by_key.end()) throw Error(ErrorKind::InvalidArgument, "pair split names a pair missing from pairs.csv");
                folds[f].push_back(it->second);
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedDocument, paths.pair_splits + ": " + e.what());
    }
    return folds;
}

int cmd_train_mlp(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    const MetaStore store = load_store(cfg, out);
    const auto folds = load_pair_folds(paths);
    const auto result = mlp::train_mlp(folds[0], folds[1], store, cfg.mlp);
    const fs::path ckpt = paths.checkpoint.empty() ? out_file(cfg, "mlp.ckpt.json") : fs::path(paths.checkpoint);
    tensor::save_checkpoint(result.checkpoint, ckpt);
    write_file(out_file(cfg, "mlp_history.json"), mlp::mlp_history_to_json(result) + "\n");
    json metrics = {{"best_epoch", result.best_epoch},
                    {"validation_auc", result.best_validation_auc},
                    {"stopped_early", result.stopped_early},
                    {"test_auc", nullptr}};
    if (!folds[2].empty()) {
        std::vector<int> labels;
        for (const auto& e : folds[2]) labels.push_back(e.label);
        const auto pos = std::count(labels.begin(), labels.end(), 1);
        if (pos > 0 && pos < static_cast<long>(labels.size())) {
            metrics["test_auc"] = roc_auc(mlp::predict_pairs(result.checkpoint, folds[2], store), labels);
        }
    }
    write_json(out_file(cfg, "metrics_mlp.json"), metrics);
    out << "mlp: best epoch " << result.best_epoch << ", validation auc " << format_fixed(result.best_validation_auc, 4)
        << "\n";
    return kExitOk;
}

int cmd_rank(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    const MetaStore store = load_store(cfg, out);
    std::set<std::string> universe;
    if (fs::is_directory(paths.graphs)) {
        for (const auto& g : load_graphs(paths.graphs)) {
            const auto& ids = g.node_ids[static_cast<std::size_t>(NodeType::Cve)];
            universe.insert(ids.begin(), ids.end());
        }
    }
    if (universe.empty() && !cfg.chains.empty()) {
        for (const auto& c : load_chains(cfg.chains)) universe.insert(c.cve_ids.begin(), c.cve_ids.end());
    }
    const std::vector<std::string> ids(universe.begin(), universe.end());
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) pairs.emplace_back(ids[i], ids[j]);
    }
    const fs::path ckpt_path = paths.checkpoint.empty() ? out_file(cfg, "mlp.ckpt.json") : fs::path(paths.checkpoint);
    const auto ranking = mlp::score_pairs(tensor::load_checkpoint(ckpt_path), pairs, store);
    write_file(paths.ranking, mlp::ranking_to_csv(ranking));
    out << "ranked " << ranking.size() << " pairs over " << ids.size() << " CVEs\n";
    return kExitOk;
}

int cmd_compose(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    const auto ranking = mlp::parse_ranking_csv(read_file(paths.ranking));
    const auto chains = compose_chains(ranking, cfg.tau, cfg.max_length);
    write_json(paths.chains_json, chains_to_json(chains, cfg.tau, cfg.max_length));
    out << "composed " << chains.size() << " candidate chains\n";
    return kExitOk;
}

int cmd_project(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    std::vector<std::pair<std::string, std::vector<std::string>>> chains;
    if (!cfg.chains.empty()) {
        for (const auto& c : load_chains(cfg.chains)) chains.emplace_back(c.chain_id, c.cve_ids);
    }
    if (fs::exists(paths.chains_json)) {
        const auto candidates = chains_from_json(read_json(paths.chains_json));
        for (std::size_t i = 0; i < std::min(cfg.top_k, candidates.size()); ++i) {
            chains.emplace_back("candidate-" + std::to_string(i + 1), candidates[i].cve_ids);
        }
    }
    const fs::path dir = paths.projections;
    remove_with_suffix(dir, ".json");
    fs::create_directories(dir);
    std::size_t written = 0, connected = 0;
    for (const auto& g : load_graphs(paths.graphs)) {
        json arr = json::array();
        for (const auto& [id, cves] : chains) {
            const auto p = project_chain(id, cves, g);
            if (p.induced_nodes.empty()) continue;
            if (verdict(p) == "CONNECTED") ++connected;
            arr.push_back(projection_to_json(p));
        }
        if (arr.empty()) continue;
        write_json(dir / (g.graph_id + ".json"), arr);
        written += arr.size();
    }
    out << "projections: " << written << " (" << connected << " connected)\n";
    return kExitOk;
}

int cmd_report(const RunConfig& cfg, const Paths& paths, const Extra& extra, std::ostream& out) {
    std::vector<ProjectionResult> projections;
    if (fs::is_directory(paths.projections)) {
        for (const auto& p : files_with_suffix(paths.projections, ".json")) {
            for (const auto& item : read_json(p)) projections.push_back(projection_from_json(item));
        }
    }
    std::vector<CandidateChain> candidates;
    if (fs::exists(paths.chains_json)) candidates = chains_from_json(read_json(paths.chains_json));
    std::vector<ReportFormat> formats;
    if (extra.formats.empty() || std::find(extra.formats.begin(), extra.formats.end(), "all") != extra.formats.end()) {
        formats = {ReportFormat::Json, ReportFormat::Text, ReportFormat::Dot};
    } else {
        for (const auto& f : extra.formats) formats.push_back(parse_report_format(f));
    }
    for (auto f : formats) {
        write_file(out_file(cfg, "report." + std::string(file_extension(f))),
                   triage_report(projections, candidates, f, cfg.top_k));
    }
    out << "report: " << projections.size() << " projections, " << candidates.size() << " candidates\n";
    return kExitOk;
}

int cmd_synth_chains(const RunConfig& cfg, const Extra& extra, std::ostream& out) {
    SynthChainSpec spec = extra.synth_chains;
    spec.seed = cfg.seed;
    const SynthChainCorpus corpus = generate_synth_chain_corpus(spec);
    write_file(out_file(cfg, "synth_chains.jsonl"), chains_to_jsonl(corpus.chains));
    write_file(out_file(cfg, "synth_chains_snapshot.json"), write_snapshot(corpus.records));
    out << "synth: " << corpus.chains.size() << " chains over " << corpus.records.size() << " CVEs\n";
    return kExitOk;
}

int cmd_synth(const RunConfig& cfg, const Paths& paths, const Extra& extra, std::ostream& out) {
    if (extra.synth_kind == "chains") return cmd_synth_chains(cfg, extra, out);
    if (extra.synth_kind != "graphs") throw Error(ErrorKind::InvalidArgument, "--kind must be graphs or chains");
    SynthSpec spec = extra.synth;
    spec.seed = cfg.seed;
    const SynthCorpus corpus = generate_synth_corpus(spec);
    write_graphs(paths.graphs, corpus.graphs, false);
    std::vector<CveMeta> records;
    for (const auto& [_, m] : corpus.store.records()) records.push_back(m);
    write_file(out_file(cfg, "synth_snapshot.json"), write_snapshot(records));
    write_json(out_file(cfg, "synth_manifest.json"), corpus.manifest);
    out << "synth: " << corpus.graphs.size() << " graphs, " << corpus.manifest["components"] << " components, "
        << corpus.manifest["positives"] << " positive, digest " << corpus.manifest["digest"].get<std::string>() << "\n";
    return kExitOk;
}

json report_json(const tensor::GradCheckReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries) {
        entries.push_back({{"name", e.name}, {"checked", e.checked}, {"max_relative_error", e.max_relative_error}});
    }
    return {{"pass", r.pass}, {"tolerance", r.tolerance}, {"max_relative_error", r.max_relative_error}, {"params", entries}};
}

int cmd_gradcheck(const RunConfig& cfg, const Extra& extra, std::ostream& out) {
    // every element of a narrow copy, then a seeded sample at full width
    hgat::HgatConfig narrow = cfg.hgat;
    narrow.hidden_dim = 8;
    const auto hn = hgat::gradcheck_hgat(narrow, extra.tolerance);
    const auto hw = hgat::gradcheck_hgat(cfg.hgat, extra.tolerance, extra.sample == 0 ? 64 : extra.sample);
    const auto m = mlp::gradcheck_mlp(extra.tolerance);
    write_json(out_file(cfg, "gradcheck.json"),
               {{"hgat_narrow", report_json(hn)}, {"hgat", report_json(hw)}, {"mlp", report_json(m)}});
    auto line = [&](const char* what, const tensor::GradCheckReport& r) {
        out << what << " gradcheck " << (r.pass ? "PASS" : "FAIL") << " max relative error "
            << format_double(r.max_relative_error) << "\n";
    };
    line("hgat (hidden 8, all elements)", hn);
    line("hgat (sampled)", hw);
    line("mlp", m);
    if (!hn.pass || !hw.pass || !m.pass) {
        throw Error(ErrorKind::GradientCheckFailed, "max relative error above " + format_double(extra.tolerance));
    }
    return kExitOk;
}

int cmd_fetch(const RunConfig& cfg, const Paths& paths, const Extra& extra, std::ostream& out) {
    std::set<std::string> ids;
    for (const auto& raw : extra.ids) {
        const auto id = normalize_cve_id(raw);
        if (!id) throw Error(ErrorKind::InvalidArgument, "not a CVE id: " + raw);
        ids.insert(*id);
    }
    if (!cfg.chains.empty()) {
        for (const auto& c : load_chains(cfg.chains)) ids.insert(c.cve_ids.begin(), c.cve_ids.end());
    }
    if (!paths.graphs.empty() && fs::is_directory(paths.graphs)) {
        for (const auto& g : load_graphs(paths.graphs)) {
            const auto& v = g.node_ids[static_cast<std::size_t>(NodeType::Cve)];
            ids.insert(v.begin(), v.end());
        }
    }
    NvdClientConfig client = NvdClientConfig::from_environment();
    if (!extra.base_url.empty()) client.base_url = extra.base_url;
    const fs::path target = paths.output.empty() ? out_file(cfg, "nvd_snapshot.json") : fs::path(paths.output);
    const auto stats = fetch_live({ids.begin(), ids.end()}, client, target);
    out << "fetched " << stats.records << " records in " << stats.requests << " requests -> " << target.string() << "\n";
    return kExitOk;
}

int cmd_pipeline(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    require(cfg.chains, "--chains");
    Extra extra;
    cmd_build_graphs(cfg, paths, extra, out);
    cmd_split(cfg, paths, out);
    cmd_train_hgat(cfg, paths, out);
    cmd_eval_hgat(cfg, paths, extra, out);
    Paths masked = paths;
    masked.output = "metrics_hgat.mask-DEPENDS_ON.json";
    Extra mask_extra;
    mask_extra.mask_relation = "DEPENDS_ON";
    cmd_eval_hgat(cfg, masked, mask_extra, out);
    cmd_pairs(cfg, paths, out);
    cmd_train_mlp(cfg, paths, out);
    cmd_rank(cfg, paths, out);
    cmd_compose(cfg, paths, out);
    cmd_project(cfg, paths, out);
    cmd_report(cfg, paths, extra, out);
    return kExitOk;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"SBOM evidence graphs, component classification and CVE chain ranking", "sbomchain"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    RunConfig flags;
    std::string config_path;
    Paths paths;
    Extra extra;
    double hgat_lr = 0, hgat_dropout = 0, mlp_lr = 0;
    int hgat_epochs = 0, hgat_hidden = 0, hgat_heads = 0, hgat_batch = 0, mlp_epochs = 0, mlp_patience = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--out", flags.out_dir, "output directory");
        sub->add_option("--seed", flags.seed, "seed for splits, sampling and training");
    };
    auto sbom_opts = [&](CLI::App* sub) { sub->add_option("--sbom-dir", flags.sbom_dir, "directory of CycloneDX JSON files"); };
    auto store_opts = [&](CLI::App* sub) {
        sub->add_option("--snapshot", flags.snapshots, "NVD snapshot file(s), later ones override");
        sub->add_option("--kev", flags.kev, "known-exploited list (CSV or JSON)");
    };
    auto graph_opts = [&](CLI::App* sub) { sub->add_option("--graphs", paths.graphs, "graph directory"); };
    auto hgat_opts = [&](CLI::App* sub) {
        sub->add_option("--leakage-policy", flags.leakage_policy, "STRICT or PAPER_LITERAL");
        sub->add_option("--epochs", hgat_epochs);
        sub->add_option("--hidden", hgat_hidden);
        sub->add_option("--heads", hgat_heads);
        sub->add_option("--lr", hgat_lr);
        sub->add_option("--dropout", hgat_dropout);
        sub->add_option("--batch-graphs", hgat_batch);
    };
    auto split_opts = [&](CLI::App* sub) {
        sub->add_option("--train", flags.split.train);
        sub->add_option("--val", flags.split.val);
        sub->add_option("--test", flags.split.test);
    };

    auto* ingest = app.add_subcommand("ingest", "parse SBOMs and write ingest.json");
    common(ingest);
    sbom_opts(ingest);

    auto* build = app.add_subcommand("build-graphs", "build evidence graphs into graphs/");
    common(build);
    sbom_opts(build);
    store_opts(build);
    graph_opts(build);
    build->add_option("--leakage-policy", flags.leakage_policy, "STRICT or PAPER_LITERAL");
    build->add_flag("--dot", extra.dot, "also write DOT renderings");

    auto* split = app.add_subcommand("split", "SBOM-level train/val/test split into splits.json");
    common(split);
    graph_opts(split);
    split_opts(split);
    split->add_option("--splits", paths.splits);

    auto* train_hgat = app.add_subcommand("train-hgat", "train the component classifier");
    common(train_hgat);
    graph_opts(train_hgat);
    hgat_opts(train_hgat);
    train_hgat->add_option("--splits", paths.splits);
    train_hgat->add_option("--checkpoint", paths.checkpoint);

    auto* eval_hgat = app.add_subcommand("eval-hgat", "evaluate a classifier checkpoint into metrics_hgat.json");
    common(eval_hgat);
    graph_opts(eval_hgat);
    eval_hgat->add_option("--splits", paths.splits);
    eval_hgat->add_option("--checkpoint", paths.checkpoint);
    eval_hgat->add_option("--fold", extra.fold, "train, val, test or all");
    eval_hgat->add_option("--mask-relation", extra.mask_relation, "empty this relation's edges at inference");
    eval_hgat->add_option("--metrics-name", paths.output, "file name under the output directory");
    eval_hgat->add_option("--predictions", extra.predictions, "write per-component predictions as CSV");

    auto* pairs = app.add_subcommand("pairs", "positive/negative CVE pairs into pairs.csv");
    common(pairs);
    store_opts(pairs);
    pairs->add_option("--chains", flags.chains, "chain corpus (JSON lines)");
    pairs->add_option("--ratio", flags.negative_ratio, "negatives per positive");
    pairs->add_option("--strategy", flags.split_strategy, "PAIR, CHAIN or TEMPORAL");
    split_opts(pairs);

    auto* train_mlp = app.add_subcommand("train-mlp", "train the pair model into mlp.ckpt.json");
    common(train_mlp);
    store_opts(train_mlp);
    train_mlp->add_option("--pairs", paths.pairs);
    train_mlp->add_option("--pair-splits", paths.pair_splits);
    train_mlp->add_option("--checkpoint", paths.checkpoint);
    train_mlp->add_option("--epochs", mlp_epochs);
    train_mlp->add_option("--patience", mlp_patience);
    train_mlp->add_option("--lr", mlp_lr);

    auto* rank = app.add_subcommand("rank", "score all CVE pairs into ranking.csv");
    common(rank);
    store_opts(rank);
    graph_opts(rank);
    rank->add_option("--chains", flags.chains, "chain corpus used when no graphs are present");
    rank->add_option("--checkpoint", paths.checkpoint);
    rank->add_option("--ranking", paths.ranking);

    auto* compose = app.add_subcommand("compose", "compose candidate chains into chains.json");
    common(compose);
    compose->add_option("--ranking", paths.ranking);
    compose->add_option("--tau", flags.tau);
    compose->add_option("--max-length", flags.max_length);

    auto* project = app.add_subcommand("project", "map chains onto SBOM graphs into projections/");
    common(project);
    graph_opts(project);
    project->add_option("--chains", flags.chains, "documented chains to project as well");
    project->add_option("--candidates", paths.chains_json, "composed chains file");
    project->add_option("--top-k", flags.top_k);

    auto* report = app.add_subcommand("report", "triage report into report.{json,txt,dot}");
    common(report);
    report->add_option("--projections", paths.projections);
    report->add_option("--candidates", paths.chains_json);
    report->add_option("--format", extra.formats, "json, txt, dot or all");
    report->add_option("--top-k", flags.top_k);

    auto* synth = app.add_subcommand("synth", "planted-rule synthetic graph corpus");
    common(synth);
    graph_opts(synth);
    synth->add_option("--graph-count", extra.synth.graph_count);
    synth->add_option("--min-components", extra.synth.min_components);
    synth->add_option("--max-components", extra.synth.max_components);
    synth->add_option("--density", extra.synth.density);
    synth->add_option("--seed-fraction", extra.synth.seed_fraction);
    synth->add_option("--rule", extra.synth.rule, "VULN_VIA_DEP or IS_DIRECT");
    synth->add_option("--kind", extra.synth_kind, "graphs (default) or chains");
    synth->add_option("--chain-count", extra.synth_chains.chains);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check of both models");
    common(gradcheck);
    gradcheck->add_option("--tolerance", extra.tolerance);
    gradcheck->add_option("--sample", extra.sample, "elements checked per full-width HGAT parameter (default 64)");

    auto* fetch = app.add_subcommand("fetch-nvd", "download NVD records into a snapshot file");
    common(fetch);
    graph_opts(fetch);
    fetch->add_option("--id", extra.ids, "CVE id(s) to fetch");
    fetch->add_option("--chains", flags.chains, "fetch every CVE of this chain corpus");
    fetch->add_option("--output", paths.output, "snapshot path");
    fetch->add_option("--base-url", extra.base_url);

    auto* pipeline = app.add_subcommand("pipeline", "run every offline stage in order");
    common(pipeline);
    sbom_opts(pipeline);
    store_opts(pipeline);
    pipeline->add_option("--chains", flags.chains);
    pipeline->add_option("--leakage-policy", flags.leakage_policy);
    pipeline->add_option("--top-k", flags.top_k);
    pipeline->add_option("--tau", flags.tau);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    auto given = [&](const char* name) {
        const CLI::Option* o = sub->get_option_no_throw(name);
        return o != nullptr && o->count() > 0;
    };

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.merge_json(read_json(config_path), fs::path(config_path).parent_path());
        if (given("--out")) cfg.out_dir = flags.out_dir;
        if (given("--seed")) cfg.seed = flags.seed;
        if (given("--sbom-dir")) cfg.sbom_dir = flags.sbom_dir;
        if (given("--snapshot")) cfg.snapshots = flags.snapshots;
        if (given("--kev")) cfg.kev = flags.kev;
        if (given("--chains")) cfg.chains = flags.chains;
        if (given("--leakage-policy")) cfg.leakage_policy = flags.leakage_policy;
        if (given("--train")) cfg.split.train = flags.split.train;
        if (given("--val")) cfg.split.val = flags.split.val;
        if (given("--test")) cfg.split.test = flags.split.test;
        if (given("--ratio")) cfg.negative_ratio = flags.negative_ratio;
        if (given("--strategy")) cfg.split_strategy = flags.split_strategy;
        if (given("--tau")) cfg.tau = flags.tau;
        if (given("--max-length")) cfg.max_length = flags.max_length;
        if (given("--top-k")) cfg.top_k = flags.top_k;
        const bool mlp_cmd = sub == train_mlp;
        if (given("--epochs")) (mlp_cmd ? cfg.mlp.max_epochs : cfg.hgat.max_epochs) = mlp_cmd ? mlp_epochs : hgat_epochs;
        if (given("--lr")) (mlp_cmd ? cfg.mlp.lr : cfg.hgat.lr) = mlp_cmd ? mlp_lr : hgat_lr;
        if (given("--patience")) cfg.mlp.patience = mlp_patience;
        if (given("--hidden")) cfg.hgat.hidden_dim = hgat_hidden;
        if (given("--heads")) cfg.hgat.heads = hgat_heads;
        if (given("--dropout")) cfg.hgat.dropout = hgat_dropout;
        if (given("--batch-graphs")) cfg.hgat.batch_graphs = hgat_batch;
        cfg.finalize();

        fs::create_directories(cfg.out_dir);
        write_json(out_file(cfg, "config.resolved.json"), cfg.to_json());
        const Paths resolved = default_paths(cfg, paths);

        if (sub == ingest) return cmd_ingest(cfg, out);
        if (sub == build) return cmd_build_graphs(cfg, resolved, extra, out);
        if (sub == split) return cmd_split(cfg, resolved, out);
        if (sub == train_hgat) return cmd_train_hgat(cfg, resolved, out);
        if (sub == eval_hgat) return cmd_eval_hgat(cfg, resolved, extra, out);
        if (sub == pairs) return cmd_pairs(cfg, resolved, out);
        if (sub == train_mlp) return cmd_train_mlp(cfg, resolved, out);
        if (sub == rank) return cmd_rank(cfg, resolved, out);
        if (sub == compose) return cmd_compose(cfg, resolved, out);
        if (sub == project) return cmd_project(cfg, resolved, out);
        if (sub == report) return cmd_report(cfg, resolved, extra, out);
        if (sub == synth) return cmd_synth(cfg, resolved, extra, out);
        if (sub == gradcheck) return cmd_gradcheck(cfg, extra, out);
        if (sub == fetch) return cmd_fetch(cfg, paths, extra, out);
        if (sub == pipeline) return cmd_pipeline(cfg, resolved, out);
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << one_line(e.what()) << "\n";
        return is_input_error(e.kind()) ? kExitInput : kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: Internal: " << one_line(e.what()) << "\n";
        return kExitRuntime;
    }
}

} // namespace sbomchain::cli
