#include "sbomchain/error.hpp"
#include "sbomchain/hgat.hpp"
#include "sbomchain/sbom.hpp"
#include "sbomchain/synth.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace sbomchain;
using namespace sbomchain::hgat;
using testsupport::Bom;
using testsupport::error_kind_of;

namespace {

HgatConfig small_config(int epochs = 3) {
    HgatConfig c;
    c.hidden_dim = 8;
    c.max_epochs = epochs;
    return c;
}

std::array<std::size_t, kNodeTypeCount> widths() { return {kComponentFeatureCount, kCveFeatureCount, kCweFeatureCount}; }

// Component node i moves to position perm[i].
EvidenceGraph permute_components(const EvidenceGraph& g, const std::vector<std::size_t>& perm) {
    EvidenceGraph out = g;
    const std::size_t n = g.node_count(NodeType::Component);
    const FeatureMatrix& f = g.features_of(NodeType::Component);
    FeatureMatrix nf;
    nf.cols = f.cols;
    nf.values.assign(f.values.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        out.node_ids[0][perm[i]] = g.node_ids[0][i];
        out.component_names[perm[i]] = g.component_names[i];
        out.labels[perm[i]] = g.labels[i];
        for (std::size_t c = 0; c < f.cols; ++c) nf.at(perm[i], c) = f.at(i, c);
    }
    out.features[0] = nf;
    for (auto& e : out.edges_of(Relation::DependsOn)) e = {perm[e.src], perm[e.dst]};
    for (auto& e : out.edges_of(Relation::HasVulnerability)) e.src = perm[e.src];
    return out;
}

SynthCorpus planted(std::size_t graphs, std::string rule = std::string(kRuleVulnViaDep)) {
    SynthSpec spec;
    spec.graph_count = graphs;
    spec.rule = std::move(rule);
    spec.seed = 4;
    return generate_synth_corpus(spec);
}

} // namespace

TEST_SUITE("hgat") {

TEST_CASE("defaults and config round trip") {
    const HgatConfig c;
    CHECK(c.layers == 2);
    CHECK(c.heads == 2);
    CHECK(c.hidden_dim == 64);
    CHECK(c.dropout == 0.2);
    CHECK(c.lr == 1e-3);
    CHECK(c.weight_decay == 5e-4);
    CHECK(c.max_epochs == 30);
    CHECK(c.batch_graphs == 2);
    CHECK(HgatConfig::from_json(c.to_json()).to_json() == c.to_json());
    HgatConfig bad;
    bad.heads = 0;
    CHECK(error_kind_of([&] { bad.validate(); }) == ErrorKind::InvalidArgument);
    CHECK(channels().size() == 6);
}

TEST_CASE("graph without edges gives finite logits") {
    Bom bom;
    bom.component("A").component("B").component("C");
    const EvidenceGraph g = build_graph(parse_cyclonedx(bom.str()), MetaStore{}, FeatureSpec::standard());
    HgatModel model(HgatConfig{}, widths());
    Rng rng(1);
    const tensor::Tensor logits = model.forward(prepare(g), false, rng);
    CHECK(logits.rows() == 3);
    CHECK(logits.cols() == 2);
    for (double v : logits.values()) CHECK(std::isfinite(v));
}

TEST_CASE("all-zero single component gives zero logits") {
    Bom bom;
    bom.component("A");
    EvidenceGraph g = build_graph(parse_cyclonedx(bom.str()), MetaStore{}, FeatureSpec::standard());
    std::fill(g.features[0].values.begin(), g.features[0].values.end(), 0.0);
    HgatModel model(HgatConfig{}, widths());
    Rng rng(1);
    const tensor::Tensor logits = model.forward(prepare(g), false, rng);
    CHECK(logits.values() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("eval forward is deterministic and permutation equivariant") {
    const EvidenceGraph g = toy_graph();
    HgatModel model(HgatConfig{}, widths());
    Rng r1(1), r2(2);
    const auto a = model.forward(prepare(g), false, r1).values();
    CHECK(model.forward(prepare(g), false, r2).values() == a);

    const std::vector<std::size_t> perm{2, 0, 1};
    const auto b = model.forward(prepare(permute_components(g, perm)), false, r1);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t c = 0; c < 2; ++c) CHECK(b.at(perm[i], c) == doctest::Approx(a[i * 2 + c]).epsilon(1e-12));
    }
}

TEST_CASE("permutation equivariance on synthetic graphs") {
    const SynthCorpus corpus = planted(5);
    HgatModel model(small_config(), widths());
    Rng rng(3);
    for (const auto& g : corpus.graphs) {
        const std::size_t n = g.node_count(NodeType::Component);
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        const auto a = model.forward(prepare(g), false, rng);
        const auto b = model.forward(prepare(permute_components(g, perm)), false, rng);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 2; ++c) CHECK(b.at(perm[i], c) == doctest::Approx(a.at(i, c)).epsilon(1e-10));
        }
    }
}

TEST_CASE("batch loss is the size-weighted mean of graph losses") {
    const SynthCorpus corpus = planted(4);
    HgatModel model(HgatConfig{}, widths());
    Rng rng(1);
    std::vector<const EvidenceGraph*> parts;
    double weighted = 0.0;
    std::size_t total = 0;
    for (const auto& g : corpus.graphs) {
        parts.push_back(&g);
        const auto loss = tensor::nll_loss(tensor::log_softmax(model.forward(prepare(g), false, rng)), g.labels).item();
        weighted += loss * static_cast<double>(g.labels.size());
        total += g.labels.size();
    }
    const EvidenceGraph u = disjoint_union(parts);
    const double batch = tensor::nll_loss(tensor::log_softmax(model.forward(prepare(u), false, rng)), u.labels).item();
    CHECK(std::abs(batch - weighted / static_cast<double>(total)) <= 1e-9);
}

TEST_CASE("gradient check of the two-layer model on the toy graph") {
    const tensor::GradCheckReport r = gradcheck_hgat(small_config());
    CHECK(r.pass);
    CHECK(r.max_relative_error < 1e-4);
    CHECK(toy_graph().node_count(NodeType::Component) + toy_graph().node_count(NodeType::Cve) +
              toy_graph().node_count(NodeType::Cwe) ==
          6);
}

TEST_CASE("feature-visible label is learned to F1 1.0") {
    const SynthCorpus corpus = planted(1, std::string(kRuleIsDirect));
    EvidenceGraph g = build_graph(corpus.sboms[0], corpus.store, FeatureSpec::standard(LeakagePolicy::PaperLiteral));
    g.labels = apply_rule(kRuleIsDirect, corpus.sboms[0], corpus.seeds[0]);
    g.label_source = std::string(kRuleIsDirect);
    HgatConfig config;
    config.leakage_policy = LeakagePolicy::PaperLiteral;
    // one graph is one optimizer step per epoch, too few at the default rate
    config.lr = 1e-2;
    const std::vector<EvidenceGraph> set{g};
    const TrainResult r = train_hgat(set, set, config);
    CHECK(r.history.size() == 30);
    const ClassificationMetrics m = evaluate_hgat(r.checkpoint, set);
    CHECK(m.f1 == 1.0);
}

TEST_CASE("training is reproducible") {
    const SynthCorpus corpus = planted(6);
    const std::vector<EvidenceGraph> train(corpus.graphs.begin(), corpus.graphs.begin() + 4);
    const std::vector<EvidenceGraph> val(corpus.graphs.begin() + 4, corpus.graphs.end());
    const TrainResult a = train_hgat(train, val, small_config());
    const TrainResult b = train_hgat(train, val, small_config());
    CHECK(history_to_json(a.history) == history_to_json(b.history));
    CHECK(tensor::serialize_checkpoint(a.checkpoint) == tensor::serialize_checkpoint(b.checkpoint));
    CHECK(error_kind_of([&] { train_hgat({}, val, small_config()); }) == ErrorKind::EmptyTrainingSet);
}

TEST_CASE("predictions, masking and checkpoints") {
    const SynthCorpus corpus = planted(40);
    const std::vector<EvidenceGraph> train(corpus.graphs.begin(), corpus.graphs.begin() + 32);
    const std::vector<EvidenceGraph> test(corpus.graphs.begin() + 32, corpus.graphs.end());
    const TrainResult r = train_hgat(train, {}, HgatConfig{});

    EvidenceGraph empty;
    CHECK(predict_components(r.checkpoint, empty).empty());

    std::size_t full = 0, masked = 0;
    for (const auto& g : test) {
        const auto rows = predict_components(r.checkpoint, g);
        CHECK(rows.size() == g.node_count(NodeType::Component));
        for (const auto& p : rows) {
            CHECK(p.score >= 0.0);
            CHECK(p.score <= 1.0);
            full += p.score >= 0.5;
        }
        for (const auto& p : predict_components(r.checkpoint, g, Relation::DependsOn)) masked += p.score >= 0.5;
    }
    CHECK(masked < full);

    NormStats stats;
    HgatModel model = load_model(r.checkpoint, &stats);
    CHECK(model.params().parameter_count() > 0);
    CHECK_FALSE(stats.empty());
    tensor::ModelCheckpoint wrong = r.checkpoint;
    wrong.model_kind = "MLP";
    CHECK(error_kind_of([&] { load_model(wrong); }) == ErrorKind::IncompatibleCheckpoint);

    EvidenceGraph literal = test[0];
    literal.leakage_policy = LeakagePolicy::PaperLiteral;
    CHECK(error_kind_of([&] { predict_components(r.checkpoint, literal); }) == ErrorKind::FeatureSpecMismatch);
}

TEST_CASE("model view masks only message flow") {
    Bom bom;
    bom.component("A").component("B").depends("A", {"B"}).vuln("CVE-2021-0001", {"B"});
    const EvidenceGraph g = build_graph(parse_cyclonedx(bom.str()), MetaStore{}, FeatureSpec::standard());
    CHECK(masks_vulnerability_edges(g));
    const std::vector<EvidenceGraph> set{g};
    const NormStats stats = compute_norm_stats(set, FeatureSpec::standard());
    for (Relation r : kRelations) {
        const EvidenceGraph v = model_view(g, stats, r);
        CHECK(v.edges_of(r).empty());
        CHECK(v.labels == g.labels);
        CHECK(v.features == model_view(g, stats).features);
    }
    CHECK(model_view(g, stats).edges_of(Relation::HasVulnerability).empty());
    CHECK(model_view(g, stats).edges_of(Relation::DependsOn).size() == 1);

    const SynthCorpus corpus = planted(1);
    CHECK_FALSE(masks_vulnerability_edges(corpus.graphs[0]));
}

}
