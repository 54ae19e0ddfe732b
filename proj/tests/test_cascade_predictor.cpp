#include "sbomchain/cascade_predictor.hpp"
#include "sbomchain/error.hpp"
#include "sbomchain/metrics.hpp"
#include "sbomchain/util.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

using namespace sbomchain;
using namespace sbomchain::mlp;
using testsupport::error_kind_of;

namespace {

CveMeta meta(const std::string& id, double score, Severity sev, int year, bool exploited, int refs, int cwes) {
    CveMeta m;
    m.cve_id = id;
    m.cvss_base = score;
    m.severity = sev;
    m.published_year = year;
    m.exploited = exploited;
    m.reference_count = refs;
    for (int i = 0; i < cwes; ++i) m.cwe_ids.push_back("CWE-" + std::to_string(20 + i));
    m.cwe_count = cwes;
    return m;
}

// Pairs over random CVEs labelled by "both exploited and CVSS product > 50".
struct RuleData {
    MetaStore store;
    std::vector<PairExample> train, val;
};

RuleData rule_data(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<CveMeta> records;
    for (int i = 0; i < 120; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "CVE-2020-%05d", 10000 + i);
        const double score = std::round(rng.uniform(1.0, 10.0) * 10.0) / 10.0;
        records.push_back(meta(id, score, score >= 9 ? Severity::Critical : score >= 7 ? Severity::High : Severity::Medium,
                               2005 + static_cast<int>(rng.below(20)), rng.bernoulli(0.5), static_cast<int>(rng.below(60)),
                               static_cast<int>(rng.below(3))));
    }
    RuleData d;
    d.store = MetaStore::from_records(records);
    auto make = [&](std::size_t count) {
        std::vector<PairExample> out;
        while (out.size() < count) {
            const auto& a = records[rng.below(records.size())];
            const auto& b = records[rng.below(records.size())];
            if (a.cve_id == b.cve_id) continue;
            const int label = a.exploited && b.exploited && a.cvss_base * b.cvss_base > 50.0;
            auto [x, y] = canonical_pair(a.cve_id, b.cve_id);
            out.push_back({x, y, label, "rule"});
        }
        return out;
    };
    d.train = make(800);
    d.val = make(200);
    return d;
}

} // namespace

TEST_SUITE("cascade_predictor") {

TEST_CASE("hand-computed pair features") {
    const MetaStore store = MetaStore::from_records({meta("CVE-2021-0001", 9.8, Severity::Critical, 2021, true, 25, 1),
                                                     meta("CVE-2021-0002", 7.5, Severity::High, 2020, true, 10, 2)});
    const PairFeatures f = build_pair_features("CVE-2021-0002", "CVE-2021-0001", store);
    const std::vector<double> interaction(f.begin() + 18, f.end());
    CHECK(interaction[0] == doctest::Approx(2.3));
    CHECK(interaction[1] == doctest::Approx(73.5));
    CHECK(interaction[2] == 1.0);
    CHECK(interaction[3] == 1.0);
    const std::vector<double> a_block(f.begin(), f.begin() + 9);
    const std::vector<double> expected{9.8, 0, 0, 0, 1, 0.7, 1, 0.25, 1};
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(a_block[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    const auto direct = cve_block(store.lookup("CVE-2021-0001"));
    CHECK(std::vector<double>(direct.begin(), direct.end()) == a_block);
}

TEST_CASE("identical and missing metadata") {
    const MetaStore store = MetaStore::from_records({meta("CVE-2021-0001", 6.0, Severity::Medium, 2021, true, 5, 0),
                                                     meta("CVE-2021-0002", 6.0, Severity::Medium, 2021, true, 5, 0)});
    const PairFeatures same = build_pair_features("CVE-2021-0001", "CVE-2021-0002", store);
    CHECK(same[18] == 0.0);
    CHECK(same[19] == doctest::Approx(36.0));
    CHECK(same[20] == 0.0);
    CHECK(same[21] == 1.0);
    const PairFeatures none = build_pair_features("CVE-1999-0001", "CVE-1999-0002", store);
    for (double v : none) CHECK(v == 0.0);
}

TEST_CASE("order invariance and interaction ranges on the bundled snapshot") {
    const MetaStore store = load_snapshot({testsupport::fixtures() / "nvd_snapshot.json"});
    std::vector<std::string> ids;
    for (const auto& [id, _] : store.records()) ids.push_back(id);
    Rng rng(3);
    for (int i = 0; i < 300; ++i) {
        const std::string& x = ids[rng.below(ids.size())];
        const std::string& y = ids[rng.below(ids.size())];
        const PairFeatures f = build_pair_features(x, y, store);
        CHECK(f.size() == kPairFeatureWidth);
        CHECK(f == build_pair_features(y, x, store));
        CHECK(f[18] >= 0.0);
        CHECK(f[19] >= 0.0);
        CHECK(f[19] <= 100.0);
        CHECK((f[21] == 0.0 || f[21] == 1.0));
    }
    CHECK(feature_names().size() == 22);
}

TEST_CASE("coverage counts missing ids") {
    const MetaStore store = MetaStore::from_records({meta("CVE-2021-0001", 6.0, Severity::Medium, 2021, true, 5, 0)});
    const std::vector<PairExample> pairs{{"CVE-2021-0001", "CVE-2021-0002", 1, ""}, {"CVE-2021-0003", "CVE-2021-0004", 0, ""},
                                         {"CVE-2021-0001", "CVE-2021-0001", 0, ""}};
    const PairCoverage c = pair_coverage(pairs, store);
    CHECK(c.pairs == 3);
    CHECK(c.one_missing == 1);
    CHECK(c.both_missing == 1);
}

TEST_CASE("config") {
    MlpConfig c;
    CHECK(c.dropout == 0.3);
    CHECK(c.lr == 1e-3);
    CHECK(c.max_epochs == 50);
    CHECK(c.patience == 10);
    CHECK(MlpConfig::from_json(c.to_json()).to_json() == c.to_json());
    nlohmann::json bad = c.to_json();
    bad["widths"] = {22, 8, 1};
    CHECK(error_kind_of([&] { MlpConfig::from_json(bad); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("gradient check of the full stack") {
    const auto r = gradcheck_mlp();
    CHECK(r.pass);
    CHECK(r.max_relative_error < 1e-4);
    CHECK(r.entries.size() == 8);
}

TEST_CASE("separable rule is learned") {
    const RuleData d = rule_data(5);
    MlpConfig config;
    const MlpTrainResult r = train_mlp(d.train, d.val, d.store, config);
    CHECK(r.best_validation_auc >= 0.95);
    CHECK(r.history.size() <= 50);

    const MlpTrainResult again = train_mlp(d.train, d.val, d.store, config);
    CHECK(mlp_history_to_json(again) == mlp_history_to_json(r));
    CHECK(tensor::serialize_checkpoint(again.checkpoint) == tensor::serialize_checkpoint(r.checkpoint));

    const std::vector<double> p = predict_pairs(r.checkpoint, d.val, d.store);
    std::vector<int> labels;
    for (const auto& e : d.val) labels.push_back(e.label);
    CHECK(roc_auc(p, labels) == doctest::Approx(r.best_validation_auc));
}

TEST_CASE("training errors") {
    const RuleData d = rule_data(6);
    std::vector<PairExample> all_pos = d.val;
    for (auto& e : all_pos) e.label = 1;
    CHECK(error_kind_of([&] { train_mlp(d.train, all_pos, d.store, MlpConfig{}); }) == ErrorKind::SingleClassValidation);
    CHECK(error_kind_of([&] { train_mlp({}, d.val, d.store, MlpConfig{}); }) == ErrorKind::EmptySplit);
}

TEST_CASE("early stopping respects patience") {
    const RuleData d = rule_data(7);
    MlpConfig config;
    config.max_epochs = 50;
    config.patience = 3;
    const MlpTrainResult r = train_mlp(d.train, d.val, d.store, config);
    if (r.stopped_early) CHECK(static_cast<int>(r.history.size()) == r.best_epoch + config.patience);
    for (const auto& e : r.history) CHECK(e.validation_auc <= r.best_validation_auc);
}

TEST_CASE("scoring and ranking") {
    const RuleData d = rule_data(5);
    const MlpTrainResult r = train_mlp(d.train, d.val, d.store, MlpConfig{});
    CHECK(score_pairs(r.checkpoint, {}, d.store).empty());

    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& e : d.val) pairs.emplace_back(e.cve_b, e.cve_a);
    const auto ranking = score_pairs(r.checkpoint, pairs, d.store);
    CHECK(ranking.size() <= pairs.size());
    for (std::size_t i = 1; i < ranking.size(); ++i) CHECK(ranking[i - 1].probability >= ranking[i].probability);
    for (const auto& p : ranking) CHECK(p.cve_a < p.cve_b);
    const auto again = score_pairs(r.checkpoint, pairs, d.store);
    CHECK(ranking_to_csv(again) == ranking_to_csv(ranking));

    const auto parsed = parse_ranking_csv(ranking_to_csv(ranking));
    REQUIRE(parsed.size() == ranking.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        CHECK(parsed[i].cve_a == ranking[i].cve_a);
        CHECK(parsed[i].probability == ranking[i].probability);
    }
    CHECK(error_kind_of([] { parse_ranking_csv("rank,cve_a,cve_b,probability\n1,A\n"); }) == ErrorKind::MalformedList);

    tensor::ModelCheckpoint wrong = r.checkpoint;
    wrong.model_kind = "HGAT";
    CHECK(error_kind_of([&] { predict_pairs(wrong, d.val, d.store); }) == ErrorKind::IncompatibleCheckpoint);
}

TEST_CASE("feature stats") {
    std::vector<PairFeatures> rows(3);
    rows[0].fill(1.0);
    rows[1].fill(1.0);
    rows[2].fill(1.0);
    rows[0][0] = 1.0;
    rows[1][0] = 2.0;
    rows[2][0] = 3.0;
    const FeatureStats s = compute_feature_stats(rows);
    CHECK(s.mean[0] == doctest::Approx(2.0));
    CHECK(s.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
    // zero-variance z-score column and a pass-through column keep their values
    CHECK(s.mean[5] == 0.0);
    const std::vector<double> n = normalize_rows(rows, s);
    CHECK(n[0] == doctest::Approx(-1.0 / std::sqrt(2.0 / 3.0)));
    CHECK(n[5] == 1.0);
    const FeatureStats back = feature_stats_from_json(feature_stats_to_json(s));
    CHECK(back.mean == s.mean);
    CHECK(back.stddev == s.stddev);
}

}
