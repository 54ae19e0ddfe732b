#include "sbomchain/error.hpp"
#include "sbomchain/metrics.hpp"
#include "sbomchain/util.hpp"

#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <set>

using namespace sbomchain;
using testsupport::error_kind_of;

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
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

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion metrics examples") {
    const std::vector<int> y{1, 0, 1, 1, 0};
    const ClassificationMetrics perfect = confusion_metrics(y, y);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    // tp=2, fp=1, fn=1, tn=6
    const std::vector<int> pred{1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    const std::vector<int> lab{1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
    const ClassificationMetrics m = confusion_metrics(pred, lab);
    CHECK(m.counts == ConfusionCounts{2, 1, 6, 1});
    CHECK(*m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(*m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(*m.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(m.accuracy == doctest::Approx(0.8));
}

TEST_CASE("all-negative predictor on an 18.72% positive set") {
    std::vector<int> labels(10000, 0);
    std::fill(labels.begin(), labels.begin() + 1872, 1);
    const std::vector<int> pred(labels.size(), 0);
    const ClassificationMetrics m = confusion_metrics(pred, labels);
    CHECK(format_fixed(m.accuracy, 4) == "0.8128");
    CHECK(*m.recall == 0.0);
    CHECK_FALSE(m.precision.has_value());
    CHECK_FALSE(m.f1.has_value());
    const auto j = nlohmann::json::parse(metrics_to_json(m));
    CHECK(j["precision"].is_null());
    CHECK(j["f1"].is_null());
}

TEST_CASE("confusion counts equal brute-force counting") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(60);
        std::vector<int> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.bernoulli(0.4);
            y[i] = rng.bernoulli(0.3);
        }
        std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (p[i] && y[i]) ++tp;
            if (p[i] && !y[i]) ++fp;
            if (!p[i] && !y[i]) ++tn;
            if (!p[i] && y[i]) ++fn;
        }
        const ClassificationMetrics m = confusion_metrics(p, y);
        CHECK(m.counts == ConfusionCounts{tp, fp, tn, fn});
        CHECK(m.counts.total() == n);
        CHECK(m.accuracy == doctest::Approx(double(tp + tn) / double(n)));
        if (tp + fp > 0) CHECK(*m.precision == doctest::Approx(double(tp) / double(tp + fp)));
        else CHECK_FALSE(m.precision.has_value());
    }
    CHECK(error_kind_of([] { confusion_metrics(std::vector<int>{1}, std::vector<int>{1, 0}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("roc auc examples") {
    CHECK(roc_auc(std::vector<double>{0.8, 0.6, 0.4, 0.2}, std::vector<int>{1, 0, 1, 0}) == 0.75);
    CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0}) == 1.0);
    CHECK(roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 0, 1}) == 0.5);
    CHECK(error_kind_of([] { roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); }) == ErrorKind::SingleClass);
    CHECK(error_kind_of([] { roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("roc auc equals brute force and ignores monotone transforms") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(199);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(20)) / 20.0;  // coarse grid forces ties
            y[i] = rng.bernoulli(0.4);
        }
        y[0] = 1;
        y[1] = 0;
        const double auc = roc_auc(s, y);
        CHECK(auc == brute_auc(s, y));
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        CHECK(roc_auc(t, y) == auc);
    }
}

TEST_CASE("split sizes") {
    CHECK(split_sizes(200, {}) == std::array<std::size_t, 3>{140, 30, 30});
    CHECK(split_sizes(10, {}) == std::array<std::size_t, 3>{7, 1, 2});
    std::vector<std::string> ids;
    for (int i = 0; i < 200; ++i) ids.push_back("sbom-" + std::to_string(i));
    const IdSplit a = split_sboms(ids, {}, 7);
    CHECK(a.train.size() == 140);
    CHECK(a.val.size() == 30);
    CHECK(a.test.size() == 30);
    std::set<std::string> all(a.train.begin(), a.train.end());
    all.insert(a.val.begin(), a.val.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == 200);
    const IdSplit b = split_sboms(ids, {}, 7);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(split_sboms(ids, {}, 8).train != a.train);
    CHECK(error_kind_of([&] { split_sboms({"a", "b"}, {}, 1); }) == ErrorKind::DegenerateSplit);
    CHECK(error_kind_of([&] { split_sboms(ids, {0.5, 0.2, 0.2}, 1); }) == ErrorKind::DegenerateSplit);
}

}
