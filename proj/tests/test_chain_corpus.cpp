#include "sbomchain/chain_corpus.hpp"
#include "sbomchain/error.hpp"
#include "sbomchain/util.hpp"

#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>

using namespace sbomchain;
using testsupport::error_kind_of;

namespace {

ChainRecord chain(const std::string& id, std::vector<std::string> cves, int year = 0,
                  SourceType source = SourceType::Disclosure) {
    ChainRecord c;
    c.chain_id = id;
    c.cve_ids = std::move(cves);
    c.year = year;
    c.source_type = source;
    return c;
}

std::vector<ChainRecord> bundled() { return load_chains(testsupport::fixtures() / "chains.jsonl"); }

std::set<std::pair<std::string, std::string>> pair_set(const std::vector<PairExample>& v) {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& p : v) out.emplace(p.cve_a, p.cve_b);
    return out;
}

} // namespace

TEST_SUITE("chain_corpus") {

TEST_CASE("ProxyLogon line") {
    const auto chains = parse_chains(
        R"({"chain_id":"proxylogon","source_type":"INCIDENT","cve_ids":["CVE-2021-26855","CVE-2021-26857","CVE-2021-26858","CVE-2021-27065"],"reference":"r","year":2021})"
        "\n\n");
    REQUIRE(chains.size() == 1);
    CHECK(chains[0].cve_ids.size() == 4);
    CHECK(chains[0].source_type == SourceType::Incident);
    CHECK(chains[0].year == 2021);
}

TEST_CASE("bad chain files") {
    CHECK(error_kind_of([] { parse_chains(R"({"chain_id":"a","source_type":"DISCLOSURE","cve_ids":["CVE-2021-0001"]})"); }) ==
          ErrorKind::ChainTooShort);
    CHECK(error_kind_of([] {
              parse_chains(R"({"chain_id":"a","source_type":"DISCLOSURE","cve_ids":["CVE-2021-0001","CVE-2021-0002"]})"
                           "\n"
                           R"({"chain_id":"a","source_type":"DISCLOSURE","cve_ids":["CVE-2021-0003","CVE-2021-0004"]})");
          }) == ErrorKind::DuplicateChainId);
    CHECK(error_kind_of([] { parse_chains("{nope"); }) == ErrorKind::MalformedChainFile);
    CHECK(error_kind_of([] {
              parse_chains(R"({"chain_id":"a","source_type":"DISCLOSURE","cve_ids":["CVE-2021-0001","GHSA-1"]})");
          }) == ErrorKind::MalformedChainFile);
    CHECK(error_kind_of([] {
              parse_chains(R"({"chain_id":"a","source_type":"DISCLOSURE","cve_ids":["CVE-2021-0001","CVE-2021-0001"]})");
          }) == ErrorKind::MalformedChainFile);
}

TEST_CASE("jsonl round trip") {
    const auto chains = bundled();
    const auto again = parse_chains(chains_to_jsonl(chains));
    REQUIRE(again.size() == chains.size());
    for (std::size_t i = 0; i < chains.size(); ++i) {
        CHECK(again[i].chain_id == chains[i].chain_id);
        CHECK(again[i].cve_ids == chains[i].cve_ids);
        CHECK(again[i].year == chains[i].year);
    }
}

TEST_CASE("corpus stats") {
    const CorpusStats empty = corpus_stats({});
    CHECK(empty.count == 0);
    CHECK_FALSE(empty.median_length.has_value());
    CHECK_FALSE(empty.mean_length.has_value());

    const CorpusStats small = corpus_stats({chain("a", {"CVE-2020-0001", "CVE-2020-0002"}),
                                            chain("b", {"CVE-2020-0003", "CVE-2020-0004"}),
                                            chain("c", {"CVE-2020-0005", "CVE-2020-0006", "CVE-2020-0007", "CVE-2020-0008"})});
    CHECK(*small.median_length == 2.0);
    CHECK(*small.mean_length == 2.67);

    const CorpusStats s = corpus_stats(bundled());
    CHECK(s.count == 35);
    CHECK(s.by_source == std::map<std::string, std::size_t>{{"DISCLOSURE", 27}, {"INCIDENT", 8}});
    CHECK(*s.min_length == 2);
    CHECK(*s.max_length == 4);
    CHECK(*s.median_length == 2.0);
    CHECK(*s.mean_length == 2.51);
    const auto j = nlohmann::json::parse(corpus_stats_to_json(s));
    CHECK(j["count"] == 35);
}

TEST_CASE("positive pairs") {
    const auto three = positive_pairs({chain("x", {"A", "B", "C"})});
    CHECK(pair_set(three) == std::set<std::pair<std::string, std::string>>{{"A", "B"}, {"A", "C"}, {"B", "C"}});
    for (const auto& p : three) {
        CHECK(p.label == 1);
        CHECK(p.origin == "x");
    }
    CHECK(positive_pairs({chain("y", {"B", "A"})}).size() == 1);
    CHECK(positive_pairs({chain("y", {"B", "A"})})[0].cve_a == "A");
    CHECK(positive_pairs({chain("z", {"A", "B", "C", "D"})}).size() == 6);

    // enumeration oracle over the bundled corpus (its chains share no CVE pair)
    std::size_t expected = 0;
    for (const auto& c : bundled()) expected += c.cve_ids.size() * (c.cve_ids.size() - 1) / 2;
    CHECK(positive_pairs(bundled()).size() == expected);

    // a pair seen in two chains is kept once with the first origin
    const auto shared = positive_pairs({chain("first", {"A", "B"}), chain("second", {"B", "A", "C"})});
    CHECK(shared.size() == 3);
    for (const auto& p : shared) {
        if (p.cve_a == "A" && p.cve_b == "B") CHECK(p.origin == "first");
    }
}

TEST_CASE("negative sampling") {
    const auto negs = sample_negatives(positive_pairs({chain("x", {"A", "B"})}), {"A", "B", "C"}, 2.0, 1);
    CHECK(pair_set(negs) == std::set<std::pair<std::string, std::string>>{{"A", "C"}, {"B", "C"}});

    const auto chains = bundled();
    const auto pos = positive_pairs(chains);
    const auto n1 = sample_negatives(chains, 2.0, 7);
    CHECK(n1.size() == 2 * pos.size());
    CHECK(sample_negatives(chains, 2.0, 7) == n1);
    const auto positives = pair_set(pos);
    for (const auto& p : n1) {
        CHECK(p.label == 0);
        CHECK(p.cve_a < p.cve_b);
        CHECK_FALSE(positives.contains({p.cve_a, p.cve_b}));
    }
    CHECK(pair_set(n1).size() == n1.size());
    CHECK(sample_negatives(chains, 1.5, 7).size() == static_cast<std::size_t>(std::llround(1.5 * pos.size())));

    CHECK(error_kind_of([] { sample_negatives({chain("x", {"A", "B"})}, 2.0, 1); }) == ErrorKind::InsufficientNegativeSpace);
    CHECK(error_kind_of([&] { sample_negatives(chains, 0.0, 1); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("PAIR split on 10 examples") {
    std::vector<PairExample> ex;
    for (int i = 0; i < 10; ++i) ex.push_back({"CVE-2020-000" + std::to_string(i), "CVE-2021-0001", i % 2, "o"});
    const PairSplit s = split_pairs(ex, {}, SplitStrategy::Pair, {}, 3);
    CHECK(s.train.size() == 7);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 2);
}

TEST_CASE("CHAIN split keeps each chain in one fold") {
    const auto chains = bundled();
    auto examples = positive_pairs(chains);
    const auto negs = sample_negatives(chains, 2.0, 7);
    examples.insert(examples.end(), negs.begin(), negs.end());
    for (std::uint64_t seed : {1, 2, 3}) {
        const PairSplit s = split_pairs(examples, chains, SplitStrategy::Chain, {}, seed);
        std::map<std::string, int> fold_of;
        int fold = 0;
        for (const auto* part : {&s.train, &s.val, &s.test}) {
            for (const auto& p : *part) {
                if (p.label != 1) continue;
                auto [it, inserted] = fold_of.emplace(p.origin, fold);
                CHECK(it->second == fold);
            }
            ++fold;
        }
        CHECK(s.train.size() + s.val.size() + s.test.size() == examples.size());
    }
}

TEST_CASE("TEMPORAL split orders years") {
    auto chains = bundled();
    auto examples = positive_pairs(chains);
    const PairSplit s = split_pairs(examples, chains, SplitStrategy::Temporal, {}, 1);
    std::map<std::string, int> year;
    for (const auto& c : chains) year[c.chain_id] = c.year;
    int max_train = 0, min_test = 1 << 30;
    for (const auto& p : s.train) max_train = std::max(max_train, year[p.origin]);
    for (const auto& p : s.test) min_test = std::min(min_test, year[p.origin]);
    CHECK(max_train <= min_test);
}

TEST_CASE("split strategies and degenerate folds") {
    CHECK(parse_split_strategy("chain") == SplitStrategy::Chain);
    CHECK(parse_split_strategy("TEMPORAL") == SplitStrategy::Temporal);
    CHECK(error_kind_of([] { parse_split_strategy("RANDOM"); }) == ErrorKind::UnknownStrategy);
    const auto two = positive_pairs({chain("x", {"A", "B"})});
    CHECK(error_kind_of([&] { split_pairs(two, {}, SplitStrategy::Pair, {}, 1); }) == ErrorKind::DegenerateSplit);
}

TEST_CASE("chain years come from the store when missing") {
    std::vector<ChainRecord> chains{chain("x", {"CVE-2019-0001", "CVE-2017-0002"})};
    CveMeta a, b;
    a.cve_id = "CVE-2019-0001";
    a.published_year = 2019;
    b.cve_id = "CVE-2017-0002";
    b.published_year = 2018;
    fill_chain_years(chains, MetaStore::from_records({a, b}));
    CHECK(chains[0].year == 2018);
}

TEST_CASE("pairs csv round trip") {
    const auto chains = bundled();
    auto examples = positive_pairs(chains);
    const auto negs = sample_negatives(chains, 2.0, 7);
    examples.insert(examples.end(), negs.begin(), negs.end());
    const std::string csv = pairs_to_csv(examples);
    CHECK(csv.rfind("cve_a,cve_b,label,origin\n", 0) == 0);
    CHECK(parse_pairs_csv(csv) == examples);
    CHECK(error_kind_of([] { parse_pairs_csv("cve_a,cve_b,label,origin\nA,B\n"); }) == ErrorKind::MalformedList);
}

}
