#include "sbomchain/cascade_analysis.hpp"
#include "sbomchain/error.hpp"
#include "sbomchain/sbom.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>

using namespace sbomchain;
using mlp::RankedPair;
using testsupport::Bom;
using testsupport::error_kind_of;

namespace {

EvidenceGraph graph_of(const Bom& bom) {
    return build_graph(parse_cyclonedx(bom.str(), "g"), MetaStore{}, FeatureSpec::standard());
}

} // namespace

TEST_SUITE("cascade_analysis") {

TEST_CASE("three links, tau 0.5, length 3") {
    const std::vector<RankedPair> links{{"A", "B", 0.9}, {"B", "C", 0.8}, {"A", "C", 0.2}};
    const auto chains = compose_chains(links, 0.5, 3);
    REQUIRE(chains.size() == 3);
    CHECK(chains[0].cve_ids == std::vector<std::string>{"A", "B"});
    CHECK(chains[0].chain_score == doctest::Approx(0.9));
    CHECK(chains[1].cve_ids == std::vector<std::string>{"A", "B", "C"});
    CHECK(chains[1].chain_score == doctest::Approx(std::sqrt(0.72)));
    CHECK(chains[1].link_scores == std::vector<double>{0.9, 0.8});
    CHECK(chains[2].cve_ids == std::vector<std::string>{"B", "C"});
    CHECK(oracle::compare_chains(chains, oracle::chains(links, 0.5, 3)).empty());
}

TEST_CASE("nothing above tau") {
    const std::vector<RankedPair> links{{"A", "B", 0.3}, {"B", "C", 0.49}};
    CHECK(compose_chains(links, 0.5, 4).empty());
}

TEST_CASE("complete graph on four CVEs") {
    std::vector<RankedPair> links;
    const std::vector<std::string> ids{"A", "B", "C", "D"};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) links.push_back({ids[i], ids[j], 0.6 + 0.05 * double(i + j)});
    }
    const auto chains = compose_chains(links, 0.5, 4);
    // 6 edges + 12 paths of 3 nodes + 12 of 4 nodes, one direction each
    CHECK(chains.size() == 6 + 12 + 12);
    CHECK(oracle::compare_chains(chains, oracle::chains(links, 0.5, 4)).empty());
}

TEST_CASE("random link graphs match the enumeration and tau is monotone") {
    Rng rng(101);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        const auto links = oracle::random_links(rng, n, 0.6);
        const double tau = rng.uniform(0.05, 0.9);
        const std::size_t len = 2 + rng.below(4);
        const auto got = compose_chains(links, tau, len);
        CHECK(oracle::compare_chains(got, oracle::chains(links, tau, len)) == "");
        CHECK(compose_chains(links, std::min(0.99, tau + 0.1), len).size() <= got.size());
    }
}

TEST_CASE("compose arguments") {
    const std::vector<RankedPair> links{{"A", "B", 0.9}};
    CHECK(error_kind_of([&] { compose_chains(links, 0.0, 4); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind_of([&] { compose_chains(links, 1.0, 4); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind_of([&] { compose_chains(links, 0.5, 1); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("chains json round trip") {
    const std::vector<RankedPair> links{{"A", "B", 0.9}, {"B", "C", 0.8}, {"A", "C", 0.7}};
    const auto chains = compose_chains(links, 0.5, 3);
    const auto j = chains_to_json(chains, 0.5, 3);
    CHECK(j["count"] == chains.size());
    const auto back = chains_from_json(j);
    REQUIRE(back.size() == chains.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].cve_ids == chains[i].cve_ids);
        CHECK(back[i].chain_score == chains[i].chain_score);
    }
    CHECK(error_kind_of([] { chains_from_json(nlohmann::json::object()); }) == ErrorKind::MalformedDocument);
}

TEST_CASE("projection examples") {
    Bom bom;
    bom.component("P").component("Q").component("R").depends("P", {"Q"});
    bom.vuln("CVE-2021-0001", {"P"}).vuln("CVE-2021-0002", {"Q"}).vuln("CVE-2021-0003", {"R"});
    const EvidenceGraph g = graph_of(bom);

    const std::vector<std::string> connected{"CVE-2021-0001", "CVE-2021-0002"};
    const ProjectionResult a = project_chain("c1", connected, g);
    CHECK(a.induced_nodes.size() == 2);
    CHECK(a.induced_edges.size() == 1);
    CHECK(a.connectivity == 1);
    CHECK(a.fully_mapped);
    CHECK(verdict(a) == "CONNECTED");
    CHECK(oracle::check_projection(a, connected, g) == "");

    const std::vector<std::string> partial{"CVE-2021-0001", "CVE-2021-9999"};
    const ProjectionResult b = project_chain("c2", partial, g);
    CHECK(b.unmapped_cves == std::vector<std::string>{"CVE-2021-9999"});
    CHECK_FALSE(b.fully_mapped);
    CHECK(verdict(b) == "PARTIAL");

    const std::vector<std::string> split{"CVE-2021-0001", "CVE-2021-0003"};
    const ProjectionResult c = project_chain("c3", split, g);
    CHECK(c.connectivity == 2);
    CHECK(verdict(c) == "DISCONNECTED");
    CHECK(oracle::check_projection(c, split, g) == "");

    const std::vector<std::string> missing{"CVE-2000-0001", "CVE-2000-0002"};
    const ProjectionResult d = project_chain("c4", missing, g);
    CHECK(d.induced_nodes.empty());
    CHECK(d.induced_edges.empty());
    CHECK_FALSE(d.fully_mapped);
    CHECK(verdict(d) == "UNMAPPED");

    const ProjectionResult back = projection_from_json(projection_to_json(a));
    CHECK(back.induced_nodes == a.induced_nodes);
    CHECK(back.induced_edges == a.induced_edges);
    CHECK(back.mapped == a.mapped);
    CHECK(back.connectivity == a.connectivity);
}

TEST_CASE("triage reports") {
    for (ReportFormat f : {ReportFormat::Json, ReportFormat::Dot, ReportFormat::Text}) {
        const std::string empty = triage_report({}, {}, f);
        CHECK_FALSE(empty.empty());
        if (f == ReportFormat::Json) CHECK(nlohmann::json::parse(empty)["projections"].empty());
    }

    Bom bom;
    bom.component("P").component("Q").depends("P", {"Q"}).vuln("CVE-2021-0001", {"P"}).vuln("CVE-2021-0002", {"Q"});
    const EvidenceGraph g = graph_of(bom);
    const std::vector<ProjectionResult> projections{project_chain("c1", {"CVE-2021-0001", "CVE-2021-0002"}, g)};
    const std::vector<RankedPair> links{{"CVE-2021-0001", "CVE-2021-0002", 0.9}};
    const auto candidates = compose_chains(links, 0.5, 4);
    const std::string text = triage_report(projections, candidates, ReportFormat::Text);
    CHECK(text.find("verdict: CONNECTED") != std::string::npos);
    CHECK(text == triage_report(projections, candidates, ReportFormat::Text));
    const auto j = nlohmann::json::parse(triage_report(projections, candidates, ReportFormat::Json));
    CHECK(j["projections"].size() == 1);
    CHECK(triage_report(projections, candidates, ReportFormat::Dot).rfind("digraph", 0) == 0);

    CHECK(parse_report_format("txt") == ReportFormat::Text);
    CHECK(file_extension(ReportFormat::Dot) == "dot");
    CHECK(error_kind_of([] { parse_report_format("pdf"); }) == ErrorKind::UnknownFormat);
}

}
