#include "sbomchain/cli.hpp"
#include "sbomchain/util.hpp"

#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <sstream>

using namespace sbomchain;
using testsupport::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Fixture pipeline config with absolute paths and a short HGAT run.
std::string quick_config(const TempDir& dir) {
    const auto f = testsupport::fixtures();
    const nlohmann::json j = {{"sbom_dir", (f / "sboms").string()},
                              {"snapshots", {(f / "nvd_snapshot.json").string()}},
                              {"kev", (f / "kev.csv").string()},
                              {"chains", (f / "chains.jsonl").string()},
                              {"seed", 7},
                              {"hgat", {{"max_epochs", 2}, {"hidden_dim", 16}}},
                              {"mlp", {{"max_epochs", 5}, {"patience", 2}}}};
    const auto path = dir / "config.json";
    write_file(path, j.dump(2));
    return path.string();
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
    CHECK(call({}).code == cli::kExitUsage);
    CHECK(call({"frobnicate"}).code == cli::kExitUsage);
    CHECK(call({"ingest", "--no-such-flag"}).code == cli::kExitUsage);
    const Outcome help = call({"--help"});
    CHECK(help.code == cli::kExitOk);
    CHECK(help.out.find("pipeline") != std::string::npos);
}

TEST_CASE("ingest writes its report and the resolved config") {
    TempDir dir;
    const Outcome r = call({"ingest", "--sbom-dir", (testsupport::fixtures() / "sboms").string(), "--out", dir.path().string(),
                            "--seed", "99"});
    REQUIRE(r.code == cli::kExitOk);
    const auto ingest = nlohmann::json::parse(read_file(dir / "ingest.json"));
    CHECK(ingest["sboms"].size() == 12);
    const auto resolved = nlohmann::json::parse(read_file(dir / "config.resolved.json"));
    CHECK(resolved["seed"] == 99);
    CHECK(resolved["hgat"]["seed"] == 99);
    CHECK(resolved["mlp"]["seed"] == 99);
}

TEST_CASE("input errors exit 3 with one line") {
    TempDir dir;
    write_file(dir / "broken.json", "{\"bomFormat\": \"CycloneDX\", \"specVersion\": \"1.5\", \"components\": [");
    const Outcome r = call({"ingest", "--sbom-dir", dir.path().string(), "--out", (dir / "out").string()});
    CHECK(r.code == cli::kExitInput);
    CHECK(r.err.rfind("error: MalformedDocument", 0) == 0);
    CHECK(r.err.find('\n') == r.err.size() - 1);

    write_file(dir / "bad_config.json", R"({"sbom_dir": "x", "colour": "blue"})");
    const Outcome c = call({"ingest", "--config", (dir / "bad_config.json").string()});
    CHECK(c.code == cli::kExitInput);
    CHECK(c.err.rfind("error: InvalidArgument", 0) == 0);

    CHECK(call({"pairs", "--out", dir.path().string()}).code == cli::kExitInput);
    CHECK(call({"synth", "--kind", "trees", "--out", dir.path().string()}).code == cli::kExitInput);
    CHECK(call({"build-graphs", "--sbom-dir", dir.path().string(), "--leakage-policy", "LOOSE", "--out", dir.path().string()}).code ==
          cli::kExitInput);
}

TEST_CASE("config paths resolve against the config file and flags win") {
    TempDir dir;
    const Outcome r = call({"ingest", "--config", (testsupport::fixtures() / "pipeline.json").string(), "--out",
                            dir.path().string(), "--seed", "3"});
    REQUIRE(r.code == cli::kExitOk);
    const auto resolved = nlohmann::json::parse(read_file(dir / "config.resolved.json"));
    CHECK(resolved["seed"] == 3);
    CHECK(std::filesystem::path(resolved["sbom_dir"].get<std::string>()).is_absolute());
    CHECK(resolved["out_dir"] == dir.path().string());
}

TEST_CASE("synth writes graphs and chain corpora") {
    TempDir dir;
    const Outcome g = call({"synth", "--graph-count", "6", "--out", dir.path().string(), "--seed", "5"});
    REQUIRE(g.code == cli::kExitOk);
    CHECK(std::filesystem::exists(dir / "synth_manifest.json"));
    CHECK(std::filesystem::is_directory(dir / "graphs"));
    const Outcome c = call({"synth", "--kind", "chains", "--chain-count", "12", "--out", dir.path().string()});
    REQUIRE(c.code == cli::kExitOk);
    CHECK(c.out.find("synth: 12 chains") == 0);
    CHECK(std::filesystem::exists(dir / "synth_chains.jsonl"));
}

TEST_CASE("stages run separately match the pipeline and repeat byte for byte") {
    TempDir a, b, c;
    const std::string cfg = quick_config(a);
    REQUIRE(call({"pipeline", "--config", cfg, "--out", (a / "run").string()}).code == cli::kExitOk);
    REQUIRE(call({"pipeline", "--config", cfg, "--out", (b / "run").string()}).code == cli::kExitOk);
    for (const char* name : {"hgat.ckpt.json", "mlp.ckpt.json", "ranking.csv", "chains.json", "report.txt", "report.json",
                             "metrics_hgat.json", "metrics_hgat.mask-DEPENDS_ON.json"}) {
        INFO(name);
        CHECK(read_file(a / "run" / name) == read_file(b / "run" / name));
    }

    const std::string out = (c / "run").string();
    for (const char* stage : {"build-graphs", "split", "train-hgat"}) {
        INFO(stage);
        REQUIRE(call({stage, "--config", cfg, "--out", out}).code == cli::kExitOk);
    }
    CHECK(read_file(c / "run" / "hgat.ckpt.json") == read_file(a / "run" / "hgat.ckpt.json"));

    const Outcome eval = call({"eval-hgat", "--config", cfg, "--out", out, "--mask-relation", "NOT_A_RELATION"});
    CHECK(eval.code == cli::kExitInput);
    const Outcome mlp_as_hgat =
        call({"eval-hgat", "--config", cfg, "--out", out, "--checkpoint", (a / "run" / "mlp.ckpt.json").string()});
    CHECK(mlp_as_hgat.code == cli::kExitInput);
    CHECK(mlp_as_hgat.err.rfind("error: IncompatibleCheckpoint", 0) == 0);
}

}
