#pragma once

#include "sbomchain/cascade_predictor.hpp"
#include "sbomchain/hgat.hpp"
#include "sbomchain/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sbomchain::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitRuntime = 4;

struct RunConfig {
    std::string sbom_dir;
    std::vector<std::string> snapshots;
    std::string kev;
    std::string chains;
    std::string out_dir = "out";
    hgat::HgatConfig hgat;
    mlp::MlpConfig mlp;
    SplitFractions split;
    /// Pair split strategy for the chain corpus: PAIR, CHAIN or TEMPORAL.
    std::string split_strategy = "PAIR";
    double negative_ratio = 2.0;
    double tau = 0.5;
    std::size_t max_length = 4;
    std::size_t top_k = 20;
    std::uint64_t seed = 7;
    std::string leakage_policy = "STRICT";

    nlohmann::json to_json() const;
    /// Overlays keys present in `j`. Relative paths resolve against `base`.
    /// Unknown keys are rejected with Error{InvalidArgument}.
    void merge_json(const nlohmann::json& j, const std::filesystem::path& base);
    /// Copies the shared seed, ratio and policy into the model configs and validates.
    void finalize();
};

/// Entry point shared by the executable and the tests. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace sbomchain::cli
