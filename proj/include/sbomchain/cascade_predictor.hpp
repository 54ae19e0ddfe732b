#pragma once

#include "sbomchain/chain_corpus.hpp"
#include "sbomchain/nvd_store.hpp"
#include "sbomchain/tensor.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sbomchain::mlp {

inline constexpr std::size_t kPairFeatureWidth = 22;
inline constexpr std::size_t kPerCveWidth = 9;

using PairFeatures = std::array<double, kPairFeatureWidth>;

/// Names of the 22 columns, per-CVE blocks prefixed a_ and b_.
const std::array<std::string, kPairFeatureWidth>& feature_names();
/// Columns that are z-scored; one-hot and boolean columns pass through.
const std::array<bool, kPairFeatureWidth>& zscore_columns();

/// Per-CVE block: cvss, severity one-hot (4), year_norm, exploited,
/// min(refs,100)/100, cwe_count. Ids missing from the store encode as zeros.
std::array<double, kPerCveWidth> cve_block(const std::optional<CveMeta>& meta);

/// Blocks follow the canonical order of the two ids. The year gap is 0 when
/// either year is unknown.
PairFeatures build_pair_features(const std::string& x, const std::string& y, const MetaStore& store);

struct PairCoverage {
    std::size_t pairs = 0;
    std::size_t one_missing = 0;
    std::size_t both_missing = 0;
};

PairCoverage pair_coverage(std::span<const PairExample> pairs, const MetaStore& store);

struct MlpConfig {
    static constexpr std::array<std::size_t, 5> kWidths{22, 64, 32, 16, 1};
    double dropout = 0.3;
    double lr = 1e-3;
    int max_epochs = 50;
    int patience = 10;
    int batch_size = 32;
    double negative_ratio = 2.0;
    std::uint64_t seed = 7;

    nlohmann::json to_json() const;
    /// Missing keys keep defaults; a `widths` key must equal kWidths.
    static MlpConfig from_json(const nlohmann::json& j);
    void validate() const;
};

class MlpModel {
public:
    explicit MlpModel(const MlpConfig& config);

    /// Logits, one row per input row.
    tensor::Tensor forward(const tensor::Tensor& x, bool train, Rng& rng);

    tensor::ParamStore& params() { return params_; }
    const MlpConfig& config() const { return config_; }

private:
    MlpConfig config_;
    tensor::ParamStore params_;
};

struct FeatureStats {
    std::array<double, kPairFeatureWidth> mean{};
    std::array<double, kPairFeatureWidth> stddev{};
};

FeatureStats compute_feature_stats(std::span<const PairFeatures> rows);
nlohmann::json feature_stats_to_json(const FeatureStats& s);
FeatureStats feature_stats_from_json(const nlohmann::json& j);
/// Row-major n x 22 matrix of normalised features.
std::vector<double> normalize_rows(std::span<const PairFeatures> rows, const FeatureStats& stats);

struct MlpEpoch {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_auc = 0.0;
};

struct MlpTrainResult {
    tensor::ModelCheckpoint checkpoint;
    std::vector<MlpEpoch> history;
    int best_epoch = 0;
    double best_validation_auc = 0.0;
    bool stopped_early = false;
};

std::string mlp_history_to_json(const MlpTrainResult& result);

/// Throws Error{EmptySplit} or Error{SingleClassValidation}.
MlpTrainResult train_mlp(std::span<const PairExample> train, std::span<const PairExample> validation,
                         const MetaStore& store, const MlpConfig& config);

/// Probabilities in input order. Throws Error{IncompatibleCheckpoint}.
std::vector<double> predict_pairs(const tensor::ModelCheckpoint& ckpt, std::span<const PairExample> pairs,
                                  const MetaStore& store);

struct RankedPair {
    std::string cve_a;
    std::string cve_b;
    double probability = 0.0;
};

/// Canonicalises, deduplicates and sorts by probability descending, ties by pair id.
std::vector<RankedPair> score_pairs(const tensor::ModelCheckpoint& ckpt,
                                    std::span<const std::pair<std::string, std::string>> pairs,
                                    const MetaStore& store);

/// CSV `rank,cve_a,cve_b,probability`, rank starting at 1.
std::string ranking_to_csv(std::span<const RankedPair> ranking);
/// Throws Error{MalformedList}.
std::vector<RankedPair> parse_ranking_csv(std::string_view contents);


/// Central-difference check of the full MLP on a small random batch.
tensor::GradCheckReport gradcheck_mlp(double tolerance = 1e-4, double h = 1e-5);

} // namespace sbomchain::mlp
