#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sbomchain {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Precision is absent when nothing was predicted positive, recall when
/// there are no positives; F1 is absent whenever either is.
struct ClassificationMetrics {
    double accuracy = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::size_t support = 0;
    ConfusionCounts counts;
};

ConfusionCounts confusion_counts(std::span<const int> predictions, std::span<const int> labels);
ClassificationMetrics metrics_from_counts(const ConfusionCounts& counts);
/// Throws Error{LengthMismatch}.
ClassificationMetrics confusion_metrics(std::span<const int> predictions, std::span<const int> labels);
/// JSON object {accuracy, precision, recall, f1, support}; absent values are null.
std::string metrics_to_json(const ClassificationMetrics& m, int indent = 2);

/// Mann-Whitney AUC with half credit for ties. Throws Error{SingleClass}
/// when either class is missing, Error{LengthMismatch} on size mismatch.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

/// Train and validation sizes are floor(n * fraction); test takes the rest.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions);

struct IdSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

/// Seeded shuffle then cut. Throws Error{DegenerateSplit} when a fold with a
/// non-zero fraction ends up empty or fractions do not sum to 1.
IdSplit split_sboms(const std::vector<std::string>& sbom_ids, const SplitFractions& fractions, std::uint64_t seed);

} // namespace sbomchain
