#include "sbomchain/metrics.hpp"

#include "sbomchain/error.hpp"
#include "sbomchain/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sbomchain {

ConfusionCounts confusion_counts(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw Error(ErrorKind::LengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                                   std::to_string(labels.size()) + " labels");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] == 1;
        const bool y = labels[i] == 1;
        if (p && y) ++c.tp;
        else if (p) ++c.fp;
        else if (y) ++c.fn;
        else ++c.tn;
    }
    return c;
}

ClassificationMetrics metrics_from_counts(const ConfusionCounts& c) {
    ClassificationMetrics m;
    m.counts = c;
    m.support = c.total();
    const auto d = [](std::size_t x) { return static_cast<double>(x); };
    m.accuracy = m.support == 0 ? 0.0 : d(c.tp + c.tn) / d(m.support);
    if (c.tp + c.fp > 0) m.precision = d(c.tp) / d(c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = d(c.tp) / d(c.tp + c.fn);
    if (m.precision && m.recall) m.f1 = d(2 * c.tp) / d(2 * c.tp + c.fp + c.fn);
    return m;
}

ClassificationMetrics confusion_metrics(std::span<const int> predictions, std::span<const int> labels) {
    return metrics_from_counts(confusion_counts(predictions, labels));
}

std::string metrics_to_json(const ClassificationMetrics& m, int indent) {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j = {{"accuracy", m.accuracy},
              {"precision", opt(m.precision)},
              {"recall", opt(m.recall)},
              {"f1", opt(m.f1)},
              {"support", m.support},
              {"confusion", {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"tn", m.counts.tn}, {"fn", m.counts.fn}}}};
    return j.dump(indent);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // walk groups of equal score from low to high
    double concordant = 0.0;
    std::size_t neg_below = 0, pos_total = 0, neg_total = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i, pos = 0, neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == 1 ? pos : neg) += 1;
            ++j;
        }
        concordant += static_cast<double>(pos * neg_below) + 0.5 * static_cast<double>(pos * neg);
        neg_below += neg;
        pos_total += pos;
        neg_total += neg;
        i = j;
    }
    if (pos_total == 0 || neg_total == 0) throw Error(ErrorKind::SingleClass, "roc_auc needs both classes");
    return concordant / (static_cast<double>(pos_total) * static_cast<double>(neg_total));
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& f) {
    const double total = f.train + f.val + f.test;
    if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorKind::DegenerateSplit, "fractions must be non-negative and sum to 1");
    }
    const double nd = static_cast<double>(n);
    const auto train = std::min(n, static_cast<std::size_t>(std::floor(nd * f.train + 1e-9)));
    const auto val = std::min(n - train, static_cast<std::size_t>(std::floor(nd * f.val + 1e-9)));
    return {train, val, n - train - val};
}

IdSplit split_sboms(const std::vector<std::string>& sbom_ids, const SplitFractions& fractions, std::uint64_t seed) {
    const auto sizes = split_sizes(sbom_ids.size(), fractions);
    const std::array<double, 3> f{fractions.train, fractions.val, fractions.test};
    for (std::size_t k = 0; k < 3; ++k) {
        if (f[k] > 0.0 && sizes[k] == 0) throw Error(ErrorKind::DegenerateSplit, "a fold would be empty");
    }
    std::vector<std::string> ids = sbom_ids;
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(ids);
    IdSplit split;
    split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
    split.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(sizes[0]),
                     ids.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
    split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]), ids.end());
    return split;
}

} // namespace sbomchain
