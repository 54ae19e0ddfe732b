#include "sbomchain/cascade_predictor.hpp"

#include "sbomchain/error.hpp"
#include "sbomchain/metrics.hpp"
#include "sbomchain/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace sbomchain::mlp {

using nlohmann::json;
using tensor::Tensor;

namespace {

constexpr std::uint64_t kDropoutStream = 0x94d049bb133111ebULL;
constexpr std::uint64_t kOrderStream = 0x2545f4914f6cdd1dULL;

double year_norm(int year) {
    if (year <= 0) return 0.0;
    return std::clamp((year - 2000) / 30.0, 0.0, 1.0);
}

} // namespace

const std::array<std::string, kPairFeatureWidth>& feature_names() {
    static const auto names = [] {
        const std::array<std::string, kPerCveWidth> block{"cvss",        "sev_low",   "sev_medium",
                                                          "sev_high",    "sev_critical", "year_norm",
                                                          "exploited",   "refs_norm", "cwe_count"};
        std::array<std::string, kPairFeatureWidth> out;
        for (std::size_t i = 0; i < kPerCveWidth; ++i) {
            out[i] = "a_" + block[i];
            out[kPerCveWidth + i] = "b_" + block[i];
        }
        out[18] = "cvss_abs_diff";
        out[19] = "cvss_product";
        out[20] = "year_gap";
        out[21] = "both_exploited";
        return out;
    }();
    return names;
}

const std::array<bool, kPairFeatureWidth>& zscore_columns() {
    static const auto cols = [] {
        std::array<bool, kPairFeatureWidth> z{};
        for (std::size_t base : {std::size_t{0}, kPerCveWidth}) {
            z[base + 0] = true;
            z[base + 5] = true;
            z[base + 7] = true;
            z[base + 8] = true;
        }
        z[18] = z[19] = z[20] = true;
        return z;
    }();
    return cols;
}

std::array<double, kPerCveWidth> cve_block(const std::optional<CveMeta>& meta) {
    std::array<double, kPerCveWidth> b{};
    if (!meta) return b;
    b[0] = meta->cvss_base;
    const auto onehot = severity_one_hot(meta->severity);
    std::copy(onehot.begin(), onehot.end(), b.begin() + 1);
    b[5] = year_norm(meta->published_year);
    b[6] = meta->exploited ? 1.0 : 0.0;
    b[7] = std::min(meta->reference_count, 100) / 100.0;
    b[8] = static_cast<double>(meta->cwe_count);
    return b;
}

PairFeatures build_pair_features(const std::string& x, const std::string& y, const MetaStore& store) {
    const auto [a, b] = canonical_pair(x, y);
    const auto ma = store.lookup(a);
    const auto mb = store.lookup(b);
    PairFeatures f{};
    const auto ba = cve_block(ma);
    const auto bb = cve_block(mb);
    std::copy(ba.begin(), ba.end(), f.begin());
    std::copy(bb.begin(), bb.end(), f.begin() + kPerCveWidth);
    f[18] = std::abs(ba[0] - bb[0]);
    f[19] = ba[0] * bb[0];
    const int ya = ma ? ma->published_year : 0;
    const int yb = mb ? mb->published_year : 0;
    f[20] = ya > 0 && yb > 0 ? std::abs(ya - yb) : 0.0;
    f[21] = ba[6] * bb[6];
    return f;
}

PairCoverage pair_coverage(std::span<const PairExample> pairs, const MetaStore& store) {
    PairCoverage c;
    for (const auto& p : pairs) {
        ++c.pairs;
        const int missing = (store.contains(p.cve_a) ? 0 : 1) + (store.contains(p.cve_b) ? 0 : 1);
        if (missing == 1) ++c.one_missing;
        if (missing == 2) ++c.both_missing;
    }
    return c;
}

json MlpConfig::to_json() const {
    return {{"widths", kWidths},        {"dropout", dropout},     {"lr", lr},
            {"max_epochs", max_epochs}, {"patience", patience},   {"batch_size", batch_size},
            {"negative_ratio", negative_ratio}, {"seed", seed}};
}

MlpConfig MlpConfig::from_json(const json& j) {
    MlpConfig c;
    try {
        if (j.contains("widths") && j["widths"].get<std::vector<std::size_t>>() !=
                                        std::vector<std::size_t>(kWidths.begin(), kWidths.end())) {
            throw Error(ErrorKind::InvalidArgument, "mlp widths are fixed at 22-64-32-16-1");
        }
        c.dropout = j.value("dropout", c.dropout);
        c.lr = j.value("lr", c.lr);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.patience = j.value("patience", c.patience);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.negative_ratio = j.value("negative_ratio", c.negative_ratio);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("mlp config: ") + e.what());
    }
    c.validate();
    return c;
}

void MlpConfig::validate() const {
    if (max_epochs < 1 || patience < 1 || patience >= max_epochs || batch_size < 1) {
        throw Error(ErrorKind::InvalidArgument, "mlp config: need 1 <= patience < max_epochs and batch_size >= 1");
    }
    if (!(dropout >= 0.0 && dropout < 1.0) || !(lr > 0.0) || !(negative_ratio > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "mlp config: dropout in [0,1), lr > 0, negative_ratio > 0");
    }
}

MlpModel::MlpModel(const MlpConfig& config) : config_(config) {
    config_.validate();
    Rng rng(config_.seed);
    for (std::size_t l = 0; l + 1 < MlpConfig::kWidths.size(); ++l) {
        const std::string p = "fc" + std::to_string(l);
        params_.glorot(p + ".W", MlpConfig::kWidths[l], MlpConfig::kWidths[l + 1], rng);
        params_.zeros(p + ".b", 1, MlpConfig::kWidths[l + 1]);
    }
}

Tensor MlpModel::forward(const Tensor& x, bool train, Rng& rng) {
    if (x.cols() != kPairFeatureWidth) {
        throw Error(ErrorKind::ShapeMismatch, "mlp input has " + std::to_string(x.cols()) + " columns");
    }
    Tensor h = x;
    const std::size_t layers = MlpConfig::kWidths.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = "fc" + std::to_string(l);
        h = add(matmul(h, params_.get(p + ".W")), params_.get(p + ".b"));
        if (l + 1 < layers) h = dropout(relu(h), config_.dropout, train, rng);
    }
    return h;
}

FeatureStats compute_feature_stats(std::span<const PairFeatures> rows) {
    FeatureStats s;
    const auto& z = zscore_columns();
    for (std::size_t c = 0; c < kPairFeatureWidth; ++c) {
        s.mean[c] = 0.0;
        s.stddev[c] = 1.0;
        if (!z[c] || rows.empty()) continue;
        double mean = 0.0;
        for (const auto& r : rows) mean += r[c];
        mean /= static_cast<double>(rows.size());
        double var = 0.0;
        for (const auto& r : rows) var += (r[c] - mean) * (r[c] - mean);
        var /= static_cast<double>(rows.size());
        if (var > 1e-24) {
            s.mean[c] = mean;
            s.stddev[c] = std::sqrt(var);
        }
    }
    return s;
}

json feature_stats_to_json(const FeatureStats& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

FeatureStats feature_stats_from_json(const json& j) {
    FeatureStats s;
    try {
        const auto mean = j.at("mean").get<std::vector<double>>();
        const auto sd = j.at("std").get<std::vector<double>>();
        if (mean.size() != kPairFeatureWidth || sd.size() != kPairFeatureWidth) {
            throw Error(ErrorKind::CorruptCheckpoint, "mlp norm stats must have 22 columns");
        }
        std::copy(mean.begin(), mean.end(), s.mean.begin());
        std::copy(sd.begin(), sd.end(), s.stddev.begin());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptCheckpoint, std::string("mlp norm stats: ") + e.what());
    }
    return s;
}

std::vector<double> normalize_rows(std::span<const PairFeatures> rows, const FeatureStats& stats) {
    std::vector<double> out;
    out.reserve(rows.size() * kPairFeatureWidth);
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < kPairFeatureWidth; ++c) out.push_back((r[c] - stats.mean[c]) / stats.stddev[c]);
    }
    return out;
}

std::string mlp_history_to_json(const MlpTrainResult& result) {
    json hist = json::array();
    for (const auto& e : result.history) {
        hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_auc", e.validation_auc}});
    }
    json j = {{"best_epoch", result.best_epoch},
              {"best_validation_auc", result.best_validation_auc},
              {"stopped_early", result.stopped_early},
              {"history", hist}};
    return j.dump(2);
}

namespace {

std::vector<PairFeatures> features_of(std::span<const PairExample> pairs, const MetaStore& store) {
    std::vector<PairFeatures> rows;
    rows.reserve(pairs.size());
    for (const auto& p : pairs) rows.push_back(build_pair_features(p.cve_a, p.cve_b, store));
    return rows;
}

std::vector<double> probabilities(MlpModel& model, std::span<const PairFeatures> rows, const FeatureStats& stats) {
    if (rows.empty()) return {};
    Rng unused(0);
    const Tensor logits =
        model.forward(Tensor::from(rows.size(), kPairFeatureWidth, normalize_rows(rows, stats)), false, unused);
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-logits.values()[i]));
    return out;
}

MlpModel load_mlp(const tensor::ModelCheckpoint& ckpt, FeatureStats& stats) {
    tensor::expect_kind(ckpt, "MLP");
    MlpModel model(MlpConfig::from_json(ckpt.config));
    tensor::restore_params(ckpt, model.params());
    stats = feature_stats_from_json(ckpt.norm_stats);
    return model;
}

} // namespace

MlpTrainResult train_mlp(std::span<const PairExample> train, std::span<const PairExample> validation,
                         const MetaStore& store, const MlpConfig& config) {
    config.validate();
    if (train.empty() || validation.empty()) {
        throw Error(ErrorKind::EmptySplit, "train (" + std::to_string(train.size()) + ") and validation (" +
                                               std::to_string(validation.size()) + ") pairs must be non-empty");
    }
    std::vector<int> val_labels;
    for (const auto& p : validation) val_labels.push_back(p.label);
    const auto positives = std::count(val_labels.begin(), val_labels.end(), 1);
    if (positives == 0 || positives == static_cast<long>(val_labels.size())) {
        throw Error(ErrorKind::SingleClassValidation,
                    "validation pairs are all one class so ROC-AUC is undefined; use a larger corpus or another split");
    }

    const auto train_rows = features_of(train, store);
    const auto val_rows = features_of(validation, store);
    const FeatureStats stats = compute_feature_stats(train_rows);
    const std::vector<double> train_x = normalize_rows(train_rows, stats);
    std::vector<double> train_y;
    for (const auto& p : train) train_y.push_back(p.label);

    MlpModel model(config);
    Rng order_rng(config.seed ^ kOrderStream);
    Rng dropout_rng(config.seed ^ kDropoutStream);

    MlpTrainResult result;
    double best_auc = -1.0;
    int since_best = 0;
    tensor::ModelCheckpoint best = tensor::snapshot_params(model.params(), "MLP");
    const auto batch = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<double> xb, yb;
            for (std::size_t i = start; i < end; ++i) {
                const auto row = order[i];
                xb.insert(xb.end(), train_x.begin() + static_cast<std::ptrdiff_t>(row * kPairFeatureWidth),
                          train_x.begin() + static_cast<std::ptrdiff_t>((row + 1) * kPairFeatureWidth));
                yb.push_back(train_y[row]);
            }
            const Tensor logits = model.forward(Tensor::from(end - start, kPairFeatureWidth, xb), true, dropout_rng);
            const Tensor loss = bce_with_logits(logits, yb);
            tensor::backward(loss);
            model.params().adam_step(config.lr, 0.0);
            loss_sum += loss.item() * static_cast<double>(end - start);
        }
        const double auc = roc_auc(probabilities(model, val_rows, stats), val_labels);
        result.history.push_back({epoch, loss_sum / static_cast<double>(train.size()), auc});
        if (auc > best_auc) {
            best_auc = auc;
            result.best_epoch = epoch;
            best = tensor::snapshot_params(model.params(), "MLP");
            since_best = 0;
        } else if (++since_best >= config.patience) {
            result.stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    best.config = config.to_json();
    best.config["best_epoch"] = result.best_epoch;
    best.norm_stats = feature_stats_to_json(stats);
    best.rng_seed = config.seed;
    result.checkpoint = std::move(best);
    result.best_validation_auc = best_auc;
    return result;
}

std::vector<double> predict_pairs(const tensor::ModelCheckpoint& ckpt, std::span<const PairExample> pairs,
                                  const MetaStore& store) {
    FeatureStats stats;
    MlpModel model = load_mlp(ckpt, stats);
    return probabilities(model, features_of(pairs, store), stats);
}

std::vector<RankedPair> score_pairs(const tensor::ModelCheckpoint& ckpt,
                                    std::span<const std::pair<std::string, std::string>> pairs,
                                    const MetaStore& store) {
    FeatureStats stats;
    MlpModel model = load_mlp(ckpt, stats);
    std::set<std::pair<std::string, std::string>> unique;
    for (const auto& [x, y] : pairs) {
        if (x != y) unique.insert(canonical_pair(x, y));
    }
    std::vector<PairFeatures> rows;
    for (const auto& [a, b] : unique) rows.push_back(build_pair_features(a, b, store));
    const auto probs = probabilities(model, rows, stats);
    std::vector<RankedPair> out;
    std::size_t i = 0;
    for (const auto& [a, b] : unique) out.push_back({a, b, probs[i++]});
    std::stable_sort(out.begin(), out.end(),
                     [](const RankedPair& x, const RankedPair& y) { return x.probability > y.probability; });
    return out;
}

std::string ranking_to_csv(std::span<const RankedPair> ranking) {
    std::string out = "rank,cve_a,cve_b,probability\n";
    std::size_t rank = 1;
    for (const auto& r : ranking) {
        out += std::to_string(rank++) + "," + r.cve_a + "," + r.cve_b + "," + format_double(r.probability) + "\n";
    }
    return out;
}

std::vector<RankedPair> parse_ranking_csv(std::string_view contents) {
    std::istringstream in{std::string(contents)};
    std::string line;
    std::vector<RankedPair> out;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line != "rank,cve_a,cve_b,probability") throw Error(ErrorKind::MalformedList, "unexpected ranking header");
            continue;
        }
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) f.push_back(field);
        if (f.size() != 4) throw Error(ErrorKind::MalformedList, "ranking line: " + line);
        RankedPair r{f[1], f[2], 0.0};
        try {
            std::size_t used = 0;
            r.probability = std::stod(f[3], &used);
            if (used != f[3].size()) throw std::invalid_argument(f[3]);
        } catch (const std::exception&) {
            throw Error(ErrorKind::MalformedList, "ranking probability: " + f[3]);
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace sbomchain::mlp

namespace sbomchain::mlp {

tensor::GradCheckReport gradcheck_mlp(double tolerance, double h) {
    MlpModel model{MlpConfig{}};
    Rng rng(17);
    const std::size_t rows = 8;
    std::vector<double> x(rows * kPairFeatureWidth);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    std::vector<double> y(rows);
    for (std::size_t i = 0; i < rows; ++i) y[i] = static_cast<double>(i % 2);
    const Tensor input = Tensor::from(rows, kPairFeatureWidth, x);
    auto loss_fn = [&] {
        Rng mask_rng(23);
        return bce_with_logits(model.forward(input, true, mask_rng), y);
    };
    return tensor::gradient_check(loss_fn, model.params(), tolerance, h);
}

} // namespace sbomchain::mlp
