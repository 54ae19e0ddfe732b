#pragma once

#include "sbomchain/evidence_graph.hpp"
#include "sbomchain/metrics.hpp"
#include "sbomchain/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sbomchain::hgat {

struct HgatConfig {
    int layers = 2;
    int heads = 2;
    int hidden_dim = 64;
    double dropout = 0.2;
    double lr = 1e-3;
    double weight_decay = 5e-4;
    int max_epochs = 30;
    int batch_graphs = 2;
    double attention_slope = 0.2;
    LeakagePolicy leakage_policy = LeakagePolicy::Strict;
    std::uint64_t seed = 7;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults. Throws Error{InvalidArgument}.
    static HgatConfig from_json(const nlohmann::json& j);
    void validate() const;
};

/// Message-passing channel: `receiver` nodes aggregate over `sender` nodes.
/// Each stored relation yields a forward channel (edge source receives from
/// its target) and a reverse one.
struct Channel {
    std::string name;
    Relation relation;
    bool reverse = false;
    NodeType receiver;
    NodeType sender;
};

/// The six relation channels in fixed order.
const std::vector<Channel>& channels();

/// A (normalised) graph turned into constant tensors and receiver-sorted
/// edge index lists, ready for the forward pass.
struct PreparedGraph {
    std::array<tensor::Tensor, kNodeTypeCount> features;
    std::array<std::size_t, kNodeTypeCount> counts{};
    struct ChannelEdges {
        std::vector<std::size_t> receiver;
        std::vector<std::size_t> sender;
    };
    std::vector<ChannelEdges> channel_edges;
    std::vector<int> labels;
};

PreparedGraph prepare(const EvidenceGraph& graph);

class HgatModel {
public:
    /// Parameters are Glorot-initialised from `config.seed`.
    HgatModel(const HgatConfig& config, std::array<std::size_t, kNodeTypeCount> input_widths);

    /// One row of two logits per component node. Throws
    /// Error{FeatureSpecMismatch} when feature widths differ from construction.
    tensor::Tensor forward(const PreparedGraph& graph, bool train, Rng& rng);

    tensor::ParamStore& params() { return params_; }
    const tensor::ParamStore& params() const { return params_; }
    const HgatConfig& config() const { return config_; }
    std::array<std::size_t, kNodeTypeCount> input_widths() const { return widths_; }

private:
    static std::string pname(int layer, const std::string& rest);
    std::array<tensor::Tensor, kNodeTypeCount> layer(int l, const std::array<tensor::Tensor, kNodeTypeCount>& input,
                                                     const PreparedGraph& g, bool last);

    HgatConfig config_;
    std::array<std::size_t, kNodeTypeCount> widths_;
    tensor::ParamStore params_;
};

/// Whether graphs with this labelling hide HAS_VULNERABILITY edges from the model.
bool masks_vulnerability_edges(const EvidenceGraph& graph);

/// Normalises with `stats`, applies the task mask and an optional extra
/// relation mask.
EvidenceGraph model_view(const EvidenceGraph& graph, const NormStats& stats, std::optional<Relation> mask = {});

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<ClassificationMetrics> validation;
};

struct TrainResult {
    tensor::ModelCheckpoint checkpoint;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
};

std::string history_to_json(const std::vector<EpochRecord>& history);

/// Mini-batches of `batch_graphs` graphs (disjoint unions), unweighted
/// cross-entropy, Adam. Keeps the epoch with the best validation F1; ties
/// keep the earlier epoch. Throws Error{EmptyTrainingSet}.
TrainResult train_hgat(std::span<const EvidenceGraph> train, std::span<const EvidenceGraph> validation,
                       const HgatConfig& config);

/// Rebuilds a model from an HGAT checkpoint; also returns its norm stats.
/// Throws Error{IncompatibleCheckpoint} or Error{CorruptCheckpoint}.
HgatModel load_model(const tensor::ModelCheckpoint& ckpt, NormStats* stats = nullptr);

nlohmann::json norm_stats_to_json(const NormStats& stats);
NormStats norm_stats_from_json(const nlohmann::json& j);

ClassificationMetrics evaluate_hgat(const tensor::ModelCheckpoint& ckpt, std::span<const EvidenceGraph> graphs,
                                    std::optional<Relation> mask = {});

struct ComponentPrediction {
    std::string component_id;
    int label = 0;
    double score = 0.0;
};

std::vector<ComponentPrediction> predict_components(const tensor::ModelCheckpoint& ckpt, const EvidenceGraph& graph,
                                                    std::optional<Relation> mask = {});


/// Three components, two CVEs and one CWE with all three relations present.
EvidenceGraph toy_graph(std::uint64_t seed = 3);

/// Central-difference check of a model built from `config` on toy_graph(),
/// with dropout active under a fixed mask. `max_elements_per_param` = 0
/// checks every element.
tensor::GradCheckReport gradcheck_hgat(const HgatConfig& config, double tolerance = 1e-4,
                                       std::size_t max_elements_per_param = 0, double h = 1e-5);

} // namespace sbomchain::hgat
