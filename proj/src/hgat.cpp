#include "sbomchain/hgat.hpp"

#include "sbomchain/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sbomchain::hgat {

using tensor::Tensor;
using nlohmann::json;

namespace {

constexpr std::uint64_t kOrderStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kDropoutStream = 0xbf58476d1ce4e5b9ULL;

std::string type_name(NodeType t) { return std::string(to_string(t)); }

// The output layer only updates components, so it needs projections of
// components and of the types that send to them.
// SELF plus every channel the type receives on.
std::size_t relation_slots(NodeType t) {
    std::size_t n = 1;
    for (const auto& ch : channels()) n += ch.receiver == t ? 1 : 0;
    return n;
}

bool feeds_components(NodeType t) {
    if (t == NodeType::Component) return true;
    for (const auto& ch : channels()) {
        if (ch.receiver == NodeType::Component && ch.sender == t) return true;
    }
    return false;
}

} // namespace

json HgatConfig::to_json() const {
    return {{"layers", layers},
            {"heads", heads},
            {"hidden_dim", hidden_dim},
            {"dropout", dropout},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"max_epochs", max_epochs},
            {"batch_graphs", batch_graphs},
            {"attention_slope", attention_slope},
            {"leakage_policy", std::string(to_string(leakage_policy))},
            {"seed", seed}};
}

HgatConfig HgatConfig::from_json(const json& j) {
    HgatConfig c;
    try {
        c.layers = j.value("layers", c.layers);
        c.heads = j.value("heads", c.heads);
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.dropout = j.value("dropout", c.dropout);
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.batch_graphs = j.value("batch_graphs", c.batch_graphs);
        c.attention_slope = j.value("attention_slope", c.attention_slope);
        if (j.contains("leakage_policy")) c.leakage_policy = parse_leakage_policy(j["leakage_policy"].get<std::string>());
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("hgat config: ") + e.what());
    }
    c.validate();
    return c;
}

void HgatConfig::validate() const {
    if (layers < 1 || heads < 1 || hidden_dim < 1 || max_epochs < 1 || batch_graphs < 1) {
        throw Error(ErrorKind::InvalidArgument, "hgat config: sizes must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0) || !(lr > 0.0) || weight_decay < 0.0) {
        throw Error(ErrorKind::InvalidArgument, "hgat config: dropout in [0,1), lr > 0, weight_decay >= 0");
    }
}

const std::vector<Channel>& channels() {
    static const std::vector<Channel> list = [] {
        std::vector<Channel> out;
        for (Relation r : kRelations) {
            out.push_back({std::string(to_string(r)), r, false, source_type(r), target_type(r)});
            out.push_back({std::string(to_string(r)) + "~rev", r, true, target_type(r), source_type(r)});
        }
        return out;
    }();
    return list;
}

PreparedGraph prepare(const EvidenceGraph& graph) {
    PreparedGraph p;
    for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
        const auto& m = graph.features[t];
        p.counts[t] = graph.node_ids[t].size();
        if (m.rows() != p.counts[t]) throw Error(ErrorKind::FeatureSpecMismatch, "feature rows differ from node count");
        p.features[t] = Tensor::from(p.counts[t], m.cols, m.values);
    }
    for (const auto& ch : channels()) {
        PreparedGraph::ChannelEdges ce;
        std::vector<Edge> edges;
        for (const auto& e : graph.edges_of(ch.relation)) {
            edges.push_back(ch.reverse ? Edge{e.dst, e.src} : e);
        }
        std::sort(edges.begin(), edges.end());
        for (const auto& e : edges) {
            ce.receiver.push_back(e.src);
            ce.sender.push_back(e.dst);
        }
        p.channel_edges.push_back(std::move(ce));
    }
    p.labels = graph.labels;
    return p;
}

std::string HgatModel::pname(int layer, const std::string& rest) { return "l" + std::to_string(layer) + "." + rest; }

HgatModel::HgatModel(const HgatConfig& config, std::array<std::size_t, kNodeTypeCount> input_widths)
    : config_(config), widths_(input_widths) {
    config_.validate();
    Rng rng(config_.seed);
    const auto hidden = static_cast<std::size_t>(config_.hidden_dim);
    const auto heads = static_cast<std::size_t>(config_.heads);
    for (int l = 0; l < config_.layers; ++l) {
        const bool last = l == config_.layers - 1;
        for (NodeType t : kNodeTypes) {
            if (last && !feeds_components(t)) continue;
            const std::size_t in = l == 0 ? widths_[static_cast<std::size_t>(t)] : hidden * heads;
            for (std::size_t k = 0; k < heads; ++k) {
                params_.glorot(pname(l, "proj." + type_name(t) + ".h" + std::to_string(k)), in, hidden, rng);
            }
        }
        for (const auto& ch : channels()) {
            if (last && ch.receiver != NodeType::Component) continue;
            for (std::size_t k = 0; k < heads; ++k) {
                const std::string base = "att." + ch.name + ".h" + std::to_string(k);
                params_.glorot(pname(l, base + ".recv"), hidden, 1, rng);
                params_.glorot(pname(l, base + ".send"), hidden, 1, rng);
            }
        }
        for (NodeType t : kNodeTypes) {
            if (last && t != NodeType::Component) continue;
            params_.zeros(pname(l, "rel." + type_name(t)), 1, relation_slots(t));
        }
    }
    params_.glorot("cls.W", hidden, 2, rng);
    params_.zeros("cls.b", 1, 2);
}

std::array<Tensor, kNodeTypeCount> HgatModel::layer(int l, const std::array<Tensor, kNodeTypeCount>& input,
                                                    const PreparedGraph& g, bool last) {
    const auto heads = static_cast<std::size_t>(config_.heads);
    const auto& chans = channels();
    std::array<std::vector<Tensor>, kNodeTypeCount> head_out;

    for (std::size_t k = 0; k < heads; ++k) {
        const std::string hk = ".h" + std::to_string(k);
        std::array<Tensor, kNodeTypeCount> projected;
        for (NodeType t : kNodeTypes) {
            if (last && !feeds_components(t)) continue;
            const auto ti = static_cast<std::size_t>(t);
            projected[ti] = matmul(input[ti], params_.get(pname(l, "proj." + type_name(t) + hk)));
        }

        for (NodeType d : kNodeTypes) {
            if (last && d != NodeType::Component) continue;
            const auto di = static_cast<std::size_t>(d);
            const std::size_t n = g.counts[di];

            // Relation weights are shared by every node of the type. A node
            // without edges on a channel gets a zero message from it.
            const std::vector<std::size_t> broadcast(n, 0);
            const Tensor beta = softmax(params_.get(pname(l, "rel." + type_name(d))));
            Tensor combined = scale_rows(projected[di], gather_rows(column(beta, 0), broadcast));
            std::size_t slot = 1;
            for (std::size_t c = 0; c < chans.size(); ++c) {
                const auto& ch = chans[c];
                const auto& edges = g.channel_edges[c];
                if (ch.receiver != d) continue;
                const std::size_t this_slot = slot++;
                if (edges.receiver.empty()) continue;
                const auto si = static_cast<std::size_t>(ch.sender);
                const std::string base = "att." + ch.name + hk;
                Tensor recv_score = matmul(projected[di], params_.get(pname(l, base + ".recv")));
                Tensor send_score = matmul(projected[si], params_.get(pname(l, base + ".send")));
                Tensor e = leaky_relu(add(gather_rows(recv_score, edges.receiver), gather_rows(send_score, edges.sender)),
                                      config_.attention_slope);
                Tensor alpha = segment_softmax(e, edges.receiver);
                Tensor msg = segment_sum(scale_rows(gather_rows(projected[si], edges.sender), alpha), edges.receiver, n);
                combined = add(combined, scale_rows(msg, gather_rows(column(beta, this_slot), broadcast)));
            }
            head_out[di].push_back(std::move(combined));
        }
    }

    std::array<Tensor, kNodeTypeCount> out;
    for (NodeType t : kNodeTypes) {
        const auto ti = static_cast<std::size_t>(t);
        if (head_out[ti].empty()) continue;
        if (last) {
            Tensor acc = head_out[ti][0];
            for (std::size_t k = 1; k < heads; ++k) acc = add(acc, head_out[ti][k]);
            out[ti] = heads == 1 ? acc : scale(acc, 1.0 / static_cast<double>(heads));
        } else {
            out[ti] = elu(concat_cols(head_out[ti]));
        }
    }
    return out;
}

Tensor HgatModel::forward(const PreparedGraph& graph, bool train, Rng& rng) {
    for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
        if (graph.features[t].cols() != widths_[t]) {
            throw Error(ErrorKind::FeatureSpecMismatch, std::string(to_string(kNodeTypes[t])) + " features have " +
                                                            std::to_string(graph.features[t].cols()) +
                                                            " columns, model expects " + std::to_string(widths_[t]));
        }
    }
    std::array<Tensor, kNodeTypeCount> h = graph.features;
    for (int l = 0; l < config_.layers; ++l) {
        for (auto& x : h) x = dropout(x, config_.dropout, train, rng);
        h = layer(l, h, graph, l == config_.layers - 1);
    }
    return add(matmul(h[0], params_.get("cls.W")), params_.get("cls.b"));
}

bool masks_vulnerability_edges(const EvidenceGraph& graph) {
    return graph.leakage_policy == LeakagePolicy::Strict && graph.label_source == kHasAnyCveLabel;
}

EvidenceGraph model_view(const EvidenceGraph& graph, const NormStats& stats, std::optional<Relation> mask) {
    EvidenceGraph view = normalize(graph, stats);
    if (masks_vulnerability_edges(graph)) view.edges_of(Relation::HasVulnerability).clear();
    if (mask) view.edges_of(*mask).clear();
    return view;
}

json norm_stats_to_json(const NormStats& stats) {
    json j = json::object();
    for (NodeType t : kNodeTypes) {
        const auto ti = static_cast<std::size_t>(t);
        j[type_name(t)] = {{"mean", stats.mean[ti]}, {"std", stats.stddev[ti]}};
    }
    return j;
}

NormStats norm_stats_from_json(const json& j) {
    NormStats stats;
    try {
        for (NodeType t : kNodeTypes) {
            const auto ti = static_cast<std::size_t>(t);
            stats.mean[ti] = j.at(type_name(t)).at("mean").get<std::vector<double>>();
            stats.stddev[ti] = j.at(type_name(t)).at("std").get<std::vector<double>>();
            if (stats.mean[ti].size() != stats.stddev[ti].size()) {
                throw Error(ErrorKind::CorruptCheckpoint, "norm stats width mismatch");
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptCheckpoint, std::string("norm stats: ") + e.what());
    }
    return stats;
}

std::string history_to_json(const std::vector<EpochRecord>& history) {
    json arr = json::array();
    for (const auto& h : history) {
        json rec = {{"epoch", h.epoch}, {"train_loss", h.train_loss}};
        rec["validation"] = h.validation ? json::parse(metrics_to_json(*h.validation, -1)) : json(nullptr);
        arr.push_back(std::move(rec));
    }
    return arr.dump(2);
}

namespace {

EvidenceGraph union_of(std::span<const EvidenceGraph> graphs) {
    std::vector<const EvidenceGraph*> ptrs;
    for (const auto& g : graphs) ptrs.push_back(&g);
    return disjoint_union(ptrs);
}

std::vector<int> argmax_labels(const Tensor& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) out[i] = logits.at(i, 1) > logits.at(i, 0) ? 1 : 0;
    return out;
}

ClassificationMetrics evaluate_prepared(HgatModel& model, const PreparedGraph& g) {
    Rng unused(0);
    const Tensor logits = model.forward(g, false, unused);
    return confusion_metrics(argmax_labels(logits), g.labels);
}

void check_policy(std::span<const EvidenceGraph> graphs, LeakagePolicy policy) {
    for (const auto& g : graphs) {
        if (g.leakage_policy != policy) {
            throw Error(ErrorKind::FeatureSpecMismatch,
                        "graph " + g.graph_id + " was built with " + std::string(to_string(g.leakage_policy)));
        }
    }
}

} // namespace

TrainResult train_hgat(std::span<const EvidenceGraph> train, std::span<const EvidenceGraph> validation,
                       const HgatConfig& config) {
    config.validate();
    std::size_t train_components = 0;
    for (const auto& g : train) train_components += g.node_count(NodeType::Component);
    if (train.empty() || train_components == 0) throw Error(ErrorKind::EmptyTrainingSet, "no training components");
    check_policy(train, config.leakage_policy);
    check_policy(validation, config.leakage_policy);

    const FeatureSpec spec = FeatureSpec::standard(config.leakage_policy);
    const NormStats stats = compute_norm_stats(train, spec);
    std::vector<EvidenceGraph> views;
    for (const auto& g : train) views.push_back(model_view(g, stats));
    std::vector<EvidenceGraph> val_views;
    for (const auto& g : validation) val_views.push_back(model_view(g, stats));
    const std::optional<PreparedGraph> val_prepared =
        val_views.empty() ? std::nullopt : std::optional<PreparedGraph>(prepare(union_of(val_views)));

    const std::array<std::size_t, kNodeTypeCount> widths{spec.width(NodeType::Component), spec.width(NodeType::Cve),
                                                         spec.width(NodeType::Cwe)};
    HgatModel model(config, widths);
    Rng order_rng(config.seed ^ kOrderStream);
    Rng dropout_rng(config.seed ^ kDropoutStream);

    TrainResult result;
    double best_f1 = -1.0;
    tensor::ModelCheckpoint best = tensor::snapshot_params(model.params(), "HGAT");
    const auto batch = static_cast<std::size_t>(config.batch_graphs);

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::vector<std::size_t> order(views.size());
        std::iota(order.begin(), order.end(), 0);
        order_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t loss_rows = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            std::vector<const EvidenceGraph*> members;
            for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) members.push_back(&views[order[i]]);
            const EvidenceGraph merged = disjoint_union(members);
            if (merged.labels.empty()) continue;
            const PreparedGraph prepared = prepare(merged);
            const Tensor logits = model.forward(prepared, true, dropout_rng);
            const Tensor loss = nll_loss(log_softmax(logits), prepared.labels);
            tensor::backward(loss);
            model.params().adam_step(config.lr, config.weight_decay);
            loss_sum += loss.item() * static_cast<double>(prepared.labels.size());
            loss_rows += prepared.labels.size();
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_rows == 0 ? 0.0 : loss_sum / static_cast<double>(loss_rows);
        if (val_prepared) {
            rec.validation = evaluate_prepared(model, *val_prepared);
            const double f1 = rec.validation->f1.value_or(0.0);
            if (f1 > best_f1) {
                best_f1 = f1;
                result.best_epoch = epoch;
                best = tensor::snapshot_params(model.params(), "HGAT");
            }
        } else {
            result.best_epoch = epoch;
            best = tensor::snapshot_params(model.params(), "HGAT");
        }
        result.history.push_back(std::move(rec));
    }

    best.config = config.to_json();
    best.config["input_widths"] = widths;
    best.config["best_epoch"] = result.best_epoch;
    best.norm_stats = norm_stats_to_json(stats);
    best.rng_seed = config.seed;
    result.checkpoint = std::move(best);
    return result;
}

HgatModel load_model(const tensor::ModelCheckpoint& ckpt, NormStats* stats) {
    tensor::expect_kind(ckpt, "HGAT");
    std::array<std::size_t, kNodeTypeCount> widths{};
    try {
        const auto w = ckpt.config.at("input_widths").get<std::vector<std::size_t>>();
        if (w.size() != kNodeTypeCount) throw Error(ErrorKind::CorruptCheckpoint, "input_widths length");
        std::copy(w.begin(), w.end(), widths.begin());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptCheckpoint, std::string("input_widths: ") + e.what());
    }
    HgatModel model(HgatConfig::from_json(ckpt.config), widths);
    tensor::restore_params(ckpt, model.params());
    if (stats) *stats = norm_stats_from_json(ckpt.norm_stats);
    return model;
}

ClassificationMetrics evaluate_hgat(const tensor::ModelCheckpoint& ckpt, std::span<const EvidenceGraph> graphs,
                                    std::optional<Relation> mask) {
    NormStats stats;
    HgatModel model = load_model(ckpt, &stats);
    check_policy(graphs, model.config().leakage_policy);
    std::vector<EvidenceGraph> views;
    for (const auto& g : graphs) views.push_back(model_view(g, stats, mask));
    return evaluate_prepared(model, prepare(union_of(views)));
}

std::vector<ComponentPrediction> predict_components(const tensor::ModelCheckpoint& ckpt, const EvidenceGraph& graph,
                                                    std::optional<Relation> mask) {
    NormStats stats;
    HgatModel model = load_model(ckpt, &stats);
    check_policy({&graph, 1}, model.config().leakage_policy);
    const PreparedGraph prepared = prepare(model_view(graph, stats, mask));
    Rng unused(0);
    const Tensor logits = model.forward(prepared, false, unused);
    std::vector<ComponentPrediction> out;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double score = 1.0 / (1.0 + std::exp(logits.at(i, 0) - logits.at(i, 1)));
        out.push_back({graph.node_ids[0][i], logits.at(i, 1) > logits.at(i, 0) ? 1 : 0, score});
    }
    return out;
}


EvidenceGraph toy_graph(std::uint64_t seed) {
    EvidenceGraph g;
    g.graph_id = "toy";
    g.label_source = "toy";
    g.node_ids[0] = {"c0", "c1", "c2"};
    g.component_names = {"c0@1", "c1@1", "c2@1"};
    g.node_ids[1] = {"CVE-2000-0001", "CVE-2000-0002"};
    g.node_ids[2] = {"CWE-1"};
    g.edges_of(Relation::DependsOn) = {{0, 1}, {1, 2}};
    g.edges_of(Relation::HasVulnerability) = {{1, 0}, {2, 1}};
    g.edges_of(Relation::HasCwe) = {{0, 0}, {1, 0}};
    const FeatureSpec spec = FeatureSpec::standard(LeakagePolicy::Strict);
    Rng rng(seed);
    for (NodeType t : kNodeTypes) {
        auto& m = g.features[static_cast<std::size_t>(t)];
        m.cols = spec.width(t);
        for (std::size_t i = 0; i < g.node_count(t) * m.cols; ++i) m.values.push_back(rng.uniform(-1.0, 1.0));
    }
    g.labels = {1, 0, 1};
    return g;
}

tensor::GradCheckReport gradcheck_hgat(const HgatConfig& config, double tolerance, std::size_t max_elements_per_param,
                                       double h) {
    const EvidenceGraph g = toy_graph();
    const PreparedGraph prepared = prepare(g);
    const FeatureSpec spec = FeatureSpec::standard(LeakagePolicy::Strict);
    HgatModel model(config, {spec.width(NodeType::Component), spec.width(NodeType::Cve), spec.width(NodeType::Cwe)});
    auto loss_fn = [&] {
        Rng mask_rng(99);
        return nll_loss(log_softmax(model.forward(prepared, true, mask_rng)), prepared.labels);
    };
    return tensor::gradient_check(loss_fn, model.params(), tolerance, h, max_elements_per_param, 5);
}

} // namespace sbomchain::hgat
