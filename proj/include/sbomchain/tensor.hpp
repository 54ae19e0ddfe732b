#pragma once

#include "sbomchain/util.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sbomchain::tensor {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the recorded computation. `backward` reads `grad` and
/// accumulates into the parents' grads.
struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;
    bool requires_grad = false;
    const char* op = "leaf";

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

/// Dense row-major 2-D tensor handle with reverse-mode autodiff.
/// Scalars are 1x1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(std::size_t rows, std::size_t cols);
    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor scalar(double v) { return from(1, 1, {v}); }
    /// Leaf that collects gradients.
    static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<double> values);

    /// Builds an op node. `backward` receives the output node; parents are
    /// reachable through `out.parents` in the order given here.
    static Tensor make_op(const char* op, std::size_t rows, std::size_t cols, std::vector<double> value,
                          std::vector<Tensor> parents, std::function<void(Node&)> backward);

    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::vector<std::size_t> shape() const { return {node_->rows, node_->cols}; }
    std::size_t size() const { return node_->value.size(); }
    const std::vector<double>& values() const { return node_->value; }
    std::vector<double>& mutable_values() { return node_->value; }
    const std::vector<double>& grad() const { return node_->grad; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
    double item() const;
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    const NodePtr& node() const { return node_; }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

private:
    NodePtr node_;
};

// Forward ops. All of them record themselves for backward() and throw
// Error{ShapeMismatch} on incompatible shapes, Error{NonFiniteValue} when an
// output is NaN or infinite.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Same shape, or `b` is 1 x cols and broadcasts over the rows of `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor elu(const Tensor& a, double alpha = 1.0);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor softmax(const Tensor& a);
/// Inverted dropout; identity when !train or p == 0.
Tensor dropout(const Tensor& a, double p, bool train, Rng& rng);
/// Softmax of each column within groups of rows sharing a segment id.
/// Rows of one segment must be contiguous.
Tensor segment_softmax(const Tensor& values, std::span<const std::size_t> segment_ids);
/// out[segment_ids[i]] += a[i]; output has `segments` rows.
Tensor segment_sum(const Tensor& a, std::span<const std::size_t> segment_ids, std::size_t segments);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
/// Row i of `a` times the scalar w[i]; `w` is rows x 1.
Tensor scale_rows(const Tensor& a, const Tensor& w);
Tensor column(const Tensor& a, std::size_t c);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean negative log-likelihood of `labels` under row-wise log-probabilities.
Tensor nll_loss(const Tensor& log_probs, std::span<const int> labels);
/// Mean binary cross-entropy on logits (n x 1), computed stably.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);

/// Reverse sweep from a scalar. Gradients accumulate into every reachable
/// node that requires grad. Throws Error{NonFiniteGradient}.
void backward(const Tensor& loss);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

/// Named parameters with their Adam moments. Iteration order is by name.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor value);
    Tensor& glorot(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng);
    Tensor& zeros(const std::string& name, std::size_t rows, std::size_t cols);

    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.contains(name); }
    const std::map<std::string, Tensor>& params() const { return params_; }
    std::map<std::string, Tensor>& params() { return params_; }
    const AdamState& state(const std::string& name) const { return state_.at(name); }

    void zero_grad();
    std::size_t parameter_count() const;

    /// Classic Adam; `weight_decay` is added to the gradient before the
    /// moment updates. Clears gradients.
    void adam_step(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, AdamState> state_;
};

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;
    double max_relative_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;
    bool pass = true;
    double max_relative_error = 0.0;
};

/// Compares analytic gradients with central differences for every parameter.
/// `loss_fn` must be deterministic. Relative error is |a - n| / max(|a|, |n|, floor).
/// When `max_elements_per_param` is non-zero, larger tensors are checked on a
/// seeded sample of that many elements.
GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn, ParamStore& store, double tolerance,
                               double h = 1e-5, std::size_t max_elements_per_param = 0, std::uint64_t seed = 0,
                               double floor = 1e-6);

struct TensorData {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    bool operator==(const TensorData&) const = default;
};

struct ModelCheckpoint {
    std::string format_version = "1";
    std::string model_kind;
    nlohmann::json config = nlohmann::json::object();
    std::map<std::string, TensorData> params;
    nlohmann::json norm_stats = nlohmann::json::object();
    std::uint64_t rng_seed = 0;
};

ModelCheckpoint snapshot_params(const ParamStore& store, std::string model_kind);
/// Copies checkpoint values into `store`; every store parameter must be
/// present with the same shape (Error{CorruptCheckpoint}).
void restore_params(const ModelCheckpoint& ckpt, ParamStore& store);
/// Throws Error{IncompatibleCheckpoint} when the kind differs.
void expect_kind(const ModelCheckpoint& ckpt, const std::string& kind);

std::string serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
/// Throws Error{IncompatibleVersion} or Error{CorruptCheckpoint}.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace sbomchain::tensor
