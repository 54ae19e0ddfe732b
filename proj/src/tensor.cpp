#include "sbomchain/tensor.hpp"

#include "sbomchain/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace sbomchain::tensor {

namespace {

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(ErrorKind::NonFiniteValue, std::string("non-finite output of ") + op);
    }
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                                              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                              std::to_string(b.cols()));
}

Node& parent(Node& out, std::size_t i) { return *out.parents[i]; }

// Adds `delta` into the parent's gradient when that parent tracks gradients.
template <typename F>
void accumulate(Node& p, F&& fill) {
    if (!p.requires_grad) return;
    p.ensure_grad();
    fill(p.grad);
}

} // namespace

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return from(rows, cols, std::vector<double>(rows * cols, 0.0)); }

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values) {
    if (values.size() != rows * cols) throw Error(ErrorKind::ShapeMismatch, "value count differs from shape");
    check_finite(values, "constant");
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    return Tensor(std::move(n));
}

Tensor Tensor::parameter(std::size_t rows, std::size_t cols, std::vector<double> values) {
    Tensor t = from(rows, cols, std::move(values));
    t.node_->requires_grad = true;
    t.node_->op = "parameter";
    return t;
}

Tensor Tensor::make_op(const char* op, std::size_t rows, std::size_t cols, std::vector<double> value,
                       std::vector<Tensor> parents, std::function<void(Node&)> backward) {
    if (value.size() != rows * cols) throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": output size");
    check_finite(value, op);
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(value);
    n->op = op;
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
    if (n->requires_grad) {
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(backward);
    }
    return Tensor(std::move(n));
}

double Tensor::item() const {
    if (size() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on a non-scalar");
    return node_->value[0];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    std::vector<double> out(n * m, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            if (x == 0.0) continue;
            const double* brow = bv.data() + p * m;
            double* orow = out.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += x * brow[j];
        }
    }
    return Tensor::make_op("matmul", n, m, std::move(out), {a, b}, [n, k, m](Node& o) {
        Node& A = parent(o, 0);
        Node& B = parent(o, 1);
        accumulate(A, [&](std::vector<double>& g) {
            // dA = dO * B^T
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j) s += o.grad[i * m + j] * B.value[p * m + j];
                    g[i * k + p] += s;
                }
            }
        });
        accumulate(B, [&](std::vector<double>& g) {
            // dB = A^T * dO
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double x = A.value[i * k + p];
                    if (x == 0.0) continue;
                    for (std::size_t j = 0; j < m; ++j) g[p * m + j] += x * o.grad[i * m + j];
                }
            }
        });
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool broadcast = b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
    if (!broadcast && (a.rows() != b.rows() || a.cols() != b.cols())) shape_error("add", a, b);
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] += broadcast ? b.values()[j] : b.values()[i * m + j];
    }
    return Tensor::make_op("add", n, m, std::move(out), {a, b}, [n, m, broadcast](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        });
        accumulate(parent(o, 1), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) g[broadcast ? j : i * m + j] += o.grad[i * m + j];
            }
        });
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return Tensor::make_op("mul", a.rows(), a.cols(), std::move(out), {a, b}, [](Node& o) {
        Node& A = parent(o, 0);
        Node& B = parent(o, 1);
        accumulate(A, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * B.value[i];
        });
        accumulate(B, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * A.value[i];
        });
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.values());
    for (auto& x : out) x *= factor;
    return Tensor::make_op("scale", a.rows(), a.cols(), std::move(out), {a}, [factor](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * o.grad[i];
        });
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat of nothing");
    const std::size_t n = parts.front().rows();
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != n) shape_error("concat_cols", parts.front(), p);
        offsets.push_back(total);
        total += p.cols();
    }
    std::vector<double> out(n * total);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = parts[k].cols();
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(parts[k].values().data() + i * w, w, out.data() + i * total + offsets[k]);
        }
    }
    std::vector<Tensor> parents(parts.begin(), parts.end());
    return Tensor::make_op("concat_cols", n, total, std::move(out), std::move(parents),
                           [n, total, offsets](Node& o) {
                               for (std::size_t k = 0; k < o.parents.size(); ++k) {
                                   Node& P = parent(o, k);
                                   const std::size_t w = P.cols;
                                   accumulate(P, [&](std::vector<double>& g) {
                                       for (std::size_t i = 0; i < n; ++i) {
                                           for (std::size_t j = 0; j < w; ++j) {
                                               g[i * w + j] += o.grad[i * total + offsets[k] + j];
                                           }
                                       }
                                   });
                               }
                           });
}

namespace {

// Elementwise op where the derivative is a function of input and output.
template <typename F, typename D>
Tensor unary(const char* name, const Tensor& a, F f, D dfdx) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.values()[i]);
    return Tensor::make_op(name, a.rows(), a.cols(), std::move(out), {a}, [dfdx](Node& o) {
        Node& A = parent(o, 0);
        accumulate(A, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * dfdx(A.value[i], o.value[i]);
        });
    });
}

} // namespace

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary(
        "leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& a, double alpha) {
    return unary(
        "elu", a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
        [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary(
        "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log_softmax(const Tensor& a) {
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = a.values().data() + i * m;
        const double mx = *std::max_element(row, row + m);
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = row[j] - lse;
    }
    return Tensor::make_op("log_softmax", n, m, std::move(out), {a}, [n, m](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < n; ++i) {
                double gs = 0.0;
                for (std::size_t j = 0; j < m; ++j) gs += o.grad[i * m + j];
                for (std::size_t j = 0; j < m; ++j) {
                    g[i * m + j] += o.grad[i * m + j] - std::exp(o.value[i * m + j]) * gs;
                }
            }
        });
    });
}

Tensor softmax(const Tensor& a) {
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = a.values().data() + i * m;
        const double mx = *std::max_element(row, row + m);
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += (out[i * m + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= s;
    }
    return Tensor::make_op("softmax", n, m, std::move(out), {a}, [n, m](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < m; ++j) dot += o.grad[i * m + j] * o.value[i * m + j];
                for (std::size_t j = 0; j < m; ++j) g[i * m + j] += o.value[i * m + j] * (o.grad[i * m + j] - dot);
            }
        });
    });
}

Tensor dropout(const Tensor& a, double p, bool train, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw Error(ErrorKind::InvalidArgument, "dropout probability outside [0,1)");
    if (!train || p == 0.0) return a;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(a.size());
    for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * mask[i];
    return Tensor::make_op("dropout", a.rows(), a.cols(), std::move(out), {a}, [mask = std::move(mask)](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * mask[i];
        });
    });
}

Tensor segment_softmax(const Tensor& values, std::span<const std::size_t> segment_ids) {
    const std::size_t n = values.rows(), m = values.cols();
    if (segment_ids.size() != n) throw Error(ErrorKind::ShapeMismatch, "segment_softmax: one id per row");
    // contiguous runs of equal ids
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::unordered_set<std::size_t> seen;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && segment_ids[j] == segment_ids[i]) ++j;
        if (!seen.insert(segment_ids[i]).second) {
            throw Error(ErrorKind::ShapeMismatch, "segment_softmax: segment ids are not grouped");
        }
        runs.emplace_back(i, j);
        i = j;
    }
    std::vector<double> out(n * m);
    const auto& v = values.values();
    for (auto [b, e] : runs) {
        for (std::size_t c = 0; c < m; ++c) {
            double mx = -INFINITY;
            for (std::size_t i = b; i < e; ++i) mx = std::max(mx, v[i * m + c]);
            double s = 0.0;
            for (std::size_t i = b; i < e; ++i) s += (out[i * m + c] = std::exp(v[i * m + c] - mx));
            for (std::size_t i = b; i < e; ++i) out[i * m + c] /= s;
        }
    }
    return Tensor::make_op("segment_softmax", n, m, std::move(out), {values}, [runs, m](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (auto [b, e] : runs) {
                for (std::size_t c = 0; c < m; ++c) {
                    double dot = 0.0;
                    for (std::size_t i = b; i < e; ++i) dot += o.grad[i * m + c] * o.value[i * m + c];
                    for (std::size_t i = b; i < e; ++i) g[i * m + c] += o.value[i * m + c] * (o.grad[i * m + c] - dot);
                }
            }
        });
    });
}

Tensor segment_sum(const Tensor& a, std::span<const std::size_t> segment_ids, std::size_t segments) {
    const std::size_t n = a.rows(), m = a.cols();
    if (segment_ids.size() != n) throw Error(ErrorKind::ShapeMismatch, "segment_sum: one id per row");
    std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
    std::vector<double> out(segments * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (ids[i] >= segments) throw Error(ErrorKind::ShapeMismatch, "segment_sum: id out of range");
        for (std::size_t c = 0; c < m; ++c) out[ids[i] * m + c] += a.values()[i * m + c];
    }
    return Tensor::make_op("segment_sum", segments, m, std::move(out), {a}, [ids = std::move(ids), m](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                for (std::size_t c = 0; c < m; ++c) g[i * m + c] += o.grad[ids[i] * m + c];
            }
        });
    });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
    const std::size_t m = a.cols();
    std::vector<std::size_t> idx(index.begin(), index.end());
    std::vector<double> out(idx.size() * m);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.rows()) throw Error(ErrorKind::ShapeMismatch, "gather_rows: index out of range");
        std::copy_n(a.values().data() + idx[i] * m, m, out.data() + i * m);
    }
    const std::size_t rows = idx.size();
    return Tensor::make_op("gather_rows", rows, m, std::move(out), {a}, [idx = std::move(idx), m](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < idx.size(); ++i) {
                for (std::size_t c = 0; c < m; ++c) g[idx[i] * m + c] += o.grad[i * m + c];
            }
        });
    });
}

Tensor scale_rows(const Tensor& a, const Tensor& w) {
    if (w.rows() != a.rows() || w.cols() != 1) shape_error("scale_rows", a, w);
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < m; ++c) out[i * m + c] *= w.values()[i];
    }
    return Tensor::make_op("scale_rows", n, m, std::move(out), {a, w}, [n, m](Node& o) {
        Node& A = parent(o, 0);
        Node& W = parent(o, 1);
        accumulate(A, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < m; ++c) g[i * m + c] += o.grad[i * m + c] * W.value[i];
            }
        });
        accumulate(W, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t c = 0; c < m; ++c) s += o.grad[i * m + c] * A.value[i * m + c];
                g[i] += s;
            }
        });
    });
}

Tensor column(const Tensor& a, std::size_t c) {
    if (c >= a.cols()) throw Error(ErrorKind::ShapeMismatch, "column index out of range");
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i * m + c];
    return Tensor::make_op("column", n, 1, std::move(out), {a}, [n, m, c](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < n; ++i) g[i * m + c] += o.grad[i];
        });
    });
}

Tensor sum(const Tensor& a) {
    const double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    return Tensor::make_op("sum", 1, 1, {s}, {a}, [](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (auto& x : g) x += o.grad[0];
        });
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw Error(ErrorKind::ShapeMismatch, "mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor nll_loss(const Tensor& log_probs, std::span<const int> labels) {
    const std::size_t n = log_probs.rows(), m = log_probs.cols();
    if (labels.size() != n || n == 0) throw Error(ErrorKind::ShapeMismatch, "nll_loss: one label per row");
    std::vector<int> y(labels.begin(), labels.end());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= m) throw Error(ErrorKind::ShapeMismatch, "label out of range");
        s -= log_probs.values()[i * m + static_cast<std::size_t>(y[i])];
    }
    const double inv = 1.0 / static_cast<double>(n);
    return Tensor::make_op("nll_loss", 1, 1, {s * inv}, {log_probs}, [y = std::move(y), m, inv](Node& o) {
        accumulate(parent(o, 0), [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < y.size(); ++i) g[i * m + static_cast<std::size_t>(y[i])] -= o.grad[0] * inv;
        });
    });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
    const std::size_t n = logits.rows();
    if (logits.cols() != 1 || targets.size() != n || n == 0) {
        throw Error(ErrorKind::ShapeMismatch, "bce_with_logits: n x 1 logits with one target each");
    }
    std::vector<double> t(targets.begin(), targets.end());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = logits.values()[i];
        // max(x,0) - x t + log(1 + exp(-|x|))
        s += std::max(x, 0.0) - x * t[i] + std::log1p(std::exp(-std::abs(x)));
    }
    const double inv = 1.0 / static_cast<double>(n);
    return Tensor::make_op("bce_with_logits", 1, 1, {s * inv}, {logits}, [t = std::move(t), inv](Node& o) {
        Node& L = parent(o, 0);
        accumulate(L, [&](std::vector<double>& g) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double x = L.value[i];
                const double p = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                g[i] += o.grad[0] * inv * (p - t[i]);
            }
        });
    });
}

void backward(const Tensor& loss) {
    if (loss.size() != 1) throw Error(ErrorKind::ShapeMismatch, "backward from a non-scalar");
    if (!loss.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    Node& root = *loss.node();
    root.ensure_grad();
    root.grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
    for (Node* n : order) {
        if (!n->parents.empty()) continue;
        for (double g : n->grad) {
            if (!std::isfinite(g)) throw Error(ErrorKind::NonFiniteGradient, "non-finite parameter gradient");
        }
    }
}

Tensor& ParamStore::add(const std::string& name, Tensor value) {
    if (params_.contains(name)) throw Error(ErrorKind::InvalidArgument, "duplicate parameter " + name);
    if (!value.requires_grad()) value = Tensor::parameter(value.rows(), value.cols(), value.values());
    AdamState st;
    st.m.assign(value.size(), 0.0);
    st.v.assign(value.size(), 0.0);
    state_.emplace(name, std::move(st));
    return params_.emplace(name, std::move(value)).first->second;
}

Tensor& ParamStore::glorot(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return add(name, Tensor::parameter(rows, cols, std::move(v)));
}

Tensor& ParamStore::zeros(const std::string& name, std::size_t rows, std::size_t cols) {
    return add(name, Tensor::parameter(rows, cols, std::vector<double>(rows * cols, 0.0)));
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error(ErrorKind::InvalidArgument, "no parameter " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error(ErrorKind::InvalidArgument, "no parameter " + name);
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

void ParamStore::adam_step(double lr, double weight_decay, double beta1, double beta2, double eps) {
    for (auto& [name, t] : params_) {
        auto& st = state_.at(name);
        Node& node = *t.node();
        node.ensure_grad();
        ++st.step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
        for (std::size_t i = 0; i < node.value.size(); ++i) {
            const double g = node.grad[i] + weight_decay * node.value[i];
            st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
            st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
            const double m_hat = st.m[i] / bc1;
            const double v_hat = st.v[i] / bc2;
            node.value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
        node.grad.assign(node.value.size(), 0.0);
    }
}

GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn, ParamStore& store, double tolerance, double h,
                               std::size_t max_elements_per_param, std::uint64_t seed, double floor) {
    GradCheckReport report;
    report.tolerance = tolerance;

    store.zero_grad();
    backward(loss_fn());
    std::map<std::string, std::vector<double>> analytic;
    for (auto& [name, t] : store.params()) {
        t.node()->ensure_grad();
        analytic[name] = t.grad();
    }
    store.zero_grad();

    Rng rng(seed);
    for (auto& [name, t] : store.params()) {
        std::vector<std::size_t> elems(t.size());
        std::iota(elems.begin(), elems.end(), 0);
        if (max_elements_per_param > 0 && elems.size() > max_elements_per_param) {
            rng.shuffle(elems);
            elems.resize(max_elements_per_param);
            std::sort(elems.begin(), elems.end());
        }
        GradCheckEntry entry{name, elems.size(), 0.0};
        auto& values = t.mutable_values();
        for (std::size_t i : elems) {
            const double orig = values[i];
            values[i] = orig + h;
            const double up = loss_fn().item();
            values[i] = orig - h;
            const double down = loss_fn().item();
            values[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[name][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            entry.max_relative_error = std::max(entry.max_relative_error, std::abs(a - numeric) / denom);
        }
        report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
        if (!(entry.max_relative_error < tolerance)) report.pass = false;
        report.entries.push_back(std::move(entry));
    }
    store.zero_grad();
    return report;
}

ModelCheckpoint snapshot_params(const ParamStore& store, std::string model_kind) {
    ModelCheckpoint ckpt;
    ckpt.model_kind = std::move(model_kind);
    for (const auto& [name, t] : store.params()) ckpt.params[name] = TensorData{t.rows(), t.cols(), t.values()};
    return ckpt;
}

void restore_params(const ModelCheckpoint& ckpt, ParamStore& store) {
    for (auto& [name, t] : store.params()) {
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end()) throw Error(ErrorKind::CorruptCheckpoint, "missing parameter " + name);
        if (it->second.rows != t.rows() || it->second.cols != t.cols()) {
            throw Error(ErrorKind::CorruptCheckpoint, "shape mismatch for " + name);
        }
        t.mutable_values() = it->second.values;
    }
}

void expect_kind(const ModelCheckpoint& ckpt, const std::string& kind) {
    if (ckpt.model_kind != kind) {
        throw Error(ErrorKind::IncompatibleCheckpoint, "expected a " + kind + " checkpoint, got " + ckpt.model_kind);
    }
}

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
    nlohmann::json j;
    j["format_version"] = ckpt.format_version;
    j["model_kind"] = ckpt.model_kind;
    j["config"] = ckpt.config;
    j["norm_stats"] = ckpt.norm_stats;
    j["rng_seed"] = ckpt.rng_seed;
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, data] : ckpt.params) {
        params[name] = {{"shape", {data.rows, data.cols}}, {"values", data.values}};
    }
    j["params"] = std::move(params);
    return j.dump(1) + "\n";
}

ModelCheckpoint parse_checkpoint(std::string_view bytes) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::CorruptCheckpoint, e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::CorruptCheckpoint, "checkpoint is not an object");
    auto version = j.find("format_version");
    if (version == j.end() || !version->is_string()) throw Error(ErrorKind::CorruptCheckpoint, "missing format_version");
    if (version->get<std::string>() != "1") {
        throw Error(ErrorKind::IncompatibleVersion, "format_version " + version->get<std::string>());
    }
    ModelCheckpoint ckpt;
    try {
        ckpt.model_kind = j.at("model_kind").get<std::string>();
        ckpt.config = j.at("config");
        ckpt.norm_stats = j.at("norm_stats");
        ckpt.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        for (const auto& [name, p] : j.at("params").items()) {
            TensorData d;
            const auto shape = p.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2) throw Error(ErrorKind::CorruptCheckpoint, "bad shape for " + name);
            d.rows = shape[0];
            d.cols = shape[1];
            d.values = p.at("values").get<std::vector<double>>();
            if (d.values.size() != d.rows * d.cols) throw Error(ErrorKind::CorruptCheckpoint, "value count for " + name);
            ckpt.params.emplace(name, std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptCheckpoint, e.what());
    }
    return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
    write_file(path, serialize_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

} // namespace sbomchain::tensor
