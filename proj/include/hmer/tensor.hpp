// Dense n-dimensional arrays with reverse-mode automatic differentiation.
// Covers exactly the operations the recognizer needs: convolution, pooling,
// nearest upsampling, small dense algebra, softmax and cross-entropy.
// Values are 64-bit floats throughout; layout is row-major.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace hmer {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

struct Node;

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;            // allocated lazily, same length as data
    std::shared_ptr<Node> producer;      // null for leaves

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

// One recorded operation. The backward rule reads the output's gradient and
// accumulates into the inputs' gradients; inputs are kept alive by the node.
struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    TensorImpl* output = nullptr;
    std::function<void()> backprop;
};

}  // namespace detail

class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
        : impl_(std::make_shared<detail::TensorImpl>()) {
        impl_->shape = std::move(shape);
        impl_->data.assign(shape_size(impl_->shape), fill);
        impl_->requires_grad = requires_grad;
    }

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : impl_(std::make_shared<detail::TensorImpl>()) {
        if (shape_size(shape) != values.size())
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " wants " +
                                        std::to_string(shape_size(shape)) + " values, got " +
                                        std::to_string(values.size()));
        impl_->shape = std::move(shape);
        impl_->data = std::move(values);
        impl_->requires_grad = requires_grad;
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->data.size(); }

    std::vector<double>& values() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }
    double operator[](std::size_t i) const { return impl_->data[i]; }
    double& operator[](std::size_t i) { return impl_->data[i]; }

    bool requires_grad() const { return impl_->requires_grad; }

    // Gradient accumulator; allocated (zero) on first access.
    std::vector<double>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad() const {
        impl_->ensure_grad();
        return impl_->grad;
    }

    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    detail::TensorImpl* raw() const { return impl_.get(); }

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

inline Tensor uniform_tensor(Shape shape, double lo, double hi, std::mt19937_64& rng,
                             bool requires_grad = false) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

namespace detail {

inline bool any_requires(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

// Wires `out` to its inputs with the given backward rule iff gradient
// tracking is needed on this path.
inline void record(Tensor& out, std::vector<Tensor> inputs, std::function<void()> backprop) {
    bool track = false;
    for (const Tensor& t : inputs)
        if (t.requires_grad()) track = true;
    if (!track) return;
    auto node = std::make_shared<Node>();
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(t.impl());
    node->output = out.raw();
    node->backprop = std::move(backprop);
    out.raw()->producer = node;
    out.raw()->requires_grad = true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and shape plumbing

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
    Tensor out(a.shape(), std::move(v));
    auto ai = a.impl(), bi = b.impl();
    auto* o = out.raw();
    detail::record(out, {a, b}, [ai, bi, o] {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[i] += o->grad[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) bi->grad[i] += o->grad[i];
        }
    });
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
    Tensor out(a.shape(), std::move(v));
    auto ai = a.impl(), bi = b.impl();
    auto* o = out.raw();
    detail::record(out, {a, b}, [ai, bi, o] {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[i] += o->grad[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) bi->grad[i] -= o->grad[i];
        }
    });
    return out;
}

// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
    Tensor out(a.shape(), std::move(v));
    auto ai = a.impl(), bi = b.impl();
    auto* o = out.raw();
    detail::record(out, {a, b}, [ai, bi, o] {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[i] += bi->data[i] * o->grad[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) bi->grad[i] += ai->data[i] * o->grad[i];
        }
    });
    return out;
}

// alpha * x + beta, elementwise with scalar coefficients.
inline Tensor affine(const Tensor& x, double alpha, double beta) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = alpha * x[i] + beta;
    Tensor out(x.shape(), std::move(v));
    auto xi = x.impl();
    auto* o = out.raw();
    detail::record(out, {x}, [xi, o, alpha] {
        xi->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) xi->grad[i] += alpha * o->grad[i];
    });
    return out;
}

inline Tensor tanh(const Tensor& x) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(x[i]);
    Tensor out(x.shape(), std::move(v));
    auto xi = x.impl();
    auto* o = out.raw();
    detail::record(out, {x}, [xi, o] {
        xi->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i)
            xi->grad[i] += (1.0 - o->data[i] * o->data[i]) * o->grad[i];
    });
    return out;
}

inline Tensor sigmoid(const Tensor& x) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-x[i]));
    Tensor out(x.shape(), std::move(v));
    auto xi = x.impl();
    auto* o = out.raw();
    detail::record(out, {x}, [xi, o] {
        xi->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i)
            xi->grad[i] += o->data[i] * (1.0 - o->data[i]) * o->grad[i];
    });
    return out;
}

inline Tensor exp(const Tensor& x) {
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(x[i]);
    Tensor out(x.shape(), std::move(v));
    auto xi = x.impl();
    auto* o = out.raw();
    detail::record(out, {x}, [xi, o] {
        xi->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) xi->grad[i] += o->data[i] * o->grad[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// contractions

// Supported forms: [r,k]x[k,c] -> [r,c]; [r,k]x[k] -> [r]; [k]x[k,c] -> [c].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto bad = [&] {
        return std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) +
                                     " and " + shape_str(b.shape()));
    };
    std::size_t r, k, c;
    bool a_vec = false, b_vec = false;
    if (a.rank() == 2 && b.rank() == 2) {
        r = a.shape()[0]; k = a.shape()[1]; c = b.shape()[1];
        if (b.shape()[0] != k) throw bad();
    } else if (a.rank() == 2 && b.rank() == 1) {
        r = a.shape()[0]; k = a.shape()[1]; c = 1; b_vec = true;
        if (b.shape()[0] != k) throw bad();
    } else if (a.rank() == 1 && b.rank() == 2) {
        r = 1; k = a.shape()[0]; c = b.shape()[1]; a_vec = true;
        if (b.shape()[0] != k) throw bad();
    } else {
        throw bad();
    }
    std::vector<double> v(r * c, 0.0);
    const double* ad = a.values().data();
    const double* bd = b.values().data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ad[i * k + kk];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j) v[i * c + j] += av * bd[kk * c + j];
        }
    Shape out_shape = a_vec ? Shape{c} : (b_vec ? Shape{r} : Shape{r, c});
    Tensor out(std::move(out_shape), std::move(v));
    auto ai = a.impl(), bi = b.impl();
    auto* o = out.raw();
    detail::record(out, {a, b}, [ai, bi, o, r, k, c] {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const double g = o->grad[i * c + j];
                    if (g == 0.0) continue;
                    for (std::size_t kk = 0; kk < k; ++kk)
                        ai->grad[i * k + kk] += g * bi->data[kk * c + j];
                }
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double av = ai->data[i * k + kk];
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < c; ++j)
                        bi->grad[kk * c + j] += av * o->grad[i * c + j];
                }
        }
    });
    return out;
}

// a [L,C] times transpose(w [K,C]) -> [L,K]; the layout weight matrices are
// stored in (rows index the output dimension).
inline Tensor matmul_nt(const Tensor& a, const Tensor& w) {
    if (a.rank() != 2 || w.rank() != 2 || a.shape()[1] != w.shape()[1])
        throw std::invalid_argument("matmul_nt: incompatible shapes " + shape_str(a.shape()) +
                                    " and " + shape_str(w.shape()));
    const std::size_t L = a.shape()[0], C = a.shape()[1], K = w.shape()[0];
    std::vector<double> v(L * K, 0.0);
    const double* ad = a.values().data();
    const double* wd = w.values().data();
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t k = 0; k < K; ++k) {
            double acc = 0.0;
            for (std::size_t c = 0; c < C; ++c) acc += ad[l * C + c] * wd[k * C + c];
            v[l * K + k] = acc;
        }
    Tensor out(Shape{L, K}, std::move(v));
    auto ai = a.impl(), wi = w.impl();
    auto* o = out.raw();
    detail::record(out, {a, w}, [ai, wi, o, L, C, K] {
        if (ai->requires_grad) {
            ai->ensure_grad();
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t k = 0; k < K; ++k) {
                    const double g = o->grad[l * K + k];
                    if (g == 0.0) continue;
                    for (std::size_t c = 0; c < C; ++c) ai->grad[l * C + c] += g * wi->data[k * C + c];
                }
        }
        if (wi->requires_grad) {
            wi->ensure_grad();
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t k = 0; k < K; ++k) {
                    const double g = o->grad[l * K + k];
                    if (g == 0.0) continue;
                    for (std::size_t c = 0; c < C; ++c) wi->grad[k * C + c] += g * ai->data[l * C + c];
                }
        }
    });
    return out;
}

// Adds a row vector to every row of a matrix.
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || m.shape()[1] != v.shape()[0])
        throw std::invalid_argument("add_rowvec: incompatible shapes " + shape_str(m.shape()) +
                                    " and " + shape_str(v.shape()));
    const std::size_t L = m.shape()[0], K = m.shape()[1];
    std::vector<double> out_v(L * K);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t k = 0; k < K; ++k) out_v[l * K + k] = m[l * K + k] + v[k];
    Tensor out(m.shape(), std::move(out_v));
    auto mi = m.impl(), vi = v.impl();
    auto* o = out.raw();
    detail::record(out, {m, v}, [mi, vi, o, L, K] {
        if (mi->requires_grad) {
            mi->ensure_grad();
            for (std::size_t i = 0; i < L * K; ++i) mi->grad[i] += o->grad[i];
        }
        if (vi->requires_grad) {
            vi->ensure_grad();
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t k = 0; k < K; ++k) vi->grad[k] += o->grad[l * K + k];
        }
    });
    return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size())
        throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                    " out of range for rank " + std::to_string(first.size()));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != first.size())
            throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d)
            if (d != axis && p.shape()[d] != first[d])
                throw std::invalid_argument("concat: extent mismatch at axis " + std::to_string(d) +
                                            ": " + shape_str(p.shape()) + " vs " + shape_str(first));
        out_shape[axis] += p.shape()[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    const std::size_t out_axis = out_shape[axis];
    std::vector<double> v(outer * out_axis * inner);
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t pa = p.shape()[axis];
        for (std::size_t ou = 0; ou < outer; ++ou)
            std::copy_n(p.values().data() + ou * pa * inner, pa * inner,
                        v.data() + (ou * out_axis + offset) * inner);
        offset += pa;
    }
    Tensor out(std::move(out_shape), std::move(v));
    std::vector<std::shared_ptr<detail::TensorImpl>> impls;
    std::vector<std::size_t> axes;
    for (const Tensor& p : parts) {
        impls.push_back(p.impl());
        axes.push_back(p.shape()[axis]);
    }
    auto* o = out.raw();
    detail::record(out, parts, [impls, axes, o, outer, inner, out_axis] {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < impls.size(); ++pi) {
            auto& in = impls[pi];
            const std::size_t pa = axes[pi];
            if (in->requires_grad) {
                in->ensure_grad();
                for (std::size_t ou = 0; ou < outer; ++ou) {
                    const double* src = o->grad.data() + (ou * out_axis + off) * inner;
                    double* dst = in->grad.data() + ou * pa * inner;
                    for (std::size_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
                }
            }
            off += pa;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// reductions and normalization

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
    Tensor out(Shape{1}, std::vector<double>{acc});
    auto xi = x.impl();
    auto* o = out.raw();
    detail::record(out, {x}, [xi, o] {
        xi->ensure_grad();
        for (double& g : xi->grad) g += o->grad[0];
    });
    return out;
}

// Mean over rows: [L,C] -> [C].
inline Tensor mean_rows(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("mean_rows: want rank 2, got " + shape_str(x.shape()));
    const std::size_t L = x.shape()[0], C = x.shape()[1];
    std::vector<double> v(C, 0.0);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t c = 0; c < C; ++c) v[c] += x[l * C + c];
    for (double& d : v) d /= static_cast<double>(L);
    Tensor out(Shape{C}, std::move(v));
    auto xi = x.impl();
    auto* o = out.raw();
    detail::record(out, {x}, [xi, o, L, C] {
        xi->ensure_grad();
        const double inv = 1.0 / static_cast<double>(L);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t c = 0; c < C; ++c) xi->grad[l * C + c] += o->grad[c] * inv;
    });
    return out;
}

inline Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank())
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                    " out of range for shape " + shape_str(x.shape()));
    const Shape& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t n = s[axis];
    std::vector<double> v(x.size());
    for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t in = 0; in < inner; ++in) {
            const auto at = [&](std::size_t i) { return (ou * n + i) * inner + in; };
            double m = -1e300;
            for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[at(i)]);
            double z = 0.0;
            for (std::size_t i = 0; i < n; ++i) z += std::exp(x[at(i)] - m);
            for (std::size_t i = 0; i < n; ++i) v[at(i)] = std::exp(x[at(i)] - m) / z;
        }
    Tensor out(s, std::move(v));
    auto xi = x.impl();
    auto* o = out.raw();
    detail::record(out, {x}, [xi, o, outer, inner, n] {
        xi->ensure_grad();
        for (std::size_t ou = 0; ou < outer; ++ou)
            for (std::size_t in = 0; in < inner; ++in) {
                const auto at = [&](std::size_t i) { return (ou * n + i) * inner + in; };
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += o->grad[at(i)] * o->data[at(i)];
                for (std::size_t i = 0; i < n; ++i)
                    xi->grad[at(i)] += o->data[at(i)] * (o->grad[at(i)] - dot);
            }
    });
    return out;
}

// Row lookup in an embedding table [V,m].
inline Tensor embedding_lookup(const Tensor& table, std::size_t id) {
    if (table.rank() != 2)
        throw std::invalid_argument("embedding_lookup: want rank-2 table, got " +
                                    shape_str(table.shape()));
    const std::size_t V = table.shape()[0], m = table.shape()[1];
    if (id >= V)
        throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                    " out of range [0," + std::to_string(V) + ")");
    std::vector<double> v(table.values().begin() + id * m, table.values().begin() + (id + 1) * m);
    Tensor out(Shape{m}, std::move(v));
    auto ti = table.impl();
    auto* o = out.raw();
    detail::record(out, {table}, [ti, o, id, m] {
        ti->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) ti->grad[id * m + i] += o->grad[i];
    });
    return out;
}

// -log(softmax(logits)[target]); logits is a rank-1 score vector.
inline Tensor cross_entropy(const Tensor& logits, std::size_t target) {
    if (logits.rank() != 1)
        throw std::invalid_argument("cross_entropy: want rank-1 logits, got " +
                                    shape_str(logits.shape()));
    const std::size_t V = logits.size();
    if (target >= V)
        throw std::invalid_argument("cross_entropy: target " + std::to_string(target) +
                                    " out of range [0," + std::to_string(V) + ")");
    double m = -1e300;
    for (std::size_t i = 0; i < V; ++i) m = std::max(m, logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < V; ++i) z += std::exp(logits[i] - m);
    const double lse = m + std::log(z);
    Tensor out(Shape{1}, std::vector<double>{lse - logits[target]});
    std::vector<double> probs(V);
    for (std::size_t i = 0; i < V; ++i) probs[i] = std::exp(logits[i] - m) / z;
    auto li = logits.impl();
    auto* o = out.raw();
    detail::record(out, {logits}, [li, o, probs = std::move(probs), target] {
        li->ensure_grad();
        const double g = o->grad[0];
        for (std::size_t i = 0; i < probs.size(); ++i)
            li->grad[i] += g * (probs[i] - (i == target ? 1.0 : 0.0));
    });
    return out;
}

// ---------------------------------------------------------------------------
// spatial operations (N,C,H,W)

inline void check_nchw(const Tensor& t, const char* op) {
    if (t.rank() != 4)
        throw std::invalid_argument(std::string(op) + ": want rank-4 N,C,H,W input, got " +
                                    shape_str(t.shape()));
}

// Cross-correlation with zero padding. kernel is [Cout,Cin,kh,kw].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel,
                     std::pair<std::size_t, std::size_t> stride = {1, 1},
                     std::pair<std::size_t, std::size_t> padding = {0, 0}) {
    check_nchw(input, "conv2d");
    if (kernel.rank() != 4)
        throw std::invalid_argument("conv2d: want rank-4 kernel, got " + shape_str(kernel.shape()));
    const std::size_t N = input.shape()[0], Cin = input.shape()[1];
    const std::size_t H = input.shape()[2], W = input.shape()[3];
    const std::size_t Cout = kernel.shape()[0], kh = kernel.shape()[2], kw = kernel.shape()[3];
    if (kernel.shape()[1] != Cin)
        throw std::invalid_argument("conv2d: input channels (" + std::to_string(Cin) +
                                    ") do not match kernel channels (" +
                                    std::to_string(kernel.shape()[1]) + ") [input " +
                                    shape_str(input.shape()) + ", kernel " +
                                    shape_str(kernel.shape()) + "]");
    const auto [sh, sw] = stride;
    const auto [ph, pw] = padding;
    if (sh < 1 || sw < 1) throw std::invalid_argument("conv2d: stride components must be >= 1");
    if (kh > H + 2 * ph || kw > W + 2 * pw)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(kh) + "x" +
                                    std::to_string(kw) + " exceeds padded input " +
                                    std::to_string(H + 2 * ph) + "x" + std::to_string(W + 2 * pw));
    const std::size_t Ho = (H + 2 * ph - kh) / sh + 1;
    const std::size_t Wo = (W + 2 * pw - kw) / sw + 1;
    std::vector<double> v(N * Cout * Ho * Wo, 0.0);
    const double* in = input.values().data();
    const double* ker = kernel.values().data();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < Cin; ++ci) {
                        const double* in_c = in + (n * Cin + ci) * H * W;
                        const double* k_c = ker + (co * Cin + ci) * kh * kw;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * sh + ky) -
                                                      static_cast<std::ptrdiff_t>(ph);
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * sw + kx) -
                                                          static_cast<std::ptrdiff_t>(pw);
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                                acc += in_c[ih * W + iw] * k_c[ky * kw + kx];
                            }
                        }
                    }
                    v[((n * Cout + co) * Ho + oh) * Wo + ow] = acc;
                }
    Tensor out(Shape{N, Cout, Ho, Wo}, std::move(v));
    auto ii = input.impl(), ki = kernel.impl();
    auto* o = out.raw();
    detail::record(out, {input, kernel}, [ii, ki, o, N, Cin, H, W, Cout, kh, kw, sh, sw, ph, pw, Ho,
                                          Wo] {
        const bool gi = ii->requires_grad, gk = ki->requires_grad;
        if (gi) ii->ensure_grad();
        if (gk) ki->ensure_grad();
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t co = 0; co < Cout; ++co)
                for (std::size_t oh = 0; oh < Ho; ++oh)
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        const double g = o->grad[((n * Cout + co) * Ho + oh) * Wo + ow];
                        if (g == 0.0) continue;
                        for (std::size_t ci = 0; ci < Cin; ++ci) {
                            const std::size_t in_base = (n * Cin + ci) * H * W;
                            const std::size_t k_base = (co * Cin + ci) * kh * kw;
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * sh + ky) -
                                                          static_cast<std::ptrdiff_t>(ph);
                                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const std::ptrdiff_t iw =
                                        static_cast<std::ptrdiff_t>(ow * sw + kx) -
                                        static_cast<std::ptrdiff_t>(pw);
                                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                                    const std::size_t ipos = in_base + ih * W + iw;
                                    const std::size_t kpos = k_base + ky * kw + kx;
                                    if (gi) ii->grad[ipos] += ki->data[kpos] * g;
                                    if (gk) ki->grad[kpos] += ii->data[ipos] * g;
                                }
                            }
                        }
                    }
    });
    return out;
}

namespace detail {

inline void check_pool_args(const Tensor& input, std::pair<std::size_t, std::size_t> window,
                            std::pair<std::size_t, std::size_t> stride, const char* op) {
    check_nchw(input, op);
    if (window.first == 0 || window.second == 0)
        throw std::invalid_argument(std::string(op) + ": zero-sized window");
    if (stride.first < 1 || stride.second < 1)
        throw std::invalid_argument(std::string(op) + ": stride components must be >= 1");
    if (window.first > input.shape()[2] || window.second > input.shape()[3])
        throw std::invalid_argument(std::string(op) + ": window " + std::to_string(window.first) +
                                    "x" + std::to_string(window.second) + " exceeds input " +
                                    shape_str(input.shape()));
}

}  // namespace detail

inline Tensor max_pool2d(const Tensor& input, std::pair<std::size_t, std::size_t> window,
                         std::pair<std::size_t, std::size_t> stride) {
    detail::check_pool_args(input, window, stride, "max_pool2d");
    const std::size_t N = input.shape()[0], C = input.shape()[1];
    const std::size_t H = input.shape()[2], W = input.shape()[3];
    const auto [wh, ww] = window;
    const auto [sh, sw] = stride;
    const std::size_t Ho = (H - wh) / sh + 1;
    const std::size_t Wo = (W - ww) / sw + 1;
    std::vector<double> v(N * C * Ho * Wo);
    std::vector<std::size_t> argmax(v.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double best = -1e300;
                    std::size_t best_pos = 0;
                    for (std::size_t ky = 0; ky < wh; ++ky)
                        for (std::size_t kx = 0; kx < ww; ++kx) {
                            const std::size_t pos =
                                ((n * C + c) * H + oh * sh + ky) * W + ow * sw + kx;
                            if (input[pos] > best) {
                                best = input[pos];
                                best_pos = pos;
                            }
                        }
                    const std::size_t opos = ((n * C + c) * Ho + oh) * Wo + ow;
                    v[opos] = best;
                    argmax[opos] = best_pos;
                }
    Tensor out(Shape{N, C, Ho, Wo}, std::move(v));
    auto ii = input.impl();
    auto* o = out.raw();
    detail::record(out, {input}, [ii, o, argmax = std::move(argmax)] {
        ii->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) ii->grad[argmax[i]] += o->grad[i];
    });
    return out;
}

inline Tensor avg_pool2d(const Tensor& input, std::pair<std::size_t, std::size_t> window,
                         std::pair<std::size_t, std::size_t> stride) {
    detail::check_pool_args(input, window, stride, "avg_pool2d");
    const std::size_t N = input.shape()[0], C = input.shape()[1];
    const std::size_t H = input.shape()[2], W = input.shape()[3];
    const auto [wh, ww] = window;
    const auto [sh, sw] = stride;
    const std::size_t Ho = (H - wh) / sh + 1;
    const std::size_t Wo = (W - ww) / sw + 1;
    const double inv = 1.0 / static_cast<double>(wh * ww);
    std::vector<double> v(N * C * Ho * Wo);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (std::size_t ky = 0; ky < wh; ++ky)
                        for (std::size_t kx = 0; kx < ww; ++kx)
                            acc += input[((n * C + c) * H + oh * sh + ky) * W + ow * sw + kx];
                    v[((n * C + c) * Ho + oh) * Wo + ow] = acc * inv;
                }
    Tensor out(Shape{N, C, Ho, Wo}, std::move(v));
    auto ii = input.impl();
    auto* o = out.raw();
    detail::record(out, {input}, [ii, o, N, C, H, W, wh, ww, sh, sw, Ho, Wo, inv] {
        ii->ensure_grad();
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t oh = 0; oh < Ho; ++oh)
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        const double g = o->grad[((n * C + c) * Ho + oh) * Wo + ow] * inv;
                        if (g == 0.0) continue;
                        for (std::size_t ky = 0; ky < wh; ++ky)
                            for (std::size_t kx = 0; kx < ww; ++kx)
                                ii->grad[((n * C + c) * H + oh * sh + ky) * W + ow * sw + kx] += g;
                    }
    });
    return out;
}

// Each source pixel replicated into a 2x2 block.
inline Tensor upsample2x_nearest(const Tensor& input) {
    check_nchw(input, "upsample2x_nearest");
    const std::size_t N = input.shape()[0], C = input.shape()[1];
    const std::size_t H = input.shape()[2], W = input.shape()[3];
    std::vector<double> v(N * C * 4 * H * W);
    for (std::size_t nc = 0; nc < N * C; ++nc)
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w) {
                const double x = input[(nc * H + h) * W + w];
                const std::size_t base = (nc * 2 * H + 2 * h) * 2 * W + 2 * w;
                v[base] = x;
                v[base + 1] = x;
                v[base + 2 * W] = x;
                v[base + 2 * W + 1] = x;
            }
    Tensor out(Shape{N, C, 2 * H, 2 * W}, std::move(v));
    auto ii = input.impl();
    auto* o = out.raw();
    detail::record(out, {input}, [ii, o, N, C, H, W] {
        ii->ensure_grad();
        for (std::size_t nc = 0; nc < N * C; ++nc)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    const std::size_t base = (nc * 2 * H + 2 * h) * 2 * W + 2 * w;
                    ii->grad[(nc * H + h) * W + w] +=
                        o->grad[base] + o->grad[base + 1] + o->grad[base + 2 * W] +
                        o->grad[base + 2 * W + 1];
                }
    });
    return out;
}

// Spatial positions of a [1,C,H,W] map as rows: output [H*W, C].
inline Tensor annotations(const Tensor& fmap) {
    check_nchw(fmap, "annotations");
    if (fmap.shape()[0] != 1)
        throw std::invalid_argument("annotations: want batch 1, got " + shape_str(fmap.shape()));
    const std::size_t C = fmap.shape()[1], H = fmap.shape()[2], W = fmap.shape()[3];
    const std::size_t L = H * W;
    std::vector<double> v(L * C);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t l = 0; l < L; ++l) v[l * C + c] = fmap[c * L + l];
    Tensor out(Shape{L, C}, std::move(v));
    auto fi = fmap.impl();
    auto* o = out.raw();
    detail::record(out, {fmap}, [fi, o, C, L] {
        fi->ensure_grad();
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t l = 0; l < L; ++l) fi->grad[c * L + l] += o->grad[l * C + c];
    });
    return out;
}

// Reshape a flat per-position vector [H*W] into a [1,1,H,W] map.
inline Tensor as_image(const Tensor& flat, std::size_t H, std::size_t W) {
    if (flat.rank() != 1 || flat.size() != H * W)
        throw std::invalid_argument("as_image: " + shape_str(flat.shape()) + " does not reshape to " +
                                    std::to_string(H) + "x" + std::to_string(W));
    Tensor out(Shape{1, 1, H, W}, flat.values());
    auto fi = flat.impl();
    auto* o = out.raw();
    detail::record(out, {flat}, [fi, o] {
        fi->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) fi->grad[i] += o->grad[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// backward pass

// Populates gradients of every requires_grad tensor reachable from `loss`.
// Accumulation is additive; callers zero parameter gradients between steps.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(loss.shape()));
    if (!loss.requires_grad()) return;  // no tracked leaves feed this value

    // Postorder over the producing nodes, children first.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<std::pair<detail::TensorImpl*, bool>> stack;
    stack.emplace_back(loss.raw(), false);
    while (!stack.empty()) {
        auto [impl, expanded] = stack.back();
        stack.pop_back();
        if (expanded) {
            order.push_back(impl);
            continue;
        }
        if (!seen.insert(impl).second) continue;
        stack.emplace_back(impl, true);
        if (impl->producer)
            for (const auto& in : impl->producer->inputs)
                if (in->requires_grad) stack.emplace_back(in.get(), false);
    }

    for (detail::TensorImpl* impl : order)
        if (impl->producer) impl->ensure_grad();
    loss.raw()->ensure_grad();
    loss.raw()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->producer) (*it)->producer->backprop();
}

// Argmax over a rank-1 tensor; ties resolve to the lowest index.
inline std::size_t argmax(const Tensor& t) {
    if (t.size() == 0) throw std::invalid_argument("argmax: empty tensor");
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i] > t[best]) best = i;
    return best;
}

inline bool all_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

}  // namespace hmer
