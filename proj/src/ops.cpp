#include "mafea/ops.hpp"

#include <algorithm>
#include <cmath>

namespace mafea::ops {

using detail::TensorImpl;
using detail::make_op;

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

bool needs(const ImplPtr& t) { return t->requires_grad; }

void check_same_shape(const char* name, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ConfigError(std::string(name) + ": shape mismatch " + shape_to_string(a.shape()) +
                          " vs " + shape_to_string(b.shape()));
}

void check_rank(const char* name, const Tensor& t, Index rank) {
    if (t.rank() != rank)
        throw ConfigError(std::string(name) + ": expected rank " + std::to_string(rank) +
                          ", got shape " + shape_to_string(t.shape()));
}

// ln(1 + e^x), evaluated without overflow for large x.
double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_op("add", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
        if (needs(ai)) ai->accumulate(o.grad.data(), o.numel());
        if (needs(bi)) bi->accumulate(o.grad.data(), o.numel());
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_op("sub", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
        if (needs(ai)) ai->accumulate(o.grad.data(), o.numel());
        if (needs(bi)) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_op("mul", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
        if (needs(ai)) {
            ai->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += o.grad[i] * bi->data[i];
        }
        if (needs(bi)) {
            bi->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bi->grad[i] += o.grad[i] * ai->data[i];
        }
    });
}

Tensor affine(const Tensor& x, double a, double b) {
    std::vector<double> out = x.values();
    for (auto& v : out) v = a * v + b;
    ImplPtr xi = x.impl();
    return make_op("affine", x.shape(), std::move(out), {x}, [xi, a](const TensorImpl& o) {
        if (!needs(xi)) return;
        xi->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) xi->grad[i] += a * o.grad[i];
    });
}

Tensor log(const Tensor& x) {
    std::vector<double> out = x.values();
    for (auto& v : out) v = std::log(v);
    ImplPtr xi = x.impl();
    return make_op("log", x.shape(), std::move(out), {x}, [xi](const TensorImpl& o) {
        if (!needs(xi)) return;
        xi->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) xi->grad[i] += o.grad[i] / xi->data[i];
    });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (lo > hi) throw ConfigError("clamp: lo > hi");
    std::vector<double> out = x.values();
    for (auto& v : out) v = std::clamp(v, lo, hi);
    ImplPtr xi = x.impl();
    return make_op("clamp", x.shape(), std::move(out), {x}, [xi, lo, hi](const TensorImpl& o) {
        if (!needs(xi)) return;
        xi->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            double v = xi->data[i];
            if (v >= lo && v <= hi) xi->grad[i] += o.grad[i];
        }
    });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    std::vector<double> out = x.values();
    for (auto& v : out) v = v >= 0.0 ? v : slope * v;
    ImplPtr xi = x.impl();
    return make_op("leaky_relu", x.shape(), std::move(out), {x}, [xi, slope](const TensorImpl& o) {
        if (!needs(xi)) return;
        xi->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            xi->grad[i] += o.grad[i] * (xi->data[i] >= 0.0 ? 1.0 : slope);
    });
}

Tensor density_rectifier(const Tensor& x) {
    // softplus keeps every pixel strictly positive with a live gradient, so
    // near-zero background regions can keep adjusting instead of going dead
    std::vector<double> out = x.values();
    for (auto& v : out) v = softplus(v);
    ImplPtr xi = x.impl();
    return make_op("density_rectifier", x.shape(), std::move(out), {x}, [xi](const TensorImpl& o) {
        if (!needs(xi)) return;
        xi->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            xi->grad[i] += o.grad[i] / (1.0 + std::exp(-xi->data[i]));
    });
}

Tensor maximum_of(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ConfigError("maximum_of: empty input list");
    for (const auto& t : xs) check_same_shape("maximum_of", xs[0], t);
    std::size_t n = xs[0].values().size();
    std::vector<double> out = xs[0].values();
    std::vector<int> winner(n, 0);
    for (std::size_t k = 1; k < xs.size(); ++k) {
        const auto& v = xs[k].values();
        for (std::size_t i = 0; i < n; ++i)
            if (v[i] > out[i]) {  // strict: earliest input wins ties
                out[i] = v[i];
                winner[i] = static_cast<int>(k);
            }
    }
    std::vector<ImplPtr> impls;
    for (const auto& t : xs) impls.push_back(t.impl());
    return make_op("maximum_of", xs[0].shape(), std::move(out), xs,
                   [impls, winner = std::move(winner)](const TensorImpl& o) {
                       for (std::size_t i = 0; i < o.grad.size(); ++i) {
                           const ImplPtr& w = impls[static_cast<std::size_t>(winner[i])];
                           if (!needs(w)) continue;
                           w->ensure_grad();
                           w->grad[i] += o.grad[i];
                       }
                   });
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    ImplPtr xi = x.impl();
    return make_op("sum_all", {}, {s}, {x}, [xi](const TensorImpl& o) {
        if (!needs(xi)) return;
        xi->ensure_grad();
        for (auto& g : xi->grad) g += o.grad[0];
    });
}

Tensor mean_all(const Tensor& x) {
    if (x.numel() == 0) throw ConfigError("mean_all: empty tensor");
    double s = 0.0;
    for (double v : x.values()) s += v;
    double inv = 1.0 / static_cast<double>(x.numel());
    ImplPtr xi = x.impl();
    return make_op("mean_all", {}, {s * inv}, {x}, [xi, inv](const TensorImpl& o) {
        if (!needs(xi)) return;
        xi->ensure_grad();
        for (auto& g : xi->grad) g += o.grad[0] * inv;
    });
}

Tensor pick(const Tensor& x, Index flat_index) {
    if (flat_index < 0 || flat_index >= x.numel())
        throw ConfigError("pick: index " + std::to_string(flat_index) + " out of range");
    std::size_t idx = static_cast<std::size_t>(flat_index);
    ImplPtr xi = x.impl();
    return make_op("pick", {}, {x.values()[idx]}, {x}, [xi, idx](const TensorImpl& o) {
        if (!needs(xi)) return;
        xi->ensure_grad();
        xi->grad[idx] += o.grad[0];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ConfigError("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                          shape_to_string(shape));
    ImplPtr xi = x.impl();
    return make_op("reshape", std::move(shape), x.values(), {x}, [xi](const TensorImpl& o) {
        if (needs(xi)) xi->accumulate(o.grad.data(), o.numel());
    });
}

Tensor transpose2d(const Tensor& x) {
    check_rank("transpose2d", x, 2);
    Index m = x.dim(0), n = x.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    const double* src = x.ptr();
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) out[static_cast<std::size_t>(j * m + i)] = src[i * n + j];
    ImplPtr xi = x.impl();
    return make_op("transpose2d", {n, m}, std::move(out), {x}, [xi, m, n](const TensorImpl& o) {
        if (!needs(xi)) return;
        xi->ensure_grad();
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < m; ++i)
                xi->grad[static_cast<std::size_t>(i * n + j)] += o.grad[static_cast<std::size_t>(j * m + i)];
    });
}

Tensor slice_rows(const Tensor& x, Index begin, Index end) {
    check_rank("slice_rows", x, 2);
    Index m = x.dim(0), n = x.dim(1);
    if (begin < 0 || end > m || begin >= end)
        throw ConfigError("slice_rows: bad range [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") for " + std::to_string(m) + " rows");
    std::vector<double> out(x.values().begin() + begin * n, x.values().begin() + end * n);
    ImplPtr xi = x.impl();
    return make_op("slice_rows", {end - begin, n}, std::move(out), {x},
                   [xi, begin, n](const TensorImpl& o) {
                       if (!needs(xi)) return;
                       xi->ensure_grad();
                       std::size_t off = static_cast<std::size_t>(begin * n);
                       for (std::size_t i = 0; i < o.grad.size(); ++i) xi->grad[off + i] += o.grad[i];
                   });
}

Tensor slice_cols(const Tensor& x, Index begin, Index end) {
    check_rank("slice_cols", x, 2);
    Index m = x.dim(0), n = x.dim(1);
    if (begin < 0 || end > n || begin >= end)
        throw ConfigError("slice_cols: bad range [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") for " + std::to_string(n) + " cols");
    Index w = end - begin;
    std::vector<double> out(static_cast<std::size_t>(m * w));
    const double* src = x.ptr();
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < w; ++j) out[static_cast<std::size_t>(i * w + j)] = src[i * n + begin + j];
    ImplPtr xi = x.impl();
    return make_op("slice_cols", {m, w}, std::move(out), {x},
                   [xi, begin, m, n, w](const TensorImpl& o) {
                       if (!needs(xi)) return;
                       xi->ensure_grad();
                       for (Index i = 0; i < m; ++i)
                           for (Index j = 0; j < w; ++j)
                               xi->grad[static_cast<std::size_t>(i * n + begin + j)] +=
                                   o.grad[static_cast<std::size_t>(i * w + j)];
                   });
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ConfigError("concat_rows: empty input list");
    Index n = xs[0].dim(1), m = 0;
    for (const auto& t : xs) {
        check_rank("concat_rows", t, 2);
        if (t.dim(1) != n) throw ConfigError("concat_rows: column mismatch");
        m += t.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m * n));
    for (const auto& t : xs) out.insert(out.end(), t.values().begin(), t.values().end());
    std::vector<ImplPtr> impls;
    for (const auto& t : xs) impls.push_back(t.impl());
    return make_op("concat_rows", {m, n}, std::move(out), xs, [impls](const TensorImpl& o) {
        std::size_t off = 0;
        for (const auto& xi : impls) {
            std::size_t len = xi->data.size();
            if (needs(xi)) xi->accumulate(o.grad.data() + off, static_cast<Index>(len));
            off += len;
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ConfigError("concat_cols: empty input list");
    Index m = xs[0].dim(0), n = 0;
    for (const auto& t : xs) {
        check_rank("concat_cols", t, 2);
        if (t.dim(0) != m) throw ConfigError("concat_cols: row mismatch");
        n += t.dim(1);
    }
    std::vector<double> out(static_cast<std::size_t>(m * n));
    Index col = 0;
    for (const auto& t : xs) {
        Index w = t.dim(1);
        const double* src = t.ptr();
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < w; ++j) out[static_cast<std::size_t>(i * n + col + j)] = src[i * w + j];
        col += w;
    }
    std::vector<ImplPtr> impls;
    for (const auto& t : xs) impls.push_back(t.impl());
    return make_op("concat_cols", {m, n}, std::move(out), xs, [impls, m, n](const TensorImpl& o) {
        Index col = 0;
        for (const auto& xi : impls) {
            Index w = xi->shape[1];
            if (needs(xi)) {
                xi->ensure_grad();
                for (Index i = 0; i < m; ++i)
                    for (Index j = 0; j < w; ++j)
                        xi->grad[static_cast<std::size_t>(i * w + j)] +=
                            o.grad[static_cast<std::size_t>(i * n + col + j)];
            }
            col += w;
        }
    });
}

Tensor tokens_to_map(const Tensor& tokens, Index h, Index w) {
    check_rank("tokens_to_map", tokens, 2);
    Index n = tokens.dim(0), c = tokens.dim(1);
    if (n != h * w)
        throw ConfigError("tokens_to_map: " + std::to_string(n) + " tokens cannot tile " +
                          std::to_string(h) + "x" + std::to_string(w));
    std::vector<double> out(static_cast<std::size_t>(c * h * w));
    const double* src = tokens.ptr();
    for (Index t = 0; t < n; ++t)
        for (Index ch = 0; ch < c; ++ch) out[static_cast<std::size_t>(ch * n + t)] = src[t * c + ch];
    ImplPtr xi = tokens.impl();
    return make_op("tokens_to_map", {c, h, w}, std::move(out), {tokens},
                   [xi, n, c](const TensorImpl& o) {
                       if (!needs(xi)) return;
                       xi->ensure_grad();
                       for (Index t = 0; t < n; ++t)
                           for (Index ch = 0; ch < c; ++ch)
                               xi->grad[static_cast<std::size_t>(t * c + ch)] +=
                                   o.grad[static_cast<std::size_t>(ch * n + t)];
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank("matmul", a, 2);
    check_rank("matmul", b, 2);
    Index m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ConfigError("matmul: inner extents disagree, " + shape_to_string(a.shape()) + " x " +
                          shape_to_string(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    for (Index i = 0; i < m; ++i)
        for (Index kk = 0; kk < k; ++kk) {
            double aik = pa[i * k + kk];
            const double* brow = pb + kk * n;
            double* orow = out.data() + i * n;
            for (Index j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    ImplPtr ai = a.impl(), bi = b.impl();
    return make_op("matmul", {m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](const TensorImpl& o) {
        const double* go = o.grad.data();
        if (needs(ai)) {
            ai->ensure_grad();
            // dA = dC * B^T, accumulated row-wise over both operands
            for (Index i = 0; i < m; ++i)
                for (Index kk = 0; kk < k; ++kk) {
                    const double* grow = go + i * n;
                    const double* brow = bi->data.data() + kk * n;
                    double s = 0.0;
                    for (Index j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ai->grad[static_cast<std::size_t>(i * k + kk)] += s;
                }
        }
        if (needs(bi)) {
            bi->ensure_grad();
            // dB = A^T * dC
            for (Index i = 0; i < m; ++i)
                for (Index kk = 0; kk < k; ++kk) {
                    double aik = ai->data[static_cast<std::size_t>(i * k + kk)];
                    const double* grow = go + i * n;
                    double* brow = bi->grad.data() + kk * n;
                    for (Index j = 0; j < n; ++j) brow[j] += aik * grow[j];
                }
        }
    });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    check_rank("add_rowvec", x, 2);
    check_rank("add_rowvec", v, 1);
    Index m = x.dim(0), n = x.dim(1);
    if (v.dim(0) != n) throw ConfigError("add_rowvec: width mismatch");
    std::vector<double> out = x.values();
    const double* pv = v.ptr();
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) out[static_cast<std::size_t>(i * n + j)] += pv[j];
    ImplPtr xi = x.impl(), vi = v.impl();
    return make_op("add_rowvec", x.shape(), std::move(out), {x, v}, [xi, vi, m, n](const TensorImpl& o) {
        if (needs(xi)) xi->accumulate(o.grad.data(), o.numel());
        if (needs(vi)) {
            vi->ensure_grad();
            for (Index i = 0; i < m; ++i)
                for (Index j = 0; j < n; ++j)
                    vi->grad[static_cast<std::size_t>(j)] += o.grad[static_cast<std::size_t>(i * n + j)];
        }
    });
}

Tensor softmax(const Tensor& x, Index axis) {
    Index r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
        throw ConfigError("softmax: axis out of range for shape " + shape_to_string(x.shape()));
    Index n = x.dim(axis);
    Index inner = 1, outer = 1;
    for (Index d = axis + 1; d < r; ++d) inner *= x.dim(d);
    for (Index d = 0; d < axis; ++d) outer *= x.dim(d);
    std::vector<double> out(x.values().size());
    const double* src = x.ptr();
    for (Index o = 0; o < outer; ++o)
        for (Index in = 0; in < inner; ++in) {
            Index base = o * n * inner + in;
            double mx = src[base];
            for (Index j = 1; j < n; ++j) mx = std::max(mx, src[base + j * inner]);
            double sum = 0.0;
            for (Index j = 0; j < n; ++j) {
                double e = std::exp(src[base + j * inner] - mx);
                out[static_cast<std::size_t>(base + j * inner)] = e;
                sum += e;
            }
            for (Index j = 0; j < n; ++j) out[static_cast<std::size_t>(base + j * inner)] /= sum;
        }
    ImplPtr xi = x.impl();
    std::vector<double> y = out;  // backward needs the normalized outputs
    return make_op("softmax", x.shape(), std::move(out), {x},
                   [xi, y = std::move(y), n, inner, outer](const TensorImpl& o) {
                       if (!needs(xi)) return;
                       xi->ensure_grad();
                       for (Index ou = 0; ou < outer; ++ou)
                           for (Index in = 0; in < inner; ++in) {
                               Index base = ou * n * inner + in;
                               double dot = 0.0;
                               for (Index j = 0; j < n; ++j) {
                                   std::size_t idx = static_cast<std::size_t>(base + j * inner);
                                   dot += o.grad[idx] * y[idx];
                               }
                               for (Index j = 0; j < n; ++j) {
                                   std::size_t idx = static_cast<std::size_t>(base + j * inner);
                                   xi->grad[idx] += y[idx] * (o.grad[idx] - dot);
                               }
                           }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() < 1) throw ConfigError("layer_norm: rank-0 input");
    Index c = x.dim(x.rank() - 1);
    check_rank("layer_norm", gamma, 1);
    check_rank("layer_norm", beta, 1);
    if (gamma.dim(0) != c || beta.dim(0) != c)
        throw ConfigError("layer_norm: gamma/beta width must equal last extent " + std::to_string(c));
    Index rows = x.numel() / c;
    std::vector<double> out(x.values().size());
    std::vector<double> xhat(x.values().size());
    std::vector<double> inv(static_cast<std::size_t>(rows));
    const double* src = x.ptr();
    const double* pg = gamma.ptr();
    const double* pbt = beta.ptr();
    for (Index r = 0; r < rows; ++r) {
        const double* row = src + r * c;
        double mean = 0.0;
        for (Index j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (Index j = 0; j < c; ++j) {
            double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        double iv = 1.0 / std::sqrt(var + eps);
        inv[static_cast<std::size_t>(r)] = iv;
        for (Index j = 0; j < c; ++j) {
            double xh = (row[j] - mean) * iv;
            xhat[static_cast<std::size_t>(r * c + j)] = xh;
            out[static_cast<std::size_t>(r * c + j)] = pg[j] * xh + pbt[j];
        }
    }
    ImplPtr xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    return make_op("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                   [xi, gi, bi, rows, c, xhat = std::move(xhat), inv = std::move(inv)](const TensorImpl& o) {
                       std::vector<double> dxh(static_cast<std::size_t>(c));
                       for (Index r = 0; r < rows; ++r) {
                           const double* go = o.grad.data() + r * c;
                           const double* xh = xhat.data() + r * c;
                           if (needs(gi)) {
                               gi->ensure_grad();
                               for (Index j = 0; j < c; ++j) gi->grad[static_cast<std::size_t>(j)] += go[j] * xh[j];
                           }
                           if (needs(bi)) {
                               bi->ensure_grad();
                               for (Index j = 0; j < c; ++j) bi->grad[static_cast<std::size_t>(j)] += go[j];
                           }
                           if (needs(xi)) {
                               xi->ensure_grad();
                               double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                               for (Index j = 0; j < c; ++j) {
                                   dxh[static_cast<std::size_t>(j)] = go[j] * gi->data[static_cast<std::size_t>(j)];
                                   mean_dxh += dxh[static_cast<std::size_t>(j)];
                                   mean_dxh_xh += dxh[static_cast<std::size_t>(j)] * xh[j];
                               }
                               mean_dxh /= static_cast<double>(c);
                               mean_dxh_xh /= static_cast<double>(c);
                               double iv = inv[static_cast<std::size_t>(r)];
                               for (Index j = 0; j < c; ++j)
                                   xi->grad[static_cast<std::size_t>(r * c + j)] +=
                                       iv * (dxh[static_cast<std::size_t>(j)] - mean_dxh - xh[j] * mean_dxh_xh);
                           }
                       }
                   });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Index stride, Index pad) {
    check_rank("conv2d", x, 3);
    check_rank("conv2d", kernel, 4);
    Index cin = x.dim(0), hh = x.dim(1), ww = x.dim(2);
    Index cout = kernel.dim(0), kcin = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kcin != cin) throw ConfigError("conv2d: kernel input channels mismatch");
    if (kh != kw || kh % 2 == 0) throw ConfigError("conv2d: kernel must be square with odd extent");
    if (stride < 1 || pad < 0) throw ConfigError("conv2d: bad stride/pad");
    if ((hh + 2 * pad - kh) % stride != 0 || (ww + 2 * pad - kw) % stride != 0)
        throw ConfigError("conv2d: non-integral output extent");
    Index ho = (hh + 2 * pad - kh) / stride + 1;
    Index wo = (ww + 2 * pad - kw) / stride + 1;
    if (ho < 1 || wo < 1) throw ConfigError("conv2d: empty output");
    bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout))
        throw ConfigError("conv2d: bias extent mismatch");
    std::vector<double> out(static_cast<std::size_t>(cout * ho * wo), 0.0);
    const double* px = x.ptr();
    const double* pk = kernel.ptr();
    for (Index co = 0; co < cout; ++co) {
        double b = has_bias ? bias.ptr()[co] : 0.0;
        for (Index oy = 0; oy < ho; ++oy)
            for (Index ox = 0; ox < wo; ++ox) {
                double acc = b;
                for (Index ci = 0; ci < cin; ++ci)
                    for (Index ky = 0; ky < kh; ++ky) {
                        Index iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= hh) continue;
                        const double* xrow = px + (ci * hh + iy) * ww;
                        const double* krow = pk + ((co * cin + ci) * kh + ky) * kw;
                        for (Index kx = 0; kx < kw; ++kx) {
                            Index ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= ww) continue;
                            acc += xrow[ix] * krow[kx];
                        }
                    }
                out[static_cast<std::size_t>((co * ho + oy) * wo + ox)] = acc;
            }
    }
    std::vector<Tensor> inputs = {x, kernel};
    if (has_bias) inputs.push_back(bias);
    ImplPtr xi = x.impl(), ki = kernel.impl();
    ImplPtr bimpl = has_bias ? bias.impl() : nullptr;
    return make_op("conv2d", {cout, ho, wo}, std::move(out), inputs,
                   [xi, ki, bimpl, cin, hh, ww, cout, kh, kw, ho, wo, stride, pad](const TensorImpl& o) {
                       bool dx = needs(xi), dk = needs(ki), db = bimpl && needs(bimpl);
                       if (dx) xi->ensure_grad();
                       if (dk) ki->ensure_grad();
                       if (db) bimpl->ensure_grad();
                       for (Index co = 0; co < cout; ++co)
                           for (Index oy = 0; oy < ho; ++oy)
                               for (Index ox = 0; ox < wo; ++ox) {
                                   double g = o.grad[static_cast<std::size_t>((co * ho + oy) * wo + ox)];
                                   if (g == 0.0) continue;
                                   if (db) bimpl->grad[static_cast<std::size_t>(co)] += g;
                                   if (!dx && !dk) continue;
                                   for (Index ci = 0; ci < cin; ++ci)
                                       for (Index ky = 0; ky < kh; ++ky) {
                                           Index iy = oy * stride + ky - pad;
                                           if (iy < 0 || iy >= hh) continue;
                                           for (Index kx = 0; kx < kw; ++kx) {
                                               Index ix = ox * stride + kx - pad;
                                               if (ix < 0 || ix >= ww) continue;
                                               std::size_t xidx = static_cast<std::size_t>((ci * hh + iy) * ww + ix);
                                               std::size_t kidx =
                                                   static_cast<std::size_t>(((co * cin + ci) * kh + ky) * kw + kx);
                                               if (dx) xi->grad[xidx] += g * ki->data[kidx];
                                               if (dk) ki->grad[kidx] += g * xi->data[xidx];
                                           }
                                       }
                               }
                   });
}

Tensor bilinear_upsample(const Tensor& x, Index factor) {
    check_rank("bilinear_upsample", x, 3);
    if (factor < 1) throw ConfigError("bilinear_upsample: factor must be >= 1");
    Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Index ho = h * factor, wo = w * factor;
    // Precompute 1-D tap positions/weights; the 2-D kernel is separable.
    struct Tap {
        Index lo, hi;
        double wlo, whi;
    };
    auto taps_for = [factor](Index n, Index out_n) {
        std::vector<Tap> taps(static_cast<std::size_t>(out_n));
        for (Index i = 0; i < out_n; ++i) {
            double src = (static_cast<double>(i) + 0.5) / static_cast<double>(factor) - 0.5;
            double fl = std::floor(src);
            double frac = src - fl;
            Index i0 = static_cast<Index>(fl);
            Index lo = std::clamp(i0, Index{0}, n - 1);
            Index hi = std::clamp(i0 + 1, Index{0}, n - 1);
            taps[static_cast<std::size_t>(i)] = {lo, hi, 1.0 - frac, frac};
        }
        return taps;
    };
    std::vector<Tap> ty = taps_for(h, ho), tx = taps_for(w, wo);
    std::vector<double> out(static_cast<std::size_t>(c * ho * wo));
    const double* px = x.ptr();
    for (Index ch = 0; ch < c; ++ch) {
        const double* plane = px + ch * h * w;
        for (Index oy = 0; oy < ho; ++oy) {
            const Tap& a = ty[static_cast<std::size_t>(oy)];
            for (Index ox = 0; ox < wo; ++ox) {
                const Tap& b = tx[static_cast<std::size_t>(ox)];
                double v = a.wlo * (b.wlo * plane[a.lo * w + b.lo] + b.whi * plane[a.lo * w + b.hi]) +
                           a.whi * (b.wlo * plane[a.hi * w + b.lo] + b.whi * plane[a.hi * w + b.hi]);
                out[static_cast<std::size_t>((ch * ho + oy) * wo + ox)] = v;
            }
        }
    }
    ImplPtr xi = x.impl();
    return make_op("bilinear_upsample", {c, ho, wo}, std::move(out), {x},
                   [xi, c, h, w, ho, wo, ty = std::move(ty), tx = std::move(tx)](const TensorImpl& o) {
                       if (!needs(xi)) return;
                       xi->ensure_grad();
                       for (Index ch = 0; ch < c; ++ch) {
                           double* gplane = xi->grad.data() + ch * h * w;
                           for (Index oy = 0; oy < ho; ++oy) {
                               const Tap& a = ty[static_cast<std::size_t>(oy)];
                               for (Index ox = 0; ox < wo; ++ox) {
                                   const Tap& b = tx[static_cast<std::size_t>(ox)];
                                   double g = o.grad[static_cast<std::size_t>((ch * ho + oy) * wo + ox)];
                                   gplane[a.lo * w + b.lo] += g * a.wlo * b.wlo;
                                   gplane[a.lo * w + b.hi] += g * a.wlo * b.whi;
                                   gplane[a.hi * w + b.lo] += g * a.whi * b.wlo;
                                   gplane[a.hi * w + b.hi] += g * a.whi * b.whi;
                               }
                           }
                       }
                   });
}

Tensor depthwise_correlate(const Tensor& map, const Tensor& prototype) {
    check_rank("depthwise_correlate", map, 3);
    check_rank("depthwise_correlate", prototype, 3);
    Index c = map.dim(0), h = map.dim(1), w = map.dim(2);
    Index s = prototype.dim(0);
    if (prototype.dim(1) != s) throw ConfigError("depthwise_correlate: prototype must be square");
    if (prototype.dim(2) != c) throw ConfigError("depthwise_correlate: channel mismatch");
    if (s % 2 == 0) throw ConfigError("depthwise_correlate: even prototype extent");
    Index pad = (s - 1) / 2;
    std::vector<double> out(static_cast<std::size_t>(c * h * w), 0.0);
    const double* pm = map.ptr();
    const double* pp = prototype.ptr();
    for (Index ch = 0; ch < c; ++ch) {
        const double* plane = pm + ch * h * w;
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                double acc = 0.0;
                for (Index r = 0; r < s; ++r) {
                    Index iy = y + r - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (Index cc = 0; cc < s; ++cc) {
                        Index ix = x + cc - pad;
                        if (ix < 0 || ix >= w) continue;
                        acc += plane[iy * w + ix] * pp[(r * s + cc) * c + ch];
                    }
                }
                out[static_cast<std::size_t>((ch * h + y) * w + x)] = acc;
            }
    }
    ImplPtr mi = map.impl(), pi = prototype.impl();
    return make_op("depthwise_correlate", {c, h, w}, std::move(out), {map, prototype},
                   [mi, pi, c, h, w, s, pad](const TensorImpl& o) {
                       bool dm = needs(mi), dp = needs(pi);
                       if (!dm && !dp) return;
                       if (dm) mi->ensure_grad();
                       if (dp) pi->ensure_grad();
                       for (Index ch = 0; ch < c; ++ch)
                           for (Index y = 0; y < h; ++y)
                               for (Index x = 0; x < w; ++x) {
                                   double g = o.grad[static_cast<std::size_t>((ch * h + y) * w + x)];
                                   if (g == 0.0) continue;
                                   for (Index r = 0; r < s; ++r) {
                                       Index iy = y + r - pad;
                                       if (iy < 0 || iy >= h) continue;
                                       for (Index cc = 0; cc < s; ++cc) {
                                           Index ix = x + cc - pad;
                                           if (ix < 0 || ix >= w) continue;
                                           std::size_t midx = static_cast<std::size_t>((ch * h + iy) * w + ix);
                                           std::size_t pidx = static_cast<std::size_t>((r * s + cc) * c + ch);
                                           if (dm) mi->grad[midx] += g * pi->data[pidx];
                                           if (dp) pi->grad[pidx] += g * mi->data[midx];
                                       }
                                   }
                               }
                   });
}

Tensor adaptive_avg_pool_grid(const Tensor& x, Index s) {
    check_rank("adaptive_avg_pool_grid", x, 3);
    Index g = x.dim(0), c = x.dim(2);
    if (x.dim(1) != g) throw ConfigError("adaptive_avg_pool_grid: input grid must be square");
    if (s < 1) throw ConfigError("adaptive_avg_pool_grid: target extent must be >= 1");
    auto win = [g, s](Index i) {
        Index lo = (i * g) / s;
        Index hi = ((i + 1) * g + s - 1) / s;  // ceil
        return std::pair<Index, Index>{lo, hi};
    };
    std::vector<double> out(static_cast<std::size_t>(s * s * c), 0.0);
    const double* px = x.ptr();
    for (Index i = 0; i < s; ++i) {
        auto [r0, r1] = win(i);
        for (Index j = 0; j < s; ++j) {
            auto [c0, c1] = win(j);
            double inv = 1.0 / static_cast<double>((r1 - r0) * (c1 - c0));
            for (Index ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (Index r = r0; r < r1; ++r)
                    for (Index cc = c0; cc < c1; ++cc) acc += px[(r * g + cc) * c + ch];
                out[static_cast<std::size_t>((i * s + j) * c + ch)] = acc * inv;
            }
        }
    }
    ImplPtr xi = x.impl();
    return make_op("adaptive_avg_pool_grid", {s, s, c}, std::move(out), {x},
                   [xi, g, s, c, win](const TensorImpl& o) {
                       if (!needs(xi)) return;
                       xi->ensure_grad();
                       for (Index i = 0; i < s; ++i) {
                           auto [r0, r1] = win(i);
                           for (Index j = 0; j < s; ++j) {
                               auto [c0, c1] = win(j);
                               double inv = 1.0 / static_cast<double>((r1 - r0) * (c1 - c0));
                               for (Index ch = 0; ch < c; ++ch) {
                                   double g_out =
                                       o.grad[static_cast<std::size_t>((i * s + j) * c + ch)] * inv;
                                   for (Index r = r0; r < r1; ++r)
                                       for (Index cc = c0; cc < c1; ++cc)
                                           xi->grad[static_cast<std::size_t>((r * g + cc) * c + ch)] += g_out;
                               }
                           }
                       }
                   });
}

Tensor patchify(const Tensor& image, Index S) {
    check_rank("patchify", image, 3);
    Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (S < 1 || h % S != 0 || w % S != 0)
        throw ConfigError("patchify: extents " + std::to_string(h) + "x" + std::to_string(w) +
                          " not divisible by patch size " + std::to_string(S));
    Index gh = h / S, gw = w / S, n = gh * gw, d = c * S * S;
    std::vector<double> out(static_cast<std::size_t>(n * d));
    const double* src = image.ptr();
    for (Index pr = 0; pr < gh; ++pr)
        for (Index pc = 0; pc < gw; ++pc) {
            double* dst = out.data() + (pr * gw + pc) * d;
            for (Index ch = 0; ch < c; ++ch)
                for (Index dy = 0; dy < S; ++dy)
                    for (Index dx = 0; dx < S; ++dx)
                        dst[(ch * S + dy) * S + dx] = src[(ch * h + pr * S + dy) * w + pc * S + dx];
        }
    ImplPtr xi = image.impl();
    return make_op("patchify", {n, d}, std::move(out), {image},
                   [xi, c, h, w, S, gh, gw, d](const TensorImpl& o) {
                       if (!needs(xi)) return;
                       xi->ensure_grad();
                       for (Index pr = 0; pr < gh; ++pr)
                           for (Index pc = 0; pc < gw; ++pc) {
                               const double* gsrc = o.grad.data() + (pr * gw + pc) * d;
                               for (Index ch = 0; ch < c; ++ch)
                                   for (Index dy = 0; dy < S; ++dy)
                                       for (Index dx = 0; dx < S; ++dx)
                                           xi->grad[static_cast<std::size_t>(
                                               (ch * h + pr * S + dy) * w + pc * S + dx)] +=
                                               gsrc[(ch * S + dy) * S + dx];
                           }
                   });
}

}  // namespace mafea::ops
