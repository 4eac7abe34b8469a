#include "rcdet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace rcdet {

namespace {

NodePtr alloc(Shape shape) {
    auto n = std::make_shared<TensorNode>();
    for (long d : shape) {
        if (d <= 0) throw DimError("op output extent must be positive: " + shape_str(shape));
    }
    n->shape = std::move(shape);
    n->data.assign(static_cast<std::size_t>(shape_numel(n->shape)), 0.0);
    return n;
}

Tensor finalize(NodePtr out, std::vector<NodePtr> parents, std::function<void()> bw) {
    bool rg = false;
    if (grad_enabled()) {
        for (const auto& p : parents) {
            if (p && p->requires_grad) {
                rg = true;
                break;
            }
        }
    }
    out->requires_grad = rg;
    if (rg) {
        out->parents = std::move(parents);
        out->backward_fn = std::move(bw);
        Tape::instance().record(out);
    }
    return Tensor(out);
}

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    const std::size_t off = big.size() - small.size();
    for (std::size_t i = 0; i < small.size(); ++i) {
        if (big[off + i] != small[i]) return false;
    }
    return true;
}

using UnaryFn = double (*)(double);
using UnaryDfn = double (*)(double x, double y);

Tensor unary(const Tensor& x, UnaryFn f, UnaryDfn df) {
    auto xn = x.node();
    auto out = alloc(xn->shape);
    const std::size_t n = xn->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = f(xn->data[i]);
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on, df] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const std::size_t n = xn->data.size();
        for (std::size_t i = 0; i < n; ++i) {
            xn->grad[i] += on->grad[i] * df(xn->data[i], on->data[i]);
        }
    });
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise binary

namespace {

enum class BinKind { Add, Mul };

Tensor binary_broadcast(const Tensor& a, const Tensor& b, BinKind kind) {
    auto an = a.node();
    auto bn = b.node();
    const bool same = an->shape == bn->shape;
    NodePtr big = an, small = bn;
    if (!same) {
        if (is_suffix(bn->shape, an->shape)) {
            big = an;
            small = bn;
        } else if (is_suffix(an->shape, bn->shape)) {
            big = bn;
            small = an;
        } else {
            throw DimError("elementwise op: shapes " + shape_str(an->shape) + " and " +
                           shape_str(bn->shape) + " are not broadcastable");
        }
    }
    const long sn = static_cast<long>(small->data.size());
    const long total = static_cast<long>(big->data.size());
    const long blocks = total / sn;
    auto out = alloc(big->shape);
    const double* bg = big->data.data();
    const double* sm = small->data.data();
    double* o = out->data.data();
    for (long blk = 0; blk < blocks; ++blk) {
        const long off = blk * sn;
        if (kind == BinKind::Add) {
            for (long i = 0; i < sn; ++i) o[off + i] = bg[off + i] + sm[i];
        } else {
            for (long i = 0; i < sn; ++i) o[off + i] = bg[off + i] * sm[i];
        }
    }
    TensorNode* on = out.get();
    return finalize(out, {an, bn}, [an, bn, on, big, small, sn, blocks, kind] {
        const double* g = on->grad.data();
        if (big->requires_grad) {
            big->ensure_grad();
            double* dst = big->grad.data();
            const long total = blocks * sn;
            if (kind == BinKind::Add) {
                for (long i = 0; i < total; ++i) dst[i] += g[i];
            } else {
                const double* smv = small->data.data();
                for (long blk = 0; blk < blocks; ++blk) {
                    const long off = blk * sn;
                    for (long i = 0; i < sn; ++i) dst[off + i] += g[off + i] * smv[i];
                }
            }
        }
        if (small->requires_grad) {
            small->ensure_grad();
            double* dst = small->grad.data();
            if (kind == BinKind::Add) {
                for (long blk = 0; blk < blocks; ++blk) {
                    const long off = blk * sn;
                    for (long i = 0; i < sn; ++i) dst[i] += g[off + i];
                }
            } else {
                const double* bgv = big->data.data();
                for (long blk = 0; blk < blocks; ++blk) {
                    const long off = blk * sn;
                    for (long i = 0; i < sn; ++i) dst[i] += g[off + i] * bgv[off + i];
                }
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_broadcast(a, b, BinKind::Add); }

Tensor mul(const Tensor& a, const Tensor& b) { return binary_broadcast(a, b, BinKind::Mul); }

Tensor neg(const Tensor& x) {
    return unary(
        x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor add_scalar(const Tensor& x, double s) {
    auto xn = x.node();
    auto out = alloc(xn->shape);
    for (std::size_t i = 0; i < xn->data.size(); ++i) out->data[i] = xn->data[i] + s;
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->data.size(); ++i) xn->grad[i] += on->grad[i];
    });
}

Tensor mul_scalar(const Tensor& x, double s) {
    auto xn = x.node();
    auto out = alloc(xn->shape);
    for (std::size_t i = 0; i < xn->data.size(); ++i) out->data[i] = xn->data[i] * s;
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on, s] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->data.size(); ++i) xn->grad[i] += on->grad[i] * s;
    });
}

// ---------------------------------------------------------------------------
// elementwise unary

Tensor relu(const Tensor& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, [](double v) { return stable_sigmoid(v); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp_t(const Tensor& x) {
    return unary(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log_t(const Tensor& x) {
    return unary(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor softplus(const Tensor& x) {
    return unary(
        x,
        [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v, double) { return stable_sigmoid(v); });
}

Tensor abs_t(const Tensor& x) {
    return unary(
        x, [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    auto xn = x.node();
    auto out = alloc(xn->shape);
    for (std::size_t i = 0; i < xn->data.size(); ++i) {
        out->data[i] = std::min(std::max(xn->data[i], lo), hi);
    }
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on, lo, hi] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->data.size(); ++i) {
            const double v = xn->data[i];
            if (v >= lo && v <= hi) xn->grad[i] += on->grad[i];
        }
    });
}

Tensor pow_scalar(const Tensor& x, double p) {
    auto xn = x.node();
    auto out = alloc(xn->shape);
    for (std::size_t i = 0; i < xn->data.size(); ++i) out->data[i] = std::pow(xn->data[i], p);
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on, p] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->data.size(); ++i) {
            const double v = xn->data[i];
            double d;
            if (v > 0.0) {
                d = p * std::pow(v, p - 1.0);
            } else {
                d = (p == 1.0) ? 1.0 : 0.0;
            }
            xn->grad[i] += on->grad[i] * d;
        }
    });
}

// ---------------------------------------------------------------------------
// normalization

Tensor softmax(const Tensor& x, long axis) {
    auto xn = x.node();
    const long rank = static_cast<long>(xn->shape.size());
    if (axis < 0 || axis >= rank) throw DimError("softmax: axis out of range");
    const long len = xn->shape[static_cast<std::size_t>(axis)];
    long inner = 1;
    for (long d = axis + 1; d < rank; ++d) inner *= xn->shape[static_cast<std::size_t>(d)];
    const long outer = shape_numel(xn->shape) / (len * inner);

    auto out = alloc(xn->shape);
    const double* xv = xn->data.data();
    double* yv = out->data.data();
    for (long o = 0; o < outer; ++o) {
        for (long in = 0; in < inner; ++in) {
            const long base = o * len * inner + in;
            double mx = xv[base];
            for (long t = 1; t < len; ++t) mx = std::max(mx, xv[base + t * inner]);
            double denom = 0.0;
            for (long t = 0; t < len; ++t) {
                const double e = std::exp(xv[base + t * inner] - mx);
                yv[base + t * inner] = e;
                denom += e;
            }
            for (long t = 0; t < len; ++t) yv[base + t * inner] /= denom;
        }
    }
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on, len, inner, outer] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double* y = on->data.data();
        const double* g = on->grad.data();
        for (long o = 0; o < outer; ++o) {
            for (long in = 0; in < inner; ++in) {
                const long base = o * len * inner + in;
                double dot = 0.0;
                for (long t = 0; t < len; ++t) dot += y[base + t * inner] * g[base + t * inner];
                for (long t = 0; t < len; ++t) {
                    const long i = base + t * inner;
                    xn->grad[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    if (xn->shape.empty()) throw DimError("layer_norm: rank-0 input");
    const long c = xn->shape.back();
    if (gn->shape != Shape{c} || bn->shape != Shape{c}) {
        throw DimError("layer_norm: gamma/beta must be [" + std::to_string(c) + "]");
    }
    const long rows = shape_numel(xn->shape) / c;

    auto out = alloc(xn->shape);
    auto xhat = std::make_shared<std::vector<double>>(xn->data.size());
    auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    const double* xv = xn->data.data();
    double* yv = out->data.data();
    for (long r = 0; r < rows; ++r) {
        const double* row = xv + r * c;
        double mu = 0.0;
        for (long j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (long j = 0; j < c; ++j) {
            const double d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*invstd)[static_cast<std::size_t>(r)] = inv;
        for (long j = 0; j < c; ++j) {
            const double xh = (row[j] - mu) * inv;
            (*xhat)[static_cast<std::size_t>(r * c + j)] = xh;
            yv[r * c + j] = gn->data[static_cast<std::size_t>(j)] * xh +
                            bn->data[static_cast<std::size_t>(j)];
        }
    }
    TensorNode* on = out.get();
    return finalize(out, {xn, gn, bn}, [xn, gn, bn, on, xhat, invstd, rows, c] {
        const double* g = on->grad.data();
        const double* xh = xhat->data();
        if (gn->requires_grad) {
            gn->ensure_grad();
            for (long r = 0; r < rows; ++r) {
                for (long j = 0; j < c; ++j) {
                    gn->grad[static_cast<std::size_t>(j)] += g[r * c + j] * xh[r * c + j];
                }
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (long r = 0; r < rows; ++r) {
                for (long j = 0; j < c; ++j) bn->grad[static_cast<std::size_t>(j)] += g[r * c + j];
            }
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (long r = 0; r < rows; ++r) {
                double mh = 0.0, mhx = 0.0;
                for (long j = 0; j < c; ++j) {
                    const double h = gn->data[static_cast<std::size_t>(j)] * g[r * c + j];
                    mh += h;
                    mhx += h * xh[r * c + j];
                }
                mh /= static_cast<double>(c);
                mhx /= static_cast<double>(c);
                const double inv = (*invstd)[static_cast<std::size_t>(r)];
                for (long j = 0; j < c; ++j) {
                    const double h = gn->data[static_cast<std::size_t>(j)] * g[r * c + j];
                    xn->grad[r * c + j] += inv * (h - mh - xh[r * c + j] * mhx);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// shape ops

Tensor reshape(const Tensor& x, Shape shape) {
    auto xn = x.node();
    if (shape_numel(shape) != static_cast<long>(xn->data.size())) {
        throw DimError("reshape: cannot view " + shape_str(xn->shape) + " as " + shape_str(shape));
    }
    auto out = alloc(std::move(shape));
    out->data = xn->data;
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->data.size(); ++i) xn->grad[i] += on->grad[i];
    });
}

namespace {

std::vector<long> strides_of(const Shape& s) {
    std::vector<long> st(s.size(), 1);
    for (long i = static_cast<long>(s.size()) - 2; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] =
            st[static_cast<std::size_t>(i + 1)] * s[static_cast<std::size_t>(i + 1)];
    }
    return st;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<long>& axes) {
    auto xn = x.node();
    const std::size_t rank = xn->shape.size();
    if (axes.size() != rank) throw DimError("permute: axes rank mismatch");
    std::vector<bool> seen(rank, false);
    for (long a : axes) {
        if (a < 0 || a >= static_cast<long>(rank) || seen[static_cast<std::size_t>(a)]) {
            throw DimError("permute: axes must be a permutation");
        }
        seen[static_cast<std::size_t>(a)] = true;
    }
    Shape oshape(rank);
    for (std::size_t k = 0; k < rank; ++k) oshape[k] = xn->shape[static_cast<std::size_t>(axes[k])];
    auto out = alloc(oshape);

    const auto istr = strides_of(xn->shape);
    // stride in the input for a unit step of out axis k
    std::vector<long> map_str(rank);
    for (std::size_t k = 0; k < rank; ++k) map_str[k] = istr[static_cast<std::size_t>(axes[k])];
    const auto ostr = strides_of(oshape);

    const long total = shape_numel(oshape);
    auto in_index = std::make_shared<std::vector<long>>(static_cast<std::size_t>(total));
    const double* xv = xn->data.data();
    double* yv = out->data.data();
    for (long of = 0; of < total; ++of) {
        long rem = of;
        long inf = 0;
        for (std::size_t k = 0; k < rank; ++k) {
            const long q = rem / ostr[k];
            rem -= q * ostr[k];
            inf += q * map_str[k];
        }
        (*in_index)[static_cast<std::size_t>(of)] = inf;
        yv[of] = xv[inf];
    }
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on, in_index, total] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long of = 0; of < total; ++of) {
            xn->grad[static_cast<std::size_t>((*in_index)[static_cast<std::size_t>(of)])] +=
                on->grad[static_cast<std::size_t>(of)];
        }
    });
}

Tensor transpose(const Tensor& x) {
    if (x.dim() != 2) throw DimError("transpose: expected a 2D tensor");
    return permute(x, {1, 0});
}

Tensor slice(const Tensor& x, long axis, long start, long len) {
    auto xn = x.node();
    const long rank = static_cast<long>(xn->shape.size());
    if (axis < 0 || axis >= rank) throw DimError("slice: axis out of range");
    const long extent = xn->shape[static_cast<std::size_t>(axis)];
    if (len < 1 || start < 0 || start + len > extent) throw DimError("slice: range out of bounds");

    long inner = 1;
    for (long d = axis + 1; d < rank; ++d) inner *= xn->shape[static_cast<std::size_t>(d)];
    const long outer = shape_numel(xn->shape) / (extent * inner);

    Shape oshape = xn->shape;
    oshape[static_cast<std::size_t>(axis)] = len;
    auto out = alloc(oshape);
    const double* xv = xn->data.data();
    double* yv = out->data.data();
    for (long o = 0; o < outer; ++o) {
        const double* src = xv + (o * extent + start) * inner;
        double* dst = yv + o * len * inner;
        std::memcpy(dst, src, static_cast<std::size_t>(len * inner) * sizeof(double));
    }
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on, outer, extent, inner, start, len] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long o = 0; o < outer; ++o) {
            const double* g = on->grad.data() + o * len * inner;
            double* dst = xn->grad.data() + (o * extent + start) * inner;
            for (long i = 0; i < len * inner; ++i) dst[i] += g[i];
        }
    });
}

Tensor concat(const std::vector<Tensor>& xs, long axis) {
    if (xs.empty()) throw DimError("concat: empty input list");
    const long rank = xs[0].dim();
    if (axis < 0 || axis >= rank) throw DimError("concat: axis out of range");
    long total_axis = 0;
    for (const Tensor& t : xs) {
        if (t.dim() != rank) throw DimError("concat: rank mismatch");
        for (long d = 0; d < rank; ++d) {
            if (d != axis && t.size(d) != xs[0].size(d)) {
                throw DimError("concat: shapes differ off-axis");
            }
        }
        total_axis += t.size(axis);
    }
    Shape oshape = xs[0].shape();
    oshape[static_cast<std::size_t>(axis)] = total_axis;
    auto out = alloc(oshape);

    long inner = 1;
    for (long d = axis + 1; d < rank; ++d) inner *= oshape[static_cast<std::size_t>(d)];
    long outer = 1;
    for (long d = 0; d < axis; ++d) outer *= oshape[static_cast<std::size_t>(d)];

    std::vector<NodePtr> parents;
    parents.reserve(xs.size());
    std::vector<long> lens;
    for (const Tensor& t : xs) {
        parents.push_back(t.node());
        lens.push_back(t.size(axis));
    }
    double* yv = out->data.data();
    for (long o = 0; o < outer; ++o) {
        long off = 0;
        for (std::size_t i = 0; i < parents.size(); ++i) {
            const long blk = lens[i] * inner;
            std::memcpy(yv + (o * total_axis + off) * inner,
                        parents[i]->data.data() + o * blk, static_cast<std::size_t>(blk) * sizeof(double));
            off += lens[i];
        }
    }
    TensorNode* on = out.get();
    auto parents_copy = parents;
    return finalize(out, std::move(parents), [parents_copy, on, outer, inner, lens, total_axis] {
        for (long o = 0; o < outer; ++o) {
            long off = 0;
            for (std::size_t i = 0; i < parents_copy.size(); ++i) {
                const long blk = lens[i] * inner;
                if (parents_copy[i]->requires_grad) {
                    parents_copy[i]->ensure_grad();
                    const double* g = on->grad.data() + (o * total_axis + off) * inner;
                    double* dst = parents_copy[i]->grad.data() + o * blk;
                    for (long t = 0; t < blk; ++t) dst[t] += g[t];
                }
                off += lens[i];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& x) {
    auto xn = x.node();
    double s = 0.0;
    for (double v : xn->data) s += v;
    auto out = alloc({1});
    out->data[0] = s;
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double g = on->grad[0];
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
    });
}

Tensor mean(const Tensor& x) {
    const double n = static_cast<double>(x.numel());
    return mul_scalar(sum(x), 1.0 / n);
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    auto an = a.node();
    auto bn = b.node();
    if (an->shape.size() != 2 || bn->shape.size() != 2) {
        throw DimError("matmul: expected 2D operands");
    }
    const long m = an->shape[0], k = an->shape[1];
    const long k2 = bn->shape[0], n = bn->shape[1];
    if (k != k2) {
        throw DimError("matmul: inner dimensions disagree " + shape_str(an->shape) + " x " +
                       shape_str(bn->shape));
    }
    auto out = alloc({m, n});
    const double* A = an->data.data();
    const double* B = bn->data.data();
    double* C = out->data.data();
    // i-k-j loop: per-element accumulation order is ascending k, independent of m.
    for (long i = 0; i < m; ++i) {
        double* crow = C + i * n;
        const double* arow = A + i * k;
        for (long t = 0; t < k; ++t) {
            const double av = arow[t];
            const double* brow = B + t * n;
            for (long j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    TensorNode* on = out.get();
    return finalize(out, {an, bn}, [an, bn, on, m, k, n] {
        const double* G = on->grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            // gA = G * B^T ; materialize B^T once for contiguous inner loops.
            std::vector<double> bt(static_cast<std::size_t>(k * n));
            const double* B = bn->data.data();
            for (long t = 0; t < k; ++t) {
                for (long j = 0; j < n; ++j) bt[static_cast<std::size_t>(j * k + t)] = B[t * n + j];
            }
            double* gA = an->grad.data();
            for (long i = 0; i < m; ++i) {
                const double* grow = G + i * n;
                double* garow = gA + i * k;
                for (long j = 0; j < n; ++j) {
                    const double gv = grow[j];
                    const double* btrow = bt.data() + j * k;
                    for (long t = 0; t < k; ++t) garow[t] += gv * btrow[t];
                }
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            const double* A = an->data.data();
            double* gB = bn->grad.data();
            for (long i = 0; i < m; ++i) {
                const double* arow = A + i * k;
                const double* grow = G + i * n;
                for (long t = 0; t < k; ++t) {
                    const double av = arow[t];
                    double* gbrow = gB + t * n;
                    for (long j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    auto xn = x.node();
    auto wn = w.node();
    NodePtr bn = b.defined() ? b.node() : nullptr;
    if (wn->shape.size() != 2) throw DimError("linear: weight must be 2D [in,out]");
    if (xn->shape.empty()) throw DimError("linear: input must have rank >= 1");
    const long in_f = wn->shape[0], out_f = wn->shape[1];
    if (xn->shape.back() != in_f) {
        throw DimError("linear: input features " + std::to_string(xn->shape.back()) +
                       " do not match weight " + shape_str(wn->shape));
    }
    if (bn && bn->shape != Shape{out_f}) throw DimError("linear: bias shape mismatch");
    const long rows = shape_numel(xn->shape) / in_f;

    Shape oshape = xn->shape;
    oshape.back() = out_f;
    auto out = alloc(oshape);
    const double* X = xn->data.data();
    const double* W = wn->data.data();
    double* Y = out->data.data();
    for (long r = 0; r < rows; ++r) {
        double* yrow = Y + r * out_f;
        if (bn) {
            std::memcpy(yrow, bn->data.data(), static_cast<std::size_t>(out_f) * sizeof(double));
        }
        const double* xrow = X + r * in_f;
        for (long t = 0; t < in_f; ++t) {
            const double xv = xrow[t];
            const double* wrow = W + t * out_f;
            for (long j = 0; j < out_f; ++j) yrow[j] += xv * wrow[j];
        }
    }
    TensorNode* on = out.get();
    return finalize(out, {xn, wn, bn ? bn : xn}, [xn, wn, bn, on, rows, in_f, out_f] {
        const double* G = on->grad.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            std::vector<double> wt(static_cast<std::size_t>(in_f * out_f));
            const double* W = wn->data.data();
            for (long t = 0; t < in_f; ++t) {
                for (long j = 0; j < out_f; ++j) {
                    wt[static_cast<std::size_t>(j * in_f + t)] = W[t * out_f + j];
                }
            }
            double* gX = xn->grad.data();
            for (long r = 0; r < rows; ++r) {
                const double* grow = G + r * out_f;
                double* gxrow = gX + r * in_f;
                for (long j = 0; j < out_f; ++j) {
                    const double gv = grow[j];
                    const double* wtrow = wt.data() + j * in_f;
                    for (long t = 0; t < in_f; ++t) gxrow[t] += gv * wtrow[t];
                }
            }
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            const double* X = xn->data.data();
            double* gW = wn->grad.data();
            for (long r = 0; r < rows; ++r) {
                const double* xrow = X + r * in_f;
                const double* grow = G + r * out_f;
                for (long t = 0; t < in_f; ++t) {
                    const double xv = xrow[t];
                    double* gwrow = gW + t * out_f;
                    for (long j = 0; j < out_f; ++j) gwrow[j] += xv * grow[j];
                }
            }
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            for (long r = 0; r < rows; ++r) {
                const double* grow = G + r * out_f;
                for (long j = 0; j < out_f; ++j) bn->grad[static_cast<std::size_t>(j)] += grow[j];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// indexing

Tensor gather_rows(const Tensor& x, const std::vector<long>& rows) {
    auto xn = x.node();
    if (xn->shape.size() != 2) throw DimError("gather_rows: expected 2D input");
    if (rows.empty()) throw DimError("gather_rows: empty row list");
    const long n = xn->shape[0], c = xn->shape[1];
    for (long r : rows) {
        if (r < 0 || r >= n) throw DimError("gather_rows: row index out of range");
    }
    auto out = alloc({static_cast<long>(rows.size()), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(out->data.data() + static_cast<long>(i) * c, xn->data.data() + rows[i] * c,
                    static_cast<std::size_t>(c) * sizeof(double));
    }
    TensorNode* on = out.get();
    auto idx = std::make_shared<std::vector<long>>(rows);
    return finalize(out, {xn}, [xn, on, idx, c] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < idx->size(); ++i) {
            const double* g = on->grad.data() + static_cast<long>(i) * c;
            double* dst = xn->grad.data() + (*idx)[i] * c;
            for (long j = 0; j < c; ++j) dst[j] += g[j];
        }
    });
}

Tensor pillar_scatter_max(const Tensor& feats, const std::vector<long>& cells, long num_cells) {
    auto fn = feats.node();
    if (fn->shape.size() != 2) throw DimError("pillar_scatter_max: expected [K x C] features");
    const long k = fn->shape[0], c = fn->shape[1];
    if (static_cast<long>(cells.size()) != k) {
        throw DimError("pillar_scatter_max: cell list length mismatch");
    }
    if (num_cells < 1) throw DimError("pillar_scatter_max: num_cells must be positive");
    for (long cell : cells) {
        if (cell < 0 || cell >= num_cells) throw DimError("pillar_scatter_max: cell out of range");
    }
    auto out = alloc({num_cells, c});
    auto argmax = std::make_shared<std::vector<long>>(static_cast<std::size_t>(num_cells * c), -1);
    const double* F = fn->data.data();
    double* Y = out->data.data();
    for (long p = 0; p < k; ++p) {
        const long row = cells[static_cast<std::size_t>(p)];
        for (long j = 0; j < c; ++j) {
            const long slot = row * c + j;
            const double v = F[p * c + j];
            if ((*argmax)[static_cast<std::size_t>(slot)] < 0 || v > Y[slot]) {
                Y[slot] = v;
                (*argmax)[static_cast<std::size_t>(slot)] = p;
            }
        }
    }
    TensorNode* on = out.get();
    return finalize(out, {fn}, [fn, on, argmax, c] {
        if (!fn->requires_grad) return;
        fn->ensure_grad();
        for (std::size_t slot = 0; slot < argmax->size(); ++slot) {
            const long p = (*argmax)[slot];
            if (p < 0) continue;
            const long j = static_cast<long>(slot) % c;
            fn->grad[static_cast<std::size_t>(p * c + j)] += on->grad[slot];
        }
    });
}

// ---------------------------------------------------------------------------
// spatial ops

Tensor strided_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, long stride, long pad) {
    auto xn = x.node();
    auto wn = w.node();
    NodePtr bn = b.defined() ? b.node() : nullptr;
    if (xn->shape.size() != 3) throw DimError("strided_conv2d: input must be [C x H x W]");
    if (wn->shape.size() != 4) throw DimError("strided_conv2d: weight must be [Cout x Cin x kh x kw]");
    if (stride < 1) throw DimError("strided_conv2d: stride must be >= 1");
    if (pad < 0) throw DimError("strided_conv2d: pad must be >= 0");
    const long cin = xn->shape[0], h = xn->shape[1], wdt = xn->shape[2];
    const long cout = wn->shape[0], kh = wn->shape[2], kw = wn->shape[3];
    if (wn->shape[1] != cin) throw DimError("strided_conv2d: channel mismatch");
    if (bn && bn->shape != Shape{cout}) throw DimError("strided_conv2d: bias shape mismatch");
    const long oh = (h + 2 * pad - kh) / stride + 1;
    const long ow = (wdt + 2 * pad - kw) / stride + 1;
    if (h + 2 * pad < kh || wdt + 2 * pad < kw) throw DimError("strided_conv2d: kernel larger than input");

    auto out = alloc({cout, oh, ow});
    const double* X = xn->data.data();
    const double* W = wn->data.data();
    double* Y = out->data.data();
    for (long oc = 0; oc < cout; ++oc) {
        const double bias = bn ? bn->data[static_cast<std::size_t>(oc)] : 0.0;
        for (long y = 0; y < oh; ++y) {
            for (long xo = 0; xo < ow; ++xo) {
                double acc = bias;
                for (long ic = 0; ic < cin; ++ic) {
                    for (long ky = 0; ky < kh; ++ky) {
                        const long iy = y * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const double* xrow = X + (ic * h + iy) * wdt;
                        const double* wrow = W + ((oc * cin + ic) * kh + ky) * kw;
                        for (long kx = 0; kx < kw; ++kx) {
                            const long ix = xo * stride + kx - pad;
                            if (ix < 0 || ix >= wdt) continue;
                            acc += xrow[ix] * wrow[kx];
                        }
                    }
                }
                Y[(oc * oh + y) * ow + xo] = acc;
            }
        }
    }
    TensorNode* on = out.get();
    return finalize(out, {xn, wn, bn ? bn : xn},
                    [xn, wn, bn, on, cin, h, wdt, cout, kh, kw, oh, ow, stride, pad] {
        const double* G = on->grad.data();
        const double* X = xn->data.data();
        const double* W = wn->data.data();
        const bool gx = xn->requires_grad;
        const bool gw = wn->requires_grad;
        const bool gb = bn && bn->requires_grad;
        if (gx) xn->ensure_grad();
        if (gw) wn->ensure_grad();
        if (gb) bn->ensure_grad();
        if (!gx && !gw && !gb) return;
        for (long oc = 0; oc < cout; ++oc) {
            for (long y = 0; y < oh; ++y) {
                for (long xo = 0; xo < ow; ++xo) {
                    const double gv = G[(oc * oh + y) * ow + xo];
                    if (gv == 0.0) continue;
                    if (gb) bn->grad[static_cast<std::size_t>(oc)] += gv;
                    if (!gx && !gw) continue;
                    for (long ic = 0; ic < cin; ++ic) {
                        for (long ky = 0; ky < kh; ++ky) {
                            const long iy = y * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (long kx = 0; kx < kw; ++kx) {
                                const long ix = xo * stride + kx - pad;
                                if (ix < 0 || ix >= wdt) continue;
                                const long xi = (ic * h + iy) * wdt + ix;
                                const long wi = ((oc * cin + ic) * kh + ky) * kw + kx;
                                if (gx) xn->grad[static_cast<std::size_t>(xi)] += gv * W[wi];
                                if (gw) wn->grad[static_cast<std::size_t>(wi)] += gv * X[xi];
                            }
                        }
                    }
                }
            }
        }
    });
}

Tensor upsample2x(const Tensor& x) {
    auto xn = x.node();
    if (xn->shape.size() != 3) throw DimError("upsample2x: input must be [C x H x W]");
    const long c = xn->shape[0], h = xn->shape[1], w = xn->shape[2];
    auto out = alloc({c, 2 * h, 2 * w});
    const double* X = xn->data.data();
    double* Y = out->data.data();
    for (long ch = 0; ch < c; ++ch) {
        for (long y = 0; y < 2 * h; ++y) {
            const double* xrow = X + (ch * h + y / 2) * w;
            double* yrow = Y + (ch * 2 * h + y) * 2 * w;
            for (long xo = 0; xo < 2 * w; ++xo) yrow[xo] = xrow[xo / 2];
        }
    }
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on, c, h, w] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double* G = on->grad.data();
        for (long ch = 0; ch < c; ++ch) {
            for (long y = 0; y < 2 * h; ++y) {
                const double* grow = G + (ch * 2 * h + y) * 2 * w;
                double* xrow = xn->grad.data() + (ch * h + y / 2) * w;
                for (long xo = 0; xo < 2 * w; ++xo) xrow[xo / 2] += grow[xo];
            }
        }
    });
}

Tensor sincos(const Tensor& x, long num_freqs, double base) {
    auto xn = x.node();
    if (xn->shape.size() != 2) throw DimError("sincos: expected [N x K] input");
    if (num_freqs < 1) throw ConfigError("sincos: num_freqs must be >= 1");
    const long n = xn->shape[0], k = xn->shape[1];
    const long f2 = 2 * num_freqs;
    auto out = alloc({n, k * f2});
    auto omegas = std::make_shared<std::vector<double>>(static_cast<std::size_t>(num_freqs));
    const double two_pi = 6.283185307179586476925286766559;
    for (long f = 0; f < num_freqs; ++f) {
        (*omegas)[static_cast<std::size_t>(f)] =
            two_pi * std::pow(base, -static_cast<double>(f) / static_cast<double>(num_freqs));
    }
    const double* X = xn->data.data();
    double* Y = out->data.data();
    for (long r = 0; r < n; ++r) {
        for (long j = 0; j < k; ++j) {
            const double v = X[r * k + j];
            double* dst = Y + r * k * f2 + j * f2;
            for (long f = 0; f < num_freqs; ++f) {
                const double a = v * (*omegas)[static_cast<std::size_t>(f)];
                dst[2 * f] = std::sin(a);
                dst[2 * f + 1] = std::cos(a);
            }
        }
    }
    TensorNode* on = out.get();
    return finalize(out, {xn}, [xn, on, omegas, n, k, num_freqs, f2] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double* G = on->grad.data();
        const double* Y = on->data.data();
        for (long r = 0; r < n; ++r) {
            for (long j = 0; j < k; ++j) {
                double acc = 0.0;
                const double* yrow = Y + r * k * f2 + j * f2;
                const double* grow = G + r * k * f2 + j * f2;
                for (long f = 0; f < num_freqs; ++f) {
                    const double w = (*omegas)[static_cast<std::size_t>(f)];
                    acc += w * (yrow[2 * f + 1] * grow[2 * f] - yrow[2 * f] * grow[2 * f + 1]);
                }
                xn->grad[static_cast<std::size_t>(r * k + j)] += acc;
            }
        }
    });
}

}  // namespace rcdet
