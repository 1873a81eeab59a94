#include "sodkit/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace sodkit {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

void check_same_shape(const Value& a, const Value& b, const char* op) {
    if (a->shape != b->shape)
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                             " vs " + shape_str(b->shape));
}

bool track(const std::initializer_list<Value>& parents) {
    for (const auto& p : parents)
        if (p && p->requires_grad) return true;
    return false;
}

void attach(const Value& out, std::vector<Value> parents, std::function<void()> fn) {
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backward_fn = std::move(fn);
}

constexpr double kBceClamp = 1e-12;

}  // namespace

Act act_from_string(const std::string& name) {
    if (name == "relu") return Act::Relu;
    if (name == "leaky_relu") return Act::LeakyRelu;
    if (name == "gelu") return Act::Gelu;
    if (name == "sigmoid") return Act::Sigmoid;
    throw ConfigError("unknown activation kind: " + name);
}

Value add(const Value& a, const Value& b) {
    check_same_shape(a, b, "add");
    auto out = make_value(a->shape);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (track({a, b})) {
        Node* o = out.get();
        attach(out, {a, b}, [a, b, o] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i];
            }
        });
    }
    return out;
}

Value sub(const Value& a, const Value& b) {
    check_same_shape(a, b, "sub");
    auto out = make_value(a->shape);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
    if (track({a, b})) {
        Node* o = out.get();
        attach(out, {a, b}, [a, b, o] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] -= o->grad[i];
            }
        });
    }
    return out;
}

Value mul(const Value& a, const Value& b) {
    check_same_shape(a, b, "mul");
    auto out = make_value(a->shape);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (track({a, b})) {
        Node* o = out.get();
        attach(out, {a, b}, [a, b, o] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i] * a->data[i];
            }
        });
    }
    return out;
}

Value affine(const Value& x, double scale, double shift) {
    auto out = make_value(x->shape);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = scale * x->data[i] + shift;
    if (track({x})) {
        Node* o = out.get();
        attach(out, {x}, [x, scale, o] {
            x->ensure_grad();
            for (size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += scale * o->grad[i];
        });
    }
    return out;
}

Value activation(const Value& x, Act kind) {
    auto out = make_value(x->shape);
    const size_t n = out->data.size();
    std::vector<double> deriv(n);
    switch (kind) {
        case Act::Relu:
            for (size_t i = 0; i < n; ++i) {
                const double v = x->data[i];
                out->data[i] = v > 0.0 ? v : 0.0;
                deriv[i] = v > 0.0 ? 1.0 : 0.0;
            }
            break;
        case Act::LeakyRelu:
            for (size_t i = 0; i < n; ++i) {
                const double v = x->data[i];
                out->data[i] = v > 0.0 ? v : kLeakySlope * v;
                deriv[i] = v > 0.0 ? 1.0 : kLeakySlope;
            }
            break;
        case Act::Gelu:
            // exact erf form so finite differences agree tightly
            for (size_t i = 0; i < n; ++i) {
                const double v = x->data[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
                out->data[i] = v * cdf;
                deriv[i] = cdf + v * std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
            }
            break;
        case Act::Sigmoid:
            for (size_t i = 0; i < n; ++i) {
                const double s = 1.0 / (1.0 + std::exp(-x->data[i]));
                out->data[i] = s;
                deriv[i] = s * (1.0 - s);
            }
            break;
    }
    if (track({x})) {
        Node* o = out.get();
        attach(out, {x}, [x, o, deriv = std::move(deriv)] {
            x->ensure_grad();
            for (size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += deriv[i] * o->grad[i];
        });
    }
    return out;
}

Value sigmoid(const Value& x) { return activation(x, Act::Sigmoid); }

Value add_broadcast0(const Value& x, const Value& p) {
    if (p->shape.empty() || p->shape[0] != 1 ||
        x->shape.size() != p->shape.size() ||
        !std::equal(x->shape.begin() + 1, x->shape.end(), p->shape.begin() + 1))
        throw DimensionError("add_broadcast0: " + shape_str(x->shape) + " vs " +
                             shape_str(p->shape));
    auto out = make_value(x->shape);
    const size_t inner = p->data.size();
    const size_t b = x->data.size() / inner;
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < inner; ++j)
            out->data[i * inner + j] = x->data[i * inner + j] + p->data[j];
    if (track({x, p})) {
        Node* o = out.get();
        attach(out, {x, p}, [x, p, o, inner, b] {
            if (x->requires_grad) {
                x->ensure_grad();
                for (size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
            }
            if (p->requires_grad) {
                p->ensure_grad();
                for (size_t i = 0; i < b; ++i)
                    for (size_t j = 0; j < inner; ++j) p->grad[j] += o->grad[i * inner + j];
            }
        });
    }
    return out;
}

Value sum_all(const Value& x) {
    auto out = make_value(Shape{1});
    double s = 0.0;
    for (double v : x->data) s += v;
    out->data[0] = s;
    if (track({x})) {
        Node* o = out.get();
        attach(out, {x}, [x, o] {
            x->ensure_grad();
            for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += o->grad[0];
        });
    }
    return out;
}

Value mean_all(const Value& x) {
    const double inv = 1.0 / static_cast<double>(x->size());
    auto out = make_value(Shape{1});
    double s = 0.0;
    for (double v : x->data) s += v;
    out->data[0] = s * inv;
    if (track({x})) {
        Node* o = out.get();
        attach(out, {x}, [x, o, inv] {
            x->ensure_grad();
            for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += inv * o->grad[0];
        });
    }
    return out;
}

Value reshape(const Value& x, Shape s) {
    if (numel(s) != x->size())
        throw DimensionError("reshape: cannot view " + shape_str(x->shape) + " as " +
                             shape_str(s));
    auto out = make_value(std::move(s));
    out->data = x->data;
    if (track({x})) {
        Node* o = out.get();
        attach(out, {x}, [x, o] {
            x->ensure_grad();
            for (size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
        });
    }
    return out;
}

namespace {

std::vector<long long> row_major_strides(const Shape& s) {
    std::vector<long long> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * s[i + 1];
    return st;
}

// index map: out flat index -> in flat index for a permutation of axes
std::vector<long long> permute_index_map(const Shape& in_shape, const std::vector<int>& perm) {
    const size_t nd = in_shape.size();
    Shape out_shape(nd);
    for (size_t i = 0; i < nd; ++i) out_shape[i] = in_shape[perm[i]];
    const auto in_strides = row_major_strides(in_shape);
    const long long total = numel(in_shape);
    std::vector<long long> map(static_cast<size_t>(total));
    std::vector<int> idx(nd, 0);
    for (long long o = 0; o < total; ++o) {
        long long src = 0;
        for (size_t i = 0; i < nd; ++i) src += static_cast<long long>(idx[i]) * in_strides[perm[i]];
        map[static_cast<size_t>(o)] = src;
        for (int i = static_cast<int>(nd) - 1; i >= 0; --i) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    return map;
}

}  // namespace

Value permute(const Value& x, const std::vector<int>& perm) {
    const size_t nd = x->shape.size();
    if (perm.size() != nd) throw DimensionError("permute: axis list length mismatch");
    std::vector<bool> seen(nd, false);
    for (int p : perm) {
        if (p < 0 || p >= static_cast<int>(nd) || seen[p])
            throw DimensionError("permute: invalid axis permutation");
        seen[p] = true;
    }
    Shape out_shape(nd);
    for (size_t i = 0; i < nd; ++i) out_shape[i] = x->shape[perm[i]];
    auto map = permute_index_map(x->shape, perm);
    auto out = make_value(std::move(out_shape));
    for (size_t o = 0; o < out->data.size(); ++o) out->data[o] = x->data[map[o]];
    if (track({x})) {
        Node* ov = out.get();
        attach(out, {x}, [x, ov, map = std::move(map)] {
            x->ensure_grad();
            for (size_t o = 0; o < ov->grad.size(); ++o) x->grad[map[o]] += ov->grad[o];
        });
    }
    return out;
}

Value concat_axis1(const std::vector<Value>& xs) {
    if (xs.empty()) throw DimensionError("concat_axis1: empty input list");
    const Shape& s0 = xs[0]->shape;
    if (s0.size() < 2) throw DimensionError("concat_axis1: need at least 2 axes");
    int csum = 0;
    for (const auto& x : xs) {
        if (x->shape.size() != s0.size() || x->shape[0] != s0[0] ||
            !std::equal(x->shape.begin() + 2, x->shape.end(), s0.begin() + 2))
            throw DimensionError("concat_axis1: incompatible shape " + shape_str(x->shape));
        csum += x->shape[1];
    }
    Shape out_shape = s0;
    out_shape[1] = csum;
    long long inner = 1;
    for (size_t i = 2; i < s0.size(); ++i) inner *= s0[i];
    const int batch = s0[0];
    auto out = make_value(out_shape);
    std::vector<long long> offsets;  // channel offset per input
    {
        long long off = 0;
        for (const auto& x : xs) {
            offsets.push_back(off);
            off += x->shape[1];
        }
    }
    for (int b = 0; b < batch; ++b) {
        for (size_t k = 0; k < xs.size(); ++k) {
            const auto& x = xs[k];
            const long long cx = x->shape[1];
            const double* src = x->data.data() + static_cast<long long>(b) * cx * inner;
            double* dst = out->data.data() +
                          (static_cast<long long>(b) * csum + offsets[k]) * inner;
            std::copy(src, src + cx * inner, dst);
        }
    }
    bool any = false;
    for (const auto& x : xs)
        if (x->requires_grad) any = true;
    if (any) {
        Node* o = out.get();
        auto parents = xs;
        attach(out, parents, [parents, o, offsets, inner, batch, csum] {
            for (size_t k = 0; k < parents.size(); ++k) {
                const auto& x = parents[k];
                if (!x->requires_grad) continue;
                x->ensure_grad();
                const long long cx = x->shape[1];
                for (int b = 0; b < batch; ++b) {
                    const double* src = o->grad.data() +
                                        (static_cast<long long>(b) * csum + offsets[k]) * inner;
                    double* dst = x->grad.data() + static_cast<long long>(b) * cx * inner;
                    for (long long i = 0; i < cx * inner; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

Value matmul(const Value& a, const Value& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        throw DimensionError("matmul: " + shape_str(a->shape) + " x " + shape_str(b->shape));
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = make_value(Shape{m, n});
    CMapM A(a->data.data(), m, k), B(b->data.data(), k, n);
    MapM C(out->data.data(), m, n);
    C.noalias() = A * B;
    if (track({a, b})) {
        Node* o = out.get();
        attach(out, {a, b}, [a, b, o, m, k, n] {
            CMapM dC(o->grad.data(), m, n);
            if (a->requires_grad) {
                a->ensure_grad();
                CMapM B(b->data.data(), k, n);
                MapM dA(a->grad.data(), m, k);
                dA.noalias() += dC * B.transpose();
            }
            if (b->requires_grad) {
                b->ensure_grad();
                CMapM A(a->data.data(), m, k);
                MapM dB(b->grad.data(), k, n);
                dB.noalias() += A.transpose() * dC;
            }
        });
    }
    return out;
}

Value bmm(const Value& a, const Value& b, bool transpose_b) {
    if (a->shape.size() != 3 || b->shape.size() != 3 || a->shape[0] != b->shape[0])
        throw DimensionError("bmm: " + shape_str(a->shape) + " x " + shape_str(b->shape));
    const int g = a->shape[0], n = a->shape[1], k = a->shape[2];
    const int bk = transpose_b ? b->shape[2] : b->shape[1];
    const int bm = transpose_b ? b->shape[1] : b->shape[2];
    if (bk != k) throw DimensionError("bmm: inner axes disagree");
    auto out = make_value(Shape{g, n, bm});
    for (int i = 0; i < g; ++i) {
        CMapM A(a->data.data() + static_cast<long long>(i) * n * k, n, k);
        MapM C(out->data.data() + static_cast<long long>(i) * n * bm, n, bm);
        if (transpose_b) {
            CMapM B(b->data.data() + static_cast<long long>(i) * bm * k, bm, k);
            C.noalias() = A * B.transpose();
        } else {
            CMapM B(b->data.data() + static_cast<long long>(i) * k * bm, k, bm);
            C.noalias() = A * B;
        }
    }
    if (track({a, b})) {
        Node* o = out.get();
        attach(out, {a, b}, [a, b, o, g, n, k, bm, transpose_b] {
            for (int i = 0; i < g; ++i) {
                CMapM dC(o->grad.data() + static_cast<long long>(i) * n * bm, n, bm);
                if (a->requires_grad) {
                    a->ensure_grad();
                    MapM dA(a->grad.data() + static_cast<long long>(i) * n * k, n, k);
                    if (transpose_b) {
                        CMapM B(b->data.data() + static_cast<long long>(i) * bm * k, bm, k);
                        dA.noalias() += dC * B;
                    } else {
                        CMapM B(b->data.data() + static_cast<long long>(i) * k * bm, k, bm);
                        dA.noalias() += dC * B.transpose();
                    }
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    CMapM A(a->data.data() + static_cast<long long>(i) * n * k, n, k);
                    if (transpose_b) {
                        MapM dB(b->grad.data() + static_cast<long long>(i) * bm * k, bm, k);
                        dB.noalias() += dC.transpose() * A;
                    } else {
                        MapM dB(b->grad.data() + static_cast<long long>(i) * k * bm, k, bm);
                        dB.noalias() += A.transpose() * dC;
                    }
                }
            }
        });
    }
    return out;
}

Value linear(const Value& x, const Value& w, const Value& b) {
    if (x->shape.empty() || w->shape.size() != 2 || x->shape.back() != w->shape[0])
        throw DimensionError("linear: " + shape_str(x->shape) + " x " + shape_str(w->shape));
    const int k = w->shape[0], m = w->shape[1];
    const long long rows = x->size() / k;
    if (b && (b->shape.size() != 1 || b->shape[0] != m))
        throw DimensionError("linear: bias shape " + shape_str(b->shape));
    Shape out_shape = x->shape;
    out_shape.back() = m;
    auto out = make_value(out_shape);
    CMapM X(x->data.data(), rows, k), W(w->data.data(), k, m);
    MapM Y(out->data.data(), rows, m);
    Y.noalias() = X * W;
    if (b) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->data.data(), m);
    if (track({x, w, b})) {
        Node* o = out.get();
        std::vector<Value> parents = b ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
        attach(out, parents, [x, w, b, o, rows, k, m] {
            CMapM dY(o->grad.data(), rows, m);
            if (x->requires_grad) {
                x->ensure_grad();
                CMapM W(w->data.data(), k, m);
                MapM dX(x->grad.data(), rows, k);
                dX.noalias() += dY * W.transpose();
            }
            if (w->requires_grad) {
                w->ensure_grad();
                CMapM X(x->data.data(), rows, k);
                MapM dW(w->grad.data(), k, m);
                dW.noalias() += X.transpose() * dY;
            }
            if (b && b->requires_grad) {
                b->ensure_grad();
                Eigen::Map<Eigen::RowVectorXd> dB(b->grad.data(), m);
                dB += dY.colwise().sum();
            }
        });
    }
    return out;
}

namespace {

// Unrolls conv patches of one image into a [C*kh*kw, oh*ow] matrix.
void im2col(const double* x, int c, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, double* col) {
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                double* dst = col + ((static_cast<long long>(ci) * kh + ky) * kw + kx) *
                                        (static_cast<long long>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[oy * ow + ox] =
                            (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                ? x[(static_cast<long long>(ci) * h + iy) * w + ix]
                                : 0.0;
                    }
                }
            }
}

void col2im_acc(const double* col, int c, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, double* x) {
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const double* src = col + ((static_cast<long long>(ci) * kh + ky) * kw + kx) *
                                              (static_cast<long long>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        x[(static_cast<long long>(ci) * h + iy) * w + ix] += src[oy * ow + ox];
                    }
                }
            }
}

}  // namespace

Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad) {
    if (x->shape.size() != 4 || w->shape.size() != 4)
        throw DimensionError("conv2d: expected 4-D input and kernel");
    const int n = x->shape[0], c = x->shape[1], h = x->shape[2], wi = x->shape[3];
    const int oc = w->shape[0], kc = w->shape[1], kh = w->shape[2], kw = w->shape[3];
    if (kc != c)
        throw DimensionError("conv2d: channel mismatch, input " + std::to_string(c) +
                             " vs kernel " + std::to_string(kc));
    if (stride < 1 || pad < 0) throw DimensionError("conv2d: bad stride/pad");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wi + 2 * pad - kw) / stride + 1;
    if (oh < 1 || ow < 1) throw DimensionError("conv2d: kernel larger than padded input");
    if (b && (b->shape.size() != 1 || b->shape[0] != oc))
        throw DimensionError("conv2d: bias shape " + shape_str(b->shape));

    const long long ck = static_cast<long long>(c) * kh * kw;
    const long long sp = static_cast<long long>(oh) * ow;
    auto out = make_value(Shape{n, oc, oh, ow});
    std::vector<double> col(static_cast<size_t>(ck * sp));
    CMapM W(w->data.data(), oc, ck);
    for (int i = 0; i < n; ++i) {
        im2col(x->data.data() + static_cast<long long>(i) * c * h * wi, c, h, wi, kh, kw,
               stride, pad, oh, ow, col.data());
        CMapM Col(col.data(), ck, sp);
        MapM Y(out->data.data() + static_cast<long long>(i) * oc * sp, oc, sp);
        Y.noalias() = W * Col;
        if (b)
            Y.colwise() += Eigen::Map<const Eigen::VectorXd>(b->data.data(), oc);
    }
    if (track({x, w, b})) {
        Node* o = out.get();
        std::vector<Value> parents = b ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
        attach(out, parents, [x, w, b, o, n, c, h, wi, oc, kh, kw, stride, pad, oh, ow, ck, sp] {
            std::vector<double> col(static_cast<size_t>(ck * sp));
            std::vector<double> dcol(static_cast<size_t>(ck * sp));
            CMapM W(w->data.data(), oc, ck);
            if (x->requires_grad) x->ensure_grad();
            if (w->requires_grad) w->ensure_grad();
            if (b && b->requires_grad) b->ensure_grad();
            for (int i = 0; i < n; ++i) {
                CMapM dY(o->grad.data() + static_cast<long long>(i) * oc * sp, oc, sp);
                if (w->requires_grad) {
                    im2col(x->data.data() + static_cast<long long>(i) * c * h * wi, c, h, wi,
                           kh, kw, stride, pad, oh, ow, col.data());
                    CMapM Col(col.data(), ck, sp);
                    MapM dW(w->grad.data(), oc, ck);
                    dW.noalias() += dY * Col.transpose();
                }
                if (x->requires_grad) {
                    MapM dCol(dcol.data(), ck, sp);
                    dCol.noalias() = W.transpose() * dY;
                    col2im_acc(dcol.data(), c, h, wi, kh, kw, stride, pad, oh, ow,
                               x->grad.data() + static_cast<long long>(i) * c * h * wi);
                }
                if (b && b->requires_grad) {
                    Eigen::Map<Eigen::VectorXd> dB(b->grad.data(), oc);
                    dB += dY.rowwise().sum();
                }
            }
        });
    }
    return out;
}

Value batch_norm(const Value& x, const Value& gamma, const Value& beta,
                 BatchNormBuffers& buffers, bool train) {
    if (x->shape.size() != 4) throw DimensionError("batch_norm: expected NCHW input");
    const int n = x->shape[0], c = x->shape[1];
    const long long hw = static_cast<long long>(x->shape[2]) * x->shape[3];
    if (gamma->size() != c || beta->size() != c ||
        buffers.running_mean->size() != c || buffers.running_var->size() != c)
        throw DimensionError("batch_norm: per-channel parameter size mismatch");

    const long long m = static_cast<long long>(n) * hw;  // samples per channel
    auto out = make_value(x->shape);
    std::vector<double> mean(c), invstd(c);
    if (train) {
        for (int ci = 0; ci < c; ++ci) {
            double s = 0.0;
            for (int b = 0; b < n; ++b) {
                const double* p = x->data.data() + (static_cast<long long>(b) * c + ci) * hw;
                for (long long i = 0; i < hw; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(m);
            double v = 0.0;
            for (int b = 0; b < n; ++b) {
                const double* p = x->data.data() + (static_cast<long long>(b) * c + ci) * hw;
                for (long long i = 0; i < hw; ++i) v += (p[i] - mu) * (p[i] - mu);
            }
            v /= static_cast<double>(m);
            mean[ci] = mu;
            invstd[ci] = 1.0 / std::sqrt(v + kBatchNormEps);
            buffers.running_mean->data[ci] =
                (1.0 - kBatchNormMomentum) * buffers.running_mean->data[ci] +
                kBatchNormMomentum * mu;
            buffers.running_var->data[ci] =
                (1.0 - kBatchNormMomentum) * buffers.running_var->data[ci] +
                kBatchNormMomentum * v;
        }
    } else {
        for (int ci = 0; ci < c; ++ci) {
            mean[ci] = buffers.running_mean->data[ci];
            invstd[ci] = 1.0 / std::sqrt(buffers.running_var->data[ci] + kBatchNormEps);
        }
    }
    std::vector<double> xhat(x->data.size());
    for (int b = 0; b < n; ++b)
        for (int ci = 0; ci < c; ++ci) {
            const long long base = (static_cast<long long>(b) * c + ci) * hw;
            for (long long i = 0; i < hw; ++i) {
                xhat[base + i] = (x->data[base + i] - mean[ci]) * invstd[ci];
                out->data[base + i] = gamma->data[ci] * xhat[base + i] + beta->data[ci];
            }
        }
    if (track({x, gamma, beta})) {
        Node* o = out.get();
        attach(out, {x, gamma, beta},
               [x, gamma, beta, o, n, c, hw, m, train, invstd = std::move(invstd),
                xhat = std::move(xhat)] {
                   if (gamma->requires_grad) gamma->ensure_grad();
                   if (beta->requires_grad) beta->ensure_grad();
                   if (x->requires_grad) x->ensure_grad();
                   for (int ci = 0; ci < c; ++ci) {
                       double sum_dy = 0.0, sum_dy_xhat = 0.0;
                       for (int b = 0; b < n; ++b) {
                           const long long base = (static_cast<long long>(b) * c + ci) * hw;
                           for (long long i = 0; i < hw; ++i) {
                               sum_dy += o->grad[base + i];
                               sum_dy_xhat += o->grad[base + i] * xhat[base + i];
                           }
                       }
                       if (gamma->requires_grad) gamma->grad[ci] += sum_dy_xhat;
                       if (beta->requires_grad) beta->grad[ci] += sum_dy;
                       if (x->requires_grad) {
                           const double g = gamma->data[ci] * invstd[ci];
                           const double md = static_cast<double>(m);
                           for (int b = 0; b < n; ++b) {
                               const long long base = (static_cast<long long>(b) * c + ci) * hw;
                               for (long long i = 0; i < hw; ++i) {
                                   if (train) {
                                       x->grad[base + i] +=
                                           g * (o->grad[base + i] - sum_dy / md -
                                                xhat[base + i] * sum_dy_xhat / md);
                                   } else {
                                       x->grad[base + i] += g * o->grad[base + i];
                                   }
                               }
                           }
                       }
                   }
               });
    }
    return out;
}

Value layer_norm(const Value& x, const Value& gamma, const Value& beta) {
    if (x->shape.empty()) throw DimensionError("layer_norm: scalar input");
    const int f = x->shape.back();
    if (gamma->size() != f || beta->size() != f)
        throw DimensionError("layer_norm: affine parameter size mismatch");
    const long long rows = x->size() / f;
    auto out = make_value(x->shape);
    std::vector<double> invstd(static_cast<size_t>(rows));
    std::vector<double> xhat(x->data.size());
    for (long long r = 0; r < rows; ++r) {
        const double* p = x->data.data() + r * f;
        double mu = 0.0;
        for (int i = 0; i < f; ++i) mu += p[i];
        mu /= f;
        double v = 0.0;
        for (int i = 0; i < f; ++i) v += (p[i] - mu) * (p[i] - mu);
        v /= f;
        const double is = 1.0 / std::sqrt(v + kLayerNormEps);
        invstd[static_cast<size_t>(r)] = is;
        for (int i = 0; i < f; ++i) {
            xhat[r * f + i] = (p[i] - mu) * is;
            out->data[r * f + i] = gamma->data[i] * xhat[r * f + i] + beta->data[i];
        }
    }
    if (track({x, gamma, beta})) {
        Node* o = out.get();
        attach(out, {x, gamma, beta},
               [x, gamma, beta, o, rows, f, invstd = std::move(invstd), xhat = std::move(xhat)] {
                   if (gamma->requires_grad) gamma->ensure_grad();
                   if (beta->requires_grad) beta->ensure_grad();
                   if (x->requires_grad) x->ensure_grad();
                   for (long long r = 0; r < rows; ++r) {
                       double sum_dxh = 0.0, sum_dxh_xhat = 0.0;
                       for (int i = 0; i < f; ++i) {
                           const double dxh = o->grad[r * f + i] * gamma->data[i];
                           sum_dxh += dxh;
                           sum_dxh_xhat += dxh * xhat[r * f + i];
                       }
                       for (int i = 0; i < f; ++i) {
                           const double dy = o->grad[r * f + i];
                           if (gamma->requires_grad) gamma->grad[i] += dy * xhat[r * f + i];
                           if (beta->requires_grad) beta->grad[i] += dy;
                           if (x->requires_grad) {
                               const double dxh = dy * gamma->data[i];
                               x->grad[r * f + i] +=
                                   invstd[static_cast<size_t>(r)] *
                                   (dxh - sum_dxh / f - xhat[r * f + i] * sum_dxh_xhat / f);
                           }
                       }
                   }
               });
    }
    return out;
}

Value softmax_lastdim(const Value& x) {
    if (x->shape.empty()) throw DimensionError("softmax: scalar input");
    const int f = x->shape.back();
    const long long rows = x->size() / f;
    auto out = make_value(x->shape);
    for (long long r = 0; r < rows; ++r) {
        const double* p = x->data.data() + r * f;
        double mx = p[0];
        for (int i = 1; i < f; ++i) mx = std::max(mx, p[i]);
        double s = 0.0;
        for (int i = 0; i < f; ++i) {
            out->data[r * f + i] = std::exp(p[i] - mx);
            s += out->data[r * f + i];
        }
        for (int i = 0; i < f; ++i) out->data[r * f + i] /= s;
    }
    if (track({x})) {
        Node* o = out.get();
        attach(out, {x}, [x, o, rows, f] {
            x->ensure_grad();
            for (long long r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (int i = 0; i < f; ++i) dot += o->grad[r * f + i] * o->data[r * f + i];
                for (int i = 0; i < f; ++i)
                    x->grad[r * f + i] += o->data[r * f + i] * (o->grad[r * f + i] - dot);
            }
        });
    }
    return out;
}

Value bce_mean(const Value& p, const std::vector<double>& gt) {
    if (p->data.size() != gt.size())
        throw DimensionError("bce_mean: prediction/target size mismatch");
    const size_t n = p->data.size();
    const double inv = 1.0 / static_cast<double>(n);
    auto out = make_value(Shape{1});
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double pc = std::clamp(p->data[i], kBceClamp, 1.0 - kBceClamp);
        s -= gt[i] * std::log(pc) + (1.0 - gt[i]) * std::log(1.0 - pc);
    }
    out->data[0] = s * inv;
    if (track({p})) {
        Node* o = out.get();
        attach(out, {p}, [p, o, gt, inv] {
            p->ensure_grad();
            for (size_t i = 0; i < gt.size(); ++i) {
                const double pc = std::clamp(p->data[i], kBceClamp, 1.0 - kBceClamp);
                p->grad[i] += o->grad[0] * inv * (pc - gt[i]) / (pc * (1.0 - pc));
            }
        });
    }
    return out;
}

Value weighted_bce_raw(const Value& p, const std::vector<double>& gt,
                       const std::vector<double>& w) {
    if (p->data.size() != gt.size() || p->data.size() != w.size())
        throw DimensionError("weighted_bce: size mismatch");
    double wsum = 0.0;
    for (double wi : w) wsum += wi;
    if (wsum <= 0.0) throw ValidationError("weighted_bce: weight sum must be positive");
    const double inv = 1.0 / wsum;
    auto out = make_value(Shape{1});
    double s = 0.0;
    for (size_t i = 0; i < gt.size(); ++i) {
        const double pc = std::clamp(p->data[i], kBceClamp, 1.0 - kBceClamp);
        s -= w[i] * (gt[i] * std::log(pc) + (1.0 - gt[i]) * std::log(1.0 - pc));
    }
    out->data[0] = s * inv;
    if (track({p})) {
        Node* o = out.get();
        attach(out, {p}, [p, o, gt, w, inv] {
            p->ensure_grad();
            for (size_t i = 0; i < gt.size(); ++i) {
                const double pc = std::clamp(p->data[i], kBceClamp, 1.0 - kBceClamp);
                p->grad[i] += o->grad[0] * inv * w[i] * (pc - gt[i]) / (pc * (1.0 - pc));
            }
        });
    }
    return out;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr) {
    if (lr < 0.0) throw ConfigError("adam_step: learning rate must be non-negative");
    if (params.size() != grads.size())
        throw DimensionError("adam_step: parameter/gradient size mismatch");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.t = 0;
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * grads[i];
        state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

}  // namespace sodkit
