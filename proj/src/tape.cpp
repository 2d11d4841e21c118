#include "mugl/tape.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "mugl/errors.hpp"
#include "mugl/params.hpp"

namespace mugl {

const Tensor& Var::val() const { return tape->value(*this); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::param(ParameterStore& store, int handle) {
    Var v = leaf(store.value(handle), true);
    bindings_.push_back(Binding{&store, handle, v.id});
    return v;
}

const Tensor& Tape::value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.empty()) throw Error("gradient not populated; run backward() first");
    return n.grad;
}

Var Tape::emit(Tensor value, bool requires_grad, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad,
                          requires_grad ? std::move(backprop) : nullptr});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buffer(std::int32_t id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() && n.value.size() > 0) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw Error("loss belongs to a different tape");
    Node& top = nodes_[static_cast<std::size_t>(loss.id)];
    if (top.value.size() != 1) throw ShapeMismatch("backward needs a scalar loss");
    grad_buffer(loss.id)[0] += 1.0;

    // Appended ids are already topologically ordered.
    for (std::int32_t id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
        n.backprop(*this, id);
    }

    for (const Binding& b : bindings_) {
        const Node& n = nodes_[static_cast<std::size_t>(b.node)];
        if (n.grad.empty()) continue;
        Tensor& acc = b.store->grad(b.handle);
        const double* src = n.grad.data();
        double* dst = acc.data();
        for (std::int64_t i = 0; i < acc.size(); ++i) dst[i] += src[i];
    }
}

namespace {

Tape& tape_of(Var a) {
    if (!a.valid()) throw Error("invalid Var");
    return *a.tape;
}

void require_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw Error("operands belong to different tapes");
}

} // namespace

// --- elementwise -----------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Var binary_elementwise(Var a, Var b, Fwd fwd, Bwd bwd, const char* name) {
    require_same_tape(a, b);
    Tape& t = tape_of(a);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (!av.same_shape(bv))
        throw ShapeMismatch(std::string(name) + " " + av.shape_str() + " vs " + bv.shape_str());

    Tensor out(av.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);

    const bool rg = t.wants_grad(a.id) || t.wants_grad(b.id);
    const auto ia = a.id, ib = b.id;
    return t.emit(std::move(out), rg, [ia, ib, bwd](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        const Tensor& av = tp.node_value(ia);
        const Tensor& bv = tp.node_value(ib);
        const bool ga = tp.wants_grad(ia);
        const bool gb = tp.wants_grad(ib);
        Tensor* da = ga ? &tp.grad_buffer(ia) : nullptr;
        Tensor* db = gb ? &tp.grad_buffer(ib) : nullptr;
        for (std::int64_t i = 0; i < g.size(); ++i) {
            double wa, wb;
            bwd(av[i], bv[i], wa, wb);
            if (da) (*da)[i] += g[i] * wa;
            if (db) (*db)[i] += g[i] * wb;
        }
    });
}

} // namespace

Var add(Var a, Var b) {
    return binary_elementwise(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double& wa, double& wb) {
            wa = 1.0;
            wb = 1.0;
        },
        "add");
}

Var sub(Var a, Var b) {
    return binary_elementwise(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double& wa, double& wb) {
            wa = 1.0;
            wb = -1.0;
        },
        "sub");
}

Var mul(Var a, Var b) {
    return binary_elementwise(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double& wa, double& wb) {
            wa = y;
            wb = x;
        },
        "mul");
}

Var scale(Var a, double s) {
    Tape& t = tape_of(a);
    const Tensor& av = t.value(a);
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    const auto ia = a.id;
    return t.emit(std::move(out), t.wants_grad(a.id), [ia, s](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        Tensor& da = tp.grad_buffer(ia);
        for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * s;
    });
}

namespace {

template <typename Fwd, typename Deriv>
Var unary_elementwise(Var a, Fwd fwd, Deriv deriv) {
    Tape& t = tape_of(a);
    const Tensor& av = t.value(a);
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
    const auto ia = a.id;
    return t.emit(std::move(out), t.wants_grad(a.id), [ia, deriv](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        const Tensor& av = tp.node_value(ia);
        Tensor& da = tp.grad_buffer(ia);
        for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * deriv(av[i]);
    });
}

} // namespace

Var relu(Var x) {
    return unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double slope) {
    return unary_elementwise(
        x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var x) {
    return unary_elementwise(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 - s);
        });
}

Var clamp(Var x, double lo, double hi) {
    return unary_elementwise(
        x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
        [lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// --- linear algebra ---------------------------------------------------------

Var affine(Var x, Var w, Var b) {
    require_same_tape(x, w);
    require_same_tape(x, b);
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const Tensor& bv = t.value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1)
        throw ShapeMismatch("affine expects x:(N,I) w:(I,O) b:(O)");
    const std::int64_t N = xv.dim(0), I = xv.dim(1), O = wv.dim(1);
    if (wv.dim(0) != I || bv.dim(0) != O)
        throw ShapeMismatch("affine dims: x" + xv.shape_str() + " w" + wv.shape_str());

    Tensor out({N, O});
    for (std::int64_t n = 0; n < N; ++n) {
        double* yrow = out.data() + n * O;
        for (std::int64_t o = 0; o < O; ++o) yrow[o] = bv[o];
        const double* xrow = xv.data() + n * I;
        for (std::int64_t i = 0; i < I; ++i) {
            const double xi = xrow[i];
            const double* wrow = wv.data() + i * O;
            for (std::int64_t o = 0; o < O; ++o) yrow[o] += xi * wrow[o];
        }
    }

    const bool rg = t.wants_grad(x.id) || t.wants_grad(w.id) || t.wants_grad(b.id);
    const auto ix = x.id, iw = w.id, ib = b.id;
    return t.emit(std::move(out), rg, [ix, iw, ib, N, I, O](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        const Tensor& xv = tp.node_value(ix);
        const Tensor& wv = tp.node_value(iw);
        if (tp.wants_grad(ix)) {
            Tensor& dx = tp.grad_buffer(ix);
            for (std::int64_t n = 0; n < N; ++n) {
                const double* grow = g.data() + n * O;
                double* dxrow = dx.data() + n * I;
                for (std::int64_t i = 0; i < I; ++i) {
                    const double* wrow = wv.data() + i * O;
                    double acc = 0.0;
                    for (std::int64_t o = 0; o < O; ++o) acc += grow[o] * wrow[o];
                    dxrow[i] += acc;
                }
            }
        }
        if (tp.wants_grad(iw)) {
            Tensor& dw = tp.grad_buffer(iw);
            for (std::int64_t n = 0; n < N; ++n) {
                const double* grow = g.data() + n * O;
                const double* xrow = xv.data() + n * I;
                for (std::int64_t i = 0; i < I; ++i) {
                    const double xi = xrow[i];
                    double* dwrow = dw.data() + i * O;
                    for (std::int64_t o = 0; o < O; ++o) dwrow[o] += xi * grow[o];
                }
            }
        }
        if (tp.wants_grad(ib)) {
            Tensor& db = tp.grad_buffer(ib);
            for (std::int64_t n = 0; n < N; ++n) {
                const double* grow = g.data() + n * O;
                for (std::int64_t o = 0; o < O; ++o) db[o] += grow[o];
            }
        }
    });
}

// --- convolutions -----------------------------------------------------------

Var conv1d(Var x, Var w, Var b, int stride, int pad) {
    require_same_tape(x, w);
    require_same_tape(x, b);
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const Tensor& bv = t.value(b);
    if (xv.rank() != 3 || wv.rank() != 3 || bv.rank() != 1)
        throw ShapeMismatch("conv1d expects x:(N,C,T) w:(O,C,K) b:(O)");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
    const std::int64_t O = wv.dim(0), K = wv.dim(2);
    if (wv.dim(1) != C || bv.dim(0) != O) throw ShapeMismatch("conv1d channel dims disagree");
    if (stride < 1 || pad < 0) throw OutOfRange("conv1d stride/pad");
    if (T + 2 * pad < K) throw ShapeMismatch("conv1d input shorter than kernel");
    const std::int64_t To = (T + 2 * pad - K) / stride + 1;

    Tensor out({N, O, To});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t o = 0; o < O; ++o) {
            double* yrow = out.data() + (n * O + o) * To;
            for (std::int64_t ot = 0; ot < To; ++ot) yrow[ot] = bv[o];
            for (std::int64_t c = 0; c < C; ++c) {
                const double* xrow = xv.data() + (n * C + c) * T;
                const double* wrow = wv.data() + (o * C + c) * K;
                for (std::int64_t k = 0; k < K; ++k) {
                    const double wk = wrow[k];
                    if (wk == 0.0) continue;
                    for (std::int64_t ot = 0; ot < To; ++ot) {
                        const std::int64_t it = ot * stride - pad + k;
                        if (it >= 0 && it < T) yrow[ot] += wk * xrow[it];
                    }
                }
            }
        }

    const bool rg = t.wants_grad(x.id) || t.wants_grad(w.id) || t.wants_grad(b.id);
    const auto ix = x.id, iw = w.id, ib = b.id;
    const int s = stride, p = pad;
    return t.emit(std::move(out), rg, [=](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        const Tensor& xv = tp.node_value(ix);
        const Tensor& wv = tp.node_value(iw);
        const bool gx = tp.wants_grad(ix), gw = tp.wants_grad(iw), gb = tp.wants_grad(ib);
        Tensor* dx = gx ? &tp.grad_buffer(ix) : nullptr;
        Tensor* dw = gw ? &tp.grad_buffer(iw) : nullptr;
        Tensor* db = gb ? &tp.grad_buffer(ib) : nullptr;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t o = 0; o < O; ++o) {
                const double* grow = g.data() + (n * O + o) * To;
                if (db)
                    for (std::int64_t ot = 0; ot < To; ++ot) (*db)[o] += grow[ot];
                for (std::int64_t c = 0; c < C; ++c) {
                    const double* xrow = xv.data() + (n * C + c) * T;
                    const double* wrow = wv.data() + (o * C + c) * K;
                    double* dxrow = dx ? dx->data() + (n * C + c) * T : nullptr;
                    double* dwrow = dw ? dw->data() + (o * C + c) * K : nullptr;
                    for (std::int64_t k = 0; k < K; ++k) {
                        const double wk = wrow[k];
                        for (std::int64_t ot = 0; ot < To; ++ot) {
                            const std::int64_t it = ot * s - p + k;
                            if (it < 0 || it >= T) continue;
                            if (dxrow) dxrow[it] += grow[ot] * wk;
                            if (dwrow) dwrow[k] += grow[ot] * xrow[it];
                        }
                    }
                }
            }
    });
}

Var conv2d(Var x, Var w, Var b, int stride_h, int stride_w, int pad_h, int pad_w) {
    require_same_tape(x, w);
    require_same_tape(x, b);
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const Tensor& bv = t.value(b);
    if (xv.rank() != 4 || wv.rank() != 4 || bv.rank() != 1)
        throw ShapeMismatch("conv2d expects x:(N,C,H,W) w:(O,C,KH,KW) b:(O)");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::int64_t O = wv.dim(0), KH = wv.dim(2), KW = wv.dim(3);
    if (wv.dim(1) != C || bv.dim(0) != O) throw ShapeMismatch("conv2d channel dims disagree");
    if (stride_h < 1 || stride_w < 1 || pad_h < 0 || pad_w < 0) throw OutOfRange("conv2d stride/pad");
    if (H + 2 * pad_h < KH || W + 2 * pad_w < KW)
        throw ShapeMismatch("conv2d input smaller than kernel");
    const std::int64_t Ho = (H + 2 * pad_h - KH) / stride_h + 1;
    const std::int64_t Wo = (W + 2 * pad_w - KW) / stride_w + 1;

    Tensor out({N, O, Ho, Wo});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t o = 0; o < O; ++o) {
            double* yplane = out.data() + (n * O + o) * Ho * Wo;
            for (std::int64_t i = 0; i < Ho * Wo; ++i) yplane[i] = bv[o];
            for (std::int64_t c = 0; c < C; ++c) {
                const double* xplane = xv.data() + (n * C + c) * H * W;
                const double* wplane = wv.data() + (o * C + c) * KH * KW;
                for (std::int64_t oh = 0; oh < Ho; ++oh) {
                    double* yrow = yplane + oh * Wo;
                    for (std::int64_t kh = 0; kh < KH; ++kh) {
                        const std::int64_t ih = oh * stride_h - pad_h + kh;
                        if (ih < 0 || ih >= H) continue;
                        const double* xrow = xplane + ih * W;
                        const double* wrow = wplane + kh * KW;
                        for (std::int64_t kw = 0; kw < KW; ++kw) {
                            const double wk = wrow[kw];
                            if (wk == 0.0) continue;
                            const std::int64_t base = -pad_w + kw;
                            for (std::int64_t ow = 0; ow < Wo; ++ow) {
                                const std::int64_t iw = ow * stride_w + base;
                                if (iw >= 0 && iw < W) yrow[ow] += wk * xrow[iw];
                            }
                        }
                    }
                }
            }
        }

    const bool rg = t.wants_grad(x.id) || t.wants_grad(w.id) || t.wants_grad(b.id);
    const auto ix = x.id, iw = w.id, ib = b.id;
    const int sh = stride_h, sw = stride_w, ph = pad_h, pw = pad_w;
    return t.emit(std::move(out), rg, [=](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        const Tensor& xv = tp.node_value(ix);
        const Tensor& wv = tp.node_value(iw);
        const bool gx = tp.wants_grad(ix), gw = tp.wants_grad(iw), gb = tp.wants_grad(ib);
        Tensor* dx = gx ? &tp.grad_buffer(ix) : nullptr;
        Tensor* dw = gw ? &tp.grad_buffer(iw) : nullptr;
        Tensor* db = gb ? &tp.grad_buffer(ib) : nullptr;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t o = 0; o < O; ++o) {
                const double* gplane = g.data() + (n * O + o) * Ho * Wo;
                if (db) {
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < Ho * Wo; ++i) acc += gplane[i];
                    (*db)[o] += acc;
                }
                for (std::int64_t c = 0; c < C; ++c) {
                    const double* xplane = xv.data() + (n * C + c) * H * W;
                    const double* wplane = wv.data() + (o * C + c) * KH * KW;
                    double* dxplane = dx ? dx->data() + (n * C + c) * H * W : nullptr;
                    double* dwplane = dw ? dw->data() + (o * C + c) * KH * KW : nullptr;
                    for (std::int64_t oh = 0; oh < Ho; ++oh) {
                        const double* grow = gplane + oh * Wo;
                        for (std::int64_t kh = 0; kh < KH; ++kh) {
                            const std::int64_t ih = oh * sh - ph + kh;
                            if (ih < 0 || ih >= H) continue;
                            const double* xrow = xplane + ih * W;
                            const double* wrow = wplane + kh * KW;
                            double* dxrow = dxplane ? dxplane + ih * W : nullptr;
                            double* dwrow = dwplane ? dwplane + kh * KW : nullptr;
                            for (std::int64_t kw = 0; kw < KW; ++kw) {
                                const std::int64_t base = -pw + kw;
                                const double wk = wrow[kw];
                                double dwacc = 0.0;
                                for (std::int64_t ow = 0; ow < Wo; ++ow) {
                                    const std::int64_t iwid = ow * sw + base;
                                    if (iwid < 0 || iwid >= W) continue;
                                    if (dxrow) dxrow[iwid] += grow[ow] * wk;
                                    if (dwrow) dwacc += grow[ow] * xrow[iwid];
                                }
                                if (dwrow) dwrow[kw] += dwacc;
                            }
                        }
                    }
                }
            }
    });
}

// --- structure ops ----------------------------------------------------------

Var reshape(Var x, std::vector<std::int64_t> shape) {
    Tape& t = tape_of(x);
    Tensor out = t.value(x);
    out.reshape(std::move(shape));
    const auto ix = x.id;
    return t.emit(std::move(out), t.wants_grad(x.id), [ix](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        Tensor& dx = tp.grad_buffer(ix);
        for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
}

Var transpose_12(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    if (xv.rank() != 3) throw ShapeMismatch("transpose_12 expects rank-3 input");
    const std::int64_t N = xv.dim(0), A = xv.dim(1), B = xv.dim(2);
    Tensor out({N, B, A});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t a = 0; a < A; ++a)
            for (std::int64_t b = 0; b < B; ++b)
                out[(n * B + b) * A + a] = xv[(n * A + a) * B + b];
    const auto ix = x.id;
    return t.emit(std::move(out), t.wants_grad(x.id), [ix, N, A, B](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        Tensor& dx = tp.grad_buffer(ix);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t a = 0; a < A; ++a)
                for (std::int64_t b = 0; b < B; ++b)
                    dx[(n * A + a) * B + b] += g[(n * B + b) * A + a];
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols needs at least one input");
    Tape& t = tape_of(parts[0]);
    const std::int64_t N = t.value(parts[0]).dim(0);
    std::int64_t total = 0;
    bool rg = false;
    for (Var p : parts) {
        require_same_tape(parts[0], p);
        const Tensor& pv = t.value(p);
        if (pv.rank() != 2 || pv.dim(0) != N) throw ShapeMismatch("concat_cols expects (N,Di) blocks");
        total += pv.dim(1);
        rg = rg || t.wants_grad(p.id);
    }

    Tensor out({N, total});
    std::int64_t col = 0;
    std::vector<std::int32_t> ids;
    std::vector<std::int64_t> widths;
    for (Var p : parts) {
        const Tensor& pv = t.value(p);
        const std::int64_t D = pv.dim(1);
        for (std::int64_t n = 0; n < N; ++n)
            std::memcpy(out.data() + n * total + col, pv.data() + n * D,
                        static_cast<std::size_t>(D) * sizeof(double));
        ids.push_back(p.id);
        widths.push_back(D);
        col += D;
    }

    return t.emit(std::move(out), rg, [ids, widths, N, total](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        std::int64_t col = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::int64_t D = widths[k];
            if (tp.wants_grad(ids[k])) {
                Tensor& dp = tp.grad_buffer(ids[k]);
                for (std::int64_t n = 0; n < N; ++n) {
                    const double* grow = g.data() + n * total + col;
                    double* drow = dp.data() + n * D;
                    for (std::int64_t d = 0; d < D; ++d) drow[d] += grow[d];
                }
            }
            col += D;
        }
    });
}

Var slice_cols(Var x, std::int64_t from, std::int64_t to) {
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    if (xv.rank() != 2) throw ShapeMismatch("slice_cols expects (N,D)");
    const std::int64_t N = xv.dim(0), D = xv.dim(1);
    if (from < 0 || to > D || from >= to) throw OutOfRange("slice_cols range");
    const std::int64_t Dw = to - from;
    Tensor out({N, Dw});
    for (std::int64_t n = 0; n < N; ++n)
        std::memcpy(out.data() + n * Dw, xv.data() + n * D + from,
                    static_cast<std::size_t>(Dw) * sizeof(double));
    const auto ix = x.id;
    return t.emit(std::move(out), t.wants_grad(x.id),
                  [ix, N, D, from, Dw](Tape& tp, std::int32_t self) {
                      const Tensor& g = tp.grad_buffer(self);
                      Tensor& dx = tp.grad_buffer(ix);
                      for (std::int64_t n = 0; n < N; ++n) {
                          const double* grow = g.data() + n * Dw;
                          double* drow = dx.data() + n * D + from;
                          for (std::int64_t d = 0; d < Dw; ++d) drow[d] += grow[d];
                      }
                  });
}

Var gather_rows(Var m, std::vector<std::int64_t> idx) {
    Tape& t = tape_of(m);
    const Tensor& mv = t.value(m);
    if (mv.rank() != 2) throw ShapeMismatch("gather_rows expects (K,D)");
    const std::int64_t K = mv.dim(0), D = mv.dim(1);
    const std::int64_t N = static_cast<std::int64_t>(idx.size());
    for (std::int64_t i : idx)
        if (i < 0 || i >= K) throw OutOfRange("gather_rows index");

    Tensor out({N, D});
    for (std::int64_t n = 0; n < N; ++n)
        std::memcpy(out.data() + n * D, mv.data() + idx[static_cast<std::size_t>(n)] * D,
                    static_cast<std::size_t>(D) * sizeof(double));
    const auto im = m.id;
    return t.emit(std::move(out), t.wants_grad(m.id),
                  [im, idx = std::move(idx), D](Tape& tp, std::int32_t self) {
                      const Tensor& g = tp.grad_buffer(self);
                      Tensor& dm = tp.grad_buffer(im);
                      for (std::size_t n = 0; n < idx.size(); ++n) {
                          const double* grow = g.data() + static_cast<std::int64_t>(n) * D;
                          double* drow = dm.data() + idx[n] * D;
                          for (std::int64_t d = 0; d < D; ++d) drow[d] += grow[d];
                      }
                  });
}

Var upsample_nearest_1d(Var x, int factor) {
    if (factor < 1) throw OutOfRange("upsample factor must be >= 1");
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    if (xv.rank() != 3) throw ShapeMismatch("upsample_nearest_1d expects (N,C,T)");
    const std::int64_t N = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
    const std::int64_t To = T * factor;
    Tensor out({N, C, To});
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const double* src = xv.data() + nc * T;
        double* dst = out.data() + nc * To;
        for (std::int64_t ot = 0; ot < To; ++ot) dst[ot] = src[ot / factor];
    }
    const auto ix = x.id;
    return t.emit(std::move(out), t.wants_grad(x.id),
                  [ix, N, C, T, factor](Tape& tp, std::int32_t self) {
                      const Tensor& g = tp.grad_buffer(self);
                      Tensor& dx = tp.grad_buffer(ix);
                      const std::int64_t To = T * factor;
                      for (std::int64_t nc = 0; nc < N * C; ++nc) {
                          const double* grow = g.data() + nc * To;
                          double* drow = dx.data() + nc * T;
                          for (std::int64_t ot = 0; ot < To; ++ot) drow[ot / factor] += grow[ot];
                      }
                  });
}

Var cumsum_last(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    if (xv.rank() < 1) throw ShapeMismatch("cumsum_last needs rank >= 1");
    const std::int64_t T = xv.dim(xv.rank() - 1);
    const std::int64_t rows = xv.size() / T;
    Tensor out(xv.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* src = xv.data() + r * T;
        double* dst = out.data() + r * T;
        double acc = 0.0;
        for (std::int64_t i = 0; i < T; ++i) {
            acc += src[i];
            dst[i] = acc;
        }
    }
    const auto ix = x.id;
    return t.emit(std::move(out), t.wants_grad(x.id), [ix, rows, T](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        Tensor& dx = tp.grad_buffer(ix);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* grow = g.data() + r * T;
            double* drow = dx.data() + r * T;
            double acc = 0.0;
            for (std::int64_t i = T - 1; i >= 0; --i) {
                acc += grow[i];
                drow[i] += acc;
            }
        }
    });
}

Var add_const_rows(Var x, Tensor row) {
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    if (xv.rank() < 1 || row.rank() != 1 || xv.dim(xv.rank() - 1) != row.dim(0))
        throw ShapeMismatch("add_const_rows: row length must match trailing dim");
    const std::int64_t D = row.dim(0);
    Tensor out(xv.shape());
    const std::int64_t rows = xv.size() / D;
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t d = 0; d < D; ++d) out[r * D + d] = xv[r * D + d] + row[d];
    const auto ix = x.id;
    return t.emit(std::move(out), t.wants_grad(x.id), [ix](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        Tensor& dx = tp.grad_buffer(ix);
        for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
}

// --- reductions and losses ---------------------------------------------------

Var sum_all(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = t.value(x);
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
    const auto ix = x.id;
    return t.emit(Tensor::scalar(acc), t.wants_grad(x.id), [ix](Tape& tp, std::int32_t self) {
        const double g = tp.grad_buffer(self)[0];
        Tensor& dx = tp.grad_buffer(ix);
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += g;
    });
}

Var masked_mse(Var pred, const Tensor& target, const Tensor& mask) {
    Tape& t = tape_of(pred);
    const Tensor& pv = t.value(pred);
    if (pv.size() != target.size() || pv.size() != mask.size())
        throw ShapeMismatch("masked_mse operand sizes disagree");

    double denom = 0.0;
    double acc = 0.0;
    for (std::int64_t i = 0; i < pv.size(); ++i) {
        denom += mask[i];
        const double d = pv[i] - target[i];
        acc += mask[i] * d * d;
    }
    const double loss = denom > 0.0 ? acc / denom : 0.0;

    const auto ip = pred.id;
    auto tgt = std::make_shared<Tensor>(target);
    auto msk = std::make_shared<Tensor>(mask);
    return t.emit(Tensor::scalar(loss), t.wants_grad(pred.id),
                  [ip, tgt, msk, denom](Tape& tp, std::int32_t self) {
                      if (denom <= 0.0) return;
                      const double g = tp.grad_buffer(self)[0];
                      const Tensor& pv = tp.node_value(ip);
                      Tensor& dp = tp.grad_buffer(ip);
                      const double k = 2.0 * g / denom;
                      for (std::int64_t i = 0; i < pv.size(); ++i)
                          dp[i] += k * (*msk)[i] * (pv[i] - (*tgt)[i]);
                  });
}

Var mse(Var pred, const Tensor& target) {
    return masked_mse(pred, target, Tensor::full(target.shape(), 1.0));
}

// --- geometry ----------------------------------------------------------------

Var rot6d_to_matrix_rows(Var x6) {
    Tape& t = tape_of(x6);
    const Tensor& xv = t.value(x6);
    if (xv.rank() != 2 || xv.dim(1) != 6) throw ShapeMismatch("rot6d_to_matrix_rows expects (M,6)");
    const std::int64_t M = xv.dim(0);

    Tensor out({M, 9});
    for (std::int64_t m = 0; m < M; ++m) {
        const double* a = xv.data() + m * 6;
        double b1[3], b2[3], b3[3];
        const double n1 = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
        if (n1 < 1e-8) throw DegenerateInput("6D row with near-zero first column");
        for (int i = 0; i < 3; ++i) b1[i] = a[i] / n1;
        const double d = b1[0] * a[3] + b1[1] * a[4] + b1[2] * a[5];
        double u2[3];
        for (int i = 0; i < 3; ++i) u2[i] = a[3 + i] - d * b1[i];
        const double n2 = std::sqrt(u2[0] * u2[0] + u2[1] * u2[1] + u2[2] * u2[2]);
        if (n2 < 1e-8) throw DegenerateInput("6D row with collinear columns");
        for (int i = 0; i < 3; ++i) b2[i] = u2[i] / n2;
        b3[0] = b1[1] * b2[2] - b1[2] * b2[1];
        b3[1] = b1[2] * b2[0] - b1[0] * b2[2];
        b3[2] = b1[0] * b2[1] - b1[1] * b2[0];
        double* r = out.data() + m * 9;
        for (int i = 0; i < 3; ++i) {
            r[3 * i + 0] = b1[i];
            r[3 * i + 1] = b2[i];
            r[3 * i + 2] = b3[i];
        }
    }

    const auto ixid = x6.id;
    return t.emit(std::move(out), t.wants_grad(x6.id), [ixid, M](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        const Tensor& xv = tp.node_value(ixid);
        const Tensor& yv = tp.node_value(self);
        Tensor& dx = tp.grad_buffer(ixid);
        auto cross = [](const double* p, const double* q, double* r) {
            r[0] = p[1] * q[2] - p[2] * q[1];
            r[1] = p[2] * q[0] - p[0] * q[2];
            r[2] = p[0] * q[1] - p[1] * q[0];
        };
        auto dot3 = [](const double* p, const double* q) {
            return p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
        };
        for (std::int64_t m = 0; m < M; ++m) {
            const double* a = xv.data() + m * 6;
            const double* r = yv.data() + m * 9;
            const double* gr = g.data() + m * 9;
            double b1[3], b2[3], gb1[3], gb2[3], gb3[3];
            for (int i = 0; i < 3; ++i) {
                b1[i] = r[3 * i + 0];
                b2[i] = r[3 * i + 1];
                gb1[i] = gr[3 * i + 0];
                gb2[i] = gr[3 * i + 1];
                gb3[i] = gr[3 * i + 2];
            }
            // b3 = b1 x b2 contributes b2 x gb3 to b1 and gb3 x b1 to b2.
            double tmp[3];
            cross(b2, gb3, tmp);
            for (int i = 0; i < 3; ++i) gb1[i] += tmp[i];
            cross(gb3, b1, tmp);
            for (int i = 0; i < 3; ++i) gb2[i] += tmp[i];

            // Recompute intermediate norms.
            const double n1 = std::sqrt(dot3(a, a));
            const double dproj = b1[0] * a[3] + b1[1] * a[4] + b1[2] * a[5];
            double u2[3];
            for (int i = 0; i < 3; ++i) u2[i] = a[3 + i] - dproj * b1[i];
            const double n2 = std::sqrt(dot3(u2, u2));

            // Through b2 = u2/|u2|.
            double gu2[3];
            const double b2g = dot3(b2, gb2);
            for (int i = 0; i < 3; ++i) gu2[i] = (gb2[i] - b2[i] * b2g) / n2;

            // u2 = a2 - (b1.a2) b1: propagate to a2 and b1.
            const double b1gu2 = dot3(b1, gu2);
            double* da = dx.data() + m * 6;
            for (int i = 0; i < 3; ++i) da[3 + i] += gu2[i] - b1[i] * b1gu2;
            for (int i = 0; i < 3; ++i) gb1[i] += -b1gu2 * a[3 + i] - dproj * gu2[i];

            // Through b1 = a1/|a1|.
            const double b1g = dot3(b1, gb1);
            for (int i = 0; i < 3; ++i) da[i] += (gb1[i] - b1[i] * b1g) / n1;
        }
    });
}

Var fk_positions(Var rot9, const KinematicTree& tree, const RestPose& rest) {
    Tape& t = tape_of(rot9);
    const Tensor& rv = t.value(rot9);
    const int J = tree.joint_count;
    if (rv.rank() != 2 || rv.dim(1) != static_cast<std::int64_t>(J) * 9)
        throw TreeMismatch("fk_positions expects (M, J*9) matching the tree");
    if (rest.joint_count() != J) throw TreeMismatch("rest pose joint count differs from tree");
    const std::int64_t M = rv.dim(0);

    std::vector<double> bones(static_cast<std::size_t>(J) * 3, 0.0);
    for (int j = 0; j < J; ++j) {
        if (j == tree.root_index) continue;
        const Eigen::Vector3d b = rest.positions[static_cast<std::size_t>(j)] -
                                  rest.positions[static_cast<std::size_t>(tree.parent[static_cast<std::size_t>(j)])];
        bones[static_cast<std::size_t>(j) * 3 + 0] = b.x();
        bones[static_cast<std::size_t>(j) * 3 + 1] = b.y();
        bones[static_cast<std::size_t>(j) * 3 + 2] = b.z();
    }
    const std::vector<int> topo = tree.topological_order();
    const std::vector<int> parent = tree.parent;
    const int root = tree.root_index;

    Tensor out({M, static_cast<std::int64_t>(J) * 3});
    for (std::int64_t m = 0; m < M; ++m) {
        const double* r = rv.data() + m * J * 9;
        double* pos = out.data() + m * J * 3;
        for (int j : topo) {
            if (j == root) continue;
            const double* rj = r + j * 9;
            const double* bj = bones.data() + j * 3;
            const double* pp = pos + parent[static_cast<std::size_t>(j)] * 3;
            double* pj = pos + j * 3;
            for (int i = 0; i < 3; ++i)
                pj[i] = rj[3 * i] * bj[0] + rj[3 * i + 1] * bj[1] + rj[3 * i + 2] * bj[2] + pp[i];
        }
    }

    const auto ir = rot9.id;
    return t.emit(std::move(out), t.wants_grad(rot9.id),
                  [ir, M, J, topo, parent, root, bones](Tape& tp, std::int32_t self) {
                      const Tensor& g = tp.grad_buffer(self);
                      Tensor& dr = tp.grad_buffer(ir);
                      std::vector<double> acc(static_cast<std::size_t>(J) * 3);
                      for (std::int64_t m = 0; m < M; ++m) {
                          const double* gm = g.data() + m * J * 3;
                          std::memcpy(acc.data(), gm, acc.size() * sizeof(double));
                          double* drm = dr.data() + m * J * 9;
                          // Children accumulate into parents in reverse topo order;
                          // each joint's rotation then sees its subtree total.
                          for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
                              const int j = *it;
                              if (j == root) continue;
                              const double* sj = acc.data() + j * 3;
                              const double* bj = bones.data() + j * 3;
                              double* drj = drm + j * 9;
                              for (int i = 0; i < 3; ++i)
                                  for (int k = 0; k < 3; ++k) drj[3 * i + k] += sj[i] * bj[k];
                              double* sp = acc.data() + parent[static_cast<std::size_t>(j)] * 3;
                              for (int i = 0; i < 3; ++i) sp[i] += sj[i];
                          }
                      }
                  });
}

// --- stochastic and divergence ops --------------------------------------------

Var gaussian_sample(Var mu, Var logvar, Tensor eps) {
    require_same_tape(mu, logvar);
    Tape& t = tape_of(mu);
    const Tensor& mv = t.value(mu);
    const Tensor& lv = t.value(logvar);
    if (!mv.same_shape(lv) || !mv.same_shape(eps))
        throw ShapeMismatch("gaussian_sample shapes disagree");

    Tensor out(mv.shape());
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = mv[i] + std::exp(0.5 * lv[i]) * eps[i];
    const auto imu = mu.id, ilv = logvar.id;
    auto ep = std::make_shared<Tensor>(std::move(eps));
    const bool rg = t.wants_grad(mu.id) || t.wants_grad(logvar.id);
    return t.emit(std::move(out), rg, [imu, ilv, ep](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_buffer(self);
        const Tensor& lv = tp.node_value(ilv);
        if (tp.wants_grad(imu)) {
            Tensor& dmu = tp.grad_buffer(imu);
            for (std::int64_t i = 0; i < g.size(); ++i) dmu[i] += g[i];
        }
        if (tp.wants_grad(ilv)) {
            Tensor& dlv = tp.grad_buffer(ilv);
            for (std::int64_t i = 0; i < g.size(); ++i)
                dlv[i] += g[i] * 0.5 * std::exp(0.5 * lv[i]) * (*ep)[i];
        }
    });
}

Var kl_gaussian(Var mu, Var logvar, Var prior_mu, Var prior_logvar) {
    require_same_tape(mu, logvar);
    require_same_tape(mu, prior_mu);
    require_same_tape(mu, prior_logvar);
    Tape& t = tape_of(mu);
    const Tensor& mv = t.value(mu);
    const Tensor& lv = t.value(logvar);
    const Tensor& pm = t.value(prior_mu);
    const Tensor& pl = t.value(prior_logvar);
    if (!mv.same_shape(lv) || !mv.same_shape(pm) || !mv.same_shape(pl))
        throw ShapeMismatch("kl_gaussian shapes disagree");
    if (mv.rank() != 2) throw ShapeMismatch("kl_gaussian expects (N,D)");
    const std::int64_t N = mv.dim(0);

    double acc = 0.0;
    for (std::int64_t i = 0; i < mv.size(); ++i) {
        const double dm = mv[i] - pm[i];
        acc += 0.5 * (std::exp(lv[i] - pl[i]) + dm * dm * std::exp(-pl[i]) - 1.0 + pl[i] - lv[i]);
    }
    const double loss = acc / static_cast<double>(N);

    const auto imu = mu.id, ilv = logvar.id, ipm = prior_mu.id, ipl = prior_logvar.id;
    const bool rg = t.wants_grad(imu) || t.wants_grad(ilv) || t.wants_grad(ipm) || t.wants_grad(ipl);
    return t.emit(Tensor::scalar(loss), rg, [imu, ilv, ipm, ipl, N](Tape& tp, std::int32_t self) {
        const double g = tp.grad_buffer(self)[0] / static_cast<double>(N);
        const Tensor& mv = tp.node_value(imu);
        const Tensor& lv = tp.node_value(ilv);
        const Tensor& pm = tp.node_value(ipm);
        const Tensor& pl = tp.node_value(ipl);
        Tensor* dmu = tp.wants_grad(imu) ? &tp.grad_buffer(imu) : nullptr;
        Tensor* dlv = tp.wants_grad(ilv) ? &tp.grad_buffer(ilv) : nullptr;
        Tensor* dpm = tp.wants_grad(ipm) ? &tp.grad_buffer(ipm) : nullptr;
        Tensor* dpl = tp.wants_grad(ipl) ? &tp.grad_buffer(ipl) : nullptr;
        for (std::int64_t i = 0; i < mv.size(); ++i) {
            const double epl = std::exp(-pl[i]);
            const double ratio = std::exp(lv[i] - pl[i]);
            const double dm = mv[i] - pm[i];
            if (dmu) (*dmu)[i] += g * dm * epl;
            if (dpm) (*dpm)[i] -= g * dm * epl;
            if (dlv) (*dlv)[i] += g * 0.5 * (ratio - 1.0);
            if (dpl) (*dpl)[i] += g * 0.5 * (1.0 - ratio - dm * dm * epl);
        }
    });
}

// --- composite blocks ----------------------------------------------------------

Var residual_conv2d_block(Var x, const ResBlock2dWeights& wts, int stride_h, int stride_w,
                          double slope) {
    Var h = leaky_relu(conv2d(x, wts.w1, wts.b1, stride_h, stride_w, 1, 1), slope);
    h = conv2d(h, wts.w2, wts.b2, 1, 1, 1, 1);
    Var skip = wts.projected ? conv2d(x, wts.wp, wts.bp, stride_h, stride_w, 0, 0) : x;
    return leaky_relu(add(h, skip), slope);
}

} // namespace mugl
