#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cotsnet/graph.hpp"

namespace cots::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void accumulate(Tensor& dst, const Tensor& src) {
    float* d = dst.data();
    const float* s = src.data();
    for (int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

// col[(ci*k*k + ky*k + kx) , (oy*ow + ox)] = x[ci, oy*stride+ky-pad, ox*stride+kx-pad]
void im2col(const float* x, int c, int h, int w, int k, int stride, int pad,
            int oh, int ow, float* col) {
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                float* row = col + (static_cast<int64_t>(ci) * k * k + ky * k + kx) *
                                       (static_cast<int64_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        std::fill(row + static_cast<int64_t>(oy) * ow,
                                  row + static_cast<int64_t>(oy + 1) * ow, 0.0f);
                        continue;
                    }
                    const float* src = x + (static_cast<int64_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        row[static_cast<int64_t>(oy) * ow + ox] =
                            (ix < 0 || ix >= w) ? 0.0f : src[ix];
                    }
                }
            }
}

void col2im_accum(const float* col, int c, int h, int w, int k, int stride, int pad,
                  int oh, int ow, float* dx) {
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const float* row = col + (static_cast<int64_t>(ci) * k * k + ky * k + kx) *
                                             (static_cast<int64_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    float* dst = dx + (static_cast<int64_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += row[static_cast<int64_t>(oy) * ow + ox];
                    }
                }
            }
}

} // namespace

NodePtr Graph::relu(NodePtr x) {
    Tensor out(x->value.shape());
    const float* in = x->value.data();
    float* o = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) o[i] = in[i] > 0.0f ? in[i] : 0.0f;
    NodePtr xin = x;
    return make(std::move(out), {x}, [xin](Node& n) {
        if (!xin->requires_grad) return;
        xin->ensure_grad();
        const float* v = xin->value.data();
        const float* g = n.grad.data();
        float* dx = xin->grad.data();
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            if (v[i] > 0.0f) dx[i] += g[i];
    });
}

NodePtr Graph::sigmoid(NodePtr x) {
    Tensor out(x->value.shape());
    const float* in = x->value.data();
    float* o = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) {
        const float v = in[i];
        o[i] = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v))
                         : std::exp(v) / (1.0f + std::exp(v));
    }
    NodePtr xin = x;
    return make(std::move(out), {x}, [xin](Node& n) {
        if (!xin->requires_grad) return;
        xin->ensure_grad();
        const float* y = n.value.data();
        const float* g = n.grad.data();
        float* dx = xin->grad.data();
        for (int64_t i = 0; i < n.grad.numel(); ++i) dx[i] += g[i] * y[i] * (1.0f - y[i]);
    });
}

NodePtr Graph::add(NodePtr a, NodePtr b) {
    require(a->value.same_shape(b->value), "add: shape mismatch");
    Tensor out(a->value.shape());
    const float* pa = a->value.data();
    const float* pb = b->value.data();
    float* o = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) o[i] = pa[i] + pb[i];
    NodePtr na = a, nb = b;
    return make(std::move(out), {a, b}, [na, nb](Node& n) {
        if (na->requires_grad) {
            na->ensure_grad();
            accumulate(na->grad, n.grad);
        }
        if (nb->requires_grad) {
            nb->ensure_grad();
            accumulate(nb->grad, n.grad);
        }
    });
}

NodePtr Graph::scale(NodePtr x, float s) {
    Tensor out(x->value.shape());
    const float* in = x->value.data();
    float* o = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) o[i] = in[i] * s;
    NodePtr xin = x;
    return make(std::move(out), {x}, [xin, s](Node& n) {
        if (!xin->requires_grad) return;
        xin->ensure_grad();
        const float* g = n.grad.data();
        float* dx = xin->grad.data();
        for (int64_t i = 0; i < n.grad.numel(); ++i) dx[i] += g[i] * s;
    });
}

NodePtr Graph::mul_bcast(NodePtr x, NodePtr gate) {
    const auto& xs = x->value.shape();
    const auto& gs = gate->value.shape();
    require(xs.size() == 4 && gs.size() == 4, "mul_bcast: expects 4-d tensors");
    require(xs[0] == gs[0], "mul_bcast: batch mismatch");
    const bool per_channel = gs[1] == xs[1] && gs[2] == 1 && gs[3] == 1;
    const bool per_pixel = gs[1] == 1 && gs[2] == xs[2] && gs[3] == xs[3];
    const bool same = gs == xs;
    require(per_channel || per_pixel || same, "mul_bcast: unsupported broadcast");

    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor out(xs);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* xv = x->value.data() + (static_cast<int64_t>(n) * C + c) * hw;
            float* ov = out.data() + (static_cast<int64_t>(n) * C + c) * hw;
            if (per_channel) {
                const float gv = gate->value.data()[static_cast<int64_t>(n) * C + c];
                for (int64_t i = 0; i < hw; ++i) ov[i] = xv[i] * gv;
            } else {
                const float* gv = per_pixel
                                      ? gate->value.data() + static_cast<int64_t>(n) * hw
                                      : gate->value.data() + (static_cast<int64_t>(n) * C + c) * hw;
                for (int64_t i = 0; i < hw; ++i) ov[i] = xv[i] * gv[i];
            }
        }

    NodePtr nx = x, ng = gate;
    return make(std::move(out), {x, gate}, [nx, ng, per_channel, per_pixel, N, C, hw](Node& n) {
        for (int b = 0; b < N; ++b)
            for (int c = 0; c < C; ++c) {
                const int64_t off = (static_cast<int64_t>(b) * C + c) * hw;
                const float* g = n.grad.data() + off;
                const float* xv = nx->value.data() + off;
                if (per_channel) {
                    const float gv = ng->value.data()[static_cast<int64_t>(b) * C + c];
                    if (nx->requires_grad) {
                        nx->ensure_grad();
                        float* dx = nx->grad.data() + off;
                        for (int64_t i = 0; i < hw; ++i) dx[i] += g[i] * gv;
                    }
                    if (ng->requires_grad) {
                        ng->ensure_grad();
                        float acc = 0.0f;
                        for (int64_t i = 0; i < hw; ++i) acc += g[i] * xv[i];
                        ng->grad.data()[static_cast<int64_t>(b) * C + c] += acc;
                    }
                } else {
                    const int64_t goff = per_pixel ? static_cast<int64_t>(b) * hw : off;
                    const float* gv = ng->value.data() + goff;
                    if (nx->requires_grad) {
                        nx->ensure_grad();
                        float* dx = nx->grad.data() + off;
                        for (int64_t i = 0; i < hw; ++i) dx[i] += g[i] * gv[i];
                    }
                    if (ng->requires_grad) {
                        ng->ensure_grad();
                        float* dg = ng->grad.data() + goff;
                        for (int64_t i = 0; i < hw; ++i) dg[i] += g[i] * xv[i];
                    }
                }
            }
    });
}

NodePtr Graph::conv2d(NodePtr x, Parameter& w, Parameter* bias, int stride, int pad) {
    const auto& xs = x->value.shape();
    const auto& ws = w.value.shape();
    require(xs.size() == 4 && ws.size() == 4, "conv2d: expects 4-d input and weight");
    require(ws[1] == xs[1], "conv2d: input channel mismatch");
    const int N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    const int Cout = ws[0], K = ws[2];
    require(ws[3] == K, "conv2d: kernel must be square");
    const int OH = (H + 2 * pad - K) / stride + 1;
    const int OW = (W + 2 * pad - K) / stride + 1;
    require(OH >= 1 && OW >= 1, "conv2d: output would be empty");

    const int64_t ckk = static_cast<int64_t>(Cin) * K * K;
    const int64_t ohw = static_cast<int64_t>(OH) * OW;

    Tensor out({N, Cout, OH, OW});
    std::vector<float> col(static_cast<size_t>(ckk * ohw));
    CMapMat wm(w.value.data(), Cout, ckk);
    for (int n = 0; n < N; ++n) {
        im2col(x->value.data() + static_cast<int64_t>(n) * Cin * H * W, Cin, H, W, K,
               stride, pad, OH, OW, col.data());
        CMapMat cm(col.data(), ckk, ohw);
        MapMat om(out.data() + static_cast<int64_t>(n) * Cout * ohw, Cout, ohw);
        om.noalias() = wm * cm;
        if (bias)
            for (int co = 0; co < Cout; ++co)
                om.row(co).array() += bias->value.data()[co];
    }

    NodePtr nx = x;
    Parameter* pw = &w;
    Parameter* pb = bias;
    return make(std::move(out), {x},
                [nx, pw, pb, N, Cin, H, W, Cout, K, stride, pad, OH, OW, ckk, ohw](Node& n) {
                    std::vector<float> col(static_cast<size_t>(ckk * ohw));
                    std::vector<float> dcol(static_cast<size_t>(ckk * ohw));
                    MapMat dwm(pw->grad.data(), Cout, ckk);
                    CMapMat wm(pw->value.data(), Cout, ckk);
                    if (nx->requires_grad) nx->ensure_grad();
                    for (int b = 0; b < N; ++b) {
                        CMapMat dout(n.grad.data() + static_cast<int64_t>(b) * Cout * ohw, Cout, ohw);
                        im2col(nx->value.data() + static_cast<int64_t>(b) * Cin * H * W, Cin, H,
                               W, K, stride, pad, OH, OW, col.data());
                        CMapMat cm(col.data(), ckk, ohw);
                        dwm.noalias() += dout * cm.transpose();
                        if (pb) {
                            for (int co = 0; co < Cout; ++co)
                                pb->grad.data()[co] += dout.row(co).sum();
                        }
                        if (nx->requires_grad) {
                            MapMat dcm(dcol.data(), ckk, ohw);
                            dcm.noalias() = wm.transpose() * dout;
                            col2im_accum(dcol.data(), Cin, H, W, K, stride, pad, OH, OW,
                                         nx->grad.data() + static_cast<int64_t>(b) * Cin * H * W);
                        }
                    }
                },
                true);
}

NodePtr Graph::linear(NodePtr x, Parameter& w, Parameter* bias) {
    const auto& xs = x->value.shape();
    const auto& ws = w.value.shape();
    require(xs.size() == 2 && ws.size() == 2, "linear: expects (N,Cin) input, (Cout,Cin) weight");
    require(ws[1] == xs[1], "linear: input width mismatch");
    const int N = xs[0], Cin = xs[1], Cout = ws[0];

    Tensor out({N, Cout});
    CMapMat xm(x->value.data(), N, Cin);
    CMapMat wm(w.value.data(), Cout, Cin);
    MapMat om(out.data(), N, Cout);
    om.noalias() = xm * wm.transpose();
    if (bias)
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < Cout; ++c) om(n, c) += bias->value.data()[c];

    NodePtr nx = x;
    Parameter* pw = &w;
    Parameter* pb = bias;
    return make(std::move(out), {x},
                [nx, pw, pb, N, Cin, Cout](Node& n) {
                    CMapMat dout(n.grad.data(), N, Cout);
                    CMapMat xm(nx->value.data(), N, Cin);
                    MapMat dwm(pw->grad.data(), Cout, Cin);
                    dwm.noalias() += dout.transpose() * xm;
                    if (pb)
                        for (int b = 0; b < N; ++b)
                            for (int c = 0; c < Cout; ++c) pb->grad.data()[c] += dout(b, c);
                    if (nx->requires_grad) {
                        nx->ensure_grad();
                        CMapMat wm(pw->value.data(), Cout, Cin);
                        MapMat dxm(nx->grad.data(), N, Cin);
                        dxm.noalias() += dout * wm;
                    }
                },
                true);
}

NodePtr Graph::instance_norm(NodePtr x, Parameter& gamma, Parameter& beta) {
    const auto& xs = x->value.shape();
    require(xs.size() == 4, "instance_norm: expects NCHW");
    const int N = xs[0], C = xs[1];
    const int64_t hw = static_cast<int64_t>(xs[2]) * xs[3];
    require(gamma.value.numel() == C && beta.value.numel() == C,
            "instance_norm: affine parameter size mismatch");
    constexpr float eps = 1e-5f;

    Tensor out(xs);
    auto xhat = std::make_shared<Tensor>(xs);
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(N) * C);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * C + c) * hw;
            const float* xv = x->value.data() + off;
            double mean = 0.0;
            for (int64_t i = 0; i < hw; ++i) mean += xv[i];
            mean /= static_cast<double>(hw);
            double var = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                const double d = xv[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(hw);
            const float is = 1.0f / std::sqrt(static_cast<float>(var) + eps);
            (*inv_std)[static_cast<size_t>(n) * C + c] = is;
            const float g = gamma.value.data()[c], b = beta.value.data()[c];
            float* xh = xhat->data() + off;
            float* ov = out.data() + off;
            for (int64_t i = 0; i < hw; ++i) {
                xh[i] = (xv[i] - static_cast<float>(mean)) * is;
                ov[i] = g * xh[i] + b;
            }
        }

    NodePtr nx = x;
    Parameter* pg = &gamma;
    Parameter* pbt = &beta;
    return make(std::move(out), {x},
                [nx, pg, pbt, xhat, inv_std, N, C, hw](Node& n) {
                    if (nx->requires_grad) nx->ensure_grad();
                    for (int b = 0; b < N; ++b)
                        for (int c = 0; c < C; ++c) {
                            const int64_t off = (static_cast<int64_t>(b) * C + c) * hw;
                            const float* dy = n.grad.data() + off;
                            const float* xh = xhat->data() + off;
                            double sum_dy = 0.0, sum_dyxh = 0.0;
                            for (int64_t i = 0; i < hw; ++i) {
                                sum_dy += dy[i];
                                sum_dyxh += dy[i] * xh[i];
                            }
                            pbt->grad.data()[c] += static_cast<float>(sum_dy);
                            pg->grad.data()[c] += static_cast<float>(sum_dyxh);
                            if (!nx->requires_grad) continue;
                            const float is = (*inv_std)[static_cast<size_t>(b) * C + c];
                            const float g = pg->value.data()[c];
                            const float mean_dy = static_cast<float>(sum_dy / static_cast<double>(hw));
                            const float mean_dyxh =
                                static_cast<float>(sum_dyxh / static_cast<double>(hw));
                            float* dx = nx->grad.data() + off;
                            for (int64_t i = 0; i < hw; ++i)
                                dx[i] += g * is * (dy[i] - mean_dy - xh[i] * mean_dyxh);
                        }
                },
                true);
}

NodePtr Graph::layer_norm_channel(NodePtr x, Parameter& gamma, Parameter& beta) {
    const auto& xs = x->value.shape();
    require(xs.size() == 4, "layer_norm_channel: expects NCHW");
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    require(gamma.value.numel() == C && beta.value.numel() == C,
            "layer_norm_channel: affine parameter size mismatch");
    constexpr float eps = 1e-5f;
    const int64_t hw = static_cast<int64_t>(H) * W;

    Tensor out(xs);
    auto xhat = std::make_shared<Tensor>(xs);
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(N) * hw);
    for (int n = 0; n < N; ++n)
        for (int64_t p = 0; p < hw; ++p) {
            double mean = 0.0;
            for (int c = 0; c < C; ++c)
                mean += x->value.data()[(static_cast<int64_t>(n) * C + c) * hw + p];
            mean /= C;
            double var = 0.0;
            for (int c = 0; c < C; ++c) {
                const double d =
                    x->value.data()[(static_cast<int64_t>(n) * C + c) * hw + p] - mean;
                var += d * d;
            }
            var /= C;
            const float is = 1.0f / std::sqrt(static_cast<float>(var) + eps);
            (*inv_std)[static_cast<size_t>(n) * hw + p] = is;
            for (int c = 0; c < C; ++c) {
                const int64_t idx = (static_cast<int64_t>(n) * C + c) * hw + p;
                const float xh = (x->value.data()[idx] - static_cast<float>(mean)) * is;
                xhat->data()[idx] = xh;
                out.data()[idx] = gamma.value.data()[c] * xh + beta.value.data()[c];
            }
        }

    NodePtr nx = x;
    Parameter* pg = &gamma;
    Parameter* pbt = &beta;
    return make(std::move(out), {x},
                [nx, pg, pbt, xhat, inv_std, N, C, hw](Node& n) {
                    if (nx->requires_grad) nx->ensure_grad();
                    // gamma varies along the normalized axis, so fold it into
                    // the upstream gradient before the usual norm backward
                    for (int b = 0; b < N; ++b)
                        for (int64_t p = 0; p < hw; ++p) {
                            double sum_t = 0.0, sum_txh = 0.0;
                            for (int c = 0; c < C; ++c) {
                                const int64_t idx = (static_cast<int64_t>(b) * C + c) * hw + p;
                                const float dy = n.grad.data()[idx];
                                const float xh = xhat->data()[idx];
                                const float t = dy * pg->value.data()[c];
                                sum_t += t;
                                sum_txh += t * xh;
                                pbt->grad.data()[c] += dy;
                                pg->grad.data()[c] += dy * xh;
                            }
                            if (!nx->requires_grad) continue;
                            const float is = (*inv_std)[static_cast<size_t>(b) * hw + p];
                            const float mean_t = static_cast<float>(sum_t / C);
                            const float mean_txh = static_cast<float>(sum_txh / C);
                            for (int c = 0; c < C; ++c) {
                                const int64_t idx = (static_cast<int64_t>(b) * C + c) * hw + p;
                                const float t = n.grad.data()[idx] * pg->value.data()[c];
                                nx->grad.data()[idx] +=
                                    is * (t - mean_t - xhat->data()[idx] * mean_txh);
                            }
                        }
                },
                true);
}

NodePtr Graph::bilinear_resize(NodePtr x, int out_h, int out_w) {
    const auto& xs = x->value.shape();
    require(xs.size() == 4, "bilinear_resize: expects NCHW");
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    require(out_h >= 1 && out_w >= 1, "bilinear_resize: bad output size");
    if (out_h == H && out_w == W) return x;

    const float sy = static_cast<float>(H) / static_cast<float>(out_h);
    const float sx = static_cast<float>(W) / static_cast<float>(out_w);

    // precompute per-axis taps (half-pixel centers)
    struct Tap {
        int i0, i1;
        float w0, w1;
    };
    auto make_taps = [](int out_n, int in_n, float scale) {
        std::vector<Tap> taps(static_cast<size_t>(out_n));
        for (int o = 0; o < out_n; ++o) {
            float src = (static_cast<float>(o) + 0.5f) * scale - 0.5f;
            if (src < 0.0f) src = 0.0f;
            if (src > static_cast<float>(in_n - 1)) src = static_cast<float>(in_n - 1);
            const int i0 = static_cast<int>(src);
            const int i1 = std::min(i0 + 1, in_n - 1);
            const float w1 = src - static_cast<float>(i0);
            taps[static_cast<size_t>(o)] = {i0, i1, 1.0f - w1, w1};
        }
        return taps;
    };
    auto ty = std::make_shared<std::vector<Tap>>(make_taps(out_h, H, sy));
    auto tx = std::make_shared<std::vector<Tap>>(make_taps(out_w, W, sx));

    Tensor out({N, C, out_h, out_w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* src = x->value.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            float* dst = out.data() + (static_cast<int64_t>(n) * C + c) * out_h * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
                const Tap& a = (*ty)[static_cast<size_t>(oy)];
                for (int ox = 0; ox < out_w; ++ox) {
                    const Tap& b = (*tx)[static_cast<size_t>(ox)];
                    dst[static_cast<int64_t>(oy) * out_w + ox] =
                        a.w0 * (b.w0 * src[static_cast<int64_t>(a.i0) * W + b.i0] +
                                b.w1 * src[static_cast<int64_t>(a.i0) * W + b.i1]) +
                        a.w1 * (b.w0 * src[static_cast<int64_t>(a.i1) * W + b.i0] +
                                b.w1 * src[static_cast<int64_t>(a.i1) * W + b.i1]);
                }
            }
        }

    NodePtr nx = x;
    return make(std::move(out), {x}, [nx, ty, tx, N, C, H, W, out_h, out_w](Node& n) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        for (int b = 0; b < N; ++b)
            for (int c = 0; c < C; ++c) {
                float* dx = nx->grad.data() + (static_cast<int64_t>(b) * C + c) * H * W;
                const float* g =
                    n.grad.data() + (static_cast<int64_t>(b) * C + c) * out_h * out_w;
                for (int oy = 0; oy < out_h; ++oy) {
                    const auto& a = (*ty)[static_cast<size_t>(oy)];
                    for (int ox = 0; ox < out_w; ++ox) {
                        const auto& t = (*tx)[static_cast<size_t>(ox)];
                        const float gv = g[static_cast<int64_t>(oy) * out_w + ox];
                        dx[static_cast<int64_t>(a.i0) * W + t.i0] += a.w0 * t.w0 * gv;
                        dx[static_cast<int64_t>(a.i0) * W + t.i1] += a.w0 * t.w1 * gv;
                        dx[static_cast<int64_t>(a.i1) * W + t.i0] += a.w1 * t.w0 * gv;
                        dx[static_cast<int64_t>(a.i1) * W + t.i1] += a.w1 * t.w1 * gv;
                    }
                }
            }
    });
}

NodePtr Graph::concat_channels(const std::vector<NodePtr>& xs) {
    require(!xs.empty(), "concat_channels: empty input list");
    const auto& s0 = xs[0]->value.shape();
    require(s0.size() == 4, "concat_channels: expects NCHW");
    int ctotal = 0;
    for (const auto& x : xs) {
        const auto& s = x->value.shape();
        require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
                "concat_channels: spatial/batch mismatch");
        ctotal += s[1];
    }
    const int N = s0[0], H = s0[2], W = s0[3];
    const int64_t hw = static_cast<int64_t>(H) * W;

    Tensor out({N, ctotal, H, W});
    for (int n = 0; n < N; ++n) {
        int64_t coff = 0;
        for (const auto& x : xs) {
            const int c = x->value.dim(1);
            std::copy_n(x->value.data() + static_cast<int64_t>(n) * c * hw, c * hw,
                        out.data() + (static_cast<int64_t>(n) * ctotal + coff) * hw);
            coff += c;
        }
    }

    std::vector<NodePtr> ins = xs;
    return make(std::move(out), ins, [ins, N, ctotal, hw](Node& n) {
        for (int b = 0; b < N; ++b) {
            int64_t coff = 0;
            for (const auto& x : ins) {
                const int c = x->value.dim(1);
                if (x->requires_grad) {
                    x->ensure_grad();
                    const float* g = n.grad.data() + (static_cast<int64_t>(b) * ctotal + coff) * hw;
                    float* dx = x->grad.data() + static_cast<int64_t>(b) * c * hw;
                    for (int64_t i = 0; i < c * hw; ++i) dx[i] += g[i];
                }
                coff += c;
            }
        }
    });
}

NodePtr Graph::global_avg_pool(NodePtr x) {
    const auto& xs = x->value.shape();
    require(xs.size() == 4, "global_avg_pool: expects NCHW");
    const int N = xs[0], C = xs[1];
    const int64_t hw = static_cast<int64_t>(xs[2]) * xs[3];

    Tensor out({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* src = x->value.data() + (static_cast<int64_t>(n) * C + c) * hw;
            double acc = 0.0;
            for (int64_t i = 0; i < hw; ++i) acc += src[i];
            out.data()[static_cast<int64_t>(n) * C + c] =
                static_cast<float>(acc / static_cast<double>(hw));
        }

    NodePtr nx = x;
    return make(std::move(out), {x}, [nx, N, C, hw](Node& n) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        const float inv = 1.0f / static_cast<float>(hw);
        for (int b = 0; b < N; ++b)
            for (int c = 0; c < C; ++c) {
                const float gv = n.grad.data()[static_cast<int64_t>(b) * C + c] * inv;
                float* dx = nx->grad.data() + (static_cast<int64_t>(b) * C + c) * hw;
                for (int64_t i = 0; i < hw; ++i) dx[i] += gv;
            }
    });
}

NodePtr Graph::channel_mean(NodePtr x) {
    const auto& xs = x->value.shape();
    require(xs.size() == 4, "channel_mean: expects NCHW");
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int64_t hw = static_cast<int64_t>(H) * W;

    Tensor out({N, 1, H, W});
    for (int n = 0; n < N; ++n)
        for (int64_t p = 0; p < hw; ++p) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c)
                acc += x->value.data()[(static_cast<int64_t>(n) * C + c) * hw + p];
            out.data()[static_cast<int64_t>(n) * hw + p] = static_cast<float>(acc / C);
        }

    NodePtr nx = x;
    return make(std::move(out), {x}, [nx, N, C, hw](Node& n) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        const float inv = 1.0f / static_cast<float>(C);
        for (int b = 0; b < N; ++b)
            for (int64_t p = 0; p < hw; ++p) {
                const float gv = n.grad.data()[static_cast<int64_t>(b) * hw + p] * inv;
                for (int c = 0; c < C; ++c)
                    nx->grad.data()[(static_cast<int64_t>(b) * C + c) * hw + p] += gv;
            }
    });
}

NodePtr Graph::channel_max(NodePtr x) {
    const auto& xs = x->value.shape();
    require(xs.size() == 4, "channel_max: expects NCHW");
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int64_t hw = static_cast<int64_t>(H) * W;

    Tensor out({N, 1, H, W});
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(N) * hw);
    for (int n = 0; n < N; ++n)
        for (int64_t p = 0; p < hw; ++p) {
            int best = 0;
            float bv = x->value.data()[static_cast<int64_t>(n) * C * hw + p];
            for (int c = 1; c < C; ++c) {
                const float v = x->value.data()[(static_cast<int64_t>(n) * C + c) * hw + p];
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            out.data()[static_cast<int64_t>(n) * hw + p] = bv;
            (*argmax)[static_cast<size_t>(n) * hw + p] = best;
        }

    NodePtr nx = x;
    return make(std::move(out), {x}, [nx, argmax, N, C, hw](Node& n) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        for (int b = 0; b < N; ++b)
            for (int64_t p = 0; p < hw; ++p) {
                const int c = (*argmax)[static_cast<size_t>(b) * hw + p];
                nx->grad.data()[(static_cast<int64_t>(b) * C + c) * hw + p] +=
                    n.grad.data()[static_cast<int64_t>(b) * hw + p];
            }
    });
}

NodePtr Graph::reshape(NodePtr x, std::vector<int> shape) {
    require(shape_numel(shape) == x->value.numel(), "reshape: element count mismatch");
    Tensor out(shape);
    std::copy_n(x->value.data(), x->value.numel(), out.data());
    NodePtr nx = x;
    return make(std::move(out), {x}, [nx](Node& n) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        float* dx = nx->grad.data();
        const float* g = n.grad.data();
        for (int64_t i = 0; i < n.grad.numel(); ++i) dx[i] += g[i];
    });
}

NodePtr Graph::batch_mean(NodePtr x) {
    const auto& xs = x->value.shape();
    require(xs.size() == 4, "batch_mean: expects NCHW");
    const int N = xs[0];
    const int64_t chw = static_cast<int64_t>(xs[1]) * xs[2] * xs[3];

    Tensor out({1, xs[1], xs[2], xs[3]});
    for (int64_t i = 0; i < chw; ++i) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) acc += x->value.data()[static_cast<int64_t>(n) * chw + i];
        out.data()[i] = static_cast<float>(acc / N);
    }

    NodePtr nx = x;
    return make(std::move(out), {x}, [nx, N, chw](Node& n) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        const float inv = 1.0f / static_cast<float>(N);
        for (int64_t i = 0; i < chw; ++i) {
            const float gv = n.grad.data()[i] * inv;
            for (int b = 0; b < N; ++b) nx->grad.data()[static_cast<int64_t>(b) * chw + i] += gv;
        }
    });
}

NodePtr Graph::matmul(NodePtr a, NodePtr b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    require(as.size() == 3 && bs.size() == 3, "matmul: expects (B,M,K) x (B,K,N)");
    require(as[0] == bs[0] && as[2] == bs[1], "matmul: inner dimension mismatch");
    const int B = as[0], M = as[1], K = as[2], N = bs[2];

    Tensor out({B, M, N});
    for (int i = 0; i < B; ++i) {
        CMapMat am(a->value.data() + static_cast<int64_t>(i) * M * K, M, K);
        CMapMat bm(b->value.data() + static_cast<int64_t>(i) * K * N, K, N);
        MapMat om(out.data() + static_cast<int64_t>(i) * M * N, M, N);
        om.noalias() = am * bm;
    }

    NodePtr na = a, nb = b;
    return make(std::move(out), {a, b}, [na, nb, B, M, K, N](Node& n) {
        for (int i = 0; i < B; ++i) {
            CMapMat g(n.grad.data() + static_cast<int64_t>(i) * M * N, M, N);
            if (na->requires_grad) {
                na->ensure_grad();
                CMapMat bm(nb->value.data() + static_cast<int64_t>(i) * K * N, K, N);
                MapMat da(na->grad.data() + static_cast<int64_t>(i) * M * K, M, K);
                da.noalias() += g * bm.transpose();
            }
            if (nb->requires_grad) {
                nb->ensure_grad();
                CMapMat am(na->value.data() + static_cast<int64_t>(i) * M * K, M, K);
                MapMat db(nb->grad.data() + static_cast<int64_t>(i) * K * N, K, N);
                db.noalias() += am.transpose() * g;
            }
        }
    });
}

NodePtr Graph::transpose_last2(NodePtr x) {
    const auto& xs = x->value.shape();
    require(xs.size() == 3, "transpose_last2: expects (B,M,N)");
    const int B = xs[0], M = xs[1], N = xs[2];
    Tensor out({B, N, M});
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m)
            for (int n = 0; n < N; ++n)
                out.data()[(static_cast<int64_t>(b) * N + n) * M + m] =
                    x->value.data()[(static_cast<int64_t>(b) * M + m) * N + n];
    NodePtr nx = x;
    return make(std::move(out), {x}, [nx, B, M, N](Node& nd) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int m = 0; m < M; ++m)
                for (int n = 0; n < N; ++n)
                    nx->grad.data()[(static_cast<int64_t>(b) * M + m) * N + n] +=
                        nd.grad.data()[(static_cast<int64_t>(b) * N + n) * M + m];
    });
}

NodePtr Graph::softmax_lastdim(NodePtr x) {
    const auto& xs = x->value.shape();
    require(!xs.empty(), "softmax_lastdim: empty shape");
    const int D = xs.back();
    const int64_t rows = x->value.numel() / D;

    Tensor out(xs);
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = x->value.data() + r * D;
        float* dst = out.data() + r * D;
        float mx = src[0];
        for (int i = 1; i < D; ++i) mx = std::max(mx, src[i]);
        double sum = 0.0;
        for (int i = 0; i < D; ++i) {
            dst[i] = std::exp(src[i] - mx);
            sum += dst[i];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int i = 0; i < D; ++i) dst[i] *= inv;
    }

    NodePtr nx = x;
    return make(std::move(out), {x}, [nx, D, rows](Node& n) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const float* y = n.value.data() + r * D;
            const float* g = n.grad.data() + r * D;
            float* dx = nx->grad.data() + r * D;
            double dot = 0.0;
            for (int i = 0; i < D; ++i) dot += static_cast<double>(g[i]) * y[i];
            for (int i = 0; i < D; ++i)
                dx[i] += y[i] * (g[i] - static_cast<float>(dot));
        }
    });
}

NodePtr Graph::nchw_to_tokens(NodePtr x, int heads) {
    const auto& xs = x->value.shape();
    require(xs.size() == 4, "nchw_to_tokens: expects NCHW");
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    require(C % heads == 0, "nchw_to_tokens: channels not divisible by heads");
    const int dh = C / heads;
    const int64_t hw = static_cast<int64_t>(H) * W;

    Tensor out({N * heads, static_cast<int>(hw), dh});
    for (int n = 0; n < N; ++n)
        for (int hd = 0; hd < heads; ++hd)
            for (int64_t t = 0; t < hw; ++t)
                for (int c = 0; c < dh; ++c)
                    out.data()[((static_cast<int64_t>(n) * heads + hd) * hw + t) * dh + c] =
                        x->value.data()[(static_cast<int64_t>(n) * C + hd * dh + c) * hw + t];

    NodePtr nx = x;
    return make(std::move(out), {x}, [nx, N, C, heads, dh, hw](Node& nd) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int hd = 0; hd < heads; ++hd)
                for (int64_t t = 0; t < hw; ++t)
                    for (int c = 0; c < dh; ++c)
                        nx->grad.data()[(static_cast<int64_t>(n) * C + hd * dh + c) * hw + t] +=
                            nd.grad.data()[((static_cast<int64_t>(n) * heads + hd) * hw + t) * dh + c];
    });
}

NodePtr Graph::tokens_to_nchw(NodePtr x, int n, int c, int h, int w, int heads) {
    const auto& xs = x->value.shape();
    require(xs.size() == 3, "tokens_to_nchw: expects (N*heads, HW, C/heads)");
    const int dh = c / heads;
    const int64_t hw = static_cast<int64_t>(h) * w;
    require(xs[0] == n * heads && xs[1] == hw && xs[2] == dh,
            "tokens_to_nchw: shape mismatch");

    Tensor out({n, c, h, w});
    for (int b = 0; b < n; ++b)
        for (int hd = 0; hd < heads; ++hd)
            for (int64_t t = 0; t < hw; ++t)
                for (int cc = 0; cc < dh; ++cc)
                    out.data()[(static_cast<int64_t>(b) * c + hd * dh + cc) * hw + t] =
                        x->value.data()[((static_cast<int64_t>(b) * heads + hd) * hw + t) * dh + cc];

    NodePtr nx = x;
    return make(std::move(out), {x}, [nx, n, c, heads, dh, hw](Node& nd) {
        if (!nx->requires_grad) return;
        nx->ensure_grad();
        for (int b = 0; b < n; ++b)
            for (int hd = 0; hd < heads; ++hd)
                for (int64_t t = 0; t < hw; ++t)
                    for (int cc = 0; cc < dh; ++cc)
                        nx->grad.data()[((static_cast<int64_t>(b) * heads + hd) * hw + t) * dh + cc] +=
                            nd.grad.data()[(static_cast<int64_t>(b) * c + hd * dh + cc) * hw + t];
    });
}

struct OpBuilder {
    static NodePtr scalar_loss(Graph& g, NodePtr pred, float value, std::vector<float> grad) {
        auto gp = std::make_shared<std::vector<float>>(std::move(grad));
        NodePtr np = pred;
        return g.make(Tensor::scalar(value), {pred}, [np, gp](Node& n) {
            if (!np->requires_grad) return;
            np->ensure_grad();
            const float g0 = n.grad[0];
            float* dx = np->grad.data();
            for (size_t i = 0; i < gp->size(); ++i) dx[i] += g0 * (*gp)[i];
        });
    }
    static NodePtr scalar_loss_2(Graph& g, NodePtr a, NodePtr b, float value,
                                 std::vector<float> ga, std::vector<float> gb) {
        auto gap = std::make_shared<std::vector<float>>(std::move(ga));
        auto gbp = std::make_shared<std::vector<float>>(std::move(gb));
        NodePtr na = a, nb = b;
        return g.make(Tensor::scalar(value), {a, b}, [na, nb, gap, gbp](Node& n) {
            const float g0 = n.grad[0];
            if (na->requires_grad) {
                na->ensure_grad();
                float* dx = na->grad.data();
                for (size_t i = 0; i < gap->size(); ++i) dx[i] += g0 * (*gap)[i];
            }
            if (nb->requires_grad) {
                nb->ensure_grad();
                float* dx = nb->grad.data();
                for (size_t i = 0; i < gbp->size(); ++i) dx[i] += g0 * (*gbp)[i];
            }
        });
    }
};

NodePtr Graph::dice_loss(NodePtr pred, const Tensor& gt) {
    require(pred->value.same_shape(gt), "dice_loss: shape mismatch");
    auto vg = losses::dice_vg<float>(pred->value.span(), gt.span());
    return OpBuilder::scalar_loss(*this, pred, vg.value, std::move(vg.grad));
}

NodePtr Graph::bce_loss(NodePtr pred, const Tensor& gt, losses::Reduction red) {
    require(pred->value.same_shape(gt), "bce_loss: shape mismatch");
    auto vg = losses::bce_vg<float>(pred->value.span(), gt.span(), red);
    return OpBuilder::scalar_loss(*this, pred, vg.value, std::move(vg.grad));
}

NodePtr Graph::weighted_bce_loss(NodePtr pred, const Tensor& gt, const Tensor& pixel_weights,
                                 losses::Reduction red) {
    require(pred->value.same_shape(gt), "weighted_bce_loss: shape mismatch");
    require(pred->value.numel() == pixel_weights.numel(), "weighted_bce_loss: weight mismatch");
    auto vg = losses::weighted_bce_vg<float>(pred->value.span(), gt.span(),
                                             pixel_weights.span(), red);
    return OpBuilder::scalar_loss(*this, pred, vg.value, std::move(vg.grad));
}

NodePtr Graph::soft_dice_pair(NodePtr a, NodePtr b) {
    require(a->value.same_shape(b->value), "soft_dice_pair: shape mismatch");
    auto vg = losses::soft_dice_pair_vg<float>(a->value.span(), b->value.span());
    return OpBuilder::scalar_loss_2(*this, a, b, vg.value, std::move(vg.grad_a),
                                    std::move(vg.grad_b));
}

NodePtr Graph::mse_mean(NodePtr a, NodePtr b) {
    require(a->value.same_shape(b->value), "mse_mean: shape mismatch");
    auto vg = losses::mse_mean_vg<float>(a->value.span(), b->value.span());
    return OpBuilder::scalar_loss_2(*this, a, b, vg.value, std::move(vg.grad_a),
                                    std::move(vg.grad_b));
}

NodePtr Graph::weighted_sum(const std::vector<NodePtr>& scalars,
                            const std::vector<float>& weights) {
    require(!scalars.empty() && scalars.size() == weights.size(),
            "weighted_sum: size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < scalars.size(); ++i) {
        require(scalars[i]->value.numel() == 1, "weighted_sum: non-scalar term");
        acc += static_cast<double>(weights[i]) * scalars[i]->value[0];
    }
    std::vector<NodePtr> ins = scalars;
    std::vector<float> ws = weights;
    return make(Tensor::scalar(static_cast<float>(acc)), ins, [ins, ws](Node& n) {
        const float g0 = n.grad[0];
        for (size_t i = 0; i < ins.size(); ++i) {
            if (!ins[i]->requires_grad) continue;
            ins[i]->ensure_grad();
            ins[i]->grad[0] += g0 * ws[i];
        }
    });
}

} // namespace cots::nn
