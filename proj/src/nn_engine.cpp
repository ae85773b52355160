#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "mg/nn.hpp"
#include "mg/rng.hpp"

namespace mg::nn {

namespace {

using idx = std::ptrdiff_t;

// Index range [lo, hi] of i with 0 <= i*s + off < limit, clipped to [0, n).
std::pair<idx, idx> valid_range(idx n, idx s, idx off, idx limit) {
    idx lo = off >= 0 ? 0 : (-off + s - 1) / s;
    idx hi = limit - 1 - off < 0 ? -1 : (limit - 1 - off) / s;
    return {std::max<idx>(lo, 0), std::min<idx>(hi, n - 1)};
}

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
MatD to_mat(const T* p, std::size_t rows, std::size_t cols) {
    MatD m(rows, cols);
    double* d = m.data();
    for (std::size_t i = 0; i < rows * cols; ++i) d[i] = double(p[i]);
    return m;
}

void add_to(double* g, const MatD& m) {
    const double* d = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) g[i] += d[i];
}

// ---- Dense: y[n, o] = sum_i x[n, i] W[i, o] + b[o] ----

template <class T>
void dense_forward(const T* x, std::size_t B, std::size_t in, std::size_t out, const float* W, const float* bias,
                   T* y) {
    const MatD Y = to_mat(x, B, in) * to_mat(W, in, out);
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < out; ++o) y[n * out + o] = static_cast<T>(Y(n, o) + (bias ? double(bias[o]) : 0.0));
}

template <class T>
void dense_backward(const T* x, const T* dy, std::size_t B, std::size_t in, std::size_t out, const float* W,
                    double* dW, double* db, T* dx) {
    const MatD X = to_mat(x, B, in), G = to_mat(dy, B, out);
    const MatD gW = X.transpose() * G;
    add_to(dW, gW);
    if (db)
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t o = 0; o < out; ++o) db[o] += G(n, o);
    const MatD gX = G * to_mat(W, in, out).transpose();
    for (std::size_t i = 0; i < B * in; ++i) dx[i] = static_cast<T>(gX.data()[i]);
}

struct ConvGeom {
    std::size_t B, Cin, H, W, Cout, Ho, Wo, k, s, p;
};

// Image-side patch matrix of a convolution: row (c, ky, kx), column
// (b, oy, ox) holds img[b, c, oy*s + ky - p, ox*s + kx - p] or 0. The
// "small" side has Hs x Ws pixels per column block, the "large" side
// Hl x Wl pixels per image.
template <class T>
MatD gather_patches(const T* img, std::size_t B, std::size_t C, std::size_t Hl, std::size_t Wl, std::size_t Hs,
                    std::size_t Ws, std::size_t k, std::size_t s, std::size_t p) {
    MatD cols = MatD::Zero(C * k * k, B * Hs * Ws);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                double* row = cols.data() + ((c * k + ky) * k + kx) * B * Hs * Ws;
                const auto [y0, y1] = valid_range(idx(Hs), idx(s), idx(ky) - idx(p), idx(Hl));
                const auto [x0, x1] = valid_range(idx(Ws), idx(s), idx(kx) - idx(p), idx(Wl));
                for (std::size_t b = 0; b < B; ++b) {
                    const T* src = img + (b * C + c) * Hl * Wl;
                    for (idx oy = y0; oy <= y1; ++oy) {
                        const T* sr = src + (oy * idx(s) + idx(ky) - idx(p)) * idx(Wl) + idx(kx) - idx(p);
                        double* dr = row + (idx(b * Hs) + oy) * idx(Ws);
                        for (idx ox = x0; ox <= x1; ++ox) dr[ox] = double(sr[ox * idx(s)]);
                    }
                }
            }
    return cols;
}

// Adjoint of gather_patches: scatter-add the patch matrix into a [B, C, Hl, Wl] buffer.
void scatter_patches(const MatD& cols, std::size_t B, std::size_t C, std::size_t Hl, std::size_t Wl, std::size_t Hs,
                     std::size_t Ws, std::size_t k, std::size_t s, std::size_t p, double* img) {
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double* row = cols.data() + ((c * k + ky) * k + kx) * B * Hs * Ws;
                const auto [y0, y1] = valid_range(idx(Hs), idx(s), idx(ky) - idx(p), idx(Hl));
                const auto [x0, x1] = valid_range(idx(Ws), idx(s), idx(kx) - idx(p), idx(Wl));
                for (std::size_t b = 0; b < B; ++b) {
                    double* dst = img + (b * C + c) * Hl * Wl;
                    for (idx oy = y0; oy <= y1; ++oy) {
                        double* dr = dst + (oy * idx(s) + idx(ky) - idx(p)) * idx(Wl) + idx(kx) - idx(p);
                        const double* sr = row + (idx(b * Hs) + oy) * idx(Ws);
                        for (idx ox = x0; ox <= x1; ++ox) dr[ox * idx(s)] += sr[ox];
                    }
                }
            }
}

// [B, C, S] <-> [C, B*S]
template <class T>
MatD channels_major(const T* x, std::size_t B, std::size_t C, std::size_t S) {
    MatD m(C, B * S);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const T* src = x + (b * C + c) * S;
            double* dst = m.data() + c * B * S + b * S;
            for (std::size_t i = 0; i < S; ++i) dst[i] = double(src[i]);
        }
    return m;
}

template <class T>
void batch_major(const MatD& m, std::size_t B, std::size_t C, std::size_t S, const float* bias, T* y) {
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double* src = m.data() + c * B * S + b * S;
            const double bc = bias ? double(bias[c]) : 0.0;
            T* dst = y + (b * C + c) * S;
            for (std::size_t i = 0; i < S; ++i) dst[i] = static_cast<T>(src[i] + bc);
        }
}

void bias_grad(const MatD& g, double* db) {
    if (!db) return;
    for (Eigen::Index c = 0; c < g.rows(); ++c) db[c] += g.row(c).sum();
}

// ---- Conv2D: weight [Cout, Cin, k, k] ----

template <class T>
void conv2d_forward(const T* x, const ConvGeom& g, const float* w, const float* bias, T* y) {
    const MatD cols = gather_patches(x, g.B, g.Cin, g.H, g.W, g.Ho, g.Wo, g.k, g.s, g.p);
    const MatD Y = to_mat(w, g.Cout, g.Cin * g.k * g.k) * cols;
    batch_major(Y, g.B, g.Cout, g.Ho * g.Wo, bias, y);
}

template <class T>
void conv2d_backward(const T* x, const T* dy, const ConvGeom& g, const float* w, double* dW, double* db, T* dx) {
    const MatD cols = gather_patches(x, g.B, g.Cin, g.H, g.W, g.Ho, g.Wo, g.k, g.s, g.p);
    const MatD G = channels_major(dy, g.B, g.Cout, g.Ho * g.Wo);
    bias_grad(G, db);
    const MatD gW = G * cols.transpose();
    add_to(dW, gW);
    const MatD dcols = to_mat(w, g.Cout, g.Cin * g.k * g.k).transpose() * G;
    std::vector<double> acc(g.B * g.Cin * g.H * g.W, 0.0);
    scatter_patches(dcols, g.B, g.Cin, g.H, g.W, g.Ho, g.Wo, g.k, g.s, g.p, acc.data());
    for (std::size_t i = 0; i < acc.size(); ++i) dx[i] = static_cast<T>(acc[i]);
}

// ---- ConvTranspose2D: weight [Cin, Cout, k, k]; out = (in-1)s - 2p + k + op ----
// The adjoint of Conv2D with the roles of the small (input) and large
// (output) sides swapped.

template <class T>
void convT_forward(const T* x, const ConvGeom& g, const float* w, const float* bias, T* y) {
    const MatD X = channels_major(x, g.B, g.Cin, g.H * g.W);
    const MatD cols = to_mat(w, g.Cin, g.Cout * g.k * g.k).transpose() * X;
    std::vector<double> acc(g.B * g.Cout * g.Ho * g.Wo, 0.0);
    scatter_patches(cols, g.B, g.Cout, g.Ho, g.Wo, g.H, g.W, g.k, g.s, g.p, acc.data());
    const std::size_t S = g.Ho * g.Wo;
    for (std::size_t b = 0; b < g.B; ++b)
        for (std::size_t c = 0; c < g.Cout; ++c) {
            const std::size_t off = (b * g.Cout + c) * S;
            for (std::size_t i = 0; i < S; ++i) y[off + i] = static_cast<T>(acc[off + i] + (bias ? double(bias[c]) : 0.0));
        }
}

template <class T>
void convT_backward(const T* x, const T* dy, const ConvGeom& g, const float* w, double* dW, double* db, T* dx) {
    const MatD dcols = gather_patches(dy, g.B, g.Cout, g.Ho, g.Wo, g.H, g.W, g.k, g.s, g.p);
    const std::size_t S = g.Ho * g.Wo;
    for (std::size_t b = 0; db && b < g.B; ++b)
        for (std::size_t c = 0; c < g.Cout; ++c) {
            double sum = 0;
            for (std::size_t i = 0; i < S; ++i) sum += dy[(b * g.Cout + c) * S + i];
            db[c] += sum;
        }
    const MatD X = channels_major(x, g.B, g.Cin, g.H * g.W);
    const MatD gW = X * dcols.transpose();
    add_to(dW, gW);
    const MatD gX = to_mat(w, g.Cin, g.Cout * g.k * g.k) * dcols;
    batch_major(gX, g.B, g.Cin, g.H * g.W, static_cast<const float*>(nullptr), dx);
}

ConvGeom geom(const LayerSpec& l, const Shape& in, const Shape& out, std::size_t B) {
    return {B, in[0], in[1], in[2], out[0], out[1], out[2], l.kernel, l.stride, l.padding};
}

// ---- BatchNorm over [B, C, S] with S = spatial size (1 for dense inputs) ----

template <class T>
void bn_train_forward(const T* x, std::size_t B, std::size_t C, std::size_t S, const float* gamma,
                      const float* beta, double eps, T* y, std::vector<double>& inv_std, std::vector<double>& mean,
                      std::vector<double>& var) {
    const double N = double(B * S);
    inv_std.assign(C, 0);
    mean.assign(C, 0);
    var.assign(C, 0);
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < S; ++i) s += x[(n * C + c) * S + i];
        const double mu = s / N;
        double v = 0;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < S; ++i) {
                const double d = x[(n * C + c) * S + i] - mu;
                v += d * d;
            }
        v /= N;
        mean[c] = mu;
        var[c] = v;
        inv_std[c] = 1.0 / std::sqrt(v + eps);
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < S; ++i) {
                const std::size_t at = (n * C + c) * S + i;
                y[at] = static_cast<T>(double(gamma[c]) * (x[at] - mu) * inv_std[c] + double(beta[c]));
            }
    }
}

template <class T>
void bn_eval_forward(const T* x, std::size_t B, std::size_t C, std::size_t S, const float* gamma, const float* beta,
                     const float* rmean, const float* rvar, double eps, T* y) {
    for (std::size_t c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt(double(rvar[c]) + eps);
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < S; ++i) {
                const std::size_t at = (n * C + c) * S + i;
                y[at] = static_cast<T>(double(gamma[c]) * (x[at] - double(rmean[c])) * inv + double(beta[c]));
            }
    }
}

template <class T>
void bn_backward(const T* x, const T* dy, std::size_t B, std::size_t C, std::size_t S, const float* gamma,
                 const std::vector<double>& inv_std, double* dgamma, double* dbeta, T* dx) {
    const double N = double(B * S);
    for (std::size_t c = 0; c < C; ++c) {
        double mu = 0;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < S; ++i) mu += x[(n * C + c) * S + i];
        mu /= N;
        double sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < S; ++i) {
                const std::size_t at = (n * C + c) * S + i;
                const double xhat = (x[at] - mu) * inv_std[c];
                sum_dy += dy[at];
                sum_dy_xhat += double(dy[at]) * xhat;
            }
        dgamma[c] += sum_dy_xhat;
        dbeta[c] += sum_dy;
        const double g = gamma[c];
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < S; ++i) {
                const std::size_t at = (n * C + c) * S + i;
                const double xhat = (x[at] - mu) * inv_std[c];
                dx[at] = static_cast<T>(g * inv_std[c] / N * (N * double(dy[at]) - sum_dy - xhat * sum_dy_xhat));
            }
    }
}

}  // namespace

template <class T>
ForwardResult<T> forward(const NetworkSpec& net, const Parameters& params, const BasicTensor<T>& x, Mode mode,
                         std::uint64_t rng_seed) {
    const Shape& in_shape = net.input_shape();
    if (x.rank() != in_shape.size() + 1 || !std::equal(in_shape.begin(), in_shape.end(), x.shape().begin() + 1))
        throw ShapeError("forward: input " + shape_str(x.shape()) + " does not match network input [B," +
                         shape_str(in_shape).substr(1));
    const std::size_t B = x.dim(0);
    const std::size_t L = net.layers().size();
    ForwardResult<T> r;
    r.running = params.running;
    r.tape.mode = mode;
    const bool train = mode == Mode::Train;
    if (train) {
        r.tape.inputs.reserve(L);
        r.tape.bn_inv_std.resize(L);
        r.tape.mask.resize(L);
        r.tape.argmax.resize(L);
    }

    BasicTensor<T> cur = x;
    for (std::size_t li = 0; li < L; ++li) {
        const LayerSpec& l = net.layers()[li];
        const Shape& is = net.shapes()[li];
        const Shape& os = net.shapes()[li + 1];
        Shape full{B};
        full.insert(full.end(), os.begin(), os.end());
        BasicTensor<T> out(full);
        switch (l.kind) {
            case LayerKind::Dense: {
                const auto* w = params.block(li, "weight");
                const auto* b = params.block(li, "bias");
                dense_forward(cur.data(), B, l.in, l.out, params.flat.data() + w->offset,
                              (b ? params.flat.data() + b->offset : nullptr), out.data());
                break;
            }
            case LayerKind::Conv2D:
            case LayerKind::ConvTranspose2D: {
                const auto* w = params.block(li, "weight");
                const auto* b = params.block(li, "bias");
                const ConvGeom g = geom(l, is, os, B);
                if (l.kind == LayerKind::Conv2D)
                    conv2d_forward(cur.data(), g, params.flat.data() + w->offset, (b ? params.flat.data() + b->offset : nullptr),
                                   out.data());
                else
                    convT_forward(cur.data(), g, params.flat.data() + w->offset, (b ? params.flat.data() + b->offset : nullptr),
                                  out.data());
                break;
            }
            case LayerKind::MaxPool2x2: {
                const std::size_t C = is[0], H = is[1], W = is[2], Ho = os[1], Wo = os[2];
                std::vector<std::uint32_t> arg(B * C * Ho * Wo);
                for (std::size_t p = 0; p < B * C; ++p) {
                    const T* src = cur.data() + p * H * W;
                    for (std::size_t oy = 0; oy < Ho; ++oy)
                        for (std::size_t ox = 0; ox < Wo; ++ox) {
                            std::size_t best = (2 * oy) * W + 2 * ox;
                            for (std::size_t dy = 0; dy < 2; ++dy)
                                for (std::size_t dx = 0; dx < 2; ++dx) {
                                    const std::size_t at = (2 * oy + dy) * W + 2 * ox + dx;
                                    if (src[at] > src[best]) best = at;
                                }
                            out[p * Ho * Wo + oy * Wo + ox] = src[best];
                            arg[p * Ho * Wo + oy * Wo + ox] = static_cast<std::uint32_t>(best);
                        }
                }
                if (train) r.tape.argmax[li] = std::move(arg);
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t C = l.in, S = shape_numel(is) / C;
                const auto* gm = params.block(li, "gamma");
                const auto* bt = params.block(li, "beta");
                auto it = std::find_if(r.running.begin(), r.running.end(),
                                       [&](const RunningStats& s) { return s.layer == li; });
                if (it == r.running.end()) throw ShapeError("forward: missing running stats for layer " + std::to_string(li));
                if (train) {
                    if (B < 2) throw ParameterError("BatchNorm (layer " + std::to_string(li) + ") needs batch >= 2 in train mode");
                    std::vector<double> inv, mean, var;
                    bn_train_forward(cur.data(), B, C, S, params.flat.data() + gm->offset,
                                     params.flat.data() + bt->offset, l.eps, out.data(), inv, mean, var);
                    const double N = double(B * S);
                    for (std::size_t c = 0; c < C; ++c) {
                        const double unbiased = var[c] * N / (N - 1);
                        it->mean[c] = static_cast<float>((1 - l.momentum) * it->mean[c] + l.momentum * mean[c]);
                        it->var[c] = static_cast<float>((1 - l.momentum) * it->var[c] + l.momentum * unbiased);
                    }
                    r.tape.bn_inv_std[li] = std::move(inv);
                } else {
                    bn_eval_forward(cur.data(), B, C, S, params.flat.data() + gm->offset,
                                    params.flat.data() + bt->offset, it->mean.data(), it->var.data(), l.eps,
                                    out.data());
                }
                break;
            }
            case LayerKind::ReLU:
                for (std::size_t i = 0; i < cur.size(); ++i) out[i] = cur[i] > 0 ? cur[i] : T(0);
                break;
            case LayerKind::LeakyReLU:
                for (std::size_t i = 0; i < cur.size(); ++i)
                    out[i] = cur[i] > 0 ? cur[i] : static_cast<T>(l.slope * double(cur[i]));
                break;
            case LayerKind::Tanh:
                for (std::size_t i = 0; i < cur.size(); ++i) out[i] = static_cast<T>(std::tanh(double(cur[i])));
                break;
            case LayerKind::Dropout: {
                if (!train || l.p == 0) {
                    out = cur.reshaped(full);
                    break;
                }
                Rng rng(derive_seed(rng_seed, li));
                std::bernoulli_distribution keep(1.0 - l.p);
                const T scale = static_cast<T>(1.0 / (1.0 - l.p));
                std::vector<T> mask(cur.size());
                for (std::size_t i = 0; i < cur.size(); ++i) {
                    mask[i] = keep(rng) ? scale : T(0);
                    out[i] = cur[i] * mask[i];
                }
                r.tape.mask[li] = std::move(mask);
                break;
            }
            case LayerKind::Reshape:
                out = cur.reshaped(full);
                break;
        }
        if (train) r.tape.inputs.push_back(std::move(cur));
        cur = std::move(out);
    }
    r.y = std::move(cur);
    return r;
}

template <class T>
BackwardResult<T> backward(const NetworkSpec& net, const Parameters& params, const Tape<T>& tape,
                           const BasicTensor<T>& dy) {
    const std::size_t L = net.layers().size();
    if (tape.mode != Mode::Train || tape.inputs.size() != L)
        throw ShapeError("backward: tape does not come from a train-mode forward of this network");
    const std::size_t B = L ? tape.inputs[0].dim(0) : dy.dim(0);
    Shape yfull{B};
    yfull.insert(yfull.end(), net.output_shape().begin(), net.output_shape().end());
    if (dy.shape() != yfull) throw ShapeError("backward: dy " + shape_str(dy.shape()) + " expected " + shape_str(yfull));

    std::vector<double> grad(params.size(), 0.0);
    BasicTensor<T> g = dy;
    for (std::size_t li = L; li-- > 0;) {
        const LayerSpec& l = net.layers()[li];
        const BasicTensor<T>& x = tape.inputs[li];
        const Shape& is = net.shapes()[li];
        const Shape& os = net.shapes()[li + 1];
        BasicTensor<T> dx(x.shape());
        switch (l.kind) {
            case LayerKind::Dense: {
                const auto* w = params.block(li, "weight");
                const auto* b = params.block(li, "bias");
                dense_backward(x.data(), g.data(), B, l.in, l.out, params.flat.data() + w->offset,
                               grad.data() + w->offset, (b ? grad.data() + b->offset : nullptr), dx.data());
                break;
            }
            case LayerKind::Conv2D:
            case LayerKind::ConvTranspose2D: {
                const auto* w = params.block(li, "weight");
                const auto* b = params.block(li, "bias");
                const ConvGeom gm = geom(l, is, os, B);
                if (l.kind == LayerKind::Conv2D)
                    conv2d_backward(x.data(), g.data(), gm, params.flat.data() + w->offset, grad.data() + w->offset,
                                    (b ? grad.data() + b->offset : nullptr), dx.data());
                else
                    convT_backward(x.data(), g.data(), gm, params.flat.data() + w->offset, grad.data() + w->offset,
                                   (b ? grad.data() + b->offset : nullptr), dx.data());
                break;
            }
            case LayerKind::MaxPool2x2: {
                const std::size_t H = is[1], W = is[2], Ho = os[1], Wo = os[2];
                const auto& arg = tape.argmax[li];
                for (std::size_t p = 0; p < B * is[0]; ++p)
                    for (std::size_t o = 0; o < Ho * Wo; ++o) dx[p * H * W + arg[p * Ho * Wo + o]] += g[p * Ho * Wo + o];
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t C = l.in, S = shape_numel(is) / C;
                const auto* gm = params.block(li, "gamma");
                const auto* bt = params.block(li, "beta");
                bn_backward(x.data(), g.data(), B, C, S, params.flat.data() + gm->offset, tape.bn_inv_std[li],
                            grad.data() + gm->offset, grad.data() + bt->offset, dx.data());
                break;
            }
            case LayerKind::ReLU:
                for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0 ? g[i] : T(0);
                break;
            case LayerKind::LeakyReLU:
                for (std::size_t i = 0; i < x.size(); ++i)
                    dx[i] = x[i] > 0 ? g[i] : static_cast<T>(l.slope * double(g[i]));
                break;
            case LayerKind::Tanh:
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const double t = std::tanh(double(x[i]));
                    dx[i] = static_cast<T>(double(g[i]) * (1 - t * t));
                }
                break;
            case LayerKind::Dropout:
                if (tape.mask[li].empty()) {
                    dx = g.reshaped(x.shape());
                } else {
                    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = g[i] * tape.mask[li][i];
                }
                break;
            case LayerKind::Reshape:
                dx = g.reshaped(x.shape());
                break;
        }
        g = std::move(dx);
    }
    BackwardResult<T> r;
    r.dparams = Tensor({params.size()});
    for (std::size_t i = 0; i < grad.size(); ++i) r.dparams[i] = static_cast<float>(grad[i]);
    r.dx = std::move(g);
    return r;
}

template ForwardResult<float> forward(const NetworkSpec&, const Parameters&, const BasicTensor<float>&, Mode,
                                      std::uint64_t);
template ForwardResult<double> forward(const NetworkSpec&, const Parameters&, const BasicTensor<double>&, Mode,
                                       std::uint64_t);
template BackwardResult<float> backward(const NetworkSpec&, const Parameters&, const Tape<float>&,
                                        const BasicTensor<float>&);
template BackwardResult<double> backward(const NetworkSpec&, const Parameters&, const Tape<double>&,
                                         const BasicTensor<double>&);

Tensor predict(const NetworkSpec& net, const Parameters& params, const Tensor& x) {
    return forward<float>(net, params, x, Mode::Eval).y;
}

Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight, std::span<const float> bias,
                                std::size_t stride, std::size_t padding, std::size_t output_padding) {
    if (x.rank() != 4 || weight.rank() != 4 || weight.dim(0) != x.dim(1) || weight.dim(2) != weight.dim(3))
        throw ShapeError("conv_transpose2d_forward: expected x [B,Cin,H,W] and weight [Cin,Cout,k,k]");
    if (stride == 0 || output_padding >= stride) throw ShapeError("conv_transpose2d_forward: invalid stride/output_padding");
    const std::size_t k = weight.dim(2), Cout = weight.dim(1);
    const std::size_t Ho = conv_transpose_out_size(x.dim(2), k, stride, padding, output_padding);
    const std::size_t Wo = conv_transpose_out_size(x.dim(3), k, stride, padding, output_padding);
    if (Ho == 0 || Wo == 0) throw ShapeError("conv_transpose2d_forward: invalid output size");
    std::vector<float> b(bias.begin(), bias.end());
    if (b.empty()) b.assign(Cout, 0.0f);
    if (b.size() != Cout) throw ShapeError("conv_transpose2d_forward: bias length mismatch");
    const ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), Cout, Ho, Wo, k, stride, padding};
    Tensor y({x.dim(0), Cout, Ho, Wo});
    convT_forward(x.data(), g, weight.data(), b.data(), y.data());
    return y;
}

BatchNormResult batchnorm_forward(const Tensor& x, std::span<const float> gamma, std::span<const float> beta,
                                  Mode mode, std::span<const float> running_mean,
                                  std::span<const float> running_var, double momentum, double eps) {
    if (x.rank() != 2 && x.rank() != 4) throw ShapeError("batchnorm_forward: expected [B,C] or [B,C,H,W]");
    const std::size_t B = x.dim(0), C = x.dim(1), S = x.size() / std::max<std::size_t>(1, B * C);
    BatchNormResult r{Tensor(x.shape()), {running_mean.begin(), running_mean.end()},
                      {running_var.begin(), running_var.end()}};
    if (mode == Mode::Train) {
        if (B < 2) throw ParameterError("batchnorm_forward: batch of 1 in train mode");
        std::vector<double> inv, mean, var;
        bn_train_forward(x.data(), B, C, S, gamma.data(), beta.data(), eps, r.y.data(), inv, mean, var);
        const double N = double(B * S);
        for (std::size_t c = 0; c < C; ++c) {
            r.running_mean[c] = static_cast<float>((1 - momentum) * r.running_mean[c] + momentum * mean[c]);
            r.running_var[c] = static_cast<float>((1 - momentum) * r.running_var[c] + momentum * var[c] * N / (N - 1));
        }
    } else {
        bn_eval_forward(x.data(), B, C, S, gamma.data(), beta.data(), running_mean.data(), running_var.data(), eps,
                        r.y.data());
    }
    return r;
}

}  // namespace mg::nn
