#include "rffi/layers.hpp"

#include <cmath>
#include <cstring>

#include "rffi/gemm.hpp"

namespace rffi::nn {

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void Layer::forward_batch(const std::vector<const Tensor*>& xs,
                          std::span<const double> params, std::vector<Ctx>& ctxs,
                          std::vector<Tensor>& outs) const {
    ctxs.resize(xs.size());
    outs.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        outs[i] = forward(*xs[i], params, ctxs[i]);
}

void Layer::backward_batch(const std::vector<Tensor>& dys,
                           std::span<const double> params,
                           const std::vector<Ctx>& ctxs, std::span<double> dparams,
                           std::vector<Tensor>& dxs) const {
    dxs.resize(dys.size());
    for (std::size_t i = 0; i < dys.size(); ++i)
        dxs[i] = backward(dys[i], params, ctxs[i], dparams);
}

namespace {

constexpr std::size_t kMaxChannels = 64;  // widest conv in the model family

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / double(fan_in + fan_out));
}

void glorot_fill(std::span<double> w, std::size_t fan_in, std::size_t fan_out,
                 Rng& rng) {
    const double lim = glorot_limit(fan_in, fan_out);
    for (auto& v : w) v = rng.uniform(-lim, lim);
}

class Conv2D final : public Layer {
  public:
    Conv2D(std::vector<std::size_t> in_shape, std::size_t co, std::size_t kh,
           std::size_t kw)
        : h_(in_shape.at(0)), w_(in_shape.at(1)), ci_(in_shape.at(2)), co_(co),
          kh_(kh), kw_(kw) {
        require(kh_ % 2 == 1 && kw_ % 2 == 1, ErrorKind::InvalidParams,
                "conv kernel sides must be odd for same padding");
        require(co_ <= kMaxChannels, ErrorKind::InvalidParams,
                "conv out_channels above kMaxChannels");
    }

    std::size_t param_count() const override { return kh_ * kw_ * ci_ * co_ + co_; }

    void init(std::span<double> params, Rng& rng) const override {
        glorot_fill(params.subspan(0, kh_ * kw_ * ci_ * co_), kh_ * kw_ * ci_,
                    kh_ * kw_ * co_, rng);
        for (std::size_t i = kh_ * kw_ * ci_ * co_; i < params.size(); ++i)
            params[i] = 0.0;
    }

    Tensor forward(const Tensor& x, std::span<const double> params,
                   Ctx& ctx) const override {
        ctx.saved.assign(1, x);
        const double* __restrict__ k = params.data();
        const double* __restrict__ b = params.data() + kh_ * kw_ * ci_ * co_;
        Tensor out({h_, w_, co_});
        const std::size_t ph = kh_ / 2, pw = kw_ / 2;
        // 16-wide output-channel tiles keep the accumulators in registers
        // across the whole receptive field
        constexpr std::size_t kTile = 16;
        double acc[kTile];
        for (std::size_t h = 0; h < h_; ++h) {
            for (std::size_t w = 0; w < w_; ++w) {
                double* __restrict__ o = out.data.data() + (h * w_ + w) * co_;
                for (std::size_t c0 = 0; c0 < co_; c0 += kTile) {
                    const std::size_t tw = std::min(kTile, co_ - c0);
                    if (tw == kTile) {
                        for (std::size_t u = 0; u < kTile; ++u) acc[u] = b[c0 + u];
                    } else {
                        for (std::size_t u = 0; u < tw; ++u) acc[u] = b[c0 + u];
                    }
                    for (std::size_t r = 0; r < kh_; ++r) {
                        const std::size_t ih = h + r;
                        if (ih < ph || ih - ph >= h_) continue;
                        for (std::size_t s = 0; s < kw_; ++s) {
                            const std::size_t iw = w + s;
                            if (iw < pw || iw - pw >= w_) continue;
                            const double* __restrict__ xin =
                                x.data.data() + ((ih - ph) * w_ + (iw - pw)) * ci_;
                            const double* __restrict__ kk =
                                k + (r * kw_ + s) * ci_ * co_ + c0;
                            if (tw == kTile) {
                                for (std::size_t c = 0; c < ci_; ++c) {
                                    const double v = xin[c];
                                    const double* __restrict__ krow = kk + c * co_;
                                    for (std::size_t u = 0; u < kTile; ++u)
                                        acc[u] += v * krow[u];
                                }
                            } else {
                                for (std::size_t c = 0; c < ci_; ++c) {
                                    const double v = xin[c];
                                    const double* __restrict__ krow = kk + c * co_;
                                    for (std::size_t u = 0; u < tw; ++u)
                                        acc[u] += v * krow[u];
                                }
                            }
                        }
                    }
                    for (std::size_t u = 0; u < tw; ++u) o[c0 + u] = acc[u];
                }
            }
        }
        return out;
    }

    Tensor backward(const Tensor& dy, std::span<const double> params,
                    const Ctx& ctx, std::span<double> dparams) const override {
        const Tensor& x = ctx.saved[0];
        const bool want_p = !dparams.empty();
        const double* __restrict__ k = params.data();
        Tensor dx({h_, w_, ci_});
        const std::size_t ph = kh_ / 2, pw = kw_ / 2;

        // For output pixel (h, w) and tap (r, s) the input pixel is
        // (h + r - ph, w + s - pw); the valid output range for a tap is
        // h in [h_lo, h_hi) with h_lo = max(0, ph - r).
        auto tap_bounds = [](std::size_t extent, std::size_t pad, std::size_t tap,
                             std::size_t& lo, std::size_t& hi) {
            lo = pad > tap ? pad - tap : 0;
            hi = std::min(extent, extent + pad - tap);
        };

        // input gradient: dx[ih][iw][c] += sum_co dy[h][w][co] k[r][s][c][co]
        for (std::size_t r = 0; r < kh_; ++r) {
            std::size_t h_lo, h_hi;
            tap_bounds(h_, ph, r, h_lo, h_hi);
            for (std::size_t s = 0; s < kw_; ++s) {
                std::size_t w_lo, w_hi;
                tap_bounds(w_, pw, s, w_lo, w_hi);
                const double* __restrict__ kk = k + (r * kw_ + s) * ci_ * co_;
                for (std::size_t h = h_lo; h < h_hi; ++h) {
                    const std::size_t ih = h + r - ph;
                    for (std::size_t w = w_lo; w < w_hi; ++w) {
                        const double* __restrict__ g =
                            dy.data.data() + (h * w_ + w) * co_;
                        double* __restrict__ dxin =
                            dx.data.data() + (ih * w_ + (w + s - pw)) * ci_;
                        for (std::size_t c = 0; c < ci_; ++c) {
                            const double* __restrict__ krow = kk + c * co_;
                            double acc = 0.0;
                            for (std::size_t u = 0; u < co_; ++u)
                                acc += g[u] * krow[u];
                            dxin[c] += acc;
                        }
                    }
                }
            }
        }
        if (!want_p) return dx;

        double* __restrict__ dk = dparams.data();
        double* __restrict__ db = dparams.data() + kh_ * kw_ * ci_ * co_;
        for (std::size_t i = 0; i < h_ * w_; ++i) {
            const double* __restrict__ g = dy.data.data() + i * co_;
            for (std::size_t u = 0; u < co_; ++u) db[u] += g[u];
        }

        // weight gradient: reduce over the image with register-tiled
        // accumulators per (tap, in-channel, out-tile)
        constexpr std::size_t kTile = 16;
        double acc[kTile];
        for (std::size_t r = 0; r < kh_; ++r) {
            std::size_t h_lo, h_hi;
            tap_bounds(h_, ph, r, h_lo, h_hi);
            for (std::size_t s = 0; s < kw_; ++s) {
                std::size_t w_lo, w_hi;
                tap_bounds(w_, pw, s, w_lo, w_hi);
                double* __restrict__ dkk = dk + (r * kw_ + s) * ci_ * co_;
                for (std::size_t c = 0; c < ci_; ++c) {
                    for (std::size_t c0 = 0; c0 < co_; c0 += kTile) {
                        const std::size_t tw = std::min(kTile, co_ - c0);
                        for (std::size_t u = 0; u < tw; ++u) acc[u] = 0.0;
                        for (std::size_t h = h_lo; h < h_hi; ++h) {
                            const std::size_t ih = h + r - ph;
                            const double* __restrict__ xrow =
                                x.data.data() + (ih * w_ + (w_lo + s - pw)) * ci_ + c;
                            const double* __restrict__ grow =
                                dy.data.data() + (h * w_ + w_lo) * co_ + c0;
                            if (tw == kTile) {
                                for (std::size_t w = w_lo; w < w_hi; ++w) {
                                    const double v = *xrow;
                                    for (std::size_t u = 0; u < kTile; ++u)
                                        acc[u] += v * grow[u];
                                    xrow += ci_;
                                    grow += co_;
                                }
                            } else {
                                for (std::size_t w = w_lo; w < w_hi; ++w) {
                                    const double v = *xrow;
                                    for (std::size_t u = 0; u < tw; ++u)
                                        acc[u] += v * grow[u];
                                    xrow += ci_;
                                    grow += co_;
                                }
                            }
                        }
                        double* __restrict__ dst = dkk + c * co_ + c0;
                        for (std::size_t u = 0; u < tw; ++u) dst[u] += acc[u];
                    }
                }
            }
        }
        return dx;
    }

    std::vector<std::size_t> output_shape() const override { return {h_, w_, co_}; }

    nlohmann::json describe() const override {
        return {{"kind", "conv2d"}, {"in", {h_, w_, ci_}}, {"out_channels", co_},
                {"kh", kh_}, {"kw", kw_}};
    }

  private:
    std::size_t h_, w_, ci_, co_, kh_, kw_;
};

class MaxPool2D final : public Layer {
  public:
    explicit MaxPool2D(std::vector<std::size_t> in_shape)
        : h_(in_shape.at(0)), w_(in_shape.at(1)), c_(in_shape.at(2)) {
        require(h_ % 2 == 0 && w_ % 2 == 0, ErrorKind::InvalidParams,
                "maxpool2d expects even spatial dims");
    }

    std::size_t param_count() const override { return 0; }
    void init(std::span<double>, Rng&) const override {}

    Tensor forward(const Tensor& x, std::span<const double>, Ctx& ctx) const override {
        Tensor out({h_ / 2, w_ / 2, c_});
        Tensor arg({h_ / 2, w_ / 2, c_});  // linear index of the winner
        for (std::size_t h = 0; h < h_ / 2; ++h) {
            for (std::size_t w = 0; w < w_ / 2; ++w) {
                for (std::size_t c = 0; c < c_; ++c) {
                    double best = -1e300;
                    std::size_t best_idx = 0;
                    for (std::size_t dh = 0; dh < 2; ++dh) {
                        for (std::size_t dw = 0; dw < 2; ++dw) {
                            const std::size_t idx =
                                ((2 * h + dh) * w_ + (2 * w + dw)) * c_ + c;
                            if (x.data[idx] > best) {  // strict: ties keep lowest
                                best = x.data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    const std::size_t o = (h * (w_ / 2) + w) * c_ + c;
                    out.data[o] = best;
                    arg.data[o] = double(best_idx);
                }
            }
        }
        ctx.saved.assign(1, std::move(arg));
        return out;
    }

    Tensor backward(const Tensor& dy, std::span<const double>, const Ctx& ctx,
                    std::span<double>) const override {
        const Tensor& arg = ctx.saved[0];
        Tensor dx({h_, w_, c_});
        for (std::size_t i = 0; i < dy.size(); ++i)
            dx.data[std::size_t(arg.data[i])] += dy.data[i];
        return dx;
    }

    std::vector<std::size_t> output_shape() const override {
        return {h_ / 2, w_ / 2, c_};
    }

    nlohmann::json describe() const override {
        return {{"kind", "maxpool2d"}, {"in", {h_, w_, c_}}};
    }

  private:
    std::size_t h_, w_, c_;
};

class ReLU final : public Layer {
  public:
    explicit ReLU(std::vector<std::size_t> in_shape) : shape_(std::move(in_shape)) {}

    std::size_t param_count() const override { return 0; }
    void init(std::span<double>, Rng&) const override {}

    Tensor forward(const Tensor& x, std::span<const double>, Ctx& ctx) const override {
        Tensor out = x;
        for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
        ctx.saved.assign(1, x);
        return out;
    }

    Tensor backward(const Tensor& dy, std::span<const double>, const Ctx& ctx,
                    std::span<double>) const override {
        const Tensor& x = ctx.saved[0];
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (x.data[i] <= 0.0) dx.data[i] = 0.0;
        return dx;
    }

    std::vector<std::size_t> output_shape() const override { return shape_; }
    nlohmann::json describe() const override { return {{"kind", "relu"}}; }

  private:
    std::vector<std::size_t> shape_;
};

class GlobalAvgPool final : public Layer {
  public:
    explicit GlobalAvgPool(std::vector<std::size_t> in_shape)
        : h_(in_shape.at(0)), w_(in_shape.at(1)), c_(in_shape.at(2)) {}

    std::size_t param_count() const override { return 0; }
    void init(std::span<double>, Rng&) const override {}

    Tensor forward(const Tensor& x, std::span<const double>, Ctx&) const override {
        Tensor out({c_});
        for (std::size_t i = 0; i < h_ * w_; ++i)
            for (std::size_t c = 0; c < c_; ++c) out.data[c] += x.data[i * c_ + c];
        const double inv = 1.0 / double(h_ * w_);
        for (auto& v : out.data) v *= inv;
        return out;
    }

    Tensor backward(const Tensor& dy, std::span<const double>, const Ctx&,
                    std::span<double>) const override {
        Tensor dx({h_, w_, c_});
        const double inv = 1.0 / double(h_ * w_);
        for (std::size_t i = 0; i < h_ * w_; ++i)
            for (std::size_t c = 0; c < c_; ++c) dx.data[i * c_ + c] = dy.data[c] * inv;
        return dx;
    }

    std::vector<std::size_t> output_shape() const override { return {c_}; }
    nlohmann::json describe() const override {
        return {{"kind", "global_avgpool"}, {"in", {h_, w_, c_}}};
    }

  private:
    std::size_t h_, w_, c_;
};

class Dense final : public Layer {
  public:
    Dense(std::size_t in_dim, std::size_t out_dim) : in_(in_dim), out_(out_dim) {}

    std::size_t param_count() const override { return in_ * out_ + out_; }

    void init(std::span<double> params, Rng& rng) const override {
        glorot_fill(params.subspan(0, in_ * out_), in_, out_, rng);
        for (std::size_t i = in_ * out_; i < params.size(); ++i) params[i] = 0.0;
    }

    Tensor forward(const Tensor& x, std::span<const double> params,
                   Ctx& ctx) const override {
        require(x.size() == in_, ErrorKind::InvalidParams, "dense input size mismatch");
        ctx.saved.assign(1, x);
        const double* w = params.data();
        const double* b = params.data() + in_ * out_;
        Tensor out({out_});
        double* __restrict__ ov = out.data.data();
        for (std::size_t u = 0; u < out_; ++u) ov[u] = b[u];
        for (std::size_t i = 0; i < in_; ++i) {
            const double v = x.data[i];
            const double* __restrict__ wr = w + i * out_;
            for (std::size_t u = 0; u < out_; ++u) ov[u] += v * wr[u];
        }
        return out;
    }

    Tensor backward(const Tensor& dy, std::span<const double> params,
                    const Ctx& ctx, std::span<double> dparams) const override {
        const Tensor& x = ctx.saved[0];
        const bool want_p = !dparams.empty();
        const double* w = params.data();
        Tensor dx({in_});
        if (want_p) {
            double* db = dparams.data() + in_ * out_;
            for (std::size_t u = 0; u < out_; ++u) db[u] += dy.data[u];
        }
        for (std::size_t i = 0; i < in_; ++i) {
            const double* wr = w + i * out_;
            double acc = 0.0;
            const double v = x.data[i];
            if (want_p) {
                double* dwr = dparams.data() + i * out_;
                for (std::size_t u = 0; u < out_; ++u) {
                    acc += dy.data[u] * wr[u];
                    dwr[u] += v * dy.data[u];
                }
            } else {
                for (std::size_t u = 0; u < out_; ++u) acc += dy.data[u] * wr[u];
            }
            dx.data[i] = acc;
        }
        return dx;
    }

    std::vector<std::size_t> output_shape() const override { return {out_}; }
    nlohmann::json describe() const override {
        return {{"kind", "dense"}, {"in", in_}, {"out", out_}};
    }

  private:
    std::size_t in_, out_;
};

class Residual final : public Layer {
  public:
    Residual(std::vector<std::size_t> in_shape, std::size_t out_channels)
        : in_shape_(in_shape), ci_(in_shape.at(2)), co_(out_channels) {
        conv_a_ = make_conv2d(in_shape, co_, 3, 3);
        auto mid = conv_a_->output_shape();
        relu_mid_ = make_relu(mid);
        conv_b_ = make_conv2d(mid, co_, 3, 3);
        if (ci_ != co_) proj_ = make_conv2d(in_shape, co_, 1, 1);
    }

    std::size_t param_count() const override {
        return conv_a_->param_count() + conv_b_->param_count() +
               (proj_ ? proj_->param_count() : 0);
    }

    void init(std::span<double> params, Rng& rng) const override {
        std::size_t off = 0;
        conv_a_->init(params.subspan(off, conv_a_->param_count()), rng);
        off += conv_a_->param_count();
        conv_b_->init(params.subspan(off, conv_b_->param_count()), rng);
        off += conv_b_->param_count();
        if (proj_) proj_->init(params.subspan(off, proj_->param_count()), rng);
    }

    Tensor forward(const Tensor& x, std::span<const double> params,
                   Ctx& ctx) const override {
        ctx.sub.clear();
        for (int i = 0; i < 4; ++i) ctx.sub.push_back(std::make_unique<Ctx>());
        std::size_t off = 0;
        const auto pa = params.subspan(off, conv_a_->param_count());
        off += conv_a_->param_count();
        const auto pb = params.subspan(off, conv_b_->param_count());
        off += conv_b_->param_count();

        Tensor t = conv_a_->forward(x, pa, *ctx.sub[0]);
        t = relu_mid_->forward(t, {}, *ctx.sub[1]);
        t = conv_b_->forward(t, pb, *ctx.sub[2]);
        if (proj_) {
            const auto pp = params.subspan(off, proj_->param_count());
            Tensor skip = proj_->forward(x, pp, *ctx.sub[3]);
            for (std::size_t i = 0; i < t.size(); ++i) t.data[i] += skip.data[i];
        } else {
            for (std::size_t i = 0; i < t.size(); ++i) t.data[i] += x.data[i];
        }
        ctx.saved.assign(1, t);  // pre-activation sum for the output relu
        for (auto& v : t.data) v = v > 0.0 ? v : 0.0;
        return t;
    }

    Tensor backward(const Tensor& dy, std::span<const double> params,
                    const Ctx& ctx, std::span<double> dparams) const override {
        const Tensor& pre = ctx.saved[0];
        Tensor dsum = dy;
        for (std::size_t i = 0; i < dsum.size(); ++i)
            if (pre.data[i] <= 0.0) dsum.data[i] = 0.0;

        const bool want_p = !dparams.empty();
        auto gslice = [&](std::size_t off, std::size_t len) {
            return want_p ? dparams.subspan(off, len) : std::span<double>{};
        };
        std::size_t off = 0;
        const auto pa = params.subspan(off, conv_a_->param_count());
        const auto ga = gslice(off, conv_a_->param_count());
        off += conv_a_->param_count();
        const auto pb = params.subspan(off, conv_b_->param_count());
        const auto gb = gslice(off, conv_b_->param_count());
        off += conv_b_->param_count();

        Tensor d = conv_b_->backward(dsum, pb, *ctx.sub[2], gb);
        d = relu_mid_->backward(d, {}, *ctx.sub[1], {});
        Tensor dx = conv_a_->backward(d, pa, *ctx.sub[0], ga);
        if (proj_) {
            const auto pp = params.subspan(off, proj_->param_count());
            const auto gp = gslice(off, proj_->param_count());
            Tensor dskip = proj_->backward(dsum, pp, *ctx.sub[3], gp);
            for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dskip.data[i];
        } else {
            for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dsum.data[i];
        }
        return dx;
    }

    std::vector<std::size_t> output_shape() const override {
        return {in_shape_[0], in_shape_[1], co_};
    }

    nlohmann::json describe() const override {
        return {{"kind", "residual"},
                {"in", in_shape_},
                {"out_channels", co_},
                {"projected", proj_ != nullptr}};
    }

  private:
    std::vector<std::size_t> in_shape_;
    std::size_t ci_, co_;
    LayerPtr conv_a_, relu_mid_, conv_b_, proj_;
};

class Transpose final : public Layer {
  public:
    explicit Transpose(std::vector<std::size_t> in_shape)
        : r_(in_shape.at(0)), c_(in_shape.at(1)) {}

    std::size_t param_count() const override { return 0; }
    void init(std::span<double>, Rng&) const override {}

    Tensor forward(const Tensor& x, std::span<const double>, Ctx&) const override {
        Tensor out({c_, r_});
        for (std::size_t r = 0; r < r_; ++r)
            for (std::size_t c = 0; c < c_; ++c) out.data[c * r_ + r] = x.data[r * c_ + c];
        return out;
    }

    Tensor backward(const Tensor& dy, std::span<const double>, const Ctx&,
                    std::span<double>) const override {
        Tensor dx({r_, c_});
        for (std::size_t r = 0; r < r_; ++r)
            for (std::size_t c = 0; c < c_; ++c) dx.data[r * c_ + c] = dy.data[c * r_ + r];
        return dx;
    }

    std::vector<std::size_t> output_shape() const override { return {c_, r_}; }
    nlohmann::json describe() const override { return {{"kind", "transpose"}}; }

  private:
    std::size_t r_, c_;
};

// Standard LSTM, gate order (i, f, g, o). Kernels are [in, 4U] and [U, 4U];
// forget-gate bias starts at 1.
class Lstm final : public Layer {
  public:
    Lstm(std::size_t t, std::size_t f, std::size_t u) : t_(t), f_(f), u_(u) {}

    std::size_t param_count() const override {
        return f_ * 4 * u_ + u_ * 4 * u_ + 4 * u_;
    }

    void init(std::span<double> params, Rng& rng) const override {
        glorot_fill(params.subspan(0, f_ * 4 * u_), f_, 4 * u_, rng);
        glorot_fill(params.subspan(f_ * 4 * u_, u_ * 4 * u_), u_, 4 * u_, rng);
        double* b = params.data() + f_ * 4 * u_ + u_ * 4 * u_;
        for (std::size_t i = 0; i < 4 * u_; ++i) b[i] = 0.0;
        for (std::size_t i = u_; i < 2 * u_; ++i) b[i] = 1.0;  // forget gate
    }

    Tensor forward(const Tensor& x, std::span<const double> params,
                   Ctx& ctx) const override {
        require(x.shape.size() == 2 && x.shape[0] == t_ && x.shape[1] == f_,
                ErrorKind::InvalidParams, "lstm input shape mismatch");
        const double* wx = params.data();
        const double* wh = params.data() + f_ * 4 * u_;
        const double* b = wh + u_ * 4 * u_;

        Tensor gates({t_, 4 * u_});   // post-activation
        Tensor cells({t_, u_});
        Tensor tanh_c({t_, u_});
        Tensor out({t_, u_});
        std::vector<double> z(4 * u_);
        std::vector<double> h(u_, 0.0), c(u_, 0.0);

        for (std::size_t t = 0; t < t_; ++t) {
            double* __restrict__ zp = z.data();
            for (std::size_t j = 0; j < 4 * u_; ++j) zp[j] = b[j];
            const double* xt = x.data.data() + t * f_;
            for (std::size_t i = 0; i < f_; ++i) {
                const double v = xt[i];
                const double* __restrict__ row = wx + i * 4 * u_;
                for (std::size_t j = 0; j < 4 * u_; ++j) zp[j] += v * row[j];
            }
            for (std::size_t i = 0; i < u_; ++i) {
                const double v = h[i];
                const double* __restrict__ row = wh + i * 4 * u_;
                for (std::size_t j = 0; j < 4 * u_; ++j) zp[j] += v * row[j];
            }
            double* g = gates.data.data() + t * 4 * u_;
            for (std::size_t i = 0; i < u_; ++i) {
                const double ig = stable_sigmoid(z[i]);
                const double fg = stable_sigmoid(z[u_ + i]);
                const double gg = std::tanh(z[2 * u_ + i]);
                const double og = stable_sigmoid(z[3 * u_ + i]);
                g[i] = ig;
                g[u_ + i] = fg;
                g[2 * u_ + i] = gg;
                g[3 * u_ + i] = og;
                c[i] = fg * c[i] + ig * gg;
                const double tc = std::tanh(c[i]);
                cells.data[t * u_ + i] = c[i];
                tanh_c.data[t * u_ + i] = tc;
                h[i] = og * tc;
                out.data[t * u_ + i] = h[i];
            }
        }
        ctx.saved.clear();
        ctx.saved.push_back(x);
        ctx.saved.push_back(std::move(gates));
        ctx.saved.push_back(std::move(cells));
        ctx.saved.push_back(std::move(tanh_c));
        ctx.saved.push_back(out);
        return out;
    }

    Tensor backward(const Tensor& dy, std::span<const double> params,
                    const Ctx& ctx, std::span<double> dparams) const override {
        const Tensor& x = ctx.saved[0];
        const Tensor& gates = ctx.saved[1];
        const Tensor& cells = ctx.saved[2];
        const Tensor& tanh_c = ctx.saved[3];
        const Tensor& hs = ctx.saved[4];
        const bool want_p = !dparams.empty();
        const double* wx = params.data();
        const double* wh = params.data() + f_ * 4 * u_;
        double* dwx = want_p ? dparams.data() : nullptr;
        double* dwh = want_p ? dparams.data() + f_ * 4 * u_ : nullptr;
        double* db = want_p ? dwh + u_ * 4 * u_ : nullptr;

        Tensor dx({t_, f_});
        Tensor dz_all({t_, 4 * u_});  // pre-activation grads, for the kernel GEMMs
        std::vector<double> dh(u_, 0.0), dc(u_, 0.0);

        for (std::size_t t = t_; t-- > 0;) {
            const double* g = gates.data.data() + t * 4 * u_;
            const double* tc = tanh_c.data.data() + t * u_;
            double* dz = dz_all.data.data() + t * 4 * u_;
            for (std::size_t i = 0; i < u_; ++i) dh[i] += dy.data[t * u_ + i];
            for (std::size_t i = 0; i < u_; ++i) {
                const double ig = g[i], fg = g[u_ + i], gg = g[2 * u_ + i],
                             og = g[3 * u_ + i];
                const double t_c = tc[i];
                const double d_o = dh[i] * t_c;
                dc[i] += dh[i] * og * (1.0 - t_c * t_c);
                const double c_prev = t > 0 ? cells.data[(t - 1) * u_ + i] : 0.0;
                const double d_i = dc[i] * gg;
                const double d_g = dc[i] * ig;
                const double d_f = dc[i] * c_prev;
                dc[i] *= fg;  // carry to t-1
                dz[i] = d_i * ig * (1.0 - ig);
                dz[u_ + i] = d_f * fg * (1.0 - fg);
                dz[2 * u_ + i] = d_g * (1.0 - gg * gg);
                dz[3 * u_ + i] = d_o * og * (1.0 - og);
            }
            if (want_p)
                for (std::size_t j = 0; j < 4 * u_; ++j) db[j] += dz[j];
            // dx_t = dz . Wx^T ; dh_prev = dz . Wh^T
            double* __restrict__ dxt = dx.data.data() + t * f_;
            for (std::size_t i = 0; i < f_; ++i) {
                const double* __restrict__ row = wx + i * 4 * u_;
                double acc = 0.0;
                for (std::size_t j = 0; j < 4 * u_; ++j) acc += dz[j] * row[j];
                dxt[i] = acc;
            }
            for (std::size_t i = 0; i < u_; ++i) {
                const double* __restrict__ row = wh + i * 4 * u_;
                double acc = 0.0;
                for (std::size_t j = 0; j < 4 * u_; ++j) acc += dz[j] * row[j];
                dh[i] = acc;
            }
        }
        // kernel gradients as time-batched outer products
        for (std::size_t t = 0; want_p && t < t_; ++t) {
            const double* xt = x.data.data() + t * f_;
            const double* dz = dz_all.data.data() + t * 4 * u_;
            for (std::size_t i = 0; i < f_; ++i) {
                const double v = xt[i];
                if (v == 0.0) continue;
                double* __restrict__ row = dwx + i * 4 * u_;
                for (std::size_t j = 0; j < 4 * u_; ++j) row[j] += v * dz[j];
            }
            if (t == 0) continue;
            const double* hp = hs.data.data() + (t - 1) * u_;
            for (std::size_t i = 0; i < u_; ++i) {
                const double v = hp[i];
                double* __restrict__ row = dwh + i * 4 * u_;
                for (std::size_t j = 0; j < 4 * u_; ++j) row[j] += v * dz[j];
            }
        }
        return dx;
    }

    // Batch path: per-step GEMMs over a [B x *] state so the kernel
    // matrices are read once per step. Row t*B+b of every saved tensor
    // belongs to example b at step t.
    void forward_batch(const std::vector<const Tensor*>& xs,
                       std::span<const double> params, std::vector<Ctx>& ctxs,
                       std::vector<Tensor>& outs) const override {
        const std::size_t nb = xs.size();
        const double* wx = params.data();
        const double* wh = params.data() + f_ * 4 * u_;
        const double* b = wh + u_ * 4 * u_;

        Tensor xcat({t_ * nb, f_});
        for (std::size_t e = 0; e < nb; ++e)
            for (std::size_t t = 0; t < t_; ++t)
                std::copy_n(xs[e]->data.data() + t * f_, f_,
                            xcat.data.data() + (t * nb + e) * f_);

        Tensor gates({t_ * nb, 4 * u_});
        Tensor cells({t_ * nb, u_});
        Tensor tanh_c({t_ * nb, u_});
        Tensor hs({t_ * nb, u_});
        Tensor h({nb, u_}), c({nb, u_});
        Tensor z({nb, 4 * u_});

        for (std::size_t t = 0; t < t_; ++t) {
            for (std::size_t e = 0; e < nb; ++e)
                std::copy_n(b, 4 * u_, z.data.data() + e * 4 * u_);
            detail::dgemm_add(nb, 4 * u_, f_, xcat.data.data() + t * nb * f_, wx,
                              z.data.data());
            detail::dgemm_add(nb, 4 * u_, u_, h.data.data(), wh, z.data.data());
#pragma omp parallel for schedule(static)
            for (std::size_t e = 0; e < nb; ++e) {
                const double* ze = z.data.data() + e * 4 * u_;
                double* ge = gates.data.data() + (t * nb + e) * 4 * u_;
                double* ce = c.data.data() + e * u_;
                double* he = h.data.data() + e * u_;
                for (std::size_t i = 0; i < u_; ++i) {
                    const double ig = stable_sigmoid(ze[i]);
                    const double fg = stable_sigmoid(ze[u_ + i]);
                    const double gg = std::tanh(ze[2 * u_ + i]);
                    const double og = stable_sigmoid(ze[3 * u_ + i]);
                    ge[i] = ig;
                    ge[u_ + i] = fg;
                    ge[2 * u_ + i] = gg;
                    ge[3 * u_ + i] = og;
                    ce[i] = fg * ce[i] + ig * gg;
                    const double tc = std::tanh(ce[i]);
                    cells.data[(t * nb + e) * u_ + i] = ce[i];
                    tanh_c.data[(t * nb + e) * u_ + i] = tc;
                    he[i] = og * tc;
                    hs.data[(t * nb + e) * u_ + i] = he[i];
                }
            }
        }

        outs.assign(nb, Tensor({t_, u_}));
        for (std::size_t e = 0; e < nb; ++e)
            for (std::size_t t = 0; t < t_; ++t)
                std::copy_n(hs.data.data() + (t * nb + e) * u_, u_,
                            outs[e].data.data() + t * u_);

        ctxs.resize(1);
        ctxs[0].saved.clear();
        ctxs[0].saved.push_back(std::move(xcat));
        ctxs[0].saved.push_back(std::move(gates));
        ctxs[0].saved.push_back(std::move(cells));
        ctxs[0].saved.push_back(std::move(tanh_c));
        ctxs[0].saved.push_back(std::move(hs));
    }

    void backward_batch(const std::vector<Tensor>& dys,
                        std::span<const double> params,
                        const std::vector<Ctx>& ctxs, std::span<double> dparams,
                        std::vector<Tensor>& dxs) const override {
        const std::size_t nb = dys.size();
        const Tensor& xcat = ctxs[0].saved[0];
        const Tensor& gates = ctxs[0].saved[1];
        const Tensor& cells = ctxs[0].saved[2];
        const Tensor& tanh_c = ctxs[0].saved[3];
        const Tensor& hs = ctxs[0].saved[4];
        const bool want_p = !dparams.empty();
        const double* wx = params.data();
        const double* wh = params.data() + f_ * 4 * u_;

        std::vector<double> wxT(f_ * 4 * u_), whT(u_ * 4 * u_);
        detail::transpose_copy(f_, 4 * u_, wx, wxT.data());
        detail::transpose_copy(u_, 4 * u_, wh, whT.data());

        Tensor dz_all({t_ * nb, 4 * u_});
        Tensor dh({nb, u_}), dc({nb, u_});

        for (std::size_t t = t_; t-- > 0;) {
#pragma omp parallel for schedule(static)
            for (std::size_t e = 0; e < nb; ++e) {
                const double* g = gates.data.data() + (t * nb + e) * 4 * u_;
                const double* tc = tanh_c.data.data() + (t * nb + e) * u_;
                double* dz = dz_all.data.data() + (t * nb + e) * 4 * u_;
                double* dhe = dh.data.data() + e * u_;
                double* dce = dc.data.data() + e * u_;
                const double* dye = dys[e].data.data() + t * u_;
                for (std::size_t i = 0; i < u_; ++i) {
                    const double d_h = dhe[i] + dye[i];
                    const double ig = g[i], fg = g[u_ + i], gg = g[2 * u_ + i],
                                 og = g[3 * u_ + i];
                    const double t_c = tc[i];
                    const double d_o = d_h * t_c;
                    double d_c = dce[i] + d_h * og * (1.0 - t_c * t_c);
                    const double c_prev =
                        t > 0 ? cells.data[((t - 1) * nb + e) * u_ + i] : 0.0;
                    const double d_i = d_c * gg;
                    const double d_g = d_c * ig;
                    const double d_f = d_c * c_prev;
                    dce[i] = d_c * fg;
                    dz[i] = d_i * ig * (1.0 - ig);
                    dz[u_ + i] = d_f * fg * (1.0 - fg);
                    dz[2 * u_ + i] = d_g * (1.0 - gg * gg);
                    dz[3 * u_ + i] = d_o * og * (1.0 - og);
                    dhe[i] = 0.0;
                }
            }
            detail::dgemm_add(nb, u_, 4 * u_, dz_all.data.data() + t * nb * 4 * u_,
                              whT.data(), dh.data.data());
        }

        Tensor dxcat({t_ * nb, f_});
        detail::dgemm_add(t_ * nb, f_, 4 * u_, dz_all.data.data(), wxT.data(),
                          dxcat.data.data());
        dxs.assign(nb, Tensor({t_, f_}));
        for (std::size_t e = 0; e < nb; ++e)
            for (std::size_t t = 0; t < t_; ++t)
                std::copy_n(dxcat.data.data() + (t * nb + e) * f_, f_,
                            dxs[e].data.data() + t * f_);

        if (!want_p) return;
        double* dwx = dparams.data();
        double* dwh = dparams.data() + f_ * 4 * u_;
        double* db = dwh + u_ * 4 * u_;
        for (std::size_t r = 0; r < t_ * nb; ++r) {
            const double* dz = dz_all.data.data() + r * 4 * u_;
            for (std::size_t j = 0; j < 4 * u_; ++j) db[j] += dz[j];
        }
        std::vector<double> xcatT(f_ * t_ * nb);
        detail::transpose_copy(t_ * nb, f_, xcat.data.data(), xcatT.data());
        detail::dgemm_add(f_, 4 * u_, t_ * nb, xcatT.data(), dz_all.data.data(), dwx);

        // h_prev rows: zeros for t = 0, then hs shifted by one step block
        Tensor hprev({t_ * nb, u_});
        std::copy_n(hs.data.data(), (t_ - 1) * nb * u_,
                    hprev.data.data() + nb * u_);
        std::vector<double> hprevT(u_ * t_ * nb);
        detail::transpose_copy(t_ * nb, u_, hprev.data.data(), hprevT.data());
        detail::dgemm_add(u_, 4 * u_, t_ * nb, hprevT.data(), dz_all.data.data(), dwh);
    }

    std::vector<std::size_t> output_shape() const override { return {t_, u_}; }
    nlohmann::json describe() const override {
        return {{"kind", "lstm"}, {"t", t_}, {"in", f_}, {"units", u_}};
    }

  private:
    std::size_t t_, f_, u_;
};

// Standard GRU (reset gate applied to the recurrent contribution of the
// candidate), gate order (z, r, n).
class Gru final : public Layer {
  public:
    Gru(std::size_t t, std::size_t f, std::size_t u) : t_(t), f_(f), u_(u) {}

    std::size_t param_count() const override {
        return f_ * 3 * u_ + u_ * 3 * u_ + 3 * u_;
    }

    void init(std::span<double> params, Rng& rng) const override {
        glorot_fill(params.subspan(0, f_ * 3 * u_), f_, 3 * u_, rng);
        glorot_fill(params.subspan(f_ * 3 * u_, u_ * 3 * u_), u_, 3 * u_, rng);
        for (std::size_t i = f_ * 3 * u_ + u_ * 3 * u_; i < params.size(); ++i)
            params[i] = 0.0;
    }

    Tensor forward(const Tensor& x, std::span<const double> params,
                   Ctx& ctx) const override {
        require(x.shape.size() == 2 && x.shape[0] == t_ && x.shape[1] == f_,
                ErrorKind::InvalidParams, "gru input shape mismatch");
        const double* wx = params.data();
        const double* wh = params.data() + f_ * 3 * u_;
        const double* b = wh + u_ * 3 * u_;

        Tensor gates({t_, 3 * u_});  // z, r, n post-activation
        Tensor hproj({t_, u_});      // h_prev . Wh_n before the reset gate
        Tensor out({t_, u_});
        std::vector<double> zx(3 * u_), zh(3 * u_);
        std::vector<double> h(u_, 0.0);

        for (std::size_t t = 0; t < t_; ++t) {
            double* __restrict__ zxp = zx.data();
            double* __restrict__ zhp = zh.data();
            for (std::size_t j = 0; j < 3 * u_; ++j) zxp[j] = b[j];
            const double* xt = x.data.data() + t * f_;
            for (std::size_t i = 0; i < f_; ++i) {
                const double v = xt[i];
                const double* __restrict__ row = wx + i * 3 * u_;
                for (std::size_t j = 0; j < 3 * u_; ++j) zxp[j] += v * row[j];
            }
            std::fill(zh.begin(), zh.end(), 0.0);
            for (std::size_t i = 0; i < u_; ++i) {
                const double v = h[i];
                if (v == 0.0) continue;
                const double* __restrict__ row = wh + i * 3 * u_;
                for (std::size_t j = 0; j < 3 * u_; ++j) zhp[j] += v * row[j];
            }
            double* g = gates.data.data() + t * 3 * u_;
            for (std::size_t i = 0; i < u_; ++i) {
                const double zg = stable_sigmoid(zx[i] + zh[i]);
                const double rg = stable_sigmoid(zx[u_ + i] + zh[u_ + i]);
                const double hn = zh[2 * u_ + i];
                const double ng = std::tanh(zx[2 * u_ + i] + rg * hn);
                g[i] = zg;
                g[u_ + i] = rg;
                g[2 * u_ + i] = ng;
                hproj.data[t * u_ + i] = hn;
                h[i] = (1.0 - zg) * ng + zg * h[i];
                out.data[t * u_ + i] = h[i];
            }
        }
        ctx.saved.clear();
        ctx.saved.push_back(x);
        ctx.saved.push_back(std::move(gates));
        ctx.saved.push_back(std::move(hproj));
        ctx.saved.push_back(out);
        return out;
    }

    Tensor backward(const Tensor& dy, std::span<const double> params,
                    const Ctx& ctx, std::span<double> dparams) const override {
        const Tensor& x = ctx.saved[0];
        const Tensor& gates = ctx.saved[1];
        const Tensor& hproj = ctx.saved[2];
        const Tensor& hs = ctx.saved[3];
        const bool want_p = !dparams.empty();
        const double* wx = params.data();
        const double* wh = params.data() + f_ * 3 * u_;
        double* dwx = want_p ? dparams.data() : nullptr;
        double* dwh = want_p ? dparams.data() + f_ * 3 * u_ : nullptr;
        double* db = want_p ? dwh + u_ * 3 * u_ : nullptr;

        Tensor dx({t_, f_});
        Tensor dzx_all({t_, 3 * u_});  // grads of the x-side pre-activations
        Tensor dzh_all({t_, 3 * u_});  // grads of the h-side pre-activations
        std::vector<double> dh(u_, 0.0);

        for (std::size_t t = t_; t-- > 0;) {
            const double* g = gates.data.data() + t * 3 * u_;
            double* dzx = dzx_all.data.data() + t * 3 * u_;
            double* dzh = dzh_all.data.data() + t * 3 * u_;
            for (std::size_t i = 0; i < u_; ++i) dh[i] += dy.data[t * u_ + i];
            for (std::size_t i = 0; i < u_; ++i) {
                const double zg = g[i], rg = g[u_ + i], ng = g[2 * u_ + i];
                const double h_prev = t > 0 ? hs.data[(t - 1) * u_ + i] : 0.0;
                const double hn = hproj.data[t * u_ + i];
                const double d_z = dh[i] * (h_prev - ng);
                const double d_n = dh[i] * (1.0 - zg);
                const double dh_carry = dh[i] * zg;
                const double d_npre = d_n * (1.0 - ng * ng);
                const double d_r = d_npre * hn;
                dzx[i] = d_z * zg * (1.0 - zg);
                dzx[u_ + i] = d_r * rg * (1.0 - rg);
                dzx[2 * u_ + i] = d_npre;
                dzh[i] = dzx[i];
                dzh[u_ + i] = dzx[u_ + i];
                dzh[2 * u_ + i] = d_npre * rg;
                dh[i] = dh_carry;
            }
            if (want_p)
                for (std::size_t j = 0; j < 3 * u_; ++j) db[j] += dzx[j];
            double* __restrict__ dxt = dx.data.data() + t * f_;
            for (std::size_t i = 0; i < f_; ++i) {
                const double* __restrict__ row = wx + i * 3 * u_;
                double acc = 0.0;
                for (std::size_t j = 0; j < 3 * u_; ++j) acc += dzx[j] * row[j];
                dxt[i] = acc;
            }
            for (std::size_t i = 0; i < u_; ++i) {
                const double* __restrict__ row = wh + i * 3 * u_;
                double acc = 0.0;
                for (std::size_t j = 0; j < 3 * u_; ++j) acc += dzh[j] * row[j];
                dh[i] += acc;
            }
        }
        for (std::size_t t = 0; want_p && t < t_; ++t) {
            const double* xt = x.data.data() + t * f_;
            const double* dzx = dzx_all.data.data() + t * 3 * u_;
            for (std::size_t i = 0; i < f_; ++i) {
                const double v = xt[i];
                if (v == 0.0) continue;
                double* __restrict__ row = dwx + i * 3 * u_;
                for (std::size_t j = 0; j < 3 * u_; ++j) row[j] += v * dzx[j];
            }
            if (t == 0) continue;
            const double* hp = hs.data.data() + (t - 1) * u_;
            const double* dzh = dzh_all.data.data() + t * 3 * u_;
            for (std::size_t i = 0; i < u_; ++i) {
                const double v = hp[i];
                double* __restrict__ row = dwh + i * 3 * u_;
                for (std::size_t j = 0; j < 3 * u_; ++j) row[j] += v * dzh[j];
            }
        }
        return dx;
    }

    void forward_batch(const std::vector<const Tensor*>& xs,
                       std::span<const double> params, std::vector<Ctx>& ctxs,
                       std::vector<Tensor>& outs) const override {
        const std::size_t nb = xs.size();
        const double* wx = params.data();
        const double* wh = params.data() + f_ * 3 * u_;
        const double* b = wh + u_ * 3 * u_;

        Tensor xcat({t_ * nb, f_});
        for (std::size_t e = 0; e < nb; ++e)
            for (std::size_t t = 0; t < t_; ++t)
                std::copy_n(xs[e]->data.data() + t * f_, f_,
                            xcat.data.data() + (t * nb + e) * f_);

        Tensor gates({t_ * nb, 3 * u_});
        Tensor hproj({t_ * nb, u_});
        Tensor hs({t_ * nb, u_});
        Tensor h({nb, u_});
        Tensor zx({nb, 3 * u_}), zh({nb, 3 * u_});

        for (std::size_t t = 0; t < t_; ++t) {
            for (std::size_t e = 0; e < nb; ++e)
                std::copy_n(b, 3 * u_, zx.data.data() + e * 3 * u_);
            std::fill(zh.data.begin(), zh.data.end(), 0.0);
            detail::dgemm_add(nb, 3 * u_, f_, xcat.data.data() + t * nb * f_, wx,
                              zx.data.data());
            detail::dgemm_add(nb, 3 * u_, u_, h.data.data(), wh, zh.data.data());
#pragma omp parallel for schedule(static)
            for (std::size_t e = 0; e < nb; ++e) {
                const double* zxe = zx.data.data() + e * 3 * u_;
                const double* zhe = zh.data.data() + e * 3 * u_;
                double* ge = gates.data.data() + (t * nb + e) * 3 * u_;
                double* he = h.data.data() + e * u_;
                for (std::size_t i = 0; i < u_; ++i) {
                    const double zg = stable_sigmoid(zxe[i] + zhe[i]);
                    const double rg = stable_sigmoid(zxe[u_ + i] + zhe[u_ + i]);
                    const double hn = zhe[2 * u_ + i];
                    const double ng = std::tanh(zxe[2 * u_ + i] + rg * hn);
                    ge[i] = zg;
                    ge[u_ + i] = rg;
                    ge[2 * u_ + i] = ng;
                    hproj.data[(t * nb + e) * u_ + i] = hn;
                    he[i] = (1.0 - zg) * ng + zg * he[i];
                    hs.data[(t * nb + e) * u_ + i] = he[i];
                }
            }
        }

        outs.assign(nb, Tensor({t_, u_}));
        for (std::size_t e = 0; e < nb; ++e)
            for (std::size_t t = 0; t < t_; ++t)
                std::copy_n(hs.data.data() + (t * nb + e) * u_, u_,
                            outs[e].data.data() + t * u_);

        ctxs.resize(1);
        ctxs[0].saved.clear();
        ctxs[0].saved.push_back(std::move(xcat));
        ctxs[0].saved.push_back(std::move(gates));
        ctxs[0].saved.push_back(std::move(hproj));
        ctxs[0].saved.push_back(std::move(hs));
    }

    void backward_batch(const std::vector<Tensor>& dys,
                        std::span<const double> params,
                        const std::vector<Ctx>& ctxs, std::span<double> dparams,
                        std::vector<Tensor>& dxs) const override {
        const std::size_t nb = dys.size();
        const Tensor& xcat = ctxs[0].saved[0];
        const Tensor& gates = ctxs[0].saved[1];
        const Tensor& hproj = ctxs[0].saved[2];
        const Tensor& hs = ctxs[0].saved[3];
        const bool want_p = !dparams.empty();
        const double* wx = params.data();
        const double* wh = params.data() + f_ * 3 * u_;

        std::vector<double> wxT(f_ * 3 * u_), whT(u_ * 3 * u_);
        detail::transpose_copy(f_, 3 * u_, wx, wxT.data());
        detail::transpose_copy(u_, 3 * u_, wh, whT.data());

        Tensor dzx_all({t_ * nb, 3 * u_});
        Tensor dzh_all({t_ * nb, 3 * u_});
        Tensor dh({nb, u_});

        for (std::size_t t = t_; t-- > 0;) {
#pragma omp parallel for schedule(static)
            for (std::size_t e = 0; e < nb; ++e) {
                const double* g = gates.data.data() + (t * nb + e) * 3 * u_;
                double* dzx = dzx_all.data.data() + (t * nb + e) * 3 * u_;
                double* dzh = dzh_all.data.data() + (t * nb + e) * 3 * u_;
                double* dhe = dh.data.data() + e * u_;
                const double* dye = dys[e].data.data() + t * u_;
                for (std::size_t i = 0; i < u_; ++i) {
                    const double d_h = dhe[i] + dye[i];
                    const double zg = g[i], rg = g[u_ + i], ng = g[2 * u_ + i];
                    const double h_prev =
                        t > 0 ? hs.data[((t - 1) * nb + e) * u_ + i] : 0.0;
                    const double hn = hproj.data[(t * nb + e) * u_ + i];
                    const double d_z = d_h * (h_prev - ng);
                    const double d_n = d_h * (1.0 - zg);
                    const double d_npre = d_n * (1.0 - ng * ng);
                    const double d_r = d_npre * hn;
                    dzx[i] = d_z * zg * (1.0 - zg);
                    dzx[u_ + i] = d_r * rg * (1.0 - rg);
                    dzx[2 * u_ + i] = d_npre;
                    dzh[i] = dzx[i];
                    dzh[u_ + i] = dzx[u_ + i];
                    dzh[2 * u_ + i] = d_npre * rg;
                    dhe[i] = d_h * zg;
                }
            }
            detail::dgemm_add(nb, u_, 3 * u_, dzh_all.data.data() + t * nb * 3 * u_,
                              whT.data(), dh.data.data());
        }

        Tensor dxcat({t_ * nb, f_});
        detail::dgemm_add(t_ * nb, f_, 3 * u_, dzx_all.data.data(), wxT.data(),
                          dxcat.data.data());
        dxs.assign(nb, Tensor({t_, f_}));
        for (std::size_t e = 0; e < nb; ++e)
            for (std::size_t t = 0; t < t_; ++t)
                std::copy_n(dxcat.data.data() + (t * nb + e) * f_, f_,
                            dxs[e].data.data() + t * f_);

        if (!want_p) return;
        double* dwx = dparams.data();
        double* dwh = dparams.data() + f_ * 3 * u_;
        double* db = dwh + u_ * 3 * u_;
        for (std::size_t r = 0; r < t_ * nb; ++r) {
            const double* dzx = dzx_all.data.data() + r * 3 * u_;
            for (std::size_t j = 0; j < 3 * u_; ++j) db[j] += dzx[j];
        }
        std::vector<double> xcatT(f_ * t_ * nb);
        detail::transpose_copy(t_ * nb, f_, xcat.data.data(), xcatT.data());
        detail::dgemm_add(f_, 3 * u_, t_ * nb, xcatT.data(), dzx_all.data.data(), dwx);

        Tensor hprev({t_ * nb, u_});
        std::copy_n(hs.data.data(), (t_ - 1) * nb * u_, hprev.data.data() + nb * u_);
        std::vector<double> hprevT(u_ * t_ * nb);
        detail::transpose_copy(t_ * nb, u_, hprev.data.data(), hprevT.data());
        detail::dgemm_add(u_, 3 * u_, t_ * nb, hprevT.data(), dzh_all.data.data(), dwh);
    }

    std::vector<std::size_t> output_shape() const override { return {t_, u_}; }
    nlohmann::json describe() const override {
        return {{"kind", "gru"}, {"t", t_}, {"in", f_}, {"units", u_}};
    }

  private:
    std::size_t t_, f_, u_;
};

class TimeAvgPool final : public Layer {
  public:
    explicit TimeAvgPool(std::vector<std::size_t> in_shape)
        : t_(in_shape.at(0)), u_(in_shape.at(1)) {}

    std::size_t param_count() const override { return 0; }
    void init(std::span<double>, Rng&) const override {}

    Tensor forward(const Tensor& x, std::span<const double>, Ctx&) const override {
        Tensor out({u_});
        for (std::size_t t = 0; t < t_; ++t)
            for (std::size_t i = 0; i < u_; ++i) out.data[i] += x.data[t * u_ + i];
        const double inv = 1.0 / double(t_);
        for (auto& v : out.data) v *= inv;
        return out;
    }

    Tensor backward(const Tensor& dy, std::span<const double>, const Ctx&,
                    std::span<double>) const override {
        Tensor dx({t_, u_});
        const double inv = 1.0 / double(t_);
        for (std::size_t t = 0; t < t_; ++t)
            for (std::size_t i = 0; i < u_; ++i) dx.data[t * u_ + i] = dy.data[i] * inv;
        return dx;
    }

    std::vector<std::size_t> output_shape() const override { return {u_}; }
    nlohmann::json describe() const override { return {{"kind", "time_avgpool"}}; }

  private:
    std::size_t t_, u_;
};

}  // namespace

LayerPtr make_conv2d(std::vector<std::size_t> in_shape, std::size_t out_channels,
                     std::size_t kh, std::size_t kw) {
    return std::make_unique<Conv2D>(std::move(in_shape), out_channels, kh, kw);
}
LayerPtr make_maxpool2d(std::vector<std::size_t> in_shape) {
    return std::make_unique<MaxPool2D>(std::move(in_shape));
}
LayerPtr make_relu(std::vector<std::size_t> in_shape) {
    return std::make_unique<ReLU>(std::move(in_shape));
}
LayerPtr make_global_avgpool(std::vector<std::size_t> in_shape) {
    return std::make_unique<GlobalAvgPool>(std::move(in_shape));
}
LayerPtr make_dense(std::size_t in_dim, std::size_t out_dim) {
    return std::make_unique<Dense>(in_dim, out_dim);
}
LayerPtr make_residual(std::vector<std::size_t> in_shape, std::size_t out_channels) {
    return std::make_unique<Residual>(std::move(in_shape), out_channels);
}
LayerPtr make_transpose(std::vector<std::size_t> in_shape) {
    return std::make_unique<Transpose>(std::move(in_shape));
}
LayerPtr make_lstm(std::size_t t_steps, std::size_t in_dim, std::size_t units) {
    return std::make_unique<Lstm>(t_steps, in_dim, units);
}
LayerPtr make_gru(std::size_t t_steps, std::size_t in_dim, std::size_t units) {
    return std::make_unique<Gru>(t_steps, in_dim, units);
}
LayerPtr make_time_avgpool(std::vector<std::size_t> in_shape) {
    return std::make_unique<TimeAvgPool>(std::move(in_shape));
}

}  // namespace rffi::nn
