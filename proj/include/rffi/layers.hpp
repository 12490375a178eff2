#pragma once

#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "rffi/rng.hpp"
#include "rffi/tensor.hpp"

namespace rffi::nn {

// Saved forward activations for one layer invocation. Layers are immutable
// after construction; every forward/backward call carries its own Ctx, so
// concurrent evaluation of the same model is safe.
struct Ctx {
    std::vector<Tensor> saved;
    std::vector<std::unique_ptr<Ctx>> sub;  // composite layers
};

class Layer {
  public:
    virtual ~Layer() = default;

    virtual std::size_t param_count() const = 0;
    virtual void init(std::span<double> params, Rng& rng) const = 0;

    virtual Tensor forward(const Tensor& x, std::span<const double> params,
                           Ctx& ctx) const = 0;
    // dy is the loss gradient w.r.t. this layer's output; returns the
    // gradient w.r.t. its input and accumulates parameter gradients.
    virtual Tensor backward(const Tensor& dy, std::span<const double> params,
                            const Ctx& ctx, std::span<double> dparams) const = 0;

    // Batched evaluation; the default loops per example. Recurrent layers
    // override with step-level GEMMs so kernel matrices are streamed once
    // per step instead of once per example. Accumulation order is fixed, so
    // results do not depend on the thread count.
    virtual void forward_batch(const std::vector<const Tensor*>& xs,
                               std::span<const double> params,
                               std::vector<Ctx>& ctxs,
                               std::vector<Tensor>& outs) const;
    virtual void backward_batch(const std::vector<Tensor>& dys,
                                std::span<const double> params,
                                const std::vector<Ctx>& ctxs,
                                std::span<double> dparams,
                                std::vector<Tensor>& dxs) const;

    virtual std::vector<std::size_t> output_shape() const = 0;
    virtual nlohmann::json describe() const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

// x: [H, W, Cin] -> [H, W, Cout], stride 1, zero-padded "same".
LayerPtr make_conv2d(std::vector<std::size_t> in_shape, std::size_t out_channels,
                     std::size_t kh, std::size_t kw);
// 2x2 stride-2 max pooling; ties break toward the lowest linear index.
LayerPtr make_maxpool2d(std::vector<std::size_t> in_shape);
LayerPtr make_relu(std::vector<std::size_t> in_shape);
// [H, W, C] -> [C]
LayerPtr make_global_avgpool(std::vector<std::size_t> in_shape);
LayerPtr make_dense(std::size_t in_dim, std::size_t out_dim);
// y = relu(conv_b(relu(conv_a(x))) + P(x)); P is identity when channel
// counts match, otherwise a 1x1 projection conv.
LayerPtr make_residual(std::vector<std::size_t> in_shape, std::size_t out_channels);
// [rows, cols] -> [cols, rows]; recurrent models read spectrogram columns
// as time steps.
LayerPtr make_transpose(std::vector<std::size_t> in_shape);
// x: [T, F] -> [T, U]
LayerPtr make_lstm(std::size_t t_steps, std::size_t in_dim, std::size_t units);
LayerPtr make_gru(std::size_t t_steps, std::size_t in_dim, std::size_t units);
// [T, U] -> [U]
LayerPtr make_time_avgpool(std::vector<std::size_t> in_shape);

// Numerically stable helpers shared with the loss head.
double stable_sigmoid(double x);

}  // namespace rffi::nn
