#pragma once

#include <string>
#include <vector>

#include "rffi/layers.hpp"
#include "rffi/tensor.hpp"

namespace rffi::nn {

enum class ArchId { CNN1, CNN2, LSTM1, LSTM2, GRU1, GRU2 };

std::string arch_name(ArchId id);
ArchId arch_from_name(const std::string& name);

struct ForwardResult {
    Tensor logits;  // [n_classes]
    Tensor probs;   // softmax(logits)
};

// What the attack algorithms need from a differentiable classifier. Model
// is the production implementation; tests use small hand-built ones.
class Classifier {
  public:
    virtual ~Classifier() = default;
    virtual int n_classes() const = 0;
    virtual std::string name() const = 0;
    virtual ForwardResult forward(const Tensor& x) const = 0;
    virtual Tensor input_gradient(const Tensor& x, int label) const = 0;
    virtual std::vector<Tensor> logit_input_gradients(
        const Tensor& x, const std::vector<int>& ks,
        Tensor* logits_out = nullptr) const = 0;
    virtual std::vector<Tensor> batch_logits(
        const std::vector<const Tensor*>& xs) const = 0;

    int predict(const Tensor& x) const;
};

// A parameterized differentiable classifier: architecture plus one flat
// parameter vector. Parameters are only mutated by the trainer; forward and
// gradient calls are const and safe to run concurrently.
class Model final : public Classifier {
  public:
    Model(ArchId arch, std::vector<std::size_t> input_shape, int n_classes,
          std::uint64_t init_seed);

    ArchId arch() const { return arch_; }
    const std::vector<std::size_t>& input_shape() const { return input_shape_; }
    int n_classes() const override { return n_classes_; }
    std::string name() const override { return arch_name(arch_); }
    std::uint64_t init_seed() const { return init_seed_; }

    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    ForwardResult forward(const Tensor& x) const override;

    // Logits for many examples; recurrent architectures run step-level
    // batched GEMMs, conv architectures fan out across examples.
    std::vector<Tensor> batch_logits(
        const std::vector<const Tensor*>& xs) const override;

    // Mean cross-entropy over the batch; accumulates d(loss)/d(params) into
    // grad (which must be zeroed by the caller and params-sized).
    double loss_and_param_gradients(const std::vector<const Tensor*>& xs,
                                    const std::vector<int>& ys,
                                    std::vector<double>& grad) const;

    // d(cross-entropy vs `label`)/dx. The same expression serves true-label
    // and target-label attacks; callers pass whichever label they mean.
    Tensor input_gradient(const Tensor& x, int label) const override;

    // d(logit_k)/dx, used by boundary-search attacks.
    Tensor logit_input_gradient(const Tensor& x, int k) const;

    // Gradients of several logits sharing one forward pass; also returns
    // the logits at x.
    std::vector<Tensor> logit_input_gradients(
        const Tensor& x, const std::vector<int>& ks,
        Tensor* logits_out = nullptr) const override;

    // single-example loss + param grads (no batching)
    double example_gradient(const Tensor& x, int y, std::span<double> grad) const;

    nlohmann::json describe() const;

  private:
    ArchId arch_;
    std::vector<std::size_t> input_shape_;
    int n_classes_;
    std::uint64_t init_seed_;
    std::vector<LayerPtr> layers_;
    std::vector<std::size_t> offsets_;  // per-layer param offsets
    std::vector<double> params_;

    Tensor run_forward(const Tensor& x, std::vector<Ctx>& ctxs) const;
    Tensor run_backward(const Tensor& dlogits, const std::vector<Ctx>& ctxs,
                        std::span<double> grad) const;
    Tensor adapt_input(const Tensor& x) const;
    Tensor unadapt_input_grad(const Tensor& dx, const Tensor& x_like) const;
    bool is_recurrent() const;
};

double softmax_cross_entropy(const Tensor& logits, int label, Tensor* dlogits);

void save_checkpoint(const Model& model, const std::string& dir);
Model load_checkpoint(const std::string& dir);

// Max relative gradient error of analytic vs central finite differences
// over both the input and every parameter, sampled on seeded positions.
struct FdReport {
    double max_rel_err_input = 0.0;
    double max_rel_err_params = 0.0;
};
FdReport fd_check(Model& model, const Tensor& x, int label, double h = 1e-3,
                  std::size_t max_probes = 64, std::uint64_t seed = 0);

}  // namespace rffi::nn
