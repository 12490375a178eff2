#include "rffi/model.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "rffi/io.hpp"

namespace rffi::nn {

namespace {
// Fixed number of deterministic accumulation slots for batched gradients.
// Examples map to slots by index, each slot reduces in order, and slots are
// then summed in order, so results do not depend on the worker count.
constexpr std::size_t kSlots = 8;
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

std::string arch_name(ArchId id) {
    switch (id) {
        case ArchId::CNN1: return "CNN1";
        case ArchId::CNN2: return "CNN2";
        case ArchId::LSTM1: return "LSTM1";
        case ArchId::LSTM2: return "LSTM2";
        case ArchId::GRU1: return "GRU1";
        case ArchId::GRU2: return "GRU2";
    }
    fail(ErrorKind::InvalidParams, "unknown arch id");
}

ArchId arch_from_name(const std::string& name) {
    if (name == "CNN1") return ArchId::CNN1;
    if (name == "CNN2") return ArchId::CNN2;
    if (name == "LSTM1") return ArchId::LSTM1;
    if (name == "LSTM2") return ArchId::LSTM2;
    if (name == "GRU1") return ArchId::GRU1;
    if (name == "GRU2") return ArchId::GRU2;
    fail(ErrorKind::InvalidParams, "unknown-arch: " + name);
}

bool Model::is_recurrent() const {
    return arch_ == ArchId::LSTM1 || arch_ == ArchId::LSTM2 ||
           arch_ == ArchId::GRU1 || arch_ == ArchId::GRU2;
}

Model::Model(ArchId arch, std::vector<std::size_t> input_shape, int n_classes,
             std::uint64_t init_seed)
    : arch_(arch), input_shape_(std::move(input_shape)), n_classes_(n_classes),
      init_seed_(init_seed) {
    require(input_shape_.size() == 2, ErrorKind::InvalidParams,
            "model input shape must be rows x cols");
    const std::size_t rows = input_shape_[0], cols = input_shape_[1];
    const std::size_t nc = std::size_t(n_classes_);

    auto add = [&](LayerPtr l) { layers_.push_back(std::move(l)); };

    switch (arch_) {
        case ArchId::CNN1: {
            add(make_conv2d({rows, cols, 1}, 32, 7, 7));
            add(make_relu({rows, cols, 32}));
            add(make_maxpool2d({rows, cols, 32}));
            const std::size_t h = rows / 2, w = cols / 2;
            add(make_residual({h, w, 32}, 32));
            add(make_residual({h, w, 32}, 64));
            add(make_global_avgpool({h, w, 64}));
            add(make_dense(64, nc));
            break;
        }
        case ArchId::CNN2: {
            add(make_conv2d({rows, cols, 1}, 32, 7, 7));
            add(make_relu({rows, cols, 32}));
            add(make_maxpool2d({rows, cols, 32}));
            const std::size_t h = rows / 2, w = cols / 2;
            add(make_residual({h, w, 32}, 64));
            add(make_global_avgpool({h, w, 64}));
            add(make_dense(64, nc));
            break;
        }
        case ArchId::LSTM1:
        case ArchId::LSTM2: {
            const std::size_t u1 = arch_ == ArchId::LSTM1 ? 256 : 128;
            add(make_transpose({rows, cols}));
            add(make_lstm(cols, rows, u1));
            add(make_lstm(cols, u1, 256));
            add(make_time_avgpool({cols, 256}));
            add(make_dense(256, nc));
            break;
        }
        case ArchId::GRU1:
        case ArchId::GRU2: {
            const std::size_t u1 = arch_ == ArchId::GRU1 ? 256 : 128;
            add(make_transpose({rows, cols}));
            add(make_gru(cols, rows, u1));
            add(make_gru(cols, u1, 256));
            add(make_time_avgpool({cols, 256}));
            add(make_dense(256, nc));
            break;
        }
    }

    std::size_t total = 0;
    for (const auto& l : layers_) {
        offsets_.push_back(total);
        total += l->param_count();
    }
    params_.assign(total, 0.0);
    Rng rng(seed_combine(init_seed_, "init"));
    for (std::size_t i = 0; i < layers_.size(); ++i)
        layers_[i]->init(
            std::span<double>(params_.data() + offsets_[i], layers_[i]->param_count()),
            rng);
}

Tensor Model::adapt_input(const Tensor& x) const {
    require(x.shape.size() == 2 && x.shape[0] == input_shape_[0] &&
                x.shape[1] == input_shape_[1],
            ErrorKind::InvalidParams, "shape-mismatch: model input");
    if (is_recurrent()) return x;
    Tensor out = x;
    out.shape = {x.shape[0], x.shape[1], 1};
    return out;
}

Tensor Model::unadapt_input_grad(const Tensor& dx, const Tensor& x_like) const {
    Tensor out = dx;
    out.shape = x_like.shape;
    return out;
}

Tensor Model::run_forward(const Tensor& x, std::vector<Ctx>& ctxs) const {
    ctxs.resize(layers_.size());
    Tensor t = adapt_input(x);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        t = layers_[i]->forward(
            t,
            std::span<const double>(params_.data() + offsets_[i],
                                    layers_[i]->param_count()),
            ctxs[i]);
#ifndef NDEBUG
        require(t.all_finite(), ErrorKind::NumericFailure,
                "non-finite-activation after layer " + std::to_string(i));
#endif
    }
    return t;
}

Tensor Model::run_backward(const Tensor& dlogits, const std::vector<Ctx>& ctxs,
                           std::span<double> grad) const {
    Tensor d = dlogits;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        std::span<double> gslice =
            grad.empty() ? std::span<double>{}
                         : grad.subspan(offsets_[i], layers_[i]->param_count());
        d = layers_[i]->backward(
            d,
            std::span<const double>(params_.data() + offsets_[i],
                                    layers_[i]->param_count()),
            ctxs[i], gslice);
    }
    return d;
}

double softmax_cross_entropy(const Tensor& logits, int label, Tensor* dlogits) {
    const std::size_t n = logits.size();
    require(label >= 0 && std::size_t(label) < n, ErrorKind::InvalidParams,
            "label out of range");
    double mx = logits.data[0];
    for (double v : logits.data) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits.data) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    if (dlogits) {
        *dlogits = Tensor({n});
        for (std::size_t i = 0; i < n; ++i)
            dlogits->data[i] = std::exp(logits.data[i] - lse);
        dlogits->data[std::size_t(label)] -= 1.0;
    }
    return lse - logits.data[std::size_t(label)];
}

ForwardResult Model::forward(const Tensor& x) const {
    std::vector<Ctx> ctxs;
    ForwardResult r;
    r.logits = run_forward(x, ctxs);
    double mx = r.logits.data[0];
    for (double v : r.logits.data) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : r.logits.data) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    r.probs = Tensor({r.logits.size()});
    for (std::size_t i = 0; i < r.logits.size(); ++i)
        r.probs.data[i] = std::exp(r.logits.data[i] - lse);
    return r;
}

int Classifier::predict(const Tensor& x) const {
    const auto r = forward(x);
    return int(std::max_element(r.logits.data.begin(), r.logits.data.end()) -
               r.logits.data.begin());
}

double Model::example_gradient(const Tensor& x, int y, std::span<double> grad) const {
    std::vector<Ctx> ctxs;
    const Tensor logits = run_forward(x, ctxs);
    Tensor dlogits;
    const double loss = softmax_cross_entropy(logits, y, &dlogits);
    run_backward(dlogits, ctxs, grad);
    return loss;
}

double Model::loss_and_param_gradients(const std::vector<const Tensor*>& xs,
                                       const std::vector<int>& ys,
                                       std::vector<double>& grad) const {
    require(!xs.empty() && xs.size() == ys.size(), ErrorKind::InvalidParams,
            "empty or mismatched batch");
    require(grad.size() == params_.size(), ErrorKind::InvalidParams,
            "gradient buffer size mismatch");

    const std::size_t n = xs.size();
    const double inv = 1.0 / double(n);

    if (is_recurrent()) {
        // Layer-by-layer batched pass; parameter gradients accumulate in a
        // fixed order inside each layer, so one shared buffer suffices.
        std::vector<std::vector<Ctx>> ctxs(layers_.size());
        std::vector<std::vector<Tensor>> acts(layers_.size());
        std::vector<const Tensor*> cur = xs;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            layers_[i]->forward_batch(
                cur,
                std::span<const double>(params_.data() + offsets_[i],
                                        layers_[i]->param_count()),
                ctxs[i], acts[i]);
            cur.clear();
            for (const auto& t : acts[i]) cur.push_back(&t);
        }
        double loss = 0.0;
        std::vector<Tensor> d(n);
        for (std::size_t i = 0; i < n; ++i)
            loss += softmax_cross_entropy(acts.back()[i], ys[i], &d[i]);
        for (std::size_t i = layers_.size(); i-- > 0;) {
            std::vector<Tensor> dxs;
            layers_[i]->backward_batch(
                d,
                std::span<const double>(params_.data() + offsets_[i],
                                        layers_[i]->param_count()),
                ctxs[i],
                std::span<double>(grad.data() + offsets_[i],
                                  layers_[i]->param_count()),
                dxs);
            d = std::move(dxs);
        }
        for (auto& g : grad) g *= inv;
        return loss * inv;
    }

    const std::size_t n_slots = std::min(kSlots, n);
    std::vector<std::vector<double>> slot_grad(n_slots);
    std::vector<double> losses(n, 0.0);

#pragma omp parallel for schedule(static, 1)
    for (std::size_t s = 0; s < n_slots; ++s) {
        slot_grad[s].assign(params_.size(), 0.0);
        for (std::size_t i = s; i < n; i += n_slots)
            losses[i] = example_gradient(*xs[i], ys[i], slot_grad[s]);
    }

    for (std::size_t s = 0; s < n_slots; ++s)
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += slot_grad[s][j];
    for (auto& g : grad) g *= inv;
    double loss = 0.0;
    for (double l : losses) loss += l;
    return loss * inv;
}

std::vector<Tensor> Model::batch_logits(const std::vector<const Tensor*>& xs) const {
    std::vector<Tensor> out(xs.size());
    if (xs.empty()) return out;
    if (is_recurrent()) {
        std::vector<std::vector<Ctx>> ctxs(layers_.size());
        std::vector<std::vector<Tensor>> acts(layers_.size());
        std::vector<const Tensor*> cur = xs;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            layers_[i]->forward_batch(
                cur,
                std::span<const double>(params_.data() + offsets_[i],
                                        layers_[i]->param_count()),
                ctxs[i], acts[i]);
            cur.clear();
            for (const auto& t : acts[i]) cur.push_back(&t);
        }
        return std::move(acts.back());
    }
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::vector<Ctx> c;
        out[i] = run_forward(*xs[i], c);
    }
    return out;
}

Tensor Model::input_gradient(const Tensor& x, int label) const {
    std::vector<Ctx> ctxs;
    const Tensor logits = run_forward(x, ctxs);
    Tensor dlogits;
    softmax_cross_entropy(logits, label, &dlogits);
    const Tensor dx = run_backward(dlogits, ctxs, {});
    return unadapt_input_grad(dx, x);
}

Tensor Model::logit_input_gradient(const Tensor& x, int k) const {
    require(k >= 0 && k < n_classes_, ErrorKind::InvalidParams, "logit index");
    std::vector<Ctx> ctxs;
    run_forward(x, ctxs);
    Tensor seed({std::size_t(n_classes_)});
    seed.data[std::size_t(k)] = 1.0;
    const Tensor dx = run_backward(seed, ctxs, {});
    return unadapt_input_grad(dx, x);
}

std::vector<Tensor> Model::logit_input_gradients(const Tensor& x,
                                                 const std::vector<int>& ks,
                                                 Tensor* logits_out) const {
    std::vector<Ctx> ctxs;
    const Tensor logits = run_forward(x, ctxs);
    if (logits_out) *logits_out = logits;
    std::vector<Tensor> out(ks.size());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < ks.size(); ++i) {
        Tensor seed({std::size_t(n_classes_)});
        seed.data[std::size_t(ks[i])] = 1.0;
        out[i] = unadapt_input_grad(run_backward(seed, ctxs, {}), x);
    }
    return out;
}

nlohmann::json Model::describe() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) layers.push_back(l->describe());
    return {{"arch", arch_name(arch_)},
            {"input_shape", input_shape_},
            {"n_classes", n_classes_},
            {"init_seed", init_seed_},
            {"param_count", params_.size()},
            {"layers", layers}};
}

void save_checkpoint(const Model& model, const std::string& dir) {
    io::fs::create_directories(dir);
    const auto w_path = io::fs::path(dir) / "weights.f64";
    io::write_f64(w_path, model.params());
    nlohmann::json a = model.describe();
    a["kind"] = "checkpoint";
    a["format_version"] = kCheckpointVersion;
    a["weights_crc32"] = io::file_crc32(w_path);
    io::write_json(io::fs::path(dir) / "arch.json", a);
}

Model load_checkpoint(const std::string& dir) {
    const auto a = io::read_json(io::fs::path(dir) / "arch.json");
    require(a.value("kind", "") == "checkpoint", ErrorKind::Verification,
            "not a checkpoint directory: " + dir);
    require(a["format_version"].get<std::uint32_t>() == kCheckpointVersion,
            ErrorKind::Verification, "format-version-mismatch in " + dir);
    const auto w_path = io::fs::path(dir) / "weights.f64";
    require(io::file_crc32(w_path) == a["weights_crc32"].get<std::uint32_t>(),
            ErrorKind::Verification, "checksum-mismatch in " + dir);
    Model m(arch_from_name(a["arch"]), a["input_shape"].get<std::vector<std::size_t>>(),
            a["n_classes"], a["init_seed"]);
    auto weights = io::read_f64(w_path);
    require(weights.size() == m.param_count(), ErrorKind::Verification,
            "weight count mismatch in " + dir);
    m.params() = std::move(weights);
    return m;
}

FdReport fd_check(Model& model, const Tensor& x, int label, double h,
                  std::size_t max_probes, std::uint64_t seed) {
    FdReport rep;
    std::vector<double> grad(model.param_count(), 0.0);
    model.example_gradient(x, label, grad);
    const Tensor dx = model.input_gradient(x, label);

    auto loss_at = [&](const Tensor& xx) {
        const auto logits = model.forward(xx).logits;
        return softmax_cross_entropy(logits, label, nullptr);
    };

    double scale_in = 0.0;
    for (double v : dx.data) scale_in = std::max(scale_in, std::fabs(v));
    Rng rng(seed_combine(seed, "fd"));
    const std::size_t n_in = std::min<std::size_t>(max_probes, x.size());
    for (std::size_t p = 0; p < n_in; ++p) {
        const std::size_t i =
            x.size() <= max_probes ? p : std::size_t(rng.uniform_int(x.size()));
        Tensor xp = x, xm = x;
        xp.data[i] += h;
        xm.data[i] -= h;
        const double fd = (loss_at(xp) - loss_at(xm)) / (2.0 * h);
        rep.max_rel_err_input =
            std::max(rep.max_rel_err_input,
                     std::fabs(fd - dx.data[i]) / std::max(scale_in, 1e-8));
    }

    double scale_p = 0.0;
    for (double v : grad) scale_p = std::max(scale_p, std::fabs(v));
    auto& params = model.params();
    const std::size_t n_p = std::min<std::size_t>(max_probes, params.size());
    for (std::size_t p = 0; p < n_p; ++p) {
        const std::size_t i = params.size() <= max_probes
                                  ? p
                                  : std::size_t(rng.uniform_int(params.size()));
        const double keep = params[i];
        params[i] = keep + h;
        const double lp = loss_at(x);
        params[i] = keep - h;
        const double lm = loss_at(x);
        params[i] = keep;
        const double fd = (lp - lm) / (2.0 * h);
        rep.max_rel_err_params =
            std::max(rep.max_rel_err_params,
                     std::fabs(fd - grad[i]) / std::max(scale_p, 1e-8));
    }
    return rep;
}

}  // namespace rffi::nn
