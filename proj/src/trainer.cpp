#include "rffi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rffi/rng.hpp"

namespace rffi::train {

void TrainConfig::validate() const {
    require(val_ratio > 0.0 && val_ratio < 1.0, ErrorKind::InvalidParams,
            "val_ratio out of (0,1)");
    require(lr_patience > 0 && early_stop_patience > 0, ErrorKind::InvalidParams,
            "patience values must be positive");
    require(batch_size >= 1 && max_epochs >= 1, ErrorKind::InvalidParams,
            "batch_size/max_epochs must be positive");
    require(lr > 0.0 && lr_reduce_factor > 0.0 && lr_reduce_factor < 1.0,
            ErrorKind::InvalidParams, "bad learning-rate settings");
}

std::string History::to_csv() const {
    std::ostringstream os;
    os << "epoch,lr,train_loss,val_loss,val_acc\n";
    os.precision(10);
    for (const auto& e : epochs)
        os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_loss
           << ',' << e.val_acc << '\n';
    return os.str();
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_ratio,
                                          std::uint64_t seed) {
    require(!ds.empty(), ErrorKind::InvalidParams, "split_dataset: empty dataset");
    std::vector<std::vector<std::size_t>> by_class(std::size_t(ds.n_classes));
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[std::size_t(ds.examples[i].y)].push_back(i);

    Dataset train_set, val_set;
    train_set.n_classes = val_set.n_classes = ds.n_classes;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        require(idx.size() >= 2, ErrorKind::InvalidParams,
                "too-few-examples for class " + std::to_string(c));
        Rng rng(seed_combine(seed_combine(seed, "split"), c));
        rng.shuffle(idx);
        const std::size_t n_val = std::size_t(std::llround(val_ratio * double(idx.size())));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            (k < n_val ? val_set : train_set).examples.push_back(ds.examples[idx[k]]);
        }
    }
    return {std::move(train_set), std::move(val_set)};
}

namespace {

struct Adam {
    std::vector<double> m, v;
    std::int64_t t = 0;

    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad,
              const TrainConfig& cfg, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
};

double mean_val_loss(const Model& model, const Dataset& ds, double* acc_out) {
    const auto xs = ds.xs();
    const auto ys = ds.labels();
    const auto logits = model.batch_logits(xs);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        loss += nn::softmax_cross_entropy(logits[i], ys[i], nullptr);
        const auto best = std::max_element(logits[i].data.begin(), logits[i].data.end());
        if (std::size_t(best - logits[i].data.begin()) == std::size_t(ys[i])) ++correct;
    }
    if (acc_out) *acc_out = double(correct) / double(logits.size());
    return loss / double(logits.size());
}

}  // namespace

History fit(Model& model, const Dataset& train_set, const Dataset& val_set,
              const TrainConfig& cfg) {
    cfg.validate();
    require(!train_set.empty() && !val_set.empty(), ErrorKind::InvalidParams,
            "train: empty split");

    History hist;
    Adam adam(model.param_count());
    double lr = cfg.lr;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = model.params();
    int plateau = 0, since_best = 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> grad(model.param_count());
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng rng(seed_combine(seed_combine(cfg.shuffle_seed, "epoch"),
                             std::uint64_t(epoch)));
        rng.shuffle(order);

        double train_loss = 0.0;
        for (std::size_t pos = 0; pos < order.size();
             pos += std::size_t(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), pos + std::size_t(cfg.batch_size));
            std::vector<const Tensor*> xs;
            std::vector<int> ys;
            xs.reserve(end - pos);
            for (std::size_t k = pos; k < end; ++k) {
                xs.push_back(&train_set.examples[order[k]].x);
                ys.push_back(train_set.examples[order[k]].y);
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            const double loss = model.loss_and_param_gradients(xs, ys, grad);
            require(std::isfinite(loss), ErrorKind::NumericFailure,
                    "divergence: non-finite training loss at epoch " +
                        std::to_string(epoch));
            adam.step(model.params(), grad, cfg, lr);
            train_loss += loss * double(end - pos);
        }
        train_loss /= double(order.size());

        double val_acc = 0.0;
        const double val_loss = mean_val_loss(model, val_set, &val_acc);
        require(std::isfinite(val_loss), ErrorKind::NumericFailure,
                "divergence: non-finite validation loss");
        hist.epochs.push_back({epoch, lr, train_loss, val_loss, val_acc});

        if (val_loss < best_val - cfg.min_improvement) {
            best_val = val_loss;
            best_params = model.params();
            hist.best_epoch = epoch;
            plateau = 0;
            since_best = 0;
        } else {
            ++plateau;
            ++since_best;
        }
        if (since_best >= cfg.early_stop_patience) break;
        if (plateau >= cfg.lr_patience) {
            lr *= cfg.lr_reduce_factor;
            plateau = 0;
        }
    }

    model.params() = std::move(best_params);
    hist.best_val_loss = best_val;
    return hist;
}

EvalResult evaluate(const Model& model, const Dataset& ds) {
    require(!ds.empty(), ErrorKind::InvalidParams, "evaluate: empty dataset");
    EvalResult res;
    res.confusion.assign(std::size_t(ds.n_classes),
                         std::vector<int>(std::size_t(ds.n_classes), 0));
    const auto xs = ds.xs();
    const auto ys = ds.labels();
    const auto logits = model.batch_logits(xs);
    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto best = std::max_element(logits[i].data.begin(), logits[i].data.end());
        const int pred = int(best - logits[i].data.begin());
        res.confusion[std::size_t(ys[i])][std::size_t(pred)]++;
        if (pred == ys[i]) ++correct;
        loss += nn::softmax_cross_entropy(logits[i], ys[i], nullptr);
    }
    res.accuracy = double(correct) / double(ds.size());
    res.mean_loss = loss / double(ds.size());
    return res;
}

}  // namespace rffi::train
