#pragma once

#include <string>
#include <utility>

#include "rffi/dataset.hpp"
#include "rffi/model.hpp"

namespace rffi::train {

using data::Dataset;
using nn::Model;

struct TrainConfig {
    double val_ratio = 0.1;
    double lr = 1e-4;  // Adam
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double lr_reduce_factor = 0.2;
    int lr_patience = 10;        // epochs without improvement before a drop
    int early_stop_patience = 30;
    int batch_size = 32;
    int max_epochs = 300;
    std::uint64_t shuffle_seed = 0;
    double min_improvement = 1e-6;  // absolute val-loss decrease that counts

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct History {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_loss = 0.0;

    std::string to_csv() const;
};

// Label-stratified split; validation gets round(val_ratio * n_c) of each
// class. Throws when any class has fewer than 2 examples.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_ratio,
                                          std::uint64_t seed);

// Adam + reduce-on-plateau + early stopping; the model ends up with the
// parameters of the best validation epoch.
History fit(Model& model, const Dataset& train_set, const Dataset& val_set,
              const TrainConfig& cfg);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<std::vector<int>> confusion;  // [true][pred]
    double mean_loss = 0.0;
};

EvalResult evaluate(const Model& model, const Dataset& ds);

}  // namespace rffi::train
