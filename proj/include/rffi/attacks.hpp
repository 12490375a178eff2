#pragma once

#include <optional>
#include <string>

#include "rffi/dataset.hpp"
#include "rffi/model.hpp"

namespace rffi::attack {

using data::Dataset;
using nn::Classifier;
using nn::Model;

enum class Norm { L2, LInf };

struct Perturbation {
    Tensor v;
    Norm norm_p = Norm::LInf;
    double epsilon = 0.0;
    std::string method;      // "fgsm", "pgd", "deepfool", "uap", "awgn"
    std::string surrogate;   // arch name, when applicable
    std::uint64_t seed = 0;
    int iterations_used = 0;
    bool converged = true;
    double achieved_sr = 0.0;  // generation-set SR (uap only)

    void check_budget() const;  // |v|_p <= epsilon + 1e-9, all finite
};

struct AttackConfig {
    std::string method = "fgsm";  // fgsm | pgd | uap | awgn
    bool targeted = false;
    int y_tar = -1;
    double epsilon = 0.1;
    double alpha = 0.025;   // pgd step
    int pgd_iters = 8;      // K
    bool pgd_random_init = true;
    bool strict_alg_clip = false;  // clip to [x-alpha, x+alpha] as printed
    double desired_sr = 0.8;       // delta (uap)
    int max_passes = 5;            // T (uap)
    Norm norm_p = Norm::LInf;
    std::optional<double> psr_db;  // rescale target, when set
    std::uint64_t seed = 0;

    void validate() const;
};

// x' = x + v
Tensor apply(const Tensor& x, const Perturbation& v);

// 10 log10(mean(v^2) / p_x); -inf for an all-zero perturbation
double psr_db(const Tensor& v, double p_x);

// mean per-element power of a dataset's inputs (the PSR reference)
double reference_power(const Dataset& ds);

Perturbation scale_to_psr(const Perturbation& v, double p_x, double target_psr_db);

Perturbation fgsm(const Classifier& model, const Tensor& x, int label,
                  const AttackConfig& cfg);

Perturbation pgd(const Classifier& model, const Tensor& x, int label,
                 const AttackConfig& cfg);

// Minimal-perturbation boundary search on the logits; eta is the overshoot.
struct DeepFoolResult {
    Tensor v;
    int iterations = 0;
    bool flipped = false;
};
DeepFoolResult deepfool(const Classifier& model, const Tensor& x, double eta = 0.02,
                        int max_iters = 50);

Perturbation uap(const Classifier& surrogate, const Dataset& gen_set,
                 const AttackConfig& cfg);

Perturbation awgn_baseline(const std::vector<std::size_t>& shape, double p_x,
                           double target_psr_db, std::uint64_t seed);

void save_perturbation(const Perturbation& v, const std::string& dir);
Perturbation load_perturbation(const std::string& dir);

}  // namespace rffi::attack
