#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mugl/data.hpp"
#include "mugl/model.hpp"
#include "mugl/tape.hpp"
#include "mugl/tensor.hpp"

namespace mugl {

struct LossWeights {
    double lambda_rot = 10.0;
    double lambda_global = 1.0;
    double lambda_len = 2.0;
    double kl_scale = 1.0; // multiplies the annealed KL weight
    double theta_s = 0.97;
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 100;
    double lr = 0.015;
    double lr_decay = 0.5;
    int lr_step = 10;
    int kl_cycles = 4;
    double grad_clip = 5.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double leg_boost = 1.0;
    std::uint64_t seed = 1;
    int eval_every = 10;        // reconstruction check cadence, epochs
    double target_recon = -1.0; // stop once masked 3D MSE drops below (<0: run all epochs)

    void validate() const;
};

/// Per-batch loss targets in the layouts the decoders emit. mask_t is the
/// (N,T) timestep validity mask; losses expand it over trailing dims.
struct BatchTargets {
    Tensor local6;  // (N*T, P*J*6)
    Tensor local3;  // (N*T*P, J*3)
    Tensor global;  // (N, T, 3*P)
    Tensor code;    // (N, T)
    Tensor mask_t;  // (N, T)
};

BatchTargets make_targets(const Dataset& ds, const std::vector<int>& indices,
                          const Skeleton& skeleton);

/// lambda_rot * masked 6D MSE + masked 3D MSE, both masked means over the
/// true extent.
Var loss_local(Tape& tape, Var pred6, Var pred3, const Tensor& target6, const Tensor& target3,
               const Tensor& mask_t, double lambda_rot);

/// (lambda_global * masked global MSE, lambda_len * full-length code MSE).
std::pair<Var, Var> loss_global_and_len(Tape& tape, Var pred_global, Var pred_code,
                                        const Tensor& target_global, const Tensor& target_code,
                                        const Tensor& mask_t, double lambda_global,
                                        double lambda_len);

/// Closed-form diagonal-Gaussian KL, summed over dimensions.
double kl_divergence(const std::vector<double>& mu_q, const std::vector<double>& logvar_q,
                     const std::vector<double>& mu_p, const std::vector<double>& logvar_p);

/// local + lambda_global*global + lambda_len*len + lambda_kl*kl over raw
/// (unweighted) component values.
Var total_loss(Tape& tape, Var local, Var global_raw, Var len_raw, Var kl,
               const LossWeights& weights, double lambda_kl);

/// Cyclic schedule: each of `cycles` equal spans ramps 0 to 1 over its first
/// half and holds 1 over the second.
double annealing_weight(int epoch, int total_epochs, int cycles);

double lr_at(int epoch, const TrainConfig& cfg);

/// Inverse-frequency per-sample weights (optionally boosted for leg-movement
/// classes), renormalized to mean 1. Throws EmptyClass when a declared class
/// has no samples.
std::vector<double> sampling_weights(const std::vector<int>& sample_classes,
                                     const std::vector<bool>& leg_flags, double leg_boost);

struct EpochStats {
    int epoch = 0;
    double loss_local = 0.0;
    double loss_global = 0.0; // raw
    double loss_len = 0.0;    // raw
    double loss_kl = 0.0;
    double loss_total = 0.0;
    double lambda_kl = 0.0;
    double lr = 0.0;
};

struct FitResult {
    std::vector<EpochStats> history;
    int epochs_run = 0;
    double final_recon_mse3d = -1.0;
};

/// Mean masked 3D reconstruction error over the dataset, decoding from the
/// posterior mean.
double reconstruction_mse3d(MuglModel& model, const Dataset& ds, int chunk = 64);

/// Full training loop: class-balanced sampling with replacement, Adam with
/// the step-decay schedule, cyclic KL annealing, global-norm clipping.
/// Deterministic for a fixed seed. Writes the checkpoint and a CSV history
/// when paths are given. Throws NonFinite naming the offending term if a
/// loss leaves the reals.
FitResult fit(MuglModel& model, const Dataset& ds, const TrainConfig& cfg,
              const LossWeights& weights, const std::string& checkpoint_path = "",
              const std::string& history_path = "");

} // namespace mugl
