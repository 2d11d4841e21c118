#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mugl/data.hpp"
#include "mugl/kinematics.hpp"
#include "mugl/params.hpp"
#include "mugl/sequence.hpp"
#include "mugl/tape.hpp"

namespace mugl {

/// Architecture hyperparameters. Channel lists drive the stage counts: the
/// local encoder runs one stride-1 spatial block then one stride-2 block per
/// remaining entry; decoders double a seed_timesteps-long feature map once
/// per stage, so timesteps must equal seed_timesteps * 2^(list size - 1).
struct ModelConfig {
    int timesteps = 16;
    int joints = 8;
    int persons = 2;
    int num_classes = 4;
    int num_viewpoints = 2;
    int latent_dim = 32;
    double theta_s = 0.97;
    std::string skeleton_preset = "humanoid8";

    std::vector<int> enc_local_channels = {8, 16, 32};
    std::vector<int> enc_global_channels = {8, 16};
    std::vector<int> enc_length_channels = {4, 8};
    int f_local = 64;
    int f_global = 32;
    int f_length = 16;
    int encoder_hidden = 128;
    int class_embed = 16;
    int view_embed = 8;

    int zcv_dim = 128;
    int seed_timesteps = 4;
    std::vector<int> dec_local_channels = {32, 16, 8};
    std::vector<int> dec_global_channels = {16, 8, 8};
    std::vector<int> dec_length_channels = {8, 4, 4};
    int dec_mlp_hidden = 64;

    double leaky_slope = 0.2;
    double logvar_clamp = 10.0;
    std::uint64_t init_seed = 1;

    void validate() const;
};

/// Input batch in network layout. `local` stacks the 6D components as
/// channels over a (time x joints*persons) grid; `global` stacks per-person
/// xyz as channels over time; `length` is the index-sequence code.
struct ModelBatch {
    int N = 0;
    Tensor local;  // (N, 6, T, J*P)
    Tensor global; // (N, 3*P, T)
    Tensor length; // (N, 1, T)
    std::vector<std::int64_t> class_idx;
    std::vector<std::int64_t> view_idx;
};

struct Posterior {
    Var mu;
    Var logvar;
};

/// The MUGL network: three encoders into a class-conditioned diagonal
/// Gaussian posterior, a learnable per-class Gaussian-mixture prior, and
/// three decoders off a conditioned latent.
class MuglModel {
public:
    explicit MuglModel(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    const Skeleton& skeleton() const { return skeleton_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    ModelBatch make_batch(const Dataset& ds, const std::vector<int>& indices) const;

    Posterior encode(Tape& tape, const ModelBatch& batch);

    /// z = mu + sigma * eps with a deterministic draw from `seed`.
    Var reparameterize(Tape& tape, const Posterior& post, std::uint64_t seed);

    /// Concatenate class and viewpoint embeddings onto z and project to the
    /// shared decoder input.
    Var condition_latent(Tape& tape, Var z, const std::vector<std::int64_t>& class_idx,
                         const std::vector<std::int64_t>& view_idx);

    /// (N*T, P*J*6); raw decoder output plus the identity-rotation bias.
    Var decode_local(Tape& tape, Var zcv);

    /// (N, T, P*3): first person trajectory then per-person displacements.
    Var decode_global(Tape& tape, Var zcv);

    /// (N, T) non-decreasing code in (0,1): relu, cumulative sum, sigmoid.
    Var decode_length_code(Tape& tape, Var zcv);

    /// Prior component rows for a batch of class labels.
    Var prior_mu_rows(Tape& tape, const std::vector<std::int64_t>& class_idx);
    Var prior_logvar_rows(Tape& tape, const std::vector<std::int64_t>& class_idx);

    /// Sample `count` sequences of one class from the learned prior and
    /// decode them. Classes with person_count 1 replicate the first person.
    /// Generation conditions on the default viewpoint 0.
    std::vector<ActionSequence> generate(int class_label, int count, std::uint64_t seed,
                                         int person_count);

    /// FK positions (N*T*P, J*3) from the local decoder output, on tape.
    Var fk_from_local(Tape& tape, Var local6d, int batch_n);

private:
    ModelConfig cfg_;
    Skeleton skeleton_;
    ParameterStore params_;

    struct Affine {
        int w = -1, b = -1;
    };
    struct Conv {
        int w = -1, b = -1;
    };
    struct ResBlock {
        Conv c1, c2, proj;
        bool projected = false;
        int stride_h = 1, stride_w = 1;
    };

    // encoder
    std::vector<ResBlock> enc_local_blocks_;
    Affine enc_local_out_;
    std::vector<Conv> enc_global_convs_;
    Affine enc_global_out_;
    std::vector<Conv> enc_length_convs_;
    Affine enc_length_out_;
    int enc_class_embed_ = -1, enc_view_embed_ = -1;
    Affine enc_hidden_, enc_head_;

    // latent conditioning + prior
    int lat_class_embed_ = -1, lat_view_embed_ = -1;
    Affine zcv_proj_;
    int prior_mu_ = -1, prior_logvar_ = -1;

    // decoders
    Affine dec_local_seed_;
    std::vector<Conv> dec_local_convs_;
    Affine dec_mlp_hidden_, dec_mlp_out_;
    Affine dec_global_seed_;
    std::vector<Conv> dec_global_convs_;
    Affine dec_global_out_;
    Affine dec_length_seed_;
    std::vector<Conv> dec_length_convs_;
    Conv dec_length_final_;

    std::int64_t enc_local_flat_ = 0, enc_global_flat_ = 0, enc_length_flat_ = 0;

    void build_parameters();
    Affine add_affine(class Rng& rng, const std::string& name, int in, int out);
    Conv add_conv(class Rng& rng, const std::string& name, int in, int out, int kh, int kw);
    Var run_affine(Tape& t, const Affine& a, Var x);
    Var embed(Tape& t, int table, const std::vector<std::int64_t>& idx);
};

} // namespace mugl
