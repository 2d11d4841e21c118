#include "mugl/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mugl/errors.hpp"
#include "mugl/rng.hpp"

namespace mugl {

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1 || lr_step < 1 || kl_cycles < 1)
        throw ConfigError("train config fields must be positive");
    if (lr <= 0.0 || lr_decay <= 0.0 || lr_decay > 1.0)
        throw ConfigError("learning rate schedule out of range");
}

BatchTargets make_targets(const Dataset& ds, const std::vector<int>& indices,
                          const Skeleton& skeleton) {
    const int T = ds.manifest.timesteps;
    const int P = ds.manifest.persons;
    const int J = ds.manifest.joint_count();
    const int N = static_cast<int>(indices.size());

    BatchTargets tg;
    tg.local6 = Tensor({static_cast<std::int64_t>(N) * T, static_cast<std::int64_t>(P) * J * 6});
    tg.local3 = Tensor({static_cast<std::int64_t>(N) * T * P, static_cast<std::int64_t>(J) * 3});
    tg.global = Tensor({N, T, static_cast<std::int64_t>(3) * P});
    tg.code = Tensor({N, T});
    tg.mask_t = Tensor({N, T});

    for (int n = 0; n < N; ++n) {
        const ActionSequence& s =
            ds.samples[static_cast<std::size_t>(indices[static_cast<std::size_t>(n)])].seq;
        for (int t = 0; t < T; ++t) {
            std::copy_n(s.local.at(t, 0, 0), static_cast<std::size_t>(P) * J * 6,
                        tg.local6.data() + (static_cast<std::int64_t>(n) * T + t) * P * J * 6);
            for (int p = 0; p < P; ++p) {
                PoseRotations rot;
                rot.rotations.resize(static_cast<std::size_t>(J));
                for (int j = 0; j < J; ++j)
                    rot.rotations[static_cast<std::size_t>(j)] = rot6d_to_matrix(s.local.get(t, p, j));
                const JointPositions pos = forward_kinematics(rot, skeleton.rest, skeleton.tree);
                double* dst = tg.local3.data() +
                              ((static_cast<std::int64_t>(n) * T + t) * P + p) * J * 3;
                for (int j = 0; j < J; ++j)
                    for (int c = 0; c < 3; ++c) dst[j * 3 + c] = pos.positions[static_cast<std::size_t>(j)][c];
            }
            double* grow = tg.global.data() + (static_cast<std::int64_t>(n) * T + t) * 3 * P;
            for (int c = 0; c < 3; ++c) grow[c] = s.global.g1[static_cast<std::size_t>(t)][c];
            for (int p = 1; p < P; ++p)
                for (int c = 0; c < 3; ++c)
                    grow[3 * p + c] = s.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)][c];
        }
        const LengthCode code = encode_length(s.length, T);
        for (int t = 0; t < T; ++t) {
            tg.code[static_cast<std::int64_t>(n) * T + t] = code.values[static_cast<std::size_t>(t)];
            tg.mask_t[static_cast<std::int64_t>(n) * T + t] = t < s.length ? 1.0 : 0.0;
        }
    }
    return tg;
}

namespace {

// Expand an (N,T) timestep mask to (N*T*rows_per_step, cols).
Tensor expand_mask(const Tensor& mask_t, std::int64_t rows_per_step, std::int64_t cols) {
    const std::int64_t steps = mask_t.size();
    Tensor out({steps * rows_per_step, cols});
    for (std::int64_t s = 0; s < steps; ++s) {
        const double m = mask_t[s];
        if (m == 0.0) continue;
        double* base = out.data() + s * rows_per_step * cols;
        for (std::int64_t i = 0; i < rows_per_step * cols; ++i) base[i] = m;
    }
    return out;
}

} // namespace

Var loss_local(Tape& /*tape*/, Var pred6, Var pred3, const Tensor& target6, const Tensor& target3,
               const Tensor& mask_t, double lambda_rot) {
    const Tensor& p6 = pred6.val();
    const Tensor& p3 = pred3.val();
    if (p6.size() != target6.size() || p3.size() != target3.size())
        throw ShapeMismatch("loss_local target sizes disagree");
    const std::int64_t steps = mask_t.size();
    Var l6 = masked_mse(pred6, target6, expand_mask(mask_t, 1, p6.size() / steps));
    const std::int64_t rows3 = p3.dim(0) / steps;
    Var l3 = masked_mse(pred3, target3, expand_mask(mask_t, rows3, p3.dim(1)));
    return add(scale(l6, lambda_rot), l3);
}

std::pair<Var, Var> loss_global_and_len(Tape& /*tape*/, Var pred_global, Var pred_code,
                                        const Tensor& target_global, const Tensor& target_code,
                                        const Tensor& mask_t, double lambda_global,
                                        double lambda_len) {
    const Tensor& pg = pred_global.val();
    if (pg.size() != target_global.size() || pred_code.val().size() != target_code.size())
        throw ShapeMismatch("loss_global_and_len target sizes disagree");
    const std::int64_t steps = mask_t.size();
    Var lg = masked_mse(pred_global, target_global, expand_mask(mask_t, 1, pg.size() / steps));
    // The code itself encodes the length, so the length loss runs unmasked
    // over all T entries.
    Var ll = mse(pred_code, target_code);
    return {scale(lg, lambda_global), scale(ll, lambda_len)};
}

double kl_divergence(const std::vector<double>& mu_q, const std::vector<double>& logvar_q,
                     const std::vector<double>& mu_p, const std::vector<double>& logvar_p) {
    if (mu_q.size() != logvar_q.size() || mu_q.size() != mu_p.size() ||
        mu_q.size() != logvar_p.size())
        throw ShapeMismatch("kl_divergence dims disagree");
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_q.size(); ++i) {
        const double dm = mu_q[i] - mu_p[i];
        acc += 0.5 * (std::exp(logvar_q[i] - logvar_p[i]) + dm * dm * std::exp(-logvar_p[i]) -
                      1.0 + logvar_p[i] - logvar_q[i]);
    }
    return acc;
}

Var total_loss(Tape& /*tape*/, Var local, Var global_raw, Var len_raw, Var kl,
               const LossWeights& weights, double lambda_kl) {
    for (Var v : {local, global_raw, len_raw, kl})
        if (!std::isfinite(v.val()[0])) throw NonFinite("total_loss component");
    Var out = add(local, scale(global_raw, weights.lambda_global));
    out = add(out, scale(len_raw, weights.lambda_len));
    return add(out, scale(kl, lambda_kl));
}

double annealing_weight(int epoch, int total_epochs, int cycles) {
    if (epoch < 0 || epoch >= total_epochs) throw OutOfRange("epoch outside [0, total)");
    if (cycles < 1 || total_epochs < 1) throw OutOfRange("annealing cycle parameters");
    const double span = static_cast<double>(total_epochs) / cycles;
    const double pos = epoch - span * std::floor(epoch / span);
    return std::min(1.0, 2.0 * pos / span);
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw OutOfRange("negative epoch");
    return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_step));
}

std::vector<double> sampling_weights(const std::vector<int>& sample_classes,
                                     const std::vector<bool>& leg_flags, double leg_boost) {
    const int num_classes = static_cast<int>(leg_flags.size());
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int c : sample_classes) {
        if (c < 0 || c >= num_classes) throw OutOfRange("sample class id");
        counts[static_cast<std::size_t>(c)]++;
    }
    for (int c = 0; c < num_classes; ++c)
        if (counts[static_cast<std::size_t>(c)] == 0)
            throw EmptyClass("class " + std::to_string(c) + " has no samples");

    std::vector<double> weights(sample_classes.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < sample_classes.size(); ++i) {
        const int c = sample_classes[i];
        double w = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        if (leg_flags[static_cast<std::size_t>(c)]) w *= leg_boost;
        weights[i] = w;
        sum += w;
    }
    const double norm = static_cast<double>(weights.size()) / sum;
    for (double& w : weights) w *= norm;
    return weights;
}

namespace {

std::vector<int> weighted_draw(const std::vector<double>& weights, int count, Rng& rng) {
    std::vector<double> cdf(weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        cdf[i] = acc;
    }
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double u = rng.uniform() * acc;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        out.push_back(static_cast<int>(std::min<std::size_t>(
            static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1)));
    }
    return out;
}

} // namespace

double reconstruction_mse3d(MuglModel& model, const Dataset& ds, int chunk) {
    const int N = static_cast<int>(ds.samples.size());
    double acc = 0.0;
    double denom = 0.0;
    for (int start = 0; start < N; start += chunk) {
        std::vector<int> idx;
        for (int i = start; i < std::min(N, start + chunk); ++i) idx.push_back(i);
        const ModelBatch batch = model.make_batch(ds, idx);
        const BatchTargets tg = make_targets(ds, idx, model.skeleton());

        Tape tape;
        Posterior post = model.encode(tape, batch);
        Var zcv = model.condition_latent(tape, post.mu, batch.class_idx, batch.view_idx);
        Var pred6 = model.decode_local(tape, zcv);
        Var pred3 = model.fk_from_local(tape, pred6, batch.N);

        const Tensor& p3 = pred3.val();
        const std::int64_t steps = tg.mask_t.size();
        const std::int64_t rows3 = p3.dim(0) / steps;
        const Tensor mask3 = expand_mask(tg.mask_t, rows3, p3.dim(1));
        for (std::int64_t i = 0; i < p3.size(); ++i) {
            const double d = p3[i] - tg.local3[i];
            acc += mask3[i] * d * d;
            denom += mask3[i];
        }
    }
    return denom > 0.0 ? acc / denom : 0.0;
}

FitResult fit(MuglModel& model, const Dataset& ds, const TrainConfig& cfg,
              const LossWeights& weights, const std::string& checkpoint_path,
              const std::string& history_path) {
    cfg.validate();
    if (ds.samples.empty()) throw EmptyClass("dataset has no samples");

    std::vector<int> classes;
    classes.reserve(ds.samples.size());
    for (const auto& rec : ds.samples) classes.push_back(rec.seq.class_label);
    std::vector<bool> leg_flags;
    for (const auto& c : ds.manifest.classes) leg_flags.push_back(c.leg_movement);
    const std::vector<double> sample_w = sampling_weights(classes, leg_flags, cfg.leg_boost);

    const int N = static_cast<int>(ds.samples.size());
    model.params().reset_optimizer();

    FitResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        const double lam_kl = weights.kl_scale * annealing_weight(epoch, cfg.epochs, cfg.kl_cycles);

        Rng draw_rng(mix_seed(cfg.seed, 0xd7a3ULL, static_cast<std::uint64_t>(epoch)));
        const std::vector<int> order = weighted_draw(sample_w, N, draw_rng);

        EpochStats stats;
        stats.epoch = epoch;
        stats.lambda_kl = lam_kl;
        stats.lr = lr;
        int batches = 0;

        for (int start = 0; start < N; start += cfg.batch_size) {
            std::vector<int> idx(order.begin() + start,
                                 order.begin() + std::min(N, start + cfg.batch_size));
            const ModelBatch batch = model.make_batch(ds, idx);
            const BatchTargets tg = make_targets(ds, idx, model.skeleton());

            Tape tape;
            Posterior post = model.encode(tape, batch);
            Var z = model.reparameterize(
                tape, post, mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(start)));
            Var zcv = model.condition_latent(tape, z, batch.class_idx, batch.view_idx);
            Var pred6 = model.decode_local(tape, zcv);
            Var pred3 = model.fk_from_local(tape, pred6, batch.N);
            Var predG = model.decode_global(tape, zcv);
            Var predC = model.decode_length_code(tape, zcv);

            Var l_local = loss_local(tape, pred6, pred3, tg.local6, tg.local3, tg.mask_t,
                                     weights.lambda_rot);
            auto [l_global, l_len] = loss_global_and_len(tape, predG, predC, tg.global, tg.code,
                                                         tg.mask_t, 1.0, 1.0);
            Var kl = kl_gaussian(post.mu, post.logvar,
                                 model.prior_mu_rows(tape, batch.class_idx),
                                 model.prior_logvar_rows(tape, batch.class_idx));
            Var total = total_loss(tape, l_local, l_global, l_len, kl, weights, lam_kl);

            const double tv = total.val()[0];
            if (!std::isfinite(tv)) {
                char msg[256];
                std::snprintf(msg, sizeof(msg),
                              "epoch %d: total loss diverged (local=%g global=%g len=%g kl=%g)",
                              epoch, l_local.val()[0], l_global.val()[0], l_len.val()[0],
                              kl.val()[0]);
                throw NonFinite(msg);
            }

            model.params().zero_grad();
            tape.backward(total);
            model.params().adam_step(lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
                                     cfg.grad_clip);

            stats.loss_local += l_local.val()[0];
            stats.loss_global += l_global.val()[0];
            stats.loss_len += l_len.val()[0];
            stats.loss_kl += kl.val()[0];
            stats.loss_total += tv;
            batches++;
        }

        stats.loss_local /= batches;
        stats.loss_global /= batches;
        stats.loss_len /= batches;
        stats.loss_kl /= batches;
        stats.loss_total /= batches;
        result.history.push_back(stats);
        result.epochs_run = epoch + 1;

        if (cfg.target_recon > 0.0 &&
            (epoch % cfg.eval_every == cfg.eval_every - 1 || epoch == cfg.epochs - 1)) {
            result.final_recon_mse3d = reconstruction_mse3d(model, ds);
            if (result.final_recon_mse3d < cfg.target_recon) break;
        }
    }
    if (result.final_recon_mse3d < 0.0) result.final_recon_mse3d = reconstruction_mse3d(model, ds);

    if (!checkpoint_path.empty()) model.params().save(checkpoint_path);
    if (!history_path.empty()) {
        std::ofstream os(history_path, std::ios::trunc);
        if (!os) throw IoFailure("cannot write loss history: " + history_path);
        os << "epoch,loss_local,loss_global,loss_len,loss_kl,loss_total,lambda_kl,lr\n";
        char line[256];
        for (const EpochStats& s : result.history) {
            std::snprintf(line, sizeof(line), "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                          s.epoch, s.loss_local, s.loss_global, s.loss_len, s.loss_kl,
                          s.loss_total, s.lambda_kl, s.lr);
            os << line;
        }
    }
    return result;
}

} // namespace mugl
