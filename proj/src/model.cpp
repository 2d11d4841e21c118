#include "mugl/model.hpp"

#include <cmath>

#include "mugl/errors.hpp"
#include "mugl/rng.hpp"

namespace mugl {

namespace {

int stages_for(const std::vector<int>& channels) { return static_cast<int>(channels.size()) - 1; }

void check_decoder_list(const std::vector<int>& channels, int seed_t, int T, const char* name) {
    if (channels.empty()) throw ConfigError(std::string(name) + " channel list is empty");
    int reach = seed_t;
    for (int s = 0; s < stages_for(channels); ++s) reach *= 2;
    if (reach != T)
        throw ConfigError(std::string(name) + ": seed_timesteps * 2^stages must equal timesteps");
}

} // namespace

void ModelConfig::validate() const {
    if (timesteps < 1 || joints < 1 || persons < 1 || num_classes < 1 || num_viewpoints < 1)
        throw ConfigError("model dimensions must be positive");
    if (latent_dim < 1 || zcv_dim < 1 || encoder_hidden < 1 || dec_mlp_hidden < 1)
        throw ConfigError("layer widths must be positive");
    if (theta_s <= 0.0 || theta_s >= 1.0) throw ConfigError("theta_s must lie in (0,1)");
    if (enc_local_channels.empty() || enc_global_channels.empty() || enc_length_channels.empty())
        throw ConfigError("encoder channel lists must be non-empty");
    if (seed_timesteps < 1) throw ConfigError("seed_timesteps must be positive");
    check_decoder_list(dec_local_channels, seed_timesteps, timesteps, "dec_local_channels");
    check_decoder_list(dec_global_channels, seed_timesteps, timesteps, "dec_global_channels");
    check_decoder_list(dec_length_channels, seed_timesteps, timesteps, "dec_length_channels");
}

MuglModel::MuglModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    skeleton_ = builtin_skeleton(cfg_.skeleton_preset);
    if (skeleton_.tree.joint_count != cfg_.joints)
        throw ConfigError("config joints disagree with skeleton preset");
    build_parameters();
}

MuglModel::Affine MuglModel::add_affine(Rng& rng, const std::string& name, int in, int out) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w({in, out});
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-s, s);
    Affine a;
    a.w = params_.add(name + ".w", std::move(w));
    a.b = params_.add(name + ".b", Tensor({out}));
    return a;
}

MuglModel::Conv MuglModel::add_conv(Rng& rng, const std::string& name, int in, int out, int kh,
                                    int kw) {
    // kw == 0 marks a 1D kernel of width kh.
    const double s = 1.0 / std::sqrt(static_cast<double>(in) * kh * std::max(kw, 1));
    Tensor w(kw > 0 ? std::vector<std::int64_t>{out, in, kh, kw}
                    : std::vector<std::int64_t>{out, in, kh});
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-s, s);
    Conv c;
    c.w = params_.add(name + ".w", std::move(w));
    c.b = params_.add(name + ".b", Tensor({out}));
    return c;
}

void MuglModel::build_parameters() {
    Rng rng(mix_seed(cfg_.init_seed, 0x6d75676cULL));
    const int T = cfg_.timesteps;
    const int W0 = cfg_.joints * cfg_.persons;

    // Local pose encoder: one spatial block, then strided temporal blocks.
    {
        int c_in = 6, h = T, w = W0;
        for (std::size_t i = 0; i < cfg_.enc_local_channels.size(); ++i) {
            const int c_out = cfg_.enc_local_channels[i];
            ResBlock blk;
            blk.stride_h = i == 0 ? 1 : 2;
            blk.stride_w = (i == 0 || w < 2) ? 1 : 2;
            const std::string base = "enc_local.block" + std::to_string(i);
            blk.c1 = add_conv(rng, base + ".conv1", c_in, c_out, 3, 3);
            blk.c2 = add_conv(rng, base + ".conv2", c_out, c_out, 3, 3);
            blk.projected = (c_in != c_out) || blk.stride_h != 1 || blk.stride_w != 1;
            if (blk.projected) blk.proj = add_conv(rng, base + ".proj", c_in, c_out, 1, 1);
            enc_local_blocks_.push_back(blk);
            h = (h + 2 - 3) / blk.stride_h + 1;
            w = (w + 2 - 3) / blk.stride_w + 1;
            c_in = c_out;
        }
        enc_local_flat_ = static_cast<std::int64_t>(c_in) * h * w;
        enc_local_out_ = add_affine(rng, "enc_local.out", static_cast<int>(enc_local_flat_),
                                    cfg_.f_local);
    }

    // Global trajectory encoder: strided 1D convs then a linear map.
    {
        int c_in = 3 * cfg_.persons, t = T;
        for (std::size_t i = 0; i < cfg_.enc_global_channels.size(); ++i) {
            const int c_out = cfg_.enc_global_channels[i];
            enc_global_convs_.push_back(
                add_conv(rng, "enc_global.conv" + std::to_string(i), c_in, c_out, 3, 0));
            t = (t + 2 - 3) / 2 + 1;
            c_in = c_out;
        }
        enc_global_flat_ = static_cast<std::int64_t>(c_in) * t;
        enc_global_out_ = add_affine(rng, "enc_global.out", static_cast<int>(enc_global_flat_),
                                     cfg_.f_global);
    }

    // Sequence length encoder over the index-sequence code.
    {
        int c_in = 1, t = T;
        for (std::size_t i = 0; i < cfg_.enc_length_channels.size(); ++i) {
            const int c_out = cfg_.enc_length_channels[i];
            enc_length_convs_.push_back(
                add_conv(rng, "enc_length.conv" + std::to_string(i), c_in, c_out, 3, 0));
            t = (t + 2 - 3) / 2 + 1;
            c_in = c_out;
        }
        enc_length_flat_ = static_cast<std::int64_t>(c_in) * t;
        enc_length_out_ = add_affine(rng, "enc_length.out", static_cast<int>(enc_length_flat_),
                                     cfg_.f_length);
    }

    // Conditioning embeddings and the posterior head.
    {
        Tensor ce({cfg_.num_classes, cfg_.class_embed});
        for (std::int64_t i = 0; i < ce.size(); ++i) ce[i] = rng.uniform(-0.1, 0.1);
        enc_class_embed_ = params_.add("enc_cond.class_embed", std::move(ce));
        Tensor ve({cfg_.num_viewpoints, cfg_.view_embed});
        for (std::int64_t i = 0; i < ve.size(); ++i) ve[i] = rng.uniform(-0.1, 0.1);
        enc_view_embed_ = params_.add("enc_cond.view_embed", std::move(ve));

        const int concat = cfg_.f_local + cfg_.f_global + cfg_.f_length + cfg_.class_embed +
                           cfg_.view_embed;
        enc_hidden_ = add_affine(rng, "enc_head.hidden", concat, cfg_.encoder_hidden);
        enc_head_ = add_affine(rng, "enc_head.out", cfg_.encoder_hidden, 2 * cfg_.latent_dim);
    }

    // Latent conditioning and the mixture prior (one component per class).
    {
        Tensor ce({cfg_.num_classes, cfg_.class_embed});
        for (std::int64_t i = 0; i < ce.size(); ++i) ce[i] = rng.uniform(-0.1, 0.1);
        lat_class_embed_ = params_.add("latent_cond.class_embed", std::move(ce));
        Tensor ve({cfg_.num_viewpoints, cfg_.view_embed});
        for (std::int64_t i = 0; i < ve.size(); ++i) ve[i] = rng.uniform(-0.1, 0.1);
        lat_view_embed_ = params_.add("latent_cond.view_embed", std::move(ve));

        zcv_proj_ = add_affine(rng, "latent_cond.proj",
                               cfg_.latent_dim + cfg_.class_embed + cfg_.view_embed, cfg_.zcv_dim);

        prior_mu_ = params_.add("prior.mu", Tensor({cfg_.num_classes, cfg_.latent_dim}));
        prior_logvar_ = params_.add("prior.logvar", Tensor({cfg_.num_classes, cfg_.latent_dim}));
    }

    // Local decoder: seed, temporal upsampling convs, per-timestep MLP.
    {
        const auto& ch = cfg_.dec_local_channels;
        dec_local_seed_ = add_affine(rng, "dec_local.seed", cfg_.zcv_dim,
                                     ch[0] * cfg_.seed_timesteps);
        for (int s = 0; s + 1 < static_cast<int>(ch.size()); ++s)
            dec_local_convs_.push_back(
                add_conv(rng, "dec_local.conv" + std::to_string(s), ch[static_cast<std::size_t>(s)],
                         ch[static_cast<std::size_t>(s) + 1], 3, 0));
        const int out_dim = cfg_.persons * cfg_.joints * 6;
        dec_mlp_hidden_ = add_affine(rng, "dec_local.mlp_hidden", ch.back(), cfg_.dec_mlp_hidden);
        dec_mlp_out_ = add_affine(rng, "dec_local.mlp_out", cfg_.dec_mlp_hidden, out_dim);
    }

    // Global trajectory decoder.
    {
        const auto& ch = cfg_.dec_global_channels;
        dec_global_seed_ = add_affine(rng, "dec_global.seed", cfg_.zcv_dim,
                                      ch[0] * cfg_.seed_timesteps);
        for (int s = 0; s + 1 < static_cast<int>(ch.size()); ++s)
            dec_global_convs_.push_back(
                add_conv(rng, "dec_global.conv" + std::to_string(s), ch[static_cast<std::size_t>(s)],
                         ch[static_cast<std::size_t>(s) + 1], 3, 0));
        dec_global_out_ = add_affine(rng, "dec_global.out", ch.back(), 3 * cfg_.persons);
    }

    // Sequence length decoder ending in a single channel.
    {
        const auto& ch = cfg_.dec_length_channels;
        dec_length_seed_ = add_affine(rng, "dec_length.seed", cfg_.zcv_dim,
                                      ch[0] * cfg_.seed_timesteps);
        for (int s = 0; s + 1 < static_cast<int>(ch.size()); ++s)
            dec_length_convs_.push_back(
                add_conv(rng, "dec_length.conv" + std::to_string(s), ch[static_cast<std::size_t>(s)],
                         ch[static_cast<std::size_t>(s) + 1], 3, 0));
        dec_length_final_ = add_conv(rng, "dec_length.final", ch.back(), 1, 3, 0);
    }
}

ModelBatch MuglModel::make_batch(const Dataset& ds, const std::vector<int>& indices) const {
    const int T = cfg_.timesteps;
    const int P = cfg_.persons;
    const int J = cfg_.joints;
    if (ds.manifest.timesteps != T || ds.manifest.persons != P || ds.manifest.joint_count() != J)
        throw ShapeMismatch("dataset dims disagree with model config");

    ModelBatch b;
    b.N = static_cast<int>(indices.size());
    b.local = Tensor({b.N, 6, T, static_cast<std::int64_t>(J) * P});
    b.global = Tensor({b.N, static_cast<std::int64_t>(3) * P, T});
    b.length = Tensor({b.N, 1, T});

    const std::int64_t W = static_cast<std::int64_t>(J) * P;
    for (int n = 0; n < b.N; ++n) {
        const SampleRecord& rec = ds.samples[static_cast<std::size_t>(indices[static_cast<std::size_t>(n)])];
        const ActionSequence& s = rec.seq;
        for (int t = 0; t < T; ++t)
            for (int p = 0; p < P; ++p)
                for (int j = 0; j < J; ++j) {
                    const double* r = s.local.at(t, p, j);
                    const std::int64_t col = static_cast<std::int64_t>(p) * J + j;
                    for (int k = 0; k < 6; ++k)
                        b.local[((static_cast<std::int64_t>(n) * 6 + k) * T + t) * W + col] = r[k];
                }
        for (int t = 0; t < T; ++t) {
            for (int c = 0; c < 3; ++c)
                b.global[(static_cast<std::int64_t>(n) * 3 * P + c) * T + t] =
                    s.global.g1[static_cast<std::size_t>(t)][c];
            for (int p = 1; p < P; ++p)
                for (int c = 0; c < 3; ++c)
                    b.global[(static_cast<std::int64_t>(n) * 3 * P + 3 * p + c) * T + t] =
                        s.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)][c];
        }
        const LengthCode code = encode_length(s.length, T);
        for (int t = 0; t < T; ++t)
            b.length[static_cast<std::int64_t>(n) * T + t] = code.values[static_cast<std::size_t>(t)];
        b.class_idx.push_back(s.class_label);
        b.view_idx.push_back(s.viewpoint);
    }
    return b;
}

Var MuglModel::run_affine(Tape& t, const Affine& a, Var x) {
    return affine(x, t.param(params_, a.w), t.param(params_, a.b));
}

Var MuglModel::embed(Tape& t, int table, const std::vector<std::int64_t>& idx) {
    return gather_rows(t.param(params_, table), idx);
}

Posterior MuglModel::encode(Tape& tape, const ModelBatch& batch) {
    const double slope = cfg_.leaky_slope;
    if (static_cast<int>(batch.class_idx.size()) != batch.N ||
        static_cast<int>(batch.view_idx.size()) != batch.N)
        throw ShapeMismatch("batch conditioning sizes disagree with N");

    // Local branch.
    Var x = tape.leaf(batch.local);
    for (const ResBlock& blk : enc_local_blocks_) {
        ResBlock2dWeights w;
        w.w1 = tape.param(params_, blk.c1.w);
        w.b1 = tape.param(params_, blk.c1.b);
        w.w2 = tape.param(params_, blk.c2.w);
        w.b2 = tape.param(params_, blk.c2.b);
        w.projected = blk.projected;
        if (blk.projected) {
            w.wp = tape.param(params_, blk.proj.w);
            w.bp = tape.param(params_, blk.proj.b);
        }
        x = residual_conv2d_block(x, w, blk.stride_h, blk.stride_w, slope);
    }
    Var f_l = leaky_relu(
        run_affine(tape, enc_local_out_, reshape(x, {batch.N, enc_local_flat_})), slope);

    // Global branch.
    Var g = tape.leaf(batch.global);
    for (const Conv& c : enc_global_convs_)
        g = leaky_relu(conv1d(g, tape.param(params_, c.w), tape.param(params_, c.b), 2, 1), slope);
    Var f_g = leaky_relu(
        run_affine(tape, enc_global_out_, reshape(g, {batch.N, enc_global_flat_})), slope);

    // Length branch.
    Var s = tape.leaf(batch.length);
    for (const Conv& c : enc_length_convs_)
        s = leaky_relu(conv1d(s, tape.param(params_, c.w), tape.param(params_, c.b), 2, 1), slope);
    Var f_s = leaky_relu(
        run_affine(tape, enc_length_out_, reshape(s, {batch.N, enc_length_flat_})), slope);

    Var ce = embed(tape, enc_class_embed_, batch.class_idx);
    Var ve = embed(tape, enc_view_embed_, batch.view_idx);
    Var h = concat_cols({f_l, f_g, f_s, ce, ve});
    h = leaky_relu(run_affine(tape, enc_hidden_, h), slope);
    Var head = run_affine(tape, enc_head_, h);

    Posterior post;
    post.mu = slice_cols(head, 0, cfg_.latent_dim);
    post.logvar = clamp(slice_cols(head, cfg_.latent_dim, 2 * cfg_.latent_dim),
                        -cfg_.logvar_clamp, cfg_.logvar_clamp);
    if (!post.mu.val().all_finite() || !post.logvar.val().all_finite())
        throw NonFinite("posterior parameters");
    return post;
}

Var MuglModel::reparameterize(Tape& /*tape*/, const Posterior& post, std::uint64_t seed) {
    Tensor eps(post.mu.val().shape());
    Rng rng(mix_seed(seed, 0x7a5eedULL));
    for (std::int64_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
    return gaussian_sample(post.mu, post.logvar, std::move(eps));
}

Var MuglModel::condition_latent(Tape& tape, Var z, const std::vector<std::int64_t>& class_idx,
                                const std::vector<std::int64_t>& view_idx) {
    Var ce = embed(tape, lat_class_embed_, class_idx);
    Var ve = embed(tape, lat_view_embed_, view_idx);
    return run_affine(tape, zcv_proj_, concat_cols({z, ce, ve}));
}

Var MuglModel::decode_local(Tape& tape, Var zcv) {
    const double slope = cfg_.leaky_slope;
    const std::int64_t N = zcv.val().dim(0);
    Var h = run_affine(tape, dec_local_seed_, zcv);
    h = reshape(h, {N, cfg_.dec_local_channels[0], cfg_.seed_timesteps});
    for (const Conv& c : dec_local_convs_) {
        h = upsample_nearest_1d(h, 2);
        h = leaky_relu(conv1d(h, tape.param(params_, c.w), tape.param(params_, c.b), 1, 1), slope);
    }
    // Per-timestep MLP head.
    h = transpose_12(h); // (N, T, C)
    h = reshape(h, {N * cfg_.timesteps, cfg_.dec_local_channels.back()});
    h = leaky_relu(run_affine(tape, dec_mlp_hidden_, h), slope);
    h = run_affine(tape, dec_mlp_out_, h);

    // Identity-rotation bias keeps every 6-vector decodable from the start.
    const int out_dim = cfg_.persons * cfg_.joints * 6;
    Tensor bias({out_dim});
    for (int i = 0; i < cfg_.persons * cfg_.joints; ++i) {
        bias[static_cast<std::int64_t>(i) * 6 + 0] = 1.0;
        bias[static_cast<std::int64_t>(i) * 6 + 4] = 1.0;
    }
    Var out = add_const_rows(h, std::move(bias));
    if (!out.val().all_finite()) throw NonFinite("local decoder output");
    return out;
}

Var MuglModel::decode_global(Tape& tape, Var zcv) {
    const double slope = cfg_.leaky_slope;
    const std::int64_t N = zcv.val().dim(0);
    Var h = run_affine(tape, dec_global_seed_, zcv);
    h = reshape(h, {N, cfg_.dec_global_channels[0], cfg_.seed_timesteps});
    for (const Conv& c : dec_global_convs_) {
        h = upsample_nearest_1d(h, 2);
        h = leaky_relu(conv1d(h, tape.param(params_, c.w), tape.param(params_, c.b), 1, 1), slope);
    }
    h = transpose_12(h);
    h = reshape(h, {N * cfg_.timesteps, cfg_.dec_global_channels.back()});
    h = run_affine(tape, dec_global_out_, h);
    Var out = reshape(h, {N, cfg_.timesteps, static_cast<std::int64_t>(3) * cfg_.persons});
    if (!out.val().all_finite()) throw NonFinite("global decoder output");
    return out;
}

Var MuglModel::decode_length_code(Tape& tape, Var zcv) {
    const double slope = cfg_.leaky_slope;
    const std::int64_t N = zcv.val().dim(0);
    Var h = run_affine(tape, dec_length_seed_, zcv);
    h = reshape(h, {N, cfg_.dec_length_channels[0], cfg_.seed_timesteps});
    for (const Conv& c : dec_length_convs_) {
        h = upsample_nearest_1d(h, 2);
        h = leaky_relu(conv1d(h, tape.param(params_, c.w), tape.param(params_, c.b), 1, 1), slope);
    }
    h = conv1d(h, tape.param(params_, dec_length_final_.w), tape.param(params_, dec_length_final_.b),
               1, 1);
    h = reshape(h, {N, cfg_.timesteps});
    // Non-negative increments make the cumulative sum non-decreasing for any
    // parameters; the sigmoid keeps values in (0,1).
    return sigmoid(cumsum_last(relu(h)));
}

Var MuglModel::prior_mu_rows(Tape& tape, const std::vector<std::int64_t>& class_idx) {
    return gather_rows(tape.param(params_, prior_mu_), class_idx);
}

Var MuglModel::prior_logvar_rows(Tape& tape, const std::vector<std::int64_t>& class_idx) {
    Var rows = gather_rows(tape.param(params_, prior_logvar_), class_idx);
    return clamp(rows, -cfg_.logvar_clamp, cfg_.logvar_clamp);
}

Var MuglModel::fk_from_local(Tape& /*tape*/, Var local6d, int batch_n) {
    const std::int64_t M = static_cast<std::int64_t>(batch_n) * cfg_.timesteps * cfg_.persons;
    Var rows = reshape(local6d, {M * cfg_.joints, 6});
    Var rot = rot6d_to_matrix_rows(rows);
    Var per_pose = reshape(rot, {M, static_cast<std::int64_t>(cfg_.joints) * 9});
    return fk_positions(per_pose, skeleton_.tree, skeleton_.rest);
}

std::vector<ActionSequence> MuglModel::generate(int class_label, int count, std::uint64_t seed,
                                                int person_count) {
    if (class_label < 0 || class_label >= cfg_.num_classes)
        throw OutOfRange("class label outside [0, num_classes)");
    if (count < 0) throw OutOfRange("negative sample count");
    if (person_count < 1 || person_count > cfg_.persons)
        throw OutOfRange("person count outside [1, P]");
    std::vector<ActionSequence> out;
    if (count == 0) return out;

    const int L = cfg_.latent_dim;
    const Tensor& pmu = params_.value(prior_mu_);
    const Tensor& plv = params_.value(prior_logvar_);

    Tensor z({count, L});
    for (int i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(class_label), static_cast<std::uint64_t>(i)));
        for (int d = 0; d < L; ++d) {
            const double mu = pmu[static_cast<std::int64_t>(class_label) * L + d];
            const double lv = std::clamp(plv[static_cast<std::int64_t>(class_label) * L + d],
                                         -cfg_.logvar_clamp, cfg_.logvar_clamp);
            z[static_cast<std::int64_t>(i) * L + d] = mu + std::exp(0.5 * lv) * rng.normal();
        }
    }

    Tape tape;
    std::vector<std::int64_t> cls(static_cast<std::size_t>(count), class_label);
    std::vector<std::int64_t> view(static_cast<std::size_t>(count), 0); // fixed default viewpoint
    Var zcv = condition_latent(tape, tape.leaf(std::move(z)), cls, view);
    const Tensor local6 = decode_local(tape, zcv).val();
    const Tensor glob = decode_global(tape, zcv).val();
    const Tensor code = decode_length_code(tape, zcv).val();

    const int T = cfg_.timesteps;
    const int P = cfg_.persons;
    const int J = cfg_.joints;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        ActionSequence seq;
        seq.class_label = class_label;
        seq.viewpoint = 0;
        seq.person_count = person_count;
        seq.local = LocalComponent(T, P, J);
        seq.global = GlobalComponent(T, P);

        for (int t = 0; t < T; ++t) {
            const double* row = local6.data() +
                                (static_cast<std::int64_t>(i) * T + t) * (static_cast<std::int64_t>(P) * J * 6);
            std::copy_n(row, static_cast<std::size_t>(P) * J * 6, seq.local.at(t, 0, 0));
        }
        for (int t = 0; t < T; ++t) {
            const double* row = glob.data() + (static_cast<std::int64_t>(i) * T + t) * 3 * P;
            seq.global.g1[static_cast<std::size_t>(t)] = Eigen::Vector3d(row[0], row[1], row[2]);
            for (int p = 1; p < P; ++p)
                seq.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)] =
                    Eigen::Vector3d(row[3 * p], row[3 * p + 1], row[3 * p + 2]);
        }
        LengthCode lc;
        lc.values.assign(code.data() + static_cast<std::int64_t>(i) * T,
                         code.data() + static_cast<std::int64_t>(i + 1) * T);
        seq.length = decode_length(lc, cfg_.theta_s);

        if (person_count == 1) {
            // Uniform P-person decoding; single-person classes keep only the
            // first person's sequence.
            for (int t = 0; t < T; ++t)
                for (int p = 1; p < P; ++p)
                    std::copy_n(seq.local.at(t, 0, 0), static_cast<std::size_t>(J) * 6,
                                seq.local.at(t, p, 0));
            for (auto& d : seq.global.disp)
                std::fill(d.begin(), d.end(), Eigen::Vector3d::Zero());
        }
        out.push_back(std::move(seq));
    }
    return out;
}

} // namespace mugl
