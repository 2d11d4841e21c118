#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mugl/data.hpp"
#include "mugl/errors.hpp"
#include "mugl/model.hpp"
#include "mugl/rng.hpp"
#include "mugl/rotations.hpp"

using namespace mugl;

namespace {

Dataset desk_dataset(int per_class = 4, std::uint64_t seed = 3) {
    SynthSpec spec = desk_default_spec();
    spec.samples_per_class = per_class;
    return synth_generate(spec, seed);
}

MuglModel desk_model(std::uint64_t init_seed = 1) {
    ModelConfig cfg;
    cfg.init_seed = init_seed;
    return MuglModel(cfg);
}

double l2_diff(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

} // namespace

TEST_CASE("config validation") {
    ModelConfig cfg;
    cfg.timesteps = 24; // not seed * 2^stages
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = ModelConfig();
    cfg.theta_s = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = ModelConfig();
    CHECK_NOTHROW(cfg.validate());

    cfg.joints = 9; // disagrees with humanoid8
    CHECK_THROWS_AS((MuglModel{cfg}), ConfigError);
}

TEST_CASE("encode produces deterministic, class-sensitive posteriors") {
    const Dataset ds = desk_dataset();
    MuglModel model = desk_model();
    const ModelBatch batch = model.make_batch(ds, {0, 5, 9});

    Tape t1;
    Posterior p1 = model.encode(t1, batch);
    CHECK(p1.mu.val().shape() == std::vector<std::int64_t>{3, 32});
    CHECK(p1.logvar.val().shape() == std::vector<std::int64_t>{3, 32});

    Tape t2;
    Posterior p2 = model.encode(t2, batch);
    CHECK(l2_diff(p1.mu.val(), p2.mu.val()) == 0.0);
    CHECK(l2_diff(p1.logvar.val(), p2.logvar.val()) == 0.0);

    // Same inputs, different class conditioning: the posterior must move.
    ModelBatch relabeled = batch;
    for (auto& c : relabeled.class_idx) c = (c + 1) % 4;
    Tape t3;
    Posterior p3 = model.encode(t3, relabeled);
    CHECK(l2_diff(p1.mu.val(), p3.mu.val()) > 0.0);
}

TEST_CASE("reparameterize") {
    MuglModel model = desk_model();
    Tape t;
    Rng mu_rng(55);
    Tensor mu({2, 32});
    for (std::int64_t i = 0; i < mu.size(); ++i) mu[i] = mu_rng.normal();
    Posterior post{t.leaf(mu), t.leaf(Tensor::full({2, 32}, -10.0))};

    // Vanishing variance collapses the sample onto the mean.
    const Tensor& z = model.reparameterize(t, post, 7).val();
    double dev = 0.0, mu_norm = 0.0;
    for (std::int64_t i = 0; i < z.size(); ++i) {
        dev += (z[i] - mu[i]) * (z[i] - mu[i]);
        mu_norm += mu[i] * mu[i];
    }
    CHECK(std::sqrt(dev) < 1e-2 * std::sqrt(mu_norm) + 1e-2);

    // Same seed, same draw; different seed, different draw.
    Posterior wide{t.leaf(mu), t.leaf(Tensor::full({2, 32}, 0.0))};
    const Tensor& z1 = model.reparameterize(t, wide, 11).val();
    const Tensor& z2 = model.reparameterize(t, wide, 11).val();
    const Tensor& z3 = model.reparameterize(t, wide, 12).val();
    CHECK(l2_diff(z1, z2) == 0.0);
    CHECK(l2_diff(z1, z3) > 0.0);
}

TEST_CASE("reparameterize sample mean converges to mu") {
    MuglModel model = desk_model();
    const int draws = 100000;
    const double mu0 = 0.7, lv0 = -1.0; // sigma ~ 0.6065
    double acc = 0.0;
    Tape t;
    Posterior post{t.leaf(Tensor::full({1, 32}, mu0)), t.leaf(Tensor::full({1, 32}, lv0))};
    for (int i = 0; i < draws / 32; ++i) {
        const Tensor& z = model.reparameterize(t, post, static_cast<std::uint64_t>(i)).val();
        for (std::int64_t k = 0; k < z.size(); ++k) acc += z[k];
    }
    const int n = (draws / 32) * 32;
    const double mean = acc / n;
    const double sigma = std::exp(0.5 * lv0);
    CHECK(std::abs(mean - mu0) < 3.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("condition_latent shape, determinism and class sensitivity") {
    MuglModel model = desk_model();
    Tape t;
    Tensor z = Tensor::full({2, 32}, 0.1);
    Var zcv1 = model.condition_latent(t, t.leaf(z), {0, 1}, {0, 0});
    CHECK(zcv1.val().shape() == std::vector<std::int64_t>{2, 128});

    Var zcv2 = model.condition_latent(t, t.leaf(z), {0, 1}, {0, 0});
    CHECK(l2_diff(zcv1.val(), zcv2.val()) == 0.0);

    Var zcv3 = model.condition_latent(t, t.leaf(z), {2, 1}, {0, 0});
    double first_row_diff = 0.0;
    for (int d = 0; d < 128; ++d) {
        const double delta = zcv1.val()[d] - zcv3.val()[d];
        first_row_diff += delta * delta;
    }
    CHECK(first_row_diff > 0.0);
}

TEST_CASE("decode_local emits valid 6D rotations") {
    MuglModel model = desk_model();

    SUBCASE("shape and identity bias under zeroed decoder weights") {
        for (const char* name :
             {"dec_local.seed.w", "dec_local.seed.b", "dec_local.conv0.w", "dec_local.conv0.b",
              "dec_local.conv1.w", "dec_local.conv1.b", "dec_local.mlp_hidden.w",
              "dec_local.mlp_hidden.b", "dec_local.mlp_out.w", "dec_local.mlp_out.b"}) {
            const int h = model.params().handle(name);
            REQUIRE(h >= 0);
            model.params().value(h).fill(0.0);
        }
        Tape t;
        Var zcv = t.leaf(Tensor::full({1, 128}, 0.3));
        const Tensor& out = model.decode_local(t, zcv).val();
        CHECK(out.shape() == std::vector<std::int64_t>{16, 2 * 8 * 6});
        for (std::int64_t r = 0; r < out.dim(0); ++r)
            for (int pj = 0; pj < 16; ++pj) {
                CHECK(out[r * 96 + pj * 6 + 0] == 1.0);
                CHECK(out[r * 96 + pj * 6 + 1] == 0.0);
                CHECK(out[r * 96 + pj * 6 + 4] == 1.0);
            }
    }

    SUBCASE("random latents always decode to convertible rotations") {
        Rng rng(5);
        for (int trial = 0; trial < 100; ++trial) {
            Tensor z({1, 32});
            for (std::int64_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
            Tape t;
            Var zcv = model.condition_latent(t, t.leaf(z), {trial % 4}, {0});
            const Tensor& out = model.decode_local(t, zcv).val();
            for (std::int64_t r = 0; r < out.dim(0); ++r)
                for (int pj = 0; pj < 16; ++pj) {
                    Rotation6D r6;
                    for (int k = 0; k < 6; ++k) r6.v[static_cast<std::size_t>(k)] = out[r * 96 + pj * 6 + k];
                    CHECK_NOTHROW(rot6d_to_matrix(r6));
                }
        }
    }
}

TEST_CASE("decode_global shape and zero-weight behavior") {
    MuglModel model = desk_model();

    Tape t;
    Var zcv = t.leaf(Tensor::full({3, 128}, 0.2));
    const Tensor& out = model.decode_global(t, zcv).val();
    CHECK(out.shape() == std::vector<std::int64_t>{3, 16, 6});
    CHECK(out.all_finite());

    for (const char* name : {"dec_global.seed.w", "dec_global.seed.b", "dec_global.conv0.w",
                             "dec_global.conv0.b", "dec_global.conv1.w", "dec_global.conv1.b",
                             "dec_global.out.w", "dec_global.out.b"}) {
        const int h = model.params().handle(name);
        REQUIRE(h >= 0);
        model.params().value(h).fill(0.0);
    }
    Tape t2;
    const Tensor& zero = model.decode_global(t2, t2.leaf(Tensor::full({1, 128}, 0.4))).val();
    for (std::int64_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);
}

TEST_CASE("decode_length_code is structurally non-decreasing") {
    SUBCASE("random parameters") {
        for (std::uint64_t s = 1; s <= 5; ++s) {
            ModelConfig cfg;
            cfg.init_seed = s;
            MuglModel model(cfg);
            Rng rng(s);
            // Perturb the decoder weights far from init to probe the structure.
            for (const char* name : {"dec_length.seed.w", "dec_length.conv0.w", "dec_length.conv1.w",
                                     "dec_length.final.w", "dec_length.final.b"}) {
                const int h = model.params().handle(name);
                REQUIRE(h >= 0);
                Tensor& v = model.params().value(h);
                for (std::int64_t i = 0; i < v.size(); ++i) v[i] = rng.normal();
            }
            Tape t;
            Tensor z({2, 32});
            for (std::int64_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
            Var zcv = model.condition_latent(t, t.leaf(z), {0, 1}, {0, 1});
            const Tensor& code = model.decode_length_code(t, zcv).val();
            for (int n = 0; n < 2; ++n)
                for (int i = 1; i < 16; ++i) {
                    const double prev = code[n * 16 + i - 1];
                    const double cur = code[n * 16 + i];
                    CHECK(cur >= prev);
                    CHECK(cur > 0.0);
                    CHECK(cur <= 1.0); // sigmoid may saturate to 1.0 in floating point
                }
        }
    }

    SUBCASE("zero raw output decodes to full length") {
        MuglModel model = desk_model();
        for (const char* name : {"dec_length.seed.w", "dec_length.seed.b", "dec_length.conv0.w",
                                 "dec_length.conv0.b", "dec_length.conv1.w", "dec_length.conv1.b",
                                 "dec_length.final.w", "dec_length.final.b"}) {
            const int h = model.params().handle(name);
            REQUIRE(h >= 0);
            model.params().value(h).fill(0.0);
        }
        Tape t;
        const Tensor& code = model.decode_length_code(t, t.leaf(Tensor::full({1, 128}, 1.0))).val();
        LengthCode lc;
        lc.values.assign(code.data(), code.data() + 16);
        for (double v : lc.values) CHECK(v == 0.5);
        CHECK(decode_length(lc, 0.97) == 16);
    }
}

TEST_CASE("generate") {
    MuglModel model = desk_model();

    SUBCASE("count zero gives an empty list") {
        CHECK(model.generate(0, 0, 1, 1).empty());
    }

    SUBCASE("class bounds are enforced") {
        CHECK_THROWS_AS(model.generate(-1, 1, 1, 1), OutOfRange);
        CHECK_THROWS_AS(model.generate(4, 1, 1, 1), OutOfRange);
    }

    SUBCASE("determinism and structural validity") {
        const auto a = model.generate(2, 5, 42, 1);
        const auto b = model.generate(2, 5, 42, 1);
        REQUIRE(a.size() == 5);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].local.rot6d == b[i].local.rot6d);
            CHECK(a[i].length == b[i].length);
            CHECK(a[i].length >= 1);
            CHECK(a[i].length <= 16);
        }

        // Bone lengths survive FK for every generated pose.
        const Skeleton& skel = model.skeleton();
        const std::vector<double> rest_len = bone_lengths(skel.rest, skel.tree);
        for (const auto& seq : a)
            for (int t = 0; t < seq.local.T; ++t)
                for (int p = 0; p < seq.local.P; ++p) {
                    PoseRotations rot;
                    for (int j = 0; j < 8; ++j)
                        rot.rotations.push_back(rot6d_to_matrix(seq.local.get(t, p, j)));
                    const JointPositions pos = forward_kinematics(rot, skel.rest, skel.tree);
                    const std::vector<double> lens = bone_lengths(pos, skel.tree);
                    for (std::size_t bixd = 0; bixd < lens.size(); ++bixd)
                        CHECK(std::abs(lens[bixd] - rest_len[bixd]) <= 1e-4 * rest_len[bixd]);
                }
    }

    SUBCASE("single-person classes replicate the first person") {
        const auto seqs = model.generate(0, 3, 9, 1);
        for (const auto& seq : seqs) {
            for (int t = 0; t < seq.local.T; ++t)
                for (int j = 0; j < 8; ++j)
                    CHECK(seq.local.get(t, 0, j).v == seq.local.get(t, 1, j).v);
            for (const auto& d : seq.global.disp)
                for (const auto& v : d) CHECK(v.norm() == 0.0);
        }
    }
}

TEST_CASE("model parameters round-trip through a checkpoint") {
    namespace fs = std::filesystem;
    MuglModel model = desk_model(77);
    const std::string path = (fs::temp_directory_path() / "mugl_model_ckpt.bin").string();
    model.params().save(path);

    MuglModel loaded = desk_model(78); // different init, same architecture
    loaded.params().load(path);
    const auto a = model.generate(1, 2, 5, 1);
    const auto b = loaded.generate(1, 2, 5, 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        // float32 payload: decoded streams agree to float precision
        REQUIRE(a[i].local.rot6d.size() == b[i].local.rot6d.size());
        for (std::size_t k = 0; k < a[i].local.rot6d.size(); ++k)
            CHECK(a[i].local.rot6d[k] == doctest::Approx(b[i].local.rot6d[k]).epsilon(1e-4));
    }
    fs::remove(path);
}
