#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mugl/errors.hpp"
#include "mugl/gradcheck.hpp"
#include "mugl/kinematics.hpp"
#include "mugl/params.hpp"
#include "mugl/rng.hpp"
#include "mugl/rotations.hpp"
#include "mugl/tape.hpp"

using namespace mugl;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed, double scale = 1.0) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

} // namespace

TEST_CASE("tensor shape bookkeeping") {
    Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(t.reshape({4, 2}), ShapeMismatch);
    t.reshape({3, 2});
    CHECK(t.dim(0) == 3);
    CHECK_THROWS_AS(Tensor::from({2}, {1, 2, 3}), ShapeMismatch);
    CHECK(Tensor::scalar(5.0).size() == 1);
}

TEST_CASE("affine forward contract") {
    Tape t;
    Var x = t.leaf(Tensor::from({1, 2}, {1, 2}));
    Var w = t.leaf(Tensor::from({2, 2}, {1, 0, 0, 1}));
    Var b = t.leaf(Tensor::from({2}, {3, 3}));
    const Tensor& y = affine(x, w, b).val();
    CHECK(y[0] == 4.0);
    CHECK(y[1] == 5.0);

    Var b0 = t.leaf(Tensor({2}));
    const Tensor& id = affine(x, w, b0).val();
    CHECK(id[0] == 1.0);
    CHECK(id[1] == 2.0);

    Var bad = t.leaf(Tensor::from({3, 2}, {0, 0, 0, 0, 0, 0}));
    CHECK_THROWS_AS(affine(x, bad, b), ShapeMismatch);
}

TEST_CASE("affine gradient of sum(y) wrt W is the column-broadcast input") {
    ParameterStore ps;
    const int w = ps.add("w", random_tensor({3, 2}, 1));
    const int b = ps.add("b", random_tensor({2}, 2));
    const Tensor x = Tensor::from({1, 3}, {0.5, -1.0, 2.0});

    auto build = [&](Tape& t) {
        return sum_all(affine(t.leaf(x), t.param(ps, w), t.param(ps, b)));
    };
    ps.zero_grad();
    {
        Tape t;
        Var loss = build(t);
        t.backward(loss);
    }
    for (int i = 0; i < 3; ++i)
        for (int o = 0; o < 2; ++o)
            CHECK(ps.grad(w)[i * 2 + o] == doctest::Approx(x[i]).epsilon(1e-12));

    const GradCheckReport rep = grad_check(build, ps, 1e-4, 0, 9);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("conv1d forward contract") {
    Tape t;
    Var x = t.leaf(Tensor::from({1, 1, 4}, {1, 2, 3, 4}));

    Var w1 = t.leaf(Tensor::from({1, 1, 1}, {1}));
    Var b = t.leaf(Tensor({1}));
    const Tensor& ident = conv1d(x, w1, b, 1, 0).val();
    CHECK(ident.shape() == std::vector<std::int64_t>{1, 1, 4});
    for (int i = 0; i < 4; ++i) CHECK(ident[i] == doctest::Approx(i + 1.0));

    Var w2 = t.leaf(Tensor::from({1, 1, 2}, {1, 1}));
    const Tensor& sums = conv1d(x, w2, b, 1, 0).val();
    CHECK(sums.shape() == std::vector<std::int64_t>{1, 1, 3});
    CHECK(sums[0] == 3.0);
    CHECK(sums[1] == 5.0);
    CHECK(sums[2] == 7.0);
}

TEST_CASE("conv1d gradients match finite differences") {
    ParameterStore ps;
    const int x = ps.add("x", random_tensor({2, 3, 7}, 11));
    const int w = ps.add("w", random_tensor({4, 3, 3}, 12, 0.5));
    const int b = ps.add("b", random_tensor({4}, 13, 0.1));
    auto build = [&](Tape& t) {
        Var y = conv1d(t.param(ps, x), t.param(ps, w), t.param(ps, b), 2, 1);
        return masked_mse(y, Tensor(y.val().shape()), Tensor::full(y.val().shape(), 1.0));
    };
    CHECK(grad_check(build, ps, 1e-4, 0, 14).max_rel_err < 1e-3);
}

TEST_CASE("conv2d gradients match finite differences") {
    ParameterStore ps;
    const int x = ps.add("x", random_tensor({2, 3, 4, 4}, 21));
    const int w = ps.add("w", random_tensor({2, 3, 3, 3}, 22, 0.5));
    const int b = ps.add("b", random_tensor({2}, 23, 0.1));
    auto build = [&](Tape& t) {
        Var y = conv2d(t.param(ps, x), t.param(ps, w), t.param(ps, b), 2, 1, 1, 1);
        Var act = leaky_relu(y, 0.2);
        return masked_mse(act, Tensor(act.val().shape()), Tensor::full(act.val().shape(), 1.0));
    };
    CHECK(grad_check(build, ps, 1e-4, 0, 24).max_rel_err < 1e-3);
}

TEST_CASE("residual block: zero conv weights with identity skip is the activation") {
    Tape t;
    Var x = t.leaf(random_tensor({1, 4, 5, 5}, 31));
    ResBlock2dWeights w;
    w.w1 = t.leaf(Tensor({4, 4, 3, 3}));
    w.b1 = t.leaf(Tensor({4}));
    w.w2 = t.leaf(Tensor({4, 4, 3, 3}));
    w.b2 = t.leaf(Tensor({4}));
    const Tensor& y = residual_conv2d_block(x, w, 1, 1, 0.2).val();
    const Tensor& xin = x.val();
    for (std::int64_t i = 0; i < y.size(); ++i)
        CHECK(y[i] == doctest::Approx(xin[i] > 0 ? xin[i] : 0.2 * xin[i]).epsilon(1e-12));
}

TEST_CASE("residual block stride halves spatial dims (ceil)") {
    Tape t;
    Var x = t.leaf(random_tensor({1, 3, 9, 6}, 32));
    ResBlock2dWeights w;
    w.w1 = t.leaf(random_tensor({5, 3, 3, 3}, 33, 0.3));
    w.b1 = t.leaf(Tensor({5}));
    w.w2 = t.leaf(random_tensor({5, 5, 3, 3}, 34, 0.3));
    w.b2 = t.leaf(Tensor({5}));
    w.projected = true;
    w.wp = t.leaf(random_tensor({5, 3, 1, 1}, 35, 0.3));
    w.bp = t.leaf(Tensor({5}));
    const Tensor& y = residual_conv2d_block(x, w, 2, 2, 0.2).val();
    CHECK(y.shape() == std::vector<std::int64_t>{1, 5, 5, 3});
}

TEST_CASE("residual block gradients match finite differences") {
    ParameterStore ps;
    const int x = ps.add("x", random_tensor({2, 3, 4, 4}, 41));
    const int w1 = ps.add("w1", random_tensor({4, 3, 3, 3}, 42, 0.4));
    const int b1 = ps.add("b1", random_tensor({4}, 43, 0.1));
    const int w2 = ps.add("w2", random_tensor({4, 4, 3, 3}, 44, 0.4));
    const int b2 = ps.add("b2", random_tensor({4}, 45, 0.1));
    const int wp = ps.add("wp", random_tensor({4, 3, 1, 1}, 46, 0.4));
    const int bp = ps.add("bp", random_tensor({4}, 47, 0.1));
    auto build = [&](Tape& t) {
        ResBlock2dWeights w;
        w.w1 = t.param(ps, w1);
        w.b1 = t.param(ps, b1);
        w.w2 = t.param(ps, w2);
        w.b2 = t.param(ps, b2);
        w.projected = true;
        w.wp = t.param(ps, wp);
        w.bp = t.param(ps, bp);
        Var y = residual_conv2d_block(t.param(ps, x), w, 2, 1, 0.2);
        return masked_mse(y, Tensor(y.val().shape()), Tensor::full(y.val().shape(), 1.0));
    };
    CHECK(grad_check(build, ps, 1e-4, 0, 48).max_rel_err < 1e-3);
}

TEST_CASE("structural ops carry gradients") {
    ParameterStore ps;
    const int a = ps.add("a", random_tensor({2, 6}, 51));
    const int b = ps.add("b", random_tensor({2, 3}, 52));
    const int m = ps.add("m", random_tensor({4, 3}, 53));
    auto build = [&](Tape& t) {
        Var cat = concat_cols({t.param(ps, a), t.param(ps, b)});
        Var left = slice_cols(cat, 0, 4);
        Var rows = gather_rows(t.param(ps, m), {0, 2, 2, 1});
        Var r3 = reshape(rows, {1, 4, 3});
        Var up = upsample_nearest_1d(transpose_12(r3), 2);
        Var cs = cumsum_last(up);
        Var sig = sigmoid(reshape(cs, {3, 8}));
        Var cl = clamp(left, -0.9, 0.9);
        return add(sum_all(sig), sum_all(mul(cl, cl)));
    };
    CHECK(grad_check(build, ps, 1e-4, 0, 54).max_rel_err < 1e-3);
}

TEST_CASE("cumsum and upsample forward semantics") {
    Tape t;
    Var x = t.leaf(Tensor::from({1, 1, 3}, {1, 2, 3}));
    const Tensor& cs = cumsum_last(x).val();
    CHECK(cs[0] == 1.0);
    CHECK(cs[1] == 3.0);
    CHECK(cs[2] == 6.0);
    const Tensor& up = upsample_nearest_1d(x, 2).val();
    CHECK(up.shape() == std::vector<std::int64_t>{1, 1, 6});
    CHECK(up[0] == 1.0);
    CHECK(up[1] == 1.0);
    CHECK(up[4] == 3.0);
}

TEST_CASE("masked_mse value and masking") {
    Tape t;
    Var pred = t.leaf(Tensor::from({4}, {1, 2, 3, 4}), true);
    const Tensor target = Tensor::from({4}, {1, 0, 3, 0});
    const Tensor mask = Tensor::from({4}, {1, 1, 1, 0});
    const Tensor& loss = masked_mse(pred, target, mask).val();
    CHECK(loss[0] == doctest::Approx(4.0 / 3.0)); // only index 1 differs inside the mask
    const Tensor zero_mask({4});
    CHECK(masked_mse(pred, target, zero_mask).val()[0] == 0.0);
}

TEST_CASE("rot6d op matches the scalar conversion and FK op matches plain FK") {
    const Skeleton s = builtin_skeleton("humanoid8");
    Rng rng(61);
    const int M = 5;
    Tensor x({M * 8, 6});
    std::vector<PoseRotations> poses;
    for (int m = 0; m < M; ++m) {
        PoseRotations rot;
        for (int j = 0; j < 8; ++j) {
            const RotationMatrix r = random_rotation(mix_seed(62, m, static_cast<std::uint64_t>(j)));
            rot.rotations.push_back(r);
            const Rotation6D r6 = matrix_to_rot6d(r);
            for (int k = 0; k < 6; ++k) x[(static_cast<std::int64_t>(m) * 8 + j) * 6 + k] = r6.v[static_cast<std::size_t>(k)];
        }
        poses.push_back(rot);
    }

    Tape t;
    Var rows = rot6d_to_matrix_rows(t.leaf(x));
    const Tensor& r9 = rows.val();
    for (int m = 0; m < M; ++m)
        for (int j = 0; j < 8; ++j) {
            const RotationMatrix& ref = poses[static_cast<std::size_t>(m)].rotations[static_cast<std::size_t>(j)];
            for (int i = 0; i < 3; ++i)
                for (int k = 0; k < 3; ++k)
                    CHECK(r9[((static_cast<std::int64_t>(m) * 8 + j) * 9) + 3 * i + k] ==
                          doctest::Approx(ref(i, k)).epsilon(1e-9));
        }

    Var pos = fk_positions(reshape(rows, {M, 8 * 9}), s.tree, s.rest);
    const Tensor& p = pos.val();
    for (int m = 0; m < M; ++m) {
        const JointPositions ref = forward_kinematics(poses[static_cast<std::size_t>(m)], s.rest, s.tree);
        for (int j = 0; j < 8; ++j)
            for (int c = 0; c < 3; ++c)
                CHECK(p[(static_cast<std::int64_t>(m) * 8 + j) * 3 + c] ==
                      doctest::Approx(ref.positions[static_cast<std::size_t>(j)][c]).epsilon(1e-9));
    }
    (void)rng;
}

TEST_CASE("gradients flow through rot6d conversion and forward kinematics") {
    const Skeleton s = builtin_skeleton("humanoid8");
    ParameterStore ps;
    Tensor init({2 * 8, 6});
    Rng rng(71);
    for (std::int64_t r = 0; r < init.dim(0); ++r) {
        init[r * 6 + 0] = 1.0 + 0.3 * rng.normal();
        init[r * 6 + 1] = 0.3 * rng.normal();
        init[r * 6 + 2] = 0.3 * rng.normal();
        init[r * 6 + 3] = 0.3 * rng.normal();
        init[r * 6 + 4] = 1.0 + 0.3 * rng.normal();
        init[r * 6 + 5] = 0.3 * rng.normal();
    }
    const int x = ps.add("x", init);
    const Tensor target = random_tensor({2, 8 * 3}, 72, 0.2);
    auto build = [&](Tape& t) {
        Var rot = rot6d_to_matrix_rows(t.param(ps, x));
        Var pos = fk_positions(reshape(rot, {2, 8 * 9}), s.tree, s.rest);
        return masked_mse(pos, target, Tensor::full(target.shape(), 1.0));
    };
    CHECK(grad_check(build, ps, 1e-5, 0, 73).max_rel_err < 1e-3);
}

TEST_CASE("gaussian_sample and kl_gaussian") {
    Tape t;
    const int N = 3, D = 2;
    Var mu = t.leaf(random_tensor({N, D}, 81), true);
    Var lv = t.leaf(Tensor::full({N, D}, -10.0), true);
    Tensor eps = random_tensor({N, D}, 82);
    const Tensor& z = gaussian_sample(mu, lv, eps).val();
    for (std::int64_t i = 0; i < z.size(); ++i)
        CHECK(std::abs(z[i] - mu.val()[i]) < 1e-2 * std::abs(mu.val()[i]) + 1e-2);

    // KL(N(1,1) || N(0,1)) = 0.5 per dimension.
    Var q_mu = t.leaf(Tensor::full({1, 1}, 1.0), true);
    Var q_lv = t.leaf(Tensor({1, 1}), true);
    Var p_mu = t.leaf(Tensor({1, 1}), true);
    Var p_lv = t.leaf(Tensor({1, 1}), true);
    CHECK(kl_gaussian(q_mu, q_lv, p_mu, p_lv).val()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(kl_gaussian(p_mu, p_lv, p_mu, p_lv).val()[0] == doctest::Approx(0.0));
}

TEST_CASE("kl_gaussian gradients match finite differences") {
    ParameterStore ps;
    const int qm = ps.add("qm", random_tensor({3, 4}, 91));
    const int ql = ps.add("ql", random_tensor({3, 4}, 92, 0.5));
    const int pm = ps.add("pm", random_tensor({3, 4}, 93));
    const int pl = ps.add("pl", random_tensor({3, 4}, 94, 0.5));
    auto build = [&](Tape& t) {
        return kl_gaussian(t.param(ps, qm), t.param(ps, ql), t.param(ps, pm), t.param(ps, pl));
    };
    CHECK(grad_check(build, ps, 1e-5, 0, 95).max_rel_err < 1e-3);
}

TEST_CASE("grad_check harness on closed forms") {
    ParameterStore ps;
    const int x = ps.add("x", Tensor::from({3}, {1, 2, 3}));
    auto quad = [&](Tape& t) {
        Var v = t.param(ps, x);
        return sum_all(mul(v, v));
    };
    ps.zero_grad();
    {
        Tape t;
        Var loss = quad(t);
        t.backward(loss);
    }
    CHECK(ps.grad(x)[0] == doctest::Approx(2.0));
    CHECK(ps.grad(x)[1] == doctest::Approx(4.0));
    CHECK(ps.grad(x)[2] == doctest::Approx(6.0));
    CHECK(grad_check(quad, ps, 1e-4, 0, 1).max_rel_err < 1e-6);

    auto zero = [&](Tape& t) { return scale(sum_all(t.param(ps, x)), 0.0); };
    ps.zero_grad();
    {
        Tape t;
        Var loss = zero(t);
        t.backward(loss);
    }
    for (int i = 0; i < 3; ++i) CHECK(ps.grad(x)[i] == 0.0);
}

TEST_CASE("grad_check rejects non-finite targets") {
    ParameterStore ps;
    const int x = ps.add("x", Tensor::from({1}, {0.0}));
    auto build = [&](Tape& t) {
        Var v = t.param(ps, x);
        // log of sigmoid(x)-0.5 at x=0 -> log(0) = -inf via mse against inf
        Tensor bad({1});
        bad[0] = std::numeric_limits<double>::infinity();
        return masked_mse(v, bad, Tensor::full({1}, 1.0));
    };
    CHECK_THROWS_AS(grad_check(build, ps, 1e-4, 0, 1), NonFinite);
}

TEST_CASE("forward and backward are bit-deterministic") {
    auto run = [](std::uint64_t seed) {
        ParameterStore ps;
        const int w = ps.add("w", random_tensor({6, 6}, seed));
        const int b = ps.add("b", random_tensor({6}, seed + 1, 0.1));
        const Tensor x = random_tensor({4, 6}, seed + 2);
        Tape t;
        Var y = leaky_relu(affine(t.leaf(x), t.param(ps, w), t.param(ps, b)), 0.2);
        Var loss = masked_mse(y, Tensor(y.val().shape()), Tensor::full(y.val().shape(), 1.0));
        ps.zero_grad();
        t.backward(loss);
        return std::pair<double, double>(loss.val()[0], ps.grad(w)[7]);
    };
    const auto a = run(1234);
    const auto b = run(1234);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("checkpoint round-trip and corruption handling") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "mugl_test_ckpt.bin").string();

    ParameterStore ps;
    ps.add("layer.w", random_tensor({3, 4}, 101));
    ps.add("layer.b", random_tensor({4}, 102));
    ps.save(path);

    ParameterStore fresh;
    fresh.load(path);
    CHECK(fresh.count() == 2);
    CHECK(fresh.handle("layer.w") >= 0);
    // Payload is float32; loaded doubles equal the truncated values exactly.
    for (std::int64_t i = 0; i < ps.value(0).size(); ++i)
        CHECK(fresh.value(0)[i] == static_cast<double>(static_cast<float>(ps.value(0)[i])));

    // Loading into a mismatched store fails loudly.
    ParameterStore other;
    other.add("layer.w", Tensor({3, 4}));
    CHECK_THROWS_AS(other.load(path), CorruptArchive);

    // Truncation and bad magic are detected.
    {
        std::FILE* f = std::fopen(path.c_str(), "rb+");
        REQUIRE(f);
        std::fseek(f, 0, SEEK_END);
        const long size = std::ftell(f);
        std::fclose(f);
        fs::resize_file(path, static_cast<std::uintmax_t>(size - 5));
        ParameterStore t2;
        CHECK_THROWS_AS(t2.load(path), CorruptArchive);
    }
    {
        std::FILE* f = std::fopen(path.c_str(), "rb+");
        REQUIRE(f);
        std::fputc('X', f);
        std::fclose(f);
        ParameterStore t3;
        CHECK_THROWS_AS(t3.load(path), CorruptArchive);
    }
    fs::remove(path);
}
