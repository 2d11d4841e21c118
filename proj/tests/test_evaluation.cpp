#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mugl/data.hpp"
#include "mugl/errors.hpp"
#include "mugl/evaluation.hpp"
#include "mugl/rng.hpp"

using namespace mugl;

namespace {

SequenceFeatures random_features(int T, int D, std::uint64_t seed, double offset = 0.0) {
    SequenceFeatures f;
    f.frames.resize(T, D);
    Rng rng(seed);
    for (int t = 0; t < T; ++t)
        for (int d = 0; d < D; ++d) f.frames(t, d) = rng.normal() + offset;
    return f;
}

// Naive estimator over all ordered pairs, including the diagonal.
template <typename Kfn>
double naive_mmd2(const std::vector<SequenceFeatures>& g, const std::vector<SequenceFeatures>& e,
                  double sigma, Kfn kfn) {
    double kgg = 0.0, kee = 0.0, kge = 0.0;
    for (const auto& a : g)
        for (const auto& b : g) kgg += kfn(a, b, sigma);
    for (const auto& a : e)
        for (const auto& b : e) kee += kfn(a, b, sigma);
    for (const auto& a : g)
        for (const auto& b : e) kge += kfn(a, b, sigma);
    const double m = static_cast<double>(g.size()), n = static_cast<double>(e.size());
    return kgg / (m * m) + kee / (n * n) - 2.0 * kge / (m * n);
}

double kernel_avg_ref(const SequenceFeatures& a, const SequenceFeatures& b, double sigma) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < a.frames.rows(); ++t)
        acc += std::exp(-(a.frames.row(t) - b.frames.row(t)).squaredNorm() / (2 * sigma * sigma));
    return acc / static_cast<double>(a.frames.rows());
}

double kernel_flat_ref(const SequenceFeatures& a, const SequenceFeatures& b, double sigma) {
    double d2 = 0.0;
    for (Eigen::Index t = 0; t < a.frames.rows(); ++t)
        d2 += (a.frames.row(t) - b.frames.row(t)).squaredNorm();
    return std::exp(-d2 / (2 * sigma * sigma));
}

} // namespace

TEST_CASE("rbf kernel") {
    Eigen::VectorXd x(3), y(3);
    x << 1, 2, 3;
    y = x;
    CHECK(rbf_kernel(x, y, 0.7) == 1.0);

    // Squared distance of exactly 2 sigma^2 evaluates to e^-1.
    const double sigma = 1.3;
    y = x;
    y(0) += std::sqrt(2.0) * sigma;
    CHECK(rbf_kernel(x, y, sigma) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd a(4), b(4);
        for (int k = 0; k < 4; ++k) {
            a(k) = rng.normal();
            b(k) = rng.normal();
        }
        CHECK(std::abs(rbf_kernel(a, b, 0.9) - rbf_kernel(b, a, 0.9)) < 1e-12);
    }

    Eigen::VectorXd short_y(2);
    CHECK_THROWS_AS(rbf_kernel(x, short_y, 1.0), ShapeMismatch);
    CHECK_THROWS_AS(rbf_kernel(x, y, 0.0), OutOfRange);
}

TEST_CASE("median bandwidth") {
    SUBCASE("two points at distance d") {
        Eigen::MatrixXd pts(2, 2);
        pts << 0, 0, 3, 4; // distance 5
        CHECK(median_bandwidth(pts) == doctest::Approx(5.0 / std::sqrt(2.0)).epsilon(1e-12));
    }

    SUBCASE("identical points fall back to one") {
        Eigen::MatrixXd pts = Eigen::MatrixXd::Ones(5, 3);
        CHECK(median_bandwidth(pts) == 1.0);
    }

    SUBCASE("matches a brute-force sorted median on 50 random points") {
        Rng rng(7);
        Eigen::MatrixXd pts(50, 4);
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 4; ++j) pts(i, j) = rng.normal();

        std::vector<double> d2;
        for (int i = 0; i < 50; ++i)
            for (int j = i + 1; j < 50; ++j) d2.push_back((pts.row(i) - pts.row(j)).squaredNorm());
        std::sort(d2.begin(), d2.end());
        const std::size_t mid = d2.size() / 2;
        const double median =
            d2.size() % 2 ? d2[mid] : 0.5 * (d2[mid] + d2[mid - 1]);
        CHECK(median_bandwidth(pts) == doctest::Approx(std::sqrt(median / 2.0)).epsilon(1e-12));
    }

    SUBCASE("needs two samples") {
        Eigen::MatrixXd one(1, 3);
        CHECK_THROWS_AS(median_bandwidth(one), TooFewSamples);
    }
}

TEST_CASE("mmd estimators") {
    std::vector<SequenceFeatures> g, e;
    for (int i = 0; i < 10; ++i) g.push_back(random_features(6, 5, 100 + static_cast<std::uint64_t>(i)));
    for (int i = 0; i < 10; ++i) e.push_back(random_features(6, 5, 200 + static_cast<std::uint64_t>(i), 0.5));
    const double sigma = 1.7;

    SUBCASE("identical sets vanish") {
        CHECK(std::abs(mmd_a(g, g, sigma)) < 1e-9);
        CHECK(std::abs(mmd_s(g, g, sigma)) < 1e-9);
    }

    SUBCASE("singleton formula") {
        std::vector<SequenceFeatures> sg{g[0]}, se{e[0]};
        const double kappa_a = kernel_avg_ref(g[0], e[0], sigma);
        CHECK(mmd_a(sg, se, sigma) == doctest::Approx(2.0 - 2.0 * kappa_a).epsilon(1e-12));

        const double kappa_s = kernel_flat_ref(g[0], e[0], sigma);
        CHECK(mmd_s(sg, se, sigma) == doctest::Approx(2.0 - 2.0 * kappa_s).epsilon(1e-12));
    }

    SUBCASE("agreement with the naive double-loop oracle") {
        CHECK(std::abs(mmd_a(g, e, sigma) - naive_mmd2(g, e, sigma, kernel_avg_ref)) < 1e-10);
        CHECK(std::abs(mmd_s(g, e, sigma) - naive_mmd2(g, e, sigma, kernel_flat_ref)) < 1e-10);
    }

    SUBCASE("symmetry") {
        CHECK(std::abs(mmd_a(g, e, sigma) - mmd_a(e, g, sigma)) < 1e-12);
        CHECK(std::abs(mmd_s(g, e, sigma) - mmd_s(e, g, sigma)) < 1e-12);
    }

    SUBCASE("nonnegativity on random sets") {
        for (std::uint64_t s = 0; s < 5; ++s) {
            std::vector<SequenceFeatures> a, b;
            for (int i = 0; i < 6; ++i) a.push_back(random_features(4, 3, 300 + 10 * s + static_cast<std::uint64_t>(i)));
            for (int i = 0; i < 8; ++i) b.push_back(random_features(4, 3, 400 + 10 * s + static_cast<std::uint64_t>(i)));
            CHECK(mmd_a(a, b, sigma) >= 0.0);
            CHECK(mmd_s(a, b, sigma) >= 0.0);
        }
    }

    SUBCASE("empty sets are rejected") {
        std::vector<SequenceFeatures> none;
        CHECK_THROWS_AS(mmd_a(none, e, sigma), EmptySet);
        CHECK_THROWS_AS(mmd_s(g, none, sigma), EmptySet);
    }
}

TEST_CASE("features_for trims, pads and resamples") {
    SynthSpec spec = desk_default_spec();
    spec.samples_per_class = 2;
    const Dataset ds = synth_generate(spec, 3);
    const SequenceFeatures f = features_for(ds.samples[0].seq, ds.manifest.skeleton);
    CHECK(f.frames.rows() == kMetricTimesteps);
    CHECK(f.frames.cols() == 2 * 8 * 3);
    CHECK(f.frames.allFinite());

    // Very short sequences still produce the fixed grid.
    ActionSequence short_seq = ds.samples[0].seq;
    short_seq.length = 2;
    const SequenceFeatures fs = features_for(short_seq, ds.manifest.skeleton);
    CHECK(fs.frames.rows() == kMetricTimesteps);
}

TEST_CASE("evaluate") {
    SynthSpec spec = desk_default_spec();
    spec.samples_per_class = 8;
    const Dataset ds = synth_generate(spec, 9);

    SUBCASE("reference against itself is zero") {
        const MetricReport rep = evaluate(ds, ds);
        for (double v : rep.mmd_a) CHECK(std::abs(v) < 1e-9);
        for (double v : rep.mmd_s) CHECK(std::abs(v) < 1e-9);
    }

    SUBCASE("mean is the arithmetic mean of per-class values") {
        const Dataset other = synth_generate(spec, 10);
        const MetricReport rep = evaluate(other, ds);
        double ma = 0.0, ms = 0.0;
        for (double v : rep.mmd_a) ma += v;
        for (double v : rep.mmd_s) ms += v;
        CHECK(rep.mean_a == doctest::Approx(ma / 4.0).epsilon(1e-12));
        CHECK(rep.mean_s == doctest::Approx(ms / 4.0).epsilon(1e-12));
        for (double v : rep.mmd_a) CHECK(v >= 0.0);
    }

    SUBCASE("thread count does not change results") {
        const Dataset other = synth_generate(spec, 11);
        const MetricReport serial = evaluate(other, ds, 1);
        const MetricReport parallel = evaluate(other, ds, 4);
        for (std::size_t c = 0; c < serial.mmd_a.size(); ++c) {
            CHECK(serial.mmd_a[c] == parallel.mmd_a[c]);
            CHECK(serial.mmd_s[c] == parallel.mmd_s[c]);
        }
    }

    SUBCASE("disjoint constant-pose classes separate") {
        // Two single-class datasets built from different recipes.
        SynthSpec sa;
        sa.timesteps = 16;
        sa.persons = 2;
        sa.num_viewpoints = 1;
        sa.num_setups = 1;
        sa.samples_per_class = 6;
        ClassSpec a;
        a.name = "a";
        a.t_min = 8;
        a.t_max = 16;
        sa.classes = {a};
        SynthSpec sb = sa;
        sb.classes[0].velocity = {0.2, 0.0, 0.0};

        const Dataset da = synth_generate(sa, 1);
        Dataset db = synth_generate(sb, 2);
        db.manifest.classes[0].name = "a"; // same class set, different dynamics
        const MetricReport rep = evaluate(db, da);
        CHECK(rep.mmd_a[0] > 0.0);
        CHECK(rep.mmd_s[0] > 0.0);
    }

    SUBCASE("mismatched archives are rejected") {
        Dataset other = ds;
        other.manifest.classes[0].name = "renamed";
        CHECK_THROWS_AS(evaluate(other, ds), ClassMismatch);

        Dataset skel = ds;
        skel.manifest.skeleton.rest.positions[2] += Eigen::Vector3d(0.1, 0, 0);
        CHECK_THROWS_AS(evaluate(skel, ds), SkeletonMismatch);
    }
}

TEST_CASE("report csv") {
    namespace fs = std::filesystem;
    MetricReport rep;
    rep.class_names = {"wave", "walk"};
    rep.mmd_a = {0.25, 0.5};
    rep.mmd_s = {0.125, 0.25};
    rep.mean_a = 0.375;
    rep.std_a = 0.125;
    rep.mean_s = 0.1875;
    rep.std_s = 0.0625;
    const std::string path = (fs::temp_directory_path() / "mugl_report.csv").string();
    write_report_csv(rep, path);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "class,mmd_a,mmd_s");
    std::getline(is, line);
    CHECK(line == "wave,0.25,0.125");
    std::getline(is, line);
    std::getline(is, line);
    CHECK(line == "mean,0.375,0.1875");
    fs::remove(path);
}
