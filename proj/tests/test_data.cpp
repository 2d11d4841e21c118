#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mugl/data.hpp"
#include "mugl/errors.hpp"
#include "mugl/evaluation.hpp"

using namespace mugl;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const char* name) { return (fs::temp_directory_path() / name).string(); }

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

SynthSpec tiny_spec() {
    SynthSpec spec = desk_default_spec();
    spec.samples_per_class = 3;
    return spec;
}

} // namespace

TEST_CASE("archive round-trip is bit-exact") {
    SynthSpec spec = tiny_spec();
    spec.samples_per_class = 2;
    const Dataset ds = synth_generate(spec, 7);

    const std::string p1 = tmp_path("mugl_rt1.mugl");
    const std::string p2 = tmp_path("mugl_rt2.mugl");
    save_archive(ds, p1);
    const Dataset back = load_archive(p1);
    CHECK(back.samples.size() == ds.samples.size());
    save_archive(back, p2);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("corrupt archives are rejected") {
    SynthSpec spec = tiny_spec();
    spec.samples_per_class = 1;
    const Dataset ds = synth_generate(spec, 3);
    const std::string path = tmp_path("mugl_corrupt.mugl");
    save_archive(ds, path);

    SUBCASE("truncation") {
        fs::resize_file(path, fs::file_size(path) - 7);
        CHECK_THROWS_AS(load_archive(path), CorruptArchive);
    }
    SUBCASE("bad magic") {
        std::FILE* f = std::fopen(path.c_str(), "rb+");
        REQUIRE(f);
        std::fputc('Z', f);
        std::fclose(f);
        CHECK_THROWS_AS(load_archive(path), CorruptArchive);
    }
    SUBCASE("payload flip breaks the record checksum") {
        std::FILE* f = std::fopen(path.c_str(), "rb+");
        REQUIRE(f);
        std::fseek(f, -40, SEEK_END);
        std::fputc(0x7f, f);
        std::fclose(f);
        CHECK_THROWS_AS(load_archive(path), CorruptArchive);
    }
    fs::remove(path);
}

TEST_CASE("json interchange mirrors the archive") {
    SynthSpec spec = tiny_spec();
    spec.samples_per_class = 2;
    const Dataset ds = synth_generate(spec, 11);
    const std::string jpath = tmp_path("mugl_interchange.json");
    const std::string apath = tmp_path("mugl_interchange.mugl");
    const std::string apath2 = tmp_path("mugl_interchange2.mugl");

    save_archive(ds, apath);
    export_json(load_archive(apath), jpath);
    const Dataset imported = import_json(jpath);
    save_archive(imported, apath2);
    CHECK(slurp(apath) == slurp(apath2));

    fs::remove(jpath);
    fs::remove(apath);
    fs::remove(apath2);
}

TEST_CASE("synthetic generation honors class recipes") {
    SUBCASE("zero amplitudes and zero velocity give a static rest pose") {
        SynthSpec spec;
        spec.skeleton_preset = "humanoid8";
        spec.timesteps = 8;
        spec.persons = 2;
        spec.num_viewpoints = 1; // yaw 0 keeps rotations at the identity
        spec.num_setups = 1;
        spec.samples_per_class = 3;
        ClassSpec still;
        still.name = "still";
        still.t_min = 4;
        still.t_max = 8;
        spec.classes = {still};

        const Dataset ds = synth_generate(spec, 5);
        for (const auto& rec : ds.samples) {
            for (int t = 0; t < 8; ++t) {
                CHECK(rec.seq.global.g1[static_cast<std::size_t>(t)].norm() == 0.0);
                for (int j = 0; j < 8; ++j) {
                    const Rotation6D r = rec.seq.local.get(t, 0, j);
                    CHECK(r.v[0] == doctest::Approx(1.0).epsilon(1e-12));
                    CHECK(r.v[4] == doctest::Approx(1.0).epsilon(1e-12));
                }
            }
        }
    }

    SUBCASE("constant-velocity locomotion") {
        SynthSpec spec;
        spec.timesteps = 8;
        spec.persons = 1;
        spec.num_viewpoints = 1;
        spec.num_setups = 1;
        spec.samples_per_class = 2;
        ClassSpec walk;
        walk.name = "walk";
        walk.leg_movement = true;
        walk.velocity = {0.1, 0.0, 0.0};
        walk.t_min = 8;
        walk.t_max = 8;
        spec.classes = {walk};

        const Dataset ds = synth_generate(spec, 9);
        for (const auto& rec : ds.samples)
            for (int t = 0; t < 8; ++t)
                CHECK((rec.seq.global.g1[static_cast<std::size_t>(t)] -
                       Eigen::Vector3d(0.1 * t, 0, 0)).norm() < 1e-12);
    }

    SUBCASE("two-person displacement pattern") {
        SynthSpec spec;
        spec.timesteps = 8;
        spec.persons = 2;
        spec.num_viewpoints = 1;
        spec.num_setups = 1;
        spec.samples_per_class = 2;
        ClassSpec duo;
        duo.name = "duo";
        duo.person_count = 2;
        duo.partner_offset = {0.0, 0.0, 1.5};
        duo.partner_velocity = {0.0, 0.0, -0.1};
        duo.t_min = 8;
        duo.t_max = 8;
        spec.classes = {duo};

        const Dataset ds = synth_generate(spec, 13);
        for (const auto& rec : ds.samples) {
            const auto traj = compose_global(rec.seq.global);
            for (int t = 0; t < 8; ++t) {
                const Eigen::Vector3d expect(0.0, 0.0, 1.5 - 0.1 * t);
                CHECK((traj[1][static_cast<std::size_t>(t)] - traj[0][static_cast<std::size_t>(t)] - expect).norm() < 1e-7);
            }
        }
    }

    SUBCASE("single-person classes duplicate the reference person") {
        SynthSpec spec = tiny_spec();
        const Dataset ds = synth_generate(spec, 17);
        for (const auto& rec : ds.samples) {
            if (ds.manifest.classes[static_cast<std::size_t>(rec.seq.class_label)].person_count != 1)
                continue;
            for (int t = 0; t < rec.seq.local.T; ++t)
                for (int j = 0; j < rec.seq.local.J; ++j)
                    CHECK(rec.seq.local.get(t, 0, j).v == rec.seq.local.get(t, 1, j).v);
            for (const auto& d : rec.seq.global.disp)
                for (const auto& v : d) CHECK(v.norm() == 0.0);
        }
    }

    SUBCASE("bad specs are rejected") {
        SynthSpec spec = tiny_spec();
        spec.classes.clear();
        CHECK_THROWS_AS(synth_generate(spec, 1), BadSpec);

        spec = tiny_spec();
        spec.classes[0].t_max = 99;
        CHECK_THROWS_AS(synth_generate(spec, 1), BadSpec);

        spec = tiny_spec();
        spec.classes[0].joints[0].joint = 64;
        CHECK_THROWS_AS(synth_generate(spec, 1), BadSpec);
    }
}

TEST_CASE("synthetic generation is reproducible by seed") {
    const std::string p1 = tmp_path("mugl_seed1.mugl");
    const std::string p2 = tmp_path("mugl_seed2.mugl");
    save_archive(synth_generate(tiny_spec(), 21), p1);
    save_archive(synth_generate(tiny_spec(), 21), p2);
    CHECK(slurp(p1) == slurp(p2));

    save_archive(synth_generate(tiny_spec(), 22), p2);
    CHECK(slurp(p1) != slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("cross-setup split is an exact partition") {
    const Dataset ds = synth_generate(tiny_spec(), 31);

    SUBCASE("by membership") {
        auto [train, eval] = split_cross_setup(ds, {0});
        CHECK(train.samples.size() + eval.samples.size() == ds.samples.size());
        for (const auto& rec : train.samples) CHECK(rec.setup == 0);
        for (const auto& rec : eval.samples) CHECK(rec.setup == 1);
    }

    SUBCASE("empty train set sends everything to eval") {
        auto [train, eval] = split_cross_setup(ds, {});
        CHECK(train.samples.empty());
        CHECK(eval.samples.size() == ds.samples.size());
    }

    SUBCASE("unknown setup id") {
        CHECK_THROWS_AS(split_cross_setup(ds, {5}), UnknownSetup);
    }
}

TEST_CASE("synth spec file round-trip") {
    const std::string path = tmp_path("mugl_spec.json");
    save_synth_spec(desk_default_spec(), path);
    const SynthSpec back = load_synth_spec(path);
    CHECK(back.classes.size() == 4);
    CHECK(back.timesteps == 16);
    CHECK(back.classes[2].velocity[0] == doctest::Approx(0.09));
    fs::remove(path);
}

TEST_CASE("per-class dynamics separate classes more than intra-class halves") {
    SynthSpec spec = desk_default_spec();
    spec.samples_per_class = 24;
    const Dataset ds = synth_generate(spec, 41);

    const int K = ds.manifest.num_classes;
    std::vector<std::vector<SequenceFeatures>> feats(static_cast<std::size_t>(K));
    for (const auto& rec : ds.samples)
        feats[static_cast<std::size_t>(rec.seq.class_label)].push_back(
            features_for(rec.seq, ds.manifest.skeleton));

    for (int a = 0; a < K; ++a) {
        const auto& fa = feats[static_cast<std::size_t>(a)];
        std::vector<SequenceFeatures> h1(fa.begin(), fa.begin() + static_cast<std::ptrdiff_t>(fa.size() / 2));
        std::vector<SequenceFeatures> h2(fa.begin() + static_cast<std::ptrdiff_t>(fa.size() / 2), fa.end());

        Eigen::MatrixXd pool(static_cast<std::int64_t>(fa.size()),
                             fa[0].frames.rows() * fa[0].frames.cols());
        for (std::size_t i = 0; i < fa.size(); ++i)
            for (Eigen::Index t = 0; t < fa[i].frames.rows(); ++t)
                pool.block(static_cast<std::int64_t>(i), t * fa[i].frames.cols(), 1,
                           fa[i].frames.cols()) = fa[i].frames.row(t);
        const double sigma = median_bandwidth(pool);

        const double self = mmd_s(h1, h2, sigma);
        for (int b = 0; b < K; ++b) {
            if (a == b) continue;
            CHECK(self < mmd_s(fa, feats[static_cast<std::size_t>(b)], sigma));
        }
    }
}
