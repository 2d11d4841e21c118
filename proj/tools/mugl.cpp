// Command-line front end: data synthesis, training, generation, evaluation
// and verification subcommands over the mugl core library.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <nlohmann/json.hpp>

#include "mugl/config.hpp"
#include "mugl/data.hpp"
#include "mugl/errors.hpp"
#include "mugl/evaluation.hpp"
#include "mugl/gradcheck.hpp"
#include "mugl/model.hpp"
#include "mugl/rng.hpp"
#include "mugl/training.hpp"

using nlohmann::json;

namespace {

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("MUGL_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

void cmd_synth_data(const std::string& spec_path, std::uint64_t seed, const std::string& out) {
    const mugl::SynthSpec spec =
        spec_path.empty() ? mugl::desk_default_spec() : mugl::load_synth_spec(spec_path);
    const mugl::Dataset ds = mugl::synth_generate(spec, seed);
    mugl::save_archive(ds, out);
    mugl::write_run_metadata(out, "synth-data", seed, nullptr);
    std::printf("wrote %zu samples (%d classes) to %s\n", ds.samples.size(),
                ds.manifest.num_classes, out.c_str());
}

void cmd_train(const std::string& config_path, const std::string& data_path,
               const std::string& out, std::int64_t seed_override) {
    mugl::RunConfig cfg =
        config_path.empty() ? mugl::RunConfig::desk_default() : mugl::RunConfig::from_file(config_path);
    if (seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_override);

    const mugl::Dataset ds = mugl::load_archive(data_path);
    mugl::MuglModel model(cfg.model);
    const mugl::FitResult result =
        mugl::fit(model, ds, cfg.train, cfg.loss, out, out + ".history.csv");

    // Sidecar manifest lets `generate` rebuild archives without the dataset.
    {
        mugl::Dataset header;
        header.manifest = ds.manifest;
        mugl::export_json(header, out + ".meta.json");
    }
    cfg.echo(out + ".config.json");
    mugl::write_run_metadata(out, "train", cfg.train.seed, &cfg);
    std::printf("trained %d epochs; final masked 3D reconstruction MSE %.6g\n", result.epochs_run,
                result.final_recon_mse3d);
}

void cmd_generate(const std::string& config_path, const std::string& ckpt,
                  const std::string& meta_path, int class_label, int count, std::uint64_t seed,
                  const std::string& out) {
    mugl::RunConfig cfg =
        config_path.empty() ? mugl::RunConfig::desk_default() : mugl::RunConfig::from_file(config_path);
    std::ifstream probe(ckpt, std::ios::binary);
    if (!probe) throw mugl::UntrainedModel("checkpoint not found: " + ckpt);
    probe.close();

    const std::string sidecar = meta_path.empty() ? ckpt + ".meta.json" : meta_path;
    std::ifstream meta_probe(sidecar);
    if (!meta_probe)
        throw mugl::UntrainedModel("checkpoint sidecar not found: " + sidecar +
                                   " (expected next to the checkpoint, written by `train`)");
    meta_probe.close();
    mugl::Dataset header = mugl::import_json(sidecar);

    mugl::MuglModel model(cfg.model);
    model.params().load(ckpt);

    if (class_label < 0 || class_label >= header.manifest.num_classes)
        throw mugl::OutOfRange("class outside the trained class set");
    const int person_count =
        header.manifest.classes[static_cast<std::size_t>(class_label)].person_count;
    const std::vector<mugl::ActionSequence> seqs =
        model.generate(class_label, count, seed, person_count);

    mugl::Dataset gen;
    gen.manifest = header.manifest;
    for (const auto& s : seqs) {
        mugl::SampleRecord rec;
        rec.seq = s;
        rec.setup = 0;
        gen.samples.push_back(std::move(rec));
    }
    mugl::save_archive(gen, out);
    mugl::write_run_metadata(out, "generate", seed, &cfg);
    std::printf("generated %d class-%d sequences to %s\n", count, class_label, out.c_str());
}

void cmd_eval(const std::string& gen_path, const std::string& ref_path, const std::string& out,
              int threads) {
    const mugl::Dataset gen = mugl::load_archive(gen_path);
    const mugl::Dataset ref = mugl::load_archive(ref_path);
    const mugl::MetricReport report = mugl::evaluate(gen, ref, threads);
    if (!out.empty()) {
        mugl::write_report_csv(report, out);
        mugl::write_run_metadata(out, "eval", 0, nullptr);
    }
    for (std::size_t c = 0; c < report.class_names.size(); ++c)
        std::printf("%-12s mmd_a=%.6g mmd_s=%.6g\n", report.class_names[c].c_str(),
                    report.mmd_a[c], report.mmd_s[c]);
    std::printf("mean         mmd_a=%.6g(+/-%.6g) mmd_s=%.6g(+/-%.6g)\n", report.mean_a,
                report.std_a, report.mean_s, report.std_s);
}

void cmd_export_json(const std::string& in, const std::string& out, bool joints, int upsample) {
    const mugl::Dataset ds = mugl::load_archive(in);
    if (!joints) {
        mugl::export_json(ds, out);
    } else {
        // Composed world joints for external viewers, optionally resampled to
        // a higher temporal resolution.
        json root;
        root["format"] = "mugl-joints";
        root["joint_parents"] = ds.manifest.skeleton.tree.parent;
        json samples = json::array();
        for (const auto& rec : ds.samples) {
            const int t_s = rec.seq.length;
            const mugl::WorldJoints world = mugl::compose_world(rec.seq, ds.manifest.skeleton);
            const int P = static_cast<int>(world.size());
            const int J = ds.manifest.joint_count();
            const int src_T = std::max(4, t_s);
            std::vector<double> flat(static_cast<std::size_t>(src_T) * P * J * 3);
            for (int t = 0; t < src_T; ++t) {
                const int te = std::min(t, t_s - 1);
                for (int p = 0; p < P; ++p)
                    for (int j = 0; j < J; ++j)
                        for (int c = 0; c < 3; ++c)
                            flat[((static_cast<std::size_t>(t) * P + p) * J + j) * 3 + c] =
                                world[static_cast<std::size_t>(p)][static_cast<std::size_t>(te)][static_cast<std::size_t>(j)][c];
            }
            int out_T = src_T;
            if (upsample > 1) {
                out_T = src_T * upsample;
                flat = mugl::temporal_upsample_bicubic(flat, src_T, P * J * 3, out_T);
            }
            json s;
            s["class"] = rec.seq.class_label;
            s["length"] = out_T;
            s["persons"] = rec.seq.person_count;
            s["joints"] = flat;
            samples.push_back(std::move(s));
        }
        root["samples"] = std::move(samples);
        std::ofstream os(out, std::ios::trunc);
        if (!os) throw mugl::IoFailure("cannot write joints json: " + out);
        os << root.dump(1) << "\n";
    }
    std::printf("exported %zu samples to %s\n", ds.samples.size(), out.c_str());
}

void cmd_import_json(const std::string& in, const std::string& out) {
    const mugl::Dataset ds = mugl::import_json(in);
    mugl::save_archive(ds, out);
    std::printf("imported %zu samples to %s\n", ds.samples.size(), out.c_str());
}

int cmd_gradcheck(const std::string& config_path, std::uint64_t seed, int per_tensor,
                  bool exhaustive) {
    mugl::RunConfig cfg =
        config_path.empty() ? mugl::RunConfig::desk_default() : mugl::RunConfig::from_file(config_path);

    // A small batch of the synthetic corpus drives the full objective.
    mugl::SynthSpec spec = mugl::desk_default_spec();
    spec.timesteps = cfg.model.timesteps;
    spec.persons = cfg.model.persons;
    spec.num_viewpoints = cfg.model.num_viewpoints;
    spec.skeleton_preset = cfg.model.skeleton_preset;
    spec.samples_per_class = 1;
    while (static_cast<int>(spec.classes.size()) > cfg.model.num_classes) spec.classes.pop_back();
    for (auto& cls : spec.classes) cls.t_max = std::min(cls.t_max, cfg.model.timesteps);
    const mugl::Dataset ds = mugl::synth_generate(spec, mugl::mix_seed(seed, 0xdeedULL));

    mugl::MuglModel model(cfg.model);
    std::vector<int> idx;
    for (int i = 0; i < std::min<int>(4, static_cast<int>(ds.samples.size())); ++i)
        idx.push_back(i);
    const mugl::ModelBatch batch = model.make_batch(ds, idx);
    const mugl::BatchTargets targets = mugl::make_targets(ds, idx, model.skeleton());

    auto build = [&](mugl::Tape& tape) {
        mugl::Posterior post = model.encode(tape, batch);
        mugl::Var z = model.reparameterize(tape, post, mugl::mix_seed(seed, 0x3aULL));
        mugl::Var zcv = model.condition_latent(tape, z, batch.class_idx, batch.view_idx);
        mugl::Var pred6 = model.decode_local(tape, zcv);
        mugl::Var pred3 = model.fk_from_local(tape, pred6, batch.N);
        mugl::Var predG = model.decode_global(tape, zcv);
        mugl::Var predC = model.decode_length_code(tape, zcv);
        mugl::Var l_local = mugl::loss_local(tape, pred6, pred3, targets.local6, targets.local3,
                                             targets.mask_t, cfg.loss.lambda_rot);
        auto [l_global, l_len] = mugl::loss_global_and_len(tape, predG, predC, targets.global,
                                                           targets.code, targets.mask_t, 1.0, 1.0);
        mugl::Var kl = mugl::kl_gaussian(post.mu, post.logvar,
                                         model.prior_mu_rows(tape, batch.class_idx),
                                         model.prior_logvar_rows(tape, batch.class_idx));
        return mugl::total_loss(tape, l_local, l_global, l_len, kl, cfg.loss, 1.0);
    };

    const mugl::GradCheckReport report =
        mugl::grad_check(build, model.params(), 1e-4, exhaustive ? 0 : per_tensor, seed);
    std::printf("gradcheck: max relative error %.3e over %lld coordinates (worst: %s[%lld] "
                "analytic=%.6e numeric=%.6e)\n",
                report.max_rel_err, static_cast<long long>(report.checked_coords),
                report.worst_param.c_str(), static_cast<long long>(report.worst_index),
                report.worst_analytic, report.worst_numeric);
    return report.max_rel_err < 1e-3 ? 0 : 1;
}

int cmd_fk_check(const std::string& in, double tol) {
    const mugl::Dataset ds = mugl::load_archive(in);
    const mugl::Skeleton& skel = ds.manifest.skeleton;
    const std::vector<double> rest_len = mugl::bone_lengths(skel.rest, skel.tree);
    double worst = 0.0;
    for (const auto& rec : ds.samples) {
        const mugl::ActionSequence& s = rec.seq;
        for (int t = 0; t < s.local.T; ++t)
            for (int p = 0; p < s.local.P; ++p) {
                mugl::PoseRotations rot;
                for (int j = 0; j < s.local.J; ++j)
                    rot.rotations.push_back(mugl::rot6d_to_matrix(s.local.get(t, p, j)));
                const mugl::JointPositions pos =
                    mugl::forward_kinematics(rot, skel.rest, skel.tree);
                const std::vector<double> lens = mugl::bone_lengths(pos, skel.tree);
                for (std::size_t b = 0; b < lens.size(); ++b)
                    worst = std::max(worst, std::abs(lens[b] - rest_len[b]) / rest_len[b]);
            }
    }
    std::printf("fk-check: %zu samples, max relative bone-length deviation %.3e (tol %.1e)\n",
                ds.samples.size(), worst, tol);
    return worst <= tol ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MUGL: class-conditioned multi-person skeletal action synthesis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", mugl::kMuglVersion);

    std::string spec_path, config_path, ckpt_path, meta_path, out_path, in_path, gen_path, ref_path;
    std::uint64_t seed = 1;
    std::int64_t seed_override = -1;
    int class_label = 0, count = 1, threads = 0, per_tensor = 25, upsample = 1;
    double tol = 1e-4;
    bool joints = false, exhaustive = false;

    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset archive");
    synth->add_option("--spec", spec_path, "synthesis spec JSON (default: built-in desk spec)");
    synth->add_option("--seed", seed, "RNG seed");
    synth->add_option("--out", out_path, "output archive path")->required();

    auto* train = app.add_subcommand("train", "train a model on an archive");
    train->add_option("data", in_path, "training archive")->required();
    train->add_option("--config", config_path, "run config JSON (default: desk config)");
    train->add_option("--seed", seed_override, "override the config seed");
    train->add_option("--out", out_path, "checkpoint output path")->required();

    auto* gen = app.add_subcommand("generate", "sample sequences from a trained model");
    gen->add_option("--config", config_path, "run config JSON (default: desk config)");
    gen->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    gen->add_option("--meta", meta_path, "manifest sidecar (default: <ckpt>.meta.json)");
    gen->add_option("--class", class_label, "action class index")->required();
    gen->add_option("--count", count, "number of sequences");
    gen->add_option("--seed", seed, "RNG seed");
    gen->add_option("--out", out_path, "output archive path")->required();

    auto* eval = app.add_subcommand("eval", "MMD metrics of generated vs reference archives");
    eval->add_option("generated", gen_path, "generated archive")->required();
    eval->add_option("reference", ref_path, "reference archive")->required();
    eval->add_option("--out", out_path, "metric report CSV");
    eval->add_option("--threads", threads, "worker threads (env MUGL_THREADS)");

    auto* exp = app.add_subcommand("export-json", "archive to JSON");
    exp->add_option("input", in_path, "archive path")->required();
    exp->add_option("--out", out_path, "output JSON path")->required();
    exp->add_flag("--joints", joints, "emit composed 3D joint positions for viewers");
    exp->add_option("--upsample", upsample, "bicubic temporal upsample factor for --joints");

    auto* imp = app.add_subcommand("import-json", "JSON to archive");
    imp->add_option("input", in_path, "JSON path")->required();
    imp->add_option("--out", out_path, "output archive path")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of the training gradient");
    gc->add_option("--config", config_path, "run config JSON (default: desk config)");
    gc->add_option("--seed", seed, "RNG seed");
    gc->add_option("--per-tensor", per_tensor, "checked coordinates per parameter tensor");
    gc->add_flag("--exhaustive", exhaustive, "check every coordinate");

    auto* fk = app.add_subcommand("fk-check", "bone-length audit of an archive");
    fk->add_option("input", in_path, "archive path")->required();
    fk->add_option("--tol", tol, "max relative deviation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        // CLI11 returns 0 for --help/--version; anything else is a usage error.
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            cmd_synth_data(spec_path, seed, out_path);
        } else if (train->parsed()) {
            cmd_train(config_path, in_path, out_path, seed_override);
        } else if (gen->parsed()) {
            cmd_generate(config_path, ckpt_path, meta_path, class_label, count, seed, out_path);
        } else if (eval->parsed()) {
            cmd_eval(gen_path, ref_path, out_path, resolve_threads(threads));
        } else if (exp->parsed()) {
            cmd_export_json(in_path, out_path, joints, upsample);
        } else if (imp->parsed()) {
            cmd_import_json(in_path, out_path);
        } else if (gc->parsed()) {
            return cmd_gradcheck(config_path, seed, per_tensor, exhaustive);
        } else if (fk->parsed()) {
            return cmd_fk_check(in_path, tol);
        }
    } catch (const mugl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
