#include "mugl/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "mugl/errors.hpp"

using nlohmann::json;

namespace mugl {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

ModelConfig model_from_json(const json& j) {
    reject_unknown(j, {"timesteps", "joints", "persons", "num_classes", "num_viewpoints",
                       "latent_dim", "theta_s", "skeleton", "enc_local_channels",
                       "enc_global_channels", "enc_length_channels", "f_local", "f_global",
                       "f_length", "encoder_hidden", "class_embed", "view_embed", "zcv_dim",
                       "seed_timesteps", "dec_local_channels", "dec_global_channels",
                       "dec_length_channels", "dec_mlp_hidden", "leaky_slope", "logvar_clamp",
                       "init_seed"},
                   "model");
    ModelConfig m;
    maybe(j, "timesteps", m.timesteps);
    maybe(j, "joints", m.joints);
    maybe(j, "persons", m.persons);
    maybe(j, "num_classes", m.num_classes);
    maybe(j, "num_viewpoints", m.num_viewpoints);
    maybe(j, "latent_dim", m.latent_dim);
    maybe(j, "theta_s", m.theta_s);
    maybe(j, "skeleton", m.skeleton_preset);
    maybe(j, "enc_local_channels", m.enc_local_channels);
    maybe(j, "enc_global_channels", m.enc_global_channels);
    maybe(j, "enc_length_channels", m.enc_length_channels);
    maybe(j, "f_local", m.f_local);
    maybe(j, "f_global", m.f_global);
    maybe(j, "f_length", m.f_length);
    maybe(j, "encoder_hidden", m.encoder_hidden);
    maybe(j, "class_embed", m.class_embed);
    maybe(j, "view_embed", m.view_embed);
    maybe(j, "zcv_dim", m.zcv_dim);
    maybe(j, "seed_timesteps", m.seed_timesteps);
    maybe(j, "dec_local_channels", m.dec_local_channels);
    maybe(j, "dec_global_channels", m.dec_global_channels);
    maybe(j, "dec_length_channels", m.dec_length_channels);
    maybe(j, "dec_mlp_hidden", m.dec_mlp_hidden);
    maybe(j, "leaky_slope", m.leaky_slope);
    maybe(j, "logvar_clamp", m.logvar_clamp);
    maybe(j, "init_seed", m.init_seed);
    return m;
}

json model_to_json(const ModelConfig& m) {
    json j;
    j["timesteps"] = m.timesteps;
    j["joints"] = m.joints;
    j["persons"] = m.persons;
    j["num_classes"] = m.num_classes;
    j["num_viewpoints"] = m.num_viewpoints;
    j["latent_dim"] = m.latent_dim;
    j["theta_s"] = m.theta_s;
    j["skeleton"] = m.skeleton_preset;
    j["enc_local_channels"] = m.enc_local_channels;
    j["enc_global_channels"] = m.enc_global_channels;
    j["enc_length_channels"] = m.enc_length_channels;
    j["f_local"] = m.f_local;
    j["f_global"] = m.f_global;
    j["f_length"] = m.f_length;
    j["encoder_hidden"] = m.encoder_hidden;
    j["class_embed"] = m.class_embed;
    j["view_embed"] = m.view_embed;
    j["zcv_dim"] = m.zcv_dim;
    j["seed_timesteps"] = m.seed_timesteps;
    j["dec_local_channels"] = m.dec_local_channels;
    j["dec_global_channels"] = m.dec_global_channels;
    j["dec_length_channels"] = m.dec_length_channels;
    j["dec_mlp_hidden"] = m.dec_mlp_hidden;
    j["leaky_slope"] = m.leaky_slope;
    j["logvar_clamp"] = m.logvar_clamp;
    j["init_seed"] = m.init_seed;
    return j;
}

} // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    reject_unknown(j, {"model", "loss", "train"}, "config root");

    RunConfig cfg;
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        reject_unknown(l, {"lambda_rot", "lambda_global", "lambda_len", "kl_scale"}, "loss");
        maybe(l, "lambda_rot", cfg.loss.lambda_rot);
        maybe(l, "lambda_global", cfg.loss.lambda_global);
        maybe(l, "lambda_len", cfg.loss.lambda_len);
        maybe(l, "kl_scale", cfg.loss.kl_scale);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t, {"epochs", "batch_size", "lr", "lr_decay", "lr_step", "kl_cycles",
                           "grad_clip", "adam_beta1", "adam_beta2", "adam_eps", "leg_boost",
                           "seed", "eval_every", "target_recon"},
                       "train");
        maybe(t, "epochs", cfg.train.epochs);
        maybe(t, "batch_size", cfg.train.batch_size);
        maybe(t, "lr", cfg.train.lr);
        maybe(t, "lr_decay", cfg.train.lr_decay);
        maybe(t, "lr_step", cfg.train.lr_step);
        maybe(t, "kl_cycles", cfg.train.kl_cycles);
        maybe(t, "grad_clip", cfg.train.grad_clip);
        maybe(t, "adam_beta1", cfg.train.adam_beta1);
        maybe(t, "adam_beta2", cfg.train.adam_beta2);
        maybe(t, "adam_eps", cfg.train.adam_eps);
        maybe(t, "leg_boost", cfg.train.leg_boost);
        maybe(t, "seed", cfg.train.seed);
        maybe(t, "eval_every", cfg.train.eval_every);
        maybe(t, "target_recon", cfg.train.target_recon);
    }
    cfg.loss.theta_s = cfg.model.theta_s;
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoFailure("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string RunConfig::to_json_text() const {
    json j;
    j["model"] = model_to_json(model);
    j["loss"] = {{"lambda_rot", loss.lambda_rot},
                 {"lambda_global", loss.lambda_global},
                 {"lambda_len", loss.lambda_len},
                 {"kl_scale", loss.kl_scale}};
    j["train"] = {{"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"lr_decay", train.lr_decay},
                  {"lr_step", train.lr_step},
                  {"kl_cycles", train.kl_cycles},
                  {"grad_clip", train.grad_clip},
                  {"adam_beta1", train.adam_beta1},
                  {"adam_beta2", train.adam_beta2},
                  {"adam_eps", train.adam_eps},
                  {"leg_boost", train.leg_boost},
                  {"seed", train.seed},
                  {"eval_every", train.eval_every},
                  {"target_recon", train.target_recon}};
    return j.dump(2);
}

void RunConfig::echo(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoFailure("cannot write config echo: " + path);
    os << to_json_text() << "\n";
}

RunConfig RunConfig::desk_default() {
    RunConfig cfg;
    // Defaults in the structs already describe the desk model; pin the
    // training knobs that differ from the full-scale schedule defaults.
    cfg.train.batch_size = 20;
    cfg.train.epochs = 200;
    cfg.train.target_recon = -1.0;
    return cfg;
}

void write_run_metadata(const std::string& artifact_path, const std::string& command,
                        std::uint64_t seed, const RunConfig* config) {
    json j;
    j["version"] = kMuglVersion;
    j["command"] = command;
    j["seed"] = seed;
    if (config) j["config"] = json::parse(config->to_json_text());
    std::ofstream os(artifact_path + ".run.json", std::ios::trunc);
    if (!os) throw IoFailure("cannot write run metadata for " + artifact_path);
    os << j.dump(2) << "\n";
}

} // namespace mugl
