#pragma once

#include <string>

#include "mugl/model.hpp"
#include "mugl/training.hpp"

namespace mugl {

inline constexpr const char* kMuglVersion = "0.1.0";

/// Merged run configuration: model architecture, loss weights and the
/// training schedule, loaded from one JSON file. Unknown keys are rejected
/// so typos cannot silently fall back to defaults.
struct RunConfig {
    ModelConfig model;
    LossWeights loss;
    TrainConfig train;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_json_text(const std::string& text);
    std::string to_json_text() const;

    /// Writes the effective (fully defaulted) configuration next to an
    /// artifact for reproducibility.
    void echo(const std::string& path) const;

    /// Built-in desk-scale configuration matching the default synthetic
    /// corpus.
    static RunConfig desk_default();
};

/// Run metadata written beside every CLI artifact.
void write_run_metadata(const std::string& artifact_path, const std::string& command,
                        std::uint64_t seed, const RunConfig* config);

} // namespace mugl
