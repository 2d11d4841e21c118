#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mugl/kinematics.hpp"
#include "mugl/sequence.hpp"

namespace mugl {

struct ClassMeta {
    std::string name;
    int person_count = 1;
    bool leg_movement = false;
    std::vector<int> setups;
};

struct DatasetManifest {
    int num_classes = 0;
    int num_viewpoints = 1;
    int timesteps = 0; // T
    int persons = 1;   // P
    double frame_rate = 8.25;
    Skeleton skeleton;
    std::vector<ClassMeta> classes;

    int joint_count() const { return skeleton.tree.joint_count; }
};

struct SampleRecord {
    ActionSequence seq;
    int setup = 0;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<SampleRecord> samples;
};

/// Binary archive: "MUGLDATA", u32 version, length-prefixed UTF-8 JSON
/// manifest, then fixed-size records (u32 class/viewpoint/setup/length,
/// float32 local, g1 and displacement payloads, trailing crc32), all
/// little-endian. Loading re-validates every invariant the format promises.
void save_archive(const Dataset& ds, const std::string& path);
Dataset load_archive(const std::string& path);

/// Same schema as the binary archive, as indented JSON for inspection.
void export_json(const Dataset& ds, const std::string& path);
Dataset import_json(const std::string& path);

// --- synthetic corpus -------------------------------------------------------

/// Sinusoidal rotation of one joint about a fixed axis.
struct JointMotionSpec {
    int joint = 0;
    std::array<double, 3> axis{0, 0, 1};
    double amplitude = 0.5; // radians
    double frequency = 1.0; // cycles over T steps
    double phase = 0.0;
};

struct ClassSpec {
    std::string name;
    int person_count = 1;
    bool leg_movement = false;
    std::vector<JointMotionSpec> joints;
    std::array<double, 3> velocity{0, 0, 0};         // root displacement per step
    std::array<double, 3> partner_offset{0, 0, 0};   // person 2 base displacement
    std::array<double, 3> partner_velocity{0, 0, 0}; // person 2 drift per step
    int t_min = 1;
    int t_max = 1;
    double amplitude_jitter = 0.2; // relative
    double phase_jitter = 0.3;     // radians
};

struct SynthSpec {
    std::string skeleton_preset = "humanoid8";
    int timesteps = 16;
    int persons = 2;
    int num_viewpoints = 2;
    int num_setups = 2;
    int samples_per_class = 40;
    double view_yaw_step = 0.35; // radians per viewpoint index
    double frame_rate = 8.25;
    std::vector<ClassSpec> classes;
};

SynthSpec load_synth_spec(const std::string& path);
void save_synth_spec(const SynthSpec& spec, const std::string& path);

/// The built-in 4-class desk corpus recipe (wave / squat / walk / approach).
SynthSpec desk_default_spec();

/// Deterministic procedural dataset: per-sample seeds are derived from the
/// root seed, so generation order does not matter. Throws BadSpec on an
/// inconsistent recipe.
Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed);

/// Partition by setup id: samples whose setup is listed go to train, the rest
/// to eval. Throws UnknownSetup if a listed setup does not exist.
std::pair<Dataset, Dataset> split_cross_setup(const Dataset& ds,
                                              const std::vector<int>& train_setups);

} // namespace mugl
