#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "mugl/kinematics.hpp"
#include "mugl/rotations.hpp"

namespace mugl {

/// Per-person, per-joint 6D rotations over T timesteps, row-major (t, p, j, k).
struct LocalComponent {
    int T = 0, P = 0, J = 0;
    std::vector<double> rot6d;

    LocalComponent() = default;
    LocalComponent(int t, int p, int j)
        : T(t), P(p), J(j), rot6d(static_cast<std::size_t>(t) * p * j * 6, 0.0) {}

    std::int64_t offset(int t, int p, int j) const {
        return ((static_cast<std::int64_t>(t) * P + p) * J + j) * 6;
    }
    double* at(int t, int p, int j) { return rot6d.data() + offset(t, p, j); }
    const double* at(int t, int p, int j) const { return rot6d.data() + offset(t, p, j); }

    void set(int t, int p, int j, const Rotation6D& r);
    Rotation6D get(int t, int p, int j) const;
};

/// First person's root trajectory plus relative displacements of the others;
/// person j's trajectory is g1 + disp[j-1].
struct GlobalComponent {
    int T = 0, P = 0;
    std::vector<Eigen::Vector3d> g1;                   // T entries
    std::vector<std::vector<Eigen::Vector3d>> disp;    // P-1 sequences of T entries

    GlobalComponent() = default;
    GlobalComponent(int t, int p)
        : T(t), P(p), g1(static_cast<std::size_t>(t), Eigen::Vector3d::Zero()),
          disp(static_cast<std::size_t>(p > 0 ? p - 1 : 0),
               std::vector<Eigen::Vector3d>(static_cast<std::size_t>(t), Eigen::Vector3d::Zero())) {}
};

/// Class-conditioned multi-person sequence: the unit the model trains on and
/// generates. `length` is the true extent; frames beyond it are padding.
struct ActionSequence {
    int class_label = 0;
    int viewpoint = 0;
    int length = 1;
    int person_count = 1;
    LocalComponent local;
    GlobalComponent global;

    int timesteps() const { return local.T; }
};

/// Normalized non-decreasing ramp whose endpoint position encodes the true
/// sequence length.
struct LengthCode {
    std::vector<double> values;

    int size() const { return static_cast<int>(values.size()); }
};

/// Ramp 0..1 over the first `t_s` entries, then held at 1. t_s = 1 gives the
/// all-ones code. Throws OutOfRange unless 1 <= t_s <= T.
LengthCode encode_length(int t_s, int T);

/// Recover the length from a code: locate the first threshold crossing,
/// linearly interpolate the fractional crossing position between the two
/// bracketing samples, and rescale by 1/theta so that encode_length ramps
/// invert exactly. A code that never crosses decodes to T. Total function;
/// result clamped to [1, T].
int decode_length(const LengthCode& code, double theta_s);

/// Per-person trajectories [P][T]; person 1 is g1 verbatim.
std::vector<std::vector<Eigen::Vector3d>> compose_global(const GlobalComponent& g);

/// World joints indexed [person][time][joint].
using WorldJoints = std::vector<std::vector<std::vector<Eigen::Vector3d>>>;

/// Decouple raw world joints into per-frame root-at-origin rotations (via IK)
/// and root trajectories relative to person 1. Person 1 is the reference.
std::pair<LocalComponent, GlobalComponent> split_components(const WorldJoints& raw,
                                                            const Skeleton& skeleton);

/// FK each frame and offset by the composed global trajectories; inverse of
/// split_components up to IK twist conventions.
WorldJoints compose_world(const ActionSequence& seq, const Skeleton& skeleton);

/// Stride sampling keeping index 0. New length ceil(T/factor); the true
/// length rescales as ceil(t_s/factor), clamped to at least 1.
ActionSequence temporal_subsample(const ActionSequence& seq, int factor);

/// Stride-sample a row-major (T x C) signal along time.
std::vector<double> subsample_signal(const std::vector<double>& data, int T, int C, int factor);

/// Resample a row-major (T x C) signal to target_T steps along time with the
/// cubic convolution kernel (a = -0.5), boundary samples extended by odd
/// reflection so affine ramps are reproduced exactly. Requires T >= 4.
std::vector<double> temporal_upsample_bicubic(const std::vector<double>& data, int T, int C,
                                              int target_T);

/// Pad by repeating the last frame, or crop the tail, to exactly T_target
/// frames. The true length is preserved up to min(t_s, T_target).
ActionSequence pad_crop(const ActionSequence& seq, int T_target);

} // namespace mugl
