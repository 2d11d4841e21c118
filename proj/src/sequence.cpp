#include "mugl/sequence.hpp"

#include <algorithm>
#include <cmath>

#include "mugl/errors.hpp"

namespace mugl {

void LocalComponent::set(int t, int p, int j, const Rotation6D& r) {
    double* dst = at(t, p, j);
    for (int k = 0; k < 6; ++k) dst[k] = r.v[static_cast<std::size_t>(k)];
}

Rotation6D LocalComponent::get(int t, int p, int j) const {
    const double* src = at(t, p, j);
    Rotation6D r;
    for (int k = 0; k < 6; ++k) r.v[static_cast<std::size_t>(k)] = src[k];
    return r;
}

LengthCode encode_length(int t_s, int T) {
    if (t_s < 1 || t_s > T) throw OutOfRange("t_s must lie in [1, T]");
    LengthCode code;
    code.values.assign(static_cast<std::size_t>(T), 1.0);
    if (t_s > 1) {
        for (int n = 0; n < t_s; ++n)
            code.values[static_cast<std::size_t>(n)] = static_cast<double>(n) / (t_s - 1);
    }
    return code;
}

int decode_length(const LengthCode& code, double theta_s) {
    const int T = code.size();
    if (T == 0) return 1;

    int j = -1;
    for (int i = 0; i < T; ++i) {
        if (code.values[static_cast<std::size_t>(i)] >= theta_s) {
            j = i;
            break;
        }
    }
    if (j < 0) return T;
    if (j == 0) return 1;

    const double lo = code.values[static_cast<std::size_t>(j - 1)];
    const double hi = code.values[static_cast<std::size_t>(j)];
    const double crossing = (hi > lo) ? (j - 1) + (theta_s - lo) / (hi - lo) : static_cast<double>(j);
    const long long t = 1 + std::llround(crossing / theta_s);
    return static_cast<int>(std::clamp<long long>(t, 1, T));
}

std::vector<std::vector<Eigen::Vector3d>> compose_global(const GlobalComponent& g) {
    if (static_cast<int>(g.g1.size()) != g.T)
        throw ShapeMismatch("g1 length disagrees with T");
    for (const auto& d : g.disp)
        if (static_cast<int>(d.size()) != g.T)
            throw ShapeMismatch("displacement length disagrees with T");

    std::vector<std::vector<Eigen::Vector3d>> out(static_cast<std::size_t>(g.P));
    out[0] = g.g1;
    for (int p = 1; p < g.P; ++p) {
        auto& traj = out[static_cast<std::size_t>(p)];
        traj.resize(static_cast<std::size_t>(g.T));
        const auto& d = g.disp[static_cast<std::size_t>(p - 1)];
        for (int t = 0; t < g.T; ++t)
            traj[static_cast<std::size_t>(t)] = g.g1[static_cast<std::size_t>(t)] + d[static_cast<std::size_t>(t)];
    }
    return out;
}

std::pair<LocalComponent, GlobalComponent> split_components(const WorldJoints& raw,
                                                            const Skeleton& skeleton) {
    const int P = static_cast<int>(raw.size());
    if (P < 1) throw ShapeMismatch("need at least one person");
    const int T = static_cast<int>(raw[0].size());
    const int J = skeleton.tree.joint_count;
    for (const auto& person : raw) {
        if (static_cast<int>(person.size()) != T) throw ShapeMismatch("person timestep counts differ");
        for (const auto& frame : person)
            if (static_cast<int>(frame.size()) != J) throw ShapeMismatch("frame joint count differs from skeleton");
    }

    LocalComponent local(T, P, J);
    GlobalComponent global(T, P);
    const int root = skeleton.tree.root_index;

    for (int p = 0; p < P; ++p) {
        for (int t = 0; t < T; ++t) {
            const auto& frame = raw[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)];
            const Eigen::Vector3d root_pos = frame[static_cast<std::size_t>(root)];

            JointPositions centered;
            centered.positions.resize(static_cast<std::size_t>(J));
            for (int j = 0; j < J; ++j)
                centered.positions[static_cast<std::size_t>(j)] = frame[static_cast<std::size_t>(j)] - root_pos;

            const PoseRotations rot = inverse_kinematics(centered, skeleton.rest, skeleton.tree);
            for (int j = 0; j < J; ++j)
                local.set(t, p, j, matrix_to_rot6d(rot.rotations[static_cast<std::size_t>(j)]));

            if (p == 0) {
                global.g1[static_cast<std::size_t>(t)] = root_pos;
            } else {
                global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)] =
                    root_pos - raw[0][static_cast<std::size_t>(t)][static_cast<std::size_t>(root)];
            }
        }
    }
    return {std::move(local), std::move(global)};
}

WorldJoints compose_world(const ActionSequence& seq, const Skeleton& skeleton) {
    const int T = seq.local.T;
    const int P = seq.local.P;
    const int J = seq.local.J;
    if (J != skeleton.tree.joint_count) throw TreeMismatch("sequence joint count differs from skeleton");

    const auto trajectories = compose_global(seq.global);
    WorldJoints out(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
        auto& person = out[static_cast<std::size_t>(p)];
        person.resize(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            PoseRotations rot;
            rot.rotations.resize(static_cast<std::size_t>(J));
            for (int j = 0; j < J; ++j)
                rot.rotations[static_cast<std::size_t>(j)] = rot6d_to_matrix(seq.local.get(t, p, j));
            const JointPositions pos = forward_kinematics(rot, skeleton.rest, skeleton.tree);

            auto& frame = person[static_cast<std::size_t>(t)];
            frame.resize(static_cast<std::size_t>(J));
            const Eigen::Vector3d offset = trajectories[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)];
            for (int j = 0; j < J; ++j)
                frame[static_cast<std::size_t>(j)] = pos.positions[static_cast<std::size_t>(j)] + offset;
        }
    }
    return out;
}

std::vector<double> subsample_signal(const std::vector<double>& data, int T, int C, int factor) {
    if (factor < 1) throw OutOfRange("subsample factor must be >= 1");
    if (static_cast<std::int64_t>(data.size()) != static_cast<std::int64_t>(T) * C)
        throw ShapeMismatch("signal size disagrees with T x C");
    const int out_T = (T + factor - 1) / factor;
    std::vector<double> out(static_cast<std::size_t>(out_T) * C);
    for (int t = 0; t < out_T; ++t)
        for (int c = 0; c < C; ++c)
            out[static_cast<std::size_t>(t) * C + c] =
                data[static_cast<std::size_t>(t) * factor * C + c];
    return out;
}

ActionSequence temporal_subsample(const ActionSequence& seq, int factor) {
    if (factor < 1) throw OutOfRange("subsample factor must be >= 1");
    const int T = seq.local.T;
    const int out_T = (T + factor - 1) / factor;

    ActionSequence out = seq;
    out.local = LocalComponent(out_T, seq.local.P, seq.local.J);
    out.local.rot6d = subsample_signal(seq.local.rot6d, T, seq.local.P * seq.local.J * 6, factor);

    out.global = GlobalComponent(out_T, seq.global.P);
    for (int t = 0; t < out_T; ++t)
        out.global.g1[static_cast<std::size_t>(t)] = seq.global.g1[static_cast<std::size_t>(t) * factor];
    for (int p = 1; p < seq.global.P; ++p)
        for (int t = 0; t < out_T; ++t)
            out.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)] =
                seq.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t) * factor];

    out.length = std::clamp((seq.length + factor - 1) / factor, 1, out_T);
    return out;
}

namespace {

// Keys cubic convolution kernel, a = -0.5.
double cubic_weight(double x) {
    const double t = std::abs(x);
    if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
    if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

// Odd reflection about the boundary samples keeps extrapolated values on the
// local affine trend.
double sample_extended(const double* col, int T, int stride, int idx) {
    if (idx < 0) return 2.0 * col[0] - col[-idx * stride];
    if (idx > T - 1) return 2.0 * col[(T - 1) * stride] - col[(2 * (T - 1) - idx) * stride];
    return col[idx * stride];
}

} // namespace

std::vector<double> temporal_upsample_bicubic(const std::vector<double>& data, int T, int C,
                                              int target_T) {
    if (T < 4) throw TooShort("bicubic resampling needs at least 4 timesteps");
    if (target_T < 1) throw OutOfRange("target length must be >= 1");
    if (static_cast<std::int64_t>(data.size()) != static_cast<std::int64_t>(T) * C)
        throw ShapeMismatch("signal size disagrees with T x C");

    std::vector<double> out(static_cast<std::size_t>(target_T) * C);
    const double scale = target_T > 1 ? static_cast<double>(T - 1) / (target_T - 1) : 0.0;
    for (int i = 0; i < target_T; ++i) {
        const double pos = i * scale;
        const int k0 = static_cast<int>(std::floor(pos));
        const double f = pos - k0;
        double w[4];
        for (int m = -1; m <= 2; ++m) w[m + 1] = cubic_weight(f - m);
        for (int c = 0; c < C; ++c) {
            const double* col = data.data() + c;
            double acc = 0.0;
            for (int m = -1; m <= 2; ++m) acc += w[m + 1] * sample_extended(col, T, C, k0 + m);
            out[static_cast<std::size_t>(i) * C + c] = acc;
        }
    }
    return out;
}

ActionSequence pad_crop(const ActionSequence& seq, int T_target) {
    if (T_target < 1) throw OutOfRange("target length must be >= 1");
    const int T = seq.local.T;
    const int P = seq.local.P;
    const int J = seq.local.J;

    ActionSequence out = seq;
    out.local = LocalComponent(T_target, P, J);
    out.global = GlobalComponent(T_target, seq.global.P);
    for (int t = 0; t < T_target; ++t) {
        const int src = std::min(t, T - 1);
        std::copy_n(seq.local.at(src, 0, 0), static_cast<std::size_t>(P) * J * 6,
                    out.local.at(t, 0, 0));
        out.global.g1[static_cast<std::size_t>(t)] = seq.global.g1[static_cast<std::size_t>(src)];
        for (int p = 1; p < seq.global.P; ++p)
            out.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(t)] =
                seq.global.disp[static_cast<std::size_t>(p - 1)][static_cast<std::size_t>(src)];
    }
    out.length = std::min(seq.length, T_target);
    return out;
}

} // namespace mugl
