#include "mugl/kinematics.hpp"

#include <cmath>

#include "mugl/errors.hpp"

namespace mugl {

KinematicTree::KinematicTree(int joints, std::vector<int> parents)
    : joint_count(joints), parent(std::move(parents)) {
    validate_and_order();
}

void KinematicTree::validate_and_order() {
    if (joint_count <= 0 || static_cast<int>(parent.size()) != joint_count)
        throw TreeMismatch("parent array size must equal joint count");

    int roots = 0;
    for (int j = 0; j < joint_count; ++j) {
        if (parent[j] == -1) {
            roots++;
            root_index = j;
        } else if (parent[j] < 0 || parent[j] >= joint_count) {
            throw TreeMismatch("parent index out of range");
        }
    }
    if (roots != 1) throw TreeMismatch("tree must have exactly one root");

    std::vector<std::vector<int>> children(static_cast<std::size_t>(joint_count));
    for (int j = 0; j < joint_count; ++j)
        if (j != root_index) children[static_cast<std::size_t>(parent[j])].push_back(j);

    topo_.clear();
    topo_.reserve(static_cast<std::size_t>(joint_count));
    std::vector<int> stack{root_index};
    while (!stack.empty()) {
        const int j = stack.back();
        stack.pop_back();
        topo_.push_back(j);
        for (int c : children[static_cast<std::size_t>(j)]) stack.push_back(c);
    }
    if (static_cast<int>(topo_.size()) != joint_count)
        throw TreeMismatch("parent links contain a cycle or unreachable joints");
}

JointPositions forward_kinematics(const PoseRotations& rot, const RestPose& rest,
                                  const KinematicTree& tree) {
    if (rot.joint_count() != tree.joint_count || rest.joint_count() != tree.joint_count)
        throw TreeMismatch("rotation/rest joint counts disagree with tree");

    JointPositions out;
    out.positions.assign(static_cast<std::size_t>(tree.joint_count), Eigen::Vector3d::Zero());
    for (int j : tree.topological_order()) {
        if (j == tree.root_index) continue;
        const int p = tree.parent[static_cast<std::size_t>(j)];
        const Eigen::Vector3d bone =
            rest.positions[static_cast<std::size_t>(j)] - rest.positions[static_cast<std::size_t>(p)];
        out.positions[static_cast<std::size_t>(j)] =
            rot.rotations[static_cast<std::size_t>(j)] * bone + out.positions[static_cast<std::size_t>(p)];
    }
    return out;
}

namespace {

// Shortest-arc rotation taking unit vector `from` onto unit vector `to`.
RotationMatrix shortest_arc(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
    const double c = from.dot(to);
    const Eigen::Vector3d axis = from.cross(to);
    const double s = axis.norm();
    if (s < 1e-12) {
        if (c > 0.0) return RotationMatrix::Identity();
        // Antipodal: rotate pi about any axis orthogonal to `from`.
        Eigen::Vector3d ortho = from.cross(Eigen::Vector3d::UnitX());
        if (ortho.norm() < 1e-6) ortho = from.cross(Eigen::Vector3d::UnitY());
        return axis_angle(ortho, M_PI);
    }
    return axis_angle(axis, std::atan2(s, c));
}

} // namespace

PoseRotations inverse_kinematics(const JointPositions& joints, const RestPose& rest,
                                 const KinematicTree& tree) {
    if (joints.joint_count() != tree.joint_count || rest.joint_count() != tree.joint_count)
        throw TreeMismatch("joint/rest counts disagree with tree");

    PoseRotations out = PoseRotations::identity(tree.joint_count);
    for (int j = 0; j < tree.joint_count; ++j) {
        if (j == tree.root_index) continue;
        const int p = tree.parent[static_cast<std::size_t>(j)];
        const Eigen::Vector3d rest_bone =
            rest.positions[static_cast<std::size_t>(j)] - rest.positions[static_cast<std::size_t>(p)];
        const Eigen::Vector3d obs_bone =
            joints.positions[static_cast<std::size_t>(j)] - joints.positions[static_cast<std::size_t>(p)];
        const double rest_len = rest_bone.norm();
        const double obs_len = obs_bone.norm();
        if (rest_len < 1e-8) throw ZeroBone("rest pose bone has zero length");
        if (obs_len < 1e-8) throw ZeroBone("observed bone has zero length");
        out.rotations[static_cast<std::size_t>(j)] = shortest_arc(rest_bone / rest_len, obs_bone / obs_len);
    }
    return out;
}

std::vector<double> bone_lengths(const JointPositions& joints, const KinematicTree& tree) {
    if (joints.joint_count() != tree.joint_count)
        throw TreeMismatch("joint count disagrees with tree");
    std::vector<double> lengths;
    lengths.reserve(static_cast<std::size_t>(tree.joint_count) - 1);
    for (int j = 0; j < tree.joint_count; ++j) {
        if (j == tree.root_index) continue;
        const int p = tree.parent[static_cast<std::size_t>(j)];
        lengths.push_back((joints.positions[static_cast<std::size_t>(j)] -
                           joints.positions[static_cast<std::size_t>(p)])
                              .norm());
    }
    return lengths;
}

std::vector<double> bone_lengths(const RestPose& rest, const KinematicTree& tree) {
    JointPositions as_joints{rest.positions};
    return bone_lengths(as_joints, tree);
}

bool Skeleton::operator==(const Skeleton& other) const {
    if (!(tree == other.tree)) return false;
    if (rest.joint_count() != other.rest.joint_count()) return false;
    for (int j = 0; j < rest.joint_count(); ++j)
        if ((rest.positions[static_cast<std::size_t>(j)] -
             other.rest.positions[static_cast<std::size_t>(j)])
                .norm() > 1e-9)
            return false;
    return true;
}

namespace {

Skeleton make_humanoid8() {
    // pelvis, spine, neck, head, left hand, right hand, left foot, right foot
    Skeleton s;
    s.tree = KinematicTree(8, {-1, 0, 1, 2, 2, 2, 0, 0});
    s.rest.positions = {
        {0.00, 0.00, 0.00},  // pelvis (root)
        {0.00, 0.25, 0.00},  // spine
        {0.00, 0.50, 0.00},  // neck
        {0.00, 0.65, 0.00},  // head
        {0.35, 0.45, 0.00},  // left hand
        {-0.35, 0.45, 0.00}, // right hand
        {0.12, -0.45, 0.00}, // left foot
        {-0.12, -0.45, 0.00} // right foot
    };
    return s;
}

Skeleton make_humanoid24() {
    // Pelvis-rooted body with 3-segment spine, head, two 4-segment arms and
    // two 4-segment legs plus hand/foot tips.
    Skeleton s;
    std::vector<int> parent = {
        -1, // 0 pelvis
        0,  // 1 spine1
        1,  // 2 spine2
        2,  // 3 spine3
        3,  // 4 neck
        4,  // 5 head
        3,  // 6 l_clavicle
        6,  // 7 l_shoulder
        7,  // 8 l_elbow
        8,  // 9 l_wrist
        9,  // 10 l_hand
        3,  // 11 r_clavicle
        11, // 12 r_shoulder
        12, // 13 r_elbow
        13, // 14 r_wrist
        14, // 15 r_hand
        0,  // 16 l_hip
        16, // 17 l_knee
        17, // 18 l_ankle
        18, // 19 l_toe
        0,  // 20 r_hip
        20, // 21 r_knee
        21, // 22 r_ankle
        22  // 23 r_toe
    };
    s.tree = KinematicTree(24, std::move(parent));
    s.rest.positions = {
        {0.00, 0.00, 0.00},   {0.00, 0.12, 0.00},   {0.00, 0.24, 0.00},   {0.00, 0.36, 0.00},
        {0.00, 0.46, 0.00},   {0.00, 0.56, 0.00},   {0.06, 0.42, 0.00},   {0.18, 0.42, 0.00},
        {0.42, 0.42, 0.00},   {0.64, 0.42, 0.00},   {0.72, 0.42, 0.00},   {-0.06, 0.42, 0.00},
        {-0.18, 0.42, 0.00},  {-0.42, 0.42, 0.00},  {-0.64, 0.42, 0.00},  {-0.72, 0.42, 0.00},
        {0.10, -0.05, 0.00},  {0.10, -0.45, 0.00},  {0.10, -0.85, 0.00},  {0.10, -0.90, 0.12},
        {-0.10, -0.05, 0.00}, {-0.10, -0.45, 0.00}, {-0.10, -0.85, 0.00}, {-0.10, -0.90, 0.12}};
    return s;
}

} // namespace

Skeleton builtin_skeleton(const std::string& name) {
    if (name == "humanoid8") return make_humanoid8();
    if (name == "humanoid24") return make_humanoid24();
    throw ConfigError("unknown skeleton preset '" + name + "'");
}

} // namespace mugl
