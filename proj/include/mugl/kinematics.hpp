#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mugl/rotations.hpp"

namespace mugl {

/// Rooted joint hierarchy. parent[root] == -1; parents need not precede
/// children in index order, so traversal uses the precomputed topological
/// order.
struct KinematicTree {
    int joint_count = 0;
    std::vector<int> parent;
    int root_index = 0;

    KinematicTree() = default;
    KinematicTree(int joints, std::vector<int> parents);

    /// Joint indices ordered root-first, every parent before its children.
    const std::vector<int>& topological_order() const { return topo_; }

    bool operator==(const KinematicTree& other) const {
        return joint_count == other.joint_count && parent == other.parent;
    }

private:
    std::vector<int> topo_;
    void validate_and_order();
};

/// Rest joint positions, meters. Bones are child minus parent offsets.
struct RestPose {
    std::vector<Eigen::Vector3d> positions;

    int joint_count() const { return static_cast<int>(positions.size()); }
};

/// One world-frame rotation per joint.
struct PoseRotations {
    std::vector<RotationMatrix> rotations;

    static PoseRotations identity(int joints) {
        PoseRotations p;
        p.rotations.assign(static_cast<std::size_t>(joints), RotationMatrix::Identity());
        return p;
    }
    int joint_count() const { return static_cast<int>(rotations.size()); }
};

struct JointPositions {
    std::vector<Eigen::Vector3d> positions;

    int joint_count() const { return static_cast<int>(positions.size()); }
};

/// Root at the origin; each non-root joint is its own rotation applied to its
/// rest bone offset, added to the parent position. Throws TreeMismatch when
/// joint counts disagree.
JointPositions forward_kinematics(const PoseRotations& rot, const RestPose& rest,
                                  const KinematicTree& tree);

/// Inverse of forward_kinematics: the root gets the identity, every other
/// joint the shortest-arc rotation taking its rest bone direction to the
/// observed one (zero twist). Throws ZeroBone on observed bones shorter than
/// 1e-8.
PoseRotations inverse_kinematics(const JointPositions& joints, const RestPose& rest,
                                 const KinematicTree& tree);

/// One length per non-root joint, ordered by joint index.
std::vector<double> bone_lengths(const JointPositions& joints, const KinematicTree& tree);

std::vector<double> bone_lengths(const RestPose& rest, const KinematicTree& tree);

/// Skeleton bundled as tree + rest pose, as stored in dataset archives.
struct Skeleton {
    KinematicTree tree;
    RestPose rest;

    bool operator==(const Skeleton& other) const;
};

/// Built-in skeletons for synthetic data: an 8-joint stick humanoid and a
/// 24-joint humanoid matching the full-scale configuration.
Skeleton builtin_skeleton(const std::string& name);

} // namespace mugl
