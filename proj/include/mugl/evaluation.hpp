#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mugl/data.hpp"
#include "mugl/sequence.hpp"

namespace mugl {

/// Composed world joints of one sequence, trimmed to its true length and
/// resampled on a fixed grid: rows are timesteps, columns stack all persons'
/// joint coordinates.
struct SequenceFeatures {
    Eigen::MatrixXd frames; // T_metric x (P*J*3)
};

inline constexpr int kMetricTimesteps = 64;

SequenceFeatures features_for(const ActionSequence& seq, const Skeleton& skeleton,
                              int target_T = kMetricTimesteps);

double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double sigma);

/// Median heuristic: sigma^2 = median pairwise squared distance / 2, with a
/// fallback of 1 when all points coincide. Rows of `samples` are points.
double median_bandwidth(const Eigen::MatrixXd& samples);

/// Biased empirical MMD^2 with the timestep-averaged RBF kernel.
double mmd_a(const std::vector<SequenceFeatures>& gen, const std::vector<SequenceFeatures>& ref,
             double sigma);

/// Biased empirical MMD^2 on flattened whole sequences.
double mmd_s(const std::vector<SequenceFeatures>& gen, const std::vector<SequenceFeatures>& ref,
             double sigma);

struct MetricReport {
    std::vector<std::string> class_names;
    std::vector<double> mmd_a;
    std::vector<double> mmd_s;
    double mean_a = 0.0, std_a = 0.0;
    double mean_s = 0.0, std_s = 0.0;
};

/// Per-class MMD-A / MMD-S of generated against reference samples, bandwidth
/// chosen per class by the median heuristic on the union of both sets.
/// `threads` > 1 evaluates classes concurrently (results are identical).
MetricReport evaluate(const Dataset& gen, const Dataset& ref, int threads = 1);

void write_report_csv(const MetricReport& report, const std::string& path);

} // namespace mugl
