#include "mugl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "mugl/errors.hpp"

namespace mugl {

SequenceFeatures features_for(const ActionSequence& seq, const Skeleton& skeleton, int target_T) {
    const WorldJoints world = compose_world(seq, skeleton);
    const int P = static_cast<int>(world.size());
    const int J = skeleton.tree.joint_count;
    const int D = P * J * 3;

    // Trim to the true extent; very short sequences are held out to the
    // 4-frame minimum the cubic kernel needs.
    const int t_s = std::clamp(seq.length, 1, seq.timesteps());
    const int src_T = std::max(t_s, 4);
    std::vector<double> flat(static_cast<std::size_t>(src_T) * D);
    for (int t = 0; t < src_T; ++t) {
        const int te = std::min(t, t_s - 1);
        double* row = flat.data() + static_cast<std::int64_t>(t) * D;
        for (int p = 0; p < P; ++p)
            for (int j = 0; j < J; ++j)
                for (int c = 0; c < 3; ++c)
                    row[(p * J + j) * 3 + c] =
                        world[static_cast<std::size_t>(p)][static_cast<std::size_t>(te)][static_cast<std::size_t>(j)][c];
    }
    const std::vector<double> resampled = temporal_upsample_bicubic(flat, src_T, D, target_T);

    SequenceFeatures f;
    f.frames.resize(target_T, D);
    for (int t = 0; t < target_T; ++t)
        for (int d = 0; d < D; ++d) f.frames(t, d) = resampled[static_cast<std::size_t>(t) * D + d];
    return f;
}

double rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double sigma) {
    if (x.size() != y.size()) throw ShapeMismatch("rbf_kernel vector sizes disagree");
    if (sigma <= 0.0) throw OutOfRange("rbf bandwidth must be positive");
    return std::exp(-(x - y).squaredNorm() / (2.0 * sigma * sigma));
}

double median_bandwidth(const Eigen::MatrixXd& samples) {
    const std::int64_t n = samples.rows();
    if (n < 2) throw TooFewSamples("median bandwidth needs at least two samples");
    std::vector<double> d2;
    d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j)
            d2.push_back((samples.row(i) - samples.row(j)).squaredNorm());
    const std::size_t mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
    double median = d2[mid];
    if (d2.size() % 2 == 0) {
        const double lower = *std::max_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid));
        median = 0.5 * (median + lower);
    }
    if (median <= 0.0) return 1.0;
    return std::sqrt(median / 2.0);
}

namespace {

// Mean-over-timesteps RBF between two sequences.
double kernel_avg(const SequenceFeatures& a, const SequenceFeatures& b, double sigma) {
    const auto T = a.frames.rows();
    double acc = 0.0;
    const double inv = -1.0 / (2.0 * sigma * sigma);
    for (Eigen::Index t = 0; t < T; ++t)
        acc += std::exp(inv * (a.frames.row(t) - b.frames.row(t)).squaredNorm());
    return acc / static_cast<double>(T);
}

double kernel_flat(const SequenceFeatures& a, const SequenceFeatures& b, double sigma) {
    double d2 = 0.0;
    for (Eigen::Index t = 0; t < a.frames.rows(); ++t)
        d2 += (a.frames.row(t) - b.frames.row(t)).squaredNorm();
    return std::exp(-d2 / (2.0 * sigma * sigma));
}

template <typename Kernel>
double biased_mmd2(const std::vector<SequenceFeatures>& gen,
                   const std::vector<SequenceFeatures>& ref, double sigma, Kernel kfn) {
    if (gen.empty() || ref.empty()) throw EmptySet("mmd needs non-empty sets");
    if (sigma <= 0.0) throw OutOfRange("mmd bandwidth must be positive");
    const std::size_t m = gen.size(), n = ref.size();

    double kgg = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        kgg += 1.0; // k(x,x) = 1 on the diagonal
        for (std::size_t j = i + 1; j < m; ++j) kgg += 2.0 * kfn(gen[i], gen[j], sigma);
    }
    double kee = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        kee += 1.0;
        for (std::size_t j = i + 1; j < n; ++j) kee += 2.0 * kfn(ref[i], ref[j], sigma);
    }
    double kge = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) kge += kfn(gen[i], ref[j], sigma);

    return kgg / static_cast<double>(m * m) + kee / static_cast<double>(n * n) -
           2.0 * kge / static_cast<double>(m * n);
}

} // namespace

double mmd_a(const std::vector<SequenceFeatures>& gen, const std::vector<SequenceFeatures>& ref,
             double sigma) {
    return biased_mmd2(gen, ref, sigma, kernel_avg);
}

double mmd_s(const std::vector<SequenceFeatures>& gen, const std::vector<SequenceFeatures>& ref,
             double sigma) {
    return biased_mmd2(gen, ref, sigma, kernel_flat);
}

namespace {

// Deterministic cap on bandwidth sample counts; stride-subsamples rows.
Eigen::MatrixXd cap_rows(const Eigen::MatrixXd& rows, std::int64_t cap) {
    if (rows.rows() <= cap) return rows;
    const std::int64_t stride = (rows.rows() + cap - 1) / cap;
    const std::int64_t kept = (rows.rows() + stride - 1) / stride;
    Eigen::MatrixXd out(kept, rows.cols());
    std::int64_t r = 0;
    for (std::int64_t i = 0; i < rows.rows(); i += stride) out.row(r++) = rows.row(i);
    return out;
}

struct ClassDuty {
    std::vector<SequenceFeatures> gen, ref;
};

void evaluate_class(const ClassDuty& duty, double& out_a, double& out_s) {
    const auto D = duty.gen[0].frames.cols();
    const auto T = duty.gen[0].frames.rows();
    const std::size_t total = duty.gen.size() + duty.ref.size();

    // Bandwidth for the per-timestep kernel: pooled timestep poses.
    Eigen::MatrixXd step_points(static_cast<std::int64_t>(total) * T, D);
    std::int64_t r = 0;
    for (const auto* set : {&duty.gen, &duty.ref})
        for (const auto& f : *set)
            for (Eigen::Index t = 0; t < T; ++t) step_points.row(r++) = f.frames.row(t);
    const double sigma_a = median_bandwidth(cap_rows(step_points, 1024));

    // Bandwidth for the whole-sequence kernel: flattened sequences.
    Eigen::MatrixXd flat_points(static_cast<std::int64_t>(total), T * D);
    r = 0;
    for (const auto* set : {&duty.gen, &duty.ref})
        for (const auto& f : *set) {
            for (Eigen::Index t = 0; t < T; ++t)
                flat_points.block(r, t * D, 1, D) = f.frames.row(t);
            r++;
        }
    const double sigma_s = median_bandwidth(cap_rows(flat_points, 1024));

    out_a = mmd_a(duty.gen, duty.ref, sigma_a);
    out_s = mmd_s(duty.gen, duty.ref, sigma_s);
}

} // namespace

MetricReport evaluate(const Dataset& gen, const Dataset& ref, int threads) {
    if (!(gen.manifest.skeleton == ref.manifest.skeleton))
        throw SkeletonMismatch("archives use different skeletons");
    if (gen.manifest.num_classes != ref.manifest.num_classes)
        throw ClassMismatch("archives declare different class counts");
    for (int c = 0; c < gen.manifest.num_classes; ++c)
        if (gen.manifest.classes[static_cast<std::size_t>(c)].name !=
            ref.manifest.classes[static_cast<std::size_t>(c)].name)
            throw ClassMismatch("class name mismatch at index " + std::to_string(c));

    const int K = gen.manifest.num_classes;
    std::vector<ClassDuty> duties(static_cast<std::size_t>(K));
    for (const auto& rec : gen.samples)
        duties[static_cast<std::size_t>(rec.seq.class_label)].gen.push_back(
            features_for(rec.seq, gen.manifest.skeleton));
    for (const auto& rec : ref.samples)
        duties[static_cast<std::size_t>(rec.seq.class_label)].ref.push_back(
            features_for(rec.seq, ref.manifest.skeleton));
    for (int c = 0; c < K; ++c)
        if (duties[static_cast<std::size_t>(c)].gen.empty() ||
            duties[static_cast<std::size_t>(c)].ref.empty())
            throw EmptySet("class " + std::to_string(c) + " missing from one archive");

    MetricReport report;
    report.mmd_a.assign(static_cast<std::size_t>(K), 0.0);
    report.mmd_s.assign(static_cast<std::size_t>(K), 0.0);
    for (const auto& meta : gen.manifest.classes) report.class_names.push_back(meta.name);

    if (threads <= 1 || K == 1) {
        for (int c = 0; c < K; ++c)
            evaluate_class(duties[static_cast<std::size_t>(c)], report.mmd_a[static_cast<std::size_t>(c)],
                           report.mmd_s[static_cast<std::size_t>(c)]);
    } else {
        // Each class writes disjoint slots, so the result is independent of
        // the thread count.
        std::vector<std::thread> pool;
        std::size_t next = 0;
        const int workers = std::min(threads, K);
        std::vector<int> assignments(static_cast<std::size_t>(K));
        for (int c = 0; c < K; ++c) assignments[static_cast<std::size_t>(c)] = c % workers;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w]() {
                for (int c = 0; c < K; ++c)
                    if (assignments[static_cast<std::size_t>(c)] == w)
                        evaluate_class(duties[static_cast<std::size_t>(c)],
                                       report.mmd_a[static_cast<std::size_t>(c)],
                                       report.mmd_s[static_cast<std::size_t>(c)]);
            });
        }
        for (auto& th : pool) th.join();
        (void)next;
    }

    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        sd = 0.0;
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / static_cast<double>(v.size()));
    };
    mean_std(report.mmd_a, report.mean_a, report.std_a);
    mean_std(report.mmd_s, report.mean_s, report.std_s);
    return report;
}

void write_report_csv(const MetricReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoFailure("cannot write metric report: " + path);
    os << "class,mmd_a,mmd_s\n";
    char line[256];
    for (std::size_t c = 0; c < report.class_names.size(); ++c) {
        std::snprintf(line, sizeof(line), "%s,%.12g,%.12g\n", report.class_names[c].c_str(),
                      report.mmd_a[c], report.mmd_s[c]);
        os << line;
    }
    std::snprintf(line, sizeof(line), "mean,%.12g,%.12g\nstd,%.12g,%.12g\n", report.mean_a,
                  report.mean_s, report.std_a, report.std_s);
    os << line;
    if (!os) throw IoFailure("metric report write failed: " + path);
}

} // namespace mugl
