#include "mugl/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "mugl/errors.hpp"
#include "mugl/rng.hpp"

namespace mugl {

namespace {

double eval_scalar(const std::function<Var(Tape&)>& build) {
    Tape tape;
    Var loss = build(tape);
    const Tensor& v = loss.val();
    if (v.size() != 1) throw ShapeMismatch("grad_check target must be scalar");
    return v[0];
}

} // namespace

GradCheckReport grad_check(const std::function<Var(Tape&)>& build, ParameterStore& params,
                           double step, int coords_per_tensor, std::uint64_t seed) {
    params.zero_grad();
    {
        Tape tape;
        Var loss = build(tape);
        const Tensor& v = loss.val();
        if (v.size() != 1) throw ShapeMismatch("grad_check target must be scalar");
        if (!std::isfinite(v[0])) throw NonFinite("loss is not finite");
        tape.backward(loss);
    }
    // Snapshot analytic gradients before the perturbation passes overwrite
    // anything.
    std::vector<Tensor> analytic;
    analytic.reserve(params.count());
    for (std::size_t h = 0; h < params.count(); ++h) {
        const Tensor& g = params.grad(static_cast<int>(h));
        if (!g.all_finite()) throw NonFinite("gradient of " + params.name(static_cast<int>(h)));
        analytic.push_back(g);
    }

    GradCheckReport report;
    for (std::size_t h = 0; h < params.count(); ++h) {
        Tensor& value = params.value(static_cast<int>(h));
        const Tensor& grad = analytic[h];
        const std::int64_t n = value.size();
        if (n == 0) continue;

        std::vector<std::int64_t> coords;
        if (coords_per_tensor <= 0 || coords_per_tensor >= n) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            Rng rng(mix_seed(seed, h));
            for (int k = 0; k < coords_per_tensor; ++k)
                coords.push_back(rng.uniform_int(0, n - 1));
        }

        for (std::int64_t idx : coords) {
            const double saved = value[idx];
            value[idx] = saved + step;
            const double up = eval_scalar(build);
            value[idx] = saved - step;
            const double down = eval_scalar(build);
            value[idx] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NonFinite("perturbed loss at " + params.name(static_cast<int>(h)));

            const double numeric = (up - down) / (2.0 * step);
            const double a = grad[idx];
            const double rel = std::abs(a - numeric) /
                               (std::max(std::abs(a), std::abs(numeric)) + 1e-6);
            report.checked_coords++;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params.name(static_cast<int>(h));
                report.worst_index = idx;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

} // namespace mugl
