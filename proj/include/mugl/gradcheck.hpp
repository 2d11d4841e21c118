#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mugl/params.hpp"
#include "mugl/tape.hpp"

namespace mugl {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::int64_t checked_coords = 0;
};

/// Compares the reverse-mode gradient of a scalar-valued build (a function
/// that assembles the loss on a fresh tape, reading its parameters from
/// `params`) against central finite differences.
///
/// coords_per_tensor <= 0 checks every coordinate; otherwise that many
/// coordinates per tensor are chosen deterministically from `seed`. The
/// relative error uses an absolute cushion of 1e-6 so near-zero gradient
/// pairs do not dominate the report. Throws NonFinite when the loss or a
/// gradient is NaN/Inf.
GradCheckReport grad_check(const std::function<Var(Tape&)>& build, ParameterStore& params,
                           double step, int coords_per_tensor, std::uint64_t seed);

} // namespace mugl
