#pragma once

#include "amgan/motion.hpp"

#include <span>

namespace amgan {

// Residual of ordinary least squares of p on the six motion columns, solved
// through the normal equations with an explicit inverse. Independent of the
// eigen-route in build_basis; used as its check. Columns whose Schur pivot
// falls below 1e-12 of the largest Gram diagonal are dropped (rank guard), so a
// zero matrix returns p unchanged.
Samples oracle_least_squares(std::span<const double> p, const MotionMatrix& motion);

}  // namespace amgan
