#pragma once

namespace oodbench {

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

// Survival function of the chi-square distribution: P(X >= x) with df dof.
double chi2_sf(double x, double df);

}  // namespace oodbench
