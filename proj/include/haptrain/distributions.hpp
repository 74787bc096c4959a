#pragma once

namespace haptrain {

// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1].
double incomplete_beta(double a, double b, double x);

// Student t with `df` degrees of freedom.
double t_cdf(double t, double df);
double t_two_sided_p(double t, double df);

// Fisher F(d1, d2).
double f_cdf(double f, double d1, double d2);
double f_upper_p(double f, double d1, double d2);

}  // namespace haptrain
