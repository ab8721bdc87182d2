#pragma once

#include <cstddef>
#include <vector>

namespace gmarl {

double mean(const std::vector<double>& values);
double variance(const std::vector<double>& values);  // unbiased, n >= 2
double root_mean_square(const std::vector<double>& values);

// Regularized upper incomplete gamma Q(a, x), a > 0, x >= 0.
double regularized_gamma_q(double a, double x);

// Upper-tail p-value of a chi-square statistic with `dof` degrees of freedom.
double chi_square_p_value(double statistic, int dof);

// One-sided exact sign test: P[Binomial(trials, 1/2) >= wins]. Ties must be
// removed by the caller before counting trials.
double sign_test_p_value(int wins, int trials);

// Slope of the least-squares line through (0, y0), (1, y1), ...
double least_squares_slope(const std::vector<double>& y);

// Trailing moving average with the given window (first window-1 entries use
// the shorter prefix).
std::vector<double> moving_average(const std::vector<double>& y, int window);

}  // namespace gmarl
