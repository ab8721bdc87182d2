#include "gmarl/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gmarl {

double mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean: empty input");
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

double variance(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("variance: need n >= 2");
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return acc / static_cast<double>(values.size() - 1);
}

double root_mean_square(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("rms: empty input");
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc / static_cast<double>(values.size()));
}

namespace {

// Lower incomplete gamma by series expansion; valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper incomplete gamma by Lentz continued fraction; valid for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_continued_fraction(a, x);
}

double chi_square_p_value(double statistic, int dof) {
  if (dof < 1) throw std::invalid_argument("chi_square_p_value: dof < 1");
  if (statistic <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * dof, 0.5 * statistic);
}

double sign_test_p_value(int wins, int trials) {
  if (trials < 1 || wins < 0 || wins > trials)
    throw std::invalid_argument("sign_test_p_value: bad counts");
  const double log_half = std::log(0.5);
  double p = 0.0;
  for (int k = wins; k <= trials; ++k) {
    const double log_binom = std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) -
                             std::lgamma(trials - k + 1.0);
    p += std::exp(log_binom + trials * log_half);
  }
  return p < 1.0 ? p : 1.0;
}

double least_squares_slope(const std::vector<double>& y) {
  const std::size_t n = y.size();
  if (n < 2) throw std::invalid_argument("least_squares_slope: need n >= 2");
  const double mean_x = 0.5 * static_cast<double>(n - 1);
  const double mean_y = mean(y);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - mean_x;
    sxy += dx * (y[i] - mean_y);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::vector<double> moving_average(const std::vector<double>& y, int window) {
  if (window < 1) throw std::invalid_argument("moving_average: window < 1");
  std::vector<double> out(y.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    acc += y[i];
    if (i >= static_cast<std::size_t>(window)) acc -= y[i - window];
    const std::size_t len = std::min<std::size_t>(i + 1, window);
    out[i] = acc / static_cast<double>(len);
  }
  return out;
}

}  // namespace gmarl
