#pragma once

#include <span>
#include <vector>

namespace caae {

double mean(std::span<const double> xs);
double variance(std::span<const double> xs);  // unbiased (n-1)

// Regularized incomplete gamma functions (series / continued fraction).
double gamma_p(double a, double x);  // P(a, x)
double gamma_q(double a, double x);  // Q(a, x) = 1 - P(a, x)

// Upper-tail p-value of a chi-square statistic with `dof` degrees of freedom.
double chi_square_pvalue(double chi2, int dof);

// Pearson statistic for observed counts against expected counts.
double chi_square_stat(std::span<const long long> observed, std::span<const double> expected);

}  // namespace caae
