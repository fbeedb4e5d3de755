#pragma once

#include <cstddef>

namespace redstore {

// Inverse standard-normal CDF (Acklam's rational approximation, |error| < 1.2e-9).
double normal_quantile(double p);

struct Interval {
  double low = 0.0;
  double high = 0.0;
  double halfwidth() const { return (high - low) / 2.0; }
};

// Wilson score interval for a binomial proportion. Boundary cases are exact:
// zero successes pin low to 0, all successes pin high to 1.
Interval wilson_interval(std::size_t successes, std::size_t n, double confidence);

// One-sided sign-test p-value: P[Binomial(n, 1/2) >= k].
double sign_test_pvalue(std::size_t k, std::size_t n);

}  // namespace redstore
