#include "redstore/stats.hpp"

#include <cmath>

#include "redstore/errors.hpp"

namespace redstore {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425, p_high = 1.0 - p_low;
  double q, r;
  if (p < p_low) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= p_high) {
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  q = std::sqrt(-2.0 * std::log(1.0 - p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

Interval wilson_interval(std::size_t successes, std::size_t n, double confidence) {
  if (n < 1) throw DomainError("wilson_interval: n must be at least 1");
  if (successes > n) throw DomainError("wilson_interval: successes exceed n");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw DomainError("wilson_interval: confidence must lie in (0,1)");
  const double z = normal_quantile((1.0 + confidence) / 2.0);
  const double nn = static_cast<double>(n);
  const double phat = static_cast<double>(successes) / nn;
  const double z2n = z * z / nn;
  const double denom = 1.0 + z2n;
  const double center = (phat + z2n / 2.0) / denom;
  const double hw =
      (z / denom) * std::sqrt(phat * (1.0 - phat) / nn + z * z / (4.0 * nn * nn));
  Interval out;
  out.low = successes == 0 ? 0.0 : center - hw;
  out.high = successes == n ? 1.0 : center + hw;
  return out;
}

double sign_test_pvalue(std::size_t k, std::size_t n) {
  if (k > n) throw DomainError("sign_test_pvalue: k exceeds n");
  // sum of C(n,i)/2^n for i in [k, n], in log space for stability
  double p = 0.0;
  for (std::size_t i = k; i <= n; ++i) {
    const double logterm = std::lgamma(static_cast<double>(n) + 1.0) -
                           std::lgamma(static_cast<double>(i) + 1.0) -
                           std::lgamma(static_cast<double>(n - i) + 1.0) -
                           static_cast<double>(n) * std::log(2.0);
    p += std::exp(logterm);
  }
  return p > 1.0 ? 1.0 : p;
}

}  // namespace redstore
