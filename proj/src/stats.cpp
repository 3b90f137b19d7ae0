#include "flowvar/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "flowvar/errors.hpp"

namespace flowvar {

double sample_mean(std::span<const double> xs) {
  if (xs.empty()) {
    throw DomainError("sample_mean: empty input");
  }
  double acc = 0.0;
  for (const double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) {
    throw DomainError("sample_variance: need at least 2 samples");
  }
  const double mean = sample_mean(xs);
  double acc = 0.0;
  for (const double x : xs) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(xs.size() - 1);
}

double quantile(std::span<const double> xs, double q) {
  if (xs.empty()) {
    throw DomainError("quantile: empty input");
  }
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

std::pair<double, double> bootstrap_ci(std::span<const double> samples,
                                       double level, int resamples, Rng& rng) {
  if (samples.size() < 2) {
    throw DomainError("bootstrap_ci: need at least 2 samples");
  }
  const std::size_t n = samples.size();
  std::vector<double> stats(static_cast<std::size_t>(resamples));
  std::vector<double> draw(n);
  for (int r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      draw[i] = samples[static_cast<std::size_t>(rng.uniform_below(n))];
    }
    stats[static_cast<std::size_t>(r)] = sample_variance(draw);
  }
  const double alpha = (1.0 - level) / 2.0;
  return {quantile(stats, alpha), quantile(stats, 1.0 - alpha)};
}

namespace {

std::vector<double> ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> out(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = avg;
    i = j + 1;
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = sample_mean(a);
  const double mb = sample_mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Regularized incomplete beta by Lentz's continued fraction.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h;
}

double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw DomainError("spearman_rho: inputs must match and have >= 2 points");
  }
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  return pearson(ra, rb);
}

double student_t_cdf(double t, double dof) {
  if (dof <= 0.0) {
    throw DomainError("student_t_cdf: dof must be positive");
  }
  const double x = dof / (dof + t * t);
  const double p = 0.5 * ibeta(dof / 2.0, 0.5, x);
  return t >= 0.0 ? 1.0 - p : p;
}

double paired_t_p_greater(std::span<const double> a,
                          std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw DomainError("paired_t_p_greater: need matched samples, n >= 2");
  }
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  const double mean = sample_mean(diff);
  const double var = sample_variance(diff);
  if (var == 0.0) {
    return mean > 0.0 ? 0.0 : 1.0;
  }
  const double t = mean / std::sqrt(var / static_cast<double>(n));
  return 1.0 - student_t_cdf(t, static_cast<double>(n - 1));
}

}  // namespace flowvar
