#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "pktimg/error.hpp"

namespace pktimg {

inline double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truth) {
  if (preds.size() != truth.size()) throw ContractError("accuracy: length mismatch");
  if (preds.empty()) throw ContractError("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

enum class UTestMethod : std::uint8_t { kExact, kNormalApprox };

inline constexpr std::string_view to_string(UTestMethod m) {
  return m == UTestMethod::kExact ? "exact" : "normal_approx";
}

struct UTestResult {
  double u_statistic = 0.0;  // min(U1, n1*n2 - U1)
  double p_two_sided = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  UTestMethod method = UTestMethod::kExact;
};

inline constexpr std::size_t kExactMaxSampleSize = 12;

// Midranks (1-based) of the pooled sample, plus sum over tie groups of t^3 - t.
struct Ranking {
  std::vector<double> ranks;
  double tie_term = 0.0;
};

inline Ranking midranks(std::span<const double> pooled) {
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  Ranking r{std::vector<double>(pooled.size()), 0.0};
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && pooled[order[j]] == pooled[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) r.ranks[order[k]] = rank;
    const double t = static_cast<double>(j - i);
    r.tie_term += t * t * t - t;
    i = j;
  }
  return r;
}

// Null distribution of U for tie-free samples: counts[u] is the number of
// the C(n1+n2, n1) rank assignments giving U = u. Built with the recurrence
// f(m, n, u) = f(m-1, n, u-n) + f(m, n-1, u).
inline std::vector<double> u_null_counts(std::size_t n1, std::size_t n2) {
  const std::size_t umax = n1 * n2;
  // table[m][n] is a distribution over 0..m*n; build row by row in m.
  std::vector<std::vector<std::vector<double>>> f(
      n1 + 1, std::vector<std::vector<double>>(n2 + 1));
  for (std::size_t m = 0; m <= n1; ++m) {
    for (std::size_t n = 0; n <= n2; ++n) {
      std::vector<double>& cur = f[m][n];
      cur.assign(m * n + 1, 0.0);
      if (m == 0 || n == 0) {
        cur[0] = 1.0;
        continue;
      }
      const std::vector<double>& drop_a = f[m - 1][n];  // largest value from a
      const std::vector<double>& drop_b = f[m][n - 1];  // largest value from b
      for (std::size_t u = 0; u < drop_a.size(); ++u) cur[u + n] += drop_a[u];
      for (std::size_t u = 0; u < drop_b.size(); ++u) cur[u] += drop_b[u];
    }
  }
  std::vector<double> out = std::move(f[n1][n2]);
  out.resize(umax + 1);
  return out;
}

inline double exact_p_two_sided(double u_min, std::size_t n1, std::size_t n2) {
  const std::vector<double> counts = u_null_counts(n1, n2);
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  double tail = 0.0;
  for (std::size_t u = 0; u < counts.size() && static_cast<double>(u) <= u_min + 1e-9; ++u) {
    tail += counts[u];
  }
  return std::clamp(2.0 * tail / total, 0.0, 1.0);
}

// Two-sided Mann-Whitney U test. Exact null distribution for tie-free
// samples with max(n1, n2) <= 12; otherwise the normal approximation with
// tie-corrected variance and a 0.5 continuity correction.
inline UTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("mann_whitney_u: empty sample");
  const std::size_t n1 = a.size(), n2 = b.size();
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const Ranking r = midranks(pooled);
  const double r1 = std::accumulate(r.ranks.begin(), r.ranks.begin() + n1, 0.0);
  const double n1d = static_cast<double>(n1), n2d = static_cast<double>(n2);
  const double prod = n1d * n2d;
  const double u1 = prod + n1d * (n1d + 1.0) / 2.0 - r1;
  const double u = std::min(u1, prod - u1);

  UTestResult res{u, 1.0, n1, n2, UTestMethod::kExact};
  if (std::max(n1, n2) <= kExactMaxSampleSize && r.tie_term == 0.0) {
    res.p_two_sided = exact_p_two_sided(u, n1, n2);
    return res;
  }
  res.method = UTestMethod::kNormalApprox;
  const double n = n1d + n2d;
  const double var = prod / 12.0 * ((n + 1.0) - r.tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return res;  // every value tied: no evidence either way
  const double z = std::max(std::abs(u - prod / 2.0) - 0.5, 0.0) / std::sqrt(var);
  res.p_two_sided = std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
  return res;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace pktimg
