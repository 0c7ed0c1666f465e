#pragma once

// Generated-input property suites shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ppe/evaluation.hpp"
#include "ppe/losses.hpp"
#include "ppe/predictor.hpp"

namespace properties {

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;

  bool ok() const { return cases > 0 && failures == 0; }
  void fail(std::size_t i, const std::string& what) {
    if (failures++ == 0) first_failure = "case " + std::to_string(i) + ": " + what;
  }
};

inline bool close(double a, double b, double rel = 1e-12) {
  return std::fabs(a - b) <= rel * std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("attribute " + std::to_string(100 + i));
  return out;
}

/// Doubling every entanglement delta doubles the indicator; doubling the command delta halves it.
inline SuiteResult indicator_scale_covariance(std::size_t cases, std::uint64_t seed) {
  SuiteResult r{"indicator scale covariance", cases};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t n = 1 + rng() % 12;
    const auto de = random_values(rng, n, -0.5, 0.5);
    const double dc = random_values(rng, 1, 0.01, 1.0)[0];
    const double k = random_values(rng, 1, 0.1, 10.0)[0];
    std::vector<double> scaled = de;
    for (auto& x : scaled) x *= k;
    const double base = ppe::indicator(dc, de).value;
    if (!close(ppe::indicator(dc, scaled).value, k * base, 1e-12)) r.fail(i, "entanglement scaling");
    if (!close(ppe::indicator(k * dc, de).value, base / k, 1e-12)) r.fail(i, "command scaling");
    if (!close(ppe::indicator(dc, de).value * 2.0, ppe::indicator(dc / 2.0, de).value, 1e-12)) r.fail(i, "halving");
  }
  return r;
}

inline SuiteResult indicator_permutation_invariance(std::size_t cases, std::uint64_t seed) {
  SuiteResult r{"indicator permutation invariance", cases};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t n = 1 + rng() % 12;
    auto de = random_values(rng, n, -0.5, 0.5);
    const double dc = random_values(rng, 1, 0.01, 1.0)[0];
    const double base = ppe::indicator(dc, de).value;
    std::shuffle(de.begin(), de.end(), rng);
    if (!close(ppe::indicator(dc, de).value, base, 1e-12)) r.fail(i, "permuted list changed the indicator");
  }
  return r;
}

/// Scaling every distance sum by a positive constant leaves ranks and final scores unchanged.
inline SuiteResult rank_scale_invariance(std::size_t cases, std::uint64_t seed) {
  SuiteResult r{"rank scale invariance", cases};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t n = 1 + rng() % 15;
    const auto texts = names(n);
    const auto sc = random_values(rng, n, 0.0, 100.0);
    const auto sf = random_values(rng, n, 0.0, 1000.0);
    // Powers of two keep the scaled sums exact, so ties are preserved bit for bit.
    const double k = std::ldexp(1.0, static_cast<int>(rng() % 21) - 10);
    std::vector<double> sc2 = sc, sf2 = sf;
    for (auto& x : sc2) x *= k;
    for (auto& x : sf2) x *= k;
    const std::size_t cap = 1 + rng() % 20;
    const auto a = ppe::score_from_sums(texts, sc, sf, cap);
    const auto b = ppe::score_from_sums(texts, sc2, sf2, cap);
    for (std::size_t t = 0; t < n; ++t) {
      if (a.rows[t].r_comd != b.rows[t].r_comd || a.rows[t].r_full != b.rows[t].r_full ||
          a.rows[t].score_final != b.rows[t].score_final) {
        r.fail(i, "ranks moved under scaling of " + texts[t]);
        break;
      }
    }
  }
  return r;
}

/// Raising the rank cap never raises a final score, and never changes r_comd or r_full.
inline SuiteResult rank_cap_monotonicity(std::size_t cases, std::uint64_t seed) {
  SuiteResult r{"rank cap monotonicity", cases};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t n = 1 + rng() % 15;
    const auto texts = names(n);
    const auto sc = random_values(rng, n, 0.0, 10.0);
    const auto sf = random_values(rng, n, 0.0, 10.0);
    const std::size_t r1 = 1 + rng() % 20;
    const std::size_t r2 = r1 + rng() % 20;
    const auto a = ppe::score_from_sums(texts, sc, sf, r1);
    const auto b = ppe::score_from_sums(texts, sc, sf, r2);
    for (std::size_t t = 0; t < n; ++t) {
      if (b.rows[t].score_final > a.rows[t].score_final || a.rows[t].r_comd != b.rows[t].r_comd) {
        r.fail(i, "score rose with a larger rank cap for " + texts[t]);
        break;
      }
    }
    // Ranks form a permutation of 1..n.
    std::vector<std::size_t> seen;
    for (const auto& row : a.rows) seen.push_back(row.r_full);
    std::sort(seen.begin(), seen.end());
    for (std::size_t t = 0; t < n; ++t) {
      if (seen[t] != t + 1) {
        r.fail(i, "ranks are not a permutation");
        break;
      }
    }
  }
  return r;
}

inline SuiteResult entanglement_loss_symmetry(std::size_t cases, std::uint64_t seed) {
  SuiteResult r{"entanglement loss symmetry and nonnegativity", cases};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t n = 1 + rng() % 12;
    const auto before = random_values(rng, n, 0.0, 2.0);
    auto after = random_values(rng, n, 0.0, 2.0);
    const double ab = ppe::entanglement_loss(before, after);
    const double ba = ppe::entanglement_loss(after, before);
    if (ab != ba) r.fail(i, "not symmetric");
    if (!(ab >= 0.0)) r.fail(i, "negative");
    if (ppe::entanglement_loss(before, before) != 0.0) r.fail(i, "unchanged distances give a nonzero loss");
    // Zero only when every distance is unchanged.
    after = before;
    after[rng() % n] += 1e-3;
    if (!(ppe::entanglement_loss(before, after) > 0.0)) r.fail(i, "changed distance gives zero loss");
  }
  return r;
}

/// Both distances inside [min, max] bound the normalized delta by 1.
inline SuiteResult normalized_delta_bound(std::size_t cases, std::uint64_t seed) {
  SuiteResult r{"normalized delta bound", cases};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < cases; ++i) {
    auto v = random_values(rng, 2, 0.0, 2.0);
    const ppe::AttributeRange range{"a", std::min(v[0], v[1]), std::max(v[0], v[1]) + 1e-9};
    std::uniform_real_distribution<double> u(range.min, range.max);
    const double x = ppe::normalize_delta(ppe::delta_distance(u(rng), u(rng)), range);
    if (!(std::fabs(x) <= 1.0)) r.fail(i, "normalized delta exceeds 1");
  }
  return r;
}

inline std::vector<SuiteResult> all(std::size_t cases, std::uint64_t seed) {
  return {indicator_scale_covariance(cases, seed),      indicator_permutation_invariance(cases, seed + 1),
          rank_scale_invariance(cases, seed + 2),       rank_cap_monotonicity(cases, seed + 3),
          entanglement_loss_symmetry(cases, seed + 4),  normalized_delta_bound(cases, seed + 5)};
}

}  // namespace properties
