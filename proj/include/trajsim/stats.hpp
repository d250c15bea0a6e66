#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "trajsim/jsonl.hpp"

namespace trajsim::stats {

enum class UTestMode { kAuto, kExact, kNormal };
enum class UTestMethod { kExact, kNormalApprox };

std::string_view method_name(UTestMethod method);
UTestMode parse_mode(std::string_view name);

// Largest pooled sample size for which kAuto uses the exact distribution.
inline constexpr std::size_t kExactCutoff = 12;

struct UTestResult {
  double u1 = 0.0;  // pairs (a, b) with a > b, ties counted 0.5
  double u2 = 0.0;
  double z = 0.0;   // tie- and continuity-corrected normal score of u1
  double p_two_sided = 1.0;
  UTestMethod method = UTestMethod::kExact;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

// Two-sided Mann-Whitney U test on midranks.
//
// The exact path computes the permutation distribution of U over all
// C(n1 + n2, n1) assignments of the pooled midranks to sample A (so ties are
// handled exactly) and reports min(1, 2 * min(P[U <= u1], P[U >= u1])). The
// normal path uses the tie-corrected variance with a 0.5 continuity
// correction. Throws EmptySample when either sample is empty.
UTestResult mann_whitney_u(std::span<const double> sample_a,
                           std::span<const double> sample_b,
                           UTestMode mode = UTestMode::kAuto);

// Midranks (1-based) of the pooled values, in input order.
std::vector<double> midranks(std::span<const double> values);

// "**" for p < 0.01, "*" for p < 0.05, "" otherwise.
std::string_view mark_significance(double p);

struct Description {
  double mean = 0.0;
  double sd_sample = 0.0;
  std::size_t n = 0;
  bool degenerate = false;  // n == 1, sd reported as 0
};

Description describe(std::span<const double> values);

Json to_json(const UTestResult& result);

}  // namespace trajsim::stats
