#include "trajsim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "trajsim/error.hpp"
#include "trajsim/text.hpp"

namespace trajsim::stats {

namespace {

// Exact distribution is tabulated over doubled rank sums, which are integers
// even with midranks. Beyond this size the table gets unreasonably large.
constexpr std::size_t kMaxExactSize = 400;

double exact_p(const std::vector<double>& ranks, std::size_t n1, double u1) {
  const std::size_t n = ranks.size();
  std::vector<long> doubled(n);
  long max_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    doubled[i] = std::lround(ranks[i] * 2.0);
    max_sum += doubled[i];
  }
  // ways[k][s]: number of k-subsets whose doubled rank sum is s.
  std::vector<std::vector<long double>> ways(
      n1 + 1, std::vector<long double>(static_cast<std::size_t>(max_sum) + 1, 0.0L));
  ways[0][0] = 1.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(doubled[i]);
    for (std::size_t k = std::min(i + 1, n1); k >= 1; --k) {
      auto& dst = ways[k];
      const auto& src = ways[k - 1];
      for (std::size_t s = dst.size() - 1; s >= r; --s) {
        dst[s] += src[s - r];
        if (s == r) break;
      }
    }
  }
  const long offset = static_cast<long>(n1 * (n1 + 1));  // doubled min rank sum
  const long observed = std::lround(u1 * 2.0) + offset;
  long double total = 0.0L, le = 0.0L, ge = 0.0L;
  for (std::size_t s = 0; s < ways[n1].size(); ++s) {
    const long double w = ways[n1][s];
    if (w == 0.0L) continue;
    total += w;
    if (static_cast<long>(s) <= observed) le += w;
    if (static_cast<long>(s) >= observed) ge += w;
  }
  const long double tail = std::min(le, ge) / total;
  return static_cast<double>(std::min(1.0L, 2.0L * tail));
}

}  // namespace

std::string_view method_name(UTestMethod method) {
  return method == UTestMethod::kExact ? "exact" : "normal_approx";
}

UTestMode parse_mode(std::string_view name) {
  const auto n = text::to_lower_ascii(text::trim(name));
  if (n == "auto") return UTestMode::kAuto;
  if (n == "exact") return UTestMode::kExact;
  if (n == "normal" || n == "normal_approx") return UTestMode::kNormal;
  throw Error(Errc::kInvalidArgument, "unknown U test mode: " + std::string(name));
}

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    i = j + 1;
  }
  return ranks;
}

UTestResult mann_whitney_u(std::span<const double> sample_a,
                           std::span<const double> sample_b, UTestMode mode) {
  if (sample_a.empty() || sample_b.empty()) {
    throw Error(Errc::kEmptySample, "Mann-Whitney U needs two non-empty samples");
  }
  UTestResult r;
  r.n1 = sample_a.size();
  r.n2 = sample_b.size();
  const std::size_t n = r.n1 + r.n2;

  std::vector<double> pooled(sample_a.begin(), sample_a.end());
  pooled.insert(pooled.end(), sample_b.begin(), sample_b.end());
  const auto ranks = midranks(pooled);

  const double r1 = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(r.n1), 0.0);
  const double n1 = static_cast<double>(r.n1);
  const double n2 = static_cast<double>(r.n2);
  r.u1 = r1 - n1 * (n1 + 1.0) / 2.0;
  r.u2 = n1 * n2 - r.u1;

  // Tie term: sum over tie groups of t^3 - t.
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double big_n = static_cast<double>(n);
  const double mu = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 *
                     ((big_n + 1.0) - (n > 1 ? tie_term / (big_n * (big_n - 1.0)) : 0.0));
  double p_normal = 1.0;
  if (var > 0.0) {
    const double diff = r.u1 - mu;
    const double corrected = std::max(std::abs(diff) - 0.5, 0.0);
    r.z = std::copysign(corrected / std::sqrt(var), diff);
    if (corrected == 0.0) r.z = 0.0;
    p_normal = std::min(1.0, std::erfc(std::abs(r.z) / std::sqrt(2.0)));
  }

  const bool use_exact =
      mode == UTestMode::kExact || (mode == UTestMode::kAuto && n <= kExactCutoff);
  if (use_exact) {
    if (n > kMaxExactSize) {
      throw Error(Errc::kInvalidArgument,
                  "exact U test limited to " + std::to_string(kMaxExactSize) + " observations");
    }
    r.method = UTestMethod::kExact;
    r.p_two_sided = exact_p(ranks, r.n1, r.u1);
  } else {
    r.method = UTestMethod::kNormalApprox;
    r.p_two_sided = p_normal;
  }
  r.p_two_sided = std::clamp(r.p_two_sided, std::numeric_limits<double>::min(), 1.0);
  return r;
}

std::string_view mark_significance(double p) {
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

Description describe(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::kEmptySample, "describe() needs at least one value");
  Description d;
  d.n = values.size();
  d.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(d.n);
  if (d.n == 1) {
    d.degenerate = true;
    return d;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - d.mean) * (v - d.mean);
  d.sd_sample = std::sqrt(ss / static_cast<double>(d.n - 1));
  return d;
}

Json to_json(const UTestResult& result) {
  return Json{{"u1", result.u1},
              {"u2", result.u2},
              {"z", result.z},
              {"p_two_sided", result.p_two_sided},
              {"method", std::string(method_name(result.method))},
              {"n1", result.n1},
              {"n2", result.n2}};
}

}  // namespace trajsim::stats
