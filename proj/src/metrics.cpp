#include "protomoco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "protomoco/rng.hpp"

namespace protomoco::metrics {

double accuracy(const ConfusionCounts& c) {
  const long total = c.total();
  if (total <= 0) throw UndefinedMetricError("accuracy undefined: no scored samples");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
}

double precision(const ConfusionCounts& c) {
  const long denom = c.tp + c.fp;
  if (denom <= 0) throw UndefinedMetricError("precision undefined: no predicted positives");
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double recall(const ConfusionCounts& c) {
  const long denom = c.tp + c.fn;
  if (denom <= 0) throw UndefinedMetricError("recall undefined: no positive samples");
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double roc_auc(const std::vector<ScoredSample>& samples) {
  long positives = 0, negatives = 0;
  for (const auto& s : samples) {
    if (s.truth) {
      ++positives;
    } else {
      ++negatives;
    }
  }
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("roc_auc undefined: needs at least one positive and one negative");
  }

  std::vector<ScoredSample> sorted = samples;
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });

  // Sweep thresholds over tie groups. Accumulating the trapezoid area in
  // units of 2*P*N keeps the arithmetic exact, so the value coincides with
  // pairwise Mann-Whitney counting.
  long tp = 0;
  long long area2 = 0;  // sum of f * (2*tp_before + p) per tie group
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    long p = 0, f = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      if (sorted[j].truth) {
        ++p;
      } else {
        ++f;
      }
      ++j;
    }
    area2 += static_cast<long long>(f) * (2 * tp + p);
    tp += p;
    i = j;
  }
  return static_cast<double>(area2) /
         (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

FoldPlan plan_group_kfold(const std::vector<std::string>& groups, int k, std::uint64_t seed) {
  if (k < 2) throw ContractError("plan_group_kfold: k must be >= 2");
  std::set<std::string> unique(groups.begin(), groups.end());
  if (static_cast<int>(unique.size()) < k) {
    throw ContractError("plan_group_kfold: only " + std::to_string(unique.size()) +
                        " distinct groups for k=" + std::to_string(k));
  }
  std::vector<std::string> order(unique.begin(), unique.end());
  SplitMix64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = rng.uniform_int(i);
    std::swap(order[i - 1], order[j]);
  }
  FoldPlan plan;
  plan.k = k;
  for (std::size_t i = 0; i < order.size(); ++i) {
    plan.assignment[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return plan;
}

std::pair<double, double> aggregate(const std::vector<double>& runs) {
  if (runs.size() < 2) {
    throw UndefinedMetricError("aggregate: sample std undefined for fewer than 2 runs");
  }
  double mean = 0;
  for (double v : runs) mean += v;
  mean /= static_cast<double>(runs.size());
  double ss = 0;
  for (double v : runs) ss += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(ss / static_cast<double>(runs.size() - 1));
  return {mean, std_dev};
}

}  // namespace protomoco::metrics
