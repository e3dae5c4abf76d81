#ifndef PROTOMOCO_METRICS_HPP
#define PROTOMOCO_METRICS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "protomoco/errors.hpp"

namespace protomoco::metrics {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;

  long total() const { return tp + fp + tn + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
};

/// One model output for ROC analysis: a real score (higher = more positive)
/// and the binary ground truth.
struct ScoredSample {
  double score = 0;
  bool truth = false;
};

/// Group-to-fold assignment; fold sizes differ by at most one group.
struct FoldPlan {
  int k = 0;
  std::map<std::string, int> assignment;
};

double accuracy(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);

/// Area under the ROC curve by trapezoidal integration over score thresholds.
/// Tied scores are grouped so the result equals the Mann-Whitney statistic
/// (tied positive/negative pairs count one half).
double roc_auc(const std::vector<ScoredSample>& samples);

/// Shuffled round-robin assignment of distinct groups to k folds,
/// deterministic per seed.
FoldPlan plan_group_kfold(const std::vector<std::string>& groups, int k, std::uint64_t seed);

/// Arithmetic mean and Bessel-corrected sample standard deviation.
std::pair<double, double> aggregate(const std::vector<double>& runs);

}  // namespace protomoco::metrics

#endif  // PROTOMOCO_METRICS_HPP
