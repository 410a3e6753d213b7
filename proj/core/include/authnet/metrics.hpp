#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "authnet/corpus.hpp"

namespace authnet::metrics {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
};

struct ScoredSample {
  double score = 0.0;
  int label = 0;  // 1 iff imposter_kind == Genuine
  corpus::ImposterKind kind = corpus::ImposterKind::DifferentPersonDifferentWord;
};

/// One threshold sweep point. The curve starts at (0,0) and ends at (1,1);
/// both rates are non-decreasing along it.
struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
};

/// Decision rule everywhere: predict positive iff score >= threshold.
ConfusionMatrix confusion_at(const std::vector<ScoredSample>& samples, double threshold);

double sensitivity(const ConfusionMatrix& cm);  // TP / (TP + FN)
double specificity(const ConfusionMatrix& cm);  // TN / (TN + FP)
double accuracy(const ConfusionMatrix& cm);     // (TP + TN) / total

/// Total-normalized acceptance/rejection error rates: FP / total and
/// FN / total. Nonstandard denominators, kept as the primary definitions.
double far_rate(const ConfusionMatrix& cm);
double frr_rate(const ConfusionMatrix& cm);

/// The per-class forms FP / (FP + TN) and FN / (TP + FN), exposed alongside
/// so results compare against systems using the usual definitions.
double far_conventional(const ConfusionMatrix& cm);
double frr_conventional(const ConfusionMatrix& cm);

/// Sweeps the threshold across every distinct score (plus a sentinel above
/// the maximum) and records (FPR, TPR) at each.
RocCurve roc(const std::vector<ScoredSample>& samples);

/// Trapezoidal area under the curve. Equals the probability that a random
/// positive outscores a random negative (ties counted half).
double auc(const RocCurve& curve);

struct EerPoint {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Intersects the curve with TPR + FPR = 1 by linear interpolation between
/// adjacent sweep points; EER is the FPR there (= 1 - TPR).
EerPoint eer(const RocCurve& curve);

struct StratumStats {
  std::size_t count = 0;
  std::size_t rejected = 0;
  double specificity = 0.0;
};

/// Specificity restricted to each negative stratum. Empty strata are absent.
std::map<corpus::ImposterKind, StratumStats> stratified_specificity(
    const std::vector<ScoredSample>& samples, double threshold);

/// Everything the evaluation of one verifier produces.
struct EvalReport {
  corpus::Target target;
  double threshold = 0.5;
  ConfusionMatrix confusion;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
  double far = 0.0;
  double frr = 0.0;
  double far_conventional = 0.0;
  double frr_conventional = 0.0;
  double auc = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  RocCurve roc;
  std::map<corpus::ImposterKind, StratumStats> strata;
};

EvalReport evaluate(const std::vector<ScoredSample>& samples, double threshold,
                    const corpus::Target& target = {});

void write_eval_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_eval_report(const std::filesystem::path& path);

}  // namespace authnet::metrics
