#include "authnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "authnet/error.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace authnet::metrics {

ConfusionMatrix confusion_at(const std::vector<ScoredSample>& samples, double threshold) {
  ConfusionMatrix cm;
  for (const ScoredSample& sample : samples) {
    const bool predicted = sample.score >= threshold;
    if (sample.label == 1) {
      predicted ? ++cm.tp : ++cm.fn;
    } else {
      predicted ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

double sensitivity(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fn == 0) {
    raise(ErrorCode::UndefinedMetric, "sensitivity needs at least one positive sample");
  }
  return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
}

double specificity(const ConfusionMatrix& cm) {
  if (cm.tn + cm.fp == 0) {
    raise(ErrorCode::UndefinedMetric, "specificity needs at least one negative sample");
  }
  return static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) {
    raise(ErrorCode::UndefinedMetric, "accuracy over an empty sample set");
  }
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

double far_rate(const ConfusionMatrix& cm) {
  if (cm.total() == 0) {
    raise(ErrorCode::UndefinedMetric, "FAR over an empty sample set");
  }
  return static_cast<double>(cm.fp) / static_cast<double>(cm.total());
}

double frr_rate(const ConfusionMatrix& cm) {
  if (cm.total() == 0) {
    raise(ErrorCode::UndefinedMetric, "FRR over an empty sample set");
  }
  return static_cast<double>(cm.fn) / static_cast<double>(cm.total());
}

double far_conventional(const ConfusionMatrix& cm) {
  if (cm.fp + cm.tn == 0) {
    raise(ErrorCode::UndefinedMetric, "conventional FAR needs negative samples");
  }
  return static_cast<double>(cm.fp) / static_cast<double>(cm.fp + cm.tn);
}

double frr_conventional(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fn == 0) {
    raise(ErrorCode::UndefinedMetric, "conventional FRR needs positive samples");
  }
  return static_cast<double>(cm.fn) / static_cast<double>(cm.tp + cm.fn);
}

RocCurve roc(const std::vector<ScoredSample>& samples) {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  for (const ScoredSample& sample : samples) {
    (sample.label == 1 ? positives : negatives)++;
  }
  if (positives == 0 || negatives == 0) {
    raise(ErrorCode::SingleClassScores, "ROC needs at least one sample of each class");
  }

  std::set<double, std::greater<double>> thresholds;
  for (const ScoredSample& sample : samples) thresholds.insert(sample.score);

  RocCurve curve;
  // Sentinel above every score: nothing predicted positive.
  curve.points.push_back(RocPoint{0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (double threshold : thresholds) {
    const ConfusionMatrix cm = confusion_at(samples, threshold);
    curve.points.push_back(RocPoint{
        static_cast<double>(cm.fp) / static_cast<double>(negatives),
        static_cast<double>(cm.tp) / static_cast<double>(positives),
        threshold,
    });
  }
  return curve;
}

double auc(const RocCurve& curve) {
  if (curve.points.size() < 2) {
    raise(ErrorCode::InvalidArgument, "AUC needs a curve with at least two points");
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

EerPoint eer(const RocCurve& curve) {
  if (curve.points.size() < 2) {
    raise(ErrorCode::InvalidArgument, "EER needs a curve with at least two points");
  }
  // f = TPR + FPR - 1 runs from -1 to +1 along a valid curve; find the sign
  // change and interpolate within that segment.
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    const double fa = a.tpr + a.fpr - 1.0;
    const double fb = b.tpr + b.fpr - 1.0;
    if (fa > 0.0 || fb < 0.0) continue;

    const double denom = (b.fpr - a.fpr) + (b.tpr - a.tpr);
    const double alpha = denom != 0.0 ? (0.0 - fa) / denom : 0.0;
    EerPoint point;
    point.eer = a.fpr + alpha * (b.fpr - a.fpr);
    if (std::isinf(a.threshold)) {
      point.threshold = b.threshold;
    } else {
      point.threshold = a.threshold + alpha * (b.threshold - a.threshold);
    }
    return point;
  }
  raise(ErrorCode::InvalidArgument, "curve never crosses TPR + FPR = 1");
}

std::map<corpus::ImposterKind, StratumStats> stratified_specificity(
    const std::vector<ScoredSample>& samples, double threshold) {
  std::map<corpus::ImposterKind, StratumStats> strata;
  for (const ScoredSample& sample : samples) {
    if (sample.label == 1) continue;
    StratumStats& stats = strata[sample.kind];
    ++stats.count;
    if (sample.score < threshold) ++stats.rejected;
  }
  for (auto& [kind, stats] : strata) {
    stats.specificity = static_cast<double>(stats.rejected) / static_cast<double>(stats.count);
  }
  return strata;
}

EvalReport evaluate(const std::vector<ScoredSample>& samples, double threshold,
                    const corpus::Target& target) {
  EvalReport report;
  report.target = target;
  report.threshold = threshold;
  report.confusion = confusion_at(samples, threshold);
  report.sensitivity = sensitivity(report.confusion);
  report.specificity = specificity(report.confusion);
  report.accuracy = accuracy(report.confusion);
  report.far = far_rate(report.confusion);
  report.frr = frr_rate(report.confusion);
  report.far_conventional = metrics::far_conventional(report.confusion);
  report.frr_conventional = metrics::frr_conventional(report.confusion);
  report.roc = roc(samples);
  report.auc = auc(report.roc);
  const EerPoint point = eer(report.roc);
  report.eer = point.eer;
  report.eer_threshold = point.threshold;
  report.strata = stratified_specificity(samples, threshold);
  return report;
}

void write_eval_report(const fs::path& path, const EvalReport& report) {
  nlohmann::json node;
  node["target"] = {{"speaker", report.target.speaker_id}, {"word", report.target.word_id}};
  node["threshold"] = report.threshold;
  node["confusion"] = {{"tp", report.confusion.tp},
                       {"tn", report.confusion.tn},
                       {"fp", report.confusion.fp},
                       {"fn", report.confusion.fn}};
  node["metrics"] = {
      {"sensitivity", report.sensitivity},
      {"specificity", report.specificity},
      {"accuracy", report.accuracy},
      {"far", report.far},
      {"frr", report.frr},
      {"far_conventional", report.far_conventional},
      {"frr_conventional", report.frr_conventional},
      {"auc", report.auc},
      {"eer", report.eer},
      {"eer_threshold", report.eer_threshold},
  };
  nlohmann::json roc_points = nlohmann::json::array();
  for (const RocPoint& point : report.roc.points) {
    roc_points.push_back({{"fpr", point.fpr},
                          {"tpr", point.tpr},
                          {"threshold", std::isinf(point.threshold)
                                            ? nlohmann::json()
                                            : nlohmann::json(point.threshold)}});
  }
  node["roc"] = roc_points;
  nlohmann::json strata = nlohmann::json::object();
  for (const auto& [kind, stats] : report.strata) {
    strata[corpus::to_string(kind)] = {{"count", stats.count},
                                       {"rejected", stats.rejected},
                                       {"specificity", stats.specificity}};
  }
  node["strata"] = strata;

  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoFailure, "cannot write report to " + path.string());
  out << node.dump(2) << "\n";
}

EvalReport read_eval_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot read report from " + path.string());
  nlohmann::json node;
  try {
    in >> node;
  } catch (const nlohmann::json::exception&) {
    raise(ErrorCode::IoFailure, "unparsable report " + path.string());
  }

  EvalReport report;
  report.target.speaker_id = node.at("target").at("speaker").get<std::string>();
  report.target.word_id = node.at("target").at("word").get<std::string>();
  report.threshold = node.at("threshold").get<double>();
  report.confusion.tp = node.at("confusion").at("tp").get<std::size_t>();
  report.confusion.tn = node.at("confusion").at("tn").get<std::size_t>();
  report.confusion.fp = node.at("confusion").at("fp").get<std::size_t>();
  report.confusion.fn = node.at("confusion").at("fn").get<std::size_t>();
  const auto& metrics_node = node.at("metrics");
  report.sensitivity = metrics_node.at("sensitivity").get<double>();
  report.specificity = metrics_node.at("specificity").get<double>();
  report.accuracy = metrics_node.at("accuracy").get<double>();
  report.far = metrics_node.at("far").get<double>();
  report.frr = metrics_node.at("frr").get<double>();
  report.far_conventional = metrics_node.at("far_conventional").get<double>();
  report.frr_conventional = metrics_node.at("frr_conventional").get<double>();
  report.auc = metrics_node.at("auc").get<double>();
  report.eer = metrics_node.at("eer").get<double>();
  report.eer_threshold = metrics_node.at("eer_threshold").get<double>();
  for (const auto& point : node.at("roc")) {
    RocPoint roc_point;
    roc_point.fpr = point.at("fpr").get<double>();
    roc_point.tpr = point.at("tpr").get<double>();
    roc_point.threshold = point.at("threshold").is_null()
                              ? std::numeric_limits<double>::infinity()
                              : point.at("threshold").get<double>();
    report.roc.points.push_back(roc_point);
  }
  for (const auto& [name, stats] : node.at("strata").items()) {
    auto kind = corpus::imposter_kind_from_string(name);
    if (!kind) continue;
    StratumStats s;
    s.count = stats.at("count").get<std::size_t>();
    s.rejected = stats.at("rejected").get<std::size_t>();
    s.specificity = stats.at("specificity").get<double>();
    report.strata[*kind] = s;
  }
  return report;
}

}  // namespace authnet::metrics
