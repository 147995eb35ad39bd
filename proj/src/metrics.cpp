#include "safesig/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

namespace safesig::metrics {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Internal key space: classification is always "key >= kappa => H1".
double to_key(double score, Orientation o) {
  return o == Orientation::HigherIsH1 ? score : -score;
}
double from_key(double kappa, Orientation o) {
  return o == Orientation::HigherIsH1 ? kappa : -kappa;
}

nlohmann::json threshold_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

std::string threshold_csv(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", t);
  return buf;
}

}  // namespace

Orientation orientation_from_string(const std::string& s) {
  if (s == "higher") return Orientation::HigherIsH1;
  if (s == "lower") return Orientation::LowerIsH1;
  throw ConfigError("unknown orientation '" + s + "' (expected \"higher\" or \"lower\")");
}

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw DataError("confusion: predictions and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1))
      throw DataError("confusion: non-binary entry at index " + std::to_string(i));
    if (p == 1 && y == 1) ++c.tp;
    else if (p == 1 && y == 0) ++c.fp;
    else if (p == 0 && y == 0) ++c.tn;
    else ++c.fn;
  }
  return c;
}

Rates rates(const ConfusionCounts& c) {
  Rates r;
  if (c.tp + c.fn > 0) {
    r.tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    r.fnr = 1.0 - *r.tpr;
  }
  if (c.fp + c.tn > 0) {
    r.fpr = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
    r.tnr = 1.0 - *r.fpr;
  }
  if (c.total() > 0)
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return r;
}

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels,
                   Orientation orientation) {
  if (scores.size() != labels.size())
    throw DataError("roc_curve: scores and labels differ in length");
  long long pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw DataError("roc_curve: non-finite score at index " + std::to_string(i));
    if (labels[i] == 1) ++pos;
    else if (labels[i] == 0) ++neg;
    else throw DataError("roc_curve: non-binary label at index " + std::to_string(i));
  }
  if (pos == 0 || neg == 0) throw DataError("roc_curve: need at least one sample of each class");

  // Per distinct key, the number of positives/negatives at that key.
  std::map<double, std::pair<long long, long long>, std::greater<>> buckets;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& b = buckets[to_key(scores[i], orientation)];
    if (labels[i] == 1) ++b.first;
    else ++b.second;
  }

  RocCurve curve;
  curve.orientation = orientation;
  curve.positives = pos;
  curve.negatives = neg;
  curve.points.push_back({from_key(kInf, orientation), 0.0, 0.0});
  long long cum_pos = 0, cum_neg = 0;
  for (const auto& [key, counts] : buckets) {
    cum_pos += counts.first;
    cum_neg += counts.second;
    curve.points.push_back({from_key(key, orientation),
                            static_cast<double>(cum_neg) / static_cast<double>(neg),
                            static_cast<double>(cum_pos) / static_cast<double>(pos)});
  }
  curve.points.push_back({from_key(-kInf, orientation), 1.0, 1.0});
  return curve;
}

double auroc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double eer(const RocCurve& curve) {
  // diff = FPR - FNR is nondecreasing from -1 to +1 along the curve.
  auto diff = [](const RocPoint& p) { return p.fpr + p.tpr - 1.0; };
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const double d = diff(curve.points[i]);
    if (d == 0.0) return curve.points[i].fpr;
    if (d > 0.0) {
      const auto& lo = curve.points[i - 1];
      const auto& hi = curve.points[i];
      const double dlo = diff(lo);
      const double t = -dlo / (d - dlo);
      const double fpr = lo.fpr + t * (hi.fpr - lo.fpr);
      const double fnr = (1.0 - lo.tpr) - t * (hi.tpr - lo.tpr);
      return 0.5 * (fpr + fnr);
    }
  }
  return 1.0;  // unreachable for a valid curve
}

OperatingPoint tpr_at_fpr(const RocCurve& curve, double max_fpr) {
  if (max_fpr < 0.0 || max_fpr > 1.0) throw ConfigError("tpr_at_fpr: target outside [0,1]");
  OperatingPoint best;
  best.kind = "tpr_at_fpr";
  best.target = max_fpr;
  bool found = false;
  // Points are ordered from strictest to loosest threshold; keep the best
  // TPR, preferring the strictest threshold that attains it.
  for (const auto& p : curve.points) {
    if (p.fpr <= max_fpr + 1e-15 && (!found || p.tpr > best.value)) {
      best.value = p.tpr;
      best.realized = p.fpr;
      best.threshold = p.threshold;
      found = true;
    }
  }
  if (!found) throw DataError("tpr_at_fpr: constraint unreachable");
  return best;
}

OperatingPoint fpr_at_tpr(const RocCurve& curve, double min_tpr) {
  if (min_tpr < 0.0 || min_tpr > 1.0) throw ConfigError("fpr_at_tpr: target outside [0,1]");
  OperatingPoint best;
  best.kind = "fpr_at_tpr";
  best.target = min_tpr;
  for (const auto& p : curve.points) {
    if (p.tpr >= min_tpr - 1e-15) {
      best.value = p.fpr;
      best.realized = p.tpr;
      best.threshold = p.threshold;
      return best;  // first qualifying point has the lowest FPR
    }
  }
  throw DataError("fpr_at_tpr: constraint unreachable");
}

Calibration calibrate_threshold(const std::vector<double>& benign_scores, double target_fpr,
                                Orientation orientation) {
  if (benign_scores.empty()) throw DataError("calibrate_threshold: empty benign scores");
  if (target_fpr < 0.0 || target_fpr > 1.0)
    throw ConfigError("calibrate_threshold: target outside [0,1]");

  std::vector<double> keys;
  keys.reserve(benign_scores.size());
  for (double s : benign_scores) {
    if (!std::isfinite(s)) throw DataError("calibrate_threshold: non-finite score");
    keys.push_back(to_key(s, orientation));
  }
  std::sort(keys.begin(), keys.end(), std::greater<>());

  const auto n = static_cast<long long>(keys.size());
  const auto budget =
      static_cast<long long>(std::floor(target_fpr * static_cast<double>(n) + 1e-9));

  // Largest flagged count that ties do not push past the budget.
  for (long long c = budget; c >= 1; --c) {
    const double kappa = keys[static_cast<std::size_t>(c - 1)];
    const auto flagged = static_cast<long long>(
        std::upper_bound(keys.begin(), keys.end(), kappa, std::greater<>()) - keys.begin());
    if (flagged <= budget)
      return {from_key(kappa, orientation),
              static_cast<double>(flagged) / static_cast<double>(n)};
  }
  const double above_max = std::nextafter(keys.front(), kInf);
  return {from_key(above_max, orientation), 0.0};
}

std::vector<int> classify(const std::vector<double>& scores, double threshold,
                          Orientation orientation) {
  std::vector<int> preds;
  preds.reserve(scores.size());
  const double kappa = to_key(threshold, orientation);
  for (double s : scores) preds.push_back(to_key(s, orientation) >= kappa ? 1 : 0);
  return preds;
}

DetectionReport build_report(const std::vector<double>& scores, const std::vector<int>& labels,
                             Orientation orientation, const std::vector<double>& fpr_targets,
                             const std::vector<double>& tpr_targets) {
  const RocCurve curve = roc_curve(scores, labels, orientation);
  DetectionReport r;
  r.orientation = orientation;
  r.positives = curve.positives;
  r.negatives = curve.negatives;
  r.auroc = auroc(curve);
  r.eer = eer(curve);
  for (double a : fpr_targets) r.operating_points.push_back(tpr_at_fpr(curve, a));
  for (double b : tpr_targets) r.operating_points.push_back(fpr_at_tpr(curve, b));
  r.chosen_threshold =
      r.operating_points.empty() ? from_key(kInf, orientation) : r.operating_points.front().threshold;
  r.confusion = confusion(classify(scores, r.chosen_threshold, orientation), labels);
  return r;
}

std::string report_to_json(const DetectionReport& r) {
  nlohmann::json j;
  j["auroc"] = r.auroc;
  j["eer"] = r.eer;
  j["threshold"] = threshold_json(r.chosen_threshold);
  j["orientation"] = to_string(r.orientation);
  j["positives"] = r.positives;
  j["negatives"] = r.negatives;
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp},
                    {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
  nlohmann::json tpr_pts = nlohmann::json::array();
  nlohmann::json fpr_pts = nlohmann::json::array();
  for (const auto& op : r.operating_points) {
    nlohmann::json o = {{"target", op.target},
                        {"realized", op.realized},
                        {"value", op.value},
                        {"threshold", threshold_json(op.threshold)}};
    (op.kind == "tpr_at_fpr" ? tpr_pts : fpr_pts).push_back(o);
  }
  j["tpr_at_fpr"] = tpr_pts;
  j["fpr_at_tpr"] = fpr_pts;
  return j.dump(2) + "\n";
}

std::string report_to_csv(const DetectionReport& r) {
  std::string out = "metric,target,realized,value,threshold\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "auroc,,,%.17g,\n", r.auroc);
  out += buf;
  std::snprintf(buf, sizeof(buf), "eer,,,%.17g,\n", r.eer);
  out += buf;
  for (const auto& op : r.operating_points) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%s\n", op.kind.c_str(), op.target,
                  op.realized, op.value, threshold_csv(op.threshold).c_str());
    out += buf;
  }
  return out;
}

void write_report(const DetectionReport& r, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path) {
  std::ofstream j(json_path);
  if (!j) throw DataError("cannot write " + json_path.string());
  j << report_to_json(r);
  std::ofstream c(csv_path);
  if (!c) throw DataError("cannot write " + csv_path.string());
  c << report_to_csv(r);
}

}  // namespace safesig::metrics
