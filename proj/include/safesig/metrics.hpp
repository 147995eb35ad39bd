#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "safesig/types.hpp"

namespace safesig::metrics {

struct ConfusionCounts {
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  long long total() const { return tp + fp + tn + fn; }
};

// Which side of the threshold predicts the alternative hypothesis.
enum class Orientation { HigherIsH1, LowerIsH1 };

inline const char* to_string(Orientation o) {
  return o == Orientation::HigherIsH1 ? "higher" : "lower";
}
Orientation orientation_from_string(const std::string& s);

// Rates are reported per entry; a zero denominator leaves the entry unset
// instead of failing the whole computation.
struct Rates {
  std::optional<double> tpr, fpr, fnr, tnr, accuracy;
};

struct RocPoint {
  double threshold = 0.0;  // classify H1 at `score >= threshold` (higher-is-H1)
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // sorted by descending threshold; (0,0) first, (1,1) last
  Orientation orientation = Orientation::HigherIsH1;
  long long positives = 0;
  long long negatives = 0;
};

struct OperatingPoint {
  std::string kind;         // "tpr_at_fpr" or "fpr_at_tpr"
  double target = 0.0;      // constraint, as a fraction
  double realized = 0.0;    // constraint value actually achieved
  double value = 0.0;       // the constrained rate
  double threshold = 0.0;
};

struct DetectionReport {
  double auroc = 0.0;
  double eer = 0.0;
  std::vector<OperatingPoint> operating_points;
  ConfusionCounts confusion;   // at `chosen_threshold`
  double chosen_threshold = 0.0;
  Orientation orientation = Orientation::HigherIsH1;
  long long positives = 0;
  long long negatives = 0;
};

struct Calibration {
  double threshold = 0.0;
  double realized_fpr = 0.0;
};

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& labels);

Rates rates(const ConfusionCounts& c);

// One point per distinct score plus the (0,0) and (1,1) endpoints.
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels,
                   Orientation orientation = Orientation::HigherIsH1);

// Trapezoidal area; equals pairwise concordance with ties counted 1/2.
double auroc(const RocCurve& curve);

// (FPR+FNR)/2 at the point minimizing |FPR-FNR|, linearly interpolating
// between adjacent curve points when the crossing falls between them.
double eer(const RocCurve& curve);

OperatingPoint tpr_at_fpr(const RocCurve& curve, double max_fpr);
OperatingPoint fpr_at_tpr(const RocCurve& curve, double min_tpr);

// Least-strict threshold whose realized FPR on the benign scores stays at
// or below the target.
Calibration calibrate_threshold(const std::vector<double>& benign_scores, double target_fpr,
                                Orientation orientation = Orientation::HigherIsH1);

// Classification convention: score >= eta predicts H1 under higher-is-H1
// (boundary inclusive), score <= eta under lower-is-H1.
std::vector<int> classify(const std::vector<double>& scores, double threshold,
                          Orientation orientation);

DetectionReport build_report(const std::vector<double>& scores, const std::vector<int>& labels,
                             Orientation orientation, const std::vector<double>& fpr_targets,
                             const std::vector<double>& tpr_targets);

std::string report_to_json(const DetectionReport& r);
std::string report_to_csv(const DetectionReport& r);
void write_report(const DetectionReport& r, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path);

}  // namespace safesig::metrics
