#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kws/dtw/search.hpp"

namespace kws::eval {

struct ScoredItem {
  std::string utterance_id;
  double score = 0.0;
  int label = 0;  // 1 when the keyword occurs in the utterance
};

struct LabeledScores {
  std::vector<std::string> keyword_names;
  std::vector<std::vector<ScoredItem>> per_keyword;
};

// Pairs every score vector with the keyword ids that occur in its utterance.
LabeledScores label_scores(std::span<const std::string> keyword_names, std::span<const dtw::ScoreVector> scores,
                           const std::map<std::string, std::set<int>>& occurrences);
// All (keyword, utterance) items merged.
std::vector<ScoredItem> pooled(const LabeledScores& s);

struct RocPoint {
  double threshold = 0.0;  // +inf for the origin
  double fpr = 0.0;
  double tpr = 0.0;
};

// One point per distinct score, thresholds descending, starting at (0, 0).
// Throws DataError (mentioning `what`) without both labels present.
std::vector<RocPoint> roc_curve(std::span<const ScoredItem> items, const std::string& what = "scores");
// Trapezoidal area under roc_curve; equals the Mann-Whitney statistic with ties counted 1/2.
double auc(std::span<const ScoredItem> items, const std::string& what = "scores");
// Rate where FPR == FNR, interpolated linearly between bracketing ROC points.
double eer(std::span<const ScoredItem> items, const std::string& what = "scores");

struct PrecisionResult {
  std::vector<double> per_keyword;  // NaN where the keyword is excluded
  std::vector<int> cutoffs;
  double average = 0.0;             // unweighted mean over included keywords
};

// Precision among the top `cutoff` items (score descending, ties by
// utterance_id), clamped to the list size. cutoff == 0 means N, the
// keyword's number of true occurrences; keywords with N == 0 are then
// excluded with a warning.
PrecisionResult precision_at(const LabeledScores& s, int cutoff);

struct KeywordReport {
  std::string name;
  int positives = 0;
  int negatives = 0;
  double auc = 0.0;
  double eer = 0.0;
  double p_at_10 = 0.0;
  double p_at_n = 0.0;
};

struct EvalReport {
  std::string title;
  double pooled_auc = 0.0;
  double pooled_eer = 0.0;
  std::vector<RocPoint> pooled_roc;
  std::vector<KeywordReport> keywords;
  double mean_auc = 0.0;
  double mean_eer = 0.0;
  double mean_p_at_10 = 0.0;
  double mean_p_at_n = 0.0;
};

EvalReport evaluate(const LabeledScores& s, const std::string& title = "");
std::string format_report(const EvalReport& r);
// "threshold,fpr,tpr" header plus one line per point.
std::string format_roc_csv(std::span<const RocPoint> roc);

}  // namespace kws::eval
