#include "kws/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "kws/error.hpp"
#include "kws/log.hpp"

namespace kws::eval {

LabeledScores label_scores(std::span<const std::string> keyword_names, std::span<const dtw::ScoreVector> scores,
                           const std::map<std::string, std::set<int>>& occurrences) {
  LabeledScores out;
  out.keyword_names.assign(keyword_names.begin(), keyword_names.end());
  out.per_keyword.resize(keyword_names.size());
  for (const auto& sv : scores) {
    if (sv.scores.size() != keyword_names.size())
      throw DataError("utterance '" + sv.utterance_id + "' has " + std::to_string(sv.scores.size()) +
                      " scores for " + std::to_string(keyword_names.size()) + " keywords");
    const auto it = occurrences.find(sv.utterance_id);
    for (std::size_t k = 0; k < sv.scores.size(); ++k) {
      const int label = it != occurrences.end() && it->second.count(static_cast<int>(k)) ? 1 : 0;
      out.per_keyword[k].push_back({sv.utterance_id, sv.scores[k], label});
    }
  }
  return out;
}

std::vector<ScoredItem> pooled(const LabeledScores& s) {
  std::vector<ScoredItem> all;
  for (const auto& v : s.per_keyword) all.insert(all.end(), v.begin(), v.end());
  return all;
}

std::vector<RocPoint> roc_curve(std::span<const ScoredItem> items, const std::string& what) {
  std::vector<std::pair<double, int>> v;
  v.reserve(items.size());
  double P = 0, N = 0;
  for (const auto& it : items) {
    if (!std::isfinite(it.score)) throw NumericError(what + ": non-finite score for " + it.utterance_id);
    v.emplace_back(it.score, it.label);
    (it.label ? P : N) += 1;
  }
  if (P == 0 || N == 0)
    throw DataError(what + ": ROC needs at least one positive and one negative (have " + std::to_string(int(P)) +
                    " and " + std::to_string(int(N)) + ")");
  std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::vector<RocPoint> roc{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < v.size();) {
    const double thr = v[i].first;
    for (; i < v.size() && v[i].first == thr; ++i) (v[i].second ? tp : fp) += 1;
    roc.push_back({thr, fp / N, tp / P});
  }
  return roc;
}

double auc(std::span<const ScoredItem> items, const std::string& what) {
  const auto roc = roc_curve(items, what);
  double a = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    a += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) * 0.5;
  return std::clamp(a, 0.0, 1.0);
}

double eer(std::span<const ScoredItem> items, const std::string& what) {
  const auto roc = roc_curve(items, what);
  auto gap = [](const RocPoint& p) { return p.fpr - (1.0 - p.tpr); };
  for (std::size_t i = 0; i < roc.size(); ++i) {
    const double d = gap(roc[i]);
    if (d == 0.0) return roc[i].fpr;
    if (d > 0.0) {
      const double d0 = gap(roc[i - 1]);
      const double a = -d0 / (d - d0);
      return roc[i - 1].fpr + a * (roc[i].fpr - roc[i - 1].fpr);
    }
  }
  return 1.0;  // unreachable: the last point is (1, 1)
}

PrecisionResult precision_at(const LabeledScores& s, int cutoff) {
  if (cutoff < 0) throw ConfigError("precision cutoff must be >= 0");
  PrecisionResult r;
  double sum = 0.0;
  int included = 0;
  for (std::size_t k = 0; k < s.per_keyword.size(); ++k) {
    auto items = s.per_keyword[k];
    const int positives = static_cast<int>(std::count_if(items.begin(), items.end(), [](auto& i) { return i.label; }));
    int c = cutoff == 0 ? positives : cutoff;
    c = std::min<int>(c, static_cast<int>(items.size()));
    if (c == 0) {
      const std::string name = k < s.keyword_names.size() ? s.keyword_names[k] : std::to_string(k);
      log::warn("keyword '" + name + "' excluded from P@" + (cutoff == 0 ? std::string("N") : std::to_string(cutoff)) +
                (cutoff == 0 ? ": no true occurrences" : ": no scored utterances"));
      r.per_keyword.push_back(std::numeric_limits<double>::quiet_NaN());
      r.cutoffs.push_back(0);
      continue;
    }
    std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
      return a.score != b.score ? a.score > b.score : a.utterance_id < b.utterance_id;
    });
    int hits = 0;
    for (int i = 0; i < c; ++i) hits += items[i].label;
    const double p = static_cast<double>(hits) / c;
    r.per_keyword.push_back(p);
    r.cutoffs.push_back(c);
    sum += p;
    ++included;
  }
  r.average = included ? sum / included : std::numeric_limits<double>::quiet_NaN();
  return r;
}

EvalReport evaluate(const LabeledScores& s, const std::string& title) {
  EvalReport r;
  r.title = title;
  const auto all = pooled(s);
  r.pooled_roc = roc_curve(all, "pooled scores");
  r.pooled_auc = auc(all, "pooled scores");
  r.pooled_eer = eer(all, "pooled scores");
  const auto p10 = precision_at(s, 10);
  const auto pn = precision_at(s, 0);
  r.mean_p_at_10 = p10.average;
  r.mean_p_at_n = pn.average;
  for (std::size_t k = 0; k < s.per_keyword.size(); ++k) {
    KeywordReport kr;
    kr.name = k < s.keyword_names.size() ? s.keyword_names[k] : std::to_string(k);
    for (const auto& it : s.per_keyword[k]) (it.label ? kr.positives : kr.negatives) += 1;
    const std::string what = "keyword '" + kr.name + "'";
    kr.auc = auc(s.per_keyword[k], what);
    kr.eer = eer(s.per_keyword[k], what);
    kr.p_at_10 = p10.per_keyword[k];
    kr.p_at_n = pn.per_keyword[k];
    r.mean_auc += kr.auc;
    r.mean_eer += kr.eer;
    r.keywords.push_back(std::move(kr));
  }
  if (!r.keywords.empty()) {
    r.mean_auc /= static_cast<double>(r.keywords.size());
    r.mean_eer /= static_cast<double>(r.keywords.size());
  }
  return r;
}

std::string format_report(const EvalReport& r) {
  std::string out;
  char buf[256];
  if (!r.title.empty()) out += "# " + r.title + "\n";
  std::snprintf(buf, sizeof buf, "pooled_auc\t%.6f\npooled_eer\t%.6f\n", r.pooled_auc, r.pooled_eer);
  out += buf;
  std::snprintf(buf, sizeof buf, "mean_auc\t%.6f\nmean_eer\t%.6f\nmean_p@10\t%.6f\nmean_p@n\t%.6f\n", r.mean_auc,
                r.mean_eer, r.mean_p_at_10, r.mean_p_at_n);
  out += buf;
  out += "keyword\tpositives\tnegatives\tauc\teer\tp@10\tp@n\n";
  for (const auto& k : r.keywords) {
    std::snprintf(buf, sizeof buf, "%s\t%d\t%d\t%.6f\t%.6f\t%.6f\t%.6f\n", k.name.c_str(), k.positives, k.negatives,
                  k.auc, k.eer, k.p_at_10, k.p_at_n);
    out += buf;
  }
  return out;
}

std::string format_roc_csv(std::span<const RocPoint> roc) {
  std::string out = "threshold,fpr,tpr\n";
  char buf[96];
  for (const auto& p : roc) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p.threshold, p.fpr, p.tpr);
    out += buf;
  }
  return out;
}

}  // namespace kws::eval
