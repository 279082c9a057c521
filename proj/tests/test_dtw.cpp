#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dtw_oracle.hpp"
#include "kws/dtw/dtw.hpp"
#include "kws/dtw/search.hpp"
#include "kws/error.hpp"

namespace kws::dtw {
namespace {

FeatureSequence random_seq(std::mt19937& rng, int T, int D) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  FeatureSequence f;
  f.frames.resize(T, D);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < D; ++j) f.frames(i, j) = n(rng);
  return f;
}

TEST(FrameSimilarity, KnownValues) {
  const std::vector<float> x{1, 2, 3}, y{-2, 1, 0}, z{0, 0, 0};
  std::vector<float> neg{-1, -2, -3};
  EXPECT_DOUBLE_EQ(frame_similarity(x, x), 1.0);
  EXPECT_DOUBLE_EQ(frame_similarity(x, y), 0.5);
  EXPECT_DOUBLE_EQ(frame_similarity(x, neg), 0.0);
  EXPECT_DOUBLE_EQ(frame_similarity(x, z), 0.5);
  EXPECT_DOUBLE_EQ(frame_similarity(z, z), 0.5);
}

TEST(FrameSimilarity, SymmetricAndScaleInvariant) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> scale(0.01f, 50.0f);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_seq(rng, 1, 7), b = random_seq(rng, 1, 7);
    const float sa = scale(rng), sb = scale(rng);
    FeatureSequence as = a, bs = b;
    as.frames *= sa;
    bs.frames *= sb;
    const double s = frame_similarity(a.frame(0), b.frame(0));
    EXPECT_NEAR(s, frame_similarity(b.frame(0), a.frame(0)), 1e-15);
    EXPECT_NEAR(s, frame_similarity(as.frame(0), bs.frame(0)), 1e-6);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(DtwAlign, IdenticalSequencesGiveOneAndDiagonalPath) {
  std::mt19937 rng(2);
  const auto x = random_seq(rng, 7, 5);
  const auto a = dtw_align(x, x);
  EXPECT_EQ(a.similarity, 1.0);
  ASSERT_EQ(a.path.pairs.size(), 7u);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(a.path.pairs[i], std::make_pair(i, i));
}

TEST(DtwAlign, SingleFrameEqualsFrameSimilarity) {
  std::mt19937 rng(3);
  const auto x = random_seq(rng, 1, 4), y = random_seq(rng, 1, 4);
  EXPECT_DOUBLE_EQ(dtw_align(x, y).similarity, frame_similarity(x.frame(0), y.frame(0)));
}

TEST(DtwAlign, MatchesExhaustiveEnumeration3x5) {
  std::mt19937 rng(4);
  const auto x = random_seq(rng, 3, 4), y = random_seq(rng, 5, 4);
  int paths = 0;
  const double oracle = test::brute_force_dtw(x, y, &paths);
  EXPECT_EQ(paths, 41);  // Delannoy number D(2,4)
  EXPECT_NEAR(dtw_align(x, y).similarity, oracle, 1e-9);
  EXPECT_NEAR(dtw_similarity(x, y), oracle, 1e-9);
}

TEST(DtwAlign, MatchesExhaustiveEnumerationOnSmallGrids) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 6), n = 1 + static_cast<int>(rng() % 6);
    const int d = 1 + static_cast<int>(rng() % 5);
    const auto x = random_seq(rng, m, d), y = random_seq(rng, n, d);
    const auto a = dtw_align(x, y);
    EXPECT_NEAR(a.similarity, test::brute_force_dtw(x, y), 1e-9) << m << "x" << n;
    EXPECT_EQ(a.similarity, dtw_similarity(x, y));
  }
}

TEST(DtwAlign, PathInvariants) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 12), n = 1 + static_cast<int>(rng() % 12);
    const auto a = dtw_align(random_seq(rng, m, 3), random_seq(rng, n, 3));
    const auto& p = a.path.pairs;
    ASSERT_FALSE(p.empty());
    EXPECT_EQ(p.front(), std::make_pair(0, 0));
    EXPECT_EQ(p.back(), std::make_pair(m - 1, n - 1));
    for (std::size_t k = 1; k < p.size(); ++k) {
      const int di = p[k].first - p[k - 1].first, dj = p[k].second - p[k - 1].second;
      EXPECT_TRUE((di == 1 && dj == 1) || (di == 1 && dj == 0) || (di == 0 && dj == 1));
    }
    EXPECT_GE(static_cast<int>(p.size()), std::max(m, n));
    EXPECT_LE(static_cast<int>(p.size()), m + n - 1);
  }
}

TEST(DtwAlign, PathCostReproducesSimilarity) {
  std::mt19937 rng(7);
  const auto x = random_seq(rng, 9, 6), y = random_seq(rng, 13, 6);
  const auto a = dtw_align(x, y);
  double cost = 0.0;
  for (auto [i, j] : a.path.pairs) cost += 1.0 - frame_similarity(x.frame(i), y.frame(j));
  EXPECT_NEAR(a.similarity, 1.0 - cost / a.path.pairs.size(), 1e-12);
}

TEST(DtwAlign, SymmetricInArguments) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_seq(rng, 2 + trial % 9, 4), y = random_seq(rng, 3 + trial % 7, 4);
    EXPECT_NEAR(dtw_similarity(x, y), dtw_similarity(y, x), 1e-12);
  }
}

TEST(DtwAlign, DimensionMismatchThrows) {
  std::mt19937 rng(9);
  EXPECT_THROW(dtw_align(random_seq(rng, 3, 4), random_seq(rng, 3, 5)), DataError);
}

TEST(DtwAlign, WideBandEqualsUnconstrained) {
  std::mt19937 rng(10);
  const auto x = random_seq(rng, 20, 5), y = random_seq(rng, 26, 5);
  EXPECT_EQ(dtw_similarity(x, y, 100), dtw_similarity(x, y));
  EXPECT_LE(dtw_similarity(x, y, 1), dtw_similarity(x, y));
}

TemplateBank bank_from(std::vector<std::pair<int, FeatureSequence>> items, int K) {
  TemplateBank b;
  for (int k = 0; k < K; ++k) b.keyword_names.push_back("kw" + std::to_string(k));
  int id = 0;
  for (auto& [k, f] : items) b.templates.push_back({std::move(f), k, id++, "spk"});
  return b;
}

TEST(Sweep, UtteranceEqualToTemplate) {
  std::mt19937 rng(11);
  const auto t = random_seq(rng, 8, 6);
  EXPECT_EQ(sweep_template({t, 0, 0, ""}, t), 1.0);
}

TEST(Sweep, EmbeddedAtSkipAlignedOffset) {
  std::mt19937 rng(12);
  const auto t = random_seq(rng, 6, 5);
  auto u = random_seq(rng, 30, 5);
  u.frames.middleRows(9, 6) = t.frames;
  EXPECT_EQ(sweep_template({t, 0, 0, ""}, u, {3, 0}), 1.0);
}

TEST(Sweep, MatchesBruteForce) {
  std::mt19937 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_seq(rng, 4, 3), u = random_seq(rng, 10, 3);
    EXPECT_NEAR(sweep_template({t, 0, 0, ""}, u, {3, 0}), test::brute_force_sweep(t, u, 3), 1e-9);
  }
}

TEST(Sweep, ShortUtteranceComparedWhole) {
  std::mt19937 rng(14);
  const auto t = random_seq(rng, 6, 3), u = random_seq(rng, 4, 3);
  EXPECT_DOUBLE_EQ(sweep_template({t, 0, 0, ""}, u), dtw_similarity(t, u));
}

TEST(Sweep, FinalPartialWindowIsScored) {
  std::mt19937 rng(15);
  const auto t = random_seq(rng, 6, 4);
  auto u = random_seq(rng, 20, 4);
  // windows start at 0,3,...,12 (ends at 18), then 15 (partial, 5 frames)
  u.frames.bottomRows(5) = t.frames.topRows(5);
  const double s = sweep_template({t, 0, 0, ""}, u, {3, 0});
  EXPECT_GE(s, dtw_similarity(t, u.slice(15, 20)));
}

TEST(ScoreUtterance, SingleMatchingTemplate) {
  std::mt19937 rng(16);
  const auto u = random_seq(rng, 10, 4);
  const auto bank = bank_from({{0, u}}, 1);
  const auto sv = score_utterance(bank, u);
  ASSERT_EQ(sv.scores.size(), 1u);
  EXPECT_EQ(sv.scores[0], 1.0);
}

TEST(ScoreUtterance, MaxOverTemplatesDominates) {
  std::mt19937 rng(17);
  const auto u = random_seq(rng, 10, 4);
  const auto bank = bank_from({{0, random_seq(rng, 10, 4)}, {0, u}}, 1);
  EXPECT_EQ(score_utterance(bank, u).scores[0], 1.0);
}

TEST(ScoreUtterance, MatchesBruteForceTwoTypes) {
  std::mt19937 rng(18);
  const auto bank = bank_from({{0, random_seq(rng, 3, 3)}, {0, random_seq(rng, 4, 3)},
                               {1, random_seq(rng, 4, 3)}, {1, random_seq(rng, 2, 3)}}, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto u = random_seq(rng, 11, 3);
    const auto sv = score_utterance(bank, u);
    const auto oracle = test::brute_force_scores(bank, u, 3);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(sv.scores[k], oracle[k], 1e-9);
  }
}

TEST(ScoreUtterance, KeywordWithoutTemplatesIsNamed) {
  std::mt19937 rng(19);
  auto bank = bank_from({{0, random_seq(rng, 3, 3)}}, 2);
  try {
    score_utterance(bank, random_seq(rng, 5, 3));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("kw1"), std::string::npos);
  }
}

TEST(ScoreUtterance, MonotoneInTemplateBank) {
  std::mt19937 rng(20);
  auto bank = bank_from({{0, random_seq(rng, 5, 4)}, {1, random_seq(rng, 6, 4)}}, 2);
  const auto u = random_seq(rng, 25, 4);
  auto prev = score_utterance(bank, u).scores;
  for (int added = 0; added < 6; ++added) {
    bank.templates.push_back({random_seq(rng, 3 + added, 4), added % 2, 10 + added, ""});
    const auto now = score_utterance(bank, u).scores;
    for (int k = 0; k < 2; ++k) EXPECT_GE(now[k], prev[k]);
    prev = now;
  }
  for (double s : prev) EXPECT_TRUE(s >= 0.0 && s <= 1.0);
}

TEST(BatchScore, EmptyAndSingleton) {
  std::mt19937 rng(21);
  const auto bank = bank_from({{0, random_seq(rng, 4, 3)}}, 1);
  EXPECT_TRUE(batch_score(bank, {}).empty());
  std::vector<Utterance> one{{"u0", random_seq(rng, 9, 3)}};
  const auto r = batch_score(bank, one);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].utterance_id, "u0");
  EXPECT_EQ(r[0].scores, score_utterance(bank, one[0].features).scores);
}

TEST(BatchScore, PermutationAndThreadInvariance) {
  std::mt19937 rng(22);
  const auto bank = bank_from({{0, random_seq(rng, 4, 3)}, {1, random_seq(rng, 5, 3)}}, 2);
  std::vector<Utterance> utts;
  for (int i = 0; i < 9; ++i) utts.push_back({"u" + std::to_string(i), random_seq(rng, 8 + i, 3)});
  const auto base = batch_score(bank, utts);
  auto shuffled = utts;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto perm = batch_score(bank, shuffled, {}, 3);
  for (const auto& sv : perm) {
    const auto it = std::find_if(base.begin(), base.end(), [&](auto& b) { return b.utterance_id == sv.utterance_id; });
    ASSERT_NE(it, base.end());
    EXPECT_EQ(it->scores, sv.scores);
  }
  const auto threaded = batch_score(bank, utts, {}, 4);
  for (std::size_t i = 0; i < utts.size(); ++i) EXPECT_EQ(threaded[i].scores, base[i].scores);
}

TEST(BatchScore, ErrorCarriesUtteranceId) {
  std::mt19937 rng(23);
  const auto bank = bank_from({{0, random_seq(rng, 4, 3)}}, 1);
  std::vector<Utterance> utts{{"good", random_seq(rng, 8, 3)}, {"bad_one", random_seq(rng, 8, 5)}};
  try {
    batch_score(bank, utts);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad_one"), std::string::npos);
  }
}

TEST(ScoreFile, FormatAndParse) {
  std::vector<std::string> names{"alpha", "beta"};
  std::vector<ScoreVector> scores{{"utt1", {0.123456789123, 1.0}}, {"utt2", {0.0, 0.5}}};
  const auto text = format_score_file(names, scores);
  EXPECT_EQ(text, "utterance_id\talpha\tbeta\nutt1\t0.123456789\t1\nutt2\t0\t0.5\n");
  const auto sf = parse_score_file(text);
  EXPECT_EQ(sf.keyword_names, names);
  ASSERT_EQ(sf.scores.size(), 2u);
  EXPECT_DOUBLE_EQ(sf.scores[0].scores[0], 0.123456789);
  EXPECT_THROW(parse_score_file("utterance_id\ta\nu1\t0.5\t0.7\n"), DataError);
  EXPECT_THROW(parse_score_file("utterance_id\ta\nu1\tabc\n"), DataError);
}

}  // namespace
}  // namespace kws::dtw
