#include <gtest/gtest.h>

#include <set>
#include <tuple>

#include "matner/eval.hpp"
#include "matner/rng.hpp"
#include "matner/synth.hpp"

using namespace matner;

TEST(DecodeEntities, BasicTwoTokenSpan) {
  const auto spans = decode_entities({"B-material", "I-material", "O"});
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0], (EntitySpan{EntityType::kMaterial, 0, 2}));
}

TEST(DecodeEntities, DanglingInsideRepairedAsBegin) {
  const auto spans = decode_entities({"O", "I-process"});
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0], (EntitySpan{EntityType::kProcess, 1, 2}));
}

TEST(DecodeEntities, AdjacentBeginsMakeTwoSpans) {
  const auto spans = decode_entities({"B-material", "B-material"});
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (EntitySpan{EntityType::kMaterial, 0, 1}));
  EXPECT_EQ(spans[1], (EntitySpan{EntityType::kMaterial, 1, 2}));
}

TEST(DecodeEntities, TypeChangeClosesSpan) {
  const auto spans = decode_entities({"B-material", "I-process", "I-process"});
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (EntitySpan{EntityType::kMaterial, 0, 1}));
  EXPECT_EQ(spans[1], (EntitySpan{EntityType::kProcess, 1, 3}));
}

TEST(DecodeEntities, UnknownTagRejected) {
  EXPECT_THROW(decode_entities({"B-alloy"}), std::invalid_argument);
}

TEST(DecodeEntities, SpansDisjointAndCoverNonOutside) {
  Rng rng(40);
  const auto& names = TagSet::names();
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> tags(1 + rng.below(30));
    for (auto& t : tags) t = names[rng.below(5)];
    const auto spans = decode_entities(tags);
    std::vector<bool> covered(tags.size(), false);
    int prev_end = -1;
    for (const auto& s : spans) {
      EXPECT_LT(s.start, s.end);
      EXPECT_GE(s.start, prev_end);  // sorted, non-overlapping
      prev_end = s.end;
      for (int i = s.start; i < s.end; ++i) covered[static_cast<size_t>(i)] = true;
    }
    for (size_t i = 0; i < tags.size(); ++i)
      EXPECT_EQ(covered[i], tags[i] != "O") << "position " << i;
  }
}

TEST(EntityPrf, PerfectPredictionScoresOne) {
  const std::vector<std::vector<std::string>> tags = {
      {"B-material", "I-material", "O"}, {"O", "B-process", "I-process"}};
  const MetricsReport r = entity_prf_tags(tags, tags);
  EXPECT_DOUBLE_EQ(r.precision(), 1.0);
  EXPECT_DOUBLE_EQ(r.recall(), 1.0);
  EXPECT_DOUBLE_EQ(r.f1(), 1.0);
  EXPECT_EQ(r.overall.tp, 2);
  EXPECT_EQ(r.overall.fp, 0);
  EXPECT_EQ(r.overall.fn, 0);
}

TEST(EntityPrf, PublishedHarmonicMeanPair) {
  // 2 * 0.965 * 0.957 / (0.965 + 0.957) = 0.96098, i.e. 0.961 at 3 d.p.
  EXPECT_NEAR(f1_score(0.965, 0.957), 0.961, 0.0005);
}

TEST(EntityPrf, BoundaryMismatchIsBothFalsePositiveAndFalseNegative) {
  const std::vector<std::vector<EntitySpan>> gold = {{{EntityType::kMaterial, 0, 2}}};
  const std::vector<std::vector<EntitySpan>> pred = {{{EntityType::kMaterial, 0, 1}}};
  const MetricsReport r = entity_prf(gold, pred);
  EXPECT_EQ(r.overall.tp, 0);
  EXPECT_EQ(r.overall.fp, 1);
  EXPECT_EQ(r.overall.fn, 1);
  EXPECT_DOUBLE_EQ(r.f1(), 0.0);
}

TEST(EntityPrf, FirstTokenModeIgnoresEndBoundary) {
  const std::vector<std::vector<EntitySpan>> gold = {{{EntityType::kMaterial, 0, 2}}};
  const std::vector<std::vector<EntitySpan>> pred = {{{EntityType::kMaterial, 0, 1}}};
  const MetricsReport strict = entity_prf(gold, pred, MatchMode::kStrict);
  const MetricsReport first = entity_prf(gold, pred, MatchMode::kFirstToken);
  EXPECT_EQ(strict.overall.tp, 0);
  EXPECT_EQ(first.overall.tp, 1);
  EXPECT_DOUBLE_EQ(first.f1(), 1.0);
}

TEST(EntityPrf, SentenceCountMismatchRejected) {
  EXPECT_THROW(entity_prf({{}}, {{}, {}}), DimensionError);
}

TEST(EntityPrf, PerTypeCountsSumToOverall) {
  const std::vector<std::vector<std::string>> gold = {
      {"B-material", "O", "B-process"}, {"B-material", "I-material", "O"}};
  const std::vector<std::vector<std::string>> pred = {
      {"B-material", "O", "B-material"}, {"B-material", "O", "B-process"}};
  const MetricsReport r = entity_prf_tags(gold, pred);
  EXPECT_EQ(r.overall.tp, r.material.tp + r.process.tp);
  EXPECT_EQ(r.overall.fp, r.material.fp + r.process.fp);
  EXPECT_EQ(r.overall.fn, r.material.fn + r.process.fn);
}

// Brute-force counting oracle: per sentence, exact-triple set intersection.
namespace {
ConfusionCounts oracle_counts(const std::vector<std::vector<EntitySpan>>& gold,
                              const std::vector<std::vector<EntitySpan>>& pred) {
  using Triple = std::tuple<int, int, int>;
  ConfusionCounts c;
  for (size_t s = 0; s < gold.size(); ++s) {
    std::set<Triple> g, p;
    for (const auto& e : gold[s]) g.emplace(static_cast<int>(e.type), e.start, e.end);
    for (const auto& e : pred[s]) p.emplace(static_cast<int>(e.type), e.start, e.end);
    int64_t tp = 0;
    for (const auto& t : p) tp += g.count(t);
    c.tp += tp;
    c.fp += static_cast<int64_t>(p.size()) - tp;
    c.fn += static_cast<int64_t>(g.size()) - tp;
  }
  return c;
}
}  // namespace

TEST(EntityPrf, MatchesBruteForceOracleOnRandomPairs) {
  Rng rng(4242);
  const auto& names = TagSet::names();
  std::vector<std::vector<EntitySpan>> gold, pred;
  for (int pair = 0; pair < 1000; ++pair) {
    const size_t len = 1 + rng.below(90);
    std::vector<std::string> g(len), p(len);
    for (size_t i = 0; i < len; ++i) {
      g[i] = names[rng.below(5)];
      p[i] = names[rng.below(5)];
    }
    gold.push_back(decode_entities(g));
    pred.push_back(decode_entities(p));
  }
  const MetricsReport r = entity_prf(gold, pred);
  const ConfusionCounts oracle = oracle_counts(gold, pred);
  EXPECT_EQ(r.overall.tp, oracle.tp);
  EXPECT_EQ(r.overall.fp, oracle.fp);
  EXPECT_EQ(r.overall.fn, oracle.fn);
}

TEST(EntityPrf, PermutationInvariantOverSentences) {
  Rng rng(77);
  const auto& names = TagSet::names();
  std::vector<std::vector<EntitySpan>> gold, pred;
  for (int s = 0; s < 40; ++s) {
    std::vector<std::string> g(12), p(12);
    for (size_t i = 0; i < 12; ++i) {
      g[i] = names[rng.below(5)];
      p[i] = names[rng.below(5)];
    }
    gold.push_back(decode_entities(g));
    pred.push_back(decode_entities(p));
  }
  const MetricsReport before = entity_prf(gold, pred);
  std::vector<size_t> perm(gold.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<std::vector<EntitySpan>> gold2, pred2;
  for (size_t i : perm) {
    gold2.push_back(gold[i]);
    pred2.push_back(pred[i]);
  }
  const MetricsReport after = entity_prf(gold2, pred2);
  EXPECT_EQ(before.overall.tp, after.overall.tp);
  EXPECT_EQ(before.overall.fp, after.overall.fp);
  EXPECT_EQ(before.overall.fn, after.overall.fn);
}

TEST(F1Score, SymmetricAndBoundedByMax) {
  for (int tp = 0; tp <= 4; ++tp)
    for (int fp = 0; fp <= 4; ++fp)
      for (int fn = 0; fn <= 4; ++fn) {
        const Prf m = prf_from_counts({tp, fp, fn});
        EXPECT_NEAR(m.f1, f1_score(m.recall, m.precision), 1e-15);  // symmetry
        EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-15);
        EXPECT_GE(m.f1, 0.0);
        EXPECT_LE(m.f1, 1.0);
      }
  EXPECT_DOUBLE_EQ(prf_from_counts({0, 0, 0}).f1, 0.0);  // 0/0 convention
}

TEST(TokenAccuracy, IdenticalSequencesScoreOne) {
  const std::vector<std::vector<int32_t>> tags = {{0, 4, 4, 2}};
  EXPECT_DOUBLE_EQ(token_accuracy(tags, tags, {4}, true), 1.0);
  EXPECT_DOUBLE_EQ(token_accuracy(tags, tags, {4}, false), 1.0);
}

TEST(TokenAccuracy, MaskedCountsOnlyRealTokens) {
  const std::vector<std::vector<int32_t>> gold = {{0, 1, 4, 4, 4, 4}};
  std::vector<std::vector<int32_t>> pred = gold;
  pred[0][1] = 4;  // one wrong among 4 real tokens
  EXPECT_DOUBLE_EQ(token_accuracy(gold, pred, {4}, true), 0.75);
  // unmasked counts the padding positions too
  EXPECT_DOUBLE_EQ(token_accuracy(gold, pred, {4}, false), 5.0 / 6.0);
}

TEST(TokenAccuracy, AllOutsideIsStillPerfect) {
  const std::vector<std::vector<int32_t>> tags = {{4, 4, 4}};
  EXPECT_DOUBLE_EQ(token_accuracy(tags, tags, {3}, true), 1.0);
}

TEST(TokenAccuracy, MisalignmentRejected) {
  EXPECT_THROW(token_accuracy({{1, 2}}, {{1}}, {2}, true), DimensionError);
  EXPECT_THROW(token_accuracy({{1}}, {{1}}, {1, 2}, true), DimensionError);
}

TEST(Baseline, LearnsMostFrequentTag) {
  const Corpus corpus = parse_iob(std::string(
      "graphene\tB-material\nis\tO\n\ngraphene\tB-material\noxide\tI-material\n\n"));
  const auto baseline = MostFrequentTagBaseline::train(corpus);
  const auto tags = baseline.predict({"graphene", "is", "novel"});
  EXPECT_EQ(tags[0], "B-material");
  EXPECT_EQ(tags[1], "O");
  EXPECT_EQ(tags[2], "O");  // unseen word
}

TEST(Baseline, NearPerfectWithoutAmbiguityAndDegradedWithIt) {
  // Self-prediction on generated corpora. Overlapping phrase boundaries
  // ("graphene" standalone vs inside "reduced graphene oxide") keep the
  // per-word baseline just under perfect; context-dependent O usage drags it
  // far lower. Measured: 0.909 vs 0.704 on seed 42.
  auto self_f1 = [](double ambiguous) {
    SynthConfig cfg;
    cfg.seed = 42;
    cfg.n_sentences = 500;
    cfg.ambiguous_fraction = ambiguous;
    const Corpus c = generate_synthetic_corpus(cfg);
    const auto baseline = MostFrequentTagBaseline::train(c);
    std::vector<std::vector<std::string>> gold, pred;
    for (const auto& s : c.sentences) {
      gold.push_back(s.tags);
      pred.push_back(baseline.predict(s.tokens));
    }
    return entity_prf_tags(gold, pred).f1();
  };
  const double unambiguous = self_f1(0.0);
  const double ambiguous = self_f1(0.2);
  EXPECT_GE(unambiguous, 0.88);
  EXPECT_LT(ambiguous, unambiguous - 0.1);
}

TEST(Baseline, TiesResolveToLowerTagId) {
  const Corpus corpus =
      parse_iob(std::string("x\tB-material\n\nx\tB-process\n\n"));  // 1:1 tie
  const auto baseline = MostFrequentTagBaseline::train(corpus);
  EXPECT_EQ(baseline.predict({"x"})[0], "B-material");
}

TEST(ComparisonReport, SingleReportSingleRow) {
  MetricsReport r;
  r.model = "only";
  r.overall = {3, 1, 1};
  r.overall_prf = prf_from_counts(r.overall);
  const ComparisonTable t = comparison_report({r});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].model, "only");
}

TEST(ComparisonReport, RowsSortedByF1Descending) {
  MetricsReport hi, lo;
  hi.model = "strong";
  hi.overall_prf = {0.965, 0.957, 0.961};
  lo.model = "weak";
  lo.overall_prf = {0.84, 0.17, 0.282};
  const ComparisonTable t = comparison_report({lo, hi});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].model, "strong");
  EXPECT_DOUBLE_EQ(t.rows[0].f1, 0.961);
  EXPECT_DOUBLE_EQ(t.rows[1].f1, 0.282);
}

TEST(ComparisonReport, TsvRoundTripsAtThreeDecimals) {
  MetricsReport a, b;
  a.model = "model-a";
  a.overall_prf = {0.9654, 0.9571, f1_score(0.9654, 0.9571)};
  b.model = "model-b";
  b.overall_prf = {0.5, 0.25, f1_score(0.5, 0.25)};
  const ComparisonTable t = comparison_report({a, b});
  const ComparisonTable parsed = parse_comparison_tsv(render_comparison_tsv(t));
  ASSERT_EQ(parsed.rows.size(), t.rows.size());
  for (size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(parsed.rows[i].model, t.rows[i].model);
    EXPECT_NEAR(parsed.rows[i].precision, t.rows[i].precision, 5e-4);
    EXPECT_NEAR(parsed.rows[i].recall, t.rows[i].recall, 5e-4);
    EXPECT_NEAR(parsed.rows[i].f1, t.rows[i].f1, 5e-4);
  }
}

TEST(RenderMetrics, StableKeys) {
  MetricsReport r;
  r.model = "m";
  r.overall = {2, 1, 1};
  r.overall_prf = prf_from_counts(r.overall);
  const std::string text = render_metrics(r);
  for (const char* key :
       {"precision\t", "recall\t", "f1\t", "counts.tp\t", "per_type.material.f1\t",
        "per_type.process.f1\t", "token_accuracy.masked\t"})
    EXPECT_NE(text.find(key), std::string::npos) << key;
}
