#include <gtest/gtest.h>

#include <cmath>

#include "matner/synth.hpp"
#include "matner/train.hpp"

using namespace matner;

TEST(EarlyStopCheck, ImprovingLossContinues) {
  const auto d = early_stop_check({1.0, 0.9, 0.8}, 2);
  EXPECT_FALSE(d.stop);
  EXPECT_EQ(d.best_epoch, 2);
}

TEST(EarlyStopCheck, RisingLossStops) {
  const auto d = early_stop_check({1.0, 1.1, 1.2}, 1);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.best_epoch, 0);
}

TEST(EarlyStopCheck, PatienceZeroStopsOnFirstRise) {
  const auto d = early_stop_check({1.0, 1.05}, 0);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.best_epoch, 0);
}

TEST(EarlyStopCheck, ImprovementsBelowMinDeltaDoNotReset) {
  const auto d = early_stop_check({1.00, 0.97, 0.96}, 1, 0.05);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.best_epoch, 2);  // minimal recorded loss, regardless of min_delta
}

TEST(EarlyStopCheck, EmptyHistoryRejected) {
  EXPECT_THROW(early_stop_check({}, 1), std::invalid_argument);
}

namespace {

ModelConfig small_model(uint64_t seed = 2) {
  ModelConfig cfg;
  cfg.max_len = 12;
  cfg.embedding_dim = 8;
  cfg.lstm_units = 8;
  cfg.spatial_dropout = 0.2;
  cfg.recurrent_dropout = 0.2;
  cfg.seed = seed;
  return cfg;
}

TrainConfig small_training(uint64_t seed = 2) {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 3;
  cfg.validation_split = 0.2;
  cfg.learning_rate = 0.01;
  cfg.seed = seed;
  return cfg;
}

Corpus small_corpus(int n = 30) {
  SynthConfig synth;
  synth.seed = 6;
  synth.n_sentences = n;
  return generate_synthetic_corpus(synth);
}

}  // namespace

TEST(Train, ZeroEpochsReturnsInitializedModelAndEmptyHistory) {
  auto train_cfg = small_training();
  train_cfg.max_epochs = 0;
  const TrainResult r = train(small_model(), train_cfg, small_corpus());
  EXPECT_TRUE(r.history.epochs.empty());
  EXPECT_EQ(r.history.gradient_sentences, 0);
  EXPECT_GT(r.bundle.params.parameter_count(), 0);
  EXPECT_TRUE(r.bundle.params.embedding.all_finite());
}

TEST(Train, SameSeedsGiveBitIdenticalBundles) {
  const Corpus corpus = small_corpus();
  const TrainResult a = train(small_model(), small_training(), corpus);
  const TrainResult b = train(small_model(), small_training(), corpus);
  EXPECT_EQ(serialize_bundle(a.bundle), serialize_bundle(b.bundle));
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (size_t e = 0; e < a.history.epochs.size(); ++e) {
    EXPECT_DOUBLE_EQ(a.history.epochs[e].train_loss, b.history.epochs[e].train_loss);
    EXPECT_DOUBLE_EQ(a.history.epochs[e].val_loss, b.history.epochs[e].val_loss);
  }
}

TEST(Train, DifferentSeedsGiveDifferentBundles) {
  const Corpus corpus = small_corpus();
  const TrainResult a = train(small_model(1), small_training(1), corpus);
  const TrainResult b = train(small_model(9), small_training(9), corpus);
  EXPECT_NE(serialize_bundle(a.bundle), serialize_bundle(b.bundle));
}

TEST(Train, ValidationSentencesNeverContributeGradients) {
  const Corpus corpus = small_corpus(30);
  auto train_cfg = small_training();
  train_cfg.max_epochs = 4;
  train_cfg.early_stopping = false;
  const TrainResult r = train(small_model(), train_cfg, corpus);
  // 30 sentences, validation takes round(30 * 0.2) = 6, leaving 24 per epoch.
  EXPECT_EQ(r.history.gradient_sentences, 4 * 24);
}

TEST(Train, BestEpochIsArgminOfValidationLoss) {
  const Corpus corpus = small_corpus(40);
  auto train_cfg = small_training();
  train_cfg.max_epochs = 6;
  train_cfg.early_stopping = false;
  const TrainResult r = train(small_model(), train_cfg, corpus);
  ASSERT_EQ(r.history.epochs.size(), 6u);
  int best = 0;
  for (int e = 1; e < 6; ++e)
    if (r.history.epochs[static_cast<size_t>(e)].val_loss <
        r.history.epochs[static_cast<size_t>(best)].val_loss)
      best = e;
  EXPECT_EQ(r.history.best_epoch, best);
}

TEST(Train, EarlyStoppingBoundsHistoryLength) {
  const Corpus corpus = small_corpus(30);
  auto train_cfg = small_training();
  train_cfg.max_epochs = 40;
  train_cfg.patience = 1;
  const TrainResult r = train(small_model(), train_cfg, corpus);
  EXPECT_LE(r.history.epochs.size(), 40u);
  if (r.history.stopped_early) {
    EXPECT_LT(r.history.epochs.size(), 40u);
    const auto& epochs = r.history.epochs;
    int best = 0;
    for (size_t e = 1; e < epochs.size(); ++e)
      if (epochs[e].val_loss < epochs[static_cast<size_t>(best)].val_loss)
        best = static_cast<int>(e);
    EXPECT_EQ(r.history.best_epoch, best);
  }
}

TEST(Train, CorpusTooSmallForSplitsRejected) {
  Corpus tiny;
  Sentence s;
  s.tokens = {"a"};
  s.tags = {"O"};
  tiny.sentences.push_back(s);
  auto train_cfg = small_training();
  train_cfg.validation_split = 0.6;  // 1 sentence -> validation would take it all
  EXPECT_THROW(train(small_model(), train_cfg, tiny), std::invalid_argument);
}

TEST(Train, EmptyCorpusRejected) {
  EXPECT_THROW(train(small_model(), small_training(), Corpus{}), EmptyCorpusError);
}

namespace {

Corpus trivially_taggable_corpus(int n = 10) {
  Corpus corpus;
  for (int i = 0; i < n; ++i) {
    Sentence s;
    s.tokens = {"graphene", "is", "good"};
    s.tags = {"B-material", "O", "O"};
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace

TEST(CrossValidate, DegenerateCorpusScoresPerfectOnBothFolds) {
  ModelConfig model_cfg;
  model_cfg.max_len = 6;
  model_cfg.embedding_dim = 8;
  model_cfg.lstm_units = 8;
  model_cfg.spatial_dropout = 0;
  model_cfg.recurrent_dropout = 0;
  model_cfg.seed = 4;
  TrainConfig train_cfg;
  train_cfg.batch_size = 16;
  train_cfg.max_epochs = 60;
  train_cfg.validation_split = 0;
  train_cfg.early_stopping = false;
  train_cfg.learning_rate = 0.05;
  train_cfg.seed = 4;

  const CvResult cv = cross_validate(model_cfg, train_cfg, trivially_taggable_corpus(), 2);
  ASSERT_EQ(cv.folds.size(), 2u);
  for (const auto& fold : cv.folds) EXPECT_DOUBLE_EQ(fold.f1(), 1.0);
  EXPECT_DOUBLE_EQ(cv.mean_f1, 1.0);
  EXPECT_DOUBLE_EQ(cv.std_f1, 0.0);
}

TEST(CrossValidate, RerunWithSameSeedIsIdentical) {
  ModelConfig model_cfg = small_model();
  TrainConfig train_cfg = small_training();
  train_cfg.max_epochs = 2;
  const Corpus corpus = small_corpus(24);
  const CvResult a = cross_validate(model_cfg, train_cfg, corpus, 3);
  const CvResult b = cross_validate(model_cfg, train_cfg, corpus, 3);
  ASSERT_EQ(a.folds.size(), 3u);
  ASSERT_EQ(b.folds.size(), 3u);
  for (size_t f = 0; f < a.folds.size(); ++f)
    EXPECT_DOUBLE_EQ(a.folds[f].f1(), b.folds[f].f1());
  EXPECT_DOUBLE_EQ(a.mean_f1, b.mean_f1);
  EXPECT_DOUBLE_EQ(a.std_f1, b.std_f1);
}

TEST(CrossValidate, ParallelJobsMatchSequential) {
  ModelConfig model_cfg = small_model();
  TrainConfig train_cfg = small_training();
  train_cfg.max_epochs = 2;
  const Corpus corpus = small_corpus(24);
  const CvResult seq = cross_validate(model_cfg, train_cfg, corpus, 3, 1);
  const CvResult par = cross_validate(model_cfg, train_cfg, corpus, 3, 3);
  for (size_t f = 0; f < seq.folds.size(); ++f)
    EXPECT_DOUBLE_EQ(seq.folds[f].f1(), par.folds[f].f1());
  EXPECT_DOUBLE_EQ(seq.mean_f1, par.mean_f1);
}

TEST(CrossValidate, RejectsKBelowTwo) {
  EXPECT_THROW(cross_validate(small_model(), small_training(), small_corpus(10), 1),
               std::invalid_argument);
}

TEST(RenderHistory, OneLinePerEpoch) {
  TrainHistory h;
  h.epochs.resize(3);
  h.best_epoch = 1;
  const std::string text = render_history(h);
  EXPECT_NE(text.find("epoch=1 "), std::string::npos);
  EXPECT_NE(text.find("epoch=3 "), std::string::npos);
  EXPECT_NE(text.find("best_epoch=2"), std::string::npos);
}
