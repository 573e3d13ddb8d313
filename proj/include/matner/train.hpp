#pragma once
// Training orchestration: epoch loop with seeded per-epoch shuffling,
// fit-time validation carve, early stopping with best-epoch restore,
// k-fold cross-validation, and model evaluation against a gold corpus.
//
// Determinism: initialization, the validation carve, epoch shuffles and
// dropout draws each use their own substream of the configured seeds, so two
// runs with the same seeds produce bit-identical bundles and changing
// max_epochs never perturbs the initial weights.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "matner/bundle.hpp"
#include "matner/corpus.hpp"
#include "matner/eval.hpp"
#include "matner/model.hpp"
#include "matner/optim.hpp"

namespace matner {

struct TrainConfig {
  int32_t batch_size = 16;
  int32_t max_epochs = 50;
  double validation_split = 0.2;
  double test_fraction = 0.1;
  int32_t patience = 3;
  double min_delta = 0.0;
  bool early_stopping = true;
  double learning_rate = 0.001;
  bool mask_padding = false;  // padded positions count toward the loss by default
  double clip_norm = 5.0;     // global-norm gradient clip; <= 0 disables
  uint64_t seed = 1;
  int32_t k_folds = 5;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (max_epochs < 0) throw std::invalid_argument("TrainConfig: max_epochs must be >= 0");
    if (validation_split < 0 || validation_split >= 1)
      throw std::invalid_argument("TrainConfig: validation_split must be in [0,1)");
    if (patience < 0) throw std::invalid_argument("TrainConfig: patience must be >= 0");
  }
};

struct EpochRecord {
  double train_loss = 0;
  double val_loss = std::nan("");
  double val_token_accuracy_masked = std::nan("");
  double val_token_accuracy_unmasked = std::nan("");
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool stopped_early = false;
  int32_t best_epoch = -1;  // 0-based index of the minimal validation loss
  int64_t gradient_sentences = 0;  // instrumentation: rows that contributed gradients
};

// Line-delimited record per epoch.
inline std::string render_history(const TrainHistory& h) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(6);
  for (size_t e = 0; e < h.epochs.size(); ++e) {
    const auto& rec = h.epochs[e];
    out << "epoch=" << (e + 1) << " train_loss=" << rec.train_loss << " val_loss=" << rec.val_loss
        << " val_acc_masked=" << rec.val_token_accuracy_masked
        << " val_acc_unmasked=" << rec.val_token_accuracy_unmasked
        << " seconds=" << std::setprecision(3) << rec.seconds << std::setprecision(6) << "\n";
  }
  out << "stopped_early=" << (h.stopped_early ? "true" : "false")
      << " best_epoch=" << (h.best_epoch + 1) << "\n";
  return out.str();
}

struct EarlyStopDecision {
  bool stop = false;
  int32_t best_epoch = -1;  // argmin of the recorded losses (first occurrence)
};

// Stop once the loss has gone `patience` consecutive epochs without
// improving by more than min_delta over the best value seen so far.
inline EarlyStopDecision early_stop_check(const std::vector<double>& val_losses, int32_t patience,
                                          double min_delta = 0.0) {
  if (val_losses.empty()) throw std::invalid_argument("early_stop_check: empty history");
  EarlyStopDecision d;
  double best_tracked = val_losses[0];  // improvement tracking honors min_delta
  int32_t since_improvement = 0;
  double min_loss = val_losses[0];
  d.best_epoch = 0;
  for (size_t e = 1; e < val_losses.size(); ++e) {
    if (val_losses[e] < best_tracked - min_delta) {
      best_tracked = val_losses[e];
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (val_losses[e] < min_loss) {
      min_loss = val_losses[e];
      d.best_epoch = static_cast<int32_t>(e);
    }
  }
  d.stop = since_improvement > patience;
  return d;
}

struct TrainResult {
  ModelBundle<double> bundle;
  TrainHistory history;
};

namespace train_detail {

inline constexpr uint64_t kInitStream = 0x494e4954;     // "INIT"
inline constexpr uint64_t kCarveStream = 0x43565253;     // validation carve
inline constexpr uint64_t kShuffleStream = 0x53485546;   // epoch shuffles
inline constexpr uint64_t kDropoutStream = 0x44524f50;   // dropout masks

struct EvalNumbers {
  double loss = 0;
  double acc_masked = 0;
  double acc_unmasked = 0;
};

template <typename T>
EvalNumbers evaluate_rows(const ModelParams<T>& params,
                          const std::vector<const EncodedRow*>& rows, bool mask_padding) {
  ForwardResult<T> res = forward(params, rows, RunMode::kInfer, nullptr);
  std::vector<Mat<T>> targets;
  std::vector<int32_t> lens;
  std::vector<std::vector<int32_t>> gold_ids, pred_ids;
  targets.reserve(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    targets.push_back(one_hot_labels<T>(*rows[r]));
    lens.push_back(rows[r]->true_len);
    gold_ids.push_back(rows[r]->tag_ids);
    std::vector<int32_t> pred(rows[r]->tag_ids.size());
    const Mat<T>& probs = res.probs[r];
    for (int64_t t = 0; t < probs.rows; ++t) {
      int best = 0;
      for (int64_t j = 1; j < probs.cols; ++j)
        if (probs(t, j) > probs(t, best)) best = static_cast<int>(j);
      pred[static_cast<size_t>(t)] = best;
    }
    pred_ids.push_back(std::move(pred));
  }
  EvalNumbers out;
  out.loss = batch_loss(res.probs, targets, lens, mask_padding);
  out.acc_masked = token_accuracy(gold_ids, pred_ids, lens, true);
  out.acc_unmasked = token_accuracy(gold_ids, pred_ids, lens, false);
  return out;
}

}  // namespace train_detail

// Trains on `corpus` (carving the fit-time validation share off its tail
// after a seeded shuffle) and returns the parameters from the epoch with the
// minimal validation loss plus the per-epoch history.
inline TrainResult train(const ModelConfig& model_cfg_in, const TrainConfig& train_cfg,
                         const Corpus& corpus) {
  train_cfg.validate();
  if (corpus.empty()) throw EmptyCorpusError("train: empty corpus");

  ModelConfig model_cfg = model_cfg_in;
  Vocabulary vocab = Vocabulary::build(corpus);
  model_cfg.num_words = vocab.size();
  model_cfg.validate();

  EncodedBatch encoded = encode_corpus(corpus, vocab, model_cfg.max_len);

  // Seeded carve: validation takes the tail of the shuffled order.
  std::vector<size_t> order(encoded.rows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng carve_rng = Rng(train_cfg.seed).substream(train_detail::kCarveStream);
  carve_rng.shuffle(order);
  const auto n_val = static_cast<size_t>(
      std::llround(static_cast<double>(order.size()) * train_cfg.validation_split));
  if (order.size() - n_val < 1)
    throw std::invalid_argument("train: corpus of " + std::to_string(order.size()) +
                                " sentences leaves no training data after a validation split of " +
                                std::to_string(train_cfg.validation_split) +
                                "; need at least " +
                                std::to_string(n_val + 1) + " sentences");
  std::vector<size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<const EncodedRow*> val_rows;
  for (size_t i = order.size() - n_val; i < order.size(); ++i)
    val_rows.push_back(&encoded.rows[order[i]]);
  const bool have_val = !val_rows.empty();

  Rng init_rng = Rng(model_cfg.seed).substream(train_detail::kInitStream);
  ModelParams<double> params = ModelParams<double>::init(model_cfg, init_rng);

  std::vector<AdamState<double>> opt;
  for (Mat<double>* t : params.tensors())
    opt.push_back(AdamState<double>::for_param(*t, train_cfg.learning_rate));

  Rng shuffle_rng = Rng(train_cfg.seed).substream(train_detail::kShuffleStream);
  Rng dropout_rng = Rng(train_cfg.seed).substream(train_detail::kDropoutStream);

  TrainHistory history;
  std::vector<double> val_losses;
  double best_val = std::numeric_limits<double>::infinity();
  ModelParams<double> best_params = params;
  int32_t best_epoch = -1;

  for (int32_t epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(train_idx);

    double loss_sum = 0;
    int64_t position_sum = 0;
    for (size_t begin = 0; begin < train_idx.size();
         begin += static_cast<size_t>(train_cfg.batch_size)) {
      const size_t end =
          std::min(train_idx.size(), begin + static_cast<size_t>(train_cfg.batch_size));
      std::vector<const EncodedRow*> rows;
      std::vector<Mat<double>> targets;
      std::vector<int32_t> lens;
      for (size_t i = begin; i < end; ++i) {
        const EncodedRow& row = encoded.rows[train_idx[i]];
        rows.push_back(&row);
        targets.push_back(one_hot_labels<double>(row));
        lens.push_back(row.true_len);
      }
      ForwardResult<double> res = forward(params, rows, RunMode::kTrain, &dropout_rng);
      const double loss = batch_loss(res.probs, targets, lens, train_cfg.mask_padding);
      ModelParams<double> grads =
          backward(params, res.cache, targets, lens, train_cfg.mask_padding);

      auto grad_tensors = grads.tensors();
      clip_global_norm(grad_tensors, train_cfg.clip_norm);
      auto param_tensors = params.tensors();
      for (size_t t = 0; t < param_tensors.size(); ++t)
        adam_step(*param_tensors[t], *grad_tensors[t], opt[t]);

      int64_t positions = 0;
      for (size_t i = 0; i < rows.size(); ++i)
        positions += train_cfg.mask_padding ? lens[i] : model_cfg.max_len;
      loss_sum += loss * static_cast<double>(positions);
      position_sum += positions;
      history.gradient_sentences += static_cast<int64_t>(rows.size());
    }

    EpochRecord rec;
    rec.train_loss = position_sum > 0 ? loss_sum / static_cast<double>(position_sum) : 0;
    if (have_val) {
      const auto v = train_detail::evaluate_rows(params, val_rows, train_cfg.mask_padding);
      rec.val_loss = v.loss;
      rec.val_token_accuracy_masked = v.acc_masked;
      rec.val_token_accuracy_unmasked = v.acc_unmasked;
      val_losses.push_back(v.loss);
      if (v.loss < best_val) {
        best_val = v.loss;
        best_params = params;
        best_epoch = epoch;
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);

    if (have_val && train_cfg.early_stopping) {
      const auto decision =
          early_stop_check(val_losses, train_cfg.patience, train_cfg.min_delta);
      if (decision.stop) {
        history.stopped_early = true;
        break;
      }
    }
  }

  TrainResult result;
  result.history = history;
  result.history.best_epoch =
      best_epoch >= 0 ? best_epoch : static_cast<int32_t>(history.epochs.size()) - 1;
  result.bundle.config = model_cfg;
  result.bundle.vocab = std::move(vocab);
  result.bundle.params = best_epoch >= 0 ? std::move(best_params) : std::move(params);
  return result;
}

// Entity- and token-level metrics of a bundle against a gold corpus.
inline MetricsReport evaluate_model(const ModelBundle<double>& bundle, const Corpus& corpus,
                                    MatchMode mode = MatchMode::kStrict,
                                    const std::string& model_name = "model") {
  if (corpus.empty()) throw EmptyCorpusError("evaluate_model: empty corpus");
  std::vector<std::vector<std::string>> gold_tags, pred_tags;
  std::vector<std::vector<int32_t>> gold_ids, pred_ids;
  std::vector<int32_t> lens;
  for (const auto& sentence : corpus.sentences) {
    const auto pairs = predict_tags(bundle.params, sentence, bundle.vocab);
    std::vector<std::string> pred;
    pred.reserve(sentence.size());
    for (const auto& [token, tag] : pairs) pred.push_back(tag);
    // Tokens past max_len cannot be scored; treat them as O.
    while (pred.size() < sentence.size()) pred.push_back(TagSet::name_of(TagSet::kOutside));
    std::vector<int32_t> gid, pid;
    for (size_t t = 0; t < sentence.size(); ++t) {
      gid.push_back(TagSet::id_of(sentence.tags[t]));
      pid.push_back(TagSet::id_of(pred[t]));
    }
    gold_tags.push_back(sentence.tags);
    pred_tags.push_back(std::move(pred));
    gold_ids.push_back(std::move(gid));
    pred_ids.push_back(std::move(pid));
    lens.push_back(static_cast<int32_t>(sentence.size()));
  }
  MetricsReport report = entity_prf_tags(gold_tags, pred_tags, mode);
  report.model = model_name;
  // Evaluation always runs on real tokens, so masked == unmasked here.
  report.token_accuracy_masked = token_accuracy(gold_ids, pred_ids, lens, true);
  report.token_accuracy_unmasked = report.token_accuracy_masked;
  return report;
}

struct CvResult {
  std::vector<MetricsReport> folds;
  double mean_precision = 0, mean_recall = 0, mean_f1 = 0;
  double std_f1 = 0;  // sample standard deviation over folds
  double mean_token_accuracy = 0;
};

// Trains one model per fold (independent seeds derived from the base seed)
// and evaluates on the held-out fold. jobs > 1 runs folds on worker threads;
// results are aggregated in fold order either way.
inline CvResult cross_validate(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                               const Corpus& corpus, int k, int jobs = 1) {
  if (k < 2) throw std::invalid_argument("cross_validate: k must be >= 2");
  const std::vector<Fold> folds = kfold(corpus, k, train_cfg.seed);
  CvResult result;
  result.folds.resize(folds.size());

  auto run_fold = [&](size_t f) {
    ModelConfig mc = model_cfg;
    mc.seed = Rng(model_cfg.seed).substream(f + 1).seed();
    TrainConfig tc = train_cfg;
    tc.seed = Rng(train_cfg.seed).substream(f + 1).seed();
    TrainResult tr = train(mc, tc, folds[f].train);
    result.folds[f] =
        evaluate_model(tr.bundle, folds[f].validation, MatchMode::kStrict,
                       "fold-" + std::to_string(f + 1));
  };

  if (jobs <= 1) {
    for (size_t f = 0; f < folds.size(); ++f) run_fold(f);
  } else {
    std::vector<std::thread> workers;
    std::atomic<size_t> next{0};
    const size_t n_workers = std::min<size_t>(static_cast<size_t>(jobs), folds.size());
    for (size_t w = 0; w < n_workers; ++w)
      workers.emplace_back([&] {
        for (size_t f = next.fetch_add(1); f < folds.size(); f = next.fetch_add(1)) run_fold(f);
      });
    for (auto& w : workers) w.join();
  }

  const auto n = static_cast<double>(result.folds.size());
  for (const auto& r : result.folds) {
    result.mean_precision += r.precision() / n;
    result.mean_recall += r.recall() / n;
    result.mean_f1 += r.f1() / n;
    result.mean_token_accuracy += r.token_accuracy_masked / n;
  }
  double sq = 0;
  for (const auto& r : result.folds) sq += (r.f1() - result.mean_f1) * (r.f1() - result.mean_f1);
  result.std_f1 = result.folds.size() > 1 ? std::sqrt(sq / (n - 1)) : 0.0;
  return result;
}

}  // namespace matner
