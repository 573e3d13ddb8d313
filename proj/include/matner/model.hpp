#pragma once
// The five-layer tagger: embedding -> spatial dropout -> bidirectional LSTM
// -> time-distributed dense softmax. Forward pass, exact hand-derived
// backpropagation through time, and greedy per-token decoding.
//
// Conventions: rows are timesteps, row-vector activations. Gate order is
// input, forget, cell candidate, output. Both dropouts use inverted scaling
// (survivors divided by the keep probability at train time), so inference
// never rescales.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "matner/corpus.hpp"
#include "matner/matrix.hpp"
#include "matner/optim.hpp"
#include "matner/rng.hpp"

namespace matner {

struct ModelConfig {
  int32_t max_len = 90;
  int32_t embedding_dim = 0;  // 0 -> follows max_len
  int32_t lstm_units = 200;
  double spatial_dropout = 0.2;
  double recurrent_dropout = 0.2;
  int32_t num_words = 0;  // set from the vocabulary before init
  int32_t num_tags = TagSet::kNumTags;
  uint64_t seed = 1;

  int32_t effective_embedding_dim() const { return embedding_dim > 0 ? embedding_dim : max_len; }

  void validate() const {
    if (max_len < 1 || lstm_units < 1 || num_words < 1 || num_tags < 1)
      throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
    if (spatial_dropout < 0 || spatial_dropout >= 1 || recurrent_dropout < 0 ||
        recurrent_dropout >= 1)
      throw std::invalid_argument("ModelConfig: dropout probabilities must be in [0,1)");
  }
};

enum class RunMode { kTrain, kInfer };

inline constexpr int kGateInput = 0;
inline constexpr int kGateForget = 1;
inline constexpr int kGateCell = 2;
inline constexpr int kGateOutput = 3;
inline constexpr int kNumGates = 4;

template <typename T = double>
struct LstmRecMasks {
  // One 1 x units mask per gate, fixed across the timesteps of a sequence.
  std::array<Mat<T>, kNumGates> gate;

  static LstmRecMasks ones(int64_t units) {
    LstmRecMasks m;
    for (auto& g : m.gate) g = Mat<T>(1, units, T(1));
    return m;
  }
  static LstmRecMasks sample(int64_t units, double p, Rng& rng) {
    LstmRecMasks m;
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (auto& g : m.gate) {
      g = Mat<T>(1, units);
      for (int64_t j = 0; j < units; ++j) g(0, j) = rng.bernoulli(p) ? T(0) : scale;
    }
    return m;
  }
};

template <typename T = double>
struct LstmDirectionParams {
  std::array<Mat<T>, kNumGates> w;  // input weights, d x u
  std::array<Mat<T>, kNumGates> u;  // recurrent weights, u x u
  std::array<Mat<T>, kNumGates> b;  // biases, 1 x u
};

template <typename T = double>
struct ModelParams {
  ModelConfig config;
  Mat<T> embedding;  // num_words x d; PAD row trainable, starts at zero
  LstmDirectionParams<T> fwd;
  LstmDirectionParams<T> bwd;
  Mat<T> dense_w;  // 2u x num_tags
  Mat<T> dense_b;  // 1 x num_tags

  // Fixed tensor order; serialization, Adam states and gradient sweeps all
  // rely on it: embedding, fwd w[4] u[4] b[4], bwd w[4] u[4] b[4], dense_w,
  // dense_b.
  std::vector<Mat<T>*> tensors() {
    std::vector<Mat<T>*> out;
    out.push_back(&embedding);
    for (auto* dir : {&fwd, &bwd}) {
      for (auto& m : dir->w) out.push_back(&m);
      for (auto& m : dir->u) out.push_back(&m);
      for (auto& m : dir->b) out.push_back(&m);
    }
    out.push_back(&dense_w);
    out.push_back(&dense_b);
    return out;
  }
  std::vector<const Mat<T>*> tensors() const {
    auto mut = const_cast<ModelParams*>(this)->tensors();
    return {mut.begin(), mut.end()};
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const Mat<T>* t : tensors()) n += static_cast<int64_t>(t->size());
    return n;
  }

  static ModelParams zeros(const ModelConfig& cfg) {
    cfg.validate();
    const int64_t d = cfg.effective_embedding_dim();
    const int64_t u = cfg.lstm_units;
    ModelParams z;
    z.config = cfg;
    z.embedding = Mat<T>(cfg.num_words, d);
    for (auto* dir : {&z.fwd, &z.bwd}) {
      for (int g = 0; g < kNumGates; ++g) {
        dir->w[g] = Mat<T>(d, u);
        dir->u[g] = Mat<T>(u, u);
        dir->b[g] = Mat<T>(1, u);
      }
    }
    z.dense_w = Mat<T>(2 * u, cfg.num_tags);
    z.dense_b = Mat<T>(1, cfg.num_tags);
    return z;
  }

  static ModelParams zeros_like(const ModelParams& o) {
    ModelParams z;
    z.config = o.config;
    z.embedding = Mat<T>(o.embedding.rows, o.embedding.cols);
    for (auto [dst, src] : {std::pair{&z.fwd, &o.fwd}, std::pair{&z.bwd, &o.bwd}}) {
      for (int g = 0; g < kNumGates; ++g) {
        dst->w[g] = Mat<T>(src->w[g].rows, src->w[g].cols);
        dst->u[g] = Mat<T>(src->u[g].rows, src->u[g].cols);
        dst->b[g] = Mat<T>(src->b[g].rows, src->b[g].cols);
      }
    }
    z.dense_w = Mat<T>(o.dense_w.rows, o.dense_w.cols);
    z.dense_b = Mat<T>(o.dense_b.rows, o.dense_b.cols);
    return z;
  }

  // Glorot-uniform weights, zero biases except the forget gate at 1, zeroed
  // PAD embedding row. Draw order matches the tensor order.
  static ModelParams init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const int64_t d = cfg.effective_embedding_dim();
    const int64_t u = cfg.lstm_units;
    ModelParams p;
    p.config = cfg;
    p.embedding = glorot_uniform_init<T>(rng, cfg.num_words, d);
    for (int64_t j = 0; j < d; ++j) p.embedding(Vocabulary::kPadId, j) = T(0);
    for (auto* dir : {&p.fwd, &p.bwd}) {
      for (int g = 0; g < kNumGates; ++g) dir->w[g] = glorot_uniform_init<T>(rng, d, u);
      for (int g = 0; g < kNumGates; ++g) dir->u[g] = glorot_uniform_init<T>(rng, u, u);
      for (int g = 0; g < kNumGates; ++g)
        dir->b[g] = Mat<T>(1, u, g == kGateForget ? T(1) : T(0));
    }
    p.dense_w = glorot_uniform_init<T>(rng, 2 * u, cfg.num_tags);
    p.dense_b = Mat<T>(1, cfg.num_tags);
    return p;
  }
};

// ---------------------------------------------------------------------------
// Layer operations

// Row lookup; every id must be < num_words.
template <typename T>
Mat<T> embed(const ModelParams<T>& params, const std::vector<int32_t>& word_ids) {
  const int64_t d = params.embedding.cols;
  Mat<T> out(static_cast<int64_t>(word_ids.size()), d);
  for (size_t t = 0; t < word_ids.size(); ++t) {
    const int32_t id = word_ids[t];
    if (id < 0 || id >= params.embedding.rows)
      throw std::out_of_range("embed: word id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(params.embedding.rows));
    const T* src = params.embedding.row(id);
    T* dst = out.row(static_cast<int64_t>(t));
    for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
  }
  return out;
}

// Zeroes whole embedding channels across all timesteps (train mode), scaling
// survivors by 1/(1-p). Inference is the identity. mask_out (optional)
// receives the applied 1 x d mask.
template <typename T>
Mat<T> spatial_dropout(const Mat<T>& embedded, double p, RunMode mode, Rng* rng,
                       Mat<T>* mask_out = nullptr) {
  if (p < 0 || p >= 1) throw std::invalid_argument("spatial_dropout: p must be in [0,1)");
  Mat<T> mask(1, embedded.cols, T(1));
  if (mode == RunMode::kTrain && p > 0) {
    if (!rng) throw std::invalid_argument("spatial_dropout: train mode needs an rng");
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (int64_t j = 0; j < embedded.cols; ++j)
      mask(0, j) = rng->bernoulli(p) ? T(0) : scale;
  }
  Mat<T> out(embedded.rows, embedded.cols);
  for (int64_t t = 0; t < embedded.rows; ++t) {
    const T* src = embedded.row(t);
    T* dst = out.row(t);
    for (int64_t j = 0; j < embedded.cols; ++j) dst[j] = src[j] * mask(0, j);
  }
  if (mask_out) *mask_out = std::move(mask);
  return out;
}

template <typename T = double>
struct LstmStep {
  Mat<T> h, c;                           // 1 x u
  std::array<Mat<T>, kNumGates> gates;   // activated i, f, g, o (1 x u)
};

namespace model_detail {

// One recurrence step. xproj rows already hold x_t * W_g + b_g.
template <typename T>
inline void lstm_step_core(const LstmDirectionParams<T>& p,
                           const std::array<const T*, kNumGates>& xproj_rows, const T* h_prev,
                           const T* c_prev, const LstmRecMasks<T>& masks, T* h_out, T* c_out,
                           std::array<T*, kNumGates> gate_out, int64_t units) {
  // a_g = xproj_g + (h_prev . mask_g) U_g ; i,f,o = sigmoid, candidate = tanh
  std::vector<T> dropped(static_cast<size_t>(units));
  for (int g = 0; g < kNumGates; ++g) {
    T* a = gate_out[g];
    for (int64_t j = 0; j < units; ++j) a[j] = xproj_rows[g][j];
    const T* mask = masks.gate[g].row(0);
    for (int64_t j = 0; j < units; ++j) dropped[static_cast<size_t>(j)] = h_prev[j] * mask[j];
    const Mat<T>& U = p.u[g];
    for (int64_t k = 0; k < units; ++k) {
      const T hk = dropped[static_cast<size_t>(k)];
      if (hk == T(0)) continue;
      const T* urow = U.row(k);
      for (int64_t j = 0; j < units; ++j) a[j] += hk * urow[j];
    }
  }
  for (int64_t j = 0; j < units; ++j) {
    const T i = sigmoid_scalar(gate_out[kGateInput][j]);
    const T f = sigmoid_scalar(gate_out[kGateForget][j]);
    const T g = std::tanh(gate_out[kGateCell][j]);
    const T o = sigmoid_scalar(gate_out[kGateOutput][j]);
    gate_out[kGateInput][j] = i;
    gate_out[kGateForget][j] = f;
    gate_out[kGateCell][j] = g;
    gate_out[kGateOutput][j] = o;
    const T c = f * c_prev[j] + i * g;
    c_out[j] = c;
    h_out[j] = o * std::tanh(c);
  }
}

}  // namespace model_detail

// Single exposed cell step (h_prev, c_prev, x_t as 1 x *). The sequence pass
// below goes through the same core.
template <typename T>
LstmStep<T> lstm_cell_step(const LstmDirectionParams<T>& params, const Mat<T>& x_t,
                           const Mat<T>& h_prev, const Mat<T>& c_prev,
                           const LstmRecMasks<T>& masks) {
  const int64_t units = params.u[0].rows;
  if (x_t.rows != 1 || h_prev.rows != 1 || c_prev.rows != 1 || h_prev.cols != units ||
      c_prev.cols != units || x_t.cols != params.w[0].rows)
    throw DimensionError("lstm_cell_step: shapes x=" + x_t.shape() + " h=" + h_prev.shape() +
                         " c=" + c_prev.shape() + " do not match parameters");
  std::array<Mat<T>, kNumGates> xproj;
  for (int g = 0; g < kNumGates; ++g) {
    xproj[g] = matmul(x_t, params.w[g]);
    add_inplace(xproj[g], params.b[g]);
  }
  LstmStep<T> step;
  step.h = Mat<T>(1, units);
  step.c = Mat<T>(1, units);
  std::array<const T*, kNumGates> xrows;
  std::array<T*, kNumGates> grows;
  for (int g = 0; g < kNumGates; ++g) {
    step.gates[g] = Mat<T>(1, units);
    xrows[g] = xproj[g].row(0);
    grows[g] = step.gates[g].row(0);
  }
  model_detail::lstm_step_core(params, xrows, h_prev.row(0), c_prev.row(0), masks, step.h.row(0),
                               step.c.row(0), grows, units);
  return step;
}

template <typename T = double>
struct DirectionCache {
  std::array<Mat<T>, kNumGates> gates;  // T x u, activated, indexed by absolute timestep
  Mat<T> c, h;                          // T x u
  LstmRecMasks<T> masks;
};

template <typename T = double>
struct BilstmResult {
  Mat<T> concat;  // T x 2u, [h_fwd_t ; h_bwd_t]
  DirectionCache<T> fwd, bwd;
};

namespace model_detail {

template <typename T>
DirectionCache<T> run_direction(const LstmDirectionParams<T>& p, const Mat<T>& x, bool reverse,
                                LstmRecMasks<T> masks) {
  const int64_t steps = x.rows;
  const int64_t units = p.u[0].rows;
  DirectionCache<T> cache;
  cache.masks = std::move(masks);
  cache.c = Mat<T>(steps, units);
  cache.h = Mat<T>(steps, units);

  // Input projections for the whole sequence at once; bias folded in.
  std::array<Mat<T>, kNumGates> xproj;
  for (int g = 0; g < kNumGates; ++g) {
    xproj[g] = matmul(x, p.w[g]);
    for (int64_t t = 0; t < steps; ++t) {
      T* row = xproj[g].row(t);
      const T* b = p.b[g].row(0);
      for (int64_t j = 0; j < units; ++j) row[j] += b[j];
    }
    cache.gates[g] = Mat<T>(steps, units);
  }

  const Mat<T> zero_state(1, units);
  for (int64_t s = 0; s < steps; ++s) {
    const int64_t t = reverse ? steps - 1 - s : s;
    const int64_t t_prev = reverse ? t + 1 : t - 1;
    const T* h_prev = s == 0 ? zero_state.row(0) : cache.h.row(t_prev);
    const T* c_prev = s == 0 ? zero_state.row(0) : cache.c.row(t_prev);
    std::array<const T*, kNumGates> xrows;
    std::array<T*, kNumGates> grows;
    for (int g = 0; g < kNumGates; ++g) {
      xrows[g] = xproj[g].row(t);
      grows[g] = cache.gates[g].row(t);
    }
    lstm_step_core(p, xrows, h_prev, c_prev, cache.masks, cache.h.row(t), cache.c.row(t), grows,
                   units);
  }
  return cache;
}

}  // namespace model_detail

// Forward direction walks t = 0..T-1, backward direction T-1..0 over the
// same inputs; outputs are concatenated per timestep. Initial states are
// zero. Recurrent-dropout masks are sampled here (train mode, p > 0),
// forward direction first.
template <typename T>
BilstmResult<T> bilstm_forward(const LstmDirectionParams<T>& fwd_params,
                               const LstmDirectionParams<T>& bwd_params, const Mat<T>& x,
                               double recurrent_p, RunMode mode, Rng* rng) {
  const int64_t units = fwd_params.u[0].rows;
  const bool sample = mode == RunMode::kTrain && recurrent_p > 0;
  if (sample && !rng) throw std::invalid_argument("bilstm_forward: train mode needs an rng");
  auto fwd_masks =
      sample ? LstmRecMasks<T>::sample(units, recurrent_p, *rng) : LstmRecMasks<T>::ones(units);
  auto bwd_masks =
      sample ? LstmRecMasks<T>::sample(units, recurrent_p, *rng) : LstmRecMasks<T>::ones(units);

  BilstmResult<T> out;
  out.fwd = model_detail::run_direction(fwd_params, x, false, std::move(fwd_masks));
  out.bwd = model_detail::run_direction(bwd_params, x, true, std::move(bwd_masks));
  out.concat = Mat<T>(x.rows, 2 * units);
  for (int64_t t = 0; t < x.rows; ++t) {
    T* dst = out.concat.row(t);
    const T* hf = out.fwd.h.row(t);
    const T* hb = out.bwd.h.row(t);
    for (int64_t j = 0; j < units; ++j) dst[j] = hf[j];
    for (int64_t j = 0; j < units; ++j) dst[units + j] = hb[j];
  }
  return out;
}

// Same affine map at every timestep, then a per-timestep softmax.
template <typename T>
Mat<T> dense_softmax(const Mat<T>& dense_w, const Mat<T>& dense_b, const Mat<T>& hidden) {
  Mat<T> logits = matmul(hidden, dense_w);
  for (int64_t t = 0; t < logits.rows; ++t) {
    T* row = logits.row(t);
    const T* b = dense_b.row(0);
    for (int64_t j = 0; j < logits.cols; ++j) row[j] += b[j];
  }
  softmax_rows_inplace(logits);
  return logits;
}

// ---------------------------------------------------------------------------
// Full forward / backward over a batch of encoded rows

template <typename T = double>
struct SentenceCache {
  std::vector<int32_t> word_ids;
  Mat<T> spatial_mask;  // 1 x d
  Mat<T> dropped;       // T x d, LSTM input
  DirectionCache<T> fwd, bwd;
  Mat<T> concat;  // T x 2u
  Mat<T> probs;   // T x num_tags
};

template <typename T = double>
struct ForwardCache {
  RunMode mode = RunMode::kInfer;
  std::vector<SentenceCache<T>> rows;
};

template <typename T = double>
struct ForwardResult {
  std::vector<Mat<T>> probs;  // per row, max_len x num_tags
  ForwardCache<T> cache;      // populated in train mode only
};

// Per row the rng draw order is: spatial mask, forward-direction masks,
// backward-direction masks. Inference consumes no draws.
template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const std::vector<const EncodedRow*>& rows,
                         RunMode mode, Rng* rng) {
  ForwardResult<T> result;
  result.cache.mode = mode;
  result.probs.reserve(rows.size());
  const bool keep_cache = mode == RunMode::kTrain;
  if (keep_cache) result.cache.rows.reserve(rows.size());

  for (const EncodedRow* row : rows) {
    Mat<T> embedded = embed(params, row->word_ids);
    Mat<T> mask;
    Mat<T> dropped = spatial_dropout(embedded, params.config.spatial_dropout, mode, rng, &mask);
    BilstmResult<T> bi =
        bilstm_forward(params.fwd, params.bwd, dropped, params.config.recurrent_dropout, mode, rng);
    Mat<T> probs = dense_softmax(params.dense_w, params.dense_b, bi.concat);
    if (keep_cache) {
      SentenceCache<T> sc;
      sc.word_ids = row->word_ids;
      sc.spatial_mask = std::move(mask);
      sc.dropped = std::move(dropped);
      sc.fwd = std::move(bi.fwd);
      sc.bwd = std::move(bi.bwd);
      sc.concat = std::move(bi.concat);
      sc.probs = probs;
      result.cache.rows.push_back(std::move(sc));
    }
    result.probs.push_back(std::move(probs));
  }
  return result;
}

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const EncodedBatch& batch, RunMode mode,
                         Rng* rng) {
  std::vector<const EncodedRow*> rows;
  rows.reserve(batch.rows.size());
  for (const auto& r : batch.rows) rows.push_back(&r);
  return forward(params, rows, mode, rng);
}

// Batch loss matching the gradient convention below: sum of -ln(p_true) over
// included positions divided by the number of included positions.
template <typename T>
T batch_loss(const std::vector<Mat<T>>& probs, const std::vector<Mat<T>>& targets_one_hot,
             const std::vector<int32_t>& true_lens, bool mask_padding) {
  if (probs.size() != targets_one_hot.size() || probs.size() != true_lens.size())
    throw DimensionError("batch_loss: row count mismatch");
  T total = 0;
  int64_t n = 0;
  for (size_t r = 0; r < probs.size(); ++r) {
    const Mat<T>& p = probs[r];
    const Mat<T>& y = targets_one_hot[r];
    detail::require_same_shape(p, y, "batch_loss");
    const int64_t limit = mask_padding ? true_lens[r] : p.rows;
    for (int64_t t = 0; t < limit; ++t) {
      const int64_t hot = detail::one_hot_index(y, t);
      if (hot < 0)
        throw std::invalid_argument("batch_loss: target row is not one-hot");
      total += -std::log(std::clamp(p(t, hot), static_cast<T>(kProbClamp), T(1)));
      ++n;
    }
  }
  return n > 0 ? total / static_cast<T>(n) : T(0);
}

namespace model_detail {

// BPTT through one direction. dh_ext is this direction's half of the dense
// gradient (T x u). Returns d(input) and accumulates parameter gradients.
template <typename T>
Mat<T> direction_backward(const LstmDirectionParams<T>& p, const DirectionCache<T>& cache,
                          const Mat<T>& x, const Mat<T>& dh_ext, bool reverse,
                          LstmDirectionParams<T>& grads) {
  const int64_t steps = x.rows;
  const int64_t units = p.u[0].rows;

  std::array<Mat<T>, kNumGates> da;  // pre-activation gradients per timestep
  for (auto& m : da) m = Mat<T>(steps, units);

  std::vector<T> dh_carry(static_cast<size_t>(units), T(0));
  std::vector<T> dc_carry(static_cast<size_t>(units), T(0));
  std::vector<T> dh(static_cast<size_t>(units));
  std::vector<T> dc(static_cast<size_t>(units));

  for (int64_t s = steps - 1; s >= 0; --s) {
    const int64_t t = reverse ? steps - 1 - s : s;
    const int64_t t_prev = reverse ? t + 1 : t - 1;
    const T* i_t = cache.gates[kGateInput].row(t);
    const T* f_t = cache.gates[kGateForget].row(t);
    const T* g_t = cache.gates[kGateCell].row(t);
    const T* o_t = cache.gates[kGateOutput].row(t);
    const T* c_t = cache.c.row(t);
    const T* c_prev = s == 0 ? nullptr : cache.c.row(t_prev);
    const T* ext = dh_ext.row(t);

    T* da_i = da[kGateInput].row(t);
    T* da_f = da[kGateForget].row(t);
    T* da_g = da[kGateCell].row(t);
    T* da_o = da[kGateOutput].row(t);

    for (int64_t j = 0; j < units; ++j) {
      const T tc = std::tanh(c_t[j]);
      const T dh_j = ext[j] + dh_carry[static_cast<size_t>(j)];
      // h = o * tanh(c): split into the output gate and the cell path
      da_o[j] = dh_j * tc * o_t[j] * (T(1) - o_t[j]);
      const T dc_j = dh_j * o_t[j] * (T(1) - tc * tc) + dc_carry[static_cast<size_t>(j)];
      const T cp = c_prev ? c_prev[j] : T(0);
      da_f[j] = dc_j * cp * f_t[j] * (T(1) - f_t[j]);
      da_i[j] = dc_j * g_t[j] * i_t[j] * (T(1) - i_t[j]);
      da_g[j] = dc_j * i_t[j] * (T(1) - g_t[j] * g_t[j]);
      dc_carry[static_cast<size_t>(j)] = dc_j * f_t[j];
      dh[static_cast<size_t>(j)] = 0;
    }

    // dh_prev = sum_g (da_g U_g^T) . mask_g
    for (int g = 0; g < kNumGates; ++g) {
      const T* dag = da[g].row(t);
      const Mat<T>& U = p.u[g];
      const T* mask = cache.masks.gate[g].row(0);
      for (int64_t k = 0; k < units; ++k) {
        const T* urow = U.row(k);
        T acc = 0;
        for (int64_t j = 0; j < units; ++j) acc += dag[j] * urow[j];
        dh[static_cast<size_t>(k)] += acc * mask[k];
      }
    }
    dh_carry = dh;
  }

  // Weight gradients batched over timesteps.
  // dW_g += x^T da_g ; dU_g += (h_prev . mask_g)^T da_g ; db_g += column sums
  Mat<T> h_prev_rows(steps, units);
  for (int64_t s = 1; s < steps; ++s) {
    const int64_t t = reverse ? steps - 1 - s : s;
    const int64_t t_prev = reverse ? t + 1 : t - 1;
    const T* src = cache.h.row(t_prev);
    T* dst = h_prev_rows.row(t);
    for (int64_t j = 0; j < units; ++j) dst[j] = src[j];
  }

  for (int g = 0; g < kNumGates; ++g) {
    matmul_at_b_acc(grads.w[g], x, da[g]);
    Mat<T> h_masked = h_prev_rows;
    const T* mask = cache.masks.gate[g].row(0);
    for (int64_t t = 0; t < steps; ++t) {
      T* row = h_masked.row(t);
      for (int64_t j = 0; j < units; ++j) row[j] *= mask[j];
    }
    matmul_at_b_acc(grads.u[g], h_masked, da[g]);
    T* db = grads.b[g].row(0);
    for (int64_t t = 0; t < steps; ++t) {
      const T* row = da[g].row(t);
      for (int64_t j = 0; j < units; ++j) db[j] += row[j];
    }
  }

  // dx = sum_g da_g W_g^T
  Mat<T> dx(steps, x.cols);
  for (int g = 0; g < kNumGates; ++g) {
    Mat<T> part = matmul_a_bt(da[g], p.w[g]);
    add_inplace(dx, part);
  }
  return dx;
}

}  // namespace model_detail

// Exact gradients of batch_loss with respect to every parameter. The cache
// must come from a train-mode forward on the same rows; dropout masks are
// reused, never resampled.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ForwardCache<T>& cache,
                        const std::vector<Mat<T>>& targets_one_hot,
                        const std::vector<int32_t>& true_lens, bool mask_padding) {
  if (cache.mode != RunMode::kTrain)
    throw std::invalid_argument("backward: cache was not built in train mode");
  if (cache.rows.size() != targets_one_hot.size() || cache.rows.size() != true_lens.size())
    throw DimensionError("backward: cache has " + std::to_string(cache.rows.size()) +
                         " rows, targets " + std::to_string(targets_one_hot.size()));

  const int64_t units = params.config.lstm_units;
  ModelParams<T> grads = ModelParams<T>::zeros_like(params);

  // Count included positions first; the loss is their mean.
  int64_t n_included = 0;
  for (size_t r = 0; r < cache.rows.size(); ++r) {
    const auto& sc = cache.rows[r];
    detail::require_same_shape(sc.probs, targets_one_hot[r], "backward");
    for (int64_t t = 0; t < sc.probs.rows; ++t)
      if (detail::one_hot_index(targets_one_hot[r], t) < 0)
        throw std::invalid_argument("backward: target row is not one-hot");
    n_included += mask_padding ? true_lens[r] : sc.probs.rows;
  }
  if (n_included == 0) return grads;
  const T inv_n = T(1) / static_cast<T>(n_included);

  for (size_t r = 0; r < cache.rows.size(); ++r) {
    const SentenceCache<T>& sc = cache.rows[r];
    const Mat<T>& y = targets_one_hot[r];
    const int64_t steps = sc.probs.rows;
    const int64_t limit = mask_padding ? true_lens[r] : steps;

    // Softmax + cross-entropy collapse to (p - y) / N on included rows.
    Mat<T> dz(steps, sc.probs.cols);
    for (int64_t t = 0; t < limit; ++t) {
      const T* p = sc.probs.row(t);
      const T* yt = y.row(t);
      T* d = dz.row(t);
      for (int64_t j = 0; j < sc.probs.cols; ++j) d[j] = (p[j] - yt[j]) * inv_n;
    }

    matmul_at_b_acc(grads.dense_w, sc.concat, dz);
    {
      T* db = grads.dense_b.row(0);
      for (int64_t t = 0; t < steps; ++t) {
        const T* row = dz.row(t);
        for (int64_t j = 0; j < dz.cols; ++j) db[j] += row[j];
      }
    }
    Mat<T> dconcat = matmul_a_bt(dz, params.dense_w);

    Mat<T> dh_fwd(steps, units), dh_bwd(steps, units);
    for (int64_t t = 0; t < steps; ++t) {
      const T* src = dconcat.row(t);
      T* f = dh_fwd.row(t);
      T* b = dh_bwd.row(t);
      for (int64_t j = 0; j < units; ++j) f[j] = src[j];
      for (int64_t j = 0; j < units; ++j) b[j] = src[units + j];
    }

    Mat<T> dx =
        model_detail::direction_backward(params.fwd, sc.fwd, sc.dropped, dh_fwd, false, grads.fwd);
    Mat<T> dx_b =
        model_detail::direction_backward(params.bwd, sc.bwd, sc.dropped, dh_bwd, true, grads.bwd);
    add_inplace(dx, dx_b);

    // Back through spatial dropout, then scatter into embedding rows.
    for (int64_t t = 0; t < steps; ++t) {
      const T* d = dx.row(t);
      const T* mask = sc.spatial_mask.row(0);
      T* erow = grads.embedding.row(sc.word_ids[static_cast<size_t>(t)]);
      for (int64_t j = 0; j < dx.cols; ++j) erow[j] += d[j] * mask[j];
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Prediction

// Argmax tag per kept position, ties to the lowest tag id. Tokens beyond
// max_len cannot be scored and are not returned here; callers that need full
// coverage pad with O (the CLI does).
template <typename T>
std::vector<std::pair<std::string, std::string>> predict_tags(const ModelParams<T>& params,
                                                              const Sentence& sentence,
                                                              const Vocabulary& vocab) {
  std::vector<std::pair<std::string, std::string>> out;
  if (sentence.tokens.empty()) return out;
  Sentence input = sentence;
  if (input.tags.size() != input.tokens.size()) input.tags.assign(input.tokens.size(), "O");
  const EncodedRow row = encode_and_pad(input, vocab, params.config.max_len);
  std::vector<const EncodedRow*> rows = {&row};
  ForwardResult<T> res = forward(params, rows, RunMode::kInfer, nullptr);
  const Mat<T>& probs = res.probs[0];
  for (int32_t t = 0; t < row.true_len; ++t) {
    int best = 0;
    for (int j = 1; j < params.config.num_tags; ++j)
      if (probs(t, j) > probs(t, best)) best = j;
    out.emplace_back(sentence.tokens[static_cast<size_t>(t)], TagSet::name_of(best));
  }
  return out;
}

}  // namespace matner
