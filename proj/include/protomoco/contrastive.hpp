#ifndef PROTOMOCO_CONTRASTIVE_HPP
#define PROTOMOCO_CONTRASTIVE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "protomoco/augment.hpp"
#include "protomoco/encoder.hpp"
#include "protomoco/nn.hpp"
#include "protomoco/tape.hpp"

namespace protomoco::contrastive {

/// Two-layer projection head dimensions; the weights live in a ParameterSet
/// under "head.w1" (hidden x input) and "head.w2" (output x hidden).
struct ProjectionHead {
  int input_dim = 0;
  int hidden_dim = 0;
  int output_dim = 0;
};

/// z = W2 * relu(W1 * h), no bias terms.
template <typename Scalar>
Var<Scalar> project(Var<Scalar> h, Var<Scalar> w1, Var<Scalar> w2) {
  return matmul(w2, relu(matmul(w1, h)));
}

/// Cosine similarity of two equal-length vectors, in [-1, 1].
template <typename Scalar>
double cosine_similarity(const Tensor<Scalar>& v, const Tensor<Scalar>& u) {
  if (v.size() != u.size()) {
    throw DimensionError("cosine_similarity: size mismatch " + v.shape_string() + " vs " +
                         u.shape_string());
  }
  double dot = 0, nv = 0, nu = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += static_cast<double>(v[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
  }
  if (nv <= 1e-24 || nu <= 1e-24) {
    throw DegenerateVectorError("cosine_similarity: zero vector");
  }
  return std::clamp(dot / (std::sqrt(nv) * std::sqrt(nu)), -1.0, 1.0);
}

/// Fixed-capacity FIFO of L2-normalized key embeddings: the contrastive
/// dictionary. Inserting past capacity evicts the oldest entries.
template <typename Scalar>
class KeyQueue {
 public:
  explicit KeyQueue(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw ContractError("KeyQueue capacity must be >= 1");
  }

  int capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t insertions() const { return insertions_; }
  const std::deque<Tensor<Scalar>>& entries() const { return entries_; }

  void enqueue(Tensor<Scalar> key) {
    if (key.rank() != 1) key = Tensor<Scalar>({static_cast<int>(key.size())}, key.storage());
    if (!entries_.empty() && key.size() != entries_.front().size()) {
      throw DimensionError("KeyQueue: key " + key.shape_string() + " does not match stored dim " +
                           entries_.front().shape_string());
    }
    double norm_sq = 0;
    for (std::size_t i = 0; i < key.size(); ++i) {
      norm_sq += static_cast<double>(key[i]) * key[i];
    }
    const double norm = std::sqrt(norm_sq);
    if (norm <= 1e-12) {
      throw DegenerateVectorError("KeyQueue: key with zero norm");
    }
    if (std::fabs(norm - 1.0) > 1e-5) {
      const Scalar inv = static_cast<Scalar>(1.0 / norm);
      for (auto& v : key.storage()) v *= inv;
    }
    entries_.push_back(std::move(key));
    ++insertions_;
    while (entries_.size() > static_cast<std::size_t>(capacity_)) entries_.pop_front();
  }

 private:
  int capacity_;
  std::deque<Tensor<Scalar>> entries_;
  std::uint64_t insertions_ = 0;
};

template <typename Scalar>
void enqueue_batch(KeyQueue<Scalar>& queue, const std::vector<Tensor<Scalar>>& keys) {
  for (const auto& k : keys) queue.enqueue(k);
}

namespace detail {

/// log(sum(exp(logits))) with the max subtracted as a plain constant; the
/// subtraction cancels exactly in the loss value and gradient.
template <typename Scalar>
Var<Scalar> logsumexp(Tape<Scalar>& tape, Var<Scalar> logits) {
  const Tensor<Scalar>& v = tape.value(logits.id);
  Scalar m = v[0];
  for (std::size_t i = 1; i < v.size(); ++i) m = std::max(m, v[i]);
  return shift(log(sum(exp(shift(logits, -m)))), m);
}

}  // namespace detail

/// Batch-wise normalized temperature-scaled cross entropy. z holds the 2N
/// projected embeddings of one augmented batch; pair_index is the perfect
/// matching between the two views of each source image. For every ordered
/// anchor i the positive is pair_index[i] and the denominator runs over all
/// 2N-1 other embeddings; the result is the mean over anchors.
template <typename Scalar>
Var<Scalar> nt_xent_loss(Tape<Scalar>& tape, const std::vector<Var<Scalar>>& z,
                         const std::vector<int>& pair_index, double tau) {
  const int n = static_cast<int>(z.size());
  if (n < 2 || n % 2 != 0) {
    throw ContractError("nt_xent_loss: needs an even number (2N) of embeddings");
  }
  if (static_cast<int>(pair_index.size()) != n) {
    throw ContractError("nt_xent_loss: pair_index size does not match embeddings");
  }
  for (int i = 0; i < n; ++i) {
    const int j = pair_index[i];
    if (j < 0 || j >= n || j == i || pair_index[j] != i) {
      throw ContractError("nt_xent_loss: pair_index is not a perfect matching at anchor " +
                          std::to_string(i));
    }
  }
  if (!(tau > 0)) throw ContractError("nt_xent_loss: temperature must be positive");
  const Scalar inv_tau = static_cast<Scalar>(1.0 / tau);

  std::vector<Var<Scalar>> unit;
  unit.reserve(n);
  for (const auto& zi : z) unit.push_back(l2_normalize(zi));

  // Cosine similarities; dot(i, j) is reused for the symmetric pair.
  std::vector<std::vector<Var<Scalar>>> sim(n, std::vector<Var<Scalar>>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      sim[i][j] = sim[j][i] = dot(unit[i], unit[j]);
    }
  }

  std::vector<Var<Scalar>> anchor_losses;
  anchor_losses.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::vector<Var<Scalar>> logits;
    logits.reserve(n - 1);
    for (int k = 0; k < n; ++k) {
      if (k != i) logits.push_back(scale(sim[i][k], inv_tau));
    }
    Var<Scalar> lse = detail::logsumexp(tape, stack_scalars(tape, logits));
    Var<Scalar> positive = scale(sim[i][pair_index[i]], inv_tau);
    anchor_losses.push_back(sub(lse, positive));
  }
  return mean_of(anchor_losses);
}

/// Dictionary-lookup contrastive loss for one query against its positive key
/// and the queued negatives. Keys are plain tensors (detached): gradients
/// reach the query only. An empty queue is legal and yields exactly zero.
template <typename Scalar>
Var<Scalar> info_nce_loss(Var<Scalar> q, const Tensor<Scalar>& k_pos, const KeyQueue<Scalar>& queue,
                          double tau) {
  if (!(tau > 0)) throw ContractError("info_nce_loss: temperature must be positive");
  Tape<Scalar>& tape = *q.tape;
  const Scalar inv_tau = static_cast<Scalar>(1.0 / tau);

  Var<Scalar> q_unit = l2_normalize(q);

  auto normalized_const = [&](const Tensor<Scalar>& k) {
    return l2_normalize(tape.constant(Tensor<Scalar>({static_cast<int>(k.size())}, k.storage())));
  };

  std::vector<Var<Scalar>> logits;
  logits.reserve(queue.size() + 1);
  Var<Scalar> positive = scale(dot(q_unit, normalized_const(k_pos)), inv_tau);
  logits.push_back(positive);
  for (const auto& k_neg : queue.entries()) {
    logits.push_back(scale(dot(q_unit, tape.constant(k_neg)), inv_tau));
  }
  Var<Scalar> lse = detail::logsumexp(tape, stack_scalars(tape, logits));
  return sub(lse, positive);
}

/// Query and key parameter sets coupled by the momentum coefficient.
template <typename Scalar>
struct MomentumPair {
  ParameterSet<Scalar> theta_q;
  ParameterSet<Scalar> theta_k;
  double m = 0.999;
};

/// theta_k <- m * theta_k + (1 - m) * theta_q, elementwise, no gradient flow.
/// m == 1 leaves theta_k bit-identical; m == 0 copies theta_q.
template <typename Scalar>
void momentum_update(ParameterSet<Scalar>& theta_k, const ParameterSet<Scalar>& theta_q, double m) {
  if (m < 0 || m > 1) throw ContractError("momentum_update: m must lie in [0, 1]");
  if (theta_k.names() != theta_q.names()) {
    throw DimensionError("momentum_update: parameter sets name different parameters");
  }
  if (m == 1.0) return;
  const Scalar mm = static_cast<Scalar>(m);
  const Scalar im = static_cast<Scalar>(1.0 - m);
  for (auto& [name, entry] : theta_k) {
    const Tensor<Scalar>& src = theta_q.weight(name);
    if (!entry.weight.same_shape(src)) {
      throw DimensionError("momentum_update: shape mismatch for '" + name + "': " +
                           entry.weight.shape_string() + " vs " + src.shape_string());
    }
    Scalar* w = entry.weight.data();
    const Scalar* s = src.data();
    const std::size_t count = entry.weight.size();
    if (m == 0.0) {
      for (std::size_t i = 0; i < count; ++i) w[i] = s[i];
    } else {
      for (std::size_t i = 0; i < count; ++i) w[i] = mm * w[i] + im * s[i];
    }
  }
}

template <typename Scalar>
void momentum_update(MomentumPair<Scalar>& pair) {
  momentum_update(pair.theta_k, pair.theta_q, pair.m);
}

struct PretrainConfig {
  double tau = 0.07;
  int batch = 16;
  int epochs = 30;
  int queue_capacity = 1024;
  double m = 0.999;
  SgdConfig sgd;
};

struct EpochMetrics {
  double mean_loss = 0;
  double mean_positive_sim = 0;
  double mean_negative_sim = 0;

  double similarity_gap() const { return mean_positive_sim - mean_negative_sim; }
};

namespace detail {

// Substream tags for one pretraining run; augmentation streams depend only on
// (run seed, epoch, sample id) so batch items may be augmented concurrently.
constexpr std::uint64_t kStreamShuffle = 1;
constexpr std::uint64_t kStreamAugment = 2;
constexpr std::uint64_t kStreamWarmup = 3;

inline SplitMix64 augment_rng(std::uint64_t run_seed, int epoch, long sample_id) {
  return SplitMix64(run_seed)
      .derived(kStreamAugment)
      .derived(static_cast<std::uint64_t>(epoch))
      .derived(static_cast<std::uint64_t>(sample_id));
}

}  // namespace detail

/// Seeds the dictionary by encoding one augmented batch with the key encoder.
/// Deterministic per seed; keeps the first training step away from the
/// degenerate empty-queue loss.
template <typename Scalar>
void warmup_queue(const std::vector<augment::ImageTensor>& images, const Encoder<Scalar>& encoder,
                  const ParameterSet<Scalar>& theta_k, KeyQueue<Scalar>& queue,
                  const augment::AugmentationSpec& spec, const PretrainConfig& cfg,
                  std::uint64_t run_seed) {
  if (images.empty()) throw ContractError("warmup_queue: empty dataset");
  SplitMix64 rng = SplitMix64(run_seed).derived(detail::kStreamWarmup);
  const std::size_t count = std::min<std::size_t>(images.size(), static_cast<std::size_t>(cfg.batch));
  for (std::size_t i = 0; i < count; ++i) {
    augment::ImageTensor view = augment::make_view(images[i], spec, rng);
    Tape<Scalar> scratch;
    auto h = encoder.embed(scratch, augment::to_tensor(view), theta_k);
    auto z = project(h, scratch.param("head.w1", theta_k), scratch.param("head.w2", theta_k));
    queue.enqueue(l2_normalize(z).value());
  }
}

/// One pass over the dataset: per mini-batch, augment a view pair per image,
/// encode one view with the query encoder and the other with the key encoder
/// (keys detached), take the dictionary loss against the queue, step the
/// query parameters, momentum-update the key parameters, then enqueue the
/// batch's keys. Returns the running mean loss and similarity statistics.
template <typename Scalar>
EpochMetrics pretrain_epoch(const std::vector<augment::ImageTensor>& images,
                            const Encoder<Scalar>& encoder, MomentumPair<Scalar>& pair,
                            KeyQueue<Scalar>& queue, const augment::AugmentationSpec& spec,
                            const PretrainConfig& cfg, int epoch, std::uint64_t run_seed) {
  if (images.empty()) throw ContractError("pretrain_epoch: empty dataset");
  if (cfg.batch < 1) throw ContractError("pretrain_epoch: batch must be >= 1");

  std::vector<long> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<long>(i);
  SplitMix64 shuffle_rng =
      SplitMix64(run_seed).derived(detail::kStreamShuffle).derived(static_cast<std::uint64_t>(epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
  }

  const double lr = lr_at_epoch(cfg.sgd, epoch);

  double loss_sum = 0, pos_sum = 0, neg_sum = 0;
  long query_count = 0, neg_count = 0;

  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));

    // Keys first: view_j through the key encoder, values detached.
    std::vector<Tensor<Scalar>> keys;
    std::vector<augment::ImageTensor> query_views;
    keys.reserve(end - start);
    query_views.reserve(end - start);
    for (std::size_t b = start; b < end; ++b) {
      const long id = order[b];
      SplitMix64 rng = detail::augment_rng(run_seed, epoch, id);
      augment::ViewPair views = augment::make_view_pair(images[id], spec, rng, id);
      query_views.push_back(std::move(views.view_i));
      Tape<Scalar> scratch;
      auto h = encoder.embed(scratch, augment::to_tensor(views.view_j), pair.theta_k);
      auto z = project(h, scratch.param("head.w1", pair.theta_k),
                       scratch.param("head.w2", pair.theta_k));
      keys.push_back(l2_normalize(z).value());
    }

    // Queries on one tape; dictionary loss for each against the shared queue.
    Tape<Scalar> tape;
    std::vector<Var<Scalar>> losses;
    losses.reserve(end - start);
    for (std::size_t b = 0; b < keys.size(); ++b) {
      auto h = encoder.embed(tape, augment::to_tensor(query_views[b]), pair.theta_q);
      auto q = project(h, tape.param("head.w1", pair.theta_q), tape.param("head.w2", pair.theta_q));
      losses.push_back(info_nce_loss(q, keys[b], queue, cfg.tau));

      const Tensor<Scalar> q_val = q.value();
      pos_sum += cosine_similarity(q_val, keys[b]);
      for (const auto& k_neg : queue.entries()) {
        neg_sum += cosine_similarity(q_val, k_neg);
        ++neg_count;
      }
      ++query_count;
    }
    Var<Scalar> batch_loss = mean_of(losses);
    loss_sum += static_cast<double>(batch_loss.value().item()) * static_cast<double>(losses.size());

    pair.theta_q.zero_grads();
    tape.backward(batch_loss, pair.theta_q);
    sgd_step(pair.theta_q, cfg.sgd, lr);
    momentum_update(pair);
    enqueue_batch(queue, keys);
  }

  EpochMetrics metrics;
  metrics.mean_loss = loss_sum / static_cast<double>(query_count);
  metrics.mean_positive_sim = pos_sum / static_cast<double>(query_count);
  metrics.mean_negative_sim = neg_count > 0 ? neg_sum / static_cast<double>(neg_count) : 0.0;
  return metrics;
}

}  // namespace protomoco::contrastive

#endif  // PROTOMOCO_CONTRASTIVE_HPP
