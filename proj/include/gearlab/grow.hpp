#pragma once

// Budgeted width growth. Candidate proposal (channel splits plus fresh
// neurons), a growth epoch that trains only the candidate perturbations with
// RMSprop inside a jointly-widened "candidate network", greedy selection
// under the width-sum budget, and the one-shot / m-shot drivers.
//
// Candidate mechanics:
//   split(c): channel c is duplicated as W_c + eps*delta and W_c - eps*delta
//             with both copies' outgoing weights halved -- exactly function
//             preserving at delta = 0.
//   fresh:    new channel with trainable incoming weights (init U(-eps,eps))
//             and trainable outgoing weights (init 0) -- function preserving
//             whenever the outgoing weights are zero.

#include <algorithm>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "corrupt.hpp"
#include "data.hpp"
#include "era.hpp"
#include "nn.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace gearlab {

struct GrowthConfig {
  double gamma = 0.9;      // growth ratio: C(f_g) <= (1+gamma) C(f_1)
  double epsilon = 0.01;   // perturbation scale
  int new_per_layer = 70;  // fresh-neuron candidates per layer
  int growth_epochs = 1;
  double rms_lr = 9e-5;
  double rms_alpha = 0.1;
  double rms_momentum = 0.9;
  int batch_size = 128;

  void validate() const {
    if (gamma < 0.0) throw TensorError("GrowthConfig: gamma must be >= 0");
    if (epsilon <= 0.0 || epsilon > 0.1)
      throw TensorError("GrowthConfig: epsilon must be in (0, 0.1]");
    if (new_per_layer < 0) throw TensorError("GrowthConfig: new_per_layer must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const GrowthConfig& c) {
  j = {{"gamma", c.gamma},
       {"epsilon", c.epsilon},
       {"new_per_layer", c.new_per_layer},
       {"growth_epochs", c.growth_epochs},
       {"rms_lr", c.rms_lr},
       {"rms_alpha", c.rms_alpha},
       {"rms_momentum", c.rms_momentum}};
}

inline void from_json(const nlohmann::json& j, GrowthConfig& c) {
  c.gamma = j.value("gamma", c.gamma);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.new_per_layer = j.value("new_per_layer", c.new_per_layer);
  c.growth_epochs = j.value("growth_epochs", c.growth_epochs);
  c.rms_lr = j.value("rms_lr", c.rms_lr);
  c.rms_alpha = j.value("rms_alpha", c.rms_alpha);
  c.rms_momentum = j.value("rms_momentum", c.rms_momentum);
}

struct GrowthCandidate {
  enum class Kind { split, fresh };
  Kind kind;
  int layer = 1;     // 1-based conv layer
  int channel = -1;  // split source channel
  int id = 0;        // per-layer ordinal, used for deterministic tie-breaks
  TensorPtr delta_in;   // split: incoming perturbation; fresh: incoming weights
  TensorPtr delta_out;  // fresh only: outgoing weights into the next layer / head
  double score = 0.0;
  double grad_accum = 0.0;  // running sum of ||dL/d delta||_2 over the growth epoch

  double delta_norm() const {
    double s = 0.0;
    for (double v : delta_in->data) s += v * v;
    if (delta_out)
      for (double v : delta_out->data) s += v * v;
    return std::sqrt(s);
  }

  std::vector<TensorPtr> deltas() const {
    std::vector<TensorPtr> out = {delta_in};
    if (delta_out) out.push_back(delta_out);
    return out;
  }
};

// One split candidate per existing channel plus cfg.new_per_layer fresh
// candidates for every conv layer.
inline std::vector<GrowthCandidate> propose(const Network& net, const GrowthConfig& cfg,
                                            Rng& rng) {
  cfg.validate();
  std::vector<GrowthCandidate> cands;
  const int K = net.topo.kernel;
  const int L = net.topo.depth();
  auto sp = net.topo.final_spatial();
  for (int l = 1; l <= L; ++l) {
    const int li = l - 1;
    const int c_in = net.conv_w[li]->shape[1];
    const int w = net.topo.widths[li];
    const int out_len = (l == L) ? sp[0] * sp[1] * net.topo.num_classes
                                 : net.topo.widths[li + 1] * K * K;
    int id = 0;
    for (int c = 0; c < w; ++c) {
      GrowthCandidate gc;
      gc.kind = GrowthCandidate::Kind::split;
      gc.layer = l;
      gc.channel = c;
      gc.id = id++;
      gc.delta_in = make_tensor({c_in, K, K}, true);
      for (auto& v : gc.delta_in->data) v = rng.uniform(-cfg.epsilon, cfg.epsilon);
      cands.push_back(std::move(gc));
    }
    for (int j = 0; j < cfg.new_per_layer; ++j) {
      GrowthCandidate gc;
      gc.kind = GrowthCandidate::Kind::fresh;
      gc.layer = l;
      gc.id = id++;
      gc.delta_in = make_tensor({c_in, K, K}, true);
      for (auto& v : gc.delta_in->data) v = rng.uniform(-cfg.epsilon, cfg.epsilon);
      gc.delta_out = make_tensor({out_len}, true);  // zero: function preserving
      cands.push_back(std::move(gc));
    }
  }
  return cands;
}

namespace detail {

struct LayerCands {
  std::vector<GrowthCandidate*> splits;  // indexed by channel
  std::vector<GrowthCandidate*> fresh;
};

inline std::vector<LayerCands> group_by_layer(const Network& net,
                                              std::vector<GrowthCandidate>& cands) {
  std::vector<LayerCands> by(net.topo.depth());
  for (auto& lc : by) lc.splits.clear();
  for (int li = 0; li < net.topo.depth(); ++li)
    by[li].splits.assign(net.topo.widths[li], nullptr);
  for (auto& c : cands) {
    if (c.kind == GrowthCandidate::Kind::split)
      by[c.layer - 1].splits[c.channel] = &c;
    else
      by[c.layer - 1].fresh.push_back(&c);
  }
  return by;
}

// Candidate-network channel layout at each grown layer: [2c, 2c+1] are the
// +/- halves of base channel c, fresh candidates follow at 2w + j. Deltas
// already carry the epsilon scale from proposal, so they apply directly.
//
// Assembles the widened conv weight for layer li on the tape. The base
// weight is treated as a constant; gradients flow only into the deltas.
inline TensorPtr assemble_conv(Tape* tape, const Network& net, int li,
                               const std::vector<LayerCands>& by) {
  const int K = net.topo.kernel;
  const int KK = K * K;
  const int w = net.topo.widths[li];
  const auto& lc = by[li];
  const int nf = static_cast<int>(lc.fresh.size());
  const bool first = (li == 0);
  const int w_prev = first ? 0 : net.topo.widths[li - 1];
  const int nf_prev = first ? 0 : static_cast<int>(by[li - 1].fresh.size());
  const int P = first ? net.conv_w[0]->shape[1] : 2 * w_prev + nf_prev;
  const TensorPtr base = net.conv_w[li];
  const int c_in = base->shape[1];

  auto jw = make_tensor({2 * w + nf, P, K, K});
  auto row = [&](int r, int col) -> double* {
    return jw->data.data() + (static_cast<std::int64_t>(r) * P + col) * KK;
  };
  auto brow = [&](int c, int col) -> const double* {
    return base->data.data() + (static_cast<std::int64_t>(c) * c_in + col) * KK;
  };

  for (int c = 0; c < w; ++c) {
    const double* d = lc.splits[c]->delta_in->data.data();
    for (int sg = 0; sg < 2; ++sg) {
      const double sign = sg == 0 ? 1.0 : -1.0;
      const int r = 2 * c + sg;
      if (first) {
        for (int cp = 0; cp < c_in; ++cp) {
          const double* b = brow(c, cp);
          double* o = row(r, cp);
          for (int k = 0; k < KK; ++k) o[k] = b[k] + sign * d[cp * KK + k];
        }
      } else {
        for (int cp = 0; cp < w_prev; ++cp) {
          const double* b = brow(c, cp);
          for (int tau = 0; tau < 2; ++tau) {
            double* o = row(r, 2 * cp + tau);
            for (int k = 0; k < KK; ++k) o[k] = 0.5 * (b[k] + sign * d[cp * KK + k]);
          }
        }
        for (int j = 0; j < nf_prev; ++j) {
          // outgoing weights of the previous layer's fresh candidate j into
          // base channel c (both halves read the full value)
          const double* po = by[li - 1].fresh[j]->delta_out->data.data() +
                             static_cast<std::int64_t>(c) * KK;
          double* o = row(r, 2 * w_prev + j);
          for (int k = 0; k < KK; ++k) o[k] = po[k];
        }
      }
    }
  }
  for (int j = 0; j < nf; ++j) {
    const double* d = lc.fresh[j]->delta_in->data.data();
    const int r = 2 * w + j;
    if (first) {
      for (int cp = 0; cp < c_in; ++cp) {
        double* o = row(r, cp);
        for (int k = 0; k < KK; ++k) o[k] = d[cp * KK + k];
      }
    } else {
      for (int cp = 0; cp < w_prev; ++cp)
        for (int tau = 0; tau < 2; ++tau) {
          double* o = row(r, 2 * cp + tau);
          for (int k = 0; k < KK; ++k) o[k] = 0.5 * d[cp * KK + k];
        }
      // fresh-to-fresh connections stay zero
    }
  }

  jw->requires_grad = true;
  jw->ensure_grad();
  for (int c = 0; c < w; ++c) lc.splits[c]->delta_in->ensure_grad();
  for (auto* f : lc.fresh) {
    f->delta_in->ensure_grad();
    f->delta_out->ensure_grad();
  }
  // capture the grouping by value-ish references; candidates outlive the tape
  const LayerCands* lcp = &by[li];
  const LayerCands* prevp = first ? nullptr : &by[li - 1];
  tape->record([=]() {
    auto grow_ = [&](int r, int col) -> const double* {
      return jw->grad.data() + (static_cast<std::int64_t>(r) * P + col) * KK;
    };
    for (int c = 0; c < w; ++c) {
      double* dg = lcp->splits[c]->delta_in->grad.data();
      for (int sg = 0; sg < 2; ++sg) {
        const double sign = sg == 0 ? 1.0 : -1.0;
        const int r = 2 * c + sg;
        if (first) {
          for (int cp = 0; cp < c_in; ++cp) {
            const double* g = grow_(r, cp);
            for (int k = 0; k < KK; ++k) dg[cp * KK + k] += sign * g[k];
          }
        } else {
          for (int cp = 0; cp < w_prev; ++cp)
            for (int tau = 0; tau < 2; ++tau) {
              const double* g = grow_(r, 2 * cp + tau);
              for (int k = 0; k < KK; ++k) dg[cp * KK + k] += 0.5 * sign * g[k];
            }
          for (int j = 0; j < nf_prev; ++j) {
            double* og = prevp->fresh[j]->delta_out->grad.data() +
                         static_cast<std::int64_t>(c) * KK;
            const double* g = grow_(r, 2 * w_prev + j);
            for (int k = 0; k < KK; ++k) og[k] += g[k];
          }
        }
      }
    }
    for (int j = 0; j < nf; ++j) {
      double* dg = lcp->fresh[j]->delta_in->grad.data();
      const int r = 2 * w + j;
      if (first) {
        for (int cp = 0; cp < c_in; ++cp) {
          const double* g = grow_(r, cp);
          for (int k = 0; k < KK; ++k) dg[cp * KK + k] += g[k];
        }
      } else {
        for (int cp = 0; cp < w_prev; ++cp)
          for (int tau = 0; tau < 2; ++tau) {
            const double* g = grow_(r, 2 * cp + tau);
            for (int k = 0; k < KK; ++k) dg[cp * KK + k] += 0.5 * g[k];
          }
      }
    }
  });
  return jw;
}

inline TensorPtr assemble_bias(const Network& net, int li, const std::vector<LayerCands>& by) {
  const int w = net.topo.widths[li];
  const int nf = static_cast<int>(by[li].fresh.size());
  auto jb = make_tensor({2 * w + nf});
  for (int c = 0; c < w; ++c)
    jb->data[2 * c] = jb->data[2 * c + 1] = net.conv_b[li]->data[c];
  return jb;
}

inline TensorPtr assemble_head(Tape* tape, const Network& net,
                               const std::vector<LayerCands>& by) {
  const int L = net.topo.depth();
  const int w = net.topo.widths[L - 1];
  const auto& lc = by[L - 1];
  const int nf = static_cast<int>(lc.fresh.size());
  auto sp = net.topo.final_spatial();
  const int spatial = sp[0] * sp[1];
  const int C = net.topo.num_classes;
  auto jh = make_tensor({(2 * w + nf) * spatial, C});
  const TensorPtr base = net.head_w;
  for (int c = 0; c < w; ++c)
    for (int sg = 0; sg < 2; ++sg)
      for (int s = 0; s < spatial; ++s) {
        const double* b = base->data.data() + (static_cast<std::int64_t>(c) * spatial + s) * C;
        double* o = jh->data.data() +
                    (static_cast<std::int64_t>(2 * c + sg) * spatial + s) * C;
        for (int k = 0; k < C; ++k) o[k] = 0.5 * b[k];
      }
  for (int j = 0; j < nf; ++j) {
    const double* d = lc.fresh[j]->delta_out->data.data();  // [spatial * C]
    double* o = jh->data.data() +
                (static_cast<std::int64_t>(2 * w + j) * spatial) * static_cast<std::int64_t>(C);
    std::copy(d, d + static_cast<std::int64_t>(spatial) * C, o);
  }
  jh->requires_grad = true;
  jh->ensure_grad();
  for (auto* f : lc.fresh) f->delta_out->ensure_grad();
  const LayerCands* lcp = &by[L - 1];
  tape->record([=]() {
    for (int j = 0; j < nf; ++j) {
      double* og = lcp->fresh[j]->delta_out->grad.data();
      const double* g = jh->grad.data() +
                        (static_cast<std::int64_t>(2 * w + j) * spatial) * static_cast<std::int64_t>(C);
      for (std::int64_t k = 0; k < static_cast<std::int64_t>(spatial) * C; ++k) og[k] += g[k];
    }
  });
  return jh;
}

// logits of the jointly-widened candidate network
inline TensorPtr jumbo_forward(Tape* tape, const Network& net,
                               const std::vector<LayerCands>& by, const TensorPtr& x) {
  std::set<int> pools(net.topo.pool_after.begin(), net.topo.pool_after.end());
  TensorPtr h = x;
  for (int li = 0; li < net.topo.depth(); ++li) {
    auto jw = assemble_conv(tape, net, li, by);
    auto jb = assemble_bias(net, li, by);
    h = conv2d(tape, h, jw, jb);
    h = activation(tape, h, net.topo.activation);
    if (pools.count(li + 1)) h = pool2x2(tape, h, Pool::max);
  }
  auto jh = assemble_head(tape, net, by);
  auto hb = make_tensor(net.head_b->shape, net.head_b->data);  // constant copy
  return dense(tape, flatten(tape, h), jh, hb);
}

inline Topology jumbo_topology(const Network& net, const std::vector<LayerCands>& by) {
  Topology t = net.topo;
  for (int li = 0; li < t.depth(); ++li)
    t.widths[li] = 2 * t.widths[li] + static_cast<int>(by[li].fresh.size());
  return t;
}

struct RmsState {
  std::vector<double> sq_avg;
  std::vector<double> momentum;
};

inline void rmsprop_step(const TensorPtr& p, RmsState& st, double lr, double alpha,
                         double mu) {
  if (st.sq_avg.size() != p->data.size()) {
    st.sq_avg.assign(p->data.size(), 0.0);
    st.momentum.assign(p->data.size(), 0.0);
  }
  const double eps = 1e-8;
  for (std::size_t i = 0; i < p->data.size(); ++i) {
    double g = p->grad[i];
    st.sq_avg[i] = alpha * st.sq_avg[i] + (1.0 - alpha) * g * g;
    st.momentum[i] = mu * st.momentum[i] + g / (std::sqrt(st.sq_avg[i]) + eps);
    p->data[i] -= lr * st.momentum[i];
  }
}

}  // namespace detail

// Data/loss environment a growth epoch (and the drivers below) runs in.
// use_era selects the augmented-data path (one-phase pipeline growth).
struct GrowthEnv {
  const Dataset* train = nullptr;
  bool use_era = false;
  const TransformSet* tset = nullptr;
  ChainParams chain{1, 3, 4};
  double lambda = 12.0;
  std::uint64_t seed = 0;
  Counters* counters = nullptr;
  // optional override for the clean-path loss (default: cross entropy)
  std::function<TensorPtr(Tape*, const TensorPtr&, const std::vector<int>&)> loss_fn;
};

// Trains only the candidate deltas for cfg.growth_epochs with RMSprop while
// the base parameters stay frozen; fills in each candidate's score
// (accumulated gradient norm times the learned perturbation norm).
inline void growth_epoch(const Network& net, std::vector<GrowthCandidate>& candidates,
                         const GrowthEnv& env, const GrowthConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!env.train || env.train->n == 0) throw TensorError("growth_epoch: empty data stream");
  auto by = detail::group_by_layer(net, candidates);
  for (int li = 0; li < net.topo.depth(); ++li)
    for (auto* s : by[li].splits)
      if (!s) throw TensorError("growth_epoch: candidates missing a split for some channel");

  std::vector<detail::RmsState> states(candidates.size() * 2);
  const double jflops = forward_flops(detail::jumbo_topology(net, by));
  const int n = env.train->n;

  for (int e = 0; e < cfg.growth_epochs; ++e) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    // deterministic shuffle driven by the caller's rng
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);

    for (int start = 0; start < n; start += cfg.batch_size) {
      int end = std::min(start + cfg.batch_size, n);
      std::vector<int> idx(order.begin() + start, order.begin() + end);
      auto labels = env.train->batch_labels(idx);

      Tape tape;
      TensorPtr loss;
      int views = 1;
      if (env.use_era) {
        // expand per sample, then forward each view through the candidate net
        std::vector<AugmentedTuple> tuples(idx.size());
        for (std::size_t b = 0; b < idx.size(); ++b) {
          Rng er = substream(env.seed, "era-grow", static_cast<std::uint64_t>(e),
                             static_cast<std::uint64_t>(idx[b]));
          tuples[b] = expand(env.train->get(idx[b]), labels[b], er, env.chain, *env.tset);
        }
        views = static_cast<int>(tuples[0].views.size());
        std::vector<TensorPtr> logit_views;
        for (int v = 0; v < views; ++v) {
          auto xb = make_tensor({static_cast<int>(idx.size()), env.train->c, env.train->h,
                                 env.train->w});
          for (std::size_t b = 0; b < idx.size(); ++b)
            std::copy(tuples[b].views[v].pix.begin(), tuples[b].views[v].pix.end(),
                      xb->data.begin() + static_cast<std::ptrdiff_t>(b * env.train->sample_size()));
          logit_views.push_back(detail::jumbo_forward(&tape, net, by, xb));
        }
        loss = aug_loss(&tape, logit_views, labels, env.chain.J == 0 ? 0.0 : env.lambda);
      } else {
        auto logits = detail::jumbo_forward(&tape, net, by, env.train->batch(idx));
        loss = env.loss_fn ? env.loss_fn(&tape, logits, labels)
                           : softmax_cross_entropy(&tape, logits, labels);
      }
      tape.backward(loss);

      for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        auto& cand = candidates[ci];
        double sq = 0.0;
        for (auto& d : cand.deltas())
          for (double g : d->grad) sq += g * g;
        cand.grad_accum += std::sqrt(sq);
        auto ds = cand.deltas();
        for (std::size_t k = 0; k < ds.size(); ++k) {
          detail::rmsprop_step(ds[k], states[ci * 2 + k], cfg.rms_lr, cfg.rms_alpha,
                               cfg.rms_momentum);
          ds[k]->zero_grad();
        }
      }
      if (env.counters) {
        env.counters->steps += 1;
        env.counters->forward_passes += static_cast<long long>(idx.size()) * views;
        env.counters->flops += 3.0 * jflops * static_cast<double>(idx.size()) * views;
      }
    }
  }
  for (auto& cand : candidates) {
    cand.score = cand.grad_accum * cand.delta_norm();
    if (!std::isfinite(cand.score))
      throw TensorError("growth_epoch: non-finite candidate score");
  }
}

struct CommitResult {
  Network net;
  bool grew = false;
  bool budget_exhausted = false;  // warning: budget below one neuron
  std::vector<nlohmann::json> trace;
};

// Greedy global selection: highest score first, ties broken by ascending
// (layer, id). Commits until the width-sum would exceed floor((1+gamma)*C).
inline CommitResult select_commit(const Network& net, std::vector<GrowthCandidate> scored,
                                  double gamma) {
  for (const auto& c : scored)
    if (!std::isfinite(c.score)) throw TensorError("select_commit: non-finite score");
  const int c0 = complexity(net);
  const int budget = static_cast<int>(std::floor((1.0 + gamma) * c0));
  CommitResult res;
  if (budget - c0 < 1) {
    res.net = net.clone();
    res.budget_exhausted = true;
    return res;
  }
  std::vector<const GrowthCandidate*> order;
  for (const auto& c : scored) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](const GrowthCandidate* a, const GrowthCandidate* b) {
    if (a->score != b->score) return a->score > b->score;
    if (a->layer != b->layer) return a->layer < b->layer;
    return a->id < b->id;
  });
  const int n_add = std::min<int>(budget - c0, static_cast<int>(order.size()));
  std::vector<const GrowthCandidate*> chosen(order.begin(), order.begin() + n_add);
  // apply in (layer, id) order so channel indices stay valid as we append
  std::sort(chosen.begin(), chosen.end(), [](const GrowthCandidate* a, const GrowthCandidate* b) {
    if (a->layer != b->layer) return a->layer < b->layer;
    return a->id < b->id;
  });

  Network cur = net.clone();
  const int K = net.topo.kernel;
  const int KK = K * K;
  int step = 0;
  for (const auto* cand : chosen) {
    const int l = cand->layer;
    const int li = l - 1;
    const bool last = (l == cur.topo.depth());
    const int c_in_cur = cur.conv_w[li]->shape[1];
    auto sp = cur.topo.final_spatial();
    const int spatial = sp[0] * sp[1];
    const int out_len = last ? spatial * cur.topo.num_classes
                             : cur.topo.widths[li + 1] * KK;

    // pad the candidate's incoming slice to the current input width
    auto pad_in = [&](const TensorPtr& d) {
      std::vector<double> v(static_cast<std::size_t>(c_in_cur) * KK, 0.0);
      std::copy(d->data.begin(), d->data.end(), v.begin());
      return v;
    };

    if (cand->kind == GrowthCandidate::Kind::fresh) {
      NeuronInit init;
      init.in_w = pad_in(cand->delta_in);
      init.bias = 0.0;
      init.out_w.assign(cand->delta_out->data.begin(), cand->delta_out->data.end());
      if (static_cast<int>(init.out_w.size()) != out_len)
        throw TensorError("select_commit: stale outgoing slice shape");
      cur = widen(cur, l, {init});
    } else {
      const int c = cand->channel;
      // delta already carries the epsilon scale from proposal
      std::vector<double> pert = pad_in(cand->delta_in);
      NeuronInit init;
      init.in_w.resize(pert.size());
      double* wrow = cur.conv_w[li]->data.data() + static_cast<std::int64_t>(c) * c_in_cur * KK;
      for (std::size_t k = 0; k < pert.size(); ++k) init.in_w[k] = wrow[k] - pert[k];
      init.bias = cur.conv_b[li]->data[c];
      // halved outgoing copy
      init.out_w.resize(out_len);
      if (last) {
        double* hrow = cur.head_w->data.data() +
                       static_cast<std::int64_t>(c) * spatial * cur.topo.num_classes;
        for (int k = 0; k < out_len; ++k) init.out_w[k] = 0.5 * hrow[k];
      } else {
        auto& nw = cur.conv_w[li + 1];
        const int cn = nw->shape[1];
        for (int f = 0; f < nw->shape[0]; ++f)
          for (int k = 0; k < KK; ++k)
            init.out_w[f * KK + k] =
                0.5 * nw->data[(static_cast<std::int64_t>(f) * cn + c) * KK + k];
      }
      cur = widen(cur, l, {init});
      // mutate the original channel: +perturbation incoming, halved outgoing
      double* wrow2 = cur.conv_w[li]->data.data() + static_cast<std::int64_t>(c) * c_in_cur * KK;
      for (std::size_t k = 0; k < pert.size(); ++k) wrow2[k] += pert[k];
      if (last) {
        double* hrow = cur.head_w->data.data() +
                       static_cast<std::int64_t>(c) * spatial * cur.topo.num_classes;
        for (int k = 0; k < out_len; ++k) hrow[k] *= 0.5;
      } else {
        auto& nw = cur.conv_w[li + 1];
        const int cn = nw->shape[1];
        for (int f = 0; f < nw->shape[0]; ++f)
          for (int k = 0; k < KK; ++k)
            nw->data[(static_cast<std::int64_t>(f) * cn + c) * KK + k] *= 0.5;
      }
    }
    res.trace.push_back(
        {{"step", step++},
         {"layer", l},
         {"kind", cand->kind == GrowthCandidate::Kind::split ? "split" : "new"},
         {"score", cand->score},
         {"widths", cur.topo.widths}});
  }
  res.net = std::move(cur);
  res.grew = step > 0;
  return res;
}

struct OsgSchedule {
  int e1 = 10;
  int eg = 1;
  int e2 = 10;
};

// Trainer callback: trains the network in place for the given epoch count.
using TrainFn = std::function<void(Network&, int)>;

// One-Shot Growth: train E1, propose, growth epoch(s), commit under the
// budget, train E2.
inline Network osg(const Network& f0, const GrowthEnv& env, const TrainFn& train,
                   const OsgSchedule& sched, GrowthConfig cfg,
                   std::vector<nlohmann::json>* trace = nullptr) {
  Network net = f0.clone();
  train(net, sched.e1);
  cfg.growth_epochs = sched.eg;
  Rng rng = substream(env.seed, "grow-step", 0);
  auto cands = propose(net, cfg, rng);
  if (sched.eg > 0) growth_epoch(net, cands, env, cfg, rng);
  auto res = select_commit(net, std::move(cands), cfg.gamma);
  if (trace)
    for (auto& t : res.trace) trace->push_back(t);
  Network grown = std::move(res.net);
  train(grown, sched.e2);
  return grown;
}

// m growth steps reaching the same final size as OSG: per-step ratio
// (1+total_gamma)^(1/m) - 1, training epochs split evenly over the m+1
// stages (remainder to the last stage).
inline Network m_shot(const Network& f0, const GrowthEnv& env, const TrainFn& train, int m,
                      double total_gamma, int epochs_total, GrowthConfig cfg,
                      std::vector<nlohmann::json>* trace = nullptr) {
  if (m < 1) throw TensorError("m_shot: m must be >= 1");
  const double gamma_step = std::pow(1.0 + total_gamma, 1.0 / m) - 1.0;
  const int base = epochs_total / (m + 1);
  Network net = f0.clone();
  for (int k = 0; k < m; ++k) {
    train(net, base);
    Rng rng = substream(env.seed, "grow-step", static_cast<std::uint64_t>(k));
    GrowthConfig step_cfg = cfg;
    step_cfg.gamma = gamma_step;
    auto cands = propose(net, step_cfg, rng);
    if (step_cfg.growth_epochs > 0) growth_epoch(net, cands, env, step_cfg, rng);
    auto res = select_commit(net, std::move(cands), gamma_step);
    if (trace)
      for (auto& t : res.trace) trace->push_back(t);
    net = std::move(res.net);
  }
  train(net, epochs_total - m * base);  // remainder goes to the last stage
  return net;
}

}  // namespace gearlab
