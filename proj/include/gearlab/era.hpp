#pragma once

// Efficient Robust Augmentation: stochastic transform chains with mixing
// width W and max depth D, Beta(1,1) clean/augmented mixing, J-tuple batch
// expansion, and the Jensen-Shannon consistency loss.

#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "data.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace gearlab {

struct Transform {
  std::string name;
  // severity in [0,1]; rng supplies per-application direction choices
  std::function<Image(const Image&, double, Rng&)> apply;
};

struct TransformSet {
  std::vector<Transform> transforms;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& t : transforms) out.push_back(t.name);
    return out;
  }
};

namespace detail {

inline double sample_bilinear(const Image& img, int ch, double y, double x) {
  // clamp-to-edge
  x = std::min(std::max(x, 0.0), img.w - 1.0);
  y = std::min(std::max(y, 0.0), img.h - 1.0);
  int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
  double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * img.at(ch, y0, x0) + fx * img.at(ch, y0, x1)) +
         fy * ((1 - fx) * img.at(ch, y1, x0) + fx * img.at(ch, y1, x1));
}

// inverse-map affine warp about the image center: [x,y] = M [x'-cx, y'-cy] + c + t
inline Image affine(const Image& in, double m00, double m01, double m10, double m11,
                    double tx, double ty) {
  Image out(in.c, in.h, in.w);
  double cx = (in.w - 1) / 2.0, cy = (in.h - 1) / 2.0;
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      double dx = x - cx, dy = y - cy;
      double sx = m00 * dx + m01 * dy + cx + tx;
      double sy = m10 * dx + m11 * dy + cy + ty;
      for (int ch = 0; ch < in.c; ++ch) out.at(ch, y, x) = sample_bilinear(in, ch, sy, sx);
    }
  }
  return out;
}

}  // namespace detail

// Built-in desk-scale transform set. Geometric and photometric only; kept
// disjoint by name (and character) from the corruption suite.
inline TransformSet default_transform_set() {
  TransformSet set;
  set.transforms.push_back({"rotate", [](const Image& in, double s, Rng& rng) {
                              double a = (rng.uniform() < 0.5 ? -1 : 1) * s * 15.0 * M_PI / 180.0;
                              Image out = detail::affine(in, std::cos(a), -std::sin(a),
                                                         std::sin(a), std::cos(a), 0, 0);
                              out.clamp01();
                              return out;
                            }});
  set.transforms.push_back({"translate", [](const Image& in, double s, Rng& rng) {
                              double tx = rng.uniform(-3.0, 3.0) * s;
                              double ty = rng.uniform(-3.0, 3.0) * s;
                              Image out = detail::affine(in, 1, 0, 0, 1, tx, ty);
                              out.clamp01();
                              return out;
                            }});
  set.transforms.push_back({"shear", [](const Image& in, double s, Rng& rng) {
                              double k = (rng.uniform() < 0.5 ? -1 : 1) * 0.2 * s;
                              Image out = rng.uniform() < 0.5
                                              ? detail::affine(in, 1, k, 0, 1, 0, 0)
                                              : detail::affine(in, 1, 0, k, 1, 0, 0);
                              out.clamp01();
                              return out;
                            }});
  set.transforms.push_back({"hflip", [](const Image& in, double, Rng&) {
                              Image out(in.c, in.h, in.w);
                              for (int ch = 0; ch < in.c; ++ch)
                                for (int y = 0; y < in.h; ++y)
                                  for (int x = 0; x < in.w; ++x)
                                    out.at(ch, y, x) = in.at(ch, y, in.w - 1 - x);
                              return out;
                            }});
  set.transforms.push_back({"posterize", [](const Image& in, double s, Rng&) {
                              int bits = 6 - static_cast<int>(std::lround(2.0 * s));  // 4..6
                              double levels = static_cast<double>(1 << bits) - 1.0;
                              Image out = in;
                              for (auto& v : out.pix) v = std::round(v * levels) / levels;
                              return out;
                            }});
  set.transforms.push_back({"solarize", [](const Image& in, double s, Rng&) {
                              double thr = 1.0 - 0.5 * s;
                              Image out = in;
                              for (auto& v : out.pix)
                                if (v >= thr) v = 1.0 - v;
                              return out;
                            }});
  set.transforms.push_back({"brightness", [](const Image& in, double s, Rng& rng) {
                              double d = (rng.uniform() < 0.5 ? -1 : 1) * 0.2 * s;
                              Image out = in;
                              for (auto& v : out.pix) v += d;
                              out.clamp01();
                              return out;
                            }});
  set.transforms.push_back({"contrast", [](const Image& in, double s, Rng& rng) {
                              double f = 1.0 + (rng.uniform() < 0.5 ? -1 : 1) * 0.2 * s;
                              double mean = 0.0;
                              for (double v : in.pix) mean += v;
                              mean /= static_cast<double>(in.pix.size());
                              Image out = in;
                              for (auto& v : out.pix) v = mean + f * (v - mean);
                              out.clamp01();
                              return out;
                            }});
  return set;
}

// Registry guard: augmentation transforms must not appear in the corruption
// suite the models are evaluated against.
inline void check_disjoint(const TransformSet& set, const std::vector<std::string>& corruptions) {
  std::set<std::string> c(corruptions.begin(), corruptions.end());
  for (const auto& t : set.transforms)
    if (c.count(t.name))
      throw TensorError("transform '" + t.name + "' overlaps the corruption suite");
}

struct ChainParams {
  int W = 1;  // chain count mixed per view
  int D = 3;  // max chain depth
  int J = 4;  // tuple size: clean + (J-1) augmented views

  void validate() const {
    if (W < 1 || D < 1 || J < 0)
      throw TensorError("ChainParams: require W >= 1, D >= 1, J >= 0");
  }
};

// A sampled chain: permanently bound transform indices, severities, and the
// per-step aux seeds, so applying it twice gives identical pixels.
struct Chain {
  struct Step {
    int idx;
    double severity;
    std::uint64_t aux_seed;
  };
  std::vector<Step> steps;

  Image operator()(const TransformSet& set, const Image& x) const {
    Image cur = x;
    for (const auto& s : steps) {
      Rng aux(s.aux_seed);
      cur = set.transforms[s.idx].apply(cur, s.severity, aux);
    }
    return cur;
  }
};

// depth ~ Unif{1..D}, transforms uniform with replacement
inline Chain sample_chain(Rng& rng, const TransformSet& set, int D) {
  if (set.transforms.empty()) throw TensorError("sample_chain: empty transform set");
  if (D < 1) throw TensorError("sample_chain: D must be >= 1");
  Chain c;
  int depth = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(D)));
  for (int i = 0; i < depth; ++i) {
    Chain::Step s;
    s.idx = static_cast<int>(rng.uniform_int(set.transforms.size()));
    s.severity = rng.uniform();
    s.aux_seed = rng.raw();
    c.steps.push_back(s);
  }
  return c;
}

struct AugmentedTuple {
  std::vector<Image> views;  // index 0 = clean (bitwise the input) when J >= 1
  int label = 0;
};

// J-tuple expansion: W chains combined with uniform-Dirichlet weights, then
// Beta(1,1) mixing with the clean image. J counts total views (clean anchor
// plus J-1 augmented). J = 0 is the augmented-only degenerate mode used by
// the (1,1,0) ablation cell: a single augmented view and no clean anchor.
// force_p pins the mixing weight (test seam).
inline AugmentedTuple expand(const Image& x, int label, Rng& rng, const ChainParams& params,
                             const TransformSet& set, const double* force_p = nullptr) {
  params.validate();
  AugmentedTuple t;
  t.label = label;
  const int n_aug = params.J == 0 ? 1 : params.J - 1;
  if (params.J >= 1) t.views.push_back(x);
  for (int j = 0; j < n_aug; ++j) {
    // W-chain convex combination
    std::vector<double> wgt(params.W);
    double z = 0.0;
    for (auto& w : wgt) {
      w = -std::log(1.0 - rng.uniform());
      z += w;
    }
    Image mixed(x.c, x.h, x.w);
    for (int k = 0; k < params.W; ++k) {
      Chain c = sample_chain(rng, set, params.D);
      Image a = c(set, x);
      double w = wgt[k] / z;
      for (std::size_t i = 0; i < mixed.pix.size(); ++i) mixed.pix[i] += w * a.pix[i];
    }
    double p = force_p ? *force_p : rng.uniform();  // Beta(1,1)
    Image view(x.c, x.h, x.w);
    for (std::size_t i = 0; i < view.pix.size(); ++i)
      view.pix[i] = p * x.pix[i] + (1.0 - p) * mixed.pix[i];
    t.views.push_back(std::move(view));
  }
  return t;
}

// Jensen-Shannon divergence across J probability tensors [N,C]:
// JS = H(mean_j p_j) - mean_j H(p_j), natural log, averaged over the batch.
inline TensorPtr jsd(Tape* tape, const std::vector<TensorPtr>& probs) {
  if (probs.empty()) throw TensorError("jsd: no distributions given");
  const int J = static_cast<int>(probs.size());
  if (probs[0]->shape.size() != 2)
    throw TensorError("jsd: distributions must be [N,C], got " + shape_str(probs[0]->shape));
  const int N = probs[0]->shape[0], C = probs[0]->shape[1];
  for (const auto& p : probs) {
    if (p->shape != probs[0]->shape)
      throw TensorError("jsd: mismatched shapes " + shape_str(p->shape) + " vs " +
                        shape_str(probs[0]->shape));
    for (int n = 0; n < N; ++n) {
      double s = 0.0;
      for (int c = 0; c < C; ++c) {
        double v = p->data[static_cast<std::int64_t>(n) * C + c];
        if (v < 0.0) throw TensorError("jsd: negative probability");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-8)
        throw TensorError("jsd: distribution does not sum to 1 (got " + std::to_string(s) + ")");
    }
  }
  auto plogp = [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; };
  std::vector<double> mean(static_cast<std::size_t>(N) * C, 0.0);
  for (const auto& p : probs)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p->data[i] / J;
  double js = 0.0;
  for (int n = 0; n < N; ++n) {
    double hm = 0.0, hp = 0.0;
    for (int c = 0; c < C; ++c) hm -= plogp(mean[static_cast<std::int64_t>(n) * C + c]);
    for (const auto& p : probs)
      for (int c = 0; c < C; ++c) hp -= plogp(p->data[static_cast<std::int64_t>(n) * C + c]);
    js += hm - hp / J;
  }
  auto out = make_tensor({1}, std::vector<double>{js / N});

  bool need = false;
  if (tape)
    for (const auto& p : probs)
      if (p->requires_grad) need = true;
  if (need) {
    out->requires_grad = true;
    out->ensure_grad();
    for (const auto& p : probs)
      if (p->requires_grad) p->ensure_grad();
    auto mshared = std::make_shared<std::vector<double>>(std::move(mean));
    tape->record([=]() {
      // dJS/dp_jk = (1/(J*N)) * (log p_jk - log m_k)
      const double tiny = 1e-300;
      double g = out->grad[0] / (J * N);
      for (const auto& p : probs) {
        if (!p->requires_grad) continue;
        for (std::size_t i = 0; i < p->data.size(); ++i)
          p->grad[i] += g * (std::log(std::max(p->data[i], tiny)) -
                             std::log(std::max((*mshared)[i], tiny)));
      }
    });
  }
  return out;
}

// L_aug = L_CE(clean view) + lambda * JSD over all J softmaxed views
inline TensorPtr aug_loss(Tape* tape, const std::vector<TensorPtr>& logit_views,
                          const std::vector<int>& labels, double lambda) {
  if (logit_views.empty()) throw TensorError("aug_loss: no logit views");
  auto ce = softmax_cross_entropy(tape, logit_views[0], labels);
  if (lambda == 0.0 || logit_views.size() < 2) return ce;
  std::vector<TensorPtr> probs;
  for (const auto& lg : logit_views) probs.push_back(softmax(tape, lg));
  auto js = jsd(tape, probs);
  return axpby(tape, 1.0, ce, lambda, js);
}

}  // namespace gearlab
