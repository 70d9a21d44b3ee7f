// End-to-end acceptance gate. Each numbered check prints one PASS/FAIL line;
// the exit code is the number of failures. The directional checks (6-8) run
// the full desk-scale pipelines, so this binary takes tens of minutes.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gearlab/analyze.hpp"
#include "gearlab/corrupt.hpp"
#include "gearlab/data.hpp"
#include "gearlab/era.hpp"
#include "gearlab/grow.hpp"
#include "gearlab/nn.hpp"
#include "gearlab/rng.hpp"
#include "gearlab/tensor.hpp"
#include "gearlab/train.hpp"

using namespace gearlab;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%2d/11] %s  %s%s%s\n", idx, ok ? "PASS" : "FAIL", name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

double median3(double a, double b, double c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

TensorPtr rand_tensor(std::vector<int> shape, Rng& rng, bool grad = true,
                      double lo = -1.0, double hi = 1.0) {
  auto t = make_tensor(std::move(shape), grad);
  for (auto& v : t->data) v = rng.uniform(lo, hi);
  return t;
}

// --- 1: gradient oracle --------------------------------------------------

// max relative error between the taped gradients of `loss_fn()` and central
// finite differences over every element of `params`
double fd_max_rel(const std::function<TensorPtr(Tape*)>& loss_fn,
                  const std::vector<TensorPtr>& params) {
  for (const auto& p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  Tape tape;
  auto loss = loss_fn(&tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(p->grad);

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double keep = p.data[i];
      p.data[i] = keep + h;
      const double up = loss_fn(nullptr)->data[0];
      p.data[i] = keep - h;
      const double down = loss_fn(nullptr)->data[0];
      p.data[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      if (std::abs(numeric) < 1e-8 && std::abs(a) < 1e-8) continue;
      worst = std::max(worst, std::abs(a - numeric) /
                                  std::max(std::abs(a), std::abs(numeric)));
    }
  }
  return worst;
}

void criterion_1() {
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    Rng rng(1000 + inst);
    {  // conv2d
      auto x = rand_tensor({2, 2, 5, 5}, rng);
      auto w = rand_tensor({3, 2, 3, 3}, rng);
      auto b = rand_tensor({3}, rng);
      worst = std::max(worst, fd_max_rel(
          [&](Tape* t) { return half_sq_norm(t, conv2d(t, x, w, b)); }, {x, w, b}));
    }
    {  // dense
      auto x = rand_tensor({3, 4}, rng);
      auto w = rand_tensor({4, 5}, rng);
      auto b = rand_tensor({5}, rng);
      worst = std::max(worst, fd_max_rel(
          [&](Tape* t) { return half_sq_norm(t, dense(t, x, w, b)); }, {x, w, b}));
    }
    {  // activations; keep inputs away from the relu kink
      auto x = make_tensor({2, 8}, true);
      for (auto& v : x->data) {
        v = rng.uniform(-1.0, 1.0);
        if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
      }
      for (Act a : {Act::relu, Act::swish})
        worst = std::max(worst, fd_max_rel(
            [&](Tape* t) { return half_sq_norm(t, activation(t, x, a)); }, {x}));
    }
    {  // pooling
      auto x = rand_tensor({2, 3, 4, 4}, rng);
      worst = std::max(worst, fd_max_rel(
          [&](Tape* t) { return half_sq_norm(t, pool2x2(t, x, Pool::max)); }, {x}));
    }
    {  // softmax cross-entropy
      auto logits = rand_tensor({4, 5}, rng, true, -2.0, 2.0);
      std::vector<int> labels;
      for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.uniform_int(5)));
      worst = std::max(worst, fd_max_rel(
          [&](Tape* t) { return softmax_cross_entropy(t, logits, labels); }, {logits}));
    }
    {  // composed CNN loss
      Topology topo;
      topo.widths = {3, 4};
      topo.pool_after = {1};
      topo.input_shape = {3, 8, 8};
      Network net = build(topo, 2000 + inst);
      auto x = rand_tensor({2, 3, 8, 8}, rng, false, 0.0, 1.0);
      std::vector<int> labels{static_cast<int>(rng.uniform_int(3)),
                              static_cast<int>(rng.uniform_int(3))};
      worst = std::max(worst, fd_max_rel(
          [&](Tape* t) {
            return softmax_cross_entropy(t, forward(t, net, x), labels);
          },
          net.params()));
    }
  }
  report(1, "gradient oracle vs central differences", worst < 1e-4,
         fmt("max rel error %.3g (< 1e-4)", worst));
}

// --- 2: function-preserving growth ---------------------------------------

void criterion_2() {
  int tested = 0, splits = 0, fresh = 0;
  double worst = 0.0;
  for (int net_seed = 0; tested < 100; ++net_seed) {
    Topology topo;
    topo.widths = (net_seed % 2 == 0) ? std::vector<int>{4, 5} : std::vector<int>{3, 4, 4};
    topo.pool_after = {1};
    topo.input_shape = {3, 8, 8};
    Network net = build(topo, 40 + net_seed);
    Rng in_rng(90 + net_seed);
    auto x = rand_tensor({3, 3, 8, 8}, in_rng, false, 0.0, 1.0);
    auto before = forward(nullptr, net, x);

    GrowthConfig cfg;
    cfg.new_per_layer = 3;
    Rng rng(70 + net_seed);
    for (auto& c : propose(net, cfg, rng)) {
      GrowthCandidate zeroed = c;
      zeroed.delta_in = make_tensor(c.delta_in->shape);
      if (c.delta_out) zeroed.delta_out = make_tensor(c.delta_out->shape);
      zeroed.score = 1.0;
      auto res = select_commit(net, {zeroed}, 2.0);
      if (!res.grew) continue;
      auto after = forward(nullptr, res.net, x);
      for (std::size_t i = 0; i < before->data.size(); ++i)
        worst = std::max(worst, std::abs(before->data[i] - after->data[i]));
      (c.kind == GrowthCandidate::Kind::split ? splits : fresh) += 1;
      if (++tested >= 100) break;
    }
  }
  report(2, "zero-delta commits preserve logits", worst <= 1e-9 && splits > 0 && fresh > 0,
         fmt("%d candidates (%d split, %d new), max drift %.3g (<= 1e-9)", tested,
             splits, fresh, worst));
}

// --- 3: growth budget ----------------------------------------------------

void criterion_3() {
  bool ok = true;
  std::string detail;
  for (double gamma : {0.0, 0.25, 0.6, 0.9, 1.5, 2.0}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Topology topo;
      topo.widths = {4, 5};
      topo.pool_after = {1};
      topo.input_shape = {3, 8, 8};
      Network net = build(topo, seed);
      const int c1 = complexity(net);
      const int budget = static_cast<int>(std::floor((1.0 + gamma) * c1));

      GrowthConfig cfg;
      cfg.new_per_layer = 20;  // plenty of candidates to saturate every budget
      Rng rng(seed * 31 + 7);
      auto cands = propose(net, cfg, rng);
      for (auto& c : cands) c.score = rng.uniform(0.1, 1.0);
      auto res = select_commit(net, std::move(cands), gamma);
      const int got = complexity(res.net);
      if (got > budget || got < budget - 1) {
        ok = false;
        detail = fmt("gamma=%.2f seed=%llu: C=%d budget=%d", gamma,
                     static_cast<unsigned long long>(seed), got, budget);
      }
    }
  }
  report(3, "post-growth complexity saturates floor((1+gamma)*C)", ok,
         ok ? "36/36 gamma-seed cells within [budget-1, budget]" : detail);
}

// --- 4: JSD oracle --------------------------------------------------------

void criterion_4() {
  Rng rng(77);
  double worst = 0.0;
  bool bounds_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const int J = 2 + static_cast<int>(rng.uniform_int(5));  // 2..6
    const int C = 2 + static_cast<int>(rng.uniform_int(9));  // 2..10
    const int N = 1 + static_cast<int>(rng.uniform_int(3));  // 1..3
    std::vector<TensorPtr> probs;
    std::vector<std::vector<std::vector<double>>> p(J);
    for (int j = 0; j < J; ++j) {
      auto t = make_tensor({N, C});
      p[j].resize(N);
      for (int n = 0; n < N; ++n) {
        double z = 0.0;
        p[j][n].resize(C);
        for (int c = 0; c < C; ++c) {
          p[j][n][c] = rng.uniform(1e-4, 1.0);
          z += p[j][n][c];
        }
        for (int c = 0; c < C; ++c) {
          p[j][n][c] /= z;
          t->data[static_cast<std::size_t>(n) * C + c] = p[j][n][c];
        }
      }
      probs.push_back(t);
    }
    const double got = jsd(nullptr, probs)->data[0];

    double want = 0.0;
    for (int n = 0; n < N; ++n) {
      double h_mean = 0.0, mean_h = 0.0;
      for (int c = 0; c < C; ++c) {
        double m = 0.0;
        for (int j = 0; j < J; ++j) m += p[j][n][c];
        m /= J;
        if (m > 0.0) h_mean -= m * std::log(m);
      }
      for (int j = 0; j < J; ++j) {
        double h = 0.0;
        for (int c = 0; c < C; ++c)
          if (p[j][n][c] > 0.0) h -= p[j][n][c] * std::log(p[j][n][c]);
        mean_h += h;
      }
      want += h_mean - mean_h / J;
    }
    want /= N;
    worst = std::max(worst, std::abs(got - want));
    if (got < -1e-12 || got > std::log(static_cast<double>(C)) + 1e-12) bounds_ok = false;
  }
  report(4, "Jensen-Shannon divergence vs direct summation", worst < 1e-10 && bounds_ok,
         fmt("max abs error %.3g (< 1e-10), bounds %s", worst,
             bounds_ok ? "respected" : "VIOLATED"));
}

// --- 5: augmentation distributions ---------------------------------------

void criterion_5() {
  // mixing weight: with a transform that blacks out the image and an all-ones
  // input, the augmented view's pixels equal the mixing weight p exactly
  TransformSet black;
  black.transforms.push_back(
      {"zero_probe", [](const Image& in, double, Rng&) { return Image(in.c, in.h, in.w); }});
  Image ones(1, 2, 2);
  for (auto& v : ones.pix) v = 1.0;

  Rng rng(505);
  ChainParams params{1, 1, 2};
  double mean_p = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto t = expand(ones, 0, rng, params, black);
    mean_p += t.views[1].pix[0];
  }
  mean_p /= n;
  const bool p_ok = mean_p >= 0.49 && mean_p <= 0.51;

  // chain depth ~ Unif{1..D}
  const int D = 3;
  std::vector<int> counts(D + 1, 0);
  TransformSet tset = default_transform_set();
  Rng drng(606);
  for (int i = 0; i < n; ++i) counts[sample_chain(drng, tset, D).steps.size()] += 1;
  const double pd = 1.0 / D;
  const double sigma3 = 3.0 * std::sqrt(pd * (1.0 - pd) / n);
  bool depth_ok = true;
  for (int d = 1; d <= D; ++d)
    if (std::abs(static_cast<double>(counts[d]) / n - pd) > sigma3) depth_ok = false;
  report(5, "mixing-weight mean and chain-depth uniformity", p_ok && depth_ok,
         fmt("mean p %.4f (in [0.49,0.51]); depth freqs %.3f/%.3f/%.3f (+-%.4f)",
             mean_p, counts[1] / double(n), counts[2] / double(n), counts[3] / double(n),
             sigma3));
}

// --- 6-8: desk-scale pipeline comparisons --------------------------------

struct ArmResult {
  double a_cln = 0.0, a_rob = 0.0;
  long long steps = 0, forward_passes = 0;
};

struct SeedRuns {
  ArmResult small_clean, small_aug, g2_m1, g2_m4;
  int g2_m1_complexity = 0, g2_m4_complexity = 0;
};

ArmResult arm_of(const PipelineResult& r) {
  return {r.record.a_cln, r.record.a_rob, r.record.counters.steps,
          r.record.counters.forward_passes};
}

SeedRuns run_seed(const Dataset& train, const Dataset& test, std::uint64_t seed) {
  TransformSet tset = default_transform_set();
  EvalEnv eval;
  eval.test = &test;
  eval.suite = default_suite();
  eval.seed = seed;

  Topology backbone;
  backbone.widths = {12, 12, 16, 16};
  backbone.pool_after = {1, 2, 3};
  backbone.num_classes = train.num_classes;
  backbone.input_shape = {train.c, train.h, train.w};

  TrainConfig cfg;
  cfg.e1 = 10;
  cfg.eg = 1;
  cfg.e2 = 10;
  cfg.er = 10;
  cfg.epochs = 40;
  cfg.eval_every = 0;
  cfg.seed = seed;

  GrowthConfig gcfg;
  gcfg.new_per_layer = 16;

  SeedRuns out;
  out.small_clean = arm_of(baseline_small(false, backbone, train, cfg, tset, &eval));
  out.small_aug = arm_of(baseline_small(true, backbone, train, cfg, tset, &eval));

  Network f0 = build(backbone, hash_mix(cfg.seed ^ hash_str("init-net")));
  auto g1 = gearnn2(f0, train, cfg, gcfg, tset, &eval, 1);
  out.g2_m1 = arm_of(g1);
  out.g2_m1_complexity = complexity(g1.net);
  auto g4 = gearnn2(f0, train, cfg, gcfg, tset, &eval, 4);
  out.g2_m4 = arm_of(g4);
  out.g2_m4_complexity = complexity(g4.net);
  return out;
}

// augmentation ablation cells: one shared clean growth phase, then a robust
// fine-tune per (W, D, J) cell that continues the same lr schedule
std::vector<ArmResult> run_era_cells(const Dataset& train, const Dataset& test,
                                     std::uint64_t seed,
                                     const std::vector<ChainParams>& cells) {
  TransformSet tset = default_transform_set();
  EvalEnv eval;
  eval.test = &test;
  eval.suite = default_suite();
  eval.seed = seed;

  Topology backbone;
  backbone.widths = {12, 12, 16, 16};
  backbone.pool_after = {1, 2, 3};
  backbone.num_classes = train.num_classes;
  backbone.input_shape = {train.c, train.h, train.w};

  TrainConfig cfg;
  cfg.e1 = 10;
  cfg.eg = 1;
  cfg.e2 = 10;
  cfg.er = 10;
  cfg.epochs = 40;
  cfg.eval_every = 0;
  cfg.seed = seed;
  GrowthConfig gcfg;
  gcfg.new_per_layer = 16;

  Network f0 = build(backbone, hash_mix(cfg.seed ^ hash_str("init-net")));
  TrainConfig phase1 = cfg;
  phase1.er = 0;
  auto p1 = gearnn2(f0, train, phase1, gcfg, tset, nullptr, 1);

  std::vector<ArmResult> out;
  for (const ChainParams& cell : cells) {
    TrainConfig cc = cfg;
    cc.chain = cell;
    Trainer tr(train, cc, std::max(cc.epochs, cc.e1 + cc.eg + cc.e2 + cc.er));
    tr.transform_set = &tset;
    tr.global_epoch = cc.e1 + cc.eg + cc.e2;  // continue the staged lr schedule
    Network net = p1.net.clone();
    tr.train_robust(net, cc.er);
    auto [a_cln, a_rob] = eval(net);
    out.push_back({a_cln, a_rob, tr.counters.steps, tr.counters.forward_passes});
  }
  return out;
}

void criteria_6_and_7(const std::vector<SeedRuns>& runs) {
  auto med = [&](auto pick) {
    return median3(pick(runs[0]), pick(runs[1]), pick(runs[2]));
  };

  // 6: grown two-phase network vs the fixed-size baselines
  const double sc_cln = med([](const SeedRuns& r) { return r.small_clean.a_cln; });
  const double sc_rob = med([](const SeedRuns& r) { return r.small_clean.a_rob; });
  const double sa_rob = med([](const SeedRuns& r) { return r.small_aug.a_rob; });
  const double sa_fwd = med([](const SeedRuns& r) { return double(r.small_aug.forward_passes); });
  const double g2_rob = med([](const SeedRuns& r) { return r.g2_m1.a_rob; });
  const double g2_fwd = med([](const SeedRuns& r) { return double(r.g2_m1.forward_passes); });
  const bool c6a = sc_rob <= sc_cln - 10.0;
  const bool c6b = g2_rob >= sc_rob + 5.0;
  const bool c6c = g2_fwd <= 0.6 * sa_fwd;
  // "comparable to the augmented baseline": no more than 4 points below it
  // (beating the baseline that costs 2.5x the forward passes is the win case)
  const bool c6d = g2_rob >= sa_rob - 4.0;
  report(6, "two-phase pipeline vs fixed baselines (median of 3 seeds)",
         c6a && c6b && c6c && c6d,
         fmt("clean base %.1f/%.1f, aug base rob %.1f, grown rob %.1f; fwd %.0f vs %.0f "
             "(a:%s b:%s c:%s d:%s)",
             sc_cln, sc_rob, sa_rob, g2_rob, g2_fwd, sa_fwd, c6a ? "ok" : "X",
             c6b ? "ok" : "X", c6c ? "ok" : "X", c6d ? "ok" : "X"));

  // 7: one growth step vs four at iso final size
  const double m1_rob = g2_rob;
  const double m4_rob = med([](const SeedRuns& r) { return r.g2_m4.a_rob; });
  const double m1_steps = med([](const SeedRuns& r) { return double(r.g2_m1.steps); });
  const double m4_steps = med([](const SeedRuns& r) { return double(r.g2_m4.steps); });
  int max_cdiff = 0;
  for (const auto& r : runs)
    max_cdiff = std::max(max_cdiff, std::abs(r.g2_m1_complexity - r.g2_m4_complexity));
  const bool c7 = m1_rob >= m4_rob - 1.0 && m1_steps <= m4_steps && max_cdiff <= 2;
  report(7, "single-step growth matches four steps at iso size", c7,
         fmt("rob %.1f vs %.1f, steps %.0f vs %.0f, max size gap %d", m1_rob, m4_rob,
             m1_steps, m4_steps, max_cdiff));

}

// 8: augmentation ablation cells, order (1,1,0), (1,3,4), (3,3,3)
void criterion_8(const std::vector<ArmResult>& cells) {
  const double j0_rob = cells[0].a_rob;
  const double full_rob = cells[1].a_rob;
  const bool fewest = cells[0].forward_passes < cells[1].forward_passes &&
                      cells[0].forward_passes < cells[2].forward_passes;
  const bool c8 = full_rob >= j0_rob + 2.0 && fewest;
  report(8, "full augmentation cell beats the basic cell", c8,
         fmt("(1,3,4) rob %.2f vs (1,1,0) %.2f (need +2); (1,1,0) fewest passes: %s "
             "(%lld vs %lld/%lld)",
             full_rob, j0_rob, fewest ? "yes" : "no", cells[0].forward_passes,
             cells[1].forward_passes, cells[2].forward_passes));
}

// --- 9: spectral checks ----------------------------------------------------

void criterion_9(const Dataset& test32) {
  Rng rng(909);
  // Parseval on random deltas
  double parseval = 0.0;
  {
    std::vector<Image> a, b;
    for (int i = 0; i < 4; ++i) {
      Image x(3, 32, 32), y(3, 32, 32);
      for (auto& v : x.pix) v = rng.uniform();
      for (auto& v : y.pix) v = rng.uniform();
      a.push_back(x);
      b.push_back(y);
    }
    auto prof = delta_spectrum(a, b);
    parseval = std::abs(prof.spatial_energy - prof.spectral_energy) /
               std::max(prof.spatial_energy, 1e-300);
  }

  // white-noise deltas spread energy uniformly over the frequency lattice
  double noise_frac = 0.0;
  {
    std::vector<Image> clean, mod;
    for (int i = 0; i < 200; ++i) {
      Image c(3, 32, 32);
      for (auto& v : c.pix) v = 0.5;
      Image m = c;
      for (auto& v : m.pix) v += 0.05 * rng.normal();
      clean.push_back(c);
      mod.push_back(m);
    }
    noise_frac = delta_spectrum(clean, mod).low_freq_fraction;
  }

  // blur deltas on real images concentrate at lower frequencies than noise
  std::vector<Image> clean;
  for (int i = 0; i < test32.n; ++i) clean.push_back(test32.get(i));
  Dataset noisy = corrupt_dataset(test32, {CorruptionKind::gaussian_noise, 3}, 3);
  Dataset blurred = corrupt_dataset(test32, {CorruptionKind::box_blur, 3}, 3);
  std::vector<Image> noisy_v, blurred_v;
  for (int i = 0; i < test32.n; ++i) {
    noisy_v.push_back(noisy.get(i));
    blurred_v.push_back(blurred.get(i));
  }
  const double real_noise_frac = delta_spectrum(clean, noisy_v).low_freq_fraction;
  const double blur_frac = delta_spectrum(clean, blurred_v).low_freq_fraction;

  const bool ok = parseval < 1e-6 && std::abs(noise_frac - 0.196) <= 0.02 &&
                  blur_frac > real_noise_frac;
  report(9, "energy conservation and low-frequency concentration", ok,
         fmt("parseval %.2g, white-noise low-freq %.4f (0.196+-0.02), blur %.3f > noise %.3f",
             parseval, noise_frac, blur_frac, real_noise_frac));
}

// --- 10: determinism -------------------------------------------------------

void criterion_10() {
  auto [train, test] = gen_shapes(64, 96, 24, 3, 8);
  TransformSet tset = default_transform_set();
  EvalEnv eval;
  eval.test = &test;
  eval.suite = {{CorruptionKind::gaussian_noise, 2}, {CorruptionKind::box_blur, 2}};
  eval.seed = 3;

  Topology topo;
  topo.widths = {4, 4};
  topo.pool_after = {1};
  topo.input_shape = {3, 8, 8};

  TrainConfig cfg;
  cfg.e1 = 2;
  cfg.eg = 1;
  cfg.e2 = 2;
  cfg.er = 2;
  cfg.batch_size = 32;
  cfg.seed = 11;
  cfg.chain = ChainParams{1, 2, 2};
  GrowthConfig gcfg;
  gcfg.new_per_layer = 2;

  auto run_once = [&]() {
    Network f0 = build(topo, hash_mix(cfg.seed ^ hash_str("init-net")));
    auto res = gearnn2(f0, train, cfg, gcfg, tset, &eval, 1);
    return detail::metric_csv(res.record.rows);
  };
  const std::string a = run_once();
  const std::string b = run_once();
  report(10, "identical seeds give a bitwise-identical metrics table", a == b,
         fmt("%zu bytes compared", a.size()));
}

// --- 11: CIFAR binary ingestion -------------------------------------------

void criterion_11() {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "gearlab_acceptance_cifar.bin";
  bool ok = true;
  std::string detail = "fixture parsed, truncation rejected";
  {
    std::ofstream f(path, std::ios::binary);
    std::vector<unsigned char> bytes;
    bytes.push_back(3);
    for (int k = 0; k < 3072; ++k) bytes.push_back(static_cast<unsigned char>(k % 251));
    bytes.push_back(9);
    for (int k = 0; k < 3072; ++k) bytes.push_back(200);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  }
  try {
    Dataset ds = read_cifar_binary(path.string());
    if (ds.n != 2 || ds.labels != std::vector<int>{3, 9}) ok = false;
    if (std::abs(ds.images[7] - 7.0 / 255.0) > 1e-12) ok = false;
    if (std::abs(ds.images[3072 + 100] - 200.0 / 255.0) > 1e-12) ok = false;
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    std::vector<char> bytes(3000, 1);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    read_cifar_binary(path.string());
    ok = false;
    detail = "truncated file accepted";
  } catch (const TensorError&) {
  }
  fs::remove(path);
  report(11, "CIFAR-10 binary record ingestion", ok, detail);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();

  {
    auto [train, test] = gen_shapes(1, 3000, 600, 3, 16);
    std::vector<SeedRuns> runs;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) runs.push_back(run_seed(train, test, seed));
    criteria_6_and_7(runs);
    criterion_8(run_era_cells(train, test, 1,
                              {ChainParams{1, 1, 0}, ChainParams{1, 3, 4},
                               ChainParams{3, 3, 3}}));
  }

  {
    auto [train32, test32] = gen_shapes(333, 3, 64, 3, 32);
    (void)train32;
    criterion_9(test32);
  }
  criterion_10();
  criterion_11();

  std::printf("%s: %d/11 checks passed\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
              11 - g_failures);
  return g_failures;
}
