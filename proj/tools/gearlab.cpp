// gearlab: grow compact corruption-robust CNNs and inspect the results.
//
// Verbs: gen-data, run, compare, ablate-era, growth-steps, analyze.
// Experiments are described by JSON specs (see README) so comparisons stay
// auditable; flags are reserved for generators and analyses.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gearlab/analyze.hpp"
#include "gearlab/corrupt.hpp"
#include "gearlab/data.hpp"
#include "gearlab/era.hpp"
#include "gearlab/grow.hpp"
#include "gearlab/nn.hpp"
#include "gearlab/train.hpp"

extern "C" void openblas_set_num_threads(int);

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gearlab;

namespace {

void apply_thread_cap() {
  int threads = 1;
  if (const char* env = std::getenv("GEARLAB_THREADS")) threads = std::max(1, std::atoi(env));
  openblas_set_num_threads(threads);
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw TensorError("spec: '" + where + "' must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw TensorError("spec: unknown key '" + it.key() + "' in " + where);
}

std::string write_text(const fs::path& path, const std::string& content) {
  detail::atomic_write(path, content);
  return path.filename().string();
}

struct ExperimentSpec {
  std::string method;
  std::string out;
  std::string train_path, test_path;
  TrainConfig train;
  GrowthConfig growth;
  Topology backbone;          // initial net for growth methods
  bool has_topology = false;  // fixed topology for the small_* baselines
  Topology topology;
  std::string topology_from;  // run directory to copy the topology from
  std::vector<Corruption> suite;
  int m = 1;
};

ExperimentSpec parse_spec(const json& j) {
  check_keys(j, {"method", "out", "seed", "data", "train", "growth", "backbone", "topology",
                 "topology_from", "suite", "m"},
             "spec");
  ExperimentSpec s;
  s.method = j.at("method").get<std::string>();
  static const std::set<std::string> methods = {"gearnn1", "gearnn2", "small_clean",
                                                "small_aug", "mshot"};
  if (!methods.count(s.method)) throw TensorError("spec: unknown method '" + s.method + "'");
  s.out = j.at("out").get<std::string>();

  const json& d = j.at("data");
  check_keys(d, {"train", "test"}, "spec.data");
  s.train_path = d.at("train").get<std::string>();
  s.test_path = d.at("test").get<std::string>();

  if (j.contains("train")) {
    check_keys(j.at("train"),
               {"e1", "eg", "e2", "er", "epochs", "batch_size", "base_lr", "momentum",
                "weight_decay", "lambda", "W", "D", "J", "seed", "eval_every"},
               "spec.train");
    j.at("train").get_to(s.train);
  }
  if (j.contains("seed")) s.train.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("growth")) {
    check_keys(j.at("growth"),
               {"gamma", "epsilon", "new_per_layer", "growth_epochs", "rms_lr", "rms_alpha",
                "rms_momentum"},
               "spec.growth");
    j.at("growth").get_to(s.growth);
  }
  s.backbone.widths = {12, 12, 16, 16};
  s.backbone.pool_after = {1, 2, 3};
  if (j.contains("backbone")) j.at("backbone").get_to(s.backbone);
  if (j.contains("topology")) {
    j.at("topology").get_to(s.topology);
    s.has_topology = true;
  }
  if (j.contains("topology_from")) s.topology_from = j.at("topology_from").get<std::string>();
  if (j.contains("suite")) {
    for (const auto& c : j.at("suite")) {
      check_keys(c, {"kind", "severity"}, "spec.suite[]");
      Corruption cur{corruption_from_name(c.at("kind").get<std::string>()),
                     c.at("severity").get<int>()};
      cur.validate();
      s.suite.push_back(cur);
    }
  } else {
    s.suite = default_suite();
  }
  if (j.contains("m")) s.m = j.at("m").get<int>();
  s.train.validate();
  s.growth.validate();
  return s;
}

ExperimentSpec load_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TensorError("cannot open spec file '" + path + "'");
  return parse_spec(json::parse(f));
}

Topology topology_of_run(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "topology.json");
  if (!f) throw TensorError("no topology.json under '" + dir + "'");
  return json::parse(f).get<Topology>();
}

struct RunOutput {
  PipelineResult result;
  std::string train_digest, test_digest;
};

RunOutput execute(const ExperimentSpec& s, bool persist = true) {
  Dataset train = read_container(s.train_path);
  Dataset test = read_container(s.test_path);

  EvalEnv eval;
  eval.test = &test;
  eval.suite = s.suite;
  eval.seed = s.train.seed;

  TransformSet tset = default_transform_set();
  std::vector<std::string> suite_names;
  for (const auto& c : s.suite) suite_names.push_back(corruption_name(c.kind));
  check_disjoint(tset, suite_names);

  Topology backbone = s.backbone;
  backbone.num_classes = train.num_classes;
  backbone.input_shape = {train.c, train.h, train.w};
  backbone.validate();

  RunOutput out;
  if (s.method == "small_clean" || s.method == "small_aug") {
    Topology topo =
        s.has_topology ? s.topology
                       : (!s.topology_from.empty() ? topology_of_run(s.topology_from) : backbone);
    topo.num_classes = train.num_classes;
    topo.input_shape = {train.c, train.h, train.w};
    topo.validate();
    out.result = baseline_small(s.method == "small_aug", topo, train, s.train, tset, &eval);
  } else {
    Network f0 = build(backbone, hash_mix(s.train.seed ^ hash_str("init-net")));
    if (s.method == "gearnn1")
      out.result = gearnn1(f0, train, s.train, s.growth, tset, &eval);
    else
      out.result = gearnn2(f0, train, s.train, s.growth, tset, &eval,
                           s.method == "mshot" ? s.m : 1);
  }
  out.result.record.config["growth"] = json(s.growth);
  out.result.record.config["data"] = {{"train", s.train_path}, {"test", s.test_path}};
  out.train_digest = dataset_digest(train);
  out.test_digest = dataset_digest(test);
  out.result.record.config["train_digest"] = out.train_digest;
  out.result.record.config["test_digest"] = out.test_digest;

  if (persist) {
    save_run_record(s.out, out.result.record, &out.result.net);
    json manifest;
    manifest["method"] = out.result.record.method;
    manifest["artifacts"] = {"config.json", "metrics.csv", "topology.json", "final.ckpt"};
    if (!out.result.record.growth_trace.empty())
      manifest["artifacts"].push_back("growth_trace.jsonl");
    detail::atomic_write(fs::path(s.out) / "manifest.json", manifest.dump(2) + "\n");
  }
  return out;
}

int cmd_gen_data(std::uint64_t seed, const std::string& out_dir, int n_train, int n_test,
                 int size, int classes) {
  auto [train, test] = gen_shapes(seed, n_train, n_test, classes, size);
  fs::create_directories(out_dir);
  write_container(train, (fs::path(out_dir) / "train.bin").string());
  write_container(test, (fs::path(out_dir) / "test.bin").string());
  json manifest = {{"artifacts", {"train.bin", "test.bin"}},
                   {"seed", seed},
                   {"train_digest", dataset_digest(train)},
                   {"test_digest", dataset_digest(test)}};
  detail::atomic_write(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "train " << train.n << " samples digest " << dataset_digest(train) << "\n"
            << "test " << test.n << " samples digest " << dataset_digest(test) << "\n";
  return 0;
}

int cmd_run(const std::string& spec_path) {
  ExperimentSpec s = load_spec(spec_path);
  RunOutput out = execute(s);
  std::cout << s.method << " done: a_cln " << out.result.record.a_cln << " a_rob "
            << out.result.record.a_rob << " steps " << out.result.record.counters.steps
            << " flops " << out.result.record.counters.flops << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& spec_paths, const std::string& out_csv) {
  std::string train_digest, test_digest;
  std::string csv = "method,size_pct,a_cln,a_rob,steps,forward_passes,flops\n";
  char buf[256];
  for (const auto& path : spec_paths) {
    ExperimentSpec s = load_spec(path);
    RunOutput out = execute(s);
    if (train_digest.empty()) {
      train_digest = out.train_digest;
      test_digest = out.test_digest;
    } else if (train_digest != out.train_digest || test_digest != out.test_digest) {
      throw TensorError("compare: dataset digests differ across specs");
    }
    const auto& r = out.result.record;
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%lld,%lld,%.17g\n",
                  r.method.c_str(), 100.0 * size_fraction(out.result.net), r.a_cln, r.a_rob,
                  r.counters.steps, r.counters.forward_passes, r.counters.flops);
    csv += buf;
  }
  detail::atomic_write(out_csv, csv);
  std::cout << csv;
  return 0;
}

int cmd_ablate_era(const std::string& spec_path, const std::vector<std::string>& grid,
                   const std::string& out_csv) {
  ExperimentSpec s = load_spec(spec_path);
  Dataset train = read_container(s.train_path);
  Dataset test = read_container(s.test_path);
  TransformSet tset = default_transform_set();
  EvalEnv eval;
  eval.test = &test;
  eval.suite = s.suite;
  eval.seed = s.train.seed;

  Topology backbone = s.backbone;
  backbone.num_classes = train.num_classes;
  backbone.input_shape = {train.c, train.h, train.w};
  backbone.validate();

  // shared clean growth phase (no robust epochs yet)
  TrainConfig phase1 = s.train;
  phase1.er = 0;
  Network f0 = build(backbone, hash_mix(s.train.seed ^ hash_str("init-net")));
  auto p1 = gearnn2(f0, train, phase1, s.growth, tset, nullptr);

  std::vector<std::array<int, 3>> cells;
  if (grid.empty()) {
    cells = {{1, 1, 0}, {1, 3, 1}, {1, 3, 4}, {2, 3, 2}, {3, 3, 3}};
  } else {
    for (const auto& g : grid) {
      std::array<int, 3> c;
      if (std::sscanf(g.c_str(), "%d,%d,%d", &c[0], &c[1], &c[2]) != 3)
        throw TensorError("ablate-era: grid cell must be W,D,J: '" + g + "'");
      cells.push_back(c);
    }
  }

  std::string csv = "W,D,J,a_cln,a_rob,steps,forward_passes\n";
  char buf[256];
  for (const auto& cell : cells) {
    TrainConfig cfg = s.train;
    cfg.chain = ChainParams{cell[0], cell[1], cell[2]};
    cfg.chain.validate();
    // the robust phase continues the pipeline schedule, matching the two-phase driver
    Trainer tr(train, cfg, std::max(cfg.epochs, cfg.e1 + cfg.eg + cfg.e2 + cfg.er));
    tr.global_epoch = cfg.e1 + cfg.eg + cfg.e2;
    tr.transform_set = &tset;
    Network net = p1.net.clone();
    tr.train_robust(net, cfg.er);
    auto [a_cln, a_rob] = eval(net);
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g,%.17g,%lld,%lld\n", cell[0], cell[1],
                  cell[2], a_cln, a_rob, tr.counters.steps, tr.counters.forward_passes);
    csv += buf;
  }
  detail::atomic_write(out_csv, csv);
  std::cout << csv;
  return 0;
}

int cmd_growth_steps(const std::string& spec_path, std::vector<int> ms,
                     const std::string& out_csv) {
  ExperimentSpec s = load_spec(spec_path);
  if (ms.empty()) ms = {1, 2, 3, 4};
  std::string csv = "m,complexity,a_cln,a_rob,steps,forward_passes,flops\n";
  char buf[256];
  for (int m : ms) {
    ExperimentSpec cur = s;
    cur.method = m == 1 ? "gearnn2" : "mshot";
    cur.m = m;
    RunOutput out = execute(cur, false);
    const auto& r = out.result.record;
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%lld,%lld,%.17g\n", m,
                  complexity(out.result.net), r.a_cln, r.a_rob, r.counters.steps,
                  r.counters.forward_passes, r.counters.flops);
    csv += buf;
  }
  detail::atomic_write(out_csv, csv);
  std::cout << csv;
  return 0;
}

std::vector<Image> dataset_images(const Dataset& ds) {
  std::vector<Image> out;
  out.reserve(ds.n);
  for (int i = 0; i < ds.n; ++i) out.push_back(ds.get(i));
  return out;
}

int cmd_analyze_topology(const std::vector<std::string>& records, const std::string& out_dir) {
  std::vector<Topology> topos;
  for (const auto& r : records) topos.push_back(topology_of_run(r));
  auto rep = topology_report(topos);
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "topology_report.csv", topology_report_csv(rep));
  write_text(fs::path(out_dir) / "topology_report.svg", topology_report_svg(rep));
  std::cout << topology_report_csv(rep);
  return 0;
}

int cmd_analyze_fourier(const std::string& data_path, const std::string& out_dir,
                        std::uint64_t seed) {
  Dataset ds = read_container(data_path);
  auto clean = dataset_images(ds);
  fs::create_directories(out_dir);
  std::vector<Image> all_clean, all_mod;
  json manifest;
  for (const auto& c : default_suite()) {
    Dataset mod = corrupt_dataset(ds, c, seed);
    auto modified = dataset_images(mod);
    auto prof = delta_spectrum(clean, modified);
    const std::string stem =
        std::string(corruption_name(c.kind)) + "-s" + std::to_string(c.severity);
    write_text(fs::path(out_dir) / (stem + ".csv"), spectrum_csv(prof));
    write_text(fs::path(out_dir) / (stem + ".pgm"), spectrum_pgm(prof));
    manifest[stem] = prof.low_freq_fraction;
    all_clean.insert(all_clean.end(), clean.begin(), clean.end());
    all_mod.insert(all_mod.end(), modified.begin(), modified.end());
  }
  auto mean_prof = delta_spectrum(all_clean, all_mod);
  write_text(fs::path(out_dir) / "all.csv", spectrum_csv(mean_prof));
  write_text(fs::path(out_dir) / "all.pgm", spectrum_pgm(mean_prof));
  manifest["all"] = mean_prof.low_freq_fraction;
  detail::atomic_write(fs::path(out_dir) / "low_freq_fractions.json", manifest.dump(2) + "\n");
  std::cout << "low-frequency fractions written to " << out_dir << "\n";
  return 0;
}

int cmd_analyze_loss_slice(const std::string& ckpt_path, const std::string& data_path,
                           int points, std::uint64_t seed, const std::string& out_csv) {
  Network net = load_checkpoint(ckpt_path);
  Dataset ds = read_container(data_path);
  auto slice = loss_slice(net, ds, points, seed);
  detail::atomic_write(out_csv, loss_slice_csv(slice));
  std::cout << loss_slice_csv(slice);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();
  CLI::App app{"gearlab: grow compact corruption-robust CNNs"};
  app.require_subcommand(1);

  // gen-data
  std::uint64_t gd_seed = 0;
  std::string gd_out = "data";
  int gd_n_train = 3000, gd_n_test = 600, gd_size = 16, gd_classes = 3;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
  gen->add_option("--seed", gd_seed, "rng seed");
  gen->add_option("--out", gd_out, "output directory");
  gen->add_option("--n-train", gd_n_train, "training samples");
  gen->add_option("--n-test", gd_n_test, "test samples");
  gen->add_option("--size", gd_size, "image edge length");
  gen->add_option("--classes", gd_classes, "number of classes (2 or 3)");

  // run
  std::string run_spec;
  auto* run = app.add_subcommand("run", "execute one experiment spec");
  run->add_option("--spec", run_spec, "experiment spec JSON")->required();

  // compare
  std::vector<std::string> cmp_specs;
  std::string cmp_out = "report.csv";
  auto* cmp = app.add_subcommand("compare", "run several specs and tabulate the results");
  cmp->add_option("--specs", cmp_specs, "spec files")->required()->expected(-1);
  cmp->add_option("--out", cmp_out, "report CSV path");

  // ablate-era
  std::string ab_spec, ab_out = "era_ablation.csv";
  std::vector<std::string> ab_grid;
  auto* ab = app.add_subcommand("ablate-era", "sweep augmentation (W,D,J) cells");
  ab->add_option("--spec", ab_spec, "base experiment spec")->required();
  ab->add_option("--grid", ab_grid, "cells as W,D,J triples");
  ab->add_option("--out", ab_out, "output CSV path");

  // growth-steps
  std::string gs_spec, gs_out = "growth_steps.csv";
  std::vector<int> gs_m;
  auto* gs = app.add_subcommand("growth-steps", "compare m-step growth at iso final size");
  gs->add_option("--spec", gs_spec, "base experiment spec")->required();
  gs->add_option("--m", gs_m, "growth step counts");
  gs->add_option("--out", gs_out, "output CSV path");

  // analyze
  std::string an_what, an_data, an_ckpt, an_out = "analysis";
  std::vector<std::string> an_records;
  int an_points = 21;
  std::uint64_t an_seed = 0;
  auto* an = app.add_subcommand("analyze", "diagnostics: topology, fourier, loss-slice");
  an->add_option("--what", an_what, "topology | fourier | loss-slice")->required();
  an->add_option("--records", an_records, "run directories (topology)");
  an->add_option("--data", an_data, "dataset container (fourier, loss-slice)");
  an->add_option("--checkpoint", an_ckpt, "network checkpoint (loss-slice)");
  an->add_option("--points", an_points, "slice sample count");
  an->add_option("--seed", an_seed, "rng seed");
  an->add_option("--out", an_out, "output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gd_seed, gd_out, gd_n_train, gd_n_test, gd_size,
                                           gd_classes);
    if (run->parsed()) return cmd_run(run_spec);
    if (cmp->parsed()) return cmd_compare(cmp_specs, cmp_out);
    if (ab->parsed()) return cmd_ablate_era(ab_spec, ab_grid, ab_out);
    if (gs->parsed()) return cmd_growth_steps(gs_spec, gs_m, gs_out);
    if (an->parsed()) {
      if (an_what == "topology") return cmd_analyze_topology(an_records, an_out);
      if (an_what == "fourier") return cmd_analyze_fourier(an_data, an_out, an_seed);
      if (an_what == "loss-slice")
        return cmd_analyze_loss_slice(an_ckpt, an_data, an_points, an_seed, an_out);
      throw TensorError("analyze: unknown --what '" + an_what + "'");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
