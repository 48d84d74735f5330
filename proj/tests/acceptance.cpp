// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ampli/ampli.hpp"
#include "ampli/commands.hpp"
#include "support/oracles.hpp"

using namespace ampli;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Plain training loop with no recording, selection or amplification.
Network uninstrumented_baseline(const RunConfig& c, const Dataset& data) {
  const Split split = split_dataset(data, c.split);
  Network net = make_mlp({data.dims(), c.network.hidden, data.class_count, c.network.batchnorm}, c.seed);
  for (int epoch = 1; epoch <= c.strategy.total_epochs(); ++epoch) {
    for (const Batch& b : make_batches(split.train, c.batch_size, c.seed, epoch)) {
      const ForwardResult fr = forward(net, b.features, Mode::train);
      const LossResult lr = loss_softmax_ce(fr.logits, b.labels);
      const GradientSet g = backward(net, fr.cache, lr.dlogits);
      update_running_stats(net, fr.cache);
      sgd_step(net, g, phase_at(c.strategy, epoch).lr);
    }
  }
  return net;
}

Outcome ratio_oracle() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(2024);
  double worst = 0.0;
  bool in_range = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t layers = 1 + uniform_index(rng, 8), iters = 1 + uniform_index(rng, 20);
    std::vector<std::size_t> sizes(layers);
    for (auto& n : sizes) n = 1 + uniform_index(rng, 50);
    std::vector<oracle::Stream> streams(layers);
    GradientAccumulator acc(sizes);
    for (std::size_t j = 0; j < iters; ++j) {
      for (std::size_t l = 0; l < layers; ++l) {
        std::vector<double> g(sizes[l]);
        for (double& v : g) v = uniform01(rng) < 0.15 ? 0.0 : uniform(rng, -10.0, 10.0);
        acc.accumulate(l, g);
        streams[l].push_back(std::move(g));
      }
      acc.end_iteration();
    }
    for (std::size_t l = 0; l < layers; ++l) {
      const double g = ratio_g(acc, l), gp = ratio_gprime(acc, l);
      worst = std::max({worst, std::abs(g - oracle::brute_force_g(streams[l])),
                        std::abs(gp - oracle::brute_force_gprime(streams[l]))});
      in_range = in_range && g >= 0.0 && g <= 1.0 && gp >= 0.0 && gp <= 1.0;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && in_range && secs < 5.0,
          "max |diff| " + fmt("%.3g", worst) + ", in [0,1]: " + (in_range ? "yes" : "no") + ", " + fmt("%.2f", secs) + " s"};
}

Outcome hand_anchors() {
  const std::vector<std::size_t> sizes{2};
  GradientAccumulator acc(sizes);
  acc.accumulate(0, std::vector<double>{1.0, 2.0});
  acc.end_iteration();
  acc.accumulate(0, std::vector<double>{-0.5, 1.0});
  acc.end_iteration();
  const double g = ratio_g(acc, 0), gp = ratio_gprime(acc, 0);
  return {std::abs(g - 7.0 / 9.0) <= 1e-12 && std::abs(gp - 2.0 / 3.0) <= 1e-12,
          "G " + fmt("%.15f", g) + ", G' " + fmt("%.15f", gp)};
}

Outcome normalization() {
  Rng rng = make_rng(77);
  double worst_mean = 0.0, worst_std = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(2 + uniform_index(rng, 60));
    for (double& v : r) v = uniform01(rng);
    const auto z = normalize(r);
    const double n = static_cast<double>(z.size());
    const double mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(std::sqrt(var / n) - 1.0));
  }
  bool zero_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> flat(1 + uniform_index(rng, 30), uniform01(rng));
    for (double v : normalize(flat)) zero_ok = zero_ok && v == 0.0;
  }
  return {worst_mean <= 1e-9 && worst_std <= 1e-9 && zero_ok,
          "max |mean| " + fmt("%.2g", worst_mean) + ", max |std-1| " + fmt("%.2g", worst_std) +
              ", zero spread gives zeros: " + (zero_ok ? "yes" : "no")};
}

Outcome selection_properties() {
  Rng rng = make_rng(91);
  int superset_violations = 0, monotone_violations = 0;
  auto subset = [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
  };
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> z(1 + uniform_index(rng, 40));
    for (double& v : z) v = normal(rng) * 1.5;
    const double t = uniform(rng, 0.0, 3.0), t2 = uniform(rng, t, 3.0);
    for (Measure m : {Measure::g, Measure::gprime}) {
      const auto one = select_layers(z, {m, SelectionCase::one_sided, t}).selected;
      const auto two = select_layers(z, {m, SelectionCase::two_sided, t}).selected;
      if (!subset(one, two)) ++superset_violations;
      for (SelectionCase c : {SelectionCase::one_sided, SelectionCase::two_sided}) {
        if (!subset(select_layers(z, {m, c, t2}).selected, select_layers(z, {m, c, t}).selected)) ++monotone_violations;
      }
    }
  }
  return {superset_violations == 0 && monotone_violations == 0,
          std::to_string(superset_violations) + " superset and " + std::to_string(monotone_violations) +
              " monotonicity violations"};
}

Outcome amplification_lr_equivalence() {
  const Dataset data = gen_synthetic(SyntheticKind::two_moons, 800, 0.25, 2, 3);
  const Split split = split_dataset(data, {});
  Network a = make_mlp({2, std::vector<std::size_t>(4, 32), 2, true}, 8);
  Network b = a;
  const auto batches = make_batches(split.train, 32, 8, 1);
  AmpSet all;
  for (std::size_t id = 0; id < a.param_layer_count(); ++id) all.selected.push_back(id);
  train_epoch(a, batches, {0.1, &all, 2.0, nullptr, 1});
  train_epoch(b, batches, {0.2, nullptr, 1.0, nullptr, 1});
  double worst = 0.0;
  for (std::size_t id = 0; id < a.param_layer_count(); ++id) {
    const Layer &la = a.param_layer(id), &lb = b.param_layer(id);
    for (std::size_t k = 0; k < la.weight.size(); ++k) worst = std::max(worst, std::abs(la.weight.data[k] - lb.weight.data[k]));
    for (std::size_t k = 0; k < la.bias.size(); ++k) worst = std::max(worst, std::abs(la.bias.data[k] - lb.bias.data[k]));
  }
  return {worst <= 1e-12, "max |param diff| " + fmt("%.3g", worst) + " over " + std::to_string(batches.size()) + " steps"};
}

Outcome gradient_correctness() {
  Rng rng = make_rng(313);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    std::vector<std::size_t> hidden(1 + uniform_index(rng, 3));
    for (auto& w : hidden) w = 2 + uniform_index(rng, 12);
    const std::size_t in = 1 + uniform_index(rng, 4), classes = 2 + uniform_index(rng, 3);
    const std::size_t batch = 2 + uniform_index(rng, 8);
    Network net = make_mlp({in, hidden, classes, draw % 2 == 0}, 500 + draw);
    oracle::randomize_offsets(net, rng);
    Tensor x({batch, in});
    for (double& v : x.data) v = normal(rng);
    std::vector<int> y(batch);
    for (int& v : y) v = static_cast<int>(uniform_index(rng, classes));
    const ForwardResult fr = forward(net, x, Mode::train);
    const GradientSet g = backward(net, fr.cache, loss_softmax_ce(fr.logits, y).dlogits);
    const auto fd = oracle::finite_difference_grads(net, x, y);
    for (std::size_t id = 0; id < fd.size(); ++id)
      for (std::size_t k = 0; k < fd[id].size(); ++k) worst = std::max(worst, oracle::relative_error(g[id][k], fd[id][k]));
  }
  return {worst < 1e-5, "max relative error " + fmt("%.3g", worst) + " over 20 draws"};
}

Outcome schedule_fidelity() {
  const char* schedule = "[(50,0.1,0,1),(100,0.1,is_amp,2),(130,0.01,is_amp,2),(150,0.01,0,1)]";
  const Dataset data = gen_synthetic(SyntheticKind::two_moons, 64, 0.2, 2, 5);
  std::string detail;
  bool ok = true;
  for (const Reselect r : {Reselect::once_per_phase(), Reselect::every(2)}) {
    RunConfig c;
    c.run_id = "sched";
    c.network.hidden = {4, 4};
    c.batch_size = 16;
    c.strategy = parse_strategy(schedule, r);
    c.policy = {Measure::g, SelectionCase::two_sided, 0.0};
    c.seed = 2;
    const RunReport rep = Trainer(c, data).run();
    std::vector<int> got, want;
    for (const SelectionEvent& s : rep.selections) got.push_back(s.epoch);
    if (r == Reselect::once_per_phase())
      want = {51, 101};
    else
      for (int e = 51; e <= 129; e += 2) want.push_back(e);
    bool tail_plain = rep.epochs.size() == 150;
    for (const EpochRecord& e : rep.epochs)
      if (e.epoch >= 131) tail_plain = tail_plain && !e.amp_active && e.selected.empty() && e.amp_factor == 1.0;
    ok = ok && got == want && tail_plain;
    detail += r.to_string() + ": " + std::to_string(got.size()) + " events" + (got == want ? " as expected" : " MISMATCH") +
              "; ";
    if (!tail_plain) detail += "epochs 131-150 amplified; ";
  }
  const TrainingStrategy once = parse_strategy(schedule, Reselect::once_per_phase());
  const TrainingStrategy every = parse_strategy(schedule, Reselect::every(2));
  bool schedule_ok = true;
  for (int e = 1; e <= 150; ++e) {
    const bool want_once = e == 51 || e == 101;
    const bool want_every = e >= 51 && e <= 129 && e % 2 == 1;
    schedule_ok = schedule_ok && reselection_due(once, e) == want_once && reselection_due(every, e) == want_every;
  }
  ok = ok && schedule_ok;
  detail += std::string("schedule predicate ") + (schedule_ok ? "agrees" : "disagrees");
  return {ok, detail};
}

Outcome noop_guarantee() {
  const Dataset data = gen_synthetic(SyntheticKind::two_moons, 400, 0.25, 2, 9);
  RunConfig c;
  c.run_id = "noop";
  c.network.hidden = {16, 16, 16};
  c.batch_size = 32;
  c.seed = 4;
  c.strategy = parse_strategy("[(2,0.1,0,1),(5,0.1,is_amp,1),(6,0.01,0,1)]");
  c.policy = {Measure::g, SelectionCase::two_sided, 0.0};
  const Network reference = uninstrumented_baseline(c, data);

  Trainer factor_one(c, data);
  const RunReport r1 = factor_one.run();
  const bool factor_ok = factor_one.network() == reference && !r1.selections.empty() && !r1.selections[0].layers.empty();

  c.strategy = parse_strategy("[(2,0.1,0,1),(5,0.1,is_amp,2),(6,0.01,0,1)]");
  c.policy.threshold = 1e9;
  Trainer empty_sel(c, data);
  const RunReport r2 = empty_sel.run();
  const bool empty_ok = empty_sel.network() == reference && !r2.selections.empty() && r2.selections[0].layers.empty();

  return {factor_ok && empty_ok, std::string("factor 1: ") + (factor_ok ? "bitwise equal" : "DIFFERS") +
                                     ", empty selection: " + (empty_ok ? "bitwise equal" : "DIFFERS")};
}

const char* kDeskConfig = R"({
  "run_id": "moons",
  "dataset": {"kind": "two_moons", "n": 2000, "noise": 0.25, "classes": 2, "seed": 0},
  "split": {"train_fraction": 0.8, "seed": 0, "stratified": true},
  "network": {"depth": 8, "width": 32, "batchnorm": true},
  "batch_size": 32,
  "strategy": {"phases": "[(10,0.1,0,1),(20,0.1,is_amp,2),(26,0.01,is_amp,2),(30,0.01,0,1)]",
               "reselect": "once_per_phase"},
  "policy": {"measure": "G", "case": "one_sided", "threshold": 1.0},
  "seed": 1
})";

struct DeskRun {
  int sweep_exit = -1;
  int report_exit = -1;
  double seconds = 0.0;
  std::vector<LoadedRun> runs;
  fs::path report_dir;
};

DeskRun run_desk_workload() {
  DeskRun d;
  const fs::path root = fs::temp_directory_path() / "ampli_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  json cfg = json::parse(kDeskConfig);
  cfg["output_dir"] = (root / "runs").string();
  std::ofstream(root / "moons.json") << cfg.dump(2);

  SweepOptions opt{(root / "moons.json").string()};
  opt.thresholds = "1.0:1.0:0.1";
  opt.cases = "one";
  opt.measures = "g";
  opt.seeds = "1,2,3,4,5,6,7";
  std::ostringstream out, err;
  const auto t0 = Clock::now();
  d.sweep_exit = cmd_sweep(opt, out, err);
  d.seconds = seconds_since(t0);
  d.report_dir = root / "report";
  d.report_exit = cmd_report({(root / "runs").string(), d.report_dir.string()}, out, err);
  d.runs = load_runs(root / "runs");
  return d;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome behavioral_analog(const DeskRun& d) {
  std::vector<double> amp, base;
  int diverged = 0;
  for (const LoadedRun& r : d.runs) {
    if (!r.completed()) {
      if (!r.baseline()) ++diverged;
      continue;
    }
    (r.baseline() ? base : amp).push_back(r.best_test_acc());
  }
  if (amp.size() + static_cast<std::size_t>(diverged) != 7 || base.size() != 7)
    return {false, "expected 7 amplified and 7 baseline runs, found " + std::to_string(amp.size()) + " and " +
                       std::to_string(base.size())};
  const double ma = median(amp), mb = median(base);
  const bool ok = d.sweep_exit == kExitOk && diverged == 0 && ma >= mb - 0.01 && d.seconds < 120.0;
  return {ok, "amplified median " + fmt("%.4f", ma) + ", baseline median " + fmt("%.4f", mb) + ", " +
                  std::to_string(diverged) + " diverged, " + fmt("%.1f", d.seconds) + " s"};
}

Outcome overhead(const DeskRun& d) {
  if (d.report_exit != kExitOk) return {false, "report failed"};
  std::ifstream in(d.report_dir / "timing.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto cells = split_list(line);
    if (cells.size() == 6 && cells[0] == "1.00_one_sided_G") {
      const double o = std::strtod(cells[4].c_str(), nullptr);
      return {1.0 + o <= 1.10, "instrumented / uninstrumented = " + fmt("%.4f", 1.0 + o)};
    }
  }
  return {false, "no amplified row in timing.csv"};
}

Outcome sweep_arithmetic() {
  const std::size_t a = threshold_grid(parse_threshold_range("0.7:2.5:0.1")).size();
  const std::size_t b = threshold_grid(parse_threshold_range("1.0:3.0:0.25")).size();
  return {a == 19 && b == 9, "0.7:2.5:0.1 -> " + std::to_string(a) + ", 1.0:3.0:0.25 -> " + std::to_string(b)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s  %2d  %-34s %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str());
    std::fflush(stdout);
  };
  report(1, "ratio oracle equivalence", ratio_oracle);
  report(2, "hand-computed anchors", hand_anchors);
  report(3, "normalization", normalization);
  report(4, "selection properties", selection_properties);
  report(5, "amplification / lr equivalence", amplification_lr_equivalence);
  report(6, "gradient correctness", gradient_correctness);
  report(7, "schedule fidelity", schedule_fidelity);
  report(8, "no-op guarantee", noop_guarantee);
  DeskRun desk;
  try {
    desk = run_desk_workload();
  } catch (const std::exception& e) {
    std::printf("desk workload failed: %s\n", e.what());
  }
  report(9, "desk-scale behavioral analog", [&] { return behavioral_analog(desk); });
  report(10, "instrumentation overhead", [&] { return overhead(desk); });
  report(11, "sweep arithmetic", sweep_arithmetic);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
