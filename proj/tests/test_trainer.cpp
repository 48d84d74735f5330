#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ampli/trainer.hpp"

using namespace ampli;

namespace {

RunConfig small_config(const char* phases) {
  RunConfig c;
  c.run_id = "t";
  c.network.hidden = {8, 8, 8};
  c.network.batchnorm = true;
  c.batch_size = 16;
  c.strategy = parse_strategy(phases);
  c.policy = {Measure::g, SelectionCase::two_sided, 0.5};
  c.seed = 3;
  return c;
}

Dataset moons(std::size_t n = 200) { return gen_synthetic(SyntheticKind::two_moons, n, 0.2, 2, 1); }

AmpSet all_layers(const Network& net) {
  AmpSet s;
  for (std::size_t id = 0; id < net.param_layer_count(); ++id) s.selected.push_back(id);
  return s;
}

/// Plain training loop with no recording, selection or amplification.
Network uninstrumented_baseline(const RunConfig& c, const Dataset& data, std::vector<double>* losses = nullptr) {
  const Split split = split_dataset(data, c.split);
  Network net = make_mlp({data.dims(), c.network.hidden, data.class_count, c.network.batchnorm}, c.seed);
  for (int epoch = 1; epoch <= c.strategy.total_epochs(); ++epoch) {
    for (const Batch& b : make_batches(split.train, c.batch_size, c.seed, epoch)) {
      const ForwardResult fr = forward(net, b.features, Mode::train);
      const LossResult lr = loss_softmax_ce(fr.logits, b.labels);
      const GradientSet g = backward(net, fr.cache, lr.dlogits);
      update_running_stats(net, fr.cache);
      sgd_step(net, g, phase_at(c.strategy, epoch).lr);
      if (losses != nullptr) losses->push_back(lr.loss);
    }
  }
  return net;
}

}  // namespace

TEST(ApplyAmplification, FactorOneIsIdentity) {
  const GradientSet g{{{0.1, -0.2}, {0.3}}};
  EXPECT_EQ(apply_amplification(g, {{0, 1}}, 1.0), g);
}

TEST(ApplyAmplification, ScalesSelectedLayersOnly) {
  const GradientSet g{{{0.1, -0.2}, {0.3}}};
  const GradientSet out = apply_amplification(g, {{0}}, 2.0);
  EXPECT_EQ(out[0], (std::vector<double>{0.2, -0.4}));
  EXPECT_EQ(out[1], g[1]);
  EXPECT_EQ(g[0], (std::vector<double>{0.1, -0.2}));
}

TEST(ApplyAmplification, RejectsFactorBelowOneAndUnknownLayer) {
  const GradientSet g{{{0.1}}};
  EXPECT_THROW(apply_amplification(g, {{0}}, 0.5), Error);
  EXPECT_THROW(apply_amplification(g, {{3}}, 2.0), Error);
}

TEST(ApplyAmplification, EquivalentToScaledLearningRate) {
  Network a({LayerSpec::dense(1, 1)}, 0);
  a.param_layer(0).weight.data = {1.0};
  Network b = a;
  const GradientSet g{{{0.3, 0.0}}};
  sgd_step(a, apply_amplification(g, {{0}}, 2.0), 0.1);
  sgd_step(b, g, 0.2);
  EXPECT_EQ(a.param_layer(0).weight.data[0], 0.94);
  EXPECT_EQ(a, b);
}

TEST(TrainEpoch, AmplifiedEpochMatchesScaledRate) {
  const Dataset data = moons();
  Network a = make_mlp({2, {8, 8}, 2, true}, 5);
  Network b = a;
  const auto batches = make_batches(data, 16, 1, 1);
  const AmpSet all = all_layers(a);
  train_epoch(a, batches, {0.1, &all, 2.0, nullptr, 1});
  train_epoch(b, batches, {0.2, nullptr, 1.0, nullptr, 1});
  for (std::size_t id = 0; id < a.param_layer_count(); ++id) {
    for (std::size_t k = 0; k < a.param_layer(id).weight.size(); ++k)
      EXPECT_NEAR(a.param_layer(id).weight.data[k], b.param_layer(id).weight.data[k], 1e-12);
  }
}

TEST(TrainEpoch, RecordingDoesNotPerturbTraining) {
  const Dataset data = moons();
  Network a = make_mlp({2, {8}, 2, true}, 5);
  Network b = a;
  const auto batches = make_batches(data, 16, 1, 1);
  GradientAccumulator acc(a.param_sizes());
  train_epoch(a, batches, {0.1, nullptr, 1.0, &acc, 1});
  train_epoch(b, batches, {0.1, nullptr, 1.0, nullptr, 1});
  EXPECT_EQ(a, b);
  EXPECT_EQ(acc.iterations(), batches.size());
}

TEST(Evaluate, ConstantPredictorOnBalancedSet) {
  Network net({LayerSpec::dense(2, 2)}, 0);
  net.param_layer(0).weight.data.assign(4, 0.0);
  net.param_layer(0).bias.data = {1.0, 0.0};
  EXPECT_EQ(evaluate(net, gen_synthetic(SyntheticKind::two_moons, 100, 0.1, 2, 0)), 0.5);
}

TEST(Evaluate, PerfectMemorizer) {
  Dataset ds;
  ds.features = matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 0}});
  ds.labels = {0, 1, 2, 1};
  ds.class_count = 3;
  Network net({LayerSpec::dense(3, 3)}, 0);
  net.param_layer(0).weight.data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_EQ(evaluate(net, ds), 1.0);
  Dataset empty;
  EXPECT_THROW(evaluate(net, empty), ConfigError);
}

TEST(Evaluate, UntrainedNetworkReproducible) {
  const Dataset data = moons(400);
  const Split s = split_dataset(data, {});
  const double a = evaluate(make_mlp({2, {16, 16}, 2, true}, 12), s.test);
  const double b = evaluate(make_mlp({2, {16, 16}, 2, true}, 12), s.test);
  EXPECT_EQ(a, b);
}

TEST(Trainer, ToyStrategySelectsOnceAfterEpochThree) {
  const RunConfig c = small_config("[(2,0.1,0,1),(4,0.1,1,2),(5,0.01,0,1)]");
  const RunReport r = Trainer(c, moons()).run();
  ASSERT_EQ(r.epochs.size(), 5u);
  ASSERT_EQ(r.selections.size(), 1u);
  EXPECT_EQ(r.selections[0].epoch, 3);
  EXPECT_FALSE(r.selections[0].layers.empty());
  for (const EpochRecord& e : r.epochs) {
    EXPECT_EQ(e.amp_active, e.epoch == 4) << "epoch " << e.epoch;
    if (e.epoch == 4) {
      EXPECT_EQ(e.selected, r.selections[0].layers);
      EXPECT_EQ(e.amp_factor, 2.0);
    } else {
      EXPECT_TRUE(e.selected.empty());
    }
  }
  // ratios traced for every layer of the analysis epoch only
  const std::size_t layers = 3 * 2 + 1;
  ASSERT_EQ(r.ratios.size(), layers);
  for (const RatioRecord& x : r.ratios) {
    EXPECT_EQ(x.epoch, 3);
    EXPECT_GE(x.g, 0.0);
    EXPECT_LE(x.g, 1.0);
    EXPECT_GE(x.gprime, 0.0);
    EXPECT_LE(x.gprime, 1.0);
  }
}

TEST(Trainer, ReportHasOneRecordPerEpoch) {
  RunConfig c = small_config("[(2,0.1,0,1),(6,0.1,1,2),(8,0.01,0,1)]");
  c.strategy.reselect = Reselect::every(2);
  const RunReport r = Trainer(c, moons()).run();
  ASSERT_EQ(r.epochs.size(), 8u);
  for (std::size_t i = 0; i < r.epochs.size(); ++i) {
    const EpochRecord& e = r.epochs[i];
    EXPECT_EQ(e.epoch, static_cast<int>(i) + 1);
    EXPECT_GE(e.test_acc, 0.0);
    EXPECT_LE(e.test_acc, 1.0);
    EXPECT_GE(e.train_acc, 0.0);
    EXPECT_LE(e.train_acc, 1.0);
    if (!c.strategy.phases[e.phase].is_amp) EXPECT_TRUE(e.selected.empty());
  }
  std::vector<int> sel_epochs;
  for (const SelectionEvent& s : r.selections) sel_epochs.push_back(s.epoch);
  EXPECT_EQ(sel_epochs, (std::vector<int>{3, 5}));
  // analysis epochs run unamplified
  EXPECT_FALSE(r.epochs[2].amp_active);
  EXPECT_FALSE(r.epochs[4].amp_active);
}

TEST(Trainer, DisabledAmplificationMatchesUninstrumentedLoop) {
  RunConfig c = small_config("[(2,0.1,0,1),(4,0.05,0,1)]");
  c.trace_every_epoch = true;
  const Dataset data = moons();
  Trainer t(c, data);
  const RunReport r = t.run();
  EXPECT_EQ(r.ratios.size(), 4u * 7u);
  EXPECT_EQ(t.network(), uninstrumented_baseline(c, data));
}

TEST(Trainer, EmptySelectionMatchesBaseline) {
  RunConfig c = small_config("[(1,0.1,0,1),(3,0.1,1,2),(4,0.01,0,1)]");
  c.policy.threshold = 1e6;
  const Dataset data = moons();
  Trainer t(c, data);
  const RunReport r = t.run();
  ASSERT_EQ(r.selections.size(), 1u);
  EXPECT_TRUE(r.selections[0].layers.empty());
  EXPECT_EQ(t.network(), uninstrumented_baseline(c, data));
}

TEST(Trainer, FactorOneMatchesBaseline) {
  RunConfig c = small_config("[(1,0.1,0,1),(3,0.1,1,1),(4,0.01,0,1)]");
  c.policy.threshold = 0.0;
  const Dataset data = moons();
  Trainer t(c, data);
  const RunReport r = t.run();
  EXPECT_TRUE(r.epochs[2].amp_active);
  EXPECT_EQ(t.network(), uninstrumented_baseline(c, data));
}

TEST(Trainer, AmplificationChangesTrajectory) {
  RunConfig c = small_config("[(1,0.1,0,1),(3,0.1,1,4),(4,0.01,0,1)]");
  c.policy.threshold = 0.0;
  const Dataset data = moons();
  Trainer t(c, data);
  t.run();
  EXPECT_FALSE(t.network() == uninstrumented_baseline(c, data));
}

TEST(Trainer, DeterministicGivenSeed) {
  const RunConfig c = small_config("[(2,0.1,0,1),(4,0.1,1,2),(5,0.01,0,1)]");
  const Dataset data = moons();
  Trainer a(c, data), b(c, data);
  const RunReport ra = a.run(), rb = b.run();
  EXPECT_EQ(a.network(), b.network());
  ASSERT_EQ(ra.epochs.size(), rb.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
    EXPECT_EQ(ra.epochs[i].train_loss, rb.epochs[i].train_loss);
    EXPECT_EQ(ra.epochs[i].test_acc, rb.epochs[i].test_acc);
  }
  EXPECT_EQ(ra.ratios, rb.ratios);
}

TEST(Trainer, ObserverSeesEveryEpoch) {
  const RunConfig c = small_config("[(3,0.1,0,1)]");
  Trainer t(c, moons());
  std::vector<int> seen;
  t.on_epoch_end([&](const EpochRecord& e, const Network&) { seen.push_back(e.epoch); });
  t.run();
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3}));
}

TEST(Trainer, DivergenceAbortsWithPartialReport) {
  RunConfig c = small_config("[(2,0.1,0,1),(6,1000,0,1)]");
  c.network.hidden.assign(8, 32);
  c.network.batchnorm = false;
  try {
    Trainer(c, moons()).run();
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_GE(e.epoch(), 3);
    EXPECT_TRUE(e.report.aborted);
    EXPECT_EQ(e.report.epochs.size(), static_cast<std::size_t>(e.epoch() - 1));
    EXPECT_NE(e.report.abort_message.find("epoch"), std::string::npos);
  }
}

TEST(Trainer, ShapeMismatchRejectedBeforeTraining) {
  RunConfig c = small_config("[(2,0.1,0,1)]");
  c.network.input_width = 3;
  EXPECT_THROW(Trainer(c, moons()), ConfigError);
  c.network.input_width = 0;
  c.network.classes = 4;
  EXPECT_THROW(Trainer(c, moons()), ConfigError);
  c.network.classes = 0;
  c.batch_size = 0;
  EXPECT_THROW(Trainer(c, moons()), ConfigError);
}

TEST(Trainer, CsvWarningsReachReport) {
  Dataset ds;
  ds.features = Tensor({8, 1}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7});
  ds.labels = {0, 2, 0, 2, 0, 2, 0, 2};
  ds.class_count = 3;
  ds.warnings = {"class 1 has no samples"};
  RunConfig c = small_config("[(1,0.1,0,1)]");
  c.split.train_fraction = 0.5;
  const RunReport r = Trainer(c, ds).run();
  EXPECT_EQ(r.warnings, ds.warnings);
}
