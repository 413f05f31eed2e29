#include <gtest/gtest.h>

#include <set>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_support.hpp"

using namespace archpred;

namespace {

// Direct O(n^2) tau-b from the pair definition, in long double.
double tau_b_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  long double concordant = 0, discordant = 0, tie_x = 0, tie_y = 0, pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      ++pairs;
      const long double dx = (long double)x[i] - x[j], dy = (long double)y[i] - y[j];
      if (dx == 0) ++tie_x;
      if (dy == 0) ++tie_y;
      if (dx * dy > 0) ++concordant;
      if (dx * dy < 0) ++discordant;
    }
  }
  return double((concordant - discordant) / std::sqrt((pairs - tie_x) * (pairs - tie_y)));
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.dgsa.d_model = 8;
  c.dgsa.n_heads = 2;
  c.dgsa.n_layers = 1;
  c.encoder.d_model = 8;
  c.head_hidden = 8;
  return c;
}

Dataset synthetic(std::size_t n, std::uint64_t seed, double sigma = 0.05, std::size_t families = 4,
                  const PlatformCatalog& catalog = default_platform_catalog()) {
  OracleConfig oc;
  oc.seed = seed;
  oc.noise_sigma = sigma;
  return generate_synthetic(oc, n, first_families(families), catalog);
}

Dataset with_platform_counts(const std::vector<std::pair<PlatformRecord, std::size_t>>& counts) {
  Dataset ds;
  for (const auto& [p, n] : counts) {
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      s.name = p.platform_id + "-" + std::to_string(i);
      s.graph = archpred::testing::chain3();
      s.platform = p;
      s.target = {TaskKind::latency, 1.0 + double(i % 7)};
      s.family = i % 2 ? "A" : "B";
      ds.samples.push_back(s);
    }
  }
  return ds;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("archpred_data_" + name)).string();
}

}  // namespace

TEST(MetricsTest, HandExample) {
  const std::vector<double> p{90, 120}, t{100, 100};
  EXPECT_DOUBLE_EQ(mape(p, t), 15.0);
  // |90 - 100| / 100 is exactly the threshold, which does not count.
  EXPECT_DOUBLE_EQ(acc_at(p, t), 0.0);
}

TEST(MetricsTest, AccBoundaryIsStrict) {
  const std::vector<double> t{100, 100};
  EXPECT_DOUBLE_EQ(acc_at(std::vector<double>{109, 110}, t), 50.0);
  EXPECT_DOUBLE_EQ(acc_at(std::vector<double>{100, 91}, t), 100.0);
}

TEST(MetricsTest, KendallHandExample) {
  EXPECT_NEAR(kendall_tau(std::vector<double>{1, 3, 2}, std::vector<double>{1, 2, 3}), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(kendall_tau(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-15);
}

TEST(MetricsTest, DegenerateInputsAreRejected) {
  EXPECT_THROW(kendall_tau(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), ContractError);
  EXPECT_THROW(mape(std::vector<double>{1}, std::vector<double>{0}), ContractError);
  EXPECT_THROW(mape(std::vector<double>{1, 2}, std::vector<double>{1}), ContractError);
  EXPECT_THROW(mape(std::vector<double>{}, std::vector<double>{}), ContractError);
  MetricsReport r = compute_metrics(std::vector<double>{1, 1}, std::vector<double>{1, 2});
  EXPECT_FALSE(r.kendall_tau.has_value());
}

TEST(MetricsTest, AgreesWithLoopOraclesOnRandomVectors) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<double> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = rng.uniform(0.5, 20.0);
      p[i] = t[i] * rng.uniform(0.7, 1.3);
      // Coarse rounding of some entries creates ties on both sides.
      if (rng.below(4) == 0) p[i] = std::round(p[i]);
      if (rng.below(4) == 0) t[i] = std::round(t[i]) + 1.0;
    }
    long double abs_rel = 0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const long double rel = std::abs((long double)p[i] - t[i]) / t[i];
      abs_rel += rel;
      hits += std::abs(p[i] - t[i]) / t[i] < 0.10;
    }
    ASSERT_NEAR(mape(p, t), double(100 * abs_rel / n), 1e-12);
    ASSERT_NEAR(acc_at(p, t), 100.0 * double(hits) / double(n), 1e-12);
    bool all_tied = true;
    for (std::size_t i = 1; i < n; ++i) all_tied = all_tied && p[i] == p[0];
    if (!all_tied) {
      ASSERT_NEAR(kendall_tau(p, t), tau_b_oracle(p, t), 1e-12);
    }
  }
}

TEST(SplitTest, PlatformZeroShotHoldsOutExactlyOneConfiguration) {
  const PlatformRecord a{"a100-fp32", "Nv", "GPU", "FP32", 19.5, "Ampere", 400};
  const PlatformRecord b{"a100-int8", "Nv", "GPU", "INT8", 624, "Ampere", 400};
  const PlatformRecord c = archpred::testing::t4_fp32();
  const PlatformRecord d{"t4-int8", "Nv", "GPU", "INT8", 130, "Turing", 70};
  Dataset ds = with_platform_counts({{a, 1416}, {b, 1075}, {c, 1150}, {d, 1553}});
  auto [train, test] = split_platform_zero_shot(ds, "t4-fp32");
  EXPECT_EQ(test.size(), 1150u);
  EXPECT_EQ(train.size(), 1416u + 1075u + 1553u);
  for (const auto& s : test.samples) EXPECT_EQ(s.platform.platform_id, "t4-fp32");
  for (const auto& s : train.samples) EXPECT_NE(s.platform.platform_id, "t4-fp32");
  EXPECT_THROW(split_platform_zero_shot(ds, "v100-fp32"), KeyError);
}

TEST(SplitTest, AllProtocolsPartitionTheDataset) {
  Dataset ds = synthetic(120, 3);
  for (const std::string split : {"leave-out:ResNet-like", "platform:genc-int8", "random:0.25"}) {
    auto [train, test] = apply_split(ds, split, 4);
    ASSERT_EQ(train.size() + test.size(), ds.size()) << split;
    std::multiset<std::string> names;
    for (const auto& s : train.samples) names.insert(s.name);
    for (const auto& s : test.samples) names.insert(s.name);
    std::multiset<std::string> expected;
    for (const auto& s : ds.samples) expected.insert(s.name);
    EXPECT_EQ(names, expected) << split;
    EXPECT_FALSE(test.empty()) << split;
  }
  auto [train, test] = apply_split(ds, "random:0.25", 4);
  EXPECT_EQ(test.size(), 30u);
  EXPECT_EQ(apply_split(ds, "random:0.25", 4).second.samples, test.samples);
  EXPECT_THROW(apply_split(ds, "leave-out:NoSuchFamily"), KeyError);
  EXPECT_THROW(apply_split(ds, "bogus"), ContractError);
}

TEST(SyntheticTest, PureInSeed) {
  Dataset a = synthetic(50, 7), b = synthetic(50, 7), c = synthetic(50, 8);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
}

TEST(SyntheticTest, FamiliesAndPositiveTargets) {
  Dataset ds = synthetic(90, 2, 0.05, 3);
  EXPECT_EQ(ds.families().size(), 3u);
  for (const auto& [family, n] : ds.family_counts()) EXPECT_EQ(n, 30u) << family;
  for (const auto& s : ds.samples) {
    EXPECT_GT(s.target.value, 0.0);
    EXPECT_GE(s.graph.size(), 4u);
    EXPECT_LE(s.graph.size(), 20u);
  }
  EXPECT_THROW(first_families(0), ContractError);
  EXPECT_THROW(first_families(11), ContractError);
}

TEST(SyntheticTest, NoiselessTargetsMatchTheOracle) {
  OracleConfig oc;
  oc.noise_sigma = 0.0;
  Dataset ds = generate_synthetic(oc, 20, available_families(), default_platform_catalog());
  for (const auto& s : ds.samples) EXPECT_EQ(s.target.value, oracle_latency(oc, s.graph, s.platform));
}

TEST(SyntheticTest, OracleScalesWithPrecisionAndThroughput) {
  OracleConfig oc;
  ArchGraph g = archpred::testing::chain3();
  PlatformRecord fp32 = archpred::testing::t4_fp32();
  PlatformRecord int8 = fp32;
  int8.precision = "INT8";
  // Conv 3x3 costs 2, ReLU 0.1, Conv 1x1 costs 2/9, scaled by 8 / 8.1.
  const double base = (2.0 + 0.1 + 2.0 / 9.0) * 8.0 / 8.1;
  EXPECT_NEAR(oracle_latency(oc, g, fp32), base, 1e-12);
  EXPECT_NEAR(oracle_latency(oc, g, int8), base * 0.35, 1e-12);
}

TEST(SyntheticTest, RandomPlatformCatalog) {
  const PlatformCatalog a = random_platform_catalog(10, 3);
  EXPECT_EQ(a, random_platform_catalog(10, 3));
  EXPECT_NE(a, random_platform_catalog(10, 4));
  ASSERT_EQ(a.size(), 20u);
  std::set<std::string> ids, archs;
  for (std::size_t i = 0; i < a.size(); i += 2) {
    const PlatformRecord& fp32 = a[i];
    const PlatformRecord& int8 = a[i + 1];
    EXPECT_EQ(fp32.precision, "FP32");
    EXPECT_EQ(int8.precision, "INT8");
    EXPECT_GE(fp32.throughput_tflops, 1.0);
    EXPECT_LE(fp32.throughput_tflops, 40.0);
    EXPECT_NEAR(int8.throughput_tflops, 4.0 * fp32.throughput_tflops, 0.051);
    EXPECT_EQ(fp32.microarch, int8.microarch);
    EXPECT_NO_THROW(render_platform_template(fp32));
    ids.insert(fp32.platform_id);
    ids.insert(int8.platform_id);
    archs.insert(fp32.microarch);
  }
  EXPECT_EQ(ids.size(), 20u);
  EXPECT_LT(archs.size(), 10u);  // names are shared between devices
  for (const auto& p : default_platform_catalog()) EXPECT_EQ(ids.count(p.platform_id), 0u);
  EXPECT_TRUE(random_platform_catalog(0, 1).empty());
}

TEST(DatasetIoTest, JsonlRoundTrip) {
  Dataset ds = synthetic(15, 5);
  const std::string path = temp_path("rt.jsonl");
  write_dataset_jsonl(ds, path);
  Dataset back = read_dataset_jsonl(path, default_platform_catalog());
  EXPECT_EQ(back.samples, ds.samples);
  std::remove(path.c_str());
}

TEST(DatasetIoTest, ErrorsNameTheLine) {
  const std::string path = temp_path("bad.jsonl");
  Dataset ds = synthetic(2, 5);
  {
    std::ofstream out(path);
    out << sample_to_json(ds.samples[0]).dump() << "\n{not json\n";
  }
  try {
    read_dataset_jsonl(path, default_platform_catalog());
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  {
    std::ofstream out(path);
    nlohmann::json j = sample_to_json(ds.samples[0]);
    j["platform_id"] = "unknown-device";
    out << j.dump() << "\n";
  }
  EXPECT_THROW(read_dataset_jsonl(path, default_platform_catalog()), SchemaError);
  { std::ofstream out(path); }
  EXPECT_THROW(read_dataset_jsonl(path, default_platform_catalog()), SchemaError);
  std::remove(path.c_str());
  EXPECT_THROW(read_dataset_jsonl(temp_path("missing.jsonl"), default_platform_catalog()), IoError);
}

TEST(TrainTest, SmokeOneEpoch) {
  Dataset ds = synthetic(10, 1);
  Model m = Model::create(tiny_config(), build_vocabulary(ds), 0);
  TrainHyper h;
  h.epochs = 1;
  h.batch_size = 4;
  auto log = train(m, ds, h, &ds);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_TRUE(std::isfinite(log[0].train_loss));
  ASSERT_TRUE(log[0].eval.has_value());
  EXPECT_EQ(log[0].eval->count, 10u);
}

TEST(TrainTest, LossDecreasesOnNoiselessData) {
  Dataset ds = synthetic(64, 2, 0.0);
  Model m = Model::create(tiny_config(), build_vocabulary(ds), 1);
  TrainHyper h;
  h.epochs = 5;
  h.batch_size = 8;
  h.lr = 3e-3;
  auto log = train(m, ds, h);
  ASSERT_EQ(log.size(), 5u);
  int increases = 0;
  for (std::size_t i = 1; i < log.size(); ++i) increases += log[i].train_loss >= log[i - 1].train_loss;
  EXPECT_LE(increases, 1);
  EXPECT_LT(log.back().train_loss, log.front().train_loss);
}

TEST(TrainTest, DeterministicInSeed) {
  Dataset ds = synthetic(24, 3);
  TrainHyper h;
  h.epochs = 2;
  h.batch_size = 5;
  auto run = [&](std::uint64_t seed) {
    Model m = Model::create(tiny_config(), build_vocabulary(ds), 4);
    h.seed = seed;
    train(m, ds, h);
    return m;
  };
  Model a = run(9), b = run(9), c = run(10);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_FALSE(a.params() == c.params());
  EXPECT_EQ(predict_all(a, ds, 1), predict_all(a, ds, 3));
}

TEST(TrainTest, CallbackCanStopEarly) {
  Dataset ds = synthetic(8, 3);
  Model m = Model::create(tiny_config(), build_vocabulary(ds), 4);
  TrainHyper h;
  h.epochs = 10;
  auto log = train(m, ds, h, nullptr, [](const EpochLog& e) { return e.epoch < 2; });
  EXPECT_EQ(log.size(), 2u);
}

TEST(TrainTest, InvalidInputsAreRejected) {
  Dataset ds = synthetic(8, 3);
  Model m = Model::create(tiny_config(), build_vocabulary(ds), 4);
  TrainHyper h;
  h.batch_size = 0;
  EXPECT_THROW(train(m, ds, h), ContractError);
  EXPECT_THROW(train(m, Dataset{}, TrainHyper{}), ContractError);
  Dataset bad = ds;
  bad.samples[0].target.value = -1.0;
  EXPECT_THROW(train(m, bad, TrainHyper{}), ContractError);
}

TEST(TrainTest, DivergenceIsATrainingError) {
  Dataset ds = synthetic(8, 3);
  Model m = Model::create(tiny_config(), build_vocabulary(ds), 4);
  TrainHyper h;
  h.epochs = 3;
  h.lr = 1e300;
  EXPECT_THROW(train(m, ds, h), TrainingError);
}

TEST(ScheduleTest, CosineRunsFromLrToFloor) {
  TrainHyper h;
  EXPECT_DOUBLE_EQ(scheduled_lr(h, 0, 100), h.lr);
  EXPECT_NEAR(scheduled_lr(h, 99, 100), h.lr * h.lr_floor, 1e-18);
  for (std::size_t s = 1; s < 100; ++s) EXPECT_LE(scheduled_lr(h, s, 100), scheduled_lr(h, s - 1, 100));
  h.cosine_decay = false;
  EXPECT_DOUBLE_EQ(scheduled_lr(h, 50, 100), h.lr);
}

TEST(FinetuneTest, ZeroEpochsLeavesModelUnchanged) {
  Dataset ds = synthetic(8, 3);
  Model m = Model::create(tiny_config(), build_vocabulary(ds), 4);
  const ParamStore before = m.params();
  TrainHyper h = finetune_defaults();
  h.epochs = 0;
  EXPECT_TRUE(finetune(m, ds, h).empty());
  EXPECT_EQ(m.params(), before);
  EXPECT_DOUBLE_EQ(finetune_defaults().lr, 1e-4);
}

TEST(FinetuneTest, DoesNotDegradeThePretrainDistribution) {
  Dataset pre = synthetic(160, 4);
  Dataset pre_eval = synthetic(60, 40);
  Model m = Model::create(tiny_config(), build_vocabulary(pre, default_platform_catalog()), 5);
  TrainHyper h;
  h.epochs = 4;
  h.batch_size = 16;
  train(m, pre, h);
  const double before = evaluate(m, pre_eval).mape_pct;

  Dataset target = apply_split(synthetic(120, 41), "platform:gena-int8").second;
  TrainHyper fh = finetune_defaults();
  fh.epochs = 3;
  fh.batch_size = 16;
  finetune(m, target, fh);
  const double after = evaluate(m, pre_eval).mape_pct;
  EXPECT_LE(after, 1.10 * before) << "before " << before << " after " << after;
}

TEST(FinetuneTest, ZeroShotProtocolRuns) {
  Dataset ds = synthetic(80, 6);
  auto [train_side, test_side] = split_platform_zero_shot(ds, "gend-fp32");
  Model m = Model::create(tiny_config(), build_vocabulary(train_side, default_platform_catalog()), 7);
  TrainHyper h;
  h.epochs = 1;
  train(m, train_side, h);
  MetricsReport r = evaluate(m, test_side);
  EXPECT_EQ(r.count, test_side.size());
  EXPECT_TRUE(std::isfinite(r.mape_pct));
}

TEST(ReportTest, PerFamilyBreakdown) {
  Dataset ds = synthetic(30, 8, 0.05, 3);
  std::vector<double> preds = targets_of(ds);
  MetricsReport r = report_for(ds, preds);
  EXPECT_DOUBLE_EQ(r.mape_pct, 0.0);
  EXPECT_DOUBLE_EQ(r.acc_at_10_pct, 100.0);
  EXPECT_EQ(r.per_family.size(), 3u);

  std::ostringstream out;
  write_log_csv({EpochLog{1, 0.5, r}, EpochLog{2, 0.25, std::nullopt}}, out);
  std::istringstream lines(out.str());
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, kLogHeader);
}
