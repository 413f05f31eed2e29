#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace archpred;
using archpred::testing::node;
using archpred::testing::random_tensor;

namespace {

ModelConfig small_config(std::size_t d = 8, std::size_t layers = 1) {
  ModelConfig c;
  c.dgsa.d_model = d;
  c.dgsa.n_heads = 2;
  c.dgsa.n_layers = layers;
  c.encoder.d_model = d;
  c.head_hidden = 6;
  return c;
}

Vocabulary vocab_for(const std::vector<ArchGraph>& graphs, const PlatformRecord& p) {
  std::vector<TemplateString> corpus{render_platform_template(p)};
  for (const auto& g : graphs)
    for (const auto& n : g.nodes()) corpus.push_back(render_node_template(n));
  return Vocabulary::build(corpus);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("archpred_model_" + name)).string();
}

void perturb_all(ParamStore& store, Rng& rng, double scale) {
  for (auto& p : store)
    for (double& x : p.value.data()) x += scale * rng.uniform(-1.0, 1.0);
}

}  // namespace

TEST(ReadoutTest, SingleRowIsIdentity) {
  Rng rng(1);
  Tape tape;
  Tensor f = random_tensor(rng, 2, 4);
  Tensor r = Model::readout(tape.constant(f), 1).value();
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(r(0, c), f(0, c));
}

TEST(ReadoutTest, IdenticalRowsReturnThatRow) {
  Tensor f = Tensor::zeros(4, 3);
  for (std::size_t r = 0; r < 3; ++r) {
    f(r, 0) = 0.1;
    f(r, 1) = -2.5;
    f(r, 2) = 7.0;
  }
  f(3, 0) = 100.0;  // platform row is excluded
  Tape tape;
  Tensor r = Model::readout(tape.constant(f), 3).value();
  EXPECT_NEAR(r(0, 0), 0.1, 1e-15);
  EXPECT_NEAR(r(0, 1), -2.5, 1e-15);
  EXPECT_NEAR(r(0, 2), 7.0, 1e-15);
}

TEST(ReadoutTest, MeanOfFourRows) {
  Rng rng(2);
  Tensor f = random_tensor(rng, 5, 6);
  Tape tape;
  Tensor r = Model::readout(tape.constant(f), 4).value();
  for (std::size_t c = 0; c < 6; ++c) {
    long double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += f(i, c);
    EXPECT_NEAR(r(0, c), double(s / 4), 1e-14);
  }
}

TEST(ReadoutTest, EmptyGraphIsRejected) {
  Tape tape;
  EXPECT_THROW(Model::readout(tape.constant(Tensor::zeros(1, 3)), 0), ContractError);
}

TEST(ModelTest, ZeroHeadPredictsExpOfBias) {
  const auto plat = archpred::testing::t4_fp32();
  ArchGraph g = archpred::testing::five_node_graph();
  Model m = Model::create(small_config(), vocab_for({g}, plat), 3);
  m.set_head_bias(std::log(2.5));
  EXPECT_NEAR(m.predict(g, plat), 2.5, 1e-12);
  EXPECT_NEAR(m.predict(archpred::testing::chain3(), plat), 2.5, 1e-12);
}

TEST(ModelTest, SameSeedSameParameters) {
  const auto plat = archpred::testing::t4_fp32();
  ArchGraph g = archpred::testing::five_node_graph();
  Vocabulary v = vocab_for({g}, plat);
  Model a = Model::create(small_config(), v, 9);
  Model b = Model::create(small_config(), v, 9);
  Model c = Model::create(small_config(), v, 10);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_FALSE(a.params() == c.params());
  Rng rng(4);
  perturb_all(a.params(), rng, 0.1);
  EXPECT_EQ(a.predict(g, plat), a.predict(g, plat));
}

TEST(ModelTest, PredictionDependsOnPlatform) {
  ArchGraph g = archpred::testing::five_node_graph();
  PlatformRecord other{"x", "Nv", "GPU", "INT8", 130, "Turing", 70};
  Model m = Model::create(small_config(), vocab_for({g}, other), 5);
  Rng rng(6);
  perturb_all(m.params(), rng, 0.2);
  EXPECT_NE(m.predict(g, archpred::testing::t4_fp32()), m.predict(g, other));
}

TEST(ModelTest, ConfigJsonRoundTrip) {
  ModelConfig c = small_config();
  c.dgsa.gate_mode = GateMode::uniform_fixed;
  c.dgsa.mask_mode = MaskMode::additive_neg_inf;
  c.encoder.kind = EncoderKind::trainable_small;
  c.encoder.trainable = true;
  c.task = TaskKind::accuracy;
  EXPECT_EQ(model_config_from_json(to_json(c)), c);
}

TEST(ModelTest, MismatchedWidthsAreRejected) {
  ModelConfig c = small_config();
  c.encoder.d_model = 4;
  EXPECT_THROW(Model::create(c, Vocabulary::build({TemplateString("a")}), 0), ContractError);
}

TEST(LossTest, LatencyLossIsSquaredLogError) {
  EXPECT_DOUBLE_EQ(loss(2.0, {TaskKind::latency, 2.0}), 0.0);
  EXPECT_NEAR(loss(std::exp(1.0), {TaskKind::latency, 1.0}), 1.0, 1e-15);
  EXPECT_NEAR(loss(1.0, {TaskKind::latency, std::exp(-2.0)}), 4.0, 1e-14);
  EXPECT_THROW(loss(1.0, {TaskKind::latency, 0.0}), ContractError);
  EXPECT_THROW(loss(-1.0, {TaskKind::latency, 1.0}), ContractError);
}

TEST(LossTest, AccuracyLossIsSquaredError) {
  EXPECT_NEAR(loss(0.7, {TaskKind::accuracy, 0.5}), 0.04, 1e-15);
  EXPECT_THROW(loss(0.5, {TaskKind::accuracy, 1.5}), ContractError);
}

TEST(LossTest, TapeLossAgreesWithScalarLoss) {
  Tape tape;
  Var head = tape.constant(Tensor({1, 1}, {0.3}));
  const PredictionTarget t{TaskKind::latency, 1.7};
  EXPECT_NEAR(loss(head, t).value().item(), loss(std::exp(0.3), t), 1e-15);
}

TEST(CheckpointTest, RoundTripPreservesPredictions) {
  const auto plat = archpred::testing::t4_fp32();
  ArchGraph g = archpred::testing::five_node_graph();
  Model m = Model::create(small_config(8, 2), vocab_for({g}, plat), 7);
  Rng rng(8);
  perturb_all(m.params(), rng, 0.3);
  const std::string path = temp_path("roundtrip.json");
  save_checkpoint(m, path);
  Model back = load_checkpoint(path);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.vocabulary(), m.vocabulary());
  EXPECT_EQ(back.params(), m.params());
  EXPECT_EQ(back.predict(g, plat), m.predict(g, plat));
  const ModelConfig expected = m.config();
  EXPECT_NO_THROW(load_checkpoint(path, &expected));
  std::remove(path.c_str());
}

TEST(CheckpointTest, VersionMismatchIsAFormatError) {
  Model m = Model::create(small_config(), Vocabulary::build({TemplateString("a")}), 1);
  nlohmann::json j = checkpoint_json(m);
  j["version"] = kCheckpointVersion + 1;
  const std::string path = temp_path("version.json");
  std::ofstream(path) << j.dump();
  try {
    load_checkpoint(path);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(CheckpointTest, CorruptionIsDetected) {
  Model m = Model::create(small_config(), Vocabulary::build({TemplateString("a")}), 1);
  const std::string path = temp_path("corrupt.json");

  std::ofstream(path) << checkpoint_json(m).dump().substr(0, 100);
  EXPECT_THROW(load_checkpoint(path), IntegrityError);

  nlohmann::json j = checkpoint_json(m);
  j["parameters"][0]["data"][0] = j["parameters"][0]["data"][0].get<double>() + 1.0;
  std::ofstream(path) << j.dump();
  EXPECT_THROW(load_checkpoint(path), IntegrityError);

  EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.json")), IoError);
  std::remove(path.c_str());
}

TEST(CheckpointTest, ConfigMismatchIsReported) {
  Model m = Model::create(small_config(), Vocabulary::build({TemplateString("a")}), 1);
  const std::string path = temp_path("mismatch.json");
  save_checkpoint(m, path);
  ModelConfig other = small_config();
  other.dgsa.n_heads = 4;
  EXPECT_THROW(load_checkpoint(path, &other), FormatError);
  std::remove(path.c_str());
}

TEST(ModelGradcheckTest, FullModelWithTrainableEncoder) {
  const auto plat = archpred::testing::t4_fp32();
  ArchGraph g = archpred::testing::five_node_graph();
  ModelConfig c = small_config(8, 2);
  c.encoder.kind = EncoderKind::trainable_small;
  c.encoder.trainable = true;
  Model m = Model::create(c, vocab_for({g}, plat), 11);
  Rng rng(12);
  perturb_all(m.params(), rng, 0.2);
  const PredictionTarget target{TaskKind::latency, 3.0};
  auto f = [&](Tape& t, const ParamStore&) { return loss(m.forward(t, g, plat), target); };
  GradcheckResult r = gradcheck(f, m.params());
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_parameter << "[" << r.worst_index << "]";
  EXPECT_GT(r.coordinates, 0u);
}

TEST(ModelGradcheckTest, UniformGateAndAdditiveMasks) {
  const auto plat = archpred::testing::t4_fp32();
  ArchGraph g = archpred::testing::chain3();
  ModelConfig c = small_config(8, 1);
  c.dgsa.gate_mode = GateMode::uniform_fixed;
  c.dgsa.mask_mode = MaskMode::additive_neg_inf;
  Model m = Model::create(c, vocab_for({g}, plat), 13);
  Rng rng(14);
  perturb_all(m.params(), rng, 0.2);
  auto f = [&](Tape& t, const ParamStore&) { return loss(m.forward(t, g, plat), {TaskKind::latency, 0.5}); };
  EXPECT_LT(gradcheck(f, m.params()).max_rel_error, 1e-3);
}
