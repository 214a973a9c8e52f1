#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "pktimg/cnn.hpp"

using namespace pktimg;

namespace {

ModelConfig small_config(std::size_t k = 3) {
  ModelConfig c;
  c.height = 12;
  c.width = 12;
  c.num_classes = k;
  c.pixel_max = 255;
  return c;
}

Tensor random_input(Rng& rng, std::size_t h, std::size_t w) {
  Tensor x({h, w, 1});
  for (double& v : x.values) v = rng.uniform();
  return x;
}

// Central difference of the loss with respect to one parameter.
double numeric_grad(CnnModel& m, Tensor& param, std::size_t i, const Tensor& x,
                    std::size_t label, double eps) {
  const double saved = param[i];
  param[i] = saved + eps;
  const double up = loss(m, x, label);
  param[i] = saved - eps;
  const double down = loss(m, x, label);
  param[i] = saved;
  return (up - down) / (2.0 * eps);
}

double rel_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-7) return std::abs(a - b) < 1e-9 ? 0.0 : std::abs(a - b);
  return std::abs(a - b) / scale;
}

ImageDataset separable_dataset(std::size_t per_class, std::size_t side = 12) {
  ImageDataset ds;
  ds.width = ds.height = side;
  ds.labels = {"dark", "bright"};
  for (std::size_t i = 0; i < per_class; ++i) {
    ds.records.push_back({Bytes(side * side, 0), 0});
    ds.records.push_back({Bytes(side * side, 255), 1});
  }
  return ds;
}

}  // namespace

TEST(Backward, MatchesFiniteDifferencesOn12x12) {
  Rng rng(2024);
  CnnModel m = init_model(small_config(3));
  const Tensor x = random_input(rng, 12, 12);
  const Gradients g = backward(m, x, 1);
  auto params = m.params.tensors();
  auto grads = g.params.tensors();
  double worst = 0.0;
  for (std::size_t t = 0; t < Parameters::kCount; ++t) {
    ASSERT_EQ(params[t]->shape, grads[t]->shape);
    for (std::size_t i = 0; i < params[t]->size(); ++i) {
      const double fd = numeric_grad(m, *params[t], i, x, 1, 1e-5);
      worst = std::max(worst, rel_error((*grads[t])[i], fd));
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Backward, ZeroWhenPredictionIsExact) {
  // Logits saturate so hard that probs == onehot in double precision.
  CnnModel m = zero_model(small_config(2));
  m.params.dense2_b[0] = 1000.0;
  Rng rng(3);
  const Gradients g = backward(m, random_input(rng, 12, 12), 0);
  ASSERT_EQ(g.probs[0], 1.0);
  ASSERT_EQ(g.probs[1], 0.0);
  for (const Tensor* t : g.params.tensors()) {
    for (double v : t->values) EXPECT_EQ(v, 0.0);
  }
}

TEST(Train, SeparableDatasetReachesFullAccuracyWithinFiveEpochs) {
  const ImageDataset ds = separable_dataset(20);
  ModelConfig cfg = config_for(ds, ModelConfig{});
  cfg.epochs = 5;
  const TrainResult r = train(ds, cfg);
  ASSERT_EQ(r.history.size(), 5u);
  EXPECT_LT(r.history.back().mean_loss, r.history.front().mean_loss);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    correct += predict(r.model, ds.image(i)).class_id == ds.records[i].label;
  }
  EXPECT_EQ(correct, ds.records.size());
}

TEST(Train, SameSeedIsBitIdentical) {
  const ImageDataset ds = separable_dataset(10);
  ModelConfig cfg = config_for(ds, ModelConfig{});
  cfg.epochs = 3;
  cfg.batch_size = 4;
  const TrainResult a = train(ds, cfg);
  const TrainResult b = train(ds, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(a.history.back().mean_loss),
            std::bit_cast<std::uint64_t>(b.history.back().mean_loss));
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const ImageDataset ds = separable_dataset(6);
  ModelConfig cfg = config_for(ds, ModelConfig{});
  cfg.learning_rate = 0.0;
  cfg.epochs = 4;
  const TrainResult r = train(ds, cfg);
  EXPECT_EQ(r.model.params, init_model(cfg).params);
}

TEST(Train, RejectsEmptyAndMismatchedData) {
  ImageDataset ds = separable_dataset(2);
  ModelConfig cfg = config_for(ds, ModelConfig{});
  ImageDataset empty = ds.empty_like();
  EXPECT_THROW(train(empty, cfg), ContractError);
  cfg.height = 14;
  EXPECT_THROW(train(ds, cfg), ContractError);
  ImageDataset tiny = separable_dataset(2, 8);
  EXPECT_THROW(train(tiny, config_for(tiny, ModelConfig{})), ContractError);
}

TEST(Predict, UntrainedZeroModelIsUniformAndPicksClassZero) {
  CnnModel m = zero_model(small_config(4));
  const Prediction p = predict(m, Bytes(144, 77));
  EXPECT_EQ(p.class_id, 0u);
  for (double v : p.probs.values) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Predict, ProbabilitiesSumToOne) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg = small_config(5);
    cfg.seed = 100 + trial;
    const CnnModel m = init_model(cfg);
    Bytes px(144);
    for (auto& b : px) b = static_cast<std::uint8_t>(rng.below(256));
    const Prediction p = predict(m, px);
    double sum = 0.0;
    for (double v : p.probs.values) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Predict, RejectsWrongShape) {
  CnnModel m = zero_model(small_config(2));
  PseudoImage img{28, 28, Bytes(784, 0), EncoderId::kPayload784, 255, std::nullopt};
  EXPECT_THROW(predict(m, img), ContractError);
}

TEST(Checkpoint, RoundTripPredictsIdentically) {
  const auto path = std::filesystem::temp_directory_path() / "pktimg_test_model.pcnn";
  ModelConfig cfg = small_config(3);
  cfg.seed = 77;
  cfg.learning_rate = 0.0123;
  const CnnModel m = init_model(cfg);
  save_model(m, path.string());
  const CnnModel back = load_model(path.string());
  EXPECT_EQ(back, m);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Bytes px(144);
    for (auto& b : px) b = static_cast<std::uint8_t>(rng.below(256));
    const Prediction a = predict(m, px), b = predict(back, px);
    EXPECT_EQ(a.class_id, b.class_id);
    EXPECT_EQ(a.probs, b.probs);
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsTruncatedAndCorrupt) {
  const Bytes good = serialize_model(init_model(small_config(3)));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{20}, good.size() - 1}) {
    EXPECT_THROW(parse_model(ByteView(good).first(cut)), FormatError) << cut;
  }
  Bytes bad = good;
  bad[0] = 'X';
  EXPECT_THROW(parse_model(bad), FormatError);
  bad = good;
  bad[4] = 9;  // version
  EXPECT_THROW(parse_model(bad), FormatError);
}

TEST(Checkpoint, ClassCountMismatchIsCaughtAtEvalTime) {
  const CnnModel m = init_model(small_config(3));
  const ImageDataset ds = separable_dataset(2);
  EXPECT_THROW(check_compatible(m, ds), ContractError);
}
