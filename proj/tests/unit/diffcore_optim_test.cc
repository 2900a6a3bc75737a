#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "rec4ad/common/error.h"
#include "rec4ad/diffcore/adam.h"
#include "rec4ad/diffcore/ops.h"
#include "rec4ad/diffcore/parameter_store.h"

namespace rec4ad::diffcore {
namespace {

TEST(AdamTest, FirstStepMovesByLearningRate) {
  ParameterStore store;
  Parameter& p = store.add("p", Matrix::Constant(1, 1, 2.0));
  p.grad = Matrix::Constant(1, 1, 1.0);
  AdamStep(store, AdamConfig{});
  EXPECT_NEAR(p.value(0, 0), 2.0 - 0.001, 1e-9);
  EXPECT_EQ(p.step, 1);
  EXPECT_EQ(p.grad.size(), 0);
}

TEST(AdamTest, ZeroGradientLeavesParameterButAdvancesStep) {
  ParameterStore store;
  Parameter& p = store.add("p", Matrix::Constant(2, 2, 0.5));
  p.grad = Matrix::Zero(2, 2);
  AdamStep(store, AdamConfig{});
  EXPECT_EQ(p.value, Matrix::Constant(2, 2, 0.5));
  EXPECT_EQ(p.step, 1);
}

TEST(AdamTest, FrozenParameterUnchanged) {
  ParameterStore store;
  Parameter& live = store.add("live", Matrix::Constant(1, 1, 1.0));
  Parameter& frozen = store.add("frozen", Matrix::Constant(1, 1, 1.0));
  Tape tape;
  tape.param(frozen);  // on the tape but no path to the loss
  tape.backward(Sum(Mul(tape.param(live), tape.constant(Matrix::Constant(1, 1, 3.0)))));
  AdamStep(store, AdamConfig{});
  EXPECT_NE(live.value(0, 0), 1.0);
  EXPECT_EQ(frozen.value(0, 0), 1.0);
}

TEST(AdamTest, NonTrainableSkipped) {
  ParameterStore store;
  Parameter& stat = store.add("running_mean", Matrix::Constant(1, 3, 4.0), false);
  stat.grad = Matrix::Ones(1, 3);
  AdamStep(store, AdamConfig{});
  EXPECT_EQ(stat.value, Matrix::Constant(1, 3, 4.0));
  EXPECT_EQ(stat.step, 0);
}

TEST(AdamTest, MissingStateIsAnError) {
  ParameterStore store;
  Parameter& p = store.add("p", Matrix::Ones(2, 2));
  p.first_moment.resize(0, 0);
  p.grad = Matrix::Ones(2, 2);
  EXPECT_THROW(AdamStep(store, AdamConfig{}), ConfigError);
}

TEST(AdamTest, LossDecreasesOnSeparableToyProblem) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(64, 2);
  std::vector<double> y(64);
  for (int i = 0; i < 64; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = normal(rng);
    y[i] = x(i, 0) + 0.5 * x(i, 1) > 0 ? 1.0 : 0.0;
  }
  ParameterStore store;
  store.add("w", Matrix::Zero(2, 1));
  store.add("b", Matrix::Zero(1, 1));
  AdamConfig config;
  config.learning_rate = 0.05;
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    Tape tape;
    const Var loss = BinaryCrossEntropy(
        Sigmoid(Affine(tape.constant(x), tape.param(store.get("w")),
                       tape.param(store.get("b")))),
        y, Reduction::kMean);
    losses.push_back(loss.value()(0, 0));
    tape.backward(loss);
    AdamStep(store, config);
  }
  EXPECT_NEAR(losses.front(), std::log(2.0), 1e-12);
  EXPECT_LT(losses.back(), 0.5 * losses.front());
  for (std::size_t k = 1; k < losses.size(); ++k) EXPECT_LT(losses[k], losses[k - 1]);
}

TEST(CheckpointTest, RoundTripsBitExactly) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParameterStore store;
  for (const char* name : {"b/bias", "a/weight", "c/running_var"}) {
    Matrix m(3, 5);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng);
    Parameter& p = store.add(name, m, std::string(name) != "c/running_var");
    p.first_moment = m * 0.5;
    p.second_moment = m.cwiseAbs2();
    p.step = 42;
  }
  std::stringstream buffer;
  store.save(buffer, "{\"model\":1}");
  ParameterStore restored;
  EXPECT_EQ(restored.load(buffer), "{\"model\":1}");
  ASSERT_EQ(restored.size(), 3u);
  for (const auto& [name, p] : store.entries()) {
    const Parameter& q = restored.get(name);
    EXPECT_EQ(p.value, q.value);
    EXPECT_EQ(p.first_moment, q.first_moment);
    EXPECT_EQ(p.second_moment, q.second_moment);
    EXPECT_EQ(p.step, q.step);
    EXPECT_EQ(p.trainable, q.trainable);
  }
}

TEST(CheckpointTest, RejectsForeignBytes) {
  std::stringstream buffer("definitely not a checkpoint");
  ParameterStore store;
  EXPECT_THROW(store.load(buffer), FormatError);
}

TEST(ParameterStoreTest, DuplicateNamesRejected) {
  ParameterStore store;
  store.add("w", Matrix::Ones(1, 1));
  EXPECT_THROW(store.add("w", Matrix::Ones(1, 1)), ConfigError);
}

}  // namespace
}  // namespace rec4ad::diffcore
