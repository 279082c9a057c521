#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "kws/error.hpp"
#include "kws/nn/gradcheck.hpp"
#include "kws/nn/loss.hpp"
#include "kws/nn/network.hpp"
#include "kws/nn/optimizer.hpp"
#include "kws/nn/serialize.hpp"
#include "kws/nn/trainer.hpp"

namespace kws::nn {
namespace {

using L = LayerSpec;
using A = Activation;

Tensor random_tensor(std::mt19937_64& rng, int n, Shape s, double lo = -1.0, double hi = 1.0) {
  Tensor t(n, s);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data) v = u(rng);
  return t;
}

Tensor one_hot(int n, int k, std::mt19937_64& rng) {
  Tensor t(n, {k, 1, 1});
  for (int i = 0; i < n; ++i) t.data[i * k + rng() % k] = 1.0;
  return t;
}

void expect_gradients_ok(const NetworkSpec& spec, const Tensor& input, const Tensor& target, LossKind loss,
                         std::uint64_t seed = 1, double tol = 1e-5) {
  spec.validate();
  auto state = init_state(spec, seed);
  const auto r = check_gradients(spec, state, input, target, loss);
  EXPECT_GT(r.checked, 0);
  EXPECT_LT(r.max_param_rel_error, tol) << spec.canonical_text();
  EXPECT_LT(r.max_input_rel_error, tol) << spec.canonical_text();
}

TEST(GradCheck, DenseTanhSquaredError) {
  std::mt19937_64 rng(1);
  NetworkSpec spec{{1, 1, 5}, {L::dense(4), L::act(A::kTanh), L::dense(3)}};
  expect_gradients_ok(spec, random_tensor(rng, 3, {1, 1, 5}), random_tensor(rng, 3, {3, 1, 1}),
                      LossKind::kSquaredError);
}

TEST(GradCheck, SoftmaxCategoricalCrossEntropy) {
  std::mt19937_64 rng(2);
  NetworkSpec spec{{1, 1, 6}, {L::dense(5), L::act(A::kSigmoid), L::dense(4), L::act(A::kSoftmax)}};
  expect_gradients_ok(spec, random_tensor(rng, 4, {1, 1, 6}), one_hot(4, 4, rng),
                      LossKind::kCategoricalCrossEntropy);
}

TEST(GradCheck, SigmoidBinaryCrossEntropyWithSoftTargets) {
  std::mt19937_64 rng(3);
  NetworkSpec spec{{1, 1, 4}, {L::dense(6), L::act(A::kLeakyRelu, 1.0 / 3.0), L::dense(3), L::act(A::kSigmoid)}};
  expect_gradients_ok(spec, random_tensor(rng, 3, {1, 1, 4}), random_tensor(rng, 3, {3, 1, 1}, 0.0, 1.0),
                      LossKind::kSummedBinaryCrossEntropy);
}

TEST(GradCheck, ConvPoolStack) {
  std::mt19937_64 rng(4);
  NetworkSpec spec{{2, 9, 7},
                   {L::conv2d(3, 3, 2), L::act(A::kRelu), L::maxpool(2, 2), L::conv2d(2, 2, 2),
                    L::act(A::kTanh), L::dense(3), L::act(A::kSoftmax)}};
  expect_gradients_ok(spec, random_tensor(rng, 2, {2, 9, 7}), one_hot(2, 3, rng),
                      LossKind::kCategoricalCrossEntropy);
}

TEST(GradCheck, VariableLengthGlobalTemporalMaxPool) {
  std::mt19937_64 rng(5);
  NetworkSpec spec{{1, 0, 6},
                   {L::conv2d(4, 3, 6), L::act(A::kLeakyRelu, 1.0 / 3.0), L::conv2d(3, 2, 1),
                    L::global_temporal_maxpool(), L::dense(2), L::act(A::kSigmoid)}};
  for (int T : {4, 9}) {
    expect_gradients_ok(spec, random_tensor(rng, 2, {1, T, 6}), random_tensor(rng, 2, {2, 1, 1}, 0.0, 1.0),
                        LossKind::kSummedBinaryCrossEntropy);
  }
}

TEST(GradCheck, TiedAutoencoder) {
  std::mt19937_64 rng(6);
  NetworkSpec spec{{1, 1, 5},
                   {L::dense(4), L::act(A::kTanh), L::dense(3), L::act(A::kTanh), L::tied_dense(2),
                    L::act(A::kTanh), L::tied_dense(0)}};
  expect_gradients_ok(spec, random_tensor(rng, 3, {1, 1, 5}), random_tensor(rng, 3, {5, 1, 1}),
                      LossKind::kSquaredError);
}

TEST(GradCheck, DropoutIsIdentityInEval) {
  std::mt19937_64 rng(7);
  NetworkSpec spec{{1, 1, 4}, {L::dense(5), L::dropout(0.5), L::act(A::kTanh), L::dense(2)}};
  expect_gradients_ok(spec, random_tensor(rng, 2, {1, 1, 4}), random_tensor(rng, 2, {2, 1, 1}),
                      LossKind::kSquaredError);
}

TEST(Network, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(8);
  NetworkSpec spec{{1, 1, 5}, {L::dense(7), L::act(A::kSoftmax)}};
  const auto state = init_state(spec, 3);
  auto in = random_tensor(rng, 6, {1, 1, 5}, -50.0, 50.0);
  const auto out = forward(spec, state, in, Mode::kEval);
  for (int i = 0; i < out.n; ++i) {
    double s = 0.0;
    for (double v : out.example(i)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Network, DropoutKeepsExpectationAndZeroFraction) {
  NetworkSpec spec{{1, 1, 1}, {L::dropout(0.5)}};
  const auto state = init_state(spec, 1);
  Tensor in(20000, {1, 1, 1});
  std::fill(in.data.begin(), in.data.end(), 1.0);
  const auto out = forward(spec, state, in, Mode::kTrain, 42);
  int zeros = 0;
  double sum = 0.0;
  for (double v : out.data) {
    zeros += v == 0.0;
    sum += v;
    EXPECT_TRUE(v == 0.0 || v == 2.0);
  }
  EXPECT_NEAR(zeros / 20000.0, 0.5, 0.02);
  EXPECT_NEAR(sum / 20000.0, 1.0, 0.04);
  EXPECT_EQ(forward(spec, state, in, Mode::kEval).data, in.data);
  EXPECT_EQ(forward(spec, state, in, Mode::kTrain, 42).data, out.data);
}

TEST(Network, TiedLayerUsesSourceWeight) {
  NetworkSpec spec{{1, 1, 3}, {L::dense(2), L::tied_dense(0)}};
  auto state = init_state(spec, 4);
  EXPECT_EQ(state.params[1].weight.size(), 0);
  EXPECT_EQ(&effective_weight(spec, state, 1), &state.params[0].weight);
  state.params[0].weight << 1, 0, 0, 0, 1, 0;
  state.params[0].bias.setZero();
  state.params[1].bias.setZero();
  Tensor in(1, {1, 1, 3});
  in.data = {2.0, 3.0, 5.0};
  const auto out = forward(spec, state, in, Mode::kEval);
  EXPECT_EQ(out.data, (Buffer{2.0, 3.0, 0.0}));
}

TEST(Network, ConvMatchesDirectConvolution) {
  std::mt19937_64 rng(9);
  NetworkSpec spec{{2, 5, 4}, {L::conv2d(3, 2, 3)}};
  const auto state = init_state(spec, 5);
  const auto in = random_tensor(rng, 1, {2, 5, 4});
  const auto out = forward(spec, state, in, Mode::kEval);
  ASSERT_EQ(out.shape, (Shape{3, 4, 2}));
  const auto& W = state.params[0].weight;
  for (int f = 0; f < 3; ++f)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 2; ++x) {
        double acc = state.params[0].bias(f);
        for (int c = 0; c < 2; ++c)
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) acc += W(f, (c * 2 + i) * 3 + j) * in.data[(c * 5 + y + i) * 4 + x + j];
        EXPECT_NEAR(out.data[(f * 4 + y) * 2 + x], acc, 1e-12);
      }
}

TEST(Network, SpecTextRoundTripAndHash) {
  NetworkSpec spec{{1, 0, 39},
                   {L::conv2d(8, 10, 39), L::act(A::kLeakyRelu, 1.0 / 3.0), L::global_temporal_maxpool(),
                    L::dense(4), L::dropout(0.5), L::act(A::kSigmoid)}};
  const auto text = spec.canonical_text();
  const auto back = NetworkSpec::parse(text);
  EXPECT_EQ(back.canonical_text(), text);
  EXPECT_EQ(back.hash(), spec.hash());
  auto other = spec;
  other.layers[3].units = 5;
  EXPECT_NE(other.hash(), spec.hash());
  EXPECT_EQ(spec.min_input_height(), 10);
  EXPECT_THROW(NetworkSpec::parse("input 1 1 3\nbogus 3\n"), ConfigError);
}

TEST(Network, ValidateRejectsBadSpecs) {
  EXPECT_THROW((NetworkSpec{{1, 1, 3}, {L::tied_dense(0)}}.validate()), ConfigError);
  EXPECT_THROW((NetworkSpec{{1, 4, 3}, {L::conv2d(2, 5, 3)}}.validate()), ConfigError);
  EXPECT_THROW((NetworkSpec{{1, 0, 3}, {L::conv2d(2, 2, 3), L::dense(2)}}.validate()), ConfigError);
  EXPECT_THROW((NetworkSpec{{1, 1, 3}, {L::dropout(1.0)}}.validate()), ConfigError);
}

TEST(Loss, KnownValues) {
  Tensor p(1, {2, 1, 1}), t(1, {2, 1, 1});
  p.data = {0.25, 0.75};
  t.data = {0.0, 1.0};
  EXPECT_NEAR(compute_loss(LossKind::kCategoricalCrossEntropy, p, t).value, -std::log(0.75), 1e-15);
  EXPECT_NEAR(compute_loss(LossKind::kSummedBinaryCrossEntropy, p, t).value, -2.0 * std::log(0.75), 1e-15);
  EXPECT_NEAR(compute_loss(LossKind::kSquaredError, p, t).value, 0.125, 1e-15);
  p.data = {0.0, 1.0};
  t.data = {1.0, 0.0};
  const auto r = compute_loss(LossKind::kSummedBinaryCrossEntropy, p, t);
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_NEAR(r.value, -2.0 * std::log(kLogEpsilon), 1e-3);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  NetworkSpec spec{{1, 1, 1}, {L::dense(1)}};
  auto state = init_state(spec, 1);
  state.params[0].weight(0, 0) = 1.0;
  auto g = zero_gradients(spec, state);
  g[0].weight(0, 0) = 2.0;
  OptimizerSpec opt;
  opt.kind = OptimizerKind::kAdam;
  opt.lr = {0.1, 0.1, 1};
  optimizer_step(opt, state, g, 0);
  EXPECT_NEAR(state.params[0].weight(0, 0), 0.9, 1e-6);
  EXPECT_EQ(state.params[0].bias(0), 0.0);
  EXPECT_EQ(state.step, 1u);
}

TEST(Optimizer, NesterovFirstStep) {
  NetworkSpec spec{{1, 1, 1}, {L::dense(1)}};
  auto state = init_state(spec, 1);
  state.params[0].weight(0, 0) = 1.0;
  auto g = zero_gradients(spec, state);
  g[0].weight(0, 0) = 2.0;
  OptimizerSpec opt;
  opt.kind = OptimizerKind::kSgdNesterov;
  opt.lr = {0.1, 0.1, 1};
  optimizer_step(opt, state, g, 0);
  // v = -0.2; p += 0.9 * v - 0.1 * 2
  EXPECT_NEAR(state.params[0].weight(0, 0), 1.0 - 0.18 - 0.2, 1e-12);
}

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  NetworkSpec spec{{1, 1, 3}, {L::dense(2)}};
  for (auto kind : {OptimizerKind::kSgdNesterov, OptimizerKind::kAdam, OptimizerKind::kAdadelta}) {
    auto state = init_state(spec, 2);
    const auto before = state.params;
    OptimizerSpec opt;
    opt.kind = kind;
    optimizer_step(opt, state, zero_gradients(spec, state), 0);
    EXPECT_EQ(state.params, before) << to_string(kind);
  }
}

TEST(Optimizer, NonFiniteGradientThrowsAndLeavesState) {
  NetworkSpec spec{{1, 1, 3}, {L::dense(2)}};
  auto state = init_state(spec, 2);
  const auto before = state.params;
  auto g = zero_gradients(spec, state);
  g[0].weight(1, 1) = std::nan("");
  EXPECT_THROW(optimizer_step(OptimizerSpec{}, state, g, 0), NumericError);
  EXPECT_EQ(state.params, before);
}

TEST(Optimizer, LinearSchedule) {
  LearningRateSchedule s{1e-4, 1e-6, 1000};
  EXPECT_DOUBLE_EQ(s.at(0), 1e-4);
  EXPECT_NEAR(s.at(999), 1e-6, 1e-18);
  EXPECT_NEAR(s.at(500), 1e-4 + (1e-6 - 1e-4) * 500.0 / 999.0, 1e-18);
  LearningRateSchedule one{0.5, 0.1, 1};
  EXPECT_DOUBLE_EQ(one.at(0), 0.5);
}

std::vector<Example> linear_data(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Example> ex;
  for (int i = 0; i < n; ++i) {
    auto x = random_tensor(rng, 1, {1, 1, 2});
    ex.push_back({x, {3.0 * x.data[0] - 2.0 * x.data[1] + 0.5}});
  }
  return ex;
}

TrainOptions adam_options(int epochs) {
  TrainOptions o;
  o.loss = LossKind::kSquaredError;
  o.optimizer.kind = OptimizerKind::kAdam;
  o.optimizer.lr = {0.05, 0.01, epochs};
  o.epochs = epochs;
  o.batch_size = 8;
  return o;
}

TEST(Trainer, LearnsLinearNeuron) {
  NetworkSpec spec{{1, 1, 2}, {L::dense(1)}};
  auto state = init_state(spec, 11);
  const auto data = linear_data(64, 1);
  const auto h = train(spec, state, data, adam_options(300));
  EXPECT_LT(h.train_loss.back(), 1e-4);
  EXPECT_NEAR(state.params[0].weight(0, 0), 3.0, 1e-2);
  EXPECT_NEAR(state.params[0].weight(0, 1), -2.0, 1e-2);
  EXPECT_NEAR(state.params[0].bias(0), 0.5, 1e-2);
  EXPECT_EQ(state.epochs_completed, 300u);
}

TEST(Trainer, DeterministicForFixedSeed) {
  NetworkSpec spec{{1, 1, 2}, {L::dense(4), L::dropout(0.3), L::act(A::kTanh), L::dense(1)}};
  const auto data = linear_data(40, 2);
  auto a = init_state(spec, 5), b = init_state(spec, 5);
  train(spec, a, data, adam_options(10));
  train(spec, b, data, adam_options(10));
  EXPECT_TRUE(a.same_values(b));
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  NetworkSpec spec{{1, 1, 2}, {L::dense(4), L::dropout(0.3), L::act(A::kTanh), L::dense(1)}};
  const auto data = linear_data(40, 3);
  auto full = init_state(spec, 6);
  train(spec, full, data, adam_options(8));
  auto part = init_state(spec, 6);
  auto o = adam_options(8);
  o.epochs = 3;
  train(spec, part, data, o);
  const auto path = std::filesystem::temp_directory_path() / "kws_resume_test.kwsm";
  save_state(path, spec, part);
  auto resumed = load_state(path, spec);
  train(spec, resumed, data, adam_options(8));
  std::filesystem::remove(path);
  EXPECT_TRUE(resumed.same_values(full));
}

TEST(Trainer, PatienceZeroStopsAtFirstNonImprovement) {
  NetworkSpec spec{{1, 1, 2}, {L::dense(1)}};
  auto state = init_state(spec, 7);
  const auto data = linear_data(32, 4);
  const auto monitor = linear_data(16, 5);
  auto o = adam_options(200);
  o.optimizer.lr = {2.0, 2.0, 200};  // large enough to oscillate
  o.early_stopping = EarlyStopping{monitor, 0};
  const auto h = train(spec, state, data, o);
  ASSERT_TRUE(h.stopped_early);
  const int last = static_cast<int>(h.monitor_loss.size()) - 1;
  for (int e = 1; e < last; ++e) EXPECT_LT(h.monitor_loss[e], h.monitor_loss[e - 1]);
  EXPECT_GE(h.monitor_loss[last], h.monitor_loss[last - 1]);
  EXPECT_EQ(h.best_epoch, last - 1);
  EXPECT_NEAR(evaluate_loss(spec, state, monitor, LossKind::kSquaredError), h.monitor_loss[h.best_epoch], 1e-12);
}

TEST(Serialize, RoundTripIsBitExact) {
  NetworkSpec spec{{1, 0, 5}, {L::conv2d(3, 2, 5), L::act(A::kRelu), L::global_temporal_maxpool(), L::dense(2)}};
  auto state = init_state(spec, 8);
  init_slots(state);
  state.epochs_completed = 4;
  state.step = 17;
  const auto bytes = encode_model(spec, state);
  const auto m = decode_model(bytes);
  EXPECT_EQ(m.spec.canonical_text(), spec.canonical_text());
  EXPECT_TRUE(m.state.same_values(state));
  std::mt19937_64 rng(1);
  const auto in = random_tensor(rng, 1, {1, 7, 5});
  EXPECT_EQ(predict(spec, state, in).data, predict(m.spec, m.state, in).data);
}

TEST(Serialize, RefusesMismatchedSpecAndCorruptFiles) {
  NetworkSpec spec{{1, 1, 3}, {L::dense(2)}};
  NetworkSpec other{{1, 1, 3}, {L::dense(3)}};
  const auto path = std::filesystem::temp_directory_path() / "kws_mismatch_test.kwsm";
  save_state(path, spec, init_state(spec, 1));
  EXPECT_THROW(load_state(path, other), ConfigError);
  EXPECT_NO_THROW(load_state(path, spec));
  std::filesystem::remove(path);
  auto bytes = encode_model(spec, init_state(spec, 1));
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_model(bytes), FormatError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_model(bytes), FormatError);
}

}  // namespace
}  // namespace kws::nn
