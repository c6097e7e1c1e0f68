#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ordinal/nn.hpp"
#include "ordinal/rewards.hpp"
#include "ordinal/solver.hpp"

namespace ordinal {
namespace {

constexpr HeadKind kHeads[] = {HeadKind::kValue, HeadKind::kOutcome};

NetworkConfig config(BoardDims dims, HeadKind head) {
  NetworkConfig c;
  c.dims = dims;
  c.head = head;
  return c;
}

std::vector<const TrainingExample*> pointers(const std::vector<TrainingExample>& examples) {
  std::vector<const TrainingExample*> out;
  for (const TrainingExample& e : examples) out.push_back(&e);
  return out;
}

// Random positions labelled by the tablebase: optimal moves as the policy
// target and the perfect-play result as the outcome target.
std::vector<TrainingExample> labelled_batch(BoardDims dims, int n, std::uint64_t seed) {
  const Tablebase tb = solve(dims);
  std::mt19937_64 rng(seed);
  std::vector<TrainingExample> out;
  while (static_cast<int>(out.size()) < n) {
    const GameState s{dims,
                      {static_cast<int>(rng() % dims.width), static_cast<int>(rng() % dims.height)},
                      {static_cast<int>(rng() % dims.width), static_cast<int>(rng() % dims.height)},
                      rng() % 2 ? Player::kOne : Player::kTwo,
                      static_cast<int>(rng() % 10)};
    if (!status(s).ongoing()) continue;
    TrainingExample e;
    e.planes = encode(s);
    const auto best = perfect_moves(tb, s);
    for (Move m : best) e.policy_target[m.index] = 1.0 / best.size();
    const Outcome o = oracle_outcome(tb, s);
    const int sign = result_sign(o, s.to_move);
    e.result = sign > 0 ? Wdl::kWin : sign < 0 ? Wdl::kLoss : Wdl::kDraw;
    e.plies_left = o.plies - s.ply;
    e.value_target = handtuned_reward(o, s.to_move, dims);
    out.push_back(e);
  }
  return out;
}

std::vector<TrainingExample> two_examples(BoardDims dims) {
  std::vector<TrainingExample> ex(2);
  GameState s = starting_positions(dims)[0];
  ex[0].planes = encode(s);
  ex[0].policy_target = {0.1, 0.2, 0.0, 0.3, 0.4, 0.0, 0.0, 0.0};
  ex[0].result = Wdl::kWin;
  ex[0].plies_left = 3;
  ex[0].value_target = 0.4;
  s = apply_move_unchecked(s, legal_moves(s)[0]);
  ex[1].planes = encode(s);
  ex[1].policy_target = {0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0};
  ex[1].result = Wdl::kLoss;
  ex[1].plies_left = 2;
  ex[1].value_target = -0.7;
  return ex;
}

TEST(Network, FreshPolicyIsADistribution) {
  for (HeadKind head : kHeads) {
    const Network net(config({3, 9}, head), 3);
    std::mt19937_64 rng(1);
    GameState s = starting_positions({3, 9})[2];
    for (int ply = 0; ply < 30 && status(s).ongoing(); ++ply) {
      const Prediction p = net.predict(encode(s));
      double sum = 0.0;
      for (double x : p.policy) {
        EXPECT_TRUE(std::isfinite(x));
        EXPECT_GE(x, 0.0);
        sum += x;
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
      if (head == HeadKind::kValue) {
        EXPECT_GT(p.value, -1.0);
        EXPECT_LT(p.value, 1.0);
      } else {
        EXPECT_NEAR(p.outcome.wdl[0] + p.outcome.wdl[1] + p.outcome.wdl[2], 1.0, 1e-12);
      }
      const auto moves = legal_moves(s);
      s = apply_move(s, moves[rng() % moves.size()]).first;
    }
  }
}

TEST(Network, SameSeedSameWeights) {
  const Network a(config({3, 5}, HeadKind::kOutcome), 42);
  const Network b(config({3, 5}, HeadKind::kOutcome), 42);
  const Network c(config({3, 5}, HeadKind::kOutcome), 43);
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  EXPECT_FALSE(std::equal(a.params().begin(), a.params().end(), c.params().begin()));
}

TEST(Network, RejectsWrongInputSize) {
  const Network net(config({3, 5}, HeadKind::kValue), 1);
  EXPECT_THROW(net.predict(encode(starting_positions({3, 9})[0])), std::invalid_argument);
}

TEST(ExampleLoss, HandComputedValueHead) {
  TrainingExample ex;
  ex.policy_target[2] = 1.0;
  ex.value_target = -0.25;
  const double logits[kNumMoves] = {};
  const double out[1] = {std::atanh(0.5)};
  double d_policy[kNumMoves];
  double d_head[1];
  const auto coeffs = LossCoefficients::for_head(HeadKind::kValue);
  const LossBreakdown l = example_loss(HeadKind::kValue, coeffs, ex, logits, out, d_policy, d_head);
  EXPECT_NEAR(l.policy, 20.0 * std::log(8.0), 1e-12);
  EXPECT_NEAR(l.value, 0.5625, 1e-12);
  EXPECT_EQ(l.result, 0.0);
  EXPECT_EQ(l.plies, 0.0);
  EXPECT_NEAR(l.total(), 20.0 * std::log(8.0) + 0.5625, 1e-12);
  EXPECT_NEAR(d_policy[2], 20.0 * (0.125 - 1.0), 1e-12);
  EXPECT_NEAR(d_policy[5], 20.0 * 0.125, 1e-12);
  EXPECT_NEAR(d_head[0], 2.0 * 0.75 * (1.0 - 0.25), 1e-12);
}

TEST(ExampleLoss, HandComputedOutcomeHead) {
  TrainingExample ex;
  ex.policy_target[0] = 0.5;
  ex.policy_target[7] = 0.5;
  ex.result = Wdl::kWin;
  ex.plies_left = 11;
  const double logits[kNumMoves] = {};
  const double out[5] = {std::log(2.0), 0.0, 0.0, 1.3, 0.2};
  double d_policy[kNumMoves];
  double d_head[5];
  const auto coeffs = LossCoefficients::for_head(HeadKind::kOutcome);
  const LossBreakdown l = example_loss(HeadKind::kOutcome, coeffs, ex, logits, out, d_policy, d_head);
  EXPECT_NEAR(l.policy, 100.0 * std::log(8.0), 1e-12);
  EXPECT_NEAR(l.result, 3.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(l.plies, 0.04, 1e-12);
  EXPECT_EQ(l.value, 0.0);
  EXPECT_NEAR(d_head[0], 3.0 * (0.5 - 1.0), 1e-12);
  EXPECT_NEAR(d_head[1], 3.0 * 0.25, 1e-12);
  EXPECT_NEAR(d_head[2], 3.0 * 0.25, 1e-12);
  EXPECT_NEAR(d_head[3], 0.4, 1e-12);
  EXPECT_EQ(d_head[4], 0.0);
}

TEST(ExampleLoss, DrawTrainsNeitherPlyOutput) {
  TrainingExample ex;
  ex.policy_target[1] = 1.0;
  ex.result = Wdl::kDraw;
  ex.plies_left = 40;
  const double logits[kNumMoves] = {0.3, -0.2, 0.1, 0.0, 0.5, -0.4, 0.2, 0.0};
  const double out[5] = {0.1, 0.2, 0.3, 7.0, -3.0};
  double d_policy[kNumMoves];
  double d_head[5];
  const LossBreakdown l = example_loss(HeadKind::kOutcome, LossCoefficients::for_head(HeadKind::kOutcome), ex,
                                       logits, out, d_policy, d_head);
  EXPECT_EQ(l.plies, 0.0);
  EXPECT_EQ(d_head[3], 0.0);
  EXPECT_EQ(d_head[4], 0.0);
}

TEST(ExampleLoss, MatchedTargetsLeaveOnlyTheEntropyFloor) {
  const double logits[kNumMoves] = {0.3, -0.2, 0.1, 0.0, 0.5, -0.4, 0.2, 0.0};
  TrainingExample ex;
  double z = 0.0;
  for (double x : logits) z += std::exp(x);
  double entropy = 0.0;
  for (int k = 0; k < kNumMoves; ++k) {
    ex.policy_target[k] = std::exp(logits[k]) / z;
    entropy -= ex.policy_target[k] * std::log(ex.policy_target[k]);
  }
  ex.value_target = std::tanh(0.7);
  const double out[1] = {0.7};
  double d_policy[kNumMoves];
  double d_head[1];
  const LossBreakdown l = example_loss(HeadKind::kValue, LossCoefficients::for_head(HeadKind::kValue), ex,
                                       logits, out, d_policy, d_head);
  EXPECT_NEAR(l.policy, 20.0 * entropy, 1e-12);
  EXPECT_NEAR(l.value, 0.0, 1e-24);
  for (double g : d_policy) EXPECT_NEAR(g, 0.0, 1e-12);
}

// Relative error with a floor so parameters whose gradient is numerically
// zero compare on an absolute scale.
double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-3, std::abs(analytic) + std::abs(numeric));
}

TEST(Gradient, MatchesCentralDifferencesForEveryParameter) {
  const BoardDims dims{2, 3};
  const auto examples = two_examples(dims);
  const auto batch = pointers(examples);
  for (HeadKind head : kHeads) {
    Network net(config(dims, head), 5);
    const auto coeffs = LossCoefficients::for_head(head);
    std::vector<double> grad(net.params().size(), 0.0);
    net.loss_and_gradient(batch, coeffs, &grad, false);
    double worst = 0.0;
    std::size_t worst_index = 0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double p = net.params()[i];
      const double eps = 1e-6;
      net.params()[i] = p + eps;
      const double up = net.loss_and_gradient(batch, coeffs, nullptr, false).total();
      net.params()[i] = p - eps;
      const double down = net.loss_and_gradient(batch, coeffs, nullptr, false).total();
      net.params()[i] = p;
      const double err = relative_error(grad[i], (up - down) / (2.0 * eps));
      if (err > worst) {
        worst = err;
        worst_index = i;
      }
    }
    EXPECT_LT(worst, 1e-4) << to_string(head) << " parameter " << worst_index << " of " << grad.size();
  }
}

TEST(Gradient, PlyOutputsOnlyTrainOnTheMatchingResult) {
  const BoardDims dims{2, 3};
  auto examples = two_examples(dims);
  Network net(config(dims, HeadKind::kOutcome), 5);
  const Network::Dense& out = net.output_layer();
  const auto coeffs = LossCoefficients::for_head(HeadKind::kOutcome);
  auto bias_grad = [&](const std::vector<TrainingExample>& ex) {
    std::vector<double> grad(net.params().size(), 0.0);
    net.loss_and_gradient(pointers(ex), coeffs, &grad, false);
    return std::pair{grad[out.bias + 3], grad[out.bias + 4]};
  };
  for (TrainingExample& e : examples) e.result = Wdl::kDraw;
  EXPECT_EQ(bias_grad(examples), (std::pair{0.0, 0.0}));
  for (TrainingExample& e : examples) e.result = Wdl::kWin;
  auto [win3, win4] = bias_grad(examples);
  EXPECT_NE(win3, 0.0);
  EXPECT_EQ(win4, 0.0);
  for (TrainingExample& e : examples) e.result = Wdl::kLoss;
  auto [loss3, loss4] = bias_grad(examples);
  EXPECT_EQ(loss3, 0.0);
  EXPECT_NE(loss4, 0.0);
}

TEST(Training, ZeroLearningRateLeavesWeightsUnchanged) {
  const auto examples = labelled_batch({3, 5}, 8, 2);
  for (HeadKind head : kHeads) {
    Network net(config({3, 5}, head), 9);
    const std::vector<double> before(net.params().begin(), net.params().end());
    NesterovSgd opt(0.0, 0.9);
    for (int step = 0; step < 3; ++step) train_step(net, opt, pointers(examples), LossCoefficients::for_head(head));
    EXPECT_TRUE(std::equal(before.begin(), before.end(), net.params().begin()));
  }
}

TEST(Training, RunningStatisticsFollowTrainingBatches) {
  const auto examples = labelled_batch({3, 5}, 8, 2);
  Network net(config({3, 5}, HeadKind::kValue), 9);
  const std::vector<double> before(net.buffers().begin(), net.buffers().end());
  std::vector<double> grad(net.params().size(), 0.0);
  net.loss_and_gradient(pointers(examples), LossCoefficients::for_head(HeadKind::kValue), &grad, false);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), net.buffers().begin()));
  net.loss_and_gradient(pointers(examples), LossCoefficients::for_head(HeadKind::kValue), &grad, true);
  EXPECT_FALSE(std::equal(before.begin(), before.end(), net.buffers().begin()));
}

TEST(Training, FixedBatchLossDecreasesMonotonically) {
  // A small step size keeps momentum from overshooting within 20 steps; the
  // default 0.005 is checked separately below.
  const auto examples = labelled_batch({3, 5}, 32, 1);
  for (HeadKind head : kHeads) {
    Network net(config({3, 5}, head), 1);
    NesterovSgd opt(2e-4, 0.9);
    double previous = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 20; ++step) {
      const double loss = train_step(net, opt, pointers(examples), LossCoefficients::for_head(head)).total();
      EXPECT_LT(loss, previous) << to_string(head) << " step " << step;
      previous = loss;
    }
  }
}

TEST(Training, DefaultStepSizeWithClippingCutsLoss) {
  const auto examples = labelled_batch({3, 5}, 32, 1);
  for (HeadKind head : kHeads) {
    Network net(config({3, 5}, head), 1);
    NesterovSgd opt(0.005, 0.9, 10.0);
    const auto coeffs = LossCoefficients::for_head(head);
    const double first = train_step(net, opt, pointers(examples), coeffs).total();
    double last = first;
    for (int step = 1; step < 20; ++step) last = train_step(net, opt, pointers(examples), coeffs).total();
    EXPECT_TRUE(std::isfinite(last));
    EXPECT_LT(last, 0.2 * first) << to_string(head);
  }
}

TEST(Optimizer, ClippingBoundsTheStep) {
  std::vector<double> params{0.0, 0.0};
  NesterovSgd opt(1.0, 0.0, 1.0);
  opt.step(params, {3.0, 4.0});
  EXPECT_NEAR(params[0], -0.6, 1e-15);
  EXPECT_NEAR(params[1], -0.8, 1e-15);
  NesterovSgd plain(0.1, 0.5);
  std::vector<double> p{1.0};
  plain.step(p, {2.0});  // v = 2, p -= 0.1 (2 + 0.5 * 2)
  EXPECT_NEAR(p[0], 0.7, 1e-15);
  plain.step(p, {2.0});  // v = 3, p -= 0.1 (2 + 0.5 * 3)
  EXPECT_NEAR(p[0], 0.35, 1e-15);
}

TEST(Serialization, RoundTripIsBitIdentical) {
  const auto examples = labelled_batch({3, 5}, 8, 4);
  for (HeadKind head : kHeads) {
    Network net(config({3, 5}, head), 11);
    NesterovSgd opt(0.005, 0.9, 10.0);
    train_step(net, opt, pointers(examples), LossCoefficients::for_head(head));
    const auto path = std::filesystem::temp_directory_path() / "ordinal_test_net.weights";
    save_network(net, path.string());
    const Network back = load_network(path.string());
    std::filesystem::remove(path);
    EXPECT_EQ(back.config(), net.config());
    EXPECT_TRUE(std::equal(net.params().begin(), net.params().end(), back.params().begin()));
    EXPECT_TRUE(std::equal(net.buffers().begin(), net.buffers().end(), back.buffers().begin()));
    for (const TrainingExample& e : examples) {
      const Prediction a = net.predict(e.planes);
      const Prediction b = back.predict(e.planes);
      EXPECT_EQ(a.policy, b.policy);
      EXPECT_EQ(a.value, b.value);
      EXPECT_EQ(a.outcome.wdl, b.outcome.wdl);
      EXPECT_EQ(a.outcome.plies_left_win, b.outcome.plies_left_win);
      EXPECT_EQ(a.outcome.plies_left_loss, b.outcome.plies_left_loss);
    }
  }
}

TEST(Serialization, RejectsMissingAndCorruptFiles) {
  const auto path = std::filesystem::temp_directory_path() / "ordinal_test_bad.weights";
  std::filesystem::remove(path);
  EXPECT_ANY_THROW(load_network(path.string()));
  std::ofstream(path) << "OPNN garbage";
  EXPECT_ANY_THROW(load_network(path.string()));
  std::filesystem::remove(path);
}

// Reward of `o` for `p` by direct pairwise comparison against the window.
double pairwise_cdf(const std::vector<Outcome>& window, const Outcome& o, Player p, const BoardDims& dims) {
  double score = 0.0;
  for (const Outcome& w : window) {
    const int c = compare(o, w, p, dims);
    score += c > 0 ? 1.0 : c == 0 ? 0.5 : 0.0;
  }
  return 2.0 * score / static_cast<double>(window.size()) - 1.0;
}

TEST(ValueFromOutcome, WorkedExample) {
  const BoardDims dims{3, 9};
  const std::vector<Outcome> window{{Result::kWinP2, 10}, {Result::kWinP2, 14}, {Result::kWinP2, 14},
                                    {Result::kDraw, 180},  {Result::kWinP1, 15}, {Result::kWinP1, 11},
                                    {Result::kWinP1, 11},  {Result::kWinP1, 9}};
  const RewardFunction f(RewardKind::kCdf, OutcomeWindow(dims, window));
  const GameState s = starting_positions(dims)[4];
  OutcomeHeadOutput head;
  head.wdl = {0.60, 0.05, 0.35};
  head.plies_left_win = 1.1;
  head.plies_left_loss = 1.4;
  const double expected = 0.60 * pairwise_cdf(window, {Result::kWinP1, 11}, Player::kOne, dims) +
                          0.35 * pairwise_cdf(window, {Result::kWinP2, 14}, Player::kOne, dims) +
                          0.05 * pairwise_cdf(window, {Result::kDraw, 180}, Player::kOne, dims);
  EXPECT_NEAR(expected, 0.11875, 1e-15);
  EXPECT_NEAR(value_from_outcome(head, s, f), expected, 1e-12);
}

TEST(ValueFromOutcome, SecondPlayerSeesTheReversedOrder) {
  const BoardDims dims{3, 9};
  const std::vector<Outcome> window{{Result::kWinP1, 5}, {Result::kWinP2, 8}, {Result::kWinP2, 30},
                                    {Result::kDraw, 180}};
  const RewardFunction f(RewardKind::kCdf, OutcomeWindow(dims, window));
  GameState s = starting_positions(dims)[0];
  s = apply_move(s, legal_moves(s)[0]).first;  // P2 to move at ply 1
  OutcomeHeadOutput head;
  head.wdl = {0.7, 0.1, 0.2};
  head.plies_left_win = 0.7;   // P2 wins at ply 8
  head.plies_left_loss = 0.4;  // P1 wins at ply 5
  const double expected = 0.7 * pairwise_cdf(window, {Result::kWinP2, 8}, Player::kTwo, dims) +
                          0.2 * pairwise_cdf(window, {Result::kWinP1, 5}, Player::kTwo, dims) +
                          0.1 * pairwise_cdf(window, {Result::kDraw, 180}, Player::kTwo, dims);
  EXPECT_NEAR(value_from_outcome(head, s, f), expected, 1e-12);
}

TEST(ValueFromOutcome, MeanOfTwoOutcomes) {
  const BoardDims dims{3, 9};
  const std::vector<Outcome> window{{Result::kWinP1, 5}, {Result::kWinP2, 8}};
  const RewardFunction f(RewardKind::kCdf, OutcomeWindow(dims, window));
  OutcomeHeadOutput head;
  head.wdl = {0.5, 0.0, 0.5};
  head.plies_left_win = 0.5;
  head.plies_left_loss = 0.8;
  const double mean = 0.5 * (pairwise_cdf(window, window[0], Player::kOne, dims) +
                             pairwise_cdf(window, window[1], Player::kOne, dims));
  EXPECT_NEAR(value_from_outcome(head, starting_positions(dims)[0], f), mean, 1e-12);
  EXPECT_NEAR(mean, 0.0, 1e-15);
}

TEST(ValueFromOutcome, ConstantRewardGivesZero) {
  const BoardDims dims{3, 9};
  const auto f = RewardFunction::without_window(RewardKind::kCdf, dims);
  OutcomeHeadOutput head;
  head.wdl = {1.0, 0.0, 0.0};
  head.plies_left_win = 2.3;
  EXPECT_EQ(value_from_outcome(head, starting_positions(dims)[0], f), 0.0);
}

TEST(ValueFromOutcome, PredictedLengthsAreRoundedAndClamped) {
  const BoardDims dims{3, 9};
  const auto f = [](const Outcome& o, Player) { return static_cast<double>(o.plies); };
  GameState s = starting_positions(dims)[0];
  s.ply = 20;
  OutcomeHeadOutput head;
  head.wdl = {1.0, 0.0, 0.0};
  head.plies_left_win = 0.64;
  EXPECT_EQ(value_from_outcome(head, s, f), 26.0);
  head.plies_left_win = -3.0;
  EXPECT_EQ(value_from_outcome(head, s, f), 21.0);
  head.plies_left_win = 90.0;
  EXPECT_EQ(value_from_outcome(head, s, f), 180.0);
}

}  // namespace
}  // namespace ordinal
