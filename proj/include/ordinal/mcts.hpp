#pragma once

// PUCT tree search in the AlphaZero style. Leaf values come from an
// evaluator; terminal positions are valued through the reward function, so
// the search only ever sees rewards, never raw outcomes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ordinal/game.hpp"
#include "ordinal/nn.hpp"
#include "ordinal/outcome.hpp"

namespace ordinal {

struct SearchParams {
  int visits = 180;
  double c_puct = 1.5;
  double dirichlet_alpha = 0.5;
  double noise_fraction = 0.25;
  double temperature = 1.0;

  static SearchParams self_play(const BoardDims& dims) {
    SearchParams p;
    p.visits = 20 * dims.height;
    return p;
  }

  static SearchParams evaluation(const BoardDims& dims) {
    SearchParams p;
    p.visits = 20 * dims.height;
    p.noise_fraction = 0.0;
    p.temperature = 0.0;
    return p;
  }
};

// Priors over the eight directions and a value in [-1, 1] for the side to
// move at the evaluated state.
struct LeafEvaluation {
  std::array<double, kNumMoves> priors{};
  double value = 0.0;
};

struct SearchResult {
  std::array<double, kNumMoves> policy{};  // normalized root visit counts
  std::array<int, kNumMoves> visits{};
  std::array<double, kNumMoves> priors{};  // root priors after noise
  std::array<double, kNumMoves> q{};       // mean value from the root mover's side
  int simulations = 0;
  int terminal_leaves = 0;
  double max_abs_terminal_value = 0.0;
  double max_abs_leaf_value = 0.0;
};

// Evaluates leaves with a network. Outcome heads are converted to values
// through the reward function; value heads are used directly.
template <typename RewardFn>
class NetworkEvaluator {
 public:
  NetworkEvaluator(const Network& net, const RewardFn& reward) : net_(net), reward_(reward) {}

  LeafEvaluation operator()(const GameState& s) {
    const std::vector<double> planes = encode(s);
    const Prediction p = net_.predict(planes, scratch_);
    LeafEvaluation e;
    e.priors = p.policy;
    e.value = net_.config().head == HeadKind::kValue ? p.value
                                                     : value_from_outcome(p.outcome, s, reward_);
    return e;
  }

 private:
  const Network& net_;
  const RewardFn& reward_;
  Network::Activations scratch_;
};

namespace detail {

struct SearchNode {
  GameState state;
  TerminalStatus status;
  std::uint8_t legal = 0;
  std::array<int, kNumMoves> child{};
  std::array<double, kNumMoves> prior{};
  std::array<int, kNumMoves> n{};
  std::array<double, kNumMoves> w{};
  int visits = 0;

  SearchNode(const GameState& s, const TerminalStatus& t) : state(s), status(t) {
    child.fill(-1);
    if (t.ongoing()) legal = legal_mask(s);
  }
};

// Restricts priors to legal moves and renormalizes; falls back to uniform
// when the network puts no mass on any legal move.
inline std::array<double, kNumMoves> masked_priors(const std::array<double, kNumMoves>& raw,
                                                   std::uint8_t legal) {
  std::array<double, kNumMoves> p{};
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < kNumMoves; ++i) {
    if (legal & (1u << i)) {
      p[i] = std::max(raw[i], 0.0);
      sum += p[i];
      ++count;
    }
  }
  for (int i = 0; i < kNumMoves; ++i) {
    if (!(legal & (1u << i))) continue;
    p[i] = sum > 0.0 ? p[i] / sum : 1.0 / count;
  }
  return p;
}

// Gamma-based Dirichlet sample over the legal moves.
template <typename Rng>
std::array<double, kNumMoves> dirichlet_noise(std::uint8_t legal, double alpha, Rng& rng) {
  std::array<double, kNumMoves> eta{};
  std::gamma_distribution<double> gamma(alpha, 1.0);
  double sum = 0.0;
  for (int i = 0; i < kNumMoves; ++i) {
    if (legal & (1u << i)) {
      eta[i] = gamma(rng);
      sum += eta[i];
    }
  }
  for (double& v : eta) v = sum > 0.0 ? v / sum : 0.0;
  return eta;
}

// Order in which equal PUCT scores are broken. The whole tree follows the
// root's orientation so a mirrored root yields an exactly mirrored search.
inline std::array<int, kNumMoves> tie_order(const GameState& root) {
  std::array<int, kNumMoves> order{};
  const int w = root.dims.width;
  const std::pair<int, int> here{root.p1.file, root.p2.file};
  const std::pair<int, int> flipped{w - 1 - root.p1.file, w - 1 - root.p2.file};
  for (int i = 0; i < kNumMoves; ++i) order[i] = here > flipped ? mirror(Move{i}).index : i;
  return order;
}

}  // namespace detail

template <typename Evaluator, typename RewardFn, typename Rng>
SearchResult search(const GameState& root, Evaluator& evaluate, const RewardFn& reward,
                    const SearchParams& params, Rng& rng) {
  using detail::SearchNode;
  const TerminalStatus root_status = status(root);
  if (!root_status.ongoing()) throw ContractViolation("search from a finished game");
  if (params.visits < 1) throw ContractViolation("search needs at least one visit");

  SearchResult result;
  std::vector<SearchNode> tree;
  tree.reserve(static_cast<std::size_t>(params.visits) + 1);
  tree.emplace_back(root, root_status);
  {
    const LeafEvaluation e = evaluate(root);
    tree[0].prior = detail::masked_priors(e.priors, tree[0].legal);
    tree[0].visits = 1;
    if (params.noise_fraction > 0.0) {
      const auto eta = detail::dirichlet_noise(tree[0].legal, params.dirichlet_alpha, rng);
      for (int i = 0; i < kNumMoves; ++i) {
        tree[0].prior[i] = (1.0 - params.noise_fraction) * tree[0].prior[i] +
                           params.noise_fraction * eta[i];
      }
    }
  }
  const std::array<int, kNumMoves> order = detail::tie_order(root);

  std::vector<std::pair<int, int>> path;
  for (int sim = 0; sim < params.visits; ++sim) {
    path.clear();
    int node = 0;
    double value = 0.0;  // from the perspective of the mover at path.back()
    while (true) {
      const SearchNode& nd = tree[node];
      const double sqrt_n = std::sqrt(static_cast<double>(nd.visits));
      int best = -1;
      double best_score = 0.0;
      for (int k = 0; k < kNumMoves; ++k) {
        const int a = order[k];
        if (!(nd.legal & (1u << a))) continue;
        const double q = nd.n[a] > 0 ? nd.w[a] / nd.n[a] : 0.0;
        const double score = q + params.c_puct * nd.prior[a] * sqrt_n / (1.0 + nd.n[a]);
        if (best < 0 || score > best_score) {
          best = a;
          best_score = score;
        }
      }
      path.emplace_back(node, best);
      const Player mover = tree[node].state.to_move;
      int child = tree[node].child[best];
      if (child < 0) {
        const GameState next = apply_move_unchecked(tree[node].state, Move{best});
        const TerminalStatus t = status(next);
        child = static_cast<int>(tree.size());
        tree[node].child[best] = child;
        tree.emplace_back(next, t);
        tree[child].visits = 1;
        if (!t.ongoing()) {
          value = reward(outcome_of(t), mover);
          ++result.terminal_leaves;
          result.max_abs_terminal_value = std::max(result.max_abs_terminal_value, std::abs(value));
        } else {
          const LeafEvaluation e = evaluate(next);
          tree[child].prior = detail::masked_priors(e.priors, tree[child].legal);
          value = -e.value;
          result.max_abs_leaf_value = std::max(result.max_abs_leaf_value, std::abs(e.value));
        }
        break;
      }
      if (!tree[child].status.ongoing()) {
        value = reward(outcome_of(tree[child].status), mover);
        ++result.terminal_leaves;
        result.max_abs_terminal_value = std::max(result.max_abs_terminal_value, std::abs(value));
        break;
      }
      node = child;
    }
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      SearchNode& nd = tree[it->first];
      nd.n[it->second] += 1;
      nd.w[it->second] += value;
      nd.visits += 1;
      value = -value;
    }
    ++result.simulations;
  }

  const SearchNode& r = tree[0];
  int total = 0;
  for (int i = 0; i < kNumMoves; ++i) total += r.n[i];
  for (int i = 0; i < kNumMoves; ++i) {
    result.visits[i] = r.n[i];
    result.policy[i] = static_cast<double>(r.n[i]) / total;
    result.priors[i] = r.prior[i];
    result.q[i] = r.n[i] > 0 ? r.w[i] / r.n[i] : 0.0;
  }
  return result;
}

// Temperature 0 picks the most visited move (lowest index on ties);
// otherwise samples with probability proportional to visits^(1/temperature).
template <typename Rng>
Move select_move(const std::array<double, kNumMoves>& visits, double temperature, Rng& rng) {
  double total = 0.0;
  for (double v : visits) total += v;
  if (!(total > 0.0)) throw ContractViolation("select_move on an all-zero distribution");
  if (temperature <= 0.0) {
    return Move{static_cast<int>(std::max_element(visits.begin(), visits.end()) - visits.begin())};
  }
  std::array<double, kNumMoves> weights{};
  const double top = *std::max_element(visits.begin(), visits.end());
  for (int i = 0; i < kNumMoves; ++i) {
    weights[i] = visits[i] > 0.0 ? std::pow(visits[i] / top, 1.0 / temperature) : 0.0;
  }
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  return Move{pick(rng)};
}

// One line per legal root move: direction, prior, visits, mean value.
inline std::string format_trace(const GameState& root, const SearchResult& r) {
  std::ostringstream out;
  out << to_notation(root) << '\n';
  const std::uint8_t legal = legal_mask(root);
  for (int i = 0; i < kNumMoves; ++i) {
    if (!(legal & (1u << i))) continue;
    out << "  move (" << kDirections[i].first << ',' << kDirections[i].second << ") prior "
        << r.priors[i] << " N " << r.visits[i] << " Q " << r.q[i] << '\n';
  }
  return out.str();
}

}  // namespace ordinal
