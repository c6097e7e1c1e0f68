#pragma once

// Demerit evaluation against the perfect player. The agent plays every
// starting position twice, once per color; its score is the sum of its
// hand-tuned rewards and demerits are the negation.

#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "ordinal/game.hpp"
#include "ordinal/mcts.hpp"
#include "ordinal/nn.hpp"
#include "ordinal/outcome.hpp"
#include "ordinal/parallel.hpp"
#include "ordinal/rewards.hpp"
#include "ordinal/solver.hpp"

namespace ordinal {

struct EvalGame {
  int start_index = 0;
  Player agent = Player::kOne;
  Outcome outcome;
  double agent_reward = 0.0;  // hand-tuned, from the agent's side
};

struct EvalResult {
  std::vector<EvalGame> games;  // start 0 as P1, start 0 as P2, start 1 as P1, ...
  double demerits = 0.0;
};

inline int eval_game_count(const BoardDims& dims) { return 2 * dims.width * dims.width; }

// Plays one evaluation game; `agent` maps a state to a move.
template <typename Agent>
EvalGame play_eval_game(const Tablebase& tb, int start_index, Player agent_side, Agent& agent) {
  const std::vector<GameState> starts = starting_positions(tb.dims());
  GameState s = starts.at(static_cast<std::size_t>(start_index));
  TerminalStatus t = status(s);
  while (t.ongoing()) {
    const Move m = s.to_move == agent_side ? agent(s) : perfect_move(tb, s);
    std::tie(s, t) = apply_move(s, m);
  }
  EvalGame g;
  g.start_index = start_index;
  g.agent = agent_side;
  g.outcome = outcome_of(t);
  g.agent_reward = handtuned_reward(g.outcome, agent_side, tb.dims());
  return g;
}

// `make_agent()` returns a fresh agent for each game so games can run on
// separate threads.
template <typename MakeAgent>
EvalResult evaluate_agent(const Tablebase& tb, MakeAgent make_agent, int workers = 1) {
  const int n = eval_game_count(tb.dims());
  EvalResult r;
  r.games.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    auto agent = make_agent();
    r.games[i] = play_eval_game(tb, static_cast<int>(i / 2), i % 2 == 0 ? Player::kOne : Player::kTwo,
                                agent);
  });
  // Against perfect play neither color can beat the theoretical result, so
  // the pair from one starting position never scores above zero.
  for (std::size_t i = 0; i < r.games.size(); i += 2) {
    if (r.games[i].agent_reward + r.games[i + 1].agent_reward > 1e-12) {
      throw std::logic_error("agent outscored the perfect player from start " +
                             std::to_string(r.games[i].start_index));
    }
  }
  double score = 0.0;
  for (const EvalGame& g : r.games) score += g.agent_reward;
  r.demerits = score == 0.0 ? 0.0 : -score;  // keep -0 out of the CSV
  return r;
}

// Demerits of the perfect player against itself: the lowest score any
// agent can reach.
inline double oracle_floor(const Tablebase& tb) {
  return evaluate_agent(tb, [&tb] {
           return [&tb](const GameState& s) { return perfect_move(tb, s); };
         }).demerits;
}

// Temperature-0, noise-free network agent. Outcome heads are valued with
// `reward`.
template <typename RewardFn>
EvalResult evaluate(const Network& net, const RewardFn& reward, const Tablebase& tb,
                    const SearchParams& params, int workers = 1) {
  if (!(net.config().dims == tb.dims())) throw ContractViolation("network and tablebase dims differ");
  return evaluate_agent(
      tb,
      [&] {
        return [&net, &reward, &params, evaluator = NetworkEvaluator<RewardFn>(net, reward),
                rng = std::mt19937_64(0)](const GameState& s) mutable {
          const SearchResult r = search(s, evaluator, reward, params, rng);
          std::array<double, kNumMoves> counts{};
          for (int i = 0; i < kNumMoves; ++i) counts[i] = r.visits[i];
          return select_move(counts, params.temperature, rng);
        };
      },
      workers);
}

inline std::vector<std::string> game_labels(const EvalResult& r) {
  std::vector<std::string> out;
  out.reserve(r.games.size());
  for (const EvalGame& g : r.games) out.push_back(label(g.outcome));
  return out;
}

}  // namespace ordinal
