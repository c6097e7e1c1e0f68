#pragma once

// Outcome ordering and the four reward functions. All rewards live on
// [-1, +1] and are zero-sum between the two players.
//
// The CDF rewards compare an outcome against a window of recent self-play
// outcomes. The window is kept from Player One's point of view; Player Two
// sees the same lattice reversed.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ordinal/game.hpp"
#include "ordinal/outcome.hpp"

namespace ordinal {

// Position of an outcome on the equally spaced lattice of all outcomes for
// `dims`, ordered from worst to best for Player One:
//   P2 wins in 1..T  ->  0..T-1
//   draw             ->  T
//   P1 wins in T..1  ->  T+1..2T
inline int lattice_size(const BoardDims& dims) { return 2 * dims.timeout() + 1; }

inline int lattice_rank(const Outcome& o, const BoardDims& dims) {
  const int t = dims.timeout();
  switch (o.result) {
    case Result::kWinP2:
      if (o.plies < 1 || o.plies > t) throw ContractViolation("win length out of range");
      return o.plies - 1;
    case Result::kDraw:
      return t;
    case Result::kWinP1:
      if (o.plies < 1 || o.plies > t) throw ContractViolation("win length out of range");
      return 2 * t + 1 - o.plies;
  }
  return t;
}

inline Outcome lattice_outcome(int rank, const BoardDims& dims) {
  const int t = dims.timeout();
  if (rank < 0 || rank > 2 * t) throw ContractViolation("lattice rank out of range");
  if (rank < t) return {Result::kWinP2, rank + 1};
  if (rank == t) return {Result::kDraw, t};
  return {Result::kWinP1, 2 * t + 1 - rank};
}

// Rank in `p`'s own order: larger is better for `p`.
inline int player_rank(const Outcome& o, Player p, const BoardDims& dims) {
  const int r = lattice_rank(o, dims);
  return p == Player::kOne ? r : 2 * dims.timeout() - r;
}

// Negative if `a` is worse than `b` for `p`, zero if equal, positive if better.
inline int compare(const Outcome& a, const Outcome& b, Player p, const BoardDims& dims) {
  return player_rank(a, p, dims) - player_rank(b, p, dims);
}

inline double primitive_reward(const Outcome& o, Player p) {
  return static_cast<double>(result_sign(o, p));
}

// Linear from +1 (-1 for the loser) at zero plies to 0 at the timeout.
inline double handtuned_reward(const Outcome& o, Player p, const BoardDims& dims) {
  const int sign = result_sign(o, p);
  if (sign == 0) return 0.0;
  return sign * (1.0 - static_cast<double>(o.plies) / dims.timeout());
}

class OutcomeWindow {
 public:
  explicit OutcomeWindow(BoardDims dims) : dims_(dims) {}
  OutcomeWindow(BoardDims dims, const std::vector<Outcome>& outcomes) : dims_(dims) {
    for (const Outcome& o : outcomes) add(o);
  }

  void add(const Outcome& o) {
    const int r = lattice_rank(o, dims_);
    outcomes_.push_back(o);
    ranks_.insert(std::upper_bound(ranks_.begin(), ranks_.end(), r), r);
  }

  const BoardDims& dims() const { return dims_; }
  std::size_t size() const { return ranks_.size(); }
  bool empty() const { return ranks_.empty(); }
  const std::vector<Outcome>& outcomes() const { return outcomes_; }

  // Sorted lattice ranks in `p`'s own order (ascending = worse to better).
  std::vector<int> ranks_for(Player p) const {
    if (p == Player::kOne) return ranks_;
    std::vector<int> out(ranks_.size());
    const int top = 2 * dims_.timeout();
    std::transform(ranks_.rbegin(), ranks_.rend(), out.begin(), [top](int r) { return top - r; });
    return out;
  }

  std::size_t count(const Outcome& o) const {
    const int r = lattice_rank(o, dims_);
    return static_cast<std::size_t>(std::upper_bound(ranks_.begin(), ranks_.end(), r) -
                                    std::lower_bound(ranks_.begin(), ranks_.end(), r));
  }

 private:
  BoardDims dims_;
  std::vector<Outcome> outcomes_;
  std::vector<int> ranks_;  // P1 order, ascending
};

namespace detail {

// Midrank of `r` among sorted `ranks`: strictly smaller ones plus half the
// equal ones.
inline double midrank(const std::vector<int>& ranks, int r) {
  const auto lo = std::lower_bound(ranks.begin(), ranks.end(), r);
  const auto hi = std::upper_bound(lo, ranks.end(), r);
  return static_cast<double>(lo - ranks.begin()) + 0.5 * static_cast<double>(hi - lo);
}

// Evaluates `at(rank)` for a recorded rank directly; for an unrecorded rank
// interpolates linearly between the nearest recorded neighbours, holding the
// end values constant beyond the extremes.
template <typename AtRecorded>
double interpolate_on(const std::vector<int>& ranks, int r, AtRecorded at) {
  const auto lo = std::lower_bound(ranks.begin(), ranks.end(), r);
  if (lo != ranks.end() && *lo == r) return at(r);
  if (lo == ranks.begin()) return at(ranks.front());
  if (lo == ranks.end()) return at(ranks.back());
  const int below = *(lo - 1);
  const int above = *lo;
  const double t = static_cast<double>(r - below) / (above - below);
  return at(below) + t * (at(above) - at(below));
}

}  // namespace detail

// 2f - 1, with f the midrank fraction of window outcomes worse than `o` for
// `p`. Outcomes missing from the window are interpolated on the lattice.
// An empty window gives the constant 0.
inline double cdf_reward(const OutcomeWindow& window, const Outcome& o, Player p) {
  if (window.empty()) return 0.0;
  const std::vector<int> ranks = window.ranks_for(p);
  const double n = static_cast<double>(ranks.size());
  return detail::interpolate_on(ranks, player_rank(o, p, window.dims()), [&](int r) {
    return 2.0 * detail::midrank(ranks, r) / n - 1.0;
  });
}

class DegenerateWindow : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// CDF reward recast as the mean score of virtual matches against every
// decisive window outcome, where a match won only on the tiebreak earns
// `alpha` instead of a full point. With L losses and W wins for `p` in the
// window and i the midrank of `o` among them:
//   loss: -1 + (L - aL + 2ai) / (L + W)
//   win:   1 - (W - aW + 2a(L + W - i)) / (L + W)
//   draw: (1 + a)(L - W) / (2(L + W))
// Missing decisive outcomes get i interpolated over the recorded decisive
// ones, with the draw pinned at i = L so the reward stays monotone across
// the jump between losses and wins.
inline double cdf_bonus_reward(const OutcomeWindow& window, const Outcome& o, Player p,
                               double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractViolation("alpha must lie in [0, 1]");
  const BoardDims& dims = window.dims();
  const int draw_rank = dims.timeout();  // the draw sits mid-lattice in both orders
  std::vector<int> decisive;
  for (int r : window.ranks_for(p)) {
    if (r != draw_rank) decisive.push_back(r);
  }
  if (decisive.empty()) throw DegenerateWindow("bonus reward needs at least one decisive outcome");

  const double n = static_cast<double>(decisive.size());
  const double losses = static_cast<double>(
      std::lower_bound(decisive.begin(), decisive.end(), draw_rank) - decisive.begin());
  const double wins = n - losses;

  const int sign = result_sign(o, p);
  if (sign == 0) return (1.0 + alpha) * (losses - wins) / (2.0 * n);

  std::vector<int> anchors = decisive;
  anchors.insert(anchors.begin() + static_cast<std::ptrdiff_t>(losses), draw_rank);
  const double i = detail::interpolate_on(anchors, player_rank(o, p, dims), [&](int r) {
    return r == draw_rank ? losses : detail::midrank(decisive, r);
  });
  if (sign < 0) return -1.0 + (losses - alpha * losses + 2.0 * alpha * i) / n;
  return 1.0 - (wins - alpha * wins + 2.0 * alpha * (n - i)) / n;
}

enum class RewardKind { kPrimitive, kHandTuned, kCdf, kCdfBonus };

inline std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::kPrimitive: return "primitive";
    case RewardKind::kHandTuned: return "handtuned";
    case RewardKind::kCdf: return "cdf";
    case RewardKind::kCdfBonus: return "cdf-bonus";
  }
  return "?";
}

inline RewardKind parse_reward_kind(const std::string& s) {
  if (s == "primitive") return RewardKind::kPrimitive;
  if (s == "handtuned") return RewardKind::kHandTuned;
  if (s == "cdf") return RewardKind::kCdf;
  if (s == "cdf-bonus") return RewardKind::kCdfBonus;
  throw std::invalid_argument("unknown reward kind: " + s);
}

// A reward function frozen over one window, tabulated on the lattice so
// lookups during search are O(1). A bonus window with no decisive outcome
// behaves like an empty CDF window: constant 0.
class RewardFunction {
 public:
  RewardFunction(RewardKind kind, const OutcomeWindow& window, double alpha = 0.5)
      : kind_(kind), dims_(window.dims()), alpha_(alpha) {
    const int size = lattice_size(dims_);
    for (Player p : {Player::kOne, Player::kTwo}) {
      auto& table = tables_[player_index(p)];
      table.resize(static_cast<std::size_t>(size));
      for (int r = 0; r < size; ++r) {
        table[r] = evaluate(lattice_outcome(r, dims_), p, window);
      }
    }
  }

  static RewardFunction without_window(RewardKind kind, BoardDims dims, double alpha = 0.5) {
    return RewardFunction(kind, OutcomeWindow(dims), alpha);
  }

  double operator()(const Outcome& o, Player p) const {
    return tables_[player_index(p)][static_cast<std::size_t>(lattice_rank(o, dims_))];
  }

  RewardKind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  const BoardDims& dims() const { return dims_; }

 private:
  double evaluate(const Outcome& o, Player p, const OutcomeWindow& window) const {
    switch (kind_) {
      case RewardKind::kPrimitive: return primitive_reward(o, p);
      case RewardKind::kHandTuned: return handtuned_reward(o, p, dims_);
      case RewardKind::kCdf: return cdf_reward(window, o, p);
      case RewardKind::kCdfBonus:
        try {
          return cdf_bonus_reward(window, o, p, alpha_);
        } catch (const DegenerateWindow&) {
          return 0.0;
        }
    }
    return 0.0;
  }

  RewardKind kind_;
  BoardDims dims_;
  double alpha_;
  std::vector<double> tables_[2];
};

// One row per lattice outcome, worst to best for Player One:
// outcome,lattice_index,count,p1_reward
inline void write_cdf_csv(const std::string& path, const OutcomeWindow& window,
                          const RewardFunction& reward) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "outcome,lattice_index,count,p1_reward\n";
  char buf[64];
  for (int r = 0; r < lattice_size(window.dims()); ++r) {
    const Outcome o = lattice_outcome(r, window.dims());
    std::snprintf(buf, sizeof buf, "%.17g", reward(o, Player::kOne));
    out << label(o) << ',' << r << ',' << window.count(o) << ',' << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace ordinal
