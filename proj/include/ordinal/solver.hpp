#pragma once

// Retrograde analysis of the opposition game. Positions are solved without
// regard to the ply counter; the timeout only matters when games are played
// out. Distances count plies to the end of the game under optimal play, with
// the winner hurrying and the loser stalling.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <string>
#include <vector>

#include "ordinal/game.hpp"
#include "ordinal/outcome.hpp"

namespace ordinal {

enum class Value : std::uint8_t { kInvalid = 0, kWinForMover = 1, kLossForMover = 2, kDrawn = 3 };

struct SolvedEntry {
  Value value = Value::kInvalid;
  std::uint16_t distance = 0;  // 0 for drawn and invalid entries

  friend bool operator==(const SolvedEntry&, const SolvedEntry&) = default;
};

class Tablebase {
 public:
  Tablebase() = default;
  explicit Tablebase(BoardDims dims)
      : dims_(dims),
        entries_(static_cast<std::size_t>(2) * dims.cells() * dims.cells()) {}

  const BoardDims& dims() const { return dims_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t index(Square p1, Square p2, Player to_move) const {
    const std::size_t n = static_cast<std::size_t>(dims_.cells());
    const std::size_t a = static_cast<std::size_t>(p1.rank * dims_.width + p1.file);
    const std::size_t b = static_cast<std::size_t>(p2.rank * dims_.width + p2.file);
    return (static_cast<std::size_t>(player_index(to_move)) * n + a) * n + b;
  }
  std::size_t index(const GameState& s) const { return index(s.p1, s.p2, s.to_move); }

  // Inverse of index(); the ply of the returned state is zero.
  GameState state_at(std::size_t i) const {
    const std::size_t n = static_cast<std::size_t>(dims_.cells());
    const int b = static_cast<int>(i % n);
    const int a = static_cast<int>((i / n) % n);
    const int side = static_cast<int>(i / (n * n));
    GameState s;
    s.dims = dims_;
    s.p1 = {a % dims_.width, a / dims_.width};
    s.p2 = {b % dims_.width, b / dims_.width};
    s.to_move = side == 0 ? Player::kOne : Player::kTwo;
    return s;
  }

  const SolvedEntry& at(const GameState& s) const { return entries_.at(index(s)); }
  const SolvedEntry& at(std::size_t i) const { return entries_.at(i); }
  SolvedEntry& mutable_at(std::size_t i) { return entries_.at(i); }

  friend bool operator==(const Tablebase&, const Tablebase&) = default;

 private:
  BoardDims dims_;
  std::vector<SolvedEntry> entries_;
};

// True for positions the tablebase covers: kings apart and neither on its
// goal rank.
inline bool is_live_position(const GameState& s) {
  return !(s.p1 == s.p2) && s.p1.rank != goal_rank(s.dims, Player::kOne) &&
         s.p2.rank != goal_rank(s.dims, Player::kTwo);
}

// A move ends the game at once if it captures or reaches the goal rank.
inline bool is_immediate_win(const GameState& s, Move m) {
  const Square k = s.king(s.to_move);
  const Square dest{k.file + m.df(), k.rank + m.dr()};
  return dest == s.king(opponent(s.to_move)) || dest.rank == goal_rank(s.dims, s.to_move);
}

inline Tablebase solve(const BoardDims& dims) {
  require_valid(dims);
  Tablebase tb(dims);
  const std::size_t n = tb.size();

  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_live_position(tb.state_at(i))) live.push_back(i);
  }

  // Successor index per move, or a sentinel for immediate wins / off-board.
  constexpr std::size_t kOffBoard = std::numeric_limits<std::size_t>::max();
  constexpr std::size_t kWinsNow = kOffBoard - 1;
  std::vector<std::array<std::size_t, kNumMoves>> succ(live.size());
  for (std::size_t k = 0; k < live.size(); ++k) {
    const GameState s = tb.state_at(live[k]);
    const std::uint8_t mask = legal_mask(s);
    for (int m = 0; m < kNumMoves; ++m) {
      if (!(mask & (1u << m))) {
        succ[k][m] = kOffBoard;
      } else if (is_immediate_win(s, Move{m})) {
        succ[k][m] = kWinsNow;
      } else {
        succ[k][m] = tb.index(apply_move_unchecked(s, Move{m}));
      }
    }
  }

  // Layer d resolves wins in d (odd d) or losses in d (even d). A win in d
  // needs a reply losing in d-1; a loss in d has every reply already won,
  // which makes d one more than the slowest of them.
  std::vector<std::size_t> newly;
  int idle_layers = 0;
  for (int d = 1; idle_layers < 2; ++d) {
    if (d > std::numeric_limits<std::uint16_t>::max()) {
      throw std::runtime_error("solve: distance overflow");
    }
    newly.clear();
    for (std::size_t k = 0; k < live.size(); ++k) {
      if (tb.at(live[k]).value != Value::kInvalid) continue;
      bool resolved = false;
      if (d % 2 == 1) {
        for (std::size_t t : succ[k]) {
          if (t == kOffBoard) continue;
          if (d == 1 ? t == kWinsNow
                     : (t != kWinsNow && tb.at(t).value == Value::kLossForMover &&
                        tb.at(t).distance == d - 1)) {
            resolved = true;
            break;
          }
        }
      } else {
        resolved = true;
        for (std::size_t t : succ[k]) {
          if (t == kOffBoard) continue;
          if (t == kWinsNow || tb.at(t).value != Value::kWinForMover) {
            resolved = false;
            break;
          }
        }
      }
      if (resolved) newly.push_back(live[k]);
    }
    // Commit after the scan so a layer only sees strictly shorter distances.
    for (std::size_t i : newly) {
      tb.mutable_at(i) = {d % 2 == 1 ? Value::kWinForMover : Value::kLossForMover,
                          static_cast<std::uint16_t>(d)};
    }
    idle_layers = newly.empty() ? idle_layers + 1 : 0;
  }

  for (std::size_t i : live) {
    if (tb.at(i).value == Value::kInvalid) tb.mutable_at(i) = {Value::kDrawn, 0};
  }
  return tb;
}

// Distance in plies that `m` leaves the game at, seen from the mover: the
// result is positive for a win, negative for a loss, and nullopt for a draw.
inline std::optional<int> move_distance(const Tablebase& tb, const GameState& s, Move m) {
  if (is_immediate_win(s, m)) return 1;
  const SolvedEntry& e = tb.at(apply_move_unchecked(s, m));
  switch (e.value) {
    case Value::kLossForMover: return e.distance + 1;
    case Value::kWinForMover: return -(e.distance + 1);
    default: return std::nullopt;
  }
}

// Every optimal move: fastest win, slowest loss, or any move keeping a draw.
inline std::vector<Move> perfect_moves(const Tablebase& tb, const GameState& s) {
  if (!(s.dims == tb.dims())) throw ContractViolation("tablebase dims differ from state dims");
  if (!status(s).ongoing()) throw ContractViolation("perfect_moves on a finished game");
  const std::vector<Move> moves = legal_moves(s);
  const SolvedEntry& here = tb.at(s);

  std::vector<Move> best;
  std::optional<int> best_score;
  for (Move m : moves) {
    const std::optional<int> d = move_distance(tb, s, m);
    int score;
    if (here.value == Value::kWinForMover) {
      if (!d || *d < 0) continue;
      score = -*d;
    } else if (here.value == Value::kLossForMover) {
      if (!d) continue;
      score = -*d;  // d is negative; larger magnitude is better
    } else {
      if (d) continue;
      score = 0;
    }
    if (!best_score || score > *best_score) {
      best_score = score;
      best.clear();
    }
    if (score == *best_score) best.push_back(m);
  }
  if (best.empty()) throw std::logic_error("perfect_moves: inconsistent tablebase entry");
  return best;
}

// First optimal move in the fixed direction order.
inline Move perfect_move(const Tablebase& tb, const GameState& s) {
  return perfect_moves(tb, s).front();
}

// Plays both sides perfectly from `s` until the game ends.
inline Outcome oracle_outcome(const Tablebase& tb, GameState s) {
  TerminalStatus t = status(s);
  while (t.ongoing()) {
    std::tie(s, t) = apply_move(s, perfect_move(tb, s));
  }
  return outcome_of(t);
}

struct TablebaseSummary {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t draws = 0;
  int max_distance = 0;
};

inline TablebaseSummary summarize(const Tablebase& tb) {
  TablebaseSummary s;
  for (std::size_t i = 0; i < tb.size(); ++i) {
    const SolvedEntry& e = tb.at(i);
    switch (e.value) {
      case Value::kWinForMover: ++s.wins; break;
      case Value::kLossForMover: ++s.losses; break;
      case Value::kDrawn: ++s.draws; break;
      case Value::kInvalid: break;
    }
    s.max_distance = std::max<int>(s.max_distance, e.distance);
  }
  return s;
}

// Binary dump: "OPTB", u16 version, u16 width, u16 height, then for every
// index in (side, p1 square, p2 square) row-major order one value byte and a
// u16 distance. All integers little-endian.
inline constexpr std::uint16_t kTablebaseVersion = 1;

namespace detail {

inline void put_u16(std::ostream& out, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(bytes, 2);
}

inline std::uint16_t get_u16(std::istream& in) {
  unsigned char bytes[2] = {0, 0};
  in.read(reinterpret_cast<char*>(bytes), 2);
  return static_cast<std::uint16_t>(bytes[0] | (bytes[1] << 8));
}

}  // namespace detail

inline void save_tablebase(const Tablebase& tb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("OPTB", 4);
  detail::put_u16(out, kTablebaseVersion);
  detail::put_u16(out, static_cast<std::uint16_t>(tb.dims().width));
  detail::put_u16(out, static_cast<std::uint16_t>(tb.dims().height));
  for (std::size_t i = 0; i < tb.size(); ++i) {
    out.put(static_cast<char>(tb.at(i).value));
    detail::put_u16(out, tb.at(i).distance);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Tablebase load_tablebase(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (std::string(magic, 4) != "OPTB") throw std::runtime_error("not a tablebase: " + path);
  if (detail::get_u16(in) != kTablebaseVersion) {
    throw std::runtime_error("unsupported tablebase version: " + path);
  }
  BoardDims dims;
  dims.width = detail::get_u16(in);
  dims.height = detail::get_u16(in);
  if (!in || !dims.valid()) throw std::runtime_error("bad tablebase header: " + path);
  Tablebase tb(dims);
  for (std::size_t i = 0; i < tb.size(); ++i) {
    const int v = in.get();
    const std::uint16_t d = detail::get_u16(in);
    if (!in || v < 0 || v > 3) throw std::runtime_error("truncated tablebase: " + path);
    tb.mutable_at(i) = {static_cast<Value>(v), d};
  }
  return tb;
}

}  // namespace ordinal
