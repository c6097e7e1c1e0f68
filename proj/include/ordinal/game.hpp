#pragma once

// Rules engine for the w x h opposition game: two kings race to the opposite
// back rank; capturing the other king also wins. Rank 0 is Player One's back
// rank, so Player One wins by reaching rank h-1.

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ordinal {

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Player : std::uint8_t { kOne = 0, kTwo = 1 };

constexpr Player opponent(Player p) {
  return p == Player::kOne ? Player::kTwo : Player::kOne;
}

constexpr int player_index(Player p) { return static_cast<int>(p); }

struct BoardDims {
  int width = 3;
  int height = 9;

  constexpr int cells() const { return width * height; }
  constexpr int timeout() const { return 20 * height; }
  constexpr bool valid() const { return width >= 1 && height >= 2; }

  friend constexpr bool operator==(const BoardDims&, const BoardDims&) = default;
};

inline void require_valid(const BoardDims& dims) {
  if (!dims.valid()) {
    throw ContractViolation("board needs width >= 1 and height >= 2, got " +
                            std::to_string(dims.width) + "x" +
                            std::to_string(dims.height));
  }
}

struct Square {
  int file = 0;
  int rank = 0;

  friend constexpr bool operator==(const Square&, const Square&) = default;
};

// The eight king directions, sorted lexicographically by (df, dr). A move's
// index into this table is also its policy-head index.
inline constexpr int kNumMoves = 8;
inline constexpr std::array<std::pair<int, int>, kNumMoves> kDirections = {{
    {-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1},
}};

struct Move {
  int index = 0;

  constexpr int df() const { return kDirections[index].first; }
  constexpr int dr() const { return kDirections[index].second; }

  friend constexpr bool operator==(const Move&, const Move&) = default;
};

// Index of the direction with the file component negated.
constexpr Move mirror(Move m) {
  for (int i = 0; i < kNumMoves; ++i) {
    if (kDirections[i].first == -m.df() && kDirections[i].second == m.dr()) {
      return Move{i};
    }
  }
  return m;
}

struct GameState {
  BoardDims dims;
  Square p1;
  Square p2;
  Player to_move = Player::kOne;
  int ply = 0;

  const Square& king(Player p) const { return p == Player::kOne ? p1 : p2; }
  Square& king(Player p) { return p == Player::kOne ? p1 : p2; }

  friend bool operator==(const GameState&, const GameState&) = default;
};

struct TerminalStatus {
  enum class Kind : std::uint8_t { kOngoing, kWon, kDrawTimeout };

  Kind kind = Kind::kOngoing;
  Player winner = Player::kOne;  // meaningful only for kWon
  int plies = 0;                 // total game length when terminal

  bool ongoing() const { return kind == Kind::kOngoing; }

  static TerminalStatus ongoing_status() { return {}; }
  static TerminalStatus won(Player w, int plies) { return {Kind::kWon, w, plies}; }
  static TerminalStatus draw(int plies) { return {Kind::kDrawTimeout, Player::kOne, plies}; }

  friend bool operator==(const TerminalStatus&, const TerminalStatus&) = default;
};

constexpr bool on_board(const BoardDims& dims, Square s) {
  return s.file >= 0 && s.file < dims.width && s.rank >= 0 && s.rank < dims.height;
}

// Rank a king must reach to win.
constexpr int goal_rank(const BoardDims& dims, Player p) {
  return p == Player::kOne ? dims.height - 1 : 0;
}

inline std::vector<GameState> starting_positions(const BoardDims& dims) {
  require_valid(dims);
  std::vector<GameState> out;
  out.reserve(static_cast<std::size_t>(dims.width) * dims.width);
  for (int f1 = 0; f1 < dims.width; ++f1) {
    for (int f2 = 0; f2 < dims.width; ++f2) {
      out.push_back(GameState{dims, {f1, 0}, {f2, dims.height - 1}, Player::kOne, 0});
    }
  }
  return out;
}

// Status derived from the position alone. The player who is not to move made
// the last move, so a shared square or a king on its goal rank is their win.
inline TerminalStatus status(const GameState& s) {
  const Player last = opponent(s.to_move);
  if (s.p1 == s.p2) return TerminalStatus::won(last, s.ply);
  if (s.p1.rank == goal_rank(s.dims, Player::kOne)) {
    return TerminalStatus::won(Player::kOne, s.ply);
  }
  if (s.p2.rank == goal_rank(s.dims, Player::kTwo)) {
    return TerminalStatus::won(Player::kTwo, s.ply);
  }
  if (s.ply >= s.dims.timeout()) return TerminalStatus::draw(s.ply);
  return TerminalStatus::ongoing_status();
}

// Bit i set iff direction i keeps the mover's king on the board.
inline std::uint8_t legal_mask(const GameState& s) {
  const Square k = s.king(s.to_move);
  std::uint8_t mask = 0;
  for (int i = 0; i < kNumMoves; ++i) {
    if (on_board(s.dims, {k.file + kDirections[i].first, k.rank + kDirections[i].second})) {
      mask |= static_cast<std::uint8_t>(1u << i);
    }
  }
  return mask;
}

inline std::vector<Move> legal_moves(const GameState& s) {
  if (!status(s).ongoing()) throw ContractViolation("legal_moves on a finished game");
  std::vector<Move> out;
  const std::uint8_t mask = legal_mask(s);
  for (int i = 0; i < kNumMoves; ++i) {
    if (mask & (1u << i)) out.push_back(Move{i});
  }
  return out;
}

// Skips validation; callers guarantee the move is legal and the game ongoing.
inline GameState apply_move_unchecked(const GameState& s, Move m) {
  GameState next = s;
  Square& k = next.king(s.to_move);
  k.file += m.df();
  k.rank += m.dr();
  next.to_move = opponent(s.to_move);
  next.ply = s.ply + 1;
  return next;
}

inline std::pair<GameState, TerminalStatus> apply_move(const GameState& s, Move m) {
  if (m.index < 0 || m.index >= kNumMoves) throw ContractViolation("move index out of range");
  if (!status(s).ongoing()) throw ContractViolation("apply_move on a finished game");
  if (!(legal_mask(s) & (1u << m.index))) throw ContractViolation("move leaves the board");
  GameState next = apply_move_unchecked(s, m);
  return {next, status(next)};
}

inline GameState mirror(const GameState& s) {
  GameState m = s;
  m.p1.file = s.dims.width - 1 - s.p1.file;
  m.p2.file = s.dims.width - 1 - s.p2.file;
  return m;
}

// Network input planes, laid out [plane][rank][file].
inline constexpr int kNumPlanes = 5;
inline constexpr double kPlyScale = 0.1;

inline std::vector<double> encode(const GameState& s) {
  const int hw = s.dims.cells();
  const double eps = 1.0 / hw;
  std::vector<double> planes(static_cast<std::size_t>(kNumPlanes) * hw);
  auto plane = [&](int c) { return planes.begin() + static_cast<std::ptrdiff_t>(c) * hw; };
  std::fill(plane(0), plane(1), -eps);
  std::fill(plane(1), plane(2), -eps);
  std::fill(plane(2), plane(3), kPlyScale * s.ply * eps);
  std::fill(plane(3), plane(4), s.to_move == Player::kOne ? eps : -eps);
  std::fill(plane(4), plane(5), eps);
  if (on_board(s.dims, s.p1)) planes[0 * hw + s.p1.rank * s.dims.width + s.p1.file] = 1.0;
  if (on_board(s.dims, s.p2)) planes[1 * hw + s.p2.rank * s.dims.width + s.p2.file] = 1.0;
  return planes;
}

// Textual notation "w,h/p1file,p1rank/p2file,p2rank/side/ply", side is 1 or 2.
inline std::string to_notation(const GameState& s) {
  return std::to_string(s.dims.width) + "," + std::to_string(s.dims.height) + "/" +
         std::to_string(s.p1.file) + "," + std::to_string(s.p1.rank) + "/" +
         std::to_string(s.p2.file) + "," + std::to_string(s.p2.rank) + "/" +
         (s.to_move == Player::kOne ? "1" : "2") + "/" + std::to_string(s.ply);
}

namespace detail {

inline int parse_int(std::string_view text, std::string_view whole) {
  if (text.empty()) throw std::invalid_argument("bad state notation: " + std::string(whole));
  int value = 0;
  bool negative = false;
  std::size_t i = 0;
  if (text[0] == '-') {
    negative = true;
    i = 1;
  }
  if (i == text.size()) throw std::invalid_argument("bad state notation: " + std::string(whole));
  for (; i < text.size(); ++i) {
    if (text[i] < '0' || text[i] > '9') {
      throw std::invalid_argument("bad state notation: " + std::string(whole));
    }
    value = value * 10 + (text[i] - '0');
  }
  return negative ? -value : value;
}

inline std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace detail

inline GameState parse_notation(std::string_view text) {
  const auto fields = detail::split(text, '/');
  if (fields.size() != 5) throw std::invalid_argument("bad state notation: " + std::string(text));
  auto pair_of = [&](std::string_view f) {
    const auto xy = detail::split(f, ',');
    if (xy.size() != 2) throw std::invalid_argument("bad state notation: " + std::string(text));
    return std::pair{detail::parse_int(xy[0], text), detail::parse_int(xy[1], text)};
  };
  GameState s;
  const auto [w, h] = pair_of(fields[0]);
  s.dims = {w, h};
  require_valid(s.dims);
  const auto [f1, r1] = pair_of(fields[1]);
  const auto [f2, r2] = pair_of(fields[2]);
  s.p1 = {f1, r1};
  s.p2 = {f2, r2};
  if (!on_board(s.dims, s.p1) || !on_board(s.dims, s.p2)) {
    throw std::invalid_argument("king off the board: " + std::string(text));
  }
  if (fields[3] == "1") {
    s.to_move = Player::kOne;
  } else if (fields[3] == "2") {
    s.to_move = Player::kTwo;
  } else {
    throw std::invalid_argument("side must be 1 or 2: " + std::string(text));
  }
  s.ply = detail::parse_int(fields[4], text);
  if (s.ply < 0 || s.ply > s.dims.timeout()) {
    throw std::invalid_argument("ply out of range: " + std::string(text));
  }
  return s;
}

}  // namespace ordinal
