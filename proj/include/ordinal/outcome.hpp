#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "ordinal/game.hpp"

namespace ordinal {

enum class Result : std::uint8_t { kWinP1, kWinP2, kDraw };

// A finished game: who won and how many plies it took. Draws always last
// exactly the timeout.
struct Outcome {
  Result result = Result::kDraw;
  int plies = 0;

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

inline Outcome outcome_of(const TerminalStatus& t) {
  switch (t.kind) {
    case TerminalStatus::Kind::kWon:
      return {t.winner == Player::kOne ? Result::kWinP1 : Result::kWinP2, t.plies};
    case TerminalStatus::Kind::kDrawTimeout:
      return {Result::kDraw, t.plies};
    case TerminalStatus::Kind::kOngoing:
      break;
  }
  throw ContractViolation("outcome_of an ongoing game");
}

inline Outcome win_for(Player p, int plies) {
  return {p == Player::kOne ? Result::kWinP1 : Result::kWinP2, plies};
}

// +1 if `p` won, -1 if it lost, 0 for a draw.
inline int result_sign(const Outcome& o, Player p) {
  if (o.result == Result::kDraw) return 0;
  const bool p1_won = o.result == Result::kWinP1;
  return (p1_won == (p == Player::kOne)) ? 1 : -1;
}

inline std::string label(const Outcome& o) {
  switch (o.result) {
    case Result::kWinP1: return "P1+" + std::to_string(o.plies);
    case Result::kWinP2: return "P2+" + std::to_string(o.plies);
    case Result::kDraw: return "D" + std::to_string(o.plies);
  }
  return "?";
}

inline Outcome parse_label(const std::string& text) {
  auto plies_from = [&](std::size_t pos) {
    std::size_t used = 0;
    const int v = std::stoi(text.substr(pos), &used);
    if (pos + used != text.size() || v < 0) throw std::invalid_argument("bad outcome label: " + text);
    return v;
  };
  if (text.rfind("P1+", 0) == 0) return {Result::kWinP1, plies_from(3)};
  if (text.rfind("P2+", 0) == 0) return {Result::kWinP2, plies_from(3)};
  if (text.rfind("D", 0) == 0) return {Result::kDraw, plies_from(1)};
  throw std::invalid_argument("bad outcome label: " + text);
}

}  // namespace ordinal
