#pragma once

// Generation-based self-play training. Each generation plays a batch of
// games against a frozen snapshot, trains on the most recent generations'
// positions, evaluates against the perfect player, and persists everything
// needed to resume into a run directory.
//
// Windows: self-play in generation g values outcomes against generations
// g-5 .. g-1; training and evaluation after generation g use g-4 .. g.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <tuple>
#include <vector>

#include "ordinal/eval.hpp"
#include "ordinal/game.hpp"
#include "ordinal/mcts.hpp"
#include "ordinal/nn.hpp"
#include "ordinal/outcome.hpp"
#include "ordinal/parallel.hpp"
#include "ordinal/rewards.hpp"
#include "ordinal/solver.hpp"

namespace ordinal {

struct TrainConfig {
  BoardDims dims{3, 5};
  RewardKind reward = RewardKind::kHandTuned;
  double alpha = 0.5;
  HeadKind head = HeadKind::kValue;
  int generations = 1;
  int games_per_generation = 25;
  int window_generations = 5;
  int epochs = 5;
  int batch_size = 32;
  double learning_rate = 0.005;
  double momentum = 0.9;
  double grad_clip = 10.0;  // max gradient L2 norm per step; 0 disables
  int visits = 0;  // 0 means 20 * height
  double c_puct = 1.5;
  double dirichlet_alpha = 0.5;
  double noise_fraction = 0.25;
  double temperature = 1.0;
  int trunk_layers = 3;
  int trunk_channels = 16;
  int policy_channels = 32;
  int hidden = 64;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

  int search_visits() const { return visits > 0 ? visits : 20 * dims.height; }

  SearchParams self_play_params() const {
    SearchParams p;
    p.visits = search_visits();
    p.c_puct = c_puct;
    p.dirichlet_alpha = dirichlet_alpha;
    p.noise_fraction = noise_fraction;
    p.temperature = temperature;
    return p;
  }

  SearchParams eval_params() const {
    SearchParams p = self_play_params();
    p.noise_fraction = 0.0;
    p.temperature = 0.0;
    return p;
  }

  NetworkConfig network() const {
    return {dims, head, trunk_layers, trunk_channels, policy_channels, hidden};
  }

  // Throws std::invalid_argument with a message fit for a user.
  void validate() const {
    if (!dims.valid()) throw std::invalid_argument("board must be at least 1 wide and 2 tall");
    if ((reward == RewardKind::kCdf || reward == RewardKind::kCdfBonus) && head != HeadKind::kOutcome) {
      throw std::invalid_argument("reward '" + to_string(reward) +
                                  "' needs an outcome head: a CDF reward changes as the window "
                                  "moves, so a value head would learn stale targets");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
    if (generations < 1 || games_per_generation < 1 || window_generations < 1 || epochs < 0 ||
        batch_size < 1 || visits < 0) {
      throw std::invalid_argument("counts must be positive");
    }
    if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0) || !(temperature >= 0.0) ||
        !(dirichlet_alpha > 0.0) || !(learning_rate > 0.0) || !(momentum >= 0.0) || !(grad_clip >= 0.0)) {
      throw std::invalid_argument("search or optimizer parameter out of range");
    }
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw std::runtime_error("config: bad value for " + key + ": " + text);
  }
  return v;
}

}  // namespace detail

// Human-readable "key = value" lines; doubles use the shortest exact form.
inline std::string config_text(const TrainConfig& c) {
  using detail::format_double;
  std::ostringstream out;
  out << "format = 1\n"
      << "width = " << c.dims.width << '\n'
      << "height = " << c.dims.height << '\n'
      << "reward = " << to_string(c.reward) << '\n'
      << "alpha = " << format_double(c.alpha) << '\n'
      << "head = " << to_string(c.head) << '\n'
      << "generations = " << c.generations << '\n'
      << "games_per_generation = " << c.games_per_generation << '\n'
      << "window_generations = " << c.window_generations << '\n'
      << "epochs = " << c.epochs << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "learning_rate = " << format_double(c.learning_rate) << '\n'
      << "momentum = " << format_double(c.momentum) << '\n'
      << "grad_clip = " << format_double(c.grad_clip) << '\n'
      << "visits = " << c.search_visits() << '\n'
      << "c_puct = " << format_double(c.c_puct) << '\n'
      << "dirichlet_alpha = " << format_double(c.dirichlet_alpha) << '\n'
      << "noise_fraction = " << format_double(c.noise_fraction) << '\n'
      << "temperature = " << format_double(c.temperature) << '\n'
      << "trunk_layers = " << c.trunk_layers << '\n'
      << "trunk_channels = " << c.trunk_channels << '\n'
      << "policy_channels = " << c.policy_channels << '\n'
      << "hidden = " << c.hidden << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

inline TrainConfig parse_config(const std::string& text) {
  using detail::parse_number;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("config: malformed line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto take = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("config: missing key " + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  if (take("format") != "1") throw std::runtime_error("config: unsupported format");
  TrainConfig c;
  c.dims.width = parse_number<int>("width", take("width"));
  c.dims.height = parse_number<int>("height", take("height"));
  c.reward = parse_reward_kind(take("reward"));
  c.alpha = parse_number<double>("alpha", take("alpha"));
  c.head = parse_head_kind(take("head"));
  c.generations = parse_number<int>("generations", take("generations"));
  c.games_per_generation = parse_number<int>("games_per_generation", take("games_per_generation"));
  c.window_generations = parse_number<int>("window_generations", take("window_generations"));
  c.epochs = parse_number<int>("epochs", take("epochs"));
  c.batch_size = parse_number<int>("batch_size", take("batch_size"));
  c.learning_rate = parse_number<double>("learning_rate", take("learning_rate"));
  c.momentum = parse_number<double>("momentum", take("momentum"));
  c.grad_clip = parse_number<double>("grad_clip", take("grad_clip"));
  c.visits = parse_number<int>("visits", take("visits"));
  c.c_puct = parse_number<double>("c_puct", take("c_puct"));
  c.dirichlet_alpha = parse_number<double>("dirichlet_alpha", take("dirichlet_alpha"));
  c.noise_fraction = parse_number<double>("noise_fraction", take("noise_fraction"));
  c.temperature = parse_number<double>("temperature", take("temperature"));
  c.trunk_layers = parse_number<int>("trunk_layers", take("trunk_layers"));
  c.trunk_channels = parse_number<int>("trunk_channels", take("trunk_channels"));
  c.policy_channels = parse_number<int>("policy_channels", take("policy_channels"));
  c.hidden = parse_number<int>("hidden", take("hidden"));
  c.seed = parse_number<std::uint64_t>("seed", take("seed"));
  if (!kv.empty()) throw std::runtime_error("config: unknown key " + kv.begin()->first);
  return c;
}

// Independent generator per (purpose, generation, index), all derived from
// the run seed, so results do not depend on scheduling or on resuming.
enum class Stream : std::uint32_t { kInit = 1, kSelfPlay = 2, kShuffle = 3 };

inline std::mt19937_64 stream_rng(std::uint64_t seed, Stream purpose, std::uint64_t a = 0,
                                  std::uint64_t b = 0) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), static_cast<std::uint32_t>(purpose), lo(a), hi(a), lo(b), hi(b)};
  return std::mt19937_64(seq);
}

inline Network initial_network(const TrainConfig& c) {
  return Network(c.network(), stream_rng(c.seed, Stream::kInit)());
}

struct SearchStats {
  long searches = 0;
  long terminal_leaves = 0;
  double max_abs_terminal_value = 0.0;
  double max_abs_leaf_value = 0.0;
  double max_abs_root_q = 0.0;

  void add(const SearchResult& r) {
    ++searches;
    terminal_leaves += r.terminal_leaves;
    max_abs_terminal_value = std::max(max_abs_terminal_value, r.max_abs_terminal_value);
    max_abs_leaf_value = std::max(max_abs_leaf_value, r.max_abs_leaf_value);
    for (double q : r.q) max_abs_root_q = std::max(max_abs_root_q, std::abs(q));
  }

  void merge(const SearchStats& o) {
    searches += o.searches;
    terminal_leaves += o.terminal_leaves;
    max_abs_terminal_value = std::max(max_abs_terminal_value, o.max_abs_terminal_value);
    max_abs_leaf_value = std::max(max_abs_leaf_value, o.max_abs_leaf_value);
    max_abs_root_q = std::max(max_abs_root_q, o.max_abs_root_q);
  }
};

struct GameRecord {
  int start_index = 0;
  std::vector<Move> moves;
  Outcome outcome;
  std::vector<TrainingExample> examples;  // one per position before each move
  SearchStats stats;
};

// One self-play game. Every position becomes a training example whose
// targets are filled in once the game ends.
template <typename RewardFn, typename Rng>
GameRecord play_game(const Network& net, const RewardFn& reward, const SearchParams& params,
                     int start_index, Rng& rng) {
  GameRecord g;
  g.start_index = start_index;
  GameState s = starting_positions(net.config().dims).at(static_cast<std::size_t>(start_index));
  NetworkEvaluator<RewardFn> evaluator(net, reward);
  std::vector<Player> movers;
  std::vector<int> plies;
  TerminalStatus t = status(s);
  while (t.ongoing()) {
    const SearchResult r = search(s, evaluator, reward, params, rng);
    g.stats.add(r);
    TrainingExample ex;
    ex.planes = encode(s);
    ex.policy_target = r.policy;
    g.examples.push_back(std::move(ex));
    movers.push_back(s.to_move);
    plies.push_back(s.ply);
    std::array<double, kNumMoves> counts{};
    for (int i = 0; i < kNumMoves; ++i) counts[i] = r.visits[i];
    const Move m = select_move(counts, params.temperature, rng);
    g.moves.push_back(m);
    std::tie(s, t) = apply_move(s, m);
  }
  g.outcome = outcome_of(t);
  for (std::size_t i = 0; i < g.examples.size(); ++i) {
    TrainingExample& ex = g.examples[i];
    const int sign = result_sign(g.outcome, movers[i]);
    ex.result = sign > 0 ? Wdl::kWin : sign < 0 ? Wdl::kLoss : Wdl::kDraw;
    ex.plies_left = g.outcome.plies - plies[i];
    ex.value_target = reward(g.outcome, movers[i]);
  }
  return g;
}

struct GenerationGames {
  std::vector<GameRecord> games;
  SearchStats stats;

  std::vector<Outcome> outcomes() const {
    std::vector<Outcome> out;
    for (const GameRecord& g : games) out.push_back(g.outcome);
    return out;
  }
};

// Plays one generation of self-play games from uniformly drawn starting
// positions. Game i always uses the same generator, whatever the worker count.
template <typename RewardFn>
GenerationGames play_generation(const Network& net, const RewardFn& reward, const TrainConfig& c,
                                int generation, int workers = 1) {
  GenerationGames out;
  out.games.resize(static_cast<std::size_t>(c.games_per_generation));
  const SearchParams params = c.self_play_params();
  const int starts = static_cast<int>(starting_positions(c.dims).size());
  parallel_for(out.games.size(), workers, [&](std::size_t i) {
    auto rng = stream_rng(c.seed, Stream::kSelfPlay, static_cast<std::uint64_t>(generation), i);
    std::uniform_int_distribution<int> pick(0, starts - 1);
    const int start = pick(rng);
    out.games[i] = play_game(net, reward, params, start, rng);
  });
  for (const GameRecord& g : out.games) out.stats.merge(g.stats);
  return out;
}

// Trains for `epochs` passes over the buffer, reshuffled each epoch; the
// last batch of an epoch may be short. Returns the example-weighted mean
// loss over all steps.
inline LossBreakdown train_epochs(Network& net, NesterovSgd& opt,
                                  const std::vector<const TrainingExample*>& buffer,
                                  const TrainConfig& c, int generation) {
  LossBreakdown sum;
  std::size_t seen = 0;
  if (buffer.empty()) return sum;
  const LossCoefficients coeffs = LossCoefficients::for_head(c.head);
  auto rng = stream_rng(c.seed, Stream::kShuffle, static_cast<std::uint64_t>(generation));
  std::vector<const TrainingExample*> order = buffer;
  for (int e = 0; e < c.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(c.batch_size)) {
      const std::size_t n = std::min(order.size() - at, static_cast<std::size_t>(c.batch_size));
      const LossBreakdown l =
          train_step(net, opt, std::span<const TrainingExample* const>(order.data() + at, n), coeffs);
      const double w = static_cast<double>(n);
      sum.policy += w * l.policy;
      sum.value += w * l.value;
      sum.result += w * l.result;
      sum.plies += w * l.plies;
      seen += n;
    }
  }
  if (seen > 0) {
    const double inv = 1.0 / static_cast<double>(seen);
    sum.policy *= inv;
    sum.value *= inv;
    sum.result *= inv;
    sum.plies *= inv;
  }
  return sum;
}

struct GenerationRecord {
  int generation = 0;
  std::vector<Outcome> outcomes;
  std::size_t examples = 0;         // positions played this generation
  std::size_t buffer_examples = 0;  // positions trained on
  LossBreakdown loss;
  double demerits = 0.0;
  std::vector<std::string> eval_labels;
  SearchStats stats;
  double self_play_seconds = 0.0;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// Run directory persistence.

namespace detail {

inline std::string generation_name(const std::string& prefix, int g, const std::string& suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d", g);
  return prefix + buf + suffix;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void append_line(const std::filesystem::path& p, const std::string& header,
                        const std::string& row) {
  const bool fresh = !std::filesystem::exists(p);
  std::ofstream out(p, std::ios::binary | std::ios::app);
  if (fresh) out << header << '\n';
  out << row << '\n';
  if (!out) throw std::runtime_error("cannot append to " + p.string());
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Keeps the header and rows whose leading generation is at most `last`.
inline void truncate_rows(const std::filesystem::path& p, int last) {
  if (!std::filesystem::exists(p)) return;
  const std::vector<std::string> lines = split_lines(read_text(p));
  std::string kept;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) {
      const int g = std::stoi(lines[i].substr(0, lines[i].find(',')));
      if (g > last) continue;
    }
    kept += lines[i] + '\n';
  }
  write_text(p, kept);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(std::istream& in) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in.get())) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

// Examples file: "OPEX", u32 version, u32 count; per example u32 plane
// count, the planes, eight policy targets, u8 result, u32 plies left and
// the value target. Little-endian throughout.
inline void save_examples(const std::vector<TrainingExample>& examples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("OPEX", 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(examples.size()));
  for (const TrainingExample& e : examples) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.planes.size()));
    for (double v : e.planes) detail::put_f64(out, v);
    for (double v : e.policy_target) detail::put_f64(out, v);
    out.put(static_cast<char>(e.result));
    detail::put_u32(out, static_cast<std::uint32_t>(e.plies_left));
    detail::put_f64(out, e.value_target);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<TrainingExample> load_examples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (std::string(magic, 4) != "OPEX" || detail::get_u32(in) != 1) {
    throw std::runtime_error("not an examples file: " + path);
  }
  std::vector<TrainingExample> out(detail::get_u32(in));
  for (TrainingExample& e : out) {
    e.planes.resize(detail::get_u32(in));
    for (double& v : e.planes) v = detail::get_f64(in);
    for (double& v : e.policy_target) v = detail::get_f64(in);
    e.result = static_cast<Wdl>(in.get());
    e.plies_left = static_cast<int>(detail::get_u32(in));
    e.value_target = detail::get_f64(in);
  }
  if (!in) throw std::runtime_error("truncated examples file: " + path);
  return out;
}

// Optimizer state: "OPSG", u32 version, u32 count, then the velocity.
inline void save_velocity(const std::vector<double>& v, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("OPSG", 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (double x : v) detail::put_f64(out, x);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<double> load_velocity(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (std::string(magic, 4) != "OPSG" || detail::get_u32(in) != 1) {
    throw std::runtime_error("not an optimizer state file: " + path);
  }
  std::vector<double> v(detail::get_u32(in));
  for (double& x : v) x = detail::get_f64(in);
  if (!in) throw std::runtime_error("truncated optimizer state: " + path);
  return v;
}

inline constexpr const char* kOutcomesHeader = "game,start,result,plies,outcome";
inline constexpr const char* kGenerationsHeader =
    "generation,examples,buffer_examples,loss,policy_loss,value_loss,result_loss,plies_loss,"
    "p1_wins,p2_wins,draws,mean_plies";
inline constexpr const char* kTimingHeader = "generation,self_play_seconds,train_seconds,eval_seconds";

inline std::string demerits_header(const BoardDims& dims) {
  std::string h = "generation,demerits";
  for (int i = 0; i < eval_game_count(dims); ++i) h += ",game_" + std::to_string(i);
  return h;
}

inline void write_outcomes_csv(const std::string& path, const std::vector<GameRecord>& games) {
  std::ostringstream out;
  out << kOutcomesHeader << '\n';
  for (std::size_t i = 0; i < games.size(); ++i) {
    const Outcome& o = games[i].outcome;
    const char* result = o.result == Result::kWinP1 ? "P1" : o.result == Result::kWinP2 ? "P2" : "D";
    out << i << ',' << games[i].start_index << ',' << result << ',' << o.plies << ',' << label(o)
        << '\n';
  }
  detail::write_text(path, out.str());
}

inline std::vector<Outcome> read_outcomes_csv(const std::string& path) {
  const std::vector<std::string> lines = detail::split_lines(detail::read_text(path));
  if (lines.empty() || lines[0] != kOutcomesHeader) throw std::runtime_error("bad outcomes file: " + path);
  std::vector<Outcome> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    out.push_back(parse_label(lines[i].substr(lines[i].rfind(',') + 1)));
  }
  return out;
}

// Highest generation with a row in demerits.csv, or -1.
inline int last_complete_generation(const std::filesystem::path& dir) {
  const std::filesystem::path p = dir / "demerits.csv";
  if (!std::filesystem::exists(p)) return -1;
  const std::vector<std::string> lines = detail::split_lines(detail::read_text(p));
  int last = -1;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    last = std::max(last, std::stoi(lines[i].substr(0, lines[i].find(','))));
  }
  return last;
}

struct RunOptions {
  int workers = 1;
  std::function<void(const GenerationRecord&)> on_generation;
};

// Runs generations until `c.generations` are complete, resuming from the
// last generation recorded in `dir`. demerits.csv is written last in each
// generation and marks it complete. Returns the records produced by this call.
inline std::vector<GenerationRecord> run_training(const TrainConfig& c, const std::filesystem::path& dir,
                                                  const RunOptions& opts = {}) {
  namespace fs = std::filesystem;
  using detail::generation_name;
  using Clock = std::chrono::steady_clock;
  c.validate();
  fs::create_directories(dir);

  const fs::path config_path = dir / "config";
  int last = -1;
  if (fs::exists(config_path)) {
    TrainConfig stored = parse_config(detail::read_text(config_path));
    TrainConfig requested = c;
    requested.visits = c.search_visits();
    stored.generations = requested.generations;
    if (!(stored == requested)) {
      throw std::runtime_error("run directory " + dir.string() + " holds a different configuration");
    }
    last = last_complete_generation(dir);
  }
  detail::write_text(config_path, config_text(c));

  const Tablebase tb = solve(c.dims);
  Network net = initial_network(c);
  NesterovSgd opt(c.learning_rate, c.momentum, c.grad_clip);
  std::deque<std::vector<TrainingExample>> buffer;  // oldest first
  std::deque<std::vector<Outcome>> history;         // outcomes, oldest first
  const int keep = c.window_generations;

  if (last >= 0) {
    net = load_network((dir / generation_name("gen-", last, ".weights")).string());
    opt.velocity() = load_velocity((dir / generation_name("gen-", last, ".optim")).string());
    for (int g = std::max(0, last - keep + 1); g <= last; ++g) {
      buffer.push_back(load_examples((dir / generation_name("gen-", g, ".examples")).string()));
      history.push_back(read_outcomes_csv((dir / generation_name("gen-", g, ".outcomes.csv")).string()));
    }
  }
  for (const char* f : {"generations.csv", "timing.csv", "demerits.csv"}) detail::truncate_rows(dir / f, last);

  std::vector<GenerationRecord> records;
  for (int g = last + 1; g < c.generations; ++g) {
    GenerationRecord rec;
    rec.generation = g;
    try {
      OutcomeWindow self_play_window(c.dims);
      for (const auto& gen : history) {
        for (const Outcome& o : gen) self_play_window.add(o);
      }
      const RewardFunction self_play_reward(c.reward, self_play_window, c.alpha);

      auto t0 = Clock::now();
      GenerationGames games = play_generation(net, self_play_reward, c, g, opts.workers);
      auto t1 = Clock::now();
      rec.self_play_seconds = std::chrono::duration<double>(t1 - t0).count();
      rec.outcomes = games.outcomes();
      rec.stats = games.stats;

      std::vector<TrainingExample> fresh;
      for (GameRecord& game : games.games) {
        for (TrainingExample& ex : game.examples) fresh.push_back(std::move(ex));
      }
      rec.examples = fresh.size();
      buffer.push_back(std::move(fresh));
      history.push_back(rec.outcomes);
      while (static_cast<int>(buffer.size()) > keep) buffer.pop_front();
      while (static_cast<int>(history.size()) > keep) history.pop_front();

      std::vector<const TrainingExample*> replay;
      for (const auto& gen : buffer) {
        for (const TrainingExample& ex : gen) replay.push_back(&ex);
      }
      rec.buffer_examples = replay.size();
      t0 = Clock::now();
      rec.loss = train_epochs(net, opt, replay, c, g);
      t1 = Clock::now();
      rec.train_seconds = std::chrono::duration<double>(t1 - t0).count();

      OutcomeWindow window(c.dims);
      for (const auto& gen : history) {
        for (const Outcome& o : gen) window.add(o);
      }
      const RewardFunction reward(c.reward, window, c.alpha);
      t0 = Clock::now();
      const EvalResult eval = evaluate(net, reward, tb, c.eval_params(), opts.workers);
      t1 = Clock::now();
      rec.eval_seconds = std::chrono::duration<double>(t1 - t0).count();
      rec.demerits = eval.demerits;
      rec.eval_labels = game_labels(eval);

      write_outcomes_csv((dir / generation_name("gen-", g, ".outcomes.csv")).string(), games.games);
      save_examples(buffer.back(), (dir / generation_name("gen-", g, ".examples")).string());
      save_network(net, (dir / generation_name("gen-", g, ".weights")).string());
      save_velocity(opt.velocity(), (dir / generation_name("gen-", g, ".optim")).string());
      write_cdf_csv((dir / generation_name("cdf-", g, ".csv")).string(), window, reward);

      int p1 = 0, p2 = 0, draws = 0;
      long plies = 0;
      for (const Outcome& o : rec.outcomes) {
        (o.result == Result::kWinP1 ? p1 : o.result == Result::kWinP2 ? p2 : draws) += 1;
        plies += o.plies;
      }
      using detail::format_double;
      std::ostringstream row;
      row << g << ',' << rec.examples << ',' << rec.buffer_examples << ','
          << format_double(rec.loss.total()) << ',' << format_double(rec.loss.policy) << ','
          << format_double(rec.loss.value) << ',' << format_double(rec.loss.result) << ','
          << format_double(rec.loss.plies) << ',' << p1 << ',' << p2 << ',' << draws << ','
          << format_double(static_cast<double>(plies) / static_cast<double>(rec.outcomes.size()));
      detail::append_line(dir / "generations.csv", kGenerationsHeader, row.str());
      std::ostringstream timing;
      timing << g << ',' << rec.self_play_seconds << ',' << rec.train_seconds << ',' << rec.eval_seconds;
      detail::append_line(dir / "timing.csv", kTimingHeader, timing.str());

      std::ostringstream dem;
      dem << g << ',' << format_double(rec.demerits);
      for (const std::string& l : rec.eval_labels) dem << ',' << l;
      detail::append_line(dir / "demerits.csv", demerits_header(c.dims), dem.str());

      // Files that only serve resuming are pruned once they leave the window.
      const int stale = g - keep;
      if (stale >= 0) fs::remove(dir / generation_name("gen-", stale, ".examples"));
      if (g >= 1) fs::remove(dir / generation_name("gen-", g - 1, ".optim"));
    } catch (const std::exception& e) {
      throw std::runtime_error("generation " + std::to_string(g) + ": " + e.what());
    }
    if (opts.on_generation) opts.on_generation(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace ordinal
