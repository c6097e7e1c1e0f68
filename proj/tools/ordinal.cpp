// Command-line front end: solve boards, train agents, evaluate checkpoints
// and export plotting data.
//
// Exit codes: 0 success, 2 usage error (bad flags, bad combinations,
// missing inputs), 3 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ordinal/eval.hpp"
#include "ordinal/game.hpp"
#include "ordinal/rewards.hpp"
#include "ordinal/solver.hpp"
#include "ordinal/trainer.hpp"

namespace fs = std::filesystem;
using namespace ordinal;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 3;

// Raised for problems the user can fix by changing the invocation.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

BoardDims checked_dims(int width, int height) {
  BoardDims d{width, height};
  if (!d.valid()) throw UsageError("board must be at least 1 wide and 2 tall");
  return d;
}

std::string describe(const Tablebase& tb, const GameState& s) {
  const SolvedEntry& e = tb.at(s);
  if (e.value == Value::kDrawn) return "draw";
  const bool mover_wins = e.value == Value::kWinForMover;
  const Player winner = mover_wins ? s.to_move : opponent(s.to_move);
  return std::string(winner == Player::kOne ? "P1" : "P2") + " wins in " + std::to_string(e.distance);
}

int run_solve(int width, int height, const std::string& out) {
  const Tablebase tb = solve(checked_dims(width, height));
  const TablebaseSummary sum = summarize(tb);
  std::cout << "board " << width << "x" << height << ": " << sum.wins << " wins, " << sum.losses
            << " losses, " << sum.draws << " draws for the side to move; longest win "
            << sum.max_distance << " plies\n";
  const std::vector<GameState> starts = starting_positions(tb.dims());
  int p1 = 0, p2 = 0, drawn = 0;
  for (const GameState& s : starts) {
    const std::string v = describe(tb, s);
    std::cout << "  " << to_notation(s) << "  " << v << '\n';
    if (v.rfind("P1", 0) == 0) ++p1;
    else if (v.rfind("P2", 0) == 0) ++p2;
    else ++drawn;
  }
  std::cout << "starting positions: " << starts.size() << " (" << p1 << " first-player wins, "
            << p2 << " second-player wins, " << drawn << " draws)\n";
  if (!out.empty()) {
    save_tablebase(tb, out);
    std::cout << "wrote " << out << '\n';
  }
  return 0;
}

int run_train(TrainConfig c, const std::string& out, int workers) {
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  RunOptions opts;
  opts.workers = workers;
  opts.on_generation = [](const GenerationRecord& r) {
    int p1 = 0, p2 = 0, d = 0;
    for (const Outcome& o : r.outcomes) {
      (o.result == Result::kWinP1 ? p1 : o.result == Result::kWinP2 ? p2 : d) += 1;
    }
    std::printf("gen %3d  demerits %7.3f  loss %9.4f  P1/P2/D %d/%d/%d  examples %zu  %.1fs\n",
                r.generation, r.demerits, r.loss.total(), p1, p2, d, r.examples,
                r.self_play_seconds + r.train_seconds + r.eval_seconds);
    std::fflush(stdout);
  };
  run_training(c, out, opts);
  return 0;
}

std::string gen_file(const fs::path& run, const std::string& prefix, int g, const std::string& suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d", g);
  return (run / (prefix + buf + suffix)).string();
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw UsageError("missing file: " + p.string());
}

int run_eval(const std::string& run, std::optional<int> generation, const std::string& weights,
             const std::string& reward_name, double alpha, int workers, bool verbose) {
  if (run.empty() == weights.empty()) throw UsageError("give exactly one of --run or --weights");
  std::optional<Network> net;
  std::optional<RewardFunction> reward;
  SearchParams params;
  if (!run.empty()) {
    require_file(fs::path(run) / "config");
    const TrainConfig c = parse_config(detail::read_text(fs::path(run) / "config"));
    const int g = generation ? *generation : last_complete_generation(run);
    if (g < 0) throw UsageError("run directory has no completed generation: " + run);
    require_file(gen_file(run, "gen-", g, ".weights"));
    net.emplace(load_network(gen_file(run, "gen-", g, ".weights")));
    OutcomeWindow window(c.dims);
    for (int k = std::max(0, g - c.window_generations + 1); k <= g; ++k) {
      require_file(gen_file(run, "gen-", k, ".outcomes.csv"));
      for (const Outcome& o : read_outcomes_csv(gen_file(run, "gen-", k, ".outcomes.csv"))) window.add(o);
    }
    reward.emplace(c.reward, window, c.alpha);
    params = c.eval_params();
    std::cout << "run " << run << " generation " << g << '\n';
  } else {
    require_file(weights);
    net.emplace(load_network(weights));
    RewardKind kind;
    try {
      kind = parse_reward_kind(reward_name);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    reward.emplace(RewardFunction::without_window(kind, net->config().dims, alpha));
    params = SearchParams::evaluation(net->config().dims);
  }
  const Tablebase tb = solve(net->config().dims);
  EvalResult r;
  if (verbose) {
    r = evaluate_agent(tb, [&] {
      return [&, evaluator = NetworkEvaluator<RewardFunction>(*net, *reward),
              rng = std::mt19937_64(0)](const GameState& s) mutable {
        const SearchResult sr = search(s, evaluator, *reward, params, rng);
        std::cout << format_trace(s, sr);
        std::array<double, kNumMoves> counts{};
        for (int i = 0; i < kNumMoves; ++i) counts[i] = sr.visits[i];
        return select_move(counts, params.temperature, rng);
      };
    });
  } else {
    r = evaluate(*net, *reward, tb, params, workers);
  }
  const std::vector<GameState> starts = starting_positions(tb.dims());
  for (const EvalGame& g : r.games) {
    std::cout << "  " << to_notation(starts[static_cast<std::size_t>(g.start_index)]) << "  agent "
              << (g.agent == Player::kOne ? "P1" : "P2") << "  " << label(g.outcome) << "  reward "
              << g.agent_reward << '\n';
  }
  std::cout << "demerits " << r.demerits << "  oracle floor " << oracle_floor(tb) << '\n';
  return 0;
}

int run_export(const std::string& run, const std::vector<int>& generations, const std::string& out) {
  const fs::path dir(run);
  const fs::path demerits = dir / "demerits.csv";
  if (!fs::is_directory(dir) || !fs::exists(demerits)) {
    throw UsageError("no completed generations in run directory: " + run);
  }
  const int last = last_complete_generation(dir);
  std::vector<int> wanted = generations;
  if (wanted.empty()) {
    for (int g = 0; g <= last; ++g) wanted.push_back(g);
  }
  for (int g : wanted) {
    if (g < 0 || g > last) {
      throw UsageError("generation " + std::to_string(g) + " not in run (last is " +
                       std::to_string(last) + "): " + gen_file(dir, "cdf-", g, ".csv"));
    }
    require_file(gen_file(dir, "cdf-", g, ".csv"));
  }
  fs::create_directories(out);
  for (int g : wanted) {
    const std::string src = gen_file(dir, "cdf-", g, ".csv");
    fs::copy_file(src, fs::path(out) / fs::path(src).filename(), fs::copy_options::overwrite_existing);
  }
  fs::copy_file(demerits, fs::path(out) / "demerits.csv", fs::copy_options::overwrite_existing);
  std::cout << "exported " << wanted.size() << " CDF snapshots and demerits.csv to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ordinal-reward AlphaZero for the opposition game"};
  app.require_subcommand(1);

  int width = 3, height = 9;
  std::string solve_out;
  auto* solve_cmd = app.add_subcommand("solve", "Solve a board by retrograde analysis");
  solve_cmd->add_option("--width", width, "Board width")->required();
  solve_cmd->add_option("--height", height, "Board height")->required();
  solve_cmd->add_option("--out", solve_out, "Write the tablebase to this file");

  TrainConfig tc;
  std::string reward_name = "handtuned", head_name = "value", train_out;
  int workers = default_workers();
  auto* train_cmd = app.add_subcommand("train", "Run or resume self-play training");
  train_cmd->add_option("--width", tc.dims.width, "Board width")->required();
  train_cmd->add_option("--height", tc.dims.height, "Board height")->required();
  train_cmd->add_option("--reward", reward_name, "primitive | handtuned | cdf | cdf-bonus")->required();
  train_cmd->add_option("--alpha", tc.alpha, "Tiebreak credit for cdf-bonus");
  train_cmd->add_option("--head", head_name, "value | outcome")->required();
  train_cmd->add_option("--generations", tc.generations, "Total generations")->required();
  train_cmd->add_option("--seed", tc.seed, "Run seed")->required();
  train_cmd->add_option("--out", train_out, "Run directory")->required();
  train_cmd->add_option("--games", tc.games_per_generation, "Self-play games per generation");
  train_cmd->add_option("--window", tc.window_generations, "Generations in the window and replay buffer");
  train_cmd->add_option("--epochs", tc.epochs, "Training epochs per generation");
  train_cmd->add_option("--batch-size", tc.batch_size, "Minibatch size");
  train_cmd->add_option("--lr", tc.learning_rate, "Learning rate");
  train_cmd->add_option("--momentum", tc.momentum, "Nesterov momentum");
  train_cmd->add_option("--grad-clip", tc.grad_clip, "Max gradient norm per step, 0 to disable");
  train_cmd->add_option("--visits", tc.visits, "Search visits per move (default 20 * height)");
  train_cmd->add_option("--c-puct", tc.c_puct, "Exploration constant");
  train_cmd->add_option("--dirichlet-alpha", tc.dirichlet_alpha, "Root noise concentration");
  train_cmd->add_option("--noise-fraction", tc.noise_fraction, "Root noise mixing fraction");
  train_cmd->add_option("--temperature", tc.temperature, "Self-play move temperature");
  train_cmd->add_option("--workers", workers, "Parallel self-play and evaluation games");

  std::string eval_run, eval_weights, eval_reward = "handtuned";
  std::optional<int> eval_generation;
  double eval_alpha = 0.5;
  bool verbose = false;
  auto* eval_cmd = app.add_subcommand("eval", "Play a checkpoint against the perfect player");
  eval_cmd->add_option("--run", eval_run, "Run directory");
  eval_cmd->add_option("--generation", eval_generation, "Generation to evaluate (default: last)");
  eval_cmd->add_option("--weights", eval_weights, "Weight file, instead of --run");
  eval_cmd->add_option("--reward", eval_reward, "Reward for valuing outcome heads with --weights");
  eval_cmd->add_option("--alpha", eval_alpha, "Tiebreak credit for cdf-bonus with --weights");
  eval_cmd->add_option("--workers", workers, "Parallel evaluation games");
  eval_cmd->add_flag("-v,--verbose", verbose, "Print the search trace for every agent move");

  std::string export_run, export_out;
  std::vector<int> export_generations;
  auto* export_cmd = app.add_subcommand("export", "Collect CDF snapshots and the demerit curve");
  export_cmd->add_option("--run", export_run, "Run directory")->required();
  export_cmd->add_option("--generations", export_generations, "Generations to export (default: all)")
      ->delimiter(',');
  export_cmd->add_option("--out", export_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*solve_cmd) return run_solve(width, height, solve_out);
    if (*train_cmd) {
      try {
        tc.reward = parse_reward_kind(reward_name);
        tc.head = parse_head_kind(head_name);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      return run_train(tc, train_out, workers);
    }
    if (*eval_cmd) {
      return run_eval(eval_run, eval_generation, eval_weights, eval_reward, eval_alpha, workers, verbose);
    }
    if (*export_cmd) return run_export(export_run, export_generations, export_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
