#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ordinal/trainer.hpp"

namespace ordinal {
namespace {

namespace fs = std::filesystem;

// Small enough that a generation takes well under a second.
TrainConfig tiny(RewardKind reward = RewardKind::kHandTuned, HeadKind head = HeadKind::kValue) {
  TrainConfig c;
  c.dims = {3, 4};
  c.reward = reward;
  c.head = head;
  c.games_per_generation = 6;
  c.visits = 8;
  c.epochs = 1;
  c.batch_size = 16;
  c.trunk_layers = 1;
  c.trunk_channels = 4;
  c.policy_channels = 4;
  c.hidden = 8;
  c.seed = 11;
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("ordinal-test-" + name)) {
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> files_except_timing(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name != "timing.csv") out[name] = slurp(e.path());
  }
  return out;
}

// Rows of a cdf-NNN.csv as (label, count, p1 reward).
std::vector<std::tuple<std::string, int, double>> read_cdf(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "outcome,lattice_index,count,p1_reward");
  std::vector<std::tuple<std::string, int, double>> rows;
  while (std::getline(in, line)) {
    std::istringstream f(line);
    std::string label, index, count, reward;
    std::getline(f, label, ',');
    std::getline(f, index, ',');
    std::getline(f, count, ',');
    std::getline(f, reward, ',');
    rows.emplace_back(label, std::stoi(count), std::stod(reward));
  }
  return rows;
}

TEST(Config, RoundTripsThroughText) {
  TrainConfig c = tiny(RewardKind::kCdfBonus, HeadKind::kOutcome);
  c.alpha = 0.3;
  c.learning_rate = 0.0123456789;
  c.seed = 0xfeedfacecafeULL;
  EXPECT_EQ(parse_config(config_text(c)), c);
}

TEST(Config, RejectsUnknownKeysAndBadNumbers) {
  const std::string text = config_text(tiny());
  EXPECT_THROW(parse_config(text + "colour = blue\n"), std::runtime_error);
  std::string bad = text;
  bad.replace(bad.find("epochs = 1"), 10, "epochs = x");
  EXPECT_THROW(parse_config(bad), std::runtime_error);
}

TEST(Config, CdfRewardsNeedAnOutcomeHead) {
  for (RewardKind k : {RewardKind::kCdf, RewardKind::kCdfBonus}) {
    try {
      tiny(k, HeadKind::kValue).validate();
      ADD_FAILURE() << "accepted " << to_string(k) << " with a value head";
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find("outcome head"), std::string::npos);
    }
    EXPECT_NO_THROW(tiny(k, HeadKind::kOutcome).validate());
  }
  EXPECT_NO_THROW(tiny(RewardKind::kPrimitive, HeadKind::kOutcome).validate());
}

TEST(Config, DefaultVisitsAreTwentyPerRank) {
  TrainConfig c;
  c.dims = {3, 9};
  c.visits = 0;
  EXPECT_EQ(c.search_visits(), 180);
  EXPECT_EQ(c.eval_params().temperature, 0.0);
  EXPECT_EQ(c.eval_params().noise_fraction, 0.0);
}

TEST(SelfPlay, ExamplesCarryBackfilledTargets) {
  const TrainConfig c = tiny();
  const Network net = initial_network(c);
  const auto reward = RewardFunction::without_window(RewardKind::kHandTuned, c.dims);
  for (int start = 0; start < 9; ++start) {
    auto rng = stream_rng(1, Stream::kSelfPlay, static_cast<std::uint64_t>(start));
    const GameRecord g = play_game(net, reward, c.self_play_params(), start, rng);
    ASSERT_EQ(g.examples.size(), g.moves.size());
    EXPECT_EQ(static_cast<int>(g.moves.size()), g.outcome.plies);
    EXPECT_LE(g.outcome.plies, c.dims.timeout());
    GameState s = starting_positions(c.dims)[static_cast<std::size_t>(start)];
    for (std::size_t i = 0; i < g.examples.size(); ++i) {
      const TrainingExample& ex = g.examples[i];
      EXPECT_EQ(ex.planes, encode(s));
      EXPECT_EQ(ex.plies_left, g.outcome.plies - static_cast<int>(i));
      EXPECT_EQ(ex.value_target, handtuned_reward(g.outcome, s.to_move, c.dims));
      const int sign = result_sign(g.outcome, s.to_move);
      EXPECT_EQ(ex.result, sign > 0 ? Wdl::kWin : sign < 0 ? Wdl::kLoss : Wdl::kDraw);
      double mass = 0.0;
      for (double p : ex.policy_target) mass += p;
      EXPECT_NEAR(mass, 1.0, 1e-12);
      s = apply_move(s, g.moves[i]).first;
    }
  }
}

TEST(SelfPlay, GenerationIsDeterministicAcrossWorkerCounts) {
  const TrainConfig c = tiny(RewardKind::kCdf, HeadKind::kOutcome);
  const Network net = initial_network(c);
  const auto reward = RewardFunction::without_window(RewardKind::kCdf, c.dims);
  const GenerationGames a = play_generation(net, reward, c, 3, 1);
  const GenerationGames b = play_generation(net, reward, c, 3, 4);
  const GenerationGames other = play_generation(net, reward, c, 4, 1);
  ASSERT_EQ(a.games.size(), 6u);
  bool differs = false;
  for (std::size_t i = 0; i < a.games.size(); ++i) {
    EXPECT_EQ(a.games[i].start_index, b.games[i].start_index);
    EXPECT_EQ(a.games[i].moves, b.games[i].moves);
    EXPECT_EQ(a.games[i].outcome, b.games[i].outcome);
    differs = differs || a.games[i].moves != other.games[i].moves;
  }
  EXPECT_TRUE(differs);
}

TEST(SelfPlay, EmptyCdfWindowMakesEveryValueZero) {
  const TrainConfig c = tiny(RewardKind::kCdf, HeadKind::kOutcome);
  const Network net = initial_network(c);
  const auto reward = RewardFunction::without_window(RewardKind::kCdf, c.dims);
  const GenerationGames games = play_generation(net, reward, c, 0);
  EXPECT_GT(games.stats.terminal_leaves, 0);
  EXPECT_EQ(games.stats.max_abs_terminal_value, 0.0);
  EXPECT_EQ(games.stats.max_abs_leaf_value, 0.0);
  EXPECT_EQ(games.stats.max_abs_root_q, 0.0);
}

TEST(Run, WritesTheDocumentedFiles) {
  TempDir dir("files");
  TrainConfig c = tiny();
  c.generations = 2;
  const auto records = run_training(c, dir.path());
  ASSERT_EQ(records.size(), 2u);
  for (const char* f : {"config", "generations.csv", "timing.csv", "demerits.csv", "gen-000.outcomes.csv",
                        "gen-001.outcomes.csv", "gen-000.weights", "gen-001.weights", "gen-000.examples",
                        "gen-001.examples", "gen-001.optim", "cdf-000.csv", "cdf-001.csv"}) {
    EXPECT_TRUE(fs::exists(dir.path() / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir.path() / "gen-000.optim"));
  const std::string demerits = slurp(dir.path() / "demerits.csv");
  EXPECT_EQ(demerits.substr(0, demerits.find('\n')), demerits_header(c.dims));
  EXPECT_EQ(std::count(demerits.begin(), demerits.end(), '\n'), 3);
  EXPECT_EQ(last_complete_generation(dir.path()), 1);
  EXPECT_EQ(read_outcomes_csv((dir.path() / "gen-001.outcomes.csv").string()), records[1].outcomes);
}

TEST(Run, WindowsSpanTheLastFiveGenerations) {
  TempDir dir("window");
  TrainConfig c = tiny(RewardKind::kCdf, HeadKind::kOutcome);
  c.generations = 7;
  std::vector<std::size_t> played;
  std::vector<std::size_t> trained;
  RunOptions opts;
  opts.on_generation = [&](const GenerationRecord& r) {
    played.push_back(r.examples);
    trained.push_back(r.buffer_examples);
  };
  run_training(c, dir.path(), opts);
  for (int g = 0; g < c.generations; ++g) {
    int count = 0;
    double p1_mean = 0.0;
    for (const auto& [label, n, reward] : read_cdf(dir.path() / detail::generation_name("cdf-", g, ".csv"))) {
      count += n;
      p1_mean += n * reward;
    }
    EXPECT_EQ(count, c.games_per_generation * std::min(g + 1, 5)) << "generation " << g;
    EXPECT_NEAR(p1_mean / count, 0.0, 1e-12) << "generation " << g;
    std::size_t expected = 0;
    for (int k = std::max(0, g - 4); k <= g; ++k) expected += played[static_cast<std::size_t>(k)];
    EXPECT_EQ(trained[static_cast<std::size_t>(g)], expected) << "generation " << g;
  }
  EXPECT_FALSE(fs::exists(dir.path() / "gen-001.examples"));
  EXPECT_TRUE(fs::exists(dir.path() / "gen-002.examples"));
}

TEST(Run, SelfPlayValuesAgainstThePreviousFiveGenerations) {
  TempDir dir("selfplay");
  TrainConfig c = tiny(RewardKind::kCdf, HeadKind::kOutcome);
  c.generations = 7;
  run_training(c, dir.path());
  for (int g : {1, 6}) {
    OutcomeWindow window(c.dims);
    for (int k = std::max(0, g - 5); k < g; ++k) {
      for (const Outcome& o : read_outcomes_csv((dir.path() / detail::generation_name("gen-", k, ".outcomes.csv")).string())) {
        window.add(o);
      }
    }
    const Network net = load_network((dir.path() / detail::generation_name("gen-", g - 1, ".weights")).string());
    const RewardFunction reward(c.reward, window, c.alpha);
    EXPECT_EQ(play_generation(net, reward, c, g).outcomes(),
              read_outcomes_csv((dir.path() / detail::generation_name("gen-", g, ".outcomes.csv")).string()))
        << "generation " << g;
  }
}

TEST(Run, SameSeedGivesIdenticalFiles) {
  TempDir a("seed-a");
  TempDir b("seed-b");
  TrainConfig c = tiny(RewardKind::kCdfBonus, HeadKind::kOutcome);
  c.generations = 3;
  run_training(c, a.path());
  RunOptions opts;
  opts.workers = 3;
  run_training(c, b.path(), opts);
  EXPECT_EQ(files_except_timing(a.path()), files_except_timing(b.path()));
}

TEST(Run, ResumeMatchesAnUninterruptedRun) {
  TempDir whole("whole");
  TempDir split("split");
  TrainConfig c = tiny(RewardKind::kCdf, HeadKind::kOutcome);
  c.generations = 7;
  run_training(c, whole.path());
  TrainConfig first = c;
  first.generations = 3;
  run_training(first, split.path());
  // Leftovers from a generation that never finished are overwritten.
  std::ofstream(split.path() / "gen-003.weights") << "partial";
  const auto resumed = run_training(c, split.path());
  ASSERT_EQ(resumed.size(), 4u);
  EXPECT_EQ(resumed.front().generation, 3);
  EXPECT_EQ(files_except_timing(whole.path()), files_except_timing(split.path()));
  EXPECT_TRUE(run_training(c, split.path()).empty());
}

TEST(Run, RefusesADifferentConfiguration) {
  TempDir dir("mismatch");
  TrainConfig c = tiny();
  run_training(c, dir.path());
  c.seed += 1;
  EXPECT_THROW(run_training(c, dir.path()), std::runtime_error);
}

TEST(Run, IoErrorsNameTheGeneration) {
  TempDir dir("io");
  TrainConfig c = tiny();
  run_training(c, dir.path());
  fs::create_directories(dir.path() / "gen-001.outcomes.csv");
  c.generations = 2;
  try {
    run_training(c, dir.path());
    FAIL() << "expected an I/O error";
  } catch (const std::runtime_error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("generation 1: ", 0), 0u) << e.what();
  }
  EXPECT_EQ(last_complete_generation(dir.path()), 0);
}

TEST(Files, ExamplesAndVelocityRoundTrip) {
  TempDir dir("blobs");
  fs::create_directories(dir.path());
  const TrainConfig c = tiny();
  auto rng = stream_rng(2, Stream::kSelfPlay);
  const GameRecord g = play_game(initial_network(c), RewardFunction::without_window(RewardKind::kHandTuned, c.dims),
                                 c.self_play_params(), 4, rng);
  const std::string ex = (dir.path() / "x.examples").string();
  save_examples(g.examples, ex);
  const auto back = load_examples(ex);
  ASSERT_EQ(back.size(), g.examples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].planes, g.examples[i].planes);
    EXPECT_EQ(back[i].policy_target, g.examples[i].policy_target);
    EXPECT_EQ(back[i].result, g.examples[i].result);
    EXPECT_EQ(back[i].plies_left, g.examples[i].plies_left);
    EXPECT_EQ(back[i].value_target, g.examples[i].value_target);
  }
  const std::vector<double> v{1.5, -0.0, 3e-300};
  const std::string vp = (dir.path() / "v.optim").string();
  save_velocity(v, vp);
  EXPECT_EQ(load_velocity(vp), v);
  EXPECT_THROW(load_examples(vp), std::runtime_error);
  EXPECT_THROW(load_velocity(ex), std::runtime_error);
}

}  // namespace
}  // namespace ordinal
