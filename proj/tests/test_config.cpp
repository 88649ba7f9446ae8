#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "safempc/cli.hpp"
#include "safempc/config.hpp"
#include "safempc/errors.hpp"
#include "safempc/table.hpp"

using namespace safempc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("safempc_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small end-to-end pipeline settings.
std::vector<std::string> tiny(const fs::path& dir) {
  return {"output_dir=\"" + dir.string() + "\"",
          "collect.episodes=2",
          "collect.steps=60",
          "train.epochs=2",
          "network.hidden=[8]",
          "network.mc_samples=4",
          "eval.episodes=2",
          "eval.horizon=40",
          "cem.episodes=2",
          "cem.rollouts=4",
          "cem.elites=2",
          "cem.min_successes=0",
          "cem.horizon=60",
          "disturbance.trigger_step=20"};
}

}  // namespace

TEST(Table, DoubleRoundTripIsExact) {
  Rng rng(1);
  for (int i = 0; i < 20000; ++i) {
    const double v = std::ldexp(uniform(rng, -1, 1), static_cast<int>(uniform(rng, -300, 300)));
    EXPECT_EQ(*parse_double(format_double(v)), v);
  }
  for (double v : {0.0, -0.0, 5e-324, std::numeric_limits<double>::max(), 0.1}) {
    EXPECT_EQ(*parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_TRUE(std::isinf(*parse_double("-inf")));
  EXPECT_FALSE(parse_double("1.5x").has_value());
  EXPECT_FALSE(parse_double("").has_value());
}

TEST(Table, EmptyIsHeaderOnly) {
  Table t;
  t.columns = {{"a", ColumnType::kInteger}, {"b", ColumnType::kReal}};
  EXPECT_EQ(to_csv(t), "a,b\n");
  EXPECT_EQ(to_json(t), "[]\n");
}

TEST(Table, CsvRoundTripWithQuoting) {
  Table t;
  t.columns = {{"n", ColumnType::kInteger}, {"x", ColumnType::kReal}, {"s", ColumnType::kText}};
  t.add_row({std::int64_t{1}, 0.1, std::string("plain")});
  t.add_row({std::int64_t{-2}, std::monostate{}, std::string("a,b \"q\"\nline")});
  t.add_row({std::monostate{}, 1e-300, std::string("")});
  const std::string csv = to_csv(t);
  EXPECT_NE(csv.find("\"a,b \"\"q\"\"\nline\""), std::string::npos);
  EXPECT_EQ(csv_from_string(csv, t.columns), t);
}

TEST(Table, RejectsSchemaMismatch) {
  const std::vector<Column> cols = {{"a", ColumnType::kInteger}};
  EXPECT_THROW(csv_from_string("b\n1\n", cols), IoError);
  EXPECT_THROW(csv_from_string("a\n1.5\n", cols), IoError);
  EXPECT_THROW(write_trace({}, "/nonexistent/dir/x.csv"), IoError);
}

TEST(Table, JsonMirror) {
  Table t;
  t.columns = {{"n", ColumnType::kInteger}, {"x", ColumnType::kReal}, {"s", ColumnType::kText}};
  t.add_row({std::int64_t{3}, 0.5, std::string("learner")});
  t.add_row({std::monostate{}, std::numeric_limits<double>::infinity(), std::string("x")});
  const json j = json::parse(to_json(t));
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["n"], 3);
  EXPECT_EQ(j[0]["x"], 0.5);
  EXPECT_EQ(j[0]["s"], "learner");
  EXPECT_TRUE(j[1]["n"].is_null());
}

TEST(Config, DefaultsMatchModules) {
  const RunConfig c = config_from_json(json::object());
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.plant.cart_mass, 1.0);
  EXPECT_EQ(c.mpc.horizon, 50);
  EXPECT_EQ(c.mpc.iterations, 2);
  EXPECT_EQ(c.mpc.cost.w_theta, 10.0);
  EXPECT_EQ(c.network.hidden, (std::vector<int>{64, 64}));
  EXPECT_EQ(c.network.input_dim, 5);
  EXPECT_EQ(c.mc_samples, 30);
  EXPECT_EQ(c.collect.episodes, 20);
  EXPECT_EQ(c.train.epochs, 100);
  EXPECT_EQ(c.train.batch_size, 64);
  EXPECT_EQ(c.cem.episodes, 30);
  EXPECT_EQ(c.cem.rollouts, 20);
  EXPECT_EQ(c.cem.max_retries, 10);
  EXPECT_EQ(c.disturbance.cart_mass, 0.1);
  EXPECT_FALSE(c.cem_initial_mu.has_value());
}

TEST(Config, JsonRoundTrip) {
  RunConfig c = config_from_json(json::parse(R"({"seed": 7, "train": {"epochs": 3},
      "observation": {"encoding": "raw"}, "demo": {"threshold": "inf"}})"));
  EXPECT_EQ(c.network.input_dim, 4);
  const RunConfig d = config_from_json(json(to_json(c)));
  EXPECT_EQ(to_json(d).dump(), to_json(c).dump());
  EXPECT_TRUE(std::isinf(*d.demo_threshold));
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(config_from_json(json::parse(R"({"sed": 1})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"train": {"epoch": 1}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"train": {"epochs": "many"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"train": 5})")), ConfigError);
}

TEST(Config, ValidatesModulePreconditions) {
  const char* bad[] = {
      R"({"plant": {"cart_mass": 0}})",        R"({"plant": {"dt": -1}})",
      R"({"cost": {"w_u": 0}})",               R"({"mpc": {"horizon": 1}})",
      R"({"mpc": {"alpha": 1.5}})",            R"({"network": {"hidden": []}})",
      R"({"network": {"mc_samples": 1}})",     R"({"collect": {"episodes": 0}})",
      R"({"collect": {"explore_noise": -1}})", R"({"train": {"batch_size": 0}})",
      R"({"train": {"temperature": 0}})",      R"({"cem": {"elites": 30}})",
      R"({"cem": {"min_successes": 6}})",      R"({"cem": {"initial_mu": -1}})",
      R"({"disturbance": {"kind": "wind"}})",  R"({"disturbance": {"cart_mass": 0}})",
      R"({"disturbance": {"offset": [1, 2]}})", R"({"threads": 0})",
      R"({"format": "xml"})",                  R"({"observation": {"encoding": "pixels"}})",
      R"({"demo": {"threshold": -1}})",        R"({"disturbance": {"trigger_step": 500}})"};
  for (const char* text : bad) {
    EXPECT_THROW(config_from_json(json::parse(text)), ConfigError) << text;
  }
}

TEST(Config, Overrides) {
  const json patch = apply_overrides(json::object(), {"seed=9", "train.epochs=4",
                                                      "disturbance.kind=none",
                                                      "demo.threshold=inf"});
  const RunConfig c = config_from_json(patch);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.train.epochs, 4);
  EXPECT_EQ(c.disturbance.kind, gate::DisturbanceConfig::Kind::kNone);
  EXPECT_TRUE(std::isinf(*c.demo_threshold));
  EXPECT_THROW(apply_overrides(json::object(), {"novalue"}), ConfigError);
  EXPECT_THROW(apply_overrides(json::object(), {"seed=1", "seed.x=2"}), ConfigError);
}

TEST(Config, LoadFileAndEnvironmentOverride) {
  const fs::path dir = scratch("config");
  fs::create_directories(dir);
  const fs::path file = dir / "run.json";
  std::ofstream(file) << R"({"seed": 3, "output_dir": "a"})";
  EXPECT_EQ(load_run_config(file).output_dir, "a");
  EXPECT_EQ(load_run_config(file, {"seed=4"}).seed, 4u);
  setenv("SAFEMPC_OUTPUT_DIR", "from_env", 1);
  EXPECT_EQ(load_run_config(file).output_dir, "from_env");
  unsetenv("SAFEMPC_OUTPUT_DIR");
  EXPECT_THROW(load_run_config(dir / "missing.json"), IoError);
  std::ofstream(file) << "{not json";
  EXPECT_THROW(load_run_config(file), ConfigError);
  fs::remove_all(dir);
}

TEST(Cli, DiagnosticsAndExitCodes) {
  const fs::path dir = scratch("cli_errors");
  std::ostringstream out, err;
  EXPECT_EQ(cli::run_command("eval", "", {"output_dir=\"" + dir.string() + "\""}, out, err), 1);
  const std::string message = err.str();
  EXPECT_EQ(message.rfind("error: missing", 0), 0u);
  EXPECT_EQ(std::count(message.begin(), message.end(), '\n'), 1);
  err.str("");
  EXPECT_EQ(cli::run_command("train", "", {"train.epochs=-1"}, out, err), 2);
  EXPECT_EQ(err.str().rfind("error: ", 0), 0u);
  err.str("");
  EXPECT_NE(cli::run_command("fly", "", {}, out, err), 0);
  fs::remove_all(dir);
}

TEST(Cli, PipelineArtifacts) {
  const fs::path dir = scratch("cli_pipeline");
  std::ostringstream out, err;
  for (const char* cmd : {"collect", "train", "eval", "cem", "demo"}) {
    ASSERT_EQ(cli::run_command(cmd, "", tiny(dir), out, err), 0) << cmd << ": " << err.str();
  }
  for (const char* f : {"dataset.csv", "model.ckpt", "training_curve.csv", "eval_episodes.csv",
                        "cem_trace.csv", "cem_summary.csv", "demo_steps.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_NE(out.str().find("success rate"), std::string::npos);
  EXPECT_NE(out.str().find("final mu"), std::string::npos);

  // One trace row per rollout, retries included.
  const auto summary = read_trace_csv(dir / "cem_summary.csv",
                                      gate::cem_summary_table({}).columns);
  const auto trace = read_trace_csv(dir / "cem_trace.csv", gate::cem_trace_table({}).columns);
  EXPECT_EQ(summary.rows.size(), 2u);
  EXPECT_EQ(trace.rows.size(), 2u * 4u);

  // JSON mirror.
  auto args = tiny(dir);
  args.push_back("format=\"json\"");
  ASSERT_EQ(cli::run_command("demo", "", args, out, err), 0);
  EXPECT_EQ(json::parse(slurp(dir / "demo_steps.json")).size(), 60u);
  fs::remove_all(dir);
}

TEST(Cli, DemoWithGateDisabledStaysOnLearner) {
  const fs::path dir = scratch("cli_demo");
  std::ostringstream out, err;
  auto args = tiny(dir);
  ASSERT_EQ(cli::run_command("collect", "", args, out, err), 0);
  ASSERT_EQ(cli::run_command("train", "", args, out, err), 0);
  args.push_back("demo.threshold=inf");
  ASSERT_EQ(cli::run_command("demo", "", args, out, err), 0) << err.str();
  const auto log = read_trace_csv(dir / "demo_steps.csv", gate::step_log_table({}).columns);
  ASSERT_EQ(log.rows.size(), 60u);
  for (const auto& row : log.rows) EXPECT_EQ(std::get<std::string>(row[5]), "learner");
  fs::remove_all(dir);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const fs::path a = scratch("cli_det_a"), b = scratch("cli_det_b");
  std::ostringstream out, err;
  auto args_a = tiny(a), args_b = tiny(b);
  args_b.push_back("threads=3");
  for (const char* cmd : {"collect", "train", "cem", "demo"}) {
    ASSERT_EQ(cli::run_command(cmd, "", args_a, out, err), 0) << err.str();
    ASSERT_EQ(cli::run_command(cmd, "", args_b, out, err), 0) << err.str();
  }
  for (const char* f : {"dataset.csv", "model.ckpt", "training_curve.csv", "cem_trace.csv",
                        "cem_summary.csv", "demo_steps.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}
