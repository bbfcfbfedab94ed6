// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gen.hpp"
#include "jigsaw/commands.hpp"
#include "jigsaw/config.hpp"

using namespace jigsaw;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

std::size_t lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) n += !l.empty() && l[0] != '#';
  return n;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

// A dataset small enough to train on in well under a second per run.
fs::path tiny_dataset(const std::string& name, const std::string& task = "classification") {
  const auto dir = fs::temp_directory_path() / ("jigsaw-cli-" + name);
  fs::remove_all(dir);
  std::ostringstream log;
  const auto cfg = parse_config_text("", "test",
                                     {{"out", dir.string()}, {"grid", "3"}, {"dim", "4"}, {"blob_min", "1"},
                                      {"blob_max", "2"}, {"train_bags", "10"}, {"test_bags", "8"}, {"task", task}});
  EXPECT_EQ(command_synth(cfg, log), 0) << log.str();
  return dir;
}

FlagList tiny_train(const fs::path& data, const fs::path& out) {
  return {{"data", (data / "manifest.txt").string()}, {"out", out.string()}, {"embed_dim", "8"},
          {"attention_dim", "8"}, {"blocks", "1"}, {"epochs", "2"}, {"quiet", "true"}};
}

}  // namespace

TEST(Config, EmptyGivesDefaults) {
  const auto c = parse_config_text("", "empty", {});
  EXPECT_EQ(c.model.lambda, 1.0);
  EXPECT_EQ(c.model.optimizer.lr, 5e-4);
  EXPECT_EQ(c.model.optimizer.weight_decay, 1e-4);
  EXPECT_EQ(c.train.epochs, 200u);
  EXPECT_EQ(c.model.variant, Variant::transformer);
  EXPECT_EQ(c.model.pe, PosEncoding::ppeg);
  EXPECT_EQ(c.model.bins, 4u);
  EXPECT_EQ(c.run.seeds, 1u);
  const auto s = parse_config_text("task=survival\n", "f", {});
  EXPECT_EQ(s.train.epochs, 20u);
  EXPECT_EQ(s.model.head, HeadKind::survival);
}

TEST(Config, FlagsOverrideFile) {
  const auto c = parse_config_text("# comment\nlambda = 2.0\nlr=1e-3\n", "run.cfg", {{"lambda", "0.5"}});
  EXPECT_EQ(c.model.lambda, 0.5);
  EXPECT_EQ(c.model.optimizer.lr, 1e-3);
  EXPECT_EQ(c.explicit_keys.at("lambda"), "0.5");
}

TEST(Config, ErrorsNameTheProblem) {
  auto msg = error_of([] { parse_config_text("", "f", {{"lambda", "-1"}}); });
  EXPECT_NE(msg.find("lambda"), std::string::npos) << msg;
  EXPECT_NE(msg.find(">= 0"), std::string::npos) << msg;
  msg = error_of([] { parse_config_text("epochs=3\nlamda=1\n", "run.cfg", {}); });
  EXPECT_NE(msg.find("run.cfg:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("lamda"), std::string::npos) << msg;
  msg = error_of([] { parse_config_text("lr=fast\n", "run.cfg", {}); });
  EXPECT_NE(msg.find("run.cfg:1"), std::string::npos) << msg;
  msg = error_of([] { parse_config_text("", "f", {{"arch", "abmil"}, {"pe", "ppeg"}}); });
  EXPECT_FALSE(msg.empty());
  msg = error_of([] { parse_config_text("no equals sign\n", "run.cfg", {}); });
  EXPECT_NE(msg.find("run.cfg:1"), std::string::npos) << msg;
}

TEST(Config, DumpReadsBack) {
  const auto c = parse_config_text("", "f", {{"lambda", "0.1"}, {"arch", "cnn"}, {"lambda_sweep", "0,0.1,1"}});
  const auto again = parse_config_text(dump_config(c), "dump", {});
  EXPECT_EQ(dump_config(again), dump_config(c));
  EXPECT_EQ(again.model.lambda, 0.1);
  EXPECT_EQ(again.run.lambda_sweep.size(), 3u);
}

TEST(Cli, VerifyPassesAndCoversEveryGroup) {
  VerifyOptions o;
  o.grad_trials = 5;
  o.sweep = 20;
  std::ostringstream log;
  EXPECT_EQ(command_verify(o, log), 0) << log.str();
  std::set<std::string> groups;
  for (const auto& r : run_verify(o)) groups.insert(r.group);
  EXPECT_GE(groups.size(), 8u);
}

TEST(Cli, VerifyFailsOnAFaultyAdjoint) {
  VerifyOptions o;
  o.grad_trials = 5;
  o.sweep = 20;
  GradCase bad{"bad_exp",
               [](const std::vector<ad::Tensor>& in) {
                 const auto& x = in[0];
                 std::vector<double> v(x.size());
                 for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(x.at(i));
                 return ad::detail::make_result("bad_exp", x.shape(), std::move(v), {x}, [](ad::Node& self) {
                   auto& g = self.parents[0]->ensure_grad();
                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * self.grad[i] * self.value[i];
                 });
               },
               [](Pcg32& rng) { return std::vector<ad::Tensor>{gen::parameter({4}, rng)}; }};
  o.extra_grad_cases.push_back(bad);
  std::ostringstream log;
  EXPECT_NE(command_verify(o, log), 0);
  EXPECT_NE(log.str().find("grad_check"), std::string::npos);
  EXPECT_NE(log.str().find("bad_exp"), std::string::npos) << log.str();
}

TEST(Cli, SynthTrainEvalAcrossSeeds) {
  const auto data = tiny_dataset("seeds");
  EXPECT_EQ(lines_of(data / "manifest.txt"), 18u);
  const auto out = data / "runs";
  auto flags = tiny_train(data, out);
  flags.push_back({"seeds", "5"});
  std::ostringstream log;
  ASSERT_EQ(command_train(parse_config_text("", "t", flags), log), 0) << log.str();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto dir = run_dir(out, 1.0, s);
    EXPECT_TRUE(fs::exists(dir / "checkpoint.jmwt"));
    EXPECT_EQ(lines_of(dir / "report.jsonl"), 2u);
    const auto m = read_json(dir / "metrics.json");
    EXPECT_TRUE(m.contains("accuracy"));
    EXPECT_TRUE(m.contains("f1"));
  }
  EXPECT_TRUE(fs::exists(out / "summary.txt"));
  EXPECT_EQ(lines_of(out / "summary.csv"), 2u);  // header and one lambda

  std::ostringstream eval_log;
  EXPECT_EQ(command_eval(run_dir(out, 1.0, 3), std::nullopt, eval_log), 0) << eval_log.str();
}

TEST(Cli, LambdaSweepAndReproducibility) {
  const auto data = tiny_dataset("sweep");
  auto flags = tiny_train(data, data / "a");
  flags.push_back({"lambda_sweep", "0,0.1,1,10"});
  flags.push_back({"arch", "cnn"});
  std::ostringstream log;
  ASSERT_EQ(command_train(parse_config_text("", "t", flags), log), 0) << log.str();
  EXPECT_EQ(lines_of(data / "a" / "summary.csv"), 5u);
  for (double l : {0.0, 0.1, 1.0, 10.0}) EXPECT_TRUE(fs::exists(run_dir(data / "a", l, 0) / "metrics.json"));

  flags[1].second = (data / "b").string();
  ASSERT_EQ(command_train(parse_config_text("", "t", flags), log), 0);
  for (double l : {0.0, 10.0}) {
    EXPECT_EQ(read_json(run_dir(data / "a", l, 0) / "metrics.json"),
              read_json(run_dir(data / "b", l, 0) / "metrics.json"));
    std::ifstream ca(run_dir(data / "a", l, 0) / "checkpoint.jmwt", std::ios::binary);
    std::ifstream cb(run_dir(data / "b", l, 0) / "checkpoint.jmwt", std::ios::binary);
    EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(ca), {}, std::istreambuf_iterator<char>(cb)));
  }
}

TEST(Cli, SurvivalRunAndCam) {
  const auto data = tiny_dataset("survival", "survival");
  auto flags = tiny_train(data, data / "runs");
  flags.push_back({"task", "survival"});
  flags.push_back({"bins", "2"});
  flags.push_back({"arch", "cnn"});
  std::ostringstream log;
  ASSERT_EQ(command_train(parse_config_text("", "t", flags), log), 0) << log.str();
  const auto dir = run_dir(data / "runs", 1.0, 0);
  EXPECT_TRUE(read_json(dir / "metrics.json").contains("c_index"));
  EXPECT_EQ(command_eval(dir, std::nullopt, log), 0) << log.str();

  const auto bag = *fs::directory_iterator(data / "bags");
  ASSERT_EQ(command_cam(dir, bag.path(), std::nullopt, data / "cam", log), 0) << log.str();
  EXPECT_EQ(lines_of(data / "cam" / "cam.jsonl"), 9u);
  EXPECT_TRUE(fs::exists(data / "cam" / "cam.pgm"));
}

TEST(Cli, MissingDatasetIsAnError) {
  auto c = parse_config_text("", "t", {{"data", "/nonexistent/manifest.txt"}, {"epochs", "1"}, {"quiet", "true"}});
  std::ostringstream log;
  EXPECT_THROW(command_train(c, log), Error);
}
