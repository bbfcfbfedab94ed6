// SPDX-License-Identifier: Apache-2.0
//
// jigsaw: synthetic data, Siamese training and the verification suites.

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "jigsaw/commands.hpp"
#include "jigsaw/runtime.hpp"

namespace {

// "--key=value", "--key value" and "key=value" all become (key, value).
jigsaw::FlagList collect_flags(const std::vector<std::string>& args) {
  jigsaw::FlagList flags;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string a = args[i];
    if (a.rfind("--", 0) == 0) a.erase(0, 2);
    if (const auto eq = a.find('='); eq != std::string::npos) {
      flags.emplace_back(a.substr(0, eq), a.substr(eq + 1));
    } else if (i + 1 < args.size() && args[i + 1].rfind("--", 0) != 0) {
      flags.emplace_back(a, args[++i]);
    } else {
      throw jigsaw::Error("flag --" + a + " needs a value");
    }
  }
  return flags;
}

std::string keys_help() {
  std::string s = "Configuration keys (config file lines key=value, or flags --key=value):\n";
  for (const auto& [key, help] : jigsaw::config_keys()) s += "  " + key + std::string(key.size() < 18 ? 18 - key.size() : 1, ' ') + help + "\n";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  jigsaw::tune_allocator();
  CLI::App app{"Siamese multiple-instance learning with instance jigsaw regularization"};
  app.require_subcommand(1);

  std::optional<std::string> config_file;
  auto configurable = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "flat key=value config file");
    sub->allow_extras();
    sub->footer(keys_help());
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic bag dataset and its manifest under --out");
  configurable(synth);
  auto* train = app.add_subcommand("train", "train and evaluate over seeds and lambdas, write runs under --out");
  configurable(train);

  std::string run;
  std::optional<std::string> data;
  auto* eval = app.add_subcommand("eval", "re-evaluate a run directory and compare with its stored metrics");
  eval->add_option("--run", run, "run directory written by train")->required();
  eval->add_option("--data", data, "manifest to use instead of the recorded one");

  jigsaw::VerifyOptions verify_options;
  auto* verify = app.add_subcommand("verify", "run every property suite; exit status 0 iff all pass");
  verify->add_option("--trials", verify_options.grad_trials, "random cases per gradient check");
  verify->add_option("--sweep", verify_options.sweep, "random cases per sweep property");

  std::size_t ot_cases = 100;
  auto* ot_check = app.add_subcommand("ot-check", "optimal-transport identities and solver agreement");
  ot_check->add_option("--cases", ot_cases, "random cases for the matrix-form identities");

  std::optional<std::string> table;
  auto* entropy = app.add_subcommand("entropy-demo", "conditional entropies and error bounds of (X, P, Y) tables");
  entropy->add_option("--table", table, "joint table file (sizes line, then probabilities)");

  std::string bag, out = "cam";
  std::optional<std::size_t> class_index;
  auto* cam = app.add_subcommand("cam", "class activation map of one bag");
  cam->add_option("--run", run, "run directory written by train")->required();
  cam->add_option("--bag", bag, "MILB bag file")->required();
  cam->add_option("--class", class_index, "head output to explain (default 0)");
  cam->add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    auto resolve = [&](CLI::App* sub) {
      std::optional<std::filesystem::path> file;
      if (config_file) file = *config_file;
      return jigsaw::parse_config(file, collect_flags(sub->remaining()));
    };
    if (synth->parsed()) return jigsaw::command_synth(resolve(synth), std::cerr);
    if (train->parsed()) return jigsaw::command_train(resolve(train), std::cerr);
    if (eval->parsed()) {
      std::optional<std::filesystem::path> d;
      if (data) d = *data;
      return jigsaw::command_eval(run, d, std::cout);
    }
    if (verify->parsed()) return jigsaw::command_verify(verify_options, std::cout);
    if (ot_check->parsed()) return jigsaw::command_ot_check(ot_cases, std::cout);
    if (entropy->parsed()) {
      std::optional<std::filesystem::path> t;
      if (table) t = *table;
      return jigsaw::command_entropy_demo(t, std::cout);
    }
    if (cam->parsed()) return jigsaw::command_cam(run, bag, class_index, out, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
