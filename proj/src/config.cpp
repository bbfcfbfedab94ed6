// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace jigsaw {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct ParseError {
  std::string what;
};

double to_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ParseError{"expected a number, got '" + v + "'"};
  }
  if (used != v.size()) throw ParseError{"expected a number, got '" + v + "'"};
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) throw ParseError{"expected a nonnegative integer, got '" + v + "'"};
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ParseError{"expected a boolean, got '" + v + "'"};
}

std::vector<double> to_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
  if (out.empty()) throw ParseError{"expected a comma-separated list of numbers"};
  return out;
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  std::ostringstream s;
  for (int p = 1; p <= 17; ++p) {
    s.str("");
    s << std::setprecision(p) << v;
    if (std::stod(s.str()) == v) break;
  }
  return s.str();
}

template <class E>
E enum_value(const std::string& v, E (*parse)(const std::string&)) {
  try {
    return parse(v);
  } catch (const Error& e) {
    throw ParseError{e.what()};
  }
}

struct KeySpec {
  std::string name;
  std::string help;
  std::function<void(ResolvedConfig&, const std::string&)> set;
  std::function<std::string(const ResolvedConfig&)> get;
};

const std::vector<KeySpec>& specs() {
  static const std::vector<KeySpec> table = [] {
    std::vector<KeySpec> t;
    auto add = [&](std::string name, std::string help, auto set, auto get) {
      t.push_back({std::move(name), std::move(help), set, get});
    };
    // model
    add("arch", "transformer | cnn | abmil | mean-pool | max-pool",
        [](ResolvedConfig& c, const std::string& v) { c.model.variant = enum_value(v, parse_variant); },
        [](const ResolvedConfig& c) { return to_string(c.model.variant); });
    add("pe", "positional encoding: none | sinusoidal | ppeg",
        [](ResolvedConfig& c, const std::string& v) { c.model.pe = enum_value(v, parse_pos_encoding); },
        [](const ResolvedConfig& c) { return to_string(c.model.pe); });
    add("embed_dim", "embedding width E",
        [](ResolvedConfig& c, const std::string& v) { c.model.embed_dim = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.model.embed_dim); });
    add("attention_dim", "hidden width L of attention pooling",
        [](ResolvedConfig& c, const std::string& v) { c.model.attention_dim = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.model.attention_dim); });
    add("blocks", "transformer or residual blocks",
        [](ResolvedConfig& c, const std::string& v) { c.model.blocks = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.model.blocks); });
    add("input_dim", "instance feature width (0: take it from the data)",
        [](ResolvedConfig& c, const std::string& v) { c.model.input_dim = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.model.input_dim); });
    add("classes", "classes of a multiclass head",
        [](ResolvedConfig& c, const std::string& v) { c.model.classes = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.model.classes); });
    add("bins", "survival time bins J",
        [](ResolvedConfig& c, const std::string& v) { c.model.bins = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.model.bins); });
    add("survival_alpha", "survival NLL: censored records weighted by 1 - alpha",
        [](ResolvedConfig& c, const std::string& v) { c.model.survival_alpha = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.model.survival_alpha); });
    add("lambda", "weight of the equivalence loss (>= 0)",
        [](ResolvedConfig& c, const std::string& v) { c.model.lambda = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.model.lambda); });
    add("seed", "base seed",
        [](ResolvedConfig& c, const std::string& v) { c.model.seed = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.model.seed); });
    // optimizer
    add("lr", "learning rate",
        [](ResolvedConfig& c, const std::string& v) { c.model.optimizer.lr = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.model.optimizer.lr); });
    add("weight_decay", "decoupled weight decay",
        [](ResolvedConfig& c, const std::string& v) { c.model.optimizer.weight_decay = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.model.optimizer.weight_decay); });
    add("beta1", "first-moment decay",
        [](ResolvedConfig& c, const std::string& v) { c.model.optimizer.beta1 = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.model.optimizer.beta1); });
    add("beta2", "second-moment decay",
        [](ResolvedConfig& c, const std::string& v) { c.model.optimizer.beta2 = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.model.optimizer.beta2); });
    add("adam_eps", "denominator epsilon",
        [](ResolvedConfig& c, const std::string& v) { c.model.optimizer.eps = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.model.optimizer.eps); });
    // training
    add("epochs", "training epochs (default 200 classification, 20 survival)",
        [](ResolvedConfig& c, const std::string& v) { c.train.epochs = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.train.epochs); });
    add("mode", "branch execution: stacked | sequential",
        [](ResolvedConfig& c, const std::string& v) {
          if (v == "stacked") c.train.step.mode = BranchMode::stacked;
          else if (v == "sequential") c.train.step.mode = BranchMode::sequential;
          else throw ParseError{"expected stacked or sequential, got '" + v + "'"};
        },
        [](const ResolvedConfig& c) { return std::string(c.train.step.mode == BranchMode::stacked ? "stacked" : "sequential"); });
    add("task_on_shuffled", "also apply the task loss to the shuffled branch",
        [](ResolvedConfig& c, const std::string& v) { c.train.step.task_on_shuffled = to_bool(v); },
        [](const ResolvedConfig& c) { return std::string(c.train.step.task_on_shuffled ? "true" : "false"); });
    add("eval_every", "evaluate the test split every k epochs (0: last only)",
        [](ResolvedConfig& c, const std::string& v) { c.train.eval_every = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.train.eval_every); });
    // run
    add("task", "classification | survival",
        [](ResolvedConfig& c, const std::string& v) {
          if (v != "classification" && v != "survival") throw ParseError{"expected classification or survival, got '" + v + "'"};
          c.run.task = v;
        },
        [](const ResolvedConfig& c) { return c.run.task; });
    add("data", "dataset manifest",
        [](ResolvedConfig& c, const std::string& v) { c.run.data = v; },
        [](const ResolvedConfig& c) { return c.run.data.string(); });
    add("out", "output directory",
        [](ResolvedConfig& c, const std::string& v) { c.run.out = v; },
        [](const ResolvedConfig& c) { return c.run.out.string(); });
    add("seeds", "number of seeds (seed .. seed+k-1)",
        [](ResolvedConfig& c, const std::string& v) { c.run.seeds = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.run.seeds); });
    add("lambda_sweep", "comma-separated lambdas to sweep (e.g. 0,0.1,1,10)",
        [](ResolvedConfig& c, const std::string& v) { c.run.lambda_sweep = v.empty() ? std::vector<double>{} : to_list(v); },
        [](const ResolvedConfig& c) {
          std::string s;
          for (double l : c.run.lambda_sweep) s += (s.empty() ? "" : ",") + fmt(l);
          return s;
        });
    add("fold", "k-fold layout: test on fold-k, train on the other folds",
        [](ResolvedConfig& c, const std::string& v) {
          if (v.empty()) c.run.fold.reset();
          else c.run.fold = to_uint(v);
        },
        [](const ResolvedConfig& c) { return c.run.fold ? std::to_string(*c.run.fold) : std::string(); });
    add("train_bags", "synth: training bags",
        [](ResolvedConfig& c, const std::string& v) { c.run.train_bags = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.run.train_bags); });
    add("test_bags", "synth: test bags",
        [](ResolvedConfig& c, const std::string& v) { c.run.test_bags = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.run.test_bags); });
    add("quiet", "suppress per-epoch progress",
        [](ResolvedConfig& c, const std::string& v) { c.run.quiet = to_bool(v); },
        [](const ResolvedConfig& c) { return std::string(c.run.quiet ? "true" : "false"); });
    // synthetic data
    add("grid", "synth: grid side G",
        [](ResolvedConfig& c, const std::string& v) { c.synth.grid = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.synth.grid); });
    add("dim", "synth: feature width d",
        [](ResolvedConfig& c, const std::string& v) { c.synth.dim = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.synth.dim); });
    add("delta", "synth: class-mean separation",
        [](ResolvedConfig& c, const std::string& v) { c.synth.delta = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.synth.delta); });
    add("noise", "synth: noise scale",
        [](ResolvedConfig& c, const std::string& v) { c.synth.noise = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.synth.noise); });
    add("blob_min", "synth: smallest blob side",
        [](ResolvedConfig& c, const std::string& v) { c.synth.blob_min = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.synth.blob_min); });
    add("blob_max", "synth: largest blob side",
        [](ResolvedConfig& c, const std::string& v) { c.synth.blob_max = to_uint(v); },
        [](const ResolvedConfig& c) { return std::to_string(c.synth.blob_max); });
    add("positive_fraction", "synth: share of bags with a positive blob",
        [](ResolvedConfig& c, const std::string& v) { c.synth.positive_fraction = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.synth.positive_fraction); });
    add("hazard_scale", "synth: hazard multiplier per unit positive fraction",
        [](ResolvedConfig& c, const std::string& v) { c.synth.hazard_scale = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.synth.hazard_scale); });
    add("censoring_rate", "synth: share of censored survival records",
        [](ResolvedConfig& c, const std::string& v) { c.synth.censoring_rate = to_double(v); },
        [](const ResolvedConfig& c) { return fmt(c.synth.censoring_rate); });
    return t;
  }();
  return table;
}

const KeySpec* find_key(const std::string& name) {
  for (const auto& s : specs())
    if (s.name == name) return &s;
  return nullptr;
}

void apply_key(ResolvedConfig& cfg, const std::string& key, const std::string& value, const std::string& origin) {
  const auto* spec = find_key(key);
  if (!spec) throw Error(origin + ": unknown key '" + key + "'");
  try {
    spec->set(cfg, value);
  } catch (const ParseError& e) {
    throw Error(origin + ": bad value for '" + key + "': " + e.what);
  }
  cfg.explicit_keys[key] = value;
}

}  // namespace

ResolvedConfig parse_config_text(const std::string& text, const std::string& origin, const FlagList& flags) {
  ResolvedConfig cfg;
  cfg.model.input_dim = 0;  // taken from the data unless set
  std::map<std::string, std::string> where;  // key -> origin of its final value
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string at = origin + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(at + ": expected key=value, got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    apply_key(cfg, key, trim(line.substr(eq + 1)), at);
    where[key] = at;
  }
  for (const auto& [key, value] : flags) {
    apply_key(cfg, key, value, "flag --" + key);
    where[key] = "flag --" + key;
  }

  if (!cfg.explicit_keys.count("epochs")) cfg.train.epochs = cfg.run.task == "survival" ? 20 : 200;
  if (cfg.run.task == "survival") cfg.model.head = HeadKind::survival;
  else cfg.model.head = cfg.model.classes > 2 ? HeadKind::multiclass : HeadKind::binary;
  if (!cfg.model.uses_grid() && !cfg.explicit_keys.count("pe")) cfg.model.pe = PosEncoding::none;
  cfg.synth.seed = cfg.model.seed;

  auto blame = [&](const std::string& key) {
    auto it = where.find(key);
    return it == where.end() ? std::string("default") : it->second;
  };
  if (!(cfg.model.lambda >= 0.0))
    throw Error(blame("lambda") + ": 'lambda' must satisfy lambda >= 0, got " + fmt(cfg.model.lambda));
  for (double l : cfg.run.lambda_sweep)
    if (!(l >= 0.0)) throw Error(blame("lambda_sweep") + ": 'lambda_sweep' entries must satisfy lambda >= 0");
  if (cfg.run.seeds == 0) throw Error(blame("seeds") + ": 'seeds' must be at least 1");
  if (cfg.model.bins < 2) throw Error(blame("bins") + ": 'bins' must be at least 2");
  try {
    ModelConfig probe = cfg.model;
    if (probe.input_dim == 0) probe.input_dim = 2;
    probe.validate();
    cfg.synth.validate();
  } catch (const Error& e) {
    throw Error(origin + ": " + e.what());
  }
  return cfg;
}

ResolvedConfig parse_config(const std::optional<std::filesystem::path>& file, const FlagList& flags) {
  std::string text;
  std::string origin = "(no config file)";
  if (file) {
    std::ifstream in(*file);
    if (!in) throw Error("cannot open config file " + file->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
    origin = file->string();
  }
  return parse_config_text(text, origin, flags);
}

std::string dump_config(const ResolvedConfig& cfg) {
  std::string out;
  for (const auto& s : specs()) out += s.name + "=" + s.get(cfg) + "\n";
  return out;
}

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const auto keys = [] {
    std::vector<std::pair<std::string, std::string>> k;
    for (const auto& s : specs()) k.emplace_back(s.name, s.help);
    return k;
  }();
  return keys;
}

}  // namespace jigsaw
