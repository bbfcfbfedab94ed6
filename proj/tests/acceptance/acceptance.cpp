// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks, one per criterion: `acceptance <n>` prints a single
// "criterion <n>: PASS|FAIL ..." line and exits 0 only on PASS.
// `acceptance all` runs every criterion in order.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "jigsaw/commands.hpp"
#include "jigsaw/interpret.hpp"
#include "jigsaw/jigsaw.hpp"
#include "jigsaw/runtime.hpp"
#include "jigsaw/verify.hpp"

using namespace jigsaw;
namespace fs = std::filesystem;

namespace {

// Thresholds, case counts and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kGradTrials = 100;
constexpr double kGradBudgetSeconds = 60.0;
constexpr std::size_t kInvariancePairs = 200;
constexpr std::size_t kIdentityCases = 200;
constexpr std::size_t kMatrixFormCases = 100;
constexpr std::size_t kTransportCases = 20;
constexpr std::size_t kRandomJoints = 1000;
constexpr std::size_t kIndependentJoints = 100;

constexpr std::size_t kSeeds = 5;
constexpr std::size_t kTrainBags = 400;
constexpr std::size_t kTestBags = 200;
constexpr double kAblationMargin = 0.02;
constexpr double kAblationBudgetSeconds = 15.0 * 60.0;
constexpr double kPeMargin = 0.01;

constexpr std::size_t kTimingSteps = 200;
constexpr double kStackedMaxRatio = 1.7;
constexpr double kSequentialMinRatio = 1.8;

constexpr std::size_t kCamCases = 1000;
constexpr std::size_t kCamSeeds = 3;
constexpr double kCamAuc = 0.8;

constexpr double kNllLimit = 1e-6;
constexpr std::size_t kSurvivalOracleBags = 2000;
constexpr double kOracleCIndex = 0.7;

constexpr std::size_t kRoundTripBags = 100;

// Reduced model used by every training-based criterion so that the runs fit
// a single desktop core.
constexpr std::size_t kEmbed = 16;
constexpr std::size_t kEpochs = 20;
constexpr double kLearningRate = 1e-3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fixed(v[i], 3);
  return s + "]";
}

// Passes when every property passed; the detail names the failures.
Outcome from_properties(const std::vector<PropertyResult>& results) {
  Outcome o{true, std::to_string(results.size()) + " properties"};
  for (const auto& r : results)
    if (!r.pass) {
      o.pass = false;
      o.detail += "; failed " + r.group + ": " + r.name + " (" + r.detail + ")";
    }
  return o;
}

// ---------------------------------------------------------------- training

struct Setting {
  Variant variant = Variant::transformer;
  PosEncoding pe = PosEncoding::ppeg;
  double lambda = 1.0;
  SynthConfig data = SynthConfig::hard();
  bool survival = false;
  std::uint64_t seed = 0;
};

ModelConfig model_config(const Setting& s) {
  ModelConfig mc;
  mc.variant = s.variant;
  mc.pe = s.variant == Variant::transformer ? s.pe : PosEncoding::none;
  mc.input_dim = s.data.dim;
  mc.embed_dim = kEmbed;
  mc.attention_dim = kEmbed;
  mc.lambda = s.lambda;
  mc.head = s.survival ? HeadKind::survival : HeadKind::binary;
  mc.optimizer.lr = kLearningRate;
  mc.seed = s.seed;
  return mc;
}

struct Trained {
  Model model;
  std::vector<Bag> test;
  std::map<std::string, double> metrics;
};

// Same data layout as `synth`: training bags first, test bags after them.
Trained train_setting(const Setting& s) {
  auto train_set = synth_dataset(s.data, s.survival, 0, kTrainBags);
  auto test_set = synth_dataset(s.data, s.survival, kTrainBags, kTestBags);
  const auto mc = model_config(s);
  if (s.survival) assign_survival_bins(train_set, test_set, mc.bins);
  Model model(mc);
  TrainOptions opt;
  opt.epochs = kEpochs;
  train(model, train_set, test_set, opt);
  auto metrics = evaluate(model, test_set);
  return {std::move(model), std::move(test_set), std::move(metrics)};
}

std::vector<double> over_seeds(Setting s, const std::string& metric, std::size_t seeds = kSeeds) {
  std::vector<double> out;
  for (std::size_t k = 0; k < seeds; ++k) {
    s.seed = k;
    out.push_back(train_setting(s).metrics.at(metric));
  }
  return out;
}

// ---------------------------------------------------------------- criteria

Outcome gradients() {
  const auto t0 = Clock::now();
  auto o = from_properties(grad_properties(primitive_grad_cases(), kGradTrials, kGradTolerance));
  const double t = seconds_since(t0);
  o.detail += ", " + fixed(t, 1) + " s";
  if (t >= kGradBudgetSeconds) {
    o.pass = false;
    o.detail += " over the " + fixed(kGradBudgetSeconds, 0) + " s budget";
  }
  return o;
}

Outcome invariance() { return from_properties(invariance_properties(kInvariancePairs)); }

Outcome identities() { return from_properties(identity_properties(kIdentityCases)); }

Outcome transport() { return from_properties(ot_properties(kMatrixFormCases, kTransportCases)); }

Outcome entropy() { return from_properties(entropy_properties(kRandomJoints, kIndependentJoints)); }

Outcome ablation() {
  const auto t0 = Clock::now();
  Outcome o{true, ""};
  for (auto v : {Variant::transformer, Variant::cnn}) {
    Setting s;
    s.variant = v;
    s.lambda = 1.0;
    const auto with = over_seeds(s, "accuracy");
    s.lambda = 0.0;
    const auto without = over_seeds(s, "accuracy");
    const double gain = mean(with) - mean(without);
    o.pass = o.pass && gain >= kAblationMargin;
    o.detail += to_string(v) + ": lambda=1 " + list(with) + " vs lambda=0 " + list(without) + " gain " +
                fixed(100 * gain, 2) + " pt; ";
  }
  const double t = seconds_since(t0);
  o.detail += fixed(t / 60.0, 1) + " min";
  if (t >= kAblationBudgetSeconds) o.pass = false;
  return o;
}

Outcome positional_encoding() {
  Setting s;
  s.pe = PosEncoding::none;
  const auto none = over_seeds(s, "accuracy");
  s.pe = PosEncoding::ppeg;
  const auto ppeg = over_seeds(s, "accuracy");
  s.pe = PosEncoding::sinusoidal;
  const auto sinusoidal = over_seeds(s, "accuracy");
  const double best = std::max(mean(ppeg) - mean(none), mean(sinusoidal) - mean(none));
  return {best >= kPeMargin, "none " + list(none) + ", ppeg " + list(ppeg) + ", sinusoidal " + list(sinusoidal) +
                                 "; best gain " + fixed(100 * best, 2) + " pt"};
}

Outcome parallelization() {
  ModelConfig mc;
  Model model(mc);
  OptimizerState opt(model.params(), mc.optimizer);
  const auto bags = synth_dataset(SynthConfig::hard(), false, 0, 10);
  Pcg32 rng(7);
  std::vector<Permutation> perms;
  for (std::size_t i = 0; i < kTimingSteps; ++i) perms.push_back(sample_permutation(model.slot_count(144), rng));
  auto time = [&](const std::function<void(std::size_t)>& step) {
    for (std::size_t i = 0; i < 5; ++i) step(i);  // warm-up
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < kTimingSteps; ++i) step(i);
    return seconds_since(t0) * 1000.0 / kTimingSteps;
  };
  const double single = time([&](std::size_t i) { single_branch_step(model, bags[i % 10], opt); });
  const double stacked = time([&](std::size_t i) {
    siamese_step(model, bags[i % 10], perms[i % kTimingSteps], opt, {BranchMode::stacked});
  });
  const double sequential = time([&](std::size_t i) {
    siamese_step(model, bags[i % 10], perms[i % kTimingSteps], opt, {BranchMode::sequential});
  });
  const double rs = stacked / single, rq = sequential / single;
  return {rs <= kStackedMaxRatio && rq >= kSequentialMinRatio,
          "single " + fixed(single, 2) + " ms, stacked " + fixed(stacked, 2) + " ms (" + fixed(rs, 2) +
              "x), sequential " + fixed(sequential, 2) + " ms (" + fixed(rq, 2) + "x)"};
}

Outcome class_activation() {
  auto o = from_properties(cam_properties(kCamCases));
  std::vector<double> per_seed;
  for (std::size_t k = 0; k < kCamSeeds; ++k) {
    // The CNN variant: its locality keeps slot features tied to their tiles.
    Setting s;
    s.variant = Variant::cnn;
    s.data = SynthConfig::easy();
    s.seed = k;
    const auto t = train_setting(s);
    std::vector<double> aucs;
    for (const auto& bag : t.test) {
      if (bag.class_label() != 1) continue;
      const auto f = t.model.forward_backbone(bag.tensor());
      aucs.push_back(cam_localization_auc(cam(f, t.model.head().w, 0, bag.n), bag.instance_labels));
    }
    per_seed.push_back(mean(aucs));
  }
  const double m = mean(per_seed);
  o.pass = o.pass && m > kCamAuc;
  o.detail += "; localization AUC " + list(per_seed) + " mean " + fixed(m);
  return o;
}

Outcome survival() {
  Outcome o{true, ""};
  // Limits: a certain event in bin 0, and a survivor with vanishing hazards.
  const std::vector<double> certain{60.0, -60.0, -60.0, -60.0}, never{-60.0, -60.0, -60.0, -60.0};
  double worst = survival_nll(certain, 0, 1);
  for (int j = 0; j < 4; ++j) worst = std::max(worst, survival_nll(never, j, 0));
  o.pass = worst < kNllLimit;
  o.detail = "nll limits max " + fixed(worst, 9);

  const auto bags = synth_dataset(SynthConfig::hard(), true, 0, kSurvivalOracleBags);
  std::vector<double> risk;
  std::vector<SurvivalRecord> rec;
  for (const auto& b : bags) risk.push_back(positive_fraction(b)), rec.push_back(b.survival());
  const double oracle = c_index(risk, rec);
  o.pass = o.pass && oracle > kOracleCIndex;
  o.detail += "; ground-truth C-index " + fixed(oracle);

  Setting s;
  s.variant = Variant::cnn;
  s.survival = true;
  s.lambda = 1.0;
  const auto with = over_seeds(s, "c_index");
  s.lambda = 0.0;
  const auto without = over_seeds(s, "c_index");
  o.pass = o.pass && mean(with) > mean(without);
  o.detail += "; cnn lambda=1 " + list(with) + " mean " + fixed(mean(with)) + " vs lambda=0 " + list(without) +
              " mean " + fixed(mean(without));
  return o;
}

bool same_bits(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, v] : a) {
    const auto it = b.find(k);
    if (it == b.end() || std::memcmp(&v, &it->second, sizeof v) != 0) return false;
  }
  return true;
}

Outcome io_round_trip() {
  const auto dir = fs::temp_directory_path() / "jigsaw-acceptance-io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Pcg32 rng(11);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < kRoundTripBags; ++i) {
    SynthConfig c;
    c.grid = 1 + rng() % 12;
    c.dim = 1 + rng() % 64;
    c.blob_min = 1;
    c.blob_max = c.grid;
    c.seed = rng();
    Bag b = synth_bag(c, i % 2 == 1, i);
    if (rng() % 3 == 0) b.coords.clear();
    if (rng() % 3 == 0) b.instance_labels.clear();
    const auto p = dir / ("bag-" + std::to_string(i) + ".milb");
    write_bag(b, p);
    exact += read_bag(p) == b;
  }

  Setting s;
  s.variant = Variant::cnn;
  auto train_set = synth_dataset(s.data, false, 0, 40);
  const auto test_set = synth_dataset(s.data, false, 40, 40);
  const auto mc = model_config(s);
  Model model(mc);
  TrainOptions opt;
  opt.epochs = 2;
  train(model, train_set, test_set, opt);
  model.params().round_to_float();
  const auto before = evaluate(model, test_set);
  write_checkpoint(model.params(), dir / "checkpoint.jmwt");
  Model restored(mc);
  load_checkpoint(restored.params(), dir / "checkpoint.jmwt");
  const bool metrics_equal = same_bits(before, evaluate(restored, test_set));
  return {exact == kRoundTripBags && metrics_equal,
          std::to_string(exact) + "/" + std::to_string(kRoundTripBags) + " bags bit-exact, checkpoint metrics " +
              (metrics_equal ? "bit-identical" : "differ")};
}

const std::vector<std::function<Outcome()>>& criteria() {
  static const std::vector<std::function<Outcome()>> all{
      gradients, invariance,       identities, transport, entropy,      ablation,
      positional_encoding, parallelization, class_activation, survival, io_round_trip};
  return all;
}

bool run(std::size_t n) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = criteria().at(n - 1)();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
            << fixed(seconds_since(t0), 1) << " s]" << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  const std::string arg = argc > 1 ? argv[1] : "all";
  if (arg == "all") {
    bool ok = true;
    for (std::size_t n = 1; n <= criteria().size(); ++n) ok = run(n) && ok;
    return ok ? 0 : 1;
  }
  std::size_t n = 0;
  try {
    n = std::stoul(arg);
  } catch (const std::exception&) {
  }
  if (n < 1 || n > criteria().size()) {
    std::cerr << "usage: acceptance <1-" << criteria().size() << "|all>\n";
    return 2;
  }
  return run(n) ? 0 : 1;
}
