// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <set>
#include <sstream>

#include "jigsaw/info.hpp"
#include "jigsaw/interpret.hpp"
#include "jigsaw/ot.hpp"

namespace jigsaw {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string lambda_tag(double lambda) {
  std::ostringstream os;
  os << lambda;
  return os.str();
}

void append(std::vector<Bag>& dst, std::vector<Bag>& src) {
  dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
}

nlohmann::ordered_json metrics_json(const std::map<std::string, double>& metrics) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : metrics) j[k] = v;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

BinEdges assign_survival_bins(std::vector<Bag>& train, std::vector<Bag>& test, std::size_t bins) {
  std::vector<SurvivalRecord> records;
  for (const auto& bag : train) records.push_back(bag.survival());
  const auto edges = time_bins(records, bins);
  for (std::size_t i = 0; i < train.size(); ++i) train[i].survival().bin = records[i].bin;
  for (auto& bag : test) bag.survival().bin = static_cast<int>(bin_of(edges, bag.survival().time));
  return edges;
}

Splits load_splits(ResolvedConfig& cfg) {
  if (cfg.run.data.empty()) throw Error("no dataset given: set data=<manifest> (see the synth command)");
  const auto manifest = load_manifest(cfg.run.data);
  auto data = load_dataset(manifest);
  Splits s;
  s.warnings = manifest.warnings;
  if (cfg.run.fold) {
    const auto held_out = "fold-" + std::to_string(*cfg.run.fold);
    if (!data.count(held_out)) throw Error(cfg.run.data.string() + ": no bags tagged " + held_out);
    for (auto& [split, bags] : data) append(split == held_out ? s.test : s.train, bags);
  } else {
    append(s.train, data["train"]);
    append(s.test, data["test"]);
  }
  if (s.train.empty()) throw Error(cfg.run.data.string() + ": training split is empty");
  if (s.test.empty()) throw Error(cfg.run.data.string() + ": test split is empty");

  const auto d = s.train.front().d;
  const bool survival = cfg.run.task == "survival";
  for (const auto* split : {&s.train, &s.test})
    for (const auto& bag : *split) {
      if (bag.d != d) throw Error("bags disagree on feature width: " + std::to_string(bag.d) + " vs " + std::to_string(d));
      if (bag.is_survival() != survival)
        throw Error(std::string("task=") + cfg.run.task + " but the dataset holds " +
                    (bag.is_survival() ? "survival" : "class") + " labels");
      if (!survival && bag.class_label() >= cfg.model.output_width() + (cfg.model.head == HeadKind::binary))
        throw Error("class label " + std::to_string(bag.class_label()) + " outside the configured classes");
    }
  if (cfg.model.input_dim == 0) cfg.model.input_dim = d;
  if (cfg.model.input_dim != d)
    throw Error("input_dim=" + std::to_string(cfg.model.input_dim) + " but the bags have " + std::to_string(d) +
                " features");
  if (survival) assign_survival_bins(s.train, s.test, cfg.model.bins);
  return s;
}

fs::path run_dir(const fs::path& out, double lambda, std::uint64_t seed) {
  return out / ("lambda-" + lambda_tag(lambda)) / ("seed-" + std::to_string(seed));
}

std::vector<RunResult> run_train_eval(const ResolvedConfig& cfg, const Splits& splits, std::ostream& log) {
  const auto lambdas = cfg.run.lambda_sweep.empty() ? std::vector<double>{cfg.model.lambda} : cfg.run.lambda_sweep;
  std::vector<RunResult> results;
  for (double lambda : lambdas)
    for (std::size_t k = 0; k < cfg.run.seeds; ++k) {
      ResolvedConfig rc = cfg;
      rc.model.lambda = lambda;
      rc.model.seed = cfg.model.seed + k;
      rc.synth.seed = rc.model.seed;
      rc.run.lambda_sweep.clear();
      rc.run.seeds = 1;

      Model model(rc.model);
      TrainOptions options = cfg.train;
      const std::string tag = "lambda=" + lambda_tag(lambda) + " seed=" + std::to_string(rc.model.seed);
      if (!cfg.run.quiet)
        options.on_epoch = [&](const EpochRecord& e) {
          log << tag << " epoch " << e.epoch << " task " << fixed(e.task_loss) << " eqv " << fixed(e.eqv_loss);
          for (const auto& [name, v] : e.metrics) log << ' ' << name << ' ' << fixed(v);
          log << '\n';
        };
      const auto report = train(model, splits.train, splits.test, options);
      // Stored weights are single precision; evaluate exactly what is saved.
      model.params().round_to_float();
      RunResult r{lambda, rc.model.seed, evaluate(model, splits.test), run_dir(cfg.run.out, lambda, rc.model.seed)};

      fs::create_directories(r.dir);
      write_checkpoint(model.params(), r.dir / "checkpoint.jmwt");
      report.write_jsonl(r.dir / "report.jsonl");
      write_text(r.dir / "metrics.json", metrics_json(r.metrics).dump(2) + "\n");
      write_text(r.dir / "config.txt", dump_config(rc));
      log << tag << " test";
      for (const auto& [name, v] : r.metrics) log << ' ' << name << ' ' << fixed(v);
      log << '\n';
      results.push_back(std::move(r));
    }
  return results;
}

std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs) {
  std::vector<SummaryRow> rows;
  std::vector<std::map<std::string, std::vector<double>>> values;
  for (const auto& r : runs) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& row) { return row.lambda == r.lambda; });
    if (it == rows.end()) {
      rows.push_back({r.lambda, 0, {}});
      values.emplace_back();
      it = rows.end() - 1;
    }
    auto& v = values[static_cast<std::size_t>(it - rows.begin())];
    ++it->runs;
    for (const auto& [name, x] : r.metrics) v[name].push_back(x);
  }
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& [name, xs] : values[i]) {
      MetricStats st;
      for (double x : xs) st.mean += x;
      st.mean /= static_cast<double>(xs.size());
      if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - st.mean) * (x - st.mean);
        st.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
      }
      rows[i].metrics[name] = st;
    }
  return rows;
}

void write_summary(const std::vector<SummaryRow>& rows, const fs::path& txt, const fs::path& csv) {
  std::set<std::string> names;
  for (const auto& row : rows)
    for (const auto& [name, _] : row.metrics) names.insert(name);

  std::ostringstream t, c;
  t << std::left << std::setw(10) << "lambda" << std::setw(6) << "runs";
  c << "lambda,runs";
  for (const auto& n : names) {
    t << std::setw(22) << n;
    c << ',' << n << "_mean," << n << "_std";
  }
  t << '\n';
  c << '\n';
  for (const auto& row : rows) {
    t << std::setw(10) << lambda_tag(row.lambda) << std::setw(6) << row.runs;
    c << lambda_tag(row.lambda) << ',' << row.runs;
    for (const auto& n : names) {
      auto it = row.metrics.find(n);
      if (it == row.metrics.end()) {
        t << std::setw(22) << "-";
        c << ",,";
        continue;
      }
      t << std::setw(22) << (fixed(it->second.mean) + " +- " + fixed(it->second.std));
      c << ',' << std::setprecision(17) << it->second.mean << ',' << it->second.std;
    }
    t << '\n';
    c << '\n';
  }
  write_text(txt, t.str());
  write_text(csv, c.str());
}

Model load_run(const fs::path& dir, ResolvedConfig& cfg) {
  cfg = parse_config(dir / "config.txt", {});
  if (cfg.model.input_dim == 0) throw Error(dir.string() + "/config.txt: input_dim is not recorded");
  Model model(cfg.model);
  load_checkpoint(model.params(), dir / "checkpoint.jmwt");
  return model;
}

// ---------------------------------------------------------------- commands

int command_synth(const ResolvedConfig& cfg, std::ostream& log) {
  const bool survival = cfg.run.task == "survival";
  const auto bags_dir = cfg.run.out / "bags";
  fs::create_directories(bags_dir);
  std::ostringstream manifest;
  manifest << "# synthetic " << cfg.run.task << " bags: grid=" << cfg.synth.grid << " dim=" << cfg.synth.dim
           << " delta=" << cfg.synth.delta << " seed=" << cfg.synth.seed << '\n';
  auto emit = [&](const char* split, std::size_t first, std::size_t count) {
    double positives = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const auto bag = synth_bag(cfg.synth, survival, first + i);
      char name[48];
      std::snprintf(name, sizeof name, "%s-%05zu.milb", split, i);
      write_bag(bag, bags_dir / name);
      manifest << "bags/" << name << ' ' << split << '\n';
      positives += survival ? bag.survival().event : bag.class_label();
    }
    log << split << ": " << count << " bags, " << positives << (survival ? " events" : " positive") << '\n';
  };
  emit("train", 0, cfg.run.train_bags);
  emit("test", cfg.run.train_bags, cfg.run.test_bags);
  write_text(cfg.run.out / "manifest.txt", manifest.str());
  log << "wrote " << (cfg.run.out / "manifest.txt").string() << '\n';
  return 0;
}

int command_train(ResolvedConfig cfg, std::ostream& log) {
  if (!cfg.run.data.empty()) cfg.run.data = fs::absolute(cfg.run.data);
  const auto splits = load_splits(cfg);
  for (const auto& w : splits.warnings) log << "warning: " << w << '\n';
  log << "train " << splits.train.size() << " bags, test " << splits.test.size() << " bags, " << to_string(cfg.model.variant)
      << " pe=" << to_string(cfg.model.pe) << " epochs=" << cfg.train.epochs << '\n';
  const auto runs = run_train_eval(cfg, splits, log);
  const auto rows = summarize(runs);
  write_summary(rows, cfg.run.out / "summary.txt", cfg.run.out / "summary.csv");
  std::ifstream in(cfg.run.out / "summary.txt");
  log << in.rdbuf();
  return 0;
}

int command_eval(const fs::path& dir, const std::optional<fs::path>& data, std::ostream& log) {
  ResolvedConfig cfg;
  const Model model = load_run(dir, cfg);
  if (data) cfg.run.data = *data;
  const auto splits = load_splits(cfg);
  const auto metrics = evaluate(model, splits.test);

  std::ifstream in(dir / "metrics.json");
  if (!in) throw Error("cannot open " + (dir / "metrics.json").string());
  const auto stored = nlohmann::json::parse(in);
  bool match = stored.size() == metrics.size();
  for (const auto& [name, v] : metrics) {
    const bool same = stored.contains(name) && stored[name].get<double>() == v;
    match = match && same;
    log << std::left << std::setw(10) << name << std::setprecision(17) << v
        << (same ? "" : "  (stored " + (stored.contains(name) ? stored[name].dump() : std::string("missing")) + ")")
        << '\n';
  }
  log << (match ? "metrics match the stored values bit for bit\n" : "metrics differ from the stored values\n");
  return match ? 0 : 1;
}

int command_verify(const VerifyOptions& options, std::ostream& log) {
  const auto results = run_verify(options);
  const bool ok = print_results(log, results);
  for (const auto& r : results)
    if (!r.pass) log << "failed: " << r.group << ": " << r.name << '\n';
  return ok ? 0 : 1;
}

int command_ot_check(std::size_t cases, std::ostream& log) {
  const bool ok = print_results(log, ot_properties(cases));

  Pcg32 rng = derive_stream(0x64656d6f, 0);
  const std::size_t n = 5;
  Eigen::MatrixXd p(n, 2), q(n, 2);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p.data()[i] = static_cast<double>(rng() % 8);
    q.data()[i] = static_cast<double>(rng() % 8);
  }
  const auto exact = ot::emd_bruteforce(p, q);
  const auto approx = ot::sinkhorn_annealed(ot::quadratic_cost(p, q));
  log << "\nexample, " << n << " points on an 8x8 grid\n  brute-force EMD " << fixed(exact.cost, 6)
      << "\n  annealed Sinkhorn " << fixed(approx.cost, 6) << " (marginal violation " << approx.violation
      << ")\n  matching";
  for (std::size_t i = 0; i < n; ++i) log << ' ' << i << "->" << exact.assignment[i];
  log << '\n';
  return ok ? 0 : 1;
}

namespace {

void report_joint(const std::string& title, const info::DiscreteJoint& j, std::ostream& log) {
  const auto t2 = info::entropy_gap(j);
  const auto& dims = j.dims();
  const info::DiscreteJoint xy({dims[0], dims[2]}, j.marginal({0, 2}));
  const info::DiscreteJoint xpy({dims[0] * dims[1], dims[2]}, j.probs());
  const auto hx = info::hellman_bound(xy), hxp = info::hellman_bound(xpy);
  log << title << "  (|X|=" << dims[0] << " |P|=" << dims[1] << " |Y|=" << dims[2] << ")\n"
      << "  H(Y|X)   = " << fixed(t2.h_y_given_x) << " bits\n"
      << "  H(Y|X,P) = " << fixed(t2.h_y_given_xp) << " bits\n"
      << "  I(Y;P|X) = " << fixed(t2.cmi) << " bits\n"
      << "  Bayes error from X   " << fixed(hx.bayes_error) << " <= bound " << fixed(hx.bound) << '\n'
      << "  Bayes error from X,P " << fixed(hxp.bayes_error) << " <= bound " << fixed(hxp.bound) << "\n\n";
}

}  // namespace

int command_entropy_demo(const std::optional<fs::path>& table, std::ostream& log) {
  if (table) {
    std::ifstream in(*table);
    if (!in) throw Error("cannot open " + table->string());
    const auto j = info::parse_joint(in);
    if (j.variables() != 3) throw Error(table->string() + ": expected a table over (X, P, Y)");
    report_joint(table->string(), j, log);
    return 0;
  }
  // Y depends on the instance content X alone: position adds nothing.
  report_joint("position carries no label information",
               info::DiscreteJoint({2, 2, 2}, {0.2, 0.05, 0.2, 0.05, 0.05, 0.2, 0.05, 0.2}), log);
  // Y = X xor P: content alone is uninformative, content plus position decides Y.
  report_joint("label determined by content and position together",
               info::DiscreteJoint({2, 2, 2}, {0.25, 0, 0, 0.25, 0, 0.25, 0.25, 0}), log);
  report_joint("position partially informative",
               info::DiscreteJoint({2, 2, 2}, {0.2, 0.05, 0.1, 0.15, 0.05, 0.2, 0.15, 0.1}), log);
  return 0;
}

int command_cam(const fs::path& dir, const fs::path& bag_path, std::optional<std::size_t> class_index,
                const fs::path& out, std::ostream& log) {
  ResolvedConfig cfg;
  const Model model = load_run(dir, cfg);
  const auto bag = read_bag(bag_path);
  if (bag.d != cfg.model.input_dim)
    throw Error(bag_path.string() + ": bag has " + std::to_string(bag.d) + " features, model expects " +
                std::to_string(cfg.model.input_dim));
  const std::size_t cls = class_index.value_or(0);
  ad::NoGradGuard guard;
  const auto features = model.forward_backbone(bag.tensor());
  const auto result = cam(features, model.head().w, cls, bag.n);
  fs::create_directories(out);
  write_cam_jsonl(result, bag.coords, out / "cam.jsonl");
  log << "wrote " << (out / "cam.jsonl").string() << '\n';
  if (!bag.coords.empty()) {
    write_cam_pgm(result, bag.coords, out / "cam.pgm");
    log << "wrote " << (out / "cam.pgm").string() << '\n';
  }
  const auto& labels = bag.instance_labels;
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (!labels.empty() && positives > 0 && positives < labels.size())
    log << "localization AUC " << fixed(cam_localization_auc(result, labels)) << '\n';
  return 0;
}

}  // namespace jigsaw
