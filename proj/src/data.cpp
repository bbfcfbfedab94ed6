// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/data.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "binary_io.hpp"

namespace jigsaw {


std::uint32_t Bag::class_label() const {
  if (const auto* c = std::get_if<std::uint32_t>(&label)) return *c;
  throw Error("bag: survival bag has no class label");
}

const SurvivalRecord& Bag::survival() const {
  if (const auto* s = std::get_if<SurvivalRecord>(&label)) return *s;
  throw Error("bag: classification bag has no survival record");
}

SurvivalRecord& Bag::survival() {
  if (auto* s = std::get_if<SurvivalRecord>(&label)) return *s;
  throw Error("bag: classification bag has no survival record");
}

void Bag::validate() const {
  if (n == 0 || d == 0) throw Error("bag: needs at least one instance and one feature");
  if (features.size() != n * d)
    throw Error("bag: " + std::to_string(features.size()) + " feature values for " + std::to_string(n) +
                "x" + std::to_string(d));
  if (!coords.empty()) {
    if (coords.size() != n) throw Error("bag: coordinate count differs from instance count");
    std::set<std::array<std::uint32_t, 2>> seen(coords.begin(), coords.end());
    if (seen.size() != n) throw Error("bag: duplicate grid coordinates");
  }
  if (!instance_labels.empty()) {
    if (instance_labels.size() != n) throw Error("bag: instance label count differs from instance count");
    if (!is_survival()) {
      const bool any = std::any_of(instance_labels.begin(), instance_labels.end(), [](auto v) { return v != 0; });
      if (any != (class_label() == 1))
        throw Error("bag: label " + std::to_string(class_label()) +
                    " contradicts the instance labels (positive iff any instance is positive)");
    }
  }
  if (is_survival()) {
    const auto& s = survival();
    if (!(s.time >= 0.0)) throw Error("bag: survival time must be nonnegative");
    if (s.event != 0 && s.event != 1) throw Error("bag: event flag must be 0 or 1");
  }
}

ad::Tensor Bag::tensor() const {
  return ad::Tensor::constant({n, d}, std::vector<double>(features.begin(), features.end()));
}

bool operator==(const Bag& a, const Bag& b) {
  if (a.n != b.n || a.d != b.d || a.coords != b.coords || a.instance_labels != b.instance_labels) return false;
  if (a.is_survival() != b.is_survival()) return false;
  if (a.is_survival()) {
    if (std::bit_cast<std::uint64_t>(a.survival().time) != std::bit_cast<std::uint64_t>(b.survival().time) ||
        a.survival().event != b.survival().event)
      return false;
  } else if (a.class_label() != b.class_label()) {
    return false;
  }
  // Bitwise comparison so that round trips are checked exactly.
  return a.features.size() == b.features.size() &&
         std::memcmp(a.features.data(), b.features.data(), a.features.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------- generator

void SynthConfig::validate() const {
  if (grid == 0) throw Error("synth: grid side must be at least 1");
  if (dim == 0) throw Error("synth: feature dimension must be at least 1");
  if (!(blob_min >= 1 && blob_min <= blob_max && blob_max <= grid))
    throw Error("synth: blob sides need 1 <= min <= max <= grid");
  if (!(delta >= 0.0)) throw Error("synth: delta must be nonnegative");
  if (!(noise > 0.0)) throw Error("synth: noise scale must be positive");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
    throw Error("synth: positive fraction must lie in [0, 1]");
  if (!(hazard_scale >= 0.0)) throw Error("synth: hazard scale must be nonnegative");
  if (!(censoring_rate >= 0.0 && censoring_rate <= 1.0)) throw Error("synth: censoring rate must lie in [0, 1]");
}

namespace {

Bag grid_bag(const SynthConfig& cfg, Pcg32& rng, bool positive) {
  const std::size_t G = cfg.grid;
  Bag bag;
  bag.n = G * G;
  bag.d = cfg.dim;
  bag.coords.reserve(bag.n);
  for (std::size_t r = 0; r < G; ++r)
    for (std::size_t c = 0; c < G; ++c)
      bag.coords.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)});
  bag.instance_labels.assign(bag.n, 0);
  if (positive) {
    std::uniform_int_distribution<std::size_t> side(cfg.blob_min, cfg.blob_max);
    const std::size_t h = side(rng), w = side(rng);
    const std::size_t top = std::uniform_int_distribution<std::size_t>(0, G - h)(rng);
    const std::size_t left = std::uniform_int_distribution<std::size_t>(0, G - w)(rng);
    for (std::size_t r = top; r < top + h; ++r)
      for (std::size_t c = left; c < left + w; ++c) bag.instance_labels[r * G + c] = 1;
  }
  std::normal_distribution<double> noise(0.0, cfg.noise);
  bag.features.resize(bag.n * bag.d);
  for (std::size_t i = 0; i < bag.n; ++i)
    for (std::size_t j = 0; j < bag.d; ++j) {
      double v = noise(rng);
      if (j == 0 && bag.instance_labels[i]) v += cfg.delta;
      bag.features[i * bag.d + j] = static_cast<float>(v);
    }
  return bag;
}

}  // namespace

Bag gen_classification_bag(const SynthConfig& cfg, Pcg32& rng) {
  cfg.validate();
  const bool positive = rng.uniform() < cfg.positive_fraction;
  Bag bag = grid_bag(cfg, rng, positive);
  bag.label = std::uint32_t{positive ? 1u : 0u};
  return bag;
}

Bag gen_survival_bag(const SynthConfig& cfg, Pcg32& rng) {
  cfg.validate();
  const bool positive = rng.uniform() < cfg.positive_fraction;
  Bag bag = grid_bag(cfg, rng, positive);
  const double rate = 1.0 + cfg.hazard_scale * positive_fraction(bag);
  SurvivalRecord rec;
  rec.time = std::exponential_distribution<double>(rate)(rng);
  rec.event = 1;
  if (rng.uniform() < cfg.censoring_rate) {
    rec.time *= rng.uniform();
    rec.event = 0;
  }
  bag.label = rec;
  return bag;
}

Bag synth_bag(const SynthConfig& cfg, bool survival, std::uint64_t index) {
  Pcg32 rng = derive_stream(cfg.seed, index, survival ? 2 : 1);
  return survival ? gen_survival_bag(cfg, rng) : gen_classification_bag(cfg, rng);
}

std::vector<Bag> synth_dataset(const SynthConfig& cfg, bool survival, std::uint64_t first, std::size_t count) {
  std::vector<Bag> bags;
  bags.reserve(count);
  for (std::size_t i = 0; i < count; ++i) bags.push_back(synth_bag(cfg, survival, first + i));
  return bags;
}

double positive_fraction(const Bag& bag) {
  if (bag.instance_labels.empty()) return 0.0;
  const auto pos = std::count_if(bag.instance_labels.begin(), bag.instance_labels.end(), [](auto v) { return v != 0; });
  return static_cast<double>(pos) / static_cast<double>(bag.n);
}

// ---------------------------------------------------------------- MILB

namespace {

constexpr std::uint32_t kFlagCoords = 1u, kFlagInstanceLabels = 2u, kFlagSurvival = 4u;
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_bag(const Bag& bag) {
  bag.validate();
  io::Writer w;
  w.bytes("MILB", 4);
  w.le(kVersion);
  std::uint32_t flags = 0;
  if (!bag.coords.empty()) flags |= kFlagCoords;
  if (!bag.instance_labels.empty()) flags |= kFlagInstanceLabels;
  if (bag.is_survival()) flags |= kFlagSurvival;
  w.le(flags);
  w.le(static_cast<std::uint32_t>(bag.n));
  w.le(static_cast<std::uint32_t>(bag.d));
  for (float v : bag.features) w.le(v);
  for (const auto& c : bag.coords) {
    w.le(c[0]);
    w.le(c[1]);
  }
  for (auto v : bag.instance_labels) w.le(v);
  if (bag.is_survival()) {
    w.le(bag.survival().time);
    w.le(static_cast<std::uint8_t>(bag.survival().event));
  } else {
    w.le(bag.class_label());
  }
  return std::move(w.out);
}

Bag decode_bag(const std::vector<std::uint8_t>& bytes) {
  io::Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(r.here(), "MILB", 4) != 0) throw Error("bad magic at byte offset 0: expected \"MILB\"");
  r.skip(4);
  const auto version_at = r.pos();
  const auto version = r.le<std::uint32_t>("version");
  if (version != kVersion)
    throw Error("unsupported version " + std::to_string(version) + " at byte offset " + std::to_string(version_at));
  const auto flags_at = r.pos();
  const auto flags = r.le<std::uint32_t>("flags");
  if (flags & ~(kFlagCoords | kFlagInstanceLabels | kFlagSurvival))
    throw Error("unknown flag bits at byte offset " + std::to_string(flags_at));
  Bag bag;
  const auto n_at = r.pos();
  bag.n = r.le<std::uint32_t>("instance count");
  bag.d = r.le<std::uint32_t>("feature dimension");
  if (bag.n == 0 || bag.d == 0)
    throw Error("empty bag dimensions at byte offset " + std::to_string(n_at));
  r.need(bag.n * bag.d * 4, "features");
  bag.features.resize(bag.n * bag.d);
  for (auto& v : bag.features) v = r.le<float>("features");
  if (flags & kFlagCoords) {
    r.need(bag.n * 8, "coordinates");
    bag.coords.resize(bag.n);
    for (auto& c : bag.coords) {
      c[0] = r.le<std::uint32_t>("coordinates");
      c[1] = r.le<std::uint32_t>("coordinates");
    }
  }
  if (flags & kFlagInstanceLabels) {
    r.need(bag.n, "instance labels");
    bag.instance_labels.resize(bag.n);
    for (auto& v : bag.instance_labels) v = r.le<std::uint8_t>("instance labels");
  }
  if (flags & kFlagSurvival) {
    SurvivalRecord rec;
    rec.time = r.le<double>("survival time");
    rec.event = r.le<std::uint8_t>("survival event");
    bag.label = rec;
  } else {
    bag.label = r.le<std::uint32_t>("label");
  }
  if (r.remaining() != 0)
    throw Error(std::to_string(r.remaining()) + " trailing bytes at byte offset " + std::to_string(r.pos()));
  try {
    bag.validate();
  } catch (const Error& e) {
    throw Error(std::string("invalid bag contents: ") + e.what());
  }
  return bag;
}

void write_bag(const Bag& bag, const std::filesystem::path& path) { io::spill(path, encode_bag(bag)); }

Bag read_bag(const std::filesystem::path& path) {
  try {
    return decode_bag(io::slurp(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- manifests

namespace {

bool valid_split(const std::string& s) {
  if (s == "train" || s == "test") return true;
  if (s.rfind("fold-", 0) != 0 || s.size() == 5) return false;
  return std::all_of(s.begin() + 5, s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  Manifest m;
  std::set<std::filesystem::path> seen;
  std::vector<std::string> missing;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string file, split, extra;
    if (!(fields >> file)) continue;
    if (!(fields >> split) || (fields >> extra) || !valid_split(split))
      throw Error(path.string() + ":" + std::to_string(lineno) +
                  ": expected \"<bag path> <train|test|fold-k>\", got \"" + line + "\"");
    std::filesystem::path p = file;
    if (p.is_relative()) p = path.parent_path() / p;
    p = p.lexically_normal();
    if (!seen.insert(p).second) {
      m.warnings.push_back("line " + std::to_string(lineno) + ": duplicate entry " + p.string() + " ignored");
      continue;
    }
    if (!std::filesystem::exists(p)) missing.push_back(p.string());
    m.splits[split].push_back(p);
  }
  if (!missing.empty()) {
    std::string msg = "manifest " + path.string() + " references " + std::to_string(missing.size()) +
                      " missing file(s):";
    for (const auto& f : missing) msg += "\n  " + f;
    throw Error(msg);
  }
  if (seen.empty()) m.warnings.push_back("manifest " + path.string() + " lists no bags");
  return m;
}

std::map<std::string, std::vector<Bag>> load_dataset(const Manifest& manifest) {
  std::map<std::string, std::vector<Bag>> out;
  for (const auto& [split, paths] : manifest.splits)
    for (const auto& p : paths) out[split].push_back(read_bag(p));
  return out;
}

}  // namespace jigsaw
