#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "meshmotion/binary_io.hpp"
#include "meshmotion/eval.hpp"
#include "meshmotion/primitives.hpp"

namespace fs = std::filesystem;
using namespace meshmotion;

namespace {

struct KeySpec {
  const char* name;
  const char* fallback;
  const char* help;
};

const std::vector<KeySpec> kKeys = {
    {"template", "icosphere:4", "template mesh (.obj/.ply) or icosphere:<subdivisions>"},
    {"cache", "work/topology.bin", "hierarchy + spiral cache file"},
    {"dataset", "work/data", "dataset root directory"},
    {"checkpoint", "work/spiral.ckpt", "spiral model checkpoint"},
    {"baseline_checkpoint", "work/baseline.ckpt", "blendshape baseline checkpoint"},
    {"classifier_checkpoint", "work/classifier.ckpt", "classifier checkpoint"},
    {"output", "work/out", "directory for generated frames and reports"},
    {"factors", "5,5,5", "decimation factors, finest level first"},
    {"spiral_rings", "1", "spiral ring count k"},
    {"spiral_length", "0", "spiral length L (0: largest disk)"},
    {"spiral_reference", "-1", "spiral reference vertex (-1: largest z)"},
    {"latent", "64", "latent size / number of PCA components of the baseline"},
    {"precision", "float", "training precision: float or double"},
    {"epochs", "100", "training epochs"},
    {"learning_rate", "0.001", "Adam learning rate"},
    {"lr_decay", "0.99", "learning rate factor per epoch"},
    {"weight_decay", "5e-05", "Adam weight decay"},
    {"seed", "0", "random seed"},
    {"subjects", "25", "synthetic subjects"},
    {"test_subjects", "5", "held-out subjects (last ids) when no split file exists"},
    {"expressions", "all", "synthetic expressions: all or a comma list"},
    {"synth_frames", "100", "synthetic frames before subsampling"},
    {"stride", "5", "temporal subsampling stride"},
    {"noise", "0.01", "synthetic per-coordinate noise (mm)"},
    {"intensity_min", "0.4", "lower bound of the per-sequence intensity"},
    {"intensity_max", "1.6", "upper bound of the per-sequence intensity"},
    {"fixed_timing", "false", "same onset/apex/offset for every synthetic sequence"},
    {"model", "spiral", "model used by generate: spiral or baseline"},
    {"neutral", "", "neutral mesh for generate (empty: template)"},
    {"expression", "happy", "expression to generate"},
    {"frames", "100", "frames to generate"},
    {"onset", "10", "onset frame"},
    {"apex_start", "30", "first apex frame"},
    {"apex_end", "80", "last apex frame"},
    {"offset_end", "95", "end of the offset phase"},
    {"scale", "1", "extremeness scale in (0, 1]"},
    {"interp_from", "happy", "expression at alpha = 0"},
    {"interp_to", "surprise", "expression at alpha = 1"},
    {"steps", "10", "interpolation steps"},
    {"clf_components", "64", "classifier PCA components"},
    {"clf_frames", "20", "classifier input frames"},
    {"clf_hidden", "256,64", "classifier hidden widths"},
    {"clf_epochs", "13", "classifier epochs"},
    {"clf_learning_rate", "0.001", "classifier learning rate"},
    {"clf_weight_decay", "0.005", "classifier weight decay"},
};

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string dashed(std::string s) {
  for (char& c : s) {
    if (c == '_') c = '-';
  }
  return s;
}

class RunConfig {
 public:
  RunConfig() {
    for (const KeySpec& k : kKeys) values_[k.name] = k.fallback;
  }

  void set(const std::string& key, const std::string& value, const std::string& where) {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(where + ": unknown config key '" + key + "'");
    it->second = value;
  }

  void load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config file " + path.string());
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = path.string() + ":" + std::to_string(n);
      if (eq == std::string::npos) throw Error(where + ": expected 'key = value'");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
    }
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }
  fs::path path(const std::string& key) const { return fs::path(str(key)); }

  long long integer(const std::string& key) const {
    const std::string& s = str(key);
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad(key, "an integer");
    return v;
  }

  double real(const std::string& key) const {
    const std::string& s = str(key);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) bad(key, "a number");
    return v;
  }

  bool flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    bad(key, "true or false");
  }

  std::vector<long long> integers(const std::string& key) const {
    std::vector<long long> out;
    std::stringstream ss(str(key));
    for (std::string tok; std::getline(ss, tok, ',');) {
      tok = trim(tok);
      long long v = 0;
      const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size()) bad(key, "a comma-separated integer list");
      out.push_back(v);
    }
    return out;
  }

  std::uint64_t seed() const {
    const long long s = integer("seed");
    if (s < 0) bad("seed", "a non-negative integer");
    return static_cast<std::uint64_t>(s);
  }

  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  std::string hash() const { return hex64(fnv1a64(canonical())); }

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& expected) const {
    throw Error("config key '" + key + "': expected " + expected + ", got '" + str(key) + "'");
  }

  std::map<std::string, std::string> values_;
};

int positive(const RunConfig& cfg, const std::string& key) {
  const long long v = cfg.integer(key);
  if (v <= 0 || v > 1'000'000'000) throw Error("config key '" + key + "' must be a positive integer");
  return static_cast<int>(v);
}

std::vector<int> factor_list(const RunConfig& cfg) {
  std::vector<int> out;
  for (long long f : cfg.integers("factors")) {
    if (f < 1 || f > 1000) throw Error("config key 'factors': factors must lie in [1, 1000]");
    out.push_back(static_cast<int>(f));
  }
  if (out.empty()) throw Error("config key 'factors' is empty");
  return out;
}

Mesh template_mesh(const RunConfig& cfg) {
  const std::string& t = cfg.str("template");
  const std::string prefix = "icosphere:";
  if (t.rfind(prefix, 0) == 0) {
    int level = 0;
    const char* b = t.data() + prefix.size();
    const auto [p, ec] = std::from_chars(b, t.data() + t.size(), level);
    if (ec != std::errc() || p != t.data() + t.size() || level < 0 || level > 7) {
      throw Error("config key 'template': icosphere level must be an integer in [0, 7]");
    }
    return make_icosphere(level, 80.0);
  }
  return load_mesh(t);
}

TopologyCache require_cache(const RunConfig& cfg) {
  const fs::path p = cfg.path("cache");
  if (!fs::exists(p)) throw Error("missing topology cache " + p.string() + " (run 'meshmotion precompute' first)");
  return load_cache(p);
}

std::vector<std::string> provenance(const RunConfig& cfg) { return {"config " + cfg.hash()}; }

std::ofstream open_text(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Split load_split(const RunConfig& cfg) {
  const fs::path root = cfg.path("dataset");
  std::vector<ExpressionSequence> seqs = load_dataset(root);
  const fs::path split_file = root / "split.txt";
  std::set<std::string> test = fs::exists(split_file)
                                   ? read_split(split_file)
                                   : split_last(seqs, static_cast<std::size_t>(cfg.integer("test_subjects")));
  Split s = apply_split(std::move(seqs), test);
  std::cout << "dataset: " << s.train.size() << " training and " << s.test.size() << " held-out sequences\n";
  if (s.train.empty()) throw Error("dataset " + root.string() + " has no training sequences after the split");
  return s;
}

// Removes frame_*.obj files left by an earlier run.
void clear_frames(const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".obj") fs::remove(e.path());
  }
}

void write_frames(const fs::path& dir, const Mesh& neutral, const std::vector<Frame>& frames,
                  const std::vector<std::string>& header) {
  clear_frames(dir);
  Mesh m = neutral;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    m.vertices = frames[t];
    save_mesh(m, dir / frame_filename(static_cast<int>(t)), header);
  }
}

MotionLabel label_from(const RunConfig& cfg, Expression e) {
  MotionLabel l;
  l.expression = e;
  l.frames = positive(cfg, "frames");
  l.onset = static_cast<int>(cfg.integer("onset"));
  l.apex_start = static_cast<int>(cfg.integer("apex_start"));
  l.apex_end = static_cast<int>(cfg.integer("apex_end"));
  l.offset_end = static_cast<int>(cfg.integer("offset_end"));
  l.scale = cfg.real("scale");
  l.validate();
  return l;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.epochs = static_cast<int>(cfg.integer("epochs"));
  if (tc.epochs < 0) throw Error("config key 'epochs' must be >= 0");
  tc.learning_rate = cfg.real("learning_rate");
  tc.lr_decay = cfg.real("lr_decay");
  tc.weight_decay = cfg.real("weight_decay");
  tc.seed = cfg.seed();
  return tc;
}

bool double_precision(const RunConfig& cfg) {
  const std::string& p = cfg.str("precision");
  if (p != "float" && p != "double") throw Error("config key 'precision': expected float or double, got '" + p + "'");
  return p == "double";
}

using AnyGenerator = std::variant<Generator<float>, Generator<double>>;

void save_model(const AnyGenerator& gen, const RunConfig& cfg, const fs::path& path,
                const std::map<std::string, std::string>& extra) {
  Checkpoint c = std::visit([](const auto& g) { return to_checkpoint(g); }, gen);
  c.metadata["config_hash"] = cfg.hash();
  for (const auto& [k, v] : extra) c.metadata[k] = v;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(c, path);
}

template <class T>
TrainHistory fit(Generator<T>& gen, const Split& split, const RunConfig& cfg) {
  const TrainConfig tc = train_config(cfg);
  return train(gen, std::span<const ExpressionSequence>(split.train), tc, [](int epoch, double lr, double loss) {
    std::cout << "epoch " << epoch << " lr " << fmt(lr) << " loss " << fmt(loss) << "\n" << std::flush;
  });
}

void write_history(const TrainHistory& h, const RunConfig& cfg, const fs::path& checkpoint) {
  const fs::path p = checkpoint.string() + ".loss.txt";
  std::ofstream out = open_text(p);
  out << "# config " << cfg.hash() << "\n# epoch learning_rate loss\n";
  for (std::size_t e = 0; e < h.loss.size(); ++e) out << e + 1 << " " << fmt(h.learning_rate[e]) << " " << fmt(h.loss[e]) << "\n";
  out << "# rejected_steps " << h.rejected_steps << "\n";
  std::cout << "wrote " << p.string() << "\n";
}

AnyGenerator load_model(const fs::path& path, const TopologyCache* cache) {
  if (!fs::exists(path)) throw Error("missing checkpoint " + path.string());
  const Checkpoint c = load_checkpoint(path);
  if (!c.has_meta("decoder")) throw Error(path.string() + " is not a generator checkpoint");
  if (c.meta("decoder") == "spiral") {
    if (!cache) throw Error(path.string() + " needs a topology cache");
    const std::string want = cache_hash(*cache);
    const std::string got = c.has_meta("hierarchy_hash") ? c.meta("hierarchy_hash") : "none";
    if (got != want) {
      throw Error("model " + path.string() + " was trained on hierarchy " + got + " but the cache has hierarchy " + want);
    }
  } else if (cache && c.has_meta("num_vertices") &&
             c.meta("num_vertices") != std::to_string(cache->finest().num_vertices())) {
    throw Error("model " + path.string() + " has " + c.meta("num_vertices") + " vertices but the template has " +
                std::to_string(cache->finest().num_vertices()));
  }
  if (c.precision == Precision::Double) return generator_from_checkpoint<double>(c, cache);
  return generator_from_checkpoint<float>(c, cache);
}

std::vector<Frame> run(AnyGenerator& gen, const Mesh& neutral, const MotionLabel& label) {
  return std::visit([&](auto& g) { return generate(g, neutral, label); }, gen);
}

std::string file_hash(const fs::path& p) { return hex64(fnv1a64(read_binary_file(p))); }

// ---- commands ----

void cmd_precompute(const RunConfig& cfg) {
  const Mesh mesh = template_mesh(cfg);
  SpiralConfig sc;
  sc.rings = static_cast<int>(cfg.integer("spiral_rings"));
  sc.length = static_cast<Index>(cfg.integer("spiral_length"));
  sc.reference_vertex = static_cast<Index>(cfg.integer("spiral_reference"));
  TopologyCache cache = build_topology_cache(mesh, factor_list(cfg), sc);
  cache.metadata["config_hash"] = cfg.hash();
  cache.metadata["template"] = cfg.str("template");
  const fs::path p = cfg.path("cache");
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  save_cache(cache, p);
  std::cout << "levels:";
  for (const Mesh& m : cache.hierarchy.levels) std::cout << " " << m.num_vertices();
  std::cout << "\nspiral lengths:";
  for (const SpiralTable& t : cache.spirals) std::cout << " " << t.length;
  std::cout << "\nhierarchy " << cache_hash(cache) << "\nwrote " << p.string() << "\n";
}

void cmd_synth(const RunConfig& cfg) {
  SynthConfig sc;
  sc.subjects = positive(cfg, "subjects");
  sc.frames = positive(cfg, "synth_frames");
  sc.stride = positive(cfg, "stride");
  sc.seed = cfg.seed();
  sc.noise = cfg.real("noise");
  sc.intensity_min = cfg.real("intensity_min");
  sc.intensity_max = cfg.real("intensity_max");
  sc.fixed_timing = cfg.flag("fixed_timing");
  if (cfg.str("expressions") != "all") {
    sc.expressions.clear();
    std::stringstream ss(cfg.str("expressions"));
    for (std::string tok; std::getline(ss, tok, ',');) sc.expressions.push_back(parse_expression(trim(tok)));
  }
  const long long n_test = cfg.integer("test_subjects");
  if (n_test < 0 || n_test >= sc.subjects) throw Error("config key 'test_subjects' must lie in [0, subjects)");

  const fs::path root = cfg.path("dataset");
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!fs::exists(root / "manifest.txt")) {
      throw Error("refusing to overwrite " + root.string() + ": it is not empty and was not written by synth-data");
    }
    fs::remove_all(root);
  }
  fs::create_directories(root);
  const SynthDataset d = synth_dataset(template_mesh(cfg), sc);
  save_dataset(d.sequences, root, provenance(cfg));
  write_split(split_last(d.sequences, static_cast<std::size_t>(n_test)), root / "split.txt", provenance(cfg));
  std::ofstream m = open_text(root / "manifest.txt");
  m << "# config " << cfg.hash() << "\nsequences " << d.sequences.size() << "\nsubjects " << sc.subjects << "\n";
  for (int e = 0; e < kNumExpressions; ++e) {
    m << "stats " << expression_name(static_cast<Expression>(e)) << " " << fmt(d.stats.mean[static_cast<std::size_t>(e)])
      << " " << fmt(d.stats.stddev[static_cast<std::size_t>(e)]) << "\n";
  }
  std::cout << "wrote " << d.sequences.size() << " sequences to " << root.string() << "\n";
}

void cmd_train(const RunConfig& cfg) {
  const TopologyCache cache = require_cache(cfg);
  const Split split = load_split(cfg);
  const auto latent = static_cast<std::size_t>(positive(cfg, "latent"));
  const double os = displacement_rms(split.train);
  AnyGenerator gen = double_precision(cfg) ? AnyGenerator(make_spiral_generator<double>(cache, cfg.seed(), latent, os))
                                           : AnyGenerator(make_spiral_generator<float>(cache, cfg.seed(), latent, os));
  const TrainHistory h = std::visit([&](auto& g) { return fit(g, split, cfg); }, gen);
  const fs::path p = cfg.path("checkpoint");
  save_model(gen, cfg, p, {{"hierarchy_hash", cache_hash(cache)}});
  write_history(h, cfg, p);
  std::cout << "wrote " << p.string() << "\n";
}

void cmd_baseline(const RunConfig& cfg) {
  const Split split = load_split(cfg);
  const PcaBasis basis = fit_pca(deformation_rows(split.train), positive(cfg, "latent"));
  AnyGenerator gen = double_precision(cfg) ? AnyGenerator(make_blendshape_generator<double>(basis, cfg.seed()))
                                           : AnyGenerator(make_blendshape_generator<float>(basis, cfg.seed()));
  const TrainHistory h = std::visit([&](auto& g) { return fit(g, split, cfg); }, gen);
  const fs::path p = cfg.path("baseline_checkpoint");
  save_model(gen, cfg, p, {});
  write_history(h, cfg, p);
  std::cout << "wrote " << p.string() << "\n";
}

void cmd_generate(const RunConfig& cfg) {
  const TopologyCache cache = require_cache(cfg);
  const std::string& which = cfg.str("model");
  if (which != "spiral" && which != "baseline") throw Error("config key 'model': expected spiral or baseline");
  const fs::path ckpt = cfg.path(which == "spiral" ? "checkpoint" : "baseline_checkpoint");
  AnyGenerator gen = load_model(ckpt, &cache);
  const Mesh neutral = cfg.str("neutral").empty() ? cache.finest() : load_mesh(cfg.path("neutral"));
  if (!same_topology(neutral, cache.finest())) throw Error("neutral mesh does not share the template topology");
  const MotionLabel label = label_from(cfg, parse_expression(cfg.str("expression")));
  const std::vector<Frame> frames = run(gen, neutral, label);
  const fs::path dir = cfg.path("output") / "generate";
  auto header = provenance(cfg);
  header.push_back("model " + file_hash(ckpt));
  write_frames(dir, neutral, frames, header);
  std::cout << "wrote " << frames.size() << " frames to " << dir.string() << "\n";
}

void cmd_evaluate(const RunConfig& cfg) {
  const TopologyCache cache = require_cache(cfg);
  const fs::path spiral_path = cfg.path("checkpoint"), baseline_path = cfg.path("baseline_checkpoint");
  std::vector<std::pair<std::string, AnyGenerator>> models;
  models.emplace_back("proposed", load_model(spiral_path, &cache));
  models.emplace_back("baseline", load_model(baseline_path, &cache));
  const Split split = load_split(cfg);
  if (split.test.empty()) throw Error("dataset has no held-out sequences to evaluate");
  EvalReport report;
  report.header = {"config " + cfg.hash(), "hierarchy " + cache_hash(cache), "proposed " + file_hash(spiral_path),
                   "baseline " + file_hash(baseline_path), "held-out sequences " + std::to_string(split.test.size())};
  for (auto& [name, gen] : models) {
    std::vector<std::vector<Frame>> generated;
    for (const auto& s : split.test) {
      if (!same_topology(s.neutral, cache.finest())) throw Error("dataset mesh topology does not match the cache");
      generated.push_back(run(gen, s.neutral, s.label));
    }
    report.models.push_back(evaluate_generations(name, split.test, generated));
  }
  const fs::path dir = cfg.path("output") / "evaluate";
  write_report(report, dir);
  std::cout << format_report(report) << "wrote " << dir.string() << "\n";
}

void cmd_classify(const RunConfig& cfg) {
  const Split split = load_split(cfg);
  ClassifierConfig cc;
  cc.components = positive(cfg, "clf_components");
  cc.frames = positive(cfg, "clf_frames");
  cc.hidden.clear();
  for (long long h : cfg.integers("clf_hidden")) {
    if (h <= 0) throw Error("config key 'clf_hidden': widths must be positive");
    cc.hidden.push_back(static_cast<std::size_t>(h));
  }
  cc.epochs = static_cast<int>(cfg.integer("clf_epochs"));
  cc.learning_rate = cfg.real("clf_learning_rate");
  cc.weight_decay = cfg.real("clf_weight_decay");
  cc.seed = cfg.seed();
  Classifier clf = train_classifier(std::span<const ExpressionSequence>(split.train), cc);
  Checkpoint ck = classifier_to_checkpoint(clf);
  ck.metadata["config_hash"] = cfg.hash();
  const fs::path ckpt = cfg.path("classifier_checkpoint");
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_checkpoint(ck, ckpt);
  std::cout << "wrote " << ckpt.string() << "\n";
  if (split.test.empty()) return;

  // Ground truth plus every generator whose checkpoint exists.
  std::vector<std::pair<std::string, std::vector<std::vector<Frame>>>> sources;
  std::vector<std::vector<Frame>> gt;
  for (const auto& s : split.test) gt.push_back(s.frames);
  sources.emplace_back("ground_truth", std::move(gt));
  std::optional<TopologyCache> cache;
  if (fs::exists(cfg.path("cache"))) cache = load_cache(cfg.path("cache"));
  for (const auto& [name, key] : {std::pair{"proposed", "checkpoint"}, std::pair{"baseline", "baseline_checkpoint"}}) {
    if (!fs::exists(cfg.path(key))) continue;
    AnyGenerator gen = load_model(cfg.path(key), cache ? &*cache : nullptr);
    std::vector<std::vector<Frame>> out;
    for (const auto& s : split.test) out.push_back(run(gen, s.neutral, s.label));
    sources.emplace_back(name, std::move(out));
  }
  EvalReport report;
  report.header = {"config " + cfg.hash(), "classifier " + file_hash(ckpt)};
  std::vector<int> truth;
  for (const auto& s : split.test) truth.push_back(static_cast<int>(s.label.expression));
  const fs::path dir = cfg.path("output") / "classify";
  std::ofstream pred = open_text(dir / "predictions.txt");
  pred << "# config " << cfg.hash() << "\n# source subject truth predicted\n";
  for (const auto& [name, seqs] : sources) {
    std::vector<int> p;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      p.push_back(classify(clf, split.test[i].neutral, seqs[i]));
      pred << name << " " << split.test[i].subject << " " << expression_name(split.test[i].label.expression) << " "
           << expression_name(static_cast<Expression>(p.back())) << "\n";
    }
    report.classification.push_back({name, classification_metrics(truth, p)});
  }
  write_report(report, dir);
  std::cout << format_report(report) << "wrote " << dir.string() << "\n";
}

void cmd_interpolate(const RunConfig& cfg) {
  const TopologyCache cache = require_cache(cfg);
  const fs::path ckpt = cfg.path("checkpoint");
  AnyGenerator gen = load_model(ckpt, &cache);
  const Mesh neutral = cfg.str("neutral").empty() ? cache.finest() : load_mesh(cfg.path("neutral"));
  if (!same_topology(neutral, cache.finest())) throw Error("neutral mesh does not share the template topology");
  const MotionLabel a = label_from(cfg, parse_expression(cfg.str("interp_from")));
  const MotionLabel b = label_from(cfg, parse_expression(cfg.str("interp_to")));
  const int steps = positive(cfg, "steps");
  const std::size_t apex = static_cast<std::size_t>((a.apex_start + a.apex_end) / 2);
  const std::vector<Frame> frames = std::visit(
      [&](auto& g) {
        const auto za = encode_latents(g, a), zb = encode_latents(g, b);
        auto ra = decltype(za)::matrix(1, g.latent);
        auto rb = ra;
        for (std::size_t j = 0; j < g.latent; ++j) {
          ra[j] = za(apex, j);
          rb[j] = zb(apex, j);
        }
        return interpolate_latents(g, neutral, ra, rb, steps);
      },
      gen);
  const fs::path dir = cfg.path("output") / "interpolate";
  auto header = provenance(cfg);
  header.push_back("model " + file_hash(ckpt));
  write_frames(dir, neutral, frames, header);
  std::ofstream alphas = open_text(dir / "alphas.txt");
  alphas << "# config " << cfg.hash() << "\n";
  for (int i = 0; i < steps; ++i) alphas << frame_filename(i) << " " << fmt(static_cast<double>(i) / (steps - 1)) << "\n";
  std::cout << "wrote " << frames.size() << " frames to " << dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expression-driven 4D face mesh synthesis with spiral mesh convolutions", "meshmotion"};
  app.require_subcommand(1);
  std::string config_file;
  app.add_option("-c,--config", config_file, "flat 'key = value' config file; flags override it");
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_options;
  for (const KeySpec& k : kKeys) {
    flag_options[k.name] = app.add_option("--" + dashed(k.name), flag_values[k.name],
                                          std::string(k.help) + " [" + k.fallback + "]");
  }

  using Command = void (*)(const RunConfig&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands = {
      {"precompute", "build the sampling hierarchy and spiral tables", cmd_precompute},
      {"synth-data", "write a synthetic expression dataset", cmd_synth},
      {"train", "train the spiral generator", cmd_train},
      {"generate", "generate a frame sequence from an expression signal", cmd_generate},
      {"evaluate", "per-vertex errors and curves of both models on held-out subjects", cmd_evaluate},
      {"baseline", "fit and train the PCA blendshape baseline", cmd_baseline},
      {"classify", "train the expression classifier and score real and generated sequences", cmd_classify},
      {"interpolate", "decode a latent interpolation between two expressions", cmd_interpolate},
  };
  std::map<CLI::App*, Command> handlers;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    sub->footer("Every option of `meshmotion --help` is accepted here as well.");
    handlers[sub] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& [key, opt] : flag_options) {
      if (opt->count() > 0) cfg.set(key, flag_values[key], "--" + dashed(key));
    }
    CLI::App* sub = app.get_subcommands().front();
    std::cout << "command " << sub->get_name() << "\nseed " << cfg.seed() << "\nconfig_hash " << cfg.hash() << "\n";
    std::istringstream lines(cfg.canonical());
    for (std::string line; std::getline(lines, line);) std::cout << "  " << line << "\n";
    handlers.at(sub)(cfg);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
