#include "meshmotion/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

namespace meshmotion {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kNumExpressions> kNames{"happy", "sad", "surprise", "angry", "disgust", "fear"};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0xD6E8FEB86659FD93ULL));
}

// Gaussian bump on the frontal (u, v) plane with a displacement in mm.
struct Bump {
  double u, v, width;
  Vec3 disp;
};

std::vector<Bump> expression_bumps(Expression e) {
  switch (e) {
    case Expression::Happy:
      return {{-0.3, -0.45, 0.3, {-5.0, 7.5, 2.5}},
              {0.3, -0.45, 0.3, {5.0, 7.5, 2.5}},
              {-0.4, -0.15, 0.4, {0.0, 3.75, 3.75}},
              {0.4, -0.15, 0.4, {0.0, 3.75, 3.75}}};
    case Expression::Sad:
      return {{-0.3, -0.45, 0.3, {0.0, -6.25, 0.0}},
              {0.3, -0.45, 0.3, {0.0, -6.25, 0.0}},
              {-0.12, 0.45, 0.24, {0.0, 5.0, 1.25}},
              {0.12, 0.45, 0.24, {0.0, 5.0, 1.25}}};
    case Expression::Surprise:
      return {{-0.25, 0.45, 0.4, {0.0, 7.5, 1.25}},
              {0.25, 0.45, 0.4, {0.0, 7.5, 1.25}},
              {0.0, -0.6, 0.5, {0.0, -10.0, -2.5}}};
    case Expression::Angry:
      return {{-0.15, 0.42, 0.3, {3.75, -6.25, -1.25}},
              {0.15, 0.42, 0.3, {-3.75, -6.25, -1.25}},
              {0.0, -0.45, 0.36, {0.0, 0.0, -3.75}}};
    case Expression::Disgust:
      return {{0.0, 0.05, 0.24, {0.0, 3.75, 2.5}},
              {0.0, -0.35, 0.3, {0.0, 5.0, 2.5}},
              {-0.3, -0.45, 0.24, {0.0, -2.5, 0.0}},
              {0.3, -0.45, 0.24, {0.0, -2.5, 0.0}}};
    case Expression::Fear:
      return {{-0.2, 0.45, 0.4, {2.0, 5.0, 0.0}},
              {0.2, 0.45, 0.4, {-2.0, 5.0, 0.0}},
              {-0.3, -0.45, 0.3, {-6.25, -2.5, 0.0}},
              {0.3, -0.45, 0.3, {6.25, -2.5, 0.0}},
              {0.0, -0.6, 0.4, {0.0, -3.75, 0.0}}};
  }
  throw Error("unknown expression");
}

// Template coordinates normalised by the bounding box: centered, unit
// half-extent along the largest axis, plus a front weight along +z.
struct NormalizedCoords {
  std::vector<Vec3> p;
  std::vector<double> front;
};

NormalizedCoords normalize(const Mesh& m) {
  Vec3 lo = m.vertices.at(0), hi = m.vertices.at(0);
  for (const Vec3& v : m.vertices) {
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], v[k]);
      hi[k] = std::max(hi[k], v[k]);
    }
  }
  const Vec3 c = scale(add(lo, hi), 0.5);
  const double r = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}) / 2.0;
  const double depth = std::max(hi[2] - lo[2], 1e-12);
  NormalizedCoords out;
  for (const Vec3& v : m.vertices) {
    out.p.push_back(scale(sub(v, c), 1.0 / r));
    const double w = std::clamp(((v[2] - lo[2]) / depth - 0.35) / 0.3, 0.0, 1.0);
    out.front.push_back(w * w * (3.0 - 2.0 * w));
  }
  return out;
}

Frame bump_field(const NormalizedCoords& nc, const std::vector<Bump>& bumps) {
  Frame f(nc.p.size(), Vec3{0, 0, 0});
  for (std::size_t i = 0; i < nc.p.size(); ++i) {
    if (nc.front[i] == 0.0) continue;
    for (const Bump& b : bumps) {
      const double du = nc.p[i][0] - b.u, dv = nc.p[i][1] - b.v;
      const double w = nc.front[i] * std::exp(-(du * du + dv * dv) / (2.0 * b.width * b.width));
      f[i] = add(f[i], scale(b.disp, w));
    }
  }
  return f;
}

MotionLabel subsample_label(const MotionLabel& l, int stride) {
  MotionLabel out = l;
  out.frames = (l.frames + stride - 1) / stride;
  const int last = out.frames - 1;
  auto rs = [&](int t) { return std::min((t + stride / 2) / stride, last); };
  out.onset = rs(l.onset);
  out.apex_start = std::max(out.onset, rs(l.apex_start));
  out.apex_end = std::max(out.apex_start, rs(l.apex_end));
  out.offset_end = std::max(out.apex_end, rs(l.offset_end));
  return out;
}

int to_int(std::string_view tok, const std::string& what) {
  int v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) throw Error(what + ": expected an integer, got '" + std::string(tok) + "'");
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view expression_name(Expression e) { return kNames.at(static_cast<std::size_t>(e)); }

Expression parse_expression(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Expression>(i);
  }
  throw Error("unknown expression '" + std::string(name) + "' (expected happy, sad, surprise, angry, disgust or fear)");
}

std::array<Expression, kNumExpressions> all_expressions() {
  return {Expression::Happy, Expression::Sad, Expression::Surprise, Expression::Angry, Expression::Disgust, Expression::Fear};
}

void MotionLabel::validate() const {
  if (frames < 1) throw Error("label: frame count must be positive");
  if (!(0 <= onset && onset <= apex_start && apex_start <= apex_end && apex_end <= offset_end && offset_end <= frames - 1)) {
    throw Error("label: timestamps must satisfy 0 <= onset <= apex_start <= apex_end <= offset_end <= T-1, got " +
                std::to_string(onset) + " " + std::to_string(apex_start) + " " + std::to_string(apex_end) + " " +
                std::to_string(offset_end) + " with T=" + std::to_string(frames));
  }
  if (!(scale > 0.0 && scale <= 1.0)) throw Error("label: scale must lie in (0, 1]");
}

double amplitude(const MotionLabel& l, int t) {
  if (t >= l.apex_start && t <= l.apex_end) return l.scale;
  if (t <= l.onset || t >= l.offset_end) return 0.0;
  if (t < l.apex_start) return l.scale * (static_cast<double>(t - l.onset) / (l.apex_start - l.onset));
  return l.scale * (static_cast<double>(l.offset_end - t) / (l.offset_end - l.apex_end));
}

RowMatrix label_signal(const MotionLabel& label) {
  label.validate();
  RowMatrix e = RowMatrix::Zero(kNumExpressions, label.frames);
  const int row = static_cast<int>(label.expression);
  for (int t = 0; t < label.frames; ++t) e(row, t) = amplitude(label, t);
  return e;
}

double extremeness_scale(double m, const ExpressionStats& stats, Expression e) {
  const auto i = static_cast<std::size_t>(e);
  if (!(stats.stddev[i] > 0.0)) throw Error("extremeness_scale: standard deviation must be positive");
  const double z = std::clamp((m - stats.mean[i]) / stats.stddev[i], -1.0, 1.0);
  return std::clamp((z + 1.0) / 2.0, kScaleFloor, 1.0);
}

double mean_abs_deformation(const ExpressionSequence& seq) {
  if (seq.frames.empty() || seq.neutral.vertices.empty()) return 0.0;
  double total = 0.0;
  for (const Frame& f : seq.frames) {
    for (std::size_t v = 0; v < f.size(); ++v) total += norm(sub(f[v], seq.neutral.vertices[v]));
  }
  return total / (static_cast<double>(seq.frames.size()) * static_cast<double>(seq.neutral.vertices.size()));
}

double displacement_rms(std::span<const ExpressionSequence> sequences) {
  double sum = 0.0;
  double count = 0.0;
  for (const auto& seq : sequences) {
    for (const Frame& f : seq.frames) {
      for (std::size_t v = 0; v < f.size(); ++v) {
        const Vec3 d = sub(f[v], seq.neutral.vertices[v]);
        sum += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        count += 3.0;
      }
    }
  }
  return sum > 0.0 ? std::sqrt(sum / count) : 1.0;
}

ExpressionSequence temporal_subsample(const ExpressionSequence& seq, int stride) {
  if (stride < 1) throw Error("temporal_subsample: stride must be >= 1");
  ExpressionSequence out;
  out.subject = seq.subject;
  out.neutral = seq.neutral;
  for (std::size_t t = 0; t < seq.frames.size(); t += static_cast<std::size_t>(stride)) out.frames.push_back(seq.frames[t]);
  out.label = stride == 1 ? seq.label : subsample_label(seq.label, stride);
  out.label.frames = out.num_frames();
  return out;
}

ExpressionStats compute_stats(std::span<const ExpressionSequence> sequences) {
  std::array<std::vector<double>, kNumExpressions> m;
  for (const auto& s : sequences) m[static_cast<std::size_t>(s.label.expression)].push_back(mean_abs_deformation(s));
  ExpressionStats st;
  for (std::size_t e = 0; e < m.size(); ++e) {
    double mu = 0.0, var = 0.0;
    for (double x : m[e]) mu += x;
    if (!m[e].empty()) mu /= static_cast<double>(m[e].size());
    for (double x : m[e]) var += (x - mu) * (x - mu);
    if (!m[e].empty()) var /= static_cast<double>(m[e].size());
    st.mean[e] = mu;
    st.stddev[e] = std::max(std::sqrt(var), 1e-9);
  }
  return st;
}

void assign_scales(std::span<ExpressionSequence> sequences, const ExpressionStats& stats) {
  for (auto& s : sequences) s.label.scale = extremeness_scale(mean_abs_deformation(s), stats, s.label.expression);
}

Frame expression_field(const Mesh& templ, Expression e) { return bump_field(normalize(templ), expression_bumps(e)); }

SynthDataset synth_dataset(const Mesh& templ, const SynthConfig& cfg) {
  validate_mesh(templ);
  if (cfg.subjects < 1 || cfg.frames < 2 || cfg.stride < 1) throw Error("synth_dataset: invalid configuration");
  const NormalizedCoords nc = normalize(templ);
  const std::size_t n = templ.vertices.size();
  SynthDataset out;
  for (int s = 0; s < cfg.subjects; ++s) {
    char id[32];
    std::snprintf(id, sizeof id, "s%03d", s);
    // Identity: smooth radial-basis deformation of the template.
    std::mt19937_64 id_rng(mix(cfg.seed, static_cast<std::uint64_t>(s) + 1));
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> uw(0.4, 0.6);
    Mesh identity = templ;
    for (int k = 0; k < 10; ++k) {
      Vec3 c{g(id_rng), g(id_rng), g(id_rng)};
      c = scale(c, 1.0 / std::max(norm(c), 1e-12));
      const double width = uw(id_rng);
      const double radial = 3.0 * g(id_rng);
      const Vec3 tangent{g(id_rng), g(id_rng), g(id_rng)};
      for (std::size_t i = 0; i < n; ++i) {
        const Vec3 d = sub(nc.p[i], c);
        const double w = std::exp(-dot(d, d) / (2.0 * width * width));
        const double len = norm(nc.p[i]);
        const Vec3 dir = len > 0 ? scale(nc.p[i], 1.0 / len) : Vec3{0, 0, 1};
        identity.vertices[i] = add(identity.vertices[i], scale(add(scale(dir, radial), tangent), w));
      }
    }
    for (Expression e : cfg.expressions) {
      std::mt19937_64 rng(mix(cfg.seed, static_cast<std::uint64_t>(s) + 1, static_cast<std::uint64_t>(e) + 1));
      std::vector<Bump> bumps = expression_bumps(e);
      for (Bump& b : bumps) {
        const double amp = std::max(0.3, 1.0 + 0.2 * g(rng));
        b.u += 0.04 * g(rng);
        b.v += 0.04 * g(rng);
        for (double& d : b.disp) d = amp * d + 0.75 * g(rng);
      }
      const double intensity = std::uniform_real_distribution<double>(cfg.intensity_min, cfg.intensity_max)(rng);
      Frame field = bump_field(nc, bumps);
      for (Vec3& d : field) d = scale(d, intensity);

      MotionLabel full;
      full.expression = e;
      full.frames = cfg.frames;
      if (cfg.fixed_timing) {
        const double r = cfg.frames / 100.0;
        full.onset = static_cast<int>(10 * r);
        full.apex_start = static_cast<int>(30 * r);
        full.apex_end = static_cast<int>(80 * r);
        full.offset_end = std::min(static_cast<int>(95 * r), cfg.frames - 1);
      } else {
        auto pick = [&](double lo, double hi) {
          return static_cast<int>(std::lround(std::uniform_real_distribution<double>(lo, hi)(rng) * cfg.frames));
        };
        full.onset = pick(0.05, 0.15);
        full.apex_start = full.onset + pick(0.15, 0.25);
        full.apex_end = full.apex_start + pick(0.30, 0.45);
        full.offset_end = std::min(full.apex_end + pick(0.10, 0.20), cfg.frames - 1);
      }
      full.validate();

      ExpressionSequence seq;
      seq.subject = id;
      seq.neutral = identity;
      seq.label = cfg.stride == 1 ? full : subsample_label(full, cfg.stride);
      seq.label.frames = (cfg.frames + cfg.stride - 1) / cfg.stride;
      seq.label.validate();
      std::normal_distribution<double> noise(0.0, cfg.noise);
      for (int t = 0; t < seq.label.frames; ++t) {
        const double a = amplitude(seq.label, t);
        Frame f(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (int k = 0; k < 3; ++k) f[i][k] = identity.vertices[i][k] + a * field[i][k] + noise(rng);
        }
        seq.frames.push_back(std::move(f));
      }
      out.sequences.push_back(std::move(seq));
      out.fields.push_back(std::move(field));
    }
  }
  out.stats = compute_stats(out.sequences);
  assign_scales(out.sequences, out.stats);
  return out;
}

std::string frame_filename(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.obj", t);
  return buf;
}

std::string format_label(const MotionLabel& l) {
  return std::string(expression_name(l.expression)) + " " + std::to_string(l.onset) + " " + std::to_string(l.apex_start) +
         " " + std::to_string(l.apex_end) + " " + std::to_string(l.offset_end) + "\n";
}

namespace {

// Drops everything from '#' to the end of each line.
std::string strip_comments(const std::string& text) {
  std::string out;
  bool skip = false;
  for (char c : text) {
    if (c == '#') skip = true;
    if (c == '\n') skip = false;
    if (!skip) out.push_back(c);
  }
  return out;
}

}  // namespace

MotionLabel parse_label(const std::string& text, int frames, const std::string& what) {
  std::istringstream in(strip_comments(text));
  std::vector<std::string> tok;
  for (std::string s; in >> s;) tok.push_back(s);
  if (tok.size() != 5) throw Error(what + ": expected 'expression t_onset t_apex_start t_apex_end t_offset_end'");
  MotionLabel l;
  l.expression = parse_expression(tok[0]);
  l.frames = frames;
  l.onset = to_int(tok[1], what);
  l.apex_start = to_int(tok[2], what);
  l.apex_end = to_int(tok[3], what);
  l.offset_end = to_int(tok[4], what);
  try {
    l.validate();
  } catch (const Error& e) {
    throw Error(what + ": " + e.what());
  }
  return l;
}

void save_dataset(std::span<const ExpressionSequence> sequences, const fs::path& root,
                  const std::vector<std::string>& header_comment) {
  std::set<std::string> written;
  for (const auto& seq : sequences) {
    const fs::path subject = root / seq.subject;
    const fs::path dir = subject / std::string(expression_name(seq.label.expression));
    fs::create_directories(dir);
    if (written.insert(seq.subject).second) save_mesh(seq.neutral, subject / "neutral.obj", header_comment);
    for (int t = 0; t < seq.num_frames(); ++t) save_mesh(seq.frame_mesh(t), dir / frame_filename(t), header_comment);
    std::ofstream label(dir / "label.txt");
    for (const auto& line : header_comment) label << "# " << line << "\n";
    label << format_label(seq.label);
  }
}

std::vector<ExpressionSequence> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error("dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> subjects;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) subjects.push_back(e.path());
  }
  std::sort(subjects.begin(), subjects.end());
  std::vector<ExpressionSequence> out;
  std::vector<Face> reference;
  for (const fs::path& sdir : subjects) {
    const Mesh neutral = load_mesh(sdir / "neutral.obj");
    std::vector<fs::path> exprs;
    for (const auto& e : fs::directory_iterator(sdir)) {
      if (e.is_directory()) exprs.push_back(e.path());
    }
    std::sort(exprs.begin(), exprs.end());
    for (const fs::path& edir : exprs) {
      std::vector<fs::path> frames;
      for (const auto& e : fs::directory_iterator(edir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("frame_", 0) == 0 && e.path().extension() == ".obj") frames.push_back(e.path());
      }
      std::sort(frames.begin(), frames.end());
      if (frames.empty()) throw Error(edir.string() + ": no frame_*.obj files");
      if (!fs::exists(edir / "label.txt")) throw Error("missing label file " + (edir / "label.txt").string());
      ExpressionSequence seq;
      seq.subject = sdir.filename().string();
      seq.neutral = neutral;
      seq.label = parse_label(read_text(edir / "label.txt"), static_cast<int>(frames.size()), (edir / "label.txt").string());
      for (const fs::path& fp : frames) {
        Mesh m = load_mesh(fp);
        if (!same_topology(m, neutral)) throw Error("topology mismatch: " + fp.string() + " differs from its neutral mesh");
        seq.frames.push_back(std::move(m.vertices));
      }
      if (reference.empty()) reference = neutral.faces;
      if (neutral.faces != reference) {
        throw Error("topology mismatch: " + (sdir / "neutral.obj").string() + " differs from the first subject");
      }
      out.push_back(std::move(seq));
    }
  }
  if (out.empty()) throw Error("dataset root " + root.string() + " contains no sequences");
  std::stable_sort(out.begin(), out.end(), [](const ExpressionSequence& a, const ExpressionSequence& b) {
    return std::tie(a.subject, a.label.expression) < std::tie(b.subject, b.label.expression);
  });
  const ExpressionStats stats = compute_stats(out);
  assign_scales(out, stats);
  return out;
}

std::set<std::string> read_split(const fs::path& path) {
  std::istringstream in(strip_comments(read_text(path)));
  std::set<std::string> ids;
  for (std::string s; in >> s;) ids.insert(s);
  return ids;
}

void write_split(const std::set<std::string>& test_subjects, const fs::path& path,
                 const std::vector<std::string>& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& line : header_comment) out << "# " << line << "\n";
  for (const auto& s : test_subjects) out << s << "\n";
}

std::set<std::string> split_last(std::span<const ExpressionSequence> sequences, std::size_t n_test) {
  std::set<std::string> all;
  for (const auto& s : sequences) all.insert(s.subject);
  std::set<std::string> out;
  for (auto it = all.rbegin(); it != all.rend() && out.size() < n_test; ++it) out.insert(*it);
  return out;
}

Split apply_split(std::vector<ExpressionSequence> sequences, const std::set<std::string>& test_subjects) {
  Split s;
  for (auto& seq : sequences) (test_subjects.count(seq.subject) ? s.test : s.train).push_back(std::move(seq));
  return s;
}

}  // namespace meshmotion
