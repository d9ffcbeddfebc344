#include <doctest.h>

#include <cmath>
#include <fstream>

#include "meshmotion/dataset.hpp"
#include "meshmotion/primitives.hpp"
#include "test_util.hpp"

using namespace meshmotion;

namespace {

MotionLabel reference_label(double s = 1.0) {
  MotionLabel l;
  l.expression = Expression::Surprise;
  l.frames = 100;
  l.onset = 10;
  l.apex_start = 30;
  l.apex_end = 80;
  l.offset_end = 95;
  l.scale = s;
  return l;
}

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig c;
  c.subjects = 3;
  c.expressions = {Expression::Happy, Expression::Angry};
  c.frames = 40;
  c.stride = 2;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("label signal at the reference timestamps") {
  const MotionLabel l = reference_label();
  CHECK(amplitude(l, 55) == 1.0);
  CHECK(amplitude(l, 20) == 0.5);
  CHECK(amplitude(l, 5) == 0.0);
  CHECK(amplitude(l, 10) == 0.0);
  CHECK(amplitude(l, 30) == 1.0);
  CHECK(amplitude(l, 80) == 1.0);
  CHECK(amplitude(l, 95) == 0.0);
  CHECK(amplitude(l, 99) == 0.0);
  const double s = 0.37;
  CHECK(amplitude(reference_label(s), 55) == s);
  CHECK(amplitude(reference_label(s), 20) == s / 2);
}

TEST_CASE("label signal is one-hot with a scaled amplitude") {
  const RowMatrix full = label_signal(reference_label());
  const RowMatrix half = label_signal(reference_label(0.5));
  REQUIRE(full.rows() == 6);
  REQUIRE(full.cols() == 100);
  CHECK((half - 0.5 * full).cwiseAbs().maxCoeff() == 0.0);
  const int row = static_cast<int>(Expression::Surprise);
  for (int t = 0; t < 100; ++t) {
    for (int e = 0; e < 6; ++e) {
      if (e != row) CHECK(full(e, t) == 0.0);
    }
  }
  for (int t = 10; t < 30; ++t) CHECK(full(row, t + 1) >= full(row, t));
  for (int t = 80; t < 95; ++t) CHECK(full(row, t + 1) <= full(row, t));
}

TEST_CASE("label invariants are enforced") {
  MotionLabel l = reference_label();
  l.apex_start = 5;
  CHECK_THROWS_AS(l.validate(), Error);
  l = reference_label();
  l.offset_end = 100;
  CHECK_THROWS_AS(l.validate(), Error);
  l = reference_label(0.0);
  CHECK_THROWS_AS(l.validate(), Error);
  CHECK_THROWS_AS(parse_expression("bored"), Error);
  CHECK(parse_expression("fear") == Expression::Fear);
}

TEST_CASE("extremeness scale cases") {
  ExpressionStats st;
  st.mean.fill(2.0);
  st.stddev.fill(0.5);
  CHECK(extremeness_scale(2.0, st, Expression::Happy) == 0.5);
  CHECK(extremeness_scale(2.5, st, Expression::Happy) == 1.0);
  CHECK(extremeness_scale(9.0, st, Expression::Happy) == 1.0);
  CHECK(extremeness_scale(1.5, st, Expression::Happy) == kScaleFloor);
  CHECK(extremeness_scale(0.0, st, Expression::Happy) == kScaleFloor);
  double prev = 0.0;
  for (double m = 0.0; m < 4.0; m += 0.01) {
    const double s = extremeness_scale(m, st, Expression::Sad);
    CHECK(s >= prev);
    CHECK(s >= kScaleFloor);
    CHECK(s <= 1.0);
    prev = s;
  }
  st.stddev[0] = 0.0;
  CHECK_THROWS_AS(extremeness_scale(1.0, st, Expression::Happy), Error);
}

TEST_CASE("mean absolute deformation") {
  ExpressionSequence seq;
  seq.neutral = make_icosphere(1);
  seq.frames = {seq.neutral.vertices, seq.neutral.vertices};
  CHECK(mean_abs_deformation(seq) == 0.0);
  CHECK(displacement_rms(std::span<const ExpressionSequence>(&seq, 1)) == 1.0);
  seq.frames = {seq.neutral.vertices};
  for (Vec3& v : seq.frames[0]) v = add(v, {0.6, 0.8, 0.0});
  CHECK(mean_abs_deformation(seq) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(displacement_rms(std::span<const ExpressionSequence>(&seq, 1)) == doctest::Approx(std::sqrt(1.0 / 3.0)));
}

TEST_CASE("temporal subsampling") {
  ExpressionSequence seq;
  seq.neutral = make_tetrahedron();
  for (int t = 0; t < 100; ++t) {
    Frame f = seq.neutral.vertices;
    f[0][0] = t;
    seq.frames.push_back(f);
  }
  seq.label = reference_label();
  const ExpressionSequence same = temporal_subsample(seq, 1);
  CHECK(same.frames == seq.frames);
  CHECK(same.label == seq.label);
  const ExpressionSequence sub = temporal_subsample(seq, 5);
  CHECK(sub.num_frames() == 20);
  CHECK(sub.frames[3][0][0] == 15.0);
  CHECK(sub.label.frames == 20);
  CHECK(sub.label.onset == 2);
  CHECK(sub.label.apex_start == 6);
  CHECK(sub.label.apex_end == 16);
  CHECK(sub.label.offset_end == 19);
  CHECK_NOTHROW(sub.label.validate());
  CHECK_THROWS_AS(temporal_subsample(seq, 0), Error);
}

TEST_CASE("synthetic dataset is deterministic and seed dependent") {
  const Mesh templ = make_icosphere(2, 80.0);
  const SynthDataset a = synth_dataset(templ, small_config(7));
  const SynthDataset b = synth_dataset(templ, small_config(7));
  const SynthDataset c = synth_dataset(templ, small_config(8));
  REQUIRE(a.sequences.size() == 6);
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].frames == b.sequences[i].frames);
    CHECK(a.sequences[i].label == b.sequences[i].label);
    CHECK(a.sequences[i].neutral == b.sequences[i].neutral);
  }
  CHECK(a.sequences[0].frames != c.sequences[0].frames);
  CHECK(a.sequences[0].subject == "s000");
  CHECK(a.sequences[5].subject == "s002");
}

TEST_CASE("synthetic sequences respect labels and noise") {
  const Mesh templ = make_icosphere(2, 80.0);
  SynthConfig cfg = small_config(3);
  const SynthDataset d = synth_dataset(templ, cfg);
  for (const auto& seq : d.sequences) {
    CHECK_NOTHROW(seq.label.validate());
    CHECK(seq.num_frames() == 20);
    CHECK(seq.label.scale >= kScaleFloor);
    CHECK(seq.label.scale <= 1.0);
    CHECK(same_topology(seq.neutral, templ));
    // Frames with zero amplitude equal the identity up to the noise level.
    for (int t = 0; t <= seq.label.onset; ++t) {
      for (std::size_t v = 0; v < seq.neutral.vertices.size(); ++v) {
        for (int k = 0; k < 3; ++k) CHECK(std::abs(seq.frames[t][v][k] - seq.neutral.vertices[v][k]) < 6 * cfg.noise);
      }
    }
    // The frame of largest mean deformation lies in the apex interval.
    int best = 0;
    double best_m = -1.0;
    for (int t = 0; t < seq.num_frames(); ++t) {
      double m = 0.0;
      for (std::size_t v = 0; v < seq.neutral.vertices.size(); ++v) m += norm(sub(seq.frames[t][v], seq.neutral.vertices[v]));
      if (m > best_m) {
        best_m = m;
        best = t;
      }
    }
    CHECK(best >= seq.label.apex_start);
    CHECK(best <= seq.label.apex_end);
  }
}

TEST_CASE("recovered mean deformation matches the field times the mean amplitude") {
  const Mesh templ = make_icosphere(3, 80.0);
  SynthConfig cfg = small_config(11);
  cfg.stride = 1;
  cfg.noise = 0.0;
  const SynthDataset d = synth_dataset(templ, cfg);
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    const auto& seq = d.sequences[i];
    MotionLabel unit = seq.label;
    unit.scale = 1.0;
    double amp = 0.0;
    for (int t = 0; t < seq.num_frames(); ++t) amp += amplitude(unit, t);
    amp /= seq.num_frames();
    double field = 0.0;
    for (const Vec3& f : d.fields[i]) field += norm(f);
    field /= static_cast<double>(d.fields[i].size());
    CHECK(mean_abs_deformation(seq) == doctest::Approx(field * amp).epsilon(0.02));
  }
}

TEST_CASE("expression fields differ between classes and are frontal") {
  const Mesh templ = make_icosphere(3, 80.0);
  const auto happy = expression_field(templ, Expression::Happy);
  const auto sad = expression_field(templ, Expression::Sad);
  double diff = 0.0;
  for (std::size_t v = 0; v < happy.size(); ++v) diff += norm(sub(happy[v], sad[v]));
  CHECK(diff > 0.0);
  for (std::size_t v = 0; v < happy.size(); ++v) {
    if (templ.vertices[v][2] < -25.0) CHECK(norm(happy[v]) == 0.0);
  }
}

TEST_CASE("dataset save and load round trip") {
  TempDir dir;
  const Mesh templ = make_icosphere(1, 80.0);
  SynthConfig cfg = small_config(5);
  cfg.frames = 20;
  const SynthDataset d = synth_dataset(templ, cfg);
  save_dataset(d.sequences, dir.path, {"config 0123abcd"});
  const auto back = load_dataset(dir.path);
  REQUIRE(back.size() == d.sequences.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].subject == d.sequences[i].subject);
    CHECK(back[i].frames == d.sequences[i].frames);
    CHECK(back[i].neutral == d.sequences[i].neutral);
    CHECK(back[i].label == d.sequences[i].label);
  }
  CHECK(std::filesystem::exists(dir.path / "s000" / "angry" / "frame_0009.obj"));
}

TEST_CASE("loading one ten-frame expression") {
  TempDir dir;
  const Mesh m = make_icosphere(1);
  std::filesystem::create_directories(dir.path / "subj" / "happy");
  save_mesh(m, dir.path / "subj" / "neutral.obj");
  for (int t = 0; t < 10; ++t) save_mesh(m, dir.path / "subj" / "happy" / frame_filename(t));
  std::ofstream(dir.path / "subj" / "happy" / "label.txt") << "happy 1 3 6 8\n";
  const auto seqs = load_dataset(dir.path);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].num_frames() == 10);
  CHECK(seqs[0].label.apex_end == 6);

  Mesh other = m;
  other.faces.pop_back();
  save_mesh(other, dir.path / "subj" / "happy" / frame_filename(4));
  CHECK_THROWS_WITH_AS(load_dataset(dir.path), doctest::Contains("frame_0004.obj"), Error);

  save_mesh(m, dir.path / "subj" / "happy" / frame_filename(4));
  std::filesystem::remove(dir.path / "subj" / "happy" / "label.txt");
  CHECK_THROWS_WITH_AS(load_dataset(dir.path), doctest::Contains("missing label file"), Error);
}

TEST_CASE("subject split file") {
  TempDir dir;
  SynthConfig cfg = small_config(1);
  cfg.subjects = 5;
  const SynthDataset d = synth_dataset(make_icosphere(1, 80.0), cfg);
  const auto test = split_last(d.sequences, 2);
  CHECK(test == std::set<std::string>{"s003", "s004"});
  write_split(test, dir.path / "split.txt", {"config 0123abcd"});
  CHECK(read_split(dir.path / "split.txt") == test);
  const Split s = apply_split(d.sequences, test);
  CHECK(s.train.size() == 6);
  CHECK(s.test.size() == 4);
}
