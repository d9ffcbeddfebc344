#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <sstream>

#include "meshmotion/eval.hpp"
#include "meshmotion/primitives.hpp"
#include "test_util.hpp"

using namespace meshmotion;
using Eigen::RowVectorXd;

namespace {

RowMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  RowMatrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

double recon_error(const PcaBasis& b, const RowMatrix& x) {
  return (pca_reconstruct(b, pca_project(b, x)) - x).squaredNorm();
}

}  // namespace

TEST_CASE("per-vertex error cases") {
  const Mesh m = make_icosphere(1);
  std::vector<Frame> a{m.vertices, m.vertices}, b = a;
  CHECK(per_vertex_error(a, b) == 0.0);
  for (Frame& f : b)
    for (Vec3& v : f) v[0] += 1.0;
  CHECK(per_vertex_error(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(per_vertex_error(b, a) == per_vertex_error(a, b));
  b.pop_back();
  CHECK_THROWS_AS(per_vertex_error(a, b), Error);
}

TEST_CASE("per-frame curve") {
  const Mesh m = make_tetrahedron();
  std::vector<Frame> a(5, m.vertices), b = a;
  CHECK(per_frame_l1(a, b) == std::vector<double>(5, 0.0));
  b[3][2][1] += 6.0;
  const auto c = per_frame_l1(a, b);
  CHECK(c[3] == doctest::Approx(6.0 / 12.0));
  CHECK(c[0] == 0.0);
  CHECK(c[4] == 0.0);
}

TEST_CASE("nearest-frame resampling") {
  CHECK(resample_indices(20, 20) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19});
  const auto down = resample_indices(100, 20);
  CHECK(down.front() == 0);
  CHECK(down.back() == 99);
  for (std::size_t i = 1; i < down.size(); ++i) CHECK(down[i] > down[i - 1]);
  const auto up = resample_indices(5, 20);
  CHECK(up.size() == 20);
  CHECK(up.back() == 4);
  CHECK_THROWS_AS(resample_indices(0, 3), Error);
}

TEST_CASE("pca on rank-one data") {
  RowVectorXd u(6);
  u << 1, 2, -2, 0, 4, 2;
  u /= u.norm();
  RowMatrix x(7, 6);
  for (int i = 0; i < 7; ++i) x.row(i) = (i - 3.0) * 1.5 * u + RowVectorXd::Constant(6, 0.25);
  const PcaBasis b = fit_pca(x, 3);
  CHECK((b.mean - RowVectorXd::Constant(6, 0.25)).cwiseAbs().maxCoeff() < 1e-12);
  const RowVectorXd c0 = b.components.row(0);
  CHECK(std::abs(std::abs(c0.dot(u)) - 1.0) < 1e-10);
  Eigen::Index arg;
  c0.cwiseAbs().maxCoeff(&arg);
  CHECK(c0(arg) > 0.0);
  CHECK(b.variance(1) < 1e-20);
  CHECK(b.variance(2) < 1e-20);
  CHECK(recon_error(b, x) < 1e-20);
}

TEST_CASE("pca matches the covariance eigendecomposition") {
  const RowMatrix x = random_matrix(20, 6, 3);
  const PcaBasis b = fit_pca(x, 6);
  const RowMatrix centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / 19.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  for (int k = 0; k < 6; ++k) {
    const int j = 5 - k;
    CHECK(b.variance(k) == doctest::Approx(es.eigenvalues()(j)).epsilon(1e-9));
    CHECK(std::abs(std::abs(b.components.row(k).dot(es.eigenvectors().col(j).transpose())) - 1.0) < 1e-8);
  }
  const Eigen::MatrixXd gram = b.components * b.components.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pca reconstruction error is nonincreasing in k") {
  const RowMatrix x = random_matrix(12, 9, 8);
  double prev = 1e300;
  for (int k = 1; k <= 9; ++k) {
    const double e = recon_error(fit_pca(x, k), x);
    CHECK(e <= prev + 1e-12);
    prev = e;
  }
  CHECK(prev < 1e-18);
  CHECK_THROWS_AS(fit_pca(x, 13), Error);
}

TEST_CASE("metrics for a perfect predictor") {
  std::vector<int> t{0, 1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5};
  const ClassMetrics m = classification_metrics(t, t);
  CHECK(m.macro_f1 == 1.0);
  CHECK(m.accuracy == 1.0);
  for (int e = 0; e < 6; ++e) CHECK(m.confusion[e][e] == 2);
}

TEST_CASE("metrics for a single-class predictor") {
  std::vector<int> t, p;
  for (int e = 0; e < 6; ++e)
    for (int i = 0; i < 4; ++i) {
      t.push_back(e);
      p.push_back(2);
    }
  const ClassMetrics m = classification_metrics(t, p);
  CHECK(m.recall[2] == 1.0);
  CHECK(m.precision[2] == doctest::Approx(1.0 / 6.0));
  CHECK(m.f1[2] == doctest::Approx(2.0 / 7.0));
  CHECK(m.recall[0] == 0.0);
  CHECK(m.f1[0] == 0.0);
  CHECK(m.macro_f1 == doctest::Approx(2.0 / 7.0 / 6.0));
}

TEST_CASE("metrics agree with a brute-force tally") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> d(0, 5);
  std::vector<int> t(200), p(200);
  for (int i = 0; i < 200; ++i) {
    t[i] = d(rng);
    p[i] = rng() % 3 == 0 ? t[i] : d(rng);
  }
  const ClassMetrics m = classification_metrics(t, p);
  double f1_sum = 0.0;
  int correct = 0;
  for (int e = 0; e < 6; ++e) {
    int tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < 200; ++i) {
      tp += t[i] == e && p[i] == e;
      fp += t[i] != e && p[i] == e;
      fn += t[i] == e && p[i] != e;
    }
    const double prec = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double rec = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    CHECK(m.precision[e] == doctest::Approx(prec).epsilon(1e-12));
    CHECK(m.recall[e] == doctest::Approx(rec).epsilon(1e-12));
    CHECK(m.f1[e] == doctest::Approx(f1).epsilon(1e-12));
    f1_sum += f1;
    correct += tp;
  }
  CHECK(m.macro_f1 == doctest::Approx(f1_sum / 6).epsilon(1e-12));
  CHECK(m.accuracy == doctest::Approx(correct / 200.0));
  std::vector<int> bad{7};
  std::vector<int> ok{0};
  CHECK_THROWS_AS(classification_metrics(bad, ok), Error);
}

TEST_CASE("classifier separates distinct deformation classes") {
  SynthConfig cfg;
  cfg.subjects = 4;
  cfg.frames = 30;
  cfg.stride = 3;
  cfg.seed = 2;
  const SynthDataset d = synth_dataset(make_icosphere(2, 80.0), cfg);
  ClassifierConfig cc;
  cc.components = 8;
  cc.frames = 10;
  cc.hidden = {32};
  cc.epochs = 60;
  cc.learning_rate = 3e-3;
  Classifier clf = train_classifier(std::span<const ExpressionSequence>(d.sequences), cc);
  int correct = 0;
  for (const auto& s : d.sequences) {
    const Tensor<double> p = classifier_probabilities(clf, s.neutral, s.frames);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += p[i];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    correct += classify(clf, s.neutral, s.frames) == static_cast<int>(s.label.expression);
  }
  CHECK(correct == static_cast<int>(d.sequences.size()));

  Classifier back = classifier_from_checkpoint(parse_checkpoint(serialize_checkpoint(classifier_to_checkpoint(clf))));
  for (const auto& s : d.sequences) {
    const Tensor<double> a = classifier_probabilities(clf, s.neutral, s.frames);
    CHECK(classifier_probabilities(back, s.neutral, s.frames) == a);
  }

  std::vector<ExpressionSequence> missing;
  for (const auto& s : d.sequences)
    if (s.label.expression != Expression::Fear) missing.push_back(s);
  CHECK_THROWS_WITH_AS(train_classifier(std::span<const ExpressionSequence>(missing), cc), doctest::Contains("fear"), Error);
}

TEST_CASE("latent interpolation endpoints") {
  const TopologyCache topo = build_topology_cache(make_icosphere(1, 10.0), {2, 2}, {});
  Generator<double> g = make_spiral_generator<double>(topo, 3);
  MotionLabel l;
  l.expression = Expression::Sad;
  l.frames = 6;
  l.onset = 0;
  l.apex_start = 2;
  l.apex_end = 3;
  l.offset_end = 5;
  l.scale = 1.0;
  const Tensor<double> z = encode_latents(g, l);
  Tensor<double> za = Tensor<double>::matrix(1, 64), zb = za;
  for (std::size_t j = 0; j < 64; ++j) {
    za[j] = z(0, j);
    zb[j] = z(3, j);
  }
  const auto frames = interpolate_latents(g, topo.finest(), za, zb, 5);
  REQUIRE(frames.size() == 5);
  CHECK(frames.front() == decode_latents(g, topo.finest(), za).front());
  CHECK(frames.back() == decode_latents(g, topo.finest(), zb).front());
  const auto same = interpolate_latents(g, topo.finest(), za, za, 3);
  CHECK(same[0] == same[1]);
  CHECK(same[1] == same[2]);
  CHECK_THROWS_AS(interpolate_latents(g, topo.finest(), za, zb, 1), Error);
}

TEST_CASE("evaluation report") {
  SynthConfig cfg;
  cfg.subjects = 1;
  cfg.expressions = {Expression::Happy, Expression::Disgust};
  cfg.frames = 20;
  cfg.stride = 2;
  const SynthDataset d = synth_dataset(make_icosphere(1, 80.0), cfg);
  std::vector<std::vector<Frame>> gen;
  for (const auto& s : d.sequences) gen.push_back(std::vector<Frame>(s.frames.size(), s.neutral.vertices));
  const ModelEval ident = evaluate_generations("identity", d.sequences, gen);
  CHECK(ident.expression_count[0] == 1);
  CHECK(ident.expression_count[1] == 0);
  CHECK(ident.total_error > 0.0);
  CHECK(ident.curve.size() == 10);
  const ModelEval perfect = evaluate_generations(
      "perfect", d.sequences, std::vector<std::vector<Frame>>{d.sequences[0].frames, d.sequences[1].frames});
  CHECK(perfect.total_error == 0.0);

  EvalReport r;
  r.header = {"hierarchy abc"};
  r.models = {ident, perfect};
  const std::string text = format_report(r);
  CHECK(text.find("identity") != std::string::npos);
  CHECK(text.find("hierarchy abc") != std::string::npos);
  TempDir dir;
  write_report(r, dir.path);
  CHECK(std::filesystem::exists(dir.path / "report.txt"));
  CHECK(std::filesystem::exists(dir.path / "report.csv"));
  CHECK(std::filesystem::exists(dir.path / "curve_identity.txt"));
}
