#include "meshmotion/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace meshmotion {

namespace {

void require_match(std::span<const Frame> a, std::span<const Frame> b, const char* what) {
  if (a.size() != b.size()) throw Error(std::string(what) + ": frame counts differ");
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != b[t].size()) throw Error(std::string(what) + ": vertex counts differ");
  }
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

RowMatrix deformation_rows(std::span<const ExpressionSequence> sequences) {
  std::size_t rows = 0;
  for (const auto& s : sequences) rows += s.frames.size();
  if (rows == 0) throw Error("deformation_rows: no frames");
  const std::size_t n = sequences.front().neutral.vertices.size();
  RowMatrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(3 * n));
  Eigen::Index r = 0;
  for (const auto& s : sequences) {
    if (s.neutral.vertices.size() != n) throw Error("deformation_rows: sequences have different vertex counts");
    for (const Frame& f : s.frames) {
      for (std::size_t v = 0; v < n; ++v) {
        for (int k = 0; k < 3; ++k) out(r, static_cast<Eigen::Index>(3 * v + k)) = f[v][k] - s.neutral.vertices[v][k];
      }
      ++r;
    }
  }
  return out;
}

double per_vertex_error(std::span<const Frame> pred, std::span<const Frame> gt) {
  require_match(pred, gt, "per_vertex_error");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    for (std::size_t v = 0; v < pred[t].size(); ++v) total += norm(sub(pred[t][v], gt[t][v]));
    count += pred[t].size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

std::vector<double> per_frame_l1(std::span<const Frame> pred, std::span<const Frame> gt) {
  require_match(pred, gt, "per_frame_l1");
  std::vector<double> out;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    double s = 0.0;
    for (std::size_t v = 0; v < pred[t].size(); ++v) {
      for (int k = 0; k < 3; ++k) s += std::abs(pred[t][v][k] - gt[t][v][k]);
    }
    out.push_back(pred[t].empty() ? 0.0 : s / static_cast<double>(3 * pred[t].size()));
  }
  return out;
}

std::vector<std::size_t> resample_indices(std::size_t frames, std::size_t target) {
  if (frames == 0 || target == 0) throw Error("resample: frame counts must be positive");
  std::vector<std::size_t> out(target, 0);
  if (target == 1) return out;
  for (std::size_t c = 0; c < target; ++c) {
    out[c] = static_cast<std::size_t>(
        std::lround(static_cast<double>(c) * static_cast<double>(frames - 1) / static_cast<double>(target - 1)));
  }
  return out;
}

Tensor<double> classifier_features(const Classifier& clf, const Mesh& neutral, std::span<const Frame> frames) {
  const std::size_t k = static_cast<std::size_t>(clf.basis.k());
  const std::size_t tc = static_cast<std::size_t>(clf.config.frames);
  const std::size_t n = neutral.vertices.size();
  if (3 * n != static_cast<std::size_t>(clf.basis.dim())) throw Error("classifier: mesh does not match the PCA basis");
  if (frames.empty()) throw Error("classifier: empty sequence");
  const auto idx = resample_indices(frames.size(), tc);
  RowMatrix rows(static_cast<Eigen::Index>(tc), static_cast<Eigen::Index>(3 * n));
  for (std::size_t c = 0; c < tc; ++c) {
    const Frame& f = frames[idx[c]];
    if (f.size() != n) throw Error("classifier: frame vertex count does not match the neutral");
    for (std::size_t v = 0; v < n; ++v) {
      for (int j = 0; j < 3; ++j) rows(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(3 * v + j)) = f[v][j] - neutral.vertices[v][j];
    }
  }
  const RowMatrix codes = pca_project(clf.basis, rows);
  Tensor<double> out = Tensor<double>::matrix(1, tc * k);
  for (std::size_t c = 0; c < tc; ++c) {
    for (std::size_t i = 0; i < k; ++i) out[c * k + i] = codes(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
  }
  return out;
}

namespace {

Var<double> classifier_logits(Tape<double>& tape, Classifier& clf, Var<double> x, bool trainable) {
  for (std::size_t l = 0; l < clf.weights.size(); ++l) {
    Var<double> w = trainable ? tape.parameter(clf.weights[l]) : tape.constant(clf.weights[l].value);
    Var<double> b = trainable ? tape.parameter(clf.biases[l]) : tape.constant(clf.biases[l].value);
    x = dense(x, w, b);
    if (l + 1 < clf.weights.size()) x = ad::relu(x);
  }
  return x;
}

}  // namespace

Classifier train_classifier(std::span<const ExpressionSequence> train, const ClassifierConfig& config) {
  if (train.empty()) throw Error("train_classifier: no training sequences");
  std::array<int, kNumExpressions> counts{};
  for (const auto& s : train) ++counts[static_cast<std::size_t>(s.label.expression)];
  for (int e = 0; e < kNumExpressions; ++e) {
    if (counts[static_cast<std::size_t>(e)] == 0) {
      throw Error("train_classifier: class '" + std::string(expression_name(static_cast<Expression>(e))) +
                  "' is absent from the training set");
    }
  }
  Classifier clf;
  clf.config = config;
  clf.basis = fit_pca(deformation_rows(train), config.components);
  std::vector<std::size_t> sizes{static_cast<std::size_t>(config.frames * config.components)};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(kNumExpressions);
  std::mt19937_64 rng(config.seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Parameter<double> w{"fc" + std::to_string(l) + ".weight", Tensor<double>::matrix(sizes[l + 1], sizes[l]), {}};
    Parameter<double> b{"fc" + std::to_string(l) + ".bias", Tensor<double>::matrix(1, sizes[l + 1]), {}};
    init_uniform(w, 1.0 / std::sqrt(static_cast<double>(sizes[l])), rng);
    clf.weights.push_back(std::move(w));
    clf.biases.push_back(std::move(b));
  }
  std::vector<Tensor<double>> features;
  std::vector<int> labels;
  for (const auto& s : train) {
    features.push_back(classifier_features(clf, s.neutral, s.frames));
    labels.push_back(static_cast<int>(s.label.expression));
  }
  std::vector<Parameter<double>*> params;
  for (std::size_t l = 0; l < clf.weights.size(); ++l) {
    params.push_back(&clf.weights[l]);
    params.push_back(&clf.biases[l]);
  }
  AdamState<double> state;
  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;
  std::vector<std::size_t> order(features.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      for (auto* p : params) p->zero_grad();
      Tape<double> tape;
      const int label = labels[i];
      Var<double> loss = ad::softmax_cross_entropy(classifier_logits(tape, clf, tape.constant(features[i]), true),
                                                   std::span<const int>(&label, 1));
      tape.backward(loss);
      adam_step<double>(params, state, adam);
    }
  }
  return clf;
}

namespace {

Tensor<double> eigen_tensor(const RowMatrix& m) {
  Tensor<double> t = Tensor<double>::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  std::copy_n(m.data(), m.size(), t.data());
  return t;
}

RowMatrix tensor_eigen(const Tensor<double>& t) {
  RowMatrix m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  std::copy_n(t.data(), t.size(), m.data());
  return m;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

Checkpoint classifier_to_checkpoint(const Classifier& clf) {
  Checkpoint c;
  c.precision = Precision::Double;
  c.metadata["kind"] = "classifier";
  c.metadata["components"] = std::to_string(clf.config.components);
  c.metadata["frames"] = std::to_string(clf.config.frames);
  c.metadata["hidden"] = join_sizes(clf.config.hidden);
  c.tensors.emplace_back("pca.mean", eigen_tensor(clf.basis.mean));
  c.tensors.emplace_back("pca.components", eigen_tensor(clf.basis.components));
  c.tensors.emplace_back("pca.variance", eigen_tensor(clf.basis.variance.transpose()));
  for (std::size_t l = 0; l < clf.weights.size(); ++l) {
    c.tensors.emplace_back(clf.weights[l].name, clf.weights[l].value);
    c.tensors.emplace_back(clf.biases[l].name, clf.biases[l].value);
  }
  return c;
}

Classifier classifier_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta("kind") != "classifier") throw Error("checkpoint does not hold a classifier");
  Classifier clf;
  clf.config.components = std::stoi(ckpt.meta("components"));
  clf.config.frames = std::stoi(ckpt.meta("frames"));
  clf.config.hidden.clear();
  std::istringstream hidden(ckpt.meta("hidden"));
  for (std::string tok; std::getline(hidden, tok, ',');) {
    if (!tok.empty()) clf.config.hidden.push_back(static_cast<std::size_t>(std::stoul(tok)));
  }
  clf.basis.mean = tensor_eigen(ckpt.tensor("pca.mean"));
  clf.basis.components = tensor_eigen(ckpt.tensor("pca.components"));
  clf.basis.variance = tensor_eigen(ckpt.tensor("pca.variance")).transpose();
  if (clf.basis.k() != clf.config.components) throw Error("classifier checkpoint: PCA size does not match its metadata");
  std::vector<std::size_t> sizes{static_cast<std::size_t>(clf.config.frames * clf.config.components)};
  sizes.insert(sizes.end(), clf.config.hidden.begin(), clf.config.hidden.end());
  sizes.push_back(kNumExpressions);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::string w = "fc" + std::to_string(l) + ".weight", b = "fc" + std::to_string(l) + ".bias";
    Parameter<double> pw{w, ckpt.tensor(w), {}}, pb{b, ckpt.tensor(b), {}};
    if (pw.value.shape() != std::vector<std::size_t>{sizes[l + 1], sizes[l]} ||
        pb.value.shape() != std::vector<std::size_t>{1, sizes[l + 1]}) {
      throw Error("classifier checkpoint: layer " + std::to_string(l) + " has the wrong shape");
    }
    clf.weights.push_back(std::move(pw));
    clf.biases.push_back(std::move(pb));
  }
  return clf;
}

Tensor<double> classifier_probabilities(Classifier& clf, const Mesh& neutral, std::span<const Frame> frames) {
  Tape<double> tape;
  return softmax_rows(classifier_logits(tape, clf, tape.constant(classifier_features(clf, neutral, frames)), false).value());
}

int classify(Classifier& clf, const Mesh& neutral, std::span<const Frame> frames) {
  const Tensor<double> p = classifier_probabilities(clf, neutral, frames);
  return static_cast<int>(std::max_element(p.storage().begin(), p.storage().end()) - p.storage().begin());
}

ClassMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw Error("classification_metrics: length mismatch");
  ClassMetrics m;
  int correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= kNumExpressions || predicted[i] < 0 || predicted[i] >= kNumExpressions) {
      throw Error("classification_metrics: class index out of range");
    }
    ++m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    correct += truth[i] == predicted[i];
  }
  for (std::size_t c = 0; c < kNumExpressions; ++c) {
    int row = 0, col = 0;
    for (std::size_t j = 0; j < kNumExpressions; ++j) {
      row += m.confusion[c][j];
      col += m.confusion[j][c];
    }
    const double tp = m.confusion[c][c];
    m.precision[c] = col ? tp / col : 0.0;
    m.recall[c] = row ? tp / row : 0.0;
    const double pr = m.precision[c] + m.recall[c];
    m.f1[c] = pr > 0 ? 2.0 * m.precision[c] * m.recall[c] / pr : 0.0;
    m.macro_precision += m.precision[c];
    m.macro_recall += m.recall[c];
    m.macro_f1 += m.f1[c];
  }
  m.macro_precision /= kNumExpressions;
  m.macro_recall /= kNumExpressions;
  m.macro_f1 /= kNumExpressions;
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  return m;
}

template <class T>
std::vector<Frame> interpolate_latents(Generator<T>& gen, const Mesh& neutral, const Tensor<T>& za, const Tensor<T>& zb,
                                       int steps) {
  if (steps < 2) throw Error("interpolate: steps must be >= 2");
  if (za.size() != gen.latent || zb.size() != gen.latent) throw Error("interpolate: latent size mismatch");
  Tensor<T> z = Tensor<T>::matrix(static_cast<std::size_t>(steps), gen.latent);
  for (int i = 0; i < steps; ++i) {
    const double alpha = static_cast<double>(i) / (steps - 1);
    for (std::size_t j = 0; j < gen.latent; ++j) {
      z(static_cast<std::size_t>(i), j) =
          static_cast<T>(alpha * static_cast<double>(zb[j]) + (1.0 - alpha) * static_cast<double>(za[j]));
    }
  }
  return decode_latents(gen, neutral, z);
}

template std::vector<Frame> interpolate_latents(Generator<float>&, const Mesh&, const Tensor<float>&, const Tensor<float>&, int);
template std::vector<Frame> interpolate_latents(Generator<double>&, const Mesh&, const Tensor<double>&, const Tensor<double>&,
                                                int);

ModelEval evaluate_generations(std::string name, std::span<const ExpressionSequence> gt,
                               std::span<const std::vector<Frame>> generated) {
  if (gt.size() != generated.size()) throw Error("evaluate: one generated sequence per ground-truth sequence is required");
  ModelEval m;
  m.name = std::move(name);
  std::vector<double> curve_sum;
  std::vector<int> curve_count;
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double err = per_vertex_error(generated[i], gt[i].frames);
    const auto e = static_cast<std::size_t>(gt[i].label.expression);
    m.expression_error[e] += err;
    ++m.expression_count[e];
    total += err;
    const auto c = per_frame_l1(generated[i], gt[i].frames);
    if (c.size() > curve_sum.size()) {
      curve_sum.resize(c.size(), 0.0);
      curve_count.resize(c.size(), 0);
    }
    for (std::size_t t = 0; t < c.size(); ++t) {
      curve_sum[t] += c[t];
      ++curve_count[t];
    }
  }
  for (std::size_t e = 0; e < kNumExpressions; ++e) {
    if (m.expression_count[e]) m.expression_error[e] /= m.expression_count[e];
  }
  m.total_error = gt.empty() ? 0.0 : total / static_cast<double>(gt.size());
  for (std::size_t t = 0; t < curve_sum.size(); ++t) m.curve.push_back(curve_sum[t] / curve_count[t]);
  return m;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  for (const auto& h : r.header) out << "# " << h << "\n";
  if (!r.models.empty()) {
    out << "\nPer-vertex error (mm)\n";
    out << "model";
    for (auto e : all_expressions()) out << "\t" << expression_name(e);
    out << "\ttotal\n";
    for (const auto& m : r.models) {
      out << m.name;
      for (std::size_t e = 0; e < kNumExpressions; ++e) out << "\t" << (m.expression_count[e] ? fmt(m.expression_error[e]) : "-");
      out << "\t" << fmt(m.total_error) << "\n";
    }
  }
  for (const auto& c : r.classification) {
    out << "\nClassification on " << c.source << "\n";
    out << "class\tprecision\trecall\tf1\n";
    for (auto e : all_expressions()) {
      const auto i = static_cast<std::size_t>(e);
      out << expression_name(e) << "\t" << fmt(c.metrics.precision[i], 3) << "\t" << fmt(c.metrics.recall[i], 3) << "\t"
          << fmt(c.metrics.f1[i], 3) << "\n";
    }
    out << "total\t" << fmt(c.metrics.macro_precision, 3) << "\t" << fmt(c.metrics.macro_recall, 3) << "\t"
        << fmt(c.metrics.macro_f1, 3) << "\n";
  }
  return out.str();
}

std::string format_report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "section,name,class,metric,value\n";
  for (const auto& m : r.models) {
    for (auto e : all_expressions()) {
      const auto i = static_cast<std::size_t>(e);
      if (m.expression_count[i]) out << "error," << m.name << "," << expression_name(e) << ",per_vertex_mm," << fmt(m.expression_error[i], 6) << "\n";
    }
    out << "error," << m.name << ",total,per_vertex_mm," << fmt(m.total_error, 6) << "\n";
  }
  for (const auto& c : r.classification) {
    for (auto e : all_expressions()) {
      const auto i = static_cast<std::size_t>(e);
      out << "classification," << c.source << "," << expression_name(e) << ",precision," << fmt(c.metrics.precision[i], 6) << "\n";
      out << "classification," << c.source << "," << expression_name(e) << ",recall," << fmt(c.metrics.recall[i], 6) << "\n";
      out << "classification," << c.source << "," << expression_name(e) << ",f1," << fmt(c.metrics.f1[i], 6) << "\n";
    }
    out << "classification," << c.source << ",total,precision," << fmt(c.metrics.macro_precision, 6) << "\n";
    out << "classification," << c.source << ",total,recall," << fmt(c.metrics.macro_recall, 6) << "\n";
    out << "classification," << c.source << ",total,f1," << fmt(c.metrics.macro_f1, 6) << "\n";
  }
  return out.str();
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
  };
  write(dir / "report.txt", format_report(r));
  write(dir / "report.csv", format_report_csv(r));
  for (const auto& m : r.models) {
    std::ostringstream c;
    for (std::size_t t = 0; t < m.curve.size(); ++t) c << t << " " << fmt(m.curve[t], 6) << "\n";
    write(dir / ("curve_" + m.name + ".txt"), c.str());
  }
}

}  // namespace meshmotion
