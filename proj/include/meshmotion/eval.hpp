#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "meshmotion/dataset.hpp"
#include "meshmotion/model.hpp"
#include "meshmotion/pca.hpp"

namespace meshmotion {

/// One row per frame: the flattened displacement from the neutral (x0 y0 z0 x1 ...).
RowMatrix deformation_rows(std::span<const ExpressionSequence> sequences);

/// Mean over frames and vertices of the Euclidean distance.
double per_vertex_error(std::span<const Frame> pred, std::span<const Frame> gt);

/// Per-frame mean absolute coordinate error.
std::vector<double> per_frame_l1(std::span<const Frame> pred, std::span<const Frame> gt);

/// Nearest-frame indices taking T frames to `target` frames.
std::vector<std::size_t> resample_indices(std::size_t frames, std::size_t target);

struct ClassifierConfig {
  int components = 64;
  int frames = 20;
  std::vector<std::size_t> hidden{256, 64};
  int epochs = 13;
  double learning_rate = 1e-3;
  double weight_decay = 5e-3;
  std::uint64_t seed = 0;
};

/// Per-frame PCA codes (mm, not whitened) concatenated over the resampled frames,
/// followed by dense layers with ReLU between them and a softmax output.
struct Classifier {
  ClassifierConfig config;
  PcaBasis basis;
  std::vector<Parameter<double>> weights;
  std::vector<Parameter<double>> biases;
};

Classifier train_classifier(std::span<const ExpressionSequence> train, const ClassifierConfig& config);

/// Input feature row of one sequence (1 x frames * components).
Tensor<double> classifier_features(const Classifier& clf, const Mesh& neutral, std::span<const Frame> frames);

/// Class probabilities (1 x 6).
Tensor<double> classifier_probabilities(Classifier& clf, const Mesh& neutral, std::span<const Frame> frames);

int classify(Classifier& clf, const Mesh& neutral, std::span<const Frame> frames);

/// Stored in double precision with the config in the metadata.
Checkpoint classifier_to_checkpoint(const Classifier& clf);
Classifier classifier_from_checkpoint(const Checkpoint& ckpt);

struct ClassMetrics {
  std::array<std::array<int, kNumExpressions>, kNumExpressions> confusion{};  // [truth][predicted]
  std::array<double, kNumExpressions> precision{};
  std::array<double, kNumExpressions> recall{};
  std::array<double, kNumExpressions> f1{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

/// Zero denominators give 0. Macro values average all six classes.
ClassMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted);

/// z_alpha = alpha * zB + (1 - alpha) * zA for alpha = i / (steps - 1), each
/// decoded and added to the neutral.
template <class T>
std::vector<Frame> interpolate_latents(Generator<T>& gen, const Mesh& neutral, const Tensor<T>& za, const Tensor<T>& zb,
                                       int steps);

struct ModelEval {
  std::string name;
  std::array<double, kNumExpressions> expression_error{};
  std::array<int, kNumExpressions> expression_count{};
  double total_error = 0.0;
  /// Mean per-frame L1 over sequences.
  std::vector<double> curve;
};

/// `generated[i]` holds the frames produced for `gt[i]`.
ModelEval evaluate_generations(std::string name, std::span<const ExpressionSequence> gt,
                               std::span<const std::vector<Frame>> generated);

struct ClassifierEval {
  std::string source;
  ClassMetrics metrics;
};

struct EvalReport {
  std::vector<std::string> header;
  std::vector<ModelEval> models;
  std::vector<ClassifierEval> classification;
};

std::string format_report(const EvalReport& report);
std::string format_report_csv(const EvalReport& report);

/// Writes report.txt, report.csv and curve_<model>.txt into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace meshmotion
