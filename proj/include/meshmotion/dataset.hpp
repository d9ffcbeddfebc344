#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "meshmotion/mesh.hpp"
#include "meshmotion/sampling.hpp"

namespace meshmotion {

enum class Expression : int { Happy, Sad, Surprise, Angry, Disgust, Fear };
inline constexpr int kNumExpressions = 6;

std::string_view expression_name(Expression e);
Expression parse_expression(std::string_view name);
std::array<Expression, kNumExpressions> all_expressions();

/// Onset/apex/offset timing of one sequence plus its amplitude s in (0, 1].
struct MotionLabel {
  Expression expression = Expression::Happy;
  int frames = 0;
  int onset = 0;
  int apex_start = 0;
  int apex_end = 0;
  int offset_end = 0;
  double scale = 1.0;

  void validate() const;
  friend bool operator==(const MotionLabel&, const MotionLabel&) = default;
};

/// Piecewise-linear amplitude of `label` at frame t.
double amplitude(const MotionLabel& label, int t);

/// 6 x T one-hot-with-amplitude motion signal.
RowMatrix label_signal(const MotionLabel& label);

using Frame = std::vector<Vec3>;

struct ExpressionSequence {
  std::string subject;
  Mesh neutral;
  std::vector<Frame> frames;
  MotionLabel label;

  int num_frames() const { return static_cast<int>(frames.size()); }
  Mesh frame_mesh(int t) const { return {frames[static_cast<std::size_t>(t)], neutral.faces}; }
};

/// Per-expression mean and standard deviation of mean_abs_deformation.
struct ExpressionStats {
  std::array<double, kNumExpressions> mean{};
  std::array<double, kNumExpressions> stddev{};
};

inline constexpr double kScaleFloor = 0.05;

double extremeness_scale(double mean_deformation, const ExpressionStats& stats, Expression e);

/// Mean over frames and vertices of the displacement norm from the neutral.
double mean_abs_deformation(const ExpressionSequence& seq);

/// Root mean square of all displacement coordinates; 1 for an empty or static set.
double displacement_rms(std::span<const ExpressionSequence> sequences);

ExpressionSequence temporal_subsample(const ExpressionSequence& seq, int stride);

/// Statistics over the given sequences. Expressions with fewer than two
/// sequences or zero spread get a tiny positive deviation.
ExpressionStats compute_stats(std::span<const ExpressionSequence> sequences);

/// Recomputes every label's s from the data.
void assign_scales(std::span<ExpressionSequence> sequences, const ExpressionStats& stats);

struct SynthConfig {
  int subjects = 25;
  std::vector<Expression> expressions{Expression::Happy, Expression::Sad,   Expression::Surprise,
                                      Expression::Angry, Expression::Disgust, Expression::Fear};
  /// Frames generated before temporal subsampling.
  int frames = 100;
  int stride = 5;
  std::uint64_t seed = 0;
  double noise = 0.01;
  double intensity_min = 0.4;
  double intensity_max = 1.6;
  /// Use onset 10, apex 30-80, offset 95 (before subsampling) for every sequence.
  bool fixed_timing = false;
};

struct SynthDataset {
  std::vector<ExpressionSequence> sequences;
  /// Full-amplitude displacement field of each sequence (intensity included).
  std::vector<Frame> fields;
  ExpressionStats stats;
};

/// Displacement field of an expression on template coordinates, before any
/// subject perturbation.
Frame expression_field(const Mesh& templ, Expression e);

SynthDataset synth_dataset(const Mesh& templ, const SynthConfig& config);

/// Layout: root/<subject>/neutral.obj, root/<subject>/<expression>/frame_%04d.obj
/// and root/<subject>/<expression>/label.txt. Header lines become comments
/// in every written file.
void save_dataset(std::span<const ExpressionSequence> sequences, const std::filesystem::path& root,
                  const std::vector<std::string>& header_comment = {});
std::vector<ExpressionSequence> load_dataset(const std::filesystem::path& root);

MotionLabel parse_label(const std::string& text, int frames, const std::string& what = "label");
std::string format_label(const MotionLabel& label);

std::string frame_filename(int t);

/// Split file: one held-out subject id per line, '#' starts a comment.
std::set<std::string> read_split(const std::filesystem::path& path);
void write_split(const std::set<std::string>& test_subjects, const std::filesystem::path& path,
                 const std::vector<std::string>& header_comment = {});
/// The last `n_test` subject ids in sorted order.
std::set<std::string> split_last(std::span<const ExpressionSequence> sequences, std::size_t n_test);

struct Split {
  std::vector<ExpressionSequence> train;
  std::vector<ExpressionSequence> test;
};
Split apply_split(std::vector<ExpressionSequence> sequences, const std::set<std::string>& test_subjects);

}  // namespace meshmotion
