#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "meshmotion/autodiff.hpp"
#include "meshmotion/checkpoint.hpp"
#include "meshmotion/dataset.hpp"
#include "meshmotion/layers.hpp"
#include "meshmotion/pca.hpp"
#include "meshmotion/topology_cache.hpp"

namespace meshmotion {

enum class DecoderType { Spiral, Blendshape };

std::string_view decoder_name(DecoderType t);

/// Channel widths along the decoder: the input of each spiral convolution
/// followed by the output width 3. Five levels give 64, 32, 16, 8, 3.
std::vector<std::size_t> decoder_channels(std::size_t levels);

/// LSTM encoder plus either the spiral mesh decoder or a frozen linear
/// blendshape decoder. Displacements are in mm and added to the neutral.
template <class T>
struct Generator {
  DecoderType type = DecoderType::Spiral;
  std::size_t latent = 64;
  std::size_t num_vertices = 0;

  Parameter<T> w_ih, w_hh, b_lstm;

  // Spiral decoder.
  Parameter<T> fc_w, fc_b;
  std::vector<Parameter<T>> conv_w, conv_b;
  std::vector<std::size_t> channels;
  std::vector<CsrMatrix<T>> up;
  std::vector<SpiralTable> tables;
  /// Fixed factor on the last convolution's output (mm per unit).
  double output_scale = 1.0;

  // Blendshape decoder (not trained): mean 1 x 3N, components latent x 3N.
  Tensor<T> blend_mean;
  Tensor<T> blend_components;

  std::vector<Parameter<T>*> parameters();
  std::size_t parameter_count() const;
};

inline constexpr std::size_t kSignalWidth = 6;
inline constexpr std::size_t kFirstChannel = 64;

/// `output_scale` multiplies the decoder output; displacement_rms of the
/// training set is the intended value.
template <class T>
Generator<T> make_spiral_generator(const TopologyCache& topology, std::uint64_t seed, std::size_t latent = 64,
                                   double output_scale = 1.0);

/// Components are scaled by the square root of their variance, so a latent
/// coordinate of 1 is one standard deviation of that mode.
template <class T>
Generator<T> make_blendshape_generator(const PcaBasis& basis, std::uint64_t seed);

/// Rebuilds the up-sampling and spiral data of a spiral generator.
template <class T>
void attach_topology(Generator<T>& gen, const TopologyCache& topology);

/// T x 6 input rows (the transposed label signal).
template <class T>
Tensor<T> signal_rows(const MotionLabel& label);

/// z_t for every frame: T x latent.
template <class T>
Var<T> encode(Tape<T>& tape, Generator<T>& gen, Var<T> signal, bool trainable = true);

/// Displacements of all frames stacked as (T * N) x 3.
template <class T>
Var<T> decode(Tape<T>& tape, Generator<T>& gen, Var<T> z, bool trainable = true);

/// Shape of each intermediate decoder activation for one frame, e.g.
/// "64", "46x64", "228x64", "228x32", ...
template <class T>
std::vector<std::string> decoder_shape_trace(Generator<T>& gen);

/// Loss on the tape: mean |d - g| plus mean |(d_t - d_{t-1}) - (g_t - g_{t-1})|.
/// Inputs are stacked (frames * N) x 3 displacements.
template <class T>
Var<T> sequence_loss(Var<T> pred, Var<T> gt, std::size_t frames);

struct LossTerms {
  double reconstruction = 0.0;
  double coherence = 0.0;
  double total = 0.0;
};

/// The same loss on frame positions in double precision.
LossTerms sequence_loss(std::span<const Frame> pred, std::span<const Frame> gt);

template <class T>
Tensor<T> encode_latents(Generator<T>& gen, const MotionLabel& label);

template <class T>
std::vector<Frame> decode_latents(Generator<T>& gen, const Mesh& neutral, const Tensor<T>& z);

/// Frame t = neutral + D(z_t).
template <class T>
std::vector<Frame> generate(Generator<T>& gen, const Mesh& neutral, const MotionLabel& label);

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-3;
  double lr_decay = 0.99;
  double weight_decay = 5e-5;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> learning_rate;
  std::size_t rejected_steps = 0;
};

using EpochCallback = std::function<void(int epoch, double lr, double loss)>;

/// One Adam step per sequence, sequences shuffled each epoch with a seeded
/// generator, learning rate multiplied by lr_decay after every epoch.
template <class T>
TrainHistory train(Generator<T>& gen, std::span<const ExpressionSequence> sequences, const TrainConfig& config,
                   const EpochCallback& on_epoch = {});

/// Mean training loss of the generator over sequences.
template <class T>
double evaluate_loss(Generator<T>& gen, std::span<const ExpressionSequence> sequences);

template <class T>
Checkpoint to_checkpoint(const Generator<T>& gen);

/// Spiral checkpoints need the topology they were trained on.
template <class T>
Generator<T> generator_from_checkpoint(const Checkpoint& ckpt, const TopologyCache* topology);

template <class U, class T>
Generator<U> convert_generator(const Generator<T>& gen, const TopologyCache* topology);

}  // namespace meshmotion
