#include "meshmotion/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>

namespace meshmotion {

namespace {

template <class T>
Parameter<T> make_param(std::string name, std::size_t rows, std::size_t cols) {
  Parameter<T> p{std::move(name), Tensor<T>::matrix(rows, cols), {}};
  p.zero_grad();
  return p;
}

template <class T>
Var<T> bind(Tape<T>& tape, Parameter<T>& p, bool trainable) {
  return trainable ? tape.parameter(p) : tape.constant(p.value);
}

template <class T>
void init_lstm(Generator<T>& g, std::mt19937_64& rng) {
  const std::size_t h = g.latent;
  g.w_ih = make_param<T>("lstm.w_ih", 4 * h, kSignalWidth);
  g.w_hh = make_param<T>("lstm.w_hh", 4 * h, h);
  g.b_lstm = make_param<T>("lstm.bias", 1, 4 * h);
  init_uniform(g.w_ih, 1.0 / std::sqrt(static_cast<double>(kSignalWidth)), rng);
  init_uniform(g.w_hh, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  for (std::size_t j = h; j < 2 * h; ++j) g.b_lstm.value[j] = T(1);
}

std::string dims(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

}  // namespace

std::string_view decoder_name(DecoderType t) { return t == DecoderType::Spiral ? "spiral" : "blendshape"; }

std::vector<std::size_t> decoder_channels(std::size_t levels) {
  if (levels < 2) throw Error("decoder needs at least two hierarchy levels");
  std::vector<std::size_t> c;
  std::size_t width = kFirstChannel;
  for (std::size_t k = 0; k + 1 < levels; ++k) {
    c.push_back(width);
    width = std::max<std::size_t>(width / 2, 8);
  }
  c.push_back(3);
  return c;
}

template <class T>
std::vector<Parameter<T>*> Generator<T>::parameters() {
  std::vector<Parameter<T>*> out{&w_ih, &w_hh, &b_lstm};
  if (type == DecoderType::Spiral) {
    out.push_back(&fc_w);
    out.push_back(&fc_b);
    for (std::size_t k = 0; k < conv_w.size(); ++k) {
      out.push_back(&conv_w[k]);
      out.push_back(&conv_b[k]);
    }
  }
  return out;
}

template <class T>
std::size_t Generator<T>::parameter_count() const {
  std::size_t n = w_ih.value.size() + w_hh.value.size() + b_lstm.value.size();
  if (type == DecoderType::Spiral) {
    n += fc_w.value.size() + fc_b.value.size();
    for (std::size_t k = 0; k < conv_w.size(); ++k) n += conv_w[k].value.size() + conv_b[k].value.size();
  }
  return n;
}

template <class T>
void attach_topology(Generator<T>& gen, const TopologyCache& topology) {
  const auto& h = topology.hierarchy;
  if (topology.spirals.size() != h.num_levels()) throw Error("topology cache: spiral tables do not match levels");
  gen.up.clear();
  for (const SparseMatrix& q : h.up) gen.up.push_back(to_csr<T>(q));
  gen.tables = topology.spirals;
  gen.num_vertices = static_cast<std::size_t>(h.levels.back().num_vertices());
}

template <class T>
Generator<T> make_spiral_generator(const TopologyCache& topology, std::uint64_t seed, std::size_t latent,
                                   double output_scale) {
  if (!(output_scale > 0.0) || !std::isfinite(output_scale)) throw Error("output scale must be positive");
  Generator<T> g;
  g.output_scale = output_scale;
  g.type = DecoderType::Spiral;
  g.latent = latent;
  attach_topology(g, topology);
  g.channels = decoder_channels(topology.hierarchy.num_levels());
  std::mt19937_64 rng(seed);
  init_lstm(g, rng);
  const std::size_t n0 = static_cast<std::size_t>(topology.spirals.front().num_vertices());
  g.fc_w = make_param<T>("fc.weight", n0 * kFirstChannel, latent);
  g.fc_b = make_param<T>("fc.bias", 1, n0 * kFirstChannel);
  init_uniform(g.fc_w, 1.0 / std::sqrt(static_cast<double>(latent)), rng);
  for (std::size_t k = 0; k + 1 < g.channels.size(); ++k) {
    const std::size_t len = static_cast<std::size_t>(g.tables[k + 1].length);
    g.conv_w.push_back(make_param<T>("conv" + std::to_string(k) + ".weight", len * g.channels[k], g.channels[k + 1]));
    g.conv_b.push_back(make_param<T>("conv" + std::to_string(k) + ".bias", 1, g.channels[k + 1]));
    init_uniform(g.conv_w.back(), std::sqrt(6.0 / static_cast<double>(len * g.channels[k])), rng);
  }
  return g;
}

template <class T>
Generator<T> make_blendshape_generator(const PcaBasis& basis, std::uint64_t seed) {
  if (basis.dim() % 3 != 0) throw Error("blendshape basis dimension is not a multiple of 3");
  Generator<T> g;
  g.type = DecoderType::Blendshape;
  g.latent = static_cast<std::size_t>(basis.k());
  g.num_vertices = static_cast<std::size_t>(basis.dim() / 3);
  std::mt19937_64 rng(seed);
  init_lstm(g, rng);
  const std::size_t d = static_cast<std::size_t>(basis.dim());
  g.blend_mean = Tensor<T>::matrix(1, d);
  g.blend_components = Tensor<T>::matrix(g.latent, d);
  for (std::size_t j = 0; j < d; ++j) g.blend_mean[j] = static_cast<T>(basis.mean(static_cast<Eigen::Index>(j)));
  for (std::size_t i = 0; i < g.latent; ++i) {
    const double s = std::sqrt(std::max(basis.variance(static_cast<Eigen::Index>(i)), 0.0));
    for (std::size_t j = 0; j < d; ++j) {
      g.blend_components(i, j) =
          static_cast<T>(s * basis.components(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  return g;
}

template <class T>
Tensor<T> signal_rows(const MotionLabel& label) {
  const RowMatrix e = label_signal(label);
  Tensor<T> out = Tensor<T>::matrix(static_cast<std::size_t>(label.frames), kSignalWidth);
  for (int t = 0; t < label.frames; ++t) {
    for (std::size_t k = 0; k < kSignalWidth; ++k) out(static_cast<std::size_t>(t), k) = static_cast<T>(e(static_cast<Eigen::Index>(k), t));
  }
  return out;
}

template <class T>
Var<T> encode(Tape<T>& tape, Generator<T>& gen, Var<T> signal, bool trainable) {
  if (signal.cols() != kSignalWidth || signal.rows() == 0) throw Error("encode: signal must be T x 6 with T >= 1");
  const std::size_t h = gen.latent;
  Var<T> wi = bind(tape, gen.w_ih, trainable), wh = bind(tape, gen.w_hh, trainable), b = bind(tape, gen.b_lstm, trainable);
  Var<T> proj = ad::matmul(signal, ad::transpose(wi));
  LstmState<T> s{tape.constant(Tensor<T>::matrix(1, h)), tape.constant(Tensor<T>::matrix(1, h))};
  std::vector<Var<T>> hs;
  for (std::size_t t = 0; t < signal.rows(); ++t) {
    s = lstm_cell(ad::slice_rows(proj, t, t + 1), s, wh, b);
    hs.push_back(s.h);
  }
  return hs.size() == 1 ? hs.front() : ad::concat_rows(hs);
}

template <class T>
Var<T> decode(Tape<T>& tape, Generator<T>& gen, Var<T> z, bool trainable) {
  if (z.cols() != gen.latent) throw Error("decode: latent width " + std::to_string(z.cols()) + ", expected " + std::to_string(gen.latent));
  const std::size_t frames = z.rows();
  if (gen.type == DecoderType::Blendshape) {
    Var<T> flat = ad::add_row(ad::matmul(z, tape.constant(gen.blend_components)), tape.constant(gen.blend_mean));
    return ad::reshape(flat, frames * gen.num_vertices, 3);
  }
  if (gen.tables.size() != gen.channels.size() || gen.up.size() + 1 != gen.tables.size()) {
    throw Error("decode: generator has no topology attached");
  }
  const std::size_t n0 = static_cast<std::size_t>(gen.tables.front().num_vertices());
  Var<T> x = dense(z, bind(tape, gen.fc_w, trainable), bind(tape, gen.fc_b, trainable));
  x = ad::reshape(x, frames * n0, kFirstChannel);
  for (std::size_t k = 0; k < gen.up.size(); ++k) {
    x = unpool(x, gen.up[k]);
    x = spiral_conv(x, gen.tables[k + 1], bind(tape, gen.conv_w[k], trainable), bind(tape, gen.conv_b[k], trainable));
    if (k + 1 < gen.up.size()) x = ad::relu(x);
  }
  return gen.output_scale == 1.0 ? x : ad::scale(x, static_cast<T>(gen.output_scale));
}

template <class T>
std::vector<std::string> decoder_shape_trace(Generator<T>& gen) {
  if (gen.type != DecoderType::Spiral) throw Error("shape trace is only defined for the spiral decoder");
  Tape<T> tape;
  Var<T> z = tape.constant(Tensor<T>::matrix(1, gen.latent));
  std::vector<std::string> trace{std::to_string(gen.latent)};
  const std::size_t n0 = static_cast<std::size_t>(gen.tables.front().num_vertices());
  Var<T> x = ad::reshape(dense(z, tape.constant(gen.fc_w.value), tape.constant(gen.fc_b.value)), n0, kFirstChannel);
  trace.push_back(dims(x.rows(), x.cols()));
  for (std::size_t k = 0; k < gen.up.size(); ++k) {
    x = unpool(x, gen.up[k]);
    trace.push_back(dims(x.rows(), x.cols()));
    x = spiral_conv(x, gen.tables[k + 1], tape.constant(gen.conv_w[k].value), tape.constant(gen.conv_b[k].value));
    trace.push_back(dims(x.rows(), x.cols()));
  }
  return trace;
}

template <class T>
Var<T> sequence_loss(Var<T> pred, Var<T> gt, std::size_t frames) {
  if (frames == 0) throw Error("loss: sequence has no frames");
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.rows() % frames != 0) {
    throw Error("loss: prediction " + pred.value().shape_string() + " and ground truth " + gt.value().shape_string() +
                " do not match");
  }
  Var<T> lr = ad::l1_loss(pred, gt);
  if (frames == 1) return lr;
  const std::size_t n = pred.rows() / frames, total = pred.rows();
  Var<T> dp = ad::sub(ad::slice_rows(pred, n, total), ad::slice_rows(pred, 0, total - n));
  Var<T> dg = ad::sub(ad::slice_rows(gt, n, total), ad::slice_rows(gt, 0, total - n));
  return ad::add(lr, ad::l1_loss(dp, dg));
}

LossTerms sequence_loss(std::span<const Frame> pred, std::span<const Frame> gt) {
  if (pred.empty()) throw Error("loss: sequence has no frames");
  if (pred.size() != gt.size()) throw Error("loss: frame counts differ");
  LossTerms out;
  double rsum = 0.0, csum = 0.0;
  std::size_t rcount = 0, ccount = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred[t].size() != gt[t].size() || pred[t].size() != pred[0].size()) throw Error("loss: vertex counts differ");
    for (std::size_t v = 0; v < pred[t].size(); ++v) {
      for (int k = 0; k < 3; ++k) {
        rsum += std::abs(pred[t][v][k] - gt[t][v][k]);
        ++rcount;
        if (t > 0) {
          csum += std::abs((pred[t][v][k] - pred[t - 1][v][k]) - (gt[t][v][k] - gt[t - 1][v][k]));
          ++ccount;
        }
      }
    }
  }
  out.reconstruction = rcount ? rsum / static_cast<double>(rcount) : 0.0;
  out.coherence = ccount ? csum / static_cast<double>(ccount) : 0.0;
  out.total = out.reconstruction + out.coherence;
  return out;
}

template <class T>
Tensor<T> encode_latents(Generator<T>& gen, const MotionLabel& label) {
  Tape<T> tape;
  return encode(tape, gen, tape.constant(signal_rows<T>(label)), false).value();
}

template <class T>
std::vector<Frame> decode_latents(Generator<T>& gen, const Mesh& neutral, const Tensor<T>& z) {
  if (static_cast<std::size_t>(neutral.num_vertices()) != gen.num_vertices) {
    throw Error("neutral mesh has " + std::to_string(neutral.num_vertices()) + " vertices, the model expects " +
                std::to_string(gen.num_vertices));
  }
  Tape<T> tape;
  const Tensor<T>& d = decode(tape, gen, tape.constant(z), false).value();
  const std::size_t n = gen.num_vertices;
  std::vector<Frame> out(z.rows(), Frame(n));
  for (std::size_t t = 0; t < z.rows(); ++t) {
    for (std::size_t v = 0; v < n; ++v) {
      for (int k = 0; k < 3; ++k) {
        out[t][v][k] = neutral.vertices[v][k] + static_cast<double>(d((t * n + v), static_cast<std::size_t>(k)));
      }
    }
  }
  return out;
}

template <class T>
std::vector<Frame> generate(Generator<T>& gen, const Mesh& neutral, const MotionLabel& label) {
  return decode_latents(gen, neutral, encode_latents(gen, label));
}

namespace {

template <class T>
struct Prepared {
  Tensor<T> signal;
  Tensor<T> target;
  std::size_t frames = 0;
};

template <class T>
Prepared<T> prepare(const ExpressionSequence& seq, std::size_t n) {
  if (seq.neutral.vertices.size() != n) {
    throw Error("sequence " + seq.subject + "/" + std::string(expression_name(seq.label.expression)) + " has " +
                std::to_string(seq.neutral.vertices.size()) + " vertices, the model expects " + std::to_string(n));
  }
  Prepared<T> p;
  p.frames = seq.frames.size();
  p.signal = signal_rows<T>(seq.label);
  p.target = Tensor<T>::matrix(p.frames * n, 3);
  for (std::size_t t = 0; t < p.frames; ++t) {
    for (std::size_t v = 0; v < n; ++v) {
      for (int k = 0; k < 3; ++k) {
        p.target(t * n + v, static_cast<std::size_t>(k)) =
            static_cast<T>(seq.frames[t][v][k] - seq.neutral.vertices[v][k]);
      }
    }
  }
  return p;
}

}  // namespace

template <class T>
TrainHistory train(Generator<T>& gen, std::span<const ExpressionSequence> sequences, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
  TrainHistory hist;
  if (cfg.epochs <= 0) return hist;
  if (sequences.empty()) throw Error("train: empty dataset");
  if (!(cfg.learning_rate > 0.0) || !(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0) || cfg.weight_decay < 0.0) {
    throw Error("train: learning rate must be positive and decay in (0, 1]");
  }
  std::vector<Prepared<T>> data;
  for (const auto& s : sequences) data.push_back(prepare<T>(s, gen.num_vertices));
  std::vector<Parameter<T>*> params = gen.parameters();
  AdamState<T> state;
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.weight_decay = cfg.weight_decay;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      for (Parameter<T>* p : params) p->zero_grad();
      Tape<T> tape;
      Var<T> z = encode(tape, gen, tape.constant(data[i].signal));
      Var<T> loss = sequence_loss(decode(tape, gen, z), tape.constant(data[i].target), data[i].frames);
      const double l = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(l)) {
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", sequence " + sequences[i].subject + "/" +
                    std::string(expression_name(sequences[i].label.expression)));
      }
      total += l;
      tape.backward(loss);
      if (adam_step<T>(params, state, adam) == StepStatus::RejectedNonFinite) ++hist.rejected_steps;
    }
    const double mean = total / static_cast<double>(data.size());
    hist.loss.push_back(mean);
    hist.learning_rate.push_back(adam.learning_rate);
    if (on_epoch) on_epoch(epoch, adam.learning_rate, mean);
    adam.learning_rate *= cfg.lr_decay;
  }
  return hist;
}

template <class T>
double evaluate_loss(Generator<T>& gen, std::span<const ExpressionSequence> sequences) {
  if (sequences.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : sequences) {
    const Prepared<T> p = prepare<T>(s, gen.num_vertices);
    Tape<T> tape;
    Var<T> z = encode(tape, gen, tape.constant(p.signal), false);
    total += static_cast<double>(sequence_loss(decode(tape, gen, z, false), tape.constant(p.target), p.frames).value()[0]);
  }
  return total / static_cast<double>(sequences.size());
}

namespace {
std::string shortest_string(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
}  // namespace

template <class T>
Checkpoint to_checkpoint(const Generator<T>& gen) {
  Checkpoint c;
  c.precision = std::is_same_v<T, float> ? Precision::Single : Precision::Double;
  c.metadata["decoder"] = std::string(decoder_name(gen.type));
  c.metadata["latent"] = std::to_string(gen.latent);
  c.metadata["num_vertices"] = std::to_string(gen.num_vertices);
  if (gen.type == DecoderType::Spiral) c.metadata["output_scale"] = shortest_string(gen.output_scale);
  auto put = [&](const std::string& name, const Tensor<T>& t) { c.tensors.emplace_back(name, t.template cast<double>()); };
  auto put_param = [&](const Parameter<T>& p) { put(p.name, p.value); };
  put_param(gen.w_ih);
  put_param(gen.w_hh);
  put_param(gen.b_lstm);
  if (gen.type == DecoderType::Spiral) {
    put_param(gen.fc_w);
    put_param(gen.fc_b);
    for (std::size_t k = 0; k < gen.conv_w.size(); ++k) {
      put_param(gen.conv_w[k]);
      put_param(gen.conv_b[k]);
    }
  } else {
    put("blend.mean", gen.blend_mean);
    put("blend.components", gen.blend_components);
  }
  return c;
}

template <class T>
Generator<T> generator_from_checkpoint(const Checkpoint& c, const TopologyCache* topology) {
  const std::string& kind = c.meta("decoder");
  Generator<T> g;
  auto load = [&](const std::string& name) {
    Parameter<T> p{name, c.tensor(name).template cast<T>(), {}};
    p.zero_grad();
    return p;
  };
  g.latent = static_cast<std::size_t>(std::stoul(c.meta("latent")));
  g.num_vertices = static_cast<std::size_t>(std::stoul(c.meta("num_vertices")));
  g.w_ih = load("lstm.w_ih");
  g.w_hh = load("lstm.w_hh");
  g.b_lstm = load("lstm.bias");
  if (kind == "spiral") {
    if (!topology) throw Error("spiral checkpoint requires the topology cache it was trained with");
    g.type = DecoderType::Spiral;
    attach_topology(g, *topology);
    if (g.num_vertices != static_cast<std::size_t>(topology->finest().num_vertices())) {
      throw Error("checkpoint expects " + std::to_string(g.num_vertices) + " vertices, the topology cache has " +
                  std::to_string(topology->finest().num_vertices()));
    }
    g.channels = decoder_channels(topology->hierarchy.num_levels());
    if (c.has_meta("output_scale")) g.output_scale = std::stod(c.meta("output_scale"));
    g.fc_w = load("fc.weight");
    g.fc_b = load("fc.bias");
    for (std::size_t k = 0; k + 1 < g.channels.size(); ++k) {
      g.conv_w.push_back(load("conv" + std::to_string(k) + ".weight"));
      g.conv_b.push_back(load("conv" + std::to_string(k) + ".bias"));
      const std::size_t len = static_cast<std::size_t>(g.tables[k + 1].length);
      if (g.conv_w.back().value.rows() != len * g.channels[k] || g.conv_w.back().value.cols() != g.channels[k + 1]) {
        throw Error("checkpoint tensor conv" + std::to_string(k) + ".weight does not match the topology cache");
      }
    }
    if (g.fc_w.value.rows() != static_cast<std::size_t>(g.tables.front().num_vertices()) * kFirstChannel) {
      throw Error("checkpoint tensor fc.weight does not match the topology cache");
    }
  } else if (kind == "blendshape") {
    g.type = DecoderType::Blendshape;
    g.blend_mean = c.tensor("blend.mean").template cast<T>();
    g.blend_components = c.tensor("blend.components").template cast<T>();
  } else {
    throw Error("unknown decoder type '" + kind + "' in checkpoint");
  }
  return g;
}

template <class U, class T>
Generator<U> convert_generator(const Generator<T>& gen, const TopologyCache* topology) {
  return generator_from_checkpoint<U>(to_checkpoint(gen), topology);
}

#define MESHMOTION_INSTANTIATE(T)                                                                          \
  template struct Generator<T>;                                                                           \
  template void attach_topology(Generator<T>&, const TopologyCache&);                                     \
  template Generator<T> make_spiral_generator<T>(const TopologyCache&, std::uint64_t, std::size_t, double);\
  template Generator<T> make_blendshape_generator<T>(const PcaBasis&, std::uint64_t);                     \
  template Tensor<T> signal_rows<T>(const MotionLabel&);                                                  \
  template Var<T> encode(Tape<T>&, Generator<T>&, Var<T>, bool);                                          \
  template Var<T> decode(Tape<T>&, Generator<T>&, Var<T>, bool);                                          \
  template std::vector<std::string> decoder_shape_trace(Generator<T>&);                                   \
  template Var<T> sequence_loss(Var<T>, Var<T>, std::size_t);                                             \
  template Tensor<T> encode_latents(Generator<T>&, const MotionLabel&);                                   \
  template std::vector<Frame> decode_latents(Generator<T>&, const Mesh&, const Tensor<T>&);               \
  template std::vector<Frame> generate(Generator<T>&, const Mesh&, const MotionLabel&);                   \
  template TrainHistory train(Generator<T>&, std::span<const ExpressionSequence>, const TrainConfig&,     \
                              const EpochCallback&);                                                      \
  template double evaluate_loss(Generator<T>&, std::span<const ExpressionSequence>);                      \
  template Checkpoint to_checkpoint(const Generator<T>&);                                                 \
  template Generator<T> generator_from_checkpoint<T>(const Checkpoint&, const TopologyCache*);            \
  template Generator<float> convert_generator<float, T>(const Generator<T>&, const TopologyCache*);       \
  template Generator<double> convert_generator<double, T>(const Generator<T>&, const TopologyCache*);

MESHMOTION_INSTANTIATE(float)
MESHMOTION_INSTANTIATE(double)

#undef MESHMOTION_INSTANTIATE

}  // namespace meshmotion
