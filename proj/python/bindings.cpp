#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <variant>

#include "meshmotion/eval.hpp"
#include "meshmotion/primitives.hpp"

namespace py = pybind11;
using namespace meshmotion;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<Index, py::array::c_style | py::array::forcecast>;

Frame to_frame(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw Error("expected an (N, 3) array");
  Frame f(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = {r(i, 0), r(i, 1), r(i, 2)};
  return f;
}

std::vector<Frame> to_frames(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw Error("expected a (T, N, 3) array");
  auto r = a.unchecked<3>();
  std::vector<Frame> out(static_cast<std::size_t>(a.shape(0)), Frame(static_cast<std::size_t>(a.shape(1))));
  for (py::ssize_t t = 0; t < a.shape(0); ++t) {
    for (py::ssize_t v = 0; v < a.shape(1); ++v) out[t][v] = {r(t, v, 0), r(t, v, 1), r(t, v, 2)};
  }
  return out;
}

Array from_frame(const Frame& f) {
  Array a({static_cast<py::ssize_t>(f.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (int k = 0; k < 3; ++k) w(i, k) = f[i][k];
  }
  return a;
}

Array from_frames(const std::vector<Frame>& frames) {
  const std::size_t n = frames.empty() ? 0 : frames[0].size();
  Array a({static_cast<py::ssize_t>(frames.size()), static_cast<py::ssize_t>(n), py::ssize_t{3}});
  auto w = a.mutable_unchecked<3>();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (std::size_t v = 0; v < n; ++v) {
      for (int k = 0; k < 3; ++k) w(t, v, k) = frames[t][v][k];
    }
  }
  return a;
}

IndexArray faces_array(const Mesh& m) {
  IndexArray a({static_cast<py::ssize_t>(m.faces.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    for (int k = 0; k < 3; ++k) w(i, k) = m.faces[i][k];
  }
  return a;
}

Mesh mesh_from_arrays(const Array& vertices, const IndexArray& faces) {
  Mesh m;
  m.vertices = to_frame(vertices);
  if (faces.ndim() != 2 || faces.shape(1) != 3) throw Error("expected an (M, 3) face array");
  auto r = faces.unchecked<2>();
  for (py::ssize_t i = 0; i < faces.shape(0); ++i) m.faces.push_back({r(i, 0), r(i, 1), r(i, 2)});
  validate_mesh(m);
  return m;
}

// Spiral or blendshape generator in whichever precision the checkpoint holds.
class Model {
 public:
  Model(const std::filesystem::path& checkpoint, const TopologyCache* cache) {
    const Checkpoint c = load_checkpoint(checkpoint);
    if (c.precision == Precision::Double) {
      gen_ = generator_from_checkpoint<double>(c, cache);
    } else {
      gen_ = generator_from_checkpoint<float>(c, cache);
    }
    metadata_ = c.metadata;
  }

  Array generate(const Mesh& neutral, const MotionLabel& label) {
    return from_frames(std::visit([&](auto& g) { return meshmotion::generate(g, neutral, label); }, gen_));
  }

  std::vector<std::string> shape_trace() {
    return std::visit([](auto& g) { return decoder_shape_trace(g); }, gen_);
  }

  const std::map<std::string, std::string>& metadata() const { return metadata_; }

 private:
  std::variant<Generator<float>, Generator<double>> gen_;
  std::map<std::string, std::string> metadata_;
};

}  // namespace

PYBIND11_MODULE(_meshmotion, m) {
  m.doc() = "Expression-driven mesh sequence generation";
  py::register_exception<Error>(m, "MeshMotionError", PyExc_RuntimeError);

  py::class_<Mesh>(m, "Mesh")
      .def(py::init(&mesh_from_arrays), py::arg("vertices"), py::arg("faces"))
      .def_property_readonly("vertices", [](const Mesh& self) { return from_frame(self.vertices); })
      .def_property_readonly("faces", &faces_array)
      .def_property_readonly("num_vertices", &Mesh::num_vertices)
      .def_property_readonly("num_faces", &Mesh::num_faces)
      .def("with_vertices", [](const Mesh& self, const Array& v) {
        Mesh out = self;
        out.vertices = to_frame(v);
        if (out.vertices.size() != self.vertices.size()) throw Error("vertex count differs from the mesh");
        return out;
      })
      .def("__repr__", [](const Mesh& self) {
        return "Mesh(" + std::to_string(self.num_vertices()) + " vertices, " + std::to_string(self.num_faces()) + " faces)";
      });

  m.def("icosphere", &make_icosphere, py::arg("subdivisions"), py::arg("radius") = 1.0);
  m.def("load_mesh", py::overload_cast<const std::filesystem::path&>(&load_mesh), py::arg("path"));
  m.def("save_mesh",
        py::overload_cast<const Mesh&, const std::filesystem::path&, const std::vector<std::string>&>(&save_mesh),
        py::arg("mesh"), py::arg("path"), py::arg("header") = std::vector<std::string>{});
  m.def("same_topology", &same_topology);
  m.def("k_ring", [](const Mesh& mesh, Index v, int k) { return k_ring(build_adjacency(mesh), v, k); },
        py::arg("mesh"), py::arg("vertex"), py::arg("k"));
  m.def("k_disk", [](const Mesh& mesh, Index v, int k) { return k_disk(build_adjacency(mesh), v, k); },
        py::arg("mesh"), py::arg("vertex"), py::arg("k"));

  py::class_<TopologyCache>(m, "TopologyCache")
      .def_property_readonly("level_sizes",
                             [](const TopologyCache& c) {
                               std::vector<Index> out;
                               for (const Mesh& l : c.hierarchy.levels) out.push_back(l.num_vertices());
                               return out;
                             })
      .def_property_readonly("spiral_lengths",
                             [](const TopologyCache& c) {
                               std::vector<Index> out;
                               for (const SpiralTable& t : c.spirals) out.push_back(t.length);
                               return out;
                             })
      .def_property_readonly("finest", &TopologyCache::finest)
      .def_readonly("metadata", &TopologyCache::metadata)
      .def("hash", &cache_hash)
      .def("save", [](const TopologyCache& c, const std::filesystem::path& p) { save_cache(c, p); });

  m.def(
      "build_topology_cache",
      [](const Mesh& mesh, const std::vector<int>& factors, int rings, Index length, Index reference) {
        return build_topology_cache(mesh, factors, SpiralConfig{rings, length, reference});
      },
      py::arg("mesh"), py::arg("factors"), py::arg("rings") = 1, py::arg("length") = 0, py::arg("reference") = -1);
  m.def("load_cache", &load_cache, py::arg("path"));

  py::enum_<Expression>(m, "Expression")
      .value("HAPPY", Expression::Happy)
      .value("SAD", Expression::Sad)
      .value("SURPRISE", Expression::Surprise)
      .value("ANGRY", Expression::Angry)
      .value("DISGUST", Expression::Disgust)
      .value("FEAR", Expression::Fear);
  m.def("parse_expression", [](const std::string& s) { return parse_expression(s); });
  m.def("expression_name", [](Expression e) { return std::string(expression_name(e)); });

  py::class_<MotionLabel>(m, "MotionLabel")
      .def(py::init([](Expression e, int frames, int onset, int apex_start, int apex_end, int offset_end, double scale) {
             MotionLabel l{e, frames, onset, apex_start, apex_end, offset_end, scale};
             l.validate();
             return l;
           }),
           py::arg("expression"), py::arg("frames"), py::arg("onset"), py::arg("apex_start"), py::arg("apex_end"),
           py::arg("offset_end"), py::arg("scale") = 1.0)
      .def_readonly("expression", &MotionLabel::expression)
      .def_readonly("frames", &MotionLabel::frames)
      .def_readonly("onset", &MotionLabel::onset)
      .def_readonly("apex_start", &MotionLabel::apex_start)
      .def_readonly("apex_end", &MotionLabel::apex_end)
      .def_readonly("offset_end", &MotionLabel::offset_end)
      .def_readonly("scale", &MotionLabel::scale)
      .def("amplitude", &amplitude, py::arg("t"))
      .def("signal", [](const MotionLabel& l) { return label_signal(l); })
      .def("__repr__", &format_label);

  m.def(
      "extremeness_scale",
      [](double m_i, double mean, double stddev) {
        ExpressionStats st;
        st.mean.fill(mean);
        st.stddev.fill(stddev);
        return extremeness_scale(m_i, st, Expression::Happy);
      },
      py::arg("mean_deformation"), py::arg("class_mean"), py::arg("class_std"));

  py::class_<ExpressionSequence>(m, "ExpressionSequence")
      .def_readonly("subject", &ExpressionSequence::subject)
      .def_readonly("neutral", &ExpressionSequence::neutral)
      .def_readonly("label", &ExpressionSequence::label)
      .def_property_readonly("frames", [](const ExpressionSequence& s) { return from_frames(s.frames); })
      .def_property_readonly("num_frames", &ExpressionSequence::num_frames)
      .def("mean_abs_deformation", [](const ExpressionSequence& s) { return mean_abs_deformation(s); });

  m.def(
      "synth_dataset",
      [](const Mesh& templ, int subjects, int frames, int stride, std::uint64_t seed, double noise, bool fixed_timing) {
        SynthConfig c;
        c.subjects = subjects;
        c.frames = frames;
        c.stride = stride;
        c.seed = seed;
        c.noise = noise;
        c.fixed_timing = fixed_timing;
        return synth_dataset(templ, c).sequences;
      },
      py::arg("template"), py::arg("subjects") = 2, py::arg("frames") = 100, py::arg("stride") = 5,
      py::arg("seed") = 0, py::arg("noise") = 0.01, py::arg("fixed_timing") = false);
  m.def("load_dataset", &load_dataset, py::arg("root"));

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::filesystem::path& p, const TopologyCache* cache) { return Model(p, cache); }),
           py::arg("checkpoint"), py::arg("cache") = nullptr, py::keep_alive<1, 3>())
      .def("generate", &Model::generate, py::arg("neutral"), py::arg("label"))
      .def("shape_trace", &Model::shape_trace)
      .def_property_readonly("metadata", &Model::metadata);

  m.def("per_vertex_error", [](const Array& a, const Array& b) {
    const auto pa = to_frames(a), pb = to_frames(b);
    return per_vertex_error(pa, pb);
  });
  m.def("per_frame_l1", [](const Array& a, const Array& b) {
    const auto pa = to_frames(a), pb = to_frames(b);
    return per_frame_l1(pa, pb);
  });
}
