// Python bindings for the main MIF operations.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mif/appearance.hpp"
#include "mif/generator.hpp"
#include "mif/geometry.hpp"
#include "mif/harness.hpp"
#include "mif/mesh.hpp"
#include "mif/navigation.hpp"
#include "mif/spatial.hpp"

namespace py = pybind11;
using namespace mif;

namespace {

using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<Vec3> to_points(const Points3& m) {
  std::vector<Vec3> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[i] = m.row(i).transpose();
  return out;
}

TriangleMesh to_mesh(const Points3& v, const Faces& f) {
  std::vector<Triangle> tris(f.rows());
  for (Eigen::Index i = 0; i < f.rows(); ++i) tris[i] = {f(i, 0), f(i, 1), f(i, 2)};
  return TriangleMesh(to_points(v), std::move(tris));
}

py::object parse_json(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

py::dict transform_dict(const SimilarityTransform& t) {
  py::dict d;
  d["scale"] = t.scale;
  d["rotation"] = Mat3(t.rotation);
  d["translation"] = Vec3(t.translation);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Confidence-gated appearance memory, scene-graph evolution and interaction pose safety";

  auto base = py::register_exception<Error>(m, "MifError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<NoPath>(m, "NoPath", base.ptr());
  py::register_exception<DegenerateGeometry>(m, "DegenerateGeometry", base.ptr());
  py::register_exception<InsufficientData>(m, "InsufficientData", base.ptr());
  py::register_exception<EmptySuite>(m, "EmptySuite", base.ptr());

  m.def(
      "confidence_value",
      [](double g_n, double alpha_n, double beta, double gamma) {
        ConfidenceParams p;
        p.beta = beta;
        p.gamma = gamma;
        return confidence_value(g_n, alpha_n, p);
      },
      py::arg("g_n"), py::arg("alpha_n"), py::arg("beta") = 5.0, py::arg("gamma") = 2.0);

  m.def(
      "estimate_confidence",
      [](const VecX& instability, const VecX& opacity, double beta, double gamma) {
        if (instability.size() != opacity.size()) throw DimensionMismatch("instability and opacity lengths differ");
        std::vector<GaussianPrimitive> prims(instability.size());
        for (Eigen::Index i = 0; i < instability.size(); ++i) {
          prims[i].id = i;
          prims[i].instability = instability[i];
          prims[i].opacity = opacity[i];
          prims[i].feature = VecX::Unit(1, 0);
        }
        ConfidenceParams p;
        p.beta = beta;
        p.gamma = gamma;
        prims = estimate_confidence(std::move(prims), p);
        VecX c(prims.size());
        for (std::size_t i = 0; i < prims.size(); ++i) c[i] = prims[i].confidence;
        return c;
      },
      py::arg("instability"), py::arg("opacity"), py::arg("beta") = 5.0, py::arg("gamma") = 2.0,
      "Confidence of each primitive, normalised by the set means.");

  py::class_<FeatureCodec>(m, "FeatureCodec")
      .def_static("fit", &FeatureCodec::fit, py::arg("training"), py::arg("k") = FeatureCodec::kDefaultLatentDim)
      .def("encode", &FeatureCodec::encode)
      .def("decode", &FeatureCodec::decode)
      .def_property_readonly("latent_dim", &FeatureCodec::latent_dim)
      .def_property_readonly("raw_dim", &FeatureCodec::raw_dim)
      .def_property_readonly("singular_values", &FeatureCodec::singular_values);

  m.def(
      "graph_discrepancy",
      [](const std::string& local_json, const std::string& global_json) {
        const SceneGraph local = graph_from_json(local_json);
        const SceneGraph global = graph_from_json(global_json);
        const DiscrepancyParams params;
        const Matching mt = match_nodes(local, global, params);
        const auto d = discrepancy_breakdown(local, global, mt, params);
        py::dict out;
        out["D"] = d.total;
        out["node_term"] = d.node_term;
        out["relational_term"] = d.relational_term;
        out["pairs"] = mt.pairs;
        out["unmatched_local"] = mt.unmatched_local;
        out["unmatched_global"] = mt.unmatched_global;
        return out;
      },
      py::arg("local_json"), py::arg("global_json"), "Discrepancy of an observed graph against memory.");

  m.def(
      "update_graph",
      [](const std::string& global_json, const std::string& local_json) {
        const SceneGraph global = graph_from_json(global_json);
        const SceneGraph local = graph_from_json(local_json);
        const DiscrepancyParams params;
        const Matching mt = match_nodes(local, global, params);
        const AffectedRegion region = affected_region(local, global, mt, params);
        return graph_to_json(patch_graph(global, region, local));
      },
      py::arg("global_json"), py::arg("local_json"), "Match, derive the affected region and patch memory.");

  m.def(
      "signed_distance",
      [](const Points3& vertices, const Faces& faces, const Points3& points) {
        const MeshDistance sdf(to_mesh(vertices, faces));
        VecX d(points.rows());
        for (Eigen::Index i = 0; i < points.rows(); ++i) d[i] = sdf.signed_distance(points.row(i).transpose());
        return d;
      },
      py::arg("vertices"), py::arg("faces"), py::arg("points"), "Signed distance to a watertight mesh, negative inside.");

  m.def(
      "scaled_robust_icp",
      [](const Points3& source, const Points3& target, double huber_delta, bool robust) {
        const auto src = to_points(source);
        const auto tgt = to_points(target);
        IcpOptions opt;
        opt.huber_delta = huber_delta;
        opt.loss = robust ? RobustLoss::kHuber : RobustLoss::kSquared;
        const IcpResult r = scaled_robust_icp(src, tgt, centroid_rms_alignment(src, tgt), opt);
        py::dict out = transform_dict(r.transform);
        out["iterations"] = r.iterations;
        out["converged"] = r.converged;
        out["residual"] = r.residual;
        return out;
      },
      py::arg("source"), py::arg("target"), py::arg("huber_delta") = 0.05, py::arg("robust") = true,
      "Similarity taking source onto target, started from centroid and RMS-radius alignment.");

  m.def(
      "pure_pursuit_step",
      [](const Vec3& pose, const Points2& path, double v_max, double k_theta) {
        TrackingParams p;
        p.v_max = v_max;
        p.k_theta = k_theta;
        std::vector<Vec2> pts(path.rows());
        for (Eigen::Index i = 0; i < path.rows(); ++i) pts[i] = path.row(i).transpose();
        const TrackingStep st = pure_pursuit_step(Pose2{pose.x(), pose.y(), pose.z()}, pts, p);
        py::dict out;
        out["v"] = st.v;
        out["omega"] = st.omega;
        out["kappa"] = st.kappa;
        out["delta_theta"] = st.delta_theta;
        out["lookahead"] = st.lookahead;
        return out;
      },
      py::arg("pose"), py::arg("path"), py::arg("v_max") = TrackingParams{}.v_max,
      py::arg("k_theta") = TrackingParams{}.k_theta, "One tracking step from pose (x, y, theta) along a polyline.");

  m.def(
      "run_scenario",
      [](const std::string& path, const std::string& mode, std::optional<std::uint64_t> seed) {
        Scenario s = load_scenario(path);
        if (seed) s.seed = *seed;
        TaskReport r;
        {
          py::gil_scoped_release release;
          r = run_task(s, memory_mode_from_string(mode));
        }
        return parse_json(report_to_json(r));
      },
      py::arg("path"), py::arg("mode") = "full", py::arg("seed") = py::none(),
      "Runs one task and returns its report as a dict.");

  m.def(
      "memory_graph",
      [](const std::string& path) {
        const Scenario s = load_scenario(path);
        RunTrace trace;
        run_task(s, MemoryMode::kStatic, &trace);
        return graph_to_json(trace.initial_memory);
      },
      py::arg("path"), "Mapped memory of a scenario as a graph document.");

  m.def(
      "sweep_tau",
      [](const std::string& suite_dir, const std::vector<double>& taus) {
        const auto suite = load_suite(suite_dir);
        std::vector<SweepRow> rows;
        {
          py::gil_scoped_release release;
          rows = sweep_tau(suite, taus);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["tau"] = r.tau;
          d["tpr"] = r.tpr;
          d["fpr"] = r.fpr;
          d["f1"] = r.f1;
          out.append(d);
        }
        return out;
      },
      py::arg("suite_dir"), py::arg("taus"));

  m.def(
      "generate_suite",
      [](const std::string& dir, const std::string& kind, int count, std::uint64_t seed) {
        if (kind == "adaptation") {
          write_suite(dir, generate_adaptation_suite(count, seed));
        } else if (kind == "sweep") {
          write_suite(dir, generate_sweep_suite(count / 2, count - count / 2, seed));
        } else {
          throw ParseError("kind must be adaptation or sweep");
        }
      },
      py::arg("dir"), py::arg("kind"), py::arg("count"), py::arg("seed") = 1);
}
