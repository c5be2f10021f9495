#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "rosa/adapters.hpp"
#include "rosa/checkpoint.hpp"
#include "rosa/config.hpp"
#include "rosa/errors.hpp"
#include "rosa/experiment.hpp"
#include "rosa/linalg.hpp"
#include "rosa/oracle.hpp"

namespace py = pybind11;
using namespace rosa;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array, got " + std::to_string(a.ndim()) + " dims");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json py_to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

oracle::RegressionProblem problem(const Array& x, const Array& y, const Array& w0) {
  return {to_matrix(x), to_matrix(y), to_matrix(w0)};
}

py::tuple problem_tuple(const oracle::RegressionProblem& p) {
  return py::make_tuple(to_array(p.x), to_array(p.y), to_array(p.w0));
}

struct PyRosa {
  RosaAdapter adapter;
  SeededRng rng;
};

RosaInit parse_init(const std::string& s) {
  if (s == "factorized") return RosaInit::Factorized;
  if (s == "zero") return RosaInit::Zero;
  if (s == "additive") return RosaInit::Additive;
  throw InvalidInputError("unknown init '" + s + "' (expected factorized, zero or additive)");
}

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["epoch"] = r.epoch;
  d["train_loss"] = r.train_loss;
  d["val_loss"] = r.val_loss;
  d["trainable_param_count"] = r.trainable_param_count;
  d["residual_rank"] = r.residual_rank;
  d["factorize_event"] = r.factorize_event;
  return d;
}

}  // namespace

PYBIND11_MODULE(_rosa, m) {
  m.doc() = "Low-rank adapter fine-tuning: linear algebra, adapters, closed-form oracle and experiments";

  auto base = py::register_exception<Error>(m, "RosaError", PyExc_RuntimeError);
  py::register_exception<InvalidInputError>(m, "InvalidInputError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<RankTooLargeError>(m, "RankTooLargeError", base.ptr());
  py::register_exception<SingularMatrixError>(m, "SingularMatrixError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericFailure>(m, "NumericFailure", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  // linalg
  m.def(
      "svd",
      [](const Array& a) {
        SvdFactors f = svd(to_matrix(a));
        return py::make_tuple(to_array(f.u), f.sigma, to_array(f.v));
      },
      py::arg("a"), "Thin SVD (u, sigma, v) with a = u diag(sigma) v^T, sigma descending.");
  m.def(
      "numerical_rank", [](const Array& a, double rel_tol) { return numerical_rank(to_matrix(a), rel_tol); },
      py::arg("a"), py::arg("rel_tol") = 1e-10);
  m.def(
      "sample_indices",
      [](std::size_t count, std::size_t bound, const std::string& scheme, std::uint64_t seed) {
        SeededRng rng(seed);
        return sample_indices(count, bound, parse_scheme(scheme), rng).indices;
      },
      py::arg("count"), py::arg("bound"), py::arg("scheme") = "random", py::arg("seed") = 0);

  // adapters
  py::class_<PyRosa>(m, "RosaAdapter")
      .def(py::init([](const Array& w, std::size_t rank, const std::string& scheme, std::uint64_t seed,
                       const std::string& init) {
             SeededRng rng(seed);
             RosaAdapter ad = rosa_init(to_matrix(w), rank, parse_scheme(scheme), rng, parse_init(init));
             return PyRosa{std::move(ad), std::move(rng)};
           }),
           py::arg("w"), py::arg("rank"), py::arg("scheme") = "random", py::arg("seed") = 0,
           py::arg("init") = "factorized")
      .def_property(
          "a", [](const PyRosa& p) { return to_array(p.adapter.a); },
          [](PyRosa& p, const Array& a) {
            Matrix v = to_matrix(a);
            require_same_shape(v, p.adapter.a, "RosaAdapter.a");
            p.adapter.a = std::move(v);
          })
      .def_property(
          "b", [](const PyRosa& p) { return to_array(p.adapter.b); },
          [](PyRosa& p, const Array& b) {
            Matrix v = to_matrix(b);
            require_same_shape(v, p.adapter.b, "RosaAdapter.b");
            p.adapter.b = std::move(v);
          })
      .def_property_readonly("w_fixed", [](const PyRosa& p) { return to_array(p.adapter.w_fixed); })
      .def_property_readonly("rank", [](const PyRosa& p) { return p.adapter.rank; })
      .def_property_readonly("steps_since_factorize", [](const PyRosa& p) { return p.adapter.steps_since_factorize; })
      .def("effective_weight", [](const PyRosa& p) { return to_array(p.adapter.effective_weight()); })
      .def("forward", [](const PyRosa& p, const Array& x) { return to_array(rosa_forward(p.adapter, to_matrix(x))); })
      .def("residual", [](const PyRosa& p) { return to_array(residual(p.adapter)); })
      .def("factorize", [](PyRosa& p) { p.adapter = factorize_step(p.adapter, p.rng); },
           "Merge A B into the fixed weight and resample a rank-R slice.");
  m.def("trainable_reduction", &trainable_reduction, py::arg("m"), py::arg("n"), py::arg("rank"));

  // oracle
  m.def(
      "realizable_instance",
      [](std::size_t n, std::size_t d, std::size_t p, std::size_t residual_rank, std::uint64_t seed) {
        return problem_tuple(oracle::realizable_instance(n, d, p, residual_rank, seed));
      },
      py::arg("n"), py::arg("d"), py::arg("p"), py::arg("residual_rank"), py::arg("seed") = 0,
      "Returns (x, y, w0) with rank(x w0 - y) == residual_rank.");
  m.def(
      "rrr_optimum",
      [](const Array& x, const Array& y, const Array& w0, std::size_t rank) {
        oracle::LowRankUpdate u = oracle::rrr_optimum(problem(x, y, w0), rank);
        return py::make_tuple(to_array(u.a), to_array(u.b));
      },
      py::arg("x"), py::arg("y"), py::arg("w0"), py::arg("rank"));
  m.def(
      "lora_error_lower_bound",
      [](const Array& x, const Array& y, const Array& w0, std::size_t rank) {
        return oracle::lora_error_lower_bound(problem(x, y, w0), rank);
      },
      py::arg("x"), py::arg("y"), py::arg("w0"), py::arg("rank"));
  m.def(
      "irreducible_error",
      [](const Array& x, const Array& y, const Array& w0) { return oracle::project(problem(x, y, w0)).irreducible; },
      py::arg("x"), py::arg("y"), py::arg("w0"));
  m.def(
      "rosa_exact_iterate",
      [](const Array& x, const Array& y, const Array& w0, std::size_t rank, std::size_t max_steps) {
        oracle::RosaTrace t = oracle::rosa_exact_iterate(problem(x, y, w0), rank, max_steps);
        py::list weights;
        for (const auto& w : t.weights) weights.append(to_array(w));
        py::dict d;
        d["errors"] = t.errors;
        d["weights"] = weights;
        d["t_predicted"] = t.t_predicted;
        d["irreducible"] = t.irreducible;
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("w0"), py::arg("rank"), py::arg("max_steps"));

  // experiments
  m.def(
      "run_theorem_suite",
      [](std::size_t n, std::size_t d, std::size_t p, std::size_t residual_rank, std::vector<std::size_t> ranks,
         std::vector<std::uint64_t> seeds, double orthogonal_noise) {
        TheoremSuiteParams params{n, d, p, residual_rank, std::move(ranks), std::move(seeds), orthogonal_noise};
        std::ostringstream os;
        write_theorem_csv(os, run_theorem_suite(params));
        return os.str();
      },
      py::arg("n") = 40, py::arg("d") = 16, py::arg("p") = 8, py::arg("residual_rank") = 6,
      py::arg("ranks") = std::vector<std::size_t>{1, 2, 3, 6}, py::arg("seeds") = std::vector<std::uint64_t>{0},
      py::arg("orthogonal_noise") = 0.0, "Runs the exact-iteration suite and returns it as CSV text.");
  m.def(
      "train",
      [](const py::object& config, const py::object& synthetic, const std::string& checkpoint) {
        TrainConfig c = train_config_from_json(py_to_json(config));
        SyntheticSpec s = synthetic.is_none() ? SyntheticSpec{} : synthetic_spec_from_json(py_to_json(synthetic));
        c.validate();
        RunResult run;
        {
          py::gil_scoped_release release;
          run = run_training(c, generate_synthetic(s));
        }
        if (!checkpoint.empty()) save_checkpoint(run.final_net, checkpoint);
        py::list records;
        for (const auto& r : run.records) records.append(record_dict(r));
        py::dict out;
        out["records"] = records;
        out["summary"] = json_to_py(run_summary(c, s, run));
        return out;
      },
      py::arg("config"), py::arg("synthetic") = py::none(), py::arg("checkpoint") = "",
      "Trains on a synthetic task. `config` and `synthetic` are dicts of the JSON config fields.");
  m.def(
      "checkpoint_forward",
      [](const std::string& path, const Array& x) {
        return to_array(forward(load_checkpoint(path), to_matrix(x)).output);
      },
      py::arg("path"), py::arg("x"), "Loads a checkpoint and evaluates it on columns of x.");
}
