#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "dkts/errors.hpp"
#include "dkts/evaluator.hpp"
#include "dkts/experiment.hpp"
#include "dkts/textio.hpp"

namespace py = pybind11;
using namespace dkts;

namespace {

using Pairs = std::vector<std::pair<std::size_t, int>>;

InteractionSequence to_sequence(const std::string& student, const Pairs& steps) {
  InteractionSequence s;
  s.student = student;
  for (auto [q, a] : steps) s.steps.push_back({q, a});
  return s;
}

Dataset to_dataset(const std::vector<std::pair<std::string, Pairs>>& seqs) {
  Dataset d;
  for (const auto& [student, steps] : seqs) d.push_back(to_sequence(student, steps));
  return d;
}

std::vector<std::pair<std::string, Pairs>> from_dataset(const Dataset& d) {
  std::vector<std::pair<std::string, Pairs>> out;
  for (const auto& s : d) {
    Pairs steps;
    for (const auto& x : s.steps) steps.emplace_back(x.question, x.correct);
    out.emplace_back(s.student, std::move(steps));
  }
  return out;
}

ExperimentConfig make_config(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  cfg.apply(kv);
  return cfg;
}

py::array_t<double> to_array(const num::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::memcpy(a.mutable_data(), t.values().data(), t.size() * sizeof(double));
  return a;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["auc"] = m.auc;
  d["accuracy"] = m.accuracy;
  d["loss"] = m.mean_loss;
  d["relation"] = m.mean_relation;
  d["steps"] = m.steps;
  return d;
}

}  // namespace

PYBIND11_MODULE(_dkts, m) {
  m.doc() = "Knowledge tracing with question-graph embeddings and a Laplacian relation loss";

  auto base = py::register_exception<Error>(m, "DktsError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<IndexError>(m, "IndexError", PyExc_IndexError);
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("config_keys", &ExperimentConfig::keys, "Every configuration key, in a stable order.");
  m.def("default_config", [] { return ExperimentConfig{}.to_map(); }, "Resolved default configuration.");

  m.def(
      "auc", [](const std::vector<double>& s, const std::vector<int>& y) { return auc(s, y); }, py::arg("scores"),
      py::arg("labels"), "Mann-Whitney AUC with midranks for ties.");

  m.def(
      "simulate",
      [](const std::map<std::string, std::string>& kv) {
        const Simulation sim = simulate(make_config(kv).simulator);
        py::dict out;
        out["sequences"] = from_dataset(sim.sequences);
        std::vector<std::vector<int>> skills;
        for (const auto& s : sim.skills) skills.emplace_back(s.begin(), s.end());
        out["skills"] = skills;
        return out;
      },
      py::arg("config") = std::map<std::string, std::string>{},
      "Synthetic learners. Returns {'sequences': [(student, [(question, correct), ...])], 'skills': [[skill, ...]]}.");

  py::class_<QuestionGraph>(m, "QuestionGraph")
      .def(py::init([](std::size_t q, const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges) {
             std::vector<Edge> e;
             for (auto [i, j, w] : edges) e.push_back({i, j, w});
             return QuestionGraph(q, std::move(e));
           }),
           py::arg("question_count"), py::arg("edges"))
      .def_static(
          "from_skills",
          [](const std::vector<std::vector<int>>& skills, const std::string& weighting) {
            SkillMap map;
            for (const auto& s : skills) map.emplace_back(s.begin(), s.end());
            return build_graph(map, parse_weighting(weighting));
          },
          py::arg("skills"), py::arg("weighting") = "binary")
      .def_property_readonly("question_count", &QuestionGraph::question_count)
      .def_property_readonly("edges",
                             [](const QuestionGraph& g) {
                               std::vector<std::tuple<std::size_t, std::size_t, double>> out;
                               for (const auto& e : g.edges()) out.emplace_back(e.i, e.j, e.weight);
                               return out;
                             })
      .def(
          "quad_form", [](const QuestionGraph& g, const std::vector<double>& p) { return quad_form(g, p); },
          py::arg("p"), "1/2 p^T L p.")
      .def(
          "quad_form_grad", [](const QuestionGraph& g, const std::vector<double>& p) { return quad_form_grad(g, p); },
          py::arg("p"), "L p.")
      .def("laplacian", [](const QuestionGraph& g) { return to_array(laplacian(g).to_dense()); })
      .def("__repr__", [](const QuestionGraph& g) {
        return "QuestionGraph(questions=" + std::to_string(g.question_count()) +
               ", edges=" + std::to_string(g.edge_count()) + ")";
      });

  m.def(
      "embed",
      [](const QuestionGraph& g, const std::string& method, const std::map<std::string, std::string>& kv) {
        const ExperimentConfig cfg = make_config(kv);
        return to_array(make_embedding(parse_method(method), g, cfg, cfg.seed).values);
      },
      py::arg("graph"), py::arg("method") = "node2vec", py::arg("config") = std::map<std::string, std::string>{},
      "Question embedding table of shape (Q, dim).");

  py::class_<ModelParams>(m, "Model")
      .def_property_readonly("cell", [](const ModelParams& p) { return cell_name(p.cell); })
      .def_property_readonly("questions", &ModelParams::questions)
      .def_property_readonly("hidden", &ModelParams::hidden)
      .def(
          "predict",
          [](const ModelParams& p, const Pairs& steps) {
            return forward_sequence(to_sequence("", steps), p);
          },
          py::arg("steps"), "Probability vectors over all questions after each step but the last (n - 1 rows).")
      .def(
          "evaluate",
          [](const ModelParams& p, const std::vector<std::pair<std::string, Pairs>>& seqs,
             const QuestionGraph* g) { return metrics_dict(evaluate(p, to_dataset(seqs), g)); },
          py::arg("sequences"), py::arg("graph") = nullptr)
      .def("save", [](const ModelParams& p, const std::string& path) { save_checkpoint(path, p, ""); })
      .def_static("load", [](const std::string& path) { return load_checkpoint(path).params; });

  m.def(
      "train",
      [](const std::vector<std::pair<std::string, Pairs>>& train, const std::vector<std::pair<std::string, Pairs>>& val,
         const QuestionGraph& g, const std::string& method, bool use_graph,
         const std::map<std::string, std::string>& kv) {
        const ExperimentConfig cfg = make_config(kv);
        if (!use_graph && cfg.train.alpha > 0.0) throw UsageError("alpha > 0 needs the relation graph (use_graph=True)");
        const EmbeddingTable table = make_embedding(parse_method(method), g, cfg, cfg.seed);
        ModelParams init = init_params(cfg.cell, table, cfg.hidden, cfg.seed);
        FitResult fr;
        {
          py::gil_scoped_release release;
          fr = fit(to_dataset(train), to_dataset(val), std::move(init), use_graph ? &g : nullptr, cfg.train);
        }
        std::vector<std::string> history;
        for (const auto& e : fr.history) history.push_back(format_epoch(e));
        return py::make_tuple(fr.params, history);
      },
      py::arg("train"), py::arg("validation"), py::arg("graph"), py::arg("method") = "node2vec",
      py::arg("use_graph") = true, py::arg("config") = std::map<std::string, std::string>{},
      "Trains one model. Returns (model, epoch log lines).");

  m.def(
      "run_matrix",
      [](const std::map<std::string, std::string>& kv) {
        const ExperimentConfig cfg = make_config(kv);
        MatrixResult r;
        {
          py::gil_scoped_release release;
          r = run_matrix(cfg);
        }
        py::dict out;
        out["table"] = format_matrix(r);
        py::dict means;
        for (std::size_t row = 0; row < 4; ++row)
          for (std::size_t col = 0; col < 3; ++col)
            if (r.applicable(row, col))
              means[py::make_tuple(kMatrixRows[row], kMatrixColumns[col])] = r.mean(row, col);
        out["means"] = means;
        out["seconds"] = r.seconds;
        return out;
      },
      py::arg("config") = std::map<std::string, std::string>{},
      "Cell x embedding comparison. Returns {'table', 'means', 'seconds'}.");
}
