// _codecot: thin pybind11 layer. Structured values cross the boundary as JSON
// text; the pure-Python package turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "codecot/cot_format.hpp"
#include "codecot/eval.hpp"
#include "codecot/export.hpp"
#include "codecot/json_io.hpp"
#include "codecot/ngram.hpp"
#include "codecot/sandbox.hpp"
#include "codecot/tokens.hpp"
#include "codecot/tree.hpp"

namespace py = pybind11;
using namespace codecot;

namespace {

TokenBudget budget(std::size_t limit, const std::string& rule) {
  TokenBudget b;
  b.limit = limit;
  b.counter = token_rule_from(rule);
  b.validate();
  return b;
}

std::string verify_json(const std::string& problem_json, const std::string& code, const std::string& limits_json,
                        const std::string& shim, const std::string& python) {
  const auto problem = Json::parse(problem_json).get<CodeProblem>();
  const auto limits = limits_json.empty() ? SandboxLimits{} : Json::parse(limits_json).get<SandboxLimits>();
  SandboxConfig cfg;
  cfg.python = python;
  if (!shim.empty()) cfg.shim_path = shim;
  Verdict v;
  {
    py::gil_scoped_release release;
    SandboxExecutor sandbox(cfg);
    v = sandbox.run_candidate(code, problem.test_cases, limits);
  }
  return Json(v).dump();
}

}  // namespace

PYBIND11_MODULE(_codecot, m) {
  m.doc() = "Native core of the codecot data pipeline";

  py::register_exception<CotParseError>(m, "CotParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<SandboxUnavailable>(m, "SandboxUnavailable", PyExc_RuntimeError);

  m.def(
      "serialize_cot", [](const std::string& trace_json) { return serialize_cot(Json::parse(trace_json).get<CotTrace>()); },
      py::arg("trace_json"));
  m.def(
      "parse_cot", [](const std::string& text, const std::string& problem_id) {
        return Json(parse_cot(text, problem_id)).dump();
      },
      py::arg("text"), py::arg("problem_id") = "");
  m.def(
      "extract_last_code_block",
      [](const std::string& text) -> std::optional<std::string> {
        auto block = extract_last_code_block(text);
        if (!block) return std::nullopt;
        return block->code;
      },
      py::arg("text"));

  m.def(
      "count_tokens", [](const std::string& text, const std::string& rule) { return count_tokens(text, budget(1, rule)); },
      py::arg("text"), py::arg("rule") = "whitespace");
  m.def(
      "exceeds_budget",
      [](const std::string& text, std::size_t limit, const std::string& rule) {
        return check_budget(text, budget(limit, rule)).truncated;
      },
      py::arg("text"), py::arg("limit") = 25000, py::arg("rule") = "whitespace");

  m.def("ngram_overlap", &ngram_overlap, py::arg("a"), py::arg("b"), py::arg("n") = 10);
  m.def(
      "decontaminate",
      [](const std::string& problems_json, const std::string& holdout_json, std::size_t n) {
        const auto res = decontaminate(Json::parse(problems_json).get<std::vector<CodeProblem>>(),
                                       Json::parse(holdout_json).get<std::vector<HoldoutText>>(), n);
        return Json{{"kept", res.kept}, {"removed", res.removed}}.dump();
      },
      py::arg("problems_json"), py::arg("holdout_json"), py::arg("n") = 10);

  m.def(
      "pass_at_1",
      [](std::size_t c, std::size_t n) {
        const auto f = pass_at_1_exact(c, n);
        return std::make_pair(f.num, f.den);
      },
      py::arg("c"), py::arg("n"));

  m.def(
      "extract_pairs",
      [](const std::string& tree_jsonl, std::optional<double> gap) {
        const auto tree = ReasoningTree::from_jsonl(tree_jsonl);
        SearchConfig cfg;
        if (tree.manifest.contains("config")) cfg = tree.manifest["config"].get<SearchConfig>();
        if (gap) cfg.pair_accuracy_gap = *gap;
        return Json(extract_pairs(tree, cfg)).dump();
      },
      py::arg("tree_jsonl"), py::arg("gap") = py::none());

  m.def("training_constants", [] { return training_constants().dump(); });

  m.def("verify", &verify_json, py::arg("problem_json"), py::arg("code"), py::arg("limits_json") = "",
        py::arg("shim") = "", py::arg("python") = "python3");

  m.attr("__version__") = "0.1.0";
}
