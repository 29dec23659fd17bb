#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "costar/calibration.hpp"
#include "costar/error.hpp"
#include "costar/plan_dsl.hpp"
#include "costar/runtime.hpp"

namespace py = pybind11;
using namespace costar;

namespace {

using Pose7 = std::array<double, 7>;

SymmetryGroup groupNamed(const std::string& name) {
  if (name == "cube") return cubeGroup();
  if (name == "trivial") return trivialGroup();
  if (name.rfind("cylinder:", 0) == 0) return cylinderGroup(std::stoi(name.substr(9)));
  throw Error(ErrorCode::InvalidParameter, "unknown symmetry group '" + name + "'");
}

RunOptions options(std::optional<double> noisePos, std::optional<double> noiseRot, std::uint64_t tickBudget) {
  RunOptions opts;
  opts.noisePos = noisePos;
  opts.noiseRot = noiseRot;
  opts.tickBudget = tickBudget;
  return opts;
}

}  // namespace

PYBIND11_MODULE(_costar, m) {
  m.doc() = "Native core of the costar workcell runtime";

  static py::exception<Error> costarError(m, "CostarError");
  static py::exception<PlanSyntaxError> syntaxError(m, "PlanSyntaxError", costarError.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const PlanSyntaxError& e) {
      py::object err = py::handle(syntaxError.ptr())(e.what());
      err.attr("code") = std::string(toString(e.code()));
      err.attr("line") = e.span().line;
      err.attr("column") = e.span().column;
      err.attr("offset") = e.span().offset;
      err.attr("length") = e.span().length;
      PyErr_SetObject(syntaxError.ptr(), err.ptr());
    } catch (const Error& e) {
      py::object err = py::handle(costarError.ptr())(e.what());
      err.attr("code") = std::string(toString(e.code()));
      PyErr_SetObject(costarError.ptr(), err.ptr());
    }
  });

  m.def("parse_plan", [](const std::string& text) { return planToJson(parsePlan(text)).dump(); }, py::arg("text"),
        "Parse plan text; returns the JSON mirror as a string.");
  m.def("serialize_plan", [](const std::string& json) { return serializePlan(planFromJson(nlohmann::json::parse(json))); },
        py::arg("plan_json"), "Canonical plan text for a JSON plan.");
  m.def("plan_id", [](const std::string& text) { return planId(parsePlan(text)); }, py::arg("text"));
  m.def(
      "validate_plan",
      [](const std::string& text, const std::string& scenePath) {
        const auto doc = parsePlan(text);
        return diagnosticsToJson(validatePlan(doc, loadScene(scenePath)), &doc).dump();
      },
      py::arg("text"), py::arg("scene_path"));
  m.def(
      "run_batch",
      [](const std::string& text, const std::string& scenePath, std::size_t trials, std::uint64_t seedBase,
         std::optional<double> noisePos, std::optional<double> noiseRot, std::uint64_t tickBudget) {
        const auto doc = parsePlan(text);
        const auto scene = loadScene(scenePath);
        py::gil_scoped_release release;
        return reportToString(runBatch(doc, scene, trials, seedBase, options(noisePos, noiseRot, tickBudget)));
      },
      py::arg("text"), py::arg("scene_path"), py::arg("trials") = 1, py::arg("seed_base") = 0,
      py::arg("noise_pos") = py::none(), py::arg("noise_rot") = py::none(), py::arg("tick_budget") = kDefaultTickBudget);
  m.def(
      "set_canonical_orientation",
      [](const Pose7& pose, const std::string& group) {
        return toArray(setCanonicalOrientation(poseFromArray(pose), groupNamed(group)));
      },
      py::arg("pose"), py::arg("group") = "cube", "Pose as [x, y, z, qw, qx, qy, qz].");
  m.def(
      "solve_hand_eye",
      [](const std::vector<std::pair<Pose7, Pose7>>& motions) {
        std::vector<MotionPair> pairs;
        for (const auto& [a, b] : motions) pairs.push_back({poseFromArray(a), poseFromArray(b)});
        const auto r = solveHandEye(pairs);
        return py::make_tuple(toArray(r.x), r.residual);
      },
      py::arg("motions"), "Solve A X = X B from (A, B) pose pairs; returns (X, residual).");
}
