// costar command line: serve the API, run and batch plans, calibrate, validate.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "costar/calibration.hpp"
#include "costar/runtime.hpp"
#include "costar/server.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;

costar::ApiServer* gServer = nullptr;

void onSignal(int) {
  if (gServer) gServer->stop();
}

void writeOutput(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw costar::Error(costar::ErrorCode::NotFound, "cannot write '" + path + "'");
  out << text;
}

costar::RunOptions runOptions(const std::optional<double>& noisePos, const std::optional<double>& noiseRot,
                              const std::optional<double>& dropout, std::uint64_t budget,
                              const std::string& calibration) {
  costar::RunOptions o;
  o.noisePos = noisePos;
  o.noiseRot = noiseRot;
  o.dropout = dropout;
  o.tickBudget = budget;
  if (!calibration.empty()) {
    std::ifstream in(calibration);
    if (!in) throw costar::Error(costar::ErrorCode::NotFound, "cannot open calibration '" + calibration + "'");
    o.calibratedCamera = costar::cameraFromCalibrationJson(nlohmann::json::parse(in));
  }
  return o;
}

/// Loads and validates; prints diagnostics and returns nullopt when invalid.
std::optional<costar::PlanDocument> loadValid(const std::string& planPath, const costar::Scene& scene) {
  costar::PlanDocument doc = costar::loadPlanFile(planPath);
  const auto diags = costar::validatePlan(doc, scene);
  if (diags.empty()) return doc;
  for (const auto& d : diags) {
    std::cerr << planPath;
    auto it = doc.spans.find(d.nodeId);
    if (it != doc.spans.end()) std::cerr << ":" << it->second.line << ":" << it->second.column;
    std::cerr << ": " << costar::toString(d.code) << ": " << d.message << " [" << d.nodeId << "]\n";
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"costar: behavior-tree task planning over a simulated workcell"};
  app.require_subcommand(1);

  // serve
  costar::ServerConfig serveCfg;
  std::string scenesDir = "data/scenes", plansDir;
  auto* serve = app.add_subcommand("serve", "serve the HTTP API and event stream");
  serve->add_option("--host", serveCfg.host, "bind address")->capture_default_str();
  serve->add_option("--port", serveCfg.port, "TCP port")->capture_default_str();
  serve->add_option("--scenes-dir", scenesDir, "directory of scene files")->capture_default_str();
  serve->add_option("--plans-dir", plansDir, "plan store directory (memory only when empty)");
  serve->add_option("--scene", serveCfg.liveScene, "scene for the live workcell");

  // run / batch shared options
  std::string planPath, scenePath, calibrationPath, outputPath, eventsPath;
  std::uint64_t seed = 0, seedBase = 0, budget = costar::kDefaultTickBudget;
  std::size_t trials = 10;
  std::optional<double> noisePos, noiseRot, dropout;

  auto* run = app.add_subcommand("run", "run a plan once");
  run->add_option("plan", planPath, "plan file (.bt or JSON)")->required();
  run->add_option("--scene", scenePath, "scene file")->required();
  run->add_option("--seed", seed, "trial seed")->capture_default_str();
  run->add_option("--events", eventsPath, "write the event trace as JSON lines");

  auto* batch = app.add_subcommand("batch", "run independent trials and report the success rate");
  batch->add_option("plan", planPath, "plan file (.bt or JSON)")->required();
  batch->add_option("--scene", scenePath, "scene file")->required();
  batch->add_option("--trials", trials, "number of trials")->capture_default_str()->check(CLI::PositiveNumber);
  batch->add_option("--seed-base", seedBase, "seed of the first trial")->capture_default_str();

  for (auto* sub : {run, batch}) {
    sub->add_option("--noise-pos", noisePos, "detection position sigma (m)");
    sub->add_option("--noise-rot", noiseRot, "detection rotation sigma (rad)");
    sub->add_option("--dropout", dropout, "detection dropout probability");
    sub->add_option("--tick-budget", budget, "ticks before a trial is abandoned")->capture_default_str();
    sub->add_option("--calibration", calibrationPath, "calibration JSON from 'costar calibrate'");
    sub->add_option("-o,--output", outputPath, "write the report here instead of stdout");
  }

  // calibrate
  costar::StationOptions stations;
  std::uint64_t calSeed = 0;
  std::string calScene;
  auto* calibrate = app.add_subcommand("calibrate", "hand-eye calibration from simulated stations");
  calibrate->add_option("--stations", stations.stations, "number of stations")->capture_default_str();
  calibrate->add_option("--noise-rot", stations.noiseRotDeg, "marker rotation noise (deg)")->capture_default_str();
  calibrate->add_option("--noise-pos", stations.noisePos, "marker position noise (m)")->capture_default_str();
  calibrate->add_flag("--all-pairs", stations.allPairs, "difference every station pair");
  calibrate->add_option("--seed", calSeed, "noise seed")->capture_default_str();
  calibrate->add_option("--scene", calScene, "scene providing the true camera and marker");
  calibrate->add_option("-o,--output", outputPath, "write the calibration JSON here");

  // validate
  std::string validateScene;
  auto* validateCmd = app.add_subcommand("validate", "check a plan without running it");
  validateCmd->add_option("plan", planPath, "plan file (.bt or JSON)")->required();
  validateCmd->add_option("--scene", validateScene, "scene whose components to check against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (serve->parsed()) {
      serveCfg.scenesDir = scenesDir;
      serveCfg.plansDir = plansDir;
      costar::ApiServer server(serveCfg);
      gServer = &server;
      std::signal(SIGINT, onSignal);
      std::signal(SIGTERM, onSignal);
      std::cerr << "listening on http://" << serveCfg.host << ":" << serveCfg.port << "\n";
      const bool ok = server.listen();
      gServer = nullptr;
      if (!ok) {
        std::cerr << "cannot bind " << serveCfg.host << ":" << serveCfg.port << "\n";
        return kExitFailure;
      }
      return kExitOk;
    }

    if (validateCmd->parsed()) {
      costar::Scene scene;
      if (!validateScene.empty()) scene = costar::loadScene(validateScene);
      const auto doc = loadValid(planPath, scene);
      if (!doc) return kExitInvalid;
      std::cout << planPath << ": ok (" << costar::planId(*doc) << ")\n";
      return kExitOk;
    }

    if (calibrate->parsed()) {
      costar::Scene scene;
      if (!calScene.empty()) scene = costar::loadScene(calScene);
      costar::Simulator sim(scene, calSeed);
      const auto pairs = costar::collectStations(sim, stations);
      const auto result = costar::solveHandEye(pairs);
      auto j = costar::calibrationToJson(result);
      j["stations"] = stations.stations;
      j["noiseRotDeg"] = stations.noiseRotDeg;
      j["seed"] = calSeed;
      j["error"] = {{"translation", (result.x.position - scene.camera.position).norm()},
                    {"rotation", costar::geodesicAngle(result.x.orientation, scene.camera.orientation)}};
      writeOutput(outputPath, j.dump(2) + "\n");
      return kExitOk;
    }

    // run / batch
    const costar::Scene scene = costar::loadScene(scenePath);
    const auto doc = loadValid(planPath, scene);
    if (!doc) return kExitInvalid;
    const auto opts = runOptions(noisePos, noiseRot, dropout, budget, calibrationPath);
    costar::TrialReport report;
    if (run->parsed()) {
      costar::Bus bus;
      report = costar::runPlan(*doc, scene, seed, opts, eventsPath.empty() ? nullptr : &bus);
      if (!eventsPath.empty()) {
        std::ofstream ev(eventsPath);
        for (const auto& m : bus.read(costar::kEventsTopic, 0)) ev << costar::messageToJson(m).dump() << "\n";
      }
    } else {
      report = costar::runBatch(*doc, scene, trials, seedBase, opts);
    }
    writeOutput(outputPath, costar::reportToString(report));
    return report.allSucceeded() ? kExitOk : kExitFailure;
  } catch (const costar::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case costar::ErrorCode::SyntaxError:
      case costar::ErrorCode::ValidationFailed:
      case costar::ErrorCode::MalformedTree:
      case costar::ErrorCode::UnboundOperation:
      case costar::ErrorCode::InvalidScene:
        return kExitInvalid;
      default:
        return kExitFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
