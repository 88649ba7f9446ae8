#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "safempc/cli.hpp"
#include "safempc/errors.hpp"

namespace py = pybind11;
using namespace safempc;

namespace {

py::dict state_dict(const dynamics::CartPoleState& s) {
  py::dict d;
  d["x"] = s.x;
  d["x_dot"] = s.x_dot;
  d["theta"] = s.theta;
  d["theta_dot"] = s.theta_dot;
  return d;
}

dynamics::CartPoleState to_state(const std::vector<double>& v) {
  if (v.size() != 4) throw ShapeMismatch("state needs 4 entries");
  return {v[0], v[1], v[2], v[3]};
}

RunConfig config_of(const std::string& path, const std::vector<std::string>& overrides) {
  return load_run_config(path, overrides);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Uncertainty-gated imitation learning for the cart-pole";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeMismatch>(m, "ShapeMismatch", PyExc_ValueError);
  py::register_exception<InvalidHorizon>(m, "InvalidHorizon", PyExc_ValueError);
  py::register_exception<NonFiniteLoss>(m, "NonFiniteLoss", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("step", [](const std::vector<double>& s, double force) {
    const auto n = dynamics::step(to_state(s), force, {});
    return std::vector<double>{n.x, n.x_dot, n.theta, n.theta_dot};
  }, py::arg("state"), py::arg("force"), "One Euler step of the nominal cart-pole.");

  m.def("is_success", [](const std::vector<double>& s) { return dynamics::is_success(to_state(s)); },
        py::arg("state"));

  m.def("mpc_rollout", [](const std::vector<double>& s, int steps) {
    mpc::MpcController c({}, {});
    auto state = to_state(s);
    std::vector<double> controls;
    for (int t = 0; t < steps; ++t) {
      const double u = c.act(state);
      controls.push_back(u);
      state = dynamics::step(state, u, {});
    }
    return py::make_tuple(controls, state_dict(state));
  }, py::arg("state"), py::arg("steps"), "Closed-loop run of the default MPC expert.");

  m.def("reward", [](const std::string& actor, bool terminal, bool success, int horizon) {
    if (actor != "learner" && actor != "expert") throw ConfigError("actor must be learner or expert");
    return gate::reward(actor == "learner" ? gate::Actor::kLearner : gate::Actor::kExpert,
                        terminal, success, horizon);
  }, py::arg("actor"), py::arg("terminal"), py::arg("success"), py::arg("horizon"));

  m.def("elite_refit", [](const std::vector<double>& x, const std::vector<double>& r, int elites) {
    const auto e = gate::elite_refit(x, r, elites);
    return py::make_tuple(e.distribution.mu, e.distribution.sigma2, e.elites);
  }, py::arg("thresholds"), py::arg("rewards"), py::arg("elites"));

  m.def("mc_predict", [](const std::string& checkpoint, const std::vector<double>& observation,
                         int samples, std::uint64_t seed) {
    const auto params = bayesnet::load_checkpoint(checkpoint);
    const Eigen::VectorXd obs =
        Eigen::Map<const Eigen::VectorXd>(observation.data(), static_cast<Eigen::Index>(observation.size()));
    Rng rng = make_rng(seed, "python-mc");
    const auto p = bayesnet::mc_predict(params, obs, samples, rng);
    py::dict d;
    d["mean"] = p.mean;
    d["aleatoric"] = p.aleatoric;
    d["epistemic"] = p.epistemic;
    d["total"] = p.total;
    return d;
  }, py::arg("checkpoint"), py::arg("observation"), py::arg("samples") = 30, py::arg("seed") = 1);

  m.def("config", [](const std::string& path, const std::vector<std::string>& overrides) {
    return to_json(config_of(path, overrides)).dump();
  }, py::arg("path") = "", py::arg("overrides") = std::vector<std::string>{},
     "Resolved configuration as a JSON string.");

  m.def("run", [](const std::string& command, const std::string& path,
                  const std::vector<std::string>& overrides) {
    const RunConfig config = config_of(path, overrides);
    cli::CommandOutput out;
    {
      py::gil_scoped_release release;
      out = cli::run(cli::command_from_string(command), config);
    }
    std::vector<std::string> files;
    for (const auto& f : out.artifacts) files.push_back(f.string());
    return py::make_tuple(out.summary, files);
  }, py::arg("command"), py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{},
     "Runs one pipeline command; returns (summary, artifact paths).");
}
