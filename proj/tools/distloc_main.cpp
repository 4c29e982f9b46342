#include "distloc/estimation.hpp"
#include "distloc/filter.hpp"
#include "distloc/harness.hpp"
#include "distloc/messaging.hpp"
#include "distloc/model.hpp"
#include "distloc/network.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace distloc;

namespace {

void write_run_outputs(const ScenarioConfig& config, const Scenario& scenario,
                       const std::vector<RunResults>& results, const std::string& out_dir) {
  fs::create_directories(out_dir);
  if (config.runs == 1) {
    write_param_errors_csv(results.front(), scenario.topology, out_dir + "/param_errors.csv");
    write_tracking_csv(results.front(), out_dir + "/tracking_error.csv");
  } else {
    for (int m = 0; m < config.runs; ++m) {
      char name[64];
      std::snprintf(name, sizeof name, "/param_errors_run%03d.csv", m);
      write_param_errors_csv(results[m], scenario.topology, out_dir + name);
    }
  }
  write_rmse_csv(rmse_series(results), out_dir + "/rmse.csv");
  write_summary_json(config, scenario, results, out_dir + "/summary.json");
}

int cmd_run(ScenarioConfig config) {
  const Scenario scenario = build_scenario(config);
  const auto results = run_scenario(config);
  write_run_outputs(config, scenario, results, config.out_dir);
  const Vec series = rmse_series(results);
  std::cout << "runs=" << config.runs << " steps=" << config.steps << " K=" << scenario.rounds
            << " rmse_initial=" << series(0) << " rmse_final=" << series(series.size() - 1)
            << "\n";
  std::cout << "outputs in " << config.out_dir << "\n";
  return 0;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream stream(s);
  std::string item;
  while (std::getline(stream, item, sep)) parts.push_back(item);
  return parts;
}

int cmd_sweep(const ScenarioConfig& base, const std::string& param_spec) {
  const auto eq = param_spec.find('=');
  if (eq == std::string::npos) {
    std::cerr << "--param expects name=v1,v2,...\n";
    return 2;
  }
  const std::string name = param_spec.substr(0, eq);
  const auto values = split(param_spec.substr(eq + 1), ',');
  if (values.empty()) {
    std::cerr << "--param needs at least one value\n";
    return 2;
  }

  if (name == "chain_length") {
    std::vector<int> lengths;
    for (const auto& v : values) lengths.push_back(std::stoi(v));
    const auto rows = tracking_error_vs_nodes(base, lengths);
    fs::create_directories(base.out_dir);
    write_chain_csv(rows, base.out_dir + "/tracking_vs_nodes.csv");
    for (const auto& row : rows) {
      std::cout << "nodes=" << row.nodes << " mean_abs_error=" << row.mean_abs_error
                << " std_error=" << row.std_error << "\n";
    }
    return 0;
  }

  for (const auto& v : values) {
    ScenarioConfig config = base;
    if (name == "K") {
      config.rounds = std::stoi(v);
    } else if (name == "noise_ratio") {
      // sigma_x / sigma_y ratio; sigma_x stays at the configured value.
      config.observation.sigma_y = config.sigma_x / std::stod(v);
    } else if (name == "sigma_y") {
      config.observation.sigma_y = std::stod(v);
    } else {
      std::cerr << "unknown sweep parameter '" << name << "'\n";
      return 2;
    }
    config.out_dir = base.out_dir + "/" + name + "=" + v;
    const Scenario scenario = build_scenario(config);
    const auto results = run_scenario(config);
    fs::create_directories(config.out_dir);
    write_rmse_csv(rmse_series(results), config.out_dir + "/rmse.csv");
    write_summary_json(config, scenario, results, config.out_dir + "/summary.json");
    const Vec series = rmse_series(results);
    std::cout << name << "=" << v << " rmse_initial=" << series(0)
              << " rmse_final=" << series(series.size() - 1) << "\n";
  }
  return 0;
}

// --- verify: fast self-checks of the core identities -----------------------

Topology random_tree(Rng& rng, int nodes) {
  std::vector<std::pair<int, int>> edges;
  for (int v = 1; v < nodes; ++v) edges.emplace_back(rng.uniform_int(0, v - 1), v);
  return Topology(nodes, edges);
}

Mat random_spd(Rng& rng, int dim) {
  Mat a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.5 * Mat::Identity(dim, dim);
}

bool verify_lemma1(Rng& rng) {
  Scalar worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int nodes = rng.uniform_int(2, 8);
    const Topology t = random_tree(rng, nodes);
    const Mat mask = free_component_mask(4);
    LocalizationParams theta(t, mask);
    for (const auto& [i, j] : t.directed_edges()) theta.set_free(i, j, rng.normal_vec(2));
    std::vector<LocalTerms> local(nodes);
    for (int v = 0; v < nodes; ++v) local[v] = {random_spd(rng, 4), rng.normal_vec(4)};

    MessageBoard board = init_messages(t, local, theta);
    run_rounds(board, t, std::max(1, graph_diameter(t)), local, theta);
    for (int r = 0; r < nodes; ++r) {
      const AggregateSums sums = aggregate(board, t, r, local[r]);
      Mat F = Mat::Zero(4, 4);
      Vec Fdot = Vec::Zero(4);
      Vec Ftheta = Vec::Zero(4);
      for (int v = 0; v < nodes; ++v) {
        F += local[v].F;
        Fdot += local[v].Fdot;
        Ftheta += local[v].F * offset_between(theta, t, r, v);
      }
      worst = std::max(worst, (sums.F_total - F).cwiseAbs().maxCoeff());
      worst = std::max(worst, (sums.Fdot_total - Fdot).cwiseAbs().maxCoeff());
      worst = std::max(worst, (sums.Ftheta_total - Ftheta).cwiseAbs().maxCoeff());
    }
  }
  std::cout << (worst < 1e-12 ? "PASS" : "FAIL") << " message aggregation vs direct sums (max dev "
            << worst << ")\n";
  return worst < 1e-12;
}

bool verify_filter_equivalence(Rng& rng) {
  Scalar worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const int nodes = rng.uniform_int(2, 8);
    const Topology t = random_tree(rng, nodes);
    const Mat mask = free_component_mask(4);
    std::vector<Vec> positions;
    for (int v = 0; v < nodes; ++v) positions.push_back(rng.normal_vec(2) * 3.0);
    const LocalizationParams truth = truth_from_positions(t, positions, mask);
    const MotionModel motion = build_cv_model(0.01, 1.0);
    std::vector<ObservationModel> observers;
    for (int v = 0; v < nodes; ++v) {
      observers.push_back(make_position_observer(rng.uniform(0.75, 1.25), 0.5, 4));
    }
    const Vec x0 = rng.normal_vec(4);
    std::vector<Vec> mu0;
    for (int v = 0; v < nodes; ++v) mu0.push_back(-(mask * positions[v]));

    NetworkFilter filter(t, motion, observers, mu0, 100.0, std::max(1, graph_diameter(t)));
    CentralizedFilter central(t, motion, observers, 0, mu0[0], 100.0);
    Rng noise(derive_seed(7, trial));
    Vec x = x0;
    for (int n = 0; n < 50; ++n) {
      const auto traj = simulate_target(motion, 1, x, noise);
      x = traj[0];
      std::vector<Vec> y(nodes);
      for (int v = 0; v < nodes; ++v) y[v] = observe(observers[v], x - mask * positions[v], noise);
      filter.step(y, truth);
      central.step(y, truth);
      for (int r = 0; r < nodes; ++r) {
        const Vec mapped = central.mu() + offset_between(truth, t, 0, r);
        worst = std::max(worst, (filter.node(r).mu - mapped).cwiseAbs().maxCoeff());
        worst = std::max(worst, (filter.node(r).Sigma - central.Sigma()).cwiseAbs().maxCoeff());
      }
    }
  }
  std::cout << (worst < 1e-8 ? "PASS" : "FAIL")
            << " distributed filter vs centralized oracle (max dev " << worst << ")\n";
  return worst < 1e-8;
}

bool verify_rml_gradient(Rng& rng) {
  Scalar worst_rel = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const int nodes = rng.uniform_int(3, 6);
    const Topology t = random_tree(rng, nodes);
    const Mat mask = free_component_mask(4);
    std::vector<Vec> positions;
    for (int v = 0; v < nodes; ++v) positions.push_back(rng.normal_vec(2) * 2.0);
    LocalizationParams theta = truth_from_positions(t, positions, mask);
    for (const auto& [i, j] : t.directed_edges()) {
      theta.set_free(i, j, theta.free_at(i, j) + 0.3 * rng.normal_vec(2));
    }
    const MotionModel motion = build_cv_model(0.01, 1.0);
    std::vector<ObservationModel> observers;
    for (int v = 0; v < nodes; ++v) {
      observers.push_back(make_position_observer(rng.uniform(0.75, 1.25), 0.5, 4));
    }
    std::vector<Vec> mu0(nodes);
    for (int v = 0; v < nodes; ++v) mu0[v] = -(mask * positions[v]);

    const int steps = 5;
    std::vector<std::vector<Vec>> y(steps, std::vector<Vec>(nodes));
    Rng noise(derive_seed(11, trial));
    Vec x = rng.normal_vec(4);
    for (int n = 0; n < steps; ++n) {
      const auto traj = simulate_target(motion, 1, x, noise);
      x = traj[0];
      for (int v = 0; v < nodes; ++v) y[n][v] = observe(observers[v], x - mask * positions[v], noise);
    }

    const int r = 0;
    const int j = t.neighbors(r).front();
    NetworkFilter filter(t, motion, observers, mu0, 100.0, std::max(1, graph_diameter(t)));
    RmlEdgeState edge = make_rml_state(4, 2);
    Vec grad;
    for (int n = 0; n < steps; ++n) {
      filter.step(y[n], theta);
      grad = rml_gradient_step(edge, filter.node(r), filter.transition_matrix(r),
                               filter.board().at(t, j, r), mask);
    }

    // Central differences of the node-r one-step predictive log-likelihood.
    const Scalar h = 1e-5;
    Vec fd(2);
    for (int c = 0; c < 2; ++c) {
      Scalar side[2];
      for (int s = 0; s < 2; ++s) {
        LocalizationParams shifted = theta;
        Vec free = shifted.free_at(r, j);
        free(c) += (s == 0 ? h : -h);
        shifted.set_free(r, j, free);
        CentralizedFilter central(t, motion, observers, r, mu0[r], 100.0);
        for (int n = 0; n < steps; ++n) central.step(y[n], shifted);
        side[s] = central.last_log_likelihood();
      }
      fd(c) = (side[0] - side[1]) / (2.0 * h);
    }
    worst_rel = std::max(worst_rel, (grad - fd).norm() / std::max(fd.norm(), 1e-12));
  }
  std::cout << (worst_rel < 1e-4 ? "PASS" : "FAIL")
            << " RML gradient vs finite differences (max rel err " << worst_rel << ")\n";
  return worst_rel < 1e-4;
}

int cmd_verify() {
  Rng rng(20240817);
  bool ok = true;
  ok &= verify_lemma1(rng);
  ok &= verify_filter_equivalence(rng);
  ok &= verify_rml_gradient(rng);
  std::cout << (ok ? "verify: all checks passed\n" : "verify: FAILURES\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed self-localization and tracking simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int runs = 0;
  long steps = 0;
  std::uint64_t seed = 0;
  int rounds = 0;
  bool have_seed = false;

  auto* run = app.add_subcommand("run", "run a scenario and write CSV/JSON outputs");
  run->add_option("--config", config_path, "scenario JSON")->required();
  run->add_option("--out", out_dir, "output directory (default from config)");
  run->add_option("--runs", runs, "override Monte Carlo run count");
  run->add_option("--steps", steps, "override step count");
  run->add_option("--seed", seed, "override seed")->each([&](const std::string&) { have_seed = true; });
  run->add_option("--K", rounds, "override message rounds");

  std::string param_spec;
  auto* sweep = app.add_subcommand("sweep", "run a scenario across parameter values");
  sweep->add_option("--config", config_path, "scenario JSON")->required();
  sweep->add_option("--param", param_spec, "name=v1,v2,... (K, noise_ratio, sigma_y, chain_length)")
      ->required();
  sweep->add_option("--out", out_dir, "output directory (default from config)");
  sweep->add_option("--runs", runs, "override Monte Carlo run count");
  sweep->add_option("--steps", steps, "override step count");
  sweep->add_option("--seed", seed, "override seed")->each([&](const std::string&) { have_seed = true; });

  auto* verify = app.add_subcommand("verify", "run the oracle self-checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(verify)) return cmd_verify();

    ScenarioConfig config = load_config(config_path);
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (runs > 0) config.runs = runs;
    if (steps > 0) config.steps = steps;
    if (have_seed) config.seed = seed;
    if (rounds > 0) config.rounds = rounds;

    if (app.got_subcommand(run)) return cmd_run(std::move(config));
    return cmd_sweep(config, param_spec);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  }
}
