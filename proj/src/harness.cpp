#include "distloc/harness.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace distloc {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw std::invalid_argument("config: " + field + ": " + what);
}

Vec to_vec(const json& j, const std::string& field) {
  if (!j.is_array()) config_error(field, "expected an array of numbers");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) config_error(field, "expected an array of numbers");
    v(static_cast<int>(i)) = j[i].get<Scalar>();
  }
  return v;
}

std::string format_double(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ScenarioConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }

  ScenarioConfig c;
  c.seed = j.value("seed", 1ULL);
  c.runs = j.value("runs", 1);
  if (c.runs < 1) config_error("runs", "must be >= 1");
  c.steps = j.value("steps", 1L);
  if (c.steps < 1) config_error("steps", "must be >= 1");
  c.rounds = j.value("K", 0);
  if (c.rounds < 0) config_error("K", "must be >= 1 (or omitted for the graph diameter)");

  if (!j.contains("network")) config_error("network", "missing");
  const json& net = j["network"];
  if (!net.contains("positions") || !net["positions"].is_array() || net["positions"].empty()) {
    config_error("network.positions", "need at least one node position");
  }
  for (const auto& p : net["positions"]) {
    c.positions.push_back(to_vec(p, "network.positions"));
    if (c.positions.back().size() != c.positions.front().size()) {
      config_error("network.positions", "positions must share one dimension");
    }
  }
  if (c.positions.size() > 1 && !net.contains("edges")) {
    config_error("network.edges", "missing (required for more than one node)");
  }
  for (const auto& e : net.value("edges", json::array())) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      config_error("network.edges", "each edge must be a pair of node indices");
    }
    c.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }

  const json model = j.value("model", json::object());
  c.state_dim = model.value("state_dim", 4);
  c.tau = model.value("tau", 0.01);
  c.sigma_x = model.value("sigma_x", 1.0);
  if (c.tau < 0) config_error("model.tau", "must be non-negative");
  if (c.sigma_x < 0) config_error("model.sigma_x", "must be non-negative");
  if (model.contains("x0")) {
    c.x0 = to_vec(model["x0"], "model.x0");
    if (c.x0.size() != c.state_dim) config_error("model.x0", "dimension must match state_dim");
  } else {
    c.x0 = Vec::Zero(c.state_dim);
  }

  const json obs = model.value("observation", json::object());
  const std::string kind = obs.value("kind", "linear");
  if (kind == "linear") {
    c.observation.kind = ObservationModel::Kind::Linear;
  } else if (kind == "bearings") {
    c.observation.kind = ObservationModel::Kind::Bearings;
    if (c.state_dim != 4) config_error("model.observation.kind", "bearings needs state_dim 4");
  } else {
    config_error("model.observation.kind", "must be 'linear' or 'bearings'");
  }
  c.observation.sigma_y = obs.value("sigma_y", 0.5);
  c.observation.sigma_w = obs.value("sigma_w", 0.35);
  if (c.observation.sigma_y <= 0) config_error("model.observation.sigma_y", "must be positive");
  if (c.observation.sigma_w <= 0) config_error("model.observation.sigma_w", "must be positive");
  if (obs.contains("alpha")) {
    if (obs["alpha"].is_number()) {
      c.observation.alpha.assign(c.positions.size(), obs["alpha"].get<Scalar>());
    } else {
      const Vec a = to_vec(obs["alpha"], "model.observation.alpha");
      if (a.size() != static_cast<int>(c.positions.size())) {
        config_error("model.observation.alpha", "need one gain per node");
      }
      for (int i = 0; i < a.size(); ++i) c.observation.alpha.push_back(a(i));
    }
  } else if (obs.contains("alpha_range")) {
    const Vec r = to_vec(obs["alpha_range"], "model.observation.alpha_range");
    if (r.size() != 2 || r(0) <= 0 || r(1) < r(0)) {
      config_error("model.observation.alpha_range", "expected [lo, hi] with 0 < lo <= hi");
    }
    c.observation.alpha_min = r(0);
    c.observation.alpha_max = r(1);
  }

  const json est = j.value("estimator", json::object());
  const std::string est_kind = est.value("kind", "none");
  if (est_kind == "none") {
    c.estimator.kind = EstimatorBank::Kind::None;
  } else if (est_kind == "rml") {
    c.estimator.kind = EstimatorBank::Kind::Rml;
  } else if (est_kind == "em") {
    c.estimator.kind = EstimatorBank::Kind::Em;
  } else {
    config_error("estimator.kind", "must be 'none', 'rml' or 'em'");
  }
  c.estimator.schedule.gamma0 = est.value("gamma0", est_kind == "em" ? 0.025 : 4e-3);
  c.estimator.schedule.hold_until = est.value("hold_until", 1000L);
  c.estimator.schedule.decay_exponent = est.value("decay_exponent", 0.8);
  c.estimator.burn_in = est.value("burn_in", 0L);
  if (c.estimator.schedule.gamma0 <= 0) config_error("estimator.gamma0", "must be positive");
  if (c.estimator.schedule.decay_exponent <= 0.5 || c.estimator.schedule.decay_exponent > 1.0) {
    config_error("estimator.decay_exponent", "must lie in (0.5, 1]");
  }

  const json prior = j.value("prior", json::object());
  if (prior.contains("mu0") && !prior["mu0"].is_string()) {
    c.prior.backproject = false;
    c.prior.mu0_global = to_vec(prior["mu0"], "prior.mu0");
    if (c.prior.mu0_global.size() != c.state_dim) {
      config_error("prior.mu0", "dimension must match state_dim");
    }
  } else if (prior.contains("mu0") && prior["mu0"].get<std::string>() != "backproject") {
    config_error("prior.mu0", "must be 'backproject' or an explicit state vector");
  }
  c.prior.kappa = prior.value("kappa", 100.0);
  if (c.prior.kappa <= 0) config_error("prior.kappa", "must be positive");

  c.out_dir = j.value("output", json::object()).value("dir", "out");
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

Scenario build_scenario(const ScenarioConfig& config) {
  Topology topology(config.num_nodes(), config.edges);
  Mat mask = free_component_mask(config.state_dim);
  if (mask.cols() != config.positions.front().size()) {
    config_error("network.positions", "position dimension must match the state's free components");
  }

  MotionModel motion = config.state_dim == 1
                           ? build_scalar_model(1.0, 1.0, config.sigma_x * config.sigma_x)
                           : build_cv_model(config.tau, config.sigma_x);

  std::vector<Scalar> alpha = config.observation.alpha;
  if (alpha.empty()) {
    Rng alpha_rng(derive_seed(config.seed, 0xA1F4));
    for (int v = 0; v < config.num_nodes(); ++v) {
      alpha.push_back(alpha_rng.uniform(config.observation.alpha_min, config.observation.alpha_max));
    }
  }
  std::vector<ObservationModel> observers;
  observers.reserve(config.num_nodes());
  for (int v = 0; v < config.num_nodes(); ++v) {
    if (config.observation.kind == ObservationModel::Kind::Linear) {
      observers.push_back(
          make_position_observer(alpha[v], config.observation.sigma_y, config.state_dim));
    } else {
      observers.push_back(make_bearings_observer(config.observation.sigma_w));
    }
  }

  LocalizationParams truth = truth_from_positions(topology, config.positions, mask);
  const int rounds = config.rounds > 0 ? config.rounds : std::max(1, graph_diameter(topology));
  const NetworkFilter::Mode mode = config.observation.kind == ObservationModel::Kind::Bearings
                                       ? NetworkFilter::Mode::Ekf
                                       : NetworkFilter::Mode::Linear;
  return Scenario{std::move(topology), std::move(mask), std::move(motion), std::move(observers),
                  std::move(truth), rounds, mode};
}

namespace {

std::vector<Vec> prior_means(const ScenarioConfig& config, const Scenario& scenario) {
  Vec mu0_global = config.prior.backproject ? Vec(scenario.mask * (scenario.mask.transpose() * config.x0))
                                            : config.prior.mu0_global;
  std::vector<Vec> mu0;
  mu0.reserve(config.num_nodes());
  for (int r = 0; r < config.num_nodes(); ++r) {
    mu0.push_back(mu0_global - scenario.mask * config.positions[r]);
  }
  return mu0;
}

}  // namespace

RunResults run_scenario_single(const ScenarioConfig& config, const Scenario& scenario, int run) {
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(run)));
  const auto trajectory = simulate_target(scenario.motion, static_cast<int>(config.steps),
                                          config.x0, rng);

  const Topology& t = scenario.topology;
  std::vector<std::vector<Vec>> observations(config.steps, std::vector<Vec>(t.num_nodes()));
  try {
    for (long n = 0; n < config.steps; ++n) {
      for (int r = 0; r < t.num_nodes(); ++r) {
        const Vec x_local = trajectory[n] - scenario.mask * config.positions[r];
        observations[n][r] = observe(scenario.observers[r], x_local, rng);
      }
    }
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " while generating observations (run " +
                         std::to_string(run) + ")");
  }

  const bool truth_theta = config.estimator.kind == EstimatorBank::Kind::None;
  LocalizationParams theta =
      truth_theta ? scenario.truth : LocalizationParams(t, scenario.mask);

  NetworkFilter filter(t, scenario.motion, scenario.observers, prior_means(config, scenario),
                       config.prior.kappa, scenario.rounds, scenario.mode);
  EstimatorBank bank(config.estimator.kind, t, scenario.mask, config.estimator.schedule,
                     config.estimator.burn_in);

  RunResults results;
  results.param_err.reserve(config.steps);
  results.tracking_err.reserve(config.steps);
  const int p = static_cast<int>(scenario.mask.cols());
  for (long n = 1; n <= config.steps; ++n) {
    try {
      filter.step(observations[n - 1], theta);
      bank.update(n, filter, theta);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (run " + std::to_string(run) + ", step " +
                           std::to_string(n) + ")");
    }

    Vec track(t.num_nodes());
    for (int r = 0; r < t.num_nodes(); ++r) {
      const Vec x_local = trajectory[n - 1] - scenario.mask * config.positions[r];
      track(r) = (scenario.mask.transpose() * (filter.node(r).mu - x_local)).norm();
    }
    results.tracking_err.push_back(std::move(track));

    Mat err(p, t.num_directed_edges());
    for (int e = 0; e < t.num_directed_edges(); ++e) {
      const auto [i, j] = t.directed_edges()[e];
      err.col(e) = scenario.mask.transpose() * (scenario.truth.at(i, j) - theta.at(i, j));
    }
    results.param_err.push_back(std::move(err));
  }

  results.theta_final.reserve(t.num_directed_edges());
  for (const auto& [i, j] : t.directed_edges()) results.theta_final.push_back(theta.at(i, j));
  results.diagnostics.skipped_msteps = bank.skipped_msteps();
  return results;
}

std::vector<RunResults> run_scenario(const ScenarioConfig& config) {
  const Scenario scenario = build_scenario(config);
  std::vector<RunResults> results(config.runs);
  const int workers = std::max(1, std::min<int>(config.runs, static_cast<int>(std::thread::hardware_concurrency())));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int run; (run = next.fetch_add(1)) < config.runs;) {
        try {
          results[run] = run_scenario_single(config, scenario, run);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

Vec rmse_series(const std::vector<RunResults>& results) {
  if (results.empty()) throw std::invalid_argument("rmse_series: need at least one run");
  const long steps = static_cast<long>(results.front().param_err.size());
  const long edges = results.front().param_err.empty() ? 0 : results.front().param_err.front().cols();
  Vec series = Vec::Zero(steps);
  for (long n = 0; n < steps; ++n) {
    Scalar total = 0.0;
    for (const auto& run : results) total += run.param_err[n].squaredNorm();
    series(n) = std::sqrt(total / (static_cast<Scalar>(results.size()) * edges));
  }
  return series;
}

std::vector<ChainErrorRow> tracking_error_vs_nodes(const ScenarioConfig& base,
                                                   const std::vector<int>& lengths) {
  std::vector<ChainErrorRow> rows;
  const int pos_dim = static_cast<int>(base.positions.front().size());
  for (int length : lengths) {
    if (length < 1) throw std::invalid_argument("tracking_error_vs_nodes: lengths must be >= 1");
    ScenarioConfig c = base;
    c.estimator.kind = EstimatorBank::Kind::None;
    c.positions.clear();
    c.edges.clear();
    for (int i = 0; i < length; ++i) {
      Vec p = Vec::Zero(pos_dim);
      p(0) = static_cast<Scalar>(i);
      c.positions.push_back(p);
    }
    for (int i = 0; i + 1 < length; ++i) c.edges.emplace_back(i, i + 1);

    const auto results = run_scenario(c);
    Vec per_run(c.runs);
    for (int m = 0; m < c.runs; ++m) {
      Scalar sum = 0.0;
      long count = 0;
      for (const Vec& track : results[m].tracking_err) {
        sum += track.sum();
        count += track.size();
      }
      per_run(m) = sum / count;
    }
    ChainErrorRow row;
    row.nodes = length;
    row.mean_abs_error = per_run.mean();
    row.std_error = c.runs > 1
                        ? std::sqrt((per_run.array() - per_run.mean()).square().sum() /
                                    (c.runs - 1) / c.runs)
                        : 0.0;
    rows.push_back(row);
  }
  return rows;
}

void write_param_errors_csv(const RunResults& results, const Topology& t,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,edge_src,edge_dst,err_x,err_y\n";
  for (std::size_t n = 0; n < results.param_err.size(); ++n) {
    const Mat& err = results.param_err[n];
    for (int e = 0; e < err.cols(); ++e) {
      const auto [i, j] = t.directed_edges()[e];
      const Scalar err_y = err.rows() > 1 ? err(1, e) : 0.0;
      out << (n + 1) << ',' << i << ',' << j << ',' << format_double(err(0, e)) << ','
          << format_double(err_y) << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_rmse_csv(const Vec& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,rmse\n";
  for (int n = 0; n < series.size(); ++n) {
    out << (n + 1) << ',' << format_double(series(n)) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_tracking_csv(const RunResults& results, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,node,abs_err\n";
  for (std::size_t n = 0; n < results.tracking_err.size(); ++n) {
    const Vec& track = results.tracking_err[n];
    for (int r = 0; r < track.size(); ++r) {
      out << (n + 1) << ',' << r << ',' << format_double(track(r)) << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_chain_csv(const std::vector<ChainErrorRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "nodes,mean_abs_error,std_error\n";
  for (const auto& row : rows) {
    out << row.nodes << ',' << format_double(row.mean_abs_error) << ','
        << format_double(row.std_error) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_summary_json(const ScenarioConfig& config, const Scenario& scenario,
                        const std::vector<RunResults>& results, const std::string& path) {
  json summary;
  summary["seed"] = config.seed;
  summary["runs"] = config.runs;
  summary["steps"] = config.steps;
  summary["K"] = scenario.rounds;

  long skipped = 0;
  for (const auto& run : results) skipped += run.diagnostics.skipped_msteps;
  summary["diagnostics"]["skipped_msteps"] = skipped;

  const Vec series = rmse_series(results);
  summary["rmse"]["initial"] = series(0);
  summary["rmse"]["final"] = series(series.size() - 1);

  // Final estimates from run 0 plus the antisymmetry residual diagnostic:
  // the two directions of an edge are learned independently and only agree
  // in the limit.
  json estimates = json::array();
  Scalar max_residual = 0.0;
  const Topology& t = scenario.topology;
  for (int e = 0; e < t.num_directed_edges(); ++e) {
    const auto [i, j] = t.directed_edges()[e];
    const Vec& theta = results.front().theta_final[e];
    const Vec& reverse = results.front().theta_final[t.directed_edge_index(j, i)];
    json entry;
    entry["src"] = i;
    entry["dst"] = j;
    entry["theta"] = std::vector<Scalar>(theta.data(), theta.data() + theta.size());
    const Scalar residual = (theta + reverse).norm();
    entry["antisymmetry_residual"] = residual;
    max_residual = std::max(max_residual, residual);
    estimates.push_back(entry);
  }
  summary["estimates"] = estimates;
  summary["diagnostics"]["max_antisymmetry_residual"] = max_residual;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << summary.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace distloc
