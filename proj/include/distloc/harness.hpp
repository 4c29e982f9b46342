#pragma once

#include "distloc/estimation.hpp"
#include "distloc/filter.hpp"
#include "distloc/model.hpp"
#include "distloc/network.hpp"
#include "distloc/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace distloc {

struct ObservationConfig {
  ObservationModel::Kind kind = ObservationModel::Kind::Linear;
  Scalar sigma_y = 0.5;
  Scalar sigma_w = 0.35;
  Scalar alpha_min = 0.75;
  Scalar alpha_max = 1.25;
  std::vector<Scalar> alpha;  // explicit per-node gains; empty = draw from range
};

struct PriorConfig {
  bool backproject = true;  // noise-free back-projection of the initial state
  Vec mu0_global;           // used when backproject is false
  Scalar kappa = 100.0;
};

struct EstimatorConfig {
  EstimatorBank::Kind kind = EstimatorBank::Kind::None;
  StepSchedule schedule;
  long burn_in = 0;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int runs = 1;
  long steps = 1;
  int rounds = 0;  // K; 0 means the graph diameter (at least 1)
  std::vector<Vec> positions;
  std::vector<std::pair<int, int>> edges;
  int state_dim = 4;
  Scalar tau = 0.01;
  Scalar sigma_x = 1.0;
  Vec x0;  // global-frame initial target state
  ObservationConfig observation;
  EstimatorConfig estimator;
  PriorConfig prior;
  std::string out_dir = "out";

  int num_nodes() const { return static_cast<int>(positions.size()); }
};

/// Parses and validates a scenario, applying defaults. Schema violations
/// throw std::invalid_argument naming the offending field.
ScenarioConfig load_config(const std::string& path);
ScenarioConfig parse_config(const std::string& json_text);

/// Everything derived from a config that is shared across runs.
struct Scenario {
  Topology topology;
  Mat mask;
  MotionModel motion;
  std::vector<ObservationModel> observers;
  LocalizationParams truth;
  int rounds;
  NetworkFilter::Mode mode;
};

Scenario build_scenario(const ScenarioConfig& config);

struct Diagnostics {
  long skipped_msteps = 0;
};

struct RunResults {
  /// Free-coordinate parameter errors theta* - theta, one p x 2|E| matrix
  /// per step, columns in Topology::directed_edges() order.
  std::vector<Mat> param_err;
  /// Position-error norm |mu - x| per step per node.
  std::vector<Vec> tracking_err;
  std::vector<Vec> theta_final;  // per directed edge
  Diagnostics diagnostics;
};

/// One Monte Carlo run: simulate, observe in local frames, filter and
/// update parameters each step. Deterministic given (config.seed, run).
RunResults run_scenario_single(const ScenarioConfig& config, const Scenario& scenario, int run);

/// All runs, parallel across a thread pool; results in run order.
std::vector<RunResults> run_scenario(const ScenarioConfig& config);

/// sqrt of the mean over runs and directed edges of the squared parameter
/// error norm, one value per step.
Vec rmse_series(const std::vector<RunResults>& results);

struct ChainErrorRow {
  int nodes = 0;
  Scalar mean_abs_error = 0.0;
  Scalar std_error = 0.0;
};

/// Mean absolute position tracking error for chain networks of the given
/// lengths, built from the template config (estimator forced off, truth
/// localization supplied).
std::vector<ChainErrorRow> tracking_error_vs_nodes(const ScenarioConfig& base,
                                                   const std::vector<int>& lengths);

void write_param_errors_csv(const RunResults& results, const Topology& t, const std::string& path);
void write_rmse_csv(const Vec& series, const std::string& path);
void write_tracking_csv(const RunResults& results, const std::string& path);
void write_chain_csv(const std::vector<ChainErrorRow>& rows, const std::string& path);
void write_summary_json(const ScenarioConfig& config, const Scenario& scenario,
                        const std::vector<RunResults>& results, const std::string& path);

}  // namespace distloc
