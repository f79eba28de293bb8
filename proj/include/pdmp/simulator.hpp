#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "pdmp/numerics/rng.hpp"
#include "pdmp/system_model.hpp"

namespace pdmp {

struct SimConfig {
  std::uint64_t seed = 42;
  double t_max = std::numeric_limits<double>::infinity();
  double burn_in = 0.0;
  std::uint64_t max_switches = 1000000;  // per replica
  int replicas = 1;
  int threads = 0;  // 0: hardware concurrency
};

struct SwitchEvent {
  double time = 0.0;
  int state_before = 0;
  int state_after = 0;  // -1 marks a window exit
  double position = 0.0;
};

/// One deterministic piece of a trajectory: state fixed, position monotone.
struct FlowSegment {
  int state = 0;
  double t0 = 0.0, t1 = 0.0;
  double x0 = 0.0, x1 = 0.0;
};

enum class Termination { time_limit, switch_limit, window_exit };

struct SimSummary {
  double final_time = 0.0;
  double final_position = 0.0;
  int final_state = 0;
  std::uint64_t switches = 0;
  Termination termination = Termination::time_limit;
};

using EventSink = std::function<void(const SwitchEvent&)>;
using SegmentSink = std::function<void(const FlowSegment&)>;

/// Exp(lambda_i) by inverse CDF of the uniform draw u in (0, 1).
double holding_time_from_uniform(const SwitchingSystem& system, int i, double u);
double sample_holding_time(const SwitchingSystem& system, int i, numerics::CounterRng& rng);
/// j != i with probability lambda_ij / lambda_i.
int next_state(const SwitchingSystem& system, int i, numerics::CounterRng& rng);

/// Event-driven trajectory on RNG stream `stream` of config.seed; events and
/// flow segments are streamed to the sinks, nothing is stored.
SimSummary simulate(const SwitchingSystem& system, double x0, int i0, const SimConfig& config, const EventSink& on_event,
                    const SegmentSink& on_segment, std::uint64_t stream = 0);

struct BinSpec {
  int linear_bins = 200;
  int log_bins_per_decade = 10;
  double min_offset = 1e-6;  // smallest log-graded offset from a critical point
  double graded_zone = 0.05;  // half-width of the log zone, relative to the range
};

/// Edges: linear over `range`, replaced by log-spaced edges within the
/// graded zone around each listed critical point.
std::vector<double> graded_bin_edges(Interval range, const std::vector<double>& critical_points, const BinSpec& spec);

class OccupationHistogram {
 public:
  OccupationHistogram(int states, std::vector<double> edges);

  /// Adds the exact time spent per bin by the segment, skipping [0, burn_in).
  void add_segment(const SwitchingSystem& system, const FlowSegment& seg, double burn_in);
  /// Bin-wise sum; merging is associative.
  void merge(const OccupationHistogram& other);

  int states() const { return static_cast<int>(occupation_.rows()); }
  int bins() const { return static_cast<int>(occupation_.cols()); }
  const std::vector<double>& edges() const { return edges_; }
  const Eigen::MatrixXd& occupation() const { return occupation_; }
  const Eigen::VectorXd& underflow() const { return underflow_; }
  const Eigen::VectorXd& overflow() const { return overflow_; }
  double total_time() const { return total_; }
  /// Occupation / (total time * bin width); integrates to one jointly.
  Eigen::MatrixXd density() const;

 private:
  void deposit(int state, double x, double dt);
  std::vector<double> edges_;
  Eigen::MatrixXd occupation_;
  Eigen::VectorXd underflow_, overflow_;
  double total_ = 0.0;
};

struct OccupationRun {
  OccupationHistogram histogram;
  std::vector<SimSummary> replicas;
  std::uint64_t total_switches = 0;
  int window_exits = 0;
};

/// Runs config.replicas independent trajectories in parallel and merges their
/// histograms in replica order, so the result is independent of scheduling.
OccupationRun occupation_density(const SwitchingSystem& system, double x0, int i0, const SimConfig& config,
                                 const std::vector<double>& edges);

const char* to_string(Termination t);

}  // namespace pdmp
