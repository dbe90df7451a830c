#pragma once

#include <Eigen/Dense>
#include <variant>
#include <vector>

#include "stfusion/filter.hpp"
#include "stfusion/fusion.hpp"

namespace stf {

enum class FilterKind { StKF, KF };

// How each node filters and how the network fuses. The augmented-measurement
// method bypasses per-node fusion: one central filter runs on the stacked
// sensor model and every node adopts its posterior.
struct FusionConfig {
  FusionMethod method;
  FilterKind filter_kind = FilterKind::StKF;
};

using Belief = std::variant<TBelief, GBelief>;

struct SensorNode {
  int id = 0;
  Belief belief;
  MeasurementModel measurement_model;
  ProcessModel process_model;
  bool fault = false;  // last update failed; belief is the kept prediction
};

// Undirected communication topology. Self-loops are implicit: a node's
// neighborhood always contains itself. consensus_iterations is the number of
// exchange-and-fuse rounds per step.
struct SensorGraph {
  SensorGraph(Eigen::MatrixXi adjacency_in, int consensus_iterations_in);
  static SensorGraph complete(std::size_t size, int consensus_iterations = 1);

  std::vector<std::size_t> neighborhood(std::size_t s) const;  // sorted, incl. s
  std::size_t size() const { return static_cast<std::size_t>(adjacency.rows()); }

  Eigen::MatrixXi adjacency;
  int consensus_iterations = 1;
};

// One filtering-plus-fusion step with bookkeeping: fusion_weights(s, j) is
// the weight node s assigned to node j's belief in the final consensus round
// (zero outside s's neighborhood; all zero for the augmented method).
struct StepResult {
  std::vector<SensorNode> nodes;
  Eigen::MatrixXd fusion_weights;
};

// One synchronized round: per-node predict + update, then
// consensus_iterations rounds of neighborhood fusion over belief snapshots.
// A node whose update fails keeps its prediction and raises its fault flag.
StepResult step_detailed(std::vector<SensorNode> nodes, const SensorGraph& graph,
                         const FusionConfig& cfg,
                         const std::vector<Eigen::VectorXd>& measurements);
std::vector<SensorNode> step(std::vector<SensorNode> nodes, const SensorGraph& graph,
                             const FusionConfig& cfg,
                             const std::vector<Eigen::VectorXd>& measurements);

// Per-node, per-time belief history from folding step over a measurement
// sequence (time-major: measurement_sequence[t][s]).
struct SequenceResult {
  std::vector<std::vector<Belief>> beliefs;        // [t][s], post fusion
  std::vector<Eigen::MatrixXd> fusion_weights;     // [t]
  std::vector<std::vector<bool>> faults;           // [t][s]
};

SequenceResult run_sequence(std::vector<SensorNode> nodes, const SensorGraph& graph,
                            const FusionConfig& cfg,
                            const std::vector<std::vector<Eigen::VectorXd>>& measurement_sequence);

}  // namespace stf
