#include "stfusion/network.hpp"

#include <map>
#include <stdexcept>
#include <utility>

#include "stfusion/common.hpp"

namespace stf {
namespace {

const StudentT& as_t(const Belief& b) {
  const TBelief* t = std::get_if<TBelief>(&b);
  if (t == nullptr) throw std::invalid_argument("belief is not a Student's t density");
  return t->density;
}

const Gaussian& as_gaussian(const Belief& b) {
  const GBelief* g = std::get_if<GBelief>(&b);
  if (g == nullptr) throw std::invalid_argument("belief is not a Gaussian density");
  return g->density;
}

// Fuses the beliefs of one neighborhood (component order = ascending node
// index) and reports the weights used. Key dispatch point between the t and
// Gaussian pipelines.
std::pair<Belief, Eigen::VectorXd> fuse_neighborhood(const std::vector<Belief>& components,
                                                     const FusionConfig& cfg) {
  if (cfg.filter_kind == FilterKind::StKF) {
    std::vector<StudentT> ts;
    ts.reserve(components.size());
    for (const Belief& b : components) ts.push_back(as_t(b));
    WeightVector w = uniform_weights(ts.size());
    switch (cfg.method.kind) {
      case FusionKind::AaSuboptV1:
        w = aa_weights(ts, AaVariant::V1, cfg.method.dof_rule);
        break;
      case FusionKind::AaSuboptV2:
        w = aa_weights(ts, AaVariant::V2, cfg.method.dof_rule);
        break;
      case FusionKind::AaUniform:
        break;
      case FusionKind::Ci:
        w = ci_weights(ts);
        return {Belief(TBelief{ci_fuse(ts, w, cfg.method.dof_rule)}), w.w};
      default:
        throw std::invalid_argument("augmented method has no per-node fusion");
    }
    return {Belief(TBelief{aa_moment_match(WeightedTMix(ts, w.w), cfg.method.dof_rule)}),
            w.w};
  }

  std::vector<Gaussian> gs;
  gs.reserve(components.size());
  for (const Belief& b : components) gs.push_back(as_gaussian(b));
  WeightVector w = uniform_weights(gs.size());
  switch (cfg.method.kind) {
    case FusionKind::AaSuboptV1:
    case FusionKind::AaSuboptV2:
      // The two analytic surrogates coincide once every dof factor is one.
      w = aa_weights(gs);
      break;
    case FusionKind::AaUniform:
      break;
    case FusionKind::Ci:
      w = ci_weights(gs);
      return {Belief(GBelief{ci_fuse(gs, w)}), w.w};
    default:
      throw std::invalid_argument("augmented method has no per-node fusion");
  }
  return {Belief(GBelief{gaussian_aa_merge(gs, w)}), w.w};
}

Belief predict_belief(const Belief& b, const ProcessModel& pm, FilterKind kind) {
  if (kind == FilterKind::StKF) return Belief(stkf_predict(std::get<TBelief>(b), pm));
  return Belief(kf_predict(std::get<GBelief>(b), pm));
}

Belief update_belief(const Belief& b, const MeasurementModel& mm,
                     const Eigen::VectorXd& z, FilterKind kind) {
  if (kind == FilterKind::StKF) return Belief(stkf_update(std::get<TBelief>(b), mm, z));
  return Belief(kf_update(std::get<GBelief>(b), mm, z));
}

void check_belief_kind(const std::vector<SensorNode>& nodes, FilterKind kind) {
  for (const SensorNode& node : nodes) {
    if (kind == FilterKind::StKF ? !std::holds_alternative<TBelief>(node.belief)
                                 : !std::holds_alternative<GBelief>(node.belief)) {
      throw std::invalid_argument("node belief type does not match the filter kind");
    }
  }
}

StepResult augmented_step(std::vector<SensorNode> nodes, const FusionConfig& cfg,
                          const std::vector<Eigen::VectorXd>& measurements) {
  std::vector<MeasurementModel> models;
  models.reserve(nodes.size());
  Eigen::Index total = 0;
  for (const SensorNode& node : nodes) {
    models.push_back(node.measurement_model);
    total += node.measurement_model.measurement_dim();
  }
  const MeasurementModel stacked = am_stack(models);
  Eigen::VectorXd z(total);
  Eigen::Index at = 0;
  for (std::size_t s = 0; s < nodes.size(); ++s) {
    z.segment(at, measurements[s].size()) = measurements[s];
    at += measurements[s].size();
  }

  const Belief prior = predict_belief(nodes.front().belief,
                                      nodes.front().process_model, cfg.filter_kind);
  Belief central = prior;
  bool fault = false;
  try {
    central = update_belief(prior, stacked, z, cfg.filter_kind);
  } catch (const DefinitenessError&) {
    fault = true;
  }
  for (SensorNode& node : nodes) {
    node.belief = central;
    node.fault = fault;
  }
  const Eigen::Index count = static_cast<Eigen::Index>(nodes.size());
  return {std::move(nodes), Eigen::MatrixXd::Zero(count, count)};
}

}  // namespace

SensorGraph::SensorGraph(Eigen::MatrixXi adjacency_in, int consensus_iterations_in)
    : adjacency(std::move(adjacency_in)), consensus_iterations(consensus_iterations_in) {
  if (adjacency.rows() != adjacency.cols() || adjacency.rows() == 0) {
    throw DimensionError("adjacency matrix must be square and non-empty");
  }
  if (adjacency != adjacency.transpose().eval()) {
    throw std::invalid_argument("adjacency matrix must be symmetric");
  }
  if (consensus_iterations < 1) {
    throw std::invalid_argument("consensus iteration count must be at least one");
  }
}

SensorGraph SensorGraph::complete(std::size_t size, int consensus_iterations) {
  const Eigen::Index n = static_cast<Eigen::Index>(size);
  return SensorGraph(Eigen::MatrixXi::Ones(n, n), consensus_iterations);
}

std::vector<std::size_t> SensorGraph::neighborhood(std::size_t s) const {
  if (s >= size()) throw DimensionError("node index outside the graph");
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < size(); ++j) {
    if (j == s || adjacency(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) != 0) {
      out.push_back(j);
    }
  }
  return out;
}

StepResult step_detailed(std::vector<SensorNode> nodes, const SensorGraph& graph,
                         const FusionConfig& cfg,
                         const std::vector<Eigen::VectorXd>& measurements) {
  if (nodes.empty()) throw DimensionError("network needs at least one node");
  if (graph.size() != nodes.size()) {
    throw DimensionError("graph size does not match node count");
  }
  if (measurements.size() != nodes.size()) {
    throw DimensionError("one measurement per node required");
  }
  check_belief_kind(nodes, cfg.filter_kind);

  if (cfg.method.kind == FusionKind::Am) {
    return augmented_step(std::move(nodes), cfg, measurements);
  }

  for (std::size_t s = 0; s < nodes.size(); ++s) {
    SensorNode& node = nodes[s];
    const Belief prior = predict_belief(node.belief, node.process_model, cfg.filter_kind);
    try {
      node.belief = update_belief(prior, node.measurement_model, measurements[s],
                                  cfg.filter_kind);
      node.fault = false;
    } catch (const DefinitenessError&) {
      node.belief = prior;
      node.fault = true;
    }
  }

  const Eigen::Index count = static_cast<Eigen::Index>(nodes.size());
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(count, count);
  for (int round = 0; round < graph.consensus_iterations; ++round) {
    std::vector<Belief> snapshot;
    snapshot.reserve(nodes.size());
    for (const SensorNode& node : nodes) snapshot.push_back(node.belief);
    weights.setZero();

    // Identical neighborhoods fuse identically; cache per neighborhood so a
    // complete graph optimizes its weights once per round.
    std::map<std::vector<std::size_t>, std::pair<Belief, Eigen::VectorXd>> fused_cache;
    for (std::size_t s = 0; s < nodes.size(); ++s) {
      const std::vector<std::size_t> hood = graph.neighborhood(s);
      if (hood.size() == 1) {
        weights(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)) = 1.0;
        continue;
      }
      auto found = fused_cache.find(hood);
      if (found == fused_cache.end()) {
        std::vector<Belief> components;
        components.reserve(hood.size());
        for (std::size_t j : hood) components.push_back(snapshot[j]);
        found = fused_cache.emplace(hood, fuse_neighborhood(components, cfg)).first;
      }
      nodes[s].belief = found->second.first;
      const Eigen::VectorXd& w = found->second.second;
      for (std::size_t k = 0; k < hood.size(); ++k) {
        weights(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(hood[k])) =
            w[static_cast<Eigen::Index>(k)];
      }
    }
  }
  return {std::move(nodes), std::move(weights)};
}

std::vector<SensorNode> step(std::vector<SensorNode> nodes, const SensorGraph& graph,
                             const FusionConfig& cfg,
                             const std::vector<Eigen::VectorXd>& measurements) {
  return step_detailed(std::move(nodes), graph, cfg, measurements).nodes;
}

SequenceResult run_sequence(std::vector<SensorNode> nodes, const SensorGraph& graph,
                            const FusionConfig& cfg,
                            const std::vector<std::vector<Eigen::VectorXd>>& measurement_sequence) {
  if (measurement_sequence.empty()) {
    throw DimensionError("measurement sequence must be nonempty");
  }
  SequenceResult out;
  out.beliefs.reserve(measurement_sequence.size());
  out.fusion_weights.reserve(measurement_sequence.size());
  out.faults.reserve(measurement_sequence.size());
  for (const std::vector<Eigen::VectorXd>& zs : measurement_sequence) {
    StepResult r = step_detailed(std::move(nodes), graph, cfg, zs);
    nodes = std::move(r.nodes);
    std::vector<Belief> beliefs;
    std::vector<bool> faults;
    beliefs.reserve(nodes.size());
    faults.reserve(nodes.size());
    for (const SensorNode& node : nodes) {
      beliefs.push_back(node.belief);
      faults.push_back(node.fault);
    }
    out.beliefs.push_back(std::move(beliefs));
    out.faults.push_back(std::move(faults));
    out.fusion_weights.push_back(std::move(r.fusion_weights));
  }
  return out;
}

}  // namespace stf
