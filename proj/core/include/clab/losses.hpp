#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "clab/tape.hpp"
#include "clab/tensor.hpp"

namespace clab {

// A two-view contrastive batch: rows 2k and 2k+1 are the two augmented views
// of source sample k.
struct ContrastiveBatch {
  Tensor embeddings;                // [2N, d], unit-norm rows
  std::vector<std::size_t> labels;  // one per row; empty when unlabeled
  double temperature = 0.07;

  void validate(bool require_labels) const;
};

// Differentiable graph builders. Each validates its inputs against the
// recorded values and returns a scalar node on `t`.
NodeId cross_entropy_node(Tape& t, NodeId logits,
                          const std::vector<std::size_t>& targets);
NodeId ntxent_node(Tape& t, NodeId embeddings, double temperature);
NodeId supcon_node(Tape& t, NodeId embeddings,
                   const std::vector<std::size_t>& labels, double temperature);

struct ReplayTerm {
  NodeId logits;
  std::vector<std::size_t> targets;
};

// alpha * (ce(current) [+ ce(replay)]) + beta * ce(rotation)
NodeId multi_objective_node(Tape& t, NodeId cls_logits,
                            const std::vector<std::size_t>& y,
                            NodeId rot_logits,
                            const std::vector<std::size_t>& rot_y,
                            double alpha, double beta,
                            const std::optional<ReplayTerm>& replay = std::nullopt);

// Value-level conveniences (throwaway tape inside).
double cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets);
double ntxent(const ContrastiveBatch& batch);
double supcon(const ContrastiveBatch& batch);

}  // namespace clab
