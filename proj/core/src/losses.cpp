#include "clab/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace clab {

namespace {

void check_embeddings(const Tensor& z, const char* op) {
  if (z.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": embeddings must be rank-2, got " +
                                shape_str(z.shape));
  }
  const std::size_t n = z.rows();
  if (n < 2 || n % 2 != 0) {
    throw std::invalid_argument(std::string(op) +
                                ": embeddings need an even row count >= 2, got " +
                                std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) sq += z.at(i, j) * z.at(i, j);
    if (std::fabs(std::sqrt(sq) - 1.0) > 1e-9) {
      throw std::invalid_argument(std::string(op) + ": embedding row " +
                                  std::to_string(i) + " is not unit norm");
    }
  }
}

void check_temperature(double tau, const char* op) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument(std::string(op) + ": temperature must be positive");
  }
}

void check_pair_labels(const std::vector<std::size_t>& labels, std::size_t rows,
                       const char* op) {
  if (labels.size() != rows) {
    throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(rows) +
                                " labels, got " + std::to_string(labels.size()));
  }
  for (std::size_t k = 0; 2 * k + 1 < rows; ++k) {
    if (labels[2 * k] != labels[2 * k + 1]) {
      throw std::invalid_argument(std::string(op) + ": views of sample " +
                                  std::to_string(k) + " carry different labels");
    }
  }
}

// exp(sims / tau) with the self-similarity column masked out of each row sum.
// Masking before the sum matters: the diagonal term exp(1/tau) dominates the
// off-diagonal mass at small temperatures, so sum-then-subtract would cancel
// away most of the denominator's precision.
struct SimilarityTerms {
  NodeId scaled_sims;  // [2N, 2N]
  NodeId exp_sims;     // exp(scaled_sims)
  NodeId denom;        // [2N], sum over k != i of exp(sim_ik / tau)
};

SimilarityTerms similarity_terms(Tape& t, NodeId z, double tau) {
  const std::size_t n = t.value(z).rows();
  NodeId scaled = t.scale(t.matmul(z, z, false, true), 1.0 / tau);
  NodeId e = t.exp(scaled);
  Tensor off_diag = Tensor::full({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) off_diag.at(i, i) = 0.0;
  NodeId denom = t.sum_axis(t.mul(e, t.constant(off_diag)), 1);
  return {scaled, e, denom};
}

}  // namespace

void ContrastiveBatch::validate(bool require_labels) const {
  check_embeddings(embeddings, "contrastive batch");
  check_temperature(temperature, "contrastive batch");
  if (require_labels && labels.empty()) {
    throw std::invalid_argument("contrastive batch: labels are required");
  }
  if (!labels.empty()) {
    check_pair_labels(labels, embeddings.rows(), "contrastive batch");
  }
}

NodeId cross_entropy_node(Tape& t, NodeId logits,
                          const std::vector<std::size_t>& targets) {
  const Tensor& l = t.value(logits);
  if (l.rank() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be rank-2, got " +
                                shape_str(l.shape));
  }
  if (targets.size() != l.rows()) {
    throw std::invalid_argument("cross_entropy: expected " + std::to_string(l.rows()) +
                                " targets, got " + std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= l.cols()) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(targets[i]) +
                                  " out of range for " + std::to_string(l.cols()) +
                                  " classes");
    }
  }
  return t.scale(t.mean(t.pick(t.log_softmax_rows(logits), targets)), -1.0);
}

NodeId ntxent_node(Tape& t, NodeId embeddings, double temperature) {
  check_temperature(temperature, "ntxent");
  const Tensor& z = t.value(embeddings);
  check_embeddings(z, "ntxent");
  const std::size_t n = z.rows();

  SimilarityTerms terms = similarity_terms(t, embeddings, temperature);
  std::vector<std::size_t> partner(n);
  for (std::size_t i = 0; i < n; ++i) partner[i] = i ^ 1;

  NodeId per_anchor =
      t.sub(t.log(terms.denom), t.log(t.pick(terms.exp_sims, partner)));
  return t.mean(per_anchor);
}

NodeId supcon_node(Tape& t, NodeId embeddings,
                   const std::vector<std::size_t>& labels, double temperature) {
  check_temperature(temperature, "supcon");
  const Tensor& z = t.value(embeddings);
  check_embeddings(z, "supcon");
  const std::size_t n = z.rows();
  check_pair_labels(labels, n, "supcon");

  // Row-normalized positive mask: M[i][p] = 1/|P(i)| for p != i with matching
  // label. Pair-label agreement guarantees every anchor has a positive.
  Tensor mask = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p != i && labels[p] == labels[i]) ++count;
    }
    if (count == 0) {
      throw std::invalid_argument("supcon: anchor " + std::to_string(i) +
                                  " has no positives");
    }
    for (std::size_t p = 0; p < n; ++p) {
      if (p != i && labels[p] == labels[i]) mask.at(i, p) = 1.0 / double(count);
    }
  }

  SimilarityTerms terms = similarity_terms(t, embeddings, temperature);
  NodeId pos_mean = t.sum_axis(t.mul(terms.scaled_sims, t.constant(mask)), 1);
  return t.mean(t.sub(t.log(terms.denom), pos_mean));
}

NodeId multi_objective_node(Tape& t, NodeId cls_logits,
                            const std::vector<std::size_t>& y,
                            NodeId rot_logits,
                            const std::vector<std::size_t>& rot_y,
                            double alpha, double beta,
                            const std::optional<ReplayTerm>& replay) {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) {
    throw std::invalid_argument("multi_objective: weights must be non-negative");
  }
  NodeId cls_term = cross_entropy_node(t, cls_logits, y);
  if (replay.has_value()) {
    cls_term = t.add(cls_term, cross_entropy_node(t, replay->logits, replay->targets));
  }
  NodeId rot_term = cross_entropy_node(t, rot_logits, rot_y);
  return t.add(t.scale(cls_term, alpha), t.scale(rot_term, beta));
}

double cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets) {
  Tape t;
  return t.value(cross_entropy_node(t, t.input("logits", logits), targets)).scalar_value();
}

double ntxent(const ContrastiveBatch& batch) {
  batch.validate(false);
  Tape t;
  NodeId z = t.input("embeddings", batch.embeddings);
  return t.value(ntxent_node(t, z, batch.temperature)).scalar_value();
}

double supcon(const ContrastiveBatch& batch) {
  batch.validate(true);
  Tape t;
  NodeId z = t.input("embeddings", batch.embeddings);
  return t.value(supcon_node(t, z, batch.labels, batch.temperature)).scalar_value();
}

}  // namespace clab
