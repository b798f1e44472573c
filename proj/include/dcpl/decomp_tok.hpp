#pragma once

#include <string>
#include <vector>

#include "dcpl/decomp_sl.hpp"
#include "dcpl/forward.hpp"

namespace dcpl {

// Diagonal linearization of the activation at the actual pre-activation
// point; exact there: phi(preact) = diag .* preact + intercept.
struct LocalLinearization {
  Vec preact;
  Vec diag;
  Vec intercept;
};

LocalLinearization ffn_local_linearization(const Model& model, int lambda, const Vec& e_input,
                                           bool strict = false);

// Routes per-position vectors through traced attention weights and the
// per-head value/output maps, biases excluded.
Mat attention_route(const AttentionWeights& attention, const std::vector<Mat>& weights,
                    const Mat& rows);

struct TokStage {
  // Post-norm terms at this sub-layer (n x d each).
  Mat s, t, c;
  // Pre-residual contributions of the sub-layer itself; empty at stage 0.
  Mat s_dot, t_dot, c_dot;
  VerificationReport report;
};

struct TokDecomposition {
  std::vector<TokStage> stages;  // index = sub-layer, 0 is the embedding stage
  VerificationReport worst;      // merged over stages 1..last

  static const std::vector<std::string>& term_names();
  const Mat& term(std::size_t stage, const std::string& name) const;
  const TokStage& final_stage() const { return stages.back(); }
};

// Source/target/bias split of every intermediate embedding, maintained by
// recurrence through attention routing, local feed-forward linearization, and
// the normalization update. Reconstruction is checked at every sub-layer.
TokDecomposition decompose_tok(const Model& model, const ForwardTrace& trace, double tol_a = 1e-8,
                               double tol_r = 1e-5, bool strict = false);

}  // namespace dcpl
