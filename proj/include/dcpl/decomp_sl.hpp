#pragma once

#include <string>
#include <vector>

#include "dcpl/forward.hpp"

namespace dcpl {

// Componentwise reconstruction check: |reference - sum| <= tol_a + tol_r*|sum|.
struct VerificationReport {
  double max_abs_residual = 0.0;
  double max_rel_residual = 0.0;  // over components with nonzero reconstructed value
  bool pass = true;

  void merge(const VerificationReport& other) {
    max_abs_residual = std::max(max_abs_residual, other.max_abs_residual);
    max_rel_residual = std::max(max_rel_residual, other.max_rel_residual);
    pass = pass && other.pass;
  }
};

VerificationReport verify_reconstruction(const std::vector<Vec>& terms, const Vec& reference,
                                         double tol_a, double tol_r);
VerificationReport verify_rows(const std::vector<const Mat*>& terms, const Mat& reference,
                               double tol_a, double tol_r);

// Composite linear effect of all normalizations from sub-layer `start` to the
// last one, at one position: x -> gain_product .* x * scale.
struct CumulativeLnMap {
  int start = 1;
  Vec gain_product;
  double scale = 1.0;

  Vec apply(const Vec& x) const { return gain_product.cwiseProduct(x) * scale; }
};

CumulativeLnMap cumulative_ln_map(const Model& model, const ForwardTrace& trace, int lambda,
                                  long position);

// Columns of the output projection owned by head h (d x head_dim).
Mat head_map(const AttentionWeights& attention, int head);

// Output bias plus value biases pushed through the output projection; the
// per-row attention weights sum to 1, so this is a constant row offset.
Vec attention_bias_offset(const AttentionWeights& attention);

struct SlDecomposition {
  Mat i, s, t, f, c;  // n x d each
  Mat reconstructed;
  Mat reference;
  VerificationReport report;

  static const std::vector<std::string>& term_names();
  const Mat& term(const std::string& name) const;
};

// Five-term split of the final decoder embeddings: input contribution (i),
// cross-attention (s), self-attention (t), feed-forward (f), and collected
// biases/offsets (c). Sums reconstruct the traced output exactly.
SlDecomposition decompose_sl(const Model& model, const ForwardTrace& trace, double tol_a = 1e-8,
                             double tol_r = 1e-5);

}  // namespace dcpl
