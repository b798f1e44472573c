#pragma once

#include <vector>

#include "dcpl/model.hpp"

namespace dcpl {

// Token id 0 ends every generated sequence and feeds the first decoder
// position under teacher forcing.
constexpr int kEosId = 0;

// Float32 mode rounds every traced quantity to single precision at the point
// it is stored and lets the forward pass continue from the rounded values.
enum class TracePrecision { Float64, Float32 };

// Everything a sub-layer exposes. Matrices are token-major: row t holds the
// vector for position t.
struct SublayerTrace {
  SublayerKind kind = SublayerKind::SelfAttention;
  Mat input;                   // n x d, residual stream entering the sub-layer
  std::vector<Mat> attention;  // per head, n x m softmax weights; empty for feed-forward
  Mat preact;                  // n x ffn_dim pre-activations; empty for attention
  Mat unbiased;                // n x d sub-layer output with additive biases stripped
  Mat residual;                // n x d, sub-layer output plus input, before normalization
  Vec mean;                    // per-row normalization mean
  Vec std;                     // per-row normalization scale sqrt(var + eps)
  Mat output;                  // n x d post-norm output
};

struct ForwardTrace {
  Mat embedded;  // n x d token embeddings plus positional encodings
  std::vector<SublayerTrace> sublayers;

  const Mat& output() const { return sublayers.back().output; }
};

struct ForcedTrace {
  std::vector<int> input_ids;   // eos-shifted targets fed to the decoder
  std::vector<int> target_ids;  // the sequence being scored
  ForwardTrace encoder;
  ForwardTrace decoder;
};

Mat positional_encoding(int positions, int dim);

// Embedding rows plus positional encodings; validates ids and length.
Mat embed(const Model& model, const std::vector<int>& ids);

std::vector<int> shift_right(const std::vector<int>& target_ids);

ForwardTrace encode(const Model& model, const std::vector<int>& src_ids,
                    TracePrecision precision = TracePrecision::Float64);

// Decoder stack over already-encoded source states.
ForwardTrace decode_with_memory(const Model& model, const Mat& memory,
                                const std::vector<int>& input_ids,
                                TracePrecision precision = TracePrecision::Float64);

ForcedTrace decode_forced(const Model& model, const std::vector<int>& src_ids,
                          const std::vector<int>& tgt_ids,
                          TracePrecision precision = TracePrecision::Float64);

// Output projection tied to the embedding table: rows of states times emb^T.
Mat logits(const Model& model, const Mat& states);

Vec log_softmax(const Vec& scores);

struct BeamOptions {
  int beam_size = 12;
  int max_len = 0;  // 0 resolves to 2 * src_len + 4, capped at max_positions
  double length_norm = 1.0;
};

struct BeamHypothesis {
  std::vector<int> tokens;  // includes the terminating eos when complete
  double log_prob = 0.0;    // raw cumulative log probability
  double score = 0.0;       // log_prob / len^length_norm
  bool complete = false;
};

struct BeamResult {
  BeamHypothesis best;
  std::vector<BeamHypothesis> finals;  // candidate pool at selection time, best first
};

BeamResult decode_beam(const Model& model, const std::vector<int>& src_ids,
                       const BeamOptions& options);

}  // namespace dcpl
