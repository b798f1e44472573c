#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcpl/config.hpp"

namespace dcpl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class SublayerKind { SelfAttention, CrossAttention, FeedForward };

const char* to_string(SublayerKind kind);

struct AttentionHeadWeights {
  Mat w_q, w_k, w_v;  // head_dim x model_dim
  Vec b_q, b_k, b_v;  // head_dim
};

struct AttentionWeights {
  std::vector<AttentionHeadWeights> heads;
  Mat w_o;  // model_dim x model_dim
  Vec b_o;  // model_dim
};

struct FeedForwardWeights {
  Mat w_in;   // ffn_dim x model_dim
  Vec b_in;   // ffn_dim
  Mat w_out;  // model_dim x ffn_dim
  Vec b_out;  // model_dim
};

struct LayerNormWeights {
  Vec gain;  // model_dim
  Vec bias;  // model_dim
};

struct SublayerWeights {
  SublayerKind kind;
  AttentionWeights attention;      // attention sub-layers only
  FeedForwardWeights feed_forward;  // feed-forward sub-layers only
  LayerNormWeights layer_norm;
};

// Decoder sub-layer lambda is 1-based; lambda % 3 == 1 is self-attention,
// == 2 cross-attention, == 0 feed-forward. Encoder layers alternate
// self-attention / feed-forward.
SublayerKind decoder_sublayer_kind(int lambda);
SublayerKind encoder_sublayer_kind(int lambda);

struct Model {
  ModelConfig config;
  Mat embedding;  // vocab_size x model_dim, output projection is its transpose
  std::vector<SublayerWeights> encoder;  // 2L entries
  std::vector<SublayerWeights> decoder;  // 3L entries
};

// View over one named weight tensor. Vectors have shape {n}, matrices
// {rows, cols}; data points at Eigen's column-major storage.
struct TensorEntry {
  std::string name;
  std::vector<long> shape;
  double* data;
  long size;
};

// Canonical enumeration order: embedding, encoder sub-layers, decoder
// sub-layers; within a sub-layer Q/K/V per head then O, ff in/out, layernorm.
std::vector<TensorEntry> tensor_entries(Model& model);
std::vector<TensorEntry> tensor_entries(const Model& model);

// Allocates all tensors with the shapes implied by config (values zero).
Model make_empty_model(const ModelConfig& config);

// Weights uniform in [-1/sqrt(d), 1/sqrt(d)], layer-norm gains 1, all biases 0.
Model init_random(const ModelConfig& config, std::uint64_t seed);

// n >= 2 evenly spaced blends (1-a)*A + a*B with a = k/(n-1); endpoints are
// bit-exact copies of the inputs.
std::vector<Model> interpolate_checkpoints(const Model& a, const Model& b, int n);

// Container format: "DCPL" magic, u32 version, u64 header length, JSON header
// {config, tensors: name -> {shape, offset}}, then row-major little-endian
// float64 payloads.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace dcpl
