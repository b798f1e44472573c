#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "dcpl/common.hpp"
#include "dcpl/config.hpp"
#include "dcpl/forward.hpp"
#include "dcpl/model.hpp"

namespace testutil {

inline dcpl::ModelConfig toy_config(int layers = 2, int dim = 16, int heads = 4, int ffn = 32,
                                    int vocab = 23,
                                    dcpl::Activation activation = dcpl::Activation::Swish) {
  dcpl::ModelConfig cfg;
  cfg.num_layers = layers;
  cfg.model_dim = dim;
  cfg.num_heads = heads;
  cfg.ffn_dim = ffn;
  cfg.vocab_size = vocab;
  cfg.activation = activation;
  cfg.ln_epsilon = 0.0;
  cfg.max_positions = 48;
  return cfg;
}

inline dcpl::Model toy_model(std::uint64_t seed = 7,
                             dcpl::Activation activation = dcpl::Activation::Swish) {
  return dcpl::init_random(toy_config(2, 16, 4, 32, 23, activation), seed);
}

// Random non-eos token ids.
inline std::vector<int> random_ids(dcpl::Rng& rng, int len, int vocab) {
  std::vector<int> ids(static_cast<std::size_t>(len));
  for (int& id : ids) id = static_cast<int>(rng.uniform_int(std::int64_t{1}, std::int64_t{vocab - 1}));
  return ids;
}

inline double max_abs_diff(const dcpl::Mat& a, const dcpl::Mat& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline double max_abs_diff(const dcpl::Vec& a, const dcpl::Vec& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline std::string unique_path(const std::string& stem, const std::string& ext) {
  static int counter = 0;
  return (std::filesystem::temp_directory_path() /
          (stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ext))
      .string();
}

}  // namespace testutil
