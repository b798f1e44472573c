#pragma once

#include <string>
#include <string_view>

namespace dcpl {

enum class Activation { Relu, Gelu, Swish };

Activation activation_from_string(std::string_view name);
std::string_view to_string(Activation activation);

double activation_value(Activation activation, double x);

// relu'(0) is 0 by convention; strict mode raises UndefinedDerivative there.
// gelu uses the exact erf form, swish is x*sigmoid(x); both have analytic
// derivatives everywhere.
double activation_derivative(Activation activation, double x, bool strict = false);

struct ModelConfig {
  int num_layers = 6;
  int model_dim = 512;
  int num_heads = 8;
  int ffn_dim = 2048;
  int vocab_size = 32000;
  Activation activation = Activation::Swish;
  double ln_epsilon = 0.0;
  int max_positions = 512;

  int decoder_sublayers() const { return 3 * num_layers; }
  int encoder_sublayers() const { return 2 * num_layers; }
  int head_dim() const { return model_dim / num_heads; }

  // Throws InvalidConfig on zero dims, d % H != 0 or negative epsilon.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace dcpl
