#include "dcpl/config.hpp"

#include <cmath>

#include "dcpl/errors.hpp"

namespace dcpl {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "gelu") return Activation::Gelu;
  if (name == "swish") return Activation::Swish;
  fail(ErrorKind::InvalidConfig, "unknown activation: " + std::string(name));
}

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::Relu: return "relu";
    case Activation::Gelu: return "gelu";
    case Activation::Swish: return "swish";
  }
  return "?";
}

double activation_value(Activation activation, double x) {
  switch (activation) {
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
    case Activation::Gelu:
      return 0.5 * x * (1.0 + std::erf(x / kSqrt2));
    case Activation::Swish:
      return x * sigmoid(x);
  }
  return 0.0;
}

double activation_derivative(Activation activation, double x, bool strict) {
  switch (activation) {
    case Activation::Relu:
      if (x == 0.0 && strict) {
        fail(ErrorKind::UndefinedDerivative, "relu derivative undefined at 0 in strict mode");
      }
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::Gelu:
      return 0.5 * (1.0 + std::erf(x / kSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    case Activation::Swish: {
      double s = sigmoid(x);
      return s + x * s * (1.0 - s);
    }
  }
  return 0.0;
}

void ModelConfig::validate() const {
  if (num_layers <= 0 || model_dim <= 0 || num_heads <= 0 || ffn_dim <= 0 ||
      max_positions <= 0) {
    fail(ErrorKind::InvalidConfig, "all model dimensions must be positive");
  }
  if (vocab_size < 2) {
    fail(ErrorKind::InvalidConfig, "vocab_size must be at least 2 (id 0 is reserved for eos)");
  }
  if (model_dim % num_heads != 0) {
    fail(ErrorKind::InvalidConfig, "model_dim must be divisible by num_heads");
  }
  if (!(ln_epsilon >= 0.0)) {
    fail(ErrorKind::InvalidConfig, "ln_epsilon must be non-negative");
  }
}

}  // namespace dcpl
