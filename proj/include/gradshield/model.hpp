#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gradshield/common.hpp"

namespace gradshield::nn {

enum class Arch { linear, mlp, conv };
enum class LossKind { squared_error, cross_entropy };

std::string arch_name(Arch a);
std::string loss_name(LossKind l);
Arch arch_from_name(const std::string& s);
LossKind loss_from_name(const std::string& s);

struct LayerExtent {
  std::string name;
  int offset = 0;
  int count = 0;
};

// Architecture descriptor for the differentiable toy models. The gradient
// map g(x) these models induce is smooth in the input (tanh activations
// throughout), which the input-Jacobian machinery relies on.
struct ModelSpec {
  Arch arch = Arch::linear;
  LossKind loss = LossKind::cross_entropy;
  int input_dim = 0;      // m
  int output_dim = 0;     // number of logits / regression outputs
  int hidden_dim = 0;     // mlp only
  int image_side = 0;     // conv only; input_dim == image_side^2
  int conv_channels = 0;  // conv only
  int conv_kernel = 0;    // conv only
  bool with_bias = true;
  std::string name = "custom";

  void validate() const;
  int param_count() const;
  int conv_out_side() const;
  std::vector<LayerExtent> layout() const;
};

// ~1e2 parameters: softmax regression on 10 inputs.
ModelSpec toy_linear();
// ~1e3 parameters: one tanh hidden layer.
ModelSpec toy_mlp();
// ~1e4 parameters: single tanh conv layer + dense head on a 12x12 image.
ModelSpec toy_conv();
ModelSpec model_by_name(const std::string& name);

struct Target {
  enum class Kind { class_index, regression };
  Kind kind = Kind::class_index;
  int cls = 0;
  double value = 0.0;

  static Target of_class(int c) { return Target{Kind::class_index, c, 0.0}; }
  static Target of_value(double v) { return Target{Kind::regression, 0, v}; }
};

struct DataSample {
  std::vector<double> x;
  Target target;
};

struct ParameterVector {
  std::vector<double> values;
};

ParameterVector zero_params(const ModelSpec& spec);
ParameterVector random_params(const ModelSpec& spec, double scale,
                              std::uint64_t seed);

// Per-layer views of a flat parameter vector; flatten(unflatten(v)) == v.
std::vector<std::vector<double>> unflatten(const ModelSpec& spec,
                                           const ParameterVector& params);
ParameterVector flatten(const ModelSpec& spec,
                        const std::vector<std::vector<double>>& layers);

struct GradientVector {
  ModelSpec model;
  std::vector<double> values;  // length model.param_count()
};

// Expands a class-index or scalar target into the dense vector the loss
// consumes (one-hot for classes, length-1 for regression).
std::vector<double> dense_target(const ModelSpec& spec, const Target& target);

std::vector<double> model_output(const ModelSpec& spec,
                                 const ParameterVector& params,
                                 std::span<const double> x);

double forward_loss(const ModelSpec& spec, const ParameterVector& params,
                    const DataSample& sample);
double forward_loss_dense(const ModelSpec& spec, const ParameterVector& params,
                          std::span<const double> x,
                          std::span<const double> target);

GradientVector param_gradient(const ModelSpec& spec,
                              const ParameterVector& params,
                              const DataSample& sample);
// Dense-target variant used anywhere the target itself is a free variable
// (e.g. label optimization inside the inversion attack).
std::vector<double> param_gradient_dense(const ModelSpec& spec,
                                         const ParameterVector& params,
                                         std::span<const double> x,
                                         std::span<const double> target);

}  // namespace gradshield::nn
