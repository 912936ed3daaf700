#include "gradshield/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gradshield::nn {

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::linear: return "linear";
    case Arch::mlp: return "mlp";
    case Arch::conv: return "conv";
  }
  throw ConfigError("unknown architecture enum value");
}

std::string loss_name(LossKind l) {
  switch (l) {
    case LossKind::squared_error: return "squared-error";
    case LossKind::cross_entropy: return "cross-entropy";
  }
  throw ConfigError("unknown loss enum value");
}

Arch arch_from_name(const std::string& s) {
  if (s == "linear") return Arch::linear;
  if (s == "mlp") return Arch::mlp;
  if (s == "conv") return Arch::conv;
  throw ConfigError("unknown architecture '" + s +
                    "' (expected linear, mlp, or conv)");
}

LossKind loss_from_name(const std::string& s) {
  if (s == "squared-error" || s == "se") return LossKind::squared_error;
  if (s == "cross-entropy" || s == "ce") return LossKind::cross_entropy;
  throw ConfigError("unknown loss '" + s +
                    "' (expected squared-error or cross-entropy)");
}

void ModelSpec::validate() const {
  if (input_dim < 1) throw ConfigError("model input_dim must be >= 1");
  if (output_dim < 1) throw ConfigError("model output_dim must be >= 1");
  if (loss == LossKind::cross_entropy && output_dim < 2) {
    throw ConfigError("cross-entropy needs >= 2 output classes");
  }
  switch (arch) {
    case Arch::linear:
      break;
    case Arch::mlp:
      if (hidden_dim < 1) throw ConfigError("mlp hidden_dim must be >= 1");
      break;
    case Arch::conv:
      if (image_side < 2) throw ConfigError("conv image_side must be >= 2");
      if (conv_kernel < 1 || conv_kernel > image_side) {
        throw ConfigError("conv kernel must lie in [1, image_side]");
      }
      if (conv_channels < 1) throw ConfigError("conv channels must be >= 1");
      if (input_dim != image_side * image_side) {
        throw ConfigError("conv input_dim must equal image_side^2");
      }
      break;
  }
}

int ModelSpec::conv_out_side() const {
  return image_side - conv_kernel + 1;
}

namespace {

struct Offsets {
  int w1 = 0;   // linear W / mlp W1 / conv filters
  int b1 = -1;  // matching bias, -1 when with_bias is off
  int w2 = -1;  // mlp/conv second layer
  int b2 = -1;
  int total = 0;
};

Offsets offsets_of(const ModelSpec& s) {
  Offsets o;
  const int c = s.output_dim;
  switch (s.arch) {
    case Arch::linear: {
      int at = c * s.input_dim;
      if (s.with_bias) {
        o.b1 = at;
        at += c;
      }
      o.total = at;
      break;
    }
    case Arch::mlp: {
      int at = s.hidden_dim * s.input_dim;
      if (s.with_bias) {
        o.b1 = at;
        at += s.hidden_dim;
      }
      o.w2 = at;
      at += c * s.hidden_dim;
      if (s.with_bias) {
        o.b2 = at;
        at += c;
      }
      o.total = at;
      break;
    }
    case Arch::conv: {
      const int k2 = s.conv_kernel * s.conv_kernel;
      const int out = s.conv_out_side();
      const int feat = s.conv_channels * out * out;
      int at = s.conv_channels * k2;
      if (s.with_bias) {
        o.b1 = at;
        at += s.conv_channels;
      }
      o.w2 = at;
      at += c * feat;
      if (s.with_bias) {
        o.b2 = at;
        at += c;
      }
      o.total = at;
      break;
    }
  }
  return o;
}

void check_finite(std::span<const double> v, const char* layer,
                  const ModelSpec& spec) {
  for (double u : v) {
    if (!std::isfinite(u)) {
      throw NumericError("non-finite value in layer '" + std::string(layer) +
                         "' of model '" + spec.name + "'");
    }
  }
}

struct Forward {
  std::vector<double> hidden;  // post-activation (mlp hidden / conv features)
  std::vector<double> logits;
};

Forward run_forward(const ModelSpec& spec, const ParameterVector& params,
                    std::span<const double> x) {
  if (static_cast<int>(x.size()) != spec.input_dim) {
    throw ConfigError("input length " + std::to_string(x.size()) +
                      " does not match model input_dim " +
                      std::to_string(spec.input_dim));
  }
  if (static_cast<int>(params.values.size()) != spec.param_count()) {
    throw ConfigError("parameter vector length " +
                      std::to_string(params.values.size()) +
                      " does not match model size " +
                      std::to_string(spec.param_count()));
  }
  const Offsets off = offsets_of(spec);
  const double* p = params.values.data();
  const int c = spec.output_dim;
  Forward f;
  switch (spec.arch) {
    case Arch::linear: {
      f.logits.assign(c, 0.0);
      for (int j = 0; j < c; ++j) {
        double acc = off.b1 >= 0 ? p[off.b1 + j] : 0.0;
        const double* row = p + static_cast<std::ptrdiff_t>(j) * spec.input_dim;
        for (int i = 0; i < spec.input_dim; ++i) acc += row[i] * x[i];
        f.logits[j] = acc;
      }
      break;
    }
    case Arch::mlp: {
      const int h = spec.hidden_dim;
      f.hidden.assign(h, 0.0);
      for (int j = 0; j < h; ++j) {
        double acc = off.b1 >= 0 ? p[off.b1 + j] : 0.0;
        const double* row = p + static_cast<std::ptrdiff_t>(j) * spec.input_dim;
        for (int i = 0; i < spec.input_dim; ++i) acc += row[i] * x[i];
        f.hidden[j] = std::tanh(acc);
      }
      check_finite(f.hidden, "hidden", spec);
      f.logits.assign(c, 0.0);
      for (int j = 0; j < c; ++j) {
        double acc = off.b2 >= 0 ? p[off.b2 + j] : 0.0;
        const double* row = p + off.w2 + static_cast<std::ptrdiff_t>(j) * h;
        for (int i = 0; i < h; ++i) acc += row[i] * f.hidden[i];
        f.logits[j] = acc;
      }
      break;
    }
    case Arch::conv: {
      const int side = spec.image_side;
      const int k = spec.conv_kernel;
      const int out = spec.conv_out_side();
      const int chans = spec.conv_channels;
      f.hidden.assign(static_cast<std::size_t>(chans) * out * out, 0.0);
      for (int ch = 0; ch < chans; ++ch) {
        const double* w = p + static_cast<std::ptrdiff_t>(ch) * k * k;
        const double bias = off.b1 >= 0 ? p[off.b1 + ch] : 0.0;
        for (int i = 0; i < out; ++i) {
          for (int j = 0; j < out; ++j) {
            double acc = bias;
            for (int u = 0; u < k; ++u) {
              for (int v = 0; v < k; ++v) {
                acc += w[u * k + v] * x[(i + u) * side + (j + v)];
              }
            }
            f.hidden[(static_cast<std::size_t>(ch) * out + i) * out + j] =
                std::tanh(acc);
          }
        }
      }
      check_finite(f.hidden, "conv", spec);
      const int feat = chans * out * out;
      f.logits.assign(c, 0.0);
      for (int j = 0; j < c; ++j) {
        double acc = off.b2 >= 0 ? p[off.b2 + j] : 0.0;
        const double* row = p + off.w2 + static_cast<std::ptrdiff_t>(j) * feat;
        for (int i = 0; i < feat; ++i) acc += row[i] * f.hidden[i];
        f.logits[j] = acc;
      }
      break;
    }
  }
  check_finite(f.logits, "output", spec);
  return f;
}

// Loss value plus dL/dlogits for either loss kind.
double loss_and_delta(const ModelSpec& spec, std::span<const double> logits,
                      std::span<const double> target,
                      std::vector<double>* delta) {
  const int c = spec.output_dim;
  if (static_cast<int>(target.size()) != c) {
    throw ConfigError("target length " + std::to_string(target.size()) +
                      " does not match model output_dim " + std::to_string(c));
  }
  double loss = 0.0;
  if (delta) delta->assign(c, 0.0);
  if (spec.loss == LossKind::squared_error) {
    for (int j = 0; j < c; ++j) {
      const double r = logits[j] - target[j];
      loss += 0.5 * r * r;
      if (delta) (*delta)[j] = r;
    }
  } else {
    double mx = logits[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, logits[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(logits[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < c; ++j) {
      loss -= target[j] * logits[j];
      if (delta) (*delta)[j] = std::exp(logits[j] - mx) / sum - target[j];
    }
    loss += lse;
  }
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite value in layer 'loss' of model '" +
                       spec.name + "'");
  }
  return loss;
}

}  // namespace

int ModelSpec::param_count() const {
  validate();
  return offsets_of(*this).total;
}

std::vector<LayerExtent> ModelSpec::layout() const {
  validate();
  const Offsets o = offsets_of(*this);
  std::vector<LayerExtent> out;
  const int c = output_dim;
  switch (arch) {
    case Arch::linear:
      out.push_back({"W", o.w1, c * input_dim});
      if (o.b1 >= 0) out.push_back({"b", o.b1, c});
      break;
    case Arch::mlp:
      out.push_back({"W1", o.w1, hidden_dim * input_dim});
      if (o.b1 >= 0) out.push_back({"b1", o.b1, hidden_dim});
      out.push_back({"W2", o.w2, c * hidden_dim});
      if (o.b2 >= 0) out.push_back({"b2", o.b2, c});
      break;
    case Arch::conv: {
      const int feat = conv_channels * conv_out_side() * conv_out_side();
      out.push_back({"conv_w", o.w1, conv_channels * conv_kernel * conv_kernel});
      if (o.b1 >= 0) out.push_back({"conv_b", o.b1, conv_channels});
      out.push_back({"fc_w", o.w2, c * feat});
      if (o.b2 >= 0) out.push_back({"fc_b", o.b2, c});
      break;
    }
  }
  return out;
}

ModelSpec toy_linear() {
  ModelSpec s;
  s.arch = Arch::linear;
  s.loss = LossKind::cross_entropy;
  s.input_dim = 10;
  s.output_dim = 10;
  s.name = "toy-linear";
  return s;
}

ModelSpec toy_mlp() {
  ModelSpec s;
  s.arch = Arch::mlp;
  s.loss = LossKind::cross_entropy;
  s.input_dim = 16;
  s.hidden_dim = 32;
  s.output_dim = 10;
  s.name = "toy-mlp";
  return s;
}

ModelSpec toy_conv() {
  ModelSpec s;
  s.arch = Arch::conv;
  s.loss = LossKind::cross_entropy;
  s.image_side = 12;
  s.input_dim = 144;
  s.conv_channels = 16;
  s.conv_kernel = 3;
  s.output_dim = 6;
  s.name = "toy-conv";
  return s;
}

ModelSpec model_by_name(const std::string& name) {
  if (name == "toy-linear") return toy_linear();
  if (name == "toy-mlp") return toy_mlp();
  if (name == "toy-conv") return toy_conv();
  throw ConfigError("unknown model '" + name +
                    "' (expected toy-linear, toy-mlp, or toy-conv)");
}

ParameterVector zero_params(const ModelSpec& spec) {
  ParameterVector p;
  p.values.assign(static_cast<std::size_t>(spec.param_count()), 0.0);
  return p;
}

ParameterVector random_params(const ModelSpec& spec, double scale,
                              std::uint64_t seed) {
  ParameterVector p;
  p.values.resize(static_cast<std::size_t>(spec.param_count()));
  GaussianSampler g(seed);
  g.fill(p.values, scale);
  return p;
}

std::vector<std::vector<double>> unflatten(const ModelSpec& spec,
                                           const ParameterVector& params) {
  if (static_cast<int>(params.values.size()) != spec.param_count()) {
    throw ConfigError("parameter vector length does not match model size");
  }
  std::vector<std::vector<double>> layers;
  for (const LayerExtent& e : spec.layout()) {
    layers.emplace_back(params.values.begin() + e.offset,
                        params.values.begin() + e.offset + e.count);
  }
  return layers;
}

ParameterVector flatten(const ModelSpec& spec,
                        const std::vector<std::vector<double>>& layers) {
  const auto extents = spec.layout();
  if (layers.size() != extents.size()) {
    throw ConfigError("layer count does not match model layout");
  }
  ParameterVector p;
  p.values.reserve(static_cast<std::size_t>(spec.param_count()));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (static_cast<int>(layers[i].size()) != extents[i].count) {
      throw ConfigError("layer '" + extents[i].name + "' has wrong size");
    }
    p.values.insert(p.values.end(), layers[i].begin(), layers[i].end());
  }
  return p;
}

std::vector<double> dense_target(const ModelSpec& spec, const Target& target) {
  const int c = spec.output_dim;
  std::vector<double> t(static_cast<std::size_t>(c), 0.0);
  if (target.kind == Target::Kind::class_index) {
    if (target.cls < 0 || target.cls >= c) {
      throw ConfigError("class index " + std::to_string(target.cls) +
                        " out of range for " + std::to_string(c) + " outputs");
    }
    t[static_cast<std::size_t>(target.cls)] = 1.0;
  } else {
    if (spec.loss == LossKind::cross_entropy) {
      throw ConfigError("regression target is not valid under cross-entropy");
    }
    if (c != 1) {
      throw ConfigError("regression target needs output_dim == 1");
    }
    t[0] = target.value;
  }
  return t;
}

std::vector<double> model_output(const ModelSpec& spec,
                                 const ParameterVector& params,
                                 std::span<const double> x) {
  return run_forward(spec, params, x).logits;
}

double forward_loss_dense(const ModelSpec& spec, const ParameterVector& params,
                          std::span<const double> x,
                          std::span<const double> target) {
  const Forward f = run_forward(spec, params, x);
  return loss_and_delta(spec, f.logits, target, nullptr);
}

double forward_loss(const ModelSpec& spec, const ParameterVector& params,
                    const DataSample& sample) {
  return forward_loss_dense(spec, params, sample.x,
                            dense_target(spec, sample.target));
}

std::vector<double> param_gradient_dense(const ModelSpec& spec,
                                         const ParameterVector& params,
                                         std::span<const double> x,
                                         std::span<const double> target) {
  const Forward f = run_forward(spec, params, x);
  std::vector<double> delta;
  loss_and_delta(spec, f.logits, target, &delta);

  const Offsets off = offsets_of(spec);
  const double* p = params.values.data();
  std::vector<double> grad(static_cast<std::size_t>(off.total), 0.0);
  const int c = spec.output_dim;

  switch (spec.arch) {
    case Arch::linear: {
      for (int j = 0; j < c; ++j) {
        double* row = grad.data() + static_cast<std::ptrdiff_t>(j) * spec.input_dim;
        for (int i = 0; i < spec.input_dim; ++i) row[i] = delta[j] * x[i];
        if (off.b1 >= 0) grad[off.b1 + j] = delta[j];
      }
      break;
    }
    case Arch::mlp: {
      const int h = spec.hidden_dim;
      std::vector<double> dpre(static_cast<std::size_t>(h), 0.0);
      for (int j = 0; j < c; ++j) {
        double* row = grad.data() + off.w2 + static_cast<std::ptrdiff_t>(j) * h;
        const double* w2 = p + off.w2 + static_cast<std::ptrdiff_t>(j) * h;
        for (int i = 0; i < h; ++i) {
          row[i] = delta[j] * f.hidden[i];
          dpre[i] += w2[i] * delta[j];
        }
        if (off.b2 >= 0) grad[off.b2 + j] = delta[j];
      }
      for (int i = 0; i < h; ++i) {
        dpre[i] *= 1.0 - f.hidden[i] * f.hidden[i];  // tanh'
      }
      for (int j = 0; j < h; ++j) {
        double* row = grad.data() + static_cast<std::ptrdiff_t>(j) * spec.input_dim;
        for (int i = 0; i < spec.input_dim; ++i) row[i] = dpre[j] * x[i];
        if (off.b1 >= 0) grad[off.b1 + j] = dpre[j];
      }
      break;
    }
    case Arch::conv: {
      const int side = spec.image_side;
      const int k = spec.conv_kernel;
      const int out = spec.conv_out_side();
      const int chans = spec.conv_channels;
      const int feat = chans * out * out;
      std::vector<double> dfeat(static_cast<std::size_t>(feat), 0.0);
      for (int j = 0; j < c; ++j) {
        double* row = grad.data() + off.w2 + static_cast<std::ptrdiff_t>(j) * feat;
        const double* w2 = p + off.w2 + static_cast<std::ptrdiff_t>(j) * feat;
        for (int i = 0; i < feat; ++i) {
          row[i] = delta[j] * f.hidden[i];
          dfeat[i] += w2[i] * delta[j];
        }
        if (off.b2 >= 0) grad[off.b2 + j] = delta[j];
      }
      for (int i = 0; i < feat; ++i) {
        dfeat[i] *= 1.0 - f.hidden[i] * f.hidden[i];
      }
      for (int ch = 0; ch < chans; ++ch) {
        double* w = grad.data() + static_cast<std::ptrdiff_t>(ch) * k * k;
        double bacc = 0.0;
        for (int i = 0; i < out; ++i) {
          for (int j = 0; j < out; ++j) {
            const double d =
                dfeat[(static_cast<std::size_t>(ch) * out + i) * out + j];
            bacc += d;
            for (int u = 0; u < k; ++u) {
              for (int v = 0; v < k; ++v) {
                w[u * k + v] += d * x[(i + u) * side + (j + v)];
              }
            }
          }
        }
        if (off.b1 >= 0) grad[off.b1 + ch] = bacc;
      }
      break;
    }
  }
  check_finite(grad, "gradient", spec);
  return grad;
}

GradientVector param_gradient(const ModelSpec& spec,
                              const ParameterVector& params,
                              const DataSample& sample) {
  GradientVector g;
  g.model = spec;
  g.values = param_gradient_dense(spec, params, sample.x,
                                  dense_target(spec, sample.target));
  return g;
}

}  // namespace gradshield::nn
