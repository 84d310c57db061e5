#pragma once

// Dense networks with exact reverse-mode gradients. Batches are stored
// column-wise: a matrix of shape [features x batch].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cflens/rng.hpp"
#include "cflens/types.hpp"

namespace cflens {

enum class Activation { kLinear, kSigmoid, kTanh, kRelu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

template <typename Scalar>
struct BasicLayer {
  MatT<Scalar> weight;  // [out x in]
  VecT<Scalar> bias;    // [out]
  Activation act = Activation::kLinear;

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }

  bool operator==(const BasicLayer& other) const {
    return act == other.act && weight.rows() == other.weight.rows() &&
           weight.cols() == other.weight.cols() && bias.size() == other.bias.size() &&
           weight == other.weight && bias == other.bias;
  }
};

template <typename Scalar>
struct BasicDenseNet {
  std::vector<BasicLayer<Scalar>> layers;
  std::uint64_t seed = 0;

  Index in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  Index out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  Index parameter_count() const {
    Index total = 0;
    for (const auto& layer : layers) total += layer.weight.size() + layer.bias.size();
    return total;
  }

  bool operator==(const BasicDenseNet&) const = default;
};

using Layer = BasicLayer<double>;
using DenseNet = BasicDenseNet<double>;

template <typename Scalar>
void validate(const BasicDenseNet<Scalar>& net) {
  if (net.layers.empty()) throw ValidationError("network has no layers");
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& layer = net.layers[k];
    if (layer.bias.size() != layer.out_dim())
      throw ValidationError("layer " + std::to_string(k) + ": bias length does not match rows");
    if (k + 1 < net.layers.size() && layer.out_dim() != net.layers[k + 1].in_dim())
      throw ValidationError("layer " + std::to_string(k) + " output does not chain into layer " +
                            std::to_string(k + 1));
  }
}

// Glorot-uniform weights, zero biases. Each layer draws from its own split
// of the seed so adding layers never perturbs earlier ones.
template <typename Scalar = double>
BasicDenseNet<Scalar> make_dense_net(std::span<const Index> dims, std::span<const Activation> acts,
                                     std::uint64_t seed) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1)
    throw ValidationError("make_dense_net: need dims.size() - 1 activations");
  BasicDenseNet<Scalar> net;
  net.seed = seed;
  const CounterRng root = CounterRng(seed).split(stream::kInit);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const Index in = dims[k];
    const Index out = dims[k + 1];
    if (in < 1 || out < 1) throw ValidationError("make_dense_net: dimensions must be positive");
    const CounterRng rng = root.split(k);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    BasicLayer<Scalar> layer;
    layer.weight.resize(out, in);
    for (Index r = 0; r < out; ++r)
      for (Index c = 0; c < in; ++c)
        layer.weight(r, c) =
            static_cast<Scalar>(limit * (2.0 * rng.uniform(static_cast<std::uint64_t>(r * in + c)) - 1.0));
    layer.bias = VecT<Scalar>::Zero(out);
    layer.act = acts[k];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

template <typename Scalar = double>
BasicDenseNet<Scalar> make_dense_net(std::initializer_list<Index> dims,
                                     std::initializer_list<Activation> acts, std::uint64_t seed) {
  return make_dense_net<Scalar>(std::span<const Index>(dims.begin(), dims.size()),
                                std::span<const Activation>(acts.begin(), acts.size()), seed);
}

namespace detail {

template <typename Derived>
auto apply_activation(Activation act, const Eigen::MatrixBase<Derived>& pre) {
  using Scalar = typename Derived::Scalar;
  MatT<Scalar> out(pre.rows(), pre.cols());
  switch (act) {
    case Activation::kLinear:
      out = pre;
      break;
    case Activation::kSigmoid:
      out = pre.unaryExpr([](Scalar v) {
        // Split by sign so exp never overflows.
        if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (Scalar(1) + e);
      });
      break;
    case Activation::kTanh:
      out = pre.array().tanh().matrix();
      break;
    case Activation::kRelu:
      out = pre.cwiseMax(Scalar(0));
      break;
  }
  return out;
}

// d(post)/d(pre), elementwise.
template <typename Scalar>
MatT<Scalar> activation_slope(Activation act, const MatT<Scalar>& pre, const MatT<Scalar>& post) {
  switch (act) {
    case Activation::kLinear:
      return MatT<Scalar>::Ones(pre.rows(), pre.cols());
    case Activation::kSigmoid:
      return (post.array() * (Scalar(1) - post.array())).matrix();
    case Activation::kTanh:
      return (Scalar(1) - post.array().square()).matrix();
    case Activation::kRelu:
      return (pre.array() > Scalar(0)).template cast<Scalar>().matrix();
  }
  return MatT<Scalar>::Zero(pre.rows(), pre.cols());
}

}  // namespace detail

// Per-layer record of a forward pass; inputs[k] feeds layer k.
template <typename Scalar>
struct BasicTape {
  std::vector<MatT<Scalar>> inputs;
  std::vector<MatT<Scalar>> pre;
  std::vector<MatT<Scalar>> post;

  Index batch() const { return inputs.empty() ? 0 : inputs.front().cols(); }
};

template <typename Scalar>
struct BasicForwardPass {
  MatT<Scalar> output;
  BasicTape<Scalar> tape;
};

using Tape = BasicTape<double>;
using ForwardPass = BasicForwardPass<double>;

template <typename Scalar, typename Derived>
void check_input(const BasicDenseNet<Scalar>& net, const Eigen::MatrixBase<Derived>& x) {
  if (net.layers.empty()) throw ValidationError("network has no layers");
  if (x.rows() != net.in_dim())
    throw ValidationError("input has " + std::to_string(x.rows()) + " rows, network expects " +
                          std::to_string(net.in_dim()));
  if (!x.allFinite()) throw ValidationError("input contains non-finite values");
}

template <typename Scalar, typename Derived>
BasicForwardPass<Scalar> forward(const BasicDenseNet<Scalar>& net,
                                 const Eigen::MatrixBase<Derived>& x) {
  check_input(net, x);
  BasicForwardPass<Scalar> pass;
  MatT<Scalar> current = x;
  for (const auto& layer : net.layers) {
    MatT<Scalar> pre = layer.weight * current;
    pre.colwise() += layer.bias;
    MatT<Scalar> post = detail::apply_activation(layer.act, pre);
    pass.tape.inputs.push_back(std::move(current));
    pass.tape.pre.push_back(std::move(pre));
    current = post;
    pass.tape.post.push_back(std::move(post));
  }
  pass.output = std::move(current);
  return pass;
}

// Forward without recording a tape.
template <typename Scalar, typename Derived>
MatT<Scalar> evaluate(const BasicDenseNet<Scalar>& net, const Eigen::MatrixBase<Derived>& x) {
  check_input(net, x);
  MatT<Scalar> current = x;
  for (const auto& layer : net.layers) {
    MatT<Scalar> pre = layer.weight * current;
    pre.colwise() += layer.bias;
    current = detail::apply_activation(layer.act, pre);
  }
  return current;
}

template <typename Scalar>
struct BasicGradientBundle {
  std::vector<MatT<Scalar>> weight;
  std::vector<VecT<Scalar>> bias;
  MatT<Scalar> input;  // [in x batch]

  static BasicGradientBundle zeros_like(const BasicDenseNet<Scalar>& net) {
    BasicGradientBundle g;
    for (const auto& layer : net.layers) {
      g.weight.push_back(MatT<Scalar>::Zero(layer.weight.rows(), layer.weight.cols()));
      g.bias.push_back(VecT<Scalar>::Zero(layer.bias.size()));
    }
    return g;
  }

  // Index of the first layer holding a non-finite entry, or -1.
  int first_nonfinite_layer() const {
    for (std::size_t k = 0; k < weight.size(); ++k)
      if (!weight[k].allFinite() || !bias[k].allFinite()) return static_cast<int>(k);
    return -1;
  }
};

using GradientBundle = BasicGradientBundle<double>;

enum class Gradients { kAll, kInputOnly };
// kLogits: grad_out is taken w.r.t. the last layer's pre-activation.
enum class Seed { kOutput, kLogits };

// Reverse pass for the scalar sum over the batch of grad_out . output.
template <typename Scalar, typename Derived>
BasicGradientBundle<Scalar> backward(const BasicDenseNet<Scalar>& net,
                                     const BasicTape<Scalar>& tape,
                                     const Eigen::MatrixBase<Derived>& grad_out,
                                     Gradients which = Gradients::kAll, Seed seed = Seed::kOutput) {
  const std::size_t depth = net.layers.size();
  if (tape.inputs.size() != depth || tape.pre.size() != depth || tape.post.size() != depth)
    throw ValidationError("stale tape: layer count differs from network");
  for (std::size_t k = 0; k < depth; ++k) {
    const auto& layer = net.layers[k];
    if (tape.inputs[k].rows() != layer.in_dim() || tape.pre[k].rows() != layer.out_dim() ||
        tape.inputs[k].cols() != tape.batch())
      throw ValidationError("stale tape: shapes differ from network at layer " + std::to_string(k));
  }
  if (grad_out.rows() != net.out_dim() || grad_out.cols() != tape.batch())
    throw ValidationError("grad_out shape does not match network output");

  BasicGradientBundle<Scalar> grads;
  if (which == Gradients::kAll) {
    grads.weight.resize(depth);
    grads.bias.resize(depth);
  }
  MatT<Scalar> delta = grad_out;
  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = net.layers[k];
    if (k + 1 < depth || seed == Seed::kOutput)
      delta.array() *= detail::activation_slope(layer.act, tape.pre[k], tape.post[k]).array();
    if (which == Gradients::kAll) {
      grads.weight[k].noalias() = delta * tape.inputs[k].transpose();
      grads.bias[k] = delta.rowwise().sum();
    }
    delta = layer.weight.transpose() * delta;
  }
  grads.input = std::move(delta);
  return grads;
}

using ExtendedVec = VecT<long double>;

// Scalar reduction of a network output, with its gradient. `extended`, when
// set, evaluates the same reduction in long double.
template <typename Scalar>
struct BasicScalarHead {
  std::function<Scalar(const VecT<Scalar>&)> value;
  std::function<VecT<Scalar>(const VecT<Scalar>&)> gradient;
  std::function<long double(const ExtendedVec&)> extended;
};

using ScalarHead = BasicScalarHead<double>;

inline ScalarHead sum_head() {
  return {[](const Vec& y) { return y.sum(); }, [](const Vec& y) { return Vec::Ones(y.size()); },
          [](const ExtendedVec& y) { return y.sum(); }};
}

// Fixed-weight projection head: value = weights . y.
inline ScalarHead projection_head(Vec weights) {
  const ExtendedVec wide = weights.cast<long double>();
  return {[weights](const Vec& y) { return weights.dot(y); },
          [weights](const Vec&) { return weights; },
          [wide](const ExtendedVec& y) { return wide.dot(y); }};
}

using BackwardFn = std::function<GradientBundle(const DenseNet&, const Tape&, const Mat&)>;

inline GradientBundle default_backward(const DenseNet& net, const Tape& tape, const Mat& grad_out) {
  return backward(net, tape, grad_out);
}

// Largest relative disagreement between the analytic gradient and central
// differences, over every parameter and input coordinate. When the head
// provides `extended`, coordinates that disagree in double are re-differenced
// in long double, which resolves gradients below the double rounding floor.
double finite_diff_check(const DenseNet& net, const Vec& x, const ScalarHead& head, double eps,
                         const BackwardFn& backward_fn = default_backward);

// Relative error used by every gradient check in the project.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

enum class Algorithm { kSgd, kAdam };

struct OptimizerSettings {
  Algorithm algorithm = Algorithm::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerSettings settings;
  std::vector<Mat> first_w, second_w;
  std::vector<Vec> first_b, second_b;
  std::int64_t step = 0;
};

OptimizerState make_optimizer_state(const DenseNet& net, const OptimizerSettings& settings = {});

// Applies one update in place. Refuses (NumericError naming the layer) when
// any gradient entry is non-finite; parameters are untouched in that case.
void optimizer_step(DenseNet& net, const GradientBundle& grads, OptimizerState& state);

struct BceResult {
  double loss = 0.0;
  Vec grad;  // d loss / d p
};

inline constexpr double kProbabilityClamp = 1e-7;

// Masked binary cross-entropy summed over entries. Masked entries contribute
// exactly zero loss and zero gradient.
BceResult bce_loss(const Vec& p, const Vec& target, const Vec& mask);

struct BceBatchResult {
  double loss = 0.0;  // mean over columns of the per-column masked sum
  Mat grad;           // d loss / d P, already divided by the batch size
};

BceBatchResult bce_loss_batch(const Mat& p, const Mat& target, const Mat& mask);
// Same loss from sigmoid logits; stays accurate when p is within 1e-8 of 0 or 1.
// The clamp becomes a bound on |logit|, outside which the gradient is zero.
BceBatchResult bce_loss_logits_batch(const Mat& logits, const Mat& target, const Mat& mask);

}  // namespace cflens
