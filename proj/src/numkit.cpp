#include "cflens/numkit.hpp"

#include <cmath>
#include <string>

namespace cflens {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kLinear:
      return "linear";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
  }
  return "linear";
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw ValidationError("unknown activation '" + name + "'");
}

namespace {

// Coordinates whose double-precision estimate disagrees by more than this are
// re-estimated in long double.
constexpr double kRefineAbove = 1e-6;

// Flat coordinate order: each layer's weights then bias, then the input.
template <typename S>
S& slot(BasicDenseNet<S>& net, VecT<S>& x, std::size_t index) {
  for (auto& layer : net.layers) {
    if (index < static_cast<std::size_t>(layer.weight.size())) return layer.weight.data()[index];
    index -= static_cast<std::size_t>(layer.weight.size());
    if (index < static_cast<std::size_t>(layer.bias.size())) return layer.bias[static_cast<Index>(index)];
    index -= static_cast<std::size_t>(layer.bias.size());
  }
  return x[static_cast<Index>(index)];
}

template <typename S, typename Value>
double central_difference(BasicDenseNet<S>& net, VecT<S>& x, std::size_t index, S eps, const Value& value) {
  S& target = slot(net, x, index);
  const S saved = target;
  target = saved + eps;
  const S up = value(net, x);
  target = saved - eps;
  const S down = value(net, x);
  target = saved;
  return static_cast<double>((up - down) / (2 * eps));
}

BasicDenseNet<long double> widen(const DenseNet& net) {
  BasicDenseNet<long double> wide;
  wide.seed = net.seed;
  for (const auto& layer : net.layers)
    wide.layers.push_back({layer.weight.cast<long double>(), layer.bias.cast<long double>(), layer.act});
  return wide;
}

}  // namespace

double finite_diff_check(const DenseNet& net, const Vec& x, const ScalarHead& head, double eps,
                         const BackwardFn& backward_fn) {
  const ForwardPass pass = forward(net, x);
  const Mat grad_out = head.gradient(pass.output.col(0));
  const GradientBundle analytic = backward_fn(net, pass.tape, grad_out);

  std::vector<double> exact;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    exact.insert(exact.end(), analytic.weight[k].data(), analytic.weight[k].data() + analytic.weight[k].size());
    exact.insert(exact.end(), analytic.bias[k].data(), analytic.bias[k].data() + analytic.bias[k].size());
  }
  for (Index i = 0; i < x.size(); ++i) exact.push_back(analytic.input(i, 0));

  DenseNet probe = net;
  Vec input = x;
  BasicDenseNet<long double> wide;
  ExtendedVec wide_input;
  if (head.extended) {
    wide = widen(net);
    wide_input = x.cast<long double>();
  }
  const auto value = [&](const DenseNet& n, const Vec& in) { return head.value(evaluate(n, in).col(0)); };
  const auto wide_value = [&](const BasicDenseNet<long double>& n, const ExtendedVec& in) {
    return head.extended(evaluate(n, in).col(0));
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    double err = relative_error(exact[i], central_difference(probe, input, i, eps, value));
    if (err > kRefineAbove && head.extended)
      err = relative_error(exact[i], central_difference<long double>(wide, wide_input, i, eps, wide_value));
    worst = std::max(worst, err);
  }
  return worst;
}

OptimizerState make_optimizer_state(const DenseNet& net, const OptimizerSettings& settings) {
  OptimizerState state;
  state.settings = settings;
  for (const auto& layer : net.layers) {
    state.first_w.push_back(Mat::Zero(layer.weight.rows(), layer.weight.cols()));
    state.second_w.push_back(Mat::Zero(layer.weight.rows(), layer.weight.cols()));
    state.first_b.push_back(Vec::Zero(layer.bias.size()));
    state.second_b.push_back(Vec::Zero(layer.bias.size()));
  }
  return state;
}

namespace {

template <typename Param>
void adam_update(Param& theta, const Param& grad, Param& first, Param& second,
                 const OptimizerSettings& s, double correction1, double correction2) {
  first = s.beta1 * first + (1.0 - s.beta1) * grad;
  second = s.beta2 * second + (1.0 - s.beta2) * grad.cwiseProduct(grad);
  theta.array() -= s.learning_rate * (first.array() / correction1) /
                   ((second.array() / correction2).sqrt() + s.epsilon);
}

}  // namespace

void optimizer_step(DenseNet& net, const GradientBundle& grads, OptimizerState& state) {
  const std::size_t depth = net.layers.size();
  if (grads.weight.size() != depth || grads.bias.size() != depth ||
      state.first_w.size() != depth || state.first_b.size() != depth)
    throw ValidationError("optimizer_step: gradient/state layer count differs from network");
  for (std::size_t k = 0; k < depth; ++k) {
    const auto& layer = net.layers[k];
    if (grads.weight[k].rows() != layer.weight.rows() ||
        grads.weight[k].cols() != layer.weight.cols() || grads.bias[k].size() != layer.bias.size() ||
        state.first_w[k].rows() != layer.weight.rows() ||
        state.first_w[k].cols() != layer.weight.cols())
      throw ValidationError("optimizer_step: shape mismatch at layer " + std::to_string(k));
  }
  if (const int bad = grads.first_nonfinite_layer(); bad >= 0)
    throw NumericError("optimizer_step refused: non-finite gradient in layer " +
                       std::to_string(bad));

  const OptimizerSettings& s = state.settings;
  ++state.step;
  if (s.algorithm == Algorithm::kSgd) {
    for (std::size_t k = 0; k < depth; ++k) {
      net.layers[k].weight -= s.learning_rate * grads.weight[k];
      net.layers[k].bias -= s.learning_rate * grads.bias[k];
    }
    return;
  }
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(s.beta1, t);
  const double correction2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t k = 0; k < depth; ++k) {
    adam_update(net.layers[k].weight, grads.weight[k], state.first_w[k], state.second_w[k], s,
                correction1, correction2);
    adam_update(net.layers[k].bias, grads.bias[k], state.first_b[k], state.second_b[k], s,
                correction1, correction2);
  }
}

BceResult bce_loss(const Vec& p, const Vec& target, const Vec& mask) {
  if (p.size() != target.size() || p.size() != mask.size())
    throw ValidationError("bce_loss: p, target and mask must have equal length");
  BceResult result;
  result.grad = Vec::Zero(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double q = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double t = target[i];
    result.loss += -mask[i] * (t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
    result.grad[i] = mask[i] * (-t / q + (1.0 - t) / (1.0 - q));
  }
  return result;
}

BceBatchResult bce_loss_batch(const Mat& p, const Mat& target, const Mat& mask) {
  if (p.rows() != target.rows() || p.cols() != target.cols() || p.rows() != mask.rows() ||
      p.cols() != mask.cols())
    throw ValidationError("bce_loss_batch: p, target and mask must have equal shapes");
  if (p.cols() == 0) throw ValidationError("bce_loss_batch: empty batch");
  BceBatchResult result;
  result.grad.resize(p.rows(), p.cols());
  const double scale = 1.0 / static_cast<double>(p.cols());
  for (Index j = 0; j < p.cols(); ++j) {
    const BceResult column = bce_loss(p.col(j), target.col(j), mask.col(j));
    result.loss += column.loss;
    result.grad.col(j) = scale * column.grad;
  }
  result.loss *= scale;
  return result;
}

BceBatchResult bce_loss_logits_batch(const Mat& logits, const Mat& target, const Mat& mask) {
  if (logits.rows() != target.rows() || logits.cols() != target.cols() ||
      logits.rows() != mask.rows() || logits.cols() != mask.cols())
    throw ValidationError("bce_loss_logits_batch: logits, target and mask must have equal shapes");
  if (logits.cols() == 0) throw ValidationError("bce_loss_logits_batch: empty batch");
  static const double bound = std::log((1.0 - kProbabilityClamp) / kProbabilityClamp);
  // log(1 + exp(x)) without overflow.
  const auto softplus = [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  const double scale = 1.0 / static_cast<double>(logits.cols());
  BceBatchResult result;
  result.grad = Mat::Zero(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j)
    for (Index i = 0; i < logits.rows(); ++i) {
      const double w = mask(i, j);
      if (w == 0.0) continue;
      const double a = std::clamp(logits(i, j), -bound, bound);
      const double t = target(i, j);
      result.loss += w * (t * softplus(-a) + (1.0 - t) * softplus(a));
      if (std::abs(logits(i, j)) < bound) {
        const double p = a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
        result.grad(i, j) = scale * w * (p - t);
      }
    }
  result.loss *= scale;
  return result;
}

}  // namespace cflens
