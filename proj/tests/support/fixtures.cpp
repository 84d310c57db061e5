#include "support/fixtures.hpp"

#include <cmath>
#include <memory>
#include <numbers>

#include "cflens/rng.hpp"

namespace cflens::testing {

TrainedWorld train_world(Index d, Index m, Index n, std::uint64_t seed, double gamma, Index iterations) {
  WorldOptions options;
  options.d = d;
  options.m = m;
  options.n = n;
  options.seed = seed;
  TrainedWorld out;
  out.world = make_world(options);
  out.classifier = train_attribute_classifier(out.world, 8192, 2000, 40, seed);
  ShiftTrainConfig config;
  config.gamma = gamma;
  config.iterations = iterations;
  config.seed = seed;
  out.shifter = train_shift_predictor(config, out.world, out.classifier);
  return out;
}

const TrainedWorld& reference_world() {
  static const TrainedWorld world = train_world(16, 4, 64, 1, 0.1);
  return world;
}

const TrainedWorld& baseline_world() {
  static const TrainedWorld world = train_world(16, 6, 64, 1, 0.1);
  return world;
}

ShiftPredictor perturbed_predictor(Index d, Index m, const std::vector<Index>& hidden,
                                   std::uint64_t seed, double head_scale) {
  ShiftPredictor predictor = make_shift_predictor(d, m, hidden, seed);
  const CounterRng rng(seed ^ 0x5eed);
  auto& head = predictor.net.layers.back();
  for (Index i = 0; i < head.weight.size(); ++i)
    head.weight.data()[i] = head_scale * rng.normal(static_cast<std::uint64_t>(i));
  for (Index i = 0; i < head.bias.size(); ++i)
    head.bias[i] = head_scale * rng.normal(static_cast<std::uint64_t>(head.weight.size() + i));
  return predictor;
}

double chain_gradient_check(const ShiftPredictor& predictor, const Mat& latents, const Mat& codes,
                            const WorldSpec& world, const AttributeClassifier& classifier,
                            double gamma, double eps, Index stride) {
  const ShiftLosses analytic = shift_losses(predictor, latents, codes, world, classifier, gamma);
  ShiftPredictor probe = predictor;
  auto total = [&] { return shift_losses(probe, latents, codes, world, classifier, gamma).total; };
  double worst = 0.0;
  Index counter = 0;
  auto visit = [&](double& param, double grad) {
    if (counter++ % stride != 0) return;
    const double saved = param;
    param = saved + eps;
    const double up = total();
    param = saved - eps;
    const double down = total();
    param = saved;
    worst = std::max(worst, relative_error(grad, (up - down) / (2 * eps)));
  };
  for (std::size_t k = 0; k < probe.net.layers.size(); ++k) {
    auto& layer = probe.net.layers[k];
    for (Index i = 0; i < layer.weight.size(); ++i)
      visit(layer.weight.data()[i], analytic.grads.weight[k].data()[i]);
    for (Index i = 0; i < layer.bias.size(); ++i) visit(layer.bias[i], analytic.grads.bias[k][i]);
  }
  return worst;
}

WorldSpec micro_world(double angle, double offset, double margin) {
  WorldOptions options;
  options.d = 2;
  options.m = 1;
  options.n = 4;
  options.hidden = 4;
  options.seed = 3;
  options.margin = margin;
  WorldSpec world = make_world(options);
  world.planes(0, 0) = std::cos(angle);
  world.planes(0, 1) = std::sin(angle);
  world.offsets[0] = offset;
  return world;
}

GridScores grid_scores(double angle, double offset, double margin, int cells, double span) {
  const double w0 = std::cos(angle);
  const double w1 = std::sin(angle);
  const double h = 2.0 * span / cells;
  double total = 0.0, pos = 0.0, neg = 0.0;
  double nec_plus = 0.0, nec_minus = 0.0, suf_plus = 0.0, suf_minus = 0.0;
  for (int a = 0; a < cells; ++a)
    for (int b = 0; b < cells; ++b) {
      const double x = -span + (a + 0.5) * h;
      const double y = -span + (b + 0.5) * h;
      const double weight = std::exp(-0.5 * (x * x + y * y));
      const double s = w0 * x + w1 * y + offset;
      // Projection to signed margin +/- margin along the unit normal.
      auto moved_positive = [&](double side) {
        const double shift = side * margin - s;
        const double nx = x + shift * w0;
        const double ny = y + shift * w1;
        return w0 * nx + w1 * ny + offset > 0.0;
      };
      total += weight;
      if (s > 0.0) {
        pos += weight;
        nec_plus += weight * !moved_positive(+1.0);
        nec_minus += weight * !moved_positive(-1.0);
      } else {
        neg += weight;
        suf_plus += weight * moved_positive(+1.0);
        suf_minus += weight * moved_positive(-1.0);
      }
    }
  return {pos / total, nec_plus / pos, nec_minus / pos, suf_plus / neg, suf_minus / neg};
}

}  // namespace cflens::testing
