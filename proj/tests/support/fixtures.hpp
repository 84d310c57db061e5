#pragma once

// Shared test fixtures: reference worlds with cached trained models, the
// full-chain gradient check, and brute-force oracles that never touch the
// engine code they validate.

#include <cstdint>
#include <vector>

#include "cflens/causal.hpp"
#include "cflens/classifiers.hpp"
#include "cflens/shifter.hpp"
#include "cflens/world.hpp"

namespace cflens::testing {

struct TrainedWorld {
  WorldSpec world;
  AttributeClassifier classifier;
  ShiftTrainResult shifter;
};

// d = 16, m = 4, n = 64, seed 1; b = 64, 3000 iterations, gamma = 0.1.
const TrainedWorld& reference_world();
// Same recipe with m = 6 for the linear baseline.
const TrainedWorld& baseline_world();

TrainedWorld train_world(Index d, Index m, Index n, std::uint64_t seed, double gamma,
                         Index iterations = 3000);

// Shift predictor whose head is randomized so the faithfulness term is
// differentiable everywhere the probes land.
ShiftPredictor perturbed_predictor(Index d, Index m, const std::vector<Index>& hidden,
                                   std::uint64_t seed, double head_scale = 0.3);

// Max relative error between shift_losses gradients and central differences
// of the total loss w.r.t. the predictor's parameters. With stride > 1 only
// every stride-th parameter is probed.
double chain_gradient_check(const ShiftPredictor& predictor, const Mat& latents, const Mat& codes,
                            const WorldSpec& world, const AttributeClassifier& classifier,
                            double gamma, double eps, Index stride = 1);

// Tiny world for closed-form checks: identity-like decoder is irrelevant, one
// attribute plane with the given direction and offset.
WorldSpec micro_world(double angle, double offset, double margin);

struct GridScores {
  double positive_mass = 0.0;
  double nec_plus = 0.0, nec_minus = 0.0, suf_plus = 0.0, suf_minus = 0.0;
};

// NEC/SUF for target = indicator of the single attribute under exact
// projections, by weighted enumeration of a cells x cells grid over
// [-span, span]^2 with the standard normal density.
GridScores grid_scores(double angle, double offset, double margin, int cells = 100, double span = 4.0);

}  // namespace cflens::testing
