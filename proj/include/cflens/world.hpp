#pragma once

// Synthetic differentiable stand-in for a pretrained generator: Gaussian
// latents, a frozen seeded decoder, and ground-truth attributes given by
// half-spaces w_i . z + b_i > 0 in latent space.

#include <cstdint>

#include "cflens/io.hpp"
#include "cflens/numkit.hpp"

namespace cflens {

inline constexpr const char* kWorldFormat = "cflens-world-v1";

struct WorldOptions {
  Index d = 16;
  Index m = 4;
  Index n = 64;
  Index hidden = 32;
  std::uint64_t seed = 1;
  double margin = 0.5;
  Vec offsets;  // empty means all zero
  bool orthonormal = true;
};

struct WorldSpec {
  Index d = 0;
  Index m = 0;
  Index n = 0;
  std::uint64_t seed = 0;
  double margin = 0.5;
  Mat planes;   // [m x d], unit rows
  Vec offsets;  // [m]
  DenseNet decoder;

  bool operator==(const WorldSpec&) const = default;
};

WorldSpec make_world(const WorldOptions& options);

// Validates dimensions, unit planes, positive margin and decoder shape.
void validate(const WorldSpec& world);

// Latents i.i.d. N(0, 1); column j is a pure function of (rng_seed, first + j).
Mat sample_latents(const WorldSpec& world, std::uint64_t rng_seed, Index count, Index first = 0);
Vec sample_latent(const WorldSpec& world, std::uint64_t rng_seed, Index index);

// Signed distance w_i . z + b_i for every attribute and column.
Mat attribute_margins(const WorldSpec& world, const Mat& latents);
bool true_attribute(const WorldSpec& world, const Vec& z, Index attribute);
// 0/1 matrix [m x batch].
Mat true_attributes(const WorldSpec& world, const Mat& latents);

Mat decode(const WorldSpec& world, const Mat& latents);
Vec decode(const WorldSpec& world, const Vec& z);
// d(grad_pixels . decode(z)) / dz for each column.
Mat decode_backward(const WorldSpec& world, const Mat& latents, const Mat& grad_pixels);

// Minimal-norm move along w_i placing z at signed margin +mu (target 1) or -mu.
Vec oracle_counterfactual(const WorldSpec& world, const Vec& z, Index attribute, bool target);

Json world_to_json(const WorldSpec& world);
WorldSpec world_from_json(const Json& doc);

}  // namespace cflens
