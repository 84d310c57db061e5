#include "cflens/world.hpp"

#include <cmath>
#include <string>

#include "cflens/rng.hpp"

namespace cflens {

namespace {

constexpr std::uint64_t kDecoderSalt = 0xdec0de;

void check_attribute(const WorldSpec& world, Index attribute) {
  if (attribute < 0 || attribute >= world.m)
    throw ValidationError("attribute index " + std::to_string(attribute) + " out of range [0, " +
                          std::to_string(world.m) + ")");
}

void check_latents(const WorldSpec& world, const Mat& latents) {
  if (latents.rows() != world.d)
    throw ValidationError("latent has " + std::to_string(latents.rows()) + " entries, world d = " +
                          std::to_string(world.d));
}

}  // namespace

WorldSpec make_world(const WorldOptions& options) {
  if (options.d < 1 || options.m < 1 || options.n < 1 || options.hidden < 1)
    throw ValidationError("world dimensions must be positive");
  if (!(options.margin > 0.0)) throw ValidationError("margin must be > 0");
  if (options.orthonormal && options.m > options.d)
    throw ValidationError("orthonormal attribute planes need m <= d (got m = " +
                          std::to_string(options.m) + ", d = " + std::to_string(options.d) + ")");
  if (options.offsets.size() != 0 && options.offsets.size() != options.m)
    throw ValidationError("offsets must have length m");

  WorldSpec world;
  world.d = options.d;
  world.m = options.m;
  world.n = options.n;
  world.seed = options.seed;
  world.margin = options.margin;
  world.offsets = options.offsets.size() ? options.offsets : Vec::Zero(options.m);

  const CounterRng rng = CounterRng(options.seed).split(stream::kPlanes);
  world.planes.resize(options.m, options.d);
  for (Index i = 0; i < options.m; ++i) {
    const CounterRng row_rng = rng.split(static_cast<std::uint64_t>(i));
    for (Index j = 0; j < options.d; ++j) world.planes(i, j) = row_rng.normal(j);
  }
  // Modified Gram-Schmidt over rows.
  for (Index i = 0; i < options.m; ++i) {
    if (options.orthonormal)
      for (Index k = 0; k < i; ++k)
        world.planes.row(i) -= world.planes.row(i).dot(world.planes.row(k)) * world.planes.row(k);
    world.planes.row(i).normalize();
  }

  const Index dims[] = {options.d, options.hidden, options.n};
  const Activation acts[] = {Activation::kTanh, Activation::kSigmoid};
  world.decoder = make_dense_net<double>(dims, acts, CounterRng::mix(options.seed ^ kDecoderSalt));
  return world;
}

void validate(const WorldSpec& world) {
  if (world.d < 1 || world.m < 1 || world.n < 1) throw ValidationError("world dimensions must be positive");
  if (!(world.margin > 0.0)) throw ValidationError("world margin must be > 0");
  if (world.planes.rows() != world.m || world.planes.cols() != world.d || world.offsets.size() != world.m)
    throw ValidationError("attribute planes do not match (m, d)");
  for (Index i = 0; i < world.m; ++i)
    if (std::abs(world.planes.row(i).norm() - 1.0) > 1e-9)
      throw ValidationError("attribute plane " + std::to_string(i) + " is not unit norm");
  validate(world.decoder);
  if (world.decoder.in_dim() != world.d || world.decoder.out_dim() != world.n)
    throw ValidationError("decoder does not map d -> n");
  if (world.decoder.layers.back().act != Activation::kSigmoid)
    throw ValidationError("decoder must end in a sigmoid layer");
}

Vec sample_latent(const WorldSpec& world, std::uint64_t rng_seed, Index index) {
  const CounterRng rng =
      CounterRng(rng_seed).split(stream::kLatents).split(static_cast<std::uint64_t>(index));
  Vec z(world.d);
  for (Index j = 0; j < world.d; ++j) z[j] = rng.normal(j);
  return z;
}

Mat sample_latents(const WorldSpec& world, std::uint64_t rng_seed, Index count, Index first) {
  if (count < 1) throw ValidationError("sample_latents: count must be >= 1");
  Mat out(world.d, count);
  for (Index j = 0; j < count; ++j) out.col(j) = sample_latent(world, rng_seed, first + j);
  return out;
}

Mat attribute_margins(const WorldSpec& world, const Mat& latents) {
  check_latents(world, latents);
  Mat margins = world.planes * latents;
  margins.colwise() += world.offsets;
  return margins;
}

bool true_attribute(const WorldSpec& world, const Vec& z, Index attribute) {
  check_attribute(world, attribute);
  check_latents(world, z);
  return world.planes.row(attribute).dot(z) + world.offsets[attribute] > 0.0;
}

Mat true_attributes(const WorldSpec& world, const Mat& latents) {
  return (attribute_margins(world, latents).array() > 0.0).cast<double>().matrix();
}

Mat decode(const WorldSpec& world, const Mat& latents) {
  check_latents(world, latents);
  return evaluate(world.decoder, latents);
}

Vec decode(const WorldSpec& world, const Vec& z) {
  check_latents(world, z);
  return evaluate(world.decoder, z).col(0);
}

Mat decode_backward(const WorldSpec& world, const Mat& latents, const Mat& grad_pixels) {
  const ForwardPass pass = forward(world.decoder, latents);
  return backward(world.decoder, pass.tape, grad_pixels, Gradients::kInputOnly).input;
}

Vec oracle_counterfactual(const WorldSpec& world, const Vec& z, Index attribute, bool target) {
  check_attribute(world, attribute);
  check_latents(world, z);
  const double side = target ? 1.0 : -1.0;
  const auto w = world.planes.row(attribute).transpose();
  const double current = w.dot(z) + world.offsets[attribute];
  return z + (side * world.margin - current) * w;
}

Json world_to_json(const WorldSpec& world) {
  Json planes = Json::array();
  for (Index i = 0; i < world.m; ++i)
    planes.push_back({{"w", vec_to_json(world.planes.row(i).transpose())}, {"b", world.offsets[i]}});
  return {{"format", kWorldFormat}, {"d", world.d},         {"m", world.m},
          {"n", world.n},           {"seed", world.seed},   {"margin", world.margin},
          {"planes", std::move(planes)}, {"decoder", net_to_json(world.decoder)}};
}

WorldSpec world_from_json(const Json& doc) {
  expect_format(doc, kWorldFormat);
  try {
    WorldSpec world;
    world.d = doc.at("d").get<Index>();
    world.m = doc.at("m").get<Index>();
    world.n = doc.at("n").get<Index>();
    world.seed = doc.at("seed").get<std::uint64_t>();
    world.margin = doc.at("margin").get<double>();
    const auto& planes = doc.at("planes");
    if (!planes.is_array() || static_cast<Index>(planes.size()) != world.m)
      throw ValidationError("world: expected m planes");
    world.planes.resize(world.m, world.d);
    world.offsets.resize(world.m);
    for (Index i = 0; i < world.m; ++i) {
      const Vec w = vec_from_json(planes[static_cast<std::size_t>(i)].at("w"));
      if (w.size() != world.d) throw ValidationError("world: plane length != d");
      world.planes.row(i) = w.transpose();
      world.offsets[i] = planes[static_cast<std::size_t>(i)].at("b").get<double>();
    }
    world.decoder = net_from_json(doc.at("decoder"));
    validate(world);
    return world;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed ") + kWorldFormat + " document: " + e.what());
  }
}

}  // namespace cflens
