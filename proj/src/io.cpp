#include "cflens/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cflens {

Json vec_to_json(const Vec& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vec vec_from_json(const Json& doc) {
  if (!doc.is_array()) throw ValidationError("expected a numeric array");
  Vec v(static_cast<Index>(doc.size()));
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_number()) throw ValidationError("expected a numeric array");
    v[static_cast<Index>(i)] = doc[i].get<double>();
  }
  return v;
}

Json net_to_json(const DenseNet& net) {
  Json layers = Json::array();
  for (const auto& layer : net.layers) {
    Json w = Json::array();
    for (Index r = 0; r < layer.weight.rows(); ++r)
      for (Index c = 0; c < layer.weight.cols(); ++c) w.push_back(layer.weight(r, c));
    layers.push_back({{"act", to_string(layer.act)},
                      {"rows", layer.weight.rows()},
                      {"cols", layer.weight.cols()},
                      {"w", std::move(w)},
                      {"b", vec_to_json(layer.bias)}});
  }
  return {{"format", kNetFormat}, {"seed", net.seed}, {"layers", std::move(layers)}};
}

DenseNet net_from_json(const Json& doc) {
  expect_format(doc, kNetFormat);
  try {
    DenseNet net;
    net.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& entry : doc.at("layers")) {
      Layer layer;
      layer.act = activation_from_string(entry.at("act").get<std::string>());
      const auto rows = entry.at("rows").get<Index>();
      const auto cols = entry.at("cols").get<Index>();
      const Vec flat = vec_from_json(entry.at("w"));
      if (rows < 1 || cols < 1 || flat.size() != rows * cols)
        throw ValidationError("layer weight array does not match rows x cols");
      layer.weight.resize(rows, cols);
      for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) layer.weight(r, c) = flat[r * cols + c];
      layer.bias = vec_from_json(entry.at("b"));
      net.layers.push_back(std::move(layer));
    }
    validate(net);
    return net;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed ") + kNetFormat + " document: " + e.what());
  }
}

void expect_format(const Json& doc, const std::string& expected) {
  if (!doc.is_object() || !doc.contains("format") || !doc["format"].is_string() ||
      doc["format"].get<std::string>() != expected)
    throw ValidationError("expected a '" + expected + "' document");
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
  write_text_file(path, doc.dump(1) + "\n");
}

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::pair<Index, Index> image_shape(Index n) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side == n) return {side, side};
  return {n, 1};
}

std::string to_pgm(const Vec& pixels, Index width, Index height) {
  if (pixels.size() != width * height) throw ValidationError("to_pgm: pixel count != width*height");
  std::ostringstream out;
  out << "P2\n" << width << ' ' << height << "\n255\n";
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      const double v = std::clamp(pixels[r * width + c], 0.0, 1.0);
      out << (c ? " " : "") << std::lround(v * 255.0);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace cflens
