#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "cflens/numkit.hpp"

namespace cflens {

using Json = nlohmann::json;

inline constexpr const char* kNetFormat = "cflens-net-v1";

Json net_to_json(const DenseNet& net);
DenseNet net_from_json(const Json& doc);

Json vec_to_json(const Vec& v);
Vec vec_from_json(const Json& doc);

// Reads a JSON document; missing or malformed files raise ValidationError.
Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& doc);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Requires doc["format"] == expected.
void expect_format(const Json& doc, const std::string& expected);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

// ASCII "P2" greymap, pixels in [0,1] quantized to 0..255, row-major.
std::string to_pgm(const Vec& pixels, Index width, Index height);
// Width/height for a single image: square when n is a perfect square, else 1 x n.
std::pair<Index, Index> image_shape(Index n);

}  // namespace cflens
