#pragma once

// Binary grid container ("D3FX") and OFF mesh I/O.
//
// D3FX layout, all little-endian:
//   bytes 0..3   magic "D3FX"
//   bytes 4..7   u32 width
//   bytes 8..11  u32 height
//   bytes 12..15 u32 flags: number of planes (0 is read as 1)
//   then planes * height * width f32 values, plane-major, each plane
//   row-major. NaN marks an invalid sample.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "guidesynth/geometry.hpp"

namespace guidesynth {

struct PlanarGrid {
  int width = 0;
  int height = 0;
  int planes = 1;
  std::vector<float> values;

  float at(int plane, int x, int y) const {
    return values[(static_cast<std::size_t>(plane) * static_cast<std::size_t>(height) +
                   static_cast<std::size_t>(y)) *
                      static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
};

std::vector<std::uint8_t> encode_d3fx(const PlanarGrid& grid);
PlanarGrid decode_d3fx(const std::vector<std::uint8_t>& bytes);

void write_d3fx(const std::filesystem::path& path, const PlanarGrid& grid);
PlanarGrid read_d3fx(const std::filesystem::path& path);

PlanarGrid depth_to_grid(const DepthMap& depth);
// Throws Error(kParseError) when the grid has more than one plane.
DepthMap grid_to_depth(const PlanarGrid& grid);

void write_depth_map(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_depth_map(const std::filesystem::path& path);

using Rgb8 = std::array<std::uint8_t, 3>;

// A mesh with an optional flat color per triangle.
struct ColoredMesh {
  TriMesh mesh;
  std::vector<Rgb8> face_colors;  // empty or one per triangle
};

// OFF text: optional "OFF" line, "nv nf ne" counts, nv vertex lines, nf face
// lines "3 a b c [r g b]". Only triangles are accepted.
ColoredMesh parse_off(const std::string& text);
std::string format_off(const ColoredMesh& mesh);
ColoredMesh read_off(const std::filesystem::path& path);
void write_off(const std::filesystem::path& path, const ColoredMesh& mesh);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace guidesynth
