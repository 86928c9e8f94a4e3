#include "guidesynth/geometry_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "guidesynth/error.hpp"
#include "guidesynth/text_format.hpp"

namespace guidesynth {

namespace {

constexpr std::array<char, 4> kMagic = {'D', '3', 'F', 'X'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
  }
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(in[offset + static_cast<std::size_t>(i)]) << (8 * i);
  }
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_d3fx(const PlanarGrid& grid) {
  const std::size_t expected = static_cast<std::size_t>(grid.planes) * static_cast<std::size_t>(grid.width) *
                               static_cast<std::size_t>(grid.height);
  if (grid.width <= 0 || grid.height <= 0 || grid.planes <= 0 || grid.values.size() != expected) {
    throw Error(ErrorCode::kInvalidParams, "inconsistent grid dimensions");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + 4 * expected);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, static_cast<std::uint32_t>(grid.width));
  put_u32(out, static_cast<std::uint32_t>(grid.height));
  put_u32(out, static_cast<std::uint32_t>(grid.planes));
  for (float f : grid.values) {
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

PlanarGrid decode_d3fx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorCode::kParseError, "not a D3FX grid");
  }
  PlanarGrid grid;
  const std::uint32_t w = get_u32(bytes, 4);
  const std::uint32_t h = get_u32(bytes, 8);
  std::uint32_t planes = get_u32(bytes, 12);
  if (planes == 0) {
    planes = 1;
  }
  if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20) || planes > 4096) {
    throw Error(ErrorCode::kParseError, "implausible D3FX dimensions");
  }
  const std::size_t count = static_cast<std::size_t>(w) * h * planes;
  if (bytes.size() != 16 + 4 * count) {
    throw Error(ErrorCode::kParseError, "D3FX payload size does not match header");
  }
  grid.width = static_cast<int>(w);
  grid.height = static_cast<int>(h);
  grid.planes = static_cast<int>(planes);
  grid.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid.values[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
  }
  return grid;
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::kIoError, "short write to " + path.string());
  }
}

void write_d3fx(const std::filesystem::path& path, const PlanarGrid& grid) {
  write_binary_file(path, encode_d3fx(grid));
}

PlanarGrid read_d3fx(const std::filesystem::path& path) { return decode_d3fx(read_binary_file(path)); }

PlanarGrid depth_to_grid(const DepthMap& depth) {
  PlanarGrid grid{depth.width(), depth.height(), 1, {}};
  grid.values.reserve(static_cast<std::size_t>(depth.width()) * static_cast<std::size_t>(depth.height()));
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      grid.values.push_back(depth.valid(x, y) ? static_cast<float>(depth.depth(x, y))
                                              : std::numeric_limits<float>::quiet_NaN());
    }
  }
  return grid;
}

DepthMap grid_to_depth(const PlanarGrid& grid) {
  if (grid.planes != 1) {
    throw Error(ErrorCode::kParseError, "depth map must have exactly one plane");
  }
  DepthMap depth(grid.width, grid.height);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      depth.set(x, y, static_cast<double>(grid.at(0, x, y)));
    }
  }
  return depth;
}

void write_depth_map(const std::filesystem::path& path, const DepthMap& depth) {
  write_d3fx(path, depth_to_grid(depth));
}

DepthMap read_depth_map(const std::filesystem::path& path) { return grid_to_depth(read_d3fx(path)); }

ColoredMesh parse_off(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    if (!split_whitespace(line).empty()) {
      lines.push_back(line);
    }
  }
  std::size_t cursor = 0;
  if (cursor < lines.size() && split_whitespace(lines[cursor]).front() == "OFF") {
    ++cursor;
  }
  if (cursor >= lines.size()) {
    throw Error(ErrorCode::kParseError, "OFF: missing counts line");
  }
  const auto counts = split_whitespace(lines[cursor++]);
  if (counts.size() < 2) {
    throw Error(ErrorCode::kParseError, "OFF: counts line needs vertex and face counts");
  }
  const long long nv = parse_int(counts[0]);
  const long long nf = parse_int(counts[1]);
  if (nv < 0 || nf < 0 || cursor + static_cast<std::size_t>(nv + nf) > lines.size()) {
    throw Error(ErrorCode::kParseError, "OFF: truncated file");
  }
  ColoredMesh out;
  for (long long i = 0; i < nv; ++i) {
    const auto tok = split_whitespace(lines[cursor++]);
    if (tok.size() < 3) {
      throw Error(ErrorCode::kParseError, "OFF: vertex needs three coordinates");
    }
    out.mesh.vertices.emplace_back(parse_double(tok[0]), parse_double(tok[1]), parse_double(tok[2]));
  }
  bool any_color = false;
  for (long long i = 0; i < nf; ++i) {
    const auto tok = split_whitespace(lines[cursor++]);
    if (tok.empty() || parse_int(tok[0]) != 3 || tok.size() < 4) {
      throw Error(ErrorCode::kParseError, "OFF: only triangular faces are supported");
    }
    out.mesh.triangles.push_back({static_cast<int>(parse_int(tok[1])), static_cast<int>(parse_int(tok[2])),
                                  static_cast<int>(parse_int(tok[3]))});
    Rgb8 color = {200, 200, 200};
    if (tok.size() >= 7) {
      any_color = true;
      for (int c = 0; c < 3; ++c) {
        const long long v = parse_int(tok[4 + static_cast<std::size_t>(c)]);
        if (v < 0 || v > 255) {
          throw Error(ErrorCode::kParseError, "OFF: face color component out of range");
        }
        color[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(v);
      }
    }
    out.face_colors.push_back(color);
  }
  if (!any_color) {
    out.face_colors.clear();
  }
  try {
    out.mesh.validate();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInvalidParams) throw;
    throw Error(ErrorCode::kParseError, std::string("OFF: ") + e.what());
  }
  return out;
}

std::string format_off(const ColoredMesh& mesh) {
  std::string out = "OFF\n";
  out += std::to_string(mesh.mesh.vertices.size()) + " " + std::to_string(mesh.mesh.triangles.size()) + " 0\n";
  for (const auto& v : mesh.mesh.vertices) {
    out += format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z()) + "\n";
  }
  const bool colored = mesh.face_colors.size() == mesh.mesh.triangles.size();
  for (std::size_t i = 0; i < mesh.mesh.triangles.size(); ++i) {
    const auto& t = mesh.mesh.triangles[i];
    out += "3 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]);
    if (colored) {
      const auto& c = mesh.face_colors[i];
      out += " " + std::to_string(c[0]) + " " + std::to_string(c[1]) + " " + std::to_string(c[2]);
    }
    out += "\n";
  }
  return out;
}

ColoredMesh read_off(const std::filesystem::path& path) { return parse_off(read_text_file(path)); }

void write_off(const std::filesystem::path& path, const ColoredMesh& mesh) {
  write_text_file(path, format_off(mesh));
}

}  // namespace guidesynth
