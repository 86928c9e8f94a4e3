#include <cctype>
#include <cmath>
#include <limits>
#include <string>

#include "guidesynth/dataset.hpp"
#include "guidesynth/error.hpp"

namespace guidesynth {

namespace {

constexpr const char* kTupleFormat = "guidesynth-tuple-1";

// Parses "P? <w> <h> 255\n" and returns the payload offset.
std::size_t parse_netpbm_header(const std::vector<std::uint8_t>& bytes, char kind, int& w, int& h) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    long long v = 0;
    bool any = false;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      any = true;
      if (v > (1 << 24)) break;
      ++pos;
    }
    if (!any) {
      throw Error(ErrorCode::kParseError, "malformed netpbm header");
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != static_cast<std::uint8_t>(kind)) {
    throw Error(ErrorCode::kParseError, std::string("expected a P") + kind + " netpbm file");
  }
  pos = 2;
  const long long width = read_int();
  const long long height = read_int();
  const long long maxval = read_int();
  if (width <= 0 || height <= 0 || width > (1 << 20) || height > (1 << 20) || maxval != 255) {
    throw Error(ErrorCode::kParseError, "unsupported netpbm dimensions or depth");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw Error(ErrorCode::kParseError, "malformed netpbm header");
  }
  ++pos;
  w = static_cast<int>(width);
  h = static_cast<int>(height);
  return pos;
}

std::vector<std::uint8_t> netpbm_header(char kind, int w, int h) {
  const std::string header = std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {header.begin(), header.end()};
}

}  // namespace

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  auto out = netpbm_header('6', img.width(), img.height());
  out.insert(out.end(), img.bytes().begin(), img.bytes().end());
  return out;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  int w = 0, h = 0;
  const std::size_t pos = parse_netpbm_header(bytes, '6', w, h);
  Image img(w, h);
  if (bytes.size() - pos != img.bytes().size()) {
    throw Error(ErrorCode::kParseError, "PPM payload size does not match header");
  }
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.bytes().begin());
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) { write_binary_file(path, encode_ppm(img)); }

Image read_ppm(const std::filesystem::path& path) { return decode_ppm(read_binary_file(path)); }

void write_mask_pgm(const std::filesystem::path& path, const InstanceMask& mask) {
  auto out = netpbm_header('5', mask.width, mask.height);
  for (std::uint8_t v : mask.values) {
    out.push_back(v ? 255 : 0);
  }
  write_binary_file(path, out);
}

InstanceMask read_mask_pgm(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  int w = 0, h = 0;
  const std::size_t pos = parse_netpbm_header(bytes, '5', w, h);
  InstanceMask mask(w, h, path.stem().string());
  if (bytes.size() - pos != mask.values.size()) {
    throw Error(ErrorCode::kParseError, "PGM payload size does not match header");
  }
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    mask.values[i] = bytes[pos + i] >= 128 ? 1 : 0;
  }
  return mask;
}

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  PlanarGrid grid{flow.width, flow.height, 2, {}};
  grid.values.reserve(2 * flow.u.size());
  for (double u : flow.u) grid.values.push_back(static_cast<float>(u));
  for (double v : flow.v) grid.values.push_back(static_cast<float>(v));
  write_d3fx(path, grid);
}

FlowField read_flow(const std::filesystem::path& path) {
  const PlanarGrid grid = read_d3fx(path);
  if (grid.planes != 2) {
    throw Error(ErrorCode::kParseError, "flow file must have two planes");
  }
  FlowField flow(grid.width, grid.height);
  const std::size_t n = flow.u.size();
  for (std::size_t i = 0; i < n; ++i) {
    flow.u[i] = grid.values[i];
    flow.v[i] = grid.values[n + i];
    if (!std::isfinite(flow.u[i]) || !std::isfinite(flow.v[i])) {
      throw Error(ErrorCode::kParseError, "flow contains non-finite values");
    }
  }
  return flow;
}

KeyValueDoc serialize_tuple(const GuidanceTuple& t, const std::filesystem::path& dir) {
  check_guidance_partition(t);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  }

  PlanarGrid mask{t.mask.width(), t.mask.height(), 1, {}};
  mask.values.reserve(t.mask.levels().size());
  for (GuideLevel l : t.mask.levels()) {
    mask.values.push_back(static_cast<float>(guide_value(l)));
  }
  write_ppm(dir / "source.ppm", t.source);
  write_ppm(dir / "guide.ppm", t.guide);
  write_ppm(dir / "target.ppm", t.target);
  write_d3fx(dir / "mask.d3fx", mask);

  const auto counts = t.mask.counts();
  KeyValueDoc doc;
  doc.set("format", kTupleFormat);
  doc.set("setting", std::string(to_string(t.setting)));
  doc.set("clip_id", t.provenance.clip_id);
  doc.set("src_frame", std::to_string(t.provenance.src_frame));
  doc.set("tgt_frame", std::to_string(t.provenance.tgt_frame));
  doc.set("drop_source_conditioning", t.drop_source_conditioning ? "1" : "0");
  doc.set("width", std::to_string(t.source.width()));
  doc.set("height", std::to_string(t.source.height()));
  doc.set("source", "source.ppm");
  doc.set("guide", "guide.ppm");
  doc.set("target", "target.ppm");
  doc.set("mask", "mask.d3fx");
  doc.set("mask_counts", std::to_string(counts[0]) + " " + std::to_string(counts[1]) + " " + std::to_string(counts[2]));
  doc.save(dir / "manifest.txt");
  return doc;
}

GuidanceTuple load_tuple(const std::filesystem::path& dir) {
  KeyValueDoc doc;
  try {
    doc = KeyValueDoc::load(dir / "manifest.txt");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIoError) {
      throw;
    }
    throw Error(ErrorCode::kCorruptManifest, e.what());
  }
  auto require = [&](std::string_view key) -> const std::string& {
    if (!doc.contains(key)) {
      throw Error(ErrorCode::kCorruptManifest, "manifest lacks '" + std::string(key) + "'");
    }
    return doc.require(key);
  };
  auto file = [&](std::string_view key) {
    const std::filesystem::path p = dir / require(key);
    if (!std::filesystem::is_regular_file(p)) {
      throw Error(ErrorCode::kCorruptManifest, "manifest lists missing file " + p.string());
    }
    return p;
  };
  if (require("format") != kTupleFormat) {
    throw Error(ErrorCode::kCorruptManifest, "unknown tuple format '" + require("format") + "'");
  }

  GuidanceTuple t;
  try {
    t.setting = parse_training_setting(require("setting"));
    t.provenance.clip_id = require("clip_id");
    t.provenance.src_frame = static_cast<int>(parse_int(require("src_frame")));
    t.provenance.tgt_frame = static_cast<int>(parse_int(require("tgt_frame")));
    t.drop_source_conditioning = parse_int(require("drop_source_conditioning")) != 0;
    t.source = read_ppm(file("source"));
    t.guide = read_ppm(file("guide"));
    t.target = read_ppm(file("target"));
    const PlanarGrid mask = read_d3fx(file("mask"));
    if (mask.planes != 1) {
      throw Error(ErrorCode::kCorruptManifest, "mask must have one plane");
    }
    t.mask = GuidanceMask(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
      for (int x = 0; x < mask.width; ++x) {
        const float v = mask.at(0, x, y);
        if (v == 0.0f) {
          t.mask.set(x, y, GuideLevel::kHole);
        } else if (v == 0.5f) {
          t.mask.set(x, y, GuideLevel::kRendered);
        } else if (v == 1.0f) {
          t.mask.set(x, y, GuideLevel::kKeep);
        } else {
          throw Error(ErrorCode::kCorruptManifest, "mask holds a value outside {0, 0.5, 1}");
        }
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParseError) {
      throw Error(ErrorCode::kCorruptManifest, e.what());
    }
    throw;
  }
  try {
    check_guidance_partition(t);
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptManifest, e.what());
  }
  return t;
}

}  // namespace guidesynth
