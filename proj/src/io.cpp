#include "pano4d/io.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

// libpng reports errors through longjmp; locals set before setjmp are not
// modified afterwards.
#pragma GCC diagnostic ignored "-Wclobbered"

namespace pano4d::io {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "raw grid IO assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'E', 'R', 'P', 'F'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError(path.string(), std::string("cannot open (") + std::strerror(errno) + ")");
  return f;
}

double get_number(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key) || !j[key].is_number()) throw IoError(path.string(), std::string("missing number '") + key + "'");
  return j[key].get<double>();
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

void write_raw_grid(const fs::path& path, const std::vector<Image>& frames) {
  if (frames.empty()) throw ArgumentError("raw grid needs at least one frame");
  const Image& first = frames.front();
  for (const auto& f : frames) {
    if (!f.same_shape(first)) throw ArgumentError("raw grid frames must share a shape");
  }
  auto file = open_file(path, "wb");
  const std::array<std::uint32_t, 4> header = {static_cast<std::uint32_t>(first.height()),
                                               static_cast<std::uint32_t>(first.width()),
                                               static_cast<std::uint32_t>(first.channels()),
                                               static_cast<std::uint32_t>(frames.size())};
  bool ok = std::fwrite(kMagic.data(), 1, 4, file.get()) == 4;
  ok = ok && std::fwrite(header.data(), sizeof(std::uint32_t), 4, file.get()) == 4;
  std::vector<float> buf;
  for (const auto& f : frames) {
    buf.assign(f.values().begin(), f.values().end());
    ok = ok && std::fwrite(buf.data(), sizeof(float), buf.size(), file.get()) == buf.size();
  }
  if (!ok) throw IoError(path.string(), "write failed");
}

std::vector<Image> read_raw_grid(const fs::path& path) {
  auto file = open_file(path, "rb");
  std::array<char, 4> magic{};
  std::array<std::uint32_t, 4> header{};
  if (std::fread(magic.data(), 1, 4, file.get()) != 4 || magic != kMagic) {
    throw IoError(path.string(), "not a raw float grid (bad magic)");
  }
  if (std::fread(header.data(), sizeof(std::uint32_t), 4, file.get()) != 4) {
    throw IoError(path.string(), "truncated header");
  }
  const auto [h, w, c, t] = header;
  if (h == 0 || w == 0 || c == 0 || t == 0 || std::uint64_t{h} * w * c * t > (std::uint64_t{1} << 32)) {
    throw IoError(path.string(), "invalid grid dimensions");
  }
  std::vector<Image> frames;
  std::vector<float> buf(static_cast<std::size_t>(h) * w * c);
  for (std::uint32_t i = 0; i < t; ++i) {
    if (std::fread(buf.data(), sizeof(float), buf.size(), file.get()) != buf.size()) {
      throw IoError(path.string(), "truncated data (frame " + std::to_string(i) + ")");
    }
    Image im(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    std::copy(buf.begin(), buf.end(), im.values().begin());
    frames.push_back(std::move(im));
  }
  if (std::fgetc(file.get()) != EOF) throw IoError(path.string(), "trailing bytes after grid data");
  return frames;
}

void write_png(const fs::path& path, const Image& image) {
  if (image.channels() != 1 && image.channels() != 3) throw ArgumentError("PNG export supports 1 or 3 channels");
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string(), "libpng initialization failed");
  }
  std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * image.channels());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string(), "PNG encoding failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8,
               image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width() * image.channels(); ++c) {
      const double v = std::clamp(image.values()[static_cast<std::size_t>(r) * row.size() + c], 0.0, 1.0);
      row[c] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const fs::path& path) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string(), "libpng initialization failed");
  }
  Image out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string(), "PNG decoding failed");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = png_get_channels(png, info);
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string(), "unsupported PNG channel layout");
  }
  out = Image(h, w, ch);
  std::vector<png_byte> row(static_cast<std::size_t>(w) * ch);
  for (int r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < w * ch; ++c) out.values()[static_cast<std::size_t>(r) * row.size() + c] = row[c] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

std::vector<Image> read_frames(const fs::path& path) {
  if (path.extension() == ".png") return {read_png(path)};
  return read_raw_grid(path);
}

void write_cameras(const fs::path& path, const std::vector<PerspectiveCamera>& cams) {
  json arr = json::array();
  for (const auto& c : cams) {
    arr.push_back({{"azimuth_deg", rad_to_deg(c.azimuth)},
                   {"elevation_deg", rad_to_deg(c.elevation)},
                   {"fov_deg", rad_to_deg(c.fov)},
                   {"h", c.height},
                   {"w", c.width}});
  }
  write_text(path, arr.dump(2) + "\n");
}

std::vector<PerspectiveCamera> read_cameras(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.is_array()) throw IoError(path.string(), "camera sidecar must be a JSON array");
  std::vector<PerspectiveCamera> cams;
  for (const auto& e : j) {
    PerspectiveCamera c;
    c.azimuth = deg_to_rad(get_number(e, "azimuth_deg", path));
    c.elevation = deg_to_rad(get_number(e, "elevation_deg", path));
    c.fov = deg_to_rad(get_number(e, "fov_deg", path));
    c.height = static_cast<int>(get_number(e, "h", path));
    c.width = static_cast<int>(get_number(e, "w", path));
    try {
      c.validate();
    } catch (const ArgumentError& err) {
      throw IoError(path.string(), err.what());
    }
    cams.push_back(c);
  }
  return cams;
}

void write_poses(const fs::path& path, const std::vector<SceneCamera>& poses) {
  json arr = json::array();
  for (const auto& p : poses) {
    json r = json::array();
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) r.push_back(p.rotation(i, k));
    arr.push_back({{"R", r},
                   {"t", {p.position.x(), p.position.y(), p.position.z()}},
                   {"fov_deg", rad_to_deg(p.fov)},
                   {"h", p.height},
                   {"w", p.width}});
  }
  write_text(path, arr.dump(2) + "\n");
}

std::vector<SceneCamera> read_poses(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.is_array()) throw IoError(path.string(), "pose file must be a JSON array");
  std::vector<SceneCamera> poses;
  for (const auto& e : j) {
    if (!e.contains("R") || !e["R"].is_array() || e["R"].size() != 9 || !e.contains("t") || !e["t"].is_array() ||
        e["t"].size() != 3) {
      throw IoError(path.string(), "pose entries need R (9 floats) and t (3 floats)");
    }
    SceneCamera c;
    for (int i = 0; i < 9; ++i) c.rotation(i / 3, i % 3) = e["R"][i].get<double>();
    for (int i = 0; i < 3; ++i) c.position[i] = e["t"][i].get<double>();
    c.fov = deg_to_rad(get_number(e, "fov_deg", path));
    c.height = static_cast<int>(get_number(e, "h", path));
    c.width = static_cast<int>(get_number(e, "w", path));
    try {
      c.validate();
    } catch (const ArgumentError& err) {
      throw IoError(path.string(), err.what());
    }
    poses.push_back(c);
  }
  return poses;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pano4d::io
