#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "bpdo/data_io.hpp"
#include "bpdo/error.hpp"

namespace bpdo {

namespace {

constexpr char kMagic[4] = {'B', 'P', 'D', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::vector<std::uint8_t> encode_container(const TensorField& field, std::string_view name) {
  field.validate_finite();
  const nlohmann::json header = {
      {"dtype", "f32"},
      {"shape", {field.channels(), field.rows(), field.cols()}},
      {"name", std::string(name)},
  };
  const std::string h = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out.insert(out.end(), h.begin(), h.end());
  out.reserve(out.size() + 4 * field.size());
  for (double v : field.data()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw FormatError("container: value overflows f32 in '" + std::string(name) + "'");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

NamedField decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("container: bad magic");
  const std::uint32_t hlen = get_u32(bytes.data() + 4);
  if (hlen > bytes.size() - 8) throw FormatError("container: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container: malformed header: ") + e.what());
  }
  std::uint64_t shape[3] = {0, 0, 0};
  std::string name;
  try {
    if (!header.is_object() || header.at("dtype") != "f32") throw FormatError("container: dtype must be f32");
    const auto& s = header.at("shape");
    if (!s.is_array() || s.size() != 3) throw FormatError("container: shape must have three entries");
    for (int i = 0; i < 3; ++i) {
      if (!s[static_cast<std::size_t>(i)].is_number_unsigned()) throw FormatError("container: shape entries must be unsigned");
      shape[i] = s[static_cast<std::size_t>(i)].get<std::uint64_t>();
    }
    name = header.value("name", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container: malformed header: ") + e.what());
  }
  const std::uint64_t limit = (bytes.size() - 8 - hlen) / 4;
  std::uint64_t count = 1;
  if (shape[0] == 0 || shape[1] == 0 || shape[2] == 0) {
    count = 0;
  } else {
    for (std::uint64_t d : shape) {
      if (count > limit / d) throw FormatError("container: shape exceeds payload");
      count *= d;
    }
  }
  const std::size_t payload = bytes.size() - 8 - hlen;
  if (payload != 4 * count) {
    throw FormatError("container: payload has " + std::to_string(payload) + " bytes, shape requires " +
                      std::to_string(4 * count));
  }
  std::vector<double> data(count);
  const std::uint8_t* p = bytes.data() + 8 + hlen;
  for (std::uint64_t i = 0; i < count; ++i) {
    const float f = std::bit_cast<float>(get_u32(p + 4 * i));
    if (!std::isfinite(f)) throw FormatError("container: non-finite value in payload");
    data[i] = f;
  }
  return {name, TensorField(shape[0], shape[1], shape[2], std::move(data))};
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void write_container(const std::filesystem::path& path, const TensorField& field, std::string_view name) {
  write_binary_file(path, encode_container(field, name));
}

NamedField read_container(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  try {
    return decode_container(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// PNG

namespace {

void png_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> encode_png(std::size_t rows, std::size_t cols, int channels,
                                     const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> raw;
  const std::size_t stride = cols * static_cast<std::size_t>(channels);
  raw.reserve(rows * (stride + 1));
  for (std::size_t r = 0; r < rows; ++r) {
    raw.push_back(0);
    raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(r * stride),
               pixels.begin() + static_cast<std::ptrdiff_t>((r + 1) * stride));
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error("png: compression failed");
  }
  z.resize(zlen);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(cols));
  put_u32_be(ihdr, static_cast<std::uint32_t>(rows));
  ihdr.push_back(8);                           // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);       // gray or truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", z);
  png_chunk(out, "IEND", {});
  return out;
}

std::vector<std::uint8_t> scaled_plane(const TensorField& field, std::size_t channel) {
  if (field.empty()) throw InvalidInput("png: empty field");
  if (channel >= field.channels()) throw InvalidInput("png: channel out of range");
  const auto plane = field.plane(channel);
  const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
  std::vector<std::uint8_t> px(plane.size());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < plane.size(); ++i) {
    px[i] = range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (plane[i] - *lo) / range)) : 128;
  }
  return px;
}

}  // namespace

std::vector<std::uint8_t> encode_png_gray(const TensorField& field, std::size_t channel) {
  return encode_png(field.rows(), field.cols(), 1, scaled_plane(field, channel));
}

void export_png(const TensorField& field, const std::filesystem::path& path, std::size_t channel) {
  write_binary_file(path, encode_png_gray(field, channel));
}

RgbImage RgbImage::from_field(const TensorField& field, std::size_t channel) {
  const auto gray = scaled_plane(field, channel);
  RgbImage img(field.rows(), field.cols());
  for (std::size_t i = 0; i < gray.size(); ++i) img.pixels_[i] = {gray[i], gray[i], gray[i]};
  return img;
}

void RgbImage::draw_point(Point2 p, Rgb color) {
  const long r = std::lround(p.y), c = std::lround(p.x);
  if (r >= 0 && c >= 0 && static_cast<std::size_t>(r) < rows_ && static_cast<std::size_t>(c) < cols_) {
    at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = color;
  }
}

void RgbImage::draw_line(Point2 a, Point2 b, Rgb color) {
  if (!std::isfinite(a.x) || !std::isfinite(a.y) || !std::isfinite(b.x) || !std::isfinite(b.y)) return;
  const double len = std::max(std::abs(b.x - a.x), std::abs(b.y - a.y));
  const int steps = static_cast<int>(std::min(std::ceil(len), 1e5)) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    draw_point({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}, color);
  }
}

void RgbImage::draw_ring(std::span<const Point2> ring, Rgb color) {
  for (std::size_t i = 0; i < ring.size(); ++i) draw_line(ring[i], ring[(i + 1) % ring.size()], color);
}

std::vector<std::uint8_t> RgbImage::encode_png() const {
  std::vector<std::uint8_t> px;
  px.reserve(pixels_.size() * 3);
  for (const Rgb& p : pixels_) {
    px.push_back(p.r);
    px.push_back(p.g);
    px.push_back(p.b);
  }
  return bpdo::encode_png(rows_, cols_, 3, px);
}

}  // namespace bpdo
