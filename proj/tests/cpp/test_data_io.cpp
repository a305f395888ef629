#include <gtest/gtest.h>
#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "bpdo/data_io.hpp"
#include "bpdo/error.hpp"
#include "fuzz.hpp"

using namespace bpdo;
namespace fs = std::filesystem;

namespace {

std::string fixture(const char* name) { return read_text_file(fs::path(BPDO_FIXTURE_DIR) / name); }

bool same_vertex_set(const std::vector<Point2>& a, const std::vector<Point2>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (const auto& p : a) {
    bool hit = false;
    for (const auto& q : b) hit = hit || (std::abs(p.x - q.x) < tol && std::abs(p.y - q.y) < tol);
    if (!hit) return false;
  }
  return true;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

// Minimal reader for 8-bit grayscale PNGs: walks the chunks, inflates IDAT
// and undoes the per-row filters.
std::vector<std::uint8_t> decode_gray_png(const std::vector<std::uint8_t>& png, std::size_t& w, std::size_t& h) {
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  EXPECT_EQ(std::memcmp(png.data(), sig, 8), 0);
  std::size_t pos = 8;
  std::vector<std::uint8_t> idat;
  while (pos + 8 <= png.size()) {
    const std::uint32_t len = be32(&png[pos]);
    const std::string type(reinterpret_cast<const char*>(&png[pos + 4]), 4);
    const std::uint8_t* data = &png[pos + 8];
    const std::uint32_t crc = be32(&png[pos + 8 + len]);
    EXPECT_EQ(crc, static_cast<std::uint32_t>(crc32(0, &png[pos + 4], len + 4))) << type;
    if (type == "IHDR") {
      w = be32(data);
      h = be32(data + 4);
      EXPECT_EQ(data[8], 8);  // bit depth
      EXPECT_EQ(data[9], 0);  // grayscale
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    }
    pos += 12 + len;
  }
  std::vector<std::uint8_t> raw((w + 1) * h);
  uLongf out_len = raw.size();
  EXPECT_EQ(uncompress(raw.data(), &out_len, idat.data(), idat.size()), Z_OK);
  std::vector<std::uint8_t> img(w * h);
  for (std::size_t r = 0; r < h; ++r) {
    const std::uint8_t f = raw[r * (w + 1)];
    for (std::size_t c = 0; c < w; ++c) {
      const int x = raw[r * (w + 1) + 1 + c];
      const int a = c ? img[r * w + c - 1] : 0, b = r ? img[(r - 1) * w + c] : 0;
      const int cc = (c && r) ? img[(r - 1) * w + c - 1] : 0;
      int pred = 0;
      if (f == 1) pred = a;
      else if (f == 2) pred = b;
      else if (f == 3) pred = (a + b) / 2;
      else if (f == 4) {
        const int p = a + b - cc, pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - cc);
        pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : cc);
      }
      img[r * w + c] = static_cast<std::uint8_t>((x + pred) & 0xff);
    }
  }
  return img;
}

}  // namespace

TEST(Ctw1500, PassThroughRectangle) {
  std::string line;
  std::vector<Point2> expect;
  for (int i = 0; i < 7; ++i) expect.push_back({10.0 + 10 * i, 5});
  for (int i = 6; i >= 0; --i) expect.push_back({10.0 + 10 * i, 25});
  for (const auto& p : expect) line += std::to_string(static_cast<int>(p.x)) + "," + std::to_string(static_cast<int>(p.y)) + ",";
  line.pop_back();
  const auto a = parse_ctw1500(line);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].polygon.size(), 14u);
  EXPECT_TRUE(same_vertex_set(a[0].polygon.vertices(), expect, 1e-12));
  EXPECT_FALSE(a[0].dont_care);
  EXPECT_TRUE(parse_ctw1500("").empty());
}

TEST(Ctw1500, ErrorsNameTheLine) {
  const auto good = fixture("ctw1500_sample.txt");
  const std::string bad = good + "1,2,3,4\n";
  try {
    parse_ctw1500(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  EXPECT_THROW(parse_ctw1500("1,2,x,4"), ParseError);
}

TEST(Ctw1500, Fixture) {
  const auto a = parse_ctw1500(fixture("ctw1500_sample.txt"));
  ASSERT_EQ(a.size(), 3u);
  for (const auto& x : a) {
    EXPECT_EQ(x.polygon.size(), 14u);
    for (const auto& p : x.polygon.vertices()) {
      EXPECT_GE(p.x, 0);
      EXPECT_LT(p.x, 1000);
      EXPECT_GE(p.y, 0);
      EXPECT_LT(p.y, 1000);
    }
  }
  EXPECT_TRUE(a[1].dont_care);
  EXPECT_FALSE(a[0].dont_care);
  // The training layout stores the same polygons relative to their box.
  const auto rel = parse_ctw1500(fixture("ctw1500_train_sample.txt"), true);
  ASSERT_EQ(rel.size(), 2u);
  EXPECT_TRUE(same_vertex_set(rel[0].polygon.vertices(), a[0].polygon.vertices(), 1e-9));
  EXPECT_TRUE(same_vertex_set(rel[1].polygon.vertices(), a[1].polygon.vertices(), 1e-9));
}

TEST(TotalText, Examples) {
  const auto a = parse_totaltext("x: [[0 10 10 0]], y: [[0 0 5 5]], ornt: [u'h'], transcriptions: [u'ab']\n");
  ASSERT_EQ(a.size(), 1u);
  EXPECT_TRUE(same_vertex_set(a[0].polygon.vertices(), {{0, 0}, {10, 0}, {10, 5}, {0, 5}}, 1e-12));
  const auto d = parse_totaltext("x: [[0 10 10 0]], y: [[0 0 5 5]], ornt: [u'#'], transcriptions: [u'#']");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_TRUE(d[0].dont_care);
  EXPECT_THROW(parse_totaltext("x: [[0 10 10]], y: [[0 0 5 5]], ornt: [u'h'], transcriptions: [u'a']"), ParseError);
  EXPECT_THROW(parse_totaltext(std::string("MATLAB 5.0 MAT-file\0\1", 22)), ParseError);
}

TEST(TotalText, Fixture) {
  const auto a = parse_totaltext(fixture("totaltext_sample.txt"));
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[2].polygon.size(), 12u);  // wrapped record
  EXPECT_TRUE(a[3].dont_care);
  for (const auto& x : a)
    for (const auto& p : x.polygon.vertices()) {
      EXPECT_GE(p.x, 0);
      EXPECT_LT(p.x, 1200);
    }
}

TEST(MsraTd500, Examples) {
  const auto a = parse_msratd500("0 0 0 0 10 4 0");
  ASSERT_EQ(a.size(), 1u);
  EXPECT_TRUE(same_vertex_set(a[0].polygon.vertices(), {{0, 0}, {10, 0}, {10, 4}, {0, 4}}, 1e-12));
  const auto r = parse_msratd500("0 1 0 0 6 6 1.5707963267948966");
  EXPECT_TRUE(r[0].dont_care);
  EXPECT_TRUE(same_vertex_set(r[0].polygon.vertices(), {{0, 0}, {6, 0}, {6, 6}, {0, 6}}, 1e-9));
  EXPECT_THROW(parse_msratd500("0 0 a 0 10 4 0"), ParseError);
  EXPECT_THROW(parse_msratd500("0 0 0 10 4 0"), ParseError);
}

TEST(MsraTd500, FixtureMatchesRotationOracle) {
  const std::string text = fixture("msratd500_sample.gt");
  const auto a = parse_msratd500(text);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_TRUE(a[2].dont_care);
  std::istringstream in(text);
  for (std::size_t i = 0; i < 4; ++i) {
    double idx, diff, x, y, w, h, t;
    in >> idx >> diff >> x >> y >> w >> h >> t;
    const double cx = x + w / 2, cy = y + h / 2, c = std::cos(t), s = std::sin(t);
    std::vector<Point2> corners;
    for (auto [dx, dy] : {std::pair{-w / 2, -h / 2}, {w / 2, -h / 2}, {w / 2, h / 2}, {-w / 2, h / 2}})
      corners.push_back({cx + c * dx - s * dy, cy + s * dx + c * dy});
    EXPECT_TRUE(same_vertex_set(a[i].polygon.vertices(), corners, 1e-9)) << i;
  }
}

TEST(Parsers, CrlfAndFormatNames) {
  EXPECT_EQ(parse_msratd500("0 0 0 0 10 4 0\r\n1 0 5 5 10 4 0\r\n").size(), 2u);
  EXPECT_EQ(parse_annotation_format("totaltext"), AnnotationFormat::totaltext);
  EXPECT_THROW(parse_annotation_format("icdar"), InvalidInput);
}

TEST(Parsers, MutationFuzzSmoke) {
  const std::vector<std::pair<std::string, AnnotationFormat>> seeds = {
      {fixture("ctw1500_sample.txt"), AnnotationFormat::ctw1500},
      {fixture("totaltext_sample.txt"), AnnotationFormat::totaltext},
      {fixture("msratd500_sample.gt"), AnnotationFormat::msratd500}};
  const auto o = fuzz::run(seeds, 1500, 5);
  EXPECT_EQ(o.other_errors, 0u);
  EXPECT_EQ(o.invalid_polygons, 0u);
  EXPECT_GT(o.parsed, 0u);
  EXPECT_GT(o.structured_errors, 0u);
}

TEST(Clamp, MovesAndDrops) {
  SceneRecord s;
  s.rows = 10;
  s.cols = 10;
  s.polygons = {Polygon({{-5, 2}, {5, 2}, {5, 8}}), Polygon({{20, 1}, {30, 1}, {30, 5}})};
  s.dont_care = {false, true};
  const auto rep = clamp_scene(s);
  EXPECT_EQ(rep.polygons_dropped, 1u);
  EXPECT_EQ(rep.vertices_clamped, 4u);  // one kept vertex plus the three of the dropped polygon
  ASSERT_EQ(s.polygons.size(), 1u);
  EXPECT_EQ(s.dont_care.size(), 1u);
  for (const auto& p : s.polygons[0].vertices()) EXPECT_GE(p.x, 0.0);
}

TEST(Resize, ScalesPerAxis) {
  SceneRecord s;
  s.rows = 100;
  s.cols = 200;
  s.polygons = {Polygon({{10, 10}, {100, 10}, {100, 50}})};
  s.dont_care = {false};
  const auto r = resize_scene(s, 50, 50);
  EXPECT_EQ(r.rows, 50u);
  EXPECT_TRUE(same_vertex_set(r.polygons[0].vertices(), {{2.5, 5}, {25, 5}, {25, 25}}, 1e-12));
}

TEST(Synth, DeterministicAndShaped) {
  const auto a = synth_scene(42, 128, 128, 3, 32), b = synth_scene(42, 128, 128, 3, 32);
  EXPECT_EQ(a, b);
  ASSERT_TRUE(a.features);
  EXPECT_EQ(a.features->channels(), 32u);
  EXPECT_EQ(a.polygons.size(), 3u);
  const auto c = synth_scene(43, 128, 128, 3, 32);
  EXPECT_NE(a.features, c.features);
  const auto z = synth_scene(1, 64, 64, 0, 8);
  EXPECT_TRUE(z.polygons.empty());
  EXPECT_TRUE(z.features);
  EXPECT_THROW(synth_scene(1, 32, 64, 1, 8), InvalidInput);
  EXPECT_THROW(synth_scene(1, 64, 64, 40, 8), GenerationError);
}

TEST(Synth, GapAtLeastFourCells) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = synth_scene(seed * 7 + 1, 128, 128, 3, 4);
    std::vector<BinaryMask> masks;
    for (const auto& p : s.polygons) masks.push_back(rasterize(p, 128, 128));
    for (std::size_t i = 0; i < masks.size(); ++i)
      for (std::size_t j = i + 1; j < masks.size(); ++j)
        for (std::int64_t r = 0; r < 128; ++r)
          for (std::int64_t c = 0; c < 128; ++c) {
            if (!masks[i].test(r, c)) continue;
            // Chebyshev dilation by 4 must not reach the other instance.
            for (std::int64_t dr = -4; dr <= 4; ++dr)
              for (std::int64_t dc = -4; dc <= 4; ++dc) ASSERT_FALSE(masks[j].test(r + dr, c + dc)) << seed;
          }
  }
}

TEST(Container, RoundTripBitExact) {
  Rng rng(3);
  std::vector<double> v(2 * 5 * 7);
  for (double& x : v) x = static_cast<double>(static_cast<float>(rng.uniform(-100, 100)));
  const TensorField f(2, 5, 7, v);
  const auto bytes = encode_container(f, "features");
  EXPECT_EQ(std::memcmp(bytes.data(), "BPDT", 4), 0);
  const auto back = decode_container(bytes);
  EXPECT_EQ(back.name, "features");
  EXPECT_EQ(back.field, f);
  EXPECT_EQ(encode_container(back.field, "features"), bytes);
  const auto path = fs::temp_directory_path() / "bpdo_container_test.bpdt";
  write_container(path, f, "x");
  EXPECT_EQ(read_container(path).field, f);
  fs::remove(path);
}

TEST(Container, RejectsCorruption) {
  const TensorField f(1, 2, 3, 1.5);
  auto bytes = encode_container(f, "n");
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_container(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_container(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_container(bad), FormatError);
  // Header claims a different shape than the payload holds.
  std::string s(bytes.begin(), bytes.end());
  const auto at = s.find("[1,2,3]");
  ASSERT_NE(at, std::string::npos);
  s.replace(at, 7, "[1,3,3]");
  EXPECT_THROW(decode_container(std::vector<std::uint8_t>(s.begin(), s.end())), FormatError);
  for (std::size_t n = 0; n < bytes.size(); ++n)
    EXPECT_THROW(decode_container(std::span(bytes.data(), n)), FormatError);
  EXPECT_THROW(read_container("/nonexistent/file.bpdt"), Error);
}

TEST(Png, ConstantIsMidGrayAndScaling) {
  std::size_t w = 0, h = 0;
  auto img = decode_gray_png(encode_png_gray(TensorField(1, 4, 6, 3.0)), w, h);
  EXPECT_EQ(w, 6u);
  EXPECT_EQ(h, 4u);
  for (auto v : img) EXPECT_EQ(v, 128);
  TensorField ramp(2, 3, 3);
  for (std::size_t i = 0; i < 9; ++i) ramp.plane(1)[i] = static_cast<double>(i);
  img = decode_gray_png(encode_png_gray(ramp, 1), w, h);
  EXPECT_EQ(img.front(), 0);
  EXPECT_EQ(img.back(), 255);
  EXPECT_EQ(img[4], 128);
}
