#include <cmath>
#include <fstream>

#include "doctest.h"
#include "pgs/error.hpp"
#include "pgs/image.hpp"
#include "pgs/io.hpp"
#include "pgs/rng.hpp"
#include "test_util.hpp"

using namespace pgs;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Io;
}

std::vector<unsigned char> bytes_of(const std::string& header, std::vector<unsigned char> raster) {
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), raster.begin(), raster.end());
  return out;
}

}  // namespace

TEST_CASE("image shape and bounds") {
  ImageTensor img(3, 4, 2, 0.5f);
  CHECK(img.size() == 24);
  CHECK(img.pixels() == 12);
  img.at(2, 3, 1) = 7.0f;
  CHECK(img.data()[23] == 7.0f);
  CHECK(kind_of([&] { (void)img.at(3, 0, 0); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { (void)img.at(0, 0, 2); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([] { ImageTensor bad(2, 2, 1, std::vector<float>(3)); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("channel split and merge") {
  SeededRng rng(3);
  auto img = test::random_image(rng, 5, 6, 3);
  std::vector<ImageTensor> planes{img.channel(0), img.channel(1), img.channel(2)};
  CHECK(merge_channels(planes) == img);
  auto c = img.crop(1, 2, 3, 3);
  CHECK(c.at(0, 0, 2) == img.at(1, 2, 2));
  CHECK(c.at(2, 2, 0) == img.at(3, 4, 0));
}

TEST_CASE("splitmix64 matches the reference sequence") {
  // First two outputs of the reference SplitMix64 generator seeded with 0.
  CHECK(splitmix64(0x9E3779B97F4A7C15ULL) == 0xE220A8397B1DCDAFULL);
  CHECK(splitmix64(2 * 0x9E3779B97F4A7C15ULL) == 0x6E789E6AA1B965F4ULL);
}

TEST_CASE("gaussian sampling") {
  SeededRng rng(7);
  auto xs = sample_gaussian(rng, 1'000'000, 0.0, 1.0);
  double m = 0.0;
  for (double x : xs) m += x;
  m /= xs.size();
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= xs.size() - 1;
  CHECK(std::abs(m) < 0.005);
  CHECK(std::abs(v - 1.0) < 0.01);

  SeededRng a(7), b(7);
  CHECK(sample_gaussian(a, 100, 0.3, 2.0) == sample_gaussian(b, 100, 0.3, 2.0));
  for (double x : sample_gaussian(a, 50, 0.25, 0.0)) CHECK(x == 0.25);
  CHECK(kind_of([&] { sample_gaussian(a, 1, 0.0, -1.0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("poisson sampling") {
  SeededRng rng(11);
  CHECK(sample_poisson(rng, 0.0) == 0);
  for (double rate : {4.0, 75.0}) {
    const int n = 1'000'000;
    double m = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double k = static_cast<double>(sample_poisson(rng, rate));
      m += k;
      m2 += k * k;
    }
    m /= n;
    const double v = m2 / n - m * m;
    const double tol_m = rate == 4.0 ? 0.02 : 0.05;
    const double tol_v = rate == 4.0 ? 0.05 : 0.6;
    CHECK(std::abs(m - rate) < tol_m);
    CHECK(std::abs(v - rate) < tol_v);
  }
  SeededRng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(sample_poisson(a, 40.0) == sample_poisson(b, 40.0));
  CHECK(kind_of([&] { sample_poisson(a, -1.0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("fork gives independent deterministic streams") {
  SeededRng root(9);
  auto a = root.fork(1);
  auto b = root.fork(1);
  auto c = root.fork(2);
  const auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());
}

TEST_CASE("pgm decode scales by maxval") {
  auto img = decode_image(bytes_of("P5\n2 2\n255\n", {0, 255, 128, 64}));
  REQUIRE(img.height() == 2);
  REQUIRE(img.width() == 2);
  CHECK(img.data()[0] == 0.0f);
  CHECK(img.data()[1] == 1.0f);
  CHECK(img.data()[2] == doctest::Approx(0.50196).epsilon(1e-5));
  CHECK(img.data()[3] == doctest::Approx(0.25098).epsilon(1e-5));

  auto comment = decode_image(bytes_of("P5 # c\n2 1 # d\n15\n", {15, 5}));
  CHECK(comment.data()[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("decode errors are distinct") {
  CHECK(kind_of([] { decode_image({}); }) == ErrorKind::MalformedHeader);
  CHECK(kind_of([] { decode_image(bytes_of("P5\n2 x\n255\n", {})); }) == ErrorKind::MalformedHeader);
  CHECK(kind_of([] { decode_image(bytes_of("P5\n99999999999 2\n255\n", {})); }) == ErrorKind::DimensionOverflow);
  CHECK(kind_of([] { decode_image(bytes_of("P5\n2 2\n255\n", {1, 2, 3})); }) == ErrorKind::TruncatedPayload);
  CHECK(kind_of([] { decode_image(bytes_of("P6\n2 2\n255\n", {1, 2, 3, 4})); }) == ErrorKind::TruncatedPayload);
  CHECK(kind_of([] { decode_image(bytes_of("PGT1", {2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 0})); }) ==
        ErrorKind::TruncatedPayload);
  CHECK(kind_of([] { load_image("/nonexistent/x.pgm"); }) == ErrorKind::Io);
}

TEST_CASE("save clamps netpbm and keeps raw bits") {
  auto dir = test::temp_dir("io");
  ImageTensor img(1, 3, 1, std::vector<float>{1.3f, -0.1f, 0.5f});
  save_image(img, dir / "a.pgm", true);
  auto back = load_image(dir / "a.pgm");
  CHECK(back.data()[0] == 1.0f);
  CHECK(back.data()[1] == 0.0f);
  CHECK(back.data()[2] == doctest::Approx(128.0 / 255.0));

  SeededRng rng(1);
  auto raw = test::random_image(rng, 7, 5, 3, -2.0, 2.0);
  raw.at(0, 0, 0) = 1.3f;
  save_image(raw, dir / "b.pgt");
  auto raw_back = load_image(dir / "b.pgt");
  CHECK(raw_back.at(0, 0, 0) == 1.3f);
  CHECK(raw_back == raw);

  auto rgb = test::random_image(rng, 4, 3, 3);
  save_image(rgb, dir / "c.ppm");
  auto rgb_back = load_image(dir / "c.ppm");
  CHECK(rgb_back.channels() == 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) CHECK(std::abs(rgb_back.data()[i] - rgb.data()[i]) <= 0.5f / 255.0f + 1e-6f);

  CHECK(list_images(dir).size() == 3);
  CHECK(kind_of([&] { save_image(rgb, dir / "d.pgm"); }) == ErrorKind::ShapeMismatch);
}
