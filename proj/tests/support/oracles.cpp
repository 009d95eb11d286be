#include "oracles.hpp"

#include <png.h>
#include <wasmtime.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <stdexcept>

namespace limes::testkit {

namespace fs = std::filesystem;

fs::path workload_dir() { return workloads::resolve_workload_dir(); }

std::vector<std::uint8_t> component(std::string_view file) {
  return workloads::read_component(workload_dir(), file);
}

std::vector<std::uint8_t> to_bytes(std::string_view text) { return {text.begin(), text.end()}; }

std::string to_string(std::span<const std::uint8_t> bytes) {
  return {bytes.begin(), bytes.end()};
}

std::vector<std::uint8_t> read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::uint8_t> wat_to_wasm(std::string_view text) {
  wasm_byte_vec_t out;
  if (wasmtime_error_t *err = wasmtime_wat2wasm(text.data(), text.size(), &out)) {
    wasm_name_t msg;
    wasmtime_error_message(err, &msg);
    std::string what(msg.data, msg.size);
    wasm_byte_vec_delete(&msg);
    wasmtime_error_delete(err);
    throw std::runtime_error("wat: " + what);
  }
  std::vector<std::uint8_t> bytes(out.data, out.data + out.size);
  wasm_byte_vec_delete(&out);
  return bytes;
}

std::string minimal_component_wat(std::string_view extra) {
  // The core `run` returns a pointer to zeroed memory, which lifts to
  // Ok(empty list).
  return std::string("(component\n") + std::string(extra) + R"(
  (core module $m
    (memory (export "memory") 1)
    (func (export "realloc") (param i32 i32 i32 i32) (result i32) i32.const 1024)
    (func (export "run") (param i32 i32) (result i32) i32.const 0))
  (core instance $i (instantiate $m))
  (func (export "run") (param "input" (list u8)) (result (result (list u8) (error string)))
    (canon lift (core func $i "run") (memory (core memory $i "memory")) (realloc (core func $i "realloc"))))
)
)";
}

std::vector<std::uint16_t> mandelbrot_oracle(const workloads::MandelbrotParams &p) {
  const auto &v = p.viewport;
  const double dx = (v.re_max - v.re_min) / p.width;
  const double dy = (v.im_max - v.im_min) / p.height;
  std::vector<std::uint16_t> grid;
  grid.reserve(std::size_t{p.width} * p.height);
  for (std::uint32_t row = 0; row < p.height; ++row) {
    for (std::uint32_t col = 0; col < p.width; ++col) {
      const std::complex<double> c(v.re_min + col * dx, v.im_min + row * dy);
      std::complex<double> z = 0;
      std::uint32_t n = p.max_iter;
      for (std::uint32_t k = 1; k <= p.max_iter; ++k) {
        z = z * z + c;
        if (std::norm(z) > 4.0) {
          n = k;
          break;
        }
      }
      grid.push_back(static_cast<std::uint16_t>(n));
    }
  }
  return grid;
}

std::vector<std::uint8_t> png_encode(const RasterImage &img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = img.width;
  image.height = img.height;
  image.format = img.channels == 4 ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, img.pixels.data(), 0, nullptr))
    throw std::runtime_error(std::string("png size: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr))
    throw std::runtime_error(std::string("png write: ") + image.message);
  out.resize(size);
  return out;
}

RasterImage png_decode(std::span<const std::uint8_t> png) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, png.data(), png.size()))
    throw std::runtime_error(std::string("png read: ") + image.message);
  RasterImage img;
  img.width = image.width;
  img.height = image.height;
  img.channels = (image.format & PNG_FORMAT_FLAG_ALPHA) ? 4 : 3;
  image.format = img.channels == 4 ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr))
    throw std::runtime_error(std::string("png decode: ") + image.message);
  return img;
}

RasterImage random_image(std::mt19937_64 &rng, std::uint32_t max_side, bool alpha) {
  std::uniform_int_distribution<std::uint32_t> side(1, max_side);
  std::uniform_int_distribution<int> byte(0, 255);
  RasterImage img;
  img.width = side(rng);
  img.height = side(rng);
  img.channels = alpha ? 4 : 3;
  img.pixels.resize(std::size_t{img.width} * img.height * img.channels);
  for (auto &b : img.pixels)
    b = static_cast<std::uint8_t>(byte(rng));
  return img;
}

RasterImage oracle_grayscale(RasterImage img) {
  for (std::size_t i = 0; i < img.pixels.size(); i += img.channels) {
    const unsigned w = 299u * img.pixels[i] + 587u * img.pixels[i + 1] + 114u * img.pixels[i + 2];
    // Round half up: w / 1000 with the remainder deciding.
    const auto y = static_cast<std::uint8_t>(w / 1000 + (w % 1000 >= 500 ? 1 : 0));
    img.pixels[i] = img.pixels[i + 1] = img.pixels[i + 2] = y;
  }
  return img;
}

RasterImage oracle_invert(RasterImage img) {
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    if (i % img.channels < 3)
      img.pixels[i] = static_cast<std::uint8_t>(~img.pixels[i]);
  return img;
}

RasterImage oracle_blur3x3(const RasterImage &img) {
  RasterImage out = img;
  const long w = img.width, h = img.height;
  auto at = [&](long x, long y, std::uint32_t c) {
    x = std::min(std::max(x, 0L), w - 1);
    y = std::min(std::max(y, 0L), h - 1);
    return img.pixels[(static_cast<std::size_t>(y) * w + x) * img.channels + c];
  };
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::uint32_t c = 0; c < 3; ++c) {
        int sum = 0;
        for (long j = y - 1; j <= y + 1; ++j)
          for (long i = x - 1; i <= x + 1; ++i)
            sum += at(i, j, c);
        // sum / 9 never lands exactly on .5, so lround is unambiguous.
        out.pixels[(static_cast<std::size_t>(y) * w + x) * img.channels + c] =
            static_cast<std::uint8_t>(std::lround(sum / 9.0));
      }
  return out;
}

RasterImage apply_oracle(RasterImage img, std::span<const workloads::Filter> filters) {
  for (auto f : filters) {
    switch (f) {
    case workloads::Filter::Grayscale: img = oracle_grayscale(std::move(img)); break;
    case workloads::Filter::Invert: img = oracle_invert(std::move(img)); break;
    case workloads::Filter::Blur3x3: img = oracle_blur3x3(img); break;
    }
  }
  return img;
}

double brute_force_cdf(std::span<const double> samples, double x) {
  std::size_t count = 0;
  for (double s : samples)
    count += s <= x;
  return static_cast<double>(count) / static_cast<double>(samples.size());
}

double brute_force_mean(std::span<const double> samples) {
  // Extended-precision sum, so the oracle does not share rounding with a
  // plain double accumulate.
  long double sum = 0;
  for (double s : samples)
    sum += s;
  return static_cast<double>(sum / samples.size());
}

double brute_force_stddev(std::span<const double> samples) {
  if (samples.size() < 2)
    return 0;
  const long double mean = brute_force_mean(samples);
  long double ss = 0;
  for (double s : samples)
    ss += (s - mean) * (s - mean);
  return static_cast<double>(std::sqrt(ss / (samples.size() - 1)));
}

double brute_force_percentile(std::span<const double> samples, double p) {
  const auto n = samples.size();
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  if (rank < 1)
    rank = 1;
  if (rank > n)
    rank = n;
  // The answer is the sample whose "at or below" count first reaches rank.
  double best = INFINITY;
  for (double candidate : samples) {
    std::size_t at_or_below = 0;
    for (double s : samples)
      at_or_below += s <= candidate;
    if (at_or_below >= rank && candidate < best)
      best = candidate;
  }
  return best;
}

std::vector<double> random_samples(std::mt19937_64 &rng, std::size_t n) {
  // Mix of continuous values and heavy duplication, on a microsecond grid
  // like real measurements.
  std::uniform_real_distribution<double> value(0.0, 500.0);
  std::uniform_int_distribution<int> coarse(0, 9);
  std::bernoulli_distribution dup(0.3);
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = dup(rng) ? coarse(rng) * 1.5 : value(rng);
    out.push_back(std::round(v * 1000.0) / 1000.0);
  }
  return out;
}

} // namespace limes::testkit
