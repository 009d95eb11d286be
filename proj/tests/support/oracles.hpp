#pragma once

// Host-side reference implementations that the guest components and the
// statistics code are checked against. None of them share code with the
// implementations under test.

#include "limes/workloads.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace limes::testkit {

/// Directory holding the built components and the image fixture.
std::filesystem::path workload_dir();
std::vector<std::uint8_t> component(std::string_view file);
std::vector<std::uint8_t> to_bytes(std::string_view text);
std::string to_string(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path &path);

/// Text format (core module or component) to binary, via the engine's parser.
std::vector<std::uint8_t> wat_to_wasm(std::string_view text);

/// A minimal component exporting `run` that returns Ok(empty) without
/// touching its input. `extra` is spliced in before the core module.
std::string minimal_component_wat(std::string_view extra = {});

// --- Mandelbrot -------------------------------------------------------------

std::vector<std::uint16_t> mandelbrot_oracle(const workloads::MandelbrotParams &p);

// --- Images -----------------------------------------------------------------

struct RasterImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 3; // 3 = RGB, 4 = RGBA
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const RasterImage &, const RasterImage &) = default;
};

/// libpng encode/decode, 8-bit RGB or RGBA only.
std::vector<std::uint8_t> png_encode(const RasterImage &img);
RasterImage png_decode(std::span<const std::uint8_t> png);

RasterImage random_image(std::mt19937_64 &rng, std::uint32_t max_side, bool alpha);

RasterImage oracle_grayscale(RasterImage img);
RasterImage oracle_invert(RasterImage img);
RasterImage oracle_blur3x3(const RasterImage &img);
RasterImage apply_oracle(RasterImage img, std::span<const workloads::Filter> filters);

// --- Statistics ---------------------------------------------------------------

/// |{s : s <= x}| / |S| by direct counting.
double brute_force_cdf(std::span<const double> samples, double x);
double brute_force_mean(std::span<const double> samples);
double brute_force_stddev(std::span<const double> samples);
/// Smallest sample with at least ceil(p*n) samples at or below it.
double brute_force_percentile(std::span<const double> samples, double p);

std::vector<double> random_samples(std::mt19937_64 &rng, std::size_t n);

} // namespace limes::testkit
