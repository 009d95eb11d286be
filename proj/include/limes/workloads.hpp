#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace limes::workloads {

/// Benchmark workloads. The -io variants run the same component with its
/// disk-writing path enabled.
enum class Workload { Noop, Mandelbrot, MandelbrotIo, Image, ImageIo };

inline constexpr Workload kAllWorkloads[] = {Workload::Noop, Workload::Mandelbrot,
                                            Workload::MandelbrotIo, Workload::Image,
                                            Workload::ImageIo};

std::string_view to_string(Workload w) noexcept;
std::optional<Workload> parse_workload(std::string_view name);

/// Component file name under the workloads directory, e.g. "mandelbrot.wasm".
std::string component_file(Workload w);
inline constexpr std::string_view kSpinComponent = "spin.wasm";
inline constexpr std::string_view kImageFixture = "fixtures/input.png";
inline constexpr std::string_view kImageInputName = "input.png";

struct Viewport {
  double re_min = -2.5;
  double re_max = 1.0;
  double im_min = -1.0;
  double im_max = 1.0;
};

struct MandelbrotParams {
  std::uint32_t width = 800;
  std::uint32_t height = 600;
  std::uint32_t max_iter = 1000;
  Viewport viewport;
  bool io_enabled = false;
  std::string output_path = "mandelbrot.pgm";

  /// Throws Error{InvalidArgument}.
  void validate() const;
  std::string to_json() const;
  static MandelbrotParams from_json(std::string_view text);
};

enum class Filter { Grayscale, Invert, Blur3x3 };
std::string_view to_string(Filter f) noexcept;

struct ImageJob {
  std::string input_path = std::string(kImageInputName);
  std::vector<Filter> filters{Filter::Grayscale, Filter::Invert, Filter::Blur3x3};
  bool write_output = false;
  std::string output_path = "output.png";

  /// Throws Error{InvalidArgument} on empty filters or '..' segments.
  void validate() const;
  std::string to_json() const;
  static ImageJob from_json(std::string_view text);
};

/// Decodes the mandelbrot guest's output: row-major little-endian u16 counts.
std::vector<std::uint16_t> decode_grid(const std::vector<std::uint8_t> &payload);

/// Standard input payload for a workload at its default parameters.
std::vector<std::uint8_t> default_payload(Workload w);

/// Resolves the directory holding the built components: an explicit path,
/// then LIMES_WORKLOAD_DIR, then ./workloads/bin, then the source tree.
std::filesystem::path resolve_workload_dir(const std::optional<std::filesystem::path> &explicit_dir = {});

std::vector<std::uint8_t> read_component(const std::filesystem::path &dir, Workload w);
std::vector<std::uint8_t> read_component(const std::filesystem::path &dir, std::string_view file);

/// Files every sandbox for this workload is seeded with.
std::vector<std::filesystem::path> seed_files(const std::filesystem::path &dir, Workload w);

} // namespace limes::workloads
