#include "limes/workloads.hpp"

#include "limes/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fmt/format.h>
#include <fstream>

#ifndef LIMES_SOURCE_WORKLOAD_DIR
#define LIMES_SOURCE_WORKLOAD_DIR ""
#endif

namespace limes::workloads {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(Workload w) noexcept {
  switch (w) {
  case Workload::Noop: return "noop";
  case Workload::Mandelbrot: return "mandelbrot";
  case Workload::MandelbrotIo: return "mandelbrot-io";
  case Workload::Image: return "image";
  case Workload::ImageIo: return "image-io";
  }
  return "unknown";
}

std::optional<Workload> parse_workload(std::string_view name) {
  for (auto w : kAllWorkloads)
    if (to_string(w) == name)
      return w;
  return std::nullopt;
}

std::string component_file(Workload w) {
  switch (w) {
  case Workload::Noop: return "noop.wasm";
  case Workload::Mandelbrot:
  case Workload::MandelbrotIo: return "mandelbrot.wasm";
  case Workload::Image:
  case Workload::ImageIo: return "image.wasm";
  }
  return {};
}

namespace {

bool has_parent_segment(std::string_view path) {
  std::size_t start = 0;
  while (start <= path.size()) {
    auto end = path.find('/', start);
    if (end == std::string_view::npos)
      end = path.size();
    if (path.substr(start, end - start) == "..")
      return true;
    start = end + 1;
  }
  return false;
}

void check_path(std::string_view what, std::string_view path) {
  if (path.empty() || has_parent_segment(path))
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("{} '{}' must be non-empty and contain no '..'", what, path));
}

} // namespace

void MandelbrotParams::validate() const {
  if (width == 0 || height == 0)
    throw Error(ErrorCode::InvalidArgument, "width and height must be positive");
  if (max_iter == 0 || max_iter > 0xffff)
    throw Error(ErrorCode::InvalidArgument, "max_iter must be in 1..=65535");
  if (!(viewport.re_min < viewport.re_max) || !(viewport.im_min < viewport.im_max))
    throw Error(ErrorCode::InvalidArgument, "viewport bounds must be strictly increasing");
  if (io_enabled)
    check_path("output_path", output_path);
}

std::string MandelbrotParams::to_json() const {
  json j{{"width", width},
         {"height", height},
         {"max_iter", max_iter},
         {"re_min", viewport.re_min},
         {"re_max", viewport.re_max},
         {"im_min", viewport.im_min},
         {"im_max", viewport.im_max},
         {"io_enabled", io_enabled},
         {"output_path", output_path}};
  return j.dump();
}

MandelbrotParams MandelbrotParams::from_json(std::string_view text) {
  MandelbrotParams p;
  try {
    auto j = json::parse(text);
    p.width = j.value("width", p.width);
    p.height = j.value("height", p.height);
    p.max_iter = j.value("max_iter", p.max_iter);
    p.viewport.re_min = j.value("re_min", p.viewport.re_min);
    p.viewport.re_max = j.value("re_max", p.viewport.re_max);
    p.viewport.im_min = j.value("im_min", p.viewport.im_min);
    p.viewport.im_max = j.value("im_max", p.viewport.im_max);
    p.io_enabled = j.value("io_enabled", p.io_enabled);
    p.output_path = j.value("output_path", p.output_path);
  } catch (const json::exception &e) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("bad mandelbrot params: {}", e.what()));
  }
  return p;
}

std::string_view to_string(Filter f) noexcept {
  switch (f) {
  case Filter::Grayscale: return "grayscale";
  case Filter::Invert: return "invert";
  case Filter::Blur3x3: return "blur3x3";
  }
  return "unknown";
}

void ImageJob::validate() const {
  if (filters.empty())
    throw Error(ErrorCode::InvalidArgument, "filters must not be empty");
  check_path("input_path", input_path);
  check_path("output_path", output_path);
}

std::string ImageJob::to_json() const {
  json names = json::array();
  for (auto f : filters)
    names.push_back(std::string(to_string(f)));
  json j{{"input_path", input_path},
         {"filters", names},
         {"write_output", write_output},
         {"output_path", output_path}};
  return j.dump();
}

ImageJob ImageJob::from_json(std::string_view text) {
  ImageJob job;
  try {
    auto j = json::parse(text);
    job.input_path = j.at("input_path").get<std::string>();
    job.filters.clear();
    for (const auto &name : j.at("filters")) {
      auto s = name.get<std::string>();
      if (s == "grayscale")
        job.filters.push_back(Filter::Grayscale);
      else if (s == "invert")
        job.filters.push_back(Filter::Invert);
      else if (s == "blur3x3")
        job.filters.push_back(Filter::Blur3x3);
      else
        throw Error(ErrorCode::InvalidArgument, fmt::format("unknown filter '{}'", s));
    }
    job.write_output = j.value("write_output", false);
    job.output_path = j.value("output_path", job.output_path);
  } catch (const json::exception &e) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("bad image job: {}", e.what()));
  }
  return job;
}

std::vector<std::uint16_t> decode_grid(const std::vector<std::uint8_t> &payload) {
  if (payload.size() % 2 != 0)
    throw Error(ErrorCode::InvalidArgument, "grid payload has odd length");
  std::vector<std::uint16_t> grid(payload.size() / 2);
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = static_cast<std::uint16_t>(payload[2 * i] | payload[2 * i + 1] << 8);
  return grid;
}

std::vector<std::uint8_t> default_payload(Workload w) {
  std::string text;
  switch (w) {
  case Workload::Noop:
    text = "hello";
    break;
  case Workload::Mandelbrot:
  case Workload::MandelbrotIo: {
    MandelbrotParams p;
    p.io_enabled = w == Workload::MandelbrotIo;
    text = p.to_json();
    break;
  }
  case Workload::Image:
  case Workload::ImageIo: {
    ImageJob job;
    job.write_output = w == Workload::ImageIo;
    text = job.to_json();
    break;
  }
  }
  return {text.begin(), text.end()};
}

fs::path resolve_workload_dir(const std::optional<fs::path> &explicit_dir) {
  if (explicit_dir)
    return *explicit_dir;
  if (const char *env = std::getenv("LIMES_WORKLOAD_DIR"); env && *env)
    return env;
  std::error_code ec;
  for (fs::path candidate : {fs::path("workloads/bin"), fs::path("workloads")})
    if (fs::exists(candidate / "noop.wasm", ec))
      return candidate;
  return fs::path(LIMES_SOURCE_WORKLOAD_DIR);
}

std::vector<std::uint8_t> read_component(const fs::path &dir, std::string_view file) {
  const fs::path path = dir / file;
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("workload component {} not found", path.string()));
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::uint8_t> read_component(const fs::path &dir, Workload w) {
  return read_component(dir, component_file(w));
}

std::vector<fs::path> seed_files(const fs::path &dir, Workload w) {
  if (w == Workload::Image || w == Workload::ImageIo) {
    // The fixture lives beside bin/ in the source tree.
    for (fs::path candidate : {dir / kImageFixture, dir.parent_path() / kImageFixture})
      if (fs::exists(candidate))
        return {candidate};
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("image fixture not found near {}", dir.string()));
  }
  return {};
}

} // namespace limes::workloads
