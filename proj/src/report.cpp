#include "limes/report.hpp"

#include "limes/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <sstream>

namespace limes::report {

namespace fs = std::filesystem;
using bench::LatencySamples;
using bench::Mode;

std::string format_ms(double value) { return fmt::format("{:.3f}", value); }

namespace {

constexpr std::string_view kSamplesHeader = "iteration,latency_ms";
constexpr std::string_view kEcdfHeader = "latency_ms,cum_prob";
constexpr std::string_view kSummaryHeader =
    "workload,mode,n,warmup,mean_ms,p50_ms,p90_ms,p99_ms,min_ms,max_ms,stddev_ms,aborted,"
    "recorded_at";

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos)
      return out;
    start = pos + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty())
    lines.pop_back();
  return lines;
}

double parse_double(std::string_view field) {
  // std::from_chars for double is missing from libstdc++ 11; strtod under
  // the "C" locale matches what format_ms writes.
  std::string copy(field);
  char *end = nullptr;
  double v = std::strtod(copy.c_str(), &end);
  if (copy.empty() || end != copy.c_str() + copy.size() || !std::isfinite(v))
    throw Error(ErrorCode::InvalidArgument, fmt::format("bad number '{}'", field));
  return v;
}

std::uint64_t parse_uint(std::string_view field) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw Error(ErrorCode::InvalidArgument, fmt::format("bad integer '{}'", field));
  return v;
}

void expect_header(const std::vector<std::string_view> &lines, std::string_view header) {
  if (lines.empty() || lines.front() != header)
    throw Error(ErrorCode::InvalidArgument, fmt::format("expected header '{}'", header));
}

void write_file(const fs::path &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (!out)
    throw Error(ErrorCode::StorageFailure, fmt::format("cannot write {}", path.string()));
}

std::string_view color_of(Mode m) {
  switch (m) {
  case Mode::ColdJit: return "#d62728";
  case Mode::ColdCached: return "#1f77b4";
  case Mode::Execution: return "#2ca02c";
  }
  return "#000000";
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    case '"': out += "&quot;"; break;
    default: out += c;
    }
  }
  return out;
}

std::string svg_number(double v) { return fmt::format("{:.2f}", v); }

} // namespace

std::string samples_csv(const LatencySamples &set) {
  std::string out(kSamplesHeader);
  out += '\n';
  for (std::size_t i = 0; i < set.values_ms.size(); ++i)
    out += fmt::format("{},{}\n", i + 1, format_ms(set.values_ms[i]));
  return out;
}

std::string ecdf_csv(const bench::EcdfTable &table) {
  std::string out(kEcdfHeader);
  out += '\n';
  for (const auto &pt : table.points)
    out += fmt::format("{},{}\n", format_ms(pt.x), format_ms(pt.p));
  return out;
}

std::string summary_csv(std::span<const LatencySamples> sets) {
  std::string out(kSummaryHeader);
  out += '\n';
  for (const auto &set : sets) {
    out += fmt::format("{},{},{},{},", workloads::to_string(set.plan.workload),
                       bench::to_string(set.plan.mode), set.values_ms.size(),
                       set.warmup_ms.size());
    if (set.values_ms.empty()) {
      out += ",,,,,,,";
    } else {
      auto s = bench::summarize(set.values_ms);
      for (double v : {s.mean_ms, s.p50_ms, s.p90_ms, s.p99_ms, s.min_ms, s.max_ms, s.stddev_ms})
        out += format_ms(v) + ',';
    }
    out += fmt::format("{},{}\n", set.aborted ? "true" : "false", format_utc(set.recorded_at));
  }
  return out;
}

std::string ecdf_svg(std::string_view workload, std::span<const LatencySamples *const> sets) {
  constexpr double width = 720, height = 440;
  constexpr double ml = 70, mr = 150, mt = 40, mb = 60;
  constexpr double pw = width - ml - mr, ph = height - mt - mb;

  // Latencies span several decades across modes, so x is logarithmic.
  double lo = INFINITY, hi = -INFINITY;
  for (const auto *set : sets)
    for (double v : set->values_ms) {
      lo = std::min(lo, std::max(v, 1e-3));
      hi = std::max(hi, std::max(v, 1e-3));
    }
  if (!std::isfinite(lo)) {
    lo = 1e-3;
    hi = 1.0;
  }
  double dlo = std::floor(std::log10(lo));
  double dhi = std::ceil(std::log10(hi));
  if (dhi <= dlo)
    dhi = dlo + 1;
  auto xpos = [&](double v) {
    return (std::log10(std::max(v, 1e-3)) - dlo) / (dhi - dlo) * pw;
  };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<title>ECDF of latencies: {2}</title>\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{3}\" y=\"24\" font-size=\"15\">{2}</text>\n",
      width, height, xml_escape(workload), ml);

  // Axes and decade ticks.
  svg += fmt::format("<g stroke=\"#444\" fill=\"none\">"
                     "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>"
                     "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{3}\"/></g>\n",
                     ml, mt + ph, ml + pw, mt);
  for (double d = dlo; d <= dhi; d += 1) {
    double x = ml + (d - dlo) / (dhi - dlo) * pw;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#ddd\"/>"
                       "<text x=\"{0}\" y=\"{3}\" text-anchor=\"middle\">{4}</text>\n",
                       svg_number(x), mt, mt + ph, mt + ph + 18, std::pow(10.0, d));
  }
  for (int i = 0; i <= 4; ++i) {
    double p = i / 4.0;
    double y = mt + ph - p * ph;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#eee\"/>"
                       "<text x=\"{3}\" y=\"{4}\" text-anchor=\"end\">{5:.2f}</text>\n",
                       ml, svg_number(y), ml + pw, ml - 8, svg_number(y + 4), p);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">latency (ms, log scale)</text>\n",
                     ml + pw / 2, height - 16);
  svg += fmt::format("<text transform=\"translate(18 {}) rotate(-90)\" "
                     "text-anchor=\"middle\">cumulative probability</text>\n",
                     mt + ph / 2);

  // Curves are drawn in a flipped frame: y grows with probability.
  svg += fmt::format("<g transform=\"translate({} {}) scale(1,-1)\" fill=\"none\" "
                     "stroke-width=\"2\">\n",
                     ml, mt + ph);
  for (const auto *set : sets) {
    if (set->values_ms.empty())
      continue;
    auto table = bench::compute_ecdf(set->values_ms);
    std::string points;
    double prev = 0;
    for (const auto &pt : table.points) {
      double x = xpos(pt.x);
      points += fmt::format("{},{} {},{} ", svg_number(x), svg_number(prev * ph),
                            svg_number(x), svg_number(pt.p * ph));
      prev = pt.p;
    }
    points.pop_back();
    svg += fmt::format("<polyline class=\"ecdf\" data-mode=\"{}\" stroke=\"{}\" points=\"{}\"/>\n",
                       bench::to_string(set->plan.mode), color_of(set->plan.mode), points);
  }
  svg += "</g>\n";

  double ly = mt + 10;
  for (const auto *set : sets) {
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"4\" fill=\"{}\"/>"
                       "<text x=\"{}\" y=\"{}\">{}{}</text>\n",
                       ml + pw + 16, ly - 4, color_of(set->plan.mode), ml + pw + 36, ly,
                       bench::to_string(set->plan.mode), set->aborted ? " (aborted)" : "");
    ly += 20;
  }
  svg += "</svg>\n";
  return svg;
}

std::string breakdown_svg(std::span<const LatencySamples> sets) {
  struct Bar {
    std::string label;
    double cold = 0;
    double exec = 0;
  };
  std::vector<Bar> bars;
  for (auto w : workloads::kAllWorkloads) {
    const LatencySamples *exec = nullptr;
    for (const auto &s : sets)
      if (s.plan.workload == w && s.plan.mode == Mode::Execution && !s.values_ms.empty())
        exec = &s;
    if (!exec)
      continue;
    double exec_mean = bench::summarize(exec->values_ms).mean_ms;
    for (const auto &s : sets)
      if (s.plan.workload == w && bench::is_cold(s.plan.mode) && !s.values_ms.empty())
        bars.push_back({fmt::format("{} ({})", workloads::to_string(w),
                                    s.plan.mode == Mode::ColdJit ? "jit" : "cached"),
                        bench::summarize(s.values_ms).mean_ms, exec_mean});
  }

  constexpr double ml = 80, mr = 170, mt = 40, mb = 120, bar_w = 36, gap = 24;
  const double pw = std::max<double>(1, bars.size()) * (bar_w + gap) + gap;
  constexpr double ph = 300;
  const double width = ml + pw + mr, height = mt + ph + mb;
  double top = 0;
  for (const auto &b : bars)
    top = std::max(top, b.cold + b.exec);
  top = top > 0 ? top * 1.1 : 1.0;

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<title>Mean cold start and execution per workload</title>\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-size=\"15\">Mean cold start + execution (ms)</text>\n",
      width, height, ml);
  svg += fmt::format("<g stroke=\"#444\"><line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>"
                     "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{3}\"/></g>\n",
                     ml, mt + ph, ml + pw, mt);
  for (int i = 0; i <= 5; ++i) {
    double v = top * i / 5.0;
    double y = mt + ph - ph * i / 5.0;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#eee\"/>"
                       "<text x=\"{3}\" y=\"{4}\" text-anchor=\"end\">{5}</text>\n",
                       ml, svg_number(y), ml + pw, ml - 8, svg_number(y + 4), format_ms(v));
  }

  svg += fmt::format("<g transform=\"translate({} {}) scale(1,-1)\">\n", ml, mt + ph);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto &b = bars[i];
    double x = gap + static_cast<double>(i) * (bar_w + gap);
    double hc = b.cold / top * ph, he = b.exec / top * ph;
    svg += fmt::format("<rect class=\"cold\" x=\"{0}\" y=\"0\" width=\"{1}\" height=\"{2}\" "
                       "fill=\"{4}\"><title>cold start {5} ms</title></rect>"
                       "<rect class=\"execution\" x=\"{0}\" y=\"{2}\" width=\"{1}\" "
                       "height=\"{3}\" fill=\"{6}\"><title>execution {7} ms</title></rect>\n",
                       svg_number(x), bar_w, svg_number(hc), svg_number(he),
                       color_of(Mode::ColdJit), format_ms(b.cold), color_of(Mode::Execution),
                       format_ms(b.exec));
  }
  svg += "</g>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    double x = ml + gap + static_cast<double>(i) * (bar_w + gap) + bar_w / 2;
    svg += fmt::format("<text transform=\"translate({} {}) rotate(40)\">{}</text>\n",
                       svg_number(x), mt + ph + 14, xml_escape(bars[i].label));
  }
  double lx = ml + pw + 16;
  svg += fmt::format("<rect x=\"{0}\" y=\"{1}\" width=\"14\" height=\"14\" fill=\"{2}\"/>"
                     "<text x=\"{3}\" y=\"{4}\">cold start</text>\n"
                     "<rect x=\"{0}\" y=\"{5}\" width=\"14\" height=\"14\" fill=\"{6}\"/>"
                     "<text x=\"{3}\" y=\"{7}\">execution</text>\n",
                     lx, mt, color_of(Mode::ColdJit), lx + 20, mt + 12, mt + 22,
                     color_of(Mode::Execution), mt + 34);
  svg += "</svg>\n";
  return svg;
}

std::vector<fs::path> emit_reports(std::span<const LatencySamples> sets, const fs::path &out_dir) {
  if (sets.empty())
    throw Error(ErrorCode::EmptySamples, "no sample sets to report");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw Error(ErrorCode::StorageFailure,
                fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));

  std::vector<fs::path> written;
  auto emit = [&](const std::string &name, const std::string &content) {
    auto path = out_dir / name;
    write_file(path, content);
    written.push_back(path);
  };

  for (const auto &set : sets) {
    emit(fmt::format("samples_{}.csv", set.plan.label()), samples_csv(set));
    emit(fmt::format("ecdf_{}.csv", set.plan.label()),
         set.values_ms.empty() ? std::string(kEcdfHeader) + '\n'
                               : ecdf_csv(bench::compute_ecdf(set.values_ms)));
  }
  emit("summary.csv", summary_csv(sets));

  bool any_breakdown = false;
  for (auto w : workloads::kAllWorkloads) {
    std::vector<const LatencySamples *> group;
    bool cold = false, exec = false;
    for (const auto &set : sets)
      if (set.plan.workload == w) {
        group.push_back(&set);
        cold |= bench::is_cold(set.plan.mode) && !set.values_ms.empty();
        exec |= set.plan.mode == Mode::Execution && !set.values_ms.empty();
      }
    if (group.empty())
      continue;
    any_breakdown |= cold && exec;
    emit(fmt::format("ecdf_{}.svg", workloads::to_string(w)),
         ecdf_svg(workloads::to_string(w), group));
  }
  if (any_breakdown)
    emit("breakdown.svg", breakdown_svg(sets));
  return written;
}

// ---------------------------------------------------------------------------

std::vector<double> parse_samples_csv(const std::string &text) {
  auto lines = lines_of(text);
  expect_header(lines, kSamplesHeader);
  std::vector<double> values;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = split(lines[i], ',');
    if (fields.size() != 2 || parse_uint(fields[0]) != i)
      throw Error(ErrorCode::InvalidArgument, fmt::format("bad samples row {}", i));
    values.push_back(parse_double(fields[1]));
  }
  return values;
}

bench::EcdfTable parse_ecdf_csv(const std::string &text) {
  auto lines = lines_of(text);
  expect_header(lines, kEcdfHeader);
  bench::EcdfTable table;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = split(lines[i], ',');
    if (fields.size() != 2)
      throw Error(ErrorCode::InvalidArgument, fmt::format("bad ecdf row {}", i));
    table.points.push_back({parse_double(fields[0]), parse_double(fields[1])});
  }
  return table;
}

std::vector<SummaryRow> parse_summary_csv(const std::string &text) {
  auto lines = lines_of(text);
  expect_header(lines, kSummaryHeader);
  std::vector<SummaryRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = split(lines[i], ',');
    if (f.size() != 13)
      throw Error(ErrorCode::InvalidArgument, fmt::format("bad summary row {}", i));
    SummaryRow row;
    row.workload = f[0];
    row.mode = f[1];
    row.stats.n = parse_uint(f[2]);
    if (row.stats.n > 0) {
      double *dst[] = {&row.stats.mean_ms, &row.stats.p50_ms, &row.stats.p90_ms,
                       &row.stats.p99_ms,  &row.stats.min_ms, &row.stats.max_ms,
                       &row.stats.stddev_ms};
      for (std::size_t k = 0; k < 7; ++k)
        *dst[k] = parse_double(f[4 + k]);
    }
    row.aborted = f[11] == "true";
    rows.push_back(std::move(row));
  }
  return rows;
}

} // namespace limes::report
