#include "hdsurv/render.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hdsurv/errors.hpp"

namespace hdsurv {
namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 50.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double cell_value(const TsvTable& t, std::size_t row, std::size_t col) {
  const auto& s = t.rows[row][col];
  if (s == "NA" || s == "NaN" || s == "nan") return std::nan("");
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError(t.source, static_cast<int>(row + 2), "not a number: '" + s + "'");
  }
  return v;
}

std::size_t find_column(const TsvTable& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw ParseError(t.source, 1, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

std::string open_svg() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n" +
         "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"#ffffff\"/>\n";
}

// Blue (-1) to white (0) to red (+1).
std::string diverging(double t) {
  t = std::clamp(t, -1.0, 1.0);
  int r = 255, g = 255, b = 255;
  if (t > 0) {
    g = b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
  } else if (t < 0) {
    r = g = static_cast<int>(std::lround(255.0 * (1.0 + t)));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

struct Scale {
  double lo, hi;
  double y(double v) const {
    const double span = hi > lo ? hi - lo : 1.0;
    return kHeight - kMargin - (v - lo) / span * (kHeight - 2 * kMargin);
  }
};

double x_at(std::size_t i, std::size_t count) {
  if (count <= 1) return kWidth / 2;
  return kMargin + static_cast<double>(i) / static_cast<double>(count - 1) * (kWidth - 2 * kMargin);
}

std::string axes() {
  return "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kHeight - kMargin) + "\" x2=\"" + num(kWidth - kMargin) +
         "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"#000000\"/>\n<line x1=\"" + num(kMargin) + "\" y1=\"" +
         num(kMargin) + "\" x2=\"" + num(kMargin) + "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"#000000\"/>\n";
}

std::string axis_labels(const Scale& s) {
  return "<text x=\"" + num(kMargin - 5) + "\" y=\"" + num(s.y(s.hi)) + "\" font-size=\"10\" text-anchor=\"end\">" +
         num(s.hi) + "</text>\n<text x=\"" + num(kMargin - 5) + "\" y=\"" + num(s.y(s.lo)) +
         "\" font-size=\"10\" text-anchor=\"end\">" + num(s.lo) + "</text>\n";
}

std::string heatmap(const TsvTable& t) {
  if (t.header.size() < 2 || t.rows.empty()) throw ParseError(t.source, 1, "heatmap needs labels and at least one value column");
  const auto rows = t.rows.size();
  const auto cols = t.header.size() - 1;
  std::vector<double> v(rows * cols);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      v[i * cols + j] = cell_value(t, i, j + 1);
      if (std::isfinite(v[i * cols + j])) max_abs = std::max(max_abs, std::abs(v[i * cols + j]));
    }
  }
  const double cw = (kWidth - 2 * kMargin) / static_cast<double>(cols);
  const double ch = (kHeight - 2 * kMargin) / static_cast<double>(rows);
  std::string svg = open_svg();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = v[i * cols + j];
      const std::string fill = !std::isfinite(x) ? "#cccccc" : diverging(max_abs > 0 ? x / max_abs : 0.0);
      svg += "<rect x=\"" + num(kMargin + static_cast<double>(j) * cw) + "\" y=\"" +
             num(kMargin + static_cast<double>(i) * ch) + "\" width=\"" + num(cw) + "\" height=\"" + num(ch) +
             "\" fill=\"" + fill + "\"/>\n";
    }
  }
  svg += "<text x=\"" + num(kMargin) + "\" y=\"" + num(kMargin - 10) + "\" font-size=\"12\">scale: +-" +
         num(max_abs) + "</text>\n";
  return svg + "</svg>\n";
}

std::string polyline(const std::vector<double>& ys, const Scale& s, std::size_t count, const char* stroke) {
  std::string pts;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (!pts.empty()) pts += ' ';
    pts += num(x_at(i, count)) + "," + num(s.y(ys[i]));
  }
  return std::string("<polyline fill=\"none\" stroke=\"") + stroke + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
}

Scale scale_of(const std::vector<double>& lo, const std::vector<double>& hi) {
  Scale s{*std::min_element(lo.begin(), lo.end()), *std::max_element(hi.begin(), hi.end())};
  if (s.hi == s.lo) {
    s.lo -= 1.0;
    s.hi += 1.0;
  }
  return s;
}

std::string line(const TsvTable& t) {
  if (t.header.size() < 2 || t.rows.empty()) throw ParseError(t.source, 1, "line plot needs at least two columns");
  const auto it = std::find(t.header.begin(), t.header.end(), "y");
  const auto col = it == t.header.end() ? std::size_t{1} : static_cast<std::size_t>(it - t.header.begin());
  std::vector<double> ys;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double y = cell_value(t, i, col);
    if (std::isfinite(y)) ys.push_back(y);
  }
  if (ys.empty()) throw ParseError(t.source, 2, "no finite values to plot");
  const auto s = scale_of(ys, ys);
  return open_svg() + axes() + axis_labels(s) + polyline(ys, s, ys.size(), "#1f4e9c") + "</svg>\n";
}

std::string mean_sd(const TsvTable& t) {
  const auto mc = find_column(t, "mean");
  const auto sc = find_column(t, "sd");
  std::vector<double> mean, lo, hi;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double m = cell_value(t, i, mc);
    if (!std::isfinite(m)) continue;
    double sd = cell_value(t, i, sc);
    if (!std::isfinite(sd)) sd = 0.0;
    mean.push_back(m);
    lo.push_back(m - sd);
    hi.push_back(m + sd);
  }
  if (mean.empty()) throw ParseError(t.source, 2, "no finite means to plot");
  const auto s = scale_of(lo, hi);
  const auto count = mean.size();
  std::string band;
  for (std::size_t i = 0; i < count; ++i) band += num(x_at(i, count)) + "," + num(s.y(hi[i])) + " ";
  for (std::size_t i = count; i-- > 0;) {
    band += num(x_at(i, count)) + "," + num(s.y(lo[i]));
    if (i > 0) band += ' ';
  }
  return open_svg() + axes() + axis_labels(s) + "<polygon fill=\"#9cb8e0\" fill-opacity=\"0.5\" stroke=\"none\" points=\"" +
         band + "\"/>\n" + polyline(mean, s, count, "#1f4e9c") + "</svg>\n";
}

}  // namespace

RenderKind parse_render_kind(std::string_view name) {
  if (name == "heatmap") return RenderKind::Heatmap;
  if (name == "line") return RenderKind::Line;
  if (name == "meansd") return RenderKind::MeanSd;
  throw ConfigError("unknown render kind '" + std::string(name) + "' (heatmap, line, meansd)");
}

TsvTable parse_tsv(const std::string& text, const std::string& source) {
  TsvTable t;
  t.source = source;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      cells.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) {
        throw ParseError(source, number, "expected " + std::to_string(t.header.size()) + " cells, found " +
                                             std::to_string(cells.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw ParseError(source, number, "table is empty");
  return t;
}

TsvTable read_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_tsv(text.str(), path.string());
}

std::string render_svg(const TsvTable& table, RenderKind kind) {
  switch (kind) {
    case RenderKind::Heatmap:
      return heatmap(table);
    case RenderKind::Line:
      return line(table);
    case RenderKind::MeanSd:
      return mean_sd(table);
  }
  return {};
}

void render_svg_file(const std::filesystem::path& input, RenderKind kind, const std::filesystem::path& output) {
  const auto svg = render_svg(read_tsv(input), kind);
  std::ofstream out(output, std::ios::binary);
  if (!out) throw Error("cannot write " + output.string());
  out << svg;
}

}  // namespace hdsurv
