#include "patchdrop/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "patchdrop/error.hpp"
#include "patchdrop/manifest.hpp"

namespace patchdrop::plot {

namespace {

constexpr double kWidth = 640.0, kHeight = 480.0;
constexpr double kLeft = 64.0, kRight = 24.0, kTop = 24.0, kBottom = 48.0;

const char* kPalette[] = {"#1f77b4", "#2ca02c", "#9467bd",
                          "#d62728", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct Axes {
  double xmin, xmax, ymin, ymax;
  bool log_x = false;

  double tx(double x) const {
    const double v = log_x ? std::log10(x) : x;
    const double lo = log_x ? std::log10(xmin) : xmin;
    const double hi = log_x ? std::log10(xmax) : xmax;
    const double t = (hi == lo) ? 0.5 : (v - lo) / (hi - lo);
    return kLeft + t * (kWidth - kLeft - kRight);
  }
  double ty(double y) const {
    const double t = (ymax == ymin) ? 0.5 : (y - ymin) / (ymax - ymin);
    return kHeight - kBottom - t * (kHeight - kTop - kBottom);
  }
};

std::string render(const std::vector<Series>& series, Axes ax,
                   const std::string& x_label, const std::string& y_label) {
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Axis frame.
  svg << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kHeight - kBottom)
      << "\" x2=\"" << num(kWidth - kRight) << "\" y2=\""
      << num(kHeight - kBottom) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\""
      << num(kLeft) << "\" y2=\"" << num(kHeight - kBottom)
      << "\" stroke=\"black\"/>\n";

  // Five ticks per axis.
  for (int i = 0; i <= 4; ++i) {
    const double f = static_cast<double>(i) / 4.0;
    double xv;
    if (ax.log_x) {
      xv = std::pow(10.0, std::log10(ax.xmin) +
                              f * (std::log10(ax.xmax) - std::log10(ax.xmin)));
    } else {
      xv = ax.xmin + f * (ax.xmax - ax.xmin);
    }
    const double yv = ax.ymin + f * (ax.ymax - ax.ymin);
    svg << "<line x1=\"" << num(ax.tx(xv)) << "\" y1=\""
        << num(kHeight - kBottom) << "\" x2=\"" << num(ax.tx(xv)) << "\" y2=\""
        << num(kHeight - kBottom + 5) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(ax.tx(xv)) << "\" y=\""
        << num(kHeight - kBottom + 18)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << tick_label(xv)
        << "</text>\n";
    svg << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(ax.ty(yv))
        << "\" x2=\"" << num(kLeft) << "\" y2=\"" << num(ax.ty(yv))
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(ax.ty(yv) + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">" << tick_label(yv)
        << "</text>\n";
  }

  svg << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\""
      << num(kHeight - 12) << "\" font-size=\"12\" text-anchor=\"middle\">"
      << x_label << "</text>\n";
  svg << "<text x=\"14\" y=\"" << num((kTop + kHeight - kBottom) / 2)
      << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << num((kTop + kHeight - kBottom) / 2) << ")\">" << y_label
      << "</text>\n";

  // Series with markers and a legend.
  std::size_t ci = 0;
  double legend_y = kTop + 14.0;
  for (const Series& s : series) {
    const char* color = kPalette[ci % (sizeof(kPalette) / sizeof(char*))];
    if (s.points.size() > 1) {
      svg << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, y] : s.points) {
        svg << num(ax.tx(x)) << ',' << num(ax.ty(y)) << ' ';
      }
      svg << "\"/>\n";
    }
    for (const auto& [x, y] : s.points) {
      svg << "<circle cx=\"" << num(ax.tx(x)) << "\" cy=\"" << num(ax.ty(y))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    svg << "<rect x=\"" << num(kWidth - kRight - 150) << "\" y=\""
        << num(legend_y - 9) << "\" width=\"10\" height=\"10\" fill=\""
        << color << "\"/>\n";
    svg << "<text x=\"" << num(kWidth - kRight - 136) << "\" y=\""
        << num(legend_y) << "\" font-size=\"11\">" << s.label << "</text>\n";
    legend_y += 16.0;
    ++ci;
  }
  svg << "</svg>\n";
  return svg.str();
}

Axes fit_axes(const std::vector<Series>& series, bool log_x) {
  Axes ax{};
  ax.log_x = log_x;
  bool first = true;
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      if (first) {
        ax.xmin = ax.xmax = x;
        ax.ymin = ax.ymax = y;
        first = false;
      } else {
        ax.xmin = std::min(ax.xmin, x);
        ax.xmax = std::max(ax.xmax, x);
        ax.ymin = std::min(ax.ymin, y);
        ax.ymax = std::max(ax.ymax, y);
      }
    }
  }
  if (first) throw SchemaMismatch("plot has no data points");
  if (!log_x) {
    const double pad = (ax.xmax - ax.xmin) * 0.05;
    ax.xmin -= pad;
    ax.xmax += pad;
  }
  double ypad = (ax.ymax - ax.ymin) * 0.05;
  if (ypad == 0.0) ypad = std::max(1e-6, std::abs(ax.ymax) * 0.05 + 1e-6);
  ax.ymin -= ypad;
  ax.ymax += ypad;
  return ax;
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw SchemaMismatch("CSV is missing required column '" + name + "'");
}

bool Table::has_column(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

double Table::number(std::size_t row, std::size_t col) const {
  const std::string& cell = rows.at(row).at(col);
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw SchemaMismatch("CSV cell '" + cell + "' is not numeric");
  }
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open CSV: " + path.string());
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (!have_header) {
      t.columns = std::move(cells);
      have_header = true;
    } else {
      cells.resize(t.columns.size());
      t.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw SchemaMismatch("CSV has no header row");
  return t;
}

Kind kind_from_name(const std::string& name) {
  if (name == "keep_rate_curve") return Kind::kKeepRateCurve;
  if (name == "robustness") return Kind::kRobustness;
  if (name == "savings") return Kind::kSavings;
  throw Error("unknown plot kind '" + name + "'");
}

std::string kind_name(Kind kind) {
  switch (kind) {
    case Kind::kKeepRateCurve: return "keep_rate_curve";
    case Kind::kRobustness: return "robustness";
    case Kind::kSavings: return "savings";
  }
  throw Error("unknown plot kind");
}

std::string render_svg(const Table& table, Kind kind) {
  std::vector<Series> series;
  bool log_x = false;
  std::string x_label, y_label;

  switch (kind) {
    case Kind::kKeepRateCurve: {
      const std::size_t cx = table.column("keep_rate");
      const std::size_t cy = table.column("top1_mean");
      Series s{"top1", {}};
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        s.points.emplace_back(table.number(r, cx), table.number(r, cy));
      }
      std::sort(s.points.begin(), s.points.end());
      s.points.erase(std::unique(s.points.begin(), s.points.end()),
                     s.points.end());
      series.push_back(std::move(s));
      x_label = "keep rate";
      y_label = "top-1 accuracy";
      break;
    }
    case Kind::kRobustness: {
      const std::size_t cx = table.column("eval_rate");
      for (const char* curve : {"green", "blue", "purple"}) {
        const std::size_t cy = table.column(curve);
        Series s{curve, {}};
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
          const double y = table.number(r, cy);
          if (std::isnan(y)) continue;
          s.points.emplace_back(table.number(r, cx), y);
        }
        std::sort(s.points.begin(), s.points.end());
        series.push_back(std::move(s));
      }
      x_label = "eval keep rate";
      y_label = "top-1 accuracy";
      break;
    }
    case Kind::kSavings: {
      const std::size_t cn = table.column("n_patches");
      const std::size_t ck = table.column("kept");
      const std::size_t ct = table.column("relative_theoretical");
      const std::size_t ce = table.column("relative_empirical");
      // Series per keep rate, theoretical and empirical separately.
      std::map<std::string, Series> grouped;
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const double n = table.number(r, cn);
        const double k = table.number(r, ck);
        char rate[16];
        std::snprintf(rate, sizeof(rate), "%.2f", k / n);
        grouped["theoretical r=" + std::string(rate)].points.emplace_back(
            n, table.number(r, ct));
        grouped["empirical r=" + std::string(rate)].points.emplace_back(
            n, table.number(r, ce));
      }
      for (auto& [label, s] : grouped) {
        s.label = label;
        std::sort(s.points.begin(), s.points.end());
        series.push_back(std::move(s));
      }
      x_label = "sequence length N";
      y_label = "relative compute";
      log_x = true;
      break;
    }
  }

  return render(series, fit_axes(series, log_x), x_label, y_label);
}

void emit_plot(const std::filesystem::path& csv_path, Kind kind,
               const std::filesystem::path& svg_path) {
  const Table table = read_csv(csv_path);
  const std::string svg = render_svg(table, kind);
  std::ofstream os(svg_path, std::ios::binary);
  if (!os) throw Error("cannot write SVG: " + svg_path.string());
  os << svg;
}

}  // namespace patchdrop::plot
