#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace patchdrop::plot {

/// Parsed CSV with `#`-prefixed comment lines skipped.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws SchemaMismatch
  bool has_column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
};

Table read_csv(const std::filesystem::path& path);

enum class Kind { kKeepRateCurve, kRobustness, kSavings };

Kind kind_from_name(const std::string& name);
std::string kind_name(Kind kind);

/// Renders the CSV into a deterministic SVG (no timestamps, fixed number
/// formatting). Required columns per kind:
///   keep_rate_curve: keep_rate, top1_mean
///   robustness:      eval_rate, green, blue, purple
///   savings:         n_patches, kept, relative_theoretical,
///                    relative_empirical
std::string render_svg(const Table& table, Kind kind);

void emit_plot(const std::filesystem::path& csv_path, Kind kind,
               const std::filesystem::path& svg_path);

}  // namespace patchdrop::plot
