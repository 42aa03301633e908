#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hdsurv {

enum class RenderKind { Heatmap, Line, MeanSd };

RenderKind parse_render_kind(std::string_view name);

/// Tab-separated table; lines starting with '#' are skipped.
struct TsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

TsvTable read_tsv(const std::filesystem::path& path);
TsvTable parse_tsv(const std::string& text, const std::string& source);

/**
 * Static SVG renderings of pipeline tables.
 *
 * Heatmap: first column holds row labels, the remaining cells are values,
 * drawn on a blue-white-red scale symmetric around 0.
 * Line: y from the second column (or the column named `y`) against row order.
 * MeanSd: `mean` and `sd` columns as a polyline inside a +-sd band; rows with
 * NA means are skipped.
 * Malformed tables raise ParseError.
 */
std::string render_svg(const TsvTable& table, RenderKind kind);
void render_svg_file(const std::filesystem::path& input, RenderKind kind, const std::filesystem::path& output);

}  // namespace hdsurv
