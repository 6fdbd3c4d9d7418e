#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "labelflow/blackboard.hpp"
#include "labelflow/interaction.hpp"
#include "labelflow/workflow.hpp"

namespace labelflow {

struct IngestedDataset {
  DataObjectList objects;  // source order
  TruthTable truth;        // from labelColumn; empty without one
  std::vector<std::string> categories;  // distinct truth values, sorted
};

/// Loads the objects a binding points at. Relative sources resolve against baseDir.
///
/// Without an idColumn, uuids are a hash of the row content, so identical rows
/// collide and are rejected. Throws UnreadableSource, DimensionMismatch (bad or
/// non-finite numbers, ragged rows; the message names the row) and
/// InvariantViolation (duplicate uuids).
IngestedDataset ingest_dataset(const DatasetBinding& binding, const std::filesystem::path& baseDir = {});

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Decodes a PNG of any color type to 8-bit gray. Throws UnreadableSource.
GrayImage read_png_gray(const std::filesystem::path& path);

/// Header row with `uuid` and `category` columns.
TruthTable read_truth_table(const std::filesystem::path& path);
void write_truth_table(const std::filesystem::path& path, const TruthTable& truth);

/// 16 lowercase hex digits of the FNV-1a hash.
std::string content_uuid(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);  // throws UnreadableSource

}  // namespace labelflow
