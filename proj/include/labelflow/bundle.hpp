#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace labelflow {

struct ZipEntry {
  std::string name;
  std::string data;
  friend bool operator==(const ZipEntry&, const ZipEntry&) = default;
};

/// Uncompressed zip archive. Timestamps are fixed at 1980-01-01 so equal
/// entries give equal bytes.
std::string write_zip(const std::vector<ZipEntry>& entries);
/// Reads archives written by write_zip; throws UnreadableSource on anything
/// else or on a checksum mismatch.
std::vector<ZipEntry> read_zip(std::string_view bytes);

std::uint32_t crc32_of(std::string_view bytes);

struct BundleOptions {
  std::optional<std::uint64_t> seed;
};

/// Packs a workflow file, the dataset its binding names and a manifest into
/// one archive. The bundled workflow's binding points inside the archive.
std::vector<ZipEntry> make_bundle(const std::filesystem::path& workflowPath, const BundleOptions& options = {});

}  // namespace labelflow
