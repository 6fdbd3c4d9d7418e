#include "labelflow/bundle.hpp"

#include <fnmatch.h>
#include <zlib.h>

#include <algorithm>
#include <json.hpp>
#include <limits>

#include "labelflow/errors.hpp"
#include "labelflow/ingest.hpp"
#include "labelflow/workflow.hpp"

namespace labelflow {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50, kCentralSig = 0x02014b50, kEndSig = 0x06054b50;
constexpr std::uint16_t kVersion = 20, kUtf8Flag = 0x0800, kDosDate = (0 << 9) | (1 << 5) | 1;

void put16(std::string& out, std::uint16_t v) {
  out += char(v & 0xff);
  out += char(v >> 8);
}

void put32(std::string& out, std::uint32_t v) {
  put16(out, std::uint16_t(v & 0xffff));
  put16(out, std::uint16_t(v >> 16));
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw UnreadableSource("zip: truncated archive");
  }
  std::uint16_t u16() {
    need(2);
    const auto b = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    pos += 2;
    return std::uint16_t(b[0] | b[1] << 8);
  }
  std::uint32_t u32() {
    const std::uint32_t lo = u16();
    return lo | std::uint32_t(u16()) << 16;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  while (!bytes.empty()) {
    const auto n = std::min<std::size_t>(bytes.size(), std::numeric_limits<uInt>::max());
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), uInt(n));
    bytes.remove_prefix(n);
  }
  return std::uint32_t(crc);
}

std::string write_zip(const std::vector<ZipEntry>& entries) {
  std::string out, central;
  for (const auto& e : entries) {
    if (e.data.size() >= 0xffffffffu || out.size() >= 0xffffffffu || e.name.size() > 0xffff)
      throw InvalidConfig("zip: entry '" + e.name + "' too large for a plain archive");
    const std::uint32_t crc = crc32_of(e.data), size = std::uint32_t(e.data.size());
    const std::uint32_t offset = std::uint32_t(out.size());

    put32(out, kLocalSig);
    put16(out, kVersion);
    put16(out, kUtf8Flag);
    put16(out, 0);  // stored
    put16(out, 0);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, std::uint16_t(e.name.size()));
    put16(out, 0);
    out += e.name;
    out += e.data;

    put32(central, kCentralSig);
    put16(central, kVersion);
    put16(central, kVersion);
    put16(central, kUtf8Flag);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, std::uint16_t(e.name.size()));
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, offset);
    central += e.name;
  }
  const std::uint32_t cdOffset = std::uint32_t(out.size());
  out += central;
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, std::uint16_t(entries.size()));
  put16(out, std::uint16_t(entries.size()));
  put32(out, std::uint32_t(central.size()));
  put32(out, cdOffset);
  put16(out, 0);
  return out;
}

std::vector<ZipEntry> read_zip(std::string_view bytes) {
  std::vector<ZipEntry> entries;
  Reader r{bytes};
  while (r.pos + 4 <= bytes.size()) {
    const std::size_t start = r.pos;
    if (r.u32() != kLocalSig) {
      r.pos = start;
      break;
    }
    r.u16();
    const std::uint16_t flags = r.u16(), method = r.u16();
    r.u16();
    r.u16();
    const std::uint32_t crc = r.u32(), csize = r.u32(), usize = r.u32();
    const std::uint16_t nameLen = r.u16(), extraLen = r.u16();
    if (method != 0 || (flags & 0x08) || csize != usize) throw UnreadableSource("zip: only stored entries are supported");
    ZipEntry e;
    e.name = std::string(r.take(nameLen));
    r.take(extraLen);
    e.data = std::string(r.take(csize));
    if (crc32_of(e.data) != crc) throw UnreadableSource("zip: checksum mismatch in '" + e.name + "'");
    entries.push_back(std::move(e));
  }
  if (r.u32() != kCentralSig && !entries.empty()) throw UnreadableSource("zip: missing central directory");
  return entries;
}

std::vector<ZipEntry> make_bundle(const fs::path& workflowPath, const BundleOptions& options) {
  const std::string text = read_file(workflowPath);
  WorkflowGraph graph = parse_workflow(text);

  std::vector<ZipEntry> entries;
  nlohmann::ordered_json manifest;
  manifest["format"] = "labelflow-bundle";
  manifest["version"] = 1;
  manifest["workflow"] = "workflow.json";

  if (graph.datasetBinding) {
    auto& b = *graph.datasetBinding;
    fs::path source = b.source;
    if (source.is_relative()) source = workflowPath.parent_path() / source;
    const std::string inside = "data/" + source.filename().string();
    if (b.format == DatasetBinding::Format::ImageDirectory) {
      const std::string pattern = b.glob.value_or("*.png");
      std::vector<std::string> names;
      if (!fs::is_directory(source)) throw UnreadableSource(source.string() + ": not a directory");
      for (const auto& f : fs::directory_iterator(source))
        if (f.is_regular_file() && fnmatch(pattern.c_str(), f.path().filename().c_str(), 0) == 0)
          names.push_back(f.path().filename().string());
      std::sort(names.begin(), names.end());
      for (const auto& n : names) entries.push_back({inside + "/" + n, read_file(source / n)});
    } else {
      entries.push_back({inside, read_file(source)});
    }
    b.source = inside;
    manifest["dataset"] = inside;
  }
  if (options.seed) manifest["config"]["seed"] = *options.seed;

  entries.insert(entries.begin(), {"workflow.json", serialize_workflow(graph)});
  entries.insert(entries.begin(), {"manifest.json", manifest.dump(2) + "\n"});
  return entries;
}

}  // namespace labelflow
