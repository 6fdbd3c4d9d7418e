#include "labelflow/ingest.hpp"

#include <fnmatch.h>
#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "labelflow/builtins/rng.hpp"
#include "labelflow/errors.hpp"

namespace labelflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Row = std::vector<std::string>;

// RFC 4180 records; quoted fields may hold commas, quotes and newlines.
std::vector<Row> parse_csv(const std::string& text, const std::string& where) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw UnreadableSource(where + ": unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

std::size_t column_index(const Row& header, const std::string& name, const std::string& where) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw UnreadableSource(where + ": no column '" + name + "'");
  return std::size_t(it - header.begin());
}

/// Tracks uuid uniqueness and the truth table while objects are appended.
struct Collector {
  std::string where;
  IngestedDataset out;
  std::map<std::string, std::string> seen;  // uuid -> row description

  void add(DataObject obj, const std::string& row, const std::optional<std::string>& label) {
    auto [it, fresh] = seen.emplace(obj.uuid, row);
    if (!fresh)
      throw InvariantViolation(where + ": " + row + " duplicates " + it->second + " (uuid " + obj.uuid + ")");
    if (label && !label->empty()) out.truth[obj.uuid] = *label;
    out.objects.push_back(std::move(obj));
  }

  IngestedDataset finish() {
    if (out.objects.empty()) throw UnreadableSource(where + ": no data objects");
    std::set<std::string> cats;
    for (const auto& [uuid, c] : out.truth) cats.insert(c);
    out.categories.assign(cats.begin(), cats.end());
    return std::move(out);
  }
};

void check_dimension(std::optional<std::size_t>& dim, std::size_t n, const std::string& where, const std::string& row) {
  if (!dim) dim = n;
  if (*dim != n)
    throw DimensionMismatch(where + ": " + row + " has " + std::to_string(n) + " values, expected " +
                            std::to_string(*dim));
}

IngestedDataset ingest_csv(const DatasetBinding& b, const fs::path& path) {
  const std::string where = path.string();
  auto rows = parse_csv(read_file(path), where);
  if (rows.empty()) throw UnreadableSource(where + ": missing header row");
  const Row header = rows.front();

  std::optional<std::size_t> idCol, labelCol;
  if (b.idColumn) idCol = column_index(header, *b.idColumn, where);
  if (b.labelColumn) labelCol = column_index(header, *b.labelColumn, where);
  std::vector<std::size_t> content;
  if (b.contentColumns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != idCol && c != labelCol) content.push_back(c);
  } else {
    for (const auto& name : b.contentColumns) content.push_back(column_index(header, name, where));
  }
  if (content.empty()) throw UnreadableSource(where + ": no content columns");

  // a single non-numeric content column is text; everything else must be numbers
  bool text = false;
  if (content.size() == 1 && rows.size() > 1 && content[0] < rows[1].size())
    text = !parse_number(rows[1][content[0]]).has_value();

  Collector col{where, {}, {}};
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const Row& row = rows[r];
    const std::string name = "row " + std::to_string(r);
    if (row.size() != header.size())
      throw DimensionMismatch(where + ": " + name + " has " + std::to_string(row.size()) + " fields, header has " +
                              std::to_string(header.size()));
    DataObject obj;
    std::string key;
    if (text) {
      obj.content = TextContent{row[content[0]]};
      key = row[content[0]];
    } else {
      VectorContent v;
      for (std::size_t c : content) {
        auto x = parse_number(row[c]);
        if (!x) throw DimensionMismatch(where + ": " + name + " column '" + header[c] + "' is not a number");
        if (!std::isfinite(*x))
          throw DimensionMismatch(where + ": " + name + " column '" + header[c] + "' is not finite");
        v.values.push_back(*x);
        key += row[c];
        key += '\x1f';
      }
      obj.content = std::move(v);
    }
    obj.uuid = idCol ? row[*idCol] : content_uuid(key);
    if (obj.uuid.empty()) throw InvariantViolation(where + ": " + name + " has an empty id");
    col.add(std::move(obj), name, labelCol ? std::optional(row[*labelCol]) : std::nullopt);
  }
  return col.finish();
}

ImageContent load_image(const fs::path& file, const std::string& ref) {
  const GrayImage img = read_png_gray(file);
  ImageContent c;
  c.ref = ref;
  c.width = img.width;
  c.height = img.height;
  c.gray.assign(img.pixels.begin(), img.pixels.end());
  return c;
}

std::string display_string(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

IngestedDataset ingest_jsonl(const DatasetBinding& b, const fs::path& path) {
  const std::string where = path.string();
  const std::string id = b.idColumn.value_or("");
  const std::string label = b.labelColumn.value_or("");
  std::istringstream in(read_file(path));
  Collector col{where, {}, {}};
  std::optional<std::size_t> dim;
  std::string line;
  std::size_t r = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string name = "row " + std::to_string(++r);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw UnreadableSource(where + ": " + name + ": " + e.what());
    }
    if (!j.is_object()) throw UnreadableSource(where + ": " + name + " is not an object");

    std::vector<std::string> keys = b.contentColumns;
    if (keys.empty())
      for (const char* k : {"vector", "text", "image"})
        if (j.contains(k)) keys.push_back(k);
    if (keys.empty()) throw UnreadableSource(where + ": " + name + " has no vector, text or image field");

    DataObject obj;
    json hashed = json::object();
    if (keys.size() == 1 && keys[0] == "image") {
      if (!j["image"].is_string()) throw UnreadableSource(where + ": " + name + " image must be a path");
      const std::string ref = j["image"];
      auto img = load_image(path.parent_path() / ref, ref);
      hashed["image"] = content_uuid(read_file(path.parent_path() / ref));
      check_dimension(dim, img.gray.size(), where, name);
      obj.content = std::move(img);
    } else if (keys.size() == 1 && j.contains(keys[0]) && j[keys[0]].is_string()) {
      obj.content = TextContent{j[keys[0]].get<std::string>()};
      hashed[keys[0]] = j[keys[0]];
    } else {
      VectorContent v;
      for (const auto& k : keys) {
        if (!j.contains(k)) throw UnreadableSource(where + ": " + name + " lacks '" + k + "'");
        const json& field = j[k];
        hashed[k] = field;
        auto take = [&](const json& x) {
          if (!x.is_number()) throw DimensionMismatch(where + ": " + name + " field '" + k + "' is not numeric");
          const double d = x.get<double>();
          if (!std::isfinite(d)) throw DimensionMismatch(where + ": " + name + " field '" + k + "' is not finite");
          v.values.push_back(d);
        };
        if (field.is_array())
          for (const auto& x : field) take(x);
        else
          take(field);
      }
      check_dimension(dim, v.values.size(), where, name);
      obj.content = std::move(v);
    }
    for (const auto& [k, v] : j.items())
      if (k != id && k != label && std::find(keys.begin(), keys.end(), k) == keys.end())
        obj.display[k] = display_string(v);

    if (!id.empty()) {
      if (!j.contains(id)) throw UnreadableSource(where + ": " + name + " lacks id field '" + id + "'");
      obj.uuid = display_string(j[id]);
    } else {
      obj.uuid = content_uuid(hashed.dump());
    }
    std::optional<std::string> truth;
    if (!label.empty() && j.contains(label)) truth = display_string(j[label]);
    col.add(std::move(obj), name, truth);
  }
  return col.finish();
}

IngestedDataset ingest_images(const DatasetBinding& b, const fs::path& dir) {
  const std::string where = dir.string();
  if (!fs::is_directory(dir)) throw UnreadableSource(where + ": not a directory");
  const std::string pattern = b.glob.value_or("*.png");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (fnmatch(pattern.c_str(), name.c_str(), 0) == 0) names.push_back(name);
  }
  std::sort(names.begin(), names.end());

  Collector col{where, {}, {}};
  std::optional<std::size_t> dim;
  for (const auto& name : names) {
    DataObject obj;
    obj.uuid = content_uuid(read_file(dir / name));
    auto img = load_image(dir / name, name);
    check_dimension(dim, img.gray.size(), where, name);
    obj.content = std::move(img);
    col.add(std::move(obj), name, std::nullopt);
  }
  return col.finish();
}

}  // namespace

std::string content_uuid(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableSource("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GrayImage read_png_gray(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw UnreadableSource(path.string() + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  GrayImage out;
  out.width = int(image.width);
  out.height = int(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw UnreadableSource(path.string() + ": " + msg);
  }
  return out;
}

IngestedDataset ingest_dataset(const DatasetBinding& binding, const fs::path& baseDir) {
  fs::path source = binding.source;
  if (source.is_relative() && !baseDir.empty()) source = baseDir / source;
  switch (binding.format) {
    case DatasetBinding::Format::CsvVectors: return ingest_csv(binding, source);
    case DatasetBinding::Format::JsonlObjects: return ingest_jsonl(binding, source);
    case DatasetBinding::Format::ImageDirectory: return ingest_images(binding, source);
  }
  throw UnreadableSource("unknown dataset format");
}

TruthTable read_truth_table(const fs::path& path) {
  const std::string where = path.string();
  auto rows = parse_csv(read_file(path), where);
  if (rows.empty()) throw UnreadableSource(where + ": missing header row");
  const std::size_t u = column_index(rows[0], "uuid", where), c = column_index(rows[0], "category", where);
  TruthTable truth;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size())
      throw UnreadableSource(where + ": row " + std::to_string(r) + " has the wrong number of fields");
    if (!truth.emplace(rows[r][u], rows[r][c]).second)
      throw InvariantViolation(where + ": uuid " + rows[r][u] + " appears twice");
  }
  return truth;
}

void write_truth_table(const fs::path& path, const TruthTable& truth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UnreadableSource("cannot write " + path.string());
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  out << "uuid,category\n";
  for (const auto& [u, c] : truth) out << field(u) << ',' << field(c) << '\n';
}

}  // namespace labelflow
