#include "labelflow/blackboard.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "labelflow/errors.hpp"

namespace labelflow {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<double>* numeric_content(const DataObject& obj) noexcept {
  if (const auto* v = std::get_if<VectorContent>(&obj.content)) return &v->values;
  if (const auto* img = std::get_if<ImageContent>(&obj.content)) return &img->gray;
  return nullptr;
}

std::string_view to_string(LabelStatus s) noexcept {
  switch (s) {
    case LabelStatus::Unlabeled: return "unlabeled";
    case LabelStatus::Default: return "default";
    case LabelStatus::HumanLabeled: return "humanLabeled";
  }
  return "unlabeled";
}

std::optional<LabelStatus> parse_label_status(std::string_view text) noexcept {
  if (text == "unlabeled") return LabelStatus::Unlabeled;
  if (text == "default") return LabelStatus::Default;
  if (text == "humanLabeled") return LabelStatus::HumanLabeled;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// FeatureTable

FeatureTable::FeatureTable(std::vector<std::string> uuids, Eigen::MatrixXd values)
    : uuids_(std::move(uuids)), values_(std::move(values)) {
  if (static_cast<Eigen::Index>(uuids_.size()) != values_.rows())
    throw InvariantViolation("feature table has " + std::to_string(uuids_.size()) + " uuids but " +
                             std::to_string(values_.rows()) + " rows");
  index_.reserve(uuids_.size());
  for (Eigen::Index i = 0; i < values_.rows(); ++i) {
    if (!index_.emplace(uuids_[i], i).second)
      throw InvariantViolation("duplicate feature row for " + uuids_[i]);
  }
}

FeatureTable FeatureTable::from_rows(std::vector<std::string> uuids, const std::vector<std::vector<double>>& rows) {
  if (uuids.size() != rows.size()) throw InvariantViolation("feature uuids and rows differ in count");
  const std::size_t d = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d)
      throw InvariantViolation("feature row for " + uuids[i] + " has length " + std::to_string(rows[i].size()) +
                               ", expected " + std::to_string(d));
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return FeatureTable(std::move(uuids), std::move(m));
}

std::optional<Eigen::Index> FeatureTable::row_of(const std::string& uuid) const {
  auto it = index_.find(uuid);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::MatrixXd FeatureTable::gather(std::span<const std::string> uuids) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(uuids.size()), dimension());
  for (std::size_t i = 0; i < uuids.size(); ++i) {
    auto row = row_of(uuids[i]);
    if (!row) throw MissingFeatures("no feature row for " + uuids[i]);
    out.row(static_cast<Eigen::Index>(i)) = values_.row(*row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Board

StateValue default_state(StateName name) {
  switch (name) {
    case StateName::DataObjects: return DataObjectList{};
    case StateName::Labels: return LabelMap{};
    case StateName::Samples: return Samples{};
    case StateName::Features: return FeatureTable{};
    case StateName::Model: return ModelMap{};
    case StateName::Categories: return Categories{};
    case StateName::Stop: return false;
  }
  return false;
}

namespace {

const std::array<std::shared_ptr<const StateValue>, kStateCount>& defaults() {
  static const auto table = [] {
    std::array<std::shared_ptr<const StateValue>, kStateCount> t;
    for (auto s : kAllStates) t[index_of(s)] = std::make_shared<const StateValue>(default_state(s));
    return t;
  }();
  return table;
}

template <StateName S>
const state_type_t<S>& as(const StateValue& v) {
  return std::get<static_cast<std::size_t>(S)>(v);
}

}  // namespace

const StateValue& BoardSnapshot::get(StateName name) const {
  const auto& p = states[index_of(name)];
  return p ? *p : *defaults()[index_of(name)];
}

bool operator==(const BoardSnapshot& a, const BoardSnapshot& b) {
  if (a.versions != b.versions) return false;
  for (auto s : kAllStates) {
    const auto& pa = a.states[index_of(s)];
    const auto& pb = b.states[index_of(s)];
    if (pa == pb) continue;
    if (!(a.get(s) == b.get(s))) return false;
  }
  return true;
}

Blackboard::Blackboard() : states_(defaults()) {}

std::shared_ptr<const StateValue> Blackboard::get_state(StateName name) const { return states_[index_of(name)]; }

void Blackboard::validate(StateName name, const StateValue& value) const {
  if (value.index() != index_of(name))
    throw InvariantViolation("value written to " + std::string(to_string(name)) + " has the wrong type");

  const auto& objects = as<StateName::DataObjects>(*states_[index_of(StateName::DataObjects)]);
  const auto& categories = as<StateName::Categories>(*states_[index_of(StateName::Categories)]).names;

  std::unordered_set<std::string> known;
  auto load_known = [&](const DataObjectList& list) {
    known.clear();
    for (const auto& o : list) known.insert(o.uuid);
  };
  auto require_known = [&](const std::string& uuid, std::string_view what) {
    if (!known.contains(uuid))
      throw InvariantViolation(std::string(what) + " references unknown data object " + uuid);
  };
  auto check_labels = [&](const LabelMap& labels, const std::vector<std::string>& cats) {
    for (const auto& [key, rec] : labels) {
      if (key != rec.uuid) throw InvariantViolation("label keyed " + key + " carries uuid " + rec.uuid);
      require_known(key, "label");
      if (rec.status == LabelStatus::Unlabeled) {
        if (rec.category) throw InvariantViolation("unlabeled record " + key + " has a category");
      } else {
        if (!rec.category) throw InvariantViolation("labeled record " + key + " has no category");
        if (std::find(cats.begin(), cats.end(), *rec.category) == cats.end())
          throw InvariantViolation("category \"" + *rec.category + "\" of " + key + " is not in categories");
      }
    }
  };

  switch (name) {
    case StateName::DataObjects: {
      const auto& list = as<StateName::DataObjects>(value);
      std::unordered_set<std::string> seen;
      std::optional<std::size_t> dim;
      for (const auto& o : list) {
        if (!seen.insert(o.uuid).second) throw InvariantViolation("duplicate data object uuid " + o.uuid);
        if (const auto* v = std::get_if<VectorContent>(&o.content)) {
          if (dim && *dim != v->values.size())
            throw InvariantViolation("vector content of " + o.uuid + " has dimension " +
                                     std::to_string(v->values.size()) + ", expected " + std::to_string(*dim));
          dim = v->values.size();
        }
      }
      // The other states must stay referentially intact.
      load_known(list);
      for (const auto& [key, rec] : as<StateName::Labels>(*states_[index_of(StateName::Labels)]))
        require_known(key, "label");
      for (const auto& u : as<StateName::Samples>(*states_[index_of(StateName::Samples)]).uuids)
        require_known(u, "sample");
      for (const auto& u : as<StateName::Features>(*states_[index_of(StateName::Features)]).uuids())
        require_known(u, "feature row");
      break;
    }
    case StateName::Labels:
      load_known(objects);
      check_labels(as<StateName::Labels>(value), categories);
      break;
    case StateName::Samples:
      load_known(objects);
      for (const auto& u : as<StateName::Samples>(value).uuids) require_known(u, "sample");
      break;
    case StateName::Features: {
      const auto& table = as<StateName::Features>(value);
      load_known(objects);
      for (const auto& u : table.uuids()) require_known(u, "feature row");
      if (!table.matrix().allFinite()) throw InvariantViolation("feature values must be finite");
      break;
    }
    case StateName::Model:
      for (const auto& [key, model] : as<StateName::Model>(value)) {
        if (key != model.key) throw InvariantViolation("model keyed " + key + " carries key " + model.key);
        if (model.trained &&
            (std::holds_alternative<std::monostate>(model.parameters) || model.classList.empty()))
          throw InvariantViolation("trained model " + key + " lacks parameters or classes");
      }
      break;
    case StateName::Categories: {
      const auto& names = as<StateName::Categories>(value).names;
      std::set<std::string> seen;
      for (const auto& c : names)
        if (!seen.insert(c).second) throw InvariantViolation("duplicate category " + c);
      load_known(objects);
      check_labels(as<StateName::Labels>(*states_[index_of(StateName::Labels)]), names);
      break;
    }
    case StateName::Stop:
      break;
  }
}

std::uint64_t Blackboard::set_state(StateName name, StateValue value) {
  validate(name, value);
  auto shared = std::make_shared<const StateValue>(std::move(value));
  const auto i = index_of(name);
  states_[i] = shared;
  const auto version = ++versions_[i];
  deltas_.push_back({name, version, std::move(shared)});
  return version;
}

BoardSnapshot Blackboard::snapshot() const {
  BoardSnapshot snap;
  snap.states = states_;
  snap.versions = versions_;
  return snap;
}

void Blackboard::restore(const BoardSnapshot& snap) {
  for (auto s : kAllStates) {
    const auto i = index_of(s);
    states_[i] = snap.states[i] ? snap.states[i] : defaults()[i];
  }
  versions_ = snap.versions;
  deltas_.clear();
}

BoardSnapshot Blackboard::replay(BoardSnapshot initial, std::span<const DeltaRecord> deltas) {
  for (const auto& d : deltas) {
    const auto i = index_of(d.state);
    if (d.version != initial.versions[i] + 1)
      throw InvariantViolation("delta for " + std::string(to_string(d.state)) + " jumps from version " +
                               std::to_string(initial.versions[i]) + " to " + std::to_string(d.version));
    initial.states[i] = d.value;
    initial.versions[i] = d.version;
  }
  return initial;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  ordered_json data = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return ordered_json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw InvariantViolation("matrix payload size mismatch");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

}  // namespace

ordered_json to_json(const DataObject& obj) {
  ordered_json content;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, VectorContent>) {
          content = {{"kind", "vector"}, {"values", c.values}};
        } else if constexpr (std::is_same_v<T, TextContent>) {
          content = {{"kind", "text"}, {"text", c.text}};
        } else {
          content = {{"kind", "image"}, {"ref", c.ref}, {"width", c.width}, {"height", c.height}, {"gray", c.gray}};
        }
      },
      obj.content);
  ordered_json out{{"uuid", obj.uuid}, {"content", std::move(content)}};
  if (!obj.display.empty()) {
    ordered_json display = ordered_json::object();
    for (const auto& [k, v] : obj.display) display[k] = v;
    out["display"] = std::move(display);
  }
  return out;
}

DataObject data_object_from_json(const json& j) {
  DataObject obj;
  obj.uuid = j.at("uuid").get<std::string>();
  const auto& c = j.at("content");
  const auto kind = c.at("kind").get<std::string>();
  if (kind == "vector") {
    obj.content = VectorContent{c.at("values").get<std::vector<double>>()};
  } else if (kind == "text") {
    obj.content = TextContent{c.at("text").get<std::string>()};
  } else if (kind == "image") {
    obj.content = ImageContent{c.at("ref").get<std::string>(), c.value("width", 0), c.value("height", 0),
                               c.value("gray", std::vector<double>{})};
  } else {
    throw InvariantViolation("unknown content kind \"" + kind + "\"");
  }
  if (j.contains("display")) obj.display = j.at("display").get<std::map<std::string, std::string>>();
  return obj;
}

ordered_json to_json(const LabelRecord& rec) {
  ordered_json out{{"uuid", rec.uuid}, {"status", to_string(rec.status)}};
  if (rec.category) out["category"] = *rec.category;
  if (rec.freeText) out["freeText"] = *rec.freeText;
  return out;
}

LabelRecord label_record_from_json(const json& j) {
  LabelRecord rec;
  rec.uuid = j.at("uuid").get<std::string>();
  const auto status = j.at("status").get<std::string>();
  auto parsed = parse_label_status(status);
  if (!parsed) throw InvariantViolation("unknown label status \"" + status + "\"");
  rec.status = *parsed;
  if (j.contains("category")) rec.category = j.at("category").get<std::string>();
  if (j.contains("freeText")) rec.freeText = j.at("freeText").get<std::string>();
  return rec;
}

ordered_json to_json(const ModelArtifact& model) {
  ordered_json params = nullptr;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LogRegParameters>) {
          params = {{"weights", matrix_to_json(p.weights)}};
        } else if constexpr (std::is_same_v<T, TreeParameters>) {
          ordered_json nodes = ordered_json::array();
          for (const auto& n : p.nodes) {
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"probabilities", n.probabilities}});
          }
          params = {{"nodes", std::move(nodes)}};
        } else if constexpr (std::is_same_v<T, PropagationParameters>) {
          params = {{"points", matrix_to_json(p.points)},
                    {"scores", matrix_to_json(p.scores)},
                    {"bandwidth", p.bandwidth},
                    {"kNeighbors", p.kNeighbors},
                    {"iterations", p.iterations}};
        }
      },
      model.parameters);
  return ordered_json{{"key", model.key},
                      {"kind", to_string(model.kind)},
                      {"classList", model.classList},
                      {"trained", model.trained},
                      {"parameters", std::move(params)}};
}

ModelArtifact model_artifact_from_json(const json& j) {
  ModelArtifact m;
  m.key = j.at("key").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  auto parsed = parse_model_kind(kind);
  if (!parsed) throw InvariantViolation("unknown model kind \"" + kind + "\"");
  m.kind = *parsed;
  m.classList = j.at("classList").get<std::vector<std::string>>();
  m.trained = j.at("trained").get<bool>();
  const auto& p = j.at("parameters");
  if (p.is_null()) return m;
  switch (m.kind) {
    case ModelKind::LogisticRegression:
      m.parameters = LogRegParameters{matrix_from_json(p.at("weights"))};
      break;
    case ModelKind::DecisionTree: {
      TreeParameters tree;
      for (const auto& n : p.at("nodes")) {
        tree.nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(), n.at("left").get<int>(),
                              n.at("right").get<int>(), n.at("probabilities").get<std::vector<double>>()});
      }
      m.parameters = std::move(tree);
      break;
    }
    case ModelKind::LabelPropagation:
      m.parameters = PropagationParameters{matrix_from_json(p.at("points")), matrix_from_json(p.at("scores")),
                                           p.at("bandwidth").get<double>(), p.at("kNeighbors").get<int>(),
                                           p.at("iterations").get<int>()};
      break;
  }
  return m;
}

ordered_json state_to_json(const StateValue& value) {
  return std::visit(
      [](const auto& v) -> ordered_json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DataObjectList>) {
          ordered_json out = ordered_json::array();
          for (const auto& o : v) out.push_back(to_json(o));
          return out;
        } else if constexpr (std::is_same_v<T, LabelMap>) {
          ordered_json out = ordered_json::array();
          for (const auto& [_, rec] : v) out.push_back(to_json(rec));
          return out;
        } else if constexpr (std::is_same_v<T, Samples>) {
          return v.uuids;
        } else if constexpr (std::is_same_v<T, FeatureTable>) {
          ordered_json rows = ordered_json::array();
          for (Eigen::Index r = 0; r < v.size(); ++r) {
            ordered_json row = ordered_json::array();
            for (Eigen::Index c = 0; c < v.dimension(); ++c) row.push_back(v.matrix()(r, c));
            rows.push_back(std::move(row));
          }
          return ordered_json{{"uuids", v.uuids()}, {"dimension", v.dimension()}, {"values", std::move(rows)}};
        } else if constexpr (std::is_same_v<T, ModelMap>) {
          ordered_json out = ordered_json::object();
          for (const auto& [key, m] : v) out[key] = to_json(m);
          return out;
        } else if constexpr (std::is_same_v<T, Categories>) {
          return v.names;
        } else {
          return v;
        }
      },
      value);
}

StateValue state_from_json(StateName name, const json& j) {
  switch (name) {
    case StateName::DataObjects: {
      DataObjectList list;
      for (const auto& o : j) list.push_back(data_object_from_json(o));
      return list;
    }
    case StateName::Labels: {
      LabelMap labels;
      for (const auto& r : j) {
        auto rec = label_record_from_json(r);
        auto uuid = rec.uuid;
        labels.emplace(std::move(uuid), std::move(rec));
      }
      return labels;
    }
    case StateName::Samples:
      return Samples{j.get<std::vector<std::string>>()};
    case StateName::Features: {
      auto uuids = j.at("uuids").get<std::vector<std::string>>();
      const auto dim = j.at("dimension").get<Eigen::Index>();
      const auto& rows = j.at("values");
      Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != dim) throw InvariantViolation("feature row length mismatch");
        for (Eigen::Index c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][c].get<double>();
      }
      return FeatureTable(std::move(uuids), std::move(m));
    }
    case StateName::Model: {
      ModelMap models;
      for (const auto& [key, m] : j.items()) models.emplace(key, model_artifact_from_json(m));
      return models;
    }
    case StateName::Categories:
      return Categories{j.get<std::vector<std::string>>()};
    case StateName::Stop:
      return j.get<bool>();
  }
  return false;
}

ordered_json to_json(const BoardSnapshot& snap) {
  ordered_json versions = ordered_json::object();
  ordered_json states = ordered_json::object();
  for (auto s : kAllStates) {
    versions[std::string(to_string(s))] = snap.version(s);
    states[std::string(to_string(s))] = state_to_json(snap.get(s));
  }
  return ordered_json{{"versions", std::move(versions)}, {"states", std::move(states)}};
}

BoardSnapshot snapshot_from_json(const json& j) {
  BoardSnapshot snap;
  for (auto s : kAllStates) {
    const std::string name(to_string(s));
    snap.versions[index_of(s)] = j.at("versions").at(name).get<std::uint64_t>();
    snap.states[index_of(s)] = std::make_shared<const StateValue>(state_from_json(s, j.at("states").at(name)));
  }
  return snap;
}

ordered_json to_json(const DeltaRecord& delta) {
  return ordered_json{
      {"stateName", to_string(delta.state)}, {"version", delta.version}, {"value", state_to_json(*delta.value)}};
}

DeltaRecord delta_from_json(const json& j) {
  const auto name = j.at("stateName").get<std::string>();
  auto state = parse_state_name(name);
  if (!state) throw InvariantViolation("unknown state name \"" + name + "\"");
  return {*state, j.at("version").get<std::uint64_t>(),
          std::make_shared<const StateValue>(state_from_json(*state, j.at("value")))};
}

}  // namespace labelflow
