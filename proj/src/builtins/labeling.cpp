#include "labelflow/builtins/labeling.hpp"

#include "labelflow/builtins/classifiers.hpp"
#include "labelflow/errors.hpp"

namespace labelflow {

LabelMap default_label(const ModelArtifact& model, const FeatureTable& features, const Samples& samples,
                       const LabelMap& labels) {
  if (!model.trained) throw UntrainedModel("model \"" + model.key + "\" is not trained");
  std::vector<std::string> open;
  for (const auto& uuid : samples.uuids) {
    auto it = labels.find(uuid);
    if (it != labels.end() && it->second.status != LabelStatus::Unlabeled) continue;
    open.push_back(uuid);
  }
  LabelMap out;
  if (open.empty()) return out;
  const Eigen::MatrixXd P = predict_proba(model, features.gather(open));
  for (std::size_t i = 0; i < open.size(); ++i) {
    // classList is sorted, so the lowest index is the lexicographically first
    const int c = argmax(P.row(static_cast<Eigen::Index>(i)));
    out[open[i]] = LabelRecord{open[i], model.classList[c], LabelStatus::Default, std::nullopt};
  }
  return out;
}

namespace {

std::size_t human_count(const DataObjectList& objects, const LabelMap& labels) {
  std::size_t n = 0;
  for (const auto& o : objects) {
    auto it = labels.find(o.uuid);
    if (it != labels.end() && it->second.status == LabelStatus::HumanLabeled) ++n;
  }
  return n;
}

}  // namespace

bool stoppage_all_labeled(const DataObjectList& objects, const LabelMap& labels) {
  return human_count(objects, labels) == objects.size();
}

bool stoppage_rate(const DataObjectList& objects, const LabelMap& labels, double rate) {
  if (objects.empty()) return true;
  return static_cast<double>(human_count(objects, labels)) / static_cast<double>(objects.size()) >= rate;
}

}  // namespace labelflow
