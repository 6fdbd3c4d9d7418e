#pragma once

#include "labelflow/blackboard.hpp"

namespace labelflow {

/// Model guesses for the sampled objects that are still unlabeled. Returns
/// only the records it changes. Throws UntrainedModel, MissingFeatures.
LabelMap default_label(const ModelArtifact& model, const FeatureTable& features, const Samples& samples,
                       const LabelMap& labels);

/// True iff every object carries a human label.
bool stoppage_all_labeled(const DataObjectList& objects, const LabelMap& labels);

/// True iff the human-labeled fraction reaches `rate`.
bool stoppage_rate(const DataObjectList& objects, const LabelMap& labels, double rate);

}  // namespace labelflow
