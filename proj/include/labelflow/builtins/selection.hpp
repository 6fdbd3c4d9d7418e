#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "labelflow/blackboard.hpp"

namespace labelflow {

/// True for records a selection may still hand out. Default labels are
/// model guesses awaiting confirmation, so they count as open.
inline bool awaiting_human(const LabelRecord* rec) {
  return !rec || rec->status != LabelStatus::HumanLabeled;
}

Samples select_random(const DataObjectList& objects, const LabelMap& labels, int batchSize, std::uint64_t seed);

struct KMeansResult {
  Eigen::MatrixXd centroids;        // k x d
  std::vector<int> assignment;      // per row
  std::vector<double> objective;    // after each assignment step
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the assignment is
/// stable or maxIter passes. k is clipped to the row count.
KMeansResult kmeans(const Eigen::MatrixXd& X, int k, std::uint64_t seed, int maxIter = 100);

Samples select_cluster(const FeatureTable& features, const LabelMap& labels, int k, int batchSize,
                       std::uint64_t seed);

enum class UncertaintyCriterion { Entropy, LeastConfidence, SmallestMargin };

std::string_view to_string(UncertaintyCriterion c) noexcept;
std::optional<UncertaintyCriterion> parse_uncertainty_criterion(std::string_view text) noexcept;

/// Larger means less certain, for every criterion.
double uncertainty(const Eigen::Ref<const Eigen::RowVectorXd>& p, UncertaintyCriterion c);

Samples select_active(const FeatureTable& features, const LabelMap& labels, const ModelArtifact& model,
                      int batchSize, UncertaintyCriterion criterion);

}  // namespace labelflow
