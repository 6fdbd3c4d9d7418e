#pragma once

#include <Eigen/Dense>

#include "labelflow/blackboard.hpp"

namespace labelflow {

/// Stacks the numeric content of every object. Throws NonNumericContent for
/// text and DimensionMismatch for ragged vectors.
Eigen::MatrixXd content_matrix(const DataObjectList& objects);

/// Truncated SVD of mean-centred data. Each component is signed so its
/// largest-magnitude loading is positive.
struct SvdProjection {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;  // d x k, orthonormal columns

  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;
};

/// Throws KOutOfRange unless 1 <= k <= d.
SvdProjection fit_svd(const Eigen::MatrixXd& X, int k);

FeatureTable extract_svd_features(const DataObjectList& objects, int k);

/// Raw numeric content as features (initial features state).
FeatureTable raw_features(const DataObjectList& objects);

}  // namespace labelflow
