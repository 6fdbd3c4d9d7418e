#include "labelflow/builtins/features.hpp"

#include <Eigen/SVD>

#include "labelflow/errors.hpp"

namespace labelflow {

Eigen::MatrixXd content_matrix(const DataObjectList& objects) {
  if (objects.empty()) return {};
  std::size_t d = 0;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto* values = numeric_content(objects[i]);
    if (!values) throw NonNumericContent("object " + objects[i].uuid + " has text content");
    if (i == 0) d = values->size();
    if (values->size() != d)
      throw DimensionMismatch("object " + objects[i].uuid + " has " + std::to_string(values->size()) +
                              " values, expected " + std::to_string(d));
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(objects.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < objects.size(); ++i)
    X.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(numeric_content(objects[i])->data(), static_cast<Eigen::Index>(d));
  return X;
}

Eigen::MatrixXd SvdProjection::transform(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean.size())
    throw DimensionMismatch("projection expects " + std::to_string(mean.size()) + " columns, got " +
                            std::to_string(X.cols()));
  return (X.rowwise() - mean) * components;
}

SvdProjection fit_svd(const Eigen::MatrixXd& X, int k) {
  const Eigen::Index d = X.cols();
  if (k < 1 || k > d)
    throw KOutOfRange("k = " + std::to_string(k) + " is outside [1, " + std::to_string(d) + "]");
  SvdProjection p;
  p.mean = X.colwise().mean();
  const Eigen::MatrixXd centred = X.rowwise() - p.mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  const Eigen::MatrixXd& V = svd.matrixV();
  p.components = Eigen::MatrixXd::Zero(d, k);
  // thin V has min(n, d) columns; components beyond the data rank stay zero
  const Eigen::Index available = std::min<Eigen::Index>(k, V.cols());
  p.components.leftCols(available) = V.leftCols(available);
  for (Eigen::Index c = 0; c < available; ++c) {
    Eigen::Index at = 0;
    p.components.col(c).cwiseAbs().maxCoeff(&at);
    if (p.components(at, c) < 0) p.components.col(c) *= -1.0;
  }
  return p;
}

FeatureTable extract_svd_features(const DataObjectList& objects, int k) {
  const Eigen::MatrixXd X = content_matrix(objects);
  if (objects.empty()) {
    if (k < 1) throw KOutOfRange("k must be at least 1");
    return {};
  }
  const SvdProjection p = fit_svd(X, k);
  std::vector<std::string> uuids;
  uuids.reserve(objects.size());
  for (const auto& o : objects) uuids.push_back(o.uuid);
  return FeatureTable(std::move(uuids), p.transform(X));
}

FeatureTable raw_features(const DataObjectList& objects) {
  DataObjectList numeric;
  for (const auto& o : objects)
    if (numeric_content(o)) numeric.push_back(o);
  std::vector<std::string> uuids;
  for (const auto& o : numeric) uuids.push_back(o.uuid);
  return FeatureTable(std::move(uuids), content_matrix(numeric));
}

}  // namespace labelflow
