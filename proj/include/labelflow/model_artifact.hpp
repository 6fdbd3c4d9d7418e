#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "labelflow/registry.hpp"

namespace labelflow {

/// Shape-checked exact equality for dense Eigen expressions.
template <typename DerivedA, typename DerivedB>
bool same_matrix(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.derived().array() == b.derived().array()).all();
}

/// Softmax weights: one row per class, the last column is the bias.
struct LogRegParameters {
  Eigen::MatrixXd weights;

  friend bool operator==(const LogRegParameters& a, const LogRegParameters& b) {
    return same_matrix(a.weights, b.weights);
  }
};

/// Flattened CART tree. Internal nodes send x[feature] <= threshold left.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> probabilities;  // leaves only, aligned with classList

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct TreeParameters {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  friend bool operator==(const TreeParameters&, const TreeParameters&) = default;
};

/// Label propagation keeps the training points and the converged label
/// scores so it can answer for stored rows exactly and for new rows by
/// kernel-weighted neighbours.
struct PropagationParameters {
  Eigen::MatrixXd points;  // n x d
  Eigen::MatrixXd scores;  // n x C, unnormalized propagation output
  double bandwidth = 1.0;
  int kNeighbors = 10;
  int iterations = 0;

  friend bool operator==(const PropagationParameters& a, const PropagationParameters& b) {
    return same_matrix(a.points, b.points) && same_matrix(a.scores, b.scores) && a.bandwidth == b.bandwidth &&
           a.kNeighbors == b.kNeighbors && a.iterations == b.iterations;
  }
};

using ModelParameters = std::variant<std::monostate, LogRegParameters, TreeParameters, PropagationParameters>;

struct ModelArtifact {
  std::string key;
  ModelKind kind = ModelKind::LogisticRegression;
  std::vector<std::string> classList;
  ModelParameters parameters;
  bool trained = false;

  friend bool operator==(const ModelArtifact&, const ModelArtifact&) = default;
};

using ModelMap = std::map<std::string, ModelArtifact>;

}  // namespace labelflow
