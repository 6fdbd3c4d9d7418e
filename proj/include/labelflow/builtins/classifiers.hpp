#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <string>
#include <vector>

#include "labelflow/blackboard.hpp"

namespace labelflow {

/// Feature rows and class indices of the human-labeled records. classList is
/// the sorted set of observed categories.
struct TrainingSet {
  std::vector<std::string> uuids;
  Eigen::MatrixXd X;
  std::vector<int> y;
  std::vector<std::string> classList;
};

/// Throws InsufficientLabels when fewer than `minClasses` categories are
/// observed, MissingFeatures when a labeled object has no feature row.
TrainingSet collect_training_set(const FeatureTable& features, const LabelMap& labels, int minClasses);

// --- logistic regression

struct LogRegConfig {
  double learningRate = 0.1;
  double l2 = 1e-3;
  int epochs = 200;
};

/// Mean cross-entropy plus (l2/2)*||W||^2 and its gradient. W is C x (d+1)
/// with the bias in the last column; y holds class indices.
double logreg_loss(const Eigen::MatrixXd& W, const Eigen::MatrixXd& X, const std::vector<int>& y, double l2,
                   Eigen::MatrixXd* gradient = nullptr);

struct LogRegFit {
  ModelArtifact model;
  std::vector<double> loss;  // before each epoch, then the final value
};

LogRegFit fit_logreg(const TrainingSet& data, const LogRegConfig& config, std::uint64_t seed);
ModelArtifact train_logreg(const FeatureTable& features, const LabelMap& labels, const LogRegConfig& config,
                           std::uint64_t seed);

// --- decision tree

struct TreeConfig {
  int maxDepth = 0;  // 0 = unlimited
  int minLeaf = 1;
};

ModelArtifact fit_tree(const TrainingSet& data, const TreeConfig& config);
ModelArtifact train_tree(const FeatureTable& features, const LabelMap& labels, const TreeConfig& config);

// --- label propagation

struct PropagationConfig {
  double alpha = 0.99;
  int kNeighbors = 10;
  double tol = 1e-6;
  int maxIter = 1000;
};

/// Symmetrically normalized mutual-kNN affinity D^-1/2 W D^-1/2 with
/// Gaussian weights; `bandwidth` receives the median kNN distance.
Eigen::SparseMatrix<double> normalized_affinity(const Eigen::MatrixXd& X, int kNeighbors, double* bandwidth = nullptr);

/// Iterates F <- alpha*S*F + (1-alpha)*Y from F = Y until the largest change
/// is below tol or maxIter iterations ran.
Eigen::MatrixXd propagate(const Eigen::SparseMatrix<double>& S, const Eigen::MatrixXd& Y, double alpha, double tol,
                          int maxIter, int* iterations = nullptr);

ModelArtifact train_label_propagation(const FeatureTable& features, const LabelMap& labels,
                                      const PropagationConfig& config);

// --- prediction

/// Class distributions, one row per row of X, columns aligned with classList.
/// Throws UntrainedModel.
Eigen::MatrixXd predict_proba(const ModelArtifact& model, const Eigen::MatrixXd& X);

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& p);

/// Row-normalizes in place; all-zero rows become uniform.
void normalize_rows(Eigen::MatrixXd& P);

}  // namespace labelflow
