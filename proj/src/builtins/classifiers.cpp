#include "labelflow/builtins/classifiers.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "labelflow/builtins/rng.hpp"
#include "labelflow/errors.hpp"

namespace labelflow {

TrainingSet collect_training_set(const FeatureTable& features, const LabelMap& labels, int minClasses) {
  TrainingSet t;
  std::set<std::string> classes;
  for (const auto& [uuid, rec] : labels) {
    if (rec.status != LabelStatus::HumanLabeled || !rec.category) continue;
    if (!features.contains(uuid)) throw MissingFeatures("no feature row for labeled object " + uuid);
    t.uuids.push_back(uuid);
    classes.insert(*rec.category);
  }
  if (static_cast<int>(classes.size()) < minClasses || t.uuids.empty())
    throw InsufficientLabels("training needs human labels from at least " + std::to_string(minClasses) +
                             " categories, found " + std::to_string(classes.size()));
  t.classList.assign(classes.begin(), classes.end());
  t.X = features.gather(t.uuids);
  for (const auto& uuid : t.uuids) {
    const auto& cat = *labels.at(uuid).category;
    t.y.push_back(static_cast<int>(std::lower_bound(t.classList.begin(), t.classList.end(), cat) - t.classList.begin()));
  }
  return t;
}

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
  int best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i)
    if (p(i) > p(best)) best = static_cast<int>(i);
  return best;
}

void normalize_rows(Eigen::MatrixXd& P) {
  for (Eigen::Index r = 0; r < P.rows(); ++r) {
    const double s = P.row(r).sum();
    if (s > 0)
      P.row(r) /= s;
    else
      P.row(r).setConstant(1.0 / static_cast<double>(P.cols()));
  }
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

Eigen::MatrixXd with_bias(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A.leftCols(X.cols()) = X;
  A.col(X.cols()).setOnes();
  return A;
}

/// Row-wise softmax of logits, shifted by the row max for stability.
Eigen::MatrixXd softmax(Eigen::MatrixXd Z) {
  for (Eigen::Index r = 0; r < Z.rows(); ++r) {
    Z.row(r).array() -= Z.row(r).maxCoeff();
    Z.row(r) = Z.row(r).array().exp().matrix();
    Z.row(r) /= Z.row(r).sum();
  }
  return Z;
}

}  // namespace

double logreg_loss(const Eigen::MatrixXd& W, const Eigen::MatrixXd& X, const std::vector<int>& y, double l2,
                   Eigen::MatrixXd* gradient) {
  const Eigen::Index n = X.rows();
  const Eigen::MatrixXd A = with_bias(X);
  const Eigen::MatrixXd Z = A * W.transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = Z.row(i).maxCoeff();
    const double lse = m + std::log((Z.row(i).array() - m).exp().sum());
    loss += lse - Z(i, y[i]);
  }
  loss = loss / static_cast<double>(n) + 0.5 * l2 * W.squaredNorm();
  if (gradient) {
    Eigen::MatrixXd D = softmax(Z);
    for (Eigen::Index i = 0; i < n; ++i) D(i, y[i]) -= 1.0;
    *gradient = D.transpose() * A / static_cast<double>(n) + l2 * W;
  }
  return loss;
}

LogRegFit fit_logreg(const TrainingSet& data, const LogRegConfig& config, std::uint64_t seed) {
  const auto C = static_cast<Eigen::Index>(data.classList.size());
  Rng rng(seed);
  Eigen::MatrixXd W(C, data.X.cols() + 1);
  for (Eigen::Index r = 0; r < W.rows(); ++r)
    for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = rng.uniform(-0.01, 0.01);

  LogRegFit fit;
  Eigen::MatrixXd grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    fit.loss.push_back(logreg_loss(W, data.X, data.y, config.l2, &grad));
    W -= config.learningRate * grad;
  }
  fit.loss.push_back(logreg_loss(W, data.X, data.y, config.l2));
  fit.model.kind = ModelKind::LogisticRegression;
  fit.model.classList = data.classList;
  fit.model.parameters = LogRegParameters{std::move(W)};
  fit.model.trained = true;
  return fit;
}

ModelArtifact train_logreg(const FeatureTable& features, const LabelMap& labels, const LogRegConfig& config,
                           std::uint64_t seed) {
  return fit_logreg(collect_training_set(features, labels, 2), config, seed).model;
}

// ---------------------------------------------------------------------------
// Decision tree

namespace {

double gini(const std::vector<int>& counts, int total) {
  if (total == 0) return 0.0;
  double s = 1.0;
  for (int c : counts) {
    const double p = static_cast<double>(c) / total;
    s -= p * p;
  }
  return s;
}

struct TreeBuilder {
  const TrainingSet& data;
  const TreeConfig& config;
  int classes;
  std::vector<TreeNode> nodes;

  int leaf(const std::vector<int>& counts, int total) {
    TreeNode n;
    n.probabilities.resize(classes);
    for (int c = 0; c < classes; ++c) n.probabilities[c] = static_cast<double>(counts[c]) / total;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  }

  int build(std::vector<int> rows, int depth) {
    const int total = static_cast<int>(rows.size());
    std::vector<int> counts(classes, 0);
    for (int r : rows) ++counts[data.y[r]];
    const double parent = gini(counts, total);
    const bool depth_done = config.maxDepth > 0 && depth >= config.maxDepth;
    if (parent == 0.0 || depth_done || total < 2 * config.minLeaf) return leaf(counts, total);

    // best split: largest impurity decrease, then lowest feature, then lowest threshold
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = -1.0;
    std::vector<std::pair<double, int>> column(rows.size());
    for (Eigen::Index f = 0; f < data.X.cols(); ++f) {
      for (std::size_t i = 0; i < rows.size(); ++i) column[i] = {data.X(rows[i], f), data.y[rows[i]]};
      std::sort(column.begin(), column.end());
      std::vector<int> left(classes, 0);
      std::vector<int> right = counts;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        ++left[column[i].second];
        --right[column[i].second];
        if (column[i].first == column[i + 1].first) continue;
        const int nl = static_cast<int>(i) + 1;
        const int nr = total - nl;
        if (nl < config.minLeaf || nr < config.minLeaf) continue;
        const double gain = parent - (nl * gini(left, nl) + nr * gini(right, nr)) / total;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (column[i].first + column[i + 1].first);
          // midpoints of adjacent doubles can round onto the upper value
          if (best_threshold >= column[i + 1].first) best_threshold = column[i].first;
        }
      }
    }
    if (best_feature < 0) return leaf(counts, total);

    std::vector<int> lrows, rrows;
    for (int r : rows) (data.X(r, best_feature) <= best_threshold ? lrows : rrows).push_back(r);
    const int self = static_cast<int>(nodes.size());
    nodes.push_back({best_feature, best_threshold, -1, -1, {}});
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(std::move(lrows), depth + 1);
    const int r = build(std::move(rrows), depth + 1);
    nodes[self].left = l;
    nodes[self].right = r;
    return self;
  }
};

}  // namespace

ModelArtifact fit_tree(const TrainingSet& data, const TreeConfig& config) {
  if (config.minLeaf < 1) throw InvalidConfig("minLeaf must be at least 1");
  TreeBuilder b{data, config, static_cast<int>(data.classList.size()), {}};
  std::vector<int> rows(data.y.size());
  std::iota(rows.begin(), rows.end(), 0);
  b.build(std::move(rows), 0);

  ModelArtifact m;
  m.kind = ModelKind::DecisionTree;
  m.classList = data.classList;
  m.parameters = TreeParameters{std::move(b.nodes)};
  m.trained = true;
  return m;
}

ModelArtifact train_tree(const FeatureTable& features, const LabelMap& labels, const TreeConfig& config) {
  return fit_tree(collect_training_set(features, labels, 2), config);
}

// ---------------------------------------------------------------------------
// Label propagation

namespace {

/// Squared Euclidean distances between the rows of A and the rows of B.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd D = (-2.0 * A * B.transpose()).colwise() + A.rowwise().squaredNorm();
  D.rowwise() += B.rowwise().squaredNorm().transpose();
  return D.cwiseMax(0.0);
}

/// Indices of the k smallest entries of `row`, skipping `self`; ties by index.
std::vector<Eigen::Index> nearest(const Eigen::Ref<const Eigen::RowVectorXd>& row, int k, Eigen::Index self) {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(row.size()));
  for (Eigen::Index j = 0; j < row.size(); ++j)
    if (j != self) idx.push_back(j);
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) { return row(a) != row(b) ? row(a) < row(b) : a < b; });
  idx.resize(take);
  return idx;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double gaussian(double squared, double bandwidth) { return std::exp(-squared / (2.0 * bandwidth * bandwidth)); }

}  // namespace

Eigen::SparseMatrix<double> normalized_affinity(const Eigen::MatrixXd& X, int kNeighbors, double* bandwidth) {
  const Eigen::Index n = X.rows();
  const Eigen::MatrixXd D2 = squared_distances(X, X);
  std::vector<std::vector<Eigen::Index>> knn(static_cast<std::size_t>(n));
  std::vector<double> dists;
  for (Eigen::Index i = 0; i < n; ++i) {
    knn[i] = nearest(D2.row(i), kNeighbors, i);
    for (auto j : knn[i]) dists.push_back(std::sqrt(D2(i, j)));
    std::sort(knn[i].begin(), knn[i].end());
  }
  double sigma = median(dists);
  if (!(sigma > 0)) sigma = 1.0;  // all neighbours coincide
  if (bandwidth) *bandwidth = sigma;

  std::vector<Eigen::Triplet<double>> entries;
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (auto j : knn[i]) {
      if (!std::binary_search(knn[j].begin(), knn[j].end(), i)) continue;  // mutual only
      const double w = gaussian(D2(i, j), sigma);
      entries.emplace_back(i, j, w);
      degree(i) += w;
    }
  }
  for (auto& e : entries) {
    const double di = degree(e.row()), dj = degree(e.col());
    e = Eigen::Triplet<double>(e.row(), e.col(), (di > 0 && dj > 0) ? e.value() / std::sqrt(di * dj) : 0.0);
  }
  Eigen::SparseMatrix<double> S(n, n);
  S.setFromTriplets(entries.begin(), entries.end());
  return S;
}

Eigen::MatrixXd propagate(const Eigen::SparseMatrix<double>& S, const Eigen::MatrixXd& Y, double alpha, double tol,
                          int maxIter, int* iterations) {
  Eigen::MatrixXd F = Y;
  int it = 0;
  while (it < maxIter) {
    Eigen::MatrixXd next = alpha * (S * F) + (1.0 - alpha) * Y;
    ++it;
    const double change = (next - F).cwiseAbs().maxCoeff();
    F = std::move(next);
    if (change < tol) break;
  }
  if (iterations) *iterations = it;
  return F;
}

ModelArtifact train_label_propagation(const FeatureTable& features, const LabelMap& labels,
                                      const PropagationConfig& config) {
  if (!(config.alpha > 0 && config.alpha < 1)) throw InvalidConfig("alpha must lie in (0, 1)");
  const TrainingSet t = collect_training_set(features, labels, 1);
  const Eigen::MatrixXd& X = features.matrix();
  const auto C = static_cast<Eigen::Index>(t.classList.size());

  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(X.rows(), C);
  for (std::size_t i = 0; i < t.uuids.size(); ++i) Y(*features.row_of(t.uuids[i]), t.y[i]) = 1.0;

  PropagationParameters p;
  p.kNeighbors = config.kNeighbors;
  const auto S = normalized_affinity(X, config.kNeighbors, &p.bandwidth);
  p.scores = propagate(S, Y, config.alpha, config.tol, config.maxIter, &p.iterations);
  p.points = X;

  ModelArtifact m;
  m.kind = ModelKind::LabelPropagation;
  m.classList = t.classList;
  m.parameters = std::move(p);
  m.trained = true;
  return m;
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

Eigen::MatrixXd predict_tree(const TreeParameters& tree, const Eigen::MatrixXd& X, Eigen::Index classes) {
  Eigen::MatrixXd P(X.rows(), classes);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    int at = 0;
    while (tree.nodes[at].feature >= 0) {
      const auto& n = tree.nodes[at];
      at = X(r, n.feature) <= n.threshold ? n.left : n.right;
    }
    P.row(r) = Eigen::Map<const Eigen::RowVectorXd>(tree.nodes[at].probabilities.data(), classes);
  }
  return P;
}

Eigen::MatrixXd predict_propagation(const PropagationParameters& p, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd stored = p.scores;
  normalize_rows(stored);
  const Eigen::MatrixXd D2 = squared_distances(X, p.points);
  Eigen::MatrixXd P(X.rows(), stored.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    Eigen::Index closest = 0;
    D2.row(r).minCoeff(&closest);
    if (X.row(r) == p.points.row(closest)) {
      P.row(r) = stored.row(closest);
      continue;
    }
    // unseen row: kernel-weighted vote of its stored neighbours
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(stored.cols());
    double total = 0.0;
    for (auto j : nearest(D2.row(r), p.kNeighbors, -1)) {
      const double w = gaussian(D2(r, j), p.bandwidth);
      acc += w * stored.row(j);
      total += w;
    }
    P.row(r) = total > 0 ? Eigen::RowVectorXd(acc / total) : Eigen::RowVectorXd(stored.row(closest));
  }
  return P;
}

}  // namespace

Eigen::MatrixXd predict_proba(const ModelArtifact& model, const Eigen::MatrixXd& X) {
  if (!model.trained) throw UntrainedModel("model \"" + model.key + "\" is not trained");
  const auto C = static_cast<Eigen::Index>(model.classList.size());
  Eigen::MatrixXd P;
  std::visit(
      [&](const auto& params) {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, LogRegParameters>) {
          if (params.weights.cols() != X.cols() + 1)
            throw DimensionMismatch("model expects " + std::to_string(params.weights.cols() - 1) + " features");
          P = softmax(with_bias(X) * params.weights.transpose());
        } else if constexpr (std::is_same_v<T, TreeParameters>) {
          P = predict_tree(params, X, C);
        } else if constexpr (std::is_same_v<T, PropagationParameters>) {
          if (params.points.cols() != X.cols())
            throw DimensionMismatch("model expects " + std::to_string(params.points.cols()) + " features");
          P = predict_propagation(params, X);
        } else {
          throw UntrainedModel("model \"" + model.key + "\" has no parameters");
        }
      },
      model.parameters);
  normalize_rows(P);
  return P;
}

}  // namespace labelflow
