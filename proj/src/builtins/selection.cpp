#include "labelflow/builtins/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "labelflow/builtins/classifiers.hpp"
#include "labelflow/builtins/rng.hpp"
#include "labelflow/errors.hpp"

namespace labelflow {

namespace {

const LabelRecord* find_record(const LabelMap& labels, const std::string& uuid) {
  auto it = labels.find(uuid);
  return it == labels.end() ? nullptr : &it->second;
}

/// Open uuids in label-map (uuid) order, each with its feature row.
std::vector<std::string> open_with_features(const FeatureTable& features, const LabelMap& labels) {
  std::vector<std::string> out;
  for (const auto& [uuid, rec] : labels) {
    if (!awaiting_human(&rec)) continue;
    if (!features.contains(uuid)) throw MissingFeatures("no feature row for unlabeled object " + uuid);
    out.push_back(uuid);
  }
  return out;
}

void require_batch(int batchSize) {
  if (batchSize < 1) throw InvalidConfig("batchSize must be at least 1");
}

}  // namespace

Samples select_random(const DataObjectList& objects, const LabelMap& labels, int batchSize, std::uint64_t seed) {
  require_batch(batchSize);
  std::vector<std::string> pool;
  for (const auto& o : objects)
    if (awaiting_human(find_record(labels, o.uuid))) pool.push_back(o.uuid);

  Rng rng(seed);
  const std::size_t take = std::min<std::size_t>(batchSize, pool.size());
  // partial Fisher-Yates
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return Samples{std::move(pool)};
}

KMeansResult kmeans(const Eigen::MatrixXd& X, int k, std::uint64_t seed, int maxIter) {
  KMeansResult r;
  const Eigen::Index n = X.rows();
  if (n == 0) return r;
  if (k < 1) throw KOutOfRange("k must be at least 1");
  k = static_cast<int>(std::min<Eigen::Index>(k, n));

  // k-means++ seeding
  Rng rng(seed);
  r.centroids.resize(k, X.cols());
  r.centroids.row(0) = X.row(static_cast<Eigen::Index>(rng.below(n)));
  Eigen::VectorXd d2 = (X.rowwise() - r.centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
      while (d2(pick) == 0 && pick > 0) --pick;  // rounding fallback: never reuse a chosen point
    } else {
      pick = static_cast<Eigen::Index>(rng.below(n));
    }
    r.centroids.row(c) = X.row(pick);
    d2 = d2.cwiseMin((X.rowwise() - r.centroids.row(c)).rowwise().squaredNorm());
  }

  r.assignment.assign(n, -1);
  for (int it = 0; it < maxIter; ++it) {
    bool changed = false;
    double objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      const double dist = (r.centroids.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
      objective += dist;
      if (r.assignment[i] != best) {
        r.assignment[i] = static_cast<int>(best);
        changed = true;
      }
    }
    r.objective.push_back(objective);
    r.iterations = it + 1;
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, X.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(r.assignment[i]) += X.row(i);
      ++counts[r.assignment[i]];
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) r.centroids.row(c) = sums.row(c) / counts[c];  // empty clusters keep their centroid
  }
  return r;
}

Samples select_cluster(const FeatureTable& features, const LabelMap& labels, int k, int batchSize,
                       std::uint64_t seed) {
  require_batch(batchSize);
  if (k < 1) throw KOutOfRange("k must be at least 1");
  auto pool = open_with_features(features, labels);
  if (pool.empty()) return {};

  const Eigen::MatrixXd X = features.gather(pool);
  const KMeansResult km = kmeans(X, k, seed);
  const int clusters = static_cast<int>(km.centroids.rows());

  std::vector<std::vector<std::pair<double, std::size_t>>> members(clusters);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const int c = km.assignment[i];
    const double dist = (X.row(static_cast<Eigen::Index>(i)) - km.centroids.row(c)).norm();
    members[c].push_back({dist, i});
  }
  for (auto& m : members)
    std::sort(m.begin(), m.end(), [&](const auto& a, const auto& b) {
      return a.first != b.first ? a.first < b.first : pool[a.second] < pool[b.second];
    });

  std::vector<int> order(clusters);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return members[a].size() > members[b].size(); });

  Samples out;
  for (std::size_t rank = 0; out.uuids.size() < static_cast<std::size_t>(batchSize); ++rank) {
    bool any = false;
    for (int c : order) {
      if (rank >= members[c].size()) continue;
      any = true;
      out.uuids.push_back(pool[members[c][rank].second]);
      if (out.uuids.size() == static_cast<std::size_t>(batchSize)) break;
    }
    if (!any) break;
  }
  return out;
}

std::string_view to_string(UncertaintyCriterion c) noexcept {
  switch (c) {
    case UncertaintyCriterion::Entropy: return "entropy";
    case UncertaintyCriterion::LeastConfidence: return "leastConfidence";
    case UncertaintyCriterion::SmallestMargin: return "smallestMargin";
  }
  return "entropy";
}

std::optional<UncertaintyCriterion> parse_uncertainty_criterion(std::string_view text) noexcept {
  if (text == "entropy") return UncertaintyCriterion::Entropy;
  if (text == "leastConfidence") return UncertaintyCriterion::LeastConfidence;
  if (text == "smallestMargin") return UncertaintyCriterion::SmallestMargin;
  return std::nullopt;
}

double uncertainty(const Eigen::Ref<const Eigen::RowVectorXd>& p, UncertaintyCriterion c) {
  switch (c) {
    case UncertaintyCriterion::Entropy: {
      double h = 0.0;
      for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p(i) > 0) h -= p(i) * std::log(p(i));
      return h;
    }
    case UncertaintyCriterion::LeastConfidence:
      return 1.0 - p.maxCoeff();
    case UncertaintyCriterion::SmallestMargin: {
      if (p.size() < 2) return -1.0;
      double first = -1.0, second = -1.0;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) > first) {
          second = first;
          first = p(i);
        } else if (p(i) > second) {
          second = p(i);
        }
      }
      return -(first - second);
    }
  }
  return 0.0;
}

Samples select_active(const FeatureTable& features, const LabelMap& labels, const ModelArtifact& model,
                      int batchSize, UncertaintyCriterion criterion) {
  require_batch(batchSize);
  if (!model.trained) throw UntrainedModel("model \"" + model.key + "\" is not trained");
  auto pool = open_with_features(features, labels);
  if (pool.empty()) return {};

  const Eigen::MatrixXd P = predict_proba(model, features.gather(pool));
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    scored.push_back({uncertainty(P.row(static_cast<Eigen::Index>(i)), criterion), i});
  const std::size_t take = std::min<std::size_t>(batchSize, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [&](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : pool[a.second] < pool[b.second];
                    });
  Samples out;
  for (std::size_t i = 0; i < take; ++i) out.uuids.push_back(pool[scored[i].second]);
  return out;
}

}  // namespace labelflow
