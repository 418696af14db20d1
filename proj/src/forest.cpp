#include "riskgate/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "riskgate/error.hpp"
#include "riskgate/random.hpp"

namespace riskgate {

using nlohmann::json;

namespace {

constexpr std::string_view kModelFormat = "riskgate-forest";

// Column-major view of the training matrix.
struct Columns {
  std::vector<std::vector<double>> cols;
  std::vector<int> y;
};

class TreeBuilder {
 public:
  TreeBuilder(const Columns& data, const ForestParams& params, std::uint64_t seed)
      : data_(data), params_(params), rng_(seed),
        mtry_(features_per_split(data.cols.size())) {}

  DecisionTree build() {
    const std::size_t n = data_.y.size();
    std::vector<std::size_t> sample(n);
    for (auto& s : sample) s = rng_.below(n);
    grow(sample, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int new_node() {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(0.0);
    return static_cast<int>(tree_.feature.size() - 1);
  }

  int grow(std::vector<std::size_t>& sample, int depth) {
    const int node = new_node();
    std::size_t pos = 0;
    for (auto i : sample) pos += static_cast<std::size_t>(data_.y[i]);
    const std::size_t n = sample.size();
    tree_.value[node] = static_cast<double>(pos) / static_cast<double>(n);

    const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
    if (depth >= params_.max_depth || n < 2 * min_leaf || pos == 0 || pos == n) return node;

    const Split best = find_split(sample, pos);
    if (best.feature < 0) return node;

    const auto& col = data_.cols[static_cast<std::size_t>(best.feature)];
    std::vector<std::size_t> left, right;
    for (auto i : sample) (col[i] <= best.threshold ? left : right).push_back(i);
    sample.clear();
    sample.shrink_to_fit();

    tree_.feature[node] = best.feature;
    tree_.threshold[node] = best.threshold;
    const int l = grow(left, depth + 1);
    tree_.left[node] = l;
    const int r = grow(right, depth + 1);
    tree_.right[node] = r;
    return node;
  }

  Split find_split(const std::vector<std::size_t>& sample, std::size_t pos) {
    const std::size_t num_features = data_.cols.size();
    std::vector<int> candidates(num_features);
    std::iota(candidates.begin(), candidates.end(), 0);
    for (int k = 0; k < mtry_; ++k) {
      const auto i = static_cast<std::size_t>(k);
      std::swap(candidates[i], candidates[i + rng_.below(num_features - i)]);
    }
    candidates.resize(static_cast<std::size_t>(mtry_));
    std::sort(candidates.begin(), candidates.end());

    const std::size_t n = sample.size();
    const double parent = gini(pos, n);
    const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
    Split best;
    std::vector<std::pair<double, int>> sorted(n);
    for (int f : candidates) {
      const auto& col = data_.cols[static_cast<std::size_t>(f)];
      for (std::size_t k = 0; k < n; ++k) sorted[k] = {col[sample[k]], data_.y[sample[k]]};
      std::sort(sorted.begin(), sorted.end());
      std::size_t left_pos = 0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_pos += static_cast<std::size_t>(sorted[k].second);
        const double lo = sorted[k].first;
        const double hi = sorted[k + 1].first;
        if (lo == hi) continue;
        const std::size_t nl = k + 1;
        const std::size_t nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double gain =
            parent - (static_cast<double>(nl) * gini(left_pos, nl) +
                      static_cast<double>(nr) * gini(pos - left_pos, nr)) /
                         static_cast<double>(n);
        if (gain > best.gain) {
          double mid = lo + (hi - lo) / 2;
          if (!(mid < hi)) mid = lo;
          best = {f, mid, gain};
        }
      }
    }
    return best;
  }

  const Columns& data_;
  const ForestParams& params_;
  Rng rng_;
  int mtry_;
  DecisionTree tree_;
};

json tree_to_json(const DecisionTree& t) {
  return {{"feature", t.feature},
          {"threshold", t.threshold},
          {"left", t.left},
          {"right", t.right},
          {"value", t.value}};
}

DecisionTree tree_from_json(const json& j, std::size_t num_features) {
  DecisionTree t;
  t.feature = j.at("feature").get<std::vector<int>>();
  t.threshold = j.at("threshold").get<std::vector<double>>();
  t.left = j.at("left").get<std::vector<int>>();
  t.right = j.at("right").get<std::vector<int>>();
  t.value = j.at("value").get<std::vector<double>>();
  const std::size_t n = t.feature.size();
  if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n ||
      t.value.size() != n) {
    throw InputError("model: inconsistent tree arrays");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.feature[i] < 0) {
      if (!(t.value[i] >= 0.0 && t.value[i] <= 1.0)) {
        throw InputError("model: leaf value outside [0, 1]");
      }
      continue;
    }
    if (static_cast<std::size_t>(t.feature[i]) >= num_features) {
      throw InputError("model: split feature index out of range");
    }
    // Preorder layout: children always follow their parent.
    for (int child : {t.left[i], t.right[i]}) {
      if (child <= static_cast<int>(i) || static_cast<std::size_t>(child) >= n) {
        throw InputError("model: invalid child index");
      }
    }
  }
  return t;
}

}  // namespace

void ForestParams::validate() const {
  if (n_trees < 1) throw InputError("forest: n_trees must be >= 1");
  if (max_depth < 1) throw InputError("forest: max_depth must be >= 1");
  if (min_leaf < 1) throw InputError("forest: min_leaf must be >= 1");
}

int features_per_split(std::size_t num_features) {
  auto m = static_cast<int>(std::floor(std::sqrt(static_cast<double>(num_features))));
  // Guard against sqrt rounding just below an exact square.
  while (static_cast<std::size_t>((m + 1) * (m + 1)) <= num_features) ++m;
  return std::max(1, m);
}

double DecisionTree::predict(std::span<const double> x) const {
  int node = 0;
  while (feature[static_cast<std::size_t>(node)] >= 0) {
    const auto i = static_cast<std::size_t>(node);
    node = x[static_cast<std::size_t>(feature[i])] <= threshold[i] ? left[i] : right[i];
  }
  return value[static_cast<std::size_t>(node)];
}

double gini(std::size_t positives, std::size_t total) {
  if (total == 0) return 0.0;
  const double p = static_cast<double>(positives) / static_cast<double>(total);
  return 2.0 * p * (1.0 - p);
}

ForestModel train_forest(std::span<const FeatureVector> x, std::span<const int> y,
                         const ForestParams& params, int workers) {
  params.validate();
  if (x.size() != y.size()) throw InputError("forest: feature and label counts differ");
  if (x.size() < 2) throw InputError("forest: need at least 2 training rows");
  bool has0 = false, has1 = false;
  for (int label : y) {
    if (label != 0 && label != 1) throw InputError("forest: labels must be 0 or 1");
    (label ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw InputError("forest: training labels contain a single class");
  const std::string& schema = x.front().schema_id;
  const std::size_t num_features = x.front().values.size();
  if (num_features == 0) throw InputError("forest: empty feature vectors");
  for (const auto& row : x) {
    if (row.schema_id != schema || row.values.size() != num_features) {
      throw InputError("forest: mixed feature schemas in training data (" + schema + " vs " +
                       row.schema_id + ")");
    }
  }

  Columns data;
  data.cols.assign(num_features, std::vector<double>(x.size()));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t f = 0; f < num_features; ++f) data.cols[f][r] = x[r].values[f];
  }
  data.y.assign(y.begin(), y.end());

  ForestModel model;
  model.schema_id = schema;
  model.num_features = num_features;
  model.params = params;
  model.trees.resize(static_cast<std::size_t>(params.n_trees));

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    try {
      for (std::size_t t; (t = next.fetch_add(1)) < model.trees.size();) {
        model.trees[t] = TreeBuilder(data, params, derive_seed(params.seed, t)).build();
      }
    } catch (...) {
      std::lock_guard lock(error_mu);
      if (!error) error = std::current_exception();
    }
  };
  const int n_workers = std::clamp(workers, 1, params.n_trees);
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return model;
}

double predict_proba(const ForestModel& model, const FeatureVector& x) {
  if (x.schema_id != model.schema_id || x.values.size() != model.num_features) {
    throw InputError("forest: feature schema '" + x.schema_id + "' (" +
                     std::to_string(x.values.size()) + " values) does not match model schema '" +
                     model.schema_id + "' (" + std::to_string(model.num_features) + ")");
  }
  double sum = 0.0;
  for (const auto& tree : model.trees) sum += tree.predict(x.values);
  return sum / static_cast<double>(model.trees.size());
}

json forest_to_json(const ForestModel& model) {
  json trees = json::array();
  for (const auto& t : model.trees) trees.push_back(tree_to_json(t));
  return {{"schema_id", model.schema_id},
          {"num_features", model.num_features},
          {"params",
           {{"n_trees", model.params.n_trees},
            {"max_depth", model.params.max_depth},
            {"min_leaf", model.params.min_leaf},
            {"seed", model.params.seed}}},
          {"trees", std::move(trees)}};
}

ForestModel forest_from_json(const json& j) {
  try {
    ForestModel m;
    m.schema_id = j.at("schema_id").get<std::string>();
    m.num_features = j.at("num_features").get<std::size_t>();
    const auto& p = j.at("params");
    m.params.n_trees = p.at("n_trees").get<int>();
    m.params.max_depth = p.at("max_depth").get<int>();
    m.params.min_leaf = p.at("min_leaf").get<int>();
    m.params.seed = p.at("seed").get<std::uint64_t>();
    m.params.validate();
    for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t, m.num_features));
    if (m.trees.size() != static_cast<std::size_t>(m.params.n_trees)) {
      throw InputError("model: tree count does not match params.n_trees");
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("model: corrupt forest: ") + e.what());
  }
}

void save_model(const ForestModel& model, const std::filesystem::path& path,
                const ModelHeader& header) {
  json j = {{"format", kModelFormat}, {"format_version", kModelFormatVersion}};
  j["rif_kind"] = header.rif_kind ? json(*header.rif_kind) : json(nullptr);
  j["train_benchmark"] = header.train_benchmark ? json(*header.train_benchmark) : json(nullptr);
  j["forest"] = forest_to_json(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

ForestModel load_model(const std::filesystem::path& path, ModelHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": corrupt model file: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kModelFormat) {
    throw InputError(path.string() + ": not a forest model file");
  }
  if (j.value("format_version", -1) != kModelFormatVersion) {
    throw InputError(path.string() + ": unsupported model format_version " +
                     j.value("format_version", json(nullptr)).dump());
  }
  if (header) {
    header->rif_kind = j.contains("rif_kind") && !j["rif_kind"].is_null()
                           ? std::optional(j["rif_kind"].get<std::string>())
                           : std::nullopt;
    header->train_benchmark = j.contains("train_benchmark") && !j["train_benchmark"].is_null()
                                  ? std::optional(j["train_benchmark"].get<std::string>())
                                  : std::nullopt;
  }
  if (!j.contains("forest")) throw InputError(path.string() + ": missing forest body");
  return forest_from_json(j["forest"]);
}

}  // namespace riskgate
