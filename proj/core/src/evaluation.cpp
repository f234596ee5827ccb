#include "sslab/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "sslab/error.hpp"
#include "sslab/hashing.hpp"
#include "sslab/rng.hpp"

namespace fs = std::filesystem;

namespace sslab {

static_assert(std::endian::native == std::endian::little, "feature files are written in native little-endian order");

void to_json(nlohmann::json& j, const FeatureSource& s) {
  j = nlohmann::json{{"pretext", s.pretext},
                     {"dataset", s.dataset},
                     {"split", s.split},
                     {"checkpoint", s.checkpoint},
                     {"mode", s.mode}};
}

void from_json(const nlohmann::json& j, FeatureSource& s) {
  s.pretext = j.value("pretext", std::string{});
  s.dataset = j.value("dataset", std::string{});
  s.split = j.value("split", std::string{});
  s.checkpoint = j.value("checkpoint", std::string{});
  s.mode = j.value("mode", std::string{"pooled"});
}

namespace {

std::string payload_checksum(const std::vector<float>& values) {
  return sha256_hex(std::as_bytes(std::span<const float>(values)));
}

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  fs::path p = stem;
  p += suffix;
  return p;
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::int64_t dim, std::vector<std::int64_t> image_ids, std::vector<float> values,
                             FeatureSource source)
    : dim_(dim), image_ids_(std::move(image_ids)), values_(std::move(values)), source_(std::move(source)) {
  if (dim_ <= 0) throw InvalidArgument("feature dim must be positive");
  if (values_.size() != image_ids_.size() * static_cast<std::size_t>(dim_)) {
    throw InvalidArgument("feature payload size does not match rows x dim");
  }
  if (!std::is_sorted(image_ids_.begin(), image_ids_.end()) ||
      std::adjacent_find(image_ids_.begin(), image_ids_.end()) != image_ids_.end()) {
    throw InvalidArgument("feature rows must be ordered by unique image_id");
  }
  for (const float v : values_) {
    if (!std::isfinite(v)) throw InvalidArgument("feature matrix contains NaN or Inf");
  }
  checksum_ = payload_checksum(values_);
}

std::span<const float> FeatureMatrix::row(std::int64_t index) const {
  if (index < 0 || index >= rows()) throw InvalidArgument("feature row out of range");
  return std::span<const float>(values_).subspan(static_cast<std::size_t>(index * dim_), static_cast<std::size_t>(dim_));
}

std::optional<std::int64_t> FeatureMatrix::index_of(std::int64_t image_id) const {
  const auto it = std::lower_bound(image_ids_.begin(), image_ids_.end(), image_id);
  if (it == image_ids_.end() || *it != image_id) return std::nullopt;
  return static_cast<std::int64_t>(it - image_ids_.begin());
}

torch::Tensor FeatureMatrix::tensor() const {
  return torch::from_blob(const_cast<float*>(values_.data()), {rows(), dim_}, torch::kFloat32).clone();
}

void FeatureMatrix::save(const fs::path& stem) const {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  {
    std::ofstream out(with_suffix(stem, ".f32"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(values_.data()), static_cast<std::streamsize>(values_.size() * sizeof(float)));
    if (!out) throw RuntimeFailure("cannot write features " + stem.string());
  }
  const nlohmann::json sidecar{{"dim", dim_},         {"count", rows()},
                               {"image_ids", image_ids_}, {"source", source_},
                               {"checksum", checksum_},   {"dtype", "float32-le"}};
  std::ofstream out(with_suffix(stem, ".json"));
  out << sidecar.dump(2) << '\n';
  if (!out) throw RuntimeFailure("cannot write feature sidecar " + stem.string());
}

FeatureMatrix FeatureMatrix::load(const fs::path& stem) {
  const auto sidecar_path = with_suffix(stem, ".json");
  const auto payload_path = with_suffix(stem, ".f32");
  std::ifstream side(sidecar_path);
  if (!side) throw MissingDependency("missing feature sidecar " + sidecar_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("malformed feature sidecar " + sidecar_path.string() + ": " + e.what());
  }
  const auto dim = j.at("dim").get<std::int64_t>();
  auto ids = j.at("image_ids").get<std::vector<std::int64_t>>();
  std::ifstream in(payload_path, std::ios::binary);
  if (!in) throw MissingDependency("missing feature payload " + payload_path.string());
  std::vector<float> values(ids.size() * static_cast<std::size_t>(dim));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(values.size() * sizeof(float)) || in.peek() != EOF) {
    throw RuntimeFailure("feature payload size mismatch in " + payload_path.string());
  }
  FeatureMatrix m(dim, std::move(ids), std::move(values), j.at("source").get<FeatureSource>());
  if (m.checksum() != j.at("checksum").get<std::string>()) {
    throw RuntimeFailure("feature checksum mismatch in " + payload_path.string());
  }
  return m;
}

FeatureMatrix extract_feature_matrix(Encoder& encoder, const DatasetTable& dataset, Split split, int pooled_dim,
                                     FeatureSource source, int batch_size) {
  const auto& config = encoder->config();
  const int side = config.input_side;
  const int grid = pool_grid_for_dim(config.feature_channels(), config.feature_side(), pooled_dim);
  const auto items = dataset.in_split(split);
  if (items.empty()) {
    throw InvalidArgument("split " + std::string(to_string(split)) + " of '" + dataset.name() + "' is empty");
  }
  source.dataset = dataset.name();
  source.split = std::string(to_string(split));
  source.mode = grid == config.feature_side() && grid != 1 ? "unpooled" : "pooled";

  std::vector<std::int64_t> ids;
  std::vector<float> values;
  values.reserve(items.size() * static_cast<std::size_t>(pooled_dim));
  for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(items.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<Image> batch;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(resize(items[i]->pixels, side, side));
      ids.push_back(items[i]->image_id);
    }
    const auto maps = extract_prepool(encoder, to_tensor(batch));
    const auto pooled = pool_features(maps, pooled_dim).contiguous();
    const float* p = pooled.data_ptr<float>();
    values.insert(values.end(), p, p + pooled.numel());
  }
  return FeatureMatrix(pooled_dim, std::move(ids), std::move(values), std::move(source));
}

std::vector<int> labels_for(const FeatureMatrix& features, const DatasetTable& dataset) {
  std::map<std::int64_t, int> by_id;
  for (const auto& item : dataset.images()) by_id.emplace(item.image_id, item.class_id);
  std::vector<int> out;
  out.reserve(features.image_ids().size());
  for (const auto id : features.image_ids()) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw InvalidArgument("image_id " + std::to_string(id) + " not present in dataset '" + dataset.name() + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

void ProbeConfig::validate() const { optim.validate(); }

void to_json(nlohmann::json& j, const ProbeConfig& c) {
  j = nlohmann::json{{"optim", c.optim}, {"standardize", c.standardize}};
}

void from_json(const nlohmann::json& j, ProbeConfig& c) {
  const ProbeConfig d;
  c.optim = j.contains("optim") ? j.at("optim").get<OptimConfig>() : d.optim;
  c.standardize = j.value("standardize", d.standardize);
}

namespace {

torch::Tensor probe_inputs(const LinearProbe& probe, const torch::Tensor& x) {
  if (!probe.mean.defined()) return x;
  return (x - probe.mean) / probe.scale;
}

}  // namespace

std::vector<int> LinearProbe::predict(const FeatureMatrix& features) const {
  if (features.dim() != weight.size(1)) throw InvalidArgument("probe dim does not match features");
  torch::NoGradGuard no_grad;
  const auto logits = probe_inputs(*this, features.tensor()).mm(weight.t()) + bias;
  const auto pred = logits.argmax(1).to(torch::kInt64).contiguous();
  const auto* p = pred.data_ptr<std::int64_t>();
  return std::vector<int>(p, p + pred.numel());
}

double LinearProbe::accuracy(const FeatureMatrix& features, std::span<const int> labels) const {
  if (labels.size() != static_cast<std::size_t>(features.rows())) throw InvalidArgument("labels not aligned with features");
  if (labels.empty()) throw InvalidArgument("cannot score an empty feature matrix");
  const auto pred = predict(features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

LinearProbe fit_linear_probe(const FeatureMatrix& features, std::span<const int> labels, int class_count,
                             std::span<const std::size_t> rows, std::uint64_t seed, const ProbeConfig& config) {
  config.validate();
  if (labels.size() != static_cast<std::size_t>(features.rows())) throw InvalidArgument("labels not aligned with features");
  if (class_count < 2) throw InvalidArgument("a probe needs at least two classes");
  std::vector<std::size_t> chosen(rows.begin(), rows.end());
  if (chosen.empty()) {
    chosen.resize(labels.size());
    std::iota(chosen.begin(), chosen.end(), 0);
  }
  std::set<int> distinct;
  std::vector<std::int64_t> index;
  std::vector<std::int64_t> targets;
  for (const auto r : chosen) {
    if (r >= labels.size()) throw InvalidArgument("probe row out of range");
    if (labels[r] < 0 || labels[r] >= class_count) throw InvalidArgument("probe label out of range");
    distinct.insert(labels[r]);
    index.push_back(static_cast<std::int64_t>(r));
    targets.push_back(labels[r]);
  }
  if (distinct.size() < 2) throw InvalidArgument("probe training subset contains a single class");

  const auto x_all = features.tensor().index_select(0, torch::tensor(index, torch::kInt64));
  const auto y_all = torch::tensor(targets, torch::kInt64);
  LinearProbe probe;
  auto x = x_all;
  if (config.standardize) {
    probe.mean = x_all.mean(0);
    probe.scale = x_all.std(0, /*unbiased=*/false).clamp_min(1e-6);
    x = probe_inputs(probe, x_all);
  }

  auto weight = torch::zeros({class_count, features.dim()}, torch::requires_grad());
  auto bias = torch::zeros({class_count}, torch::requires_grad());
  torch::optim::SGD optimizer({weight, bias}, sgd_options(config.optim));
  const auto n = static_cast<std::size_t>(x.size(0));
  const auto batch = static_cast<std::size_t>(config.optim.batch_size);
  std::vector<std::int64_t> order(n);
  for (int epoch = 0; epoch < config.optim.epochs; ++epoch) {
    set_learning_rate(optimizer, lr_at(epoch, config.optim));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::int64_t>(order));
    for (std::size_t start = 0; start < n; start += batch) {
      const auto end = std::min(n, start + batch);
      const auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + start, order.begin() + end), torch::kInt64);
      optimizer.zero_grad();
      const auto logits = x.index_select(0, idx).mm(weight.t()) + bias;
      const auto loss = torch::nn::functional::cross_entropy(logits, y_all.index_select(0, idx));
      if (!std::isfinite(loss.item<double>())) {
        throw RuntimeFailure("non-finite probe loss at epoch " + std::to_string(epoch));
      }
      loss.backward();
      optimizer.step();
    }
  }
  probe.weight = weight.detach();
  probe.bias = bias.detach();
  return probe;
}

void to_json(nlohmann::json& j, const ProbeResult& r) {
  j = nlohmann::json{{"pretext", r.pretext},         {"label_fraction", r.label_fraction},
                     {"pooled_dim", r.pooled_dim},   {"train_acc", r.train_acc},
                     {"val_acc", r.val_acc},         {"test_acc", r.test_acc},
                     {"train_count", r.train_count}, {"standardized", r.standardized}};
}

ProbeResult train_linear_probe(const ProbeSplit& train, const ProbeSplit& val, const ProbeSplit& test,
                               int class_count, double label_fraction, std::uint64_t seed,
                               const ProbeConfig& config) {
  if (train.features.dim() != val.features.dim() || train.features.dim() != test.features.dim()) {
    throw InvalidArgument("probe splits differ in feature dim");
  }
  const auto rows = select_label_fraction(train.labels, class_count, label_fraction, derive_seed(seed, "subset"));
  const auto probe = fit_linear_probe(train.features, train.labels, class_count, rows, derive_seed(seed, "fit"), config);

  std::size_t correct = 0;
  const auto pred = probe.predict(train.features);
  for (const auto r : rows) correct += pred[r] == train.labels[r] ? 1 : 0;

  ProbeResult result;
  result.pretext = train.features.source().pretext;
  result.label_fraction = label_fraction;
  result.pooled_dim = static_cast<int>(train.features.dim());
  result.train_acc = static_cast<double>(correct) / static_cast<double>(rows.size());
  result.val_acc = probe.accuracy(val.features, val.labels);
  result.test_acc = probe.accuracy(test.features, test.labels);
  result.train_count = rows.size();
  result.standardized = config.standardize;
  return result;
}

double normalized_accuracy(double pretext_acc, double supervised_acc) {
  if (!(supervised_acc > 0.0)) throw InvalidArgument("normalized accuracy needs a positive supervised accuracy");
  if (!(pretext_acc >= 0.0)) throw InvalidArgument("pretext accuracy must be non-negative");
  return pretext_acc / supervised_acc;
}

}  // namespace sslab
