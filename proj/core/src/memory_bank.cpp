#include <cmath>

#include <torch/torch.h>

#include "sslab/error.hpp"
#include "sslab/pretexts.hpp"
#include "sslab/rng.hpp"

namespace sslab {
namespace {

constexpr double kUnitTolerance = 1e-5;

double norm(std::span<const float> v) {
  double s = 0.0;
  for (const float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

}  // namespace

MemoryBank::MemoryBank(torch::Tensor rows, double momentum, double temperature)
    : rows_(rows.to(torch::kFloat32).contiguous().clone()), momentum_(momentum), temperature_(temperature) {
  if (rows_.dim() != 2 || rows_.size(0) < 1) throw InvalidArgument("memory bank needs a non-empty [N, d] tensor");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw InvalidArgument("memory bank momentum must be in [0, 1]");
  if (!(temperature > 0.0)) throw InvalidArgument("memory bank temperature must be positive");
  const auto norms = rows_.norm(2, 1);
  if ((norms - 1.0).abs().max().item<double>() > kUnitTolerance) {
    throw InvalidArgument("memory bank rows must be unit norm");
  }
}

MemoryBank MemoryBank::random(std::int64_t rows, std::int64_t dim, double momentum, double temperature,
                              std::uint64_t seed) {
  if (rows < 1 || dim < 1) throw InvalidArgument("memory bank dimensions must be positive");
  Rng rng(seed);
  auto data = torch::empty({rows, dim}, torch::kFloat64);
  auto acc = data.accessor<double, 2>();
  for (std::int64_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < dim; ++j) {
      acc[i][j] = rng.normal();
      s += acc[i][j] * acc[i][j];
    }
    s = std::sqrt(s);
    for (std::int64_t j = 0; j < dim; ++j) acc[i][j] /= s;
  }
  return MemoryBank(data, momentum, temperature);
}

std::span<const float> MemoryBank::row(std::int64_t index) const {
  if (index < 0 || index >= size()) throw InvalidArgument("memory bank index out of range");
  return {rows_.data_ptr<float>() + index * dim(), static_cast<std::size_t>(dim())};
}

void MemoryBank::update(std::int64_t index, std::span<const float> feature) {
  if (index < 0 || index >= size()) throw InvalidArgument("memory bank index out of range");
  if (static_cast<std::int64_t>(feature.size()) != dim()) throw InvalidArgument("memory bank feature dimension mismatch");
  if (std::abs(norm(feature) - 1.0) > kUnitTolerance) throw InvalidArgument("memory bank update needs a unit feature");
  float* row = rows_.data_ptr<float>() + index * dim();
  std::vector<double> mixed(feature.size());
  double s = 0.0;
  for (std::size_t j = 0; j < feature.size(); ++j) {
    mixed[j] = momentum_ * row[j] + (1.0 - momentum_) * feature[j];
    s += mixed[j] * mixed[j];
  }
  s = std::sqrt(s);
  for (std::size_t j = 0; j < feature.size(); ++j) {
    // Antipodal row and feature at momentum 0.5 cancel; take the new feature.
    row[j] = s > 1e-12 ? static_cast<float>(mixed[j] / s) : feature[j];
  }
}

void MemoryBank::update(const torch::Tensor& indices, const torch::Tensor& features) {
  const auto idx = indices.to(torch::kInt64).contiguous();
  const auto feats = features.detach().to(torch::kFloat32).contiguous();
  if (feats.dim() != 2 || feats.size(0) != idx.numel()) throw InvalidArgument("memory bank batch shape mismatch");
  for (std::int64_t b = 0; b < idx.numel(); ++b) {
    update(idx[b].item<std::int64_t>(),
           std::span<const float>(feats.data_ptr<float>() + b * feats.size(1), static_cast<std::size_t>(feats.size(1))));
  }
}

double nonparam_softmax_loss(std::span<const float> feature, std::int64_t own_index, const MemoryBank& bank) {
  if (own_index < 0 || own_index >= bank.size()) throw InvalidArgument("nonparam_softmax_loss: own_index out of range");
  if (static_cast<std::int64_t>(feature.size()) != bank.dim()) throw InvalidArgument("nonparam_softmax_loss: dimension mismatch");
  if (std::abs(norm(feature) - 1.0) > kUnitTolerance) throw InvalidArgument("nonparam_softmax_loss: feature is not unit norm");
  std::vector<double> logits(static_cast<std::size_t>(bank.size()));
  double peak = -std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < bank.size(); ++i) {
    const auto row = bank.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < feature.size(); ++j) dot += static_cast<double>(row[j]) * feature[j];
    logits[i] = dot / bank.temperature();
    peak = std::max(peak, logits[i]);
  }
  double sum = 0.0;
  for (const double l : logits) sum += std::exp(l - peak);
  const double loss = peak + std::log(sum) - logits[own_index];
  return std::max(loss, 0.0);
}

torch::Tensor nonparam_softmax_loss(const torch::Tensor& features, const torch::Tensor& own_indices,
                                    const MemoryBank& bank) {
  if (features.dim() != 2 || features.size(1) != bank.dim()) {
    throw InvalidArgument("nonparam_softmax_loss: features must be [B, dim]");
  }
  const auto logits = torch::mm(features, bank.rows().to(features.dtype()).t()) / bank.temperature();
  return torch::nn::functional::cross_entropy(logits, own_indices.to(torch::kInt64));
}

}  // namespace sslab
