#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "sslab/error.hpp"
#include "sslab/pretexts.hpp"
#include "sslab/rng.hpp"

namespace sslab {
namespace {

std::uint64_t factorial(int n) {
  std::uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

Permutation identity(int n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

}  // namespace

int hamming_distance(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InvalidArgument("hamming_distance: length mismatch");
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i] ? 1 : 0;
  return d;
}

std::vector<Permutation> permutation_candidates(int n_patches, std::size_t pool_size,
                                                std::uint64_t seed) {
  if (n_patches < 2 || n_patches > 12) throw InvalidArgument("permutation_candidates: n_patches must be in [2, 12]");
  const std::uint64_t total = factorial(n_patches);
  if (pool_size > total) {
    throw InvalidArgument("candidate pool of " + std::to_string(pool_size) + " exceeds " +
                          std::to_string(n_patches) + "! = " + std::to_string(total));
  }
  const Permutation id = identity(n_patches);
  Rng rng(seed);
  std::vector<Permutation> out;

  if (2 * pool_size >= total) {
    Permutation p = id;
    while (std::next_permutation(p.begin(), p.end())) out.push_back(p);  // skips the identity
    rng.shuffle(std::span<Permutation>(out));
    if (out.size() > pool_size) out.resize(pool_size);
    return out;
  }

  std::set<Permutation> seen{id};
  out.reserve(pool_size);
  while (out.size() < pool_size) {
    Permutation p = id;
    rng.shuffle(std::span<int>(p));
    if (seen.insert(p).second) out.push_back(std::move(p));
  }
  return out;
}

PermutationSet generate_permutation_set(int n_patches, std::size_t size, std::size_t pool_size,
                                        std::uint64_t seed) {
  if (size < 1) throw InvalidArgument("generate_permutation_set: size must be at least 1");
  if (pool_size < size) throw InvalidArgument("generate_permutation_set: pool smaller than requested size");
  const auto candidates = permutation_candidates(n_patches, pool_size, seed);
  if (size > candidates.size() + 1) {
    throw InvalidArgument("generate_permutation_set: only " + std::to_string(candidates.size() + 1) +
                          " distinct permutations available, " + std::to_string(size) + " requested");
  }

  PermutationSet set;
  set.n_patches = n_patches;
  set.perms.push_back(identity(n_patches));

  // min_dist[k]: distance from candidate k to its closest selected permutation.
  std::vector<int> min_dist(candidates.size());
  std::vector<bool> taken(candidates.size(), false);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    min_dist[k] = hamming_distance(candidates[k], set.perms.front());
  }
  int overall_min = std::numeric_limits<int>::max();
  while (set.perms.size() < size) {
    std::size_t best = candidates.size();
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (!taken[k] && (best == candidates.size() || min_dist[k] > min_dist[best])) best = k;
    }
    taken[best] = true;
    overall_min = std::min(overall_min, min_dist[best]);
    set.perms.push_back(candidates[best]);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (!taken[k]) min_dist[k] = std::min(min_dist[k], hamming_distance(candidates[k], candidates[best]));
    }
  }
  set.min_hamming = set.perms.size() > 1 ? overall_min : 0;
  return set;
}

std::string PermutationSet::to_text() const {
  std::ostringstream out;
  for (const auto& p : perms) {
    for (std::size_t i = 0; i < p.size(); ++i) out << (i ? " " : "") << p[i];
    out << '\n';
  }
  return out.str();
}

PermutationSet PermutationSet::from_text(std::string_view text) {
  PermutationSet set;
  std::istringstream in{std::string(text)};
  std::string line;
  std::set<Permutation> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    Permutation p;
    int v = 0;
    while (fields >> v) p.push_back(v);
    if (set.perms.empty()) set.n_patches = static_cast<int>(p.size());
    if (!is_permutation(p, set.n_patches)) throw InvalidArgument("permutation file: invalid line '" + line + "'");
    if (!seen.insert(p).second) throw InvalidArgument("permutation file: duplicate line '" + line + "'");
    set.perms.push_back(std::move(p));
  }
  if (set.perms.empty()) throw InvalidArgument("permutation file: empty");
  if (set.perms.front() != identity(set.n_patches)) {
    throw InvalidArgument("permutation file: first line must be the identity");
  }
  int best = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < set.perms.size(); ++i) {
    for (std::size_t j = i + 1; j < set.perms.size(); ++j) {
      best = std::min(best, hamming_distance(set.perms[i], set.perms[j]));
    }
  }
  set.min_hamming = set.perms.size() > 1 ? best : 0;
  return set;
}

void PermutationSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  out << to_text();
  if (!out) throw RuntimeFailure("cannot write permutation file " + path.string());
}

PermutationSet PermutationSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependency("cannot read permutation file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_text(buffer.str());
}

}  // namespace sslab
