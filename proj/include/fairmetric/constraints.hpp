#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fairmetric/core.hpp"
#include "fairmetric/rng.hpp"

namespace fairmetric {

// Similar = equal ratings, dissimilar = unequal ratings, over all unordered
// pairs i < j in lexicographic order.
inline PairSets build_pairs(const std::vector<int>& labels) {
  if (labels.size() < 2) throw ConfigError("build_pairs needs at least 2 instances");
  PairSets out;
  for (Index i = 0; i < labels.size(); ++i) {
    for (Index j = i + 1; j < labels.size(); ++j) {
      (labels[i] == labels[j] ? out.similar : out.dissimilar).emplace_back(i, j);
    }
  }
  return out;
}

inline PairSets build_pairs(const LabeledDataset& data) { return build_pairs(data.labels()); }

// Literal:   S_a <= S_b + sigma < S_c.
// Symmetric: |S_a - S_b| + sigma < |S_a - S_c|.
inline bool triplet_predicate(double sa, double sb, double sc, double sigma, TripletVariant variant) {
  if (variant == TripletVariant::literal) {
    return sa <= sb + sigma && sb + sigma < sc;
  }
  return std::abs(sa - sb) + sigma < std::abs(sa - sc);
}

// All ordered triples of distinct indices satisfying the predicate, in
// lexicographic (a, b, c) order. Size is O(n^3); see subsample_triplets.
inline TripletSet build_triplets(const std::vector<int>& labels, double sigma,
                                 TripletVariant variant = TripletVariant::literal) {
  if (labels.size() < 3) throw ConfigError("build_triplets needs at least 3 instances");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be nonnegative");
  TripletSet out;
  out.sigma = sigma;
  out.variant = variant;
  const Index n = labels.size();
  for (Index a = 0; a < n; ++a) {
    const double sa = labels[a];
    for (Index b = 0; b < n; ++b) {
      if (b == a) continue;
      const double sb = labels[b];
      if (variant == TripletVariant::literal && !(sa <= sb + sigma)) continue;
      for (Index c = 0; c < n; ++c) {
        if (c == a || c == b) continue;
        if (triplet_predicate(sa, sb, labels[c], sigma, variant)) out.triplets.push_back({a, b, c});
      }
    }
  }
  return out;
}

inline TripletSet build_triplets(const LabeledDataset& data, double sigma,
                                 TripletVariant variant = TripletVariant::literal) {
  return build_triplets(data.labels(), sigma, variant);
}

// Re-checks every triplet against its variant's rule. Returns the number of
// offending triplets (0 for a valid set).
inline std::size_t count_invalid_triplets(const TripletSet& set, const std::vector<int>& labels) {
  std::size_t bad = 0;
  for (const auto& t : set.triplets) {
    const bool in_range = t.a < labels.size() && t.b < labels.size() && t.c < labels.size();
    const bool distinct = t.a != t.b && t.a != t.c && t.b != t.c;
    if (!in_range || !distinct ||
        !triplet_predicate(labels[t.a], labels[t.b], labels[t.c], set.sigma, set.variant)) {
      ++bad;
    }
  }
  return bad;
}

// Uniform sample of min(m, |set|) triplets without replacement; the kept
// triplets stay in canonical order.
inline TripletSet subsample_triplets(const TripletSet& set, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw ConfigError("subsample size must be at least 1");
  TripletSet out;
  out.sigma = set.sigma;
  out.variant = set.variant;
  if (m >= set.size()) {
    out.triplets = set.triplets;
    return out;
  }
  auto picks = rng::sample_without_replacement(set.size(), m, seed);
  std::sort(picks.begin(), picks.end());
  out.triplets.reserve(m);
  for (auto p : picks) out.triplets.push_back(set.triplets[p]);
  return out;
}

}  // namespace fairmetric
