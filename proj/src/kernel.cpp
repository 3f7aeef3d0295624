// SPDX-License-Identifier: Apache-2.0
#include "kdx/kernel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "kdx/error.hpp"
#include "parallel.hpp"

namespace kdx {

namespace {

void require_forest_pair(const MembershipSignature& a, const MembershipSignature& b) {
  require(a.kind == SignatureKind::forest && b.kind == SignatureKind::forest,
          "forest kernel needs two forest signatures");
  require(a.leaves.size() == b.leaves.size(), "forest signatures differ in tree count");
  require(!a.leaves.empty(), "forest signature has no trees");
}

void require_net_pair(const MembershipSignature& a, const MembershipSignature& b) {
  require(a.kind == SignatureKind::net && b.kind == SignatureKind::net,
          "net kernel needs two net signatures");
  require(a.activations.size() == b.activations.size() && !a.activations.empty(),
          "net signatures differ in layer count");
  for (std::size_t l = 0; l < a.activations.size(); ++l) {
    require(a.activations[l].size() == b.activations[l].size() && !a.activations[l].empty(),
            "net signatures differ in width of layer " + std::to_string(l));
  }
}

std::size_t layer_agreement(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m += (a[i] != 0) == (b[i] != 0);
  return m;
}

// Bit-packed activations for fast pairwise agreement counts.
struct PackedSignature {
  std::vector<std::vector<std::uint64_t>> layers;
};

PackedSignature pack(const MembershipSignature& sig) {
  PackedSignature packed;
  for (const auto& layer : sig.activations) {
    std::vector<std::uint64_t> words((layer.size() + 63) / 64, 0);
    for (std::size_t i = 0; i < layer.size(); ++i) {
      if (layer[i] != 0) words[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    packed.layers.push_back(std::move(words));
  }
  return packed;
}

double packed_net_kernel(const PackedSignature& a, const PackedSignature& b,
                         const std::vector<std::size_t>& widths, double total_paths) {
  double agreeing = 1.0;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    std::size_t differing = 0;
    for (std::size_t w = 0; w < a.layers[l].size(); ++w) {
      differing += static_cast<std::size_t>(std::popcount(a.layers[l][w] ^ b.layers[l][w]));
    }
    agreeing *= static_cast<double>(widths[l] - differing);
    if (agreeing == 0.0) return 0.0;
  }
  return agreeing / total_paths;
}

}  // namespace

std::size_t leaf_matches(const MembershipSignature& a, const MembershipSignature& b) {
  require_forest_pair(a, b);
  std::size_t t = 0;
  for (std::size_t i = 0; i < a.leaves.size(); ++i) t += a.leaves[i] == b.leaves[i];
  return t;
}

double forest_kernel(const MembershipSignature& a, const MembershipSignature& b) {
  const std::size_t matches = leaf_matches(a, b);
  return static_cast<double>(matches) / static_cast<double>(a.leaves.size());
}

PathAgreement net_path_agreement(const MembershipSignature& a, const MembershipSignature& b) {
  require_net_pair(a, b);
  PathAgreement out{1, 1};
  for (std::size_t l = 0; l < a.activations.size(); ++l) {
    const std::uint64_t m = layer_agreement(a.activations[l], b.activations[l]);
    const std::uint64_t width = a.activations[l].size();
    if (__builtin_mul_overflow(out.agreeing, m, &out.agreeing) ||
        __builtin_mul_overflow(out.total, width, &out.total)) {
      fail(ErrorCode::invalid_input, "activation path count overflows 64 bits");
    }
  }
  return out;
}

double net_kernel(const MembershipSignature& a, const MembershipSignature& b) {
  require_net_pair(a, b);
  // Both products are integers, exact in double up to 2^53 paths.
  double agreeing = 1.0;
  double total = 1.0;
  for (std::size_t l = 0; l < a.activations.size(); ++l) {
    agreeing *= static_cast<double>(layer_agreement(a.activations[l], b.activations[l]));
    total *= static_cast<double>(a.activations[l].size());
  }
  return agreeing / total;
}

double signature_kernel(const MembershipSignature& a, const MembershipSignature& b) {
  require(a.kind == b.kind, "cannot compare forest and net signatures");
  return a.kind == SignatureKind::forest ? forest_kernel(a, b) : net_kernel(a, b);
}

double geodesic_distance(const MembershipSignature& a, const MembershipSignature& b) {
  return 1.0 - signature_kernel(a, b);
}

ExactDistance exact_geodesic_distance(const MembershipSignature& a, const MembershipSignature& b) {
  require(a.kind == b.kind, "cannot compare forest and net signatures");
  if (a.kind == SignatureKind::forest) {
    const std::uint64_t matches = leaf_matches(a, b);
    return {a.leaves.size() - matches, a.leaves.size()};
  }
  const PathAgreement paths = net_path_agreement(a, b);
  return {paths.total - paths.agreeing, paths.total};
}

std::vector<std::vector<std::size_t>> PolytopeGrouping::members() const {
  std::vector<std::vector<std::size_t>> out(representatives.size());
  for (std::size_t i = 0; i < polytope_ids.size(); ++i) out[polytope_ids[i]].push_back(i);
  return out;
}

PolytopeGrouping group_polytopes(std::span<const MembershipSignature> signatures) {
  require(!signatures.empty(), "cannot group an empty signature list");
  const auto kind = signatures.front().kind;
  PolytopeGrouping grouping;
  grouping.polytope_ids.reserve(signatures.size());
  std::unordered_map<MembershipSignature, std::uint32_t, SignatureHash> ids;
  for (const auto& sig : signatures) {
    require(sig.kind == kind, "signature list mixes forest and net signatures");
    auto [it, inserted] =
        ids.try_emplace(sig, static_cast<std::uint32_t>(grouping.representatives.size()));
    if (inserted) grouping.representatives.push_back(sig);
    grouping.polytope_ids.push_back(it->second);
  }
  return grouping;
}

double PairwiseMatrix::at(std::size_t r, std::size_t s) const {
  require(r < size && s < size, "pairwise matrix index out of range");
  auto cols = row_columns(r);
  auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(s));
  if (it == cols.end() || *it != s) return 0.0;
  return values[row_offsets[r] + static_cast<std::size_t>(it - cols.begin())];
}

namespace {

struct RowEntries {
  std::vector<std::uint32_t> columns;
  std::vector<double> values;
};

PairwiseMatrix assemble(std::vector<RowEntries>& rows) {
  PairwiseMatrix m;
  m.size = rows.size();
  m.row_offsets.assign(rows.size() + 1, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    m.row_offsets[r + 1] = m.row_offsets[r] + rows[r].columns.size();
  }
  m.columns.reserve(m.row_offsets.back());
  m.values.reserve(m.row_offsets.back());
  for (auto& row : rows) {
    m.columns.insert(m.columns.end(), row.columns.begin(), row.columns.end());
    m.values.insert(m.values.end(), row.values.begin(), row.values.end());
    row = {};
  }
  return m;
}

// Sparse: only polytopes sharing a leaf in at least one tree get an entry.
PairwiseMatrix forest_kernel_matrix(const PolytopeGrouping& grouping) {
  const auto& reps = grouping.representatives;
  const std::size_t p = reps.size();
  const std::size_t trees = reps.front().leaves.size();
  for (const auto& sig : reps) {
    require(sig.leaves.size() == trees, "forest signatures differ in tree count");
  }

  // Per tree: polytopes ordered by leaf, with group boundaries.
  std::vector<std::vector<std::uint32_t>> order(trees), group_of(trees);
  std::vector<std::vector<std::uint32_t>> offsets(trees);
  detail::parallel_for(trees, [&](std::size_t t) {
    auto& ord = order[t];
    ord.resize(p);
    std::iota(ord.begin(), ord.end(), 0u);
    std::stable_sort(ord.begin(), ord.end(), [&](std::uint32_t a, std::uint32_t b) {
      return reps[a].leaves[t] < reps[b].leaves[t];
    });
    auto& groups = group_of[t];
    groups.resize(p);
    auto& offs = offsets[t];
    for (std::size_t i = 0; i < p; ++i) {
      if (i == 0 || reps[ord[i]].leaves[t] != reps[ord[i - 1]].leaves[t]) {
        offs.push_back(static_cast<std::uint32_t>(i));
      }
      groups[ord[i]] = static_cast<std::uint32_t>(offs.size() - 1);
    }
    offs.push_back(static_cast<std::uint32_t>(p));
  });

  std::vector<RowEntries> rows(p);
  constexpr std::size_t block = 256;
  const std::size_t blocks = (p + block - 1) / block;
  const double denom = static_cast<double>(trees);
  detail::parallel_for(blocks, [&](std::size_t b) {
    std::vector<std::uint32_t> counts(p, 0);
    std::vector<std::uint32_t> touched;
    for (std::size_t r = b * block; r < std::min(p, (b + 1) * block); ++r) {
      touched.clear();
      for (std::size_t t = 0; t < trees; ++t) {
        const std::uint32_t g = group_of[t][r];
        for (std::uint32_t i = offsets[t][g]; i < offsets[t][g + 1]; ++i) {
          const std::uint32_t s = order[t][i];
          if (counts[s]++ == 0) touched.push_back(s);
        }
      }
      std::sort(touched.begin(), touched.end());
      auto& row = rows[r];
      row.columns = touched;
      row.values.reserve(touched.size());
      for (auto s : touched) {
        row.values.push_back(static_cast<double>(counts[s]) / denom);
        counts[s] = 0;
      }
    }
  });
  return assemble(rows);
}

PairwiseMatrix net_kernel_matrix(const PolytopeGrouping& grouping) {
  const auto& reps = grouping.representatives;
  const std::size_t p = reps.size();
  std::vector<std::size_t> widths;
  double total = 1.0;
  for (const auto& layer : reps.front().activations) {
    widths.push_back(layer.size());
    total *= static_cast<double>(layer.size());
  }
  std::vector<PackedSignature> packed(p);
  for (std::size_t r = 0; r < p; ++r) {
    require_net_pair(reps.front(), reps[r]);
    packed[r] = pack(reps[r]);
  }
  std::vector<RowEntries> rows(p);
  detail::parallel_for(p, [&](std::size_t r) {
    auto& row = rows[r];
    for (std::size_t s = 0; s < p; ++s) {
      const double k = packed_net_kernel(packed[r], packed[s], widths, total);
      if (k > 0.0) {
        row.columns.push_back(static_cast<std::uint32_t>(s));
        row.values.push_back(k);
      }
    }
  });
  return assemble(rows);
}

}  // namespace

PairwiseMatrix polytope_kernel_matrix(const PolytopeGrouping& grouping) {
  require(grouping.populated_count() > 0, "grouping has no polytopes");
  return grouping.representatives.front().kind == SignatureKind::forest
             ? forest_kernel_matrix(grouping)
             : net_kernel_matrix(grouping);
}

double exponentiate_weight(double kernel, std::size_t n, double k) {
  require(n >= 2, "exponentiated weights need n >= 2");
  require(k > 0.0, "weight exponent scale k must be positive");
  require(kernel >= 0.0 && kernel <= 1.0, "kernel value outside [0, 1]");
  return std::pow(kernel, k * std::log(static_cast<double>(n)));
}

WeightMatrix exponentiate_weights(const PairwiseMatrix& kernels, std::size_t n, double k) {
  require(n >= 2, "exponentiated weights need n >= 2");
  require(k > 0.0, "weight exponent scale k must be positive");
  const double exponent = k * std::log(static_cast<double>(n));
  WeightMatrix w;
  w.exponent_scale = k;
  w.sample_count = n;
  w.entries.size = kernels.size;
  w.entries.row_offsets.assign(kernels.size + 1, 0);
  for (std::size_t r = 0; r < kernels.size; ++r) {
    auto cols = kernels.row_columns(r);
    auto vals = kernels.row_values(r);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      require(vals[i] >= 0.0 && vals[i] <= 1.0, "kernel value outside [0, 1]");
      const double weight = std::pow(vals[i], exponent);
      if (weight > 0.0 || cols[i] == r) {
        w.entries.columns.push_back(cols[i]);
        w.entries.values.push_back(weight);
      }
    }
    w.entries.row_offsets[r + 1] = w.entries.columns.size();
  }
  return w;
}

void write_weights_csv(const WeightMatrix& weights, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out.precision(17);
  const std::size_t p = weights.entries.size;
  out << "polytope";
  for (std::size_t s = 0; s < p; ++s) out << ',' << s;
  out << '\n';
  std::vector<double> dense(p);
  for (std::size_t r = 0; r < p; ++r) {
    std::fill(dense.begin(), dense.end(), 0.0);
    auto cols = weights.entries.row_columns(r);
    auto vals = weights.entries.row_values(r);
    for (std::size_t i = 0; i < cols.size(); ++i) dense[cols[i]] = vals[i];
    out << r;
    for (double v : dense) out << ',' << v;
    out << '\n';
  }
  if (!out) fail(ErrorCode::io, "failed writing " + path.string());
}

std::vector<double> default_k_grid() { return {1e-3, 1e-2, 1e-1, 1.0}; }

double select_grid_k(std::span<const double> candidates,
                     const std::function<double(double)>& holdout_error) {
  require(!candidates.empty(), "k grid is empty");
  double best_k = candidates.front();
  double best_error = std::numeric_limits<double>::infinity();
  for (double k : candidates) {
    require(k > 0.0, "k candidates must be positive");
    const double err = holdout_error(k);
    if (err < best_error || (err == best_error && k < best_k)) {
      best_error = err;
      best_k = k;
    }
  }
  return best_k;
}

}  // namespace kdx
