// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "kdx/signature.hpp"

namespace kdx {

/// Number of trees in which both signatures name the same leaf (t_rs).
std::size_t leaf_matches(const MembershipSignature& a, const MembershipSignature& b);

/// t_rs / T.
double forest_kernel(const MembershipSignature& a, const MembershipSignature& b);

/// Exact activation-path counts: `agreeing` = prod_l m_l where m_l is the
/// number of layer-l nodes with equal bits, `total` = prod_l |N_l|. Throws
/// invalid_input if either product overflows 64 bits.
struct PathAgreement {
  std::uint64_t agreeing = 0;
  std::uint64_t total = 0;
};
PathAgreement net_path_agreement(const MembershipSignature& a, const MembershipSignature& b);

/// Fraction of activation paths identically activated by the two signatures.
double net_kernel(const MembershipSignature& a, const MembershipSignature& b);

/// Dispatches on the signature kind; throws on mismatched kinds.
double signature_kernel(const MembershipSignature& a, const MembershipSignature& b);

/// 1 - K(a, b).
double geodesic_distance(const MembershipSignature& a, const MembershipSignature& b);

/// Exact form of the geodesic distance: numerator / denominator with integer
/// counts, so metric axioms can be checked without rounding.
struct ExactDistance {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;
};
ExactDistance exact_geodesic_distance(const MembershipSignature& a, const MembershipSignature& b);

/// Training samples grouped by identical signature. Ids are dense and assigned
/// in order of first appearance.
struct PolytopeGrouping {
  std::vector<std::uint32_t> polytope_ids;
  std::vector<MembershipSignature> representatives;

  std::size_t populated_count() const noexcept { return representatives.size(); }
  std::vector<std::vector<std::size_t>> members() const;
};

PolytopeGrouping group_polytopes(std::span<const MembershipSignature> signatures);

/// Symmetric p x p matrix in compressed-row form. Entries that are exactly zero
/// are not stored; the diagonal is always stored.
struct PairwiseMatrix {
  std::size_t size = 0;
  std::vector<std::size_t> row_offsets;  // size + 1
  std::vector<std::uint32_t> columns;    // ascending within a row
  std::vector<double> values;

  double at(std::size_t r, std::size_t s) const;
  std::span<const std::uint32_t> row_columns(std::size_t r) const {
    return {columns.data() + row_offsets[r], row_offsets[r + 1] - row_offsets[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values.data() + row_offsets[r], row_offsets[r + 1] - row_offsets[r]};
  }
  std::size_t nonzeros() const noexcept { return values.size(); }
};

/// K(r, s) between the representatives of every pair of populated polytopes.
PairwiseMatrix polytope_kernel_matrix(const PolytopeGrouping& grouping);

struct WeightMatrix {
  PairwiseMatrix entries;
  double exponent_scale = 1.0;
  std::size_t sample_count = 0;
};

/// K^(k ln n).
double exponentiate_weight(double kernel, std::size_t n, double k);

/// Entrywise K^(k ln n); requires n >= 2 and k > 0.
WeightMatrix exponentiate_weights(const PairwiseMatrix& kernels, std::size_t n, double k);

/// Writes the dense p x p matrix; row and column index = polytope id.
void write_weights_csv(const WeightMatrix& weights, const std::filesystem::path& path);

std::vector<double> default_k_grid();

/// Candidate with the smallest hold-out error; ties go to the smaller k.
double select_grid_k(std::span<const double> candidates,
                     const std::function<double(double)>& holdout_error);

}  // namespace kdx
