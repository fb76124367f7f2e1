#pragma once

#include "opcalc/errors.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/operator_family.hpp"
#include "opcalc/power_series.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace opcalc {

/// One element of the block-order-preserving permutation set for blocks
/// (n_1, ..., n_k): `assignment[i]` is the (0-based) family occupying the i-th
/// earliest time slot. Order inside a block is implicit, so the pattern is the
/// interleaving itself.
struct MergePattern {
    MultiIndex blocks;
    std::vector<int> assignment;

    std::size_t size() const noexcept { return assignment.size(); }
    friend bool operator==(const MergePattern&, const MergePattern&) = default;
};

/// (n_1 + ... + n_k)! / (n_1! ... n_k!), or nullopt on 64-bit overflow.
inline std::optional<std::uint64_t> multinomial(const MultiIndex& blocks) {
    std::uint64_t result = 1;
    std::uint64_t placed = 0;
    for (int nj : blocks) {
        if (nj < 0) return std::nullopt;
        // Multiply by C(placed + nj, nj) one factor at a time; each partial
        // product is itself a binomial coefficient, so the division is exact.
        for (int i = 1; i <= nj; ++i) {
            ++placed;
            unsigned __int128 wide = static_cast<unsigned __int128>(result) * placed;
            wide /= static_cast<unsigned>(i);
            if (wide > UINT64_MAX) return std::nullopt;
            result = static_cast<std::uint64_t>(wide);
        }
    }
    return result;
}

/// Streams every interleaving of the blocks exactly once, lexicographically
/// by assignment.
class MergePatternGenerator {
public:
    explicit MergePatternGenerator(MultiIndex blocks) : pattern_{std::move(blocks), {}} {
        for (std::size_t j = 0; j < pattern_.blocks.size(); ++j) {
            if (pattern_.blocks[j] < 0) throw PreconditionError("merge patterns: negative block size");
            pattern_.assignment.insert(pattern_.assignment.end(), pattern_.blocks[j], static_cast<int>(j));
        }
    }

    /// Advances to the next pattern; the first call yields the first pattern.
    bool next() {
        if (!started_) {
            started_ = true;
            return true;
        }
        return std::next_permutation(pattern_.assignment.begin(), pattern_.assignment.end());
    }

    const MergePattern& current() const noexcept { return pattern_; }

private:
    MergePattern pattern_;
    bool started_ = false;
};

/// Calls `visit(pattern)` for every merge pattern after checking the budget.
template <class Visit>
void for_each_merge_pattern(const MultiIndex& blocks, const Visit& visit,
                            std::uint64_t budget = 1'000'000) {
    auto count = multinomial(blocks);
    if (!count || *count > budget)
        throw CombinatorialExplosion("merge patterns for multi-index " + to_string(blocks) +
                                     " exceed the pattern budget of " + std::to_string(budget));
    MergePatternGenerator gen(blocks);
    while (gen.next()) visit(gen.current());
}

inline std::vector<MergePattern> enumerate_merge_patterns(const MultiIndex& blocks,
                                                          std::uint64_t budget = 1'000'000) {
    std::vector<MergePattern> out;
    for_each_merge_pattern(blocks, [&](const MergePattern& p) { out.push_back(p); }, budget);
    return out;
}

/// Lebesgue volume t^n / n! of the ordered simplex, accumulated as a product
/// of t / i factors.
inline double simplex_volume(int n, double t) {
    if (n < 0) throw PreconditionError("simplex_volume: negative order");
    double v = 1.0;
    for (int i = 1; i <= n; ++i) v *= t / i;
    return v;
}

/// Operator factors for a pattern at ascending times, latest first, so that
/// multiplying the list left to right gives the time-ordered product.
inline std::vector<Matrix> time_order_selector(const MergePattern& pattern,
                                               std::span<const OperatorFamily> families,
                                               std::span<const double> times) {
    if (times.size() != pattern.size())
        throw PreconditionError("time_order_selector: pattern and time list differ in length");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] < times[i - 1]) throw PreconditionError("time_order_selector: times not sorted");
    std::vector<Matrix> out;
    out.reserve(times.size());
    for (std::size_t i = times.size(); i-- > 0;) {
        const auto& fam = families[static_cast<std::size_t>(pattern.assignment[i])];
        if (times[i] < 0.0 || times[i] > fam.horizon())
            throw DomainError("time_order_selector: time outside [0, T]");
        out.push_back(fam.value(times[i]));
    }
    return out;
}

/// Product of `time_order_selector` output; identity for the empty pattern.
inline Matrix time_ordered_product(const MergePattern& pattern, std::span<const OperatorFamily> families,
                                   std::span<const double> times, Eigen::Index dim) {
    Matrix p = identity(dim);
    for (const auto& m : time_order_selector(pattern, families, times)) p = p * m;
    return p;
}

/// 0-based block of slot index i for blocks (n_1, ..., n_k).
inline int block_of(const MultiIndex& blocks, int i) {
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        if (i < blocks[j]) return static_cast<int>(j);
        i -= blocks[j];
    }
    throw PreconditionError("block_of: index beyond the blocks");
}

}  // namespace opcalc
