#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyperscat::partitions {

/// A partition of {1,..,n} into disjoint non-empty blocks, stored in canonical
/// form: elements ascending within each block, blocks ordered by their minimum
/// element.  The number of blocks is its "rank" in the cluster-decomposition
/// sense: a k-block partition groups n particles into k freely moving clusters.
class Partition {
public:
    Partition() = default;
    /// Construct from arbitrary blocks; canonicalizes and validates that the
    /// blocks tile {1,..,n} exactly.
    Partition(int n, std::vector<std::vector<int>> blocks);

    int n() const { return n_; }
    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    const std::vector<std::vector<int>>& blocks() const { return blocks_; }

    /// Index of the block containing element e (1-based element).
    int block_of(int e) const;

    /// Compact display form, e.g. "12|3" for {{1,2},{3}}.
    std::string str() const;

    bool operator==(const Partition& o) const { return n_ == o.n_ && blocks_ == o.blocks_; }
    bool operator<(const Partition& o) const;

private:
    int n_ = 0;
    std::vector<std::vector<int>> blocks_;
};

/// The finest partition: n singleton blocks.
Partition singletons(int n);
/// The coarsest partition: one block {1,..,n}.
Partition one_block(int n);

/// True if every block of `fine` is contained in some block of `coarse`.
bool refines(const Partition& fine, const Partition& coarse);

/// All partitions of {1,..,n} with exactly k blocks (Stirling number of the
/// second kind S(n,k) of them), enumerated via restricted growth strings.
std::vector<Partition> enumerate_partitions(int n, int k);

/// A maximal chain of cluster decompositions
///     a_{N-1} > a_{N-2} > ... > a_2,
/// where a_l has exactly l blocks and each step merges exactly two blocks.
/// links[0] is a_{N-1} (the pair partition) and links.back() is a_2.
/// For N = 2 the chain is empty apart from the implicit endpoints.
class PartitionChain {
public:
    PartitionChain() = default;
    explicit PartitionChain(int n, std::vector<Partition> links);

    int n() const { return n_; }
    /// Partition with exactly l blocks, 2 <= l <= n-1.
    const Partition& level(int l) const;
    const std::vector<Partition>& links() const { return links_; }
    std::string str() const;

private:
    int n_ = 0;
    std::vector<Partition> links_;  // links_[i] has n-1-i blocks
};

/// Every maximal chain from the singleton partition down to 2 blocks, built by
/// recursively merging one pair of blocks at a time.  Count is
/// 2^{1-n} n! (n-1)!.  Guarded to n <= 7 (n = 7 already gives 56700 chains).
std::vector<PartitionChain> enumerate_chains(int n);

/// Closed-form chain count 2^{1-n} n! (n-1)!, exact in 64-bit for n <= 10.
std::int64_t chain_count_formula(int n);

/// A formal integer combination of labelled operators.  Labels are either the
/// full transition operator attached to a partition ("full") or its connected
/// part ("connected").  Used to verify that the connected-part recursion
/// telescopes: summing the connected parts of all partitions with >= 2 blocks
/// reproduces the full 2-block operators exactly once each.
struct OpLabel {
    enum class Kind { full, connected };
    Kind kind;
    Partition part;

    bool operator<(const OpLabel& o) const {
        if (kind != o.kind) return kind < o.kind;
        return part < o.part;
    }
};

class FormalSum {
public:
    void add(const OpLabel& l, std::int64_t c);
    FormalSum& operator+=(const FormalSum& o);
    FormalSum& operator-=(const FormalSum& o);
    /// Drops zero coefficients.
    const std::map<OpLabel, std::int64_t>& terms() const;

private:
    mutable std::map<OpLabel, std::int64_t> terms_;
};

/// Cluster expansion of the full operator attached to partition a:
///     full(a) = connected(a) + sum_{b strictly finer than a} connected(b),
/// where b runs over proper refinements of a excluding the fully split
/// partition, whose connected part vanishes (no interaction couples all
/// clusters).  Returns the right-hand side as "connected" labels, all with
/// coefficient +1.  Throws if `a` is itself the fully split partition.
FormalSum connected_part_expansion(const Partition& a);

/// Expands connected(a) entirely into "full" labels via the signed
/// inclusion-exclusion recursion
///     connected(a) = full(a) - sum_{b strictly finer} connected(b),
/// memoized internally per call.  connected(fully split) expands to zero.
FormalSum expand_connected_to_full(const Partition& a);

}  // namespace hyperscat::partitions
