#include "hyperscat/partitions.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace hyperscat::partitions {

Partition::Partition(int n, std::vector<std::vector<int>> blocks) : n_(n), blocks_(std::move(blocks)) {
    if (n < 1) throw std::invalid_argument("Partition: n must be >= 1");
    for (auto& b : blocks_) {
        if (b.empty()) throw std::invalid_argument("Partition: empty block");
        std::sort(b.begin(), b.end());
    }
    std::sort(blocks_.begin(), blocks_.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    std::vector<int> seen(static_cast<size_t>(n) + 1, 0);
    int total = 0;
    for (const auto& b : blocks_)
        for (int e : b) {
            if (e < 1 || e > n || seen[static_cast<size_t>(e)]++)
                throw std::invalid_argument("Partition: blocks must tile {1,..,n}");
            ++total;
        }
    if (total != n) throw std::invalid_argument("Partition: blocks must cover {1,..,n}");
}

int Partition::block_of(int e) const {
    for (int i = 0; i < num_blocks(); ++i)
        if (std::binary_search(blocks_[static_cast<size_t>(i)].begin(),
                               blocks_[static_cast<size_t>(i)].end(), e))
            return i;
    throw std::out_of_range("Partition::block_of: element not in {1,..,n}");
}

std::string Partition::str() const {
    std::string s;
    for (size_t i = 0; i < blocks_.size(); ++i) {
        if (i) s += '|';
        for (int e : blocks_[i]) s += std::to_string(e);
    }
    return s;
}

bool Partition::operator<(const Partition& o) const {
    if (n_ != o.n_) return n_ < o.n_;
    return blocks_ < o.blocks_;
}

Partition singletons(int n) {
    std::vector<std::vector<int>> b;
    b.reserve(static_cast<size_t>(n));
    for (int i = 1; i <= n; ++i) b.push_back({i});
    return Partition(n, std::move(b));
}

Partition one_block(int n) {
    std::vector<int> b(static_cast<size_t>(n));
    std::iota(b.begin(), b.end(), 1);
    return Partition(n, {std::move(b)});
}

bool refines(const Partition& fine, const Partition& coarse) {
    if (fine.n() != coarse.n()) return false;
    for (const auto& fb : fine.blocks()) {
        const int host = coarse.block_of(fb.front());
        for (int e : fb)
            if (coarse.block_of(e) != host) return false;
    }
    return true;
}

std::vector<Partition> enumerate_partitions(int n, int k) {
    if (n < 1 || k < 1 || k > n) throw std::invalid_argument("enumerate_partitions: need 1 <= k <= n");
    std::vector<Partition> out;
    // Restricted growth strings: rgs[0] = 0, rgs[i] <= 1 + max(rgs[0..i-1]).
    std::vector<int> rgs(static_cast<size_t>(n), 0);
    std::function<void(int, int)> rec = [&](int i, int mx) {
        if (i == n) {
            if (mx + 1 != k) return;
            std::vector<std::vector<int>> blocks(static_cast<size_t>(k));
            for (int e = 0; e < n; ++e) blocks[static_cast<size_t>(rgs[static_cast<size_t>(e)])].push_back(e + 1);
            out.emplace_back(n, std::move(blocks));
            return;
        }
        for (int v = 0; v <= std::min(mx + 1, k - 1); ++v) {
            rgs[static_cast<size_t>(i)] = v;
            rec(i + 1, std::max(mx, v));
        }
    };
    rec(1, 0);
    if (n == 1) out = {one_block(1)};
    return out;
}

PartitionChain::PartitionChain(int n, std::vector<Partition> links) : n_(n), links_(std::move(links)) {
    if (n < 2) throw std::invalid_argument("PartitionChain: n must be >= 2");
    if (links_.size() != static_cast<size_t>(n - 2))
        throw std::invalid_argument("PartitionChain: need exactly n-2 links");
    for (size_t i = 0; i < links_.size(); ++i) {
        if (links_[i].n() != n || links_[i].num_blocks() != n - 1 - static_cast<int>(i))
            throw std::invalid_argument("PartitionChain: link " + std::to_string(i) + " has wrong rank");
        const Partition& prev = (i == 0) ? singletons(n) : links_[i - 1];
        if (!refines(prev, links_[i]))
            throw std::invalid_argument("PartitionChain: links must coarsen step by step");
    }
}

const Partition& PartitionChain::level(int l) const {
    if (l < 2 || l > n_ - 1) throw std::out_of_range("PartitionChain::level: need 2 <= l <= n-1");
    return links_[static_cast<size_t>(n_ - 1 - l)];
}

std::string PartitionChain::str() const {
    std::string s;
    for (size_t i = 0; i < links_.size(); ++i) {
        if (i) s += " > ";
        s += links_[i].str();
    }
    return s;
}

std::vector<PartitionChain> enumerate_chains(int n) {
    if (n < 2 || n > 7) throw std::invalid_argument("enumerate_chains: supported for 2 <= n <= 7");
    std::vector<PartitionChain> out;
    std::vector<Partition> links;
    std::function<void(const Partition&)> rec = [&](const Partition& cur) {
        if (cur.num_blocks() == 2) {
            out.emplace_back(n, links);
            return;
        }
        const auto& bl = cur.blocks();
        const int m = cur.num_blocks();
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                std::vector<std::vector<int>> nb;
                nb.reserve(static_cast<size_t>(m - 1));
                std::vector<int> merged = bl[static_cast<size_t>(i)];
                merged.insert(merged.end(), bl[static_cast<size_t>(j)].begin(), bl[static_cast<size_t>(j)].end());
                nb.push_back(std::move(merged));
                for (int t = 0; t < m; ++t)
                    if (t != i && t != j) nb.push_back(bl[static_cast<size_t>(t)]);
                Partition next(n, std::move(nb));
                links.push_back(next);
                rec(next);
                links.pop_back();
            }
    };
    rec(singletons(n));
    return out;
}

std::int64_t chain_count_formula(int n) {
    if (n < 2 || n > 10) throw std::invalid_argument("chain_count_formula: supported for 2 <= n <= 10");
    // 2^{1-n} n! (n-1)! = prod_{l=3..n} C(l,2)
    std::int64_t c = 1;
    for (int l = 3; l <= n; ++l) c *= static_cast<std::int64_t>(l) * (l - 1) / 2;
    return c;
}

void FormalSum::add(const OpLabel& l, std::int64_t c) {
    if (c == 0) return;
    auto it = terms_.find(l);
    if (it == terms_.end()) {
        terms_.emplace(l, c);
    } else {
        it->second += c;
        if (it->second == 0) terms_.erase(it);
    }
}

FormalSum& FormalSum::operator+=(const FormalSum& o) {
    for (const auto& [l, c] : o.terms_) add(l, c);
    return *this;
}

FormalSum& FormalSum::operator-=(const FormalSum& o) {
    for (const auto& [l, c] : o.terms_) add(l, -c);
    return *this;
}

const std::map<OpLabel, std::int64_t>& FormalSum::terms() const { return terms_; }

namespace {

/// All partitions of {1,..,n} strictly finer than `a` (more blocks, each
/// contained in a block of `a`), down to and including the fully split one.
std::vector<Partition> strict_refinements(const Partition& a) {
    std::vector<Partition> out;
    const int n = a.n();
    for (int k = a.num_blocks() + 1; k <= n; ++k)
        for (const auto& p : enumerate_partitions(n, k))
            if (refines(p, a)) out.push_back(p);
    return out;
}

FormalSum expand_impl(const Partition& a, std::map<Partition, FormalSum>& memo) {
    if (auto it = memo.find(a); it != memo.end()) return it->second;
    FormalSum s;
    if (a.num_blocks() == a.n()) {
        // Fully broken-up system: nothing connects the clusters.
        memo.emplace(a, s);
        return s;
    }
    s.add({OpLabel::Kind::full, a}, 1);
    for (const auto& b : strict_refinements(a)) s -= expand_impl(b, memo);
    memo.emplace(a, s);
    return s;
}

}  // namespace

FormalSum connected_part_expansion(const Partition& a) {
    if (a.num_blocks() == a.n())
        throw std::invalid_argument(
            "connected_part_expansion: the fully split partition has no connected part");
    FormalSum s;
    s.add({OpLabel::Kind::connected, a}, 1);
    for (const auto& b : strict_refinements(a))
        if (b.num_blocks() != b.n()) s.add({OpLabel::Kind::connected, b}, 1);
    return s;
}

FormalSum expand_connected_to_full(const Partition& a) {
    std::map<Partition, FormalSum> memo;
    return expand_impl(a, memo);
}

}  // namespace hyperscat::partitions
