#pragma once

// CART classification tree over dense real features, used as the task
// classifier that picks which network handles an input.

#include "cnng/dataset.hpp"
#include "cnng/error.hpp"
#include "cnng/matrix.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace cnng {

struct TreeParams {
    std::size_t max_depth = 12;
    std::size_t min_samples_leaf = 5;
    std::size_t min_samples_split = 10;
    bool balance_classes = false;

    void validate() const
    {
        detail::require(max_depth >= 1, ErrorCode::InvalidArgument, "max_depth must be at least 1");
        detail::require(min_samples_leaf >= 1, ErrorCode::InvalidArgument, "min_samples_leaf must be at least 1");
        detail::require(min_samples_split >= 2, ErrorCode::InvalidArgument,
                        "min_samples_split must be at least 2");
    }

    friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

/// Nodes are stored in pre-order: an internal node's left child is the next
/// node, its right child is at `right`.
struct TreeNode {
    bool leaf = true;
    std::uint32_t feature = 0;
    double threshold = 0.0;
    std::uint32_t right = 0;
    std::uint32_t network_id = 0;
    std::vector<double> class_counts; // leaves only; weighted when balancing

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;
    std::size_t num_network_ids = 0;
    TreeParams params;

    std::size_t depth() const
    {
        std::size_t deepest = 0;
        std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            deepest = std::max(deepest, d);
            if (!nodes[i].leaf) {
                stack.push_back({i + 1, d + 1});
                stack.push_back({nodes[i].right, d + 1});
            }
        }
        return deepest;
    }

    std::size_t leaf_count() const
    {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.leaf; }));
    }

    /// A tree that sends every input to `id`.
    static DecisionTree constant(std::uint32_t id, std::size_t num_network_ids)
    {
        detail::require(id < num_network_ids, ErrorCode::OutOfRange, "network id out of range");
        DecisionTree t;
        TreeNode leaf;
        leaf.network_id = id;
        leaf.class_counts.assign(num_network_ids, 0.0);
        t.nodes.push_back(std::move(leaf));
        t.num_network_ids = num_network_ids;
        return t;
    }

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

/// Two candidate impurities closer than this count as tied.
inline constexpr double kImpurityTieEps = 1e-12;

/// Gini impurity of a (possibly weighted) count vector.
inline double gini(std::span<const double> counts) noexcept
{
    double total = 0.0;
    double sq = 0.0;
    for (auto c : counts) {
        total += c;
        sq += c * c;
    }
    return total > 0.0 ? 1.0 - sq / (total * total) : 0.0;
}

/// Sample-weighted mean Gini of two children.
inline double split_impurity(std::span<const double> left, std::span<const double> right) noexcept
{
    double wl = 0.0, wr = 0.0, sl = 0.0, sr = 0.0;
    for (auto c : left) {
        wl += c;
        sl += c * c;
    }
    for (auto c : right) {
        wr += c;
        sr += c * c;
    }
    const double total = wl + wr;
    if (total <= 0.0)
        return 0.0;
    const double gl = wl > 0.0 ? wl - sl / wl : 0.0;
    const double gr = wr > 0.0 ? wr - sr / wr : 0.0;
    return (gl + gr) / total;
}

/// Per-sample weights: 1, or inversely proportional to class frequency
/// (normalised so the weights sum to the sample count).
inline std::vector<double> class_weights(std::span<const std::uint32_t> ids, std::size_t num_ids, bool balance)
{
    std::vector<double> w(ids.size(), 1.0);
    if (!balance)
        return w;
    std::vector<std::size_t> freq(num_ids, 0);
    for (auto id : ids)
        ++freq[id];
    const auto present = static_cast<double>(std::count_if(freq.begin(), freq.end(), [](auto f) { return f > 0; }));
    for (std::size_t i = 0; i < ids.size(); ++i)
        w[i] = static_cast<double>(ids.size()) / (present * static_cast<double>(freq[ids[i]]));
    return w;
}

namespace detail {

inline std::uint32_t argmax_counts(std::span<const double> counts) noexcept
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[best])
            best = i;
    return static_cast<std::uint32_t>(best);
}

// Tree under construction, nodes in creation (breadth-first) order.
struct BuildNode {
    std::size_t depth = 0;
    std::size_t count = 0;
    std::vector<double> totals;
    bool leaf = true;
    std::uint32_t feature = 0;
    double threshold = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
};

struct SplitCandidate {
    bool found = false;
    double impurity = std::numeric_limits<double>::infinity();
    std::uint32_t feature = 0;
    double threshold = 0.0;
};

inline std::vector<TreeNode> to_preorder(const std::vector<BuildNode>& built, std::size_t num_ids)
{
    std::vector<TreeNode> out;
    out.reserve(built.size());
    // Pre-order via explicit stack; right-child indices are patched once known.
    struct Frame {
        std::size_t built_index;
        std::size_t parent_out; // SIZE_MAX for none
    };
    std::vector<Frame> stack{{0, std::numeric_limits<std::size_t>::max()}};
    while (!stack.empty()) {
        const Frame f = stack.back();
        stack.pop_back();
        const auto& b = built[f.built_index];
        const auto here = static_cast<std::uint32_t>(out.size());
        if (f.parent_out != std::numeric_limits<std::size_t>::max())
            out[f.parent_out].right = here;
        TreeNode node;
        if (b.leaf) {
            node.leaf = true;
            node.class_counts = b.totals;
            node.class_counts.resize(num_ids, 0.0);
            node.network_id = argmax_counts(node.class_counts);
        } else {
            node.leaf = false;
            node.feature = b.feature;
            node.threshold = b.threshold;
        }
        out.push_back(std::move(node));
        if (!b.leaf) {
            // The right child is visited after the whole left subtree and
            // tells its parent where it landed.
            stack.push_back({b.right, here});
            stack.push_back({b.left, std::numeric_limits<std::size_t>::max()});
        }
    }
    return out;
}

inline bool is_pure(std::span<const double> totals) noexcept
{
    return std::count_if(totals.begin(), totals.end(), [](double c) { return c > 0.0; }) <= 1;
}

} // namespace detail

/// Greedy CART with Gini impurity. Candidate thresholds are midpoints of
/// consecutive distinct feature values; ties in split quality go to the
/// lowest feature index, then the lowest threshold. Built one depth level at
/// a time from per-feature presorted orders.
///
/// `value(i, f)` yields feature f of sample i for i < rows, f < cols.
template <typename ValueFn>
DecisionTree tree_fit(std::size_t rows, std::size_t cols, ValueFn&& value, std::span<const std::uint32_t> ids,
                      std::size_t num_ids, const TreeParams& params)
{
    params.validate();
    detail::require(!ids.empty(), ErrorCode::EmptyInput, "tree training set is empty");
    detail::require(rows == ids.size(), ErrorCode::DimensionMismatch, "inputs and network ids differ in length");
    detail::require(cols >= 1, ErrorCode::InvalidArgument, "inputs need at least one feature");
    detail::require(num_ids >= 1, ErrorCode::InvalidArgument, "need at least one network id");
    for (auto id : ids)
        detail::require(id < num_ids, ErrorCode::OutOfRange, "network id out of range");

    const std::size_t n = ids.size();
    const std::size_t d = cols;
    const std::size_t C = num_ids;
    const auto weight = class_weights(ids, num_ids, params.balance_classes);

    // Per feature: sample indices sorted by value (stable on index), and the
    // values in that order.
    std::vector<std::uint32_t> order(n * d);
    std::vector<double> sorted(n * d);
    {
        std::vector<std::uint32_t> idx(n);
        for (std::size_t f = 0; f < d; ++f) {
            std::iota(idx.begin(), idx.end(), 0u);
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::uint32_t a, std::uint32_t b) { return value(a, f) < value(b, f); });
            for (std::size_t j = 0; j < n; ++j) {
                order[f * n + j] = idx[j];
                sorted[f * n + j] = value(idx[j], f);
            }
        }
    }

    std::vector<detail::BuildNode> nodes(1);
    nodes[0].totals.assign(C, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        nodes[0].totals[ids[i]] += weight[i];
    nodes[0].count = n;

    constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> node_of(n, 0); // build index, or kNone once in a finished leaf
    std::vector<std::size_t> frontier{0};

    while (!frontier.empty()) {
        // Nodes at this level that may still split, mapped to a dense slot.
        std::vector<std::uint32_t> slot_of(nodes.size(), kNone);
        std::vector<std::size_t> active;
        for (auto b : frontier) {
            const auto& node = nodes[b];
            if (node.depth >= params.max_depth || node.count < params.min_samples_split ||
                node.count < 2 * params.min_samples_leaf || detail::is_pure(node.totals))
                continue;
            slot_of[b] = static_cast<std::uint32_t>(active.size());
            active.push_back(b);
        }
        for (std::size_t i = 0; i < n; ++i)
            if (node_of[i] != kNone && slot_of[node_of[i]] == kNone)
                node_of[i] = kNone;
        if (active.empty())
            break;

        const std::size_t A = active.size();
        std::vector<detail::SplitCandidate> best(A);
        std::vector<double> left(A * C);
        std::vector<double> right(C);
        std::vector<std::size_t> left_n(A);
        std::vector<double> last(A);

        for (std::size_t f = 0; f < d; ++f) {
            std::fill(left.begin(), left.end(), 0.0);
            std::fill(left_n.begin(), left_n.end(), 0);
            const std::uint32_t* ord = order.data() + f * n;
            const double* val = sorted.data() + f * n;
            for (std::size_t j = 0; j < n; ++j) {
                const std::uint32_t s = ord[j];
                const std::uint32_t b = node_of[s];
                if (b == kNone)
                    continue;
                const std::uint32_t a = slot_of[b];
                const double v = val[j];
                std::size_t ln = left_n[a];
                if (ln > 0 && v > last[a]) {
                    const std::size_t rn = nodes[b].count - ln;
                    if (ln >= params.min_samples_leaf && rn >= params.min_samples_leaf) {
                        const double* lc = left.data() + a * C;
                        for (std::size_t c = 0; c < C; ++c)
                            right[c] = nodes[b].totals[c] - lc[c];
                        const double imp = split_impurity({lc, C}, right);
                        if (imp < best[a].impurity - kImpurityTieEps)
                            best[a] = {true, imp, static_cast<std::uint32_t>(f), last[a] + (v - last[a]) / 2.0};
                    }
                }
                left[a * C + ids[s]] += weight[s];
                left_n[a] = ln + 1;
                last[a] = v;
            }
        }

        std::vector<std::size_t> next;
        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t b = active[a];
            if (!best[a].found || !(best[a].impurity < gini(nodes[b].totals) - kImpurityTieEps))
                continue;
            const std::size_t l = nodes.size();
            nodes.resize(l + 2);
            for (std::size_t c : {l, l + 1}) {
                nodes[c].depth = nodes[b].depth + 1;
                nodes[c].totals.assign(C, 0.0);
            }
            nodes[b].leaf = false;
            nodes[b].feature = best[a].feature;
            nodes[b].threshold = best[a].threshold;
            nodes[b].left = l;
            nodes[b].right = l + 1;
            next.push_back(l);
            next.push_back(l + 1);
        }
        // Route samples of split nodes to their children.
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t b = node_of[i];
            if (b == kNone)
                continue;
            auto& node = nodes[b];
            if (node.leaf) {
                node_of[i] = kNone;
                continue;
            }
            const std::size_t child = value(i, node.feature) <= node.threshold ? node.left : node.right;
            nodes[child].totals[ids[i]] += weight[i];
            ++nodes[child].count;
            node_of[i] = static_cast<std::uint32_t>(child);
        }
        frontier = std::move(next);
    }

    DecisionTree tree;
    tree.nodes = detail::to_preorder(nodes, C);
    tree.num_network_ids = num_ids;
    tree.params = params;
    return tree;
}

inline DecisionTree tree_fit(const Matrix& inputs, std::span<const std::uint32_t> ids, std::size_t num_ids,
                             const TreeParams& params)
{
    return tree_fit(
        inputs.rows(), inputs.cols(), [&](std::size_t i, std::size_t f) { return inputs(i, f); }, ids, num_ids,
        params);
}

inline DecisionTree tree_fit(const Dataset& inputs, std::span<const std::uint32_t> ids, std::size_t num_ids,
                             const TreeParams& params)
{
    return tree_fit(
        inputs.size(), inputs.dim(), [&](std::size_t i, std::size_t f) { return inputs.input(i)[f]; }, ids,
        num_ids, params);
}

inline DecisionTree tree_fit(std::span<const std::vector<double>> inputs, std::span<const std::uint32_t> ids,
                             std::size_t num_ids, const TreeParams& params)
{
    detail::require(!inputs.empty(), ErrorCode::EmptyInput, "tree training set is empty");
    const std::size_t dim = inputs.front().size();
    std::vector<double> flat;
    for (const auto& x : inputs) {
        detail::require(x.size() == dim, ErrorCode::DimensionMismatch, "inputs have differing dimensions");
        flat.insert(flat.end(), x.begin(), x.end());
    }
    return tree_fit(Matrix(inputs.size(), dim, std::move(flat)), ids, num_ids, params);
}

inline std::uint32_t tree_predict(const DecisionTree& tree, std::span<const double> x)
{
    detail::require(!tree.nodes.empty(), ErrorCode::InvalidArgument, "tree has no nodes");
    std::uint32_t i = 0;
    while (!tree.nodes[i].leaf) {
        const auto& node = tree.nodes[i];
        detail::require(node.feature < x.size(), ErrorCode::OutOfRange, "tree feature index exceeds input length");
        i = x[node.feature] <= node.threshold ? i + 1 : node.right;
    }
    return tree.nodes[i].network_id;
}

} // namespace cnng
