#pragma once

#include "cnng/error.hpp"
#include "cnng/kmeans.hpp"
#include "cnng/nn.hpp"
#include "cnng/tree.hpp"

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cnng {

struct ReflectionConfig {
    std::size_t k_specialists = 2;
    std::vector<std::size_t> general_hidden{256};
    std::vector<std::size_t> specialist_hidden{256};
    TrainConfig general_train{0.1, 32, 1, 42, true};
    TrainConfig specialist_train{0.1, 32, 40, 1042, true};
    KMeansParams kmeans{};
    TreeParams tree_params{};
    std::size_t cv_folds = 5;
    /// Unset: an error case is a misclassification. Set: any example whose
    /// cross-entropy under the general network exceeds the threshold.
    std::optional<double> error_loss_threshold;

    void validate() const
    {
        detail::require(k_specialists >= 1, ErrorCode::InvalidArgument, "k_specialists must be at least 1");
        detail::require(cv_folds >= 2, ErrorCode::InvalidArgument, "cv_folds must be at least 2");
        general_train.validate();
        specialist_train.validate();
        tree_params.validate();
        detail::require(kmeans.max_iter >= 1 && kmeans.restarts >= 1 && kmeans.tol >= 0.0,
                        ErrorCode::InvalidArgument, "invalid k-means parameters");
        for (auto w : general_hidden)
            detail::require(w >= 1, ErrorCode::InvalidArgument, "hidden widths must be positive");
        for (auto w : specialist_hidden)
            detail::require(w >= 1, ErrorCode::InvalidArgument, "hidden widths must be positive");
    }
};

/// Network widths for input_dim -> hidden... -> num_classes.
inline std::vector<LayerSpec> architecture(std::size_t input_dim, std::span<const std::size_t> hidden,
                                           std::size_t num_classes)
{
    std::vector<std::size_t> widths{input_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(num_classes);
    return mlp_specs(widths);
}

/// Ordered key=value provenance carried inside a model file.
using Metadata = std::vector<std::pair<std::string, std::string>>;

inline const std::string* find_meta(const Metadata& meta, std::string_view key)
{
    for (const auto& [k, v] : meta)
        if (k == key)
            return &v;
    return nullptr;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v)
{
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

namespace detail {

inline std::string join_widths(std::span<const std::size_t> widths)
{
    std::string out;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i)
            out += ',';
        out += std::to_string(widths[i]);
    }
    return out;
}

inline void echo_train(Metadata& m, const std::string& prefix, const TrainConfig& c)
{
    m.emplace_back(prefix + ".learning_rate", format_double(c.learning_rate));
    m.emplace_back(prefix + ".batch_size", std::to_string(c.batch_size));
    m.emplace_back(prefix + ".epochs", std::to_string(c.epochs));
    m.emplace_back(prefix + ".seed", std::to_string(c.seed));
    m.emplace_back(prefix + ".shuffle", c.shuffle ? "true" : "false");
}

template <typename T>
T parse_number(const std::string& key, const std::string& text)
{
    T v{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        fail(ErrorCode::Malformed, "metadata value for " + key + " is not a number: " + text);
    return v;
}

inline const std::string& need(const Metadata& m, const std::string& key)
{
    const auto* v = find_meta(m, key);
    if (!v)
        fail(ErrorCode::Malformed, "metadata lacks key " + key);
    return *v;
}

inline std::vector<std::size_t> parse_widths(const std::string& key, const std::string& text)
{
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find(',', start);
        if (end == std::string::npos)
            end = text.size();
        out.push_back(parse_number<std::size_t>(key, text.substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& text)
{
    if (text == "true")
        return true;
    if (text == "false")
        return false;
    fail(ErrorCode::Malformed, "metadata value for " + key + " is not a boolean: " + text);
}

inline TrainConfig read_train(const Metadata& m, const std::string& prefix)
{
    TrainConfig c;
    c.learning_rate = parse_number<double>(prefix + ".learning_rate", need(m, prefix + ".learning_rate"));
    c.batch_size = parse_number<std::size_t>(prefix + ".batch_size", need(m, prefix + ".batch_size"));
    c.epochs = parse_number<std::size_t>(prefix + ".epochs", need(m, prefix + ".epochs"));
    c.seed = parse_number<std::uint64_t>(prefix + ".seed", need(m, prefix + ".seed"));
    c.shuffle = parse_bool(prefix + ".shuffle", need(m, prefix + ".shuffle"));
    return c;
}

} // namespace detail

/// Every knob of the config as key=value pairs, in a fixed order.
inline Metadata config_metadata(const ReflectionConfig& c)
{
    Metadata m;
    m.emplace_back("k_specialists", std::to_string(c.k_specialists));
    m.emplace_back("general.hidden", detail::join_widths(c.general_hidden));
    detail::echo_train(m, "general", c.general_train);
    m.emplace_back("specialist.hidden", detail::join_widths(c.specialist_hidden));
    detail::echo_train(m, "specialist", c.specialist_train);
    m.emplace_back("kmeans.seed", std::to_string(c.kmeans.seed));
    m.emplace_back("kmeans.max_iter", std::to_string(c.kmeans.max_iter));
    m.emplace_back("kmeans.tol", format_double(c.kmeans.tol));
    m.emplace_back("kmeans.restarts", std::to_string(c.kmeans.restarts));
    m.emplace_back("tree.max_depth", std::to_string(c.tree_params.max_depth));
    m.emplace_back("tree.min_samples_leaf", std::to_string(c.tree_params.min_samples_leaf));
    m.emplace_back("tree.min_samples_split", std::to_string(c.tree_params.min_samples_split));
    m.emplace_back("tree.balance_classes", c.tree_params.balance_classes ? "true" : "false");
    m.emplace_back("cv_folds", std::to_string(c.cv_folds));
    m.emplace_back("error_loss_threshold",
                   c.error_loss_threshold ? format_double(*c.error_loss_threshold) : std::string("none"));
    return m;
}

/// Inverse of config_metadata.
inline ReflectionConfig config_from_metadata(const Metadata& m)
{
    using detail::need;
    using detail::parse_number;
    ReflectionConfig c;
    c.k_specialists = parse_number<std::size_t>("k_specialists", need(m, "k_specialists"));
    c.general_hidden = detail::parse_widths("general.hidden", need(m, "general.hidden"));
    c.general_train = detail::read_train(m, "general");
    c.specialist_hidden = detail::parse_widths("specialist.hidden", need(m, "specialist.hidden"));
    c.specialist_train = detail::read_train(m, "specialist");
    c.kmeans.seed = parse_number<std::uint64_t>("kmeans.seed", need(m, "kmeans.seed"));
    c.kmeans.max_iter = parse_number<std::size_t>("kmeans.max_iter", need(m, "kmeans.max_iter"));
    c.kmeans.tol = parse_number<double>("kmeans.tol", need(m, "kmeans.tol"));
    c.kmeans.restarts = parse_number<std::size_t>("kmeans.restarts", need(m, "kmeans.restarts"));
    c.kmeans.k = c.k_specialists;
    c.tree_params.max_depth = parse_number<std::size_t>("tree.max_depth", need(m, "tree.max_depth"));
    c.tree_params.min_samples_leaf = parse_number<std::size_t>("tree.min_samples_leaf", need(m, "tree.min_samples_leaf"));
    c.tree_params.min_samples_split =
        parse_number<std::size_t>("tree.min_samples_split", need(m, "tree.min_samples_split"));
    c.tree_params.balance_classes = detail::parse_bool("tree.balance_classes", need(m, "tree.balance_classes"));
    c.cv_folds = parse_number<std::size_t>("cv_folds", need(m, "cv_folds"));
    const auto& thr = need(m, "error_loss_threshold");
    if (thr != "none")
        c.error_loss_threshold = parse_number<double>("error_loss_threshold", thr);
    return c;
}

} // namespace cnng
