#pragma once

// Reflection: train a general network, collect the training examples it gets
// wrong, split them with K-Means, train one specialist per cluster and fit a
// decision tree that routes each input to the network that should handle it.

#include "cnng/checksum.hpp"
#include "cnng/dataset.hpp"
#include "cnng/error.hpp"
#include "cnng/kmeans.hpp"
#include "cnng/nn.hpp"
#include "cnng/reflect_config.hpp"
#include "cnng/rng.hpp"
#include "cnng/tree.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cnng {

struct CnngModel {
    FeedforwardNetwork general;
    std::vector<FeedforwardNetwork> specialists;
    DecisionTree task_classifier;
    KMeansModel kmeans;
    std::size_t num_classes = 0;
    Metadata metadata;

    std::size_t input_dim() const noexcept { return general.input_dim(); }
    std::size_t num_networks() const noexcept { return 1 + specialists.size(); }

    const FeedforwardNetwork& network(std::size_t id) const { return id == 0 ? general : specialists.at(id - 1); }

    void validate() const
    {
        detail::require(specialists.size() == kmeans.k() && task_classifier.num_network_ids == specialists.size() + 1,
                        ErrorCode::Malformed, "specialist count, k and router id count disagree");
        detail::require(general.num_classes() == num_classes, ErrorCode::Malformed,
                        "general network class count mismatch");
        for (const auto& s : specialists)
            detail::require(s.input_dim() == general.input_dim() && s.num_classes() == num_classes,
                            ErrorCode::Malformed, "specialist shape differs from general network");
        detail::require(kmeans.dim() == general.input_dim(), ErrorCode::Malformed,
                        "centroid dimension differs from network input");
        for (const auto& node : task_classifier.nodes) {
            if (node.leaf)
                detail::require(node.network_id < task_classifier.num_network_ids, ErrorCode::Malformed,
                                "router leaf names a missing network");
            else
                detail::require(node.feature < general.input_dim(), ErrorCode::Malformed,
                                "router splits on a feature outside the input");
        }
    }

    friend bool operator==(const CnngModel&, const CnngModel&) = default;
};

struct ErrorSet {
    std::vector<std::size_t> indices;
    Dataset examples; // inputs and true labels, in dataset order

    std::size_t size() const noexcept { return indices.size(); }
    bool empty() const noexcept { return indices.empty(); }
};

/// Training examples the network gets wrong, in dataset order.
inline ErrorSet collect_errors(const FeedforwardNetwork& net, const Dataset& data,
                               std::optional<double> loss_threshold = std::nullopt)
{
    detail::require(!data.empty(), ErrorCode::EmptyInput, "dataset is empty");
    detail::require(data.dim() == net.input_dim(), ErrorCode::DimensionMismatch,
                    "dataset dimension does not match network input dimension");
    ErrorSet out;
    detail::Workspace ws(net);
    for (std::size_t i = 0; i < data.size(); ++i) {
        detail::forward_into(net, data.input(i), ws);
        const bool wrong = loss_threshold
                               ? detail::cross_entropy_from_logits(ws.logits, data.label(i)) > *loss_threshold
                               : argmax(ws.act.back()) != data.label(i);
        if (wrong)
            out.indices.push_back(i);
    }
    out.examples = data.subset(out.indices);
    return out;
}

inline Matrix inputs_matrix(const Dataset& data)
{
    detail::require(!data.empty(), ErrorCode::EmptyInput, "dataset is empty");
    std::vector<double> flat;
    flat.reserve(data.size() * data.dim());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.input(i);
        flat.insert(flat.end(), x.begin(), x.end());
    }
    return Matrix(data.size(), data.dim(), std::move(flat));
}

/// Router targets: 0 where the general network is right, otherwise
/// 1 + the cluster of the error case.
inline std::vector<std::uint32_t> router_labels(std::size_t n, const ErrorSet& errors,
                                                std::span<const std::uint32_t> cluster_of_error)
{
    std::vector<std::uint32_t> ids(n, 0);
    for (std::size_t e = 0; e < errors.size(); ++e)
        ids[errors.indices[e]] = 1 + cluster_of_error[e];
    return ids;
}

inline std::vector<Dataset> group_by_cluster(const ErrorSet& errors, std::span<const std::uint32_t> assignment,
                                             std::size_t k)
{
    std::vector<std::vector<std::size_t>> rows(k);
    for (std::size_t e = 0; e < errors.size(); ++e)
        rows[assignment[e]].push_back(e);
    std::vector<Dataset> out;
    for (const auto& r : rows)
        out.push_back(errors.examples.subset(r));
    return out;
}

/// Seed for specialist `index` (0-based) derived from the specialist config.
inline TrainConfig specialist_config(const ReflectionConfig& config, std::size_t index)
{
    TrainConfig c = config.specialist_train;
    c.seed = derive_seed(config.specialist_train.seed, index);
    return c;
}

struct ReflectionResult {
    CnngModel model;
    ErrorSet errors;
    std::vector<std::uint32_t> cluster_of_error;
    std::vector<Dataset> clusters; // specialist i trains on clusters[i]
    std::vector<std::size_t> sgd_steps; // per network id
    double general_train_accuracy = 0.0;
    double cnng_train_accuracy = 0.0;
};

inline std::uint32_t route(const CnngModel& model, std::span<const double> x)
{
    detail::require(x.size() == model.input_dim(), ErrorCode::DimensionMismatch,
                    "input length does not match model input dimension");
    return tree_predict(model.task_classifier, x);
}

/// The routed network's prediction. Exactly one network runs.
inline std::uint32_t cnng_predict(const CnngModel& model, std::span<const double> x)
{
    const auto id = route(model, x);
    return predict(model.network(id), x);
}

inline double cnng_accuracy(const CnngModel& model, const Dataset& data)
{
    detail::require(!data.empty(), ErrorCode::EmptyInput, "dataset is empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        correct += cnng_predict(model, data.input(i)) == data.label(i);
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Everything after the general network's training: errors, clusters,
/// specialists, router.
inline ReflectionResult reflect_from(FeedforwardNetwork general, const Dataset& train_set,
                                     const ReflectionConfig& config, std::size_t general_steps = 0)
{
    config.validate();
    detail::require(!train_set.empty(), ErrorCode::EmptyInput, "training set is empty");

    ReflectionResult r;
    r.errors = collect_errors(general, train_set, config.error_loss_threshold);
    if (r.errors.empty())
        detail::fail(ErrorCode::NothingToReflect, "the general network has no error cases on the training set");
    if (r.errors.size() < config.k_specialists)
        detail::fail(ErrorCode::TooFewErrors, std::to_string(r.errors.size()) + " error cases cannot form " +
                                                  std::to_string(config.k_specialists) +
                                                  " clusters; reduce k");

    KMeansParams km = config.kmeans;
    km.k = config.k_specialists;
    auto fit = kmeans_fit_best(inputs_matrix(r.errors.examples), km);
    r.cluster_of_error = std::move(fit.assignments);
    r.clusters = group_by_cluster(r.errors, r.cluster_of_error, km.k);

    const auto num_classes = general.num_classes();
    const auto specs = architecture(train_set.dim(), config.specialist_hidden, num_classes);
    r.sgd_steps.push_back(general_steps);
    std::vector<FeedforwardNetwork> specialists;
    for (std::size_t i = 0; i < km.k; ++i) {
        const auto tc = specialist_config(config, i);
        TrainLog log;
        specialists.push_back(train(init_network(specs, tc.seed), r.clusters[i], tc, &log));
        r.sgd_steps.push_back(log.sgd_steps);
    }

    const auto ids = router_labels(train_set.size(), r.errors, r.cluster_of_error);
    auto tree = tree_fit(train_set, ids, km.k + 1, config.tree_params);

    r.model.general = std::move(general);
    r.model.specialists = std::move(specialists);
    r.model.task_classifier = std::move(tree);
    r.model.kmeans = std::move(fit.model);
    r.model.num_classes = num_classes;
    r.model.validate();

    r.general_train_accuracy = accuracy(r.model.general, train_set);
    r.cnng_train_accuracy = cnng_accuracy(r.model, train_set);

    auto& meta = r.model.metadata;
    meta = config_metadata(config);
    meta.emplace_back("dataset.name", train_set.name());
    meta.emplace_back("dataset.size", std::to_string(train_set.size()));
    meta.emplace_back("dataset.fingerprint", std::to_string(dataset_fingerprint(train_set)));
    meta.emplace_back("train.error_count", std::to_string(r.errors.size()));
    meta.emplace_back("train.general_accuracy", format_double(r.general_train_accuracy));
    meta.emplace_back("train.cnng_accuracy", format_double(r.cnng_train_accuracy));
    for (std::size_t i = 0; i < r.sgd_steps.size(); ++i)
        meta.emplace_back("train.sgd_steps." + std::to_string(i), std::to_string(r.sgd_steps[i]));
    return r;
}

/// The full pipeline: general network on all of `train_set`, then reflection.
inline ReflectionResult reflect(const Dataset& train_set, const ReflectionConfig& config)
{
    config.validate();
    detail::require(!train_set.empty(), ErrorCode::EmptyInput, "training set is empty");
    const auto specs = architecture(train_set.dim(), config.general_hidden, train_set.num_classes());
    TrainLog log;
    auto general = train(init_network(specs, config.general_train.seed), train_set, config.general_train, &log);
    return reflect_from(std::move(general), train_set, config, log.sgd_steps);
}

/// Recomputes the specialist training clusters from the training data: the
/// general network's error cases grouped by nearest centroid.
inline std::vector<Dataset> recover_clusters(const CnngModel& model, const Dataset& train_set,
                                             std::optional<double> loss_threshold = std::nullopt)
{
    const auto errors = collect_errors(model.general, train_set, loss_threshold);
    std::vector<std::uint32_t> assign(errors.size());
    for (std::size_t e = 0; e < errors.size(); ++e)
        assign[e] = kmeans_assign(model.kmeans, errors.examples.input(e));
    return group_by_cluster(errors, assign, model.kmeans.k());
}

} // namespace cnng
