#pragma once

#include "cnng/dataset.hpp"
#include "cnng/error.hpp"
#include "cnng/nn.hpp"
#include "cnng/reflect.hpp"
#include "cnng/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cnng {

struct NetworkReport {
    std::size_t network_id = 0;
    std::size_t used_count = 0;
    double used_fraction = 0.0;
    /// Standalone accuracy on the whole test set.
    double overall_accuracy = 0.0;
    /// General network: same as overall. Specialist: cross-validated accuracy
    /// of freshly trained copies on its own error cluster.
    std::optional<double> specific_task_accuracy;
    std::size_t cv_folds_used = 0;
    std::size_t cluster_size = 0;
    /// Accuracy on the test inputs routed here, and the general network's
    /// accuracy on those same inputs.
    std::optional<double> routed_accuracy;
    std::optional<double> general_on_routed_accuracy;
    std::size_t sgd_steps = 0;
};

struct EvaluationReport {
    std::string dataset;
    std::size_t total = 0;
    /// Test inputs the group misclassifies.
    std::size_t error_count = 0;
    double overall_accuracy = 0.0;
    /// The general network alone, i.e. the single-network baseline.
    double general_accuracy = 0.0;
    std::vector<NetworkReport> per_network;
    /// Training-set error cases behind the specialists, when known.
    std::optional<std::size_t> reflection_error_count;
    std::optional<std::size_t> reflection_train_size;
    std::vector<std::string> notes;
};

struct EvalOptions {
    std::size_t cv_folds = 5;
    /// Architecture and training schedule for the cross-validation copies.
    std::vector<std::size_t> specialist_hidden{256};
    TrainConfig specialist_train{0.1, 32, 40, 1042, true};
};

inline EvalOptions eval_options(const ReflectionConfig& config)
{
    return {config.cv_folds, config.specialist_hidden, config.specialist_train};
}

struct CrossValidation {
    double mean_accuracy = 0.0;
    std::size_t folds = 0;
};

/// k-fold accuracy of networks freshly initialised and trained on the other
/// folds. Rows are dealt to folds round-robin after a seeded shuffle.
inline CrossValidation cross_validate(const Dataset& data, std::span<const LayerSpec> specs,
                                      const TrainConfig& train_config, std::size_t folds)
{
    detail::require(folds >= 2, ErrorCode::InvalidArgument, "cross-validation needs at least 2 folds");
    detail::require(data.size() >= folds, ErrorCode::InvalidArgument, "more folds than examples");
    const auto perm = permutation(data.size(), derive_seed(train_config.seed, 0xcf));
    double sum = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> fit_rows, held_rows;
        for (std::size_t j = 0; j < perm.size(); ++j)
            (j % folds == f ? held_rows : fit_rows).push_back(perm[j]);
        TrainConfig tc = train_config;
        tc.seed = derive_seed(train_config.seed, 0x100 + f);
        const auto net = train(init_network(specs, tc.seed), data.subset(fit_rows), tc);
        sum += accuracy(net, data.subset(held_rows));
    }
    return {sum / static_cast<double>(folds), folds};
}

/// Routed accuracy of the group plus per-network usage and accuracies.
/// `clusters[i]` is the training cluster of specialist i; pass an empty span
/// to skip the cross-validated specialist accuracies.
inline EvaluationReport evaluate(const CnngModel& model, const Dataset& test_set, std::span<const Dataset> clusters,
                                 const EvalOptions& options)
{
    detail::require(!test_set.empty(), ErrorCode::EmptyInput, "test set is empty");
    detail::require(test_set.dim() == model.input_dim(), ErrorCode::DimensionMismatch,
                    "test set dimension does not match the model");
    detail::require(clusters.empty() || clusters.size() == model.specialists.size(), ErrorCode::InvalidArgument,
                    "need one cluster per specialist");
    detail::require(options.cv_folds >= 2, ErrorCode::InvalidArgument, "cv_folds must be at least 2");

    const std::size_t n = test_set.size();
    const std::size_t nets = model.num_networks();
    std::vector<std::vector<std::uint32_t>> predictions;
    for (std::size_t id = 0; id < nets; ++id)
        predictions.push_back(predict_all(model.network(id), test_set));

    std::vector<std::size_t> used(nets, 0), routed_right(nets, 0), general_right_on_routed(nets, 0),
        standalone_right(nets, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = test_set.label(i);
        const auto id = route(model, test_set.input(i));
        ++used[id];
        const bool ok = predictions[id][i] == label;
        correct += ok;
        routed_right[id] += ok;
        general_right_on_routed[id] += predictions[0][i] == label;
        for (std::size_t k = 0; k < nets; ++k)
            standalone_right[k] += predictions[k][i] == label;
    }

    const auto frac = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };
    EvaluationReport report;
    report.dataset = test_set.name();
    report.total = n;
    report.error_count = n - correct;
    report.overall_accuracy = frac(correct, n);
    report.general_accuracy = frac(standalone_right[0], n);

    const auto specs = architecture(model.input_dim(), options.specialist_hidden, model.num_classes);
    for (std::size_t id = 0; id < nets; ++id) {
        NetworkReport r;
        r.network_id = id;
        r.used_count = used[id];
        r.used_fraction = frac(used[id], n);
        r.overall_accuracy = frac(standalone_right[id], n);
        if (used[id] > 0) {
            r.routed_accuracy = frac(routed_right[id], used[id]);
            r.general_on_routed_accuracy = frac(general_right_on_routed[id], used[id]);
        }
        if (const auto* steps = find_meta(model.metadata, "train.sgd_steps." + std::to_string(id)))
            r.sgd_steps = std::stoull(*steps);
        if (id == 0) {
            r.specific_task_accuracy = r.overall_accuracy;
        } else if (!clusters.empty()) {
            const Dataset& cluster = clusters[id - 1];
            r.cluster_size = cluster.size();
            std::size_t folds = options.cv_folds;
            if (cluster.size() < folds) {
                folds = cluster.size();
                report.notes.push_back("specialist " + std::to_string(id) + ": cluster of " +
                                       std::to_string(cluster.size()) + " examples, folds reduced from " +
                                       std::to_string(options.cv_folds) + " to " + std::to_string(folds));
            }
            if (folds >= 2) {
                TrainConfig tc = options.specialist_train;
                tc.seed = derive_seed(options.specialist_train.seed, id - 1);
                const auto cv = cross_validate(cluster, specs, tc, folds);
                r.specific_task_accuracy = cv.mean_accuracy;
                r.cv_folds_used = cv.folds;
            } else {
                report.notes.push_back("specialist " + std::to_string(id) +
                                       ": cluster too small to cross-validate");
            }
        }
        report.per_network.push_back(r);
    }

    if (const auto* e = find_meta(model.metadata, "train.error_count"))
        report.reflection_error_count = std::stoull(*e);
    if (const auto* s = find_meta(model.metadata, "dataset.size"))
        report.reflection_train_size = std::stoull(*s);
    return report;
}

} // namespace cnng
