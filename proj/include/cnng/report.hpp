#pragma once

// Text and JSON renderings of an EvaluationReport. The text form prints
// accuracies and fractions with four decimals; the JSON form carries the same
// quantities at full precision.

#include "cnng/evaluate.hpp"

#include <json.hpp>

#include <cstdio>
#include <optional>
#include <string>

namespace cnng {

inline std::string network_name(std::size_t id)
{
    return id == 0 ? "GenNet" : "SpecNet" + std::to_string(id);
}

inline double usage_sum(const EvaluationReport& report)
{
    double s = 0.0;
    for (const auto& n : report.per_network)
        s += n.used_fraction;
    return s;
}

/// Four decimals, as printed in text reports.
inline std::string fixed4(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline std::string fixed4(const std::optional<double>& v)
{
    return v ? fixed4(*v) : std::string("n/a");
}

namespace detail {

inline std::string padded(std::string s, std::size_t width)
{
    if (s.size() < width)
        s.append(width - s.size(), ' ');
    return s;
}

inline nlohmann::json optional_json(const std::optional<double>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

} // namespace detail

inline std::string render_text(const EvaluationReport& r)
{
    using detail::padded;
    std::string out;
    out += "CNNG evaluation on " + (r.dataset.empty() ? std::string("<unnamed>") : r.dataset) + " (" +
           std::to_string(r.total) + " examples)\n\n";

    out += "Method comparison\n";
    out += "  " + padded("method", 10) + "accuracy\n";
    out += "  " + padded("CNNG", 10) + fixed4(r.overall_accuracy) + "\n";
    out += "  " + padded("SingleNN", 10) + fixed4(r.general_accuracy) + "\n\n";

    out += "Per-network breakdown\n";
    out += "  " + padded("network", 10) + padded("Used", 8) + padded("Overall Accuracy", 18) +
           padded("Specific-task Accuracy", 24) + padded("Routed Accuracy", 17) + padded("GenNet on Routed", 18) +
           "SGD steps\n";
    for (const auto& n : r.per_network) {
        out += "  " + padded(network_name(n.network_id), 10) + padded(fixed4(n.used_fraction), 8) +
               padded(fixed4(n.overall_accuracy), 18) + padded(fixed4(n.specific_task_accuracy), 24) +
               padded(fixed4(n.routed_accuracy), 17) + padded(fixed4(n.general_on_routed_accuracy), 18) +
               std::to_string(n.sgd_steps) + "\n";
    }
    out += "\n";
    out += "  used counts:";
    for (const auto& n : r.per_network)
        out += " " + network_name(n.network_id) + "=" + std::to_string(n.used_count);
    out += "\n";
    for (const auto& n : r.per_network)
        if (n.network_id > 0 && n.cv_folds_used > 0)
            out += "  " + network_name(n.network_id) + " specific-task accuracy: " + std::to_string(n.cv_folds_used) +
                   "-fold cross-validation on " + std::to_string(n.cluster_size) + " error cases\n";
    out += "  usage sum: " + fixed4(usage_sum(r)) + "\n";
    out += "  CNNG errors: " + std::to_string(r.error_count) + " of " + std::to_string(r.total) + "\n";
    if (r.reflection_error_count && r.reflection_train_size && *r.reflection_train_size > 0) {
        const double frac =
            static_cast<double>(*r.reflection_error_count) / static_cast<double>(*r.reflection_train_size);
        out += "  reflection error cases: " + std::to_string(*r.reflection_error_count) + " of " +
               std::to_string(*r.reflection_train_size) + " training examples (fraction " + fixed4(frac) + ")\n";
    }
    for (const auto& note : r.notes)
        out += "  note: " + note + "\n";
    return out;
}

inline nlohmann::json to_json(const EvaluationReport& r)
{
    nlohmann::json j;
    j["dataset"] = r.dataset;
    j["total"] = r.total;
    j["error_count"] = r.error_count;
    j["methods"] = {{"CNNG", r.overall_accuracy}, {"SingleNN", r.general_accuracy}};
    auto nets = nlohmann::json::array();
    for (const auto& n : r.per_network) {
        nets.push_back({
            {"id", n.network_id},
            {"name", network_name(n.network_id)},
            {"used_count", n.used_count},
            {"used_fraction", n.used_fraction},
            {"overall_accuracy", n.overall_accuracy},
            {"specific_task_accuracy", detail::optional_json(n.specific_task_accuracy)},
            {"cv_folds", n.cv_folds_used},
            {"cluster_size", n.cluster_size},
            {"routed_accuracy", detail::optional_json(n.routed_accuracy)},
            {"general_on_routed_accuracy", detail::optional_json(n.general_on_routed_accuracy)},
            {"sgd_steps", n.sgd_steps},
        });
    }
    j["networks"] = std::move(nets);
    j["usage_fraction_sum"] = usage_sum(r);
    if (r.reflection_error_count && r.reflection_train_size) {
        j["reflection"] = {
            {"error_count", *r.reflection_error_count},
            {"train_size", *r.reflection_train_size},
            {"error_fraction", static_cast<double>(*r.reflection_error_count) /
                                   static_cast<double>(*r.reflection_train_size)},
        };
    }
    j["notes"] = r.notes;
    return j;
}

inline std::string render_json(const EvaluationReport& r)
{
    return to_json(r).dump(2) + "\n";
}

} // namespace cnng
