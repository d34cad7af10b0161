#pragma once

// Run configuration read from a JSON file. Every seed and hyperparameter has
// an explicit key; relative paths resolve against the config file's directory.
//
// {
//   "dataset": {
//     "name": "mnist",
//     "train_images": "...", "train_labels": "...",
//     "test_images": "...",  "test_labels": "...",
//     "emnist_orientation": "none" | "corrected" | "raw",
//     "subsample": null | count,
//     "subsample_seed": 7
//   },
//   "reflection": {
//     "k_specialists": 2,
//     "general":    {"hidden": [256], "learning_rate": 0.1, "batch_size": 32,
//                    "epochs": 1, "seed": 42, "shuffle": true},
//     "specialist": {... same keys ...},
//     "kmeans": {"seed": 7, "max_iter": 100, "tol": 1e-6, "restarts": 5},
//     "tree": {"max_depth": 12, "min_samples_leaf": 5, "min_samples_split": 10,
//              "balance_classes": false},
//     "cv_folds": 5,
//     "error_loss_threshold": null
//   },
//   "output": {"dir": "out", "report": "text" | "structured"}
// }

#include "cnng/data.hpp"
#include "cnng/error.hpp"
#include "cnng/reflect_config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace cnng {

/// A configuration the user must fix, as opposed to a failure while running.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ReportFormat { Text, Structured };

enum class Orientation {
    None,      // MNIST layout
    Corrected, // EMNIST, transposed back to MNIST layout
    Raw,       // EMNIST as stored
};

struct DatasetPaths {
    std::string name = "mnist";
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
    std::filesystem::path test_images;
    std::filesystem::path test_labels;
    Orientation orientation = Orientation::None;
    std::optional<std::size_t> subsample;
    std::uint64_t subsample_seed = 7;
};

struct RunConfig {
    DatasetPaths data;
    ReflectionConfig reflection;
    std::filesystem::path out_dir = "out";
    ReportFormat report = ReportFormat::Text;

    /// Checks hyperparameters and that every dataset file exists.
    void validate() const
    {
        try {
            reflection.validate();
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        for (const auto* p : {&data.train_images, &data.train_labels, &data.test_images, &data.test_labels})
            if (p->empty() || !std::filesystem::is_regular_file(*p))
                throw ConfigError("dataset file not found: " + p->string());
        if (data.subsample && *data.subsample == 0)
            throw ConfigError("subsample must be positive");
    }

    IdxOptions idx_options(const std::string& split) const
    {
        return {data.orientation == Orientation::Corrected, data.name + "/" + split};
    }
};

/// Sets every stochastic stage's seed from one value.
inline void apply_seed(ReflectionConfig& c, std::uint64_t seed)
{
    c.general_train.seed = seed;
    c.specialist_train.seed = seed + 1000;
    c.kmeans.seed = seed;
}

inline std::string to_string(ReportFormat f)
{
    return f == ReportFormat::Text ? "text" : "structured";
}

inline ReportFormat parse_report_format(const std::string& s)
{
    if (s == "text")
        return ReportFormat::Text;
    if (s == "structured")
        return ReportFormat::Structured;
    throw ConfigError("report format must be text or structured, got " + s);
}

inline Orientation parse_orientation(const std::string& s)
{
    if (s == "none")
        return Orientation::None;
    if (s == "corrected")
        return Orientation::Corrected;
    if (s == "raw")
        return Orientation::Raw;
    throw ConfigError("emnist_orientation must be none, corrected or raw, got " + s);
}

namespace detail {

using Json = nlohmann::json;

/// Reads keys from one JSON object and rejects any key it was never asked for.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError(path_ + " must be an object");
    }

    ObjectReader(const ObjectReader&) = delete;
    ObjectReader& operator=(const ObjectReader&) = delete;

    void finish() const
    {
        for (const auto& item : j_.items())
            if (std::find(seen_.begin(), seen_.end(), item.key()) == seen_.end())
                throw ConfigError("unknown key " + path_ + "." + item.key());
    }

    /// Marks an optional key as known without reading it.
    void skip(const std::string& key) { seen_.push_back(key); }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const Json& at(const std::string& key)
    {
        seen_.push_back(key);
        if (!has(key))
            throw ConfigError("missing key " + path_ + "." + key);
        return j_.at(key);
    }

    template <typename T>
    T get(const std::string& key)
    {
        const auto& v = at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean())
                throw ConfigError(path_ + "." + key + " must be a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string())
                throw ConfigError(path_ + "." + key + " must be a string");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number())
                throw ConfigError(path_ + "." + key + " must be a number");
        } else {
            if (!is_count(v))
                throw ConfigError(path_ + "." + key + " must be a non-negative integer");
        }
        return v.get<T>();
    }

    template <typename T>
    void maybe(const std::string& key, T& out)
    {
        seen_.push_back(key);
        if (has(key))
            out = get<T>(key);
    }

    std::vector<std::size_t> widths(const std::string& key)
    {
        const auto& h = at(key);
        if (!h.is_array())
            throw ConfigError(path_ + "." + key + " must be an array");
        std::vector<std::size_t> out;
        for (const auto& w : h) {
            if (!is_count(w))
                throw ConfigError(path_ + "." + key + " must hold non-negative integers");
            out.push_back(w.get<std::size_t>());
        }
        return out;
    }

private:
    static bool is_count(const Json& v)
    {
        return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    }

    const Json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

inline void read_train(ObjectReader& r, std::vector<std::size_t>& hidden, TrainConfig& tc)
{
    if (r.has("hidden"))
        hidden = r.widths("hidden");
    else
        r.skip("hidden");
    r.maybe("learning_rate", tc.learning_rate);
    r.maybe("batch_size", tc.batch_size);
    r.maybe("epochs", tc.epochs);
    tc.seed = r.get<std::uint64_t>("seed");
    r.maybe("shuffle", tc.shuffle);
    r.finish();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace detail

/// Parses a config document. Seeds are required; other keys fall back to the
/// library defaults; unknown keys are rejected.
inline RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {})
{
    using detail::ObjectReader;
    RunConfig c;
    ObjectReader top(doc, "config");

    ObjectReader d(top.at("dataset"), "dataset");
    d.maybe("name", c.data.name);
    c.data.train_images = detail::resolve(base_dir, d.get<std::string>("train_images"));
    c.data.train_labels = detail::resolve(base_dir, d.get<std::string>("train_labels"));
    c.data.test_images = detail::resolve(base_dir, d.get<std::string>("test_images"));
    c.data.test_labels = detail::resolve(base_dir, d.get<std::string>("test_labels"));
    std::string orientation = "none";
    d.maybe("emnist_orientation", orientation);
    c.data.orientation = parse_orientation(orientation);
    if (d.has("subsample"))
        c.data.subsample = d.get<std::size_t>("subsample");
    else
        d.skip("subsample");
    c.data.subsample_seed = d.get<std::uint64_t>("subsample_seed");
    d.finish();

    auto& rc = c.reflection;
    ObjectReader r(top.at("reflection"), "reflection");
    r.maybe("k_specialists", rc.k_specialists);
    {
        ObjectReader g(r.at("general"), "reflection.general");
        detail::read_train(g, rc.general_hidden, rc.general_train);
        ObjectReader s(r.at("specialist"), "reflection.specialist");
        detail::read_train(s, rc.specialist_hidden, rc.specialist_train);
    }
    {
        ObjectReader k(r.at("kmeans"), "reflection.kmeans");
        rc.kmeans.seed = k.get<std::uint64_t>("seed");
        k.maybe("max_iter", rc.kmeans.max_iter);
        k.maybe("tol", rc.kmeans.tol);
        k.maybe("restarts", rc.kmeans.restarts);
        k.finish();
    }
    if (r.has("tree")) {
        ObjectReader t(r.at("tree"), "reflection.tree");
        t.maybe("max_depth", rc.tree_params.max_depth);
        t.maybe("min_samples_leaf", rc.tree_params.min_samples_leaf);
        t.maybe("min_samples_split", rc.tree_params.min_samples_split);
        t.maybe("balance_classes", rc.tree_params.balance_classes);
        t.finish();
    } else {
        r.skip("tree");
    }
    r.maybe("cv_folds", rc.cv_folds);
    if (r.has("error_loss_threshold"))
        rc.error_loss_threshold = r.get<double>("error_loss_threshold");
    else
        r.skip("error_loss_threshold");
    rc.kmeans.k = rc.k_specialists;
    r.finish();

    if (top.has("output")) {
        ObjectReader o(top.at("output"), "output");
        if (o.has("dir"))
            c.out_dir = detail::resolve(base_dir, o.get<std::string>("dir"));
        else
            o.skip("dir");
        std::string report = to_string(c.report);
        o.maybe("report", report);
        c.report = parse_report_format(report);
        o.finish();
    } else {
        top.skip("output");
    }
    top.finish();
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(doc, path.parent_path());
}

/// The reflection part of a config as a JSON document in the file layout.
inline nlohmann::json reflection_to_json(const ReflectionConfig& rc)
{
    const auto train = [](const std::vector<std::size_t>& hidden, const TrainConfig& tc) {
        return nlohmann::json{{"hidden", hidden},         {"learning_rate", tc.learning_rate},
                              {"batch_size", tc.batch_size}, {"epochs", tc.epochs},
                              {"seed", tc.seed},          {"shuffle", tc.shuffle}};
    };
    return {
        {"k_specialists", rc.k_specialists},
        {"general", train(rc.general_hidden, rc.general_train)},
        {"specialist", train(rc.specialist_hidden, rc.specialist_train)},
        {"kmeans",
         {{"seed", rc.kmeans.seed}, {"max_iter", rc.kmeans.max_iter}, {"tol", rc.kmeans.tol},
          {"restarts", rc.kmeans.restarts}}},
        {"tree",
         {{"max_depth", rc.tree_params.max_depth},
          {"min_samples_leaf", rc.tree_params.min_samples_leaf},
          {"min_samples_split", rc.tree_params.min_samples_split},
          {"balance_classes", rc.tree_params.balance_classes}}},
        {"cv_folds", rc.cv_folds},
        {"error_loss_threshold",
         rc.error_loss_threshold ? nlohmann::json(*rc.error_loss_threshold) : nlohmann::json(nullptr)},
    };
}

} // namespace cnng
