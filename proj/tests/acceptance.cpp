// Acceptance suite. Prints one line per criterion:
//
//   [PASS] 1 gradient oracle: ...
//
// Usage: acceptance [--only N]... ; exit status 0 when every selected
// criterion passes or is skipped.

#include "cnng/cnng.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <CLI11.hpp>

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace cnng;
using nlohmann::json;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status = Status::Fail;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double budget_seconds; // 0: no runtime limit
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string pp(double fraction)
{
    return fmt("%.2f", 100.0 * fraction);
}

struct Mnist {
    Dataset train, test;
};

std::optional<Mnist> load_mnist()
{
    const auto files = fixtures::mnist_files();
    if (!files)
        return std::nullopt;
    return Mnist{load_idx_pair(files->train_images, files->train_labels, {false, "mnist/train"}),
                 load_idx_pair(files->test_images, files->test_labels, {false, "mnist/test"})};
}

/// The shipped run configuration for `name`; dataset paths are ignored.
ReflectionConfig shipped_config(const std::string& name)
{
    return load_run_config(std::filesystem::path(CNNG_TEST_SOURCE_DIR) / "configs" / name).reflection;
}

FeedforwardNetwork train_general(const Dataset& train_set, const ReflectionConfig& c, std::size_t* steps = nullptr)
{
    TrainLog log;
    const auto specs = architecture(train_set.dim(), c.general_hidden, train_set.num_classes());
    auto net = train(init_network(specs, c.general_train.seed), train_set, c.general_train, &log);
    if (steps)
        *steps = log.sgd_steps;
    return net;
}

// 1 --------------------------------------------------------------------------

Outcome gradient_oracle()
{
    Rng rng(20240601);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::size_t> widths{2 + rng.below(4), 2 + rng.below(5)};
        if (rng.below(2))
            widths.push_back(2 + rng.below(3));
        widths.push_back(2 + rng.below(3));
        auto net = init_network(mlp_specs(widths), rng.next());
        for (auto& layer : net.layers())
            for (auto& b : layer.bias)
                b = rng.uniform(-0.5, 0.5);
        if (net.num_parameters() > 100)
            return {Status::Fail, "generated a network with more than 100 parameters"};
        const auto batch = fixtures::random_dataset(1 + rng.below(4), widths.front(), widths.back(), rng.next());
        const auto analytic = loss_and_gradient(net, batch).gradients;
        const auto numeric = oracle::finite_difference_gradient(net, batch, 1e-5);
        worst = std::max(worst, oracle::max_relative_error(analytic, numeric));
    }
    return {worst < 1e-4 ? Status::Pass : Status::Fail,
            "max relative error " + fmt("%.3g", worst) + " over 10 networks with random weights and biases (limit 1e-4)"};
}

// 2 --------------------------------------------------------------------------

Outcome kmeans_oracle()
{
    Rng rng(20240602);
    int misses = 0;
    double worst_gap = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        const std::size_t dim = 1 + rng.below(3);
        std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
        for (auto& row : pts)
            for (auto& v : row)
                v = rng.uniform(-10.0, 10.0);
        KMeansParams params;
        params.k = 2;
        params.seed = rng.next();
        const auto fit = kmeans_fit_best(to_matrix(pts), params);
        const double gap = fit.model.inertia - oracle::best_two_partition_inertia(pts);
        worst_gap = std::max(worst_gap, gap);
        misses += gap > 1e-9;
    }
    return {misses == 0 ? Status::Pass : Status::Fail,
            std::to_string(50 - misses) + " of 50 instances at the exhaustive optimum with " +
                std::to_string(KMeansParams{}.restarts) + " restarts (largest excess inertia " +
                fmt("%.4g", worst_gap) + ")"};
}

// 3 --------------------------------------------------------------------------

Outcome tree_oracle()
{
    Rng rng(20240603);
    int agree = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.below(11);
        const std::size_t d = 1 + rng.below(3);
        const std::size_t k = 2 + rng.below(2);
        std::vector<std::vector<double>> x(n, std::vector<double>(d));
        std::vector<std::uint32_t> ids(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& v : x[i])
                v = static_cast<double>(rng.below(5));
            ids[i] = static_cast<std::uint32_t>(rng.below(k));
        }
        const auto tree = tree_fit(x, ids, k, {64, 1, 2, false});
        const auto want = oracle::best_root_split(x, ids, k, kImpurityTieEps);
        const auto& root = tree.nodes[0];
        const bool ok = want ? !root.leaf && root.feature == want->feature &&
                                   std::abs(root.threshold - want->threshold) <= 1e-12
                             : root.leaf;
        agree += ok;
    }
    return {agree == 20 ? Status::Pass : Status::Fail,
            std::to_string(agree) + " of 20 root splits equal the exhaustive optimum"};
}

// 4 --------------------------------------------------------------------------

Outcome single_nn_floor()
{
    const auto data = load_mnist();
    if (!data)
        return {Status::Skip, "MNIST not found (set CNNG_MNIST_DIR)"};
    const auto c = shipped_config("mnist.json");
    std::size_t steps = 0;
    const auto net = train_general(data->train, c, &steps);
    const double acc = accuracy(net, data->test);
    return {acc >= 0.93 ? Status::Pass : Status::Fail,
            "SingleNN test accuracy " + fmt("%.4f", acc) + " after " + std::to_string(c.general_train.epochs) +
                " epoch (" + std::to_string(steps) + " SGD steps, floor 0.93)"};
}

// 5 --------------------------------------------------------------------------

Outcome reflection_improves()
{
    const auto data = load_mnist();
    if (!data)
        return {Status::Skip, "MNIST not found (set CNNG_MNIST_DIR)"};
    const std::array<std::uint64_t, 5> seeds{42, 43, 44, 45, 46};
    int not_worse = 0, improved = 0;
    std::string per_seed;
    for (auto seed : seeds) {
        auto c = shipped_config("mnist.json");
        apply_seed(c, seed);
        const auto result = reflect(data->train, c);
        const double single = accuracy(result.model.general, data->test);
        const double group = cnng_accuracy(result.model, data->test);
        not_worse += group >= single;
        improved += group >= single + 0.001;
        per_seed += " seed " + std::to_string(seed) + ": " + pp(group) + " vs " + pp(single) + ";";
        std::cerr << "  seed " << seed << ": CNNG " << fmt("%.4f", group) << " SingleNN " << fmt("%.4f", single)
                  << " (" << result.errors.size() << " error cases)\n";
    }
    per_seed.pop_back();
    const bool pass = not_worse == 5 && improved >= 3;
    return {pass ? Status::Pass : Status::Fail,
            "CNNG >= SingleNN in " + std::to_string(not_worse) + "/5 seeds, >= +0.1pp in " + std::to_string(improved) +
                "/5 (need 5 and 3);" + per_seed};
}

// 6 --------------------------------------------------------------------------

struct ShapeCheck {
    bool pass = true;
    std::string text;
};

ShapeCheck table_shape(const std::string& label, const Dataset& train_set, const Dataset& test_set,
                       const ReflectionConfig& c)
{
    const auto result = reflect(train_set, c);
    const auto report = evaluate(result.model, test_set, result.clusters, eval_options(c));
    ShapeCheck out;
    const auto& gen = report.per_network[0];
    out.pass = gen.used_fraction > 0.5;
    out.text = label + ": GenNet used " + fmt("%.4f", gen.used_fraction);
    for (std::size_t id = 1; id < report.per_network.size(); ++id) {
        const auto& n = report.per_network[id];
        const double gap = n.specific_task_accuracy ? *n.specific_task_accuracy - n.overall_accuracy : -1.0;
        out.pass = out.pass && n.specific_task_accuracy && gap >= 0.20;
        out.text += ", " + network_name(id) + " specific " + fixed4(n.specific_task_accuracy) + " vs overall " +
                    fixed4(n.overall_accuracy) + " (gap " + pp(gap) + "pp)";
    }
    std::cerr << render_text(report);
    return out;
}

Outcome table_two_shape()
{
    const auto data = load_mnist();
    if (!data)
        return {Status::Skip, "MNIST not found (set CNNG_MNIST_DIR)"};
    auto mnist = table_shape("MNIST", data->train, data->test, shipped_config("mnist.json"));
    bool pass = mnist.pass;
    std::string detail = mnist.text;

    const char* emnist_dir = std::getenv("CNNG_EMNIST_DIR");
    std::string dir = emnist_dir ? emnist_dir : "";
#ifdef CNNG_TEST_EMNIST_DIR
    if (dir.empty())
        dir = CNNG_TEST_EMNIST_DIR;
#endif
    const std::filesystem::path d(dir);
    const auto ti = d / "emnist-balanced-train-images-idx3-ubyte", tl = d / "emnist-balanced-train-labels-idx1-ubyte";
    const auto vi = d / "emnist-balanced-test-images-idx3-ubyte", vl = d / "emnist-balanced-test-labels-idx1-ubyte";
    if (!dir.empty() && std::filesystem::is_regular_file(ti) && std::filesystem::is_regular_file(vi)) {
        const auto rc = load_run_config(std::filesystem::path(CNNG_TEST_SOURCE_DIR) / "configs" / "emnist-balanced.json");
        const auto train_full = load_idx_pair(ti, tl, rc.idx_options("train"));
        const auto test_set = load_idx_pair(vi, vl, rc.idx_options("test"));
        const auto train_set = rc.data.subsample ? subsample(train_full, *rc.data.subsample, rc.data.subsample_seed)
                                                 : train_full;
        auto e = table_shape("EMNIST[" + std::to_string(train_set.size()) + "]", train_set, test_set, rc.reflection);
        pass = pass && e.pass;
        detail += "; " + e.text;
    } else {
        detail += "; EMNIST part skipped (files not supplied)";
    }
    return {pass ? Status::Pass : Status::Fail, detail};
}

// 7 --------------------------------------------------------------------------

Outcome degenerate_router()
{
    const auto data = load_mnist();
    if (!data)
        return {Status::Skip, "MNIST not found (set CNNG_MNIST_DIR)"};
    auto c = shipped_config("mnist.json");
    c.specialist_train.epochs = 1;
    auto model = reflect_from(train_general(data->train, c), data->train, c).model;
    model.task_classifier = DecisionTree::constant(0, model.num_networks());
    const double group = cnng_accuracy(model, data->test);
    const double single = accuracy(model.general, data->test);
    const auto report = evaluate(model, data->test, {}, eval_options(c));
    const bool pass = group == single && report.overall_accuracy == report.general_accuracy &&
                      report.per_network[0].used_count == data->test.size();
    return {pass ? Status::Pass : Status::Fail,
            "constant-0 router: CNNG " + fmt("%.6f", group) + ", general network " + fmt("%.6f", single)};
}

// 8 --------------------------------------------------------------------------

Outcome determinism_and_persistence()
{
    const auto data = load_mnist();
    if (!data)
        return {Status::Skip, "MNIST not found (set CNNG_MNIST_DIR)"};
    const auto c = shipped_config("mnist.json");
    const auto dir = fixtures::scratch_dir("acceptance-c8");
    save_model(reflect(data->train, c).model, dir / "a.cnng");
    save_model(reflect(data->train, c).model, dir / "b.cnng");
    const auto a = detail::read_bytes(dir / "a.cnng");
    const auto b = detail::read_bytes(dir / "b.cnng");
    const bool identical = a == b;

    const auto saved = deserialize_model(a);
    const auto loaded = load_model(dir / "a.cnng");
    std::size_t same = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
        const auto x = data->test.input(i);
        const auto id = route(saved, x);
        same += id == route(loaded, x) && cnng_predict(saved, x) == cnng_predict(loaded, x) &&
                forward(saved.network(id), x) == forward(loaded.network(id), x);
    }
    return {identical && same == 1000 ? Status::Pass : Status::Fail,
            std::string(identical ? "model files byte-identical" : "model files differ") + " (" +
                std::to_string(a.size()) + " bytes); " + std::to_string(same) +
                " of 1000 reloaded predictions bit-identical"};
}

// 9 --------------------------------------------------------------------------

std::pair<int, std::string> run_cli(const std::string& args)
{
    const std::string cmd = std::string(CNNG_CLI_PATH) + " " + args + " 2>/dev/null";
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe)
        return {-1, out};
    std::array<char, 4096> buf{};
    while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe))
        out.append(buf.data(), n);
    const int raw = pclose(pipe);
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

std::vector<std::string> cells_of(const std::string& text, const std::string& first, std::size_t width)
{
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        std::istringstream ls(line);
        std::vector<std::string> cells;
        for (std::string t; ls >> t;)
            cells.push_back(t);
        if (cells.size() == width && cells[0] == first)
            return cells;
    }
    return {};
}

std::string cell(const json& v)
{
    return v.is_null() ? "n/a" : fixed4(v.get<double>());
}

/// Every number in the text report against the structured one. Empty on agreement.
std::string disagreement(const std::string& text, const json& j)
{
    if (cells_of(text, "CNNG", 2).at(1) != cell(j["methods"]["CNNG"]))
        return "CNNG accuracy";
    if (cells_of(text, "SingleNN", 2).at(1) != cell(j["methods"]["SingleNN"]))
        return "SingleNN accuracy";
    for (const auto& n : j["networks"]) {
        const auto name = n["name"].get<std::string>();
        const auto c = cells_of(text, name, 7);
        if (c.empty())
            return name + " row missing";
        const char* keys[] = {"used_fraction", "overall_accuracy", "specific_task_accuracy", "routed_accuracy",
                              "general_on_routed_accuracy"};
        for (std::size_t k = 0; k < 5; ++k)
            if (c[k + 1] != cell(n[keys[k]]))
                return name + " " + keys[k];
        if (c[6] != std::to_string(n["sgd_steps"].get<std::size_t>()))
            return name + " sgd_steps";
        if (text.find(name + "=" + std::to_string(n["used_count"].get<std::size_t>())) == std::string::npos)
            return name + " used count";
        if (n["cv_folds"].get<std::size_t>() > 0 &&
            text.find(name + " specific-task accuracy: " + std::to_string(n["cv_folds"].get<std::size_t>()) +
                      "-fold cross-validation on " + std::to_string(n["cluster_size"].get<std::size_t>())) ==
                std::string::npos)
            return name + " cross-validation line";
    }
    if (text.find("usage sum: " + cell(j["usage_fraction_sum"])) == std::string::npos)
        return "usage sum";
    if (text.find("CNNG errors: " + std::to_string(j["error_count"].get<std::size_t>()) + " of " +
                  std::to_string(j["total"].get<std::size_t>())) == std::string::npos)
        return "error count";
    if (j.contains("reflection")) {
        const auto& r = j["reflection"];
        if (text.find(std::to_string(r["error_count"].get<std::size_t>()) + " of " +
                      std::to_string(r["train_size"].get<std::size_t>()) + " training examples (fraction " +
                      cell(r["error_fraction"]) + ")") == std::string::npos)
            return "reflection error fraction";
    }
    for (const auto& note : j["notes"])
        if (text.find("note: " + note.get<std::string>()) == std::string::npos)
            return "note";
    return {};
}

Outcome report_invariants()
{
    const auto dir = fixtures::scratch_dir("acceptance-c9");
    std::filesystem::create_directories(dir / "data");
    fixtures::write_synthetic_idx(dir / "data", "train", 1500, 7, 10, 91);
    fixtures::write_synthetic_idx(dir / "data", "test", 500, 7, 10, 92);
    const json doc = json::parse(R"({
      "dataset": {
        "name": "synthetic",
        "train_images": "data/train-images-idx3-ubyte", "train_labels": "data/train-labels-idx1-ubyte",
        "test_images": "data/test-images-idx3-ubyte", "test_labels": "data/test-labels-idx1-ubyte",
        "subsample_seed": 7
      },
      "reflection": {
        "k_specialists": 3,
        "general": {"hidden": [24], "learning_rate": 0.05, "batch_size": 32, "epochs": 1, "seed": 42},
        "specialist": {"hidden": [24], "learning_rate": 0.1, "batch_size": 16, "epochs": 8, "seed": 1042},
        "kmeans": {"seed": 7},
        "tree": {"max_depth": 8, "min_samples_leaf": 2, "min_samples_split": 4},
        "cv_folds": 5
      },
      "output": {"dir": "out"}
    })");
    std::ofstream(dir / "run.json") << doc.dump(2);
    const std::string cfg = " --config " + (dir / "run.json").string();
    const std::string model = " --model " + (dir / "out" / "model.cnng").string();

    struct Pair {
        std::string what, text_args, json_args;
    };
    const std::vector<Pair> runs{
        {"reflect", "reflect" + cfg + " --report text", "reflect" + cfg + " --report structured"},
        {"eval", "eval" + cfg + model + " --report text", "eval" + cfg + model + " --report structured"},
        {"eval --cv", "eval" + cfg + model + " --cv --report text", "eval" + cfg + model + " --cv --report structured"},
        {"eval train split", "eval" + cfg + model + " --split train --report text",
         "eval" + cfg + model + " --split train --report structured"},
    };
    double worst = 0.0;
    for (const auto& r : runs) {
        const auto [ts, text] = run_cli(r.text_args);
        const auto [js, structured] = run_cli(r.json_args);
        if (ts != 0 || js != 0)
            return {Status::Fail, r.what + ": cnng exited with a failure status"};
        const auto j = json::parse(structured);
        double sum = 0.0;
        for (const auto& n : j["networks"])
            sum += n["used_fraction"].get<double>();
        worst = std::max({worst, std::abs(sum - 1.0), std::abs(j["usage_fraction_sum"].get<double>() - 1.0)});
        if (const auto bad = disagreement(text, j); !bad.empty())
            return {Status::Fail, r.what + ": text and structured reports disagree on " + bad};
    }
    return {worst <= 1e-9 ? Status::Pass : Status::Fail,
            std::to_string(2 * runs.size()) + " reports; text and structured agree; worst usage-sum deviation " +
                fmt("%.3g", worst)};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"CNNG acceptance criteria"};
    std::vector<int> only;
    app.add_option("--only", only, "run only these criteria (repeatable)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria{
        {1, "gradient oracle", 5, gradient_oracle},
        {2, "k-means oracle", 5, kmeans_oracle},
        {3, "decision-tree oracle", 5, tree_oracle},
        {4, "SingleNN floor", 180, single_nn_floor},
        {5, "reflection improves accuracy", 900, reflection_improves},
        {6, "per-network table shape", 1200, table_two_shape},
        {7, "degenerate-router identity", 60, degenerate_router},
        {8, "determinism and persistence", 600, determinism_and_persistence},
        {9, "report invariants", 0, report_invariants},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end())
            continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Status::Fail, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (o.status != Status::Skip && c.budget_seconds > 0 && secs > c.budget_seconds) {
            o.status = Status::Fail;
            o.detail += "; over the " + fmt("%.0f", c.budget_seconds) + " s budget";
        }
        const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Skip ? "SKIP" : "FAIL";
        std::cout << "[" << tag << "] " << c.id << " " << c.name << ": " << o.detail << " (" << fmt("%.1f", secs)
                  << " s)" << std::endl;
        failures += o.status == Status::Fail;
    }
    return failures == 0 ? 0 : 1;
}
