// cnng: train a single-network baseline, run reflection, evaluate saved models.
//
// Exit status: 0 success, 1 runtime failure, 2 configuration or validation
// failure.

#include "cnng/cnng.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> k;
    std::optional<std::size_t> subsample;
    std::optional<std::size_t> epochs_general;
    std::optional<std::size_t> epochs_specialist;
    bool balance_router = false;
    std::optional<std::string> report;
    std::optional<std::string> out;
    std::optional<std::string> orientation;
};

void add_common(CLI::App& cmd, Overrides& o)
{
    cmd.add_option("--config", o.config, "run configuration (JSON)")->required();
    cmd.add_option("--seed", o.seed, "seed for every stochastic stage");
    cmd.add_option("--k", o.k, "number of specialist networks");
    cmd.add_option("--subsample", o.subsample, "stratified subsample size");
    cmd.add_option("--epochs-general", o.epochs_general, "epochs for the general network");
    cmd.add_option("--epochs-specialist", o.epochs_specialist, "epochs for each specialist");
    cmd.add_flag("--balance-router", o.balance_router, "class-balanced router training");
    cmd.add_option("--report", o.report, "report format")->check(CLI::IsMember({"text", "structured"}));
    cmd.add_option("--out", o.out, "output directory");
    cmd.add_option("--emnist-orientation", o.orientation, "image orientation")
        ->check(CLI::IsMember({"none", "corrected", "raw"}));
}

cnng::RunConfig resolve_config(const Overrides& o)
{
    auto c = cnng::load_run_config(o.config);
    auto& rc = c.reflection;
    if (o.seed)
        cnng::apply_seed(rc, *o.seed);
    if (o.k) {
        rc.k_specialists = *o.k;
        rc.kmeans.k = *o.k;
    }
    if (o.subsample)
        c.data.subsample = *o.subsample;
    if (o.epochs_general)
        rc.general_train.epochs = *o.epochs_general;
    if (o.epochs_specialist)
        rc.specialist_train.epochs = *o.epochs_specialist;
    if (o.balance_router)
        rc.tree_params.balance_classes = true;
    if (o.report)
        c.report = cnng::parse_report_format(*o.report);
    if (o.out)
        c.out_dir = *o.out;
    if (o.orientation)
        c.data.orientation = cnng::parse_orientation(*o.orientation);
    c.validate();
    return c;
}

cnng::Dataset load_split(const cnng::RunConfig& c, bool train)
{
    return train ? cnng::load_idx_pair(c.data.train_images, c.data.train_labels, c.idx_options("train"))
                 : cnng::load_idx_pair(c.data.test_images, c.data.test_labels, c.idx_options("test"));
}

cnng::Dataset maybe_subsample(cnng::Dataset d, const cnng::RunConfig& c)
{
    if (!c.data.subsample || *c.data.subsample >= d.size())
        return d;
    auto name = d.name();
    auto out = cnng::subsample(d, *c.data.subsample, c.data.subsample_seed);
    out.set_name(name + "[" + std::to_string(out.size()) + "]");
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw cnng::Error(cnng::ErrorCode::Io, "cannot write " + path.string());
    out << text;
}

std::string render(const cnng::EvaluationReport& r, cnng::ReportFormat f)
{
    return f == cnng::ReportFormat::Text ? cnng::render_text(r) : cnng::render_json(r);
}

std::string report_file(cnng::ReportFormat f, const std::string& stem)
{
    return stem + (f == cnng::ReportFormat::Text ? ".txt" : ".json");
}

int cmd_train_single(const Overrides& o)
{
    const auto c = resolve_config(o);
    const auto train_set = maybe_subsample(load_split(c, true), c);
    const auto test_set = load_split(c, false);
    const auto& rc = c.reflection;

    const auto specs = cnng::architecture(train_set.dim(), rc.general_hidden, train_set.num_classes());
    cnng::TrainLog log;
    const auto net = cnng::train(cnng::init_network(specs, rc.general_train.seed), train_set, rc.general_train, &log);
    const double acc = cnng::accuracy(net, test_set);

    std::filesystem::create_directories(c.out_dir);
    const auto model_path = c.out_dir / "single.cnnf";
    cnng::save_network(net, model_path);

    std::string text;
    if (c.report == cnng::ReportFormat::Text) {
        text = "SingleNN test accuracy " + cnng::fixed4(acc) + " (" + std::to_string(test_set.size()) +
               " examples, " + std::to_string(log.sgd_steps) + " SGD steps)\n";
    } else {
        nlohmann::json j{{"method", "SingleNN"},
                         {"dataset", test_set.name()},
                         {"total", test_set.size()},
                         {"test_accuracy", acc},
                         {"train_size", train_set.size()},
                         {"sgd_steps", log.sgd_steps},
                         {"model", model_path.string()}};
        text = j.dump(2) + "\n";
    }
    write_text(c.out_dir / report_file(c.report, "single"), text);
    std::cout << text;
    std::cerr << "network written to " << model_path.string() << "\n";
    return 0;
}

int cmd_reflect(const Overrides& o)
{
    const auto c = resolve_config(o);
    const auto train_set = maybe_subsample(load_split(c, true), c);
    const auto test_set = load_split(c, false);

    const auto result = cnng::reflect(train_set, c.reflection);
    auto report = cnng::evaluate(result.model, test_set, result.clusters, cnng::eval_options(c.reflection));

    std::filesystem::create_directories(c.out_dir);
    const auto model_path = c.out_dir / "model.cnng";
    cnng::save_model(result.model, model_path);

    const auto text = render(report, c.report);
    write_text(c.out_dir / report_file(c.report, "report"), text);
    std::cout << text;
    std::cerr << "model written to " << model_path.string() << "\n";
    return 0;
}

int cmd_eval(const Overrides& o, const std::string& model_path, const std::string& split, bool cv)
{
    const auto c = resolve_config(o);
    if (!std::filesystem::is_regular_file(model_path))
        throw cnng::ConfigError("model file not found: " + model_path);
    const auto model = cnng::load_model(model_path);
    const auto data = maybe_subsample(load_split(c, split == "train"), c);

    std::vector<cnng::Dataset> clusters;
    cnng::EvalOptions options;
    options.cv_folds = c.reflection.cv_folds;
    if (cv) {
        // Schedule and clustering threshold come from the model's own record.
        const auto trained = cnng::config_from_metadata(model.metadata);
        options = cnng::eval_options(trained);
        auto train_set = load_split(c, true);
        const auto* fp = cnng::find_meta(model.metadata, "dataset.fingerprint");
        const auto* size = cnng::find_meta(model.metadata, "dataset.size");
        if (fp && size && *fp != std::to_string(cnng::dataset_fingerprint(train_set))) {
            const auto n = std::stoull(*size);
            if (n < train_set.size())
                train_set = cnng::subsample(train_set, n, c.data.subsample_seed);
            if (*fp != std::to_string(cnng::dataset_fingerprint(train_set)))
                throw cnng::ConfigError("training split does not match the data the model was trained on");
        }
        clusters = cnng::recover_clusters(model, train_set, trained.error_loss_threshold);
    }
    auto report = cnng::evaluate(model, data, clusters, options);
    if (!cv)
        report.notes.push_back("specific-task accuracy of specialists not computed (pass --cv)");

    const auto text = render(report, c.report);
    std::cout << text;
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Collaborative neural network group: reflection training and evaluation"};
    app.require_subcommand(1);

    Overrides train_single_opts, reflect_opts, eval_opts;
    auto* train_single = app.add_subcommand("train-single", "train and save the general network alone");
    add_common(*train_single, train_single_opts);

    auto* reflect = app.add_subcommand("reflect", "train a network group by reflection and report on it");
    add_common(*reflect, reflect_opts);

    auto* eval = app.add_subcommand("eval", "evaluate a saved network group");
    add_common(*eval, eval_opts);
    std::string model_path, split = "test";
    bool cv = false;
    eval->add_option("--model", model_path, "model file written by reflect")->required();
    eval->add_option("--split", split, "dataset split to evaluate")->check(CLI::IsMember({"train", "test"}));
    eval->add_flag("--cv", cv, "cross-validate specialists on clusters recovered from the training split");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*train_single)
            return cmd_train_single(train_single_opts);
        if (*reflect)
            return cmd_reflect(reflect_opts);
        return cmd_eval(eval_opts, model_path, split, cv);
    } catch (const cnng::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const cnng::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (e.code() == cnng::ErrorCode::TooFewErrors || e.code() == cnng::ErrorCode::NothingToReflect)
            std::cerr << "hint: reduce --k or train the general network for fewer epochs\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
