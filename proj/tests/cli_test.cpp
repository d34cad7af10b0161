#include "cnng/cnng.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace cnng;
using nlohmann::json;

namespace {

struct RunResult {
    int status = -1;
    std::string out;
};

RunResult run(const std::string& args)
{
    const std::string cmd = std::string(CNNG_CLI_PATH) + " " + args + " 2>/dev/null";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe)
        return r;
    std::array<char, 4096> buf{};
    while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe))
        r.out.append(buf.data(), n);
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json base_config()
{
    return json::parse(R"({
      "dataset": {
        "name": "synthetic",
        "train_images": "data/train-images-idx3-ubyte", "train_labels": "data/train-labels-idx1-ubyte",
        "test_images": "data/test-images-idx3-ubyte", "test_labels": "data/test-labels-idx1-ubyte",
        "subsample_seed": 7
      },
      "reflection": {
        "k_specialists": 2,
        "general": {"hidden": [16], "learning_rate": 0.05, "batch_size": 32, "epochs": 1, "seed": 42},
        "specialist": {"hidden": [16], "learning_rate": 0.1, "batch_size": 16, "epochs": 5, "seed": 1042},
        "kmeans": {"seed": 7, "max_iter": 50, "restarts": 2},
        "tree": {"max_depth": 6, "min_samples_leaf": 2, "min_samples_split": 4},
        "cv_folds": 3
      },
      "output": {"dir": "out", "report": "structured"}
    })");
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        dir = fixtures::scratch_dir("cli");
        std::filesystem::create_directories(dir / "data");
        fixtures::write_synthetic_idx(dir / "data", "train", 800, 6, 10, 1);
        fixtures::write_synthetic_idx(dir / "data", "test", 300, 6, 10, 2);
        write_config("run.json", base_config());
    }

    static std::string write_config(const std::string& name, const json& doc)
    {
        std::ofstream(dir / name) << doc.dump(2);
        return (dir / name).string();
    }

    static std::string config(const std::string& name = "run.json") { return " --config " + (dir / name).string(); }

    static inline std::filesystem::path dir;
};

} // namespace

TEST_F(Cli, TrainSingleWritesNetworkAndReport)
{
    const auto r = run("train-single" + config() + " --out " + (dir / "single").string() + " --report text");
    ASSERT_EQ(r.status, 0);
    EXPECT_EQ(r.out.rfind("SingleNN test accuracy ", 0), 0u) << r.out;
    EXPECT_NE(r.out.find("(300 examples, 25 SGD steps)"), std::string::npos) << r.out;
    EXPECT_EQ(slurp(dir / "single" / "single.txt"), r.out);
    const auto net = load_network(dir / "single" / "single.cnnf");
    EXPECT_EQ(net.input_dim(), 36u);
    EXPECT_EQ(net.num_classes(), 10u);

    const auto test = load_idx_pair(dir / "data/test-images-idx3-ubyte", dir / "data/test-labels-idx1-ubyte");
    EXPECT_NE(r.out.find(fixed4(accuracy(net, test))), std::string::npos);
}

TEST_F(Cli, ReflectIsReproducibleAndEvalAgrees)
{
    const auto a = run("reflect" + config() + " --out " + (dir / "a").string());
    const auto b = run("reflect" + config() + " --out " + (dir / "b").string());
    ASSERT_EQ(a.status, 0);
    ASSERT_EQ(b.status, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(slurp(dir / "a" / "model.cnng"), slurp(dir / "b" / "model.cnng"));
    EXPECT_EQ(slurp(dir / "a" / "report.json"), a.out);

    const auto report = json::parse(a.out);
    EXPECT_EQ(report["total"], 300);
    EXPECT_NEAR(report["usage_fraction_sum"].get<double>(), 1.0, 1e-9);
    ASSERT_EQ(report["networks"].size(), 3u);
    EXPECT_FALSE(report["networks"][1]["specific_task_accuracy"].is_null());

    const auto model_path = (dir / "a" / "model.cnng").string();

    // Evaluating the saved model reproduces the reflect report exactly.
    const auto again = run("eval" + config() + " --model " + model_path + " --cv");
    ASSERT_EQ(again.status, 0);
    EXPECT_EQ(json::parse(again.out), report);

    const auto plain = json::parse(run("eval" + config() + " --model " + model_path).out);
    EXPECT_EQ(plain["methods"], report["methods"]);
    EXPECT_TRUE(plain["networks"][1]["specific_task_accuracy"].is_null());
    EXPECT_EQ(plain["notes"].back(), "specific-task accuracy of specialists not computed (pass --cv)");

    const auto on_train = json::parse(run("eval" + config() + " --model " + model_path + " --split train").out);
    const auto model = load_model(model_path);
    EXPECT_EQ(format_double(on_train["methods"]["CNNG"].get<double>()), *find_meta(model.metadata, "train.cnng_accuracy"));
    EXPECT_EQ(format_double(on_train["methods"]["SingleNN"].get<double>()),
              *find_meta(model.metadata, "train.general_accuracy"));
    EXPECT_EQ(on_train["total"], 800);
}

TEST_F(Cli, OverridesReachThePipeline)
{
    const auto r = run("reflect" + config() + " --k 3 --seed 5 --subsample 400 --epochs-specialist 2 --balance-router" +
                       " --out " + (dir / "over").string());
    ASSERT_EQ(r.status, 0);
    const auto report = json::parse(r.out);
    EXPECT_EQ(report["networks"].size(), 4u);
    EXPECT_EQ(report["reflection"]["train_size"], 400);
    const auto model = load_model(dir / "over" / "model.cnng");
    EXPECT_EQ(*find_meta(model.metadata, "general.seed"), "5");
    EXPECT_EQ(*find_meta(model.metadata, "specialist.seed"), "1005");
    EXPECT_EQ(*find_meta(model.metadata, "kmeans.seed"), "5");
    EXPECT_EQ(*find_meta(model.metadata, "specialist.epochs"), "2");
    EXPECT_EQ(*find_meta(model.metadata, "tree.balance_classes"), "true");
    EXPECT_TRUE(model.task_classifier.params.balance_classes);

    // --cv recovers the subsampled training clusters from the fingerprint.
    const auto cv = run("eval" + config() + " --subsample 400 --model " + (dir / "over" / "model.cnng").string() +
                        " --cv");
    ASSERT_EQ(cv.status, 0);
    EXPECT_EQ(json::parse(cv.out)["networks"], report["networks"]);
}

TEST_F(Cli, ConfigurationProblemsExitWithTwo)
{
    EXPECT_EQ(run("reflect").status, 2);
    EXPECT_EQ(run("bogus" + config()).status, 2);
    EXPECT_EQ(run("reflect --config " + (dir / "missing.json").string()).status, 2);
    EXPECT_EQ(run("reflect" + config() + " --report xml").status, 2);

    auto unknown = base_config();
    unknown["reflection"]["momentum"] = 0.9;
    EXPECT_EQ(run("reflect --config " + write_config("unknown.json", unknown)).status, 2);

    auto no_seed = base_config();
    no_seed["reflection"]["kmeans"].erase("seed");
    EXPECT_EQ(run("train-single --config " + write_config("noseed.json", no_seed)).status, 2);

    auto no_data = base_config();
    no_data["dataset"]["test_labels"] = "data/nothing-here";
    EXPECT_EQ(run("train-single --config " + write_config("nodata.json", no_data)).status, 2);

    EXPECT_EQ(run("eval" + config() + " --model " + (dir / "nope.cnng").string()).status, 2);
}

TEST_F(Cli, RuntimeFailuresExitWithOne)
{
    ASSERT_EQ(run("reflect" + config() + " --out " + (dir / "c").string()).status, 0);
    auto bytes = slurp(dir / "c" / "model.cnng");
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x01);
    std::ofstream(dir / "c" / "bad.cnng", std::ios::binary) << bytes;
    EXPECT_EQ(run("eval" + config() + " --model " + (dir / "c" / "bad.cnng").string()).status, 1);

    EXPECT_EQ(run("reflect" + config() + " --k 5000 --out " + (dir / "d").string()).status, 1);

    auto garbage = base_config();
    garbage["dataset"]["test_images"] = "data/train-labels-idx1-ubyte";
    EXPECT_EQ(run("train-single --config " + write_config("garbage.json", garbage)).status, 1);
}
