#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tpl/cli.hpp"
#include "tpl/common.hpp"
#include "tpl/config.hpp"

using namespace tpl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("tpl_cli_" + std::to_string(std::random_device{}())))
    {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& text) const
    {
        const auto p = (path / name).string();
        std::ofstream(p) << text;
        return p;
    }
};

int run(std::vector<std::string> args) { return run_cli(args); }

} // namespace

TEST_CASE("config parsing")
{
    const auto c = parse_config(R"({"schema": 1, "seed": 4, "nt": {"L": 2}})");
    CHECK(c.workflow == "nt");
    CHECK(c.seed == 4);
    CHECK(c.section["L"] == 2);

    try {
        parse_config("{\n  \"nt\": {\n    \"L\": ,\n  }\n}", "x.json");
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("x.json:3:") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(R"({"nt": {}, "mu": {}})"), Error);
    CHECK_THROWS_AS(parse_config(R"({"schema": 2, "nt": {}})"), Error);
    CHECK_THROWS_AS(parse_config(R"({"seed": 1})"), Error);
    CHECK_THROWS_AS(parse_config(R"({"nnt": {}})"), Error);
}

TEST_CASE("rule and modifier specs")
{
    CHECK(rule_from_json("sgd", "r").kind == RuleKind::sgd);
    const UpdateRule a = rule_from_json(json{{"kind", "adam"}, {"eps", 1e-4}}, "r");
    CHECK(a.eps == 1e-4);
    CHECK(a.beta1 == 0.9);
    CHECK(rule_from_json(rule_to_json(a), "r").beta2 == a.beta2);
    CHECK_THROWS_AS(rule_from_json("rmsprop", "r"), Error);
    CHECK_THROWS_AS(rule_from_json(json{{"kind", "adam"}, {"beta1", "x"}}, "r"), Error);

    const RuleTable t = rule_table_from_json(json{{"base", "sgd"}, {"layers", {{"2", "signsgd"}}}}, "r");
    CHECK(t.at(2).kind == RuleKind::signsgd);
    CHECK(rule_table_to_json(t)["layers"]["2"]["kind"] == "signsgd");

    const Modifiers m = modifiers_from_json(json{{"weight_decay", 0.1}, {"clip", "clip"}, {"theta0", 2}}, "m");
    CHECK(m.clip == ClipMode::clip);
    CHECK(modifiers_from_json(modifiers_to_json(m), "m").theta0 == 2);
    try {
        modifiers_from_json(json{{"weight_decay", 1.5}}, "sweep.modifiers");
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidConfig);
        CHECK(std::string(e.what()).find("sweep.modifiers") != std::string::npos);
    }
}

TEST_CASE("cli classify and exit codes")
{
    TempDir d;
    const std::string out = d.path.string();
    CHECK(run({"tpl", "classify", "--preset", "muP", "--L", "3", "--out", out}) == 0);
    CHECK(fs::exists(d.path / "classify" / "classification.json"));

    const auto bad = d.file("bad.json", R"({"classify": {"a": [0, 0], "b": [0, 0, 0], "c": [0, 0], "d": [0, 0]}})");
    CHECK(run({"tpl", "classify", bad, "--out", out}) == 1);
    const auto good = d.file("good.json", R"({"classify": {"a": [0, 0], "b": [0, 0], "c": [0, 0], "d": [0, 0]}})");
    CHECK(run({"tpl", "classify", good, "--out", out}) == 0);
    const auto wrong = d.file("wrong.json", R"({"nt": {}})");
    CHECK(run({"tpl", "classify", wrong, "--out", out}) == 1);
    CHECK(run({"tpl", "frobnicate"}) == 1);
    CHECK(run({"tpl", "classify", "--preset", "XP", "--out", out}) == 1);
    CHECK(run({"tpl", "classify", (d.path / "missing.json").string()}) == 1);
}

TEST_CASE("cli limit and training workflows write artifacts")
{
    TempDir d;
    const std::string out = d.path.string();
    const auto nt = d.file("nt.json", R"({"nt": {"L": 2, "d": 3, "n_train": 4, "n_test": 1, "kernel_layers": [2]}})");
    CHECK(run({"tpl", "nt-limit", nt, "--out", out, "--samples", "500", "--steps", "2"}) == 0);
    CHECK(fs::exists(d.path / "nt" / "trace.csv"));
    CHECK(fs::exists(d.path / "nt" / "kernel_l2.csv"));

    const auto mu = d.file("mu.json", R"({"mu": {"L": 2, "d": 3, "n_train": 4, "n_test": 1}})");
    CHECK(run({"tpl", "mu-limit", mu, "--out", out, "--samples", "300", "--steps", "2"}) == 0);
    CHECK(fs::exists(d.path / "mu" / "trace.csv"));

    const auto tr = d.file("tr.json", R"({"train": {"L": 2, "d": 3, "n_train": 4, "n_test": 1, "trials": 2}})");
    CHECK(run({"tpl", "train", tr, "--out", out, "--widths", "32", "--steps", "2"}) == 0);
    CHECK(fs::exists(d.path / "train" / "trace.csv"));

    const auto sw = d.file("sw.json", R"({"sweep": {"L": 2, "d": 3, "n_train": 4, "n_test": 1, "trials": 2}})");
    CHECK(run({"tpl", "sweep", sw, "--mode", "mu", "--widths", "16,32", "--out", out, "--samples", "300", "--steps",
               "2"}) == 0);
    CHECK(fs::exists(d.path / "sweep" / "report.json"));
    CHECK(run({"tpl", "sweep", sw, "--mode", "xx", "--out", out}) == 1);
    CHECK(run({"tpl", "sweep", sw, "--widths", "16,abc", "--out", out}) == 1);
}

TEST_CASE("cli ket-run and backprop-check")
{
    TempDir d;
    const std::string out = d.path.string();
    const auto prog = d.file("p.json", R"({"program": {"program": {"mlp": {"L": 2, "d": 2, "xi": [0.6, 0.8]}},
                                           "samples": 2000, "columns": ["x2"]}})");
    CHECK(run({"tpl", "ket-run", prog, "--out", out}) == 0);
    CHECK(fs::exists(d.path / "ket" / "snapshot.csv"));
    CHECK(fs::exists(d.path / "ket" / "scalars.json"));
    CHECK(run({"tpl", "backprop-check", "--L", "2", "--width", "8", "--out", out}) == 0);
    CHECK(fs::exists(d.path / "backprop" / "gradcheck.json"));
}

TEST_CASE("output directory from the environment")
{
    TempDir d;
    setenv(kOutDirEnv, d.path.string().c_str(), 1);
    CHECK(run({"tpl", "classify", "--preset", "NTP"}) == 0);
    unsetenv(kOutDirEnv);
    CHECK(fs::exists(d.path / "classify" / "classification.json"));
}
