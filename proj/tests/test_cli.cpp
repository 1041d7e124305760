#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Sandbox {
    fs::path dir;
    Sandbox()
    {
        dir = fs::temp_directory_path() / ("riskmap_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Sandbox() { fs::remove_all(dir); }

    fs::path file(const std::string& name, const std::string& text) const
    {
        std::ofstream(dir / name) << text;
        return dir / name;
    }
    std::string read(const std::string& name) const
    {
        std::ifstream in(dir / name);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    // exit status of `riskmap <args>` run inside the sandbox
    int run(const std::string& args) const
    {
        const std::string cmd = "cd '" + dir.string() + "' && '" RISKMAP_CLI_PATH "' " + args + " >out.txt 2>err.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
};

} // namespace

TEST_SUITE("cli")
{
    TEST_CASE("one area, one class")
    {
        Sandbox s;
        s.file("d.csv", "id,count,population\nonly,7,1000\n");
        s.file("e.csv", "id_a,id_b\n");
        REQUIRE(s.run("fit --data d.csv --edges e.csv -K 1 -M 1 --seed 3 --out f.json") == 0);
        const json j = json::parse(s.read("f.json"));
        CHECK(j["lambda"][0].get<double>() == doctest::Approx(0.007).epsilon(1e-14));
        CHECK(j["labels"]["only"] == 0);
        CHECK(j["seed"] == 3);
        CHECK(j["config"]["K"] == 1);
    }

    TEST_CASE("fixed b = 0 is reported")
    {
        Sandbox s;
        REQUIRE(s.run("simulate --rows 6 --cols 6 --lambda 1e-3,1e-2 --seed 4 --data-out d.csv --edges-out e.csv "
                      "--truth-out t.csv") == 0);
        REQUIRE(s.run("fit --data d.csv --edges e.csv --K 2 --M 2 --fix-b 0 --seed 1 --out f.json") == 0);
        const json j = json::parse(s.read("f.json"));
        CHECK(j["b"].get<double>() == 0.0);
        CHECK(j["config"]["fix_b"].get<double>() == 0.0);
    }

    TEST_CASE("2x2 single-class simulation")
    {
        Sandbox s;
        REQUIRE(s.run("simulate --rows 2 --cols 2 --lambda 0.001 --seed 1 --data-out d.csv --edges-out e.csv "
                      "--truth-out t.csv --svg t.svg") == 0);
        std::istringstream data(s.read("d.csv"));
        std::string line;
        int rows = -1;
        while (std::getline(data, line))
            ++rows;
        CHECK(rows == 4);
        std::istringstream truth(s.read("t.csv"));
        std::getline(truth, line);
        while (std::getline(truth, line))
            CHECK(line.substr(line.find(',') + 1, 2) == "0,");
        CHECK(s.read("t.svg").rfind("<svg", 0) == 0);
    }

    TEST_CASE("evaluating the truth against itself")
    {
        Sandbox s;
        s.file("t.csv", "id,true_class,true_lambda\na,0,1e-5\nb,1,1e-3\nc,1,1e-3\n");
        s.file("f.json", R"({"lambda": [1e-5, 1e-3], "labels": {"a": 0, "b": 1, "c": 1}, "collapsed": [], "seed": 1})");
        REQUIRE(s.run("evaluate --fit f.json --truth t.csv --out r.json") == 0);
        const json r = json::parse(s.read("r.json"));
        CHECK(r["dsc"] == json::array({1.0, 1.0}));
    }

    TEST_CASE("dice hand fixture through the command line")
    {
        Sandbox s;
        // class 1 predicted at {1,2,3}, true at {2,3,4}
        s.file("t.csv", "id,true_class\nn0,0\nn1,0\nn2,1\nn3,1\nn4,1\n");
        s.file("f.json", R"({"lambda": [1e-4, 1e-3], "labels": {"n0": 0, "n1": 1, "n2": 1, "n3": 1, "n4": 0}})");
        REQUIRE(s.run("evaluate --fit f.json --truth t.csv --true-lambda 1e-4,1e-3 --out r.json") == 0);
        const json r = json::parse(s.read("r.json"));
        CHECK(r["dsc"][1].get<double>() == doctest::Approx(2.0 / 3.0));
    }

    TEST_CASE("a collapsed class is flagged")
    {
        Sandbox s;
        s.file("t.csv", "id,true_class,true_lambda\na,0,1e-5\nb,0,1e-5\nc,1,1e-3\n");
        s.file("f.json", R"({"lambda": [1e-5, 1e-3], "labels": {"a": 0, "b": 0, "c": 0}, "collapsed": [1]})");
        REQUIRE(s.run("evaluate --fit f.json --truth t.csv --out r.json") == 0);
        const json r = json::parse(s.read("r.json"));
        CHECK(r["collapsed"][1] == true);
        CHECK(r["dsc"][1].get<double>() == 0.0);
    }

    TEST_CASE("exit codes")
    {
        Sandbox s;
        s.file("bad.csv", "id,count,population\na,1,100\nb,oops,100\n");
        s.file("ok.csv", "id,count,population\na,1,100\nb,2,100\n");
        s.file("e.csv", "a,b\n");
        s.file("stranger.csv", "a,z\n");
        CHECK(s.run("fit --data bad.csv --edges e.csv -K 2") == 2);
        CHECK(s.read("err.txt").find("bad.csv:3:") != std::string::npos);
        CHECK(s.run("fit --data ok.csv --edges stranger.csv -K 2") == 2);
        // four classes cannot be drawn from two areas: every restart fails
        CHECK(s.run("fit --data ok.csv --edges e.csv -K 4 -M 2") == 3);
        CHECK(s.run("select-k --data ok.csv --edges e.csv --k-min 4 --k-max 5 -M 1") == 3);
        CHECK(s.run("simulate --rows 2 --cols 2 --lambda 1e-3 --data-out d --edges-out e --truth-out t") == 2);
        CHECK(s.run("study --rows 3 --cols 3 -R 2") == 2);
        CHECK(s.run("simulate --rows 2 --cols 2 --lambda 1e-3,2e-3 --permute 1,1 --seed 1 --data-out d "
                    "--edges-out e --truth-out t") == 2);
        s.file("t.csv", "id,true_class,true_lambda\na,0,1e-5\nq,1,1e-3\n");
        s.file("f.json", R"({"lambda": [1e-5, 1e-3], "labels": {"a": 0, "b": 1}})");
        CHECK(s.run("evaluate --fit f.json --truth t.csv") == 2);
    }

    TEST_CASE("simulated files feed straight into a fit")
    {
        Sandbox s;
        REQUIRE(s.run("simulate --rows 5 --cols 5 --seed 9 --data-out d.csv --edges-out e.csv --truth-out t.csv") == 0);
        REQUIRE(s.run("fit --data d.csv --edges e.csv -K 3 -M 1 --seed 2 --out f.json") == 0);
        const json j = json::parse(s.read("f.json"));
        CHECK(j["labels"].size() == 25);
    }
}
