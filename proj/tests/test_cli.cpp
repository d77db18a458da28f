#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "gramnas/search.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out;
};

auto run(const std::string& args) -> Result
{
    std::string cmd = std::string(GRAMNAS_CLI) + " " + args + " 2>/dev/null";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    if (p == nullptr) {
        return r;
    }
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) {
        r.out.append(buf.data(), n);
    }
    int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

auto lines(const std::string& s) -> std::vector<std::string>
{
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) {
        out.push_back(l);
    }
    return out;
}

auto count(const std::string& s, const std::string& what) -> std::size_t
{
    std::size_t n = 0;
    for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) {
        ++n;
    }
    return n;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path()
               / ("gramnas_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    auto path(const std::string& name) const -> std::string { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

    fs::path dir_;
};

} // namespace

TEST_F(CliTest, GrammarSize)
{
    auto r = run("grammar size nb201_cell");
    EXPECT_EQ(r.status, 0);
    EXPECT_EQ(lines(r.out), (std::vector<std::string>{"15625", "log10 4.194"}));
    r = run("grammar size residual");
    EXPECT_EQ(r.status, 0);
    EXPECT_EQ(r.out, "infinite\n");
}

TEST_F(CliTest, GrammarCheck)
{
    EXPECT_EQ(run("grammar check nb201_hierarchical").status, 0);
    write("bad.cfg", "S ::= A | conv\nB ::= id\nA ::= A\n");
    auto r = run("grammar check " + path("bad.cfg"));
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(run("grammar check /nonexistent.cfg").status, 1);
}

TEST_F(CliTest, GrammarEnumerate)
{
    write("toy.cfg", "S ::= Residual(B,B,B)\nB ::= conv | id\n");
    auto r = run("grammar enumerate " + path("toy.cfg"));
    EXPECT_EQ(r.status, 0);
    auto l = lines(r.out);
    ASSERT_EQ(l.size(), 8U);
    EXPECT_EQ(l.front(), "Residual(conv,conv,conv)");
}

TEST_F(CliTest, SampleIsSeedDeterministic)
{
    auto a = run("sample --grammar nb201_hierarchical --n 5 --seed 3");
    auto b = run("sample --grammar nb201_hierarchical --n 5 --seed 3");
    auto c = run("sample --grammar nb201_hierarchical --n 5 --seed 4");
    EXPECT_EQ(a.status, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.out, c.out);
    EXPECT_EQ(lines(a.out).size(), 5U);
}

TEST_F(CliTest, ExportDotAndJson)
{
    const std::string omega = "'Linear(Residual(conv,id,conv),Residual(conv,id,conv),fc)'";
    auto dot = run("export --grammar residual --format dot " + omega);
    EXPECT_EQ(dot.status, 0);
    EXPECT_EQ(count(dot.out, "->"), 7U);
    auto json = run("export --grammar residual " + omega);
    EXPECT_EQ(json.status, 0);
    auto j = nlohmann::json::parse(json.out);
    EXPECT_EQ(j["schema"], "archgraph/1");
    EXPECT_EQ(j["edges"].size(), 7U);
    auto folded = run("export --grammar residual --fold 2 " + omega);
    EXPECT_EQ(nlohmann::json::parse(folded.out)["edges"].size(), 3U);
    EXPECT_EQ(run("export --grammar residual 'Linear(conv)'").status, 1);
}

TEST_F(CliTest, ExportTermFromFileWithBindings)
{
    auto sample = run("sample --grammar nb201_macro --n 1 --seed 1");
    write("t.txt", sample.out);
    auto r = run("export --grammar nb201_macro @" + path("t.txt"));
    EXPECT_EQ(r.status, 0) << sample.out;
    EXPECT_EQ(nlohmann::json::parse(r.out)["schema"], "archgraph/1");
}

TEST_F(CliTest, KernelMatrix)
{
    write("terms.txt", "# three terms\nLinear(Residual(conv,id,conv),Residual(conv,id,conv),fc)\n\nconv\nfc\n");
    for (const char* k : {"hwl", "wl"}) {
        auto r = run(std::string("kernel --grammar residual --kernel ") + k + " " + path("terms.txt"));
        EXPECT_EQ(r.status, 0);
        auto l = lines(r.out);
        ASSERT_EQ(l.size(), 3U);
        for (const auto& row : l) {
            EXPECT_EQ(count(row, ","), 2U);
        }
        // conv and fc only share the input and output markers.
        EXPECT_EQ(l[1].substr(l[1].find(',') + 1, l[1].rfind(',') - l[1].find(',') - 1), "1");
        double cross = std::stod(l[1].substr(l[1].rfind(',') + 1));
        EXPECT_GT(cross, 0.0);
        EXPECT_LT(cross, 1.0);
    }
}

TEST_F(CliTest, SearchWritesOneRecordPerEvaluation)
{
    auto r = run("search --grammar nb201_hierarchical --strategy rs --budget 10 --seed 1 --out " + path("log.jsonl"));
    EXPECT_EQ(r.status, 0);
    auto h = gramnas::read_jsonl(fs::path(path("log.jsonl")));
    EXPECT_EQ(h.records.size(), 10U);
    auto again = run("search --grammar nb201_hierarchical --strategy rs --budget 10 --seed 1");
    std::ifstream in(path("log.jsonl"));
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(again.out, ss.str());
}

TEST_F(CliTest, SearchResume)
{
    ASSERT_EQ(run("search --strategy rs --budget 5 --init 5 --seed 2 --out " + path("a.jsonl")).status, 0);
    ASSERT_EQ(run("search --strategy rs --budget 8 --init 5 --seed 2 --resume " + path("a.jsonl") + " --out "
                  + path("b.jsonl"))
                  .status,
              0);
    auto a = gramnas::read_jsonl(fs::path(path("a.jsonl")));
    auto b = gramnas::read_jsonl(fs::path(path("b.jsonl")));
    ASSERT_EQ(b.records.size(), 8U);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(b.records[i].term, a.records[i].term);
    }
}

TEST_F(CliTest, SearchRejectsBadConfig)
{
    EXPECT_EQ(run("search --budget 5 --init 10").status, 1);
    EXPECT_NE(run("search --strategy nope").status, 0);
}

TEST_F(CliTest, Analyze)
{
    std::string log;
    for (int i = 0; i < 10; ++i) {
        log += R"({"iteration":)" + std::to_string(i) + R"(,"term":"conv","value":0.5,"incumbent":0.5,"hyper":null})"
               + "\n";
    }
    write("a.jsonl", log);
    write("b.jsonl", log);
    write("empty.jsonl", "");
    auto r = run("analyze --grammar residual --out " + path("out") + " " + path("a.jsonl"));
    EXPECT_EQ(r.status, 0);
    for (const char* f : {"density.csv", "production_cohorts.csv", "production_marginals.csv", "depth_vs_value.csv"}) {
        EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
    }
    std::ifstream cohorts(dir_ / "out" / "production_cohorts.csv");
    std::stringstream ss;
    ss << cohorts.rdbuf();
    // 10 records: one top, one worst, eight middle, all on `S ::= conv`.
    EXPECT_NE(ss.str().find("\"S ::= conv\",1,1,8,"), std::string::npos) << ss.str();

    EXPECT_EQ(run("analyze --grammar residual --out " + path("two") + " " + path("a.jsonl") + " " + path("b.jsonl"))
                  .status,
              0);
    std::ifstream dv(dir_ / "two" / "depth_vs_value.csv");
    std::stringstream dss;
    dss << dv.rdbuf();
    EXPECT_EQ(lines(dss.str()).size(), 21U);

    EXPECT_EQ(run("analyze --grammar residual --out " + path("e") + " " + path("empty.jsonl")).status, 1);
}

TEST_F(CliTest, UnknownGrammar)
{
    EXPECT_EQ(run("sample --grammar no_such_grammar").status, 1);
}
