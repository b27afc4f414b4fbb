#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <thread>

#include "catbench/cli.hpp"
#include "golden_matrix.hpp"
#include "test_support.hpp"

using namespace catbench;
using catbench::testing::TempDir;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, {out, err});
    return {code, out.str(), err.str()};
}

std::string s(const std::filesystem::path& p) { return p.string(); }

}  // namespace

TEST_CASE("cli: ingest", "[cli]") {
    TempDir dir;
    catbench::testing::write_corpus(catbench::testing::make_corpus(2, 2, 1), dir.path() / "c");
    auto r = run({"ingest", s(dir.path() / "c")});
    CHECK(r.code == 0);
    CHECK(r.out.starts_with("5 poems: 2 Good, 2 Medium, 1 Bad\n"));
    CHECK(r.out.find("note: categories are unbalanced") != std::string::npos);
    r = run({"ingest", s(dir.path() / "c"), "--json"});
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out).size() == 5);
    r = run({"ingest", s(dir.path() / "missing")});
    CHECK(r.code == 2);
    CHECK(r.err.find("manifest.csv") != std::string::npos);
}

TEST_CASE("cli: usage errors exit 2, help exits 0", "[cli]") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"run", "--corpus", "x"}).code == 2);
    const auto help = run({"--help"});
    CHECK(help.code == 0);
    for (const auto* sub : {"ingest", "plan", "run", "stats", "report", "strip"}) CHECK(help.out.find(sub) != std::string::npos);
}

TEST_CASE("cli: plan is deterministic", "[cli]") {
    TempDir dir;
    catbench::testing::write_corpus(catbench::testing::paper_layout_corpus(), dir.path() / "c");
    const auto a = run({"plan", "--corpus", s(dir.path() / "c"), "--seed", "11"});
    const auto b = run({"plan", "--corpus", s(dir.path() / "c"), "--seed", "11"});
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.err.find("StratifiedSubsets: 100 batches, 1500 appearances, mu 16.667") != std::string::npos);
    const auto plan = nlohmann::json::parse(a.out).get<BatchPlan>();
    CHECK(plan.batches.size() == 100);
    const auto c = run({"plan", "--corpus", s(dir.path() / "c"), "--seed", "12"});
    CHECK(c.out != a.out);
    const auto full = run({"plan", "--corpus", s(dir.path() / "c"), "--experiment", "RankFull", "-o", s(dir.path() / "p.json")});
    CHECK(full.code == 0);
    CHECK(nlohmann::json::parse(text::read_file(dir.path() / "p.json")).at("batches").size() == 10);
    CHECK(run({"plan", "--corpus", s(dir.path() / "c"), "--k", "31"}).code == 2);
}

TEST_CASE("cli: run, verify, report and strip", "[cli]") {
    TempDir dir;
    catbench::testing::write_corpus(catbench::testing::paper_layout_corpus(), dir.path() / "c");
    const auto run_dir = s(dir.path() / "run");
    auto r = run({"run", "--corpus", s(dir.path() / "c"), "--experiment", "RankSubsets", "--n", "20", "--criteria", "Quality,Creativity",
                  "--methods", "RankDerived", "--sigma", "0", "--seed", "4", "-o", run_dir});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Quality / RankDerived: SRC 1.000") != std::string::npos);
    CHECK(r.out.find("Creativity / RankDerived: SRC 1.000") != std::string::npos);
    const auto config = nlohmann::json::parse(text::read_file(dir.path() / "run" / "config.json"));
    CHECK(config.at("criteria") == nlohmann::json::array({"Quality", "Creativity"}));

    r = run({"stats", run_dir});
    CHECK(r.code == 0);
    CHECK(r.out.find("stats.json: identical") != std::string::npos);

    // Rerunning from the stored config reproduces the artifact byte for byte.
    r = run({"run", "--config", s(dir.path() / "run" / "config.json"), "-o", s(dir.path() / "again")});
    CHECK(r.code == 0);
    for (const auto* f : {"stats.json", "exchanges.jsonl", "rankings.csv", "plan.json"})
        CHECK(text::read_file(dir.path() / "run" / f) == text::read_file(dir.path() / "again" / f));

    // Existing output is refused.
    CHECK(run({"run", "--config", s(dir.path() / "run" / "config.json"), "-o", run_dir}).code == 4);
    CHECK(run({"run", "--config", s(dir.path() / "run" / "config.json"), "-o", run_dir, "--overwrite"}).code == 0);

    r = run({"report", run_dir, "-o", s(dir.path() / "rep")});
    CHECK(r.code == 0);
    CHECK(text::read_file(dir.path() / "rep" / "report.md") == text::read_file(dir.path() / "run" / "report.md"));

    r = run({"strip", run_dir, "--criterion", "Quality", "--plain"});
    CHECK(r.code == 0);
    // Twenty subsets leave a few poems unseen, so the strip is shorter than 90 but still sorted.
    REQUIRE(r.out.starts_with("Quality (RankDerived)  "));
    const auto letters = r.out.substr(23, r.out.find("  SRC") - 23);
    CHECK(letters.size() > 80);
    CHECK(std::is_sorted(letters.begin(), letters.end()));
    CHECK(r.out.find("  SRC 1.00\n") != std::string::npos);
    CHECK(run({"strip", run_dir, "--criterion", "Quality", "--method", "Scale"}).code == 2);
    r = run({"strip", "--ground-truth", "--corpus", s(dir.path() / "c"), "--svg", s(dir.path() / "gt.svg")});
    CHECK(r.code == 0);
    CHECK(text::read_file(dir.path() / "gt.svg").find("GROUND TRUTH") != std::string::npos);

    // Tampered stats are reported.
    auto stats = text::read_file(dir.path() / "run" / "stats.json");
    text::write_file(dir.path() / "run" / "stats.json", stats + " ");
    r = run({"stats", run_dir});
    CHECK(r.code == 2);
    CHECK(r.out.find("stats.json: DIFFERS") != std::string::npos);
}

TEST_CASE("cli: configuration errors exit 2", "[cli]") {
    TempDir dir;
    catbench::testing::write_corpus(catbench::testing::make_corpus(3, 3, 3), dir.path() / "c");
    const auto corpus = s(dir.path() / "c");
    CHECK(run({"run", "--corpus", corpus, "--criteria", "Rhyme", "-o", s(dir.path() / "a")}).code == 2);
    CHECK(run({"run", "--corpus", corpus, "--experiment", "Reliability", "--repetitions", "1", "-o", s(dir.path() / "b")}).code == 2);
    CHECK(run({"run", "--corpus", corpus, "--methods", "median", "-o", s(dir.path() / "c2")}).code == 2);
    CHECK(run({"run", "--corpus", corpus, "--provider", "Mock", "-o", s(dir.path() / "d")}).code == 2);
    const auto remote = run({"run", "--corpus", corpus, "--provider", "RemoteB", "--model", "m", "-o", s(dir.path() / "e")});
    CHECK(remote.code == 2);
    CHECK(remote.err.find("--live") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir.path() / "e"));
    text::write_file(dir.path() / "bad.json", "{not json");
    CHECK(run({"run", "--config", s(dir.path() / "bad.json"), "-o", s(dir.path() / "f")}).code == 2);
}

TEST_CASE("cli: provider exhaustion exits 3", "[cli]") {
    TempDir dir;
    catbench::testing::write_corpus(catbench::testing::make_corpus(3, 3, 3), dir.path() / "c");
    // Every reply is a refusal: each request exhausts its retries, the run completes but is incomplete.
    nlohmann::json refusals = nlohmann::json::array();
    for (int i = 0; i < 4; ++i) refusals.push_back("I'm sorry, but I can't rank these.");
    text::write_file(dir.path() / "refuse.json", refusals.dump());
    auto r = run({"run", "--corpus", s(dir.path() / "c"), "--experiment", "RankFull", "--n", "2", "--criteria", "Quality", "--provider", "Mock",
                  "--mock-script", s(dir.path() / "refuse.json"), "--max-retries", "1", "-o", s(dir.path() / "run")});
    CHECK(r.code == 3);
    CHECK(r.out.find("INCOMPLETE: 2 failed") != std::string::npos);
    CHECK(run({"stats", s(dir.path() / "run")}).code == 0);

    // A script that runs dry stops the run; the partial artifact is kept.
    text::write_file(dir.path() / "short.json", "[]");
    r = run({"run", "--corpus", s(dir.path() / "c"), "--experiment", "RankFull", "--n", "2", "--criteria", "Quality", "--provider", "Mock",
             "--mock-script", s(dir.path() / "short.json"), "-o", s(dir.path() / "dry")});
    CHECK(r.code == 3);
    CHECK(r.err.find("partial artifact written") != std::string::npos);
    CHECK(nlohmann::json::parse(text::read_file(dir.path() / "dry" / "stats.json")).at("complete") == false);
}

TEST_CASE("cli: statistics kernels on CSV input", "[cli]") {
    TempDir dir;
    std::string icc_csv;
    for (const auto& row : catbench::testing::golden_rank_matrix()) {
        for (std::size_t j = 0; j < row.size(); ++j) icc_csv += (j ? "," : "") + text::format_double(row[j]);
        icc_csv += "\n";
    }
    text::write_file(dir.path() / "m.csv", icc_csv);
    auto r = run({"stats", "--icc", s(dir.path() / "m.csv")});
    REQUIRE(r.code == 0);
    const auto icc = nlohmann::json::parse(r.out);
    CHECK(icc.at("F_icc1").get<double>() == Catch::Approx(83.5248).margin(1e-3));
    CHECK(icc.at("F_icc23").get<double>() == Catch::Approx(77.9565).margin(1e-3));

    text::write_file(dir.path() / "xy.csv", "x,y\n1,2\n2,1\n3,4\n4,3\n5,5\n");
    r = run({"stats", "--spearman", s(dir.path() / "xy.csv")});
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out).at("rho").get<double>() == Catch::Approx(0.8));

    text::write_file(dir.path() / "g.csv", "group,value\nGood,5\nGood,4\nMedium,3\nMedium,2\nBad,1\nBad,0\n");
    r = run({"stats", "--anova", s(dir.path() / "g.csv")});
    REQUIRE(r.code == 0);
    const auto anova = nlohmann::json::parse(r.out);
    CHECK(anova.at("groups") == nlohmann::json::array({"Good", "Medium", "Bad"}));
    CHECK(anova.at("F").get<double>() == Catch::Approx(16.0));

    text::write_file(dir.path() / "const.csv", "1,1\n1,2\n1,3\n");
    CHECK(run({"stats", "--spearman", s(dir.path() / "const.csv")}).code == 2);
    text::write_file(dir.path() / "junk.csv", "1,x\n");
    CHECK(run({"stats", "--icc", s(dir.path() / "junk.csv")}).code == 2);
    CHECK(run({"stats", "--icc", s(dir.path() / "nope.csv")}).code == 4);
    CHECK(run({"stats"}).code == 2);
}

TEST_CASE("cli: live run against a local endpoint", "[cli]") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
        // Answer classification prompts from the placeholder body, which names the category.
        const auto prompt = nlohmann::json::parse(req.body).at("messages").at(0).at("content").get<std::string>();
        std::string label = "Bad";
        if (prompt.find("Line two, Good.") != std::string::npos) label = "Good";
        else if (prompt.find("Line two, Medium.") != std::string::npos) label = "Medium";
        const nlohmann::json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", "<category>" + label + "</category>"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    TempDir dir;
    catbench::testing::write_corpus(catbench::testing::make_corpus(2, 2, 2), dir.path() / "c");
    ::setenv("OPENAI_API_KEY", "test", 1);
    const auto r = run({"run", "--corpus", s(dir.path() / "c"), "--experiment", "Classify", "--provider", "RemoteB", "--model", "m", "--base-url",
                        "http://127.0.0.1:" + std::to_string(port), "--live", "-o", s(dir.path() / "run")});
    ::unsetenv("OPENAI_API_KEY");
    server.stop();
    t.join();
    INFO(r.err);
    CHECK(r.code == 0);
    CHECK(r.out.find("Classification: accuracy 100.0% (6/6), SRC 1.000") != std::string::npos);
    const auto log = text::read_file(dir.path() / "run" / "exchanges.jsonl");
    CHECK(log.find("\"response_body\"") != std::string::npos);
    CHECK(log.find("\"timestamp\"") != std::string::npos);
    CHECK(run({"stats", s(dir.path() / "run")}).code == 0);
}
