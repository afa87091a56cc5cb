#include "doctest.h"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"

#include "chainmem/chain.hpp"
#include "chainmem/config.hpp"
#include "chainmem/errors.hpp"

using namespace chainmem;
namespace fs = std::filesystem;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

CommandResult run_command(const std::string& command) {
    CommandResult result;
    FILE* pipe = popen((command + " 2>&1").c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buffer;
    while (std::size_t n = fread(buffer.data(), 1, buffer.size(), pipe))
        result.output.append(buffer.data(), n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

fs::path make_workdir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("chainmem_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

// A fully offline config: every role scripted; the endpoints point at a
// connection-refusing address so any network attempt would abort the run.
std::string scripted_config_json(const std::string& manager_answer) {
    nlohmann::json config = {
        {"k", 4},
        {"unit_mode", "word"},
        {"task", "qa"},
        {"detector", "heuristic"},
        {"backends",
         {{"worker",
           {{"kind", "scripted"},
            {"endpoint", "http://127.0.0.1:1"},
            {"script", {{{"pattern", ""}, {"response", "found: the color is teal"}}}}}},
          {"filter",
           {{"kind", "scripted"},
            {"endpoint", "http://127.0.0.1:1"},
            {"script", {{{"pattern", ""}, {"response", "RELATED\nfound: the color is teal"}}}}}},
          {"judge",
           {{"kind", "scripted"},
            {"endpoint", "http://127.0.0.1:1"},
            {"script", {{{"pattern", ""}, {"response", "LATER\nkeep"}}}}}},
          {"manager",
           {{"kind", "scripted"},
            {"endpoint", "http://127.0.0.1:1"},
            {"script", {{{"pattern", ""}, {"response", manager_answer}}}}}}}},
    };
    return config.dump(2);
}

const std::string kBin = CHAINMEM_BIN;

} // namespace

TEST_CASE("cli run: answer on stdout, trace file written, fully offline") {
    const auto dir = make_workdir("run");
    write_file(dir / "config.json", scripted_config_json("teal"));
    write_file(dir / "doc.txt", "the walls were painted long ago in a color nobody remembers");

    const auto trace_path = (dir / "trace.json").string();
    const auto result = run_command(kBin + " run " + (dir / "doc.txt").string() +
                                    " \"what color?\" --config " + (dir / "config.json").string() +
                                    " --trace-out " + trace_path);
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("teal") != std::string::npos);
    REQUIRE(fs::exists(trace_path));

    const ChainResult loaded = read_report(trace_path);
    CHECK(loaded.answer == "teal");
    CHECK(loaded.trace.nodes.size() == 3); // 11 words at k=4
    CHECK_FALSE(loaded.trace.error.has_value());
}

TEST_CASE("cli run: missing template dir is a validation error, exit 2") {
    const auto dir = make_workdir("badtpl");
    nlohmann::json config = nlohmann::json::parse(scripted_config_json("x"));
    config["template_dir"] = (dir / "no_such_dir").string();
    write_file(dir / "config.json", config.dump());
    write_file(dir / "doc.txt", "some words");

    const auto result = run_command(kBin + " run " + (dir / "doc.txt").string() +
                                    " q --config " + (dir / "config.json").string());
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("template") != std::string::npos);
}

TEST_CASE("cli run: usage errors exit 2") {
    const auto result = run_command(kBin + " run");
    CHECK(result.exit_code == 2);
}

TEST_CASE("cli bench: prints the mean and writes the report") {
    const auto dir = make_workdir("bench");
    write_file(dir / "config.json", scripted_config_json("the color is teal"));
    std::ostringstream samples;
    for (int i = 0; i < 3; ++i)
        samples << nlohmann::json({{"context", "one two three four five six"},
                                   {"input", "what color?"},
                                   {"answers", {"the color is teal"}},
                                   {"dataset", "hotpotqa"}})
                       .dump()
                << "\n";
    write_file(dir / "samples.jsonl", samples.str());

    const auto report_path = (dir / "report.json").string();
    const auto result =
        run_command(kBin + " bench " + (dir / "samples.jsonl").string() + " --config " +
                    (dir / "config.json").string() + " --metric f1 --report-out " + report_path);
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("samples=3") != std::string::npos);
    CHECK(result.output.find("mean_score=1.0000") != std::string::npos);
    REQUIRE(fs::exists(report_path));
    std::ifstream in(report_path);
    nlohmann::json report;
    in >> report;
    CHECK(report["rows"].size() == 3);
    CHECK(report["mean_score"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("cli bench: a failing sample warns but still exits 0") {
    const auto dir = make_workdir("benchfail");
    nlohmann::json config = nlohmann::json::parse(scripted_config_json("the color is teal"));
    // the worker script runs dry after the first sample's single chunk
    config["backends"]["worker"]["script"] = {
        {{"pattern", ""}, {"response", "found: the color is teal"}, {"once", true}}};
    write_file(dir / "config.json", config.dump());
    std::ostringstream samples;
    for (int i = 0; i < 2; ++i)
        samples << nlohmann::json({{"context", "one two three four"},
                                   {"input", "what color?"},
                                   {"answers", {"the color is teal"}},
                                   {"dataset", "hotpotqa"}})
                       .dump()
                << "\n";
    write_file(dir / "samples.jsonl", samples.str());

    const auto result = run_command(kBin + " bench " + (dir / "samples.jsonl").string() +
                                    " --config " + (dir / "config.json").string());
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("warning") != std::string::npos);
    CHECK(result.output.find("mean_score=0.5000") != std::string::npos);
}

TEST_CASE("cli bench: empty samples file is an error") {
    const auto dir = make_workdir("benchempty");
    write_file(dir / "config.json", scripted_config_json("x"));
    write_file(dir / "samples.jsonl", "");
    const auto result = run_command(kBin + " bench " + (dir / "samples.jsonl").string() +
                                    " --config " + (dir / "config.json").string());
    CHECK(result.exit_code == 2);
}

TEST_CASE("cli needle: depth sweep prints one row per depth") {
    const auto dir = make_workdir("needle");
    // scripted roles echo the needle token end-to-end
    nlohmann::json config = nlohmann::json::parse(scripted_config_json("unused"));
    config["k"] = 64;
    config["backends"]["worker"]["script"] = {
        {{"pattern", "needle-fact-zebra-9917."}, {"response", "needle-fact-zebra-9917."}},
        {{"pattern", ""}, {"response", "nothing seen"}}};
    config["backends"]["filter"]["script"] = {
        {{"pattern", "needle-fact-zebra-9917."}, {"response", "RELATED\nneedle-fact-zebra-9917."}},
        {{"pattern", ""}, {"response", "UNRELATED"}}};
    config["backends"]["manager"]["script"] = {
        {{"pattern", "needle-fact-zebra-9917."}, {"response", "needle-fact-zebra-9917."}},
        {{"pattern", ""}, {"response", "no answer"}}};
    write_file(dir / "config.json", config.dump(2));

    const auto result = run_command(kBin + " needle --length 200 --depth 0 --depth 0.5 --depth 1" +
                                    " --config " + (dir / "config.json").string());
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("depth=0.00") != std::string::npos);
    CHECK(result.output.find("depth=0.50") != std::string::npos);
    CHECK(result.output.find("depth=1.00") != std::string::npos);
    const auto passes = [&result] {
        std::size_t count = 0;
        std::size_t at = 0;
        while ((at = result.output.find("PASS", at)) != std::string::npos) {
            ++count;
            at += 4;
        }
        return count;
    }();
    CHECK(passes == 3);

    SUBCASE("an impossible threshold always fails") {
        const auto failing =
            run_command(kBin + " needle --length 200 --depth 0.5 --threshold 1.01 --config " +
                        (dir / "config.json").string());
        CHECK(failing.exit_code == 1);
        CHECK(failing.output.find("FAIL") != std::string::npos);
    }
}

TEST_CASE("cli inspect: renders the chain story") {
    const auto dir = make_workdir("inspect");
    write_file(dir / "config.json", scripted_config_json("teal"));
    write_file(dir / "doc.txt", "alpha beta gamma delta epsilon zeta eta theta");
    const auto trace_path = (dir / "trace.json").string();
    REQUIRE(run_command(kBin + " run " + (dir / "doc.txt").string() + " q --config " +
                        (dir / "config.json").string() + " --trace-out " + trace_path)
                .exit_code == 0);

    const auto result = run_command(kBin + " inspect " + trace_path);
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("[node 1]") != std::string::npos);
    CHECK(result.output.find("filter: related") != std::string::npos);
    CHECK(result.output.find("answer: teal") != std::string::npos);
    CHECK(result.output.find("bank:") != std::string::npos);

    SUBCASE("missing positional is a usage error") {
        CHECK(run_command(kBin + " inspect").exit_code == 2);
    }
    SUBCASE("truncated trace reports Malformed with a byte offset") {
        std::ifstream in(trace_path);
        std::string full((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        write_file(dir / "broken.json", full.substr(0, 60));
        const auto broken = run_command(kBin + " inspect " + (dir / "broken.json").string());
        CHECK(broken.exit_code == 1);
        CHECK(broken.output.find("byte") != std::string::npos);
    }
}

TEST_CASE("cli k override changes the chunking") {
    const auto dir = make_workdir("koverride");
    write_file(dir / "config.json", scripted_config_json("teal"));
    write_file(dir / "doc.txt", "one two three four five six seven eight");
    const auto trace_path = (dir / "trace.json").string();
    const auto result = run_command(kBin + " run " + (dir / "doc.txt").string() +
                                    " q --config " + (dir / "config.json").string() + " --k 8 " +
                                    "--trace-out " + trace_path);
    CHECK(result.exit_code == 0);
    const ChainResult loaded = read_report(trace_path);
    CHECK(loaded.trace.nodes.size() == 1);
    CHECK(loaded.trace.config.k == 8);
}

TEST_CASE("load_config validates structure") {
    const auto dir = make_workdir("cfg");
    SUBCASE("missing backends") {
        write_file(dir / "config.json", "{\"k\": 10}");
        CHECK_THROWS_AS(load_config((dir / "config.json").string()), Error);
    }
    SUBCASE("bad json") {
        write_file(dir / "config.json", "{nope");
        try {
            load_config((dir / "config.json").string());
            FAIL("expected Config");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Config);
        }
    }
    SUBCASE("scripted config round-trips through the loader") {
        write_file(dir / "config.json", scripted_config_json("x"));
        const ChainConfig config = load_config((dir / "config.json").string());
        CHECK(config.k == 4);
        CHECK(config.detector == DetectorKind::Heuristic);
        CHECK(config.backends.at(AgentRole::Worker).kind == BackendKind::Scripted);
        CHECK_NOTHROW(validate(config));
    }
}
