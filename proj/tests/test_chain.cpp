#include "doctest.h"

#include <algorithm>
#include <map>

#include "chainmem/chain.hpp"
#include "chainmem/errors.hpp"

using namespace chainmem;

namespace {

// Role sequence across all scripted backends, ordered by the process-wide
// call counter. Independent of the trace bookkeeping.
std::vector<std::string> global_call_sequence(const ChainConfig& config) {
    std::vector<std::pair<std::uint64_t, std::string>> calls;
    for (const auto& [role, spec] : config.backends) {
        if (!spec.script) continue;
        for (const auto& call : spec.script->transcript())
            calls.emplace_back(call.seq, to_string(role));
    }
    std::sort(calls.begin(), calls.end());
    std::vector<std::string> sequence;
    for (const auto& [seq, role] : calls) sequence.push_back(role);
    return sequence;
}

ChainConfig small_config() {
    ChainConfig config = default_chain_config(TaskKind::QA);
    config.k = 4;
    config.manager_budget = 1000;
    return config;
}

} // namespace

TEST_CASE("config validation") {
    ChainConfig config = small_config();
    SUBCASE("missing backend") {
        config.backends[AgentRole::Worker] = script_backend({reply("", "x")});
        try {
            validate(config);
            FAIL("expected Config error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Config);
        }
    }
    SUBCASE("k of zero") {
        for (AgentRole role :
             {AgentRole::Worker, AgentRole::Filter, AgentRole::Judge, AgentRole::Manager})
            config.backends[role] = script_backend({reply("", "x")});
        config.k = 0;
        CHECK_THROWS_AS(validate(config), Error);
    }
    SUBCASE("a complete scripted config passes") {
        for (AgentRole role :
             {AgentRole::Worker, AgentRole::Filter, AgentRole::Judge, AgentRole::Manager})
            config.backends[role] = script_backend({reply("", "x")});
        CHECK_NOTHROW(validate(config));
    }
}

TEST_CASE("run_node spec scenarios") {
    ChainConfig config = small_config();
    config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\nunused")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "unused")});

    SUBCASE("related evidence lands in the bank, no judge calls") {
        config.backends[AgentRole::Worker] = script_backend({reply("", "E1")});
        config.backends[AgentRole::Filter] = script_backend({reply("", "RELATED\nE1")});
        MemoryBank bank;
        NodeRecord record;
        Chunk chunk{1, "alpha beta", 2, {0, 10}};
        const auto hidden = run_node(chunk, "q", HiddenState{}, bank, config, record);
        CHECK(hidden.text == "E1");
        REQUIRE(bank.entries.size() == 1);
        CHECK(bank.entries[0].index == 1);
        CHECK(record.judgements.empty());
        CHECK(record.decision == FilterDecision::Related);
    }
    SUBCASE("unrelated: bank unchanged, hidden still flows") {
        config.backends[AgentRole::Worker] = script_backend({reply("", "noise")});
        config.backends[AgentRole::Filter] = script_backend({reply("", "UNRELATED")});
        MemoryBank bank;
        NodeRecord record;
        Chunk chunk{1, "alpha beta", 2, {0, 10}};
        const auto hidden = run_node(chunk, "q", HiddenState{}, bank, config, record);
        CHECK(hidden.text == "noise");
        CHECK(bank.entries.empty());
        CHECK(record.decision == FilterDecision::Unrelated);
    }
    SUBCASE("conflicting short answers trigger one judge call, hand-walked") {
        config.backends[AgentRole::Worker] =
            script_backend({reply_once("1939"), reply_once("1940")});
        config.backends[AgentRole::Filter] = script_backend({reply("", "RELATED\n")});
        config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\n1940 stands.")});
        MemoryBank bank;
        NodeRecord r1;
        Chunk c1{1, "year one", 2, {0, 8}};
        auto hidden = run_node(c1, "which year?", HiddenState{}, bank, config, r1);
        NodeRecord r2;
        Chunk c2{2, "year two", 2, {8, 16}};
        hidden = run_node(c2, "which year?", hidden, bank, config, r2);
        REQUIRE(bank.entries.size() == 2);
        CHECK(bank.find(1)->status == EntryStatus::Superseded);
        CHECK(bank.find(2)->status == EntryStatus::Active);
        REQUIRE(r2.conflicts.size() == 1);
        REQUIRE(r2.judgements.size() == 1);
        CHECK(r2.judgements[0].winner == JudgeWinner::Later);
    }
}

TEST_CASE("run_chain minimal: one chunk, one call per role") {
    ChainConfig config = small_config();
    config.backends[AgentRole::Worker] = script_backend({reply("", "evidence")});
    config.backends[AgentRole::Filter] = script_backend({reply("", "RELATED\nevidence")});
    config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\nx")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "the answer")});

    const auto doc = make_document("d1", "one two three", UnitMode::Word);
    const auto result = run_chain(doc, "q?", config);

    CHECK(result.answer == "the answer");
    CHECK_FALSE(result.trace.error.has_value());
    REQUIRE(result.trace.nodes.size() == 1);
    CHECK(config.backends[AgentRole::Worker].script->call_count() == 1);
    CHECK(config.backends[AgentRole::Filter].script->call_count() == 1);
    CHECK(config.backends[AgentRole::Judge].script->call_count() == 0);
    CHECK(config.backends[AgentRole::Manager].script->call_count() == 1);
    CHECK(global_call_sequence(config) ==
          std::vector<std::string>{"worker", "filter", "manager"});
    CHECK(result.trace.final_hidden == "evidence");
    CHECK(result.trace.wall_ms >= 0);
}

TEST_CASE("gating: unrelated chunks contribute nothing to the manager prompt") {
    ChainConfig config = small_config();
    config.backends[AgentRole::Worker] =
        script_backend({reply_once("KEEP-alpha"), reply_once("DROP-sentinel-xyzzy")});
    config.backends[AgentRole::Filter] =
        script_backend({reply("KEEP", "RELATED\nKEEP-alpha"), reply("", "UNRELATED")});
    config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\nx")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "done")});

    // two chunks of 4 words each
    const auto doc = make_document("d2", "a b c d e f g h", UnitMode::Word);
    const auto result = run_chain(doc, "q?", config);

    REQUIRE(result.trace.nodes.size() == 2);
    CHECK(result.trace.nodes[0].decision == FilterDecision::Related);
    CHECK(result.trace.nodes[1].decision == FilterDecision::Unrelated);
    CHECK(result.trace.manager.prompt.find("KEEP-alpha") != std::string::npos);
    CHECK(result.trace.manager.prompt.find("DROP-sentinel-xyzzy") == std::string::npos);
    CHECK(result.final_bank.entries.size() == 1);
}

TEST_CASE("error recovery: superseded payload vanishes, corrected payload survives") {
    ChainConfig config = small_config();
    config.backends[AgentRole::Worker] = script_backend(
        {reply_once("the year is 1939"), reply_once("nothing useful here at all today"),
         reply_once("the year is 1940")});
    config.backends[AgentRole::Filter] = script_backend(
        {reply("1939", "RELATED\nthe year is 1939"), reply("1940", "RELATED\nthe year is 1940"),
         reply("", "UNRELATED")});
    config.backends[AgentRole::Judge] = script_backend(
        {reply("", "MERGED\nAfter checking both passages, the correct year is 1940.")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "1940")});

    const auto doc =
        make_document("d3", "w1 w2 w3 w4 x1 x2 x3 x4 y1 y2 y3 y4", UnitMode::Word);
    const auto result = run_chain(doc, "which year?", config);

    // call sequence: W F W F W F J M
    CHECK(global_call_sequence(config) ==
          std::vector<std::string>{"worker", "filter", "worker", "filter", "worker", "filter",
                                   "judge", "manager"});
    const std::string& prompt = result.trace.manager.prompt;
    CHECK(prompt.find("the year is 1939") == std::string::npos);
    CHECK(prompt.find("the year is 1940") == std::string::npos);
    CHECK(prompt.find("After checking both passages, the correct year is 1940.") !=
          std::string::npos);
    CHECK(result.final_bank.find(1)->status == EntryStatus::Superseded);
    CHECK(result.final_bank.find(3)->status == EntryStatus::Corrected);
}

TEST_CASE("call-count and order laws over a longer scripted chain") {
    ChainConfig config = small_config();
    config.max_judge_calls_per_node = 4;
    config.backends[AgentRole::Worker] = script_backend(
        {reply_once("alpha"), reply_once("beta"), reply_once("gamma"), reply_once("delta"),
         reply_once("epsilon")});
    config.backends[AgentRole::Filter] = script_backend({reply("", "RELATED\n")});
    // every node conflicts with every live predecessor (all answers differ);
    // the judge always keeps the newer entry
    config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\nnewest wins")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "done")});

    // five chunks of 4 words
    std::string text;
    for (int i = 0; i < 20; ++i) text += "w" + std::to_string(i) + " ";
    const auto doc = make_document("d4", text, UnitMode::Word);
    const auto result = run_chain(doc, "q?", config);

    const std::size_t l = result.trace.nodes.size();
    REQUIRE(l == 5);
    CHECK(config.backends[AgentRole::Worker].script->call_count() == l);
    CHECK(config.backends[AgentRole::Filter].script->call_count() == l);
    CHECK(config.backends[AgentRole::Manager].script->call_count() == 1);

    // judge calls: sum over nodes of conflicts found (all non-stale here,
    // LATER keeps the new entry live so every pair is judged), capped per node
    std::size_t expected_judges = 0;
    for (const auto& node : result.trace.nodes)
        expected_judges += std::min<std::size_t>(node.conflicts.size(),
                                                 std::size_t(config.max_judge_calls_per_node));
    CHECK(config.backends[AgentRole::Judge].script->call_count() == expected_judges);
    // with LATER verdicts only one predecessor is ever live: one conflict per node after the first
    CHECK(expected_judges == l - 1);

    // order law: all of node i's calls precede node i+1's; manager last
    const auto sequence = global_call_sequence(config);
    REQUIRE(sequence.size() == 2 * l + expected_judges + 1);
    CHECK(sequence.back() == "manager");
    std::size_t at = 0;
    for (std::size_t node = 0; node < l; ++node) {
        CHECK(sequence[at++] == "worker");
        CHECK(sequence[at++] == "filter");
        if (node > 0) CHECK(sequence[at++] == "judge");
    }
}

TEST_CASE("judge call cap is enforced") {
    ChainConfig config = small_config();
    config.max_judge_calls_per_node = 1;
    config.backends[AgentRole::Worker] =
        script_backend({reply_once("one"), reply_once("two"), reply_once("three")});
    config.backends[AgentRole::Filter] = script_backend({reply("", "RELATED\n")});
    // EARLIER keeps both predecessors live, so node 3 finds two conflicts
    config.backends[AgentRole::Judge] = script_backend({reply("", "EARLIER\nfirst wins")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "done")});

    const auto doc = make_document("d5", "a b c d e f g h i j k l", UnitMode::Word);
    const auto result = run_chain(doc, "q?", config);

    REQUIRE(result.trace.nodes.size() == 3);
    // node 2: one conflict, one judge call (EARLIER supersedes entry 2)
    CHECK(result.trace.nodes[1].conflicts.size() == 1);
    CHECK(result.trace.nodes[1].judgements.size() == 1);
    // node 3: only entry 1 is live, one conflict, cap allows it
    CHECK(result.trace.nodes[2].judgements.size() <= 1);
    CHECK(config.backends[AgentRole::Judge].script->call_count() ==
          result.trace.nodes[1].judgements.size() + result.trace.nodes[2].judgements.size());
}

TEST_CASE("unparseable verdicts fall back to defaults and are flagged") {
    ChainConfig config = small_config();
    SUBCASE("filter default related") {
        config.backends[AgentRole::Worker] = script_backend({reply("", "claim")});
        config.backends[AgentRole::Filter] = script_backend({reply("", "mumble mumble")});
        config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\nx")});
        config.backends[AgentRole::Manager] = script_backend({reply("", "done")});
        const auto doc = make_document("d6", "a b", UnitMode::Word);
        const auto result = run_chain(doc, "q?", config);
        REQUIRE(result.trace.nodes.size() == 1);
        CHECK(result.trace.nodes[0].filter_defaulted);
        CHECK(result.trace.nodes[0].decision == FilterDecision::Related);
        // empty filtered text falls back to the hidden text in the bank
        CHECK(result.trace.manager.prompt.find("claim") != std::string::npos);
    }
    SUBCASE("filter default can be configured unrelated") {
        config.filter_default = FilterDecision::Unrelated;
        config.backends[AgentRole::Worker] = script_backend({reply("", "claim")});
        config.backends[AgentRole::Filter] = script_backend({reply("", "mumble")});
        config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\nx")});
        config.backends[AgentRole::Manager] = script_backend({reply("", "done")});
        const auto doc = make_document("d6b", "a b", UnitMode::Word);
        const auto result = run_chain(doc, "q?", config);
        CHECK(result.final_bank.entries.empty());
    }
    SUBCASE("garbage judge output defaults to the newer entry") {
        config.backends[AgentRole::Worker] =
            script_backend({reply_once("1939"), reply_once("1940")});
        config.backends[AgentRole::Filter] = script_backend({reply("", "RELATED\n")});
        config.backends[AgentRole::Judge] = script_backend({reply("", "no idea, sorry")});
        config.backends[AgentRole::Manager] = script_backend({reply("", "done")});
        const auto doc = make_document("d7", "a b c d e f g h", UnitMode::Word);
        const auto result = run_chain(doc, "q?", config);
        REQUIRE(result.trace.nodes.size() == 2);
        REQUIRE(result.trace.nodes[1].judgements.size() == 1);
        CHECK(result.trace.nodes[1].judgements[0].defaulted);
        CHECK(result.trace.nodes[1].judgements[0].winner == JudgeWinner::Later);
        CHECK(result.final_bank.find(1)->status == EntryStatus::Superseded);
        CHECK(result.final_bank.find(2)->status == EntryStatus::Active);
    }
}

TEST_CASE("backend failure aborts the run but keeps the partial trace") {
    ChainConfig config = small_config();
    config.backends[AgentRole::Worker] =
        script_backend({reply_once("fine"), reply_error("", ErrorKind::Timeout)});
    config.backends[AgentRole::Filter] = script_backend({reply("", "RELATED\nfine")});
    config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\nx")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "never reached")});

    const auto doc = make_document("d8", "a b c d e f g h", UnitMode::Word);
    const auto result = run_chain(doc, "q?", config);

    CHECK(result.answer.empty());
    REQUIRE(result.trace.error.has_value());
    CHECK(result.trace.error->kind == "Timeout");
    CHECK(result.trace.error->node == 2);
    CHECK(result.trace.error->role == "worker");
    CHECK(result.trace.nodes.size() == 1); // node 1 completed
    CHECK(config.backends[AgentRole::Manager].script->call_count() == 0);
}

TEST_CASE("run_chain rejects empty documents and bad configs before any call") {
    ChainConfig config = small_config();
    for (AgentRole role :
         {AgentRole::Worker, AgentRole::Filter, AgentRole::Judge, AgentRole::Manager})
        config.backends[role] = script_backend({reply("", "x")});
    const Document empty{"e", "", 0};
    CHECK_THROWS_AS(run_chain(empty, "q", config), Error);
    CHECK(config.backends[AgentRole::Worker].script->call_count() == 0);
}

TEST_CASE("manager empty completion is flagged") {
    ChainConfig config = small_config();
    config.backends[AgentRole::Worker] = script_backend({reply("", "e")});
    config.backends[AgentRole::Filter] = script_backend({reply("", "UNRELATED")});
    config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\nx")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "")});
    const auto doc = make_document("d9", "a b", UnitMode::Word);
    const auto result = run_chain(doc, "q?", config);
    CHECK(result.answer.empty());
    CHECK(result.trace.manager_empty);
    CHECK_FALSE(result.trace.error.has_value());
    // empty bank renders the explicit no-evidence marker
    CHECK(result.trace.manager.prompt.find("(no evidence found)") != std::string::npos);
}

TEST_CASE("engine-held state stays bounded while streaming") {
    ChainConfig config = small_config();
    config.k = 40;
    config.hidden_cap = 16;
    config.manager_budget = 32;
    std::string long_reply;
    for (int i = 0; i < 64; ++i) long_reply += "r" + std::to_string(i) + " ";
    config.backends[AgentRole::Worker] = script_backend({reply("", long_reply)});
    config.backends[AgentRole::Filter] = script_backend({reply("", "RELATED\nkept evidence")});
    config.backends[AgentRole::Judge] = script_backend({reply("", "LATER\nx")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "done")});

    std::size_t peak = 0;
    config.state_probe = [&peak](const EngineState& state) {
        peak = std::max(peak, state.chunk_units + state.hidden_units + state.scratch_units);
    };

    std::string text;
    for (int i = 0; i < 400; ++i) text += "u" + std::to_string(i) + " ";
    const auto doc = make_document("d10", text, UnitMode::Word);
    const auto result = run_chain(doc, "q?", config);
    REQUIRE(result.trace.nodes.size() == 10);
    CHECK(result.trace.nodes[0].hidden_truncated);
    CHECK(peak > 0);
    CHECK(peak <= config.k + config.hidden_cap + 64);
}

TEST_CASE("trace reports round-trip through JSON") {
    ChainConfig config = small_config();
    config.backends[AgentRole::Worker] =
        script_backend({reply_once("1939"), reply_once("1940")});
    config.backends[AgentRole::Filter] = script_backend({reply("", "RELATED\n")});
    config.backends[AgentRole::Judge] = script_backend({reply("", "MERGED\nsettled: 1940")});
    config.backends[AgentRole::Manager] = script_backend({reply("", "1940")});
    const auto doc = make_document("d11", "a b c d e f g h", UnitMode::Word);
    const auto result = run_chain(doc, "which year?", config);

    const std::string json_text = result_to_report_json(result);
    const ChainResult loaded = result_from_report_json(json_text);

    CHECK(loaded.answer == result.answer);
    CHECK(loaded.trace.document_id == "d11");
    CHECK(loaded.trace.query == "which year?");
    REQUIRE(loaded.trace.nodes.size() == 2);
    CHECK(loaded.trace.nodes[1].judgements.size() == 1);
    CHECK(loaded.trace.nodes[1].judgements[0].winner == JudgeWinner::Merged);
    CHECK(loaded.trace.manager_context == result.trace.manager_context);
    CHECK(loaded.final_bank.entries.size() == 2);
    CHECK(loaded.final_bank.find(2)->correction->text == "settled: 1940");
    CHECK(loaded.trace.config.k == config.k);

    // byte offset surfaces on truncated files
    try {
        result_from_report_json(json_text.substr(0, 40));
        FAIL("expected Malformed");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Malformed);
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}
