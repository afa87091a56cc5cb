#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chainmem/agents.hpp"
#include "chainmem/backend.hpp"
#include "chainmem/memory.hpp"
#include "chainmem/text.hpp"

namespace chainmem {

enum class DetectorKind { None, Heuristic, Llm };

const char* to_string(DetectorKind kind);
DetectorKind detector_kind_from_string(std::string_view name);

// Engine-held text sizes reported at each node boundary and once at the
// manager step (node == 0). The memory bank and the trace are sinks and are
// not part of the engine's working state.
struct EngineState {
    std::size_t node = 0;
    std::size_t chunk_units = 0;
    std::size_t hidden_units = 0;
    std::size_t scratch_units = 0; // query plus, at the manager step, the rendered context
};

struct ChainConfig {
    std::size_t k = 5000;
    UnitMode unit_mode = UnitMode::Word;
    TaskKind task = TaskKind::QA;
    std::map<AgentRole, BackendSpec> backends; // all four roles required
    std::map<TaskKind, TemplateSet> templates; // at least the configured task
    std::size_t hidden_cap = 1024;
    std::size_t manager_budget = 5000;
    int max_judge_calls_per_node = 4;
    DetectorKind detector = DetectorKind::Heuristic;
    FilterDecision filter_default = FilterDecision::Related; // unparseable-verdict fallback
    int bench_workers = 1;
    std::function<void(const EngineState&)> state_probe; // diagnostics, may be empty
};

// A config with built-in templates, scripted-or-empty backends left to the
// caller, and the detector defaulted per task (heuristic for QA, none
// otherwise).
ChainConfig default_chain_config(TaskKind task);

// Throws Config if a role lacks a backend or template, k < 1, or
// max_judge_calls_per_node < 1.
void validate(const ChainConfig& config);

struct CallRecord {
    std::string prompt; // rendered user text
    std::string output; // raw completion
    long long latency_ms = 0;
    std::size_t input_units = 0;
    std::size_t output_units = 0;
};

struct JudgementRecord {
    ConflictPair pair;
    JudgeWinner winner = JudgeWinner::Later;
    std::string corrected_text;
    bool defaulted = false; // unparseable completion fell back to Later
    CallRecord call;
};

struct NodeRecord {
    std::size_t index = 0;
    ByteSpan chunk_span;
    std::size_t chunk_units = 0;
    CallRecord worker;
    bool hidden_truncated = false;
    CallRecord filter;
    FilterDecision decision = FilterDecision::Related;
    std::string filtered_text;
    bool filter_defaulted = false;
    std::vector<ConflictPair> conflicts;
    std::vector<JudgementRecord> judgements;
    std::size_t stale_skipped = 0; // conflicts skipped because a side was already retired
};

struct BackendSnapshot {
    std::string kind;
    std::string endpoint;
    std::string model;
    double temperature = 0.0;
};

struct ConfigSnapshot {
    std::size_t k = 0;
    std::string unit_mode;
    std::string task;
    std::size_t hidden_cap = 0;
    std::size_t manager_budget = 0;
    int max_judge_calls_per_node = 0;
    std::string detector;
    std::map<std::string, BackendSnapshot> roles;
};

struct TraceError {
    std::string kind;
    std::string message;
    std::size_t node = 0; // 0 = outside the node loop
    std::string role;
};

// Complete audit log of one chain execution; always produced, including on
// aborted runs (with the error marker set).
struct ChainTrace {
    std::string document_id;
    std::string query;
    ConfigSnapshot config;
    std::vector<NodeRecord> nodes;
    std::string manager_context; // render_context output fed to the manager
    CallRecord manager;
    bool manager_empty = false;
    std::string final_hidden; // h_l, the last worker output
    long long wall_ms = 0;
    std::optional<TraceError> error;
};

struct ChainResult {
    std::string answer; // the manager's output; empty on aborted runs
    ChainTrace trace;
    MemoryBank final_bank;
};

// One node of the chain: worker, filter, and (when the decision is related)
// append + conflict detection + up to max_judge_calls_per_node judge calls in
// pair order. The returned hidden state flows to the next node regardless of
// the filter decision.
HiddenState run_node(const Chunk& chunk, const std::string& query, const HiddenState& prev,
                     MemoryBank& bank, const ChainConfig& config, NodeRecord& record);

// The full chain: split, node loop in index order, one manager call on the
// rendered bank context. Backend failures abort the run; the partial trace is
// preserved with an error marker. Throws EmptyDocument / Config before any
// backend call.
ChainResult run_chain(const Document& doc, const std::string& query, const ChainConfig& config);

// Report file round-trip (single structured-text JSON document holding the
// answer, trace, and final bank). Parse failures throw Malformed with the
// byte offset.
std::string result_to_report_json(const ChainResult& result);
ChainResult result_from_report_json(const std::string& text);
void write_report(const ChainResult& result, const std::string& path);
ChainResult read_report(const std::string& path);

} // namespace chainmem
