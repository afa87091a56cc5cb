#include "chainmem/chain.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "chainmem/errors.hpp"

namespace chainmem {

using nlohmann::json;

const char* to_string(DetectorKind kind) {
    switch (kind) {
    case DetectorKind::None: return "none";
    case DetectorKind::Heuristic: return "heuristic";
    case DetectorKind::Llm: return "llm";
    }
    return "?";
}

DetectorKind detector_kind_from_string(std::string_view name) {
    if (name == "none") return DetectorKind::None;
    if (name == "heuristic") return DetectorKind::Heuristic;
    if (name == "llm") return DetectorKind::Llm;
    throw Error(ErrorKind::Config, "unknown detector kind: " + std::string(name));
}

ChainConfig default_chain_config(TaskKind task) {
    ChainConfig config;
    config.task = task;
    config.templates[TaskKind::QA] = default_templates(TaskKind::QA);
    config.templates[TaskKind::Summarization] = default_templates(TaskKind::Summarization);
    config.templates[TaskKind::FewShot] = default_templates(TaskKind::FewShot);
    config.detector = task == TaskKind::QA ? DetectorKind::Heuristic : DetectorKind::None;
    return config;
}

void validate(const ChainConfig& config) {
    if (config.k < 1) throw Error(ErrorKind::Config, "chunk size k must be at least 1");
    if (config.max_judge_calls_per_node < 1)
        throw Error(ErrorKind::Config, "max_judge_calls_per_node must be at least 1");
    if (config.bench_workers < 1)
        throw Error(ErrorKind::Config, "bench_workers must be at least 1");
    const AgentRole roles[] = {AgentRole::Worker, AgentRole::Filter, AgentRole::Judge,
                               AgentRole::Manager};
    for (AgentRole role : roles) {
        if (!config.backends.count(role))
            throw Error(ErrorKind::Config,
                        std::string("no backend configured for role ") + to_string(role));
        const BackendSpec& spec = config.backends.at(role);
        if (spec.kind == BackendKind::Http && (spec.endpoint.empty() || spec.model.empty()))
            throw Error(ErrorKind::Config,
                        std::string("http backend for ") + to_string(role) +
                            " requires endpoint and model");
        if (spec.kind == BackendKind::Scripted && !spec.script)
            throw Error(ErrorKind::Config,
                        std::string("scripted backend for ") + to_string(role) + " has no script");
        if (spec.temperature < 0)
            throw Error(ErrorKind::Config, "temperature must be non-negative");
    }
    const auto set = config.templates.find(config.task);
    if (set == config.templates.end())
        throw Error(ErrorKind::Config,
                    std::string("no templates for task ") + to_string(config.task));
    for (AgentRole role : roles) {
        const PromptTemplate& tmpl = set->second.for_role(role);
        if (tmpl.role != role)
            throw Error(ErrorKind::Config,
                        std::string("template slot for ") + to_string(role) +
                            " holds a template for " + to_string(tmpl.role));
        validate_template(tmpl);
    }
}

namespace {

ConfigSnapshot snapshot(const ChainConfig& config) {
    ConfigSnapshot snap;
    snap.k = config.k;
    snap.unit_mode = to_string(config.unit_mode);
    snap.task = to_string(config.task);
    snap.hidden_cap = config.hidden_cap;
    snap.manager_budget = config.manager_budget;
    snap.max_judge_calls_per_node = config.max_judge_calls_per_node;
    snap.detector = to_string(config.detector);
    for (const auto& [role, spec] : config.backends)
        snap.roles[to_string(role)] =
            BackendSnapshot{to_string(spec.kind), spec.endpoint, spec.model, spec.temperature};
    return snap;
}

ConflictDetector make_detector(const ChainConfig& config, const std::string& query) {
    switch (config.detector) {
    case DetectorKind::None: return nullptr;
    case DetectorKind::Heuristic: return heuristic_detector();
    case DetectorKind::Llm: return llm_detector(config.backends.at(AgentRole::Filter), query);
    }
    return nullptr;
}

void fill_call(CallRecord& record, const RenderedPrompt& prompt, const std::string& output,
               const InvokeMeta& meta) {
    record.prompt = prompt.user;
    record.output = output;
    record.latency_ms = meta.latency_ms;
    record.input_units = meta.input_units;
    record.output_units = meta.output_units;
}

} // namespace

HiddenState run_node(const Chunk& chunk, const std::string& query, const HiddenState& prev,
                     MemoryBank& bank, const ChainConfig& config, NodeRecord& record) {
    const TemplateSet& templates = config.templates.at(config.task);
    record.index = chunk.index;
    record.chunk_span = chunk.span;
    record.chunk_units = chunk.unit_count;

    // Worker: the short-term path, unconditional.
    InvokeOptions options{config.hidden_cap, config.unit_mode};
    const RenderedPrompt worker_prompt = render_worker(templates.worker, chunk, query, prev);
    InvokeMeta meta;
    HiddenState hidden = invoke_worker(config.backends.at(AgentRole::Worker), worker_prompt,
                                       chunk.index, options, &meta);
    fill_call(record.worker, worker_prompt, hidden.text, meta);
    record.hidden_truncated = hidden.truncated;

    // Filter: gates the long-term path only.
    const RenderedPrompt filter_prompt = render_filter(templates.filter, hidden, query);
    FilterVerdict verdict;
    try {
        verdict = invoke_filter(config.backends.at(AgentRole::Filter), filter_prompt, &meta);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::UnparseableVerdict) throw;
        verdict = {"", config.filter_default};
        record.filter_defaulted = true;
    }
    fill_call(record.filter, filter_prompt, verdict.filtered_text, meta);
    record.decision = verdict.decision;
    record.filtered_text = verdict.filtered_text;

    if (verdict.decision != FilterDecision::Related) return hidden;

    MemoryEntry entry;
    entry.index = chunk.index;
    entry.chunk_span = chunk.span;
    entry.chunk_text = chunk.text;
    entry.hidden = hidden;
    entry.filtered = verdict.filtered_text;
    entry.decision = FilterDecision::Related;
    append_related(bank, std::move(entry));
    const MemoryEntry& latest = bank.entries.back();

    const ConflictDetector detector = make_detector(config, query);
    record.conflicts = find_conflicts(bank, latest, detector);

    int judge_calls = 0;
    for (const ConflictPair& pair : record.conflicts) {
        if (judge_calls >= config.max_judge_calls_per_node) break;
        const MemoryEntry* earlier = bank.find(pair.earlier);
        const MemoryEntry* later = bank.find(pair.later);
        if (!earlier || !later || earlier->status == EntryStatus::Superseded ||
            later->status == EntryStatus::Superseded) {
            ++record.stale_skipped;
            continue;
        }
        const RenderedPrompt judge_prompt = render_judge(templates.judge, *later, *earlier, query);
        JudgementRecord judgement;
        judgement.pair = pair;
        JudgeVerdict judge_verdict;
        try {
            judge_verdict =
                invoke_judge(config.backends.at(AgentRole::Judge), judge_prompt, &meta);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UnparseableVerdict) throw;
            // Newer evidence wins ties.
            judge_verdict = {later->hidden.text, JudgeWinner::Later};
            judgement.defaulted = true;
        }
        resolve_conflict(bank, pair, judge_verdict);
        judgement.winner = judge_verdict.winner;
        judgement.corrected_text = judge_verdict.corrected_text;
        fill_call(judgement.call, judge_prompt, judge_verdict.corrected_text, meta);
        record.judgements.push_back(std::move(judgement));
        ++judge_calls;
    }
    return hidden;
}

ChainResult run_chain(const Document& doc, const std::string& query, const ChainConfig& config) {
    validate(config);
    if (doc.text.empty()) throw Error(ErrorKind::EmptyDocument, "document is empty: " + doc.id);

    ChainResult result;
    ChainTrace& trace = result.trace;
    trace.document_id = doc.id;
    trace.query = query;
    trace.config = snapshot(config);
    result.final_bank.document_ref = doc.id;

    const auto started = std::chrono::steady_clock::now();
    const std::size_t query_units = count_units(query, config.unit_mode);
    HiddenState hidden;
    std::size_t current_node = 0;

    try {
        ChunkStream stream(doc, config.k, config.unit_mode);
        while (auto chunk = stream.next()) {
            current_node = chunk->index;
            NodeRecord record;
            hidden = run_node(*chunk, query, hidden, result.final_bank, config, record);
            trace.nodes.push_back(std::move(record));
            if (config.state_probe)
                config.state_probe({chunk->index, chunk->unit_count,
                                    count_units(hidden.text, config.unit_mode), query_units});
        }

        current_node = 0;
        const TemplateSet& templates = config.templates.at(config.task);
        trace.manager_context =
            render_context(result.final_bank, config.manager_budget, config.unit_mode);
        const RenderedPrompt manager_prompt =
            render_manager(templates.manager, trace.manager_context, query);
        if (config.state_probe)
            config.state_probe({0, 0, count_units(hidden.text, config.unit_mode),
                                query_units +
                                    count_units(trace.manager_context, config.unit_mode)});
        InvokeMeta meta;
        result.answer = invoke_manager(config.backends.at(AgentRole::Manager), manager_prompt,
                                       &trace.manager_empty, &meta);
        fill_call(trace.manager, manager_prompt, result.answer, meta);
    } catch (const Error& e) {
        trace.error = TraceError{to_string(e.kind()), e.what(), current_node, e.role()};
        result.answer.clear();
    }

    trace.final_hidden = hidden.text;
    trace.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - started)
                        .count();
    return result;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace {

json call_to_json(const CallRecord& call) {
    return {{"prompt", call.prompt},
            {"output", call.output},
            {"latency_ms", call.latency_ms},
            {"input_units", call.input_units},
            {"output_units", call.output_units}};
}

CallRecord call_from_json(const json& j) {
    CallRecord call;
    call.prompt = j.value("prompt", "");
    call.output = j.value("output", "");
    call.latency_ms = j.value("latency_ms", 0LL);
    call.input_units = j.value("input_units", std::size_t(0));
    call.output_units = j.value("output_units", std::size_t(0));
    return call;
}

json pair_to_json(const ConflictPair& pair) {
    return {{"earlier", pair.earlier}, {"later", pair.later}, {"reason", pair.reason}};
}

ConflictPair pair_from_json(const json& j) {
    return {j.value("earlier", std::size_t(0)), j.value("later", std::size_t(0)),
            j.value("reason", "")};
}

} // namespace

std::string result_to_report_json(const ChainResult& result) {
    const ChainTrace& trace = result.trace;
    json config = {{"k", trace.config.k},
                   {"unit_mode", trace.config.unit_mode},
                   {"task", trace.config.task},
                   {"hidden_cap", trace.config.hidden_cap},
                   {"manager_budget", trace.config.manager_budget},
                   {"max_judge_calls_per_node", trace.config.max_judge_calls_per_node},
                   {"detector", trace.config.detector},
                   {"roles", json::object()}};
    for (const auto& [role, backend] : trace.config.roles)
        config["roles"][role] = {{"kind", backend.kind},
                                 {"endpoint", backend.endpoint},
                                 {"model", backend.model},
                                 {"temperature", backend.temperature}};

    json nodes = json::array();
    for (const NodeRecord& node : trace.nodes) {
        json judgements = json::array();
        for (const JudgementRecord& judgement : node.judgements)
            judgements.push_back({{"pair", pair_to_json(judgement.pair)},
                                  {"winner", to_string(judgement.winner)},
                                  {"corrected_text", judgement.corrected_text},
                                  {"defaulted", judgement.defaulted},
                                  {"call", call_to_json(judgement.call)}});
        json conflicts = json::array();
        for (const ConflictPair& pair : node.conflicts) conflicts.push_back(pair_to_json(pair));
        nodes.push_back({{"index", node.index},
                         {"chunk_span", {node.chunk_span.begin, node.chunk_span.end}},
                         {"chunk_units", node.chunk_units},
                         {"worker", call_to_json(node.worker)},
                         {"hidden_truncated", node.hidden_truncated},
                         {"filter", call_to_json(node.filter)},
                         {"decision", to_string(node.decision)},
                         {"filtered_text", node.filtered_text},
                         {"filter_defaulted", node.filter_defaulted},
                         {"conflicts", std::move(conflicts)},
                         {"judgements", std::move(judgements)},
                         {"stale_skipped", node.stale_skipped}});
    }

    json report = {{"schema", "chainmem.report.v1"},
                   {"document_id", trace.document_id},
                   {"query", trace.query},
                   {"config", std::move(config)},
                   {"nodes", std::move(nodes)},
                   {"manager_context", trace.manager_context},
                   {"manager", call_to_json(trace.manager)},
                   {"manager_empty", trace.manager_empty},
                   {"final_hidden", trace.final_hidden},
                   {"wall_ms", trace.wall_ms},
                   {"answer", result.answer},
                   {"final_bank", json::array()}};
    {
        std::istringstream stream(bank_to_jsonl(result.final_bank));
        std::string line;
        while (std::getline(stream, line))
            if (!line.empty()) report["final_bank"].push_back(json::parse(line));
    }
    if (trace.error)
        report["error"] = {{"kind", trace.error->kind},
                           {"message", trace.error->message},
                           {"node", trace.error->node},
                           {"role", trace.error->role}};
    else
        report["error"] = nullptr;
    return report.dump(2);
}

ChainResult result_from_report_json(const std::string& text) {
    json report;
    try {
        report = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Malformed,
                    "report is not valid JSON at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    try {
        ChainResult result;
        ChainTrace& trace = result.trace;
        trace.document_id = report.value("document_id", "");
        trace.query = report.value("query", "");
        if (report.contains("config")) {
            const json& config = report["config"];
            trace.config.k = config.value("k", std::size_t(0));
            trace.config.unit_mode = config.value("unit_mode", "word");
            trace.config.task = config.value("task", "qa");
            trace.config.hidden_cap = config.value("hidden_cap", std::size_t(0));
            trace.config.manager_budget = config.value("manager_budget", std::size_t(0));
            trace.config.max_judge_calls_per_node = config.value("max_judge_calls_per_node", 0);
            trace.config.detector = config.value("detector", "none");
            if (config.contains("roles"))
                for (const auto& [role, backend] : config["roles"].items())
                    trace.config.roles[role] =
                        BackendSnapshot{backend.value("kind", ""), backend.value("endpoint", ""),
                                        backend.value("model", ""),
                                        backend.value("temperature", 0.0)};
        }
        for (const json& node_json : report.value("nodes", json::array())) {
            NodeRecord node;
            node.index = node_json.value("index", std::size_t(0));
            if (node_json.contains("chunk_span") && node_json["chunk_span"].size() == 2) {
                node.chunk_span.begin = node_json["chunk_span"][0].get<std::size_t>();
                node.chunk_span.end = node_json["chunk_span"][1].get<std::size_t>();
            }
            node.chunk_units = node_json.value("chunk_units", std::size_t(0));
            node.worker = call_from_json(node_json.value("worker", json::object()));
            node.hidden_truncated = node_json.value("hidden_truncated", false);
            node.filter = call_from_json(node_json.value("filter", json::object()));
            node.decision = node_json.value("decision", "related") == std::string("related")
                                ? FilterDecision::Related
                                : FilterDecision::Unrelated;
            node.filtered_text = node_json.value("filtered_text", "");
            node.filter_defaulted = node_json.value("filter_defaulted", false);
            for (const json& pair : node_json.value("conflicts", json::array()))
                node.conflicts.push_back(pair_from_json(pair));
            for (const json& judgement_json : node_json.value("judgements", json::array())) {
                JudgementRecord judgement;
                judgement.pair = pair_from_json(judgement_json.value("pair", json::object()));
                const std::string winner = judgement_json.value("winner", "later");
                judgement.winner = winner == "earlier"  ? JudgeWinner::Earlier
                                   : winner == "merged" ? JudgeWinner::Merged
                                                        : JudgeWinner::Later;
                judgement.corrected_text = judgement_json.value("corrected_text", "");
                judgement.defaulted = judgement_json.value("defaulted", false);
                judgement.call = call_from_json(judgement_json.value("call", json::object()));
                node.judgements.push_back(std::move(judgement));
            }
            node.stale_skipped = node_json.value("stale_skipped", std::size_t(0));
            trace.nodes.push_back(std::move(node));
        }
        trace.manager_context = report.value("manager_context", "");
        trace.manager = call_from_json(report.value("manager", json::object()));
        trace.manager_empty = report.value("manager_empty", false);
        trace.final_hidden = report.value("final_hidden", "");
        trace.wall_ms = report.value("wall_ms", 0LL);
        result.answer = report.value("answer", "");
        if (report.contains("final_bank")) {
            std::string jsonl;
            for (const json& entry : report["final_bank"]) jsonl += entry.dump() + "\n";
            result.final_bank = bank_from_jsonl(jsonl, trace.document_id);
        }
        if (report.contains("error") && !report["error"].is_null()) {
            const json& error = report["error"];
            trace.error = TraceError{error.value("kind", ""), error.value("message", ""),
                                     error.value("node", std::size_t(0)), error.value("role", "")};
        }
        return result;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Malformed, std::string("report structure invalid: ") + e.what());
    }
}

void write_report(const ChainResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Config, "cannot write report file: " + path);
    out << result_to_report_json(result) << "\n";
}

ChainResult read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot read report file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return result_from_report_json(text);
}

} // namespace chainmem
