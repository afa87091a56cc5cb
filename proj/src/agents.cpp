#include "chainmem/agents.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>

#include "chainmem/errors.hpp"
#include "chainmem/memory.hpp"

namespace chainmem {

const char* to_string(AgentRole role) {
    switch (role) {
    case AgentRole::Worker: return "worker";
    case AgentRole::Filter: return "filter";
    case AgentRole::Judge: return "judge";
    case AgentRole::Manager: return "manager";
    }
    return "?";
}

const char* to_string(TaskKind task) {
    switch (task) {
    case TaskKind::QA: return "qa";
    case TaskKind::Summarization: return "summarization";
    case TaskKind::FewShot: return "fewshot";
    }
    return "?";
}

AgentRole agent_role_from_string(std::string_view name) {
    if (name == "worker") return AgentRole::Worker;
    if (name == "filter") return AgentRole::Filter;
    if (name == "judge") return AgentRole::Judge;
    if (name == "manager") return AgentRole::Manager;
    throw Error(ErrorKind::Config, "unknown agent role: " + std::string(name));
}

TaskKind task_kind_from_string(std::string_view name) {
    if (name == "qa") return TaskKind::QA;
    if (name == "summarization") return TaskKind::Summarization;
    if (name == "fewshot" || name == "few-shot") return TaskKind::FewShot;
    throw Error(ErrorKind::Config, "unknown task kind: " + std::string(name));
}

const char* to_string(FilterDecision decision) {
    return decision == FilterDecision::Related ? "related" : "unrelated";
}

const char* to_string(JudgeWinner winner) {
    switch (winner) {
    case JudgeWinner::Earlier: return "earlier";
    case JudgeWinner::Later: return "later";
    case JudgeWinner::Merged: return "merged";
    }
    return "?";
}

const PromptTemplate& TemplateSet::for_role(AgentRole role) const {
    switch (role) {
    case AgentRole::Worker: return worker;
    case AgentRole::Filter: return filter;
    case AgentRole::Judge: return judge;
    case AgentRole::Manager: return manager;
    }
    return worker;
}

// ---------------------------------------------------------------------------
// Placeholder substitution
// ---------------------------------------------------------------------------

namespace {

const std::set<std::string>& allowed_placeholders(AgentRole role) {
    static const std::set<std::string> worker = {"chunk", "previous", "query"};
    static const std::set<std::string> filter = {"candidate", "query"};
    static const std::set<std::string> judge = {"earlier_index", "later_index", "earlier_chunk",
                                                "later_chunk",   "earlier_claim", "later_claim",
                                                "query"};
    static const std::set<std::string> manager = {"evidence", "query"};
    switch (role) {
    case AgentRole::Worker: return worker;
    case AgentRole::Filter: return filter;
    case AgentRole::Judge: return judge;
    case AgentRole::Manager: return manager;
    }
    return worker;
}

void require_role(const PromptTemplate& tmpl, AgentRole expected) {
    if (tmpl.role != expected)
        throw Error(ErrorKind::TemplateMismatch, std::string("template is for role ") +
                                                     to_string(tmpl.role) + ", expected " +
                                                     to_string(expected));
}

} // namespace

std::string render_body(std::string_view body, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(body.size());
    std::size_t pos = 0;
    while (pos < body.size()) {
        const auto open = body.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        const auto close = body.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        out.append(body.substr(pos, open - pos));
        const std::string name(body.substr(open + 2, close - open - 2));
        const auto it = values.find(name);
        if (it == values.end())
            throw Error(ErrorKind::TemplateMismatch, "unfilled placeholder: " + name);
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

void validate_template(const PromptTemplate& tmpl) {
    const auto& allowed = allowed_placeholders(tmpl.role);
    std::string_view body = tmpl.body;
    std::size_t pos = 0;
    while (true) {
        const auto open = body.find("{{", pos);
        if (open == std::string_view::npos) break;
        const auto close = body.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        const std::string name(body.substr(open + 2, close - open - 2));
        if (!allowed.count(name))
            throw Error(ErrorKind::Config, std::string("template for ") + to_string(tmpl.role) +
                                               " uses unknown placeholder: " + name);
        pos = close + 2;
    }
}

// ---------------------------------------------------------------------------
// Built-in templates
// ---------------------------------------------------------------------------

namespace {

PromptTemplate make_template(AgentRole role, TaskKind task, std::string system, std::string body) {
    PromptTemplate tmpl;
    tmpl.role = role;
    tmpl.task = task;
    tmpl.system_prompt = std::move(system);
    tmpl.body = std::move(body);
    return tmpl;
}

TemplateSet qa_templates() {
    TemplateSet set;
    set.task = TaskKind::QA;
    set.worker = make_template(
        AgentRole::Worker, TaskKind::QA,
        "You read one segment of a long document and maintain running notes. Extract any "
        "evidence relevant to the question, keep the useful parts of the earlier notes, and "
        "drop everything else. Reply with the updated notes only.",
        "Text chunk:\n{{chunk}}\n\nPrevious notes:\n{{previous}}\n\nQuestion: "
        "{{query}}\n\nResponse:\n");
    set.filter = make_template(
        AgentRole::Filter, TaskKind::QA,
        "You decide whether candidate notes actually help answer the question and are free of "
        "obvious fabrication. Reply RELATED or UNRELATED on the first line. If related, repeat "
        "only the parts of the notes worth keeping on the lines after.",
        "Question: {{query}}\n\nCandidate notes:\n{{candidate}}\n\nResponse:\n");
    set.judge = make_template(
        AgentRole::Judge, TaskKind::QA,
        "Two passages of the same document produced conflicting notes. Re-read both passages "
        "and decide which notes answer the question correctly. Reply EARLIER, LATER, or MERGED "
        "on the first line, then write the corrected notes on the lines after.",
        "Question: {{query}}\n\nHistory:\nPassage {{earlier_index}}:\n{{earlier_chunk}}\n\n"
        "Passage {{later_index}}:\n{{later_chunk}}\n\nConflicts:\nNotes from passage "
        "{{earlier_index}}:\n{{earlier_claim}}\n\nNotes from passage "
        "{{later_index}}:\n{{later_claim}}\n\nResponse:\n");
    set.manager = make_template(
        AgentRole::Manager, TaskKind::QA,
        "Answer the question using only the collected evidence. Give the answer directly, "
        "without commentary, in the style of the example.",
        "Example:\nQuestion: The actor that plays Phileas Fogg in \"Around the World in 80 "
        "Days\", co-starred with Gary Cooper in a 1939 Goldwyn Productions film based on a "
        "novel by what author?\nYour answer: Charles L. Clifford\n\nCollected "
        "evidence:\n{{evidence}}\n\nQuestion: {{query}}\n\nResponse:\n");
    return set;
}

TemplateSet summarization_templates() {
    TemplateSet set;
    set.task = TaskKind::Summarization;
    set.worker = make_template(
        AgentRole::Worker, TaskKind::Summarization,
        "You summarize one segment of a long document while carrying forward the running "
        "summary. Merge the new segment into the summary, preserving the logical flow between "
        "earlier and current material. Reply with the updated summary only.",
        "Text chunk:\n{{chunk}}\n\nSummary so far:\n{{previous}}\n\nResponse:\n");
    set.filter = make_template(
        AgentRole::Filter, TaskKind::Summarization,
        "You check a candidate summary fragment for content that belongs in a faithful summary "
        "of the document. Reply RELATED or UNRELATED on the first line. If related, repeat only "
        "the parts worth keeping on the lines after.",
        "Candidate summary:\n{{candidate}}\n\nResponse:\n");
    set.judge = make_template(
        AgentRole::Judge, TaskKind::Summarization,
        "Two passages of the same document produced contradictory summary fragments. Re-read "
        "both passages and reconcile them. Reply EARLIER, LATER, or MERGED on the first line, "
        "then write the corrected fragment on the lines after.",
        "History:\nPassage {{earlier_index}}:\n{{earlier_chunk}}\n\nPassage "
        "{{later_index}}:\n{{later_chunk}}\n\nConflicts:\nFragment from passage "
        "{{earlier_index}}:\n{{earlier_claim}}\n\nFragment from passage "
        "{{later_index}}:\n{{later_claim}}\n\nResponse:\n");
    set.manager = make_template(
        AgentRole::Manager, TaskKind::Summarization,
        "Write the final summary of the whole document from the collected section summaries. "
        "Be concise and faithful; do not add information that is not in the sections.",
        "Collected section summaries:\n{{evidence}}\n\nResponse:\n");
    return set;
}

TemplateSet fewshot_templates() {
    TemplateSet set;
    set.task = TaskKind::FewShot;
    set.worker = make_template(
        AgentRole::Worker, TaskKind::FewShot,
        "You read a segment of worked examples and keep notes on the pattern they demonstrate, "
        "so the task input can be completed in the same style later. Reply with the updated "
        "notes only.",
        "Examples chunk:\n{{chunk}}\n\nPrevious notes:\n{{previous}}\n\nTask input: "
        "{{query}}\n\nResponse:\n");
    set.filter = make_template(
        AgentRole::Filter, TaskKind::FewShot,
        "You decide whether candidate notes capture the example pattern needed for the task "
        "input. Reply RELATED or UNRELATED on the first line. If related, repeat only the parts "
        "worth keeping on the lines after.",
        "Task input: {{query}}\n\nCandidate notes:\n{{candidate}}\n\nResponse:\n");
    set.judge = make_template(
        AgentRole::Judge, TaskKind::FewShot,
        "Two segments of worked examples produced conflicting notes about the expected output "
        "style. Re-read both segments and decide. Reply EARLIER, LATER, or MERGED on the first "
        "line, then write the corrected notes on the lines after.",
        "Task input: {{query}}\n\nHistory:\nSegment {{earlier_index}}:\n{{earlier_chunk}}\n\n"
        "Segment {{later_index}}:\n{{later_chunk}}\n\nConflicts:\nNotes from segment "
        "{{earlier_index}}:\n{{earlier_claim}}\n\nNotes from segment "
        "{{later_index}}:\n{{later_claim}}\n\nResponse:\n");
    set.manager = make_template(
        AgentRole::Manager, TaskKind::FewShot,
        "Complete the task input in exactly the style the collected example notes demonstrate. "
        "Reply with the completion only.",
        "Example notes:\n{{evidence}}\n\nTask input: {{query}}\n\nResponse:\n");
    return set;
}

} // namespace

TemplateSet default_templates(TaskKind task) {
    switch (task) {
    case TaskKind::QA: return qa_templates();
    case TaskKind::Summarization: return summarization_templates();
    case TaskKind::FewShot: return fewshot_templates();
    }
    return qa_templates();
}

TemplateSet load_templates(const std::string& dir, TaskKind task) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw Error(ErrorKind::Config, "template directory not found: " + dir);

    TemplateSet set = default_templates(task);
    const AgentRole roles[] = {AgentRole::Worker, AgentRole::Filter, AgentRole::Judge,
                               AgentRole::Manager};
    for (AgentRole role : roles) {
        const fs::path path =
            fs::path(dir) / (std::string(to_string(role)) + "_" + to_string(task) + ".txt");
        if (!fs::exists(path)) continue;
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Config, "cannot read template file: " + path.string());
        std::string line;
        std::string system;
        std::string body;
        bool in_body = false;
        while (std::getline(in, line)) {
            if (!in_body && line == "---") {
                in_body = true;
                continue;
            }
            (in_body ? body : system) += line;
            (in_body ? body : system) += '\n';
        }
        if (!in_body)
            throw Error(ErrorKind::Config,
                        "template file lacks the `---` separator: " + path.string());
        PromptTemplate tmpl;
        tmpl.role = role;
        tmpl.task = task;
        tmpl.system_prompt = trim(system);
        tmpl.body = body;
        validate_template(tmpl);
        switch (role) {
        case AgentRole::Worker: set.worker = std::move(tmpl); break;
        case AgentRole::Filter: set.filter = std::move(tmpl); break;
        case AgentRole::Judge: set.judge = std::move(tmpl); break;
        case AgentRole::Manager: set.manager = std::move(tmpl); break;
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Renderers
// ---------------------------------------------------------------------------

RenderedPrompt render_worker(const PromptTemplate& tmpl, const Chunk& chunk,
                             const std::string& query, const HiddenState& prev) {
    require_role(tmpl, AgentRole::Worker);
    const std::map<std::string, std::string> values = {
        {"chunk", chunk.text}, {"previous", prev.text}, {"query", query}};
    return {tmpl.system_prompt, render_body(tmpl.body, values)};
}

RenderedPrompt render_filter(const PromptTemplate& tmpl, const HiddenState& hidden,
                             const std::string& query) {
    require_role(tmpl, AgentRole::Filter);
    const std::map<std::string, std::string> values = {{"candidate", hidden.text},
                                                       {"query", query}};
    return {tmpl.system_prompt, render_body(tmpl.body, values)};
}

RenderedPrompt render_judge(const PromptTemplate& tmpl, const MemoryEntry& later,
                            const MemoryEntry& earlier, const std::string& query) {
    require_role(tmpl, AgentRole::Judge);
    if (earlier.index >= later.index)
        throw Error(ErrorKind::IndexOrder,
                    "judge entries must be ordered: earlier index " +
                        std::to_string(earlier.index) + " vs later index " +
                        std::to_string(later.index));
    if (earlier.chunk_text.empty() || later.chunk_text.empty())
        throw Error(ErrorKind::InvalidArgument, "judge entries must carry the original chunk text");
    const std::map<std::string, std::string> values = {
        {"earlier_index", std::to_string(earlier.index)},
        {"later_index", std::to_string(later.index)},
        {"earlier_chunk", earlier.chunk_text},
        {"later_chunk", later.chunk_text},
        {"earlier_claim", effective_text(earlier)},
        {"later_claim", effective_text(later)},
        {"query", query}};
    return {tmpl.system_prompt, render_body(tmpl.body, values)};
}

RenderedPrompt render_manager(const PromptTemplate& tmpl, const std::string& bank_context,
                              const std::string& query) {
    require_role(tmpl, AgentRole::Manager);
    const std::string evidence = bank_context.empty() ? "(no evidence found)" : bank_context;
    const std::map<std::string, std::string> values = {{"evidence", evidence}, {"query", query}};
    return {tmpl.system_prompt, render_body(tmpl.body, values)};
}

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

namespace {

std::size_t find_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty() || haystack.size() < needle.size()) return std::string_view::npos;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < needle.size(); ++j) {
            const char a = haystack[i + j];
            const char b = needle[j];
            const char al = (a >= 'A' && a <= 'Z') ? char(a - 'A' + 'a') : a;
            const char bl = (b >= 'A' && b <= 'Z') ? char(b - 'A' + 'a') : b;
            if (al != bl) {
                match = false;
                break;
            }
        }
        if (match) return i;
    }
    return std::string_view::npos;
}

// Text after the line containing position `at`.
std::string remainder_after_line(std::string_view text, std::size_t at) {
    const auto nl = text.find('\n', at);
    if (nl == std::string_view::npos) return "";
    return trim(text.substr(nl + 1));
}

} // namespace

FilterVerdict parse_filter_verdict(std::string_view completion) {
    const auto unrelated_at = find_ci(completion, "unrelated");
    if (unrelated_at != std::string_view::npos)
        return {remainder_after_line(completion, unrelated_at), FilterDecision::Unrelated};
    const auto related_at = find_ci(completion, "related");
    if (related_at != std::string_view::npos)
        return {remainder_after_line(completion, related_at), FilterDecision::Related};
    throw Error(ErrorKind::UnparseableVerdict,
                "filter completion has neither RELATED nor UNRELATED");
}

JudgeVerdict parse_judge_verdict(std::string_view completion) {
    const std::string whole = trim(completion);
    const auto nl = whole.find('\n');
    const std::string first_line = trim(nl == std::string::npos ? whole : whole.substr(0, nl));
    const std::string rest = nl == std::string::npos ? "" : trim(whole.substr(nl + 1));

    const auto leads_with = [&first_line](std::string_view marker) {
        if (find_ci(first_line, marker) != 0) return false;
        if (first_line.size() == marker.size()) return true;
        const char next = first_line[marker.size()];
        return !std::isalnum(static_cast<unsigned char>(next));
    };

    if (leads_with("earlier")) return {rest, JudgeWinner::Earlier};
    if (leads_with("merged")) {
        if (rest.empty())
            throw Error(ErrorKind::UnparseableVerdict, "MERGED verdict without corrected text");
        return {rest, JudgeWinner::Merged};
    }
    if (leads_with("later")) return {rest, JudgeWinner::Later};
    throw Error(ErrorKind::UnparseableVerdict, "judge completion lacks a leading marker line");
}

// ---------------------------------------------------------------------------
// Invocations
// ---------------------------------------------------------------------------

namespace {

ChatResponse call(const BackendSpec& backend, const RenderedPrompt& prompt, AgentRole role,
                  InvokeMeta* meta) {
    ChatRequest request;
    request.system = prompt.system;
    request.user = prompt.user;
    request.temperature = backend.temperature;
    try {
        ChatResponse response = complete(backend, request);
        if (meta) *meta = {response.latency_ms, response.input_units, response.output_units};
        return response;
    } catch (Error& e) {
        throw Error(e.kind(), std::string(to_string(role)) + ": " + e.what())
            .with_status(e.status())
            .with_role(to_string(role));
    }
}

} // namespace

HiddenState invoke_worker(const BackendSpec& backend, const RenderedPrompt& prompt,
                          std::size_t source_index, const InvokeOptions& options,
                          InvokeMeta* meta) {
    const ChatResponse response = call(backend, prompt, AgentRole::Worker, meta);
    HiddenState hidden;
    hidden.source_index = source_index;
    hidden.text = trim(response.text);
    if (count_units(hidden.text, options.unit_mode) > options.hidden_cap) {
        hidden.text = truncate_to_units(hidden.text, options.hidden_cap, options.unit_mode);
        hidden.truncated = true;
    }
    return hidden;
}

FilterVerdict invoke_filter(const BackendSpec& backend, const RenderedPrompt& prompt,
                            InvokeMeta* meta) {
    const ChatResponse response = call(backend, prompt, AgentRole::Filter, meta);
    return parse_filter_verdict(response.text);
}

JudgeVerdict invoke_judge(const BackendSpec& backend, const RenderedPrompt& prompt,
                          InvokeMeta* meta) {
    const ChatResponse response = call(backend, prompt, AgentRole::Judge, meta);
    return parse_judge_verdict(response.text);
}

std::string invoke_manager(const BackendSpec& backend, const RenderedPrompt& prompt,
                           bool* was_empty, InvokeMeta* meta) {
    const ChatResponse response = call(backend, prompt, AgentRole::Manager, meta);
    const std::string answer = trim(response.text);
    if (was_empty) *was_empty = answer.empty();
    return answer;
}

} // namespace chainmem
