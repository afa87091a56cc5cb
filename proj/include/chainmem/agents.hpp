#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include "chainmem/backend.hpp"
#include "chainmem/text.hpp"

namespace chainmem {

struct MemoryEntry; // memory.hpp

enum class AgentRole { Worker, Filter, Judge, Manager };
enum class TaskKind { QA, Summarization, FewShot };

const char* to_string(AgentRole role);
const char* to_string(TaskKind task);
AgentRole agent_role_from_string(std::string_view name);
TaskKind task_kind_from_string(std::string_view name);

// A role's prompt for one task. The body carries {{placeholder}} slots;
// substitution is single-pass, so payload text is never re-scanned.
struct PromptTemplate {
    AgentRole role = AgentRole::Worker;
    TaskKind task = TaskKind::QA;
    std::string system_prompt;
    std::string body;
};

struct TemplateSet {
    TaskKind task = TaskKind::QA;
    PromptTemplate worker;
    PromptTemplate filter;
    PromptTemplate judge;
    PromptTemplate manager;

    const PromptTemplate& for_role(AgentRole role) const;
};

// Built-in templates for a task.
TemplateSet default_templates(TaskKind task);

// Loads <role>_<task>.txt files from dir (system prompt, a `---` line, then
// the body). Missing files fall back to the built-in template. Each body may
// use only the placeholders its role's renderer supplies.
TemplateSet load_templates(const std::string& dir, TaskKind task);

// Validates that every placeholder in the body is one the role supplies.
void validate_template(const PromptTemplate& tmpl);

// The short-term memory string a worker produces at one node.
struct HiddenState {
    std::string text;
    std::size_t source_index = 0;
    bool truncated = false;
};

enum class FilterDecision { Related, Unrelated };
const char* to_string(FilterDecision decision);

struct FilterVerdict {
    std::string filtered_text; // empty only when the decision is unrelated
    FilterDecision decision = FilterDecision::Related;
};

enum class JudgeWinner { Earlier, Later, Merged };
const char* to_string(JudgeWinner winner);

struct JudgeVerdict {
    std::string corrected_text; // replaces both entries when winner is Merged
    JudgeWinner winner = JudgeWinner::Later;
};

struct RenderedPrompt {
    std::string system;
    std::string user;
};

// ---------------------------------------------------------------------------
// Renderers. Pure and deterministic; throw TemplateMismatch when handed a
// template for a different role.
// ---------------------------------------------------------------------------

RenderedPrompt render_worker(const PromptTemplate& tmpl, const Chunk& chunk,
                             const std::string& query, const HiddenState& prev);

RenderedPrompt render_filter(const PromptTemplate& tmpl, const HiddenState& hidden,
                             const std::string& query);

// `later` is the newly stored entry, `earlier` the prior one it conflicts
// with; earlier.index < later.index or IndexOrder is thrown.
RenderedPrompt render_judge(const PromptTemplate& tmpl, const MemoryEntry& later,
                            const MemoryEntry& earlier, const std::string& query);

RenderedPrompt render_manager(const PromptTemplate& tmpl, const std::string& bank_context,
                              const std::string& query);

// ---------------------------------------------------------------------------
// Verdict parsers. Total over arbitrary completions except for the declared
// UnparseableVerdict throw.
// ---------------------------------------------------------------------------

// Case-insensitive search for "unrelated" anywhere in the completion, then
// "related"; the filtered text is whatever follows the line the keyword is
// on. Throws UnparseableVerdict when neither keyword occurs.
FilterVerdict parse_filter_verdict(std::string_view completion);

// The first line must lead with EARLIER, LATER, or MERGED (case-insensitive);
// the corrected text is the remainder. A MERGED verdict without corrected
// text is unparseable (there would be nothing to store).
JudgeVerdict parse_judge_verdict(std::string_view completion);

// ---------------------------------------------------------------------------
// Invocations: one LLM call each, against the given backend.
// ---------------------------------------------------------------------------

struct InvokeOptions {
    std::size_t hidden_cap = 1024; // unit cap on worker output
    UnitMode unit_mode = UnitMode::Word;
};

// Per-call accounting surfaced into the trace.
struct InvokeMeta {
    long long latency_ms = 0;
    std::size_t input_units = 0;
    std::size_t output_units = 0;
};

HiddenState invoke_worker(const BackendSpec& backend, const RenderedPrompt& prompt,
                          std::size_t source_index, const InvokeOptions& options,
                          InvokeMeta* meta = nullptr);

FilterVerdict invoke_filter(const BackendSpec& backend, const RenderedPrompt& prompt,
                            InvokeMeta* meta = nullptr);

JudgeVerdict invoke_judge(const BackendSpec& backend, const RenderedPrompt& prompt,
                          InvokeMeta* meta = nullptr);

// Returns the completion trimmed; an empty completion is returned as "" with
// *was_empty set.
std::string invoke_manager(const BackendSpec& backend, const RenderedPrompt& prompt,
                           bool* was_empty = nullptr, InvokeMeta* meta = nullptr);

// Single-pass placeholder substitution, exposed for template tooling/tests.
std::string render_body(std::string_view body, const std::map<std::string, std::string>& values);

} // namespace chainmem
