#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "chainmem/agents.hpp"
#include "chainmem/backend.hpp"
#include "chainmem/text.hpp"

namespace chainmem {

enum class EntryStatus { Active, Superseded, Corrected };

const char* to_string(EntryStatus status);
EntryStatus entry_status_from_string(std::string_view name);

struct Correction {
    std::string text;             // judge output that replaced the entry text
    std::size_t resolved_by = 0;  // node whose judge call produced it
};

// One record of the long-term memory: the evidence a filter admitted for one
// chunk. The original segment text is kept so judge prompts can re-read it
// after the engine has streamed past the chunk.
struct MemoryEntry {
    std::size_t index = 0; // source chunk index
    ByteSpan chunk_span;
    std::string chunk_text;
    HiddenState hidden;
    std::string filtered; // filter payload; when empty the hidden text stands in
    FilterDecision decision = FilterDecision::Related;
    EntryStatus status = EntryStatus::Active;
    std::optional<Correction> correction;          // present iff status == Corrected
    std::optional<std::size_t> superseded_by;      // node that retired this entry
};

// Ordered, versioned store of related evidence. Owned by exactly one chain
// run; mutation is single-threaded within that run.
struct MemoryBank {
    std::string document_ref;
    std::vector<MemoryEntry> entries;

    const MemoryEntry* find(std::size_t index) const;
    MemoryEntry* find(std::size_t index);
};

struct ConflictPair {
    std::size_t earlier = 0; // j
    std::size_t later = 0;   // i, with j < i
    std::string reason;
};

// The text an entry currently contributes: the correction when corrected,
// otherwise the filtered payload, otherwise the hidden text.
std::string effective_text(const MemoryEntry& entry);

// Appends a related entry with a strictly increasing index. Throws
// UnrelatedAppend / OutOfOrderAppend.
void append_related(MemoryBank& bank, MemoryEntry entry);

using ConflictDetector =
    std::function<std::vector<ConflictPair>(const MemoryBank&, const MemoryEntry& latest)>;

// Extracts a comparable short answer from evidence text: the remainder of an
// "Answer:" line if present, else the whole text when it is at most eight
// words, else nothing. Normalized via normalize_answer.
std::string extract_short_answer(const std::string& text);

// Flags earlier live entries whose short answers are non-empty and differ
// from the latest entry's.
ConflictDetector heuristic_detector();

// Asks the backend CONSISTENT/CONFLICTING per earlier live entry.
ConflictDetector llm_detector(BackendSpec backend, std::string query);

std::vector<ConflictPair> find_conflicts(const MemoryBank& bank, const MemoryEntry& latest,
                                         const ConflictDetector& detector);

// Applies a judge verdict: Later retires the earlier entry, Earlier retires
// the later one, Merged retires both and stores the corrected text on the
// later entry's slot. Throws StaleConflict when either entry is already
// superseded. The resolving node is pair.later.
void resolve_conflict(MemoryBank& bank, const ConflictPair& pair, const JudgeVerdict& verdict);

// Serializes live entries (active or corrected) in index order, at most
// `budget` units. Beyond budget the oldest entries are dropped first and a
// truncation notice is prepended; an over-budget sole entry contributes its
// prefix. Empty bank gives "".
std::string render_context(const MemoryBank& bank, std::size_t budget, UnitMode mode);

// Snapshot persistence: one JSON record per line (index, status, decision,
// texts). document_ref travels separately.
std::string bank_to_jsonl(const MemoryBank& bank);
MemoryBank bank_from_jsonl(const std::string& text, std::string document_ref = "");

} // namespace chainmem
