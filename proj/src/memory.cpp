#include "chainmem/memory.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "json.hpp"

#include "chainmem/errors.hpp"
#include "chainmem/eval.hpp"

namespace chainmem {

using nlohmann::json;

const char* to_string(EntryStatus status) {
    switch (status) {
    case EntryStatus::Active: return "active";
    case EntryStatus::Superseded: return "superseded";
    case EntryStatus::Corrected: return "corrected";
    }
    return "?";
}

EntryStatus entry_status_from_string(std::string_view name) {
    if (name == "active") return EntryStatus::Active;
    if (name == "superseded") return EntryStatus::Superseded;
    if (name == "corrected") return EntryStatus::Corrected;
    throw Error(ErrorKind::Malformed, "unknown entry status: " + std::string(name));
}

const MemoryEntry* MemoryBank::find(std::size_t index) const {
    for (const auto& entry : entries)
        if (entry.index == index) return &entry;
    return nullptr;
}

MemoryEntry* MemoryBank::find(std::size_t index) {
    for (auto& entry : entries)
        if (entry.index == index) return &entry;
    return nullptr;
}

std::string effective_text(const MemoryEntry& entry) {
    if (entry.status == EntryStatus::Corrected && entry.correction) return entry.correction->text;
    return entry.filtered.empty() ? entry.hidden.text : entry.filtered;
}

void append_related(MemoryBank& bank, MemoryEntry entry) {
    if (entry.decision != FilterDecision::Related)
        throw Error(ErrorKind::UnrelatedAppend,
                    "entry " + std::to_string(entry.index) + " is not related");
    if (!bank.entries.empty() && entry.index <= bank.entries.back().index)
        throw Error(ErrorKind::OutOfOrderAppend,
                    "entry index " + std::to_string(entry.index) + " not greater than " +
                        std::to_string(bank.entries.back().index));
    entry.status = EntryStatus::Active;
    entry.correction.reset();
    entry.superseded_by.reset();
    bank.entries.push_back(std::move(entry));
}

std::string extract_short_answer(const std::string& text) {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        const std::string t = trim(line);
        if (t.size() >= 7) {
            std::string head = t.substr(0, 7);
            for (char& c : head) c = char(std::tolower(static_cast<unsigned char>(c)));
            if (head == "answer:") return normalize_answer(trim(t.substr(7)));
        }
    }
    if (count_units(text, UnitMode::Word) <= 8) return normalize_answer(text);
    return "";
}

ConflictDetector heuristic_detector() {
    return [](const MemoryBank& bank, const MemoryEntry& latest) {
        std::vector<ConflictPair> pairs;
        const std::string latest_answer = extract_short_answer(effective_text(latest));
        if (latest_answer.empty()) return pairs;
        for (const auto& entry : bank.entries) {
            if (entry.index >= latest.index || entry.status == EntryStatus::Superseded) continue;
            const std::string answer = extract_short_answer(effective_text(entry));
            if (answer.empty() || answer == latest_answer) continue;
            pairs.push_back({entry.index, latest.index,
                             "short answers differ: \"" + answer + "\" vs \"" + latest_answer +
                                 "\""});
        }
        return pairs;
    };
}

ConflictDetector llm_detector(BackendSpec backend, std::string query) {
    return [backend = std::move(backend), query = std::move(query)](const MemoryBank& bank,
                                                                    const MemoryEntry& latest) {
        std::vector<ConflictPair> pairs;
        for (const auto& entry : bank.entries) {
            if (entry.index >= latest.index || entry.status == EntryStatus::Superseded) continue;
            ChatRequest request;
            request.system =
                "You compare two notes drawn from the same document and decide whether they "
                "contradict each other. Reply CONFLICTING or CONSISTENT on the first line.";
            std::string user;
            if (!query.empty()) user += "Question: " + query + "\n\n";
            user += "Note A (segment " + std::to_string(entry.index) + "):\n" +
                    effective_text(entry) + "\n\nNote B (segment " +
                    std::to_string(latest.index) + "):\n" + effective_text(latest) +
                    "\n\nResponse:\n";
            request.user = std::move(user);
            request.temperature = backend.temperature;
            const ChatResponse response = complete(backend, request);
            std::string lowered = response.text;
            for (char& c : lowered) c = char(std::tolower(static_cast<unsigned char>(c)));
            if (lowered.find("conflicting") != std::string::npos)
                pairs.push_back({entry.index, latest.index, "detector flagged contradiction"});
        }
        return pairs;
    };
}

std::vector<ConflictPair> find_conflicts(const MemoryBank& bank, const MemoryEntry& latest,
                                         const ConflictDetector& detector) {
    if (!detector) return {};
    auto pairs = detector(bank, latest);
    std::sort(pairs.begin(), pairs.end(),
              [](const ConflictPair& a, const ConflictPair& b) { return a.earlier < b.earlier; });
    return pairs;
}

namespace {

// Legal moves: active -> superseded, active -> corrected,
// corrected -> superseded, corrected -> corrected (a newer merge).
void set_status(MemoryEntry& entry, EntryStatus next) {
    if (entry.status == EntryStatus::Superseded)
        throw Error(ErrorKind::StaleConflict,
                    "entry " + std::to_string(entry.index) + " is already superseded");
    entry.status = next;
}

} // namespace

void resolve_conflict(MemoryBank& bank, const ConflictPair& pair, const JudgeVerdict& verdict) {
    MemoryEntry* earlier = bank.find(pair.earlier);
    MemoryEntry* later = bank.find(pair.later);
    if (!earlier || !later)
        throw Error(ErrorKind::InvalidArgument, "conflict pair references missing entries");
    if (earlier->status == EntryStatus::Superseded || later->status == EntryStatus::Superseded)
        throw Error(ErrorKind::StaleConflict,
                    "conflict (" + std::to_string(pair.earlier) + "," +
                        std::to_string(pair.later) + ") was already resolved");

    switch (verdict.winner) {
    case JudgeWinner::Later:
        set_status(*earlier, EntryStatus::Superseded);
        earlier->superseded_by = pair.later;
        break;
    case JudgeWinner::Earlier:
        set_status(*later, EntryStatus::Superseded);
        later->superseded_by = pair.later;
        break;
    case JudgeWinner::Merged:
        set_status(*earlier, EntryStatus::Superseded);
        earlier->superseded_by = pair.later;
        set_status(*later, EntryStatus::Corrected);
        later->correction = Correction{verdict.corrected_text, pair.later};
        break;
    }
}

std::string render_context(const MemoryBank& bank, std::size_t budget, UnitMode mode) {
    std::vector<const MemoryEntry*> live;
    for (const auto& entry : bank.entries)
        if (entry.status != EntryStatus::Superseded) live.push_back(&entry);
    if (live.empty()) return "";

    const auto block_for = [](const MemoryEntry& entry) {
        return "[segment " + std::to_string(entry.index) + "]\n" + effective_text(entry);
    };
    const auto assemble = [&](std::size_t first, bool truncated) {
        std::string out;
        if (truncated)
            out = "[context truncated: dropped " + std::to_string(first) + " earlier segments]";
        for (std::size_t i = first; i < live.size(); ++i) {
            if (!out.empty()) out += "\n\n";
            out += block_for(*live[i]);
        }
        return out;
    };

    std::size_t first = 0;
    std::string out = assemble(first, false);
    while (count_units(out, mode) > budget && first + 1 < live.size()) {
        ++first;
        out = assemble(first, true);
    }
    if (count_units(out, mode) > budget) {
        // Even the newest entry alone is over budget: keep its prefix.
        std::string notice = "[context truncated: dropped " + std::to_string(first) +
                             " earlier segments]\n\n";
        const std::size_t notice_units = count_units(notice, mode);
        const std::size_t rest = budget > notice_units ? budget - notice_units : 0;
        out = notice + truncate_to_units(block_for(*live.back()), rest, mode);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Snapshot persistence
// ---------------------------------------------------------------------------

namespace {

json entry_to_json(const MemoryEntry& entry) {
    json record = {
        {"index", entry.index},
        {"status", to_string(entry.status)},
        {"decision", to_string(entry.decision)},
        {"hidden", entry.hidden.text},
        {"filtered", entry.filtered},
        {"chunk_span", {entry.chunk_span.begin, entry.chunk_span.end}},
        {"chunk_text", entry.chunk_text},
    };
    if (entry.correction)
        record["correction"] = {{"text", entry.correction->text},
                                {"resolved_by", entry.correction->resolved_by}};
    if (entry.superseded_by) record["superseded_by"] = *entry.superseded_by;
    return record;
}

MemoryEntry entry_from_json(const json& record) {
    MemoryEntry entry;
    entry.index = record.at("index").get<std::size_t>();
    entry.status = entry_status_from_string(record.at("status").get<std::string>());
    entry.decision = record.at("decision").get<std::string>() == "related"
                         ? FilterDecision::Related
                         : FilterDecision::Unrelated;
    entry.hidden.text = record.value("hidden", "");
    entry.hidden.source_index = entry.index;
    entry.filtered = record.value("filtered", "");
    if (record.contains("chunk_span") && record["chunk_span"].is_array() &&
        record["chunk_span"].size() == 2) {
        entry.chunk_span.begin = record["chunk_span"][0].get<std::size_t>();
        entry.chunk_span.end = record["chunk_span"][1].get<std::size_t>();
    }
    entry.chunk_text = record.value("chunk_text", "");
    if (record.contains("correction"))
        entry.correction = Correction{record["correction"].value("text", ""),
                                      record["correction"].value("resolved_by", std::size_t(0))};
    if (record.contains("superseded_by"))
        entry.superseded_by = record["superseded_by"].get<std::size_t>();
    return entry;
}

} // namespace

std::string bank_to_jsonl(const MemoryBank& bank) {
    std::string out;
    for (const auto& entry : bank.entries) {
        out += entry_to_json(entry).dump();
        out += '\n';
    }
    return out;
}

MemoryBank bank_from_jsonl(const std::string& text, std::string document_ref) {
    MemoryBank bank;
    bank.document_ref = std::move(document_ref);
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            bank.entries.push_back(entry_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Malformed,
                        "bad bank record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return bank;
}

} // namespace chainmem
