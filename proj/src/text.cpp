#include "chainmem/text.hpp"

#include "chainmem/errors.hpp"

namespace chainmem {

namespace {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// A UTF-8 code point starts at every byte that is not a continuation byte.
inline bool is_codepoint_start(char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
}

} // namespace

const char* to_string(UnitMode mode) {
    return mode == UnitMode::Word ? "word" : "character";
}

UnitMode unit_mode_from_string(std::string_view name) {
    if (name == "word") return UnitMode::Word;
    if (name == "character" || name == "char") return UnitMode::Character;
    throw Error(ErrorKind::Config, "unknown unit mode: " + std::string(name));
}

std::size_t count_units(std::string_view text, UnitMode mode) {
    std::size_t n = 0;
    if (mode == UnitMode::Word) {
        bool in_run = false;
        for (char c : text) {
            if (is_space(c)) {
                in_run = false;
            } else if (!in_run) {
                in_run = true;
                ++n;
            }
        }
    } else {
        for (char c : text) {
            if (is_codepoint_start(c)) ++n;
        }
    }
    return n;
}

std::string truncate_to_units(std::string_view text, std::size_t units, UnitMode mode) {
    if (units == 0) return "";
    std::size_t seen = 0;
    if (mode == UnitMode::Word) {
        bool in_run = false;
        std::size_t last_word_end = 0;
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (is_space(text[i])) {
                in_run = false;
            } else {
                if (!in_run) {
                    in_run = true;
                    if (++seen > units) return std::string(text.substr(0, last_word_end));
                }
                last_word_end = i + 1;
            }
        }
        return std::string(text);
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (is_codepoint_start(text[i]) && ++seen > units) return std::string(text.substr(0, i));
    }
    return std::string(text);
}

std::string trim(std::string_view text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    return std::string(text.substr(b, e - b));
}

Document make_document(std::string id, std::string text, UnitMode mode) {
    Document doc;
    doc.id = std::move(id);
    doc.unit_count = count_units(text, mode);
    doc.text = std::move(text);
    return doc;
}

namespace {

// End byte of the next chunk starting at pos. Word mode consumes up to k
// word runs and ends at the end of the last one (trailing whitespace moves
// to the next chunk, except at document end); character mode consumes
// exactly k code points.
std::size_t chunk_end(const std::string& text, std::size_t pos, std::size_t k, UnitMode mode,
                      std::size_t* units_out) {
    const std::size_t size = text.size();
    std::size_t units = 0;
    std::size_t end = pos;

    if (mode == UnitMode::Word) {
        std::size_t i = pos;
        while (i < size && units < k) {
            while (i < size && is_space(text[i])) ++i;
            if (i >= size) break;
            ++units;
            while (i < size && !is_space(text[i])) ++i;
            end = i;
        }
        if (units == 0) {
            // Whitespace-only remainder forms the final chunk.
            end = size;
        } else {
            // If nothing but whitespace follows, absorb it into this chunk.
            std::size_t j = end;
            while (j < size && is_space(text[j])) ++j;
            if (j >= size) end = size;
        }
    } else {
        std::size_t i = pos;
        while (i < size && units < k) {
            ++units;
            ++i;
            while (i < size && !is_codepoint_start(text[i])) ++i;
        }
        end = i;
    }

    *units_out = units;
    return end;
}

} // namespace

ChunkStream::ChunkStream(const Document& doc, std::size_t k, UnitMode mode)
    : text_(&doc.text), k_(k), mode_(mode) {
    if (doc.text.empty()) throw Error(ErrorKind::EmptyDocument, "document is empty: " + doc.id);
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "chunk size k must be at least 1");
}

std::optional<Chunk> ChunkStream::next() {
    if (pos_ >= text_->size()) return std::nullopt;
    std::size_t units = 0;
    const std::size_t end = chunk_end(*text_, pos_, k_, mode_, &units);
    Chunk chunk;
    chunk.index = ++produced_;
    chunk.text = text_->substr(pos_, end - pos_);
    chunk.unit_count = units;
    chunk.span = {pos_, end};
    pos_ = end;
    return chunk;
}

std::vector<Chunk> split_document(const Document& doc, std::size_t k, UnitMode mode) {
    ChunkStream stream(doc, k, mode);
    std::vector<Chunk> chunks;
    while (auto chunk = stream.next()) chunks.push_back(std::move(*chunk));
    return chunks;
}

} // namespace chainmem
