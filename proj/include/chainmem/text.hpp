#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chainmem {

// What a "unit" is for all length accounting. Word counts maximal
// non-whitespace runs; Character counts UTF-8 code points. Fixed for the
// lifetime of one chain run.
enum class UnitMode { Word, Character };

const char* to_string(UnitMode mode);
UnitMode unit_mode_from_string(std::string_view name);

std::size_t count_units(std::string_view text, UnitMode mode);

// Prefix of at most `units` units; word mode cuts at the end of the last
// kept word, character mode at a code point boundary.
std::string truncate_to_units(std::string_view text, std::size_t units, UnitMode mode);

std::string trim(std::string_view text);

// Half-open byte range into the owning document's text.
struct ByteSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const ByteSpan&) const = default;
};

struct Document {
    std::string id;
    std::string text;
    std::size_t unit_count = 0;
};

Document make_document(std::string id, std::string text, UnitMode mode);

struct Chunk {
    std::size_t index = 0; // 1-based position in the document
    std::string text;
    std::size_t unit_count = 0;
    ByteSpan span;
};

// Segments the document into ordered chunks of at most k units each.
// Concatenating the chunk texts in index order reproduces doc.text exactly.
// Word mode places boundaries at whitespace (words are never split);
// character mode splits at exactly k code points, so the chunk count is
// ceil(n / k).
std::vector<Chunk> split_document(const Document& doc, std::size_t k, UnitMode mode);

// Single-pass lazy cursor over a document, producing the same chunks as
// split_document. The engine pulls one chunk at a time so it never holds
// more than the current chunk's text. There is no rewind.
class ChunkStream {
  public:
    ChunkStream(const Document& doc, std::size_t k, UnitMode mode);

    // Next chunk in index order; nullopt once the document is exhausted.
    std::optional<Chunk> next();

    std::size_t produced() const { return produced_; }

  private:
    const std::string* text_;
    std::size_t k_;
    UnitMode mode_;
    std::size_t pos_ = 0;
    std::size_t produced_ = 0;
};

} // namespace chainmem
