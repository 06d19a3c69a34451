#include <algorithm>

#include "clinex/retrieval.hpp"
#include "clinex/text.hpp"

namespace clinex {

namespace {

// Offsets at which a unit begins, followed by text.size().
std::vector<std::size_t> unit_boundaries(std::string_view text, ChunkUnit unit) {
  std::vector<std::size_t> b;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (unit == ChunkUnit::Chars) {
      if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) b.push_back(i);
    } else if (i == 0 || (!is_space(text[i]) && is_space(text[i - 1]))) {
      b.push_back(i);
    }
  }
  b.push_back(text.size());
  return b;
}

}  // namespace

std::vector<Chunk> split_recursive(std::string_view report_id, std::string_view text,
                                   const SplitOptions& options) {
  if (options.chunk_size == 0 || options.chunk_size <= options.overlap)
    throw ConfigError("chunk_size must exceed overlap");
  std::vector<Chunk> chunks;
  if (text.empty()) return chunks;

  const std::vector<std::size_t> bounds = unit_boundaries(text, options.unit);
  const std::size_t units = bounds.size() - 1;
  auto unit_of = [&](std::size_t offset) -> std::optional<std::size_t> {
    auto it = std::lower_bound(bounds.begin(), bounds.end(), offset);
    if (it == bounds.end() || *it != offset) return std::nullopt;
    return static_cast<std::size_t>(it - bounds.begin());
  };
  auto emit = [&](std::size_t begin_unit, std::size_t end_unit) {
    Chunk c;
    c.report_id = std::string(report_id);
    c.index = chunks.size();
    c.start = bounds[begin_unit];
    c.end = bounds[end_unit];
    c.text = std::string(text.substr(c.start, c.end - c.start));
    chunks.push_back(std::move(c));
  };

  std::size_t pos = 0;
  while (pos < units) {
    if (units - pos <= options.chunk_size) {
      emit(pos, units);
      break;
    }
    const std::size_t limit = pos + options.chunk_size;
    const std::size_t lo = bounds[pos];
    const std::size_t hi = bounds[limit];

    std::optional<std::size_t> cut;
    std::size_t cut_level = 0;
    for (std::size_t level = 0; level < options.separators.size() && !cut; ++level) {
      const std::string& sep = options.separators[level];
      if (sep.empty() || sep.size() > hi - lo) continue;
      // Latest separator whose end still fits in the window.
      for (std::size_t at = text.rfind(sep, hi - sep.size());
           at != std::string_view::npos && at >= lo; at = at == 0 ? std::string_view::npos : text.rfind(sep, at - 1)) {
        const auto end_unit = unit_of(at + sep.size());
        if (!end_unit || *end_unit <= pos) continue;
        // A mid-sentence cut must leave room for the overlap to make progress.
        if (level > 0 && *end_unit - pos <= options.overlap) break;
        cut = *end_unit;
        cut_level = level;
        break;
      }
    }

    if (cut && cut_level == 0) {
      emit(pos, *cut);
      pos = *cut;
    } else if (cut) {
      emit(pos, *cut);
      pos = *cut - options.overlap;
    } else {
      emit(pos, limit);
      pos = limit - options.overlap;
    }
  }
  return chunks;
}

}  // namespace clinex
