#pragma once

// Knowledge synthesis: dictionary entity matching over posts plus a
// deterministic template summarizer that turns entity descriptions into
// synthetic comments of roughly the corpus's mean comment length.

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "redkit/dataset.hpp"

namespace redkit {

class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  // Entries with case-folded duplicate surface forms or empty fields are
  // rejected.
  static KnowledgeBase from_entries(std::vector<KnowledgeEntry> entries);
  // JSON-lines, one {"entity","description"} object per line.
  static KnowledgeBase load_jsonl(const std::string& path);
  void save_jsonl(const std::string& path) const;

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<KnowledgeEntry>& entries() const { return entries_; }

  // Description for a case-folded surface form, or nullptr.
  const std::string* description(const std::string& surface) const;

  // Tokenized surface forms, longest first, used by the matcher.
  struct Surface {
    std::vector<std::string> tokens;
    std::string canonical;  // case-folded surface form
  };
  const std::vector<Surface>& surfaces() const { return surfaces_; }

 private:
  std::vector<KnowledgeEntry> entries_;
  std::vector<Surface> surfaces_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Longest-match, case-insensitive, left-to-right, non-overlapping dictionary
// matching over token spans. Returns case-folded surface forms in first-
// occurrence order without duplicates.
std::vector<std::string> extract_entities(const std::string& post_text,
                                          const KnowledgeBase& kb);

// Concatenates the matched entities' descriptions in the given order and
// trims or pads at sentence boundaries until the token count lands within
// target_len_tokens +/- 25%. Deterministic. Throws ArgumentError when no
// entities are given.
std::string summarize_descriptions(const std::vector<std::string>& entities,
                                   const KnowledgeBase& kb,
                                   int target_len_tokens);

struct KnowledgeSample {
  std::string post_id;
  std::string source_post_text;
  std::string comment;  // the synthesized knowledge comment
  std::vector<std::string> entities;
};

// One sample per post with at least one entity match. The target length is
// the mean comment token length of the given records (train split only by
// convention of the caller). Returns an empty set when nothing matches.
std::vector<KnowledgeSample> build_knowledge_dataset(
    const std::vector<PostRecord>& posts, const KnowledgeBase& kb);

}  // namespace redkit
