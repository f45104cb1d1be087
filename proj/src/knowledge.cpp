#include "redkit/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "redkit/instrument.hpp"
#include "redkit/vocab.hpp"

namespace redkit {

namespace {

std::string fold(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    out.push_back(
        static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens,
                        std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (!out.empty()) out += ' ';
    out += tokens[i];
  }
  return out;
}

// Splits a description into sentences on ./!/?/; boundaries; each sentence
// is returned tokenized (lowercase), with the boundary character kept on
// its final token.
std::vector<std::vector<std::string>> sentence_tokens(
    const std::string& description) {
  std::vector<std::string> sentences;
  std::string cur;
  for (char ch : description) {
    cur.push_back(ch);
    if (ch == '.' || ch == '!' || ch == '?' || ch == ';') {
      sentences.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) sentences.push_back(cur);

  std::vector<std::vector<std::string>> out;
  for (const auto& s : sentences) {
    auto toks = Vocabulary::tokenize(s);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

}  // namespace

KnowledgeBase KnowledgeBase::from_entries(
    std::vector<KnowledgeEntry> entries) {
  KnowledgeBase kb;
  for (auto& e : entries) {
    const std::string canonical = fold(e.entity);
    if (canonical.empty()) {
      throw ValidationError("knowledge base: empty entity surface form");
    }
    if (e.description.empty()) {
      throw ValidationError("knowledge base: empty description for '" +
                            e.entity + "'");
    }
    if (kb.index_.count(canonical)) {
      throw ValidationError("knowledge base: duplicate surface form '" +
                            canonical + "'");
    }
    kb.index_.emplace(canonical, kb.entries_.size());
    Surface s;
    s.tokens = Vocabulary::tokenize(canonical);
    s.canonical = canonical;
    kb.surfaces_.push_back(std::move(s));
    kb.entries_.push_back(std::move(e));
  }
  // Longest surface first so the matcher tries the most specific span.
  std::sort(kb.surfaces_.begin(), kb.surfaces_.end(),
            [](const Surface& a, const Surface& b) {
              if (a.tokens.size() != b.tokens.size()) {
                return a.tokens.size() > b.tokens.size();
              }
              return a.canonical < b.canonical;
            });
  return kb;
}

KnowledgeBase KnowledgeBase::load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open knowledge base: " + path);
  std::vector<KnowledgeEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": malformed JSON line");
    }
    try {
      entries.push_back({j.at("entity").get<std::string>(),
                         j.at("description").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " +
                            e.what());
    }
  }
  return from_entries(std::move(entries));
}

void KnowledgeBase::save_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot open knowledge base for writing: " + path);
  }
  for (const auto& e : entries_) {
    out << nlohmann::json{{"entity", e.entity},
                          {"description", e.description}}
               .dump()
        << '\n';
  }
}

const std::string* KnowledgeBase::description(
    const std::string& surface) const {
  auto it = index_.find(fold(surface));
  return it == index_.end() ? nullptr : &entries_[it->second].description;
}

std::vector<std::string> extract_entities(const std::string& post_text,
                                          const KnowledgeBase& kb) {
  const auto tokens = Vocabulary::tokenize(post_text);
  std::vector<std::string> found;
  std::unordered_set<std::string> seen;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const KnowledgeBase::Surface* best = nullptr;
    for (const auto& s : kb.surfaces()) {
      if (s.tokens.size() > tokens.size() - i) continue;
      if (std::equal(s.tokens.begin(), s.tokens.end(), tokens.begin() + i)) {
        best = &s;
        break;  // surfaces are longest-first
      }
    }
    if (best) {
      if (seen.insert(best->canonical).second) {
        found.push_back(best->canonical);
      }
      i += best->tokens.size();
    } else {
      ++i;
    }
  }
  return found;
}

std::string summarize_descriptions(const std::vector<std::string>& entities,
                                   const KnowledgeBase& kb,
                                   int target_len_tokens) {
  if (entities.empty()) {
    throw ArgumentError("summarize_descriptions: no entities matched");
  }
  if (target_len_tokens < 1) {
    throw ArgumentError("summarize_descriptions: target length must be >= 1");
  }
  std::vector<std::vector<std::string>> sentences;
  for (const auto& e : entities) {
    const std::string* desc = kb.description(e);
    if (!desc) {
      throw ArgumentError("entity '" + e + "' is not in the knowledge base");
    }
    for (auto& s : sentence_tokens(*desc)) sentences.push_back(std::move(s));
  }
  if (sentences.empty()) {
    throw ContractViolation("descriptions produced no sentences");
  }

  const int min_len =
      static_cast<int>(std::ceil(0.75 * target_len_tokens));
  const int max_len =
      static_cast<int>(std::floor(1.25 * target_len_tokens));

  std::vector<std::string> out;
  std::size_t next = 0;
  while (static_cast<int>(out.size()) < min_len) {
    const auto& sentence = sentences[next % sentences.size()];
    ++next;
    if (static_cast<int>(out.size() + sentence.size()) > max_len) {
      // Keep the band even when one sentence is too long: hard-truncate.
      for (const auto& tok : sentence) {
        if (static_cast<int>(out.size()) >= max_len) break;
        out.push_back(tok);
      }
      break;
    }
    out.insert(out.end(), sentence.begin(), sentence.end());
  }
  return join_tokens(out, 0, out.size());
}

std::vector<KnowledgeSample> build_knowledge_dataset(
    const std::vector<PostRecord>& posts, const KnowledgeBase& kb) {
  instrument::increment("knowledge.build");
  if (kb.empty()) {
    throw ArgumentError("build_knowledge_dataset: empty knowledge base");
  }
  const double mean_len = mean_comment_token_length(posts);
  const int target = std::max(1, static_cast<int>(std::lround(mean_len)));
  std::vector<KnowledgeSample> samples;
  for (const auto& post : posts) {
    auto entities = extract_entities(post.text, kb);
    if (entities.empty()) continue;
    KnowledgeSample s;
    s.post_id = post.id;
    s.source_post_text = post.text;
    s.entities = entities;
    s.comment = summarize_descriptions(entities, kb, target);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace redkit
