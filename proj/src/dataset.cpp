#include "redkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "redkit/vocab.hpp"

namespace redkit {

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  throw ContractViolation("unknown split");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid" || name == "validation") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw ValidationError("unknown split name: " + name);
}

std::vector<PostRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset: " + path);
  std::vector<PostRecord> records;
  std::string line;
  int line_no = 0;
  std::unordered_map<std::string, int> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr,
                                             /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": malformed JSON line");
    }
    try {
      PostRecord r;
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.comments = j.value("comments", std::vector<std::string>{});
      r.label = j.at("label").get<int>();
      r.split = split_from_name(j.at("split").get<std::string>());
      if (r.label < 0) {
        throw ValidationError("negative label");
      }
      auto [it, inserted] = seen_ids.emplace(r.id, line_no);
      if (!inserted) {
        throw ValidationError("duplicate id '" + r.id + "' (first seen at line " +
                              std::to_string(it->second) + ")");
      }
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " +
                            e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " +
                            e.what());
    }
  }
  return records;
}

void save_dataset(const std::string& path,
                  const std::vector<PostRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open dataset for writing: " + path);
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id},
                     {"text", r.text},
                     {"comments", r.comments},
                     {"label", r.label},
                     {"split", split_name(r.split)}};
    out << j.dump() << '\n';
  }
}

DatasetStats dataset_stats(const std::vector<PostRecord>& records) {
  DatasetStats stats;
  auto account = [](SplitStats& s, const PostRecord& r) {
    s.avg_comments = (s.avg_comments * s.posts + r.comments.size()) /
                     (s.posts + 1);
    ++s.posts;
  };
  int max_label = -1;
  for (const auto& r : records) {
    switch (r.split) {
      case Split::kTrain: account(stats.train, r); break;
      case Split::kValid: account(stats.valid, r); break;
      case Split::kTest: account(stats.test, r); break;
    }
    max_label = std::max(max_label, r.label);
  }
  stats.n_classes = max_label + 1;
  return stats;
}

std::vector<PostRecord> split_of(const std::vector<PostRecord>& records,
                                 Split split) {
  std::vector<PostRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

double mean_comment_token_length(const std::vector<PostRecord>& records) {
  std::size_t comments = 0, tokens = 0;
  for (const auto& r : records) {
    for (const auto& c : r.comments) {
      ++comments;
      tokens += Vocabulary::tokenize(c).size();
    }
  }
  return comments == 0 ? 0.0 : double(tokens) / double(comments);
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config) {
  if (config.posts < 1 || config.comments_per_post < 0 ||
      config.vocab_size < 4 * config.n_classes || config.n_classes < 2) {
    throw ArgumentError("synthetic corpus: invalid counts");
  }
  if (config.class_separation <= 0.0 || config.class_separation > 1.0) {
    throw ArgumentError("class_separation must lie in (0,1]");
  }
  std::mt19937_64 rng(config.seed);

  // Vocabulary pools. 40% shared, the rest split evenly across classes.
  const int shared_count = std::max(4, config.vocab_size * 2 / 5);
  const int per_class =
      std::max(4, (config.vocab_size - shared_count) / config.n_classes);
  std::vector<std::string> shared_pool;
  for (int i = 0; i < shared_count; ++i) {
    shared_pool.push_back("w" + std::to_string(i));
  }
  std::vector<std::vector<std::string>> class_pool(config.n_classes);
  for (int c = 0; c < config.n_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      class_pool[c].push_back("c" + std::to_string(c) + "w" +
                              std::to_string(i));
    }
  }
  // Comment-only style tokens, identical across classes.
  std::vector<std::string> style_pool;
  for (int i = 0; i < 8; ++i) style_pool.push_back("sty" + std::to_string(i));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&rng](const std::vector<std::string>& pool) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng)];
  };
  // A flavored token names its own class with probability 0.5 + 0.5*s^2 and
  // a contaminating class otherwise, so separation 1 means disjoint
  // vocabularies while mid-range values stay genuinely ambiguous.
  const double s = config.class_separation;
  const double own_rate = 0.5 + 0.5 * s * s;
  auto flavored_class = [&](int cls) {
    if (unit(rng) < own_rate) return cls;
    std::uniform_int_distribution<int> other(0, config.n_classes - 2);
    int k = other(rng);
    if (k >= cls) ++k;
    return k;
  };
  auto content_token = [&](int cls) {
    if (unit(rng) < s) return draw(class_pool[flavored_class(cls)]);
    return draw(shared_pool);
  };

  // Knowledge base: a few entities per class described in that class's
  // vocabulary, so entity summaries carry label-relevant content.
  SyntheticCorpus corpus;
  const int entities_per_class = 3;
  std::vector<std::vector<std::string>> entity_names(config.n_classes);
  for (int c = 0; c < config.n_classes; ++c) {
    for (int k = 0; k < entities_per_class; ++k) {
      std::string name = "ent" + std::to_string(c) + "x" + std::to_string(k);
      entity_names[c].push_back(name);
      std::vector<std::string> desc;
      const int desc_len = 12;
      for (int t = 0; t < desc_len; ++t) desc.push_back(content_token(c));
      // Sentence boundaries let the summarizer truncate cleanly.
      std::string text;
      for (int t = 0; t < desc_len; ++t) {
        if (!text.empty()) text += ' ';
        text += desc[t];
        if (t % 4 == 3) text += '.';
      }
      corpus.knowledge.push_back({name, text});
    }
  }

  std::uniform_int_distribution<int> post_len(8, 12);
  std::uniform_int_distribution<int> comment_len(5, 9);

  const int n_valid = static_cast<int>(config.posts * config.valid_fraction);
  const int n_test = static_cast<int>(config.posts * config.test_fraction);
  const int n_train = config.posts - n_valid - n_test;

  for (int i = 0; i < config.posts; ++i) {
    PostRecord r;
    r.id = "p" + std::to_string(i);
    r.label = i % config.n_classes;
    if (i < n_train) {
      r.split = Split::kTrain;
    } else if (i < n_train + n_valid) {
      r.split = Split::kValid;
    } else {
      r.split = Split::kTest;
    }

    std::vector<std::string> tokens;
    const int lp = post_len(rng);
    for (int t = 0; t < lp; ++t) tokens.push_back(content_token(r.label));
    if (unit(rng) < config.kb_entity_rate) {
      std::uniform_int_distribution<int> pos(0, lp - 1);
      std::uniform_int_distribution<int> which(0, entities_per_class - 1);
      tokens[pos(rng)] = entity_names[r.label][which(rng)];
    }
    r.text = join(tokens);

    const double comment_flavored = std::min(1.0, 1.5 * s);
    for (int j = 0; j < config.comments_per_post; ++j) {
      std::vector<std::string> ct;
      const int lc = comment_len(rng);
      // Comment quality decays with position: early comments react to the
      // post, later ones drift into off-topic chatter. Truncating a comment
      // list therefore keeps its most informative prefix.
      const double drift =
          config.comments_per_post <= 1
              ? 0.0
              : double(j) / double(config.comments_per_post - 1);
      const double p_noise = std::min(
          0.95, config.noise_comment_rate * 2.8 * std::pow(drift, 1.3));
      // Junk comes in three flavors: parrots that echo the post's own
      // words (and so sit closest to it in embedding space), off-topic
      // chatter, and drift into an unrelated discussion's vocabulary.
      enum { kSignal, kParrot, kOffTopic, kCrossClass } kind = kSignal;
      if (unit(rng) < p_noise) {
        const double u = unit(rng);
        kind = u < 0.55 ? kParrot : (u < 0.8 ? kOffTopic : kCrossClass);
      }
      int drift_class = r.label;
      if (kind == kCrossClass && config.n_classes > 1) {
        std::uniform_int_distribution<int> other(0, config.n_classes - 2);
        drift_class = other(rng);
        if (drift_class >= r.label) ++drift_class;
      }
      for (int t = 0; t < lc; ++t) {
        if (unit(rng) < 0.25) {
          ct.push_back(draw(style_pool));
        } else if (kind == kParrot) {
          ct.push_back(draw(tokens));
        } else if (kind == kOffTopic) {
          ct.push_back(draw(shared_pool));
        } else if (kind == kCrossClass) {
          ct.push_back(draw(class_pool[drift_class]));
        } else if (unit(rng) < comment_flavored) {
          ct.push_back(draw(class_pool[flavored_class(r.label)]));
        } else {
          ct.push_back(draw(shared_pool));
        }
      }
      r.comments.push_back(join(ct));
    }
    corpus.posts.push_back(std::move(r));
  }
  return corpus;
}

}  // namespace redkit
