#include <doctest.h>

#include <algorithm>
#include <set>

#include "redkit/knowledge.hpp"
#include "redkit/vocab.hpp"

using namespace redkit;

namespace {

KnowledgeBase demo_kb() {
  return KnowledgeBase::from_entries({
      {"york", "York is an old walled city. It sits on the river Ouse."},
      {"new york", "New York is a large city. Many people live there. It "
                   "hosts global institutions."},
      {"ouse", "The Ouse is a river. It flows through the city."},
  });
}

}  // namespace

TEST_SUITE_BEGIN("knowledge");

TEST_CASE("knowledge base validation") {
  CHECK_THROWS_AS(
      KnowledgeBase::from_entries({{"a", "x"}, {"A", "y"}}),  // case-folded dup
      ValidationError);
  CHECK_THROWS_AS(KnowledgeBase::from_entries({{"", "x"}}), ValidationError);
  CHECK_THROWS_AS(KnowledgeBase::from_entries({{"a", ""}}), ValidationError);

  KnowledgeBase kb = demo_kb();
  CHECK(kb.size() == 3);
  CHECK(kb.description("YORK") != nullptr);
  CHECK(kb.description("paris") == nullptr);
}

TEST_CASE("entity extraction: no match, single match, longest match") {
  KnowledgeBase kb = demo_kb();

  CHECK(extract_entities("nothing to see here", kb).empty());

  auto single = extract_entities("the walls of york are famous", kb);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == "york");

  // Overlapping forms: "new york" wins over "york" at the same span.
  auto longest = extract_entities("I moved to New York last year", kb);
  REQUIRE(longest.size() == 1);
  CHECK(longest[0] == "new york");

  // Exhaustive span oracle for the same sentence: every KB surface form
  // that appears as a token span, with longer spans shadowing shorter ones
  // at the same start.
  auto tokens = Vocabulary::tokenize("I moved to New York last year");
  std::set<std::string> oracle;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t best_len = 0;
    std::string best;
    for (const auto& s : kb.surfaces()) {
      if (s.tokens.size() <= tokens.size() - i &&
          std::equal(s.tokens.begin(), s.tokens.end(), tokens.begin() + i) &&
          s.tokens.size() > best_len) {
        best_len = s.tokens.size();
        best = s.canonical;
      }
    }
    if (best_len > 0) {
      oracle.insert(best);
      i += best_len;
    } else {
      ++i;
    }
  }
  CHECK(oracle == std::set<std::string>(longest.begin(), longest.end()));

  // Non-overlapping left-to-right: after consuming "new york", the
  // standalone "york" later still matches.
  auto two = extract_entities("new york and then york again by the ouse", kb);
  REQUIRE(two.size() == 3);
  CHECK(two[0] == "new york");
  CHECK(two[1] == "york");
  CHECK(two[2] == "ouse");
}

TEST_CASE("summaries are deterministic and land in the length band") {
  KnowledgeBase kb = demo_kb();

  // One entity whose description already fits the band is kept as-is.
  const std::string once = summarize_descriptions({"ouse"}, kb, 10);
  const std::string again = summarize_descriptions({"ouse"}, kb, 10);
  CHECK(once == again);
  const auto n = Vocabulary::tokenize(once).size();
  CHECK(n >= 8);   // ceil(0.75 * 10)
  CHECK(n <= 12);  // floor(1.25 * 10)

  // Two entities with a target wide enough that both descriptions land in
  // the output, still inside the band.
  const std::string both = summarize_descriptions({"york", "ouse"}, kb, 22);
  const auto toks = Vocabulary::tokenize(both);
  CHECK(toks.size() >= 17);
  CHECK(toks.size() <= 27);
  bool from_first = false, from_second = false;
  for (const auto& t : toks) {
    if (t == "walled" || t == "york") from_first = true;
    if (t == "flows" || t == "ouse") from_second = true;
  }
  CHECK(from_first);
  CHECK(from_second);

  CHECK_THROWS_AS(summarize_descriptions({}, kb, 10), ArgumentError);
}

TEST_CASE("no hallucination: summary words come from the descriptions") {
  KnowledgeBase kb = demo_kb();
  std::set<std::string> source_words;
  for (const auto& e : kb.entries()) {
    for (const auto& t : Vocabulary::tokenize(e.description)) {
      source_words.insert(t);
    }
  }
  for (int target = 4; target <= 30; ++target) {
    const std::string s =
        summarize_descriptions({"new york", "york", "ouse"}, kb, target);
    for (const auto& t : Vocabulary::tokenize(s)) {
      CHECK(source_words.count(t) == 1);
    }
  }
}

TEST_CASE("build_knowledge_dataset over posts") {
  KnowledgeBase kb = demo_kb();

  std::vector<PostRecord> posts;
  PostRecord a;
  a.id = "a";
  a.text = "traffic chaos in new york today";
  a.comments = {"wow that is wild", "hope everyone is ok now"};
  PostRecord b;
  b.id = "b";
  b.text = "sunny weather expected all week";
  b.comments = {"nice one", "great news for the weekend"};
  posts = {a, b};

  auto samples = build_knowledge_dataset(posts, kb);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].post_id == "a");
  REQUIRE(samples[0].entities.size() == 1);
  CHECK(samples[0].entities[0] == "new york");
  CHECK_FALSE(samples[0].comment.empty());

  // Disjoint KB: nothing to build.
  KnowledgeBase other = KnowledgeBase::from_entries({{"mars", "A planet."}});
  CHECK(build_knowledge_dataset(posts, other).empty());

  // Each post matches exactly one entity: one sample per post.
  PostRecord c = b;
  c.id = "c";
  c.text = "the ouse flooded again";
  auto all = build_knowledge_dataset({a, c}, kb);
  CHECK(all.size() == 2);
}

TEST_CASE("determinism: equal inputs give identical datasets") {
  KnowledgeBase kb = demo_kb();
  PostRecord a;
  a.id = "a";
  a.text = "new york and the ouse";
  a.comments = {"some comment tokens here", "and a few more words"};
  auto s1 = build_knowledge_dataset({a}, kb);
  auto s2 = build_knowledge_dataset({a}, kb);
  REQUIRE(s1.size() == s2.size());
  CHECK(s1[0].comment == s2[0].comment);
  CHECK(s1[0].entities == s2[0].entities);
}

TEST_SUITE_END();
