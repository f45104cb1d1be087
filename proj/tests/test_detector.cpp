#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "redkit/dataset.hpp"
#include "redkit/detector.hpp"

using namespace redkit;

namespace {

// Confusion-matrix oracle computed by independent brute-force counting.
struct OracleMetrics {
  double accuracy, macro_p, macro_r, macro_f1;
};

OracleMetrics oracle_metrics(const std::vector<int>& labels,
                             const std::vector<int>& preds, int classes) {
  int correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == preds[i]) ++correct;
  }
  OracleMetrics m{double(correct) / labels.size(), 0, 0, 0};
  for (int c = 0; c < classes; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool is_c = labels[i] == c, said_c = preds[i] == c;
      if (is_c && said_c) ++tp;
      if (!is_c && said_c) ++fp;
      if (is_c && !said_c) ++fn;
    }
    const double p = (tp + fp) == 0 ? 0.0 : double(tp) / (tp + fp);
    const double r = (tp + fn) == 0 ? 0.0 : double(tp) / (tp + fn);
    const double f1 = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    m.macro_p += p / classes;
    m.macro_r += r / classes;
    m.macro_f1 += f1 / classes;
  }
  return m;
}

// Exhaustive pair-counting AUC oracle.
double oracle_auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / double(pairs);
}

std::vector<PostRecord> separable_records(int n, Split split, int offset) {
  // Two classes with distinct vocabulary; comments echo the post class.
  std::vector<PostRecord> out;
  for (int i = 0; i < n; ++i) {
    PostRecord r;
    r.id = split_name(split) + std::to_string(i + offset);
    r.label = i % 2;
    r.split = split;
    if (r.label == 0) {
      r.text = "sunny calm weather report today";
      r.comments = {"lovely calm day", "nice weather indeed"};
    } else {
      r.text = "storm flood alarm danger tonight";
      r.comments = {"stay safe from the storm", "flood danger is real"};
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("detector");

TEST_CASE("auc matches hand counts and handles ties") {
  CHECK(compute_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) ==
        doctest::Approx(0.75).epsilon(1e-15));

  // All-equal scores: pure ties, 0.5.
  CHECK(compute_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) ==
        doctest::Approx(0.5).epsilon(1e-15));

  // Perfect separation.
  CHECK(compute_auc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 1.0);

  CHECK_THROWS_AS(compute_auc({0.1, 0.2}, {1, 1}), DegenerateInputError);
}

TEST_CASE("auc equals the exhaustive pair-counting oracle") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> size(2, 50);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> bucket(0, 7);
  int done = 0;
  while (done < 300) {
    const int n = size(rng);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      scores[i] = bucket(rng) / 7.0;  // deliberately tie-heavy
      labels[i] = coin(rng);
      pos += labels[i];
    }
    if (pos == 0 || pos == n) continue;
    ++done;
    CHECK(compute_auc(scores, labels) == oracle_auc(scores, labels));
  }
}

TEST_CASE("metrics equal the confusion-matrix oracle exactly") {
  // Documented example: TP=2, FP=1, FN=1, TN=2 for the positive class.
  {
    std::vector<int> labels{1, 1, 1, 0, 0, 0};
    std::vector<int> preds{1, 1, 0, 1, 0, 0};
    std::vector<std::vector<double>> scores;
    for (int p : preds) {
      scores.push_back({p == 0 ? 0.9 : 0.1, p == 1 ? 0.9 : 0.1});
    }
    auto m = compute_metrics(labels, preds, scores);
    CHECK(m.accuracy == doctest::Approx(4.0 / 6).epsilon(1e-15));
    CHECK(m.macro_f1 == doctest::Approx(2.0 / 3).epsilon(1e-15));
  }

  std::mt19937_64 rng(43);
  std::uniform_int_distribution<int> size(2, 50);
  std::uniform_int_distribution<int> n_classes(2, 4);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = size(rng);
    const int classes = n_classes(rng);
    std::uniform_int_distribution<int> cls(0, classes - 1);
    std::vector<int> labels(n), preds(n);
    std::vector<std::vector<double>> scores(n);
    bool two_classes = false;
    for (int i = 0; i < n; ++i) {
      labels[i] = cls(rng);
      preds[i] = cls(rng);
      if (labels[i] != labels[0]) two_classes = true;
      scores[i].assign(classes, 0.0);
      scores[i][preds[i]] = 1.0;
    }
    if (!two_classes) continue;
    auto mine = compute_metrics(labels, preds, scores);
    auto oracle = oracle_metrics(labels, preds, classes);
    CHECK(mine.accuracy == oracle.accuracy);
    CHECK(mine.macro_precision == doctest::Approx(oracle.macro_p).epsilon(1e-15));
    CHECK(mine.macro_recall == doctest::Approx(oracle.macro_r).epsilon(1e-15));
    CHECK(mine.macro_f1 == doctest::Approx(oracle.macro_f1).epsilon(1e-15));
  }
}

TEST_CASE("perfect predictions score one on every metric") {
  std::vector<int> labels{0, 1, 0, 1, 1, 0};
  std::vector<std::vector<double>> scores;
  for (int y : labels) {
    scores.push_back({y == 0 ? 0.99 : 0.01, y == 1 ? 0.99 : 0.01});
  }
  auto m = compute_metrics(labels, labels, scores);
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_f1 == 1.0);
  CHECK(m.auc == 1.0);
  CHECK(m.macro_precision == 1.0);
  CHECK(m.macro_recall == 1.0);
}

TEST_CASE("predict contract") {
  std::mt19937_64 rng(7);
  Vocabulary vocab = Vocabulary::build(
      {"sunny calm weather report today storm flood alarm danger tonight "
       "lovely nice day stay safe real indeed from the is"});
  DetectorConfig cfg;
  cfg.model_dim = 16;
  cfg.ffn_dim = 32;
  DetectorParams params = DetectorParams::init(vocab, cfg, rng);

  auto probs = predict("sunny calm weather", {"nice day"}, params);
  REQUIRE(probs.size() == 2);
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0).epsilon(1e-12));
  auto again = predict("sunny calm weather", {"nice day"}, params);
  CHECK(probs == again);

  CHECK_THROWS_AS(predict("sunny calm weather", {}, params), ArgumentError);

  // Scaling the classifier by a positive factor preserves the argmax.
  const int argmax_before = static_cast<int>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
  for (std::size_t i = 0; i < params.classifier.numel(); ++i) {
    params.classifier.data()[i] *= 3.0;
  }
  for (std::size_t i = 0; i < params.classifier_bias.numel(); ++i) {
    params.classifier_bias.data()[i] *= 3.0;
  }
  auto scaled = predict("sunny calm weather", {"nice day"}, params);
  const int argmax_after = static_cast<int>(
      std::max_element(scaled.begin(), scaled.end()) - scaled.begin());
  CHECK(argmax_before == argmax_after);
}

TEST_CASE("training separable data reaches high accuracy and stops properly") {
  auto train = separable_records(40, Split::kTrain, 0);
  auto valid = separable_records(10, Split::kValid, 100);

  std::vector<std::string> texts;
  for (const auto& r : train) {
    texts.push_back(r.text);
    for (const auto& c : r.comments) texts.push_back(c);
  }
  Vocabulary vocab = Vocabulary::build(texts);

  DetectorConfig cfg;
  cfg.model_dim = 16;
  cfg.ffn_dim = 32;
  cfg.lr = 3e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 40;
  cfg.patience = 10;
  cfg.seed = 3;
  auto trained = train_detector(train, valid, vocab, cfg);

  // Returned checkpoint's validation F1 equals the history maximum.
  double best = 0.0;
  for (const auto& e : trained.history) best = std::max(best, e.valid_macro_f1);
  CHECK(trained.best_valid_macro_f1 == best);

  // When stopping triggered by patience, at least patience+1 epochs ran.
  if (static_cast<int>(trained.history.size()) < cfg.max_epochs) {
    CHECK(trained.history.size() >=
          static_cast<std::size_t>(cfg.patience + 1));
  }

  auto report = evaluate(separable_records(10, Split::kTest, 200),
                         trained.params, 0, nullptr);
  CHECK(report.accuracy > 0.95);

  // Missing generator with requested generated comments is an error.
  CHECK_THROWS_AS(
      evaluate(separable_records(4, Split::kTest, 300), trained.params, 3,
               nullptr),
      ArgumentError);
}

TEST_CASE("detector checkpoint round trip") {
  std::mt19937_64 rng(19);
  Vocabulary vocab =
      Vocabulary::build({"alpha beta gamma delta epsilon zeta eta theta"});
  DetectorConfig cfg;
  cfg.model_dim = 8;
  cfg.ffn_dim = 16;
  DetectorParams params = DetectorParams::init(vocab, cfg, rng);
  const std::string path = "test_detector.ckpt";
  params.save(path);
  DetectorParams loaded = DetectorParams::load(path);

  auto a = predict("alpha beta", {"gamma delta"}, params);
  auto b = predict("alpha beta", {"gamma delta"}, loaded);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  std::remove(path.c_str());
}

TEST_SUITE_END();
