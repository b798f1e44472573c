#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dcpl/common.hpp"
#include "dcpl/errors.hpp"
#include "dcpl/scoring.hpp"
#include "helpers.hpp"

using namespace dcpl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("granularity names") {
  CHECK(granularity_from_string("corpus") == Granularity::Corpus);
  CHECK(granularity_from_string("sentence") == Granularity::Sentence);
  CHECK(to_string(Granularity::Corpus) == "corpus");
  CHECK_THROWS_AS(granularity_from_string("document"), Error);
}

TEST_CASE("score table lookups") {
  ScoreTable t;
  t.granularity = Granularity::Sentence;
  t.entries[{0, "a"}] = 1.5;
  t.entries[{0, "b"}] = 2.5;
  t.entries[{1, "a"}] = 3.5;
  t.entries[{1, "b"}] = 4.5;
  CHECK(t.checkpoints() == std::vector<int>{0, 1});
  CHECK(t.sentence_ids() == std::vector<std::string>{"a", "b"});
  CHECK(t.at(1, "a") == 3.5);
  try {
    t.at(2, "a");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MisalignedCheckpoints);
  }
}

TEST_CASE("score files round trip byte for byte") {
  ScoreTable t;
  t.granularity = Granularity::Corpus;
  t.entries[{0, "*"}] = 17.25;
  t.entries[{1, "*"}] = 18.0 + 1.0 / 3.0;
  t.entries[{2, "*"}] = 0.1;
  fs::path path = testutil::unique_path("scores", ".csv");
  save_scores(t, path);

  ScoreTable loaded = load_scores(path);
  CHECK(loaded.granularity == Granularity::Corpus);
  REQUIRE(loaded.entries.size() == 3);
  CHECK(loaded.at(1, "*") == t.at(1, "*"));  // shortest round-trip rendering
  CHECK(loaded.at(2, "*") == 0.1);

  fs::path second = testutil::unique_path("scores", ".csv");
  save_scores(loaded, second);
  CHECK(slurp(path) == slurp(second));
  fs::remove(path);
  fs::remove(second);
}

TEST_CASE("score file parsing errors") {
  fs::path path = testutil::unique_path("badscores", ".csv");

  SUBCASE("wrong header") {
    spit(path, "ckpt,id,value\n0,*,1.0\n");
    try {
      load_scores(path);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MalformedRow);
    }
  }

  SUBCASE("non numeric score") {
    spit(path, "checkpoint,sentence_id,score\n0,*,high\n");
    try {
      load_scores(path);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MalformedRow);
    }
  }

  SUBCASE("wrong field count") {
    spit(path, "checkpoint,sentence_id,score\n0,*\n");
    try {
      load_scores(path);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MalformedRow);
    }
  }

  SUBCASE("mixed granularity") {
    spit(path, "checkpoint,sentence_id,score\n0,*,1.0\n0,s1,2.0\n");
    try {
      load_scores(path);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MalformedRow);
    }
  }

  SUBCASE("duplicate key") {
    spit(path, "checkpoint,sentence_id,score\n0,s1,1.0\n0,s1,2.0\n");
    try {
      load_scores(path);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DuplicateKey);
    }
  }

  SUBCASE("empty table") {
    spit(path, "checkpoint,sentence_id,score\n");
    try {
      load_scores(path);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyCorpus);
    }
  }

  fs::remove(path);
}

TEST_CASE("bleu on pinned examples") {
  using Seqs = std::vector<std::vector<int>>;

  SUBCASE("identical corpus scores 100") {
    Seqs refs{{1, 2, 3, 4, 5}, {6, 7, 8, 9}};
    CHECK(bleu_corpus(refs, refs) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(bleu_corpus(refs, refs, true) <= 100.0);  // smoothing only shrinks
  }

  SUBCASE("disjoint tokens") {
    CHECK(bleu_corpus({{1, 1, 1, 1}}, {{2, 2, 2, 2}}) == 0.0);
    // add-one smoothing keeps disjoint output nonzero: precisions 1/5, 1/4, 1/3, 1/2
    double smoothed = 100.0 * std::pow(1.0 / 120.0, 0.25);
    CHECK(bleu_corpus({{1, 1, 1, 1}}, {{2, 2, 2, 2}}, true) ==
          doctest::Approx(smoothed).epsilon(1e-12));
  }

  SUBCASE("single mismatched token") {
    Seqs hyp{{1, 2, 3, 4}};
    Seqs ref{{1, 2, 3, 5}};
    CHECK(bleu_corpus(hyp, ref) == 0.0);  // no 4-gram survives
    double want = 100.0 * std::pow((4.0 / 5.0) * (3.0 / 4.0) * (2.0 / 3.0) * (1.0 / 2.0), 0.25);
    CHECK(bleu_corpus(hyp, ref, true) == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("brevity penalty") {
    Seqs hyp{{1, 2, 3, 4}};
    Seqs ref{{1, 2, 3, 4, 5, 6}};
    double want = 100.0 * std::exp(1.0 - 6.0 / 4.0);  // all precisions are 1
    CHECK(bleu_corpus(hyp, ref) == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("clipping caps repeated n-grams") {
    Seqs hyp{{1, 1, 1, 1}};
    Seqs ref{{1, 1}};
    double want =
        100.0 * std::pow((3.0 / 5.0) * (2.0 / 4.0) * (1.0 / 3.0) * (1.0 / 2.0), 0.25);
    CHECK(bleu_corpus(hyp, ref, true) == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("empty hypotheses") {
    CHECK(bleu_corpus({{}, {}}, {{1, 2}, {3}}) == 0.0);
    Seqs part{{}, {1, 2, 3, 4}};
    Seqs refs{{5, 6}, {1, 2, 3, 4}};
    CHECK(bleu_corpus(part, refs) > 0.0);
  }

  SUBCASE("validation") {
    CHECK_THROWS_AS(bleu_corpus({{1}}, {{1}, {2}}), Error);
    try {
      bleu_corpus({}, {});
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyCorpus);
    }
  }
}

TEST_CASE("bleu is invariant under corpus permutation") {
  Rng rng(401);
  std::vector<std::vector<int>> hyps, refs;
  for (int s = 0; s < 10; ++s) {
    int n = 4 + static_cast<int>(rng.uniform_int(std::uint64_t{6}));
    std::vector<int> ref(static_cast<std::size_t>(n));
    for (int& t : ref) t = static_cast<int>(rng.uniform_int(std::int64_t{1}, std::int64_t{9}));
    std::vector<int> hyp = ref;
    if (rng.next_double() < 0.7) hyp[static_cast<std::size_t>(rng.uniform_int(std::uint64_t{hyp.size()}))] = 1;
    hyps.push_back(hyp);
    refs.push_back(ref);
  }
  double base = bleu_corpus(hyps, refs, true);
  CHECK(base >= 0.0);
  CHECK(base <= 100.0);

  std::vector<std::size_t> order(hyps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<int>> h2, r2;
  for (std::size_t i : order) {
    h2.push_back(hyps[i]);
    r2.push_back(refs[i]);
  }
  CHECK(bleu_corpus(h2, r2, true) == base);
}

TEST_CASE("chrf on pinned examples") {
  SUBCASE("identical strings score 100") {
    CHECK(chrf_sentence("1 2 3 4 5 6 7", "1 2 3 4 5 6 7") == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(chrf_sentence("9", "9") == doctest::Approx(100.0).epsilon(1e-12));
  }

  SUBCASE("disjoint strings score 0") {
    CHECK(chrf_sentence("1 1", "2 2") == 0.0);
  }

  SUBCASE("hand-computed partial overlap") {
    // stripped: "12" vs "123"; orders 1..3 participate
    // P = (1 + 1 + 0)/3, R = (2/3 + 1/2 + 0)/3, F2 = 5PR/(4P+R) = 14/33
    double want = 100.0 * 14.0 / 33.0;
    CHECK(chrf_sentence("1 2", "1 2 3") == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("beta weighting favors recall") {
    double balanced = chrf_sentence("1 2", "1 2 3", 6, 1.0);
    double recall_heavy = chrf_sentence("1 2", "1 2 3", 6, 2.0);
    // hypothesis is precise but incomplete: higher beta lowers the score
    CHECK(recall_heavy < balanced);
  }

  SUBCASE("spaces never count as characters") {
    CHECK(chrf_sentence("12", "1 2") == doctest::Approx(100.0).epsilon(1e-12));
  }

  SUBCASE("validation") {
    CHECK_THROWS_AS(chrf_sentence("", "1"), Error);
    CHECK_THROWS_AS(chrf_sentence("1", "  "), Error);
    CHECK_THROWS_AS(chrf_sentence("1", "1", 0), Error);
    CHECK_THROWS_AS(chrf_sentence("1", "1", 6, 0.0), Error);
    try {
      chrf_sentence(" ", "1");
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyInput);
    }
  }
}

TEST_CASE("chrf stays within the percent range") {
  Rng rng(402);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> a(1 + rng.uniform_int(std::uint64_t{8}));
    std::vector<int> b(1 + rng.uniform_int(std::uint64_t{8}));
    for (int& t : a) t = static_cast<int>(rng.uniform_int(std::int64_t{1}, std::int64_t{15}));
    for (int& t : b) t = static_cast<int>(rng.uniform_int(std::int64_t{1}, std::int64_t{15}));
    double f = chrf_sentence(render_tokens(a), render_tokens(b));
    CHECK(f >= 0.0);
    CHECK(f <= 100.0);
    CHECK(chrf_sentence(render_tokens(a), render_tokens(a)) == doctest::Approx(100.0).epsilon(1e-12));
  }
}

TEST_CASE("token rendering") {
  CHECK(render_tokens({1, 22, 3}) == "1 22 3");
  CHECK(render_tokens({7}) == "7");
  CHECK(render_tokens({}) == "");
}

}  // TEST_SUITE
