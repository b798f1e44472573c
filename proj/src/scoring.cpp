#include "dcpl/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "dcpl/common.hpp"
#include "dcpl/errors.hpp"

namespace dcpl {

Granularity granularity_from_string(std::string_view name) {
  if (name == "corpus") return Granularity::Corpus;
  if (name == "sentence") return Granularity::Sentence;
  fail(ErrorKind::InvalidArgument, "unknown granularity: " + std::string(name));
}

std::string_view to_string(Granularity granularity) {
  return granularity == Granularity::Corpus ? "corpus" : "sentence";
}

std::vector<int> ScoreTable::checkpoints() const {
  std::set<int> seen;
  for (const auto& [key, value] : entries) seen.insert(key.first);
  return {seen.begin(), seen.end()};
}

std::vector<std::string> ScoreTable::sentence_ids() const {
  std::set<std::string> seen;
  for (const auto& [key, value] : entries) seen.insert(key.second);
  return {seen.begin(), seen.end()};
}

double ScoreTable::at(int checkpoint, const std::string& sentence_id) const {
  auto it = entries.find({checkpoint, sentence_id});
  if (it == entries.end()) {
    fail(ErrorKind::MisalignedCheckpoints,
         "no score for checkpoint " + std::to_string(checkpoint) + ", sentence " + sentence_id);
  }
  return it->second;
}

ScoreTable load_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open score file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "checkpoint,sentence_id,score") {
    fail(ErrorKind::MalformedRow, "expected header checkpoint,sentence_id,score");
  }
  ScoreTable table;
  bool saw_corpus = false;
  bool saw_sentence = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, ',');
    std::string where = "line " + std::to_string(line_no);
    if (fields.size() != 3) fail(ErrorKind::MalformedRow, where + ": expected 3 fields");
    int checkpoint = 0;
    double score = 0.0;
    try {
      std::size_t used = 0;
      checkpoint = std::stoi(fields[0], &used);
      if (used != fields[0].size()) throw std::invalid_argument(fields[0]);
      score = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument(fields[2]);
    } catch (const std::exception&) {
      fail(ErrorKind::MalformedRow, where + ": non-numeric checkpoint or score");
    }
    if (fields[1] == "*") {
      saw_corpus = true;
    } else {
      saw_sentence = true;
    }
    if (!table.entries.emplace(std::make_pair(checkpoint, fields[1]), score).second) {
      fail(ErrorKind::DuplicateKey,
           where + ": duplicate key (" + fields[0] + ", " + fields[1] + ")");
    }
  }
  if (table.entries.empty()) fail(ErrorKind::EmptyCorpus, "score file has no rows");
  if (saw_corpus && saw_sentence) {
    fail(ErrorKind::MalformedRow, "mixed corpus (*) and sentence rows in one table");
  }
  table.granularity = saw_corpus ? Granularity::Corpus : Granularity::Sentence;
  return table;
}

void save_scores(const ScoreTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());
  out << "checkpoint,sentence_id,score\n";
  for (const auto& [key, value] : table.entries) {
    out << key.first << "," << key.second << "," << format_double(value) << "\n";
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

namespace {

template <typename Seq>
std::map<Seq, long> ngram_counts(const Seq& tokens, std::size_t n) {
  std::map<Seq, long> counts;
  if (tokens.size() >= n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      Seq gram(tokens.begin() + i, tokens.begin() + i + n);
      ++counts[gram];
    }
  }
  return counts;
}

}  // namespace

double bleu_corpus(const std::vector<std::vector<int>>& hypotheses,
                   const std::vector<std::vector<int>>& references, bool smooth) {
  if (hypotheses.size() != references.size()) {
    fail(ErrorKind::LengthMismatch, "hypothesis and reference counts differ");
  }
  if (hypotheses.empty()) fail(ErrorKind::EmptyCorpus, "nothing to score");

  long hyp_len = 0;
  long ref_len = 0;
  long matches[4] = {0, 0, 0, 0};
  long totals[4] = {0, 0, 0, 0};
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    hyp_len += static_cast<long>(hypotheses[s].size());
    ref_len += static_cast<long>(references[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      auto hyp_grams = ngram_counts(hypotheses[s], n);
      auto ref_grams = ngram_counts(references[s], n);
      for (const auto& [gram, count] : hyp_grams) {
        totals[n - 1] += count;
        auto it = ref_grams.find(gram);
        if (it != ref_grams.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;

  double log_precision = 0.0;
  for (int n = 0; n < 4; ++n) {
    double num = static_cast<double>(matches[n]);
    double den = static_cast<double>(totals[n]);
    if (smooth) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0 || den == 0.0) return 0.0;
    log_precision += std::log(num / den) / 4.0;
  }
  double bp = hyp_len >= ref_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_precision);
}

double chrf_sentence(const std::string& hypothesis, const std::string& reference, int n,
                     double beta) {
  if (n < 1 || !(beta > 0.0)) {
    fail(ErrorKind::InvalidArgument, "chrf needs n >= 1 and beta > 0");
  }
  auto strip = [](const std::string& text) {
    std::string out;
    for (char c : text) {
      if (c != ' ') out.push_back(c);
    }
    return out;
  };
  std::string hyp = strip(hypothesis);
  std::string ref = strip(reference);
  if (hyp.empty() || ref.empty()) {
    fail(ErrorKind::EmptyInput, "chrf needs non-empty sequences");
  }

  KahanSum precision_sum;
  KahanSum recall_sum;
  int orders = 0;
  for (int order = 1; order <= n; ++order) {
    auto hyp_grams = ngram_counts(hyp, static_cast<std::size_t>(order));
    auto ref_grams = ngram_counts(ref, static_cast<std::size_t>(order));
    long hyp_total = 0;
    long ref_total = 0;
    long match = 0;
    for (const auto& [gram, count] : hyp_grams) {
      hyp_total += count;
      auto it = ref_grams.find(gram);
      if (it != ref_grams.end()) match += std::min(count, it->second);
    }
    for (const auto& [gram, count] : ref_grams) ref_total += count;
    if (hyp_total == 0 && ref_total == 0) continue;  // both too short for this order
    ++orders;
    precision_sum.add(hyp_total > 0 ? static_cast<double>(match) / hyp_total : 0.0);
    recall_sum.add(ref_total > 0 ? static_cast<double>(match) / ref_total : 0.0);
  }
  double p = precision_sum.value() / orders;
  double r = recall_sum.value() / orders;
  if (p + r == 0.0) return 0.0;
  double b2 = beta * beta;
  return 100.0 * (1.0 + b2) * p * r / (b2 * p + r);
}

std::string render_tokens(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += std::to_string(ids[i]);
  }
  return out;
}

}  // namespace dcpl
