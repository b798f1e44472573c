#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dcpl {

enum class Granularity { Corpus, Sentence };

Granularity granularity_from_string(std::string_view name);
std::string_view to_string(Granularity granularity);

// Quality scores keyed by (checkpoint, sentence id); corpus-level tables use
// the sentence id "*" exclusively.
struct ScoreTable {
  Granularity granularity = Granularity::Corpus;
  std::map<std::pair<int, std::string>, double> entries;

  std::vector<int> checkpoints() const;
  std::vector<std::string> sentence_ids() const;
  double at(int checkpoint, const std::string& sentence_id) const;
};

ScoreTable load_scores(const std::filesystem::path& path);
void save_scores(const ScoreTable& table, const std::filesystem::path& path);

// Corpus BLEU-4 on token ids, percent scale. Without smoothing any empty
// n-gram precision zeroes the score; the +1 flag smooths every order.
double bleu_corpus(const std::vector<std::vector<int>>& hypotheses,
                   const std::vector<std::vector<int>>& references, bool smooth = false);

// Character-level F-score over the rendered id sequences, percent scale.
double chrf_sentence(const std::string& hypothesis, const std::string& reference, int n = 6,
                     double beta = 2.0);

// Space-separated decimal rendering used to feed token ids to chrf_sentence.
std::string render_tokens(const std::vector<int>& ids);

}  // namespace dcpl
