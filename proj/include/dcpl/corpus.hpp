#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dcpl {

struct Sentence {
  std::string id;
  std::vector<int> src_ids;
  std::vector<int> tgt_ids;
};

struct Corpus {
  std::vector<Sentence> sentences;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
  const Sentence& operator[](std::size_t i) const { return sentences[i]; }
};

Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Synthetic corpus for round trips and end-to-end runs. Token ids are drawn
// from [1, vocab_size) so the reserved eos id never appears inside a sentence.
Corpus random_corpus(int num_sentences, int min_len, int max_len, int vocab_size,
                     std::uint64_t seed);

}  // namespace dcpl
