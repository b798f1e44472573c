#include "dcpl/corpus.hpp"

#include <fstream>
#include <json.hpp>
#include <unordered_set>

#include "dcpl/common.hpp"
#include "dcpl/errors.hpp"

namespace dcpl {

using json = nlohmann::ordered_json;

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open corpus file: " + path.string());

  Corpus corpus;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row = json::parse(line, nullptr, false);
    std::string where = "line " + std::to_string(line_no);
    if (row.is_discarded() || !row.is_object()) {
      fail(ErrorKind::MalformedRow, where + ": not a JSON object");
    }
    Sentence s;
    try {
      s.id = row.at("id").get<std::string>();
      s.src_ids = row.at("src_ids").get<std::vector<int>>();
      s.tgt_ids = row.at("tgt_ids").get<std::vector<int>>();
    } catch (const json::exception& e) {
      fail(ErrorKind::MalformedRow, where + ": " + e.what());
    }
    if (s.src_ids.empty() || s.tgt_ids.empty()) {
      fail(ErrorKind::MalformedRow, where + " (id " + s.id + "): empty token sequence");
    }
    if (!seen.insert(s.id).second) {
      fail(ErrorKind::DuplicateKey, "duplicate sentence id: " + s.id);
    }
    corpus.sentences.push_back(std::move(s));
  }
  if (corpus.empty()) fail(ErrorKind::EmptyCorpus, "corpus has no sentences: " + path.string());
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());
  for (const auto& s : corpus.sentences) {
    json row;
    row["id"] = s.id;
    row["src_ids"] = s.src_ids;
    row["tgt_ids"] = s.tgt_ids;
    out << row.dump() << "\n";
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

Corpus random_corpus(int num_sentences, int min_len, int max_len, int vocab_size,
                     std::uint64_t seed) {
  if (num_sentences <= 0 || min_len <= 0 || max_len < min_len || vocab_size < 2) {
    fail(ErrorKind::InvalidArgument, "bad random corpus parameters");
  }
  Rng rng(seed);
  Corpus corpus;
  for (int i = 0; i < num_sentences; ++i) {
    Sentence s;
    s.id = "s" + std::to_string(i + 1);
    int src_len = static_cast<int>(rng.uniform_int(min_len, max_len));
    int tgt_len = static_cast<int>(rng.uniform_int(min_len, max_len));
    for (int t = 0; t < src_len; ++t) {
      s.src_ids.push_back(static_cast<int>(rng.uniform_int(1, vocab_size - 1)));
    }
    for (int t = 0; t < tgt_len; ++t) {
      s.tgt_ids.push_back(static_cast<int>(rng.uniform_int(1, vocab_size - 1)));
    }
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace dcpl
