#pragma once

#include <string>
#include <vector>

#include "dcpl/corpus.hpp"
#include "dcpl/decomp_sl.hpp"
#include "dcpl/decomp_tok.hpp"

namespace dcpl {

enum class IndicatorKind { NormRatio, Cosine, Mu };

IndicatorKind indicator_from_string(std::string_view name);
std::string_view to_string(IndicatorKind kind);
const std::vector<IndicatorKind>& all_indicators();

double norm_ratio(const Vec& z, const Vec& e);
double cosine(const Vec& z, const Vec& e);
double importance_mu(const Vec& z, const Vec& e);
double indicator_value(IndicatorKind kind, const Vec& z, const Vec& e);

enum class DecompKind { Sublayer, Tokenwise };

DecompKind decomp_from_string(std::string_view name);
std::string_view to_string(DecompKind kind);
const std::vector<std::string>& decomp_term_names(DecompKind kind);

enum class DecodeMode { Forced, Beam };

DecodeMode mode_from_string(std::string_view name);
std::string_view to_string(DecodeMode mode);

struct PipelineOptions {
  DecompKind decomp = DecompKind::Sublayer;
  DecodeMode mode = DecodeMode::Forced;
  int beam_size = 12;
  int max_len = 0;
  double length_norm = 1.0;
  double tol_a = 1e-8;
  double tol_r = 1e-5;
  int threads = 1;
  bool strict = false;
  TracePrecision precision = TracePrecision::Float64;
};

// Final-layer decomposition of one sentence, reduced to what indicators and
// dumps need. For the token-wise decomposition the verification report is the
// worst over all sub-layers.
struct SentenceTerms {
  std::string id;
  std::vector<std::string> term_names;
  std::vector<Mat> terms;  // aligned with term_names, each n x d
  Mat reference;           // final embeddings, n x d
  std::vector<int> decoded_ids;  // sequence the decoder was forced over
  VerificationReport report;

  const Mat& term(const std::string& name) const;
};

SentenceTerms sentence_terms(const Model& model, const Sentence& sentence,
                             const PipelineOptions& options);

// Per-sentence parallel run over the corpus; output order follows the corpus.
std::vector<SentenceTerms> decompose_corpus(const Model& model, const Corpus& corpus,
                                            const PipelineOptions& options);

// Unweighted token-level mean in corpus order with compensated summation.
double corpus_mean_indicator(const std::vector<SentenceTerms>& sentences, const std::string& term,
                             IndicatorKind indicator);

// Token mean within one sentence.
double sentence_mean_indicator(const SentenceTerms& sentence, const std::string& term,
                               IndicatorKind indicator);

struct IndicatorSeries {
  std::string model_id;
  std::string term;
  IndicatorKind indicator = IndicatorKind::NormRatio;
  std::vector<std::pair<int, double>> values;  // (checkpoint index, corpus mean)
};

IndicatorSeries build_series(const std::vector<Model>& checkpoints, const Corpus& corpus,
                             const std::string& model_id, const std::string& term,
                             IndicatorKind indicator, const PipelineOptions& options);

}  // namespace dcpl
