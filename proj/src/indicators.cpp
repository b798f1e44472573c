#include "dcpl/indicators.hpp"

#include <algorithm>
#include <cmath>

#include "dcpl/common.hpp"
#include "dcpl/errors.hpp"

namespace dcpl {

IndicatorKind indicator_from_string(std::string_view name) {
  if (name == "nr") return IndicatorKind::NormRatio;
  if (name == "cos") return IndicatorKind::Cosine;
  if (name == "mu") return IndicatorKind::Mu;
  fail(ErrorKind::InvalidArgument, "unknown indicator: " + std::string(name));
}

std::string_view to_string(IndicatorKind kind) {
  switch (kind) {
    case IndicatorKind::NormRatio: return "nr";
    case IndicatorKind::Cosine: return "cos";
    case IndicatorKind::Mu: return "mu";
  }
  return "?";
}

const std::vector<IndicatorKind>& all_indicators() {
  static const std::vector<IndicatorKind> kinds = {IndicatorKind::NormRatio, IndicatorKind::Cosine,
                                                   IndicatorKind::Mu};
  return kinds;
}

double norm_ratio(const Vec& z, const Vec& e) {
  double en = e.norm();
  if (en == 0.0) fail(ErrorKind::ZeroNorm, "reference embedding has zero norm");
  return z.norm() / en;
}

double cosine(const Vec& z, const Vec& e) {
  double zn = z.norm();
  double en = e.norm();
  if (zn == 0.0 || en == 0.0) fail(ErrorKind::ZeroNorm, "cosine undefined for zero vector");
  return std::clamp(z.dot(e) / (zn * en), -1.0, 1.0);
}

double importance_mu(const Vec& z, const Vec& e) {
  double en2 = e.squaredNorm();
  if (en2 == 0.0) fail(ErrorKind::ZeroNorm, "reference embedding has zero norm");
  return z.dot(e) / en2;
}

double indicator_value(IndicatorKind kind, const Vec& z, const Vec& e) {
  switch (kind) {
    case IndicatorKind::NormRatio: return norm_ratio(z, e);
    case IndicatorKind::Cosine: return cosine(z, e);
    case IndicatorKind::Mu: return importance_mu(z, e);
  }
  fail(ErrorKind::InvalidArgument, "unknown indicator");
}

DecompKind decomp_from_string(std::string_view name) {
  if (name == "sl") return DecompKind::Sublayer;
  if (name == "tok") return DecompKind::Tokenwise;
  fail(ErrorKind::InvalidArgument, "unknown decomposition: " + std::string(name));
}

std::string_view to_string(DecompKind kind) {
  return kind == DecompKind::Sublayer ? "sl" : "tok";
}

const std::vector<std::string>& decomp_term_names(DecompKind kind) {
  return kind == DecompKind::Sublayer ? SlDecomposition::term_names()
                                      : TokDecomposition::term_names();
}

DecodeMode mode_from_string(std::string_view name) {
  if (name == "forced") return DecodeMode::Forced;
  if (name == "beam") return DecodeMode::Beam;
  fail(ErrorKind::InvalidArgument, "unknown decoding mode: " + std::string(name));
}

std::string_view to_string(DecodeMode mode) {
  return mode == DecodeMode::Forced ? "forced" : "beam";
}

const Mat& SentenceTerms::term(const std::string& name) const {
  for (std::size_t k = 0; k < term_names.size(); ++k) {
    if (term_names[k] == name) return terms[k];
  }
  fail(ErrorKind::InvalidArgument, "unknown term: " + name);
}

SentenceTerms sentence_terms(const Model& model, const Sentence& sentence,
                             const PipelineOptions& options) {
  SentenceTerms out;
  out.id = sentence.id;
  out.term_names = decomp_term_names(options.decomp);

  if (options.mode == DecodeMode::Beam) {
    BeamOptions bo;
    bo.beam_size = options.beam_size;
    bo.max_len = options.max_len;
    bo.length_norm = options.length_norm;
    out.decoded_ids = decode_beam(model, sentence.src_ids, bo).best.tokens;
  } else {
    out.decoded_ids = sentence.tgt_ids;
  }

  ForcedTrace forced =
      decode_forced(model, sentence.src_ids, out.decoded_ids, options.precision);
  if (options.decomp == DecompKind::Sublayer) {
    SlDecomposition dec = decompose_sl(model, forced.decoder, options.tol_a, options.tol_r);
    out.terms = {dec.i, dec.s, dec.t, dec.f, dec.c};
    out.reference = dec.reference;
    out.report = dec.report;
  } else {
    TokDecomposition dec =
        decompose_tok(model, forced.decoder, options.tol_a, options.tol_r, options.strict);
    const TokStage& fin = dec.final_stage();
    out.terms = {fin.s, fin.t, fin.c};
    out.reference = forced.decoder.output();
    out.report = dec.worst;
  }
  return out;
}

std::vector<SentenceTerms> decompose_corpus(const Model& model, const Corpus& corpus,
                                            const PipelineOptions& options) {
  if (corpus.empty()) fail(ErrorKind::EmptyCorpus, "corpus has no sentences");
  std::vector<SentenceTerms> out(corpus.size());
  parallel_for(corpus.size(), options.threads, [&](std::size_t i) {
    out[i] = sentence_terms(model, corpus[i], options);
  });
  return out;
}

namespace {

void accumulate_indicator(const SentenceTerms& sentence, const std::string& term,
                          IndicatorKind indicator, KahanSum& sum, std::size_t& count) {
  const Mat& z = sentence.term(term);
  for (long t = 0; t < z.rows(); ++t) {
    double value;
    try {
      value = indicator_value(indicator, z.row(t).transpose(), sentence.reference.row(t).transpose());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ZeroNorm) {
        fail(ErrorKind::ZeroNorm, "sentence " + sentence.id + " position " + std::to_string(t) +
                                      ": " + e.what());
      }
      throw;
    }
    sum.add(value);
    ++count;
  }
}

}  // namespace

double corpus_mean_indicator(const std::vector<SentenceTerms>& sentences, const std::string& term,
                             IndicatorKind indicator) {
  KahanSum sum;
  std::size_t count = 0;
  for (const SentenceTerms& sentence : sentences) {
    accumulate_indicator(sentence, term, indicator, sum, count);
  }
  if (count == 0) fail(ErrorKind::EmptyCorpus, "no tokens to aggregate");
  return sum.value() / static_cast<double>(count);
}

double sentence_mean_indicator(const SentenceTerms& sentence, const std::string& term,
                               IndicatorKind indicator) {
  KahanSum sum;
  std::size_t count = 0;
  accumulate_indicator(sentence, term, indicator, sum, count);
  return sum.value() / static_cast<double>(count);
}

IndicatorSeries build_series(const std::vector<Model>& checkpoints, const Corpus& corpus,
                             const std::string& model_id, const std::string& term,
                             IndicatorKind indicator, const PipelineOptions& options) {
  if (checkpoints.empty()) fail(ErrorKind::InvalidArgument, "no checkpoints given");
  IndicatorSeries series;
  series.model_id = model_id;
  series.term = term;
  series.indicator = indicator;
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    auto decomposed = decompose_corpus(checkpoints[k], corpus, options);
    series.values.emplace_back(static_cast<int>(k),
                               corpus_mean_indicator(decomposed, term, indicator));
  }
  return series;
}

}  // namespace dcpl
