#include "dcpl/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dcpl/errors.hpp"

namespace dcpl {

namespace {

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_trace(Mat& m, TracePrecision precision) {
  if (precision == TracePrecision::Float32) {
    m = m.unaryExpr([](double v) { return to_f32(v); });
  }
}

void round_trace(Vec& v, TracePrecision precision) {
  if (precision == TracePrecision::Float32) {
    v = v.unaryExpr([](double x) { return to_f32(x); });
  }
}

Mat softmax_rows(Mat scores) {
  for (long i = 0; i < scores.rows(); ++i) {
    double peak = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - peak).exp();
    scores.row(i) /= scores.row(i).sum();
  }
  return scores;
}

// Residual add and per-row normalization; fills residual/mean/std/output.
void finish_sublayer(SublayerTrace& tr, const Mat& delta, const LayerNormWeights& ln, double eps,
                     TracePrecision precision) {
  tr.residual = delta + tr.input;
  round_trace(tr.residual, precision);
  long n = tr.residual.rows();
  long d = tr.residual.cols();
  tr.mean.resize(n);
  tr.std.resize(n);
  for (long i = 0; i < n; ++i) {
    double m = tr.residual.row(i).mean();
    double var = (tr.residual.row(i).array() - m).square().mean();
    double s = std::sqrt(var + eps);
    if (s == 0.0) {
      fail(ErrorKind::DegenerateStd, "constant residual row " + std::to_string(i) +
                                         " has zero normalization scale");
    }
    tr.mean[i] = m;
    tr.std[i] = s;
  }
  round_trace(tr.mean, precision);
  round_trace(tr.std, precision);
  tr.output.resize(n, d);
  for (long i = 0; i < n; ++i) {
    tr.output.row(i) = (((tr.residual.row(i).array() - tr.mean[i]) / tr.std[i]) *
                            ln.gain.transpose().array() +
                        ln.bias.transpose().array())
                           .matrix();
  }
  round_trace(tr.output, precision);
}

SublayerTrace run_attention(const SublayerWeights& sl, const Mat& x, const Mat& kv, bool causal,
                            double eps, TracePrecision precision) {
  SublayerTrace tr;
  tr.kind = sl.kind;
  tr.input = x;
  long n = x.rows();
  long m = kv.rows();
  int heads = static_cast<int>(sl.attention.heads.size());
  long dh = sl.attention.heads[0].w_q.rows();
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  double neg_inf = -std::numeric_limits<double>::infinity();

  Mat concat_biased(n, heads * dh);
  Mat concat_unbiased(n, heads * dh);
  for (int h = 0; h < heads; ++h) {
    const auto& head = sl.attention.heads[h];
    Mat q = x * head.w_q.transpose();
    q.rowwise() += head.b_q.transpose();
    Mat k = kv * head.w_k.transpose();
    k.rowwise() += head.b_k.transpose();
    Mat scores = q * k.transpose() * scale;
    if (causal) {
      for (long i = 0; i < n; ++i) {
        for (long j = i + 1; j < m; ++j) scores(i, j) = neg_inf;
      }
    }
    Mat a = softmax_rows(std::move(scores));
    round_trace(a, precision);
    tr.attention.push_back(a);
    Mat values = kv * head.w_v.transpose();
    concat_unbiased.middleCols(h * dh, dh) = a * values;
    values.rowwise() += head.b_v.transpose();
    concat_biased.middleCols(h * dh, dh) = a * values;
  }
  tr.unbiased = concat_unbiased * sl.attention.w_o.transpose();
  round_trace(tr.unbiased, precision);
  Mat delta = concat_biased * sl.attention.w_o.transpose();
  delta.rowwise() += sl.attention.b_o.transpose();
  finish_sublayer(tr, delta, sl.layer_norm, eps, precision);
  return tr;
}

SublayerTrace run_feed_forward(const SublayerWeights& sl, const Mat& x, Activation activation,
                               double eps, TracePrecision precision) {
  SublayerTrace tr;
  tr.kind = sl.kind;
  tr.input = x;
  tr.preact = x * sl.feed_forward.w_in.transpose();
  tr.preact.rowwise() += sl.feed_forward.b_in.transpose();
  round_trace(tr.preact, precision);
  Mat act = tr.preact.unaryExpr(
      [activation](double v) { return activation_value(activation, v); });
  tr.unbiased = act * sl.feed_forward.w_out.transpose();
  round_trace(tr.unbiased, precision);
  Mat delta = act * sl.feed_forward.w_out.transpose();
  delta.rowwise() += sl.feed_forward.b_out.transpose();
  finish_sublayer(tr, delta, sl.layer_norm, eps, precision);
  return tr;
}

SublayerTrace run_sublayer(const Model& model, const SublayerWeights& sl, const Mat& x,
                           const Mat* memory, bool causal, TracePrecision precision) {
  double eps = model.config.ln_epsilon;
  switch (sl.kind) {
    case SublayerKind::SelfAttention:
      return run_attention(sl, x, x, causal, eps, precision);
    case SublayerKind::CrossAttention:
      return run_attention(sl, x, *memory, false, eps, precision);
    case SublayerKind::FeedForward:
      return run_feed_forward(sl, x, model.config.activation, eps, precision);
  }
  fail(ErrorKind::WrongSublayerKind, "unreachable");
}

void validate_ids(const Model& model, const std::vector<int>& ids, const char* what) {
  if (ids.empty()) fail(ErrorKind::EmptyInput, std::string(what) + " sequence is empty");
  if (static_cast<int>(ids.size()) > model.config.max_positions) {
    fail(ErrorKind::SequenceTooLong, std::string(what) + " length " + std::to_string(ids.size()) +
                                         " exceeds max_positions " +
                                         std::to_string(model.config.max_positions));
  }
  for (int id : ids) {
    if (id < 0 || id >= model.config.vocab_size) {
      fail(ErrorKind::TokenOutOfRange,
           std::string(what) + " token " + std::to_string(id) + " outside vocabulary of size " +
               std::to_string(model.config.vocab_size));
    }
  }
}

}  // namespace

Mat positional_encoding(int positions, int dim) {
  Mat pe = Mat::Zero(positions, dim);
  for (int pos = 0; pos < positions; ++pos) {
    for (int i = 0; 2 * i < dim; ++i) {
      double rate = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
      pe(pos, 2 * i) = std::sin(pos * rate);
      if (2 * i + 1 < dim) pe(pos, 2 * i + 1) = std::cos(pos * rate);
    }
  }
  return pe;
}

Mat embed(const Model& model, const std::vector<int>& ids) {
  validate_ids(model, ids, "input");
  long n = static_cast<long>(ids.size());
  Mat pe = positional_encoding(static_cast<int>(n), model.config.model_dim);
  Mat x(n, model.config.model_dim);
  for (long i = 0; i < n; ++i) {
    x.row(i) = model.embedding.row(ids[i]) + pe.row(i);
  }
  return x;
}

std::vector<int> shift_right(const std::vector<int>& target_ids) {
  std::vector<int> input;
  input.reserve(target_ids.size());
  input.push_back(kEosId);
  input.insert(input.end(), target_ids.begin(), target_ids.end() - 1);
  return input;
}

ForwardTrace encode(const Model& model, const std::vector<int>& src_ids,
                    TracePrecision precision) {
  ForwardTrace trace;
  trace.embedded = embed(model, src_ids);
  round_trace(trace.embedded, precision);
  const Mat* cur = &trace.embedded;
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    trace.sublayers.push_back(
        run_sublayer(model, model.encoder[i], *cur, nullptr, false, precision));
    cur = &trace.sublayers.back().output;
  }
  return trace;
}

ForwardTrace decode_with_memory(const Model& model, const Mat& memory,
                                const std::vector<int>& input_ids, TracePrecision precision) {
  if (memory.cols() != model.config.model_dim) {
    fail(ErrorKind::WidthMismatch, "memory width " + std::to_string(memory.cols()) +
                                       " does not match model_dim " +
                                       std::to_string(model.config.model_dim));
  }
  ForwardTrace trace;
  trace.embedded = embed(model, input_ids);
  round_trace(trace.embedded, precision);
  const Mat* cur = &trace.embedded;
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    trace.sublayers.push_back(
        run_sublayer(model, model.decoder[i], *cur, &memory, true, precision));
    cur = &trace.sublayers.back().output;
  }
  return trace;
}

ForcedTrace decode_forced(const Model& model, const std::vector<int>& src_ids,
                          const std::vector<int>& tgt_ids, TracePrecision precision) {
  validate_ids(model, tgt_ids, "target");
  ForcedTrace forced;
  forced.target_ids = tgt_ids;
  forced.input_ids = shift_right(tgt_ids);
  forced.encoder = encode(model, src_ids, precision);
  forced.decoder =
      decode_with_memory(model, forced.encoder.output(), forced.input_ids, precision);
  return forced;
}

Mat logits(const Model& model, const Mat& states) {
  if (states.cols() != model.config.model_dim) {
    fail(ErrorKind::WidthMismatch, "state width does not match model_dim");
  }
  return states * model.embedding.transpose();
}

Vec log_softmax(const Vec& scores) {
  double peak = scores.maxCoeff();
  double total = (scores.array() - peak).exp().sum();
  return (scores.array() - peak - std::log(total)).matrix();
}

BeamResult decode_beam(const Model& model, const std::vector<int>& src_ids,
                       const BeamOptions& options) {
  if (options.beam_size < 1) {
    fail(ErrorKind::InvalidArgument, "beam size must be at least 1");
  }
  ForwardTrace enc = encode(model, src_ids);
  const Mat& memory = enc.output();

  int max_len = options.max_len > 0 ? options.max_len
                                    : static_cast<int>(2 * src_ids.size() + 4);
  max_len = std::min(max_len, model.config.max_positions);

  struct Hyp {
    std::vector<int> tokens;
    double log_prob = 0.0;
  };
  auto finalize = [&options](const Hyp& h, bool complete) {
    BeamHypothesis out;
    out.tokens = h.tokens;
    out.log_prob = h.log_prob;
    out.complete = complete;
    out.score = h.log_prob / std::pow(static_cast<double>(h.tokens.size()), options.length_norm);
    return out;
  };

  std::vector<Hyp> live{Hyp{}};
  std::vector<BeamHypothesis> completed;
  for (int step = 1; step <= max_len && !live.empty(); ++step) {
    std::vector<Hyp> candidates;
    candidates.reserve(live.size() * model.config.vocab_size);
    for (const Hyp& h : live) {
      std::vector<int> input;
      input.reserve(h.tokens.size() + 1);
      input.push_back(kEosId);
      input.insert(input.end(), h.tokens.begin(), h.tokens.end());
      ForwardTrace dec = decode_with_memory(model, memory, input);
      Vec row = logits(model, dec.output()).row(dec.output().rows() - 1).transpose();
      Vec lp = log_softmax(row);
      for (int v = 0; v < model.config.vocab_size; ++v) {
        Hyp next;
        next.tokens = h.tokens;
        next.tokens.push_back(v);
        next.log_prob = h.log_prob + lp[v];
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Hyp& a, const Hyp& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      return a.tokens < b.tokens;
    });
    std::size_t keep = std::min<std::size_t>(options.beam_size, candidates.size());
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (candidates[i].tokens.back() == kEosId) {
        completed.push_back(finalize(candidates[i], true));
      } else {
        live.push_back(std::move(candidates[i]));
      }
    }
  }

  std::vector<BeamHypothesis> pool = std::move(completed);
  if (pool.empty()) {
    for (const Hyp& h : live) pool.push_back(finalize(h, false));
  }
  std::sort(pool.begin(), pool.end(), [](const BeamHypothesis& a, const BeamHypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  BeamResult result;
  result.best = pool.front();
  result.finals = std::move(pool);
  return result;
}

}  // namespace dcpl
