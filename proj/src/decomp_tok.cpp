#include "dcpl/decomp_tok.hpp"

#include "dcpl/errors.hpp"

namespace dcpl {

namespace {

LocalLinearization linearize_at(Activation activation, Vec preact, bool strict) {
  LocalLinearization lin;
  lin.preact = std::move(preact);
  long width = lin.preact.size();
  lin.diag.resize(width);
  lin.intercept.resize(width);
  for (long k = 0; k < width; ++k) {
    double x = lin.preact[k];
    double d = activation_derivative(activation, x, strict);
    lin.diag[k] = d;
    lin.intercept[k] = activation_value(activation, x) - d * x;
  }
  return lin;
}

void check_decoder_trace(const Model& model, const ForwardTrace& trace) {
  if (trace.sublayers.size() != model.decoder.size()) {
    fail(ErrorKind::IncompleteTrace,
         "trace has " + std::to_string(trace.sublayers.size()) + " sub-layers, decoder has " +
             std::to_string(model.decoder.size()));
  }
  for (std::size_t i = 0; i < trace.sublayers.size(); ++i) {
    if (trace.sublayers[i].kind != model.decoder[i].kind) {
      fail(ErrorKind::IncompleteTrace,
           "trace sub-layer " + std::to_string(i + 1) + " kind does not match the decoder");
    }
    if (trace.sublayers[i].kind == SublayerKind::FeedForward &&
        trace.sublayers[i].preact.rows() != trace.embedded.rows()) {
      fail(ErrorKind::IncompleteTrace,
           "sub-layer " + std::to_string(i + 1) + " is missing pre-activations");
    }
  }
}

}  // namespace

LocalLinearization ffn_local_linearization(const Model& model, int lambda, const Vec& e_input,
                                           bool strict) {
  int total = model.config.decoder_sublayers();
  if (lambda < 1 || lambda > total) {
    fail(ErrorKind::IndexOutOfRange,
         "sub-layer index " + std::to_string(lambda) + " outside 1.." + std::to_string(total));
  }
  const SublayerWeights& sl = model.decoder[lambda - 1];
  if (sl.kind != SublayerKind::FeedForward) {
    fail(ErrorKind::WrongSublayerKind,
         "sub-layer " + std::to_string(lambda) + " is " + to_string(sl.kind) +
             ", not feed-forward");
  }
  if (e_input.size() != model.config.model_dim) {
    fail(ErrorKind::WidthMismatch, "input width does not match model_dim");
  }
  Vec preact = sl.feed_forward.w_in * e_input + sl.feed_forward.b_in;
  return linearize_at(model.config.activation, std::move(preact), strict);
}

Mat attention_route(const AttentionWeights& attention, const std::vector<Mat>& weights,
                    const Mat& rows) {
  long n = weights[0].rows();
  long dh = attention.heads[0].w_v.rows();
  long heads = static_cast<long>(attention.heads.size());
  if (rows.rows() != weights[0].cols()) {
    fail(ErrorKind::WidthMismatch, "routed rows do not match attention width");
  }
  Mat concat(n, heads * dh);
  for (long h = 0; h < heads; ++h) {
    concat.middleCols(h * dh, dh) = weights[h] * (rows * attention.heads[h].w_v.transpose());
  }
  return concat * attention.w_o.transpose();
}

const std::vector<std::string>& TokDecomposition::term_names() {
  static const std::vector<std::string> names = {"s", "t", "c"};
  return names;
}

const Mat& TokDecomposition::term(std::size_t stage, const std::string& name) const {
  if (stage >= stages.size()) {
    fail(ErrorKind::IndexOutOfRange, "stage " + std::to_string(stage) + " out of range");
  }
  const TokStage& st = stages[stage];
  if (name == "s") return st.s;
  if (name == "t") return st.t;
  if (name == "c") return st.c;
  fail(ErrorKind::InvalidArgument, "unknown term: " + name);
}

TokDecomposition decompose_tok(const Model& model, const ForwardTrace& trace, double tol_a,
                               double tol_r, bool strict) {
  check_decoder_trace(model, trace);
  long n = trace.embedded.rows();
  long d = trace.embedded.cols();
  int total = static_cast<int>(trace.sublayers.size());

  TokDecomposition dec;
  dec.stages.resize(total + 1);
  TokStage& base = dec.stages[0];
  base.s = Mat::Zero(n, d);
  base.t = trace.embedded;
  base.c = Mat::Zero(n, d);
  base.report = verify_rows({&base.s, &base.t, &base.c}, trace.embedded, tol_a, tol_r);

  for (int l = 1; l <= total; ++l) {
    const SublayerTrace& sl = trace.sublayers[l - 1];
    const SublayerWeights& w = model.decoder[l - 1];
    const TokStage& prev = dec.stages[l - 1];
    TokStage& cur = dec.stages[l];

    switch (sl.kind) {
      case SublayerKind::SelfAttention: {
        cur.s_dot = attention_route(w.attention, sl.attention, prev.s);
        cur.t_dot = attention_route(w.attention, sl.attention, prev.t);
        cur.c_dot = attention_route(w.attention, sl.attention, prev.c);
        cur.c_dot.rowwise() += attention_bias_offset(w.attention).transpose();
        break;
      }
      case SublayerKind::CrossAttention: {
        cur.s_dot = sl.unbiased;
        cur.t_dot = Mat::Zero(n, d);
        cur.c_dot = Mat::Zero(n, d);
        cur.c_dot.rowwise() += attention_bias_offset(w.attention).transpose();
        break;
      }
      case SublayerKind::FeedForward: {
        cur.s_dot.resize(n, d);
        cur.t_dot.resize(n, d);
        cur.c_dot.resize(n, d);
        const FeedForwardWeights& ff = w.feed_forward;
        for (long tok = 0; tok < n; ++tok) {
          LocalLinearization lin = linearize_at(model.config.activation,
                                                sl.preact.row(tok).transpose(), strict);
          auto push = [&](const Vec& v) -> Vec {
            return ff.w_out * lin.diag.cwiseProduct(ff.w_in * v);
          };
          cur.s_dot.row(tok) = push(prev.s.row(tok).transpose()).transpose();
          cur.t_dot.row(tok) = push(prev.t.row(tok).transpose()).transpose();
          cur.c_dot.row(tok) =
              (push(prev.c.row(tok).transpose()) + ff.b_out + ff.w_out * lin.intercept +
               ff.w_out * lin.diag.cwiseProduct(ff.b_in))
                  .transpose();
        }
        break;
      }
    }

    // Residual add and normalization, applied to each term; the -m offset and
    // the post-norm bias go to the constants.
    cur.s.resize(n, d);
    cur.t.resize(n, d);
    cur.c.resize(n, d);
    const Vec& gain = w.layer_norm.gain;
    for (long tok = 0; tok < n; ++tok) {
      double scale = sl.std[tok];
      if (scale == 0.0) {
        fail(ErrorKind::DegenerateStd,
             "traced scale is zero at sub-layer " + std::to_string(l));
      }
      cur.s.row(tok) =
          gain.cwiseProduct((cur.s_dot.row(tok) + prev.s.row(tok)).transpose()).transpose() /
          scale;
      cur.t.row(tok) =
          gain.cwiseProduct((cur.t_dot.row(tok) + prev.t.row(tok)).transpose()).transpose() /
          scale;
      Vec c_pre = (cur.c_dot.row(tok) + prev.c.row(tok)).transpose();
      c_pre.array() -= sl.mean[tok];
      cur.c.row(tok) = (gain.cwiseProduct(c_pre) / scale + w.layer_norm.bias).transpose();
    }
    cur.report = verify_rows({&cur.s, &cur.t, &cur.c}, sl.output, tol_a, tol_r);
    dec.worst.merge(cur.report);
  }
  return dec;
}

}  // namespace dcpl
