#include "dcpl/decomp_sl.hpp"

#include <cmath>

#include "dcpl/errors.hpp"

namespace dcpl {

namespace {

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
  }
}

}  // namespace

VerificationReport verify_reconstruction(const std::vector<Vec>& terms, const Vec& reference,
                                         double tol_a, double tol_r) {
  VerificationReport report;
  Vec sum = Vec::Zero(reference.size());
  for (const Vec& term : terms) {
    if (term.size() != reference.size()) {
      fail(ErrorKind::WidthMismatch, "term width " + std::to_string(term.size()) +
                                         " does not match reference width " +
                                         std::to_string(reference.size()));
    }
    sum += term;
  }
  for (long k = 0; k < reference.size(); ++k) {
    double resid = std::abs(reference[k] - sum[k]);
    report.max_abs_residual = std::max(report.max_abs_residual, resid);
    if (sum[k] != 0.0) {
      report.max_rel_residual = std::max(report.max_rel_residual, resid / std::abs(sum[k]));
    }
    if (resid > tol_a + tol_r * std::abs(sum[k])) report.pass = false;
  }
  return report;
}

VerificationReport verify_rows(const std::vector<const Mat*>& terms, const Mat& reference,
                               double tol_a, double tol_r) {
  VerificationReport report;
  for (long t = 0; t < reference.rows(); ++t) {
    std::vector<Vec> row_terms;
    row_terms.reserve(terms.size());
    for (const Mat* m : terms) row_terms.push_back(m->row(t).transpose());
    report.merge(verify_reconstruction(row_terms, reference.row(t).transpose(), tol_a, tol_r));
  }
  return report;
}

CumulativeLnMap cumulative_ln_map(const Model& model, const ForwardTrace& trace, int lambda,
                                  long position) {
  check_decoder_trace(model, trace);
  int total = static_cast<int>(trace.sublayers.size());
  if (lambda < 1 || lambda > total) {
    fail(ErrorKind::IndexOutOfRange, "sub-layer index " + std::to_string(lambda) +
                                         " outside 1.." + std::to_string(total));
  }
  if (position < 0 || position >= trace.embedded.rows()) {
    fail(ErrorKind::IndexOutOfRange, "position " + std::to_string(position) + " out of range");
  }
  CumulativeLnMap map;
  map.start = lambda;
  map.gain_product = Vec::Ones(model.config.model_dim);
  double denom = 1.0;
  for (int l = lambda; l <= total; ++l) {
    map.gain_product = map.gain_product.cwiseProduct(model.decoder[l - 1].layer_norm.gain);
    double s = trace.sublayers[l - 1].std[position];
    if (s == 0.0) {
      fail(ErrorKind::DegenerateStd,
           "traced scale is zero at sub-layer " + std::to_string(l));
    }
    denom *= s;
  }
  map.scale = 1.0 / denom;
  return map;
}

Mat head_map(const AttentionWeights& attention, int head) {
  if (head < 0 || head >= static_cast<int>(attention.heads.size())) {
    fail(ErrorKind::IndexOutOfRange, "head index " + std::to_string(head) + " outside 0.." +
                                         std::to_string(attention.heads.size() - 1));
  }
  long dh = attention.heads[0].w_v.rows();
  return attention.w_o.middleCols(head * dh, dh);
}

Vec attention_bias_offset(const AttentionWeights& attention) {
  Vec offset = attention.b_o;
  for (std::size_t h = 0; h < attention.heads.size(); ++h) {
    offset += head_map(attention, static_cast<int>(h)) * attention.heads[h].b_v;
  }
  return offset;
}

const std::vector<std::string>& SlDecomposition::term_names() {
  static const std::vector<std::string> names = {"i", "s", "t", "f", "c"};
  return names;
}

const Mat& SlDecomposition::term(const std::string& name) const {
  if (name == "i") return i;
  if (name == "s") return s;
  if (name == "t") return t;
  if (name == "f") return f;
  if (name == "c") return c;
  fail(ErrorKind::InvalidArgument, "unknown term: " + name);
}

SlDecomposition decompose_sl(const Model& model, const ForwardTrace& trace, double tol_a,
                             double tol_r) {
  check_decoder_trace(model, trace);
  int total = static_cast<int>(trace.sublayers.size());
  long n = trace.embedded.rows();
  long d = trace.embedded.cols();

  // Suffix products over sub-layers: gains are position-free, scales are not.
  std::vector<Vec> gain_prod(total + 1);
  std::vector<Vec> scale_prod(total + 1);  // per position, product of traced stds
  gain_prod[total] = model.decoder[total - 1].layer_norm.gain;
  scale_prod[total] = trace.sublayers[total - 1].std;
  for (int l = total - 1; l >= 1; --l) {
    gain_prod[l] = gain_prod[l + 1].cwiseProduct(model.decoder[l - 1].layer_norm.gain);
    scale_prod[l] = scale_prod[l + 1].cwiseProduct(trace.sublayers[l - 1].std);
  }
  for (long t = 0; t < n; ++t) {
    if (scale_prod[1][t] == 0.0) {
      fail(ErrorKind::DegenerateStd, "traced scale is zero at position " + std::to_string(t));
    }
  }

  // f^(ln) from sub-layer l onward, applied to full matrices / constant rows.
  auto apply_ln = [&](int l, const Mat& x) {
    Mat out(n, d);
    for (long t = 0; t < n; ++t) {
      out.row(t) = gain_prod[l].cwiseProduct(x.row(t).transpose()).transpose() / scale_prod[l][t];
    }
    return out;
  };
  auto apply_ln_const = [&](int l, const Vec& v) {
    Mat out(n, d);
    for (long t = 0; t < n; ++t) {
      out.row(t) = gain_prod[l].cwiseProduct(v).transpose() / scale_prod[l][t];
    }
    return out;
  };

  SlDecomposition dec;
  dec.i = apply_ln(1, trace.embedded);
  dec.s = Mat::Zero(n, d);
  dec.t = Mat::Zero(n, d);
  dec.f = Mat::Zero(n, d);
  dec.c = Mat::Zero(n, d);

  for (int l = 1; l <= total; ++l) {
    const SublayerTrace& sl = trace.sublayers[l - 1];
    const SublayerWeights& w = model.decoder[l - 1];
    switch (sl.kind) {
      case SublayerKind::SelfAttention:
        dec.t += apply_ln(l, sl.unbiased);
        dec.c += apply_ln_const(l, attention_bias_offset(w.attention));
        break;
      case SublayerKind::CrossAttention:
        dec.s += apply_ln(l, sl.unbiased);
        dec.c += apply_ln_const(l, attention_bias_offset(w.attention));
        break;
      case SublayerKind::FeedForward:
        dec.f += apply_ln(l, sl.unbiased);
        dec.c += apply_ln_const(l, w.feed_forward.b_out);
        break;
    }
    // Normalization offset -m*1 belongs to the constants.
    for (long t = 0; t < n; ++t) {
      dec.c.row(t) -= gain_prod[l].transpose() * (sl.mean[t] / scale_prod[l][t]);
    }
    // Post-norm bias of sub-layer l rides through the remaining norms.
    if (l < total) {
      dec.c += apply_ln_const(l + 1, w.layer_norm.bias);
    } else {
      dec.c.rowwise() += w.layer_norm.bias.transpose();
    }
  }

  dec.reconstructed = dec.i + dec.s + dec.t + dec.f + dec.c;
  dec.reference = trace.output();
  dec.report = verify_rows({&dec.i, &dec.s, &dec.t, &dec.f, &dec.c}, dec.reference, tol_a, tol_r);
  return dec;
}

}  // namespace dcpl
