#include <doctest.h>

#include <cmath>
#include <vector>

#include "dcpl/errors.hpp"
#include "dcpl/forward.hpp"
#include "helpers.hpp"
#include "naive_forward.hpp"

using namespace dcpl;

namespace {

double max_diff_rows(const Mat& got, const oracle::Rows& want) {
  double worst = 0.0;
  for (long i = 0; i < got.rows(); ++i) {
    for (long j = 0; j < got.cols(); ++j) {
      worst = std::max(worst, std::abs(got(i, j) - want[static_cast<std::size_t>(i)]
                                                       [static_cast<std::size_t>(j)]));
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("forward") {

TEST_CASE("positional encoding matches the closed form") {
  Mat pe = positional_encoding(5, 8);
  REQUIRE(pe.rows() == 5);
  REQUIRE(pe.cols() == 8);
  // position 0: sin(0)=0 on even, cos(0)=1 on odd components
  for (int j = 0; j < 8; j += 2) CHECK(pe(0, j) == 0.0);
  for (int j = 1; j < 8; j += 2) CHECK(pe(0, j) == 1.0);
  CHECK(pe(3, 0) == doctest::Approx(std::sin(3.0)).epsilon(1e-15));
  CHECK(pe(3, 1) == doctest::Approx(std::cos(3.0)).epsilon(1e-15));
  CHECK(pe(2, 4) == doctest::Approx(std::sin(2.0 * std::pow(10000.0, -0.5))).epsilon(1e-15));
  CHECK(pe.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("embedding validates ids") {
  Model m = testutil::toy_model();
  CHECK_NOTHROW(embed(m, {1, 2, 3}));
  try {
    embed(m, {});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyInput);
  }
  try {
    embed(m, {1, 23});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TokenOutOfRange);
  }
  try {
    embed(m, {1, -1});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TokenOutOfRange);
  }
  try {
    embed(m, std::vector<int>(49, 1));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SequenceTooLong);
  }
}

TEST_CASE("shift right prepends eos and drops the last target") {
  CHECK(shift_right({5, 6, 7}) == std::vector<int>{0, 5, 6});
  CHECK(shift_right({9}) == std::vector<int>{0});
}

TEST_CASE("forward agrees with loop-based oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    Activation act = trial % 3 == 0   ? Activation::Relu
                     : trial % 3 == 1 ? Activation::Gelu
                                      : Activation::Swish;
    int layers = 1 + trial % 3;
    Model m = init_random(testutil::toy_config(layers, 8, 2, 16, 17, act), 100 + trial);
    auto src = testutil::random_ids(rng, 4, 17);
    auto tgt = testutil::random_ids(rng, 5, 17);

    ForwardTrace enc = encode(m, src);
    CHECK(max_diff_rows(enc.output(), oracle::naive_encode(m, src)) < 1e-10);

    ForcedTrace forced = decode_forced(m, src, tgt);
    CHECK(max_diff_rows(forced.decoder.output(), oracle::naive_decode_forced(m, src, tgt)) < 1e-10);
  }
}

TEST_CASE("trace bookkeeping") {
  Model m = testutil::toy_model(5);
  std::vector<int> src{3, 4, 5};
  std::vector<int> tgt{6, 7, 8, 9};
  ForcedTrace forced = decode_forced(m, src, tgt);

  REQUIRE(forced.encoder.sublayers.size() == 4);
  REQUIRE(forced.decoder.sublayers.size() == 6);
  CHECK(forced.input_ids == std::vector<int>{0, 6, 7, 8});

  const std::vector<SublayerKind> dec_kinds{
      SublayerKind::SelfAttention, SublayerKind::CrossAttention, SublayerKind::FeedForward,
      SublayerKind::SelfAttention, SublayerKind::CrossAttention, SublayerKind::FeedForward};
  for (std::size_t i = 0; i < 6; ++i) {
    const SublayerTrace& sl = forced.decoder.sublayers[i];
    CHECK(sl.kind == dec_kinds[i]);
    // residual = input + delta and output is its normalization
    CHECK(sl.residual.rows() == 4);
    for (long t = 0; t < 4; ++t) {
      double mean = sl.residual.row(t).mean();
      CHECK(sl.mean[t] == doctest::Approx(mean).epsilon(1e-12));
      double var = (sl.residual.row(t).array() - mean).square().mean();
      CHECK(sl.std[t] == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    }
    if (sl.kind == SublayerKind::FeedForward) {
      CHECK(sl.attention.empty());
      CHECK(sl.preact.rows() == 4);
      CHECK(sl.preact.cols() == 32);
    } else {
      CHECK(sl.preact.size() == 0);
      REQUIRE(sl.attention.size() == 4);  // heads
      long want_cols = sl.kind == SublayerKind::SelfAttention ? 4 : 3;
      for (const Mat& a : sl.attention) {
        CHECK(a.cols() == want_cols);
        for (long r = 0; r < a.rows(); ++r) {
          CHECK(a.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
          CHECK(a.row(r).minCoeff() >= 0.0);
        }
      }
    }
  }

  // causal mask: strictly-upper entries are exactly zero
  for (const Mat& a : forced.decoder.sublayers[0].attention) {
    for (long i = 0; i < a.rows(); ++i) {
      for (long j = i + 1; j < a.cols(); ++j) CHECK(a(i, j) == 0.0);
    }
  }
}

TEST_CASE("decoder outputs at earlier positions ignore later inputs") {
  Model m = testutil::toy_model(6);
  std::vector<int> src{2, 3};
  std::vector<int> a{5, 6, 7, 8};
  std::vector<int> b{5, 6, 7, 9};
  ForcedTrace fa = decode_forced(m, src, a);
  ForcedTrace fb = decode_forced(m, src, b);
  // inputs are eos-shifted, so they agree on every position here
  CHECK(fa.input_ids == fb.input_ids);
  CHECK(testutil::max_abs_diff(fa.decoder.output(), fb.decoder.output()) == 0.0);

  std::vector<int> c{5, 6, 9, 8};  // input differs at position 3 only
  ForcedTrace fc = decode_forced(m, src, c);
  Mat head_a = fa.decoder.output().topRows(3);
  Mat head_c = fc.decoder.output().topRows(3);
  CHECK(testutil::max_abs_diff(head_a, head_c) < 1e-12);
}

TEST_CASE("repeated forward passes are bit identical") {
  Model m = testutil::toy_model(8);
  std::vector<int> src{1, 2, 3, 4};
  std::vector<int> tgt{5, 6, 7};
  ForcedTrace x = decode_forced(m, src, tgt);
  ForcedTrace y = decode_forced(m, src, tgt);
  CHECK((x.decoder.output().array() == y.decoder.output().array()).all());
}

TEST_CASE("logits are tied to the embedding table") {
  Model m = testutil::toy_model(9);
  ForwardTrace enc = encode(m, {1, 2});
  Mat lg = logits(m, enc.output());
  REQUIRE(lg.rows() == 2);
  REQUIRE(lg.cols() == 23);
  double manual = enc.output().row(1).dot(m.embedding.row(17));
  CHECK(lg(1, 17) == doctest::Approx(manual).epsilon(1e-14));

  try {
    logits(m, Mat::Zero(2, 5));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WidthMismatch);
  }
}

TEST_CASE("log softmax normalizes and is shift invariant") {
  Vec v(4);
  v << 0.3, -2.0, 5.5, 1.1;
  Vec lp = log_softmax(v);
  CHECK(lp.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-12));
  Vec shifted = log_softmax((v.array() + 123.0).matrix());
  CHECK(testutil::max_abs_diff(lp, shifted) < 1e-10);
  CHECK(lp.maxCoeff() <= 0.0);
}

TEST_CASE("decode_with_memory rejects wrong memory width") {
  Model m = testutil::toy_model(10);
  try {
    decode_with_memory(m, Mat::Zero(3, 5), {1, 2});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WidthMismatch);
  }
}

TEST_CASE("constant residual row raises DegenerateStd") {
  Model m = make_empty_model(testutil::toy_config(1, 8, 2, 16, 5));
  // empty model: zero weights, so the first residual equals the embedding;
  // make token 3 embed to the all-ones row at position 0
  Mat pe = positional_encoding(1, 8);
  m.embedding.row(3) = Vec::Ones(8).transpose() - pe.row(0);
  try {
    encode(m, {3});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateStd);
  }
}

TEST_CASE("float32 traces hold only single-precision values") {
  Model m = testutil::toy_model(12);
  ForcedTrace forced = decode_forced(m, {1, 2, 3}, {4, 5}, TracePrecision::Float32);
  auto all_f32 = [](const Mat& mat) {
    for (long i = 0; i < mat.rows(); ++i) {
      for (long j = 0; j < mat.cols(); ++j) {
        if (static_cast<double>(static_cast<float>(mat(i, j))) != mat(i, j)) return false;
      }
    }
    return true;
  };
  CHECK(all_f32(forced.decoder.embedded));
  for (const auto& sl : forced.decoder.sublayers) {
    CHECK(all_f32(sl.residual));
    CHECK(all_f32(sl.unbiased));
    CHECK(all_f32(sl.output));
    for (const Mat& a : sl.attention) CHECK(all_f32(a));
    if (sl.preact.size() > 0) CHECK(all_f32(sl.preact));
  }

  ForcedTrace f64 = decode_forced(m, {1, 2, 3}, {4, 5});
  CHECK(testutil::max_abs_diff(f64.decoder.output(), forced.decoder.output()) > 0.0);
  CHECK(testutil::max_abs_diff(f64.decoder.output(), forced.decoder.output()) < 1e-4);
}

TEST_CASE("activation derivatives match finite differences") {
  Rng rng(77);
  for (Activation act : {Activation::Gelu, Activation::Swish}) {
    for (int i = 0; i < 200; ++i) {
      double x = rng.uniform(-4.0, 4.0);
      double h = 1e-6;
      double fd = (activation_value(act, x + h) - activation_value(act, x - h)) / (2 * h);
      CHECK(activation_derivative(act, x) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  CHECK(activation_derivative(Activation::Relu, 2.0) == 1.0);
  CHECK(activation_derivative(Activation::Relu, -2.0) == 0.0);
  CHECK(activation_derivative(Activation::Relu, 0.0) == 0.0);
  try {
    activation_derivative(Activation::Relu, 0.0, true);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UndefinedDerivative);
  }
}

}  // TEST_SUITE
