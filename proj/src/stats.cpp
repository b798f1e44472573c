#include "dcpl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcpl/common.hpp"
#include "dcpl/errors.hpp"

namespace dcpl {

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    fail(ErrorKind::LengthMismatch, "paired series lengths differ");
  }
  std::size_t n = xs.size();
  if (n < 2) fail(ErrorKind::DegenerateSeries, "need at least 2 observations");
  KahanSum sx, sy;
  for (std::size_t i = 0; i < n; ++i) {
    sx.add(xs[i]);
    sy.add(ys[i]);
  }
  double mx = sx.value() / n;
  double my = sy.value() / n;
  KahanSum sxy, sxx, syy;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = xs[i] - mx;
    double dy = ys[i] - my;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  if (sxx.value() == 0.0 || syy.value() == 0.0) {
    fail(ErrorKind::DegenerateSeries, "a series has zero variance");
  }
  return sxy.value() / std::sqrt(sxx.value() * syy.value());
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    fail(ErrorKind::LengthMismatch, "paired series lengths differ");
  }
  if (xs.size() < 2) fail(ErrorKind::DegenerateSeries, "need at least 2 observations");
  return pearson(average_ranks(xs), average_ranks(ys));
}

DtwResult dtw_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) fail(ErrorKind::EmptySeries, "dtw needs non-empty series");
  std::size_t n = a.size();
  std::size_t m = b.size();
  std::vector<std::vector<double>> acc(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double cost = std::abs(a[i] - b[j]);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else if (i == 0) {
        best = acc[0][j - 1];
      } else if (j == 0) {
        best = acc[i - 1][0];
      } else {
        best = std::min({acc[i - 1][j - 1], acc[i - 1][j], acc[i][j - 1]});
      }
      acc[i][j] = cost + best;
    }
  }
  DtwResult result;
  result.distance = acc[n - 1][m - 1];
  std::size_t i = n - 1;
  std::size_t j = m - 1;
  result.path_length = 1;
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      double diag = acc[i - 1][j - 1];
      double up = acc[i - 1][j];
      double left = acc[i][j - 1];
      double best = std::min({diag, up, left});
      if (diag == best) {
        --i;
        --j;
      } else if (up == best) {
        --i;
      } else {
        --j;
      }
    }
    ++result.path_length;
  }
  return result;
}

std::vector<double> z_normalize(const std::vector<double>& values) {
  std::size_t n = values.size();
  if (n < 2) fail(ErrorKind::DegenerateSeries, "need at least 2 values to normalize");
  KahanSum sum;
  for (double v : values) sum.add(v);
  double mean = sum.value() / n;
  KahanSum sq;
  for (double v : values) sq.add((v - mean) * (v - mean));
  double std_dev = std::sqrt(sq.value() / n);
  if (std_dev == 0.0) fail(ErrorKind::DegenerateSeries, "zero standard deviation");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (values[i] - mean) / std_dev;
  return out;
}

namespace {

// C(n, k) clamped at cap + 1 so callers can detect overflow of the cap.
std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    result = result * (n - k + i) / i;
    if (result > cap) return cap + 1;
  }
  return result;
}

double group_stat(double sum_a, std::size_t na, double total, std::size_t n) {
  double mean_a = sum_a / static_cast<double>(na);
  double mean_b = (total - sum_a) / static_cast<double>(n - na);
  return std::abs(mean_a - mean_b);
}

}  // namespace

PermutationTestResult pitman_test(const std::vector<double>& group_a,
                                  const std::vector<double>& group_b, PitmanMode mode,
                                  std::uint64_t seed, std::uint64_t draws,
                                  std::uint64_t exact_cap) {
  if (group_a.empty() || group_b.empty()) {
    fail(ErrorKind::EmptyGroup, "both groups must be non-empty");
  }
  std::vector<double> pooled = group_a;
  pooled.insert(pooled.end(), group_b.begin(), group_b.end());
  std::size_t n = pooled.size();
  std::size_t na = group_a.size();
  double total = 0.0;
  for (double v : pooled) total += v;
  double sum_a = 0.0;
  for (double v : group_a) sum_a += v;
  double observed = group_stat(sum_a, na, total, n);
  // Float ties: treat statistics within one part in 1e12 as equal.
  double tie_eps = 1e-12 * std::max(1.0, std::abs(observed));
  double threshold = observed - tie_eps;

  PermutationTestResult result;
  result.observed = observed;
  result.mode = mode;

  if (mode == PitmanMode::Exact) {
    std::uint64_t assignments = binomial_capped(n, na, exact_cap);
    if (assignments > exact_cap) {
      fail(ErrorKind::TooManyAssignments,
           "exact enumeration exceeds cap of " + std::to_string(exact_cap) + " assignments");
    }
    std::vector<std::size_t> idx(na);
    std::iota(idx.begin(), idx.end(), 0);
    std::uint64_t count = 0;
    std::uint64_t seen = 0;
    while (true) {
      double s = 0.0;
      for (std::size_t i : idx) s += pooled[i];
      if (group_stat(s, na, total, n) >= threshold) ++count;
      ++seen;
      // Advance to the next combination of indices.
      std::size_t pos = na;
      while (pos > 0 && idx[pos - 1] == n - na + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t k = pos; k < na; ++k) idx[k] = idx[k - 1] + 1;
    }
    result.p_value = static_cast<double>(count) / static_cast<double>(seen);
    result.draws = seen;
  } else {
    Rng rng(seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::uint64_t count = 0;
    for (std::uint64_t d = 0; d < draws; ++d) {
      rng.shuffle(idx);
      double s = 0.0;
      for (std::size_t i = 0; i < na; ++i) s += pooled[idx[i]];
      if (group_stat(s, na, total, n) >= threshold) ++count;
    }
    result.p_value =
        static_cast<double>(1 + count) / static_cast<double>(draws + 1);
    result.draws = draws;
  }
  return result;
}

double corpus_correlation_protocol(const IndicatorSeries& series, const ScoreTable& scores,
                                   std::uint64_t seed, int num_pairs, bool consecutive) {
  if (scores.granularity != Granularity::Corpus) {
    fail(ErrorKind::InvalidArgument, "corpus protocol needs a corpus-level score table");
  }
  if (num_pairs < 2) fail(ErrorKind::InvalidArgument, "num_pairs must be at least 2");
  std::size_t m = series.values.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (consecutive) {
    for (std::size_t i = 0; i + 1 < m; ++i) pairs.emplace_back(i, i + 1);
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) pairs.emplace_back(i, j);
    }
  }
  if (static_cast<std::size_t>(num_pairs) > pairs.size()) {
    fail(ErrorKind::InvalidArgument,
         "requested " + std::to_string(num_pairs) + " pairs, only " +
             std::to_string(pairs.size()) + " available");
  }
  Rng rng(seed);
  rng.shuffle(pairs);
  std::vector<double> indicator_deltas;
  std::vector<double> score_deltas;
  for (int p = 0; p < num_pairs; ++p) {
    auto [i, j] = pairs[p];
    const auto& [ci, vi] = series.values[i];
    const auto& [cj, vj] = series.values[j];
    indicator_deltas.push_back(vj - vi);
    score_deltas.push_back(scores.at(cj, "*") - scores.at(ci, "*"));
  }
  return std::abs(spearman(indicator_deltas, score_deltas));
}

double sentence_correlation_protocol(const ScoreTable& indicators, const ScoreTable& scores,
                                     int k, std::uint64_t seed) {
  if (indicators.granularity != Granularity::Sentence ||
      scores.granularity != Granularity::Sentence) {
    fail(ErrorKind::InvalidArgument, "sentence protocol needs sentence-level tables");
  }
  if (k < 1) fail(ErrorKind::InvalidArgument, "k must be positive");
  std::vector<int> checkpoints = indicators.checkpoints();
  if (checkpoints.size() < 2) {
    fail(ErrorKind::MisalignedCheckpoints, "need at least 2 checkpoints");
  }
  std::vector<std::string> ids = indicators.sentence_ids();
  if (static_cast<std::size_t>(k) > ids.size()) {
    fail(ErrorKind::InsufficientSentences, "k = " + std::to_string(k) + " but only " +
                                               std::to_string(ids.size()) +
                                               " sentences available");
  }
  Rng rng(seed);
  rng.shuffle(ids);
  std::vector<double> indicator_deltas;
  std::vector<double> score_deltas;
  for (int s = 0; s < k; ++s) {
    const std::string& id = ids[s];
    std::size_t first = static_cast<std::size_t>(rng.uniform_int(checkpoints.size()));
    std::size_t second = static_cast<std::size_t>(rng.uniform_int(checkpoints.size() - 1));
    if (second >= first) ++second;
    int c1 = checkpoints[first];
    int c2 = checkpoints[second];
    indicator_deltas.push_back(indicators.at(c2, id) - indicators.at(c1, id));
    score_deltas.push_back(scores.at(c2, id) - scores.at(c1, id));
  }
  return std::abs(spearman(indicator_deltas, score_deltas));
}

}  // namespace dcpl
