#pragma once

#include <cstdint>
#include <vector>

#include "dcpl/indicators.hpp"
#include "dcpl/scoring.hpp"

namespace dcpl {

// Average ranks for ties, 1-based.
std::vector<double> average_ranks(const std::vector<double>& values);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct DtwResult {
  double distance = 0.0;
  std::size_t path_length = 0;
};

// Classic unconstrained alignment with point cost |a_i - b_j| and
// match/insert/delete steps.
DtwResult dtw_distance(const std::vector<double>& a, const std::vector<double>& b);

// (v - mean) / population std, order-preserving.
std::vector<double> z_normalize(const std::vector<double>& values);

enum class PitmanMode { Exact, MonteCarlo };

struct PermutationTestResult {
  double p_value = 1.0;
  double observed = 0.0;
  PitmanMode mode = PitmanMode::Exact;
  std::uint64_t draws = 0;  // assignments examined (exact: full count)
};

constexpr std::uint64_t kDefaultExactCap = 10000000;

// Two-sided test on |mean(a) - mean(b)| under relabeling of the pooled
// values. Exact mode enumerates every assignment (observed one included);
// Monte Carlo uses the add-one estimator.
PermutationTestResult pitman_test(const std::vector<double>& group_a,
                                  const std::vector<double>& group_b, PitmanMode mode,
                                  std::uint64_t seed = 0, std::uint64_t draws = 100000,
                                  std::uint64_t exact_cap = kDefaultExactCap);

// Samples checkpoint pairs, correlates signed indicator deltas against signed
// corpus-score deltas, and returns |spearman|. Consecutive pairing by
// default; the unpaired variant samples arbitrary checkpoint pairs.
double corpus_correlation_protocol(const IndicatorSeries& series, const ScoreTable& scores,
                                   std::uint64_t seed, int num_pairs, bool consecutive = true);

// Per-sentence variant: for each of k sampled sentences, two distinct random
// checkpoints give one (indicator delta, score delta) pair; returns
// |spearman| over the pooled pairs.
double sentence_correlation_protocol(const ScoreTable& indicators, const ScoreTable& scores,
                                     int k, std::uint64_t seed);

}  // namespace dcpl
