#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "t2/model.hpp"

namespace t2 {

struct RankResult {
  int rank = 0;  // 1-based among the scored candidates, pessimistic ties
  double mrr10 = 0, ndcg5 = 0, ndcg10 = 0;
  double hr1 = 0, hr5 = 0, hr10 = 0;
};

// Rank of the positive among `scores` with equal scores counted against it.
RankResult rank_and_score(const std::vector<double>& scores, int positive_index);

struct NegativeSample {
  std::vector<int> items;
  bool with_replacement = false;  // catalog too small for n distinct
};

NegativeSample sample_negatives(int target, int catalog_size, const std::vector<int>& user_seen,
                                int n, std::uint64_t seed);

struct MetricsTable {
  double mrr10 = 0, ndcg5 = 0, ndcg10 = 0, hr1 = 0, hr5 = 0, hr10 = 0;
  std::int64_t events = 0;
};

struct EvalResult {
  MetricsTable domain_a, domain_b, overall;
  std::int64_t replacement_warnings = 0;
};

enum class EvalSlice { Train, Validation, Test };

EvalResult evaluate(ModelParams& params, const DatasetSplit& split, EvalSlice slice,
                    const TransitionGraphs& graphs, const TrainConfig& config,
                    std::uint64_t seed, int negatives = 999);

std::string metrics_to_json(const EvalResult& result);
std::string metrics_to_csv(const EvalResult& result);

// ---- representation diagnostics -----------------------------------------

struct SimilarityReport {
  // mean cosine between pooled single-domain encodings and the matching
  // domain slice of the cross-domain encoding
  std::optional<double> align_a, align_b;
  // mean cosine between item representations grouped by feedback
  std::optional<double> sim_pp, sim_pn, sim_nn;
};

SimilarityReport similarity_diagnostics(ModelParams& params, const DatasetSplit& split,
                                        const TransitionGraphs& graphs,
                                        const TrainConfig& config);

std::string similarity_to_json(const SimilarityReport& report);

// Minimal bar-chart SVG of the report (optional plot output).
std::string similarity_to_svg(const SimilarityReport& report);

}  // namespace t2
