// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ranking, recall/median-rank metrics, the mean-pool baseline and two-stage
// re-ranking. Query i's ground truth is candidate i in both directions.
// Equal scores are ordered by ascending candidate index, which is the
// item-id order of a loaded corpus.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tefal/corpus.h"
#include "tefal/matrix.h"
#include "tefal/model.h"

namespace tefal {

enum class Direction { kTextToVideo, kVideoToText };
std::string_view direction_name(Direction d);  // t2v | v2t

struct RankingMetrics {
  Direction direction = Direction::kTextToVideo;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double median_rank = 0.0;
  double mean_rank = 0.0;
  std::size_t queries = 0;
  std::size_t candidates = 0;
};

/// Ranks are 1-based. MdR is the lower middle value for even counts.
RankingMetrics compute_metrics(std::span<const std::size_t> ranks, std::size_t candidate_count,
                               Direction direction = Direction::kTextToVideo);

/// Candidate indices by descending score, ties by ascending index.
std::vector<std::size_t> order_by_score(std::span<const double> scores);

/// 1-based rank of candidate `target` under order_by_score, in O(n).
std::size_t rank_of(std::span<const double> scores, std::size_t target);

/// Rank of the diagonal entry in every row of a square score matrix.
std::vector<std::size_t> diagonal_ranks(const Matrix& scores);

Matrix mean_pool(const Matrix& frames);

/// scores .* softmax over the query axis (each column) of scores * temp.
Matrix dual_softmax_postprocess(const Matrix& sim, double temp);

/// Worker count: TEFAL_THREADS if set and positive, else hardware concurrency.
std::size_t default_thread_count();

/// T x V matrix of pair_similarity(text i, item j). Rows are computed in
/// parallel; each entry is independent so the result does not depend on the
/// thread count.
Matrix similarity_matrix(const Model& model, const Corpus& corpus, std::size_t threads = 0);

struct ExhaustiveRanking {
  Matrix similarity;  // T x V
  std::vector<std::size_t> t2v_ranks;
  std::vector<std::size_t> v2t_ranks;
  std::uint64_t model_evaluations = 0;
};

ExhaustiveRanking rank_exhaustive(const Model& model, const Corpus& corpus,
                                  std::size_t threads = 0);

/// Stage-1 ordering of every candidate for one query vector.
class ShortlistProvider {
 public:
  virtual ~ShortlistProvider() = default;
  virtual std::size_t candidate_count() const = 0;
  /// All candidate indices, best first. Increments `comparisons` once per
  /// candidate scored.
  virtual std::vector<std::size_t> stage1_order(std::span<const double> query,
                                                std::uint64_t& comparisons) const = 0;
};

/// Exact cosine scan over a fixed candidate matrix (one row per candidate).
class ExactCosineShortlist : public ShortlistProvider {
 public:
  explicit ExactCosineShortlist(Matrix candidates);
  std::size_t candidate_count() const override { return candidates_.rows(); }
  std::vector<std::size_t> stage1_order(std::span<const double> query,
                                        std::uint64_t& comparisons) const override;

 private:
  Matrix candidates_;
};

struct RerankCounters {
  std::uint64_t mean_pools = 0;          // one per video: the O(V) term
  std::uint64_t stage1_comparisons = 0;  // cheap cosine scores
  std::uint64_t stage2_evaluations = 0;  // full-model pair scores, <= K per query
  std::uint64_t max_stage1_per_query = 0;
  std::uint64_t max_stage2_per_query = 0;

  RerankCounters& operator+=(const RerankCounters& o);
};

struct RerankResult {
  std::vector<std::size_t> ranks;
  RerankCounters counters;
};

/// Stage 1 ranks all candidates with `provider`; stage 2 re-scores the top
/// `k` with the full model; the rest keep their stage-1 order below them.
/// `query_vectors` holds one stage-1 vector per query.
RerankResult rerank_two_stage(const Model& model, const Corpus& corpus, Direction direction,
                              const Matrix& query_vectors, const ShortlistProvider& provider,
                              std::size_t k, std::size_t threads = 0);

/// Mean-pooled-frame stage 1 in the given direction.
RerankResult rerank_two_stage(const Model& model, const Corpus& corpus, Direction direction,
                              std::size_t k, std::size_t threads = 0);

/// Parses "N" or "P%" (percent of `total`, rounded up, at least 1).
std::size_t parse_shortlist_size(std::string_view text, std::size_t total);

struct EvalOptions {
  std::optional<std::size_t> shortlist;  // two-stage when set
  std::optional<double> dsl_temperature;  // exhaustive only
  std::size_t threads = 0;
};

struct EvalResult {
  RankingMetrics t2v;
  RankingMetrics v2t;
  std::vector<std::size_t> t2v_ranks;
  std::vector<std::size_t> v2t_ranks;
  std::optional<RerankCounters> counters;
};

EvalResult evaluate(const Model& model, const Corpus& corpus, const EvalOptions& options = {});

}  // namespace tefal
