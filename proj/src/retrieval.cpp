// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include "tefal/retrieval.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

#include "tefal/objective.h"
#include "tefal/ops.h"

namespace tefal {

namespace {

// Runs fn(begin, end, worker) over contiguous chunks of [0, n).
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t threads, Fn fn) {
  if (threads == 0) threads = default_thread_count();
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    fn(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t begin = std::min(n, w * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&, begin, end, w] {
      try {
        fn(begin, end, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

bool ranks_before(double score_a, std::size_t a, double score_b, std::size_t b) {
  return score_a > score_b || (score_a == score_b && a < b);
}

void require_nonempty(const Corpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("corpus is empty; nothing to rank");
}

struct EncodedCorpus {
  std::vector<EncodedText> texts;
  std::vector<EncodedItem> items;
};

EncodedCorpus encode_corpus(const Model& model, const Corpus& corpus, std::size_t threads) {
  EncodedCorpus e;
  e.texts.resize(corpus.size());
  e.items.resize(corpus.size());
  parallel_chunks(corpus.size(), threads, [&](std::size_t b, std::size_t end, std::size_t) {
    for (std::size_t i = b; i < end; ++i) {
      e.texts[i] = encode_text(model, corpus.items[i].text);
      e.items[i] = encode_item(model, corpus.items[i]);
    }
  });
  return e;
}

}  // namespace

std::string_view direction_name(Direction d) {
  return d == Direction::kTextToVideo ? "t2v" : "v2t";
}

RankingMetrics compute_metrics(std::span<const std::size_t> ranks, std::size_t candidate_count,
                               Direction direction) {
  if (ranks.empty()) throw std::invalid_argument("compute_metrics: no ranks");
  RankingMetrics m;
  m.direction = direction;
  m.queries = ranks.size();
  m.candidates = candidate_count;
  std::size_t hit1 = 0, hit5 = 0, hit10 = 0;
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r < 1 || r > candidate_count) {
      throw std::out_of_range("rank " + std::to_string(r) + " outside [1, " +
                              std::to_string(candidate_count) + "]");
    }
    hit1 += r <= 1;
    hit5 += r <= 5;
    hit10 += r <= 10;
    total += static_cast<double>(r);
  }
  const auto n = static_cast<double>(ranks.size());
  m.r1 = 100.0 * static_cast<double>(hit1) / n;
  m.r5 = 100.0 * static_cast<double>(hit5) / n;
  m.r10 = 100.0 * static_cast<double>(hit10) / n;
  m.mean_rank = total / n;
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((sorted.size() - 1) / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  m.median_rank = static_cast<double>(*mid);
  return m;
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a], a, scores[b], b);
  });
  return idx;
}

std::size_t rank_of(std::span<const double> scores, std::size_t target) {
  if (target >= scores.size()) throw std::out_of_range("rank_of: target outside candidates");
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j != target && ranks_before(scores[j], j, scores[target], target)) ++rank;
  }
  return rank;
}

std::vector<std::size_t> diagonal_ranks(const Matrix& scores) {
  if (scores.rows() != scores.cols()) {
    throw DimensionError("diagonal_ranks: expected a square matrix, got " + scores.shape_string());
  }
  std::vector<std::size_t> ranks(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) ranks[i] = rank_of(scores.row(i), i);
  return ranks;
}

Matrix mean_pool(const Matrix& frames) { return column_mean(frames); }

Matrix dual_softmax_postprocess(const Matrix& sim, double temp) {
  if (!(temp > 0.0)) throw std::invalid_argument("dual softmax temperature must be positive");
  const Matrix col_softmax = transpose(softmax_rows(transpose(scale(sim, temp))));
  return hadamard(sim, col_softmax);
}

std::size_t default_thread_count() {
  if (const char* env = std::getenv("TEFAL_THREADS")) {
    std::size_t v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec == std::errc() && ptr == end && v > 0) return v;
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

Matrix similarity_matrix(const Model& model, const Corpus& corpus, std::size_t threads) {
  require_nonempty(corpus);
  const EncodedCorpus enc = encode_corpus(model, corpus, threads);
  const std::size_t n = corpus.size();
  Matrix sim(n, n);
  parallel_chunks(n, threads, [&](std::size_t b, std::size_t end, std::size_t) {
    for (std::size_t i = b; i < end; ++i) {
      for (std::size_t j = 0; j < n; ++j) sim(i, j) = pair_similarity(model, enc.texts[i], enc.items[j]);
    }
  });
  return sim;
}

ExhaustiveRanking rank_exhaustive(const Model& model, const Corpus& corpus, std::size_t threads) {
  ExhaustiveRanking r;
  r.similarity = similarity_matrix(model, corpus, threads);
  r.t2v_ranks = diagonal_ranks(r.similarity);
  r.v2t_ranks = diagonal_ranks(transpose(r.similarity));
  r.model_evaluations = static_cast<std::uint64_t>(corpus.size()) * corpus.size();
  return r;
}

ExactCosineShortlist::ExactCosineShortlist(Matrix candidates) : candidates_(std::move(candidates)) {}

std::vector<std::size_t> ExactCosineShortlist::stage1_order(std::span<const double> query,
                                                            std::uint64_t& comparisons) const {
  if (query.size() != candidates_.cols()) {
    throw DimensionError("stage-1 query width " + std::to_string(query.size()) +
                         " does not match candidate width " + std::to_string(candidates_.cols()));
  }
  std::vector<double> scores(candidates_.rows());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    scores[j] = cosine_similarity(query, candidates_.row(j)).value;
  }
  comparisons += scores.size();
  return order_by_score(scores);
}

RerankCounters& RerankCounters::operator+=(const RerankCounters& o) {
  mean_pools += o.mean_pools;
  stage1_comparisons += o.stage1_comparisons;
  stage2_evaluations += o.stage2_evaluations;
  max_stage1_per_query = std::max(max_stage1_per_query, o.max_stage1_per_query);
  max_stage2_per_query = std::max(max_stage2_per_query, o.max_stage2_per_query);
  return *this;
}

RerankResult rerank_two_stage(const Model& model, const Corpus& corpus, Direction direction,
                              const Matrix& query_vectors, const ShortlistProvider& provider,
                              std::size_t k, std::size_t threads) {
  require_nonempty(corpus);
  const std::size_t n = corpus.size();
  if (provider.candidate_count() != n || query_vectors.rows() != n) {
    throw DimensionError("rerank: provider and queries must cover the whole corpus");
  }
  if (k < 1 || k > n) {
    throw std::out_of_range("shortlist size " + std::to_string(k) + " outside [1, " +
                            std::to_string(n) + "]");
  }
  if (threads == 0) threads = default_thread_count();
  const EncodedCorpus enc = encode_corpus(model, corpus, threads);

  RerankResult result;
  result.ranks.resize(n);
  std::vector<RerankCounters> per_worker(std::max<std::size_t>(1, std::min(threads, n)));
  parallel_chunks(n, threads, [&](std::size_t b, std::size_t end, std::size_t w) {
    RerankCounters& c = per_worker[w];
    std::vector<double> scores(k);
    for (std::size_t q = b; q < end; ++q) {
      std::uint64_t cmp = 0;
      const std::vector<std::size_t> order = provider.stage1_order(query_vectors.row(q), cmp);
      c.stage1_comparisons += cmp;
      c.max_stage1_per_query = std::max(c.max_stage1_per_query, cmp);

      std::size_t gt_slot = n;
      for (std::size_t s = 0; s < n; ++s) {
        if (order[s] == q) gt_slot = s;
      }
      if (gt_slot >= k) {
        result.ranks[q] = gt_slot + 1;
        continue;
      }
      for (std::size_t s = 0; s < k; ++s) {
        const std::size_t cand = order[s];
        scores[s] = direction == Direction::kTextToVideo
                        ? pair_similarity(model, enc.texts[q], enc.items[cand])
                        : pair_similarity(model, enc.texts[cand], enc.items[q]);
      }
      c.stage2_evaluations += k;
      c.max_stage2_per_query = std::max<std::uint64_t>(c.max_stage2_per_query, k);
      std::size_t rank = 1;
      for (std::size_t s = 0; s < k; ++s) {
        if (s != gt_slot && ranks_before(scores[s], order[s], scores[gt_slot], q)) ++rank;
      }
      result.ranks[q] = rank;
    }
  });
  for (const auto& c : per_worker) result.counters += c;
  return result;
}

RerankResult rerank_two_stage(const Model& model, const Corpus& corpus, Direction direction,
                              std::size_t k, std::size_t threads) {
  require_nonempty(corpus);
  const std::size_t n = corpus.size();
  Matrix pooled(n, corpus.dim());
  Matrix texts(n, corpus.dim());
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix p = mean_pool(corpus.items[i].frames);
    std::copy(p.data().begin(), p.data().end(), pooled.row(i).begin());
    const auto t = corpus.items[i].text.row(0);
    std::copy(t.begin(), t.end(), texts.row(i).begin());
  }
  RerankResult r;
  if (direction == Direction::kTextToVideo) {
    r = rerank_two_stage(model, corpus, direction, texts, ExactCosineShortlist(pooled), k, threads);
  } else {
    r = rerank_two_stage(model, corpus, direction, pooled, ExactCosineShortlist(texts), k, threads);
  }
  r.counters.mean_pools = n;
  return r;
}

std::size_t parse_shortlist_size(std::string_view text, std::size_t total) {
  const bool percent = !text.empty() && text.back() == '%';
  const std::string_view digits = percent ? text.substr(0, text.size() - 1) : text;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size() || !(value > 0.0)) {
    throw std::invalid_argument("invalid shortlist size '" + std::string(text) +
                                "'; expected N or P%");
  }
  double k = value;
  if (percent) {
    if (value > 100.0) throw std::invalid_argument("shortlist percentage above 100");
    k = std::ceil(value * static_cast<double>(total) / 100.0 - 1e-9);
  } else if (value != std::floor(value)) {
    throw std::invalid_argument("shortlist size must be an integer or a percentage");
  }
  const auto kk = static_cast<std::size_t>(std::max(1.0, k));
  if (kk > total) {
    throw std::out_of_range("shortlist size " + std::to_string(kk) + " exceeds corpus size " +
                            std::to_string(total));
  }
  return kk;
}

EvalResult evaluate(const Model& model, const Corpus& corpus, const EvalOptions& options) {
  require_nonempty(corpus);
  const std::size_t n = corpus.size();
  EvalResult out;
  if (options.shortlist) {
    if (options.dsl_temperature) {
      throw std::invalid_argument("dual softmax needs the full similarity matrix; drop the shortlist");
    }
    RerankResult t2v = rerank_two_stage(model, corpus, Direction::kTextToVideo, *options.shortlist,
                                        options.threads);
    RerankResult v2t = rerank_two_stage(model, corpus, Direction::kVideoToText, *options.shortlist,
                                        options.threads);
    out.t2v_ranks = std::move(t2v.ranks);
    out.v2t_ranks = std::move(v2t.ranks);
    RerankCounters c = t2v.counters;
    c += v2t.counters;
    c.mean_pools = t2v.counters.mean_pools;
    out.counters = c;
  } else {
    Matrix sim = similarity_matrix(model, corpus, options.threads);
    Matrix sim_t = transpose(sim);
    if (options.dsl_temperature) {
      sim = dual_softmax_postprocess(sim, *options.dsl_temperature);
      sim_t = dual_softmax_postprocess(sim_t, *options.dsl_temperature);
    }
    out.t2v_ranks = diagonal_ranks(sim);
    out.v2t_ranks = diagonal_ranks(sim_t);
  }
  out.t2v = compute_metrics(out.t2v_ranks, n, Direction::kTextToVideo);
  out.v2t = compute_metrics(out.v2t_ranks, n, Direction::kVideoToText);
  return out;
}

}  // namespace tefal
