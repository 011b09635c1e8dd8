#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmatch/common.hpp"
#include "xmatch/corpus.hpp"
#include "xmatch/embedder.hpp"

namespace xmatch {

// Bucket edges for the cross-retrieval rank histogram:
// {1, 2-10, 11-50, 51-200, >200}
inline constexpr std::array<std::uint64_t, 4> kCrossRankBucketUpper = {1, 10, 50, 200};

struct RetrievalReport {
  // image query -> texts ("sentence retrieval") and text query -> images
  double r1_i2t = 0, r5_i2t = 0, r10_i2t = 0;
  double r1_t2i = 0, r5_t2i = 0, r10_t2i = 0;
  double rsum = 0;  // 100 * sum of the six recalls
  std::array<std::uint64_t, 5> cross_rank_histogram = {0, 0, 0, 0, 0};

  std::string csv() const;
  std::string table(const std::string& label) const;
};

// Ranking-based evaluation of an explicit score table (n_images x n_texts,
// row-major). An image query counts a hit at K if any of its captions ranks
// in the top K; ties break to the lowest candidate index.
RetrievalReport evaluate_scores(std::span<const double> scores, std::size_t n_images,
                                std::size_t n_texts,
                                const std::vector<std::vector<std::uint32_t>>& captions_of,
                                const std::vector<std::uint32_t>& image_of);

RetrievalReport evaluate(const TwoTowerModel& model, const Corpus& split,
                         std::size_t workers = 1);

// max(caption_count*r_i - (caption_count-1), r_t); with caption_count=5 this
// is the balanced worst-case rank of a positive pair across both directions.
std::uint64_t cross_retrieval_rank(std::uint64_t r_i, std::uint64_t r_t,
                                   std::size_t caption_count = 5);

// One metric-log row (CSV schema shared with the trainer).
struct EpochMetrics {
  std::uint64_t epoch = 0;
  std::string split = "val";
  RetrievalReport report;
  double mean_batch_loss = 0.0;
  std::uint64_t neg_weight_events = 0;
  double secs_per_batch = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);
void save_metric_log(const std::vector<EpochMetrics>& log, const std::string& path);
std::vector<EpochMetrics> load_metric_log(const std::string& path);

struct ComparisonReport {
  std::vector<double> delta_r1_i2t;  // b - a, per epoch
  std::vector<double> delta_r1_t2i;
  // first 1-based epoch where run b's R@1 exceeds run a's best; 0 = never
  std::uint64_t epochs_to_surpass_i2t = 0;
  std::uint64_t epochs_to_surpass_t2i = 0;
  std::array<std::int64_t, 5> cross_hist_delta = {0, 0, 0, 0, 0};

  std::string csv() const;
};

// throws EvalError when the epoch grids differ
ComparisonReport compare_runs(std::span<const EpochMetrics> log_a,
                              std::span<const EpochMetrics> log_b);

}  // namespace xmatch
