#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmatch/common.hpp"
#include "xmatch/corpus.hpp"
#include "xmatch/embedder.hpp"

namespace xmatch {

// Per-anchor descending top-h lists of hardest non-corresponding candidates.
struct OfflineNegativeIndex {
  std::size_t h_text = 0;
  std::size_t h_image = 0;
  std::string source = "self";  // "self:<hash>" or "teacher:<hash>"
  std::vector<std::vector<std::uint32_t>> text_lists;   // per image anchor
  std::vector<std::vector<std::uint32_t>> image_lists;  // per text anchor
};

// Online hard negatives of one positive pair, as batch-local positions.
struct OnlinePick {
  std::size_t t_on_col = 0;  // column of the hardest eligible text
  std::size_t i_on_row = 0;  // row of the hardest eligible image
};

// Batch of B positive pairs: scores is B x B row-major with
// scores[a*B + b] = S(image of pair a, text of pair b). A text column is
// eligible for pair k when its owning image differs from pair k's image
// (this excludes every caption of the anchor present in the batch); image
// rows symmetric. Ties break to the lowest position.
std::vector<OnlinePick> mine_online(std::span<const double> scores,
                                    std::span<const std::uint32_t> row_image_ids,
                                    std::span<const std::uint32_t> col_text_owner_ids);

// Full-scan top-h ranking of non-corresponding candidates for every anchor,
// descending score, ties to the lowest id. Partition over workers does not
// affect the result.
OfflineNegativeIndex build_offline_index(const TwoTowerModel& model, const Corpus& corpus,
                                         std::size_t h_text, std::size_t h_image,
                                         std::size_t workers = 1);

// h defaults scaled from the full-size values 300/60 by corpus size,
// keeping the caption-multiplicity ratio.
std::size_t default_h_text(std::size_t n_texts);
std::size_t default_h_image(std::size_t h_text);

enum class SamplerMode { Uniform, TruncatedNormal };
SamplerMode parse_sampler(const std::string& name);
std::string sampler_name(SamplerMode m);

struct OfflineSelection {
  std::uint32_t t_off = 0;
  std::uint32_t i_off = 0;
  std::uint32_t i_tilde = 0;  // owning image of t_off
  std::uint32_t t_tilde = 0;  // lowest-indexed caption of i_off
};

// Draws t_off from the image anchor's list and i_off from the text anchor's
// list; redraws both (at most 100 times) while (i_off, t_off) is a positive
// pair. Throws MiningError on an empty list and a sampling error on redraw
// exhaustion.
OfflineSelection sample_offline(const OfflineNegativeIndex& index, const Corpus& corpus,
                                std::uint32_t image, std::uint32_t text, Rng& rng,
                                SamplerMode mode);

struct RankStats {
  double mean_min_rank = 0.0;
  double p_top_k = 0.0;
};

// Monte Carlo for the global rank of a batch-mined hard negative: draws
// batch_size-1 distinct ranks uniformly from {1..n_corpus} and records the
// minimum. Closed forms: E[min] = (N+1)/B, P(min <= k) = 1-(1-k/N)^(B-1)
// approximately.
RankStats rank_statistics(std::size_t n_corpus, std::size_t batch_size, std::size_t top_k,
                          std::size_t trials, Rng& rng);

// Index file: text header then one `I <id>: ...` / `T <id>: ...` line per anchor.
void save_index(const OfflineNegativeIndex& index, const std::string& path);
OfflineNegativeIndex load_index(const std::string& path);

}  // namespace xmatch
