#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xmatch/common.hpp"
#include "xmatch/corpus.hpp"
#include "xmatch/embedder.hpp"
#include "xmatch/evaluator.hpp"
#include "xmatch/losses.hpp"
#include "xmatch/miner.hpp"

namespace xmatch {

struct RoundPlan {
  LossVariant variant = LossVariant::Online;
  std::size_t epochs_hi = 15;
  std::size_t epochs_lo = 15;
  double lr_hi = 0.05;
  double lr_lo = 0.005;
  bool from_scratch = true;  // round 2 only

  std::size_t epochs() const { return epochs_hi + epochs_lo; }
  void validate() const;
};

struct TrainPlan {
  RoundPlan round1{.variant = LossVariant::Online};
  RoundPlan round2{.variant = LossVariant::Adaptive,
                   .epochs_hi = 10,
                   .epochs_lo = 10};
  std::size_t batch_size = 128;
  std::size_t d_emb = 16;
  std::uint64_t seed = 1;
  std::string index_source = "self";  // "self" | "teacher"
  std::string teacher_path;           // checkpoint prefix when index_source=teacher
  LossConfig loss;                    // margins/alpha/beta; variant comes from the round
  SamplerMode sampler = SamplerMode::Uniform;
  std::size_t h_text = 0;   // 0 = scale from corpus size
  std::size_t h_image = 0;  // 0 = h_text/5 rounded up
  std::size_t workers = 1;
  bool trace_batches = false;  // record per-batch selections for audits

  void validate() const;
};

// one batch's selections, recorded when trace_batches is on
struct BatchTrace {
  std::size_t epoch = 0;
  std::vector<std::uint32_t> image_ids;  // positive pair k = (image_ids[k], text_ids[k])
  std::vector<std::uint32_t> text_ids;
  std::vector<std::uint32_t> t_on;  // global ids, parallel to the pairs
  std::vector<std::uint32_t> i_on;
};

struct TrainResult {
  TwoTowerModel model;
  std::vector<EpochMetrics> log;  // one row per epoch, validation split
  std::vector<BatchTrace> traces;
};

// One training round: seeded pair shuffling, one positive pair per image per
// batch, online mining, offline sampling when the variant calls for it,
// analytic gradients, plain SGD with the hi->lo learning-rate switch, and
// per-epoch validation metrics.
TrainResult train_round(const TwoTowerModel& model_init, const Corpus& train_corpus,
                        const Corpus& val_corpus, const RoundPlan& round,
                        const TrainPlan& plan, const OfflineNegativeIndex* index,
                        Rng& rng);

struct TwoRoundResult {
  TwoTowerModel final_model;
  std::vector<EpochMetrics> round1_log;
  std::vector<EpochMetrics> round2_log;
  OfflineNegativeIndex index;
  std::string round1_checkpoint;  // empty when round 1 was skipped (teacher)
  std::string final_checkpoint;
  std::string index_path;
};

// Round 1 with the online loss, offline index construction (from the round-1
// model or a teacher checkpoint, in which case round 1 is skipped), then
// round 2 from freshly initialized parameters (or from the round-1 model when
// from_scratch is off). Artifacts are persisted under out_dir.
TwoRoundResult run_two_round(const TrainPlan& plan, const Corpus& train_corpus,
                             const Corpus& val_corpus, const std::string& out_dir);

bool variant_needs_index(LossVariant v);

std::size_t resolved_h_text(const TrainPlan& plan, const Corpus& corpus);
std::size_t resolved_h_image(const TrainPlan& plan, const Corpus& corpus);

}  // namespace xmatch
