#include "xmatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>

namespace xmatch {

void RoundPlan::validate() const {
  if (epochs() < 1) throw ConfigError("plan: a round needs at least one epoch");
  if (lr_hi < lr_lo || lr_lo <= 0.0)
    throw ConfigError("plan: learning rates must satisfy lr_hi >= lr_lo > 0");
}

void TrainPlan::validate() const {
  round1.validate();
  round2.validate();
  if (batch_size < 2) throw ConfigError("plan: batch_size must be >= 2");
  if (index_source != "self" && index_source != "teacher")
    throw ConfigError("plan: index_source must be self or teacher");
  if (index_source == "teacher" && teacher_path.empty())
    throw ConfigError("plan: teacher index source needs a checkpoint path");
  loss.validate();
}

bool variant_needs_index(LossVariant v) {
  switch (v) {
    case LossVariant::Std:
    case LossVariant::Online:
      return false;
    case LossVariant::OffTri:
    case LossVariant::OffQuin:
    case LossVariant::Adaptive:
    case LossVariant::OffOnly:
      return true;
  }
  throw ContractError("variant_needs_index: bad enum value");
}

std::size_t resolved_h_text(const TrainPlan& plan, const Corpus& corpus) {
  return plan.h_text > 0 ? plan.h_text : default_h_text(corpus.n_texts());
}

std::size_t resolved_h_image(const TrainPlan& plan, const Corpus& corpus) {
  if (plan.h_image > 0) return plan.h_image;
  return default_h_image(resolved_h_text(plan, corpus));
}

namespace {

struct Needs {
  bool online = false;
  bool offline = false;
  bool derived = false;
  bool lists = false;
};

Needs variant_needs(LossVariant v) {
  switch (v) {
    case LossVariant::Std: return {.lists = true};
    case LossVariant::Online: return {.online = true};
    case LossVariant::OffTri: return {.online = true, .offline = true};
    case LossVariant::OffQuin:
    case LossVariant::Adaptive:
      return {.online = true, .offline = true, .derived = true};
    case LossVariant::OffOnly: return {.offline = true, .derived = true};
  }
  throw ContractError("variant_needs: bad enum value");
}

double pair_score(const TwoTowerModel& model, const Corpus& corpus, std::uint32_t image,
                  std::uint32_t text) {
  return score(model, std::span(corpus.image_row(image), model.d_in),
               std::span(corpus.text_row(text), model.d_in));
}

}  // namespace

TrainResult train_round(const TwoTowerModel& model_init, const Corpus& train_corpus,
                        const Corpus& val_corpus, const RoundPlan& round,
                        const TrainPlan& plan, const OfflineNegativeIndex* index,
                        Rng& rng) {
  round.validate();
  if (variant_needs_index(round.variant) && index == nullptr)
    throw ContractError("train_round: variant needs an offline index");
  if (train_corpus.n_images() < 2) throw TrainError("train_round: corpus too small");

  LossConfig cfg = plan.loss;
  cfg.variant = round.variant;
  cfg.validate();
  const Needs need = variant_needs(round.variant);

  TrainResult result;
  result.model = model_init;
  TwoTowerModel& model = result.model;

  const std::size_t n_images = train_corpus.n_images();
  std::vector<std::uint32_t> order(n_images);
  for (std::uint32_t i = 0; i < n_images; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= round.epochs(); ++epoch) {
    const double lr = epoch <= round.epochs_hi ? round.lr_hi : round.lr_lo;
    Rng epoch_rng = rng.fork(epoch);

    // seeded shuffle; one caption sampled per image so the in-batch positive
    // set of each anchor is exactly its own pair
    for (std::size_t i = n_images - 1; i > 0; --i)
      std::swap(order[i], order[epoch_rng.next_below(i + 1)]);
    std::vector<std::uint32_t> caption(n_images);
    for (std::size_t i = 0; i < n_images; ++i) {
      const auto& caps = train_corpus.captions_of[order[i]];
      caption[i] = caps[epoch_rng.next_below(caps.size())];
    }

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    std::uint64_t neg_weight_events = 0;
    const auto t0 = std::chrono::steady_clock::now();

    for (std::size_t start = 0; start + 2 <= n_images; start += plan.batch_size) {
      const std::size_t b = std::min(plan.batch_size, n_images - start);
      if (b < 2) break;
      std::vector<std::uint32_t> batch_images(order.begin() + start,
                                              order.begin() + start + b);
      std::vector<std::uint32_t> batch_texts(caption.begin() + start,
                                             caption.begin() + start + b);

      const std::vector<double> scores =
          score_matrix(model, train_corpus, batch_images, batch_texts, plan.workers);

      std::vector<std::uint32_t> owners(b);
      for (std::size_t k = 0; k < b; ++k) owners[k] = train_corpus.image_of[batch_texts[k]];

      std::vector<OnlinePick> picks;
      if (need.online || need.lists)
        picks = mine_online(scores, batch_images, owners);

      std::vector<PairScores> pair_scores(b);
      std::vector<OfflineSelection> selections(b);
      // id pairs behind each scored slot, for mapping grads back to parameters
      std::vector<std::vector<std::uint32_t>> neg_text_ids(b), neg_image_rows(b);

      for (std::size_t k = 0; k < b; ++k) {
        PairScores& p = pair_scores[k];
        p.s_pos = scores[k * b + k];
        if (need.online) {
          p.s_t_on = scores[k * b + picks[k].t_on_col];
          p.s_i_on = scores[picks[k].i_on_row * b + k];
        }
        if (need.lists) {
          for (std::size_t j = 0; j < b; ++j) {
            if (owners[j] != batch_images[k]) {
              p.neg_texts.push_back(scores[k * b + j]);
              neg_text_ids[k].push_back(batch_texts[j]);
            }
            if (batch_images[j] != owners[k]) {
              p.neg_images.push_back(scores[j * b + k]);
              neg_image_rows[k].push_back(batch_images[j]);
            }
          }
        }
        if (need.offline) {
          Rng sample_rng = epoch_rng.fork(1000 + start + k);
          selections[k] = sample_offline(*index, train_corpus, batch_images[k],
                                         batch_texts[k], sample_rng, plan.sampler);
          const OfflineSelection& sel = selections[k];
          p.s_t_off = pair_score(model, train_corpus, batch_images[k], sel.t_off);
          p.s_i_off = pair_score(model, train_corpus, sel.i_off, batch_texts[k]);
          if (need.derived) {
            p.s_cross = pair_score(model, train_corpus, sel.i_off, sel.t_off);
            p.s_tilde = pair_score(model, train_corpus, sel.i_tilde, sel.t_tilde);
          }
        }
      }

      const double batch_loss = loss_value(pair_scores, cfg);
      if (!std::isfinite(batch_loss))
        throw TrainError("train_round: non-finite loss at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(n_batches));
      loss_sum += batch_loss;

      if (round.variant == LossVariant::Adaptive) {
        for (const PairScores& p : pair_scores) {
          if (cfg.beta - (*p.s_t_off - *p.s_t_on) / cfg.alpha < 0.0) ++neg_weight_events;
          if (cfg.beta - (*p.s_i_off - *p.s_i_on) / cfg.alpha < 0.0) ++neg_weight_events;
        }
      }

      const std::vector<PairScoreGrad> grads = grad_scores(pair_scores, cfg);
      ScoreGrad sg;
      for (std::size_t k = 0; k < b; ++k) {
        const PairScoreGrad& g = grads[k];
        if (g.g_pos != 0.0) sg.push_back({batch_images[k], batch_texts[k], g.g_pos});
        if (need.online) {
          if (g.g_t_on != 0.0)
            sg.push_back({batch_images[k], batch_texts[picks[k].t_on_col], g.g_t_on});
          if (g.g_i_on != 0.0)
            sg.push_back({batch_images[picks[k].i_on_row], batch_texts[k], g.g_i_on});
        }
        if (need.offline) {
          const OfflineSelection& sel = selections[k];
          if (g.g_t_off != 0.0) sg.push_back({batch_images[k], sel.t_off, g.g_t_off});
          if (g.g_i_off != 0.0) sg.push_back({sel.i_off, batch_texts[k], g.g_i_off});
          if (need.derived) {
            if (g.g_cross != 0.0) sg.push_back({sel.i_off, sel.t_off, g.g_cross});
            if (g.g_tilde != 0.0) sg.push_back({sel.i_tilde, sel.t_tilde, g.g_tilde});
          }
        }
        if (need.lists) {
          for (std::size_t j = 0; j < g.g_neg_texts.size(); ++j)
            if (g.g_neg_texts[j] != 0.0)
              sg.push_back({batch_images[k], neg_text_ids[k][j], g.g_neg_texts[j]});
          for (std::size_t j = 0; j < g.g_neg_images.size(); ++j)
            if (g.g_neg_images[j] != 0.0)
              sg.push_back({neg_image_rows[k][j], batch_texts[k], g.g_neg_images[j]});
        }
      }

      const ModelGrad grad = backward(model, train_corpus, sg);
      sgd_step(model, grad, lr);

      if (plan.trace_batches) {
        BatchTrace trace;
        trace.epoch = epoch;
        trace.image_ids = batch_images;
        trace.text_ids = batch_texts;
        if (need.online) {
          for (std::size_t k = 0; k < b; ++k) {
            trace.t_on.push_back(batch_texts[picks[k].t_on_col]);
            trace.i_on.push_back(batch_images[picks[k].i_on_row]);
          }
        }
        result.traces.push_back(std::move(trace));
      }
      ++n_batches;
    }

    const auto t1 = std::chrono::steady_clock::now();
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.split = val_corpus.split;
    metrics.report = evaluate(model, val_corpus, plan.workers);
    metrics.mean_batch_loss = n_batches > 0 ? loss_sum / static_cast<double>(n_batches) : 0.0;
    metrics.neg_weight_events = neg_weight_events;
    metrics.secs_per_batch =
        n_batches > 0
            ? std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(n_batches)
            : 0.0;
    result.log.push_back(std::move(metrics));
    model.epoch = epoch;
  }
  return result;
}

TwoRoundResult run_two_round(const TrainPlan& plan, const Corpus& train_corpus,
                             const Corpus& val_corpus, const std::string& out_dir) {
  plan.validate();
  if (!variant_needs_index(plan.round2.variant))
    throw ConfigError("run_two_round: round-2 variant does not use an offline index; "
                      "use a single training round instead");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  Rng base(plan.seed);
  TwoRoundResult result;

  TwoTowerModel miner_model;
  std::string miner_hash_source;
  std::string source_tag;

  if (plan.index_source == "teacher") {
    // mining scores come from the teacher; round 1 is skipped entirely
    miner_model = load_model(plan.teacher_path);
    if (miner_model.d_in != train_corpus.d_in)
      throw ConfigError("run_two_round: teacher checkpoint dims do not match corpus");
    miner_hash_source = plan.teacher_path + ".params";
    source_tag = "teacher:";
  } else {
    TwoTowerModel model1 =
        init_model(train_corpus.d_in, plan.d_emb, base.fork(1).next_u64());
    Rng round1_rng = base.fork(11);
    TrainResult r1 =
        train_round(model1, train_corpus, val_corpus, plan.round1, plan, nullptr, round1_rng);
    result.round1_log = r1.log;
    result.round1_checkpoint = (fs::path(out_dir) / "round1").string();
    save_model(r1.model, result.round1_checkpoint);
    save_metric_log(r1.log, (fs::path(out_dir) / "round1_log.csv").string());
    miner_model = std::move(r1.model);
    miner_hash_source = result.round1_checkpoint + ".params";
    source_tag = "self:";
  }

  result.index = build_offline_index(miner_model, train_corpus,
                                     resolved_h_text(plan, train_corpus),
                                     resolved_h_image(plan, train_corpus), plan.workers);
  result.index.source = source_tag + file_hash_hex(miner_hash_source);
  result.index_path = (fs::path(out_dir) / "index.txt").string();
  save_index(result.index, result.index_path);

  TwoTowerModel model2;
  if (plan.round2.from_scratch) {
    model2 = init_model(train_corpus.d_in, plan.d_emb, base.fork(2).next_u64());
  } else {
    if (plan.index_source == "teacher")
      throw ConfigError("run_two_round: fine-tune needs a round-1 checkpoint, "
                        "which the teacher path skips");
    model2 = miner_model;
  }
  Rng round2_rng = base.fork(12);
  TrainResult r2 = train_round(model2, train_corpus, val_corpus, plan.round2, plan,
                               &result.index, round2_rng);
  result.round2_log = r2.log;
  result.final_model = std::move(r2.model);
  result.final_checkpoint = (fs::path(out_dir) / "final").string();
  save_model(result.final_model, result.final_checkpoint);
  save_metric_log(result.round2_log, (fs::path(out_dir) / "round2_log.csv").string());
  return result;
}

}  // namespace xmatch
