#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmatch/common.hpp"

namespace xmatch {

enum class LossVariant { Std, Online, OffTri, OffQuin, Adaptive, OffOnly };

LossVariant parse_variant(const std::string& name);  // throws ConfigError
std::string variant_name(LossVariant v);

struct LossConfig {
  double gamma1 = 0.2;
  double gamma2 = 0.0;
  double alpha = 0.3;
  double beta = 1.5;
  LossVariant variant = LossVariant::Online;

  void validate() const;  // gamma1 >= gamma2 >= 0, alpha > 0
};

// Every similarity the loss ladder can read, for one positive pair.
// Optional fields are present only when the variant needs them.
struct PairScores {
  double s_pos = 0.0;                    // S(i, t)
  std::optional<double> s_t_on;          // S(i, t_on)
  std::optional<double> s_i_on;          // S(i_on, t)
  std::optional<double> s_t_off;         // S(i, t_off)
  std::optional<double> s_i_off;         // S(i_off, t)
  std::optional<double> s_cross;         // S(i_off, t_off)
  std::optional<double> s_tilde;         // S(i_tilde, t_tilde)
  std::vector<double> neg_texts;         // Std only: S(i, t') over batch negatives
  std::vector<double> neg_images;        // Std only: S(i', t) over batch negatives
};

// Partials of the batch loss with respect to each score of one pair;
// slots mirror PairScores.
struct PairScoreGrad {
  double g_pos = 0.0;
  double g_t_on = 0.0;
  double g_i_on = 0.0;
  double g_t_off = 0.0;
  double g_i_off = 0.0;
  double g_cross = 0.0;
  double g_tilde = 0.0;
  std::vector<double> g_neg_texts;
  std::vector<double> g_neg_images;
};

// Sum-over-pairs hinge losses. Each throws ContractError when a score its
// variant needs is absent.
double loss_std(std::span<const PairScores> batch, const LossConfig& cfg);
double loss_online(std::span<const PairScores> batch, const LossConfig& cfg);
double loss_off_tri(std::span<const PairScores> batch, const LossConfig& cfg);
double loss_off_quin(std::span<const PairScores> batch, const LossConfig& cfg);
// Adaptive hierarchical loss. The adaptive weight (beta - (s_off - s_on)/alpha)
// is deliberately unclamped, so the value can be negative.
double loss_adaptive(std::span<const PairScores> batch, const LossConfig& cfg);
// Offline terms of the quintuplet loss only (online hinges removed); used by
// the offline-only ablation.
double loss_off_only(std::span<const PairScores> batch, const LossConfig& cfg);

// dispatch on cfg.variant
double loss_value(std::span<const PairScores> batch, const LossConfig& cfg);

// Exact partials of loss_value with respect to every score it reads.
// At a hinge kink (argument exactly 0) the subgradient 0 is returned.
std::vector<PairScoreGrad> grad_scores(std::span<const PairScores> batch,
                                       const LossConfig& cfg);

// Central finite differences against grad_scores; returns the max relative
// error over all checked scores. Scores whose hinge arguments lie within
// 2*epsilon of a kink are skipped.
double fd_check(std::span<const PairScores> batch, const LossConfig& cfg, double epsilon);

}  // namespace xmatch
