#include "xmatch/losses.hpp"

#include <cmath>

namespace xmatch {

LossVariant parse_variant(const std::string& name) {
  if (name == "std") return LossVariant::Std;
  if (name == "online") return LossVariant::Online;
  if (name == "off_tri") return LossVariant::OffTri;
  if (name == "off_quin") return LossVariant::OffQuin;
  if (name == "adaptive") return LossVariant::Adaptive;
  if (name == "off_only") return LossVariant::OffOnly;
  throw ConfigError("unknown loss variant '" + name + "'");
}

std::string variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::Std: return "std";
    case LossVariant::Online: return "online";
    case LossVariant::OffTri: return "off_tri";
    case LossVariant::OffQuin: return "off_quin";
    case LossVariant::Adaptive: return "adaptive";
    case LossVariant::OffOnly: return "off_only";
  }
  throw ContractError("variant_name: bad enum value");
}

void LossConfig::validate() const {
  if (gamma2 < 0.0) throw ConfigError("loss config: gamma2 must be >= 0");
  if (gamma1 < gamma2) throw ConfigError("loss config: gamma1 must be >= gamma2");
  if (alpha <= 0.0) throw ConfigError("loss config: alpha must be > 0");
}

namespace {

double require(const std::optional<double>& v, const char* name) {
  if (!v) throw ContractError(std::string("loss: missing score ") + name);
  return *v;
}

// scores a variant reads beyond s_pos
struct Needs {
  bool online = false;   // s_t_on, s_i_on
  bool offline = false;  // s_t_off, s_i_off
  bool derived = false;  // s_cross, s_tilde
  bool lists = false;    // neg_texts, neg_images
};

Needs needs_of(LossVariant v) {
  switch (v) {
    case LossVariant::Std: return {.lists = true};
    case LossVariant::Online: return {.online = true};
    case LossVariant::OffTri: return {.online = true, .offline = true};
    case LossVariant::OffQuin: return {.online = true, .offline = true, .derived = true};
    case LossVariant::Adaptive: return {.online = true, .offline = true, .derived = true};
    case LossVariant::OffOnly: return {.offline = true, .derived = true};
  }
  throw ContractError("needs_of: bad enum value");
}

}  // namespace

double loss_std(std::span<const PairScores> batch, const LossConfig& cfg) {
  double total = 0.0;
  for (const PairScores& p : batch) {
    if (p.neg_texts.empty() && p.neg_images.empty())
      throw ContractError("loss_std: negative lists missing");
    for (double s : p.neg_texts) total += hinge(cfg.gamma1 - p.s_pos + s);
    for (double s : p.neg_images) total += hinge(cfg.gamma1 - p.s_pos + s);
  }
  return total;
}

double loss_online(std::span<const PairScores> batch, const LossConfig& cfg) {
  double total = 0.0;
  for (const PairScores& p : batch) {
    total += hinge(cfg.gamma1 - p.s_pos + require(p.s_t_on, "s_t_on"));
    total += hinge(cfg.gamma1 - p.s_pos + require(p.s_i_on, "s_i_on"));
  }
  return total;
}

double loss_off_tri(std::span<const PairScores> batch, const LossConfig& cfg) {
  double total = loss_online(batch, cfg);
  for (const PairScores& p : batch) {
    total += hinge(cfg.gamma2 - p.s_pos + require(p.s_t_off, "s_t_off"));
    total += hinge(cfg.gamma2 - p.s_pos + require(p.s_i_off, "s_i_off"));
  }
  return total;
}

double loss_off_quin(std::span<const PairScores> batch, const LossConfig& cfg) {
  double total = loss_off_tri(batch, cfg);
  for (const PairScores& p : batch) {
    total += hinge(cfg.gamma2 - p.s_pos + require(p.s_cross, "s_cross"));
    total += hinge(cfg.gamma2 - p.s_pos + require(p.s_tilde, "s_tilde"));
  }
  return total;
}

double loss_off_only(std::span<const PairScores> batch, const LossConfig& cfg) {
  double total = 0.0;
  for (const PairScores& p : batch) {
    total += hinge(cfg.gamma2 - p.s_pos + require(p.s_t_off, "s_t_off"));
    total += hinge(cfg.gamma2 - p.s_pos + require(p.s_i_off, "s_i_off"));
    total += hinge(cfg.gamma2 - p.s_pos + require(p.s_cross, "s_cross"));
    total += hinge(cfg.gamma2 - p.s_pos + require(p.s_tilde, "s_tilde"));
  }
  return total;
}

double loss_adaptive(std::span<const PairScores> batch, const LossConfig& cfg) {
  double total = 0.0;
  for (const PairScores& p : batch) {
    const double t_on = require(p.s_t_on, "s_t_on");
    const double i_on = require(p.s_i_on, "s_i_on");
    const double t_off = require(p.s_t_off, "s_t_off");
    const double i_off = require(p.s_i_off, "s_i_off");
    const double cross = require(p.s_cross, "s_cross");
    const double tilde = require(p.s_tilde, "s_tilde");
    const double w_t = cfg.beta - (t_off - t_on) / cfg.alpha;
    const double w_i = cfg.beta - (i_off - i_on) / cfg.alpha;
    total += w_t * hinge(cfg.gamma1 - p.s_pos + t_on);
    total += hinge(cfg.gamma2 - p.s_pos + t_off);
    total += hinge(cfg.gamma2 - p.s_pos + cross);
    total += w_i * hinge(cfg.gamma1 - p.s_pos + i_on);
    total += hinge(cfg.gamma2 - p.s_pos + i_off);
    total += hinge(cfg.gamma2 - p.s_pos + tilde);
  }
  return total;
}

double loss_value(std::span<const PairScores> batch, const LossConfig& cfg) {
  cfg.validate();
  switch (cfg.variant) {
    case LossVariant::Std: return loss_std(batch, cfg);
    case LossVariant::Online: return loss_online(batch, cfg);
    case LossVariant::OffTri: return loss_off_tri(batch, cfg);
    case LossVariant::OffQuin: return loss_off_quin(batch, cfg);
    case LossVariant::Adaptive: return loss_adaptive(batch, cfg);
    case LossVariant::OffOnly: return loss_off_only(batch, cfg);
  }
  throw ContractError("loss_value: bad enum value");
}

namespace {

// 1 if the hinge argument is strictly positive, else 0 (subgradient 0 at the kink)
double ind(double arg) { return arg > 0.0 ? 1.0 : 0.0; }

}  // namespace

std::vector<PairScoreGrad> grad_scores(std::span<const PairScores> batch,
                                       const LossConfig& cfg) {
  cfg.validate();
  const Needs need = needs_of(cfg.variant);
  std::vector<PairScoreGrad> out(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const PairScores& p = batch[k];
    PairScoreGrad& g = out[k];

    if (need.lists) {
      if (p.neg_texts.empty() && p.neg_images.empty())
        throw ContractError("grad_scores: negative lists missing");
      g.g_neg_texts.resize(p.neg_texts.size());
      g.g_neg_images.resize(p.neg_images.size());
      for (std::size_t j = 0; j < p.neg_texts.size(); ++j) {
        const double i1 = ind(cfg.gamma1 - p.s_pos + p.neg_texts[j]);
        g.g_neg_texts[j] = i1;
        g.g_pos -= i1;
      }
      for (std::size_t j = 0; j < p.neg_images.size(); ++j) {
        const double i1 = ind(cfg.gamma1 - p.s_pos + p.neg_images[j]);
        g.g_neg_images[j] = i1;
        g.g_pos -= i1;
      }
      continue;
    }

    double t_on = 0, i_on = 0, t_off = 0, i_off = 0, cross = 0, tilde = 0;
    if (need.online) {
      t_on = require(p.s_t_on, "s_t_on");
      i_on = require(p.s_i_on, "s_i_on");
    }
    if (need.offline) {
      t_off = require(p.s_t_off, "s_t_off");
      i_off = require(p.s_i_off, "s_i_off");
    }
    if (need.derived) {
      cross = require(p.s_cross, "s_cross");
      tilde = require(p.s_tilde, "s_tilde");
    }

    if (cfg.variant == LossVariant::Adaptive) {
      // text side: w_t * h1 + h2 + h3 with w_t = beta - (t_off - t_on)/alpha
      const double arg1t = cfg.gamma1 - p.s_pos + t_on;
      const double arg2t = cfg.gamma2 - p.s_pos + t_off;
      const double arg3t = cfg.gamma2 - p.s_pos + cross;
      const double i1t = ind(arg1t), i2t = ind(arg2t), i3t = ind(arg3t);
      const double h1t = hinge(arg1t);
      const double w_t = cfg.beta - (t_off - t_on) / cfg.alpha;
      g.g_pos += -w_t * i1t - i2t - i3t;
      g.g_t_on += h1t / cfg.alpha + w_t * i1t;
      g.g_t_off += -h1t / cfg.alpha + i2t;
      g.g_cross += i3t;

      const double arg1i = cfg.gamma1 - p.s_pos + i_on;
      const double arg2i = cfg.gamma2 - p.s_pos + i_off;
      const double arg3i = cfg.gamma2 - p.s_pos + tilde;
      const double i1i = ind(arg1i), i2i = ind(arg2i), i3i = ind(arg3i);
      const double h1i = hinge(arg1i);
      const double w_i = cfg.beta - (i_off - i_on) / cfg.alpha;
      g.g_pos += -w_i * i1i - i2i - i3i;
      g.g_i_on += h1i / cfg.alpha + w_i * i1i;
      g.g_i_off += -h1i / cfg.alpha + i2i;
      g.g_tilde += i3i;
      continue;
    }

    if (need.online) {
      const double i1t = ind(cfg.gamma1 - p.s_pos + t_on);
      const double i1i = ind(cfg.gamma1 - p.s_pos + i_on);
      g.g_t_on += i1t;
      g.g_i_on += i1i;
      g.g_pos -= i1t + i1i;
    }
    if (need.offline) {
      const double i2t = ind(cfg.gamma2 - p.s_pos + t_off);
      const double i2i = ind(cfg.gamma2 - p.s_pos + i_off);
      g.g_t_off += i2t;
      g.g_i_off += i2i;
      g.g_pos -= i2t + i2i;
    }
    if (need.derived) {
      const double i3t = ind(cfg.gamma2 - p.s_pos + cross);
      const double i3i = ind(cfg.gamma2 - p.s_pos + tilde);
      g.g_cross += i3t;
      g.g_tilde += i3i;
      g.g_pos -= i3t + i3i;
    }
  }
  return out;
}

namespace {

// hinge arguments of one pair that depend on the given score slot
enum class Slot { Pos, TOn, IOn, TOff, IOff, Cross, Tilde };

std::vector<double> kink_args(const PairScores& p, const LossConfig& cfg, Slot slot) {
  const Needs need = needs_of(cfg.variant);
  std::vector<double> args;
  auto arg1t = [&] { return cfg.gamma1 - p.s_pos + *p.s_t_on; };
  auto arg1i = [&] { return cfg.gamma1 - p.s_pos + *p.s_i_on; };
  auto arg2t = [&] { return cfg.gamma2 - p.s_pos + *p.s_t_off; };
  auto arg2i = [&] { return cfg.gamma2 - p.s_pos + *p.s_i_off; };
  auto arg3t = [&] { return cfg.gamma2 - p.s_pos + *p.s_cross; };
  auto arg3i = [&] { return cfg.gamma2 - p.s_pos + *p.s_tilde; };
  switch (slot) {
    case Slot::Pos:
      if (need.lists) {
        for (double s : p.neg_texts) args.push_back(cfg.gamma1 - p.s_pos + s);
        for (double s : p.neg_images) args.push_back(cfg.gamma1 - p.s_pos + s);
      }
      if (need.online) args.insert(args.end(), {arg1t(), arg1i()});
      if (need.offline) args.insert(args.end(), {arg2t(), arg2i()});
      if (need.derived) args.insert(args.end(), {arg3t(), arg3i()});
      break;
    case Slot::TOn: args.push_back(arg1t()); break;
    case Slot::IOn: args.push_back(arg1i()); break;
    case Slot::TOff: args.push_back(arg2t()); break;
    case Slot::IOff: args.push_back(arg2i()); break;
    case Slot::Cross: args.push_back(arg3t()); break;
    case Slot::Tilde: args.push_back(arg3i()); break;
  }
  return args;
}

bool near_kink(const PairScores& p, const LossConfig& cfg, Slot slot, double eps) {
  for (double a : kink_args(p, cfg, slot))
    if (std::abs(a) <= 2.0 * eps) return true;
  return false;
}

double rel_err(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace

double fd_check(std::span<const PairScores> batch, const LossConfig& cfg, double epsilon) {
  if (epsilon <= 0.0 || epsilon > 1e-2)
    throw ConfigError("fd_check: epsilon must be in (0, 1e-2]");
  const Needs need = needs_of(cfg.variant);
  std::vector<PairScores> work(batch.begin(), batch.end());
  const auto analytic = grad_scores(batch, cfg);

  double max_err = 0.0;
  auto central = [&](double* field) {
    const double saved = *field;
    *field = saved + epsilon;
    const double hi = loss_value(work, cfg);
    *field = saved - epsilon;
    const double lo = loss_value(work, cfg);
    *field = saved;
    return (hi - lo) / (2.0 * epsilon);
  };

  for (std::size_t k = 0; k < work.size(); ++k) {
    PairScores& p = work[k];
    const PairScoreGrad& g = analytic[k];
    auto check = [&](Slot slot, double* field, double analytic_g) {
      if (near_kink(p, cfg, slot, epsilon)) return;
      max_err = std::max(max_err, rel_err(analytic_g, central(field)));
    };
    check(Slot::Pos, &p.s_pos, g.g_pos);
    if (need.online) {
      check(Slot::TOn, &*p.s_t_on, g.g_t_on);
      check(Slot::IOn, &*p.s_i_on, g.g_i_on);
    }
    if (need.offline) {
      check(Slot::TOff, &*p.s_t_off, g.g_t_off);
      check(Slot::IOff, &*p.s_i_off, g.g_i_off);
    }
    if (need.derived) {
      check(Slot::Cross, &*p.s_cross, g.g_cross);
      check(Slot::Tilde, &*p.s_tilde, g.g_tilde);
    }
    if (need.lists) {
      for (std::size_t j = 0; j < p.neg_texts.size(); ++j) {
        const double arg = cfg.gamma1 - p.s_pos + p.neg_texts[j];
        if (std::abs(arg) <= 2.0 * epsilon) continue;
        max_err = std::max(max_err, rel_err(g.g_neg_texts[j], central(&p.neg_texts[j])));
      }
      for (std::size_t j = 0; j < p.neg_images.size(); ++j) {
        const double arg = cfg.gamma1 - p.s_pos + p.neg_images[j];
        if (std::abs(arg) <= 2.0 * epsilon) continue;
        max_err = std::max(max_err, rel_err(g.g_neg_images[j], central(&p.neg_images[j])));
      }
    }
  }
  return max_err;
}

}  // namespace xmatch
