#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "xmatch/corpus.hpp"
#include "xmatch/embedder.hpp"
#include "xmatch/losses.hpp"
#include "xmatch/miner.hpp"

using namespace xmatch;

namespace {

// identity towers need d_in == d_emb
TwoTowerModel identity_model(std::size_t d) {
  TwoTowerModel m;
  m.d_in = d;
  m.d_emb = d;
  m.w_img.assign(d * d, 0.0);
  m.w_txt.assign(d * d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    m.w_img[k * d + k] = 1.0;
    m.w_txt[k * d + k] = 1.0;
  }
  return m;
}

Corpus tiny_corpus(std::size_t n_images, std::size_t caption_count, std::size_t d_in,
                   std::uint64_t seed) {
  GeneratorSpec spec;
  spec.n_concepts = n_images;
  spec.images_per_concept = 1;
  spec.caption_count = caption_count;
  spec.d_latent = std::min<std::size_t>(4, d_in);
  spec.d_in = d_in;
  spec.noise_sigma = 0.3;
  spec.confusion_sigma = 1.0;
  spec.seed = seed;
  return generate(spec);
}

}  // namespace

TEST_CASE("score matches hand cosines for identity towers") {
  const TwoTowerModel m = identity_model(2);
  const std::vector<float> e1{1.f, 0.f}, e2{0.f, 1.f}, diag{1.f, 1.f};
  CHECK(score(m, e1, e1) == doctest::Approx(1.0));
  CHECK(score(m, e1, e2) == doctest::Approx(0.0));
  CHECK(score(m, e1, diag) == doctest::Approx(0.70710678).epsilon(1e-6));
}

TEST_CASE("score is scale-invariant in each raw feature") {
  const TwoTowerModel m = init_model(6, 4, 99);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> x(6), y(6);
    for (auto& v : x) v = float(rng.next_normal());
    for (auto& v : y) v = float(rng.next_normal());
    // power-of-two scales keep the float multiply exact
    const double c = std::ldexp(1.0, int(rng.next_below(9)) - 4);
    std::vector<float> cx(6);
    for (std::size_t k = 0; k < 6; ++k) cx[k] = float(c * x[k]);
    CHECK(score(m, cx, y) == doctest::Approx(score(m, x, y)).epsilon(1e-9));
    const double s = score(m, x, y);
    CHECK(s >= -1.0 - 1e-12);
    CHECK(s <= 1.0 + 1e-12);
  }
}

TEST_CASE("zero-norm projected embedding raises") {
  const TwoTowerModel m = identity_model(2);
  const std::vector<float> zero{0.f, 0.f}, ok{1.f, 0.f};
  CHECK_THROWS_AS(score(m, zero, ok), ContractError);
}

TEST_CASE("score_matrix equals per-pair score and ignores worker count") {
  const Corpus c = tiny_corpus(6, 2, 8, 21);
  const TwoTowerModel m = init_model(8, 4, 3);
  std::vector<std::uint32_t> imgs{0, 2, 5}, txts{1, 3, 4, 10};
  const auto one = score_matrix(m, c, imgs, txts, 1);
  const auto eight = score_matrix(m, c, imgs, txts, 8);
  CHECK(one == eight);  // bitwise partition invariance
  for (std::size_t a = 0; a < imgs.size(); ++a)
    for (std::size_t b = 0; b < txts.size(); ++b) {
      const double direct = score(m, std::span(c.image_row(imgs[a]), c.d_in),
                                  std::span(c.text_row(txts[b]), c.d_in));
      CHECK(one[a * txts.size() + b] == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("backward: linearity and empty gradients") {
  const Corpus c = tiny_corpus(4, 2, 8, 22);
  const TwoTowerModel m = init_model(8, 4, 17);
  const ModelGrad zero = backward(m, c, {});
  for (double v : zero.dw_img) CHECK(v == 0.0);
  for (double v : zero.dw_txt) CHECK(v == 0.0);

  ScoreGrad sg{{0, 1, 0.3}, {2, 5, -0.7}, {1, 2, 1.1}};
  ScoreGrad doubled = sg;
  for (auto& e : doubled) e.g *= 2.0;
  const ModelGrad g1 = backward(m, c, sg);
  const ModelGrad g2 = backward(m, c, doubled);
  for (std::size_t k = 0; k < g1.dw_img.size(); ++k)
    CHECK(g2.dw_img[k] == doctest::Approx(2.0 * g1.dw_img[k]).epsilon(1e-12));
  for (std::size_t k = 0; k < g1.dw_txt.size(); ++k)
    CHECK(g2.dw_txt[k] == doctest::Approx(2.0 * g1.dw_txt[k]).epsilon(1e-12));
}

TEST_CASE("backward matches central finite differences through every loss variant") {
  // end-to-end parameter-space oracle: loss(model) via scores -> grad_scores
  // -> backward vs numeric differentiation of the same pipeline
  const Corpus c = tiny_corpus(4, 2, 6, 23);
  const std::vector<std::uint32_t> imgs{0, 1, 2, 3};
  const std::vector<std::uint32_t> txts{0, 2, 4, 6};  // caption 0 of each image

  for (LossVariant variant : {LossVariant::Std, LossVariant::Online, LossVariant::OffTri,
                              LossVariant::OffQuin, LossVariant::Adaptive}) {
    LossConfig cfg;
    cfg.variant = variant;
    // fixed selections so that the loss is a function of the model only
    const std::vector<std::uint32_t> t_on{2, 0, 6, 4}, i_on{1, 3, 0, 2};
    const std::vector<std::uint32_t> t_off{4, 6, 0, 2}, i_off{2, 0, 3, 1};

    auto batch_scores = [&](const TwoTowerModel& m) {
      const auto mat = score_matrix(m, c, imgs, txts, 1);
      std::vector<PairScores> batch(4);
      for (std::size_t k = 0; k < 4; ++k) {
        PairScores& p = batch[k];
        p.s_pos = mat[k * 4 + k];
        auto pscore = [&](std::uint32_t i, std::uint32_t t) {
          return score(m, std::span(c.image_row(i), c.d_in), std::span(c.text_row(t), c.d_in));
        };
        if (variant == LossVariant::Std) {
          for (std::size_t j = 0; j < 4; ++j) {
            if (j == k) continue;
            p.neg_texts.push_back(mat[k * 4 + j]);
            p.neg_images.push_back(mat[j * 4 + k]);
          }
        } else {
          p.s_t_on = pscore(imgs[k], t_on[k]);
          p.s_i_on = pscore(i_on[k], txts[k]);
          p.s_t_off = pscore(imgs[k], t_off[k]);
          p.s_i_off = pscore(i_off[k], txts[k]);
          p.s_cross = pscore(i_off[k], t_off[k]);
          p.s_tilde = pscore(c.image_of[t_off[k]], c.captions_of[i_off[k]][0]);
        }
      }
      return batch;
    };

    TwoTowerModel m = init_model(6, 4, 31 + static_cast<std::uint64_t>(variant));
    const auto batch = batch_scores(m);
    const auto grads = grad_scores(batch, cfg);
    ScoreGrad sg;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& g = grads[k];
      sg.push_back({imgs[k], txts[k], g.g_pos});
      if (variant == LossVariant::Std) {
        std::size_t jj = 0;
        for (std::size_t j = 0; j < 4; ++j) {
          if (j == k) continue;
          sg.push_back({imgs[k], txts[j], g.g_neg_texts[jj]});
          sg.push_back({imgs[j], txts[k], g.g_neg_images[jj]});
          ++jj;
        }
      } else {
        sg.push_back({imgs[k], t_on[k], g.g_t_on});
        sg.push_back({i_on[k], txts[k], g.g_i_on});
        sg.push_back({imgs[k], t_off[k], g.g_t_off});
        sg.push_back({i_off[k], txts[k], g.g_i_off});
        sg.push_back({i_off[k], t_off[k], g.g_cross});
        sg.push_back({c.image_of[t_off[k]], c.captions_of[i_off[k]][0], g.g_tilde});
      }
    }
    const ModelGrad analytic = backward(m, c, sg);

    const double eps = 1e-4;
    double max_rel = 0.0;
    auto probe = [&](std::vector<double>& w, const std::vector<double>& dw) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double saved = w[k];
        w[k] = saved + eps;
        const double hi = loss_value(batch_scores(m), cfg);
        w[k] = saved - eps;
        const double lo = loss_value(batch_scores(m), cfg);
        w[k] = saved;
        const double fd = (hi - lo) / (2 * eps);
        const double rel = std::abs(fd - dw[k]) / std::max({1.0, std::abs(fd), std::abs(dw[k])});
        max_rel = std::max(max_rel, rel);
      }
    };
    probe(m.w_img, analytic.dw_img);
    probe(m.w_txt, analytic.dw_txt);
    CHECK(max_rel < 1e-5);
  }
}

TEST_CASE("sgd_step arithmetic") {
  TwoTowerModel m = init_model(4, 3, 1);
  const TwoTowerModel before = m;
  ModelGrad zero;
  zero.dw_img.assign(m.w_img.size(), 0.0);
  zero.dw_txt.assign(m.w_txt.size(), 0.0);
  sgd_step(m, zero, 0.5);
  CHECK(m.w_img == before.w_img);

  ModelGrad g;
  g.dw_img = m.w_img;
  g.dw_txt = m.w_txt;
  sgd_step(m, g, 1.0);
  for (double v : m.w_img) CHECK(v == 0.0);
  for (double v : m.w_txt) CHECK(v == 0.0);

  // two lr=0.1 steps of a frozen gradient equal one summed step
  TwoTowerModel a = before, b = before;
  ModelGrad fixed;
  fixed.dw_img.assign(before.w_img.size(), 0.25);
  fixed.dw_txt.assign(before.w_txt.size(), -0.5);
  sgd_step(a, fixed, 0.1);
  sgd_step(a, fixed, 0.1);
  ModelGrad summed;
  summed.dw_img.assign(before.w_img.size(), 0.5);
  summed.dw_txt.assign(before.w_txt.size(), -1.0);
  sgd_step(b, summed, 0.1);
  for (std::size_t k = 0; k < a.w_img.size(); ++k)
    CHECK(a.w_img[k] == doctest::Approx(b.w_img[k]).epsilon(1e-15));

  ModelGrad bad = fixed;
  bad.dw_img[0] = std::nan("");
  CHECK_THROWS_AS(sgd_step(a, bad, 0.1), TrainError);
}

TEST_CASE("checkpoint round-trip") {
  TwoTowerModel m = init_model(5, 3, 77);
  m.epoch = 9;
  const std::string prefix = (std::filesystem::temp_directory_path() / "xm_ckpt").string();
  save_model(m, prefix);
  const TwoTowerModel back = load_model(prefix);
  CHECK(back.d_in == 5);
  CHECK(back.d_emb == 3);
  CHECK(back.epoch == 9);
  // parameters persist as f32
  for (std::size_t k = 0; k < m.w_img.size(); ++k)
    CHECK(back.w_img[k] == doctest::Approx(m.w_img[k]).epsilon(1e-6));
  std::filesystem::remove(prefix + ".manifest");
  std::filesystem::remove(prefix + ".params");
}
