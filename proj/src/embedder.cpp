#include "xmatch/embedder.hpp"

#include <cmath>
#include <thread>
#include <unordered_map>

namespace xmatch {

namespace {

constexpr double kZeroNormEps = 1e-30;

struct Embedding {
  std::vector<double> unit;  // L2-normalized projection
  double norm = 0.0;
};

Embedding embed(const TwoTowerModel& model, const std::vector<double>& w,
                const float* feature) {
  Embedding e;
  e.unit.resize(model.d_emb);
  double sq = 0.0;
  for (std::size_t r = 0; r < model.d_emb; ++r) {
    double acc = 0.0;
    const double* row = w.data() + r * model.d_in;
    for (std::size_t k = 0; k < model.d_in; ++k) acc += row[k] * feature[k];
    e.unit[r] = acc;
    sq += acc * acc;
  }
  e.norm = std::sqrt(sq);
  if (e.norm < kZeroNormEps)
    throw ContractError("score: zero-norm projected embedding (degenerate)");
  for (double& v : e.unit) v /= e.norm;
  return e;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TwoTowerModel init_model(std::size_t d_in, std::size_t d_emb, std::uint64_t seed) {
  if (d_emb < 2) throw ConfigError("model: d_emb must be >= 2");
  if (d_in < 1) throw ConfigError("model: d_in must be >= 1");
  TwoTowerModel m;
  m.d_in = d_in;
  m.d_emb = d_emb;
  m.seed = seed;
  m.w_img.resize(d_in * d_emb);
  m.w_txt.resize(d_in * d_emb);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (double& v : m.w_img) v = (2.0 * rng.next_double() - 1.0) * bound;
  for (double& v : m.w_txt) v = (2.0 * rng.next_double() - 1.0) * bound;
  return m;
}

std::vector<double> project(const TwoTowerModel& model, std::span<const double> w,
                            std::span<const float> feature) {
  if (feature.size() != model.d_in) throw ContractError("project: feature dim mismatch");
  std::vector<double> out(model.d_emb);
  for (std::size_t r = 0; r < model.d_emb; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < model.d_in; ++k) acc += w[r * model.d_in + k] * feature[k];
    out[r] = acc;
  }
  return out;
}

double score(const TwoTowerModel& model, std::span<const float> image_feature,
             std::span<const float> text_feature) {
  if (image_feature.size() != model.d_in || text_feature.size() != model.d_in)
    throw ContractError("score: feature dim mismatch");
  const Embedding u = embed(model, model.w_img, image_feature.data());
  const Embedding v = embed(model, model.w_txt, text_feature.data());
  return dot(u.unit, v.unit);
}

std::vector<double> score_matrix(const TwoTowerModel& model, const Corpus& corpus,
                                 std::span<const std::uint32_t> image_ids,
                                 std::span<const std::uint32_t> text_ids,
                                 std::size_t workers) {
  const std::size_t rows = image_ids.size();
  const std::size_t cols = text_ids.size();
  std::vector<Embedding> img_emb(rows), txt_emb(cols);
  for (std::size_t a = 0; a < rows; ++a)
    img_emb[a] = embed(model, model.w_img, corpus.image_row(image_ids[a]));
  for (std::size_t b = 0; b < cols; ++b)
    txt_emb[b] = embed(model, model.w_txt, corpus.text_row(text_ids[b]));

  std::vector<double> out(rows * cols);
  auto fill_rows = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t a = lo; a < hi; ++a)
      for (std::size_t b = 0; b < cols; ++b)
        out[a * cols + b] = dot(img_emb[a].unit, txt_emb[b].unit);
  };
  if (workers <= 1 || rows < 2) {
    fill_rows(0, rows);
  } else {
    const std::size_t n = std::min(workers, rows);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n; ++w) {
      const std::size_t lo = rows * w / n;
      const std::size_t hi = rows * (w + 1) / n;
      pool.emplace_back(fill_rows, lo, hi);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

ModelGrad backward(const TwoTowerModel& model, const Corpus& corpus,
                   const ScoreGrad& score_grads) {
  ModelGrad grad;
  grad.dw_img.assign(model.d_in * model.d_emb, 0.0);
  grad.dw_txt.assign(model.d_in * model.d_emb, 0.0);

  std::unordered_map<std::uint32_t, Embedding> img_cache, txt_cache;
  auto get_img = [&](std::uint32_t i) -> const Embedding& {
    if (i >= corpus.n_images()) throw ContractError("backward: image index out of range");
    auto it = img_cache.find(i);
    if (it == img_cache.end())
      it = img_cache.emplace(i, embed(model, model.w_img, corpus.image_row(i))).first;
    return it->second;
  };
  auto get_txt = [&](std::uint32_t t) -> const Embedding& {
    if (t >= corpus.n_texts()) throw ContractError("backward: text index out of range");
    auto it = txt_cache.find(t);
    if (it == txt_cache.end())
      it = txt_cache.emplace(t, embed(model, model.w_txt, corpus.text_row(t))).first;
    return it->second;
  };

  std::vector<double> ds_du(model.d_emb), ds_dv(model.d_emb);
  for (const ScoreGradEntry& e : score_grads) {
    if (!std::isfinite(e.g)) throw ContractError("backward: non-finite score gradient");
    const Embedding& u = get_img(e.image);
    const Embedding& v = get_txt(e.text);
    const double s = dot(u.unit, v.unit);
    // d cos / d(unnormalized embedding)
    for (std::size_t r = 0; r < model.d_emb; ++r) {
      ds_du[r] = (v.unit[r] - s * u.unit[r]) / u.norm;
      ds_dv[r] = (u.unit[r] - s * v.unit[r]) / v.norm;
    }
    const float* x = corpus.image_row(e.image);
    const float* y = corpus.text_row(e.text);
    for (std::size_t r = 0; r < model.d_emb; ++r) {
      const double gi = e.g * ds_du[r];
      const double gt = e.g * ds_dv[r];
      double* di = grad.dw_img.data() + r * model.d_in;
      double* dt = grad.dw_txt.data() + r * model.d_in;
      for (std::size_t k = 0; k < model.d_in; ++k) {
        di[k] += gi * x[k];
        dt[k] += gt * y[k];
      }
    }
  }
  return grad;
}

void sgd_step(TwoTowerModel& model, const ModelGrad& grad, double lr) {
  if (lr < 0.0) throw ConfigError("sgd_step: lr must be >= 0");
  if (grad.dw_img.size() != model.w_img.size() || grad.dw_txt.size() != model.w_txt.size())
    throw ContractError("sgd_step: gradient shape mismatch");
  for (double v : grad.dw_img)
    if (!std::isfinite(v)) throw TrainError("sgd_step: non-finite image-tower gradient");
  for (double v : grad.dw_txt)
    if (!std::isfinite(v)) throw TrainError("sgd_step: non-finite text-tower gradient");
  for (std::size_t i = 0; i < model.w_img.size(); ++i) model.w_img[i] -= lr * grad.dw_img[i];
  for (std::size_t i = 0; i < model.w_txt.size(); ++i) model.w_txt[i] -= lr * grad.dw_txt[i];
}

void save_model(const TwoTowerModel& model, const std::string& prefix) {
  Manifest m;
  m.set_u64("version", 1);
  m.set_u64("d_in", model.d_in);
  m.set_u64("d_emb", model.d_emb);
  m.set_u64("seed", model.seed);
  m.set_u64("epoch", model.epoch);
  m.save(prefix + ".manifest");
  std::vector<float> wi(model.w_img.begin(), model.w_img.end());
  std::vector<float> wt(model.w_txt.begin(), model.w_txt.end());
  write_f32_block(prefix + ".params", {wi, wt});
}

TwoTowerModel load_model(const std::string& prefix) {
  const Manifest m = Manifest::load(prefix + ".manifest");
  if (m.get_u64("version") != 1)
    throw IoError("model manifest: unsupported version " + m.get("version"));
  TwoTowerModel model;
  model.d_in = m.get_u64("d_in");
  model.d_emb = m.get_u64("d_emb");
  model.seed = m.get_u64("seed");
  model.epoch = m.get_u64("epoch");
  const std::size_t n = model.d_in * model.d_emb;
  auto blocks = read_f32_blocks(prefix + ".params", {n, n});
  model.w_img.assign(blocks[0].begin(), blocks[0].end());
  model.w_txt.assign(blocks[1].begin(), blocks[1].end());
  return model;
}

}  // namespace xmatch
