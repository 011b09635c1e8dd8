#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmatch/common.hpp"
#include "xmatch/corpus.hpp"

namespace xmatch {

// Two linear towers projecting raw features into a joint space; pair score
// is the cosine of the two L2-normalized projections.
struct TwoTowerModel {
  std::size_t d_in = 0;
  std::size_t d_emb = 0;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  // row-major d_emb x d_in: emb[e] = sum_k w[e*d_in+k] * x[k]
  std::vector<double> w_img;
  std::vector<double> w_txt;
};

// entries uniform in [-1/sqrt(d_in), +1/sqrt(d_in)]
TwoTowerModel init_model(std::size_t d_in, std::size_t d_emb, std::uint64_t seed);

// projected, unnormalized embedding
std::vector<double> project(const TwoTowerModel& model, std::span<const double> w,
                            std::span<const float> feature);

// cosine in [-1, 1]; throws ContractError on a zero-norm projected embedding
double score(const TwoTowerModel& model, std::span<const float> image_feature,
             std::span<const float> text_feature);

// M[a*text_ids.size() + b] = score(image_ids[a], text_ids[b]); entries are
// independent of blocking/partitioning. workers > 1 fans rows out to threads.
std::vector<double> score_matrix(const TwoTowerModel& model, const Corpus& corpus,
                                 std::span<const std::uint32_t> image_ids,
                                 std::span<const std::uint32_t> text_ids,
                                 std::size_t workers = 1);

struct ScoreGradEntry {
  std::uint32_t image = 0;
  std::uint32_t text = 0;
  double g = 0.0;  // dL/dS(image, text)
};
using ScoreGrad = std::vector<ScoreGradEntry>;

struct ModelGrad {
  std::vector<double> dw_img;
  std::vector<double> dw_txt;
};

// Chain rule from score-space gradients through projection + normalization.
// Linear in score_grads. Indices must be valid for the corpus.
ModelGrad backward(const TwoTowerModel& model, const Corpus& corpus,
                   const ScoreGrad& score_grads);

// W <- W - lr * dW; throws TrainError on non-finite gradient entries
void sgd_step(TwoTowerModel& model, const ModelGrad& grad, double lr);

// checkpoint: <prefix>.manifest + <prefix>.params (f32 blocks, img then txt)
void save_model(const TwoTowerModel& model, const std::string& prefix);
TwoTowerModel load_model(const std::string& prefix);

}  // namespace xmatch
