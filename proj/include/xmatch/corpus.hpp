#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmatch/common.hpp"

namespace xmatch {

// A cross-modal dataset: image features, text features, and the positive
// pairing between them (caption_count texts per image).
struct Corpus {
  std::size_t d_in = 0;
  std::size_t caption_count = 0;
  std::uint64_t seed = 0;
  std::string split = "train";  // train | val | test

  std::vector<float> image_feats;  // n_images x d_in, row-major
  std::vector<float> text_feats;   // n_texts x d_in, row-major

  std::vector<std::vector<std::uint32_t>> captions_of;  // image -> its texts
  std::vector<std::uint32_t> image_of;                  // text -> owning image

  std::size_t n_images() const { return captions_of.size(); }
  std::size_t n_texts() const { return image_of.size(); }

  const float* image_row(std::size_t i) const { return image_feats.data() + i * d_in; }
  const float* text_row(std::size_t t) const { return text_feats.data() + t * d_in; }

  bool is_positive(std::uint32_t image, std::uint32_t text) const {
    return image_of[text] == image;
  }

  // throws ContractError on any violated invariant (consistency, finiteness)
  void validate() const;
};

struct GeneratorSpec {
  std::size_t n_concepts = 0;
  std::size_t images_per_concept = 0;
  std::size_t caption_count = 5;
  std::size_t d_latent = 0;
  std::size_t d_in = 0;
  double noise_sigma = 0.0;
  double confusion_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError naming the violated bound
};

// Clustered synthetic corpus. Each concept has a latent center (spread set
// by confusion_sigma); every image and its captions sample the same center
// plus independent noise, lifted to d_in by a shared orthonormal map derived
// from the seed alone. Because centers and lift depend only on spec.seed,
// corpora generated for different splits of the same spec are mutually
// retrievable by one model.
Corpus generate(const GeneratorSpec& spec, const std::string& split = "train");

// <prefix>.manifest + <prefix>.feats
void save_corpus(const Corpus& corpus, const std::string& prefix);
Corpus load_corpus(const std::string& prefix);

}  // namespace xmatch
