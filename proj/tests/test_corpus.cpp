#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "xmatch/corpus.hpp"

using namespace xmatch;

namespace {

GeneratorSpec small_spec() {
  GeneratorSpec spec;
  spec.n_concepts = 4;
  spec.images_per_concept = 3;
  spec.d_latent = 4;
  spec.d_in = 8;
  spec.noise_sigma = 0.2;
  spec.confusion_sigma = 1.0;
  spec.seed = 7;
  return spec;
}

double raw_cosine(const float* a, const float* b, std::size_t d) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < d; ++k) {
    dot += double(a[k]) * b[k];
    na += double(a[k]) * a[k];
    nb += double(b[k]) * b[k];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("generation is deterministic under a fixed seed") {
  const Corpus a = generate(small_spec());
  const Corpus b = generate(small_spec());
  CHECK(a.image_feats == b.image_feats);
  CHECK(a.text_feats == b.text_feats);
  CHECK(a.captions_of == b.captions_of);
}

TEST_CASE("pairing invariants hold on generated corpora") {
  const Corpus c = generate(small_spec());
  CHECK(c.n_texts() == c.n_images() * c.caption_count);
  for (std::uint32_t t = 0; t < c.n_texts(); ++t) {
    const auto& caps = c.captions_of[c.image_of[t]];
    CHECK(std::find(caps.begin(), caps.end(), t) != caps.end());
  }
}

TEST_CASE("zero noise: each text's own image is its nearest under raw cosine") {
  GeneratorSpec spec = small_spec();
  spec.noise_sigma = 0.0;
  spec.confusion_sigma = 10.0;
  spec.images_per_concept = 1;  // zero noise collapses a concept to one point
  const Corpus c = generate(spec);
  for (std::uint32_t t = 0; t < c.n_texts(); ++t) {
    double best = -2.0;
    std::uint32_t best_img = 0;
    for (std::uint32_t i = 0; i < c.n_images(); ++i) {
      const double s = raw_cosine(c.text_row(t), c.image_row(i), c.d_in);
      if (s > best) {
        best = s;
        best_img = i;
      }
    }
    CHECK(best_img == c.image_of[t]);
    CHECK(best == doctest::Approx(1.0));
  }
}

TEST_CASE("clusters plant same-concept hard negatives") {
  // brute-force raw-feature ranking: for >90% of texts, all of the top-10
  // hardest negative images come from the text's own concept
  GeneratorSpec spec;
  spec.n_concepts = 50;
  spec.images_per_concept = 40;
  spec.d_latent = 8;
  spec.d_in = 32;
  spec.noise_sigma = 0.3;
  spec.confusion_sigma = 1.5;
  spec.seed = 11;
  const Corpus c = generate(spec);

  auto concept_of_image = [&](std::uint32_t i) { return i / spec.images_per_concept; };
  std::size_t good = 0;
  // sampling every 10th text keeps the scan fast; the fraction is stable
  std::size_t checked = 0;
  for (std::uint32_t t = 0; t < c.n_texts(); t += 10) {
    ++checked;
    std::vector<std::pair<double, std::uint32_t>> neg;
    neg.reserve(c.n_images());
    for (std::uint32_t i = 0; i < c.n_images(); ++i) {
      if (i == c.image_of[t]) continue;
      neg.emplace_back(raw_cosine(c.text_row(t), c.image_row(i), c.d_in), i);
    }
    std::partial_sort(neg.begin(), neg.begin() + 10, neg.end(),
                      [](auto& a, auto& b) { return a.first > b.first; });
    bool all_same = true;
    for (int k = 0; k < 10; ++k)
      if (concept_of_image(neg[k].second) != concept_of_image(c.image_of[t]))
        all_same = false;
    if (all_same) ++good;
  }
  CHECK(double(good) / double(checked) > 0.9);
}

TEST_CASE("save/load round-trip is lossless") {
  const Corpus c = generate(small_spec());
  const std::string prefix =
      (std::filesystem::temp_directory_path() / "xm_corpus_rt").string();
  save_corpus(c, prefix);
  const Corpus d = load_corpus(prefix);
  CHECK(d.image_feats == c.image_feats);
  CHECK(d.text_feats == c.text_feats);
  CHECK(d.captions_of == c.captions_of);
  CHECK(d.image_of == c.image_of);
  CHECK(d.caption_count == c.caption_count);
  CHECK(d.seed == c.seed);
  CHECK(d.split == c.split);

  // determinism down to the bytes on disk
  const std::string prefix2 =
      (std::filesystem::temp_directory_path() / "xm_corpus_rt2").string();
  save_corpus(generate(small_spec()), prefix2);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(prefix + ".feats") == slurp(prefix2 + ".feats"));
  CHECK(slurp(prefix + ".manifest") == slurp(prefix2 + ".manifest"));
  for (const auto& p : {prefix, prefix2}) {
    std::filesystem::remove(p + ".manifest");
    std::filesystem::remove(p + ".feats");
  }
}

TEST_CASE("load rejects a truncated feature block") {
  const Corpus c = generate(small_spec());
  const std::string prefix =
      (std::filesystem::temp_directory_path() / "xm_corpus_bad").string();
  save_corpus(c, prefix);
  // manifest claims one more image than the block holds
  Manifest m = Manifest::load(prefix + ".manifest");
  for (auto& [k, v] : m.entries) {
    if (k == "n_images") v = std::to_string(c.n_images() + 1);
    if (k == "n_texts") v = std::to_string((c.n_images() + 1) * c.caption_count);
  }
  m.save(prefix + ".manifest");
  CHECK_THROWS_WITH_AS(load_corpus(prefix), doctest::Contains("truncated"), IoError);
  std::filesystem::remove(prefix + ".manifest");
  std::filesystem::remove(prefix + ".feats");
}

TEST_CASE("empty corpus saves and loads") {
  Corpus empty;
  empty.d_in = 4;
  empty.caption_count = 5;
  const std::string prefix =
      (std::filesystem::temp_directory_path() / "xm_corpus_empty").string();
  save_corpus(empty, prefix);
  const Corpus back = load_corpus(prefix);
  CHECK(back.n_images() == 0);
  CHECK(back.n_texts() == 0);
  std::filesystem::remove(prefix + ".manifest");
  std::filesystem::remove(prefix + ".feats");
}

TEST_CASE("invalid generator specs name the violated bound") {
  GeneratorSpec spec = small_spec();
  spec.n_concepts = 0;
  CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("n_concepts"), ConfigError);
  spec = small_spec();
  spec.d_latent = spec.d_in + 1;
  CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("d_latent"), ConfigError);
  spec = small_spec();
  spec.noise_sigma = -1.0;
  CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("noise_sigma"), ConfigError);
}
