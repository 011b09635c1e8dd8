#include "xmatch/corpus.hpp"

#include <cmath>
#include <cstdio>

namespace xmatch {

void Corpus::validate() const {
  if (n_texts() != n_images() * caption_count)
    throw ContractError("corpus: n_texts != n_images * caption_count");
  if (n_images() > 0 && caption_count < 1)
    throw ContractError("corpus: caption_count must be >= 1");
  std::vector<bool> seen(n_texts(), false);
  for (std::size_t i = 0; i < n_images(); ++i) {
    if (captions_of[i].size() != caption_count)
      throw ContractError("corpus: image " + std::to_string(i) +
                          " does not have caption_count captions");
    for (std::uint32_t t : captions_of[i]) {
      if (t >= n_texts() || seen[t])
        throw ContractError("corpus: text index " + std::to_string(t) +
                            " out of range or repeated");
      seen[t] = true;
      if (image_of[t] != i)
        throw ContractError("corpus: captions_of/image_of disagree on text " +
                            std::to_string(t));
    }
  }
  for (float v : image_feats)
    if (!std::isfinite(v)) throw ContractError("corpus: non-finite image feature");
  for (float v : text_feats)
    if (!std::isfinite(v)) throw ContractError("corpus: non-finite text feature");
}

void GeneratorSpec::validate() const {
  if (n_concepts < 1) throw ConfigError("generator: n_concepts must be >= 1");
  if (images_per_concept < 1) throw ConfigError("generator: images_per_concept must be >= 1");
  if (caption_count < 1) throw ConfigError("generator: caption_count must be >= 1");
  if (d_latent < 1) throw ConfigError("generator: d_latent must be >= 1");
  if (d_in < 1) throw ConfigError("generator: d_in must be >= 1");
  if (d_latent > d_in) throw ConfigError("generator: d_latent must be <= d_in");
  if (noise_sigma < 0.0) throw ConfigError("generator: noise_sigma must be >= 0");
  if (confusion_sigma < 0.0) throw ConfigError("generator: confusion_sigma must be >= 0");
}

namespace {

std::uint64_t split_stream(const std::string& split) {
  if (split == "train") return 1;
  if (split == "val") return 2;
  if (split == "test") return 3;
  throw ConfigError("generator: unknown split '" + split + "'");
}

// orthonormal columns via Gram-Schmidt on a seeded Gaussian matrix
std::vector<double> make_lift(std::size_t d_in, std::size_t d_latent, Rng rng) {
  std::vector<double> lift(d_in * d_latent);  // column-major: col j at j*d_in
  for (std::size_t j = 0; j < d_latent; ++j) {
    double* col = lift.data() + j * d_in;
    for (std::size_t r = 0; r < d_in; ++r) col[r] = rng.next_normal();
    for (std::size_t k = 0; k < j; ++k) {
      const double* prev = lift.data() + k * d_in;
      double dot = 0.0;
      for (std::size_t r = 0; r < d_in; ++r) dot += col[r] * prev[r];
      for (std::size_t r = 0; r < d_in; ++r) col[r] -= dot * prev[r];
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < d_in; ++r) norm += col[r] * col[r];
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw ConfigError("generator: degenerate lift (d_latent too large?)");
    for (std::size_t r = 0; r < d_in; ++r) col[r] /= norm;
  }
  return lift;
}

void lift_into(const std::vector<double>& lift, std::size_t d_in,
               const std::vector<double>& z, float* out) {
  for (std::size_t r = 0; r < d_in; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) acc += lift[j * d_in + r] * z[j];
    out[r] = static_cast<float>(acc);
  }
}

}  // namespace

Corpus generate(const GeneratorSpec& spec, const std::string& split) {
  spec.validate();
  const std::uint64_t stream = split_stream(split);

  Rng base(spec.seed);
  Rng centers_rng = base.fork(100);
  Rng lift_rng = base.fork(101);
  Rng noise_rng = base.fork(200 + stream);

  // concept centers, shared across splits
  std::vector<std::vector<double>> centers(spec.n_concepts,
                                           std::vector<double>(spec.d_latent));
  for (auto& c : centers)
    for (auto& v : c) v = spec.confusion_sigma * centers_rng.next_normal();

  const std::vector<double> lift = make_lift(spec.d_in, spec.d_latent, lift_rng);

  const std::size_t n_images = spec.n_concepts * spec.images_per_concept;
  Corpus corpus;
  corpus.d_in = spec.d_in;
  corpus.caption_count = spec.caption_count;
  corpus.seed = spec.seed;
  corpus.split = split;
  corpus.image_feats.resize(n_images * spec.d_in);
  corpus.text_feats.resize(n_images * spec.caption_count * spec.d_in);
  corpus.captions_of.resize(n_images);
  corpus.image_of.resize(n_images * spec.caption_count);

  std::vector<double> z(spec.d_latent);
  std::size_t img = 0;
  for (std::size_t k = 0; k < spec.n_concepts; ++k) {
    for (std::size_t m = 0; m < spec.images_per_concept; ++m, ++img) {
      for (std::size_t j = 0; j < spec.d_latent; ++j)
        z[j] = centers[k][j] + spec.noise_sigma * noise_rng.next_normal();
      lift_into(lift, spec.d_in, z, corpus.image_feats.data() + img * spec.d_in);
      for (std::size_t c = 0; c < spec.caption_count; ++c) {
        const std::size_t t = img * spec.caption_count + c;
        for (std::size_t j = 0; j < spec.d_latent; ++j)
          z[j] = centers[k][j] + spec.noise_sigma * noise_rng.next_normal();
        lift_into(lift, spec.d_in, z, corpus.text_feats.data() + t * spec.d_in);
        corpus.captions_of[img].push_back(static_cast<std::uint32_t>(t));
        corpus.image_of[t] = static_cast<std::uint32_t>(img);
      }
    }
  }
  corpus.validate();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& prefix) {
  Manifest m;
  m.set_u64("version", 1);
  m.set("split", corpus.split);
  m.set_u64("n_images", corpus.n_images());
  m.set_u64("n_texts", corpus.n_texts());
  m.set_u64("caption_count", corpus.caption_count);
  m.set_u64("d_in", corpus.d_in);
  m.set_u64("seed", corpus.seed);
  m.save(prefix + ".manifest");
  write_f32_block(prefix + ".feats", {corpus.image_feats, corpus.text_feats});
}

Corpus load_corpus(const std::string& prefix) {
  const Manifest m = Manifest::load(prefix + ".manifest");
  if (m.get_u64("version") != 1)
    throw IoError("corpus manifest: unsupported version " + m.get("version"));
  Corpus corpus;
  const std::size_t n_images = m.get_u64("n_images");
  const std::size_t n_texts = m.get_u64("n_texts");
  corpus.caption_count = m.get_u64("caption_count");
  corpus.d_in = m.get_u64("d_in");
  corpus.seed = m.get_u64("seed");
  corpus.split = m.has("split") ? m.get("split") : "train";
  if (corpus.caption_count < 1)
    throw IoError("corpus manifest: caption_count must be >= 1");
  if (n_texts != n_images * corpus.caption_count)
    throw IoError("corpus manifest: n_texts != n_images * caption_count");

  auto blocks = read_f32_blocks(prefix + ".feats",
                                {n_images * corpus.d_in, n_texts * corpus.d_in});
  corpus.image_feats = std::move(blocks[0]);
  corpus.text_feats = std::move(blocks[1]);

  corpus.captions_of.resize(n_images);
  corpus.image_of.resize(n_texts);
  for (std::size_t i = 0; i < n_images; ++i)
    for (std::size_t c = 0; c < corpus.caption_count; ++c) {
      const std::size_t t = i * corpus.caption_count + c;
      corpus.captions_of[i].push_back(static_cast<std::uint32_t>(t));
      corpus.image_of[t] = static_cast<std::uint32_t>(i);
    }
  corpus.validate();
  return corpus;
}

}  // namespace xmatch
