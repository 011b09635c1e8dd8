#include "xmatch/miner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace xmatch {

std::vector<OnlinePick> mine_online(std::span<const double> scores,
                                    std::span<const std::uint32_t> row_image_ids,
                                    std::span<const std::uint32_t> col_text_owner_ids) {
  const std::size_t b = row_image_ids.size();
  if (b < 2 || col_text_owner_ids.size() != b)
    throw MiningError("mine_online: batch needs >= 2 positive pairs");
  if (scores.size() != b * b) throw ContractError("mine_online: score matrix shape mismatch");

  std::vector<OnlinePick> picks(b);
  for (std::size_t k = 0; k < b; ++k) {
    bool found_t = false, found_i = false;
    double best_t = 0.0, best_i = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (col_text_owner_ids[j] != row_image_ids[k]) {
        const double s = scores[k * b + j];
        if (!found_t || s > best_t) {
          found_t = true;
          best_t = s;
          picks[k].t_on_col = j;
        }
      }
      if (row_image_ids[j] != col_text_owner_ids[k]) {
        const double s = scores[j * b + k];
        if (!found_i || s > best_i) {
          found_i = true;
          best_i = s;
          picks[k].i_on_row = j;
        }
      }
    }
    if (!found_t || !found_i)
      throw MiningError("mine_online: no eligible negative for pair " + std::to_string(k));
  }
  return picks;
}

std::size_t default_h_text(std::size_t n_texts) {
  const double scaled = 300.0 * static_cast<double>(n_texts) / 566435.0;
  return std::max<std::size_t>(3, static_cast<std::size_t>(std::llround(scaled)));
}

std::size_t default_h_image(std::size_t h_text) {
  return (h_text + 4) / 5;
}

namespace {

// top-h by (score desc, id asc) with a full scan per anchor
std::vector<std::uint32_t> top_h(const std::vector<double>& anchor_scores,
                                 const std::vector<bool>& excluded, std::size_t h) {
  std::vector<std::uint32_t> ids;
  ids.reserve(anchor_scores.size());
  for (std::uint32_t c = 0; c < anchor_scores.size(); ++c)
    if (!excluded[c]) ids.push_back(c);
  auto harder = [&](std::uint32_t a, std::uint32_t b) {
    if (anchor_scores[a] != anchor_scores[b]) return anchor_scores[a] > anchor_scores[b];
    return a < b;
  };
  const std::size_t keep = std::min(h, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + keep, ids.end(), harder);
  ids.resize(keep);
  return ids;
}

}  // namespace

OfflineNegativeIndex build_offline_index(const TwoTowerModel& model, const Corpus& corpus,
                                         std::size_t h_text, std::size_t h_image,
                                         std::size_t workers) {
  if (corpus.n_images() == 0) throw MiningError("build_offline_index: empty corpus");
  if (h_text < 1 || h_image < 1) throw ConfigError("build_offline_index: h must be >= 1");

  std::vector<std::uint32_t> all_images(corpus.n_images()), all_texts(corpus.n_texts());
  for (std::uint32_t i = 0; i < all_images.size(); ++i) all_images[i] = i;
  for (std::uint32_t t = 0; t < all_texts.size(); ++t) all_texts[t] = t;
  const std::vector<double> scores =
      score_matrix(model, corpus, all_images, all_texts, workers);
  const std::size_t nt = corpus.n_texts();

  OfflineNegativeIndex index;
  index.h_text = h_text;
  index.h_image = h_image;
  index.text_lists.resize(corpus.n_images());
  index.image_lists.resize(corpus.n_texts());

  auto image_anchor = [&](std::uint32_t i) {
    std::vector<double> row(scores.begin() + i * nt, scores.begin() + (i + 1) * nt);
    std::vector<bool> excluded(nt, false);
    for (std::uint32_t t : corpus.captions_of[i]) excluded[t] = true;
    index.text_lists[i] = top_h(row, excluded, h_text);
  };
  auto text_anchor = [&](std::uint32_t t) {
    std::vector<double> col(corpus.n_images());
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = scores[i * nt + t];
    std::vector<bool> excluded(corpus.n_images(), false);
    excluded[corpus.image_of[t]] = true;
    index.image_lists[t] = top_h(col, excluded, h_image);
  };

  const std::size_t total = corpus.n_images() + corpus.n_texts();
  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t a = lo; a < hi; ++a) {
      if (a < corpus.n_images())
        image_anchor(static_cast<std::uint32_t>(a));
      else
        text_anchor(static_cast<std::uint32_t>(a - corpus.n_images()));
    }
  };
  if (workers <= 1) {
    run_range(0, total);
  } else {
    const std::size_t n = std::min(workers, total);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n; ++w)
      pool.emplace_back(run_range, total * w / n, total * (w + 1) / n);
    for (auto& th : pool) th.join();
  }
  return index;
}

SamplerMode parse_sampler(const std::string& name) {
  if (name == "uniform") return SamplerMode::Uniform;
  if (name == "truncated_normal") return SamplerMode::TruncatedNormal;
  throw ConfigError("unknown sampler mode '" + name + "'");
}

std::string sampler_name(SamplerMode m) {
  return m == SamplerMode::Uniform ? "uniform" : "truncated_normal";
}

namespace {

std::size_t draw_position(Rng& rng, std::size_t len, SamplerMode mode) {
  if (mode == SamplerMode::Uniform) return rng.next_below(len);
  // half-normal over rank positions, clipped to the list
  const double sigma = static_cast<double>(len) / 2.0;
  const double pos = std::floor(std::abs(rng.next_normal()) * sigma);
  return std::min<std::size_t>(static_cast<std::size_t>(pos), len - 1);
}

}  // namespace

OfflineSelection sample_offline(const OfflineNegativeIndex& index, const Corpus& corpus,
                                std::uint32_t image, std::uint32_t text, Rng& rng,
                                SamplerMode mode) {
  if (image >= index.text_lists.size() || text >= index.image_lists.size())
    throw ContractError("sample_offline: anchor id out of range");
  const auto& texts = index.text_lists[image];
  const auto& images = index.image_lists[text];
  if (texts.empty() || images.empty())
    throw MiningError("sample_offline: empty candidate list for anchor");

  for (int attempt = 0; attempt < 100; ++attempt) {
    const std::uint32_t t_off = texts[draw_position(rng, texts.size(), mode)];
    const std::uint32_t i_off = images[draw_position(rng, images.size(), mode)];
    if (corpus.is_positive(i_off, t_off)) continue;  // re-sample both
    OfflineSelection sel;
    sel.t_off = t_off;
    sel.i_off = i_off;
    sel.i_tilde = corpus.image_of[t_off];
    sel.t_tilde = corpus.captions_of[i_off].front();
    return sel;
  }
  throw MiningError("sample_offline: 100 redraws exhausted (pathological index)");
}

RankStats rank_statistics(std::size_t n_corpus, std::size_t batch_size, std::size_t top_k,
                          std::size_t trials, Rng& rng) {
  if (batch_size < 2) throw ConfigError("rank_statistics: batch_size must be >= 2");
  if (trials < 1) throw ConfigError("rank_statistics: trials must be >= 1");
  if (batch_size > n_corpus)
    throw ConfigError("rank_statistics: batch_size exceeds corpus size");

  const std::size_t draws = batch_size - 1;
  double sum_min = 0.0;
  std::size_t hits = 0;
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(draws * 2);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    seen.clear();
    std::uint64_t min_rank = UINT64_MAX;
    while (seen.size() < draws) {
      const std::uint64_t r = rng.next_below(n_corpus) + 1;
      if (seen.insert(r).second && r < min_rank) min_rank = r;
    }
    sum_min += static_cast<double>(min_rank);
    if (min_rank <= top_k) ++hits;
  }
  RankStats stats;
  stats.mean_min_rank = sum_min / static_cast<double>(trials);
  stats.p_top_k = static_cast<double>(hits) / static_cast<double>(trials);
  return stats;
}

void save_index(const OfflineNegativeIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write index: " + path);
  out << "h_text=" << index.h_text << "\n";
  out << "h_image=" << index.h_image << "\n";
  out << "source=" << index.source << "\n";
  for (std::size_t i = 0; i < index.text_lists.size(); ++i) {
    out << "I " << i << ":";
    for (std::uint32_t t : index.text_lists[i]) out << " " << t;
    out << "\n";
  }
  for (std::size_t t = 0; t < index.image_lists.size(); ++t) {
    out << "T " << t << ":";
    for (std::uint32_t i : index.image_lists[t]) out << " " << i;
    out << "\n";
  }
  if (!out) throw IoError("short write on index: " + path);
}

OfflineNegativeIndex load_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read index: " + path);
  OfflineNegativeIndex index;
  std::string line;
  for (int k = 0; k < 3; ++k) {
    if (!std::getline(in, line)) throw IoError("index header truncated: " + path);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("index header malformed: " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "h_text")
      index.h_text = std::stoull(value);
    else if (key == "h_image")
      index.h_image = std::stoull(value);
    else if (key == "source")
      index.source = value;
    else
      throw IoError("index header: unexpected key '" + key + "'");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    char kind;
    std::uint64_t anchor;
    char colon;
    if (!(ls >> kind >> anchor >> colon) || colon != ':' || (kind != 'I' && kind != 'T'))
      throw IoError("index: malformed anchor line '" + line + "'");
    std::vector<std::uint32_t> ids;
    std::uint64_t id;
    while (ls >> id) ids.push_back(static_cast<std::uint32_t>(id));
    auto& lists = kind == 'I' ? index.text_lists : index.image_lists;
    if (anchor != lists.size())
      throw IoError("index: anchor lines out of order at '" + line + "'");
    lists.push_back(std::move(ids));
  }
  return index;
}

}  // namespace xmatch
