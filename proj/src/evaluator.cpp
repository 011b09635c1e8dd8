#include "xmatch/evaluator.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace xmatch {

namespace {

// 1-based rank of candidate `target` under (score desc, index asc)
std::uint64_t rank_of(std::span<const double> cand_scores, std::size_t target) {
  const double s = cand_scores[target];
  std::uint64_t rank = 1;
  for (std::size_t j = 0; j < cand_scores.size(); ++j) {
    if (j == target) continue;
    if (cand_scores[j] > s || (cand_scores[j] == s && j < target)) ++rank;
  }
  return rank;
}

std::size_t bucket_of(std::uint64_t cross_rank) {
  for (std::size_t b = 0; b < kCrossRankBucketUpper.size(); ++b)
    if (cross_rank <= kCrossRankBucketUpper[b]) return b;
  return kCrossRankBucketUpper.size();
}

}  // namespace

RetrievalReport evaluate_scores(std::span<const double> scores, std::size_t n_images,
                                std::size_t n_texts,
                                const std::vector<std::vector<std::uint32_t>>& captions_of,
                                const std::vector<std::uint32_t>& image_of) {
  if (n_images == 0 || n_texts == 0) throw EvalError("evaluate: empty split");
  if (scores.size() != n_images * n_texts)
    throw ContractError("evaluate: score table shape mismatch");

  std::uint64_t hit1_i2t = 0, hit5_i2t = 0, hit10_i2t = 0;
  std::uint64_t hit1_t2i = 0, hit5_t2i = 0, hit10_t2i = 0;
  RetrievalReport report;

  // image queries: best rank over the image's captions
  std::vector<std::uint64_t> text_rank(n_texts);  // r_t of each positive pair
  for (std::size_t i = 0; i < n_images; ++i) {
    auto row = scores.subspan(i * n_texts, n_texts);
    std::uint64_t best = UINT64_MAX;
    for (std::uint32_t t : captions_of[i]) {
      text_rank[t] = rank_of(row, t);
      best = std::min(best, text_rank[t]);
    }
    if (best <= 1) ++hit1_i2t;
    if (best <= 5) ++hit5_i2t;
    if (best <= 10) ++hit10_i2t;
  }

  // text queries
  std::vector<double> col(n_images);
  const std::size_t caption_count = n_texts / n_images;
  for (std::size_t t = 0; t < n_texts; ++t) {
    for (std::size_t i = 0; i < n_images; ++i) col[i] = scores[i * n_texts + t];
    const std::uint64_t r_i = rank_of(col, image_of[t]);
    if (r_i <= 1) ++hit1_t2i;
    if (r_i <= 5) ++hit5_t2i;
    if (r_i <= 10) ++hit10_t2i;
    ++report.cross_rank_histogram[bucket_of(
        cross_retrieval_rank(r_i, text_rank[t], caption_count))];
  }

  const double ni = static_cast<double>(n_images);
  const double nt = static_cast<double>(n_texts);
  report.r1_i2t = hit1_i2t / ni;
  report.r5_i2t = hit5_i2t / ni;
  report.r10_i2t = hit10_i2t / ni;
  report.r1_t2i = hit1_t2i / nt;
  report.r5_t2i = hit5_t2i / nt;
  report.r10_t2i = hit10_t2i / nt;
  report.rsum = 100.0 * (report.r1_i2t + report.r5_i2t + report.r10_i2t + report.r1_t2i +
                         report.r5_t2i + report.r10_t2i);
  return report;
}

RetrievalReport evaluate(const TwoTowerModel& model, const Corpus& split,
                         std::size_t workers) {
  if (split.n_images() == 0) throw EvalError("evaluate: empty split");
  std::vector<std::uint32_t> images(split.n_images()), texts(split.n_texts());
  for (std::uint32_t i = 0; i < images.size(); ++i) images[i] = i;
  for (std::uint32_t t = 0; t < texts.size(); ++t) texts[t] = t;
  const std::vector<double> scores = score_matrix(model, split, images, texts, workers);
  return evaluate_scores(scores, split.n_images(), split.n_texts(), split.captions_of,
                         split.image_of);
}

std::uint64_t cross_retrieval_rank(std::uint64_t r_i, std::uint64_t r_t,
                                   std::size_t caption_count) {
  if (r_i < 1 || r_t < 1) throw ContractError("cross_retrieval_rank: ranks must be >= 1");
  if (caption_count < 1) throw ContractError("cross_retrieval_rank: caption_count >= 1");
  const std::uint64_t weighted = caption_count * r_i - (caption_count - 1);
  return std::max(weighted, r_t);
}

std::string RetrievalReport::csv() const {
  std::ostringstream os;
  os << "r1_i2t,r5_i2t,r10_i2t,r1_t2i,r5_t2i,r10_t2i,rsum,"
        "cross_1,cross_2_10,cross_11_50,cross_51_200,cross_gt_200\n";
  os << std::setprecision(10) << r1_i2t << "," << r5_i2t << "," << r10_i2t << "," << r1_t2i
     << "," << r5_t2i << "," << r10_t2i << "," << rsum;
  for (auto c : cross_rank_histogram) os << "," << c;
  os << "\n";
  return os.str();
}

std::string RetrievalReport::table(const std::string& label) const {
  std::ostringstream os;
  os << std::left << std::setw(20) << "Model" << std::right << std::setw(8) << "R@1"
     << std::setw(8) << "R@5" << std::setw(8) << "R@10" << std::setw(8) << "R@1"
     << std::setw(8) << "R@5" << std::setw(8) << "R@10" << std::setw(10) << "rsum" << "\n";
  os << std::left << std::setw(20) << label << std::right << std::fixed
     << std::setprecision(1) << std::setw(8) << 100 * r1_i2t << std::setw(8) << 100 * r5_i2t
     << std::setw(8) << 100 * r10_i2t << std::setw(8) << 100 * r1_t2i << std::setw(8)
     << 100 * r5_t2i << std::setw(8) << 100 * r10_t2i << std::setw(10) << rsum << "\n";
  return os.str();
}

std::string metrics_csv_header() {
  return "epoch,split,r1_i2t,r5_i2t,r10_i2t,r1_t2i,r5_t2i,r10_t2i,rsum,"
         "mean_batch_loss,neg_weight_events,secs_per_batch";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  std::ostringstream os;
  os << std::setprecision(12) << m.epoch << "," << m.split << "," << m.report.r1_i2t << ","
     << m.report.r5_i2t << "," << m.report.r10_i2t << "," << m.report.r1_t2i << ","
     << m.report.r5_t2i << "," << m.report.r10_t2i << "," << m.report.rsum << ","
     << m.mean_batch_loss << "," << m.neg_weight_events << "," << m.secs_per_batch;
  return os.str();
}

void save_metric_log(const std::vector<EpochMetrics>& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write metric log: " + path);
  out << metrics_csv_header() << "\n";
  for (const auto& m : log) out << metrics_csv_row(m) << "\n";
  if (!out) throw IoError("short write on metric log: " + path);
}

std::vector<EpochMetrics> load_metric_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metric log: " + path);
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header())
    throw IoError("metric log: bad header in " + path);
  std::vector<EpochMetrics> log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EpochMetrics m;
    std::string field;
    auto next = [&] {
      if (!std::getline(ls, field, ',')) throw IoError("metric log: short row: " + line);
      return field;
    };
    m.epoch = std::stoull(next());
    m.split = next();
    m.report.r1_i2t = std::stod(next());
    m.report.r5_i2t = std::stod(next());
    m.report.r10_i2t = std::stod(next());
    m.report.r1_t2i = std::stod(next());
    m.report.r5_t2i = std::stod(next());
    m.report.r10_t2i = std::stod(next());
    m.report.rsum = std::stod(next());
    m.mean_batch_loss = std::stod(next());
    m.neg_weight_events = std::stoull(next());
    m.secs_per_batch = std::stod(next());
    log.push_back(std::move(m));
  }
  return log;
}

ComparisonReport compare_runs(std::span<const EpochMetrics> log_a,
                              std::span<const EpochMetrics> log_b) {
  if (log_a.size() != log_b.size()) throw EvalError("compare_runs: epoch grids differ");
  for (std::size_t k = 0; k < log_a.size(); ++k)
    if (log_a[k].epoch != log_b[k].epoch)
      throw EvalError("compare_runs: epoch grids differ at row " + std::to_string(k));

  ComparisonReport report;
  double best_a_i2t = 0.0, best_a_t2i = 0.0;
  for (const auto& m : log_a) {
    best_a_i2t = std::max(best_a_i2t, m.report.r1_i2t);
    best_a_t2i = std::max(best_a_t2i, m.report.r1_t2i);
  }
  for (std::size_t k = 0; k < log_a.size(); ++k) {
    report.delta_r1_i2t.push_back(log_b[k].report.r1_i2t - log_a[k].report.r1_i2t);
    report.delta_r1_t2i.push_back(log_b[k].report.r1_t2i - log_a[k].report.r1_t2i);
    if (report.epochs_to_surpass_i2t == 0 && log_b[k].report.r1_i2t > best_a_i2t)
      report.epochs_to_surpass_i2t = k + 1;
    if (report.epochs_to_surpass_t2i == 0 && log_b[k].report.r1_t2i > best_a_t2i)
      report.epochs_to_surpass_t2i = k + 1;
  }
  if (!log_a.empty()) {
    for (std::size_t b = 0; b < 5; ++b)
      report.cross_hist_delta[b] =
          static_cast<std::int64_t>(log_b.back().report.cross_rank_histogram[b]) -
          static_cast<std::int64_t>(log_a.back().report.cross_rank_histogram[b]);
  }
  return report;
}

std::string ComparisonReport::csv() const {
  std::ostringstream os;
  os << "epoch,delta_r1_i2t,delta_r1_t2i\n";
  for (std::size_t k = 0; k < delta_r1_i2t.size(); ++k)
    os << (k + 1) << "," << std::setprecision(10) << delta_r1_i2t[k] << ","
       << delta_r1_t2i[k] << "\n";
  os << "epochs_to_surpass_i2t," << epochs_to_surpass_i2t << "\n";
  os << "epochs_to_surpass_t2i," << epochs_to_surpass_t2i << "\n";
  os << "cross_hist_delta";
  for (auto d : cross_hist_delta) os << "," << d;
  os << "\n";
  return os.str();
}

}  // namespace xmatch
