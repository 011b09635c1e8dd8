// xmatch: synthetic cross-modal retrieval training and evaluation.
//
// Subcommands: gen-data, build-index, train, eval, rank-stats, compare.
// A config file (CLI11 TOML/INI syntax, sections per subcommand) can set any
// flag; explicit command-line flags take precedence.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "xmatch/corpus.hpp"
#include "xmatch/embedder.hpp"
#include "xmatch/evaluator.hpp"
#include "xmatch/losses.hpp"
#include "xmatch/miner.hpp"
#include "xmatch/trainer.hpp"

namespace fs = std::filesystem;
using namespace xmatch;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct GenArgs {
  GeneratorSpec spec{.n_concepts = 50,
                     .images_per_concept = 40,
                     .caption_count = 5,
                     .d_latent = 8,
                     .d_in = 32,
                     .noise_sigma = 0.3,
                     .confusion_sigma = 1.0,
                     .seed = 1};
  std::string out = ".";
  std::string name = "corpus";
  std::size_t eval_images_per_concept = 0;  // 0: images_per_concept/5, min 1
};

void add_gen(CLI::App& app, GenArgs& args) {
  auto* cmd = app.add_subcommand("gen-data", "generate a synthetic corpus (train/val/test)");
  cmd->add_option("--n-concepts", args.spec.n_concepts);
  cmd->add_option("--images-per-concept", args.spec.images_per_concept);
  cmd->add_option("--caption-count", args.spec.caption_count);
  cmd->add_option("--d-latent", args.spec.d_latent);
  cmd->add_option("--d-in", args.spec.d_in);
  cmd->add_option("--noise-sigma", args.spec.noise_sigma);
  cmd->add_option("--confusion-sigma", args.spec.confusion_sigma);
  cmd->add_option("--seed", args.spec.seed);
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--name", args.name, "corpus file prefix");
  cmd->add_option("--eval-images-per-concept", args.eval_images_per_concept);
}

int run_gen(const GenArgs& args) {
  args.spec.validate();
  fs::create_directories(args.out);
  GeneratorSpec eval_spec = args.spec;
  eval_spec.images_per_concept = args.eval_images_per_concept > 0
                                     ? args.eval_images_per_concept
                                     : std::max<std::size_t>(1, args.spec.images_per_concept / 5);
  for (const std::string split : {"train", "val", "test"}) {
    const GeneratorSpec& spec = split == "train" ? args.spec : eval_spec;
    const Corpus corpus = generate(spec, split);
    const std::string prefix = (fs::path(args.out) / (args.name + "_" + split)).string();
    save_corpus(corpus, prefix);
    std::cout << prefix << ": n_images=" << corpus.n_images()
              << " n_texts=" << corpus.n_texts() << " d_in=" << corpus.d_in
              << " caption_count=" << corpus.caption_count << " seed=" << corpus.seed
              << "\n";
  }
  return 0;
}

struct IndexArgs {
  std::string corpus;
  std::string checkpoint;
  std::string out = "index.txt";
  std::string source = "self";
  std::size_t h_text = 0;
  std::size_t h_image = 0;
  std::size_t workers = 1;
};

void add_index(CLI::App& app, IndexArgs& args) {
  auto* cmd = app.add_subcommand("build-index", "build the offline hard-negative index");
  cmd->add_option("--corpus", args.corpus, "corpus prefix")->required();
  cmd->add_option("--checkpoint", args.checkpoint, "model checkpoint prefix")->required();
  cmd->add_option("--out", args.out);
  cmd->add_option("--source", args.source)->check(CLI::IsMember({"self", "teacher"}));
  cmd->add_option("--h-text", args.h_text, "0 = scale from corpus size");
  cmd->add_option("--h-image", args.h_image, "0 = h_text/5 rounded up");
  cmd->add_option("--workers", args.workers);
}

int run_index(const IndexArgs& args) {
  const Corpus corpus = load_corpus(args.corpus);
  const TwoTowerModel model = load_model(args.checkpoint);
  const std::size_t h_text = args.h_text > 0 ? args.h_text : default_h_text(corpus.n_texts());
  const std::size_t h_image = args.h_image > 0 ? args.h_image : default_h_image(h_text);
  OfflineNegativeIndex index =
      build_offline_index(model, corpus, h_text, h_image, args.workers);
  index.source = args.source + ":" + file_hash_hex(args.checkpoint + ".params");
  save_index(index, args.out);
  std::cout << "index: " << args.out << " h_text=" << h_text << " h_image=" << h_image
            << " source=" << index.source << "\n";
  return 0;
}

struct TrainArgs {
  TrainPlan plan;
  std::string variant = "adaptive";
  std::string sampler = "uniform";
  std::string corpus;
  std::string val;
  std::string out = "run";
  std::string teacher;
  bool from_scratch = true;
};

void add_train(CLI::App& app, TrainArgs& args) {
  auto* cmd = app.add_subcommand("train", "train a model (two rounds for offline variants)");
  cmd->add_option("--corpus", args.corpus, "training corpus prefix")->required();
  cmd->add_option("--val", args.val, "validation corpus prefix")->required();
  cmd->add_option("--out", args.out, "run directory");
  cmd->add_option("--variant", args.variant)
      ->check(CLI::IsMember({"std", "online", "off_tri", "off_quin", "adaptive", "off_only"}));
  cmd->add_option("--batch-size", args.plan.batch_size);
  cmd->add_option("--d-emb", args.plan.d_emb);
  cmd->add_option("--seed", args.plan.seed);
  cmd->add_option("--gamma1", args.plan.loss.gamma1);
  cmd->add_option("--gamma2", args.plan.loss.gamma2);
  cmd->add_option("--alpha", args.plan.loss.alpha);
  cmd->add_option("--beta", args.plan.loss.beta);
  cmd->add_option("--h-text", args.plan.h_text, "0 = scale from corpus size");
  cmd->add_option("--h-image", args.plan.h_image);
  cmd->add_option("--sampler", args.sampler)
      ->check(CLI::IsMember({"uniform", "truncated_normal"}));
  cmd->add_option("--r1-epochs-hi", args.plan.round1.epochs_hi);
  cmd->add_option("--r1-epochs-lo", args.plan.round1.epochs_lo);
  cmd->add_option("--r1-lr-hi", args.plan.round1.lr_hi);
  cmd->add_option("--r1-lr-lo", args.plan.round1.lr_lo);
  cmd->add_option("--r2-epochs-hi", args.plan.round2.epochs_hi);
  cmd->add_option("--r2-epochs-lo", args.plan.round2.epochs_lo);
  cmd->add_option("--r2-lr-hi", args.plan.round2.lr_hi);
  cmd->add_option("--r2-lr-lo", args.plan.round2.lr_lo);
  cmd->add_option("--teacher", args.teacher, "teacher checkpoint prefix (skips round 1)");
  cmd->add_flag("--from-scratch,!--no-from-scratch", args.from_scratch,
                "re-initialize parameters for round 2");
  cmd->add_option("--workers", args.plan.workers);
}

int run_train(TrainArgs& args) {
  args.plan.sampler = parse_sampler(args.sampler);
  args.plan.round2.from_scratch = args.from_scratch;
  if (!args.teacher.empty()) {
    args.plan.index_source = "teacher";
    args.plan.teacher_path = args.teacher;
  }
  const LossVariant variant = parse_variant(args.variant);
  const Corpus train_corpus = load_corpus(args.corpus);
  const Corpus val_corpus = load_corpus(args.val);
  fs::create_directories(args.out);

  if (!variant_needs_index(variant)) {
    // single-round baseline (std or online)
    args.plan.round1.variant = variant;
    args.plan.validate();
    const TwoTowerModel m0 =
        init_model(train_corpus.d_in, args.plan.d_emb, Rng(args.plan.seed).fork(1).next_u64());
    Rng rng = Rng(args.plan.seed).fork(11);
    const TrainResult result =
        train_round(m0, train_corpus, val_corpus, args.plan.round1, args.plan, nullptr, rng);
    save_model(result.model, (fs::path(args.out) / "final").string());
    save_metric_log(result.log, (fs::path(args.out) / "round1_log.csv").string());
    std::cout << "best rsum: "
              << std::max_element(result.log.begin(), result.log.end(),
                                  [](auto& a, auto& b) { return a.report.rsum < b.report.rsum; })
                     ->report.rsum
              << "\n";
    return 0;
  }

  args.plan.round2.variant = variant;
  args.plan.validate();
  const TwoRoundResult result = run_two_round(args.plan, train_corpus, val_corpus, args.out);
  std::cout << "round-2 best rsum: "
            << std::max_element(result.round2_log.begin(), result.round2_log.end(),
                                [](auto& a, auto& b) { return a.report.rsum < b.report.rsum; })
                   ->report.rsum
            << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out;
  std::size_t workers = 1;
};

void add_eval(CLI::App& app, EvalArgs& args) {
  auto* cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
  cmd->add_option("--checkpoint", args.checkpoint)->required();
  cmd->add_option("--corpus", args.corpus)->required();
  cmd->add_option("--out", args.out, "optional CSV output path");
  cmd->add_option("--workers", args.workers);
}

int run_eval(const EvalArgs& args) {
  const TwoTowerModel model = load_model(args.checkpoint);
  const Corpus corpus = load_corpus(args.corpus);
  const RetrievalReport report = evaluate(model, corpus, args.workers);
  std::cout << report.table(fs::path(args.checkpoint).filename().string());
  if (!args.out.empty()) {
    std::ofstream out(args.out, std::ios::trunc);
    if (!out) throw IoError("cannot write report: " + args.out);
    out << report.csv();
  }
  return 0;
}

struct RankArgs {
  std::size_t n = 500000;
  std::size_t batch = 128;
  std::size_t top_k = 100;
  std::size_t trials = 1000000;
  std::uint64_t seed = 1;
};

void add_rank(CLI::App& app, RankArgs& args) {
  auto* cmd =
      app.add_subcommand("rank-stats", "global-rank statistics of batch-mined negatives");
  cmd->add_option("--n", args.n, "corpus size");
  cmd->add_option("--batch", args.batch, "mini-batch size");
  cmd->add_option("--top-k", args.top_k);
  cmd->add_option("--trials", args.trials);
  cmd->add_option("--seed", args.seed);
}

int run_rank(const RankArgs& args) {
  Rng rng(args.seed);
  const RankStats stats = rank_statistics(args.n, args.batch, args.top_k, args.trials, rng);
  const double b = static_cast<double>(args.batch - 1);
  const double mean_closed = (static_cast<double>(args.n) + 1.0) / (b + 1.0);
  const double p_closed =
      1.0 - std::pow(1.0 - static_cast<double>(args.top_k) / static_cast<double>(args.n), b);
  // half-widths: ~2 sigma for the mean (sd <= N/B), binomial for p
  const double mean_hw = 2.0 * mean_closed / std::sqrt(static_cast<double>(args.trials));
  const double p_hw =
      2.0 * std::sqrt(p_closed * (1.0 - p_closed) / static_cast<double>(args.trials));
  std::cout << "mean_min_rank " << stats.mean_min_rank << " +- " << mean_hw
            << " (closed form " << mean_closed << ")\n";
  std::cout << "p_top_" << args.top_k << " " << stats.p_top_k << " +- " << p_hw
            << " (closed form " << p_closed << ")\n";
  return 0;
}

struct CompareArgs {
  std::string log_a;
  std::string log_b;
  std::string out;
};

void add_compare(CLI::App& app, CompareArgs& args) {
  auto* cmd = app.add_subcommand("compare", "compare two training metric logs");
  cmd->add_option("--log-a", args.log_a, "baseline log CSV")->required();
  cmd->add_option("--log-b", args.log_b, "candidate log CSV")->required();
  cmd->add_option("--out", args.out, "optional CSV output path");
}

int run_compare(const CompareArgs& args) {
  const auto log_a = load_metric_log(args.log_a);
  const auto log_b = load_metric_log(args.log_b);
  const ComparisonReport report = compare_runs(log_a, log_b);
  std::cout << report.csv();
  if (!args.out.empty()) {
    std::ofstream out(args.out, std::ios::trunc);
    if (!out) throw IoError("cannot write comparison: " + args.out);
    out << report.csv();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic cross-modal retrieval trainer"};
  app.require_subcommand(1);
  app.set_config("--config", "", "config file (flags take precedence)");

  GenArgs gen_args;
  IndexArgs index_args;
  TrainArgs train_args;
  EvalArgs eval_args;
  RankArgs rank_args;
  CompareArgs compare_args;
  add_gen(app, gen_args);
  add_index(app, index_args);
  add_train(app, train_args);
  add_eval(app, eval_args);
  add_rank(app, rank_args);
  add_compare(app, compare_args);
  // let `xmatch <cmd> --config file` reach the app-level config option
  for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (app.got_subcommand("gen-data")) return run_gen(gen_args);
    if (app.got_subcommand("build-index")) return run_index(index_args);
    if (app.got_subcommand("train")) {
      // echo the effective configuration into the run directory
      fs::create_directories(train_args.out);
      std::ofstream cfg(fs::path(train_args.out) / "config.ini");
      cfg << app.config_to_str(true, true);
      return run_train(train_args);
    }
    if (app.got_subcommand("eval")) return run_eval(eval_args);
    if (app.got_subcommand("rank-stats")) return run_rank(rank_args);
    if (app.got_subcommand("compare")) return run_compare(compare_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
