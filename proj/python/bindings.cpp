// Python bindings for the xmatch core library.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <span>

#include "xmatch/common.hpp"
#include "xmatch/corpus.hpp"
#include "xmatch/embedder.hpp"
#include "xmatch/evaluator.hpp"
#include "xmatch/losses.hpp"
#include "xmatch/miner.hpp"
#include "xmatch/trainer.hpp"

namespace py = pybind11;
using namespace xmatch;

namespace {

std::vector<PairScores> to_batch(const std::vector<PairScores>& batch) { return batch; }

}  // namespace

PYBIND11_MODULE(_xmatch, m) {
  m.doc() = "Cross-modal retrieval training with offline hard-negative mining";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<MiningError>(m, "MiningError", PyExc_RuntimeError);
  py::register_exception<TrainError>(m, "TrainError", PyExc_RuntimeError);
  py::register_exception<EvalError>(m, "EvalError", PyExc_RuntimeError);

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("next_u64", &Rng::next_u64)
      .def("next_double", &Rng::next_double)
      .def("next_below", &Rng::next_below, py::arg("n"))
      .def("next_normal", &Rng::next_normal)
      .def("fork", &Rng::fork, py::arg("stream_id"));

  // ---- corpus ---------------------------------------------------------------
  py::class_<GeneratorSpec>(m, "GeneratorSpec")
      .def(py::init([](std::size_t n_concepts, std::size_t images_per_concept,
                       std::size_t caption_count, std::size_t d_latent, std::size_t d_in,
                       double noise_sigma, double confusion_sigma, std::uint64_t seed) {
             return GeneratorSpec{n_concepts, images_per_concept, caption_count,
                                  d_latent,   d_in,               noise_sigma,
                                  confusion_sigma, seed};
           }),
           py::arg("n_concepts"), py::arg("images_per_concept"),
           py::arg("caption_count") = 5, py::arg("d_latent") = 0, py::arg("d_in") = 0,
           py::arg("noise_sigma") = 0.0, py::arg("confusion_sigma") = 1.0,
           py::arg("seed") = 0)
      .def_readwrite("n_concepts", &GeneratorSpec::n_concepts)
      .def_readwrite("images_per_concept", &GeneratorSpec::images_per_concept)
      .def_readwrite("caption_count", &GeneratorSpec::caption_count)
      .def_readwrite("d_latent", &GeneratorSpec::d_latent)
      .def_readwrite("d_in", &GeneratorSpec::d_in)
      .def_readwrite("noise_sigma", &GeneratorSpec::noise_sigma)
      .def_readwrite("confusion_sigma", &GeneratorSpec::confusion_sigma)
      .def_readwrite("seed", &GeneratorSpec::seed)
      .def("validate", &GeneratorSpec::validate);

  py::class_<Corpus>(m, "Corpus")
      .def_readonly("d_in", &Corpus::d_in)
      .def_readonly("caption_count", &Corpus::caption_count)
      .def_readonly("seed", &Corpus::seed)
      .def_readonly("split", &Corpus::split)
      .def_readonly("captions_of", &Corpus::captions_of)
      .def_readonly("image_of", &Corpus::image_of)
      .def_property_readonly("n_images", &Corpus::n_images)
      .def_property_readonly("n_texts", &Corpus::n_texts)
      .def("is_positive", &Corpus::is_positive, py::arg("image"), py::arg("text"))
      .def("validate", &Corpus::validate)
      .def("image_feature",
           [](const Corpus& c, std::size_t i) {
             if (i >= c.n_images()) throw py::index_error();
             return std::vector<float>(c.image_row(i), c.image_row(i) + c.d_in);
           },
           py::arg("i"))
      .def("text_feature",
           [](const Corpus& c, std::size_t t) {
             if (t >= c.n_texts()) throw py::index_error();
             return std::vector<float>(c.text_row(t), c.text_row(t) + c.d_in);
           },
           py::arg("t"));

  m.def("generate", &generate, py::arg("spec"), py::arg("split") = "train");
  m.def("save_corpus", &save_corpus, py::arg("corpus"), py::arg("prefix"));
  m.def("load_corpus", &load_corpus, py::arg("prefix"));

  // ---- embedder -------------------------------------------------------------
  py::class_<TwoTowerModel>(m, "TwoTowerModel")
      .def_readonly("d_in", &TwoTowerModel::d_in)
      .def_readonly("d_emb", &TwoTowerModel::d_emb)
      .def_readonly("seed", &TwoTowerModel::seed)
      .def_readonly("epoch", &TwoTowerModel::epoch)
      .def_readwrite("w_img", &TwoTowerModel::w_img)
      .def_readwrite("w_txt", &TwoTowerModel::w_txt);

  m.def("init_model", &init_model, py::arg("d_in"), py::arg("d_emb"), py::arg("seed"));
  m.def("score",
        [](const TwoTowerModel& model, const std::vector<float>& image,
           const std::vector<float>& text) {
          return score(model, std::span<const float>(image), std::span<const float>(text));
        },
        py::arg("model"), py::arg("image_feature"), py::arg("text_feature"));
  m.def("score_matrix",
        [](const TwoTowerModel& model, const Corpus& corpus,
           const std::vector<std::uint32_t>& image_ids,
           const std::vector<std::uint32_t>& text_ids, std::size_t workers) {
          return score_matrix(model, corpus, image_ids, text_ids, workers);
        },
        py::arg("model"), py::arg("corpus"), py::arg("image_ids"), py::arg("text_ids"),
        py::arg("workers") = 1);
  m.def("save_model", &save_model, py::arg("model"), py::arg("prefix"));
  m.def("load_model", &load_model, py::arg("prefix"));

  // ---- losses ---------------------------------------------------------------
  py::enum_<LossVariant>(m, "LossVariant")
      .value("Std", LossVariant::Std)
      .value("Online", LossVariant::Online)
      .value("OffTri", LossVariant::OffTri)
      .value("OffQuin", LossVariant::OffQuin)
      .value("Adaptive", LossVariant::Adaptive)
      .value("OffOnly", LossVariant::OffOnly);
  m.def("parse_variant", &parse_variant, py::arg("name"));
  m.def("variant_name", &variant_name, py::arg("variant"));

  py::class_<LossConfig>(m, "LossConfig")
      .def(py::init<>())
      .def_readwrite("gamma1", &LossConfig::gamma1)
      .def_readwrite("gamma2", &LossConfig::gamma2)
      .def_readwrite("alpha", &LossConfig::alpha)
      .def_readwrite("beta", &LossConfig::beta)
      .def_readwrite("variant", &LossConfig::variant)
      .def("validate", &LossConfig::validate);

  py::class_<PairScores>(m, "PairScores")
      .def(py::init<>())
      .def_readwrite("s_pos", &PairScores::s_pos)
      .def_readwrite("s_t_on", &PairScores::s_t_on)
      .def_readwrite("s_i_on", &PairScores::s_i_on)
      .def_readwrite("s_t_off", &PairScores::s_t_off)
      .def_readwrite("s_i_off", &PairScores::s_i_off)
      .def_readwrite("s_cross", &PairScores::s_cross)
      .def_readwrite("s_tilde", &PairScores::s_tilde)
      .def_readwrite("neg_texts", &PairScores::neg_texts)
      .def_readwrite("neg_images", &PairScores::neg_images);

  py::class_<PairScoreGrad>(m, "PairScoreGrad")
      .def_readonly("g_pos", &PairScoreGrad::g_pos)
      .def_readonly("g_t_on", &PairScoreGrad::g_t_on)
      .def_readonly("g_i_on", &PairScoreGrad::g_i_on)
      .def_readonly("g_t_off", &PairScoreGrad::g_t_off)
      .def_readonly("g_i_off", &PairScoreGrad::g_i_off)
      .def_readonly("g_cross", &PairScoreGrad::g_cross)
      .def_readonly("g_tilde", &PairScoreGrad::g_tilde)
      .def_readonly("g_neg_texts", &PairScoreGrad::g_neg_texts)
      .def_readonly("g_neg_images", &PairScoreGrad::g_neg_images);

  m.def("loss_value",
        [](const std::vector<PairScores>& batch, const LossConfig& cfg) {
          return loss_value(to_batch(batch), cfg);
        },
        py::arg("batch"), py::arg("config"));
  m.def("grad_scores",
        [](const std::vector<PairScores>& batch, const LossConfig& cfg) {
          return grad_scores(to_batch(batch), cfg);
        },
        py::arg("batch"), py::arg("config"));
  m.def("fd_check",
        [](const std::vector<PairScores>& batch, const LossConfig& cfg, double epsilon) {
          return fd_check(to_batch(batch), cfg, epsilon);
        },
        py::arg("batch"), py::arg("config"), py::arg("epsilon") = 1e-5);

  // ---- miner ----------------------------------------------------------------
  py::enum_<SamplerMode>(m, "SamplerMode")
      .value("Uniform", SamplerMode::Uniform)
      .value("TruncatedNormal", SamplerMode::TruncatedNormal);

  py::class_<OfflineNegativeIndex>(m, "OfflineNegativeIndex")
      .def_readonly("h_text", &OfflineNegativeIndex::h_text)
      .def_readonly("h_image", &OfflineNegativeIndex::h_image)
      .def_readonly("source", &OfflineNegativeIndex::source)
      .def_readonly("text_lists", &OfflineNegativeIndex::text_lists)
      .def_readonly("image_lists", &OfflineNegativeIndex::image_lists);

  py::class_<OnlinePick>(m, "OnlinePick")
      .def_readonly("t_on_col", &OnlinePick::t_on_col)
      .def_readonly("i_on_row", &OnlinePick::i_on_row);

  py::class_<OfflineSelection>(m, "OfflineSelection")
      .def_readonly("t_off", &OfflineSelection::t_off)
      .def_readonly("i_off", &OfflineSelection::i_off)
      .def_readonly("i_tilde", &OfflineSelection::i_tilde)
      .def_readonly("t_tilde", &OfflineSelection::t_tilde);

  m.def("mine_online",
        [](const std::vector<double>& scores, const std::vector<std::uint32_t>& rows,
           const std::vector<std::uint32_t>& cols) {
          return mine_online(scores, rows, cols);
        },
        py::arg("scores"), py::arg("row_image_ids"), py::arg("col_text_owner_ids"));
  m.def("build_offline_index", &build_offline_index, py::arg("model"), py::arg("corpus"),
        py::arg("h_text"), py::arg("h_image"), py::arg("workers") = 1);
  m.def("sample_offline", &sample_offline, py::arg("index"), py::arg("corpus"),
        py::arg("image"), py::arg("text"), py::arg("rng"),
        py::arg("mode") = SamplerMode::Uniform);
  m.def("default_h_text", &default_h_text, py::arg("n_texts"));
  m.def("default_h_image", &default_h_image, py::arg("h_text"));
  m.def("save_index", &save_index, py::arg("index"), py::arg("path"));
  m.def("load_index", &load_index, py::arg("path"));

  py::class_<RankStats>(m, "RankStats")
      .def_readonly("mean_min_rank", &RankStats::mean_min_rank)
      .def_readonly("p_top_k", &RankStats::p_top_k);
  m.def("rank_statistics", &rank_statistics, py::arg("n_corpus"), py::arg("batch_size"),
        py::arg("top_k"), py::arg("trials"), py::arg("rng"));

  // ---- evaluator ------------------------------------------------------------
  py::class_<RetrievalReport>(m, "RetrievalReport")
      .def_readonly("r1_i2t", &RetrievalReport::r1_i2t)
      .def_readonly("r5_i2t", &RetrievalReport::r5_i2t)
      .def_readonly("r10_i2t", &RetrievalReport::r10_i2t)
      .def_readonly("r1_t2i", &RetrievalReport::r1_t2i)
      .def_readonly("r5_t2i", &RetrievalReport::r5_t2i)
      .def_readonly("r10_t2i", &RetrievalReport::r10_t2i)
      .def_readonly("rsum", &RetrievalReport::rsum)
      .def_readonly("cross_rank_histogram", &RetrievalReport::cross_rank_histogram)
      .def("csv", &RetrievalReport::csv)
      .def("table", &RetrievalReport::table, py::arg("label"));

  m.def("evaluate", &evaluate, py::arg("model"), py::arg("split"), py::arg("workers") = 1);
  m.def("evaluate_scores",
        [](const std::vector<double>& scores, std::size_t n_images, std::size_t n_texts,
           const std::vector<std::vector<std::uint32_t>>& captions_of,
           const std::vector<std::uint32_t>& image_of) {
          return evaluate_scores(scores, n_images, n_texts, captions_of, image_of);
        },
        py::arg("scores"), py::arg("n_images"), py::arg("n_texts"), py::arg("captions_of"),
        py::arg("image_of"));
  m.def("cross_retrieval_rank", &cross_retrieval_rank, py::arg("r_i"), py::arg("r_t"),
        py::arg("caption_count") = 5);

  py::class_<EpochMetrics>(m, "EpochMetrics")
      .def_readonly("epoch", &EpochMetrics::epoch)
      .def_readonly("split", &EpochMetrics::split)
      .def_readonly("report", &EpochMetrics::report)
      .def_readonly("mean_batch_loss", &EpochMetrics::mean_batch_loss)
      .def_readonly("neg_weight_events", &EpochMetrics::neg_weight_events)
      .def_readonly("secs_per_batch", &EpochMetrics::secs_per_batch);

  py::class_<ComparisonReport>(m, "ComparisonReport")
      .def_readonly("delta_r1_i2t", &ComparisonReport::delta_r1_i2t)
      .def_readonly("delta_r1_t2i", &ComparisonReport::delta_r1_t2i)
      .def_readonly("epochs_to_surpass_i2t", &ComparisonReport::epochs_to_surpass_i2t)
      .def_readonly("epochs_to_surpass_t2i", &ComparisonReport::epochs_to_surpass_t2i)
      .def_readonly("cross_hist_delta", &ComparisonReport::cross_hist_delta)
      .def("csv", &ComparisonReport::csv);
  m.def("compare_runs",
        [](const std::vector<EpochMetrics>& a, const std::vector<EpochMetrics>& b) {
          return compare_runs(a, b);
        },
        py::arg("log_a"), py::arg("log_b"));
  m.def("load_metric_log", &load_metric_log, py::arg("path"));
  m.def("save_metric_log", &save_metric_log, py::arg("log"), py::arg("path"));

  // ---- trainer --------------------------------------------------------------
  py::class_<RoundPlan>(m, "RoundPlan")
      .def(py::init<>())
      .def_readwrite("variant", &RoundPlan::variant)
      .def_readwrite("epochs_hi", &RoundPlan::epochs_hi)
      .def_readwrite("epochs_lo", &RoundPlan::epochs_lo)
      .def_readwrite("lr_hi", &RoundPlan::lr_hi)
      .def_readwrite("lr_lo", &RoundPlan::lr_lo)
      .def_readwrite("from_scratch", &RoundPlan::from_scratch)
      .def("epochs", &RoundPlan::epochs)
      .def("validate", &RoundPlan::validate);

  py::class_<TrainPlan>(m, "TrainPlan")
      .def(py::init<>())
      .def_readwrite("round1", &TrainPlan::round1)
      .def_readwrite("round2", &TrainPlan::round2)
      .def_readwrite("batch_size", &TrainPlan::batch_size)
      .def_readwrite("d_emb", &TrainPlan::d_emb)
      .def_readwrite("seed", &TrainPlan::seed)
      .def_readwrite("index_source", &TrainPlan::index_source)
      .def_readwrite("teacher_path", &TrainPlan::teacher_path)
      .def_readwrite("loss", &TrainPlan::loss)
      .def_readwrite("sampler", &TrainPlan::sampler)
      .def_readwrite("h_text", &TrainPlan::h_text)
      .def_readwrite("h_image", &TrainPlan::h_image)
      .def_readwrite("workers", &TrainPlan::workers)
      .def("validate", &TrainPlan::validate);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("log", &TrainResult::log);

  py::class_<TwoRoundResult>(m, "TwoRoundResult")
      .def_readonly("final_model", &TwoRoundResult::final_model)
      .def_readonly("round1_log", &TwoRoundResult::round1_log)
      .def_readonly("round2_log", &TwoRoundResult::round2_log)
      .def_readonly("index", &TwoRoundResult::index)
      .def_readonly("round1_checkpoint", &TwoRoundResult::round1_checkpoint)
      .def_readonly("final_checkpoint", &TwoRoundResult::final_checkpoint)
      .def_readonly("index_path", &TwoRoundResult::index_path);

  m.def("train_round",
        [](const TwoTowerModel& model_init, const Corpus& train_corpus,
           const Corpus& val_corpus, const RoundPlan& round, const TrainPlan& plan,
           const OfflineNegativeIndex* index, Rng& rng) {
          return train_round(model_init, train_corpus, val_corpus, round, plan, index, rng);
        },
        py::arg("model_init"), py::arg("train_corpus"), py::arg("val_corpus"),
        py::arg("round"), py::arg("plan"), py::arg("index").none(true), py::arg("rng"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_two_round", &run_two_round, py::arg("plan"), py::arg("train_corpus"),
        py::arg("val_corpus"), py::arg("out_dir"),
        py::call_guard<py::gil_scoped_release>());
  m.def("variant_needs_index", &variant_needs_index, py::arg("variant"));
  m.def("resolved_h_text", &resolved_h_text, py::arg("plan"), py::arg("corpus"));
  m.def("resolved_h_image", &resolved_h_image, py::arg("plan"), py::arg("corpus"));
}
