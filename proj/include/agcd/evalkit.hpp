#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agcd/backbone.hpp"
#include "agcd/crid.hpp"
#include "agcd/fieldgrid.hpp"
#include "agcd/mmnp.hpp"
#include "agcd/numcore.hpp"

namespace agcd::evalkit {

using agcd::Tensor;

// sqrt( (1/(H*W)) sum w[i] * (pred - truth)^2 ); weights indexed by row.
double lat_rmse(const Tensor& pred, const Tensor& truth, const Tensor& weights);
// Weighted anomaly correlation vs climatology; denominator floored at 1e-12.
double acc(const Tensor& pred, const Tensor& truth, const Tensor& climatology,
           const Tensor& weights);

struct MetricRow {
    int lead_hours = 6;
    std::string variable;
    double rmse = 0.0;
    double acc = 0.0;
};

inline constexpr const char* kMetricsCsvHeader = "lead_hours,variable,rmse,acc";
std::string metrics_csv(const std::vector<MetricRow>& rows);
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

// Rows from experiment suites carry a leading configuration label column.
struct LabeledRow {
    std::string config;
    MetricRow row;
};
std::string labeled_csv(const std::vector<LabeledRow>& rows);
void write_labeled_csv(const std::string& path, const std::vector<LabeledRow>& rows);

enum class Variant { Baseline, Agcd };
enum class TextMode { Matched, Shuffled, Empty };

Variant parse_variant(const std::string& s);
TextMode parse_text_mode(const std::string& s);

struct ModelConfig {
    backbone::BackboneConfig bb;
    crid::CridConfig crid;
    Variant variant = Variant::Agcd;
};

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch = 4;
    double lr = 3e-3;
    std::uint64_t seed = 1;
    std::string loss_csv;  // written when nonempty
};

struct TrainSample {
    std::string sample_id;
    Tensor in_patches;      // normalized
    Tensor target_patches;  // normalized
    Tensor text_emb;        // N_t x d_t; empty for the baseline variant
};

// Shared experiment inputs: synthetic splits, normalization from the training
// split only, climatology, and the matched narrative per (sample, step 0).
struct ExperimentData {
    fieldgrid::GridSpec spec;
    fieldgrid::Dataset train;
    fieldgrid::Dataset test;
    fieldgrid::NormStats stats;
    fieldgrid::ClimatologyTable clim;
    std::map<std::string, std::string> narrative_text;
};

ExperimentData prepare_experiment(std::uint64_t data_seed, int train_samples, int test_samples,
                                  int horizon, const fieldgrid::GridSpec& spec);

// Narratives from state-0 digests, restricted to the given describers (in the
// given order). single_agent keeps only the first enabled describer;
// use_evaluator toggles the refinement loop.
std::map<std::string, std::string> build_narratives(const fieldgrid::Dataset& dataset,
                                                    const std::vector<std::string>& describers,
                                                    bool single_agent, bool use_evaluator);

// Seeded permutation with no fixed points (single cycle).
std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed);

// (state_k -> state_{k+1}) pairs with the text assignment for the mode.
// narrative_override replaces data.narrative_text when non-null.
std::vector<TrainSample> build_samples(const ExperimentData& data, bool test_split,
                                       TextMode mode, std::uint64_t shuffle_seed,
                                       const std::map<std::string, std::string>* narrative_override
                                       = nullptr);

// Per-patch-element latitude weights (N x F), mean 1.
Tensor patch_weights(const fieldgrid::GridSpec& spec, std::size_t patch);

void init_model(num::ParamStore& params, const ModelConfig& cfg, std::uint64_t seed);

// One forward pass to normalized patch-space predictions.
Tensor predict_patches(const num::ParamStore& params, const ModelConfig& cfg,
                       const Tensor& in_patches, const Tensor& text_emb);

struct TrainResult {
    num::ParamStore params;
    std::vector<double> losses;  // one entry per step
};

// Latitude-weighted MSE, adam updates, deterministic in the seed. The text
// encoder owns no parameters here, so it is frozen by construction.
TrainResult train(const ModelConfig& cfg, const std::vector<TrainSample>& samples,
                  const TrainConfig& tc);

// Mean per-variable metrics over the test pairs, in physical units.
std::vector<MetricRow> evaluate(const num::ParamStore& params, const ModelConfig& cfg,
                                const ExperimentData& data,
                                const std::vector<TrainSample>& test_samples,
                                int lead_hours = 6);

// Ordered record of an autoregressive run. predictions[k-1] is step k;
// narratives[k] is the post-step-k narrative S^(k). Input identity strings:
// "init", "pred:<k>", "narr:<k>".
struct RolloutTrace {
    fieldgrid::AtmosphericState initial;
    std::vector<fieldgrid::AtmosphericState> predictions;
    std::vector<mmnp::Narrative> narratives;
    std::vector<std::vector<std::string>> pred_inputs;  // per prediction step
    std::vector<std::vector<std::string>> narr_inputs;  // per narrative 1..K
};

struct RolloutOptions {
    // Fault injection: at this step (1-based) feed the true future state
    // instead of the model's own prediction, recording the leak.
    int leak_step = -1;
    const fieldgrid::Sequence* truth = nullptr;
};

RolloutTrace rollout(const num::ParamStore& params, const ModelConfig& cfg,
                     mmnp::NarratorBackend& backend, const ExperimentData& data,
                     const fieldgrid::AtmosphericState& initial, int k_steps,
                     const RolloutOptions& options = {});

// True iff every consumed input is the initial state, an earlier prediction,
// or an earlier narrative. On failure `detail` names the offending step.
bool audit_causality(const RolloutTrace& trace, std::string* detail = nullptr);

// Mean-over-variables latitude-weighted RMSE at each lead step, averaged over
// the test sequences.
std::vector<double> rollout_curve(const num::ParamStore& params, const ModelConfig& cfg,
                                  mmnp::NarratorBackend& backend, const ExperimentData& data,
                                  int k_steps);

// Matched / shuffled / empty text settings plus the vision-only baseline,
// identical data and training budget; median metrics over the seeds.
std::vector<LabeledRow> run_control(const ExperimentData& data,
                                    const std::vector<std::uint64_t>& seeds,
                                    const TrainConfig& tc);

// suite: "crid" (full / no_region / no_hopfield / no_cmg), "mmnp"
// (single_agent / no_evaluator / full), "agents" (incremental describers
// t -> u -> v -> z).
std::vector<LabeledRow> run_ablation(const std::string& suite, const ExperimentData& data,
                                     const std::vector<std::uint64_t>& seeds,
                                     const TrainConfig& tc);

double median(std::vector<double> xs);

}  // namespace agcd::evalkit
