#include "agcd/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "agcd/textenc.hpp"

namespace agcd::evalkit {

double lat_rmse(const Tensor& pred, const Tensor& truth, const Tensor& weights) {
    if (!pred.same_shape(truth)) throw ShapeError("lat_rmse: field shapes differ");
    if (pred.rank() != 2 || weights.size() != pred.rows()) {
        throw ShapeError("lat_rmse: weights must have one entry per row");
    }
    const std::size_t h = pred.rows(), w = pred.cols();
    double acc_sum = 0.0;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double d = pred(i, j) - truth(i, j);
            acc_sum += weights.v[i] * d * d;
        }
    return std::sqrt(acc_sum / static_cast<double>(h * w));
}

double acc(const Tensor& pred, const Tensor& truth, const Tensor& climatology,
           const Tensor& weights) {
    if (!pred.same_shape(truth) || !pred.same_shape(climatology)) {
        throw ShapeError("acc: field shapes differ");
    }
    const std::size_t h = pred.rows(), w = pred.cols();
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double a = pred(i, j) - climatology(i, j);
            const double b = truth(i, j) - climatology(i, j);
            num += weights.v[i] * a * b;
            da += weights.v[i] * a * a;
            db += weights.v[i] * b * b;
        }
    return num / std::max(std::sqrt(da * db), 1e-12);
}

namespace {

std::string csv_double(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace

std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::string out = std::string(kMetricsCsvHeader) + "\n";
    for (const auto& r : rows) {
        out += std::to_string(r.lead_hours) + "," + r.variable + "," + csv_double(r.rmse) + "," +
               csv_double(r.acc) + "\n";
    }
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    f << metrics_csv(rows);
}

std::string labeled_csv(const std::vector<LabeledRow>& rows) {
    std::string out = "config,";
    out += kMetricsCsvHeader;
    out += "\n";
    for (const auto& r : rows) {
        out += r.config + "," + std::to_string(r.row.lead_hours) + "," + r.row.variable + "," +
               csv_double(r.row.rmse) + "," + csv_double(r.row.acc) + "\n";
    }
    return out;
}

void write_labeled_csv(const std::string& path, const std::vector<LabeledRow>& rows) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    f << labeled_csv(rows);
}

Variant parse_variant(const std::string& s) {
    if (s == "baseline") return Variant::Baseline;
    if (s == "agcd") return Variant::Agcd;
    throw ConfigError("unknown variant '" + s + "' (expected baseline|agcd)");
}

TextMode parse_text_mode(const std::string& s) {
    if (s == "matched") return TextMode::Matched;
    if (s == "shuffled") return TextMode::Shuffled;
    if (s == "empty") return TextMode::Empty;
    throw ConfigError("unknown text mode '" + s + "' (expected matched|shuffled|empty)");
}

namespace {

std::vector<heatmap::FieldDigest> state_digests(const fieldgrid::AtmosphericState& state,
                                                const fieldgrid::GridSpec& spec) {
    std::vector<heatmap::FieldDigest> out;
    for (const auto& var : spec.variables) {
        out.push_back(heatmap::field_digest(state.fields.at(var), var));
    }
    return out;
}

std::vector<heatmap::FieldDigest> subset_digests(const fieldgrid::AtmosphericState& state,
                                                 const std::vector<std::string>& vars) {
    std::vector<heatmap::FieldDigest> out;
    for (const auto& var : vars) out.push_back(heatmap::field_digest(state.fields.at(var), var));
    return out;
}

}  // namespace

ExperimentData prepare_experiment(std::uint64_t data_seed, int train_samples, int test_samples,
                                  int horizon, const fieldgrid::GridSpec& spec) {
    ExperimentData data;
    data.spec = spec;
    fieldgrid::Dataset all =
        fieldgrid::gen_synthetic(data_seed, train_samples + test_samples, spec, horizon);
    data.train.spec = spec;
    data.test.spec = spec;
    for (int i = 0; i < train_samples; ++i) data.train.sequences.push_back(all.sequences[i]);
    for (int i = 0; i < test_samples; ++i) {
        data.test.sequences.push_back(all.sequences[train_samples + i]);
    }
    data.stats = fieldgrid::compute_norm_stats(data.train);
    data.clim = fieldgrid::compute_climatology(data.train);
    data.narrative_text = build_narratives(data.train, spec.variables, false, true);
    auto test_narr = build_narratives(data.test, spec.variables, false, true);
    data.narrative_text.insert(test_narr.begin(), test_narr.end());
    return data;
}

std::map<std::string, std::string> build_narratives(const fieldgrid::Dataset& dataset,
                                                    const std::vector<std::string>& describers,
                                                    bool single_agent, bool use_evaluator) {
    mmnp::MockBackend backend;
    std::map<std::string, std::string> out;
    for (const auto& seq : dataset.sequences) {
        if (seq.states.empty()) continue;
        if (describers.empty()) {
            out[seq.sample_id] = "";
            continue;
        }
        std::vector<std::string> vars = describers;
        if (single_agent) vars.resize(1);
        auto digests = subset_digests(seq.states[0], vars);
        auto result = mmnp::run_pipeline(backend, seq.sample_id, 0, digests,
                                         use_evaluator ? 2 : 0);
        out[seq.sample_id] = result.narrative.text();
    }
    return out;
}

std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw ContractError("derangement needs at least two elements");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    SplitMix64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = rng.next_below(i + 1);
        std::swap(perm[i], perm[j]);
    }
    // conjugating a single n-cycle by a random permutation keeps it fixed-
    // point free
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[perm[i]] = perm[(i + 1) % n];
    return out;
}

std::vector<TrainSample> build_samples(const ExperimentData& data, bool test_split, TextMode mode,
                                       std::uint64_t shuffle_seed,
                                       const std::map<std::string, std::string>* narrative_override) {
    const fieldgrid::Dataset& split = test_split ? data.test : data.train;
    const auto& narr = narrative_override ? *narrative_override : data.narrative_text;
    const std::size_t patch = 4;
    std::vector<std::size_t> text_of(split.sequences.size());
    for (std::size_t i = 0; i < text_of.size(); ++i) text_of[i] = i;
    if (mode == TextMode::Shuffled) text_of = derangement(split.sequences.size(), shuffle_seed);
    std::vector<TrainSample> out;
    for (std::size_t i = 0; i < split.sequences.size(); ++i) {
        const auto& seq = split.sequences[i];
        std::string text;
        if (mode == TextMode::Matched) {
            auto it = narr.find(seq.sample_id);
            if (it == narr.end()) {
                throw DataError("no cached narrative for sample " + seq.sample_id);
            }
            text = it->second;
        } else if (mode == TextMode::Shuffled) {
            const auto& donor = split.sequences[text_of[i]].sample_id;
            auto it = narr.find(donor);
            if (it == narr.end()) throw DataError("no cached narrative for sample " + donor);
            text = it->second;
        }
        Tensor emb = textenc::embed_text(text);  // "" -> the null token
        for (std::size_t k = 0; k + 1 < seq.states.size(); ++k) {
            TrainSample s;
            s.sample_id = seq.sample_id;
            s.in_patches = backbone::patchify(fieldgrid::normalize_state(seq.states[k], data.stats),
                                              data.spec, patch);
            s.target_patches = backbone::patchify(
                fieldgrid::normalize_state(seq.states[k + 1], data.stats), data.spec, patch);
            s.text_emb = emb;
            out.push_back(std::move(s));
        }
    }
    return out;
}

Tensor patch_weights(const fieldgrid::GridSpec& spec, std::size_t patch) {
    Tensor w = fieldgrid::latitude_weights(spec);
    const std::size_t gp = spec.H / patch, gq = spec.W / patch;
    const std::size_t n = gp * gq, f = patch * patch * spec.variables.size();
    Tensor out = Tensor::zeros({n, f});
    for (std::size_t pr = 0; pr < gp; ++pr)
        for (std::size_t pc = 0; pc < gq; ++pc)
            for (std::size_t vi = 0; vi < spec.variables.size(); ++vi)
                for (std::size_t r = 0; r < patch; ++r)
                    for (std::size_t c = 0; c < patch; ++c) {
                        out(pr * gq + pc, vi * patch * patch + r * patch + c) =
                            w.v[pr * patch + r];
                    }
    return out;
}

void init_model(num::ParamStore& params, const ModelConfig& cfg, std::uint64_t seed) {
    SplitMix64 rng(seed);
    backbone::init_params(params, cfg.bb, rng.next_u64());
    if (cfg.variant == Variant::Baseline) {
        backbone::init_baseline_head(params, cfg.bb, rng.next_u64());
    } else {
        crid::init_crid_params(params, cfg.crid, rng.next_u64());
    }
}

Tensor predict_patches(const num::ParamStore& params, const ModelConfig& cfg,
                       const Tensor& in_patches, const Tensor& text_emb) {
    auto [p, c] = backbone::encode(params, cfg.bb, in_patches, nullptr);
    if (cfg.variant == Variant::Baseline) return backbone::baseline_head(params, p);
    return crid::crid_forward(params, cfg.crid, p, c, text_emb, nullptr);
}

TrainResult train(const ModelConfig& cfg, const std::vector<TrainSample>& samples,
                  const TrainConfig& tc) {
    if (samples.empty()) throw DataError("training requires at least one sample");
    TrainResult result;
    SplitMix64 rng(tc.seed);
    init_model(result.params, cfg, rng.next_u64());
    num::AdamState adam;
    num::AdamConfig acfg;
    acfg.lr = tc.lr;
    // per-element latitude weights laid out like the patch tensors
    std::vector<std::string> vars(cfg.bb.n_vars);
    for (std::size_t i = 0; i < vars.size(); ++i) vars[i] = "v" + std::to_string(i);
    const Tensor w =
        patch_weights(fieldgrid::GridSpec::regular(cfg.bb.H, cfg.bb.W, vars), cfg.bb.patch);
    const double denom = static_cast<double>(w.size());
    std::ofstream loss_file;
    if (!tc.loss_csv.empty()) {
        loss_file.open(tc.loss_csv, std::ios::binary);
        if (!loss_file) throw IoError("cannot open " + tc.loss_csv);
        loss_file << "step,loss\n";
    }
    for (std::size_t step = 0; step < tc.steps; ++step) {
        result.params.zero_grads();
        double loss = 0.0;
        for (std::size_t b = 0; b < tc.batch; ++b) {
            const TrainSample& s = samples[rng.next_below(samples.size())];
            backbone::EncodeCache enc_cache;
            auto [p, c] = backbone::encode(result.params, cfg.bb, s.in_patches, &enc_cache);
            Tensor pred;
            crid::CridCache crid_cache;
            if (cfg.variant == Variant::Baseline) {
                pred = backbone::baseline_head(result.params, p);
            } else {
                pred = crid::crid_forward(result.params, cfg.crid, p, c, s.text_emb, &crid_cache);
            }
            Tensor d_pred = Tensor::zeros(pred.shape);
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const double diff = pred.v[i] - s.target_patches.v[i];
                loss += w.v[i] * diff * diff / (denom * static_cast<double>(tc.batch));
                d_pred.v[i] = 2.0 * w.v[i] * diff / (denom * static_cast<double>(tc.batch));
            }
            Tensor d_p = Tensor::zeros(p.shape);
            Tensor d_c = Tensor::zeros(c.shape);
            if (cfg.variant == Variant::Baseline) {
                backbone::baseline_head_backward(result.params, p, d_pred, d_p);
            } else {
                Tensor d_t = Tensor::zeros(s.text_emb.shape);
                crid::crid_backward(result.params, cfg.crid, crid_cache, d_pred, d_p, d_c, d_t);
            }
            backbone::encode_backward(result.params, cfg.bb, enc_cache, d_p, d_c);
        }
        num::adam_step(result.params, adam, acfg);
        result.losses.push_back(loss);
        if (loss_file) loss_file << step << "," << csv_double(loss) << "\n";
    }
    return result;
}

std::vector<MetricRow> evaluate(const num::ParamStore& params, const ModelConfig& cfg,
                                const ExperimentData& data,
                                const std::vector<TrainSample>& test_samples, int lead_hours) {
    const Tensor w = fieldgrid::latitude_weights(data.spec);
    std::map<std::string, std::pair<double, double>> sums;  // var -> (rmse, acc)
    std::size_t count = 0;
    std::map<std::string, const fieldgrid::Sequence*> by_id;
    for (const auto& seq : data.test.sequences) by_id[seq.sample_id] = &seq;
    std::size_t pair_index = 0;
    std::string last_id;
    for (const auto& s : test_samples) {
        pair_index = (s.sample_id == last_id) ? pair_index + 1 : 0;
        last_id = s.sample_id;
        const fieldgrid::Sequence* seq = by_id.at(s.sample_id);
        const auto& truth = seq->states[pair_index + 1];
        Tensor pred = predict_patches(params, cfg, s.in_patches, s.text_emb);
        auto pred_state = backbone::unpatchify_state(pred, data.spec, cfg.bb.patch, s.sample_id,
                                                     truth.time_index);
        pred_state = fieldgrid::denormalize_state(pred_state, data.stats);
        for (const auto& var : data.spec.variables) {
            sums[var].first += lat_rmse(pred_state.fields.at(var), truth.fields.at(var), w);
            sums[var].second += acc(pred_state.fields.at(var), truth.fields.at(var),
                                    data.clim.means.at(var), w);
        }
        ++count;
    }
    std::vector<MetricRow> rows;
    for (const auto& var : data.spec.variables) {
        MetricRow r;
        r.lead_hours = lead_hours;
        r.variable = var;
        r.rmse = sums[var].first / static_cast<double>(count);
        r.acc = sums[var].second / static_cast<double>(count);
        rows.push_back(r);
    }
    return rows;
}

RolloutTrace rollout(const num::ParamStore& params, const ModelConfig& cfg,
                     mmnp::NarratorBackend& backend, const ExperimentData& data,
                     const fieldgrid::AtmosphericState& initial, int k_steps,
                     const RolloutOptions& options) {
    if (k_steps < 0) throw ContractError("rollout length must be non-negative");
    RolloutTrace trace;
    trace.initial = initial;
    mmnp::Narrative s0 = mmnp::edit_step(backend, mmnp::Narrative{},
                                         state_digests(initial, data.spec));
    trace.narratives.push_back(std::move(s0));
    fieldgrid::AtmosphericState current = initial;  // physical units
    for (int k = 1; k <= k_steps; ++k) {
        std::vector<std::string> inputs;
        const fieldgrid::AtmosphericState* source = &current;
        if (k == options.leak_step && options.truth) {
            source = &options.truth->states.at(static_cast<std::size_t>(k));
            inputs.push_back("truth:" + std::to_string(k));
        } else {
            inputs.push_back(k == 1 ? "init" : "pred:" + std::to_string(k - 1));
        }
        Tensor in_patches = backbone::patchify(fieldgrid::normalize_state(*source, data.stats),
                                               data.spec, cfg.bb.patch);
        Tensor text_emb = textenc::embed_text(std::string());
        if (cfg.variant == Variant::Agcd) {
            text_emb = textenc::embed_text(trace.narratives.back().text());
            inputs.push_back("narr:" + std::to_string(k - 1));
        }
        Tensor pred = predict_patches(params, cfg, in_patches, text_emb);
        auto pred_state = backbone::unpatchify_state(pred, data.spec, cfg.bb.patch,
                                                     initial.sample_id,
                                                     initial.time_index + k);
        pred_state = fieldgrid::denormalize_state(pred_state, data.stats);
        trace.pred_inputs.push_back(std::move(inputs));
        trace.predictions.push_back(pred_state);
        // refresh the narrative from this step's prediction for the next step
        mmnp::Narrative next = mmnp::edit_step(backend, trace.narratives.back(),
                                               state_digests(pred_state, data.spec));
        trace.narratives.push_back(std::move(next));
        trace.narr_inputs.push_back({"pred:" + std::to_string(k),
                                     "narr:" + std::to_string(k - 1)});
        current = pred_state;
    }
    return trace;
}

namespace {

// Allowed inputs when predicting step k: the initial state, predictions
// before k, narratives before k. When producing narrative k: predictions up
// to k and narratives before k.
bool input_ok(const std::string& id, int k, bool narrative_stage) {
    if (id == "init") return true;
    auto colon = id.find(':');
    if (colon == std::string::npos) return false;
    const std::string kind = id.substr(0, colon);
    int idx = 0;
    try {
        idx = std::stoi(id.substr(colon + 1));
    } catch (...) {
        return false;
    }
    if (kind == "pred") return narrative_stage ? idx <= k : idx < k;
    if (kind == "narr") return idx < k;
    return false;
}

}  // namespace

bool audit_causality(const RolloutTrace& trace, std::string* detail) {
    for (std::size_t i = 0; i < trace.pred_inputs.size(); ++i) {
        const int k = static_cast<int>(i) + 1;
        for (const auto& id : trace.pred_inputs[i]) {
            if (!input_ok(id, k, false)) {
                if (detail) {
                    *detail = "prediction step " + std::to_string(k) + " consumed '" + id + "'";
                }
                return false;
            }
        }
    }
    for (std::size_t i = 0; i < trace.narr_inputs.size(); ++i) {
        const int k = static_cast<int>(i) + 1;
        for (const auto& id : trace.narr_inputs[i]) {
            if (!input_ok(id, k, true)) {
                if (detail) {
                    *detail = "narrative step " + std::to_string(k) + " consumed '" + id + "'";
                }
                return false;
            }
        }
    }
    if (detail) detail->clear();
    return true;
}

std::vector<double> rollout_curve(const num::ParamStore& params, const ModelConfig& cfg,
                                  mmnp::NarratorBackend& backend, const ExperimentData& data,
                                  int k_steps) {
    const Tensor w = fieldgrid::latitude_weights(data.spec);
    std::vector<double> curve(static_cast<std::size_t>(k_steps), 0.0);
    std::size_t n_seq = 0;
    for (const auto& seq : data.test.sequences) {
        if (seq.states.size() < static_cast<std::size_t>(k_steps) + 1) continue;
        RolloutTrace trace = rollout(params, cfg, backend, data, seq.states[0], k_steps);
        for (int k = 1; k <= k_steps; ++k) {
            double mean_rmse = 0.0;
            for (const auto& var : data.spec.variables) {
                mean_rmse += lat_rmse(trace.predictions[k - 1].fields.at(var),
                                      seq.states[static_cast<std::size_t>(k)].fields.at(var), w);
            }
            curve[static_cast<std::size_t>(k - 1)] +=
                mean_rmse / static_cast<double>(data.spec.variables.size());
        }
        ++n_seq;
    }
    if (n_seq == 0) throw DataError("no test sequence long enough for the rollout");
    for (double& x : curve) x /= static_cast<double>(n_seq);
    return curve;
}

double median(std::vector<double> xs) {
    if (xs.empty()) throw ContractError("median of an empty set");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

namespace {

ModelConfig model_for(const fieldgrid::GridSpec& spec, Variant variant) {
    ModelConfig cfg;
    cfg.bb.H = spec.H;
    cfg.bb.W = spec.W;
    cfg.bb.n_vars = spec.variables.size();
    cfg.crid.patch_dim = cfg.bb.patch_dim();
    cfg.variant = variant;
    return cfg;
}

// Train with each seed, evaluate, and emit the per-variable median metrics.
std::vector<LabeledRow> seed_median_rows(const std::string& label, const ModelConfig& cfg,
                                         const ExperimentData& data, TextMode mode,
                                         const std::vector<std::uint64_t>& seeds,
                                         const TrainConfig& tc,
                                         const std::map<std::string, std::string>* narr = nullptr) {
    std::map<std::string, std::vector<double>> rmse_by_var, acc_by_var;
    for (std::uint64_t seed : seeds) {
        TrainConfig stc = tc;
        stc.seed = seed;
        stc.loss_csv.clear();
        auto train_samples = build_samples(data, false, mode, seed ^ 0x5eedu, narr);
        auto test_samples = build_samples(data, true, mode, seed ^ 0x7e57u, narr);
        TrainResult tr = train(cfg, train_samples, stc);
        for (const auto& row : evaluate(tr.params, cfg, data, test_samples)) {
            rmse_by_var[row.variable].push_back(row.rmse);
            acc_by_var[row.variable].push_back(row.acc);
        }
    }
    std::vector<LabeledRow> rows;
    for (const auto& var : data.spec.variables) {
        LabeledRow r;
        r.config = label;
        r.row.lead_hours = 6;
        r.row.variable = var;
        r.row.rmse = median(rmse_by_var.at(var));
        r.row.acc = median(acc_by_var.at(var));
        rows.push_back(r);
    }
    return rows;
}

void append(std::vector<LabeledRow>& dst, std::vector<LabeledRow> src) {
    for (auto& r : src) dst.push_back(std::move(r));
}

}  // namespace

std::vector<LabeledRow> run_control(const ExperimentData& data,
                                    const std::vector<std::uint64_t>& seeds,
                                    const TrainConfig& tc) {
    std::vector<LabeledRow> rows;
    append(rows, seed_median_rows("vision_only", model_for(data.spec, Variant::Baseline), data,
                                  TextMode::Empty, seeds, tc));
    // One matched-text model per seed; only the test-time text assignment
    // changes between the three text settings.
    const ModelConfig agcd = model_for(data.spec, Variant::Agcd);
    std::map<std::string, std::map<std::string, std::vector<double>>> rmse_by, acc_by;
    for (std::uint64_t seed : seeds) {
        TrainConfig stc = tc;
        stc.seed = seed;
        stc.loss_csv.clear();
        auto train_samples = build_samples(data, false, TextMode::Matched, seed ^ 0x5eedu);
        TrainResult tr = train(agcd, train_samples, stc);
        for (const auto& [label, mode] :
             std::initializer_list<std::pair<const char*, TextMode>>{
                 {"matched", TextMode::Matched},
                 {"shuffled", TextMode::Shuffled},
                 {"empty", TextMode::Empty}}) {
            auto test_samples = build_samples(data, true, mode, seed ^ 0x7e57u);
            for (const auto& row : evaluate(tr.params, agcd, data, test_samples)) {
                rmse_by[label][row.variable].push_back(row.rmse);
                acc_by[label][row.variable].push_back(row.acc);
            }
        }
    }
    for (const char* label : {"matched", "shuffled", "empty"}) {
        for (const auto& var : data.spec.variables) {
            LabeledRow r;
            r.config = label;
            r.row.lead_hours = 6;
            r.row.variable = var;
            r.row.rmse = median(rmse_by.at(label).at(var));
            r.row.acc = median(acc_by.at(label).at(var));
            rows.push_back(r);
        }
    }
    return rows;
}

std::vector<LabeledRow> run_ablation(const std::string& suite, const ExperimentData& data,
                                     const std::vector<std::uint64_t>& seeds,
                                     const TrainConfig& tc) {
    std::vector<LabeledRow> rows;
    if (suite == "crid") {
        const ModelConfig full = model_for(data.spec, Variant::Agcd);
        ModelConfig no_region = full, no_hopfield = full, no_cmg = full;
        no_region.crid.use_region = false;
        no_hopfield.crid.use_hopfield = false;
        no_cmg.crid.use_cmg = false;
        append(rows, seed_median_rows("no_region", no_region, data, TextMode::Matched, seeds, tc));
        append(rows,
               seed_median_rows("no_hopfield", no_hopfield, data, TextMode::Matched, seeds, tc));
        append(rows, seed_median_rows("no_cmg", no_cmg, data, TextMode::Matched, seeds, tc));
        append(rows, seed_median_rows("full", full, data, TextMode::Matched, seeds, tc));
        return rows;
    }
    if (suite == "mmnp") {
        const ModelConfig agcd = model_for(data.spec, Variant::Agcd);
        auto single = build_narratives(data.train, data.spec.variables, true, true);
        auto single_test = build_narratives(data.test, data.spec.variables, true, true);
        single.insert(single_test.begin(), single_test.end());
        auto no_eval = build_narratives(data.train, data.spec.variables, false, false);
        auto no_eval_test = build_narratives(data.test, data.spec.variables, false, false);
        no_eval.insert(no_eval_test.begin(), no_eval_test.end());
        append(rows, seed_median_rows("single_agent", agcd, data, TextMode::Matched, seeds, tc,
                                      &single));
        append(rows, seed_median_rows("no_evaluator", agcd, data, TextMode::Matched, seeds, tc,
                                      &no_eval));
        append(rows, seed_median_rows("full", agcd, data, TextMode::Matched, seeds, tc));
        return rows;
    }
    if (suite == "agents") {
        const ModelConfig agcd = model_for(data.spec, Variant::Agcd);
        // incremental describer order: t -> u -> v -> z
        const std::vector<std::string> order = {"t", "u", "v", "z"};
        append(rows, seed_median_rows("none", agcd, data, TextMode::Empty, seeds, tc));
        for (std::size_t n = 1; n <= order.size(); ++n) {
            std::vector<std::string> enabled(order.begin(), order.begin() + n);
            auto narr = build_narratives(data.train, enabled, false, true);
            auto narr_test = build_narratives(data.test, enabled, false, true);
            narr.insert(narr_test.begin(), narr_test.end());
            std::string label = "+" + enabled.back();
            append(rows,
                   seed_median_rows(label, agcd, data, TextMode::Matched, seeds, tc, &narr));
        }
        return rows;
    }
    throw ConfigError("unknown ablation suite '" + suite + "' (expected crid|mmnp|agents)");
}

}  // namespace agcd::evalkit
