#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "agcd/evalkit.hpp"

namespace fs = std::filesystem;
namespace fg = agcd::fieldgrid;
namespace hm = agcd::heatmap;
namespace mm = agcd::mmnp;
namespace ek = agcd::evalkit;
using nlohmann::json;

namespace {

json default_config() {
    return json{
        {"data",
         {{"seed", 1},
          {"train_samples", 64},
          {"test_samples", 16},
          {"horizon", 1}}},
        {"mmnp",
         {{"rounds", 2}, {"backend", "mock"}, {"host", "127.0.0.1"}, {"port", 8080}}},
        {"model", {{"variant", "agcd"}}},
        {"crid",
         {{"use_cmg", true},
          {"use_region", true},
          {"use_hopfield", true},
          {"memory", 8},
          {"scales", json::array({2, 4})}}},
        {"train",
         {{"steps", 2000}, {"batch", 4}, {"lr", 3e-3}, {"seed", 1}, {"text", "matched"}}},
        {"eval", {{"lead_hours", 6}}}};
}

// Merge user config over defaults; any key absent from the defaults is an
// error so that typos never silently fall back.
json merge_config(const json& defaults, const json& user, const std::string& where) {
    json out = defaults;
    for (auto it = user.begin(); it != user.end(); ++it) {
        if (!defaults.contains(it.key())) {
            throw agcd::ConfigError("unknown config key: " + where + it.key());
        }
        if (it.value().is_object()) {
            out[it.key()] = merge_config(defaults.at(it.key()), it.value(),
                                         where + it.key() + ".");
        } else {
            out[it.key()] = it.value();
        }
    }
    return out;
}

json load_config(const std::string& path) {
    if (path.empty()) return default_config();
    std::ifstream in(path);
    if (!in) throw agcd::IoError("cannot open config: " + path);
    json user = json::parse(in);
    return merge_config(default_config(), user, "");
}

void write_resolved_config(const json& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.resolved.json");
    if (!out) throw agcd::IoError("cannot write resolved config");
    out << cfg.dump(2) << "\n";
}

ek::ModelConfig model_config(const json& cfg, ek::Variant variant) {
    ek::ModelConfig mc;
    mc.variant = variant;
    const json& cr = cfg.at("crid");
    mc.crid.use_cmg = cr.at("use_cmg").get<bool>();
    mc.crid.use_region = cr.at("use_region").get<bool>();
    mc.crid.use_hopfield = cr.at("use_hopfield").get<bool>();
    mc.crid.cmi.memory = cr.at("memory").get<std::size_t>();
    mc.crid.cmi.scales = cr.at("scales").get<std::vector<std::size_t>>();
    return mc;
}

ek::ExperimentData experiment_data(const json& cfg) {
    const json& d = cfg.at("data");
    return ek::prepare_experiment(d.at("seed").get<std::uint64_t>(),
                                  d.at("train_samples").get<int>(),
                                  d.at("test_samples").get<int>(), d.at("horizon").get<int>(),
                                  fg::GridSpec::default_spec());
}

std::vector<hm::FieldDigest> state_digests(const fg::AtmosphericState& state,
                                           const fg::GridSpec& spec) {
    std::vector<hm::FieldDigest> out;
    for (const auto& var : spec.variables) {
        out.push_back(hm::field_digest(state.fields.at(var), var));
    }
    return out;
}

// Narratives for train/eval, optionally read from a narration cache file.
std::map<std::string, std::string> cached_narratives(const ek::ExperimentData& data,
                                                     const std::string& cache_path) {
    std::map<std::string, std::string> out;
    for (const auto* ds : {&data.train, &data.test}) {
        for (const auto& seq : ds->sequences) {
            auto rec = mm::cache_get(cache_path, seq.sample_id, 0);
            if (!rec) {
                throw agcd::DataError("matched text requested but the narration cache has no "
                                      "entry for sample " + seq.sample_id);
            }
            out[seq.sample_id] = rec->narrative;
        }
    }
    return out;
}

int cmd_gen_data(std::uint64_t seed, int samples, int horizon, const std::string& out_dir) {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::Dataset ds = fg::gen_synthetic(seed, samples, spec, horizon);
    fs::create_directories(out_dir);
    fg::write_grid_file((fs::path(out_dir) / "data.grid").string(), ds);
    fg::write_annotations((fs::path(out_dir) / "annotations.json").string(), ds);
    json resolved = default_config();
    resolved["data"]["seed"] = seed;
    resolved["data"]["train_samples"] = samples;
    resolved["data"]["horizon"] = horizon;
    write_resolved_config(resolved, out_dir);
    std::cout << "wrote " << ds.sequences.size() << " sequences to " << out_dir << "\n";
    return 0;
}

int cmd_narrate(const std::string& data_path, const std::string& backend_name,
                const std::string& host, int port, const std::string& cache_path, int rounds,
                const std::string& inject) {
    fg::Dataset ds = fg::read_grid_file(data_path);
    mm::MockBackend mock;
    std::unique_ptr<mm::HttpBackend> http;
    mm::NarratorBackend* backend = &mock;
    if (backend_name == "http") {
        http = std::make_unique<mm::HttpBackend>(host, port);
        backend = http.get();
    } else if (backend_name != "mock") {
        throw agcd::ConfigError("unknown backend: " + backend_name);
    }
    int hits = 0, fresh = 0, passed = 0, fallbacks = 0;
    for (const auto& seq : ds.sequences) {
        if (mm::cache_get(cache_path, seq.sample_id, 0)) {
            ++hits;
            continue;
        }
        mm::PipelineOptions opts;
        if (!inject.empty()) {
            opts.tamper = [&](mm::Narrative& s) {
                // plant the defect against the first variable's description
                auto digests = state_digests(seq.states[0], ds.spec);
                std::vector<mm::VariableDescription> descs;
                for (std::size_t i = 0; i < digests.size(); ++i) {
                    descs.push_back(mm::describe_variable(mock, digests[i], static_cast<int>(i)));
                }
                mm::FeedbackType type;
                if (inject == "missing") type = mm::FeedbackType::Missing;
                else if (inject == "distorted") type = mm::FeedbackType::Distorted;
                else if (inject == "contradictory") type = mm::FeedbackType::Contradictory;
                else if (inject == "overstated-causality")
                    type = mm::FeedbackType::OverstatedCausality;
                else throw agcd::ConfigError("unknown defect type: " + inject);
                mm::inject_defect(s, type, descs, 0);
            };
        }
        auto res = mm::run_pipeline(*backend, seq.sample_id, 0,
                                    state_digests(seq.states[0], ds.spec), rounds, opts);
        mm::cache_put(cache_path, res.record);
        ++fresh;
        if (res.verdict.pass) ++passed;
        if (res.fell_back) ++fallbacks;
    }
    std::cout << "narrated=" << fresh << " cache_hits=" << hits << " pass=" << passed
              << " fallback=" << fallbacks << "\n";
    return 0;
}

int cmd_train(const json& cfg, const std::string& text, const std::string& variant,
              const std::string& cache_path, const std::string& out_dir) {
    ek::ExperimentData data = experiment_data(cfg);
    std::map<std::string, std::string> override_text;
    const std::map<std::string, std::string>* override_ptr = nullptr;
    if (!cache_path.empty()) {
        override_text = cached_narratives(data, cache_path);
        override_ptr = &override_text;
    }
    ek::ModelConfig mc = model_config(cfg, ek::parse_variant(variant));
    ek::TrainConfig tc;
    const json& t = cfg.at("train");
    tc.steps = t.at("steps").get<std::size_t>();
    tc.batch = t.at("batch").get<std::size_t>();
    tc.lr = t.at("lr").get<double>();
    tc.seed = t.at("seed").get<std::uint64_t>();
    fs::create_directories(out_dir);
    tc.loss_csv = (fs::path(out_dir) / "loss.csv").string();
    auto samples = ek::build_samples(data, false, ek::parse_text_mode(text), tc.seed,
                                     override_ptr);
    ek::TrainResult result = ek::train(mc, samples, tc);
    agcd::backbone::save_checkpoint((fs::path(out_dir) / "ckpt.bin").string(), result.params);
    write_resolved_config(cfg, out_dir);
    std::cout << "final_loss=" << result.losses.back() << " ckpt=" << out_dir << "/ckpt.bin\n";
    return 0;
}

int cmd_eval(const json& cfg, const std::string& text, const std::string& variant,
             const std::string& ckpt, const std::string& out_csv) {
    ek::ExperimentData data = experiment_data(cfg);
    ek::ModelConfig mc = model_config(cfg, ek::parse_variant(variant));
    agcd::num::ParamStore params;
    agcd::backbone::load_checkpoint(ckpt, params);
    auto samples = ek::build_samples(data, true, ek::parse_text_mode(text),
                                     cfg.at("train").at("seed").get<std::uint64_t>());
    auto rows = ek::evaluate(params, mc, data, samples,
                             cfg.at("eval").at("lead_hours").get<int>());
    if (fs::path(out_csv).has_parent_path()) fs::create_directories(fs::path(out_csv).parent_path());
    ek::write_metrics_csv(out_csv, rows);
    write_resolved_config(cfg, fs::path(out_csv).parent_path());
    std::cout << "wrote " << rows.size() << " rows to " << out_csv << "\n";
    return 0;
}

int cmd_rollout(const json& cfg, const std::string& variant, const std::string& ckpt, int steps,
                bool audit, const std::string& out_dir) {
    ek::ExperimentData data = experiment_data(cfg);
    if (data.test.sequences.empty()) throw agcd::DataError("no test sequences");
    const fg::Sequence& seq = data.test.sequences.front();
    if (static_cast<int>(seq.states.size()) <= steps) {
        throw agcd::DataError("data horizon " + std::to_string(seq.states.size() - 1) +
                              " is shorter than the requested rollout");
    }
    ek::ModelConfig mc = model_config(cfg, ek::parse_variant(variant));
    agcd::num::ParamStore params;
    agcd::backbone::load_checkpoint(ckpt, params);
    mm::MockBackend backend;
    ek::RolloutTrace trace = ek::rollout(params, mc, backend, data, seq.states[0], steps);

    fs::create_directories(out_dir);
    agcd::Tensor w = fg::latitude_weights(data.spec);
    std::vector<ek::MetricRow> rows;
    for (int k = 1; k <= steps; ++k) {
        for (const auto& var : data.spec.variables) {
            ek::MetricRow r;
            r.lead_hours = 6 * k;
            r.variable = var;
            const agcd::Tensor& pred = trace.predictions[static_cast<std::size_t>(k - 1)]
                                           .fields.at(var);
            const agcd::Tensor& truth = seq.states[static_cast<std::size_t>(k)].fields.at(var);
            r.rmse = ek::lat_rmse(pred, truth, w);
            r.acc = ek::acc(pred, truth, data.clim.means.at(var), w);
            rows.push_back(r);
        }
    }
    ek::write_metrics_csv((fs::path(out_dir) / "rollout.csv").string(), rows);
    {
        std::ofstream tr(fs::path(out_dir) / "trace.txt");
        for (std::size_t k = 0; k < trace.pred_inputs.size(); ++k) {
            tr << "pred " << (k + 1) << ":";
            for (const auto& s : trace.pred_inputs[k]) tr << " " << s;
            tr << "\n";
        }
        for (std::size_t k = 0; k < trace.narr_inputs.size(); ++k) {
            tr << "narr " << (k + 1) << ":";
            for (const auto& s : trace.narr_inputs[k]) tr << " " << s;
            tr << "\n";
        }
    }
    write_resolved_config(cfg, out_dir);
    if (audit) {
        std::string detail;
        const bool ok = ek::audit_causality(trace, &detail);
        std::cout << "audit " << (ok ? "PASS" : "FAIL " + detail) << "\n";
        if (!ok) return 1;
    }
    std::cout << "rollout steps=" << steps << " out=" << out_dir << "\n";
    return 0;
}

int cmd_render(const std::string& data_path, const std::string& sample, int time_index,
               const std::string& out_dir) {
    fg::Dataset ds = fg::read_grid_file(data_path);
    const fg::Sequence* seq = nullptr;
    for (const auto& s : ds.sequences) {
        if (sample.empty() || s.sample_id == sample) {
            seq = &s;
            break;
        }
    }
    if (!seq) throw agcd::DataError("sample not found: " + sample);
    if (time_index < 0 || static_cast<std::size_t>(time_index) >= seq->states.size()) {
        throw agcd::DataError("time index out of range");
    }
    fg::NormStats stats = fg::compute_norm_stats(ds);
    fs::create_directories(out_dir);
    for (const auto& var : ds.spec.variables) {
        const auto [mean, sd] = stats.by_var.at(var);
        hm::ColormapSpec cmap = hm::ColormapSpec::diverging(mean - 3.0 * sd, mean + 3.0 * sd);
        hm::RGBImage img = hm::render_field(
            seq->states[static_cast<std::size_t>(time_index)].fields.at(var), cmap);
        hm::write_ppm(img, (fs::path(out_dir) / (var + ".ppm")).string());
    }
    std::cout << "rendered " << ds.spec.variables.size() << " fields to " << out_dir << "\n";
    return 0;
}

int cmd_ablate(const json& cfg, const std::string& suite, int seeds,
               const std::string& out_csv) {
    ek::ExperimentData data = experiment_data(cfg);
    ek::TrainConfig tc;
    const json& t = cfg.at("train");
    tc.steps = t.at("steps").get<std::size_t>();
    tc.batch = t.at("batch").get<std::size_t>();
    tc.lr = t.at("lr").get<double>();
    std::vector<std::uint64_t> seed_list;
    for (int i = 0; i < seeds; ++i) seed_list.push_back(static_cast<std::uint64_t>(i + 1));
    std::vector<ek::LabeledRow> rows = suite == "control"
                                           ? ek::run_control(data, seed_list, tc)
                                           : ek::run_ablation(suite, data, seed_list, tc);
    if (fs::path(out_csv).has_parent_path()) fs::create_directories(fs::path(out_csv).parent_path());
    ek::write_labeled_csv(out_csv, rows);
    write_resolved_config(cfg, fs::path(out_csv).parent_path());
    std::cout << "wrote " << rows.size() << " rows to " << out_csv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale text-guided weather forecasting toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    std::uint64_t gen_seed = 1;
    int gen_samples = 8, gen_horizon = 1;
    std::string gen_out;
    gen->add_option("--seed", gen_seed);
    gen->add_option("--samples", gen_samples);
    gen->add_option("--horizon", gen_horizon);
    gen->add_option("--out", gen_out)->required();

    // narrate
    auto* nar = app.add_subcommand("narrate", "run the narration pipeline over a dataset");
    std::string nar_data, nar_backend = "mock", nar_host = "127.0.0.1", nar_cache, nar_inject;
    int nar_port = 8080, nar_rounds = 2;
    nar->add_option("--data", nar_data)->required();
    nar->add_option("--backend", nar_backend)->check(CLI::IsMember({"mock", "http"}));
    nar->add_option("--host", nar_host);
    nar->add_option("--port", nar_port);
    nar->add_option("--cache", nar_cache)->required();
    nar->add_option("--rounds", nar_rounds);
    nar->add_option("--inject", nar_inject)
        ->check(CLI::IsMember({"missing", "distorted", "contradictory", "overstated-causality"}));

    // shared train/eval/rollout flags
    std::string config_path, text = "matched", variant = "agcd", ckpt, cache_path, out;
    long steps_override = -1;
    std::uint64_t seed_override = 0;
    bool have_seed = false;

    auto* tr = app.add_subcommand("train", "train a forecaster");
    tr->add_option("--config", config_path);
    tr->add_option("--text", text)->check(CLI::IsMember({"matched", "shuffled", "empty"}));
    tr->add_option("--variant", variant)->check(CLI::IsMember({"baseline", "agcd"}));
    tr->add_option("--cache", cache_path);
    tr->add_option("--steps", steps_override);
    tr->add_option("--seed", seed_override)->each([&](const std::string&) { have_seed = true; });
    tr->add_option("--out", out)->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    ev->add_option("--config", config_path);
    ev->add_option("--text", text)->check(CLI::IsMember({"matched", "shuffled", "empty"}));
    ev->add_option("--variant", variant)->check(CLI::IsMember({"baseline", "agcd"}));
    ev->add_option("--ckpt", ckpt)->required();
    ev->add_option("--out", out)->required();

    auto* ro = app.add_subcommand("rollout", "autoregressive rollout with narrative editing");
    int ro_steps = 8;
    bool ro_audit = false;
    ro->add_option("--config", config_path);
    ro->add_option("--variant", variant)->check(CLI::IsMember({"baseline", "agcd"}));
    ro->add_option("--ckpt", ckpt)->required();
    ro->add_option("--steps", ro_steps);
    ro->add_flag("--audit", ro_audit);
    ro->add_option("--out", out)->required();

    auto* re = app.add_subcommand("render", "render dataset fields to PPM heatmaps");
    std::string re_data, re_sample;
    int re_time = 0;
    re->add_option("--data", re_data)->required();
    re->add_option("--sample", re_sample);
    re->add_option("--time", re_time);
    re->add_option("--out", out)->required();

    auto* ab = app.add_subcommand("ablate", "run a control or ablation suite");
    std::string ab_suite;
    int ab_seeds = 1;
    ab->add_option("--config", config_path);
    ab->add_option("--suite", ab_suite)
        ->required()
        ->check(CLI::IsMember({"control", "crid", "mmnp", "agents"}));
    ab->add_option("--seeds", ab_seeds);
    ab->add_option("--steps", steps_override);
    ab->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        json cfg = load_config(config_path);
        if (steps_override >= 0) cfg["train"]["steps"] = steps_override;
        if (have_seed) cfg["train"]["seed"] = seed_override;
        if (gen->parsed()) return cmd_gen_data(gen_seed, gen_samples, gen_horizon, gen_out);
        if (nar->parsed()) {
            return cmd_narrate(nar_data, nar_backend, nar_host, nar_port, nar_cache, nar_rounds,
                               nar_inject);
        }
        if (tr->parsed()) return cmd_train(cfg, text, variant, cache_path, out);
        if (ev->parsed()) return cmd_eval(cfg, text, variant, ckpt, out);
        if (ro->parsed()) return cmd_rollout(cfg, variant, ckpt, ro_steps, ro_audit, out);
        if (re->parsed()) return cmd_render(re_data, re_sample, re_time, out);
        if (ab->parsed()) return cmd_ablate(cfg, ab_suite, ab_seeds, out);
    } catch (const agcd::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
