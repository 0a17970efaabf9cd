#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <set>

#include "agcd/evalkit.hpp"
#include "doctest.h"

using agcd::Tensor;
namespace ek = agcd::evalkit;
namespace fg = agcd::fieldgrid;

namespace {

double ref_lat_rmse(const Tensor& pred, const Tensor& truth, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i)
        for (std::size_t j = 0; j < pred.cols(); ++j) {
            const double d = pred(i, j) - truth(i, j);
            s += w.v[i] * d * d;
        }
    return std::sqrt(s / static_cast<double>(pred.rows() * pred.cols()));
}

double ref_acc(const Tensor& pred, const Tensor& truth, const Tensor& clim, const Tensor& w) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i)
        for (std::size_t j = 0; j < pred.cols(); ++j) {
            const double a = pred(i, j) - clim(i, j);
            const double b = truth(i, j) - clim(i, j);
            ab += w.v[i] * a * b;
            aa += w.v[i] * a * a;
            bb += w.v[i] * b * b;
        }
    return ab / std::max(std::sqrt(aa * bb), 1e-12);
}

Tensor randf(agcd::SplitMix64& rng, std::size_t h, std::size_t w, double s = 1.0) {
    Tensor t = Tensor::zeros({h, w});
    for (double& x : t.v) x = (rng.next_double() * 2.0 - 1.0) * s;
    return t;
}

ek::ModelConfig tiny_model(ek::Variant v) {
    ek::ModelConfig cfg;
    cfg.variant = v;
    return cfg;
}

}  // namespace

TEST_CASE("latitude-weighted rmse worked examples") {
    fg::GridSpec spec;
    spec.H = 2;
    spec.W = 1;
    spec.latitudes = {60.0, 0.0};
    spec.longitudes = {0.0};
    spec.variables = {"z"};
    Tensor w = fg::latitude_weights(spec);

    Tensor truth = Tensor::zeros({2, 1});
    Tensor pred = Tensor::from({2, 1}, {3.0, 0.0});  // error 3 at lat 60
    CHECK(ek::lat_rmse(truth, truth, w) == 0.0);
    CHECK(ek::lat_rmse(pred, truth, w) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));

    // uniform weights reduce to the plain rmse
    agcd::SplitMix64 rng(3);
    Tensor a = randf(rng, 4, 6), b = randf(rng, 4, 6);
    Tensor ones = Tensor::full({4}, 1.0);
    double plain = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        plain += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    }
    plain = std::sqrt(plain / static_cast<double>(a.size()));
    CHECK(ek::lat_rmse(a, b, ones) == doctest::Approx(plain).epsilon(1e-12));

    CHECK_THROWS_AS(ek::lat_rmse(a, Tensor::zeros({4, 5}), ones), agcd::ShapeError);
}

TEST_CASE("anomaly correlation worked examples") {
    Tensor w = Tensor::full({1}, 1.0);
    Tensor clim = Tensor::zeros({1, 2});
    Tensor t1 = Tensor::from({1, 2}, {1.0, -2.0});
    CHECK(ek::acc(t1, t1, clim, w) == doctest::Approx(1.0).epsilon(1e-12));
    Tensor neg = Tensor::from({1, 2}, {-1.0, 2.0});
    CHECK(ek::acc(neg, t1, clim, w) == doctest::Approx(-1.0).epsilon(1e-12));
    Tensor e1 = Tensor::from({1, 2}, {1.0, 0.0});
    Tensor e2 = Tensor::from({1, 2}, {0.0, 1.0});
    CHECK(ek::acc(e1, e2, clim, w) == 0.0);
    // identical constants: zero anomalies, floored denominator, acc 0 not NaN
    CHECK(ek::acc(clim, clim, clim, w) == 0.0);
}

TEST_CASE("metrics match brute-force references on random fields") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    Tensor w = fg::latitude_weights(spec);
    agcd::SplitMix64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor pred = randf(rng, 16, 16, 2.0);
        Tensor truth = randf(rng, 16, 16, 2.0);
        Tensor clim = randf(rng, 16, 16, 0.5);
        CHECK(std::abs(ek::lat_rmse(pred, truth, w) - ref_lat_rmse(pred, truth, w)) <= 1e-12);
        const double a = ek::acc(pred, truth, clim, w);
        CHECK(std::abs(a - ref_acc(pred, truth, clim, w)) <= 1e-12);
        CHECK(std::abs(a) <= 1.0 + 1e-12);
    }
}

TEST_CASE("acc is invariant to a shared constant shift") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    Tensor w = fg::latitude_weights(spec);
    agcd::SplitMix64 rng(9);
    Tensor pred = randf(rng, 16, 16), truth = randf(rng, 16, 16), clim = randf(rng, 16, 16);
    const double base = ek::acc(pred, truth, clim, w);
    Tensor p2 = pred, t2 = truth, c2 = clim;
    for (double& x : p2.v) x += 4.2;
    for (double& x : t2.v) x += 4.2;
    for (double& x : c2.v) x += 4.2;
    CHECK(ek::acc(p2, t2, c2, w) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("csv output formats") {
    std::vector<ek::MetricRow> rows = {{6, "z", 1.5, 0.25}};
    const std::string csv = ek::metrics_csv(rows);
    CHECK(csv.substr(0, csv.find('\n')) == "lead_hours,variable,rmse,acc");
    CHECK(csv.find("6,z,") != std::string::npos);

    std::vector<ek::LabeledRow> labeled = {{"full", {6, "z", 1.5, 0.25}}};
    const std::string lcsv = ek::labeled_csv(labeled);
    CHECK(lcsv.substr(0, lcsv.find('\n')) == "config,lead_hours,variable,rmse,acc");
    CHECK(lcsv.find("full,6,z,") != std::string::npos);
}

TEST_CASE("derangement: fixed-point-free permutation, deterministic") {
    for (std::size_t n : {2, 3, 7, 50}) {
        auto d = ek::derangement(n, 123);
        REQUIRE(d.size() == n);
        std::set<std::size_t> seen(d.begin(), d.end());
        CHECK(seen.size() == n);  // a permutation
        for (std::size_t i = 0; i < n; ++i) CHECK(d[i] != i);
        CHECK(d == ek::derangement(n, 123));
        if (n > 3) CHECK(d != ek::derangement(n, 124));
    }
}

TEST_CASE("experiment data: splits, narratives, text modes") {
    ek::ExperimentData data =
        ek::prepare_experiment(77, 6, 3, 1, fg::GridSpec::default_spec());
    CHECK(data.train.sequences.size() == 6);
    CHECK(data.test.sequences.size() == 3);
    // every sequence in both splits has a narrative
    for (const auto* ds : {&data.train, &data.test}) {
        for (const auto& seq : ds->sequences) {
            REQUIRE(data.narrative_text.count(seq.sample_id) == 1);
            CHECK_FALSE(data.narrative_text.at(seq.sample_id).empty());
        }
    }

    auto matched = ek::build_samples(data, false, ek::TextMode::Matched, 1);
    CHECK(matched.size() == 6);  // horizon 1: one pair per sequence
    for (const auto& s : matched) {
        CHECK(s.in_patches.shape == std::vector<std::size_t>{16, 64});
        CHECK(s.target_patches.shape == std::vector<std::size_t>{16, 64});
        CHECK(s.text_emb.cols() == 48);
    }

    auto empty = ek::build_samples(data, false, ek::TextMode::Empty, 1);
    for (const auto& s : empty) CHECK(s.text_emb.rows() == 1);  // null token only

    auto shuffled = ek::build_samples(data, false, ek::TextMode::Shuffled, 1);
    int moved = 0;
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
        if (shuffled[i].text_emb.v != matched[i].text_emb.v) ++moved;
    }
    CHECK(moved == static_cast<int>(shuffled.size()));  // derangement: all reassigned
}

TEST_CASE("training reduces the loss and is deterministic") {
    ek::ExperimentData data =
        ek::prepare_experiment(5, 16, 4, 1, fg::GridSpec::default_spec());
    auto samples = ek::build_samples(data, false, ek::TextMode::Matched, 1);
    ek::TrainConfig tc;
    tc.steps = 120;
    tc.batch = 4;
    tc.seed = 3;
    ek::ModelConfig cfg = tiny_model(ek::Variant::Agcd);
    ek::TrainResult r1 = ek::train(cfg, samples, tc);
    REQUIRE(r1.losses.size() == 120);
    CHECK(r1.losses[100] < r1.losses[0]);
    ek::TrainResult r2 = ek::train(cfg, samples, tc);
    CHECK(r1.losses == r2.losses);  // bitwise determinism

    auto test_samples = ek::build_samples(data, true, ek::TextMode::Matched, 1);
    auto m1 = ek::evaluate(r1.params, cfg, data, test_samples);
    auto m2 = ek::evaluate(r2.params, cfg, data, test_samples);
    REQUIRE(m1.size() == 4);
    for (std::size_t i = 0; i < m1.size(); ++i) {
        CHECK(m1[i].variable == m2[i].variable);
        CHECK(m1[i].rmse == m2[i].rmse);
        CHECK(m1[i].acc == m2[i].acc);
        CHECK(m1[i].rmse >= 0.0);
        CHECK(std::abs(m1[i].acc) <= 1.0 + 1e-12);
        CHECK(m1[i].lead_hours == 6);
    }
}

TEST_CASE("baseline variant ignores text") {
    ek::ExperimentData data =
        ek::prepare_experiment(5, 8, 2, 1, fg::GridSpec::default_spec());
    ek::TrainConfig tc;
    tc.steps = 10;
    tc.seed = 3;
    ek::ModelConfig cfg = tiny_model(ek::Variant::Baseline);
    auto matched = ek::build_samples(data, false, ek::TextMode::Matched, 1);
    auto empty = ek::build_samples(data, false, ek::TextMode::Empty, 1);
    ek::TrainResult a = ek::train(cfg, matched, tc);
    ek::TrainResult b = ek::train(cfg, empty, tc);
    CHECK(a.losses == b.losses);
}

TEST_CASE("rollout trace shape, audit, and fault injection") {
    ek::ExperimentData data =
        ek::prepare_experiment(11, 6, 2, 8, fg::GridSpec::default_spec());
    ek::ModelConfig cfg = tiny_model(ek::Variant::Agcd);
    agcd::num::ParamStore params;
    ek::init_model(params, cfg, 21);
    agcd::mmnp::MockBackend backend;
    const fg::Sequence& seq = data.test.sequences[0];

    ek::RolloutTrace t0 = ek::rollout(params, cfg, backend, data, seq.states[0], 0);
    CHECK(t0.predictions.empty());
    CHECK(t0.narratives.size() == 1);  // S^(0) only
    CHECK(ek::audit_causality(t0));

    ek::RolloutTrace t8 = ek::rollout(params, cfg, backend, data, seq.states[0], 8);
    CHECK(t8.predictions.size() == 8);
    CHECK(t8.narratives.size() == 9);
    CHECK(ek::audit_causality(t8));
    for (const auto& st : t8.predictions) {
        for (const auto& [var, f] : st.fields) CHECK(f.all_finite());
    }

    // step-1 inputs: the initial state and S^(0)
    REQUIRE_FALSE(t8.pred_inputs.empty());
    bool has_init = false;
    for (const auto& s : t8.pred_inputs[0]) has_init = has_init || s == "init";
    CHECK(has_init);

    // deterministic traces
    ek::RolloutTrace t8b = ek::rollout(params, cfg, backend, data, seq.states[0], 8);
    for (std::size_t k = 0; k < 8; ++k) {
        for (const auto& [var, f] : t8.predictions[k].fields) {
            CHECK(f.v == t8b.predictions[k].fields.at(var).v);
        }
        CHECK(t8.narratives[k + 1].text() == t8b.narratives[k + 1].text());
    }

    // leak the true future at step 3: the audit must fail and name the step
    ek::RolloutOptions opts;
    opts.leak_step = 3;
    opts.truth = &seq;
    ek::RolloutTrace leaked = ek::rollout(params, cfg, backend, data, seq.states[0], 8, opts);
    std::string detail;
    CHECK_FALSE(ek::audit_causality(leaked, &detail));
    CHECK(detail.find("3") != std::string::npos);
}

TEST_CASE("control and ablation suites emit the expected row sets") {
    ek::ExperimentData data =
        ek::prepare_experiment(13, 8, 2, 1, fg::GridSpec::default_spec());
    ek::TrainConfig tc;
    tc.steps = 5;
    tc.batch = 2;

    auto control = ek::run_control(data, {1}, tc);
    // vision_only + matched + shuffled + empty, 4 variables each
    CHECK(control.size() == 16);
    std::set<std::string> configs;
    for (const auto& r : control) configs.insert(r.config);
    CHECK(configs == std::set<std::string>{"vision_only", "matched", "shuffled", "empty"});

    auto crid_rows = ek::run_ablation("crid", data, {1}, tc);
    CHECK(crid_rows.size() == 16);
    configs.clear();
    for (const auto& r : crid_rows) configs.insert(r.config);
    CHECK(configs == std::set<std::string>{"full", "no_region", "no_hopfield", "no_cmg"});

    auto mmnp_rows = ek::run_ablation("mmnp", data, {1}, tc);
    CHECK(mmnp_rows.size() == 12);

    auto agent_rows = ek::run_ablation("agents", data, {1}, tc);
    CHECK(agent_rows.size() == 20);  // none, +t, +u, +v, +z

    CHECK_THROWS_AS(ek::run_ablation("nope", data, {1}, tc), agcd::ConfigError);
}

TEST_CASE("median helper") {
    CHECK(ek::median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(ek::median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK(ek::median({5.0}) == 5.0);
}
