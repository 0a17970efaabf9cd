#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>

#include "agcd/fieldgrid.hpp"
#include "doctest.h"

using agcd::Tensor;
namespace fg = agcd::fieldgrid;

namespace {

std::string temp_path(const char* name) {
    return std::string("fg_test_") + name;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("default grid spec") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    CHECK(spec.H == 16);
    CHECK(spec.W == 16);
    CHECK(spec.variables == std::vector<std::string>{"z", "t", "u", "v"});
    CHECK(spec.latitudes.front() == doctest::Approx(84.375));
    CHECK(spec.latitudes.back() == doctest::Approx(-84.375));
}

TEST_CASE("gen_synthetic is deterministic in the seed") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::Dataset a = fg::gen_synthetic(42, 3, spec, 2);
    fg::Dataset b = fg::gen_synthetic(42, 3, spec, 2);
    REQUIRE(a.sequences.size() == b.sequences.size());
    for (std::size_t s = 0; s < a.sequences.size(); ++s) {
        REQUIRE(a.sequences[s].states.size() == b.sequences[s].states.size());
        for (std::size_t k = 0; k < a.sequences[s].states.size(); ++k) {
            for (const auto& var : spec.variables) {
                CHECK(a.sequences[s].states[k].fields.at(var).v ==
                      b.sequences[s].states[k].fields.at(var).v);
            }
        }
    }
}

TEST_CASE("single blob annotation center matches the field argmax") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::GenConfig cfg;
    cfg.min_blobs = 1;
    cfg.max_blobs = 1;
    cfg.negative_prob = 0.0;
    fg::Dataset ds = fg::gen_synthetic(9, 4, spec, 1, cfg);
    for (const auto& seq : ds.sequences) {
        const auto& ann = seq.annotations[0];
        REQUIRE(ann.size() == 1);
        const Tensor& phi = seq.states[0].fields.at("z");
        std::size_t arg = 0;
        for (std::size_t i = 1; i < phi.size(); ++i)
            if (phi.v[i] > phi.v[arg]) arg = i;
        const double ar = static_cast<double>(arg / spec.W);
        const double ac = static_cast<double>(arg % spec.W);
        // the argmax grid cell is the one nearest the blob center (periodic)
        auto wrap_dist = [](double a, double b, double period) {
            double d = std::abs(a - b);
            return std::min(d, period - d);
        };
        CHECK(wrap_dist(ar, ann[0].center_row, 16.0) <= 0.5);
        CHECK(wrap_dist(ac, ann[0].center_col, 16.0) <= 0.5);
    }
}

TEST_CASE("gen_synthetic with zero samples yields an empty dataset") {
    fg::Dataset ds = fg::gen_synthetic(1, 0, fg::GridSpec::default_spec(), 1);
    CHECK(ds.sequences.empty());
    CHECK(ds.state_count() == 0);
}

TEST_CASE("diffusion preserves the global mean on the periodic domain") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::Dataset ds = fg::gen_synthetic(7, 1, spec, 1);
    const Tensor& phi = ds.sequences[0].states[0].fields.at("z");
    Tensor next = fg::diffusion_step(phi, 0.08);
    double m0 = 0.0, m1 = 0.0;
    for (double x : phi.v) m0 += x;
    for (double x : next.v) m1 += x;
    CHECK(std::abs(m0 - m1) / static_cast<double>(phi.size()) < 1e-6);
}

TEST_CASE("wind is the rotational derivative of phi") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::Dataset ds = fg::gen_synthetic(13, 1, spec, 1);
    const auto& st = ds.sequences[0].states[0];
    const Tensor& phi = st.fields.at("z");
    const std::size_t h = spec.H, w = spec.W;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double du = -(phi((i + 1) % h, j) - phi((i + h - 1) % h, j)) / 2.0;
            const double dv = (phi(i, (j + 1) % w) - phi(i, (j + w - 1) % w)) / 2.0;
            CHECK(st.fields.at("u")(i, j) == doctest::Approx(du).epsilon(1e-12));
            CHECK(st.fields.at("v")(i, j) == doctest::Approx(dv).epsilon(1e-12));
        }
}

TEST_CASE("latitude weights worked examples") {
    fg::GridSpec spec;
    spec.H = 2;
    spec.W = 1;
    spec.longitudes = {0.0};
    spec.variables = {"z"};

    spec.latitudes = {45.0, -45.0};
    Tensor w = fg::latitude_weights(spec);
    CHECK(w.v[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(w.v[1] == doctest::Approx(1.0).epsilon(1e-14));

    spec.latitudes = {60.0, 0.0};
    w = fg::latitude_weights(spec);
    CHECK(w.v[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w.v[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("latitude weights mean is one for any spec") {
    for (std::size_t h : {4, 7, 16, 32}) {
        fg::GridSpec spec = fg::GridSpec::regular(h, 4, {"z"});
        Tensor w = fg::latitude_weights(spec);
        double mean = 0.0;
        for (double x : w.v) mean += x;
        mean /= static_cast<double>(h);
        CHECK(std::abs(mean - 1.0) < 1e-12);
    }
}

TEST_CASE("normalize round trip and mean centering") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::Dataset ds = fg::gen_synthetic(21, 4, spec, 1);
    fg::NormStats stats = fg::compute_norm_stats(ds);
    const auto& st = ds.sequences[0].states[0];
    auto round_trip = fg::denormalize_state(fg::normalize_state(st, stats), stats);
    for (const auto& var : spec.variables) {
        const Tensor& a = st.fields.at(var);
        const Tensor& b = round_trip.fields.at(var);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.v[i] - b.v[i]) < 1e-12);
    }
    // normalized dataset mean is zero per variable
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& seq : ds.sequences)
        for (const auto& s : seq.states) {
            auto norm = fg::normalize_state(s, stats);
            for (double x : norm.fields.at("z").v) {
                sum += x;
                ++n;
            }
        }
    CHECK(std::abs(sum / static_cast<double>(n)) < 1e-9);
}

TEST_CASE("constant field normalizes finitely through the std floor") {
    fg::GridSpec spec = fg::GridSpec::regular(4, 4, {"z"});
    fg::Dataset ds;
    ds.spec = spec;
    fg::Sequence seq;
    seq.sample_id = "s00000";
    fg::AtmosphericState st;
    st.sample_id = "s00000";
    st.fields["z"] = Tensor::full({4, 4}, 2.5);
    seq.states.push_back(st);
    ds.sequences.push_back(seq);
    fg::NormStats stats = fg::compute_norm_stats(ds);
    CHECK(stats.by_var.at("z").second == 1e-6);
    auto norm = fg::normalize_state(st, stats);
    CHECK(norm.fields.at("z").all_finite());
}

TEST_CASE("missing variable stats is a contract error") {
    fg::NormStats stats;
    stats.by_var["z"] = {0.0, 1.0};
    fg::AtmosphericState st;
    st.sample_id = "x";
    st.fields["t"] = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(fg::normalize_state(st, stats), agcd::ContractError);
}

TEST_CASE("climatology worked examples") {
    fg::GridSpec spec = fg::GridSpec::regular(2, 2, {"z"});
    fg::Dataset ds;
    ds.spec = spec;
    for (double val : {1.0, 3.0}) {
        fg::Sequence seq;
        seq.sample_id = val == 1.0 ? "a" : "b";
        fg::AtmosphericState st;
        st.sample_id = seq.sample_id;
        st.fields["z"] = Tensor::full({2, 2}, val);
        seq.states.push_back(st);
        ds.sequences.push_back(seq);
    }
    fg::ClimatologyTable clim = fg::compute_climatology(ds);
    for (double x : clim.means.at("z").v) CHECK(x == 2.0);

    fg::Dataset empty;
    empty.spec = spec;
    CHECK_THROWS_AS(fg::compute_climatology(empty), agcd::ContractError);
}

TEST_CASE("climatology of identical states equals the state") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::Dataset one = fg::gen_synthetic(5, 1, spec, 1);
    fg::Dataset dup = one;
    dup.sequences.push_back(one.sequences[0]);
    dup.sequences[1].sample_id = "s00001";
    // restrict both sequences to the same single state
    dup.sequences[0].states.resize(1);
    dup.sequences[1].states.resize(1);
    fg::ClimatologyTable clim = fg::compute_climatology(dup);
    const Tensor& z = one.sequences[0].states[0].fields.at("z");
    for (std::size_t i = 0; i < z.size(); ++i) {
        CHECK(clim.means.at("z").v[i] == doctest::Approx(z.v[i]).epsilon(1e-15));
    }
}

TEST_CASE("grid file round trip is bitwise exact") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::Dataset ds = fg::gen_synthetic(3, 2, spec, 2);
    const std::string path = temp_path("roundtrip.grid");
    fg::write_grid_file(path, ds);
    fg::Dataset back = fg::read_grid_file(path);
    REQUIRE(back.sequences.size() == ds.sequences.size());
    for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
        CHECK(back.sequences[s].sample_id == ds.sequences[s].sample_id);
        REQUIRE(back.sequences[s].states.size() == ds.sequences[s].states.size());
        for (std::size_t k = 0; k < ds.sequences[s].states.size(); ++k) {
            CHECK(back.sequences[s].states[k].time_index ==
                  ds.sequences[s].states[k].time_index);
            for (const auto& var : spec.variables) {
                CHECK(back.sequences[s].states[k].fields.at(var).v ==
                      ds.sequences[s].states[k].fields.at(var).v);
            }
        }
    }
    // write again: byte-identical
    const std::string path2 = temp_path("roundtrip2.grid");
    fg::write_grid_file(path2, back);
    CHECK(slurp(path) == slurp(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("value 1.0 serializes as little-endian IEEE-754") {
    fg::GridSpec spec = fg::GridSpec::regular(1, 1, {"z"});
    fg::Dataset ds;
    ds.spec = spec;
    fg::Sequence seq;
    seq.sample_id = "a";
    fg::AtmosphericState st;
    st.sample_id = "a";
    st.fields["z"] = Tensor::full({1, 1}, 1.0);
    seq.states.push_back(st);
    ds.sequences.push_back(seq);
    const std::string path = temp_path("one.grid");
    fg::write_grid_file(path, ds);
    std::string bytes = slurp(path);
    std::remove(path.c_str());
    REQUIRE(bytes.size() >= 8);
    const std::string payload = bytes.substr(bytes.size() - 8);
    const unsigned char expect[8] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F};
    for (int i = 0; i < 8; ++i) {
        CHECK(static_cast<unsigned char>(payload[static_cast<std::size_t>(i)]) == expect[i]);
    }
}

TEST_CASE("bad magic is a format error") {
    const std::string path = temp_path("badmagic.grid");
    {
        std::ofstream f(path, std::ios::binary);
        f << "XGRID 1 2 2 1 0 z\n";
    }
    CHECK_THROWS_AS(fg::read_grid_file(path), agcd::FormatError);
    std::remove(path.c_str());
}

TEST_CASE("truncated payload is a format error") {
    fg::GridSpec spec = fg::GridSpec::regular(2, 2, {"z"});
    fg::Dataset ds;
    ds.spec = spec;
    fg::Sequence seq;
    seq.sample_id = "a";
    fg::AtmosphericState st;
    st.sample_id = "a";
    st.fields["z"] = Tensor::zeros({2, 2});
    seq.states.push_back(st);
    ds.sequences.push_back(seq);
    const std::string path = temp_path("trunc.grid");
    fg::write_grid_file(path, ds);
    std::string bytes = slurp(path);
    {
        std::ofstream f(path, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_AS(fg::read_grid_file(path), agcd::FormatError);
    std::remove(path.c_str());
}

TEST_CASE("empty dataset file round trips") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::Dataset ds;
    ds.spec = spec;
    const std::string path = temp_path("empty.grid");
    fg::write_grid_file(path, ds);
    fg::Dataset back = fg::read_grid_file(path);
    CHECK(back.sequences.empty());
    std::remove(path.c_str());
}

TEST_CASE("annotations round trip") {
    fg::GridSpec spec = fg::GridSpec::default_spec();
    fg::Dataset ds = fg::gen_synthetic(77, 2, spec, 1);
    const std::string path = temp_path("ann.json");
    fg::write_annotations(path, ds);
    fg::Dataset other = fg::gen_synthetic(77, 2, spec, 1);
    for (auto& seq : other.sequences) seq.annotations.clear();
    fg::read_annotations(path, other);
    std::remove(path.c_str());
    REQUIRE(other.sequences.size() == ds.sequences.size());
    for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
        REQUIRE(other.sequences[s].annotations.size() == ds.sequences[s].annotations.size());
        for (std::size_t k = 0; k < ds.sequences[s].annotations.size(); ++k) {
            const auto& a = ds.sequences[s].annotations[k];
            const auto& b = other.sequences[s].annotations[k];
            REQUIRE(a.size() == b.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(a[i].variable == b[i].variable);
                CHECK(a[i].center_row == doctest::Approx(b[i].center_row).epsilon(1e-12));
                CHECK(a[i].center_col == doctest::Approx(b[i].center_col).epsilon(1e-12));
                CHECK(a[i].amplitude == doctest::Approx(b[i].amplitude).epsilon(1e-12));
                CHECK(a[i].sign == b[i].sign);
            }
        }
    }
}
