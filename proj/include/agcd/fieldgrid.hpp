#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "agcd/tensor.hpp"

namespace agcd::fieldgrid {

struct GridSpec {
    std::size_t H = 0;
    std::size_t W = 0;
    std::vector<double> latitudes;   // degrees, strictly decreasing, |lat| <= 90
    std::vector<double> longitudes;  // degrees in [0, 360)
    std::vector<std::string> variables;

    // 16x16, variables z/t/u/v, latitudes equally spaced 84.375 .. -84.375.
    static GridSpec default_spec();
    // Cell-centered latitudes/longitudes for an HxW grid with the given names.
    static GridSpec regular(std::size_t h, std::size_t w, std::vector<std::string> vars);
    void validate() const;
};

struct AtmosphericState {
    std::string sample_id;
    long time_index = 0;  // 6-hour units
    std::map<std::string, Tensor> fields;
};

struct NormStats {
    // variable -> (mean, std); std floored at 1e-6
    std::map<std::string, std::pair<double, double>> by_var;
};

struct ClimatologyTable {
    std::map<std::string, Tensor> means;
};

struct BlobTruth {
    std::string variable;
    double center_row = 0.0;
    double center_col = 0.0;
    double amplitude = 0.0;
    int sign = 1;
};

// One entry per rollout step; records the generator's ground truth.
using OracleAnnotation = std::vector<BlobTruth>;

struct Sequence {
    std::string sample_id;
    std::vector<AtmosphericState> states;       // horizon_steps + 1 entries
    std::vector<OracleAnnotation> annotations;  // one per state
};

struct Dataset {
    GridSpec spec;
    std::vector<Sequence> sequences;
    std::size_t state_count() const;
};

struct GenConfig {
    int min_blobs = 1;
    int max_blobs = 2;
    double sigma = 2.4;
    double amp_lo = 0.7;
    double amp_hi = 1.4;
    double negative_prob = 0.25;
    double omega = 0.22;            // solid-body rotation, radians per step
    double kappa = 0.08;            // diffusion coefficient
    int diffusion_sweeps = 1;       // sweeps applied per elapsed step
    double temp_coupling = 0.7;     // t = coupling * phi + meridional gradient
    double temp_meridional = 0.8;
};

// Deterministic in seed. Geopotential-like field as a sum of Gaussian blobs
// advected by solid-body rotation plus periodic diffusion; t coupled to phi
// with a meridional gradient; (u, v) the rotational derivative of phi.
Dataset gen_synthetic(std::uint64_t seed, int n_samples, const GridSpec& spec,
                      int horizon_steps, const GenConfig& cfg = {});

// One explicit periodic diffusion sweep: f + kappa * laplacian(f).
Tensor diffusion_step(const Tensor& field, double kappa);

// w[i] = cos(lat_i) / mean_j cos(lat_j); mean of weights is 1.
Tensor latitude_weights(const GridSpec& spec);

NormStats compute_norm_stats(const Dataset& dataset);
AtmosphericState normalize_state(const AtmosphericState& state, const NormStats& stats);
AtmosphericState denormalize_state(const AtmosphericState& state, const NormStats& stats);

ClimatologyTable compute_climatology(const Dataset& dataset);

// AGCD-GRID v1: bit-exact binary grid format (see README).
void write_grid_file(const std::string& path, const Dataset& dataset);
Dataset read_grid_file(const std::string& path);

void write_annotations(const std::string& path, const Dataset& dataset);
void read_annotations(const std::string& path, Dataset& dataset);

}  // namespace agcd::fieldgrid
