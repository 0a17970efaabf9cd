#include "agcd/fieldgrid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace agcd::fieldgrid {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
}  // namespace

GridSpec GridSpec::default_spec() {
    return regular(16, 16, {"z", "t", "u", "v"});
}

GridSpec GridSpec::regular(std::size_t h, std::size_t w, std::vector<std::string> vars) {
    GridSpec s;
    s.H = h;
    s.W = w;
    s.variables = std::move(vars);
    s.latitudes.resize(h);
    for (std::size_t i = 0; i < h; ++i) {
        s.latitudes[i] = 90.0 * (1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(h));
    }
    s.longitudes.resize(w);
    for (std::size_t j = 0; j < w; ++j) {
        s.longitudes[j] = 360.0 * static_cast<double>(j) / static_cast<double>(w);
    }
    s.validate();
    return s;
}

void GridSpec::validate() const {
    if (H == 0 || W == 0) throw ConfigError("grid dimensions must be positive");
    if (latitudes.size() != H) throw ConfigError("latitude count does not match H");
    if (longitudes.size() != W) throw ConfigError("longitude count does not match W");
    for (std::size_t i = 0; i < H; ++i) {
        if (std::abs(latitudes[i]) > 90.0) throw ConfigError("latitude out of range");
        if (i > 0 && latitudes[i] >= latitudes[i - 1]) {
            throw ConfigError("latitudes must be strictly decreasing");
        }
    }
    for (double lon : longitudes) {
        if (lon < 0.0 || lon >= 360.0) throw ConfigError("longitude out of [0,360)");
    }
    std::vector<std::string> sorted = variables;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("variable names must be unique");
    }
}

std::size_t Dataset::state_count() const {
    std::size_t n = 0;
    for (const auto& seq : sequences) n += seq.states.size();
    return n;
}

Tensor diffusion_step(const Tensor& field, double kappa) {
    if (field.rank() != 2) throw ShapeError("diffusion_step expects a 2-D field");
    const std::size_t h = field.rows(), w = field.cols();
    Tensor out = field;
    for (std::size_t i = 0; i < h; ++i) {
        const std::size_t up = (i + h - 1) % h, dn = (i + 1) % h;
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t lf = (j + w - 1) % w, rt = (j + 1) % w;
            const double lap = field(up, j) + field(dn, j) + field(i, lf) + field(i, rt) -
                               4.0 * field(i, j);
            out(i, j) = field(i, j) + kappa * lap;
        }
    }
    return out;
}

namespace {

// Minimum-image squared distance on a periodic HxW grid.
double periodic_dist2(double dr, double dc, double h, double w) {
    dr = std::fmod(std::fmod(dr, h) + h, h);
    dc = std::fmod(std::fmod(dc, w) + w, w);
    if (dr > h / 2.0) dr -= h;
    if (dc > w / 2.0) dc -= w;
    return dr * dr + dc * dc;
}

struct Blob {
    double row0, col0;  // initial center
    double amplitude;
    int sign;
};

Tensor build_phi(const GridSpec& spec, const std::vector<Blob>& blobs, double angle,
                 double sigma, std::vector<BlobTruth>* truth) {
    const double h = static_cast<double>(spec.H), w = static_cast<double>(spec.W);
    const double cr = (h - 1.0) / 2.0, cc = (w - 1.0) / 2.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    Tensor phi = Tensor::zeros({spec.H, spec.W});
    for (const Blob& b : blobs) {
        const double pr = b.row0 - cr, pc = b.col0 - cc;
        double br = cr + ca * pr - sa * pc;
        double bc = cc + sa * pr + ca * pc;
        br = std::fmod(std::fmod(br, h) + h, h);
        bc = std::fmod(std::fmod(bc, w) + w, w);
        const double a = b.amplitude * static_cast<double>(b.sign);
        for (std::size_t i = 0; i < spec.H; ++i)
            for (std::size_t j = 0; j < spec.W; ++j) {
                const double d2 = periodic_dist2(static_cast<double>(i) - br,
                                                 static_cast<double>(j) - bc, h, w);
                phi(i, j) += a * std::exp(-d2 / (2.0 * sigma * sigma));
            }
        if (truth) {
            truth->push_back(BlobTruth{"z", br, bc, b.amplitude, b.sign});
        }
    }
    return phi;
}

}  // namespace

Dataset gen_synthetic(std::uint64_t seed, int n_samples, const GridSpec& spec,
                      int horizon_steps, const GenConfig& cfg) {
    spec.validate();
    if (n_samples < 0) throw ContractError("n_samples must be non-negative");
    if (horizon_steps < 1) throw ContractError("horizon_steps must be at least 1");
    Dataset ds;
    ds.spec = spec;
    SplitMix64 rng(seed);
    const double h = static_cast<double>(spec.H), w = static_cast<double>(spec.W);
    for (int s = 0; s < n_samples; ++s) {
        Sequence seq;
        {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "s%05d", s);
            seq.sample_id = buf;
        }
        const int n_blobs = cfg.min_blobs +
            static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.max_blobs - cfg.min_blobs + 1)));
        std::vector<Blob> blobs;
        for (int b = 0; b < n_blobs; ++b) {
            Blob blob;
            blob.row0 = rng.uniform(0.0, h);
            blob.col0 = rng.uniform(0.0, w);
            blob.amplitude = rng.uniform(cfg.amp_lo, cfg.amp_hi);
            blob.sign = (rng.next_double() < cfg.negative_prob) ? -1 : 1;
            blobs.push_back(blob);
        }
        for (int k = 0; k <= horizon_steps; ++k) {
            OracleAnnotation ann;
            Tensor phi = build_phi(spec, blobs, cfg.omega * k, cfg.sigma, &ann);
            for (int sweep = 0; sweep < cfg.diffusion_sweeps * k; ++sweep) {
                phi = diffusion_step(phi, cfg.kappa);
            }
            AtmosphericState st;
            st.sample_id = seq.sample_id;
            st.time_index = k;
            st.fields["z"] = phi;
            Tensor t = Tensor::zeros({spec.H, spec.W});
            for (std::size_t i = 0; i < spec.H; ++i)
                for (std::size_t j = 0; j < spec.W; ++j) {
                    const double merid = 0.5 - static_cast<double>(i) / (h - 1.0);
                    t(i, j) = cfg.temp_coupling * phi(i, j) + cfg.temp_meridional * merid;
                }
            st.fields["t"] = t;
            Tensor u = Tensor::zeros({spec.H, spec.W});
            Tensor v = Tensor::zeros({spec.H, spec.W});
            for (std::size_t i = 0; i < spec.H; ++i) {
                const std::size_t up = (i + spec.H - 1) % spec.H, dn = (i + 1) % spec.H;
                for (std::size_t j = 0; j < spec.W; ++j) {
                    const std::size_t lf = (j + spec.W - 1) % spec.W, rt = (j + 1) % spec.W;
                    u(i, j) = -(phi(dn, j) - phi(up, j)) / 2.0;
                    v(i, j) = (phi(i, rt) - phi(i, lf)) / 2.0;
                }
            }
            st.fields["u"] = u;
            st.fields["v"] = v;
            seq.states.push_back(std::move(st));
            seq.annotations.push_back(std::move(ann));
        }
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

Tensor latitude_weights(const GridSpec& spec) {
    spec.validate();
    Tensor w = Tensor::zeros({spec.H});
    double mean = 0.0;
    for (std::size_t i = 0; i < spec.H; ++i) {
        w.v[i] = std::cos(spec.latitudes[i] * kDegToRad);
        mean += w.v[i];
    }
    mean /= static_cast<double>(spec.H);
    for (double& x : w.v) x /= mean;
    return w;
}

NormStats compute_norm_stats(const Dataset& dataset) {
    if (dataset.state_count() == 0) throw ContractError("compute_norm_stats: empty dataset");
    NormStats stats;
    for (const std::string& var : dataset.spec.variables) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& seq : dataset.sequences)
            for (const auto& st : seq.states)
                for (double x : st.fields.at(var).v) {
                    sum += x;
                    ++n;
                }
        const double mean = sum / static_cast<double>(n);
        double var_acc = 0.0;
        for (const auto& seq : dataset.sequences)
            for (const auto& st : seq.states)
                for (double x : st.fields.at(var).v) var_acc += (x - mean) * (x - mean);
        const double sd = std::max(std::sqrt(var_acc / static_cast<double>(n)), 1e-6);
        stats.by_var[var] = {mean, sd};
    }
    return stats;
}

static AtmosphericState apply_norm(const AtmosphericState& state, const NormStats& stats,
                                   bool forward) {
    AtmosphericState out;
    out.sample_id = state.sample_id;
    out.time_index = state.time_index;
    for (const auto& [var, field] : state.fields) {
        auto it = stats.by_var.find(var);
        if (it == stats.by_var.end()) throw ContractError("no normalization stats for variable " + var);
        const auto [mean, sd] = it->second;
        Tensor t = field;
        for (double& x : t.v) x = forward ? (x - mean) / sd : x * sd + mean;
        out.fields[var] = std::move(t);
    }
    return out;
}

AtmosphericState normalize_state(const AtmosphericState& state, const NormStats& stats) {
    return apply_norm(state, stats, true);
}

AtmosphericState denormalize_state(const AtmosphericState& state, const NormStats& stats) {
    return apply_norm(state, stats, false);
}

ClimatologyTable compute_climatology(const Dataset& dataset) {
    if (dataset.state_count() == 0) throw ContractError("compute_climatology: empty dataset");
    ClimatologyTable table;
    const double n = static_cast<double>(dataset.state_count());
    for (const std::string& var : dataset.spec.variables) {
        Tensor acc = Tensor::zeros({dataset.spec.H, dataset.spec.W});
        for (const auto& seq : dataset.sequences)
            for (const auto& st : seq.states) {
                const Tensor& f = st.fields.at(var);
                for (std::size_t i = 0; i < acc.size(); ++i) acc.v[i] += f.v[i];
            }
        for (double& x : acc.v) x /= n;
        table.means[var] = std::move(acc);
    }
    return table;
}

void write_grid_file(const std::string& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    std::ostringstream header;
    header << "AGCD-GRID 1 " << dataset.spec.H << " " << dataset.spec.W << " "
           << dataset.spec.variables.size() << " " << dataset.state_count() << " ";
    for (std::size_t i = 0; i < dataset.spec.variables.size(); ++i) {
        if (i) header << ",";
        header << dataset.spec.variables[i];
    }
    header << "\n";
    out << header.str();
    for (const auto& seq : dataset.sequences) {
        for (const auto& st : seq.states) {
            out << st.sample_id << "\n" << st.time_index << "\n";
            for (const std::string& var : dataset.spec.variables) {
                const Tensor& f = st.fields.at(var);
                out.write(reinterpret_cast<const char*>(f.v.data()),
                          static_cast<std::streamsize>(f.v.size() * sizeof(double)));
            }
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

Dataset read_grid_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string header;
    if (!std::getline(in, header)) throw FormatError("missing header line");
    std::istringstream hs(header);
    std::string magic, vars_csv;
    int version = 0;
    std::size_t h = 0, w = 0, nv = 0, n_states = 0;
    hs >> magic >> version >> h >> w >> nv >> n_states >> vars_csv;
    if (magic != "AGCD-GRID") throw FormatError("bad magic: " + magic);
    if (version != 1) throw FormatError("unsupported version");
    std::vector<std::string> vars;
    {
        std::istringstream vs(vars_csv);
        std::string tok;
        while (std::getline(vs, tok, ',')) vars.push_back(tok);
    }
    if (vars.size() != nv) throw FormatError("variable count does not match header");
    Dataset ds;
    if (n_states > 0 || nv > 0) {
        ds.spec = GridSpec::regular(h, w, vars);
    }
    Sequence* cur = nullptr;
    for (std::size_t s = 0; s < n_states; ++s) {
        AtmosphericState st;
        if (!std::getline(in, st.sample_id)) throw FormatError("truncated sample header");
        std::string ti_line;
        if (!std::getline(in, ti_line)) throw FormatError("truncated time index");
        st.time_index = std::stol(ti_line);
        for (const std::string& var : vars) {
            Tensor f = Tensor::zeros({h, w});
            in.read(reinterpret_cast<char*>(f.v.data()),
                    static_cast<std::streamsize>(f.v.size() * sizeof(double)));
            if (in.gcount() != static_cast<std::streamsize>(f.v.size() * sizeof(double))) {
                throw FormatError("truncated payload in " + path);
            }
            st.fields[var] = std::move(f);
        }
        if (!cur || cur->sample_id != st.sample_id) {
            ds.sequences.emplace_back();
            cur = &ds.sequences.back();
            cur->sample_id = st.sample_id;
        }
        cur->states.push_back(std::move(st));
    }
    return ds;
}

void write_annotations(const std::string& path, const Dataset& dataset) {
    nlohmann::json root = nlohmann::json::array();
    for (const auto& seq : dataset.sequences) {
        nlohmann::json js;
        js["sample_id"] = seq.sample_id;
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& ann : seq.annotations) {
            nlohmann::json step = nlohmann::json::array();
            for (const auto& b : ann) {
                step.push_back({{"variable", b.variable},
                                {"row", b.center_row},
                                {"col", b.center_col},
                                {"amplitude", b.amplitude},
                                {"sign", b.sign}});
            }
            steps.push_back(std::move(step));
        }
        js["steps"] = std::move(steps);
        root.push_back(std::move(js));
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << root.dump() << "\n";
}

void read_annotations(const std::string& path, Dataset& dataset) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    nlohmann::json root;
    in >> root;
    std::map<std::string, Sequence*> by_id;
    for (auto& seq : dataset.sequences) by_id[seq.sample_id] = &seq;
    for (const auto& js : root) {
        auto it = by_id.find(js.at("sample_id").get<std::string>());
        if (it == by_id.end()) continue;
        Sequence& seq = *it->second;
        seq.annotations.clear();
        for (const auto& step : js.at("steps")) {
            OracleAnnotation ann;
            for (const auto& b : step) {
                ann.push_back(BlobTruth{b.at("variable").get<std::string>(),
                                        b.at("row").get<double>(), b.at("col").get<double>(),
                                        b.at("amplitude").get<double>(), b.at("sign").get<int>()});
            }
            seq.annotations.push_back(std::move(ann));
        }
    }
}

}  // namespace agcd::fieldgrid
