#include "agcd/numcore.hpp"

#include <algorithm>
#include <cmath>

namespace agcd::num {

static void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw ShapeError(std::string(what) + " must be 2-D, got " + t.shape_str());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul lhs");
    require_matrix(b, "matmul rhs");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    // i-k-j order: contiguous inner loop, ascending-k summation per element.
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = &a.v[i * k];
        double* oi = &out.v[i * n];
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            const double* bk = &b.v[kk * n];
            for (std::size_t j = 0; j < n; ++j) oi[j] += aik * bk[j];
        }
    }
    return out;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& d_out,
                     Tensor& d_a, Tensor& d_b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (d_out.rows() != m || d_out.cols() != n) {
        throw ShapeError("matmul_backward upstream shape " + d_out.shape_str());
    }
    if (!d_a.same_shape(a)) d_a = Tensor::zeros(a.shape);
    if (!d_b.same_shape(b)) d_b = Tensor::zeros(b.shape);
    // dA = dOut * B^T
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            double s = 0.0;
            const double* doi = &d_out.v[i * n];
            const double* bk = &b.v[kk * n];
            for (std::size_t j = 0; j < n; ++j) s += doi[j] * bk[j];
            d_a.v[i * k + kk] += s;
        }
    }
    // dB = A^T * dOut
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = &a.v[i * k];
        const double* doi = &d_out.v[i * n];
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            double* dbk = &d_b.v[kk * n];
            for (std::size_t j = 0; j < n; ++j) dbk[j] += aik * doi[j];
        }
    }
}

Tensor transpose(const Tensor& m) {
    require_matrix(m, "transpose input");
    Tensor out = Tensor::zeros({m.cols(), m.rows()});
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

Tensor softmax_rows(const Tensor& m) {
    require_matrix(m, "softmax input");
    if (!m.all_finite()) throw NumericError("softmax_rows: non-finite input");
    Tensor out = Tensor::zeros(m.shape);
    const std::size_t r = m.rows(), c = m.cols();
    for (std::size_t i = 0; i < r; ++i) {
        double mx = m(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, m(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double e = std::exp(m(i, j) - mx);
            out(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < c; ++j) out(i, j) /= sum;
    }
    return out;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
    if (!y.same_shape(dy)) throw ShapeError("softmax_rows_backward shape mismatch");
    Tensor dx = Tensor::zeros(y.shape);
    const std::size_t r = y.rows(), c = y.cols();
    for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += dy(i, j) * y(i, j);
        for (std::size_t j = 0; j < c; ++j) dx(i, j) = y(i, j) * (dy(i, j) - dot);
    }
    return dx;
}

Tensor avg_pool_grid(const Tensor& g, std::size_t s) {
    if (g.rank() != 3) throw ShapeError("avg_pool_grid expects {h,w,d}, got " + g.shape_str());
    const std::size_t h = g.shape[0], w = g.shape[1], d = g.shape[2];
    if (s == 0 || h % s != 0 || w % s != 0) {
        throw ShapeError("pool size " + std::to_string(s) + " does not divide grid " + g.shape_str());
    }
    const std::size_t ho = h / s, wo = w / s;
    Tensor out = Tensor::zeros({ho, wo, d});
    const double inv = 1.0 / static_cast<double>(s * s);
    for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j)
            for (std::size_t c = 0; c < d; ++c) {
                double sum = 0.0;
                for (std::size_t di = 0; di < s; ++di)
                    for (std::size_t dj = 0; dj < s; ++dj)
                        sum += g(i * s + di, j * s + dj, c);
                out(i, j, c) = sum * inv;
            }
    return out;
}

Tensor avg_pool_grid_backward(const Tensor& d_out, std::size_t s) {
    if (d_out.rank() != 3) throw ShapeError("avg_pool_grid_backward expects {h,w,d}");
    const std::size_t ho = d_out.shape[0], wo = d_out.shape[1], d = d_out.shape[2];
    Tensor dg = Tensor::zeros({ho * s, wo * s, d});
    const double inv = 1.0 / static_cast<double>(s * s);
    for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j)
            for (std::size_t c = 0; c < d; ++c) {
                const double g = d_out(i, j, c) * inv;
                for (std::size_t di = 0; di < s; ++di)
                    for (std::size_t dj = 0; dj < s; ++dj)
                        dg(i * s + di, j * s + dj, c) += g;
            }
    return dg;
}

Tensor broadcast_scale(const Tensor& m, const Tensor& w, Axis axis) {
    require_matrix(m, "broadcast_scale input");
    const std::size_t r = m.rows(), c = m.cols();
    const std::size_t expect = (axis == Axis::Rows) ? r : c;
    if (w.size() != expect) {
        throw ShapeError("broadcast_scale weight length " + std::to_string(w.size()) +
                         " does not match axis extent " + std::to_string(expect));
    }
    Tensor out = Tensor::zeros(m.shape);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out(i, j) = m(i, j) * (axis == Axis::Rows ? w.v[i] : w.v[j]);
    return out;
}

void broadcast_scale_backward(const Tensor& m, const Tensor& w, Axis axis,
                              const Tensor& d_out, Tensor& d_m, Tensor& d_w) {
    if (!d_out.same_shape(m)) throw ShapeError("broadcast_scale_backward shape mismatch");
    if (!d_m.same_shape(m)) d_m = Tensor::zeros(m.shape);
    if (d_w.size() != w.size()) d_w = Tensor::zeros(w.shape);
    const std::size_t r = m.rows(), c = m.cols();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const std::size_t wi = (axis == Axis::Rows) ? i : j;
            d_m(i, j) += d_out(i, j) * w.v[wi];
            d_w.v[wi] += d_out(i, j) * m(i, j);
        }
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += b.v[i];
    return out;
}

Tensor add_row_broadcast(const Tensor& m, const Tensor& b) {
    require_matrix(m, "add_row_broadcast input");
    if (b.size() != m.cols()) throw ShapeError("bias length does not match column count");
    Tensor out = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) += b.v[j];
    return out;
}

static double gelu_scalar(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

static double gelu_grad_scalar(double x) {
    const double phi = std::exp(-0.5 * x * x) * 0.39894228040143267794;  // N(0,1) pdf
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
    return cdf + x * phi;
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.v) v = gelu_scalar(v);
    return out;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
    if (!x.same_shape(dy)) throw ShapeError("gelu_backward shape mismatch");
    Tensor dx = x;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] = gelu_grad_scalar(x.v[i]) * dy.v[i];
    return dx;
}

static constexpr double kLnEps = 1e-8;

Tensor layernorm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      LayerNormCache* cache) {
    require_matrix(x, "layernorm input");
    const std::size_t r = x.rows(), c = x.cols();
    if (gamma.size() != c || beta.size() != c) throw ShapeError("layernorm gain/bias length mismatch");
    Tensor out = Tensor::zeros(x.shape);
    if (cache) {
        cache->x = x;
        cache->mean.assign(r, 0.0);
        cache->rstd.assign(r, 0.0);
    }
    for (std::size_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += x(i, j);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = x(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        if (cache) {
            cache->mean[i] = mean;
            cache->rstd[i] = rstd;
        }
        for (std::size_t j = 0; j < c; ++j)
            out(i, j) = (x(i, j) - mean) * rstd * gamma.v[j] + beta.v[j];
    }
    return out;
}

Tensor layernorm_rows_backward(const LayerNormCache& cache, const Tensor& gamma,
                               const Tensor& dy, Tensor& d_gamma, Tensor& d_beta) {
    const Tensor& x = cache.x;
    const std::size_t r = x.rows(), c = x.cols();
    if (d_gamma.size() != c) d_gamma = Tensor::zeros(gamma.shape);
    if (d_beta.size() != c) d_beta = Tensor::zeros(gamma.shape);
    Tensor dx = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < r; ++i) {
        const double mean = cache.mean[i];
        const double rstd = cache.rstd[i];
        double sum_dyh = 0.0, sum_dyh_xhat = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double xhat = (x(i, j) - mean) * rstd;
            const double dyh = dy(i, j) * gamma.v[j];
            d_gamma.v[j] += dy(i, j) * xhat;
            d_beta.v[j] += dy(i, j);
            sum_dyh += dyh;
            sum_dyh_xhat += dyh * xhat;
        }
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) {
            const double xhat = (x(i, j) - mean) * rstd;
            const double dyh = dy(i, j) * gamma.v[j];
            dx(i, j) = rstd * (dyh - inv_c * sum_dyh - xhat * inv_c * sum_dyh_xhat);
        }
    }
    return dx;
}

Tensor& ParamStore::add(const std::string& name, Tensor t, bool trainable) {
    if (entries_.count(name)) throw ContractError("duplicate parameter name: " + name);
    Param p;
    p.grad = Tensor::zeros(t.shape);
    p.value = std::move(t);
    p.trainable = trainable;
    return entries_.emplace(name, std::move(p)).first->second.value;
}

Param& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

bool ParamStore::contains(const std::string& name) const { return entries_.count(name) != 0; }

void ParamStore::zero_grads() {
    for (auto& [name, p] : entries_) std::fill(p.grad.v.begin(), p.grad.v.end(), 0.0);
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) n += p.value.size();
    return n;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, p] : entries_) out.push_back(name);
    return out;
}

void adam_step(ParamStore& params, AdamState& state, const AdamConfig& cfg) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : params.entries()) {
        if (!p.trainable) continue;
        if (!p.grad.same_shape(p.value)) {
            throw ContractError("gradient shape mismatch for parameter " + name);
        }
        auto [it, inserted] = state.moments.try_emplace(
            name, Tensor::zeros(p.value.shape), Tensor::zeros(p.value.shape));
        Tensor& m = it->second.first;
        Tensor& vm = it->second.second;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.v[i];
            m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * g;
            vm.v[i] = cfg.beta2 * vm.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m.v[i] / bc1;
            const double vhat = vm.v[i] / bc2;
            p.value.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           ParamStore& params, double eps, double tol) {
    if (eps <= 0.0) throw ContractError("grad_check eps must be positive");
    GradCheckReport report;
    report.tolerance = tol;
    report.pass = true;
    for (auto& [name, p] : params.entries()) {
        if (!p.trainable) continue;
        double worst = 0.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value.v[i];
            p.value.v[i] = saved + eps;
            const double lp = loss_fn();
            p.value.v[i] = saved - eps;
            const double lm = loss_fn();
            p.value.v[i] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm)) {
                throw NumericError("grad_check: non-finite loss while perturbing " + name);
            }
            const double numeric = (lp - lm) / (2.0 * eps);
            const double analytic = p.grad.v[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic - numeric) / denom;
            worst = std::max(worst, rel);
        }
        report.max_rel_error[name] = worst;
        if (worst > report.worst) {
            report.worst = worst;
            report.worst_param = name;
        }
        if (worst > tol) report.pass = false;
    }
    return report;
}

}  // namespace agcd::num
