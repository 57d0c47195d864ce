#include "mltn/mps.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mltn/errors.hpp"
#include "mltn/flops.hpp"

namespace mltn {

namespace {

constexpr std::size_t kFullTensorCap = std::size_t{1} << 20;

// Contract the feature vector of one site into its tensor: M = sum_i x_i A[i].
// The feature axis is axis 0 by convention, so M has the site tensor's shape
// with the leading extent dropped.
Tensor form_site_matrix(const Tensor& site_tensor, const double* x,
                        std::size_t d) {
    const std::size_t block = site_tensor.size() / d;
    std::vector<std::size_t> shape(site_tensor.shape().begin() + 1,
                                   site_tensor.shape().end());
    Tensor m(shape);
    const double* a = site_tensor.data();
    double* out = m.data();
    for (std::size_t i = 0; i < d; ++i) {
        const double xi = x[i];
        const double* slice = a + i * block;
        for (std::size_t k = 0; k < block; ++k) out[k] += xi * slice[k];
    }
    flops::add(site_tensor.size());
    return m;
}

// v[b] * M[b,cols] -> [cols]
Tensor vec_mat(const Tensor& v, const Tensor& m) {
    const std::size_t rows = m.shape()[0];
    const std::size_t cols = m.shape()[1];
    Tensor out({cols});
    const double* pv = v.data();
    const double* pm = m.data();
    double* po = out.data();
    for (std::size_t a = 0; a < rows; ++a) {
        const double va = pv[a];
        const double* row = pm + a * cols;
        for (std::size_t b = 0; b < cols; ++b) po[b] += va * row[b];
    }
    flops::add(static_cast<std::uint64_t>(rows) * cols);
    return out;
}

// M[rows,b] * v[b] -> [rows]
Tensor mat_vec(const Tensor& m, const Tensor& v) {
    const std::size_t rows = m.shape()[0];
    const std::size_t cols = m.shape()[1];
    Tensor out({rows});
    const double* pv = v.data();
    const double* pm = m.data();
    double* po = out.data();
    for (std::size_t a = 0; a < rows; ++a) {
        const double* row = pm + a * cols;
        double acc = 0.0;
        for (std::size_t b = 0; b < cols; ++b) acc += row[b] * pv[b];
        po[a] = acc;
    }
    flops::add(static_cast<std::uint64_t>(rows) * cols);
    return out;
}

// Elementwise division; unlike multiplying by the reciprocal this stays
// correct when s is subnormal (1/s would overflow).
void divide_by(Tensor& t, double s) {
    for (double& v : t.values()) v /= s;
}

// Divides t by its max-abs entry and returns log of the factor. Throws when
// the partial is identically zero (the scale factor is undefined). During an
// instrumented counting pass values are disposable, so degenerate partials
// pass through unscaled instead of aborting the count.
double normalize_partial(Tensor& t, const char* which, std::size_t site) {
    const double s = t.max_abs();
    if (!std::isfinite(s)) return 0.0;  // left for the caller's finite checks
    if (s == 0.0) {
        if (flops::enabled()) return 0.0;
        throw NumericalError(std::string(which) + " partial product at site " +
                             std::to_string(site) +
                             " is exactly zero; scale factor undefined");
    }
    divide_by(t, s);
    return std::log(s);
}

// Backward-sweep variant: zero vectors stay zero instead of failing, so a
// zero upstream gradient propagates to exact zeros.
double normalize_lenient(Tensor& t) {
    const double s = t.max_abs();
    if (s == 0.0 || !std::isfinite(s)) return 0.0;
    divide_by(t, s);
    return std::log(s);
}

}  // namespace

MpsBlock MpsBlock::with_shape(std::size_t n_sites, std::size_t feature_dim,
                              std::size_t bond_dim, std::size_t output_dim,
                              std::size_t output_site) {
    MpsBlock b;
    b.n_sites = n_sites;
    b.feature_dim = feature_dim;
    b.bond_dim = bond_dim;
    b.output_dim = output_dim;
    b.output_site = output_site;
    b.site_tensors.reserve(n_sites);
    for (std::size_t j = 0; j < n_sites; ++j) {
        const bool out = j == output_site;
        const bool edge = j == 0 || j + 1 == n_sites;
        std::vector<std::size_t> shape;
        shape.push_back(feature_dim);
        shape.push_back(bond_dim);
        if (!edge) shape.push_back(bond_dim);
        if (out) shape.push_back(output_dim);
        b.site_tensors.emplace_back(std::move(shape));
    }
    b.validate();
    return b;
}

MpsBlock MpsBlock::random(std::size_t n_sites, std::size_t feature_dim,
                          std::size_t bond_dim, std::size_t output_dim, Rng& rng,
                          double noise_std, double identity_scale) {
    return random_at(n_sites, feature_dim, bond_dim, output_dim, n_sites / 2,
                     rng, noise_std, identity_scale);
}

MpsBlock MpsBlock::random_at(std::size_t n_sites, std::size_t feature_dim,
                             std::size_t bond_dim, std::size_t output_dim,
                             std::size_t output_site, Rng& rng, double noise_std,
                             double identity_scale) {
    MpsBlock b = with_shape(n_sites, feature_dim, bond_dim, output_dim,
                            output_site);
    const std::size_t d = feature_dim;
    const std::size_t bd = bond_dim;
    for (std::size_t j = 0; j < n_sites; ++j) {
        Tensor& a = b.site_tensors[j];
        const bool out = j == output_site;
        const bool edge = b.is_boundary(j);
        for (std::size_t i = 0; i < d; ++i) {
            if (!edge && !out) {
                for (std::size_t p = 0; p < bd; ++p)
                    for (std::size_t q = 0; q < bd; ++q)
                        a.at({i, p, q}) = (p == q ? identity_scale : 0.0) +
                                          rng.normal(0.0, noise_std);
            } else if (!edge && out) {
                for (std::size_t p = 0; p < bd; ++p)
                    for (std::size_t q = 0; q < bd; ++q)
                        for (std::size_t m = 0; m < b.output_dim; ++m)
                            a.at({i, p, q, m}) = (p == q ? identity_scale : 0.0) +
                                                 rng.normal(0.0, noise_std);
            } else if (edge && !out) {
                for (std::size_t p = 0; p < bd; ++p)
                    a.at({i, p}) = (p == 0 ? identity_scale : 0.0) +
                                   rng.normal(0.0, noise_std);
            } else {
                for (std::size_t p = 0; p < bd; ++p)
                    for (std::size_t m = 0; m < b.output_dim; ++m)
                        a.at({i, p, m}) = (p == 0 ? identity_scale : 0.0) +
                                          rng.normal(0.0, noise_std);
            }
        }
    }
    return b;
}

void MpsBlock::validate() const {
    if (n_sites < 2) throw ConfigError("MPS needs at least 2 sites");
    if (feature_dim < 1 || bond_dim < 1 || output_dim < 1)
        throw ConfigError("MPS dimensions must be >= 1");
    if (output_site >= n_sites)
        throw ConfigError("output site " + std::to_string(output_site) +
                          " out of range for " + std::to_string(n_sites) +
                          " sites");
    if (site_tensors.size() != n_sites)
        throw ConfigError("expected " + std::to_string(n_sites) +
                          " site tensors, have " +
                          std::to_string(site_tensors.size()));
    for (std::size_t j = 0; j < n_sites; ++j) {
        const bool out = j == output_site;
        const bool edge = is_boundary(j);
        std::vector<std::size_t> want{feature_dim, bond_dim};
        if (!edge) want.push_back(bond_dim);
        if (out) want.push_back(output_dim);
        if (site_tensors[j].shape() != want)
            throw ConfigError("site tensor " + std::to_string(j) +
                              " has unexpected shape");
    }
}

std::size_t MpsBlock::param_count() const {
    std::size_t n = 0;
    for (const Tensor& t : site_tensors) n += t.size();
    return n;
}

std::size_t mps_param_count(const MpsBlock& block) { return block.param_count(); }

Tensor mps_forward(const MpsBlock& block, const Tensor& sites, MpsCache* cache) {
    block.validate();
    const std::size_t S = block.n_sites;
    const std::size_t d = block.feature_dim;
    const std::size_t bd = block.bond_dim;
    const std::size_t m = block.output_dim;
    const std::size_t c = block.output_site;
    if (sites.rank() != 2 || sites.shape()[0] != S || sites.shape()[1] != d)
        throw ShapeMismatch("mps_forward expects sites of shape [" +
                            std::to_string(S) + "," + std::to_string(d) + "]");

    std::vector<Tensor> mats;
    mats.reserve(S);
    for (std::size_t j = 0; j < S; ++j)
        mats.push_back(form_site_matrix(block.site_tensors[j],
                                        sites.data() + j * d, d));

    // Left partials l[j] = M_0 ... M_j for j < c, stabilised.
    std::vector<Tensor> left;
    std::vector<double> left_log;
    double lam = 0.0;
    if (c > 0) {
        Tensor cur = mats[0];  // [bd]
        if (block.stabilized) lam += normalize_partial(cur, "left", 0);
        left.push_back(cur);
        left_log.push_back(lam);
        for (std::size_t j = 1; j < c; ++j) {
            cur = vec_mat(cur, mats[j]);
            if (block.stabilized) lam += normalize_partial(cur, "left", j);
            left.push_back(cur);
            left_log.push_back(lam);
        }
    }

    // Right partials r[j] = M_j ... M_{S-1} for j > c, stored back to front.
    std::vector<Tensor> right(S);
    std::vector<double> right_log(S, 0.0);
    double rho = 0.0;
    if (c + 1 < S) {
        Tensor cur = mats[S - 1];  // [bd]
        if (block.stabilized) rho += normalize_partial(cur, "right", S - 1);
        right[S - 1] = cur;
        right_log[S - 1] = rho;
        for (std::size_t j = S - 2; j > c; --j) {
            cur = mat_vec(mats[j], cur);
            if (block.stabilized) rho += normalize_partial(cur, "right", j);
            right[j] = cur;
            right_log[j] = rho;
        }
    }

    // Combine around the output site.
    Tensor logits({m});
    double total_log = 0.0;
    const Tensor& mc = mats[c];
    if (c == 0) {
        // mc is [bd, m]; contract with r[1].
        const Tensor& r = right[1];
        for (std::size_t b = 0; b < bd; ++b)
            for (std::size_t k = 0; k < m; ++k)
                logits[k] += mc[b * m + k] * r[b];
        flops::add(static_cast<std::uint64_t>(bd) * m);
        total_log = right_log[1];
    } else if (c + 1 == S) {
        const Tensor& l = left[c - 1];
        for (std::size_t a = 0; a < bd; ++a)
            for (std::size_t k = 0; k < m; ++k)
                logits[k] += l[a] * mc[a * m + k];
        flops::add(static_cast<std::uint64_t>(bd) * m);
        total_log = left_log[c - 1];
    } else {
        // mc is [bd, bd, m].
        const Tensor& l = left[c - 1];
        const Tensor& r = right[c + 1];
        Tensor t({bd, m});
        for (std::size_t a = 0; a < bd; ++a) {
            const double la = l[a];
            const double* slab = mc.data() + a * bd * m;
            for (std::size_t b = 0; b < bd; ++b)
                for (std::size_t k = 0; k < m; ++k)
                    t[b * m + k] += la * slab[b * m + k];
        }
        for (std::size_t b = 0; b < bd; ++b)
            for (std::size_t k = 0; k < m; ++k) logits[k] += t[b * m + k] * r[b];
        flops::add(static_cast<std::uint64_t>(bd) * bd * m +
                   static_cast<std::uint64_t>(bd) * m);
        total_log = left_log[c - 1] + right_log[c + 1];
    }
    if (block.stabilized && total_log != 0.0) logits.scale(std::exp(total_log));

    if (cache) {
        cache->sites = sites;
        cache->site_matrices = std::move(mats);
        cache->left = std::move(left);
        cache->left_log = std::move(left_log);
        cache->right = std::move(right);
        cache->right_log = std::move(right_log);
        cache->log_scale = total_log;
    }
    return logits;
}

MpsGrads mps_backward(const MpsBlock& block, const MpsCache& cache,
                      const Tensor& grad_logits, bool want_input_grad) {
    const std::size_t S = block.n_sites;
    const std::size_t d = block.feature_dim;
    const std::size_t bd = block.bond_dim;
    const std::size_t m = block.output_dim;
    const std::size_t c = block.output_site;
    if (cache.site_matrices.size() != S || cache.sites.rank() != 2 ||
        cache.sites.shape()[0] != S || cache.sites.shape()[1] != d)
        throw CacheMismatch("cache does not match this block");
    if (grad_logits.rank() != 1 || grad_logits.shape()[0] != m)
        throw CacheMismatch("grad_logits must have shape [" + std::to_string(m) +
                            "]");

    const Tensor& mc = cache.site_matrices[c];

    // Gradient scale factors, bounded by the block's backward log cap. The
    // upstream gradient's own magnitude is carried in log space as well so
    // the cap sees the full scale of each factor.
    const double log_cap = block.grad_log_cap;
    auto grad_scale = [log_cap](double logsum) {
        return std::exp(std::min(logsum, log_cap));
    };
    const double g_max = grad_logits.max_abs();
    const bool g_zero = g_max == 0.0 || !std::isfinite(g_max);
    const double log_g = g_zero ? 0.0 : std::log(g_max);
    Tensor gbar = grad_logits;
    if (!g_zero) divide_by(gbar, g_max);
    const double* g = gbar.data();

    // Fold the upstream gradient into the output-site matrix.
    Tensor folded;  // [bd,bd] interior, [bd] at a boundary
    if (c == 0 || c + 1 == S) {
        folded = Tensor({bd});
        for (std::size_t a = 0; a < bd; ++a) {
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) acc += mc[a * m + k] * g[k];
            folded[a] = acc;
        }
    } else {
        folded = Tensor({bd, bd});
        for (std::size_t a = 0; a < bd; ++a)
            for (std::size_t b = 0; b < bd; ++b) {
                double acc = 0.0;
                const double* row = mc.data() + (a * bd + b) * m;
                for (std::size_t k = 0; k < m; ++k) acc += row[k] * g[k];
                folded[a * bd + b] = acc;
            }
    }

    // u[j]: product of sites j..S-1 with the gradient folded in, for j <= c.
    // Consumed by the gradients of sites left of the output; skipped at c=0.
    std::vector<Tensor> u(c + 1);
    std::vector<double> u_log(c + 1, 0.0);
    if (c > 0) {
        if (c + 1 == S) {
            u[c] = folded;
            u_log[c] = log_g;
        } else {
            u[c] = mat_vec(folded, cache.right[c + 1]);
            u_log[c] = cache.right_log[c + 1] + log_g;
        }
        if (block.stabilized) u_log[c] += normalize_lenient(u[c]);
        for (std::size_t j = c; j-- > 1;) {
            u[j] = mat_vec(cache.site_matrices[j], u[j + 1]);
            u_log[j] = u_log[j + 1];
            if (block.stabilized) u_log[j] += normalize_lenient(u[j]);
        }
    }

    // w[j]: product of sites 0..j with the gradient folded in, for j >= c.
    std::vector<Tensor> w(S);
    std::vector<double> w_log(S, 0.0);
    if (c + 1 < S) {
        if (c == 0) {
            w[0] = folded;
            w_log[0] = log_g;
        } else {
            w[c] = vec_mat(cache.left[c - 1], folded);
            w_log[c] = cache.left_log[c - 1] + log_g;
        }
        if (block.stabilized) w_log[c] += normalize_lenient(w[c]);
        for (std::size_t j = c + 1; j + 1 < S; ++j) {
            w[j] = vec_mat(w[j - 1], cache.site_matrices[j]);
            w_log[j] = w_log[j - 1];
            if (block.stabilized) w_log[j] += normalize_lenient(w[j]);
        }
    }

    MpsGrads grads;
    grads.site_grads.reserve(S);
    if (want_input_grad) grads.input_grad = Tensor({S, d});

    for (std::size_t j = 0; j < S; ++j) {
        const Tensor& a = block.site_tensors[j];
        const std::size_t block_sz = a.size() / d;
        Tensor gm(std::vector<std::size_t>(a.shape().begin() + 1,
                                           a.shape().end()));
        if (j < c) {
            if (j == 0) {
                const double f = grad_scale(u_log[1]);
                for (std::size_t b = 0; b < bd; ++b) gm[b] = u[1][b] * f;
            } else {
                const Tensor& l = cache.left[j - 1];
                const double f = grad_scale(cache.left_log[j - 1] + u_log[j + 1]);
                for (std::size_t p = 0; p < bd; ++p)
                    for (std::size_t q = 0; q < bd; ++q)
                        gm[p * bd + q] = l[p] * u[j + 1][q] * f;
            }
        } else if (j == c) {
            if (c == 0) {
                const Tensor& r = cache.right[1];
                const double f = grad_scale(cache.right_log[1] + log_g);
                for (std::size_t b = 0; b < bd; ++b)
                    for (std::size_t k = 0; k < m; ++k)
                        gm[b * m + k] = r[b] * g[k] * f;
            } else if (c + 1 == S) {
                const Tensor& l = cache.left[c - 1];
                const double f = grad_scale(cache.left_log[c - 1] + log_g);
                for (std::size_t p = 0; p < bd; ++p)
                    for (std::size_t k = 0; k < m; ++k)
                        gm[p * m + k] = l[p] * g[k] * f;
            } else {
                const Tensor& l = cache.left[c - 1];
                const Tensor& r = cache.right[c + 1];
                const double f = grad_scale(cache.left_log[c - 1] +
                                            cache.right_log[c + 1] + log_g);
                for (std::size_t p = 0; p < bd; ++p)
                    for (std::size_t q = 0; q < bd; ++q)
                        for (std::size_t k = 0; k < m; ++k)
                            gm[(p * bd + q) * m + k] = l[p] * r[q] * g[k] * f;
            }
        } else {
            if (j + 1 == S) {
                const double f = grad_scale(w_log[j - 1]);
                for (std::size_t p = 0; p < bd; ++p) gm[p] = w[j - 1][p] * f;
            } else {
                const Tensor& r = cache.right[j + 1];
                const double f = grad_scale(w_log[j - 1] + cache.right_log[j + 1]);
                for (std::size_t p = 0; p < bd; ++p)
                    for (std::size_t q = 0; q < bd; ++q)
                        gm[p * bd + q] = w[j - 1][p] * r[q] * f;
            }
        }

        // d(site tensor) = x outer d(site matrix); d(x) = <d(site matrix), A>.
        Tensor ga(a.shape());
        const double* px = cache.sites.data() + j * d;
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = px[i];
            const double* slice = a.data() + i * block_sz;
            double* gslice = ga.data() + i * block_sz;
            double acc = 0.0;
            for (std::size_t k = 0; k < block_sz; ++k) {
                gslice[k] = xi * gm[k];
                acc += gm[k] * slice[k];
            }
            if (want_input_grad) grads.input_grad[j * d + i] = acc;
        }
        grads.site_grads.push_back(std::move(ga));
    }
    return grads;
}

Tensor mps_to_full_tensor(const MpsBlock& block) {
    block.validate();
    const std::size_t S = block.n_sites;
    const std::size_t d = block.feature_dim;
    const std::size_t bd = block.bond_dim;
    const std::size_t m = block.output_dim;
    const std::size_t c = block.output_site;

    double cells = static_cast<double>(m);
    for (std::size_t j = 0; j < S; ++j) cells *= static_cast<double>(d);
    if (cells > static_cast<double>(kFullTensorCap))
        throw SizeLimit("full tensor would hold " + std::to_string(cells) +
                        " entries; cap is " + std::to_string(kFullTensorCap));

    std::vector<std::size_t> shape(S, d);
    shape.push_back(m);
    Tensor out(shape);

    // Depth-first sweep over feature index tuples, carrying the partial chain
    // product: a [bd] vector before the output site, an m-by-bd matrix after.
    std::vector<double> state;
    std::vector<std::size_t> idx(S, 0);

    auto recurse = [&](auto&& self, std::size_t j, std::size_t flat,
                       const std::vector<double>& st) -> void {
        if (j == S) {
            // st holds the final m values.
            for (std::size_t k = 0; k < m; ++k) out[flat * m + k] = st[k];
            return;
        }
        const Tensor& a = block.site_tensors[j];
        const bool outp = j == c;
        const std::size_t slice = a.size() / d;
        for (std::size_t i = 0; i < d; ++i) {
            const double* pa = a.data() + i * slice;
            std::vector<double> next;
            if (j == 0) {
                if (outp) {
                    // [bd, m] -> state [m, bd]
                    next.assign(m * bd, 0.0);
                    for (std::size_t b = 0; b < bd; ++b)
                        for (std::size_t k = 0; k < m; ++k)
                            next[k * bd + b] = pa[b * m + k];
                } else {
                    next.assign(pa, pa + bd);
                }
            } else if (j + 1 == S) {
                if (outp) {
                    // st [bd] x pa [bd, m] -> [m]
                    next.assign(m, 0.0);
                    for (std::size_t b = 0; b < bd; ++b)
                        for (std::size_t k = 0; k < m; ++k)
                            next[k] += st[b] * pa[b * m + k];
                } else if (j > c) {
                    // st [m, bd] x pa [bd] -> [m]
                    next.assign(m, 0.0);
                    for (std::size_t k = 0; k < m; ++k)
                        for (std::size_t b = 0; b < bd; ++b)
                            next[k] += st[k * bd + b] * pa[b];
                }
            } else if (outp) {
                // st [bd] x pa [bd, bd, m] -> [m, bd]
                next.assign(m * bd, 0.0);
                for (std::size_t p = 0; p < bd; ++p)
                    for (std::size_t q = 0; q < bd; ++q)
                        for (std::size_t k = 0; k < m; ++k)
                            next[k * bd + q] += st[p] * pa[(p * bd + q) * m + k];
            } else if (j < c) {
                // st [bd] x pa [bd, bd] -> [bd]
                next.assign(bd, 0.0);
                for (std::size_t p = 0; p < bd; ++p)
                    for (std::size_t q = 0; q < bd; ++q)
                        next[q] += st[p] * pa[p * bd + q];
            } else {
                // st [m, bd] x pa [bd, bd] -> [m, bd]
                next.assign(m * bd, 0.0);
                for (std::size_t k = 0; k < m; ++k)
                    for (std::size_t p = 0; p < bd; ++p) {
                        const double sv = st[k * bd + p];
                        for (std::size_t q = 0; q < bd; ++q)
                            next[k * bd + q] += sv * pa[p * bd + q];
                    }
            }
            self(self, j + 1, flat * d + i, next);
        }
    };
    recurse(recurse, 0, 0, state);
    return out;
}

Tensor joint_feature_map_oracle(const std::vector<Tensor>& site_vectors) {
    if (site_vectors.empty())
        throw ShapeMismatch("joint feature map needs at least one vector");
    double cells = 1.0;
    for (const Tensor& v : site_vectors) {
        if (v.rank() != 1)
            throw ShapeMismatch("joint feature map expects rank-1 vectors");
        cells *= static_cast<double>(v.size());
    }
    if (cells > static_cast<double>(kFullTensorCap))
        throw SizeLimit("joint feature tensor would hold " +
                        std::to_string(cells) + " entries; cap is " +
                        std::to_string(kFullTensorCap));
    Tensor out = site_vectors.front();
    for (std::size_t j = 1; j < site_vectors.size(); ++j)
        out = outer(out, site_vectors[j]);
    return out;
}

}  // namespace mltn
