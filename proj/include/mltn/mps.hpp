#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "mltn/rng.hpp"
#include "mltn/tensor.hpp"

namespace mltn {

// Matrix product state over S sites with open boundaries. Site tensors:
//   boundary            [d, b]
//   interior            [d, b, b]
//   output, interior    [d, b, b, m]
//   output, boundary    [d, b, m]
// Exactly one site (output_site) carries the output extent m. Contracting a
// feature vector into each site yields per-site matrices whose left-to-right
// product is the block's m-vector response.
struct MpsBlock {
    std::size_t n_sites = 0;      // S >= 2
    std::size_t feature_dim = 0;  // d >= 1
    std::size_t bond_dim = 0;     // b >= 1
    std::size_t output_dim = 0;   // m >= 1
    std::size_t output_site = 0;  // c in [0, S)
    std::vector<Tensor> site_tensors;
    bool stabilized = true;  // log-scale normalisation of running products

    // Upper bound on the log-scale factors re-applied in the backward pass.
    // Near a site whose contracted matrix approaches zero, the rest-of-chain
    // product (and with it the true gradient) grows without bound; a finite
    // cap keeps such gradients representable so that norm clipping can do
    // its job. Infinity leaves gradients exact and lets overflow surface.
    double grad_log_cap = std::numeric_limits<double>::infinity();

    // Zero-initialised block with the conventional shapes.
    static MpsBlock with_shape(std::size_t n_sites, std::size_t feature_dim,
                               std::size_t bond_dim, std::size_t output_dim,
                               std::size_t output_site);

    // identity * identity_scale + N(0, noise_std) on every bond-by-bond
    // slice; output slices broadcast the same pattern over m. Boundary sites
    // get the matching first-row / first-column pattern.
    static MpsBlock random(std::size_t n_sites, std::size_t feature_dim,
                           std::size_t bond_dim, std::size_t output_dim, Rng& rng,
                           double noise_std = 1e-2, double identity_scale = 1.0);

    static MpsBlock random_at(std::size_t n_sites, std::size_t feature_dim,
                              std::size_t bond_dim, std::size_t output_dim,
                              std::size_t output_site, Rng& rng,
                              double noise_std = 1e-2,
                              double identity_scale = 1.0);

    void validate() const;
    std::size_t param_count() const;

    bool is_boundary(std::size_t site) const {
        return site == 0 || site + 1 == n_sites;
    }
};

// Everything mps_backward needs from the forward sweep: per-site contracted
// matrices, the stabilised left/right partial products with their
// accumulated log factors, and the input features themselves.
struct MpsCache {
    Tensor sites;                        // [S, d] copy of the input
    std::vector<Tensor> site_matrices;   // M_j, shapes per site role
    std::vector<Tensor> left;            // left[j] covers sites 0..j, j < c
    std::vector<double> left_log;
    std::vector<Tensor> right;           // right[j] covers sites j..S-1, j > c
    std::vector<double> right_log;
    double log_scale = 0.0;              // total re-applied factor
};

struct MpsGrads {
    std::vector<Tensor> site_grads;  // gradient per site tensor
    Tensor input_grad;               // [S, d]; empty unless requested
};

// Contracts the block against one sample of site features [S, d]. Running
// products are divided by their max-abs entry with the log factors
// accumulated and re-applied at the end (when block.stabilized). Throws
// NumericalError if a stabilised partial is exactly zero.
Tensor mps_forward(const MpsBlock& block, const Tensor& sites,
                   MpsCache* cache = nullptr);

// Gradients of sum(grad_logits * logits) with respect to every site tensor
// and (optionally) the input features the cache was built from.
MpsGrads mps_backward(const MpsBlock& block, const MpsCache& cache,
                      const Tensor& grad_logits, bool want_input_grad = true);

// Explicit weight tensor of shape [d, ..., d, m] (S feature axes then the
// output axis), assembled by summing over all virtual indices. Guarded by a
// d^S * m <= 2^20 size cap.
Tensor mps_to_full_tensor(const MpsBlock& block);

std::size_t mps_param_count(const MpsBlock& block);

// Order-S joint feature tensor: the chained outer product of the given site
// vectors. Oracle-sized inputs only (product of extents capped at 2^20).
Tensor joint_feature_map_oracle(const std::vector<Tensor>& site_vectors);

}  // namespace mltn
