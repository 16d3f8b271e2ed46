#pragma once

#include <utility>
#include <vector>

#include "basisconv/basis.hpp"
#include "basisconv/tensor.hpp"

namespace basisconv {

// Conventional convolution layer. `pad` cells of zero border are applied before
// the valid-mode convolution (the three 5x5 stages of the toy network keep
// their spatial size this way).
struct ConvLayer {
    FilterBank bank;
    int pad = 0;
};

// Two-stage replacement for a ConvLayer: a fixed orthonormal filter bank
// followed by trainable 1x1 combination filters. The basis filters are frozen;
// the coefficient matrix and both bias vectors learn. basis_biases start at
// zero so a freshly converted layer is a pure subspace map.
struct BasisConvLayer {
    BasisSet basis;
    CoefficientMatrix coeffs;          // P x Q
    std::vector<double> basis_biases;  // Q, on the fixed stage
    std::vector<double> biases;        // P, on the combination stage
    int pad = 0;

    int p() const { return coeffs.rows; }
    int q() const { return coeffs.cols; }
    void validate() const;
};

struct LayerReport {
    int p = 0;
    int q = 0;
    int filter_size = 0;
    int channels = 0;
    double retained_fraction = 0;     // eigenvalue mass kept by the top-Q pairs
    double reconstruction_error = 0;  // ||A - F F^T A||_F / ||A||_F
};

/// Convert a convolution layer into basis form, keeping the smallest basis
/// whose eigenvalue mass reaches t.
std::pair<BasisConvLayer, LayerReport> to_basis_layer(const ConvLayer& conv, double t);

/// Same conversion with the basis size forced explicitly (sweeps at fixed Q).
std::pair<BasisConvLayer, LayerReport> to_basis_layer_q(const ConvLayer& conv, int q);

Tensor3 forward_direct(const ConvLayer& layer, const Tensor3& x, MultCounter* mc = nullptr);
Tensor3 forward_basis(const BasisConvLayer& layer, const Tensor3& x, MultCounter* mc = nullptr);

/// The direct-convolution bank this layer is equivalent to (F W^T columns,
/// with any trained fixed-stage bias folded into the returned biases).
FilterBank effective_filters(const BasisConvLayer& layer);

/// The basis columns as a filter bank, with the layer's fixed-stage biases attached.
FilterBank basis_bank(const BasisConvLayer& layer);

}  // namespace basisconv
