#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "basisconv/network.hpp"

namespace basisconv {

// Dimensions of one convolution stage. `in_rows`/`in_cols` are the spatial
// size actually convolved (i.e. after any zero padding).
struct LayerDims {
    int in_rows = 0;
    int in_cols = 0;
    int in_channels = 0;   // L
    int filter_size = 0;   // D
    int filter_count = 0;  // P
    int basis_count = 0;   // Q; 0 when the layer is direct
};

/// Multiplications of a direct convolution: P * L * D^2 * (M-D+1) * (N-D+1).
std::uint64_t direct_mults(const LayerDims& d);

/// Multiplications of the two-stage form: Q * (L*D^2 + P) * (M-D+1) * (N-D+1).
std::uint64_t basis_mults(const LayerDims& d);

/// direct_mults / basis_mults; approaches P/Q once L*D^2 dominates P.
double mult_ratio(const LayerDims& d);

std::uint64_t learnable_params(const ConvLayer& layer, bool include_biases);
// Counts P*Q coefficients plus, when included, the bias rows of both stages.
std::uint64_t learnable_params(const BasisConvLayer& layer, bool include_biases);

struct LayerCost {
    std::string kind;
    LayerDims dims;               // meaningful for conv stages only
    std::uint64_t mults = 0;      // convolution-stage multiplications
    std::uint64_t params = 0;     // learnable parameters of this layer
    std::uint64_t stored = 0;     // scalars needed to store the layer's filters
    int filters = 0;              // P for direct, Q for basis stages
};

struct CostReport {
    std::vector<LayerCost> layers;
    std::uint64_t conv_mults = 0;      // convolution stages only
    std::uint64_t conv_params = 0;     // learnable parameters in conv stages
    std::uint64_t total_params = 0;    // every learnable parameter in the model
    std::uint64_t stored_scalars = 0;  // filter storage over conv stages
    double gflops() const { return static_cast<double>(conv_mults) / 1e9; }
};

/// Per-layer and total counts for a model applied to the given input shape.
/// Multiplications are counted for convolution stages only.
CostReport model_cost_report(const Model& model, const Shape3& input_shape,
                             bool include_biases = true);

}  // namespace basisconv
