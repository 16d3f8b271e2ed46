#pragma once

#include <stdexcept>
#include <string>

#include "basisconv/network.hpp"

namespace basisconv {

// Raised for malformed or unsupported model files.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ScalarWidth { f32, f64 };

// BCNV model file, little-endian throughout:
//   "BCNV" | u32 version=1 | u8 width (0=f32, 1=f64)
//   u32 layer count | u32 input rows, cols, channels
//   per layer: u8 tag (0 conv, 1 basisconv, 2 relu, 3 maxpool, 4 fc, 5 softmax)
//     conv:      u32 D, L, P, pad; P filters (L*D^2 scalars each, vectorized
//                order), P biases
//     basisconv: u32 D, L, P, Q, pad; u8 origin (0 eigen, 1 random);
//                u64 seed when random; F column-major (Q columns of L*D^2),
//                coeffs row-major P x Q, Q fixed-stage biases, P biases
//     maxpool:   u32 window, stride
//     fc:        u32 out, in; weights row-major, out biases
// Saving at f64 and loading back reproduces forward outputs bit for bit.
void save_model(const Model& model, const std::string& path,
                ScalarWidth width = ScalarWidth::f64);

Model load_model(const std::string& path);

/// Human-readable shape summary of the model as a JSON document.
void write_json_manifest(const Model& model, const std::string& path);

}  // namespace basisconv
