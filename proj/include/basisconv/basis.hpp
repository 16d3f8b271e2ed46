#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "basisconv/tensor.hpp"

namespace basisconv {

// Vectorized filter bank: column k holds filter k in the fixed element order.
struct FilterMatrix {
    Matrix a;  // (L*D^2) x P
    int filter_size = 0;
    int channels = 0;
    int bank_size() const { return a.cols; }
    int dim() const { return a.rows; }
};

// Retained eigenpairs of A A^T, eigenvalues descending and >= 0.
struct Spectrum {
    std::vector<double> eigenvalues;
    Matrix eigenvectors;     // dim x rank, column i pairs with eigenvalues[i]
    double total_mass = 0;   // sum over the full spectrum, including discarded pairs
    int filter_size = 0;
    int channels = 0;
    int rank() const { return static_cast<int>(eigenvalues.size()); }
};

enum class BasisOrigin { eigen, random };

// Orthonormal basis for a filter subspace: F^T F = I.
struct BasisSet {
    Matrix f;  // (L*D^2) x Q, orthonormal columns
    int filter_size = 0;
    int channels = 0;
    BasisOrigin origin = BasisOrigin::eigen;
    std::uint64_t seed = 0;            // the generator seed for random origin
    std::optional<Spectrum> spectrum;  // carried along when derived by truncation

    int q() const { return f.cols; }
    int dim() const { return f.rows; }
    Filter3 basis_filter(int i) const;  // column i reshaped to D x D x L
};

// Row k holds the Q projection coefficients of filter k.
using CoefficientMatrix = Matrix;

/// Full eigensystem of a symmetric matrix via cyclic Jacobi rotations.
/// Returns eigenvalues descending with matching orthonormal eigenvector columns.
std::pair<std::vector<double>, Matrix> jacobi_eigen(Matrix s);

FilterMatrix build_filter_matrix(const FilterBank& bank);

/// Eigen-decomposition of A A^T, done on whichever Gram matrix is smaller.
/// Eigenvalues below 1e-10 of the largest are dropped as numeric zeros.
/// Throws if the bank is all zero ("degenerate filter bank").
Spectrum eigen_decompose(const FilterMatrix& a);

/// Smallest Q whose leading eigenvalue mass reaches fraction t of the total.
int select_q(const Spectrum& spectrum, double t);

/// Basis from the top-Q eigenvectors.
BasisSet truncate(const Spectrum& spectrum, int q);

/// W = (F^T A)^T: row k holds the projection of filter k onto the basis.
CoefficientMatrix project_weights(const BasisSet& basis, const FilterBank& bank);

/// Bank with filter k = devectorize(F w_k). Biases are not part of the subspace
/// math; pass them in or get zeros.
FilterBank reconstruct(const BasisSet& basis, const CoefficientMatrix& coeffs,
                       const std::vector<double>& biases = {});

/// Q orthonormalized standard-normal columns of length L*D^2, deterministic per seed.
BasisSet random_orthonormal(int d, int l, int q, std::uint64_t seed);

struct ApproxError {
    std::vector<double> coeffs;  // b = F^T vec(h)
    double rel_sq_err = 0;       // ||F b - vec(h)||^2 / ||vec(h)||^2
};

/// Least-squares projection of h onto the basis and its relative squared error.
/// The error is computed both directly and through the Gram identity and
/// cross-checked before returning.
ApproxError approx_error(const BasisSet& basis, const Filter3& h);

struct ErrorBounds {
    double lower = 0;  // 1 - lambda_max(F F^T)
    double upper = 0;  // 1 - lambda_min(F F^T)
};

/// Relative-squared-error envelope from the extreme eigenvalues of F F^T.
/// For orthonormal F with Q < L*D^2 this is the projector envelope (0, 1).
ErrorBounds error_bounds(const BasisSet& basis);

}  // namespace basisconv
