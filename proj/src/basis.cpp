#include "basisconv/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace basisconv {

namespace {

constexpr double kRankEps = 1e-10;       // relative eigenvalue cutoff
constexpr double kJacobiEps = 1e-12;     // off-diagonal threshold vs ||diag||
constexpr int kJacobiMaxSweeps = 64;

double offdiag_max(const Matrix& s) {
    double m = 0.0;
    for (int p = 0; p < s.rows; ++p)
        for (int q = p + 1; q < s.cols; ++q) m = std::max(m, std::abs(s(p, q)));
    return m;
}

double diag_norm(const Matrix& s) {
    double d = 0.0;
    for (int i = 0; i < s.rows; ++i) d += s(i, i) * s(i, i);
    return std::sqrt(d);
}

// Largest-magnitude entry made positive so decompositions are reproducible.
void fix_sign(Matrix& vecs, int col) {
    int arg = 0;
    double best = 0.0;
    for (int r = 0; r < vecs.rows; ++r) {
        const double a = std::abs(vecs(r, col));
        if (a > best) {
            best = a;
            arg = r;
        }
    }
    if (vecs(arg, col) < 0.0)
        for (int r = 0; r < vecs.rows; ++r) vecs(r, col) = -vecs(r, col);
}

}  // namespace

std::pair<std::vector<double>, Matrix> jacobi_eigen(Matrix s) {
    if (s.rows != s.cols) throw std::invalid_argument("jacobi_eigen: matrix not square");
    const int n = s.rows;
    Matrix v = identity(n);

    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        if (offdiag_max(s) <= kJacobiEps * diag_norm(s)) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = s(p, q);
                if (apq == 0.0) continue;
                const double app = s(p, p);
                const double aqq = s(q, q);
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                              : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * c;

                for (int r = 0; r < n; ++r) {
                    if (r == p || r == q) continue;
                    const double srp = s(r, p);
                    const double srq = s(r, q);
                    s(r, p) = s(p, r) = c * srp - sn * srq;
                    s(r, q) = s(q, r) = sn * srp + c * srq;
                }
                s(p, p) = app - t * apq;
                s(q, q) = aqq + t * apq;
                s(p, q) = s(q, p) = 0.0;

                for (int r = 0; r < n; ++r) {
                    const double vrp = v(r, p);
                    const double vrq = v(r, q);
                    v(r, p) = c * vrp - sn * vrq;
                    v(r, q) = sn * vrp + c * vrq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&s](int a, int b) { return s(a, a) > s(b, b); });

    std::vector<double> values(n);
    Matrix vecs(n, n);
    for (int i = 0; i < n; ++i) {
        values[i] = s(order[i], order[i]);
        for (int r = 0; r < n; ++r) vecs(r, i) = v(r, order[i]);
    }
    return {std::move(values), std::move(vecs)};
}

Filter3 BasisSet::basis_filter(int i) const {
    std::vector<double> col(static_cast<std::size_t>(dim()));
    for (int r = 0; r < dim(); ++r) col[r] = f(r, i);
    return devectorize(col, filter_size, channels);
}

FilterMatrix build_filter_matrix(const FilterBank& bank) {
    bank.validate();
    const int d = bank.filter_size();
    const int l = bank.channels();
    const int n = d * d * l;
    FilterMatrix fm;
    fm.filter_size = d;
    fm.channels = l;
    fm.a = Matrix(n, bank.count());
    for (int k = 0; k < bank.count(); ++k) {
        const std::vector<double> col = vectorize(bank.filters[k]);
        for (int r = 0; r < n; ++r) fm.a(r, k) = col[r];
    }
    return fm;
}

Spectrum eigen_decompose(const FilterMatrix& fm) {
    const Matrix& a = fm.a;
    const int n = a.rows;
    const int p = a.cols;

    bool all_zero = true;
    for (double v : a.data)
        if (v != 0.0) {
            all_zero = false;
            break;
        }
    if (all_zero) throw std::runtime_error("degenerate filter bank: all filters are zero");

    Spectrum sp;
    sp.filter_size = fm.filter_size;
    sp.channels = fm.channels;

    std::vector<double> values;
    Matrix lifted;

    if (p < n) {
        // Same nonzero spectrum as A A^T, at P x P cost; eigenvectors are lifted.
        const Matrix gram = matmul(transpose(a), a);
        auto [vals, vecs] = jacobi_eigen(gram);
        const double lead = std::max(vals.front(), 0.0);
        int kept = 0;
        for (double v : vals) {
            sp.total_mass += std::max(v, 0.0);
            if (v > kRankEps * lead) ++kept;
        }
        if (kept == 0) throw std::runtime_error("degenerate filter bank: spectrum is numerically zero");
        values.assign(vals.begin(), vals.begin() + kept);
        lifted = Matrix(n, kept);
        for (int i = 0; i < kept; ++i) {
            const double inv = 1.0 / std::sqrt(values[i]);
            for (int r = 0; r < n; ++r) {
                double acc = 0.0;
                for (int c = 0; c < p; ++c) acc += a(r, c) * vecs(c, i);
                lifted(r, i) = acc * inv;
            }
        }
    } else {
        const Matrix outer = matmul(a, transpose(a));
        auto [vals, vecs] = jacobi_eigen(outer);
        const double lead = std::max(vals.front(), 0.0);
        int kept = 0;
        for (double v : vals) {
            sp.total_mass += std::max(v, 0.0);
            if (v > kRankEps * lead) ++kept;
        }
        if (kept == 0) throw std::runtime_error("degenerate filter bank: spectrum is numerically zero");
        values.assign(vals.begin(), vals.begin() + kept);
        lifted = Matrix(n, kept);
        for (int i = 0; i < kept; ++i)
            for (int r = 0; r < n; ++r) lifted(r, i) = vecs(r, i);
    }

    for (int i = 0; i < static_cast<int>(values.size()); ++i) fix_sign(lifted, i);
    sp.eigenvalues = std::move(values);
    sp.eigenvectors = std::move(lifted);
    return sp;
}

int select_q(const Spectrum& spectrum, double t) {
    if (spectrum.rank() == 0) throw std::invalid_argument("select_q: empty spectrum");
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("select_q: t must be in (0, 1]");
    const double total = spectrum.total_mass > 0.0
                             ? spectrum.total_mass
                             : std::accumulate(spectrum.eigenvalues.begin(),
                                               spectrum.eigenvalues.end(), 0.0);
    double cum = 0.0;
    for (int i = 0; i < spectrum.rank(); ++i) {
        cum += spectrum.eigenvalues[i];
        if (cum / total >= t - 1e-15) return i + 1;
    }
    return spectrum.rank();
}

BasisSet truncate(const Spectrum& spectrum, int q) {
    if (q < 1 || q > spectrum.rank())
        throw std::invalid_argument("truncate: Q = " + std::to_string(q) + " outside [1, " +
                                    std::to_string(spectrum.rank()) + "]");
    BasisSet b;
    b.filter_size = spectrum.filter_size;
    b.channels = spectrum.channels;
    b.origin = BasisOrigin::eigen;
    b.spectrum = spectrum;
    b.f = Matrix(spectrum.eigenvectors.rows, q);
    for (int c = 0; c < q; ++c)
        for (int r = 0; r < b.f.rows; ++r) b.f(r, c) = spectrum.eigenvectors(r, c);
    return b;
}

CoefficientMatrix project_weights(const BasisSet& basis, const FilterBank& bank) {
    bank.validate();
    if (basis.filter_size != bank.filter_size() || basis.channels != bank.channels())
        throw std::invalid_argument("project_weights: basis and bank disagree on filter shape");
    const int p = bank.count();
    const int q = basis.q();
    Matrix w(p, q);
    for (int k = 0; k < p; ++k) {
        const std::vector<double> h = vectorize(bank.filters[k]);
        for (int c = 0; c < q; ++c) {
            double acc = 0.0;
            for (int r = 0; r < basis.dim(); ++r) acc += basis.f(r, c) * h[r];
            w(k, c) = acc;
        }
    }
    return w;
}

FilterBank reconstruct(const BasisSet& basis, const CoefficientMatrix& coeffs,
                       const std::vector<double>& biases) {
    if (coeffs.cols != basis.q())
        throw std::invalid_argument("reconstruct: coefficient columns do not match basis size");
    if (!biases.empty() && static_cast<int>(biases.size()) != coeffs.rows)
        throw std::invalid_argument("reconstruct: bias count does not match filter count");
    FilterBank bank;
    for (int k = 0; k < coeffs.rows; ++k) {
        std::vector<double> h(static_cast<std::size_t>(basis.dim()), 0.0);
        for (int c = 0; c < basis.q(); ++c) {
            const double wv = coeffs(k, c);
            for (int r = 0; r < basis.dim(); ++r) h[r] += wv * basis.f(r, c);
        }
        bank.filters.push_back(devectorize(h, basis.filter_size, basis.channels));
    }
    bank.biases = biases.empty() ? std::vector<double>(coeffs.rows, 0.0) : biases;
    return bank;
}

BasisSet random_orthonormal(int d, int l, int q, std::uint64_t seed) {
    if (d < 1 || l < 1) throw std::invalid_argument("random_orthonormal: non-positive filter shape");
    const int n = d * d * l;
    if (q < 1 || q > n)
        throw std::invalid_argument("random_orthonormal: Q = " + std::to_string(q) +
                                    " outside [1, " + std::to_string(n) + "]");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    BasisSet b;
    b.filter_size = d;
    b.channels = l;
    b.origin = BasisOrigin::random;
    b.seed = seed;
    b.f = Matrix(n, q);

    // Modified Gram-Schmidt; a degenerate draw is redrawn.
    for (int c = 0; c < q; ++c) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (;;) {
            for (int r = 0; r < n; ++r) v[r] = gauss(rng);
            for (int prev = 0; prev < c; ++prev) {
                double dot = 0.0;
                for (int r = 0; r < n; ++r) dot += b.f(r, prev) * v[r];
                for (int r = 0; r < n; ++r) v[r] -= dot * b.f(r, prev);
            }
            double norm = 0.0;
            for (int r = 0; r < n; ++r) norm += v[r] * v[r];
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (int r = 0; r < n; ++r) b.f(r, c) = v[r] / norm;
                break;
            }
        }
    }
    return b;
}

ApproxError approx_error(const BasisSet& basis, const Filter3& h) {
    if (h.size != basis.filter_size || h.channels != basis.channels)
        throw std::invalid_argument("approx_error: filter shape does not match basis");
    const std::vector<double> v = vectorize(h);
    const int n = basis.dim();
    const int q = basis.q();

    double hh = 0.0;
    for (double x : v) hh += x * x;
    if (hh == 0.0) throw std::invalid_argument("approx_error: zero filter");

    ApproxError out;
    out.coeffs.resize(q);
    for (int c = 0; c < q; ++c) {
        double acc = 0.0;
        for (int r = 0; r < n; ++r) acc += basis.f(r, c) * v[r];
        out.coeffs[c] = acc;
    }

    // direct form ||F b - h||^2
    double direct = 0.0;
    for (int r = 0; r < n; ++r) {
        double recon = 0.0;
        for (int c = 0; c < q; ++c) recon += basis.f(r, c) * out.coeffs[c];
        const double e = recon - v[r];
        direct += e * e;
    }
    // Gram form h^T (I - F F^T) h = ||h||^2 - ||b||^2 for orthonormal F
    double bb = 0.0;
    for (double x : out.coeffs) bb += x * x;
    const double rel_direct = direct / hh;
    const double rel_gram = (hh - bb) / hh;
    if (std::abs(rel_direct - rel_gram) > 1e-8)
        throw std::logic_error("approx_error: direct and Gram error forms disagree; basis not orthonormal?");

    out.rel_sq_err = rel_direct;
    return out;
}

ErrorBounds error_bounds(const BasisSet& basis) {
    const Matrix gram = matmul(transpose(basis.f), basis.f);  // Q x Q, same nonzero spectrum as F F^T
    auto [vals, vecs] = jacobi_eigen(gram);
    (void)vecs;
    const double lam_max = vals.empty() ? 0.0 : vals.front();
    const double lam_min = basis.q() < basis.dim() ? 0.0 : (vals.empty() ? 0.0 : vals.back());
    return {1.0 - lam_max, 1.0 - lam_min};
}

}  // namespace basisconv
