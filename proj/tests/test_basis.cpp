#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "basisconv/basis.hpp"

using namespace basisconv;

namespace {

FilterBank random_bank(int d, int l, int p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FilterBank bank;
    for (int k = 0; k < p; ++k) {
        Filter3 f(d, l);
        for (double& v : f.data) v = u(rng);
        bank.filters.push_back(std::move(f));
    }
    bank.biases.assign(p, 0.0);
    return bank;
}

double max_abs_gram_dev(const Matrix& f) {
    const Matrix g = matmul(transpose(f), f);
    double worst = 0.0;
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            worst = std::max(worst, std::abs(g(r, c) - (r == c ? 1.0 : 0.0)));
    return worst;
}

Matrix mat_sub(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

// ||A - G G^T A||_F for any orthonormal-column G
double residual_norm(const Matrix& a, const Matrix& g) {
    return frobenius_norm(mat_sub(a, matmul(g, matmul(transpose(g), a))));
}

}  // namespace

TEST_CASE("jacobi solves a 2x2 by hand") {
    Matrix s(2, 2);
    s(0, 0) = 2.0;
    s(0, 1) = s(1, 0) = 1.0;
    s(1, 1) = 2.0;
    auto [vals, vecs] = jacobi_eigen(s);
    CHECK(vals[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(vals[1] == doctest::Approx(1.0).epsilon(1e-12));
    const double inv = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(vecs(0, 0)) == doctest::Approx(inv).epsilon(1e-12));
    CHECK(std::abs(vecs(1, 0)) == doctest::Approx(inv).epsilon(1e-12));
}

TEST_CASE("jacobi on larger symmetric matrices satisfies the eigen relation") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + trial;
        Matrix s(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = r; c < n; ++c) s(r, c) = s(c, r) = u(rng);
        auto [vals, vecs] = jacobi_eigen(s);
        double scale = 0.0;
        for (double v : vals) scale = std::max(scale, std::abs(v));
        for (int i = 0; i < n; ++i) {
            for (int r = 0; r < n; ++r) {
                double acc = 0.0;
                for (int c = 0; c < n; ++c) acc += s(r, c) * vecs(c, i);
                CHECK(std::abs(acc - vals[i] * vecs(r, i)) <= 1e-10 * std::max(1.0, scale));
            }
        }
        CHECK(max_abs_gram_dev(vecs) <= 1e-10);
        for (int i = 1; i < n; ++i) CHECK(vals[i - 1] >= vals[i]);
    }
}

TEST_CASE("build_filter_matrix lays filters into columns") {
    FilterBank one;
    one.filters.push_back(Filter3(1, 1, 5.0));
    one.biases.push_back(0.25);
    const FilterMatrix fm = build_filter_matrix(one);
    REQUIRE(fm.a.rows == 1);
    REQUIRE(fm.a.cols == 1);
    CHECK(fm.a(0, 0) == 5.0);  // biases are not part of A

    FilterBank two;
    Filter3 h1(1, 2), h2(1, 2);
    h1.at(0, 0, 0) = 1.0;
    h2.at(0, 0, 1) = 1.0;
    two.filters = {h1, h2};
    two.biases = {0.0, 0.0};
    const FilterMatrix id = build_filter_matrix(two);
    CHECK(id.a(0, 0) == 1.0);
    CHECK(id.a(1, 0) == 0.0);
    CHECK(id.a(0, 1) == 0.0);
    CHECK(id.a(1, 1) == 1.0);

    std::mt19937_64 rng(3);
    const FilterBank bank = random_bank(3, 2, 4, rng);
    const FilterMatrix fm2 = build_filter_matrix(bank);
    for (int k = 0; k < 4; ++k) {
        std::vector<double> col(fm2.a.rows);
        for (int r = 0; r < fm2.a.rows; ++r) col[r] = fm2.a(r, k);
        CHECK(devectorize(col, 3, 2).data == bank.filters[k].data);
    }
}

TEST_CASE("eigen_decompose of a single filter: AA^T by hand") {
    FilterBank bank;
    Filter3 h(1, 2);
    h.at(0, 0, 0) = 3.0;
    h.at(0, 0, 1) = 4.0;
    bank.filters.push_back(h);
    bank.biases.push_back(0.0);
    const Spectrum sp = eigen_decompose(build_filter_matrix(bank));
    REQUIRE(sp.rank() == 1);
    CHECK(sp.eigenvalues[0] == doctest::Approx(25.0).epsilon(1e-12));
    // sign convention: the largest-magnitude entry (0.8) is positive
    CHECK(sp.eigenvectors(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(sp.eigenvectors(1, 0) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("eigen_decompose identity bank") {
    FilterBank two;
    Filter3 h1(1, 2), h2(1, 2);
    h1.at(0, 0, 0) = 1.0;
    h2.at(0, 0, 1) = 1.0;
    two.filters = {h1, h2};
    two.biases = {0.0, 0.0};
    const Spectrum sp = eigen_decompose(build_filter_matrix(two));
    REQUIRE(sp.rank() == 2);
    CHECK(sp.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sp.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_abs_gram_dev(sp.eigenvectors) <= 1e-10);
}

TEST_CASE("eigen residual and trace conservation on a seeded 8x5 matrix") {
    std::mt19937_64 rng(17);
    const FilterBank bank = random_bank(2, 2, 5, rng);  // dim 8, P 5
    const FilterMatrix fm = build_filter_matrix(bank);
    const Spectrum sp = eigen_decompose(fm);
    const Matrix outer = matmul(fm.a, transpose(fm.a));
    const double lead = sp.eigenvalues[0];
    for (int i = 0; i < sp.rank(); ++i) {
        double res = 0.0;
        for (int r = 0; r < outer.rows; ++r) {
            double acc = 0.0;
            for (int c = 0; c < outer.cols; ++c) acc += outer(r, c) * sp.eigenvectors(c, i);
            const double e = acc - sp.eigenvalues[i] * sp.eigenvectors(r, i);
            res += e * e;
        }
        CHECK(std::sqrt(res) <= 1e-8 * lead);
    }
    const double fro2 = frobenius_norm(fm.a) * frobenius_norm(fm.a);
    CHECK(std::abs(sp.total_mass - fro2) <= 1e-8 * fro2);
}

TEST_CASE("all-zero bank is rejected") {
    FilterBank bank;
    bank.filters.push_back(Filter3(2, 1, 0.0));
    bank.biases.push_back(0.0);
    CHECK_THROWS_AS(eigen_decompose(build_filter_matrix(bank)), std::runtime_error);
}

TEST_CASE("select_q picks the smallest Q reaching the mass threshold") {
    Spectrum sp;
    sp.eigenvalues = {10.0, 0.0, 0.0};
    sp.total_mass = 10.0;
    CHECK(select_q(sp, 0.99) == 1);
    CHECK(select_q(sp, 1.0) == 1);

    Spectrum sp2;
    sp2.eigenvalues = {6.0, 3.0, 1.0};
    sp2.total_mass = 10.0;
    CHECK(select_q(sp2, 0.85) == 2);  // 9/10 reaches it, 6/10 does not
    CHECK(select_q(sp2, 0.6) == 1);
    CHECK(select_q(sp2, 1.0) == 3);

    CHECK_THROWS_AS(select_q(sp2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(select_q(sp2, 1.5), std::invalid_argument);

    // monotone in t
    std::mt19937_64 rng(5);
    const Spectrum sp3 = eigen_decompose(build_filter_matrix(random_bank(3, 2, 6, rng)));
    int prev = 0;
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1.0}) {
        const int q = select_q(sp3, t);
        CHECK(q >= prev);
        prev = q;
    }
}

TEST_CASE("truncate keeps orthonormal leading eigenvectors") {
    std::mt19937_64 rng(23);
    const FilterBank bank = random_bank(2, 3, 7, rng);
    const FilterMatrix fm = build_filter_matrix(bank);
    const Spectrum sp = eigen_decompose(fm);
    for (int q = 1; q <= sp.rank(); ++q) {
        const BasisSet b = truncate(sp, q);
        CHECK(b.q() == q);
        CHECK(b.origin == BasisOrigin::eigen);
        CHECK(max_abs_gram_dev(b.f) <= 1e-8);
    }
    // full rank spans the column space
    const BasisSet full = truncate(sp, sp.rank());
    CHECK(residual_norm(fm.a, full.f) <= 1e-8 * frobenius_norm(fm.a));
    CHECK_THROWS_AS(truncate(sp, 0), std::invalid_argument);
    CHECK_THROWS_AS(truncate(sp, sp.rank() + 1), std::invalid_argument);
}

TEST_CASE("truncate Q=1 of the single-filter spectrum") {
    FilterBank bank;
    Filter3 h(1, 2);
    h.at(0, 0, 0) = 3.0;
    h.at(0, 0, 1) = 4.0;
    bank.filters.push_back(h);
    bank.biases.push_back(0.0);
    const BasisSet b = truncate(eigen_decompose(build_filter_matrix(bank)), 1);
    CHECK(b.f(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(b.f(1, 0) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("project_weights special cases") {
    // single filter onto its own direction: W = [||h||]
    FilterBank bank;
    Filter3 h(1, 2);
    h.at(0, 0, 0) = 3.0;
    h.at(0, 0, 1) = 4.0;
    bank.filters.push_back(h);
    bank.biases.push_back(0.0);
    const BasisSet b = truncate(eigen_decompose(build_filter_matrix(bank)), 1);
    const CoefficientMatrix w = project_weights(b, bank);
    REQUIRE(w.rows == 1);
    REQUIRE(w.cols == 1);
    CHECK(w(0, 0) == doctest::Approx(5.0).epsilon(1e-12));

    // orthogonal filters against the identity basis
    FilterBank two;
    Filter3 h1(1, 2), h2(1, 2);
    h1.at(0, 0, 0) = 1.0;
    h2.at(0, 0, 1) = 1.0;
    two.filters = {h1, h2};
    two.biases = {0.0, 0.0};
    const BasisSet id = truncate(eigen_decompose(build_filter_matrix(two)), 2);
    const CoefficientMatrix w2 = project_weights(id, two);
    CHECK(std::abs(w2(0, 0) * w2(1, 1) - w2(0, 1) * w2(1, 0)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("full-rank project + reconstruct round trip") {
    std::mt19937_64 rng(29);
    const FilterBank bank = random_bank(3, 2, 6, rng);
    const FilterMatrix fm = build_filter_matrix(bank);
    const Spectrum sp = eigen_decompose(fm);
    const BasisSet b = truncate(sp, sp.rank());
    const CoefficientMatrix w = project_weights(b, bank);
    const FilterBank back = reconstruct(b, w, bank.biases);
    REQUIRE(back.count() == bank.count());
    for (int k = 0; k < bank.count(); ++k)
        for (std::size_t i = 0; i < bank.filters[k].data.size(); ++i)
            CHECK(back.filters[k].data[i] ==
                  doctest::Approx(bank.filters[k].data[i]).epsilon(0).scale(1e-8));
    CHECK(back.biases == bank.biases);
}

TEST_CASE("reconstruction error is monotone non-increasing in Q") {
    std::mt19937_64 rng(31);
    const FilterBank bank = random_bank(2, 3, 8, rng);
    const FilterMatrix fm = build_filter_matrix(bank);
    const Spectrum sp = eigen_decompose(fm);
    double prev = std::numeric_limits<double>::infinity();
    for (int q = 1; q <= sp.rank(); ++q) {
        const double err = residual_norm(fm.a, truncate(sp, q).f);
        CHECK(err <= prev + 1e-12);
        prev = err;
    }
}

TEST_CASE("eigen basis beats random bases of the same size") {
    std::mt19937_64 rng(37);
    const FilterBank bank = random_bank(2, 2, 6, rng);
    const FilterMatrix fm = build_filter_matrix(bank);
    const Spectrum sp = eigen_decompose(fm);
    const int q = std::max(1, sp.rank() / 2);
    const double eigen_err = residual_norm(fm.a, truncate(sp, q).f);
    for (int trial = 0; trial < 100; ++trial) {
        const BasisSet g = random_orthonormal(2, 2, q, 1000 + trial);
        CHECK(eigen_err <= residual_norm(fm.a, g.f) + 1e-8);
    }
}

TEST_CASE("degenerate bank of identical filters has rank 1") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Filter3 h(3, 2);
    for (double& v : h.data) v = u(rng);
    FilterBank bank;
    for (int k = 0; k < 4; ++k) bank.filters.push_back(h);
    bank.biases.assign(4, 0.0);
    const Spectrum sp = eigen_decompose(build_filter_matrix(bank));
    CHECK(sp.rank() == 1);
    for (double t : {0.1, 0.5, 1.0}) CHECK(select_q(sp, t) == 1);
}

TEST_CASE("random_orthonormal basics") {
    const BasisSet square = random_orthonormal(2, 1, 4, 9001);
    CHECK(max_abs_gram_dev(square.f) <= 1e-8);
    // square orthogonal: F F^T = I too
    const Matrix ffT = matmul(square.f, transpose(square.f));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(std::abs(ffT(r, c) - (r == c ? 1.0 : 0.0)) <= 1e-8);

    const BasisSet again = random_orthonormal(2, 1, 4, 9001);
    CHECK(square.f.data == again.f.data);  // bitwise deterministic
    CHECK(square.origin == BasisOrigin::random);
    CHECK(square.seed == 9001);

    for (std::uint64_t seed = 0; seed < 100; ++seed)
        CHECK(max_abs_gram_dev(random_orthonormal(2, 2, 3, seed).f) <= 1e-8);

    CHECK_THROWS_AS(random_orthonormal(2, 1, 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(random_orthonormal(2, 1, 0, 0), std::invalid_argument);
}

TEST_CASE("approx_error inside and orthogonal to the span") {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const BasisSet b = random_orthonormal(2, 3, 4, 5);  // dim 12, Q 4

    // h inside the span
    std::vector<double> coeffs(4);
    for (double& c : coeffs) c = u(rng);
    std::vector<double> hv(12, 0.0);
    for (int c = 0; c < 4; ++c)
        for (int r = 0; r < 12; ++r) hv[r] += coeffs[c] * b.f(r, c);
    const ApproxError inside = approx_error(b, devectorize(hv, 2, 3));
    CHECK(inside.rel_sq_err <= 1e-12);

    // h orthogonal to the span: project a random vector out of it
    std::vector<double> g(12);
    for (double& v : g) v = u(rng);
    for (int c = 0; c < 4; ++c) {
        double dot = 0.0;
        for (int r = 0; r < 12; ++r) dot += b.f(r, c) * g[r];
        for (int r = 0; r < 12; ++r) g[r] -= dot * b.f(r, c);
    }
    const ApproxError ortho = approx_error(b, devectorize(g, 2, 3));
    CHECK(ortho.rel_sq_err == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(approx_error(b, Filter3(2, 3, 0.0)), std::invalid_argument);
}

TEST_CASE("mean relative error of random directions approaches 1 - Q/n") {
    std::mt19937_64 rng(47);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 36;  // 3x3x4
    const int q = 12;
    double sum = 0.0;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        const BasisSet b = random_orthonormal(3, 4, q, 50000 + trial);
        Filter3 h(3, 4);
        for (double& v : h.data) v = gauss(rng);
        sum += approx_error(b, h).rel_sq_err;
    }
    const double mean = sum / trials;
    CHECK(std::abs(mean - (1.0 - static_cast<double>(q) / n)) <= 0.05);
}

TEST_CASE("error_bounds: projector envelope and containment") {
    const BasisSet square = random_orthonormal(2, 1, 4, 77);
    const ErrorBounds eb = error_bounds(square);
    CHECK(std::abs(eb.lower) <= 1e-10);
    CHECK(std::abs(eb.upper) <= 1e-10);

    std::mt19937_64 rng(53);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const BasisSet b = random_orthonormal(2, 2, 3, 600 + trial);  // Q 3 < dim 8
        const ErrorBounds bounds = error_bounds(b);
        CHECK(std::abs(bounds.lower) <= 1e-10);
        CHECK(bounds.upper == doctest::Approx(1.0).epsilon(1e-10));
        Filter3 h(2, 2);
        for (double& v : h.data) v = gauss(rng);
        const double rel = approx_error(b, h).rel_sq_err;
        CHECK(rel >= bounds.lower - 1e-12);
        CHECK(rel <= bounds.upper + 1e-12);
    }
}
