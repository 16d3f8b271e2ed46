#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "basisconv/cost.hpp"

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
    bank.biases.assign(p, 0.1);
    return bank;
}

Tensor3 random_tensor(int m, int n, int l, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor3 t(m, n, l);
    for (double& v : t.data) v = u(rng);
    return t;
}

}  // namespace

TEST_CASE("direct multiplication counts") {
    CHECK(direct_mults({5, 5, 1, 5, 1, 0}) == 25u);
    CHECK(direct_mults({32, 32, 3, 5, 32, 0}) == 1881600u);  // 32*3*25*28*28
}

TEST_CASE("basis multiplication counts") {
    CHECK(basis_mults({32, 32, 3, 5, 32, 8}) == 671104u);  // 8*(75+32)*784
}

TEST_CASE("the worked ratio example") {
    // P=64, L=32, D=5, Q=16: 64*800 / (16*864)
    LayerDims d{10, 10, 32, 5, 64, 16};
    CHECK(mult_ratio(d) == doctest::Approx(3.7037).epsilon(2e-4));
}

TEST_CASE("ratio tends to one when Q = P and taps dominate") {
    LayerDims d{40, 40, 64, 5, 8, 8};  // L*D^2 = 1600 >> P = 8
    CHECK(mult_ratio(d) == doctest::Approx(1600.0 / 1608.0).epsilon(1e-12));
}

TEST_CASE("ratio equals the quotient of the two counts for random dims") {
    std::mt19937_64 rng(61);
    std::uniform_int_distribution<int> small(1, 6);
    for (int trial = 0; trial < 100; ++trial) {
        LayerDims d;
        d.filter_size = small(rng);
        d.in_rows = d.filter_size + small(rng);
        d.in_cols = d.filter_size + small(rng);
        d.in_channels = small(rng);
        d.filter_count = small(rng);
        d.basis_count = 1 + (small(rng) - 1) % (d.in_channels * d.filter_size * d.filter_size);
        CHECK(mult_ratio(d) == static_cast<double>(direct_mults(d)) /
                                   static_cast<double>(basis_mults(d)));
    }
}

TEST_CASE("ratio stays within a factor of P/Q when taps dominate") {
    std::mt19937_64 rng(67);
    std::uniform_int_distribution<int> pq(1, 8);
    for (int trial = 0; trial < 100; ++trial) {
        const int p = pq(rng);
        const int q = 1 + (pq(rng) - 1) % p;  // Q <= P
        LayerDims d{20, 20, 10 * p, 4, p, q};  // L*D^2 = 160*p >= 10*P
        const double ratio = mult_ratio(d);
        const double pq_ratio = static_cast<double>(p) / q;
        CHECK(ratio >= 0.9 * pq_ratio);
        CHECK(ratio <= pq_ratio);
    }
}

TEST_CASE("closed forms equal the instrumented counters exactly") {
    std::mt19937_64 rng(71);
    std::uniform_int_distribution<int> small(1, 5);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = small(rng);
        const int m = d + small(rng);
        const int n = d + small(rng);
        const int l = small(rng);
        const int p = small(rng);
        const int dim = l * d * d;
        const int q = 1 + (small(rng) - 1) % dim;

        const Tensor3 x = random_tensor(m, n, l, rng);
        const FilterBank bank = random_bank(d, l, p, rng);
        MultCounter direct_counter;
        conv_bank(x, bank, &direct_counter);
        CHECK(direct_counter.mults == direct_mults({m, n, l, d, p, 0}));

        BasisConvLayer bl;
        bl.basis = random_orthonormal(d, l, q, trial);
        bl.coeffs = Matrix(p, q, 0.5);
        bl.basis_biases.assign(q, 0.0);
        bl.biases.assign(p, 0.0);
        MultCounter basis_counter;
        forward_basis(bl, x, &basis_counter);
        CHECK(basis_counter.mults == basis_mults({m, n, l, d, p, q}));
    }
}

TEST_CASE("learnable parameter counts per layer") {
    std::mt19937_64 rng(73);
    const ConvLayer conv{random_bank(5, 32, 32, rng), 0};
    CHECK(learnable_params(conv, false) == 25600u);
    CHECK(learnable_params(conv, true) == 25632u);

    BasisConvLayer bl;
    bl.basis = random_orthonormal(5, 32, 10, 3);
    bl.coeffs = Matrix(32, 10, 0.0);
    bl.basis_biases.assign(10, 0.0);
    bl.biases.assign(32, 0.0);
    CHECK(learnable_params(bl, false) == 320u);
    CHECK(learnable_params(conv, false) / learnable_params(bl, false) == 80u);  // L*D^2/Q
    CHECK(learnable_params(bl, true) == 320u + 32 + 10);
}

TEST_CASE("empty model reports zeros") {
    Model m;
    m.input_shape = {8, 8, 1};
    const CostReport r = model_cost_report(m, m.input_shape);
    CHECK(r.layers.empty());
    CHECK(r.conv_mults == 0u);
    CHECK(r.conv_params == 0u);
    CHECK(r.total_params == 0u);
}

TEST_CASE("toy network totals: 79328 direct, 6400 basis, instrumented forward agrees") {
    const Model direct = build_toy_net(ToyKind::direct, 5);
    const CostReport rd = model_cost_report(direct, direct.input_shape);
    CHECK(rd.conv_params == 79328u);

    const Model basis = build_toy_net(ToyKind::basis, 5);
    const CostReport rb = model_cost_report(basis, basis.input_shape);
    CHECK(rb.conv_params == 6400u);
    CHECK(static_cast<double>(rd.conv_params) / static_cast<double>(rb.conv_params) ==
          doctest::Approx(12.4).epsilon(0.01));

    // the retained-filter column at Q = P is just the filter counts
    std::uint64_t q_total = 0;
    for (const LayerCost& c : rb.layers)
        if (c.kind == "basisconv") q_total += c.filters;
    CHECK(q_total == 32u + 32 + 64);

    std::mt19937_64 rng(79);
    const Tensor3 x = random_tensor(32, 32, 3, rng);
    MultCounter mc;
    predict(direct, x, &mc);
    CHECK(mc.mults == rd.conv_mults);

    MultCounter mcb;
    predict(basis, x, &mcb);
    CHECK(mcb.mults == rb.conv_mults);
}

TEST_CASE("dimension validation") {
    CHECK_THROWS_AS(direct_mults({0, 5, 1, 1, 1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(direct_mults({3, 3, 1, 4, 1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(basis_mults({5, 5, 1, 2, 3, 0}), std::invalid_argument);
    CHECK_THROWS_AS(basis_mults({5, 5, 1, 2, 3, 9}), std::invalid_argument);
}
