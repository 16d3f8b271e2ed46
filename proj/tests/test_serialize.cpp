#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "basisconv/cli.hpp"
#include "basisconv/serialize.hpp"
#include "json.hpp"

using namespace basisconv;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("basisconv_ser_" + name);
}

Tensor3 random_tensor(int m, int n, int l, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor3 t(m, n, l);
    for (double& v : t.data) v = u(rng);
    return t;
}

// a model exercising every layer tag: direct conv, eigen basis, random basis
Model mixed_model() {
    std::mt19937_64 rng(201);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    Model m;
    m.input_shape = {10, 10, 2};

    ConvLayer conv;
    conv.pad = 1;
    for (int k = 0; k < 4; ++k) {
        Filter3 f(3, 2);
        for (double& v : f.data) v = u(rng);
        conv.bank.filters.push_back(std::move(f));
    }
    conv.bank.biases = {0.1, -0.2, 0.3, 0.0};

    auto [eigen_layer, report] = to_basis_layer(ConvLayer{conv.bank, 0}, 0.9);

    BasisConvLayer random_layer;
    random_layer.basis = random_orthonormal(3, 4, 5, 12345);
    random_layer.coeffs = Matrix(6, 5);
    for (double& v : random_layer.coeffs.data) v = u(rng);
    random_layer.basis_biases.assign(5, 0.01);
    random_layer.biases.assign(6, -0.01);
    random_layer.pad = 1;

    m.layers.emplace_back(std::move(conv));   // 10x10x2 -> 10x10x4
    m.layers.emplace_back(ReLULayer{});
    m.layers.emplace_back(std::move(eigen_layer));  // -> 8x8xQ... P=4
    m.layers.emplace_back(MaxPoolLayer{2, 2});      // -> 4x4x4
    m.layers.emplace_back(std::move(random_layer)); // -> 4x4x6
    FullyConnectedLayer fc;
    fc.weights = Matrix(3, 96);
    for (double& v : fc.weights.data) v = u(rng);
    fc.biases = {0.0, 0.1, -0.1};
    m.layers.emplace_back(std::move(fc));
    m.layers.emplace_back(SoftmaxLayer{});
    m.validate();
    return m;
}

}  // namespace

TEST_CASE("f64 round trip preserves forward outputs bitwise") {
    const Model m = mixed_model();
    const auto path = temp_file("roundtrip64.bcnv");
    save_model(m, path.string(), ScalarWidth::f64);
    const Model back = load_model(path.string());

    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor3 x = random_tensor(10, 10, 2, rng);
        const std::vector<double> a = predict(m, x);
        const std::vector<double> b = predict(back, x);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }

    // random-origin metadata survives
    bool found_random = false;
    for (const Layer& l : back.layers)
        if (const auto* bl = std::get_if<BasisConvLayer>(&l))
            if (bl->basis.origin == BasisOrigin::random) {
                found_random = true;
                CHECK(bl->basis.seed == 12345u);
            }
    CHECK(found_random);
    std::filesystem::remove(path);
}

TEST_CASE("f32 round trip stays within float precision") {
    const Model m = mixed_model();
    const auto path = temp_file("roundtrip32.bcnv");
    save_model(m, path.string(), ScalarWidth::f32);
    const Model back = load_model(path.string());

    std::mt19937_64 rng(8);
    const Tensor3 x = random_tensor(10, 10, 2, rng);
    const std::vector<double> a = predict(m, x);
    const std::vector<double> b = predict(back, x);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6);
    std::filesystem::remove(path);
}

TEST_CASE("toy nets round trip with identical listings") {
    for (ToyKind kind : {ToyKind::direct, ToyKind::basis}) {
        const Model m = build_toy_net(kind, 77);
        const auto path = temp_file("toy.bcnv");
        save_model(m, path.string());
        const Model back = load_model(path.string());
        CHECK(inspect_listing(m) == inspect_listing(back));
        std::filesystem::remove(path);
    }
}

TEST_CASE("corrupt magic is a format error") {
    const auto path = temp_file("magic.bcnv");
    {
        std::ofstream out(path, std::ios::binary);
        out.write("NOPE0000", 8);
    }
    CHECK_THROWS_AS(load_model(path.string()), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("unknown version is rejected") {
    const Model m = mixed_model();
    const auto path = temp_file("version.bcnv");
    save_model(m, path.string());
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const char v2[4] = {9, 0, 0, 0};
        f.write(v2, 4);
    }
    CHECK_THROWS_AS(load_model(path.string()), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("truncated and padded files are rejected") {
    const Model m = mixed_model();
    const auto path = temp_file("trunc.bcnv");
    save_model(m, path.string());
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 17);
    CHECK_THROWS_AS(load_model(path.string()), FormatError);

    save_model(m, path.string());
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out.write("junk", 4);
    }
    CHECK_THROWS_AS(load_model(path.string()), FormatError);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_model("/no/such/model.bcnv"), FormatError);
}

TEST_CASE("json manifest parses and lists every layer") {
    const Model m = mixed_model();
    const auto path = temp_file("manifest.json");
    write_json_manifest(m, path.string());
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    CHECK(j["input"] == nlohmann::json({10, 10, 2}));
    CHECK(j["layers"].size() == m.layers.size());
    bool saw_frozen = false;
    for (const auto& entry : j["layers"])
        if (entry["kind"] == "basisconv") {
            CHECK(entry["frozen"] == true);
            saw_frozen = true;
        }
    CHECK(saw_frozen);
    std::filesystem::remove(path);
}
