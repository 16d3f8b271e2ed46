#include "basisconv/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace basisconv {

namespace {

constexpr char kMagic[4] = {'B', 'C', 'N', 'V'};
constexpr std::uint32_t kVersion = 1;

enum LayerTag : std::uint8_t {
    kConv = 0,
    kBasisConv = 1,
    kRelu = 2,
    kMaxPool = 3,
    kFc = 4,
    kSoftmax = 5,
};

class Writer {
public:
    Writer(const std::string& path, ScalarWidth width) : out_(path, std::ios::binary), width_(width) {
        if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void scalar(double v) {
        if (width_ == ScalarWidth::f64) {
            u64(std::bit_cast<std::uint64_t>(v));
        } else {
            u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    }
    void scalars(const std::vector<double>& vs) {
        for (double v : vs) scalar(v);
    }
    void close(const std::string& path) {
        out_.flush();
        if (!out_) throw std::runtime_error("write failed for " + path);
    }

private:
    std::ofstream out_;
    ScalarWidth width_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw FormatError("cannot open " + path);
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError(path_ + ": truncated file");
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    double scalar(ScalarWidth width) {
        if (width == ScalarWidth::f64) return std::bit_cast<double>(u64());
        return static_cast<double>(std::bit_cast<float>(u32()));
    }
    std::vector<double> scalars(std::size_t n, ScalarWidth width) {
        std::vector<double> vs(n);
        for (double& v : vs) v = scalar(width);
        return vs;
    }
    bool at_end() {
        in_.peek();
        return in_.eof();
    }

private:
    std::ifstream in_;
    std::string path_;
};

int checked_dim(std::uint32_t v, const char* what) {
    if (v == 0 || v > (1u << 24)) throw FormatError(std::string("bad ") + what);
    return static_cast<int>(v);
}

}  // namespace

void save_model(const Model& model, const std::string& path, ScalarWidth width) {
    model.validate();
    Writer w(path, width);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u8(width == ScalarWidth::f32 ? 0 : 1);
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    w.u32(static_cast<std::uint32_t>(model.input_shape.rows));
    w.u32(static_cast<std::uint32_t>(model.input_shape.cols));
    w.u32(static_cast<std::uint32_t>(model.input_shape.channels));

    for (const Layer& layer : model.layers) {
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            w.u8(kConv);
            w.u32(static_cast<std::uint32_t>(conv->bank.filter_size()));
            w.u32(static_cast<std::uint32_t>(conv->bank.channels()));
            w.u32(static_cast<std::uint32_t>(conv->bank.count()));
            w.u32(static_cast<std::uint32_t>(conv->pad));
            for (const Filter3& f : conv->bank.filters) w.scalars(f.data);
            w.scalars(conv->bank.biases);
        } else if (const auto* bl = std::get_if<BasisConvLayer>(&layer)) {
            w.u8(kBasisConv);
            w.u32(static_cast<std::uint32_t>(bl->basis.filter_size));
            w.u32(static_cast<std::uint32_t>(bl->basis.channels));
            w.u32(static_cast<std::uint32_t>(bl->p()));
            w.u32(static_cast<std::uint32_t>(bl->q()));
            w.u32(static_cast<std::uint32_t>(bl->pad));
            w.u8(bl->basis.origin == BasisOrigin::random ? 1 : 0);
            if (bl->basis.origin == BasisOrigin::random) w.u64(bl->basis.seed);
            for (int c = 0; c < bl->q(); ++c)
                for (int r = 0; r < bl->basis.dim(); ++r) w.scalar(bl->basis.f(r, c));
            w.scalars(bl->coeffs.data);
            w.scalars(bl->basis_biases);
            w.scalars(bl->biases);
        } else if (std::holds_alternative<ReLULayer>(layer)) {
            w.u8(kRelu);
        } else if (const auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
            w.u8(kMaxPool);
            w.u32(static_cast<std::uint32_t>(pool->window));
            w.u32(static_cast<std::uint32_t>(pool->stride));
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            w.u8(kFc);
            w.u32(static_cast<std::uint32_t>(fc->weights.rows));
            w.u32(static_cast<std::uint32_t>(fc->weights.cols));
            w.scalars(fc->weights.data);
            w.scalars(fc->biases);
        } else {
            w.u8(kSoftmax);
        }
    }
    w.close(path);
}

Model load_model(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": not a BCNV model file");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError(path + ": unsupported format version " + std::to_string(version));
    const std::uint8_t width_tag = r.u8();
    if (width_tag > 1) throw FormatError(path + ": bad scalar width tag");
    const ScalarWidth width = width_tag == 0 ? ScalarWidth::f32 : ScalarWidth::f64;

    const std::uint32_t layer_count = r.u32();
    Model model;
    model.input_shape.rows = checked_dim(r.u32(), "input rows");
    model.input_shape.cols = checked_dim(r.u32(), "input cols");
    model.input_shape.channels = checked_dim(r.u32(), "input channels");

    for (std::uint32_t li = 0; li < layer_count; ++li) {
        const std::uint8_t tag = r.u8();
        switch (tag) {
            case kConv: {
                const int d = checked_dim(r.u32(), "filter size");
                const int l = checked_dim(r.u32(), "filter channels");
                const int p = checked_dim(r.u32(), "filter count");
                const int pad = static_cast<int>(r.u32());
                ConvLayer conv;
                conv.pad = pad;
                for (int k = 0; k < p; ++k)
                    conv.bank.filters.push_back(
                        devectorize(r.scalars(static_cast<std::size_t>(d) * d * l, width), d, l));
                conv.bank.biases = r.scalars(p, width);
                model.layers.emplace_back(std::move(conv));
                break;
            }
            case kBasisConv: {
                const int d = checked_dim(r.u32(), "filter size");
                const int l = checked_dim(r.u32(), "filter channels");
                const int p = checked_dim(r.u32(), "filter count");
                const int q = checked_dim(r.u32(), "basis size");
                const int pad = static_cast<int>(r.u32());
                const std::uint8_t origin = r.u8();
                if (origin > 1) throw FormatError(path + ": bad basis origin tag");
                BasisConvLayer bl;
                bl.pad = pad;
                bl.basis.filter_size = d;
                bl.basis.channels = l;
                bl.basis.origin = origin == 1 ? BasisOrigin::random : BasisOrigin::eigen;
                if (origin == 1) bl.basis.seed = r.u64();
                const int dim = d * d * l;
                bl.basis.f = Matrix(dim, q);
                for (int c = 0; c < q; ++c)
                    for (int row = 0; row < dim; ++row) bl.basis.f(row, c) = r.scalar(width);
                bl.coeffs = Matrix(p, q);
                bl.coeffs.data = r.scalars(static_cast<std::size_t>(p) * q, width);
                bl.basis_biases = r.scalars(q, width);
                bl.biases = r.scalars(p, width);
                model.layers.emplace_back(std::move(bl));
                break;
            }
            case kRelu:
                model.layers.emplace_back(ReLULayer{});
                break;
            case kMaxPool: {
                MaxPoolLayer pool;
                pool.window = checked_dim(r.u32(), "pool window");
                pool.stride = checked_dim(r.u32(), "pool stride");
                model.layers.emplace_back(pool);
                break;
            }
            case kFc: {
                const int out = checked_dim(r.u32(), "fc outputs");
                const int in = checked_dim(r.u32(), "fc inputs");
                FullyConnectedLayer fc;
                fc.weights = Matrix(out, in);
                fc.weights.data = r.scalars(static_cast<std::size_t>(out) * in, width);
                fc.biases = r.scalars(out, width);
                model.layers.emplace_back(std::move(fc));
                break;
            }
            case kSoftmax:
                model.layers.emplace_back(SoftmaxLayer{});
                break;
            default:
                throw FormatError(path + ": unknown layer tag " + std::to_string(tag));
        }
    }
    if (!r.at_end()) throw FormatError(path + ": trailing bytes after last layer");

    // f32 payloads round orthonormal bases to float precision.
    const double basis_tol = width == ScalarWidth::f32 ? 1e-5 : 1e-8;
    try {
        model.validate(basis_tol);
    } catch (const std::invalid_argument& e) {
        throw FormatError(path + ": inconsistent model: " + e.what());
    }
    return model;
}

void write_json_manifest(const Model& model, const std::string& path) {
    nlohmann::json j;
    j["input"] = {model.input_shape.rows, model.input_shape.cols, model.input_shape.channels};
    nlohmann::json layers = nlohmann::json::array();
    const std::vector<Shape3> chain = model.shape_chain();
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        nlohmann::json entry;
        const Shape3& out = chain[li + 1];
        entry["output"] = {out.rows, out.cols, out.channels};
        if (const auto* conv = std::get_if<ConvLayer>(&model.layers[li])) {
            entry["kind"] = "conv";
            entry["filter"] = {conv->bank.filter_size(), conv->bank.filter_size(),
                               conv->bank.channels()};
            entry["filters"] = conv->bank.count();
            entry["pad"] = conv->pad;
        } else if (const auto* bl = std::get_if<BasisConvLayer>(&model.layers[li])) {
            entry["kind"] = "basisconv";
            entry["filter"] = {bl->basis.filter_size, bl->basis.filter_size, bl->basis.channels};
            entry["filters"] = bl->p();
            entry["basis"] = bl->q();
            entry["origin"] = bl->basis.origin == BasisOrigin::random ? "random" : "eigen";
            entry["frozen"] = true;
            entry["pad"] = bl->pad;
        } else if (std::holds_alternative<ReLULayer>(model.layers[li])) {
            entry["kind"] = "relu";
        } else if (const auto* pool = std::get_if<MaxPoolLayer>(&model.layers[li])) {
            entry["kind"] = "maxpool";
            entry["window"] = pool->window;
            entry["stride"] = pool->stride;
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&model.layers[li])) {
            entry["kind"] = "fc";
            entry["outputs"] = fc->weights.rows;
            entry["inputs"] = fc->weights.cols;
        } else {
            entry["kind"] = "softmax";
        }
        layers.push_back(entry);
    }
    j["layers"] = layers;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

}  // namespace basisconv
