#include "basisconv/cost.hpp"

#include <stdexcept>

namespace basisconv {

namespace {

void check_dims(const LayerDims& d, bool need_q) {
    if (d.in_rows < 1 || d.in_cols < 1 || d.in_channels < 1 || d.filter_size < 1 ||
        d.filter_count < 1)
        throw std::invalid_argument("layer dims must be positive");
    if (d.filter_size > d.in_rows || d.filter_size > d.in_cols)
        throw std::invalid_argument("filter larger than input");
    if (need_q) {
        if (d.basis_count < 1) throw std::invalid_argument("basis size missing");
        if (d.basis_count > d.in_channels * d.filter_size * d.filter_size)
            throw std::invalid_argument("basis size exceeds filter dimensionality");
    }
}

std::uint64_t out_positions(const LayerDims& d) {
    return static_cast<std::uint64_t>(d.in_rows - d.filter_size + 1) *
           static_cast<std::uint64_t>(d.in_cols - d.filter_size + 1);
}

}  // namespace

std::uint64_t direct_mults(const LayerDims& d) {
    check_dims(d, false);
    return static_cast<std::uint64_t>(d.filter_count) * d.in_channels * d.filter_size *
           d.filter_size * out_positions(d);
}

std::uint64_t basis_mults(const LayerDims& d) {
    check_dims(d, true);
    const std::uint64_t taps =
        static_cast<std::uint64_t>(d.in_channels) * d.filter_size * d.filter_size;
    return static_cast<std::uint64_t>(d.basis_count) * (taps + d.filter_count) * out_positions(d);
}

double mult_ratio(const LayerDims& d) {
    return static_cast<double>(direct_mults(d)) / static_cast<double>(basis_mults(d));
}

std::uint64_t learnable_params(const ConvLayer& layer, bool include_biases) {
    const std::uint64_t p = layer.bank.count();
    const std::uint64_t per =
        static_cast<std::uint64_t>(layer.bank.channels()) * layer.bank.filter_size() *
        layer.bank.filter_size();
    return p * per + (include_biases ? p : 0);
}

std::uint64_t learnable_params(const BasisConvLayer& layer, bool include_biases) {
    const std::uint64_t p = layer.p();
    const std::uint64_t q = layer.q();
    return p * q + (include_biases ? p + q : 0);
}

CostReport model_cost_report(const Model& model, const Shape3& input_shape, bool include_biases) {
    if (!(input_shape == model.input_shape))
        throw std::invalid_argument("cost report: input shape does not match model");
    const std::vector<Shape3> chain = model.shape_chain();
    CostReport report;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const Shape3& cur = chain[li];
        const Layer& layer = model.layers[li];
        LayerCost cost;
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            cost.kind = "conv";
            cost.dims = {cur.rows + 2 * conv->pad, cur.cols + 2 * conv->pad,
                         conv->bank.channels(), conv->bank.filter_size(), conv->bank.count(), 0};
            cost.mults = direct_mults(cost.dims);
            cost.params = learnable_params(*conv, include_biases);
            cost.stored = static_cast<std::uint64_t>(conv->bank.count()) *
                          conv->bank.channels() * conv->bank.filter_size() *
                          conv->bank.filter_size();
            cost.filters = conv->bank.count();
            report.conv_mults += cost.mults;
            report.conv_params += cost.params;
            report.stored_scalars += cost.stored;
        } else if (const auto* bl = std::get_if<BasisConvLayer>(&layer)) {
            cost.kind = "basisconv";
            cost.dims = {cur.rows + 2 * bl->pad, cur.cols + 2 * bl->pad, bl->basis.channels,
                         bl->basis.filter_size, bl->p(), bl->q()};
            cost.mults = basis_mults(cost.dims);
            cost.params = learnable_params(*bl, include_biases);
            const std::uint64_t dim = static_cast<std::uint64_t>(bl->basis.dim());
            cost.stored = dim * bl->q() + static_cast<std::uint64_t>(bl->p()) * bl->q();
            cost.filters = bl->q();
            report.conv_mults += cost.mults;
            report.conv_params += cost.params;
            report.stored_scalars += cost.stored;
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            cost.kind = "fc";
            cost.params = static_cast<std::uint64_t>(fc->weights.rows) * fc->weights.cols +
                          (include_biases ? fc->biases.size() : 0);
        } else if (std::holds_alternative<ReLULayer>(layer)) {
            cost.kind = "relu";
        } else if (std::holds_alternative<MaxPoolLayer>(layer)) {
            cost.kind = "maxpool";
        } else {
            cost.kind = "softmax";
        }
        report.total_params += cost.params;
        report.layers.push_back(cost);
    }
    return report;
}

}  // namespace basisconv
