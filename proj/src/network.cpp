#include "basisconv/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace basisconv {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Shape3 layer_output_shape(const Layer& layer, const Shape3& in, int index, double basis_tol) {
    const std::string where = "layer " + std::to_string(index) + ": ";
    return std::visit(
        [&](const auto& l) -> Shape3 {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, ConvLayer>) {
                l.bank.validate();
                if (l.pad < 0) throw std::invalid_argument(where + "negative pad");
                if (l.bank.channels() != in.channels)
                    throw std::invalid_argument(where + "conv expects " +
                                                std::to_string(l.bank.channels()) + " channels, got " +
                                                std::to_string(in.channels));
                const int m = in.rows + 2 * l.pad;
                const int n = in.cols + 2 * l.pad;
                const int d = l.bank.filter_size();
                if (d > m || d > n) throw std::invalid_argument(where + "filter larger than input");
                return {m - d + 1, n - d + 1, l.bank.count()};
            } else if constexpr (std::is_same_v<T, BasisConvLayer>) {
                l.validate();
                const Matrix gram = matmul(transpose(l.basis.f), l.basis.f);
                for (int r = 0; r < gram.rows; ++r)
                    for (int c = 0; c < gram.cols; ++c)
                        if (std::abs(gram(r, c) - (r == c ? 1.0 : 0.0)) > basis_tol)
                            throw std::invalid_argument(where + "basis not orthonormal at load tolerance");
                if (l.basis.channels != in.channels)
                    throw std::invalid_argument(where + "basis conv expects " +
                                                std::to_string(l.basis.channels) + " channels, got " +
                                                std::to_string(in.channels));
                const int m = in.rows + 2 * l.pad;
                const int n = in.cols + 2 * l.pad;
                const int d = l.basis.filter_size;
                if (d > m || d > n) throw std::invalid_argument(where + "filter larger than input");
                return {m - d + 1, n - d + 1, l.p()};
            } else if constexpr (std::is_same_v<T, ReLULayer>) {
                return in;
            } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
                if (l.window < 1 || l.stride < 1)
                    throw std::invalid_argument(where + "bad pool window/stride");
                if (l.window > in.rows || l.window > in.cols)
                    throw std::invalid_argument(where + "pool window larger than input");
                return {(in.rows - l.window) / l.stride + 1, (in.cols - l.window) / l.stride + 1,
                        in.channels};
            } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
                const int flat = in.rows * in.cols * in.channels;
                if (l.weights.cols != flat)
                    throw std::invalid_argument(where + "fc expects " + std::to_string(l.weights.cols) +
                                                " inputs, got " + std::to_string(flat));
                if (static_cast<int>(l.biases.size()) != l.weights.rows)
                    throw std::invalid_argument(where + "fc bias count mismatch");
                return {1, 1, l.weights.rows};
            } else {
                static_assert(std::is_same_v<T, SoftmaxLayer>);
                return in;
            }
        },
        layer);
}

}  // namespace

std::vector<Shape3> Model::shape_chain() const {
    std::vector<Shape3> chain;
    chain.reserve(layers.size() + 1);
    Shape3 cur = input_shape;
    chain.push_back(cur);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        cur = layer_output_shape(layers[i], cur, static_cast<int>(i), 1e-8);
        chain.push_back(cur);
    }
    return chain;
}

void Model::validate(double basis_tol) const {
    if (input_shape.rows < 1 || input_shape.cols < 1 || input_shape.channels < 1)
        throw std::invalid_argument("model: bad input shape");
    if (layers.empty()) throw std::invalid_argument("model: no layers");
    Shape3 cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (std::holds_alternative<SoftmaxLayer>(layers[i]) && i + 1 != layers.size())
            throw std::invalid_argument("model: softmax must be the final layer");
        cur = layer_output_shape(layers[i], cur, static_cast<int>(i), basis_tol);
    }
}

Shape3 Model::output_shape() const { return shape_chain().back(); }

// ---- parameter enumeration -------------------------------------------------

bool in_phase(ParamClass cls, TrainPhase phase) {
    switch (phase) {
        case TrainPhase::all:
            return true;
        case TrainPhase::coeffs_only:
            return cls == ParamClass::basis_coeffs || cls == ParamClass::basis_stage_biases ||
                   cls == ParamClass::basis_biases;
        case TrainPhase::non_conv_only:
            return cls != ParamClass::conv_filters && cls != ParamClass::basis_coeffs;
    }
    return false;
}

std::vector<ParamSpan> param_spans(Model& model) {
    std::vector<ParamSpan> spans;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const int idx = static_cast<int>(li);
        std::visit(
            [&](auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, ConvLayer>) {
                    for (int k = 0; k < l.bank.count(); ++k)
                        spans.push_back({l.bank.filters[k].data.data(), l.bank.filters[k].data.size(),
                                         ParamClass::conv_filters, idx, k});
                    spans.push_back({l.bank.biases.data(), l.bank.biases.size(),
                                     ParamClass::conv_biases, idx, 0});
                } else if constexpr (std::is_same_v<T, BasisConvLayer>) {
                    spans.push_back({l.coeffs.data.data(), l.coeffs.data.size(),
                                     ParamClass::basis_coeffs, idx, 0});
                    spans.push_back({l.basis_biases.data(), l.basis_biases.size(),
                                     ParamClass::basis_stage_biases, idx, 0});
                    spans.push_back({l.biases.data(), l.biases.size(),
                                     ParamClass::basis_biases, idx, 0});
                } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
                    spans.push_back({l.weights.data.data(), l.weights.data.size(),
                                     ParamClass::fc_weights, idx, 0});
                    spans.push_back({l.biases.data(), l.biases.size(), ParamClass::fc_biases, idx, 0});
                }
            },
            model.layers[li]);
    }
    return spans;
}

void ModelGrad::scale(double s) {
    for (auto& slot : slots)
        for (double& v : slot) v *= s;
}

ModelGrad make_grad(const Model& model) {
    ModelGrad g;
    auto spans = param_spans(const_cast<Model&>(model));  // sizes only, nothing is written
    g.slots.reserve(spans.size());
    for (const ParamSpan& s : spans) g.slots.emplace_back(s.len, 0.0);
    return g;
}

// ---- forward ----------------------------------------------------------------

namespace {

Tensor3 relu_forward(const Tensor3& x) {
    Tensor3 out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor3 maxpool_forward(const MaxPoolLayer& l, const Tensor3& x) {
    const int oh = (x.rows - l.window) / l.stride + 1;
    const int ow = (x.cols - l.window) / l.stride + 1;
    Tensor3 out(oh, ow, x.channels);
    for (int m = 0; m < oh; ++m)
        for (int n = 0; n < ow; ++n)
            for (int c = 0; c < x.channels; ++c) {
                double best = -std::numeric_limits<double>::infinity();
                for (int i = 0; i < l.window; ++i)
                    for (int j = 0; j < l.window; ++j) {
                        const double v = x.at(m * l.stride + i, n * l.stride + j, c);
                        if (v > best) best = v;
                    }
                out.at(m, n, c) = best;
            }
    return out;
}

Tensor3 fc_forward(const FullyConnectedLayer& l, const Tensor3& x) {
    Tensor3 out(1, 1, l.weights.rows);
    for (int o = 0; o < l.weights.rows; ++o) {
        const double* wrow = &l.weights.data[static_cast<std::size_t>(o) * l.weights.cols];
        double acc = 0.0;
        for (int i = 0; i < l.weights.cols; ++i) acc += wrow[i] * x.data[i];
        out.data[o] = acc + l.biases[o];
    }
    return out;
}

Tensor3 softmax_forward(const Tensor3& x) {
    Tensor3 out = x;
    for (int m = 0; m < x.rows; ++m)
        for (int n = 0; n < x.cols; ++n) {
            double* v = &out.at(m, n, 0);
            double mx = v[0];
            for (int c = 1; c < x.channels; ++c) mx = std::max(mx, v[c]);
            double sum = 0.0;
            for (int c = 0; c < x.channels; ++c) {
                v[c] = std::exp(v[c] - mx);
                sum += v[c];
            }
            for (int c = 0; c < x.channels; ++c) v[c] /= sum;
        }
    return out;
}

// aux receives the intermediate tensor of a basis layer (input to its 1x1 stage)
Tensor3 forward_layer(const Layer& layer, const Tensor3& x, Tensor3* aux, MultCounter* mc) {
    return std::visit(
        [&](const auto& l) -> Tensor3 {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, ConvLayer>) {
                return forward_direct(l, x, mc);
            } else if constexpr (std::is_same_v<T, BasisConvLayer>) {
                const Tensor3 z = l.pad == 0 ? conv_bank(x, basis_bank(l), mc)
                                             : conv_bank(zero_pad(x, l.pad), basis_bank(l), mc);
                Tensor3 out = conv_1x1(z, l.coeffs, l.biases, mc);
                if (aux) *aux = z;
                return out;
            } else if constexpr (std::is_same_v<T, ReLULayer>) {
                return relu_forward(x);
            } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
                return maxpool_forward(l, x);
            } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
                return fc_forward(l, x);
            } else {
                static_assert(std::is_same_v<T, SoftmaxLayer>);
                return softmax_forward(x);
            }
        },
        layer);
}

void check_input_shape(const Model& model, const Tensor3& x) {
    if (x.rows != model.input_shape.rows || x.cols != model.input_shape.cols ||
        x.channels != model.input_shape.channels)
        throw std::invalid_argument("input shape does not match model input");
}

}  // namespace

std::vector<double> predict(const Model& model, const Tensor3& x, MultCounter* mc) {
    check_input_shape(model, x);
    Tensor3 cur = x;
    for (const Layer& layer : model.layers) cur = forward_layer(layer, cur, nullptr, mc);
    return cur.data;
}

std::vector<std::vector<double>> forward(const Model& model, const std::vector<Tensor3>& batch,
                                         MultCounter* mc) {
    std::vector<std::vector<double>> out;
    out.reserve(batch.size());
    for (const Tensor3& x : batch) out.push_back(predict(model, x, mc));
    return out;
}

// ---- backward ----------------------------------------------------------------

namespace {

// transposed filter copies with the channel axis contiguous: w[k][(i*D+j)*L + l]
std::vector<double> transpose_bank(const FilterBank& bank) {
    const int d = bank.filter_size();
    const int l = bank.channels();
    std::vector<double> wt(static_cast<std::size_t>(bank.count()) * d * d * l);
    for (int k = 0; k < bank.count(); ++k) {
        const Filter3& f = bank.filters[k];
        double* wk = &wt[static_cast<std::size_t>(k) * d * d * l];
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                for (int li = 0; li < l; ++li)
                    wk[(static_cast<std::size_t>(i) * d + j) * l + li] = f.at(i, j, li);
    }
    return wt;
}

// Gradients of y = conv_bank(xp, bank) given dy. Writes filter gradients in the
// transposed layout above (dwt, optional), bias gradients (optional) and the
// input gradient (optional, accumulated into a zeroed dxp).
void conv_backward(const Tensor3& xp, const FilterBank& bank, const std::vector<double>& wt,
                   const Tensor3& dy, Tensor3* dxp, std::vector<double>* dwt,
                   std::vector<double>* dbias) {
    const int d = bank.filter_size();
    const int l = bank.channels();
    const int p = bank.count();
    const std::size_t fstride = static_cast<std::size_t>(d) * d * l;

    for (int m = 0; m < dy.rows; ++m) {
        for (int n = 0; n < dy.cols; ++n) {
            const double* dv = &dy.at(m, n, 0);
            if (dbias)
                for (int k = 0; k < p; ++k) (*dbias)[k] += dv[k];
            for (int k = 0; k < p; ++k) {
                const double g = dv[k];
                if (g == 0.0) continue;
                const double* wk = &wt[static_cast<std::size_t>(k) * fstride];
                double* dwk = dwt ? &(*dwt)[static_cast<std::size_t>(k) * fstride] : nullptr;
                for (int i = 0; i < d; ++i) {
                    for (int j = 0; j < d; ++j) {
                        const double* xr = &xp.at(m + i, n + j, 0);
                        const std::size_t off = (static_cast<std::size_t>(i) * d + j) * l;
                        if (dwk) {
                            double* dw = dwk + off;
                            for (int li = 0; li < l; ++li) dw[li] += g * xr[li];
                        }
                        if (dxp) {
                            double* dxr = &dxp->at(m + i, n + j, 0);
                            const double* wr = wk + off;
                            for (int li = 0; li < l; ++li) dxr[li] += g * wr[li];
                        }
                    }
                }
            }
        }
    }
}

// scatter transposed filter gradients into per-filter slots (vectorized layout)
void scatter_filter_grads(const std::vector<double>& dwt, int d, int l, int p,
                          std::vector<std::vector<double>>& slots, std::size_t first_slot) {
    for (int k = 0; k < p; ++k) {
        std::vector<double>& g = slots[first_slot + k];
        const double* dwk = &dwt[static_cast<std::size_t>(k) * d * d * l];
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                for (int li = 0; li < l; ++li)
                    g[static_cast<std::size_t>(li) * d * d + static_cast<std::size_t>(i) * d + j] +=
                        dwk[(static_cast<std::size_t>(i) * d + j) * l + li];
    }
}

Tensor3 crop_pad(const Tensor3& x, int pad) {
    if (pad == 0) return x;
    Tensor3 out(x.rows - 2 * pad, x.cols - 2 * pad, x.channels);
    for (int m = 0; m < out.rows; ++m) {
        const double* src = &x.at(m + pad, pad, 0);
        double* dst = &out.at(m, 0, 0);
        std::copy(src, src + static_cast<std::size_t>(out.cols) * x.channels, dst);
    }
    return out;
}

struct ActRecord {
    Tensor3 out;
    Tensor3 aux;
};

// index of the first gradient slot of each layer, aligned with param_spans
std::vector<std::size_t> slot_offsets(const Model& model) {
    std::vector<std::size_t> first(model.layers.size(), 0);
    std::size_t next = 0;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        first[li] = next;
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, ConvLayer>)
                    next += static_cast<std::size_t>(l.bank.count()) + 1;
                else if constexpr (std::is_same_v<T, BasisConvLayer>)
                    next += 3;
                else if constexpr (std::is_same_v<T, FullyConnectedLayer>)
                    next += 2;
            },
            model.layers[li]);
    }
    return first;
}

void backprop_sample(const Model& model, const std::vector<std::size_t>& slot0, const Tensor3& x,
                     int label, ModelGrad& g, double& loss_sum, int& correct) {
    const std::size_t n_layers = model.layers.size();
    std::vector<ActRecord> acts(n_layers);
    const Tensor3* cur = &x;
    for (std::size_t i = 0; i < n_layers; ++i) {
        acts[i].out = forward_layer(model.layers[i], *cur, &acts[i].aux, nullptr);
        cur = &acts[i].out;
    }

    const Tensor3& probs = acts.back().out;
    const int classes = static_cast<int>(probs.data.size());
    if (label < 0 || label >= classes)
        throw std::invalid_argument("label " + std::to_string(label) + " out of range [0, " +
                                    std::to_string(classes) + ")");
    loss_sum += -std::log(std::max(probs.data[label], 1e-300));
    int arg = 0;
    for (int c = 1; c < classes; ++c)
        if (probs.data[c] > probs.data[arg]) arg = c;
    if (arg == label) ++correct;

    // Cross-entropy through the final softmax: delta = p - onehot at its input.
    Tensor3 delta = probs;
    delta.data[label] -= 1.0;

    for (std::size_t li = n_layers - 1; li-- > 0;) {
        const Tensor3& input = li == 0 ? x : acts[li - 1].out;
        const Layer& layer = model.layers[li];
        const std::size_t s0 = slot0[li];

        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            const Tensor3 xp = zero_pad(input, conv->pad);
            const std::vector<double> wt = transpose_bank(conv->bank);
            const int d = conv->bank.filter_size();
            const int l = conv->bank.channels();
            const int p = conv->bank.count();
            std::vector<double> dwt(static_cast<std::size_t>(p) * d * d * l, 0.0);
            const bool need_dx = li > 0;
            Tensor3 dxp(xp.rows, xp.cols, xp.channels);
            conv_backward(xp, conv->bank, wt, delta, need_dx ? &dxp : nullptr, &dwt,
                          &g.slots[s0 + p]);
            scatter_filter_grads(dwt, d, l, p, g.slots, s0);
            if (need_dx) delta = crop_pad(dxp, conv->pad);
        } else if (const auto* bl = std::get_if<BasisConvLayer>(&layer)) {
            const Tensor3& z = acts[li].aux;
            const int p = bl->p();
            const int q = bl->q();
            // combination stage: gradients of coeffs/biases and of z
            std::vector<double>& dcoeffs = g.slots[s0];
            std::vector<double>& dstage = g.slots[s0 + 1];
            std::vector<double>& dbias = g.slots[s0 + 2];
            Tensor3 dz(z.rows, z.cols, z.channels);
            for (int m = 0; m < delta.rows; ++m)
                for (int n = 0; n < delta.cols; ++n) {
                    const double* dv = &delta.at(m, n, 0);
                    const double* zr = &z.at(m, n, 0);
                    double* dzr = &dz.at(m, n, 0);
                    for (int k = 0; k < p; ++k) {
                        const double gk = dv[k];
                        if (gk == 0.0) continue;
                        dbias[k] += gk;
                        const double* wrow = &bl->coeffs.data[static_cast<std::size_t>(k) * q];
                        double* drow = &dcoeffs[static_cast<std::size_t>(k) * q];
                        for (int qi = 0; qi < q; ++qi) {
                            drow[qi] += gk * zr[qi];
                            dzr[qi] += gk * wrow[qi];
                        }
                    }
                }
            for (int m = 0; m < dz.rows; ++m)
                for (int n = 0; n < dz.cols; ++n) {
                    const double* dzr = &dz.at(m, n, 0);
                    for (int qi = 0; qi < q; ++qi) dstage[qi] += dzr[qi];
                }
            // fixed stage: only the input gradient flows; the basis is frozen
            if (li > 0) {
                const Tensor3 xp = zero_pad(input, bl->pad);
                const FilterBank fixed = basis_bank(*bl);
                const std::vector<double> wt = transpose_bank(fixed);
                Tensor3 dxp(xp.rows, xp.cols, xp.channels);
                conv_backward(xp, fixed, wt, dz, &dxp, nullptr, nullptr);
                delta = crop_pad(dxp, bl->pad);
            }
        } else if (std::get_if<ReLULayer>(&layer)) {
            Tensor3 din(input.rows, input.cols, input.channels);
            for (std::size_t i = 0; i < din.data.size(); ++i)
                din.data[i] = input.data[i] > 0.0 ? delta.data[i] : 0.0;
            delta = std::move(din);
        } else if (const auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
            Tensor3 din(input.rows, input.cols, input.channels);
            for (int m = 0; m < delta.rows; ++m)
                for (int n = 0; n < delta.cols; ++n)
                    for (int c = 0; c < delta.channels; ++c) {
                        int bi = 0, bj = 0;
                        double best = -std::numeric_limits<double>::infinity();
                        for (int i = 0; i < pool->window; ++i)
                            for (int j = 0; j < pool->window; ++j) {
                                const double v =
                                    input.at(m * pool->stride + i, n * pool->stride + j, c);
                                if (v > best) {
                                    best = v;
                                    bi = i;
                                    bj = j;
                                }
                            }
                        din.at(m * pool->stride + bi, n * pool->stride + bj, c) += delta.at(m, n, c);
                    }
            delta = std::move(din);
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&layer)) {
            std::vector<double>& dw = g.slots[s0];
            std::vector<double>& db = g.slots[s0 + 1];
            const int out_n = fc->weights.rows;
            const int in_n = fc->weights.cols;
            Tensor3 din(input.rows, input.cols, input.channels);
            for (int o = 0; o < out_n; ++o) {
                const double gk = delta.data[o];
                db[o] += gk;
                if (gk == 0.0) continue;
                const double* wrow = &fc->weights.data[static_cast<std::size_t>(o) * in_n];
                double* dwrow = &dw[static_cast<std::size_t>(o) * in_n];
                for (int i = 0; i < in_n; ++i) {
                    dwrow[i] += gk * input.data[i];
                    din.data[i] += gk * wrow[i];
                }
            }
            delta = std::move(din);
        } else {
            throw std::logic_error("softmax may only appear as the final layer");
        }
    }
}

BatchResult backward_impl(const Model& model, const std::vector<const Tensor3*>& batch,
                          const std::vector<int>& labels) {
    if (batch.empty()) throw std::invalid_argument("backward: empty batch");
    if (batch.size() != labels.size())
        throw std::invalid_argument("backward: batch and label counts differ");
    if (!std::holds_alternative<SoftmaxLayer>(model.layers.back()))
        throw std::invalid_argument("backward: model must end in softmax");

    BatchResult res;
    res.grads = make_grad(model);
    const std::vector<std::size_t> slot0 = slot_offsets(model);
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t s = 0; s < batch.size(); ++s)
        backprop_sample(model, slot0, *batch[s], labels[s], res.grads, loss_sum, correct);
    const double inv = 1.0 / static_cast<double>(batch.size());
    res.grads.scale(inv);
    res.loss = loss_sum * inv;
    res.accuracy = static_cast<double>(correct) * inv;
    return res;
}

}  // namespace

BatchResult backward(const Model& model, const std::vector<Tensor3>& batch,
                     const std::vector<int>& labels) {
    std::vector<const Tensor3*> ptrs;
    ptrs.reserve(batch.size());
    for (const Tensor3& t : batch) ptrs.push_back(&t);
    return backward_impl(model, ptrs, labels);
}

double batch_loss(const Model& model, const std::vector<Tensor3>& batch,
                  const std::vector<int>& labels) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::vector<double> probs = predict(model, batch[i]);
        if (labels[i] < 0 || labels[i] >= static_cast<int>(probs.size()))
            throw std::invalid_argument("batch_loss: label out of range");
        loss += -std::log(std::max(probs[labels[i]], 1e-300));
    }
    return loss / static_cast<double>(batch.size());
}

// ---- training ----------------------------------------------------------------

double lr_at(const std::vector<std::pair<int, double>>& schedule, int epoch) {
    if (schedule.empty()) throw std::invalid_argument("empty learning-rate schedule");
    double rate = schedule.front().second;
    for (const auto& [start, r] : schedule)
        if (start <= epoch) rate = r;
    return rate;
}

TrainHistory train(Model& model, const LabeledDataset& data, const TrainConfig& config,
                   const LabeledDataset* eval_set) {
    if (data.samples.empty()) throw std::invalid_argument("train: empty dataset");
    if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (config.lr_schedule.empty()) throw std::invalid_argument("train: empty lr schedule");
    for (const auto& [start, rate] : config.lr_schedule)
        if (rate < 0.0) throw std::invalid_argument("train: negative learning rate");
    model.validate();

    std::vector<ParamSpan> spans = param_spans(model);
    std::vector<std::vector<double>> momentum(spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) momentum[i].assign(spans[i].len, 0.0);

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(data.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainHistory history;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = lr_at(config.lr_schedule, epoch);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        double correct = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<const Tensor3*> batch;
            std::vector<int> labels;
            batch.reserve(stop - start);
            labels.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(&data.samples[order[i]].image);
                labels.push_back(data.samples[order[i]].label);
            }
            const BatchResult res = backward_impl(model, batch, labels);
            loss_sum += res.loss * static_cast<double>(batch.size());
            correct += res.accuracy * static_cast<double>(batch.size());

            for (std::size_t i = 0; i < spans.size(); ++i) {
                if (!in_phase(spans[i].cls, config.phase)) continue;
                double* p = spans[i].data;
                double* v = momentum[i].data();
                const double* grad = res.grads.slots[i].data();
                for (std::size_t j = 0; j < spans[i].len; ++j) {
                    v[j] = config.momentum * v[j] - lr * grad[j];
                    p[j] += v[j];
                }
            }
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(data.samples.size());
        stats.train_acc = correct / static_cast<double>(data.samples.size());
        stats.eval_acc =
            eval_set ? evaluate(model, *eval_set) : std::numeric_limits<double>::quiet_NaN();
        history.epochs.push_back(stats);
    }
    return history;
}

double evaluate(const Model& model, const LabeledDataset& data) {
    if (data.samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
    int correct = 0;
    for (const LabeledSample& s : data.samples) {
        const std::vector<double> probs = predict(model, s.image);
        int arg = 0;
        for (int c = 1; c < static_cast<int>(probs.size()); ++c)
            if (probs[c] > probs[arg]) arg = c;  // ties keep the lowest index
        if (arg == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.samples.size());
}

FinetunePlan plan_finetune(double scale) {
    if (scale < 0.0) throw std::invalid_argument("finetune: negative scale");
    FinetunePlan plan;
    plan.coeff_epochs = static_cast<int>(std::llround(15.0 * scale));
    plan.nonconv_epochs = static_cast<int>(std::llround(10.0 * scale));
    plan.step = std::max(1, static_cast<int>(std::llround(5.0 * scale)));
    double rate = 0.1;
    for (int e = 1; e <= plan.coeff_epochs; e += plan.step) {
        plan.phase1_schedule.emplace_back(e, rate);
        rate /= 10.0;
    }
    plan.phase2_rate = 5e-4;
    return plan;
}

TrainHistory finetune(Model& model, const LabeledDataset& data, double scale, std::uint64_t seed,
                      const LabeledDataset* eval_set, int batch_size) {
    bool has_basis = false;
    for (const Layer& l : model.layers)
        if (std::holds_alternative<BasisConvLayer>(l)) has_basis = true;
    if (!has_basis) throw std::invalid_argument("finetune: model has no basis layers");

    const FinetunePlan plan = plan_finetune(scale);
    TrainHistory history;
    std::uint64_t state = seed;
    const std::uint64_t seed1 = splitmix64(state);
    const std::uint64_t seed2 = splitmix64(state);

    if (plan.coeff_epochs > 0) {
        TrainConfig cfg;
        cfg.epochs = plan.coeff_epochs;
        cfg.batch_size = batch_size;
        cfg.lr_schedule = plan.phase1_schedule;
        cfg.phase = TrainPhase::coeffs_only;
        cfg.seed = seed1;
        TrainHistory h1 = train(model, data, cfg, eval_set);
        history.epochs.insert(history.epochs.end(), h1.epochs.begin(), h1.epochs.end());
    }
    if (plan.nonconv_epochs > 0) {
        TrainConfig cfg;
        cfg.epochs = plan.nonconv_epochs;
        cfg.batch_size = batch_size;
        cfg.lr_schedule = {{1, plan.phase2_rate}};
        cfg.phase = TrainPhase::non_conv_only;
        cfg.seed = seed2;
        TrainHistory h2 = train(model, data, cfg, eval_set);
        history.epochs.insert(history.epochs.end(), h2.epochs.begin(), h2.epochs.end());
    }
    return history;
}

// ---- the toy classifier ------------------------------------------------------

namespace {

FilterBank he_bank(int d, int l, int p, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / (static_cast<double>(l) * d * d)));
    FilterBank bank;
    bank.filters.reserve(p);
    for (int k = 0; k < p; ++k) {
        Filter3 f(d, l);
        for (double& v : f.data) v = gauss(rng);
        bank.filters.push_back(std::move(f));
    }
    bank.biases.assign(p, 0.0);
    return bank;
}

FullyConnectedLayer he_fc(int out, int in, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    FullyConnectedLayer fc;
    fc.weights = Matrix(out, in);
    for (double& v : fc.weights.data) v = gauss(rng);
    fc.biases.assign(out, 0.0);
    return fc;
}

BasisConvLayer random_basis_layer(int d, int l, int p, std::uint64_t basis_seed,
                                  std::mt19937_64& rng) {
    BasisConvLayer layer;
    layer.basis = random_orthonormal(d, l, p, basis_seed);  // Q = P
    layer.coeffs = Matrix(p, p);
    std::normal_distribution<double> gauss(0.0, std::sqrt(1.0 / static_cast<double>(p)));
    for (double& v : layer.coeffs.data) v = gauss(rng);
    layer.basis_biases.assign(p, 0.0);
    layer.biases.assign(p, 0.0);
    layer.pad = 2;
    return layer;
}

}  // namespace

Model build_toy_net(ToyKind kind, std::uint64_t seed) {
    std::uint64_t state = seed;
    const std::uint64_t b1 = splitmix64(state);
    const std::uint64_t b2 = splitmix64(state);
    const std::uint64_t b3 = splitmix64(state);
    std::mt19937_64 rng(splitmix64(state));

    Model m;
    m.input_shape = {32, 32, 3};
    if (kind == ToyKind::direct) {
        m.layers.emplace_back(ConvLayer{he_bank(5, 3, 32, rng), 2});
        m.layers.emplace_back(ReLULayer{});
        m.layers.emplace_back(MaxPoolLayer{3, 2});
        m.layers.emplace_back(ConvLayer{he_bank(5, 32, 32, rng), 2});
        m.layers.emplace_back(ReLULayer{});
        m.layers.emplace_back(MaxPoolLayer{3, 2});
        m.layers.emplace_back(ConvLayer{he_bank(5, 32, 64, rng), 2});
        m.layers.emplace_back(ReLULayer{});
        m.layers.emplace_back(MaxPoolLayer{3, 2});
    } else {
        m.layers.emplace_back(random_basis_layer(5, 3, 32, b1, rng));
        m.layers.emplace_back(ReLULayer{});
        m.layers.emplace_back(MaxPoolLayer{3, 2});
        m.layers.emplace_back(random_basis_layer(5, 32, 32, b2, rng));
        m.layers.emplace_back(ReLULayer{});
        m.layers.emplace_back(MaxPoolLayer{3, 2});
        m.layers.emplace_back(random_basis_layer(5, 32, 64, b3, rng));
        m.layers.emplace_back(ReLULayer{});
        m.layers.emplace_back(MaxPoolLayer{3, 2});
    }
    m.layers.emplace_back(he_fc(64, 576, rng));
    m.layers.emplace_back(ReLULayer{});
    m.layers.emplace_back(he_fc(10, 64, rng));
    m.layers.emplace_back(SoftmaxLayer{});
    m.validate();
    return m;
}

}  // namespace basisconv
