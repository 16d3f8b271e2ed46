#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "basisconv/data.hpp"
#include "basisconv/layer.hpp"

namespace basisconv {

struct ReLULayer {};

struct MaxPoolLayer {
    int window = 3;
    int stride = 2;
};

// out x in weights applied to the input flattened in (row, col, channel) order.
struct FullyConnectedLayer {
    Matrix weights;
    std::vector<double> biases;
};

struct SoftmaxLayer {};

using Layer = std::variant<ConvLayer, BasisConvLayer, ReLULayer, MaxPoolLayer,
                           FullyConnectedLayer, SoftmaxLayer>;

struct Shape3 {
    int rows = 0;
    int cols = 0;
    int channels = 0;
    bool operator==(const Shape3&) const = default;
};

struct Model {
    Shape3 input_shape;
    std::vector<Layer> layers;

    /// Walks the shape chain and throws on any inconsistency. `basis_tol` is
    /// the orthonormality tolerance for basis layers (loosened by the loader
    /// for f32 payloads).
    void validate(double basis_tol = 1e-8) const;
    Shape3 output_shape() const;
    std::vector<Shape3> shape_chain() const;
};

// ---- parameter enumeration -------------------------------------------------

enum class ParamClass {
    conv_filters,
    conv_biases,
    basis_coeffs,
    basis_stage_biases,  // fixed-stage bias vector of a basis layer
    basis_biases,        // combination-stage bias vector of a basis layer
    fc_weights,
    fc_biases,
};

enum class TrainPhase { all, coeffs_only, non_conv_only };

bool in_phase(ParamClass cls, TrainPhase phase);

// Mutable view of one trainable array. The frozen basis matrices are never
// enumerated, so no optimizer or gradient path can touch them.
struct ParamSpan {
    double* data = nullptr;
    std::size_t len = 0;
    ParamClass cls = ParamClass::conv_filters;
    int layer_index = 0;
    int part = 0;  // filter index within a bank; 0 otherwise
};

std::vector<ParamSpan> param_spans(Model& model);

// Gradient buffers aligned one-to-one with param_spans(model).
struct ModelGrad {
    std::vector<std::vector<double>> slots;
    void scale(double s);
};

ModelGrad make_grad(const Model& model);

// ---- forward / backward ----------------------------------------------------

/// Per-sample forward pass. Returns the final activation flattened
/// (class probabilities when the model ends in softmax).
std::vector<double> predict(const Model& model, const Tensor3& x, MultCounter* mc = nullptr);

/// Batch forward: one probability vector per sample.
std::vector<std::vector<double>> forward(const Model& model, const std::vector<Tensor3>& batch,
                                         MultCounter* mc = nullptr);

struct BatchResult {
    ModelGrad grads;        // mean gradients over the batch
    double loss = 0;        // mean cross-entropy
    double accuracy = 0;    // fraction argmax-correct
};

/// Mean cross-entropy gradients for every trainable parameter. The model must
/// end in a softmax layer.
BatchResult backward(const Model& model, const std::vector<Tensor3>& batch,
                     const std::vector<int>& labels);

/// Mean cross-entropy of the batch (used by the finite-difference tests).
double batch_loss(const Model& model, const std::vector<Tensor3>& batch,
                  const std::vector<int>& labels);

// ---- training ----------------------------------------------------------------

struct TrainConfig {
    int epochs = 1;
    int batch_size = 32;
    // (first epoch, rate) pairs, 1-based, ascending; the last entry whose
    // epoch_start <= current epoch wins.
    std::vector<std::pair<int, double>> lr_schedule = {{1, 0.01}};
    double momentum = 0.9;
    std::uint64_t seed = 0;
    TrainPhase phase = TrainPhase::all;
};

double lr_at(const std::vector<std::pair<int, double>>& schedule, int epoch);

struct EpochStats {
    double train_loss = 0;
    double train_acc = 0;
    double eval_acc = 0;  // NaN when no eval set was given
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

/// Minibatch SGD with momentum; deterministic for a fixed seed.
TrainHistory train(Model& model, const LabeledDataset& data, const TrainConfig& config,
                   const LabeledDataset* eval_set = nullptr);

/// Fraction of argmax-correct predictions; ties pick the lowest class index.
double evaluate(const Model& model, const LabeledDataset& data);

// Two-step fine-tuning: coefficients only with a stepped rate, then all
// non-convolutional parameters at a small constant rate.
struct FinetunePlan {
    int coeff_epochs = 0;
    int step = 0;  // epochs between /10 rate drops in step one
    int nonconv_epochs = 0;
    std::vector<std::pair<int, double>> phase1_schedule;
    double phase2_rate = 5e-4;
};

FinetunePlan plan_finetune(double scale);

TrainHistory finetune(Model& model, const LabeledDataset& data, double scale, std::uint64_t seed,
                      const LabeledDataset* eval_set = nullptr, int batch_size = 32);

// ---- the toy classifier ------------------------------------------------------

enum class ToyKind { direct, basis };

/// 32x32x3 three-stage CNN (5x5 convs of 32/32/64 filters, pool 3/2, two FC
/// stages, softmax). The basis variant swaps each convolution for a frozen
/// random orthonormal bank of the same width plus trainable 1x1 combiners.
Model build_toy_net(ToyKind kind, std::uint64_t seed);

}  // namespace basisconv
