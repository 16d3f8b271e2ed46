#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "basisconv/cost.hpp"
#include "basisconv/network.hpp"
#include "basisconv/serialize.hpp"

namespace basisconv {

// Bad flags or flag combinations (exit code 1; file format problems are
// FormatError / exit 2, everything else exits 3).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataOptions {
    std::string spec = "synth";  // "synth" or "cifar10:PATH"
    std::string test_spec;       // optional second source; synth derives its own
    int classes = 10;
    int per_class = 200;
    int test_per_class = 50;
    double noise = 0.3;
    std::uint64_t seed = 7;
};

struct DataPair {
    LabeledDataset train;
    LabeledDataset test;
};

DataPair load_data(const DataOptions& opts);

struct TrainOptions {
    std::string arch = "toy-direct";  // toy-direct | toy-basis
    DataOptions data;
    int epochs = 10;
    int batch_size = 32;
    double lr = 0.05;
    int lr_drop_every = 0;  // /10 every N epochs when positive
    double momentum = 0.9;
    std::uint64_t seed = 1;
    std::string out;
    bool f32 = false;
    bool json_manifest = false;
};
int cmd_train(const TrainOptions& opts);

struct CompressOptions {
    std::string model_in;
    std::string out;
    double t = 0;                  // one of t / q_per_layer is set
    std::vector<int> q_per_layer;  // one Q per convolution layer
    bool f32 = false;
    bool json_manifest = false;
};
int cmd_compress(const CompressOptions& opts);

struct FinetuneOptions {
    std::string model_in;
    std::string out;
    DataOptions data;
    double scale = 1.0;
    int batch_size = 32;
    std::uint64_t seed = 1;
    bool f32 = false;
    bool json_manifest = false;
};
int cmd_finetune(const FinetuneOptions& opts);

struct SweepRow {
    double t = 0;
    double retained_pct = 0;
    int q_total = 0;
    int p_total = 0;
    std::uint64_t mults = 0;
    std::uint64_t params = 0;
    double acc_before = 0;
    double acc_after = 0;
    bool has_after = false;
};

struct SweepOptions {
    std::string model_in;
    DataOptions data;
    std::vector<double> t_list;
    std::string csv_out;
    bool no_finetune = false;
    double scale = 0.5;
    int batch_size = 32;
    std::uint64_t seed = 1;
};

std::vector<SweepRow> run_sweep(const Model& base, const DataPair& data, const SweepOptions& opts);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);
int cmd_sweep(const SweepOptions& opts);

struct CostOptions {
    std::string model_in;       // or
    std::string arch;           // toy-direct | toy-basis
    std::string input_shape;    // "MxNxL"; defaults to the model's own
    std::uint64_t seed = 1;     // used when costing a named architecture
};
int cmd_cost(const CostOptions& opts);

struct EvalOptions {
    std::string model_in;
    DataOptions data;
};
int cmd_eval(const EvalOptions& opts);

struct InspectOptions {
    std::string model_in;
};
std::string inspect_listing(const Model& model);
int cmd_inspect(const InspectOptions& opts);

/// Full command-line surface; returns the process exit code
/// (0 ok, 1 usage, 2 format, 3 runtime).
int run_cli(int argc, char** argv);

}  // namespace basisconv
