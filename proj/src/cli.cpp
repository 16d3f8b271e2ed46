#include "basisconv/cli.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"

namespace basisconv {

namespace {

std::string format_double(const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

Shape3 parse_shape(const std::string& text) {
    Shape3 s;
    char sep1 = 0, sep2 = 0;
    std::istringstream in(text);
    if (!(in >> s.rows >> sep1 >> s.cols >> sep2 >> s.channels) || sep1 != 'x' || sep2 != 'x' ||
        s.rows < 1 || s.cols < 1 || s.channels < 1)
        throw UsageError("bad shape '" + text + "', expected MxNxL");
    return s;
}

Model build_arch(const std::string& arch, std::uint64_t seed) {
    if (arch == "toy-direct") return build_toy_net(ToyKind::direct, seed);
    if (arch == "toy-basis") return build_toy_net(ToyKind::basis, seed);
    throw UsageError("unknown architecture '" + arch + "' (expected toy-direct or toy-basis)");
}

LabeledDataset load_one(const std::string& spec, const DataOptions& opts, Split split) {
    if (spec.rfind("cifar10:", 0) == 0) {
        LabeledDataset d = load_cifar10_binary(spec.substr(8));
        d.split = split;
        return d;
    }
    throw UsageError("unknown data spec '" + spec + "' (expected synth or cifar10:PATH)");
}

void save_with_manifest(const Model& model, const std::string& out, bool f32, bool manifest) {
    if (out.empty()) throw UsageError("--out is required");
    save_model(model, out, f32 ? ScalarWidth::f32 : ScalarWidth::f64);
    if (manifest) write_json_manifest(model, out + ".json");
}

struct CompressResult {
    Model model;
    std::vector<LayerReport> reports;
};

CompressResult compress_model(const Model& base, double t, const std::vector<int>& q_per_layer) {
    int conv_count = 0;
    for (const Layer& l : base.layers)
        if (std::holds_alternative<ConvLayer>(l)) ++conv_count;
    if (conv_count == 0) throw std::runtime_error("model has no convolution layers to compress");
    if (!q_per_layer.empty() && static_cast<int>(q_per_layer.size()) != conv_count)
        throw UsageError("--q-per-layer needs " + std::to_string(conv_count) + " entries, got " +
                         std::to_string(q_per_layer.size()));

    CompressResult res;
    res.model.input_shape = base.input_shape;
    int conv_index = 0;
    for (const Layer& l : base.layers) {
        if (const auto* conv = std::get_if<ConvLayer>(&l)) {
            auto [layer, report] = q_per_layer.empty()
                                       ? to_basis_layer(*conv, t)
                                       : to_basis_layer_q(*conv, q_per_layer[conv_index]);
            ++conv_index;
            res.model.layers.emplace_back(std::move(layer));
            res.reports.push_back(report);
        } else {
            res.model.layers.push_back(l);
        }
    }
    res.model.validate();
    return res;
}

void print_reports(const std::vector<LayerReport>& reports) {
    int total_p = 0, total_q = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const LayerReport& r = reports[i];
        std::printf("conv %zu: D=%d L=%d P=%d -> Q=%d  retained=%.4f  recon_err=%.6f\n", i,
                    r.filter_size, r.channels, r.p, r.q, r.retained_fraction,
                    r.reconstruction_error);
        total_p += r.p;
        total_q += r.q;
    }
    std::printf("retained filters: %d of %d (%.2f%%)\n", total_q, total_p,
                100.0 * total_q / total_p);
}

void print_history(const TrainHistory& history) {
    for (std::size_t e = 0; e < history.epochs.size(); ++e) {
        const EpochStats& s = history.epochs[e];
        if (std::isnan(s.eval_acc))
            std::printf("epoch %zu: loss %.4f  train_acc %.4f\n", e + 1, s.train_loss, s.train_acc);
        else
            std::printf("epoch %zu: loss %.4f  train_acc %.4f  eval_acc %.4f\n", e + 1,
                        s.train_loss, s.train_acc, s.eval_acc);
    }
}

std::vector<std::pair<int, double>> make_schedule(double lr, int drop_every, int epochs) {
    std::vector<std::pair<int, double>> schedule{{1, lr}};
    if (drop_every > 0)
        for (int e = 1 + drop_every; e <= epochs; e += drop_every) {
            lr /= 10.0;
            schedule.emplace_back(e, lr);
        }
    return schedule;
}

}  // namespace

DataPair load_data(const DataOptions& opts) {
    DataPair pair;
    if (opts.spec == "synth") {
        auto [train, test] = synth_split(opts.classes, opts.per_class, opts.test_per_class, 32, 32,
                                         3, opts.seed, opts.noise);
        pair.train = std::move(train);
        pair.test = std::move(test);
        return pair;
    }
    pair.train = load_one(opts.spec, opts, Split::train);
    pair.test = opts.test_spec.empty() ? pair.train : load_one(opts.test_spec, opts, Split::test);
    return pair;
}

int cmd_train(const TrainOptions& opts) {
    Model model = build_arch(opts.arch, opts.seed);
    const DataPair data = load_data(opts.data);

    TrainConfig cfg;
    cfg.epochs = opts.epochs;
    cfg.batch_size = opts.batch_size;
    cfg.lr_schedule = make_schedule(opts.lr, opts.lr_drop_every, opts.epochs);
    cfg.momentum = opts.momentum;
    cfg.seed = opts.seed;

    std::printf("training %s on %zu samples (seed %" PRIu64 ")\n", opts.arch.c_str(),
                data.train.size(), opts.seed);
    const TrainHistory history = train(model, data.train, cfg, &data.test);
    print_history(history);
    save_with_manifest(model, opts.out, opts.f32, opts.json_manifest);
    std::printf("saved %s\n", opts.out.c_str());
    return 0;
}

int cmd_compress(const CompressOptions& opts) {
    if (opts.q_per_layer.empty() && !(opts.t > 0.0 && opts.t <= 1.0))
        throw UsageError("--t must be in (0, 1] unless --q-per-layer is given");
    const Model base = load_model(opts.model_in);
    CompressResult res = compress_model(base, opts.t, opts.q_per_layer);
    print_reports(res.reports);
    save_with_manifest(res.model, opts.out, opts.f32, opts.json_manifest);
    std::printf("saved %s\n", opts.out.c_str());
    return 0;
}

int cmd_finetune(const FinetuneOptions& opts) {
    Model model = load_model(opts.model_in);
    const DataPair data = load_data(opts.data);
    const double before = evaluate(model, data.test);
    if (plan_finetune(opts.scale).coeff_epochs == 0 &&
        plan_finetune(opts.scale).nonconv_epochs == 0) {
        std::fprintf(stderr, "warning: scale %g rounds to zero epochs; nothing to do\n", opts.scale);
        save_with_manifest(model, opts.out, opts.f32, opts.json_manifest);
        return 0;
    }
    const TrainHistory history =
        finetune(model, data.train, opts.scale, opts.seed, &data.test, opts.batch_size);
    print_history(history);
    const double after = evaluate(model, data.test);
    std::printf("accuracy before %.4f after %.4f\n", before, after);
    save_with_manifest(model, opts.out, opts.f32, opts.json_manifest);
    std::printf("saved %s\n", opts.out.c_str());
    return 0;
}

std::vector<SweepRow> run_sweep(const Model& base, const DataPair& data, const SweepOptions& opts) {
    if (opts.t_list.empty()) throw UsageError("--t-list must not be empty");
    std::vector<SweepRow> rows;
    for (double t : opts.t_list) {
        if (!(t > 0.0 && t <= 1.0)) throw UsageError("threshold " + std::to_string(t) + " outside (0, 1]");
        CompressResult res = compress_model(base, t, {});
        SweepRow row;
        row.t = t;
        for (const LayerReport& r : res.reports) {
            row.q_total += r.q;
            row.p_total += r.p;
        }
        row.retained_pct = 100.0 * row.q_total / row.p_total;
        const CostReport cost = model_cost_report(res.model, res.model.input_shape);
        row.mults = cost.conv_mults;
        row.params = cost.conv_params;
        row.acc_before = evaluate(res.model, data.test);
        if (!opts.no_finetune) {
            finetune(res.model, data.train, opts.scale, opts.seed, nullptr, opts.batch_size);
            row.acc_after = evaluate(res.model, data.test);
            row.has_after = true;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "t,retained_pct,Q_total,P_total,mults,params,acc_before,acc_after\n";
    for (const SweepRow& r : rows) {
        out += format_double("%.6g", r.t);
        out += "," + format_double("%.4f", r.retained_pct);
        out += "," + std::to_string(r.q_total);
        out += "," + std::to_string(r.p_total);
        out += "," + std::to_string(r.mults);
        out += "," + std::to_string(r.params);
        out += "," + format_double("%.6f", r.acc_before);
        out += ",";
        if (r.has_after) out += format_double("%.6f", r.acc_after);
        out += "\n";
    }
    return out;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) ||
        line != "t,retained_pct,Q_total,P_total,mults,params,acc_before,acc_after")
        throw FormatError("sweep csv: bad header");
    std::vector<SweepRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.push_back("");
        if (fields.size() != 8) throw FormatError("sweep csv: bad row '" + line + "'");
        SweepRow r;
        r.t = std::stod(fields[0]);
        r.retained_pct = std::stod(fields[1]);
        r.q_total = std::stoi(fields[2]);
        r.p_total = std::stoi(fields[3]);
        r.mults = std::stoull(fields[4]);
        r.params = std::stoull(fields[5]);
        r.acc_before = std::stod(fields[6]);
        r.has_after = !fields[7].empty();
        if (r.has_after) r.acc_after = std::stod(fields[7]);
        rows.push_back(r);
    }
    return rows;
}

int cmd_sweep(const SweepOptions& opts) {
    if (opts.csv_out.empty()) throw UsageError("--csv is required");
    const Model base = load_model(opts.model_in);
    const DataPair data = load_data(opts.data);
    const std::vector<SweepRow> rows = run_sweep(base, data, opts);
    const std::string csv = sweep_csv(rows);
    std::ofstream out(opts.csv_out);
    if (!out) throw std::runtime_error("cannot open " + opts.csv_out + " for writing");
    out << csv;
    std::fputs(csv.c_str(), stdout);
    return 0;
}

int cmd_cost(const CostOptions& opts) {
    if (opts.model_in.empty() == opts.arch.empty())
        throw UsageError("give exactly one of --model or --arch");
    const Model model =
        opts.model_in.empty() ? build_arch(opts.arch, opts.seed) : load_model(opts.model_in);
    const Shape3 shape =
        opts.input_shape.empty() ? model.input_shape : parse_shape(opts.input_shape);
    const CostReport report = model_cost_report(model, shape);

    std::printf("%-4s %-10s %-9s %14s %12s %12s\n", "#", "layer", "filters", "mults", "params",
                "stored");
    for (std::size_t i = 0; i < report.layers.size(); ++i) {
        const LayerCost& c = report.layers[i];
        std::printf("%-4zu %-10s %-9d %14" PRIu64 " %12" PRIu64 " %12" PRIu64 "\n", i,
                    c.kind.c_str(), c.filters, c.mults, c.params, c.stored);
    }
    std::printf("conv mults %" PRIu64 " (%.6f GFlops), conv params %" PRIu64
                ", total params %" PRIu64 ", stored filter scalars %" PRIu64 "\n",
                report.conv_mults, report.gflops(), report.conv_params, report.total_params,
                report.stored_scalars);
    return 0;
}

int cmd_eval(const EvalOptions& opts) {
    const Model model = load_model(opts.model_in);
    const DataPair data = load_data(opts.data);
    std::printf("accuracy: %.2f%%\n", 100.0 * evaluate(model, data.test));
    return 0;
}

std::string inspect_listing(const Model& model) {
    std::ostringstream out;
    out << "input " << model.input_shape.rows << "x" << model.input_shape.cols << "x"
        << model.input_shape.channels << "\n";
    const std::vector<Shape3> chain = model.shape_chain();
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const Shape3& s = chain[i + 1];
        out << i << ": ";
        if (const auto* conv = std::get_if<ConvLayer>(&model.layers[i])) {
            out << "conv " << conv->bank.filter_size() << "x" << conv->bank.filter_size() << "x"
                << conv->bank.channels() << " -> " << conv->bank.count() << " filters, pad "
                << conv->pad;
        } else if (const auto* bl = std::get_if<BasisConvLayer>(&model.layers[i])) {
            out << "basisconv Q=" << bl->q() << " of " << bl->basis.filter_size << "x"
                << bl->basis.filter_size << "x" << bl->basis.channels << " ("
                << (bl->basis.origin == BasisOrigin::random ? "random" : "eigen")
                << ", frozen) -> P=" << bl->p() << ", pad " << bl->pad;
            if (bl->basis.origin == BasisOrigin::random) out << ", seed " << bl->basis.seed;
        } else if (std::holds_alternative<ReLULayer>(model.layers[i])) {
            out << "relu";
        } else if (const auto* pool = std::get_if<MaxPoolLayer>(&model.layers[i])) {
            out << "maxpool " << pool->window << "/" << pool->stride;
        } else if (const auto* fc = std::get_if<FullyConnectedLayer>(&model.layers[i])) {
            out << "fc " << fc->weights.rows << "x" << fc->weights.cols;
        } else {
            out << "softmax";
        }
        out << ", out " << s.rows << "x" << s.cols << "x" << s.channels << "\n";
    }
    return out.str();
}

int cmd_inspect(const InspectOptions& opts) {
    const Model model = load_model(opts.model_in);
    std::fputs(inspect_listing(model).c_str(), stdout);
    return 0;
}

namespace {

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UsageError("bad number '" + item + "' in list");
        }
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    for (double v : parse_double_list(text)) {
        if (v != std::floor(v)) throw UsageError("expected integers in list");
        out.push_back(static_cast<int>(v));
    }
    return out;
}

void add_data_flags(CLI::App* cmd, DataOptions& data) {
    cmd->add_option("--data", data.spec, "synth or cifar10:PATH")->capture_default_str();
    cmd->add_option("--test-data", data.test_spec, "separate test source (cifar10:PATH)");
    cmd->add_option("--classes", data.classes, "synthetic class count")->capture_default_str();
    cmd->add_option("--per-class", data.per_class, "synthetic train samples per class")
        ->capture_default_str();
    cmd->add_option("--test-per-class", data.test_per_class, "synthetic test samples per class")
        ->capture_default_str();
    cmd->add_option("--noise", data.noise, "synthetic noise sigma")->capture_default_str();
    cmd->add_option("--data-seed", data.seed, "dataset seed")->capture_default_str();
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"convolution layers as fixed orthonormal bases plus learnable 1x1 combiners"};
    app.require_subcommand(1);

    TrainOptions train_opts;
    CLI::App* train_cmd = app.add_subcommand("train", "train a toy network from scratch");
    train_cmd->add_option("--arch", train_opts.arch, "toy-direct or toy-basis")
        ->capture_default_str();
    add_data_flags(train_cmd, train_opts.data);
    train_cmd->add_option("--epochs", train_opts.epochs)->capture_default_str();
    train_cmd->add_option("--batch-size", train_opts.batch_size)->capture_default_str();
    train_cmd->add_option("--lr", train_opts.lr)->capture_default_str();
    train_cmd->add_option("--lr-drop-every", train_opts.lr_drop_every, "/10 every N epochs")
        ->capture_default_str();
    train_cmd->add_option("--momentum", train_opts.momentum)->capture_default_str();
    train_cmd->add_option("--seed", train_opts.seed, "weights and shuffle seed")
        ->capture_default_str();
    train_cmd->add_option("--out", train_opts.out, "output model file")->required();
    train_cmd->add_flag("--f32", train_opts.f32, "store scalars as f32");
    train_cmd->add_flag("--json-manifest", train_opts.json_manifest, "write <out>.json summary");

    CompressOptions compress_opts;
    std::string q_list_text;
    CLI::App* compress_cmd = app.add_subcommand("compress", "convert conv layers to basis form");
    compress_cmd->add_option("--model", compress_opts.model_in)->required();
    compress_cmd->add_option("--t", compress_opts.t, "eigenvalue-mass threshold in (0, 1]");
    compress_cmd->add_option("--q-per-layer", q_list_text, "explicit Q list, e.g. 8,4,16");
    compress_cmd->add_option("--out", compress_opts.out)->required();
    compress_cmd->add_flag("--f32", compress_opts.f32);
    compress_cmd->add_flag("--json-manifest", compress_opts.json_manifest);

    FinetuneOptions finetune_opts;
    CLI::App* finetune_cmd = app.add_subcommand("finetune", "two-step fine-tuning");
    finetune_cmd->add_option("--model", finetune_opts.model_in)->required();
    add_data_flags(finetune_cmd, finetune_opts.data);
    finetune_cmd->add_option("--scale", finetune_opts.scale, "schedule scale; 1.0 = 15+10 epochs")
        ->capture_default_str();
    finetune_cmd->add_option("--batch-size", finetune_opts.batch_size)->capture_default_str();
    finetune_cmd->add_option("--seed", finetune_opts.seed)->capture_default_str();
    finetune_cmd->add_option("--out", finetune_opts.out)->required();
    finetune_cmd->add_flag("--f32", finetune_opts.f32);
    finetune_cmd->add_flag("--json-manifest", finetune_opts.json_manifest);

    SweepOptions sweep_opts;
    std::string t_list_text = "1.0,0.95,0.9,0.85,0.8";
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "threshold sweep to CSV");
    sweep_cmd->add_option("--model", sweep_opts.model_in)->required();
    add_data_flags(sweep_cmd, sweep_opts.data);
    sweep_cmd->add_option("--t-list", t_list_text, "comma list of thresholds")
        ->capture_default_str();
    sweep_cmd->add_option("--csv", sweep_opts.csv_out, "output CSV path")->required();
    sweep_cmd->add_flag("--no-finetune", sweep_opts.no_finetune, "skip the acc_after column");
    sweep_cmd->add_option("--scale", sweep_opts.scale, "fine-tune schedule scale")
        ->capture_default_str();
    sweep_cmd->add_option("--batch-size", sweep_opts.batch_size)->capture_default_str();
    sweep_cmd->add_option("--seed", sweep_opts.seed)->capture_default_str();

    CostOptions cost_opts;
    CLI::App* cost_cmd = app.add_subcommand("cost", "multiplication and parameter accounting");
    cost_cmd->add_option("--model", cost_opts.model_in);
    cost_cmd->add_option("--arch", cost_opts.arch, "cost a named architecture instead");
    cost_cmd->add_option("--input-shape", cost_opts.input_shape, "MxNxL");
    cost_cmd->add_option("--seed", cost_opts.seed)->capture_default_str();

    EvalOptions eval_opts;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate accuracy");
    eval_cmd->add_option("--model", eval_opts.model_in)->required();
    add_data_flags(eval_cmd, eval_opts.data);

    InspectOptions inspect_opts;
    CLI::App* inspect_cmd = app.add_subcommand("inspect", "list layers");
    inspect_cmd->add_option("--model", inspect_opts.model_in)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(train_cmd)) return cmd_train(train_opts);
        if (app.got_subcommand(compress_cmd)) {
            if (!q_list_text.empty()) compress_opts.q_per_layer = parse_int_list(q_list_text);
            return cmd_compress(compress_opts);
        }
        if (app.got_subcommand(finetune_cmd)) return cmd_finetune(finetune_opts);
        if (app.got_subcommand(sweep_cmd)) {
            sweep_opts.t_list = parse_double_list(t_list_text);
            return cmd_sweep(sweep_opts);
        }
        if (app.got_subcommand(cost_cmd)) return cmd_cost(cost_opts);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(eval_opts);
        if (app.got_subcommand(inspect_cmd)) return cmd_inspect(inspect_opts);
        return 1;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace basisconv
