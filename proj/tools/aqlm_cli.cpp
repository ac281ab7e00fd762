// aqlm_cli: quantize, evaluate, sweep and benchmark additive-quantized layers.
//
// Exit codes: 0 ok, 1 I/O or data error, 2 invalid configuration.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "aqlm/aqlm.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace aqlm;

// A ConfigError tagged with the flag that caused it.
struct FlagError : ConfigError {
    FlagError(const std::string& flag, const std::string& what) : ConfigError(flag + ": " + what) {}
};

struct Globals {
    bool json = false;
    std::size_t threads = 0;
};

std::size_t resolve_threads(std::size_t flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("ADDQ_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return std::size_t(v);
        } catch (const std::exception&) {
        }
        throw FlagError("ADDQ_THREADS", std::string("expected a positive integer, got \"") + env + "\"");
    }
    return 1;
}

Matrix load_input(const std::string& flag, const std::string& path) {
    try {
        return load_matrix(path);
    } catch (const FormatError& e) {
        throw FormatError(flag + " " + path + ": " + e.what(), e.offset());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(flag + " " + path + ": " + e.what());
    }
}

json trace_json(const LossTrace& trace) {
    json out = json::array();
    for (const auto& e : trace) out.push_back({{"phase", phase_name(e.phase)}, {"iteration", e.iteration}, {"loss", e.loss}});
    return out;
}

std::string fmt(double v, int prec = 6) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

void print_trace(const LossTrace& trace) {
    std::cout << "trace:\n";
    for (const auto& e : trace)
        std::cout << "  " << std::setw(10) << std::left << phase_name(e.phase) << std::right << std::setw(5) << e.iteration
                  << "  " << fmt(e.loss, 10) << "\n";
}

void emit(const Globals& g, const json& report, const std::function<void()>& human) {
    if (g.json)
        std::cout << report.dump(2) << "\n";
    else
        human();
}

// ----- quantize -----

struct QuantizeOpts {
    std::string weights, calib, out, init = "kmeans", finetune;
    QuantConfig cfg;
};

void check_config(const QuantConfig& c, std::size_t d_in) {
    if (c.group_size < 1) throw FlagError("--group-size", "group size must be >= 1");
    if (d_in % c.group_size != 0)
        throw FlagError("--group-size", "group size " + std::to_string(c.group_size) + " does not divide d_in " +
                                            std::to_string(d_in));
    if (c.code_bits < 1 || c.code_bits > 16) throw FlagError("--code-bits", "code bits must be in [1, 16]");
    if (c.num_codebooks < 1) throw FlagError("--num-codebooks", "number of codebooks must be >= 1");
    if (c.beam_size < 1) throw FlagError("--beam", "beam size must be >= 1");
    if (!(c.rel_tolerance > 0.0)) throw FlagError("--tol", "relative tolerance must be > 0");
    if (!(c.adam_lr >= 0.0) || !std::isfinite(c.adam_lr)) throw FlagError("--lr", "learning rate must be finite and >= 0");
    c.validate_for(d_in);
}

InitMethod parse_init(const std::string& s) {
    if (s == "kmeans") return InitMethod::residual_kmeans;
    if (s == "random") return InitMethod::random;
    throw FlagError("--init", "expected kmeans or random, got \"" + s + "\"");
}

json layer_report(const QuantizeResult<float>& res, const Matrix& w, const GramMatrix& g) {
    return {{"d_out", res.layer.d_out},
            {"d_in", res.layer.d_in},
            {"relative_loss", relative_loss(res.layer, w, g)},
            {"loss", res.trace.back().loss},
            {"avg_bits", avg_bits_per_param(res.layer)},
            {"outer_iterations", res.outer_iterations},
            {"status", res.status == PhaseStatus::ok ? "ok" : "non_finite_loss"},
            {"trace", trace_json(res.trace)}};
}

json config_json(const QuantConfig& c) {
    return {{"group_size", c.group_size}, {"num_codebooks", c.num_codebooks}, {"code_bits", c.code_bits},
            {"beam", c.beam_size},        {"tol", c.rel_tolerance},         {"seed", c.seed}};
}

// "gated:up=P,gate=P,down=P[,norm=P][,act=silu|relu|identity][,eps=E]",
// "mlp:up=P,down=P[,...]" or "single:proj=P[,...]".
struct BlockSpec {
    BlockShape shape;
    std::vector<std::string> names;
    std::vector<std::string> paths;
    std::string norm;
};

BlockSpec parse_block_spec(const std::string& spec) {
    const std::string flag = "--finetune-block";
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw FlagError(flag, "expected WIRING:key=path,...");
    BlockSpec out;
    const std::string wiring = spec.substr(0, colon);
    if (wiring == "gated")
        out.shape.wiring = Wiring::gated, out.names = {"up", "gate", "down"};
    else if (wiring == "mlp")
        out.shape.wiring = Wiring::mlp, out.names = {"up", "down"};
    else if (wiring == "single")
        out.shape.wiring = Wiring::single, out.names = {"proj"}, out.shape.activation = Activation::identity;
    else
        throw FlagError(flag, "unknown wiring \"" + wiring + "\" (expected gated, mlp or single)");

    std::map<std::string, std::string> kv;
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw FlagError(flag, "expected key=value, got \"" + item + "\"");
        if (!kv.emplace(item.substr(0, eq), item.substr(eq + 1)).second)
            throw FlagError(flag, "duplicate key \"" + item.substr(0, eq) + "\"");
    }
    for (const auto& n : out.names) {
        auto it = kv.find(n);
        if (it == kv.end()) throw FlagError(flag, wiring + " wiring needs " + n + "=PATH");
        out.paths.push_back(it->second);
        kv.erase(it);
    }
    if (auto it = kv.find("norm"); it != kv.end()) {
        out.norm = it->second;
        kv.erase(it);
    }
    if (auto it = kv.find("act"); it != kv.end()) {
        if (it->second == "silu")
            out.shape.activation = Activation::silu;
        else if (it->second == "relu")
            out.shape.activation = Activation::relu;
        else if (it->second == "identity")
            out.shape.activation = Activation::identity;
        else
            throw FlagError(flag, "unknown activation \"" + it->second + "\"");
        kv.erase(it);
    }
    if (auto it = kv.find("eps"); it != kv.end()) {
        try {
            out.shape.rms_eps = std::stod(it->second);
        } catch (const std::exception&) {
            throw FlagError(flag, "bad eps \"" + it->second + "\"");
        }
        if (!(out.shape.rms_eps > 0.0)) throw FlagError(flag, "eps must be > 0");
        kv.erase(it);
    }
    out.shape.use_norm = !out.norm.empty();
    if (!kv.empty()) throw FlagError(flag, "unknown key \"" + kv.begin()->first + "\"");
    return out;
}

std::string sibling(const std::string& out, const std::string& name, const std::string& ext) {
    std::filesystem::path p(out);
    const std::string stem = p.stem().string();
    return (p.parent_path() / (stem + "." + name + ext)).string();
}

int run_block(const Globals& g, const QuantizeOpts& o) {
    const auto spec = parse_block_spec(o.finetune);
    const Matrix x = load_input("--calib", o.calib);
    DenseBlock dense;
    dense.shape = spec.shape;
    for (std::size_t l = 0; l < spec.paths.size(); ++l)
        dense.weights.push_back(load_input("--finetune-block " + spec.names[l], spec.paths[l]));
    if (!spec.norm.empty()) {
        const Matrix gain = load_input("--finetune-block norm", spec.norm);
        dense.norm_gain.assign(gain.values().begin(), gain.values().end());
    } else {
        dense.norm_gain.assign(x.rows(), 1.0);
    }
    for (std::size_t l = 0; l < dense.weights.size(); ++l) {
        const bool last = dense.shape.wiring != Wiring::single && l + 1 == dense.weights.size();
        const std::size_t expect_in = last ? dense.weights.front().rows() : x.rows();
        if (dense.weights[l].cols() != expect_in)
            throw FlagError("--finetune-block", spec.names[l] + " has d_in " + std::to_string(dense.weights[l].cols()) +
                                                    ", expected " + std::to_string(expect_in));
        check_config(o.cfg, dense.weights[l].cols());
    }
    try {
        detail::check_block(dense.shape, dense.weights, x.rows(), dense.norm_gain.size());
    } catch (const InvalidInput& e) {
        throw FlagError("--finetune-block", e.what());
    }

    const auto tape = block_forward_dense(dense.shape, dense.norm_gain, dense.weights, x);
    std::vector<LossTrace> traces;
    const auto block = quantize_block<float>(dense, x, o.cfg, &traces);
    const auto ft = finetune_block(block, x, tape.y, o.cfg);

    json layers = json::array();
    for (std::size_t l = 0; l < ft.block.layers.size(); ++l) {
        const auto& layer = ft.block.layers[l];
        const std::string path = sibling(o.out, spec.names[l], ".aqlm");
        save_layer(path, layer);
        const Matrix& inputs = dense.shape.wiring != Wiring::single && l + 1 == dense.weights.size() ? tape.h : tape.u;
        layers.push_back({{"name", spec.names[l]},
                          {"path", path},
                          {"relative_loss", relative_loss(layer, dense.weights[l], inputs)},
                          {"avg_bits", avg_bits_per_param(layer)},
                          {"trace", trace_json(traces[l])}});
    }
    std::string norm_path;
    if (dense.shape.use_norm) {
        norm_path = sibling(o.out, "norm", ".dten");
        save_dten(norm_path, Matrix(ft.block.norm_gain.size(), 1, ft.block.norm_gain), DType::f64, true);
    }
    const double target = frobenius_sq(tape.y);
    const double before = ft.trace.front().loss, after = ft.trace.back().loss;
    json report = {{"command", "quantize"},
                   {"mode", "block"},
                   {"config", config_json(o.cfg)},
                   {"layers", layers},
                   {"norm_path", norm_path},
                   {"block_loss_before", before},
                   {"block_loss_after", after},
                   {"block_relative_loss", target > 0 ? after / target : 0.0},
                   {"finetune_epochs", ft.epochs},
                   {"status", ft.status == PhaseStatus::ok ? "ok" : "non_finite_loss"},
                   {"finetune_trace", trace_json(ft.trace)}};
    emit(g, report, [&] {
        for (const auto& l : layers)
            std::cout << l["name"].get<std::string>() << ": relative loss " << fmt(l["relative_loss"].get<double>())
                      << ", avg bits/param " << fmt(l["avg_bits"].get<double>()) << " -> " << l["path"].get<std::string>()
                      << "\n";
        std::cout << "block loss before fine-tuning " << fmt(before, 10) << ", after " << fmt(after, 10) << " ("
                  << ft.epochs << " epochs)\n";
        print_trace(ft.trace);
    });
    return 0;
}

int run_quantize(const Globals& g, QuantizeOpts o) {
    o.cfg.threads = resolve_threads(g.threads);
    const InitMethod init = parse_init(o.init);
    if (!o.finetune.empty()) return run_block(g, o);
    if (o.weights.empty()) throw FlagError("--weights", "required unless --finetune-block is given");

    const Matrix w = load_input("--weights", o.weights);
    const Matrix x = load_input("--calib", o.calib);
    if (x.rows() != w.cols())
        throw FlagError("--calib", "calibration has " + std::to_string(x.rows()) + " rows but weights have d_in " +
                                       std::to_string(w.cols()));
    check_config(o.cfg, w.cols());
    const GramMatrix G = gram(x);
    const auto res = quantize_layer<float>(w, G, o.cfg, init);
    save_layer(o.out, res.layer);

    json report = {{"command", "quantize"}, {"config", config_json(o.cfg)}, {"out", o.out}};
    report.update(layer_report(res, w, G));
    emit(g, report, [&] {
        std::cout << "relative loss   " << fmt(report["relative_loss"].get<double>(), 10) << "\n"
                  << "avg bits/param  " << fmt(report["avg_bits"].get<double>()) << "\n"
                  << "outer iters     " << res.outer_iterations << "\n"
                  << "status          " << report["status"].get<std::string>() << "\n";
        print_trace(res.trace);
        std::cout << "wrote " << o.out << "\n";
    });
    return 0;
}

// ----- eval -----

struct EvalOpts {
    std::string model, weights, calib;
    std::size_t samples = 4;
};

int run_eval(const Globals& g, const EvalOpts& o) {
    QuantizedLayer<float> layer;
    try {
        layer = load_layer(o.model);
    } catch (const FormatError& e) {
        throw FormatError("--model " + o.model + ": " + e.what(), e.offset());
    }
    const Matrix w = load_input("--weights", o.weights);
    const Matrix x = load_input("--calib", o.calib);
    if (w.rows() != layer.d_out || w.cols() != layer.d_in)
        throw FlagError("--weights", "weights are " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                                         " but the model is " + std::to_string(layer.d_out) + "x" +
                                         std::to_string(layer.d_in));
    if (x.rows() != layer.d_in)
        throw FlagError("--calib", "calibration has " + std::to_string(x.rows()) + " rows but the model has d_in " +
                                       std::to_string(layer.d_in));
    const double rel = relative_loss(layer, w, gram(x));

    const std::size_t threads = resolve_threads(g.threads);
    const std::size_t cols = std::min(o.samples, x.cols());
    double max_err = 0.0;
    std::vector<double> col(x.rows());
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t p = 0; p < x.rows(); ++p) col[p] = x(p, c);
        const auto ref = matvec_reference(layer, col);
        const auto lut = matvec_lut(layer, col, threads);
        for (std::size_t i = 0; i < ref.size(); ++i)
            max_err = std::max(max_err, std::abs(ref[i] - lut[i]) / std::max(1.0, std::abs(ref[i])));
    }
    const bool ok = max_err <= 1e-5;
    json report = {{"command", "eval"},
                   {"model", o.model},
                   {"relative_loss", rel},
                   {"avg_bits", avg_bits_per_param(layer)},
                   {"lut_columns_checked", cols},
                   {"lut_max_rel_error", max_err},
                   {"lut_check", ok ? "pass" : "fail"}};
    emit(g, report, [&] {
        std::cout << "relative loss   " << fmt(rel, 10) << "\n"
                  << "avg bits/param  " << fmt(avg_bits_per_param(layer)) << "\n"
                  << "lut check       " << (ok ? "pass" : "FAIL") << " (" << cols << " columns, max rel error "
                  << fmt(max_err, 3) << ")\n";
    });
    if (!ok) {
        std::cerr << "error: LUT matvec disagrees with reference (max rel error " << max_err << ")\n";
        return 1;
    }
    return 0;
}

// ----- sweep -----

struct SweepOpts {
    std::string weights, calib, configs;
    double budget = 0.0, tolerance = 0.05;
    std::optional<double> lr;
    std::optional<std::size_t> adam_steps, max_iters;
    std::size_t beam = 8;
    double tol = 1e-3;
    std::uint64_t seed = 0;
};

struct SweepConfig {
    std::string label;
    std::size_t m = 0, b = 0, g = 0;
};

// "MxBgsG", e.g. "2x8gs8" for 2 codebooks of 8 bits over groups of 8.
std::vector<SweepConfig> parse_sweep_configs(const std::string& list) {
    static const std::regex re(R"(\s*(\d+)x(\d+)gs(\d+)\s*)");
    std::vector<SweepConfig> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::smatch m;
        if (!std::regex_match(item, m, re)) throw FlagError("--configs", "expected MxBgsG, got \"" + item + "\"");
        SweepConfig c;
        c.m = std::stoul(m[1]);
        c.b = std::stoul(m[2]);
        c.g = std::stoul(m[3]);
        std::ostringstream label;
        label << c.m << "x" << c.b << "gs" << c.g;
        c.label = label.str();
        out.push_back(c);
    }
    if (out.empty()) throw FlagError("--configs", "configuration list is empty");
    return out;
}

int run_sweep(const Globals& g, const SweepOpts& o) {
    const auto configs = parse_sweep_configs(o.configs);
    if (!(o.budget > 0.0)) throw FlagError("--budget-bits", "bit budget must be > 0");
    if (!(o.tolerance >= 0.0)) throw FlagError("--tolerance", "tolerance must be >= 0");
    const Matrix w = load_input("--weights", o.weights);
    const Matrix x = load_input("--calib", o.calib);
    if (x.rows() != w.cols())
        throw FlagError("--calib", "calibration has " + std::to_string(x.rows()) + " rows but weights have d_in " +
                                       std::to_string(w.cols()));
    const GramMatrix G = gram(x);

    struct Row {
        SweepConfig c;
        double bits = 0.0;
        std::optional<double> rel;
        std::string skipped;
        std::size_t iters = 0;
    };
    std::vector<Row> rows;
    for (const auto& c : configs) {
        QuantConfig q;
        q.group_size = c.g;
        q.num_codebooks = c.m;
        q.code_bits = c.b;
        q.beam_size = o.beam;
        q.rel_tolerance = o.tol;
        q.seed = o.seed;
        q.threads = resolve_threads(g.threads);
        if (o.lr) q.adam_lr = *o.lr;
        if (o.adam_steps) q.adam_steps_per_phase = *o.adam_steps;
        if (o.max_iters) q.max_outer_iters = *o.max_iters;
        try {
            check_config(q, w.cols());
        } catch (const ConfigError& e) {
            throw FlagError("--configs", c.label + ": " + e.what());
        }
        Row r{c, avg_bits_per_param(w.rows(), w.cols(), c.g, c.m, c.b), std::nullopt, "", 0};
        if (std::abs(r.bits - o.budget) > o.tolerance) {
            r.skipped = "outside budget";
        } else {
            const auto res = quantize_layer<float>(w, G, q);
            r.rel = relative_loss(res.layer, w, G);
            r.iters = res.outer_iterations;
        }
        rows.push_back(r);
    }
    if (std::none_of(rows.begin(), rows.end(), [](const Row& r) { return r.rel.has_value(); }))
        throw FlagError("--budget-bits", "no configuration within " + fmt(o.tolerance) + " bits of " + fmt(o.budget));
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.rel.has_value() != b.rel.has_value()) return a.rel.has_value();
        return a.rel && *a.rel < *b.rel;
    });

    json table = json::array();
    for (const auto& r : rows) {
        json e = {{"config", r.c.label},
                  {"num_codebooks", r.c.m},
                  {"code_bits", r.c.b},
                  {"group_size", r.c.g},
                  {"avg_bits", r.bits}};
        if (r.rel) {
            e["relative_loss"] = *r.rel;
            e["outer_iterations"] = r.iters;
        } else {
            e["relative_loss"] = nullptr;
            e["skipped"] = r.skipped;
        }
        table.push_back(e);
    }
    json report = {{"command", "sweep"}, {"budget_bits", o.budget}, {"tolerance", o.tolerance}, {"rows", table}};
    emit(g, report, [&] {
        std::cout << std::left << std::setw(12) << "config" << std::right << std::setw(10) << "bits" << std::setw(16)
                  << "relative_loss" << "\n";
        for (const auto& r : rows) {
            std::cout << std::left << std::setw(12) << r.c.label << std::right << std::setw(10) << fmt(r.bits, 5)
                      << std::setw(16) << (r.rel ? fmt(*r.rel) : "skipped") << "\n";
        }
    });
    return 0;
}

// ----- bench -----

struct BenchOpts {
    std::string model;
    std::size_t reps = 100;
    std::uint64_t seed = 0;
};

int run_bench(const Globals& g, const BenchOpts& o) {
    QuantizedLayer<float> layer;
    try {
        layer = load_layer(o.model);
    } catch (const FormatError& e) {
        throw FormatError("--model " + o.model + ": " + e.what(), e.offset());
    }
    const auto rep = bench_matvec(layer, o.reps, o.seed);
    json entries = json::array();
    for (const auto& e : rep.entries) entries.push_back({{"path", e.path}, {"median_ns", e.median_ns}});
    json report = {{"command", "bench"},
                   {"reps", rep.reps},
                   {"entries", entries},
                   {"ratio", rep.ratio},
                   {"lut_entries", rep.lut_entries},
                   {"weight_count", rep.weight_count},
                   {"note", rep.note}};
    emit(g, report, [&] {
        std::cout << std::left << std::setw(12) << "path" << std::right << std::setw(14) << "median_ns" << "\n";
        for (const auto& e : rep.entries)
            std::cout << std::left << std::setw(12) << e.path << std::right << std::setw(14) << fmt(e.median_ns) << "\n";
        std::cout << "reference/lut ratio " << fmt(rep.ratio, 4) << "  (" << rep.lut_entries << " table entries, "
                  << rep.weight_count << " weights)\n";
        if (!rep.note.empty()) std::cout << "note: " << rep.note << "\n";
    });
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Additive quantization of linear layers"};
    app.require_subcommand(1);
    Globals globals;
    app.add_flag("--json", globals.json, "Print one JSON document to stdout");
    app.add_option("--threads", globals.threads, "Worker cap (default: $ADDQ_THREADS or 1)");

    QuantizeOpts qo;
    auto* quant = app.add_subcommand("quantize", "Quantize one layer, or a block with --finetune-block");
    quant->add_option("--weights", qo.weights, "Weight matrix (d_out x d_in), DTEN or text");
    quant->add_option("--calib", qo.calib, "Calibration inputs (d_in x n)")->required();
    quant->add_option("--out", qo.out, "Output .aqlm path")->required();
    quant->add_option("--group-size", qo.cfg.group_size, "Group size g")->capture_default_str();
    quant->add_option("--num-codebooks", qo.cfg.num_codebooks, "Codebooks per group M")->capture_default_str();
    quant->add_option("--code-bits", qo.cfg.code_bits, "Bits per code B")->capture_default_str();
    quant->add_option("--beam", qo.cfg.beam_size, "Beam size")->capture_default_str();
    quant->add_option("--tol", qo.cfg.rel_tolerance, "Relative improvement stop threshold")->capture_default_str();
    quant->add_option("--seed", qo.cfg.seed, "Random seed")->capture_default_str();
    quant->add_option("--lr", qo.cfg.adam_lr, "Adam learning rate")->capture_default_str();
    quant->add_option("--adam-steps", qo.cfg.adam_steps_per_phase, "Adam steps per phase")->capture_default_str();
    quant->add_option("--max-iters", qo.cfg.max_outer_iters, "Outer iteration cap")->capture_default_str();
    quant->add_option("--init", qo.init, "kmeans or random")->capture_default_str();
    quant->add_option("--finetune-block", qo.finetune, "WIRING:up=P,gate=P,down=P[,norm=P][,act=A]");

    EvalOpts eo;
    auto* eval = app.add_subcommand("eval", "Recompute relative loss of a saved layer and check the LUT kernel");
    eval->add_option("--model", eo.model, ".aqlm file")->required();
    eval->add_option("--weights", eo.weights, "Original weights")->required();
    eval->add_option("--calib", eo.calib, "Calibration inputs")->required();
    eval->add_option("--samples", eo.samples, "Columns used for the LUT cross-check")->capture_default_str();

    SweepOpts so;
    auto* sweep = app.add_subcommand("sweep", "Compare configurations at a fixed bit budget");
    sweep->add_option("--weights", so.weights)->required();
    sweep->add_option("--calib", so.calib)->required();
    sweep->add_option("--budget-bits", so.budget, "Target average bits per parameter")->required();
    sweep->add_option("--configs", so.configs, "Comma-separated MxBgsG list, e.g. 2x8gs8,1x16gs8")->required();
    sweep->add_option("--tolerance", so.tolerance, "Accepted distance from the budget in bits")->capture_default_str();
    sweep->add_option("--beam", so.beam)->capture_default_str();
    sweep->add_option("--tol", so.tol)->capture_default_str();
    sweep->add_option("--seed", so.seed)->capture_default_str();
    sweep->add_option("--lr", so.lr);
    sweep->add_option("--adam-steps", so.adam_steps);
    sweep->add_option("--max-iters", so.max_iters);

    BenchOpts bo;
    auto* bench = app.add_subcommand("bench", "Time reference vs LUT matrix-vector products");
    bench->add_option("--model", bo.model)->required();
    bench->add_option("--reps", bo.reps)->capture_default_str();
    bench->add_option("--seed", bo.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*quant) return run_quantize(globals, qo);
        if (*eval) return run_eval(globals, eo);
        if (*sweep) return run_sweep(globals, so);
        if (*bench) return run_bench(globals, bo);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
