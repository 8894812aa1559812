#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccnn/analysis.hpp"
#include "ccnn/checks.hpp"
#include "ccnn/netpbm.hpp"
#include "ccnn/trace.hpp"
#include "ccnn/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

uint64_t env_seed_fallback() {
    const char* env = std::getenv("CCNN_SEED");
    if (!env) return 0;
    return std::strtoull(env, nullptr, 10);
}

std::string replace_extension(const std::string& path, const std::string& ext) {
    auto slash = path.find_last_of('/');
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return path + ext;
    return path.substr(0, dot) + ext;
}

struct TraceArgs {
    int size = 32;
    int steps = 3;
    int k = 2;
    std::string seq = "fixed";
    std::string seq_file;
    uint64_t seed = 0;
    bool seed_given = false;
    std::string out = "trace.pgm";
    std::string stats_path;
    bool color = false;
};

int cmd_trace(const TraceArgs& args) {
    ccnn::SamplerSequence seq;
    if (!args.seq_file.empty()) {
        std::ifstream in(args.seq_file);
        if (!in) {
            std::cerr << "trace: cannot open sequence file '" << args.seq_file << "'\n";
            return kExitIo;
        }
        seq = ccnn::parse_sequence(in);
    } else if (args.seq == "fixed") {
        seq = ccnn::fixed_sequence(args.k, args.steps);
    } else if (args.seq == "lattice") {
        if (args.k != 2) {
            std::cerr << "trace: the lattice sequence is defined for k=2\n";
            return kExitUsage;
        }
        seq = ccnn::lattice_sequence(args.steps);
    } else {  // random
        uint64_t seed = args.seed_given ? args.seed : env_seed_fallback();
        seq = ccnn::random_sequence(args.k, args.steps, seed);
    }

    ccnn::TraceState state = ccnn::make_trace(args.size, args.size, args.k);
    state = ccnn::apply_sequence(state, seq, ccnn::sampler_set(args.k));

    ccnn::write_pgm(args.out, args.size, args.size, ccnn::render_trace_gray(state));
    if (args.color) {
        std::string color_path = replace_extension(args.out, ".ppm");
        ccnn::write_ppm(color_path, args.size, args.size, ccnn::render_trace_color(state));
    }

    std::string stats = ccnn::coverage_json(ccnn::coverage_stats(state));
    std::cout << stats << "\n";
    if (!args.stats_path.empty()) {
        std::ofstream out(args.stats_path);
        if (!out) {
            std::cerr << "trace: cannot open stats path '" << args.stats_path << "'\n";
            return kExitIo;
        }
        out << stats << "\n";
    }
    return kExitOk;
}

int cmd_verify(const std::string& suite, uint64_t seed) {
    std::vector<ccnn::SuiteReport> reports;
    if (suite == "subset" || suite == "all") reports.push_back(ccnn::run_subset_suite(seed, 5));
    if (suite == "dilation" || suite == "all") reports.push_back(ccnn::run_dilation_suite(seed, 3));
    if (suite == "gradients" || suite == "all") reports.push_back(ccnn::run_gradient_suite(seed));
    if (suite == "coverage" || suite == "all") reports.push_back(ccnn::run_coverage_suite());
    if (suite == "complexity" || suite == "all") reports.push_back(ccnn::run_complexity_suite());

    int failed = 0;
    nlohmann::json combined = nlohmann::json::array();
    for (const ccnn::SuiteReport& report : reports) {
        failed += report.failed();
        combined.push_back(nlohmann::json::parse(ccnn::suite_json(report)));
    }
    std::cout << combined.dump(2) << "\n";
    return failed == 0 ? kExitOk : kExitVerifyFailed;
}

int cmd_train(int epochs, uint64_t seed, double lr, bool nesterov, const std::string& out_path) {
    ccnn::SgdOptions options;
    options.lr = lr;
    options.nesterov = nesterov;
    ccnn::TrainResult result = ccnn::train_toy_pair(epochs, seed, options);
    for (const ccnn::EpochLog& log : result.epochs) {
        std::cout << "epoch " << log.epoch << ": cnn loss " << log.cnn_loss << " acc "
                  << log.cnn_acc << " | ccnn loss " << log.ccnn_loss << " acc " << log.ccnn_acc
                  << "\n";
    }
    std::cout << "parameters: cnn " << result.cnn_param_count << ", ccnn "
              << result.ccnn_param_count << "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) {
            std::cerr << "train: cannot open '" << out_path << "'\n";
            return kExitIo;
        }
        out << ccnn::train_json(result) << "\n";
    }
    if (result.diverged) {
        std::cerr << "train: loss diverged\n";
        return kExitVerifyFailed;
    }
    return kExitOk;
}

int cmd_complexity(int max_steps) {
    using ccnn::ChannelRule;
    using ccnn::Scheme;
    auto print_table = [&](ChannelRule rule, const std::vector<Scheme>& schemes,
                           const std::string& title) {
        std::cout << title << "\n";
        std::cout << "  scheme       ";
        for (int s = 0; s <= max_steps; ++s) std::cout << " s=" << s << " (mem, compute)";
        std::cout << "\n";
        for (Scheme scheme : schemes) {
            std::cout << "  " << ccnn::scheme_name(scheme);
            for (size_t pad = ccnn::scheme_name(scheme).size(); pad < 13; ++pad) std::cout << ' ';
            for (int s = 0; s <= max_steps; ++s) {
                ccnn::ComplexityProfile profile = ccnn::complexity_profile(scheme, rule, s);
                std::cout << "  (" << profile.memory_factor.to_string() << ", "
                          << profile.compute_factor.to_string() << ")";
            }
            std::cout << "\n";
        }
    };
    print_table(ChannelRule::double_channels,
                {Scheme::traditional, Scheme::checkered, Scheme::dilated},
                "channels doubled per subsampling step:");
    print_table(ChannelRule::constant, {Scheme::traditional, Scheme::checkered, Scheme::dilated},
                "channels constant:");
    print_table(ChannelRule::sqrt2, {Scheme::checkered}, "channels scaled by sqrt(2):");

    ccnn::SuiteReport measured = ccnn::run_complexity_suite();
    std::cout << "measured ratios on reference graphs: "
              << (measured.failed() == 0 ? "match" : "MISMATCH") << "\n";
    return measured.failed() == 0 ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"checkered subsampling toolkit"};
    app.require_subcommand(1);

    TraceArgs trace_args;
    CLI::App* trace = app.add_subcommand("trace", "render a sampling pattern and its stats");
    trace->add_option("--size", trace_args.size, "image side length")->check(CLI::PositiveNumber);
    trace->add_option("--steps", trace_args.steps, "subsampling steps")
        ->check(CLI::NonNegativeNumber);
    trace->add_option("--k", trace_args.k, "sampling window side")->check(CLI::Range(2, 3));
    CLI::Option* seq_opt = trace->add_option("--seq", trace_args.seq, "sequence source")
                               ->check(CLI::IsMember({"fixed", "lattice", "random"}));
    trace->add_option("--seq-file", trace_args.seq_file, "sequence file (one line per step)")
        ->excludes(seq_opt);
    CLI::Option* seed_opt = trace->add_option("--seed", trace_args.seed, "random sequence seed");
    trace->add_option("--out", trace_args.out, "output PGM path");
    trace->add_option("--stats", trace_args.stats_path, "also write the stats JSON here");
    trace->add_flag("--color", trace_args.color, "also write a per-submap color PPM");

    std::string suite;
    uint64_t verify_seed = env_seed_fallback();
    CLI::App* verify = app.add_subcommand("verify", "run an invariant suite");
    verify->add_option("--suite", suite, "suite name")
        ->required()
        ->check(CLI::IsMember({"subset", "dilation", "gradients", "coverage", "complexity", "all"}));
    verify->add_option("--seed", verify_seed, "instance seed");

    int epochs = 50;
    uint64_t train_seed = env_seed_fallback();
    double lr = 0.05;
    bool nesterov = false;
    std::string train_out;
    CLI::App* train = app.add_subcommand("train", "train the toy CNN and its CCNN conversion");
    train->add_option("--epochs", epochs, "epoch budget")->check(CLI::PositiveNumber);
    train->add_option("--seed", train_seed, "global seed");
    train->add_option("--lr", lr, "learning rate");
    train->add_flag("--nesterov", nesterov, "use Nesterov momentum");
    train->add_option("--out", train_out, "write the JSON log here");

    int max_steps = 6;
    CLI::App* complexity = app.add_subcommand("complexity", "print the complexity tables");
    complexity->add_option("--max-steps", max_steps, "table depth")->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*trace) {
            trace_args.seed_given = seed_opt->count() > 0;
            return cmd_trace(trace_args);
        }
        if (*verify) return cmd_verify(suite, verify_seed);
        if (*train) return cmd_train(epochs, train_seed, lr, nesterov, train_out);
        if (*complexity) return cmd_complexity(max_steps);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}
