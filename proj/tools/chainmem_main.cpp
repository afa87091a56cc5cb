// chainmem command line: single-document runs, benchmark runs, needle suites,
// and trace inspection. Exit codes: 0 success, 1 runtime abort, 2
// configuration/usage error.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "chainmem/chain.hpp"
#include "chainmem/config.hpp"
#include "chainmem/errors.hpp"
#include "chainmem/eval.hpp"

namespace {

using namespace chainmem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code_for(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
    case ErrorKind::TemplateMismatch:
        return kExitUsage;
    default:
        return kExitRuntime;
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot read file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

struct CommonOptions {
    std::string config_path;
    std::size_t k_override = 0;
    double temperature_override = -1.0;
};

ChainConfig load_effective_config(const CommonOptions& options) {
    ChainConfig config = load_config(options.config_path);
    if (options.k_override > 0) config.k = options.k_override;
    if (options.temperature_override >= 0.0)
        for (auto& [role, spec] : config.backends) spec.temperature = options.temperature_override;
    return config;
}

int cmd_run(const std::string& doc_path, const std::string& query, const CommonOptions& options,
            const std::string& trace_out) {
    const ChainConfig config = load_effective_config(options);
    const Document doc = make_document(doc_path, read_file(doc_path), config.unit_mode);
    const ChainResult result = run_chain(doc, query, config);
    if (!trace_out.empty()) write_report(result, trace_out);
    if (result.trace.error) {
        std::cerr << "error: " << result.trace.error->kind << " at node "
                  << result.trace.error->node << ": " << result.trace.error->message << "\n";
        return kExitRuntime;
    }
    std::cout << result.answer << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& samples_path, const CommonOptions& options,
              const std::string& metric_name, const std::string& report_out) {
    const ChainConfig config = load_effective_config(options);
    const Metric metric = metric_from_string(metric_name);
    const std::vector<EvalSample> samples = load_samples(samples_path);
    if (samples.empty()) throw Error(ErrorKind::Config, "samples file is empty: " + samples_path);
    const RunReport report = run_benchmark(samples, config, metric);
    if (!report_out.empty()) {
        std::ofstream out(report_out);
        if (!out) throw Error(ErrorKind::Config, "cannot write report file: " + report_out);
        out << report_to_json(report) << "\n";
    }
    for (const SampleResult& row : report.rows)
        if (!row.error.empty())
            std::cerr << "warning: sample " << row.index + 1 << " failed: " << row.error << "\n";
    std::cout << std::fixed << std::setprecision(4) << "samples=" << report.rows.size()
              << " mean_score=" << report.mean_score << " mean_seconds=" << std::setprecision(3)
              << report.mean_seconds << "\n";
    return kExitOk;
}

int cmd_needle(std::size_t length, const std::vector<double>& depths,
               const CommonOptions& options, double threshold, const std::string& needle,
               const std::string& query, const std::string& gold,
               const std::string& filler_path) {
    const ChainConfig config = load_effective_config(options);
    bool all_passed = true;
    for (double depth : depths) {
        NeedleSpec spec;
        spec.total_units = length;
        spec.depth = depth;
        spec.needle = needle;
        spec.query = query;
        spec.gold = gold;
        spec.unit_mode = config.unit_mode;
        if (!filler_path.empty()) spec.filler = read_file(filler_path);
        const EvalSample sample = generate_needle(spec);

        const Document doc =
            make_document("needle-" + std::to_string(length) + "-" + std::to_string(depth),
                          sample.context, config.unit_mode);
        const ChainResult result = run_chain(doc, sample.input, config);
        if (result.trace.error)
            throw Error(ErrorKind::Transport, "needle run aborted: " + result.trace.error->message);
        const double score = qa_f1(result.answer, sample.answers);
        const bool passed = score >= threshold;
        all_passed = all_passed && passed;
        std::cout << std::fixed << std::setprecision(3) << "length=" << length
                  << " depth=" << std::setprecision(2) << depth << " f1=" << std::setprecision(3)
                  << score << " threshold=" << threshold << (passed ? " PASS" : " FAIL") << "\n";
    }
    return all_passed ? kExitOk : kExitRuntime;
}

int cmd_inspect(const std::string& trace_path) {
    const ChainResult result = read_report(trace_path);
    const ChainTrace& trace = result.trace;
    std::cout << "document: " << trace.document_id << "\n";
    if (!trace.query.empty()) std::cout << "query: " << trace.query << "\n";
    std::cout << "task: " << trace.config.task << "  k=" << trace.config.k
              << "  nodes=" << trace.nodes.size() << "  wall_ms=" << trace.wall_ms << "\n";
    for (const NodeRecord& node : trace.nodes) {
        std::cout << "\n[node " << node.index << "] span=[" << node.chunk_span.begin << ","
                  << node.chunk_span.end << ") units=" << node.chunk_units << "\n";
        std::cout << "  worker: " << node.worker.output_units << " units out, "
                  << node.worker.latency_ms << " ms"
                  << (node.hidden_truncated ? " (truncated)" : "") << "\n";
        std::cout << "  filter: " << to_string(node.decision)
                  << (node.filter_defaulted ? " (defaulted)" : "");
        if (!node.filtered_text.empty()) std::cout << " \"" << node.filtered_text << "\"";
        std::cout << "\n";
        for (const ConflictPair& pair : node.conflicts)
            std::cout << "  conflict (" << pair.earlier << "," << pair.later
                      << "): " << pair.reason << "\n";
        for (const JudgementRecord& judgement : node.judgements) {
            std::cout << "  judge (" << judgement.pair.earlier << "," << judgement.pair.later
                      << "): winner=" << to_string(judgement.winner)
                      << (judgement.defaulted ? " (defaulted)" : "");
            if (!judgement.corrected_text.empty())
                std::cout << " \"" << judgement.corrected_text << "\"";
            std::cout << "\n";
        }
        if (node.stale_skipped > 0)
            std::cout << "  skipped " << node.stale_skipped << " stale conflicts\n";
    }
    std::cout << "\nmanager: " << trace.manager.latency_ms << " ms"
              << (trace.manager_empty ? " (empty completion)" : "") << "\n";
    std::cout << "answer: " << result.answer << "\n";
    std::size_t active = 0;
    std::size_t superseded = 0;
    std::size_t corrected = 0;
    for (const MemoryEntry& entry : result.final_bank.entries) {
        if (entry.status == EntryStatus::Active) ++active;
        if (entry.status == EntryStatus::Superseded) ++superseded;
        if (entry.status == EntryStatus::Corrected) ++corrected;
        if (entry.superseded_by)
            std::cout << "bank: entry " << entry.index << " superseded by node "
                      << *entry.superseded_by << "\n";
    }
    std::cout << "bank: " << active << " active, " << superseded << " superseded, " << corrected
              << " corrected\n";
    if (trace.error)
        std::cout << "error: " << trace.error->kind << " at node " << trace.error->node << ": "
                  << trace.error->message << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chained multi-agent long-context runner"};
    app.require_subcommand(1);

    CommonOptions common;

    // run
    auto* run = app.add_subcommand("run", "Answer a query over one document");
    std::string doc_path;
    std::string query;
    std::string trace_out;
    run->add_option("document", doc_path, "UTF-8 document path")->required();
    run->add_option("query", query, "Query text (may be empty for summarization)");
    run->add_option("--config", common.config_path, "Config file")->required();
    run->add_option("--trace-out", trace_out, "Trace report output path");
    run->add_option("--k", common.k_override, "Override chunk size");
    run->add_option("--temperature", common.temperature_override, "Override temperature");

    // bench
    auto* bench = app.add_subcommand("bench", "Score a JSONL sample file");
    std::string samples_path;
    std::string metric_name = "auto";
    std::string report_out;
    bench->add_option("samples", samples_path, "JSONL samples path")->required();
    bench->add_option("--config", common.config_path, "Config file")->required();
    bench->add_option("--metric", metric_name, "auto|f1|rougeL");
    bench->add_option("--report-out", report_out, "Report output path");
    bench->add_option("--k", common.k_override, "Override chunk size");
    bench->add_option("--temperature", common.temperature_override, "Override temperature");

    // needle
    auto* needle = app.add_subcommand("needle", "Run a needle-in-a-haystack cell");
    std::size_t length = 10000;
    std::vector<double> depths;
    double threshold = 0.5;
    std::string needle_text = "needle-fact-zebra-9917.";
    std::string needle_query = "What is the needle fact?";
    std::string needle_gold = "needle-fact-zebra-9917";
    std::string filler_path;
    needle->add_option("--length", length, "Document length in units")->required();
    needle->add_option("--depth", depths, "Needle depth fraction(s) in [0,1]")->required();
    needle->add_option("--config", common.config_path, "Config file")->required();
    needle->add_option("--threshold", threshold, "Pass threshold on token F1");
    needle->add_option("--needle", needle_text, "Needle sentence");
    needle->add_option("--query", needle_query, "Query for the needle");
    needle->add_option("--gold", needle_gold, "Gold answer");
    needle->add_option("--filler", filler_path, "Filler text file");
    needle->add_option("--k", common.k_override, "Override chunk size");
    needle->add_option("--temperature", common.temperature_override, "Override temperature");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Render a trace report");
    std::string trace_path;
    inspect->add_option("trace", trace_path, "Trace report path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (run->parsed()) return cmd_run(doc_path, query, common, trace_out);
        if (bench->parsed()) return cmd_bench(samples_path, common, metric_name, report_out);
        if (needle->parsed())
            return cmd_needle(length, depths, common, threshold, needle_text, needle_query,
                              needle_gold, filler_path);
        if (inspect->parsed()) return cmd_inspect(trace_path);
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
