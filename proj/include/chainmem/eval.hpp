#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "chainmem/agents.hpp"
#include "chainmem/text.hpp"

namespace chainmem {

struct ChainConfig; // chain.hpp

// One benchmark item: long context, optional query, gold answers.
struct EvalSample {
    std::string context;
    std::string input; // query; empty for datasets without one
    std::vector<std::string> answers;
    std::string dataset;
    TaskKind task = TaskKind::QA;
};

// Parses line-delimited JSON records with fields context, input, answers,
// dataset. Task is inferred from the dataset name; unknown datasets fall back
// to QA with a warning on stderr. Throws MalformedRecord with the line number.
std::vector<EvalSample> load_samples(const std::string& path);

TaskKind task_for_dataset(std::string_view dataset, bool* known = nullptr);

// Lowercase, strip punctuation, drop standalone articles (a/an/the), collapse
// whitespace.
std::string normalize_answer(std::string_view text);

// Token-multiset F1 over normalized whitespace tokens, max over golds.
// 1 when prediction and gold both normalize to empty, 0 when only one does.
double qa_f1(std::string_view prediction, const std::vector<std::string>& golds);

// LCS-based F-measure (beta = 1) over lowercased whitespace tokens.
double rouge_l(std::string_view prediction, std::string_view reference);

struct NeedleSpec {
    std::size_t total_units = 0;
    double depth = 0.0; // 0 = document start, 1 = document end
    std::string needle;
    std::string query;
    std::string gold;
    std::string filler; // repeated/trimmed to fill the document
    UnitMode unit_mode = UnitMode::Word;
};

// Builds a document of exactly total_units units with the needle inserted at
// unit offset floor(depth * (total - needle_units)). The needle must occur
// exactly once in the result. Throws NeedleTooLong.
EvalSample generate_needle(const NeedleSpec& spec);

enum class Metric { Auto, F1, RougeL };

const char* to_string(Metric metric);
Metric metric_from_string(std::string_view name);

struct SampleResult {
    std::size_t index = 0;
    double score = 0.0;
    double seconds = 0.0;
    std::string answer;
    std::string error; // non-empty when the sample's chain run aborted
};

struct RunReport {
    std::string dataset;
    std::string config_digest;
    std::vector<SampleResult> rows;
    double mean_score = 0.0;
    double mean_seconds = 0.0;
};

// Runs the chain on every sample and scores predictions (Auto picks F1 for
// QA, Rouge-L otherwise). Per-sample failures score 0 with an error note;
// the run continues. Samples may run concurrently (config.bench_workers);
// rows stay in input order.
RunReport run_benchmark(const std::vector<EvalSample>& samples, const ChainConfig& config,
                        Metric metric);

std::string report_to_json(const RunReport& report);

} // namespace chainmem
