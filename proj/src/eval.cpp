#include "chainmem/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "chainmem/chain.hpp"
#include "chainmem/errors.hpp"

namespace chainmem {

using nlohmann::json;

TaskKind task_for_dataset(std::string_view dataset, bool* known) {
    static const std::map<std::string, TaskKind> table = {
        {"narrativeqa", TaskKind::QA},        {"qasper", TaskKind::QA},
        {"hotpotqa", TaskKind::QA},           {"2wikimqa", TaskKind::QA},
        {"musique", TaskKind::QA},            {"govreport", TaskKind::Summarization},
        {"qmsum", TaskKind::Summarization},   {"samsum", TaskKind::FewShot},
        {"needle", TaskKind::QA},
    };
    std::string lowered(dataset);
    for (char& c : lowered) c = char(std::tolower(static_cast<unsigned char>(c)));
    const auto it = table.find(lowered);
    if (known) *known = it != table.end();
    return it != table.end() ? it->second : TaskKind::QA;
}

std::vector<EvalSample> load_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot read samples file: " + path);

    std::vector<EvalSample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::MalformedRecord,
                        "line " + std::to_string(line_no) + ": not valid JSON: " + e.what());
        }
        if (!record.contains("context") || !record["context"].is_string() ||
            record["context"].get<std::string>().empty())
            throw Error(ErrorKind::MalformedRecord,
                        "line " + std::to_string(line_no) + ": missing context");
        if (!record.contains("answers"))
            throw Error(ErrorKind::MalformedRecord,
                        "line " + std::to_string(line_no) + ": missing answers");

        EvalSample sample;
        sample.context = record["context"].get<std::string>();
        sample.input = record.value("input", "");
        if (record["answers"].is_string()) {
            sample.answers.push_back(record["answers"].get<std::string>());
        } else if (record["answers"].is_array()) {
            for (const json& answer : record["answers"]) {
                if (!answer.is_string())
                    throw Error(ErrorKind::MalformedRecord,
                                "line " + std::to_string(line_no) + ": non-string answer");
                sample.answers.push_back(answer.get<std::string>());
            }
        }
        if (sample.answers.empty())
            throw Error(ErrorKind::MalformedRecord,
                        "line " + std::to_string(line_no) + ": empty answers");
        sample.dataset = record.value("dataset", "");
        bool known = false;
        sample.task = task_for_dataset(sample.dataset, &known);
        if (!known)
            std::cerr << "warning: line " << line_no << ": unknown dataset \"" << sample.dataset
                      << "\", treating as QA\n";
        samples.push_back(std::move(sample));
    }
    return samples;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

std::string normalize_answer(std::string_view text) {
    std::string depunct;
    depunct.reserve(text.size());
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc)) continue;
        depunct += char(std::tolower(uc));
    }
    std::istringstream words(depunct);
    std::string word;
    std::string out;
    while (words >> word) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

namespace {

std::vector<std::string> split_tokens(const std::string& text) {
    std::istringstream stream(text);
    std::vector<std::string> tokens;
    std::string token;
    while (stream >> token) tokens.push_back(token);
    return tokens;
}

double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::map<std::string, int> counts;
    for (const auto& token : gold) ++counts[token];
    std::size_t common = 0;
    for (const auto& token : pred) {
        auto it = counts.find(token);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double precision = double(common) / double(pred.size());
    const double recall = double(common) / double(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

} // namespace

double qa_f1(std::string_view prediction, const std::vector<std::string>& golds) {
    const auto pred_tokens = split_tokens(normalize_answer(prediction));
    double best = 0.0;
    for (const auto& gold : golds)
        best = std::max(best, token_f1(pred_tokens, split_tokens(normalize_answer(gold))));
    return best;
}

double rouge_l(std::string_view prediction, std::string_view reference) {
    std::string pred_lower(prediction);
    std::string ref_lower(reference);
    for (char& c : pred_lower) c = char(std::tolower(static_cast<unsigned char>(c)));
    for (char& c : ref_lower) c = char(std::tolower(static_cast<unsigned char>(c)));
    const auto pred = split_tokens(pred_lower);
    const auto ref = split_tokens(ref_lower);
    if (pred.empty() || ref.empty()) return 0.0;

    // LCS length, two-row DP.
    std::vector<std::size_t> prev(ref.size() + 1, 0);
    std::vector<std::size_t> curr(ref.size() + 1, 0);
    for (std::size_t i = 1; i <= pred.size(); ++i) {
        for (std::size_t j = 1; j <= ref.size(); ++j) {
            curr[j] = pred[i - 1] == ref[j - 1] ? prev[j - 1] + 1
                                                : std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    const std::size_t lcs = prev[ref.size()];
    if (lcs == 0) return 0.0;
    const double precision = double(lcs) / double(pred.size());
    const double recall = double(lcs) / double(ref.size());
    return 2.0 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------
// Needle generation
// ---------------------------------------------------------------------------

EvalSample generate_needle(const NeedleSpec& spec) {
    if (spec.needle.empty())
        throw Error(ErrorKind::InvalidArgument, "needle text is empty");
    if (spec.depth < 0.0 || spec.depth > 1.0)
        throw Error(ErrorKind::InvalidArgument, "needle depth must be in [0, 1]");
    if (spec.unit_mode != UnitMode::Word)
        throw Error(ErrorKind::InvalidArgument, "needle generation is word-unit based");
    const std::size_t needle_units = count_units(spec.needle, spec.unit_mode);
    if (needle_units > spec.total_units)
        throw Error(ErrorKind::NeedleTooLong,
                    "needle of " + std::to_string(needle_units) + " units does not fit in " +
                        std::to_string(spec.total_units));

    std::vector<std::string> filler_units;
    {
        std::istringstream stream(spec.filler.empty()
                                      ? std::string("the quick brown fox jumps over one lazy dog "
                                                    "while rivers run past quiet stone houses.")
                                      : spec.filler);
        std::string word;
        while (stream >> word) filler_units.push_back(word);
    }
    if (filler_units.empty())
        throw Error(ErrorKind::InvalidArgument, "filler has no units");

    const std::size_t filler_count = spec.total_units - needle_units;
    const auto offset =
        static_cast<std::size_t>(spec.depth * double(spec.total_units - needle_units));

    std::string context;
    context.reserve(spec.total_units * 8);
    const auto append_unit = [&context](std::string_view unit) {
        if (!context.empty()) context += ' ';
        context += unit;
    };
    for (std::size_t i = 0; i < offset; ++i) append_unit(filler_units[i % filler_units.size()]);
    append_unit(spec.needle);
    for (std::size_t i = offset; i < filler_count; ++i)
        append_unit(filler_units[i % filler_units.size()]);

    // The needle must be locatable exactly once.
    const auto first = context.find(spec.needle);
    if (first == std::string::npos ||
        context.find(spec.needle, first + 1) != std::string::npos)
        throw Error(ErrorKind::InvalidArgument,
                    "filler interferes with the needle: not exactly one occurrence");

    EvalSample sample;
    sample.context = std::move(context);
    sample.input = spec.query;
    sample.answers = {spec.gold};
    sample.dataset = "needle";
    sample.task = TaskKind::QA;
    return sample;
}

// ---------------------------------------------------------------------------
// Benchmark loop
// ---------------------------------------------------------------------------

const char* to_string(Metric metric) {
    switch (metric) {
    case Metric::Auto: return "auto";
    case Metric::F1: return "f1";
    case Metric::RougeL: return "rougeL";
    }
    return "?";
}

Metric metric_from_string(std::string_view name) {
    if (name == "auto") return Metric::Auto;
    if (name == "f1" || name == "F1") return Metric::F1;
    if (name == "rougeL" || name == "rouge-l" || name == "rougel") return Metric::RougeL;
    throw Error(ErrorKind::Config, "unknown metric: " + std::string(name));
}

namespace {

double score_prediction(const std::string& prediction, const EvalSample& sample, Metric metric) {
    Metric chosen = metric;
    if (chosen == Metric::Auto)
        chosen = sample.task == TaskKind::QA ? Metric::F1 : Metric::RougeL;
    if (chosen == Metric::F1) return qa_f1(prediction, sample.answers);
    double best = 0.0;
    for (const auto& gold : sample.answers) best = std::max(best, rouge_l(prediction, gold));
    return best;
}

std::string config_digest(const ChainConfig& config) {
    // FNV-1a over the stable bits of the configuration.
    std::ostringstream summary;
    summary << config.k << '|' << to_string(config.unit_mode) << '|' << to_string(config.task)
            << '|' << config.hidden_cap << '|' << config.manager_budget << '|'
            << config.max_judge_calls_per_node << '|' << to_string(config.detector);
    for (const auto& [role, spec] : config.backends)
        summary << '|' << to_string(role) << ':' << to_string(spec.kind) << ':' << spec.model
                << ':' << spec.endpoint;
    std::uint64_t hash = 1469598103934665603ULL;
    for (char c : summary.str()) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 1099511628211ULL;
    }
    std::ostringstream hex;
    hex << std::hex << hash;
    return hex.str();
}

} // namespace

RunReport run_benchmark(const std::vector<EvalSample>& samples, const ChainConfig& config,
                        Metric metric) {
    if (samples.empty()) throw Error(ErrorKind::InvalidArgument, "no samples to evaluate");
    validate(config);

    RunReport report;
    report.dataset = samples.front().dataset;
    report.config_digest = config_digest(config);
    report.rows.resize(samples.size());

    const auto evaluate_one = [&](std::size_t i) {
        const EvalSample& sample = samples[i];
        SampleResult& row = report.rows[i];
        row.index = i;
        const auto started = std::chrono::steady_clock::now();
        try {
            ChainConfig sample_config = config;
            sample_config.task = sample.task;
            if (!sample_config.templates.count(sample.task))
                sample_config.templates[sample.task] = default_templates(sample.task);
            const Document doc = make_document("sample-" + std::to_string(i + 1), sample.context,
                                               config.unit_mode);
            const ChainResult result = run_chain(doc, sample.input, sample_config);
            if (result.trace.error) {
                row.error = result.trace.error->kind + ": " + result.trace.error->message;
                row.score = 0.0;
            } else {
                row.answer = result.answer;
                row.score = score_prediction(result.answer, sample, metric);
            }
        } catch (const Error& e) {
            row.error = std::string(to_string(e.kind())) + ": " + e.what();
            row.score = 0.0;
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                          .count();
    };

    const int workers = std::min<int>(config.bench_workers, int(samples.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < samples.size(); ++i) evaluate_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= samples.size()) break;
                    evaluate_one(i);
                }
            });
        for (auto& thread : pool) thread.join();
    }

    double score_sum = 0.0;
    double seconds_sum = 0.0;
    for (const SampleResult& row : report.rows) {
        score_sum += row.score;
        seconds_sum += row.seconds;
    }
    report.mean_score = score_sum / double(report.rows.size());
    report.mean_seconds = seconds_sum / double(report.rows.size());
    return report;
}

std::string report_to_json(const RunReport& report) {
    json rows = json::array();
    for (const SampleResult& row : report.rows) {
        json entry = {{"id", row.index},
                      {"score", row.score},
                      {"seconds", row.seconds},
                      {"answer", row.answer}};
        if (!row.error.empty()) entry["error"] = row.error;
        rows.push_back(std::move(entry));
    }
    const json out = {{"schema", "chainmem.bench.v1"},
                      {"dataset", report.dataset},
                      {"config_digest", report.config_digest},
                      {"rows", std::move(rows)},
                      {"mean_score", report.mean_score},
                      {"mean_seconds", report.mean_seconds}};
    return out.dump(2);
}

} // namespace chainmem
