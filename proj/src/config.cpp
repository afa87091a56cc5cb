#include "chainmem/config.hpp"

#include <fstream>

#include "json.hpp"

#include "chainmem/errors.hpp"

namespace chainmem {

using nlohmann::json;

namespace {

BackendSpec backend_from_json(const json& j, const std::string& role) {
    BackendSpec spec;
    const std::string kind = j.value("kind", "http");
    if (kind == "http") {
        spec.kind = BackendKind::Http;
    } else if (kind == "scripted") {
        spec.kind = BackendKind::Scripted;
    } else {
        throw Error(ErrorKind::Config, "backend for " + role + " has unknown kind: " + kind);
    }
    spec.endpoint = j.value("endpoint", "");
    spec.model = j.value("model", "");
    spec.temperature = j.value("temperature", 0.0);
    spec.max_output_units = j.value("max_output_units", 0);
    spec.timeout_seconds = j.value("timeout_seconds", 60.0);
    spec.retries = j.value("retries", 3);
    spec.backoff_base_ms = j.value("backoff_base_ms", 250);
    spec.api_key_env = j.value("api_key_env", "");

    if (spec.kind == BackendKind::Scripted) {
        std::vector<ScriptRule> rules;
        for (const json& rule : j.value("script", json::array())) {
            if (rule.is_string()) {
                rules.push_back(reply_once(rule.get<std::string>()));
            } else {
                rules.push_back(reply(rule.value("pattern", ""), rule.value("response", ""),
                                      rule.value("once", false)));
            }
        }
        if (rules.empty())
            throw Error(ErrorKind::Config,
                        "scripted backend for " + role + " declares no script rules");
        spec.script = std::make_shared<ScriptedBackend>(std::move(rules));
        if (spec.model.empty()) spec.model = "scripted";
    }
    return spec;
}

} // namespace

ChainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot read config file: " + path);
    json parsed;
    try {
        parsed = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, "config is not valid JSON: " + std::string(e.what()));
    }

    try {
        const TaskKind task = task_kind_from_string(parsed.value("task", "qa"));
        ChainConfig config = default_chain_config(task);
        config.k = parsed.value("k", std::size_t(5000));
        config.unit_mode = unit_mode_from_string(parsed.value("unit_mode", "word"));
        config.hidden_cap = parsed.value("hidden_cap", std::size_t(1024));
        config.manager_budget = parsed.value("manager_budget", std::size_t(5000));
        config.max_judge_calls_per_node = parsed.value("max_judge_calls_per_node", 4);
        if (parsed.contains("detector"))
            config.detector = detector_kind_from_string(parsed["detector"].get<std::string>());
        if (parsed.contains("filter_default")) {
            const std::string value = parsed["filter_default"].get<std::string>();
            if (value == "related")
                config.filter_default = FilterDecision::Related;
            else if (value == "unrelated")
                config.filter_default = FilterDecision::Unrelated;
            else
                throw Error(ErrorKind::Config, "filter_default must be related or unrelated");
        }
        config.bench_workers = parsed.value("bench_workers", 1);

        if (parsed.contains("template_dir")) {
            const std::string dir = parsed["template_dir"].get<std::string>();
            config.templates[TaskKind::QA] = load_templates(dir, TaskKind::QA);
            config.templates[TaskKind::Summarization] =
                load_templates(dir, TaskKind::Summarization);
            config.templates[TaskKind::FewShot] = load_templates(dir, TaskKind::FewShot);
        }

        if (!parsed.contains("backends") || !parsed["backends"].is_object())
            throw Error(ErrorKind::Config, "config lacks a backends object");
        const json& backends = parsed["backends"];
        for (const char* role : {"worker", "filter", "judge", "manager"}) {
            if (!backends.contains(role))
                throw Error(ErrorKind::Config,
                            std::string("config lacks a backend for role ") + role);
            config.backends[agent_role_from_string(role)] =
                backend_from_json(backends[role], role);
        }

        validate(config);
        return config;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, "config structure invalid: " + std::string(e.what()));
    }
}

} // namespace chainmem
