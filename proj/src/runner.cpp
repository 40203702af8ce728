#include "cartoonqa/runner.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "cartoonqa/datasets.hpp"

namespace fs = std::filesystem;

namespace cartoonqa {

namespace {

struct RowPlan {
    std::string label;
    AgentConfiguration config;
};

using CellKey = std::pair<std::string, std::string>;  // (row label, sample id)

struct RunState {
    std::map<CellKey, AgentTrace> traces;
    std::map<CellKey, SampleFailure> failures;
    std::map<CellKey, std::pair<JudgeScore, std::map<std::string, double>>> scores;
};

long now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void parallel_for(std::size_t count, int width, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(width, 1), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    for (std::thread& t : pool) t.join();
}

json plan_to_json(const std::vector<RowPlan>& plan) {
    json rows = json::array();
    for (const RowPlan& row : plan)
        rows.push_back(json{{"label", row.label}, {"configuration", row.config}});
    return rows;
}

std::vector<RowPlan> plan_from_json(const json& rows) {
    std::vector<RowPlan> plan;
    for (const json& row : rows)
        plan.push_back(RowPlan{row.at("label").get<std::string>(),
                               row.at("configuration").get<AgentConfiguration>()});
    return plan;
}

void write_run_manifest(const fs::path& run_dir, const std::string& kind,
                        const ValidatedRunSpec& spec, const std::vector<RowPlan>& plan) {
    const json j{{"kind", kind}, {"spec", spec.to_json()}, {"rows", plan_to_json(plan)}};
    std::ofstream out(run_dir / "spec.json", std::ios::trunc);
    if (!out) throw RunError("cannot write " + (run_dir / "spec.json").string());
    out << j.dump(2) << '\n';
}

struct RunManifest {
    std::string kind;
    ValidatedRunSpec spec;
    std::vector<RowPlan> plan;
};

RunManifest read_run_manifest(const fs::path& run_dir) {
    std::ifstream in(run_dir / "spec.json");
    if (!in) throw RunError("cannot read " + (run_dir / "spec.json").string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw RunError("corrupt spec.json: " + std::string(e.what()));
    }
    return RunManifest{j.at("kind").get<std::string>(),
                       ValidatedRunSpec::from_json(j.at("spec")),
                       plan_from_json(j.at("rows"))};
}

// JSONL loader that tolerates exactly one torn record at the tail (a write
// interrupted by a crash); anything else malformed is corruption.
std::vector<json> load_jsonl(const fs::path& path) {
    std::vector<json> records;
    if (!fs::exists(path)) return records;
    std::ifstream in(path);
    if (!in) throw RunError("cannot read " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!trim(line).empty()) lines.push_back(line);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            records.push_back(json::parse(lines[i]));
        } catch (const json::exception& e) {
            if (i + 1 == lines.size()) {
                log_warn(path.string() + ": ignoring torn trailing record");
                break;
            }
            throw RunError(path.string() + " line " + std::to_string(i + 1) +
                           ": corrupt record (" + e.what() + ")");
        }
    }
    return records;
}

RunState load_state(const fs::path& traces_path, const fs::path& scores_path) {
    RunState state;
    for (const json& j : load_jsonl(traces_path)) {
        const std::string row = j.at("row").get<std::string>();
        if (j.contains("failure")) {
            SampleFailure f;
            f.sample_id = j.at("sample_id").get<std::string>();
            f.stage = j.at("failure").at("stage").get<std::string>();
            f.error = j.at("failure").at("error").get<std::string>();
            const CellKey key{row, f.sample_id};
            state.traces.erase(key);
            state.failures[key] = std::move(f);
        } else {
            AgentTrace trace = j.at("trace").get<AgentTrace>();
            const CellKey key{row, trace.sample_id};
            state.failures.erase(key);
            state.traces[key] = std::move(trace);
        }
    }
    for (const json& j : load_jsonl(scores_path)) {
        const CellKey key{j.at("row").get<std::string>(), j.at("sample_id").get<std::string>()};
        JudgeScore score;
        score.sample_id = key.second;
        score.score = j.at("judge").at("score").get<double>();
        score.snapped = j.at("judge").at("snapped").get<bool>();
        score.raw_reply = j.at("judge").at("raw_reply").get<std::string>();
        state.scores[key] = {std::move(score),
                             j.at("lexical").get<std::map<std::string, double>>()};
    }
    return state;
}

json trace_record(const std::string& row_label, const AgentTrace& trace) {
    return json{{"row", row_label}, {"trace", trace}};
}

json failure_record(const std::string& row_label, const SampleFailure& f) {
    return json{{"row", row_label},
                {"sample_id", f.sample_id},
                {"failure", json{{"stage", f.stage}, {"error", f.error}}}};
}

json score_record(const std::string& row_label, const JudgeScore& judge_score,
                  const std::map<std::string, double>& lexical) {
    return json{{"row", row_label},
                {"sample_id", judge_score.sample_id},
                {"judge", json{{"score", judge_score.score},
                               {"snapped", judge_score.snapped},
                               {"raw_reply", judge_score.raw_reply}}},
                {"lexical", lexical}};
}

std::vector<RowPlan> ablation_plan(const RunSpec& spec) {
    std::vector<RowPlan> plan;
    for (const AgentConfiguration& cfg : spec.configurations)
        plan.push_back(RowPlan{configuration_label(cfg), cfg});
    return plan;
}

std::vector<RowPlan> captioner_plan(const RunSpec& spec) {
    const ProviderProfile profile = resolve_profile(spec);
    auto with_captioner = [](AgentConfiguration cfg, CaptionerKind captioner) {
        cfg.captioner = captioner;
        return cfg;
    };
    auto source_name = [&](CaptionerKind captioner) {
        return captioner == CaptionerKind::frozen_captioner ? profile.frozen_captioner_name
                                                            : profile.multimodal_chat_name;
    };
    std::vector<RowPlan> plan;
    for (const AgentConfiguration& base :
         {visual_language_configuration(), full_configuration()}) {
        const std::string suffix =
            base.critic_enabled ? "Visual + Language + Critic" : "Visual + Language";
        for (CaptionerKind captioner :
             {CaptionerKind::frozen_captioner, CaptionerKind::multimodal_chat})
            plan.push_back(RowPlan{source_name(captioner) + " " + suffix,
                                   with_captioner(base, captioner)});
    }
    return plan;
}

AblationRun execute(const std::string& kind, const ValidatedRunSpec& vspec,
                    const std::vector<RowPlan>& plan, const RunEnvironment& env,
                    const fs::path& run_dir, bool resuming) {
    const RunSpec& spec = vspec.spec();
    fs::create_directories(run_dir);
    const fs::path traces_path = run_dir / "traces.jsonl";
    const fs::path scores_path = run_dir / "scores.jsonl";

    if (!resuming) {
        if (fs::exists(traces_path))
            throw RunError("run directory already contains traces.jsonl (resume instead): " +
                           run_dir.string());
        write_run_manifest(run_dir, kind, vspec, plan);
    }

    AblationRun run;
    run.kind = kind;
    run.spec = spec;
    run.temperature = env.pipeline_options.temperature;
    run.max_output_tokens = env.pipeline_options.max_output_tokens;
    run.judge_max_output_tokens = env.judge_options.max_output_tokens;
    run.started_at_ms = env.mode == ProviderMode::replay_strict ? 0 : now_ms();

    LoadResult loaded = load_for_run(spec.dataset_kind, spec.dataset_path, spec.frames_per_gif);
    for (const std::string& w : loaded.warnings) log_warn(w);
    const std::vector<Sample> subset =
        sample_subset(loaded.samples, spec.sample_count, spec.seed);

    RunState state = resuming ? load_state(traces_path, scores_path) : RunState{};

    // -------- pipeline cells (parallel, deterministic slots) --------
    struct Cell {
        std::size_t row;
        std::size_t sample;
    };
    std::vector<Cell> todo;
    for (std::size_t r = 0; r < plan.size(); ++r)
        for (std::size_t s = 0; s < subset.size(); ++s) {
            const CellKey key{plan[r].label, subset[s].id};
            if (!state.traces.count(key)) todo.push_back(Cell{r, s});
        }

    const AgentPipeline pipeline(env.agent_provider, env.prompts, env.pipeline_options);
    std::ofstream traces_out;
    if (!todo.empty()) {
        traces_out.open(traces_path, std::ios::app);
        if (!traces_out) throw RunError("cannot append to " + traces_path.string());
    }

    std::vector<std::optional<AgentTrace>> cell_traces(todo.size());
    std::vector<std::optional<SampleFailure>> cell_failures(todo.size());

    // records are appended in cell order, not completion order: the next
    // contiguous block of finished cells flushes as soon as it is ready, so
    // output bytes are deterministic and each record lands atomically
    std::mutex io_mutex;
    std::size_t next_flush = 0;
    auto flush_ready = [&] {
        while (next_flush < todo.size() &&
               (cell_traces[next_flush] || cell_failures[next_flush])) {
            const RowPlan& row = plan[todo[next_flush].row];
            if (cell_traces[next_flush])
                traces_out << trace_record(row.label, *cell_traces[next_flush]).dump() << '\n';
            else
                traces_out << failure_record(row.label, *cell_failures[next_flush]).dump() << '\n';
            traces_out.flush();
            ++next_flush;
        }
    };

    parallel_for(todo.size(), spec.max_parallel, [&](std::size_t i) {
        const Cell cell = todo[i];
        const RowPlan& row = plan[cell.row];
        const Sample& sample = subset[cell.sample];
        std::optional<AgentTrace> trace;
        std::optional<SampleFailure> failure;
        try {
            trace = pipeline.run_pipeline(sample, row.config);
        } catch (const StageError& e) {
            failure = SampleFailure{sample.id, e.stage(), e.what()};
        } catch (const std::exception& e) {
            failure = SampleFailure{sample.id, "internal", e.what()};
        }
        std::lock_guard<std::mutex> lock(io_mutex);
        cell_traces[i] = std::move(trace);
        cell_failures[i] = std::move(failure);
        flush_ready();
    });
    if (traces_out.is_open()) traces_out.close();

    for (std::size_t i = 0; i < todo.size(); ++i) {
        const CellKey key{plan[todo[i].row].label, subset[todo[i].sample].id};
        if (cell_traces[i]) {
            state.failures.erase(key);
            state.traces[key] = std::move(*cell_traces[i]);
        } else if (cell_failures[i]) {
            state.failures[key] = std::move(*cell_failures[i]);
        }
    }

    // run-level gating audit: stage presence must match each row's configuration
    for (std::size_t r = 0; r < plan.size(); ++r)
        for (const Sample& sample : subset) {
            const auto it = state.traces.find({plan[r].label, sample.id});
            if (it == state.traces.end()) continue;
            if (!(it->second.configuration == plan[r].config))
                throw RunError("trace configuration drift in row '" + plan[r].label + "'");
            it->second.validate();
        }

    // -------- judge + lexical metrics (after all cells) --------
    std::ofstream scores_out(scores_path, std::ios::app);
    if (!scores_out) throw RunError("cannot append to " + scores_path.string());
    std::size_t judgeable = 0;
    for (std::size_t r = 0; r < plan.size(); ++r) {
        for (const Sample& sample : subset) {
            const CellKey key{plan[r].label, sample.id};
            const auto trace_it = state.traces.find(key);
            if (trace_it == state.traces.end()) continue;  // failed cell
            ++judgeable;
            if (state.scores.count(key)) continue;  // already scored (resume)
            const AgentTrace& trace = trace_it->second;
            try {
                JudgeScore js = judge(sample, trace.final_answer, *env.judge_provider,
                                      env.prompts.judge, env.judge_options);
                auto lexical = lexical_scores(trace.final_answer, sample.ground_truth,
                                              *env.embed_provider, env.synonyms);
                scores_out << score_record(plan[r].label, js, lexical).dump() << '\n';
                scores_out.flush();
                state.scores[key] = {std::move(js), std::move(lexical)};
            } catch (const ProviderError& e) {
                log_warn("judge failed for " + sample.id + " [" + plan[r].label +
                         "]: " + e.what());
            } catch (const JudgeReplyUnparseable& e) {
                log_warn("judge reply unusable for " + sample.id + " [" + plan[r].label +
                         "]: " + e.what());
            }
        }
    }
    scores_out.close();

    std::size_t scored = 0;
    for (std::size_t r = 0; r < plan.size(); ++r)
        for (const Sample& sample : subset)
            if (state.scores.count({plan[r].label, sample.id})) ++scored;
    const std::size_t unevaluated = judgeable - scored;
    run.unevaluated_count = static_cast<int>(unevaluated);
    if (unevaluated * 100 > judgeable)
        throw RunError("judge left " + std::to_string(unevaluated) + " of " +
                       std::to_string(judgeable) + " samples unevaluated (>1%)");

    // -------- summaries, deterministic order --------
    for (std::size_t r = 0; r < plan.size(); ++r) {
        std::vector<double> scores;
        std::vector<std::map<std::string, double>> lexicals;
        for (const Sample& sample : subset) {
            const auto it = state.scores.find({plan[r].label, sample.id});
            if (it == state.scores.end()) continue;
            scores.push_back(it->second.first.score);
            lexicals.push_back(it->second.second);
        }
        if (scores.empty())
            throw RunError("row '" + plan[r].label + "' has no evaluated samples");
        run.rows.push_back(AblationRow{plan[r].label, EvaluationSummary::build(scores, lexicals)});
    }

    for (std::size_t r = 0; r < plan.size(); ++r)
        for (const Sample& sample : subset) {
            const auto it = state.failures.find({plan[r].label, sample.id});
            if (it != state.failures.end()) run.failures.push_back(it->second);
        }
    for (const auto& [key, trace] : state.traces)
        if (trace.critic_fallback) ++run.critic_fallback_count;

    run.finished_at_ms = env.mode == ProviderMode::replay_strict ? 0 : now_ms();

    std::ofstream summary_out(run_dir / "summary.json", std::ios::trunc);
    if (!summary_out) throw RunError("cannot write " + (run_dir / "summary.json").string());
    summary_out << run.serialize();
    return run;
}

}  // namespace

json AblationRun::to_json() const {
    json rows_json = json::array();
    const AblationRow* full_row = nullptr;
    for (const AblationRow& row : rows)
        if (row.label == "Full") full_row = &row;
    for (const AblationRow& row : rows) {
        json r{{"label", row.label}, {"summary", row.summary}};
        if (full_row && row.label != "Full")
            r["delta_vs_full_percent"] =
                relative_delta(row.summary.average, full_row->summary.average);
        rows_json.push_back(std::move(r));
    }
    json failures_json = json::array();
    for (const SampleFailure& f : failures)
        failures_json.push_back(
            json{{"sample_id", f.sample_id}, {"stage", f.stage}, {"error", f.error}});
    return json{{"kind", kind},
                {"spec", spec},
                {"started_at_ms", started_at_ms},
                {"finished_at_ms", finished_at_ms},
                {"rows", std::move(rows_json)},
                {"per_sample_path", per_sample_path},
                {"failures", std::move(failures_json)},
                {"statistics", json{{"critic_fallbacks", critic_fallback_count},
                                    {"unevaluated", unevaluated_count}}},
                {"decoding", json{{"temperature", temperature},
                                  {"max_output_tokens", max_output_tokens},
                                  {"judge_max_output_tokens", judge_max_output_tokens}}},
                {"aggregation", "per_sample_mean"}};
}

std::string AblationRun::serialize() const { return to_json().dump(2) + "\n"; }

ProviderProfile resolve_profile(const RunSpec& spec) {
    const auto it = spec.profiles.find(spec.provider_profile);
    if (it != spec.profiles.end()) return it->second;
    if (spec.provider_profile == "mock") {
        ProviderProfile p;
        p.name = "mock";
        p.kind = "mock";
        return p;
    }
    throw RunError("unknown provider profile: " + spec.provider_profile);
}

RunEnvironment make_environment(const ValidatedRunSpec& spec, ProviderMode mode,
                                const fs::path& cassette_path, const SynonymTable& synonyms) {
    const ProviderProfile profile = resolve_profile(spec.spec());
    RunEnvironment env;
    if (mode == ProviderMode::replay_strict) {
        env.agent_provider =
            std::make_shared<RecordReplayProvider>(mode, nullptr, cassette_path);
    } else if (mode == ProviderMode::record) {
        env.agent_provider = std::make_shared<RecordReplayProvider>(
            mode, make_provider(profile), cassette_path);
    } else {
        env.agent_provider = make_provider(profile);
    }
    env.judge_provider = env.agent_provider;
    env.embed_provider = env.agent_provider;
    env.prompts = PromptSet::load(spec.spec().prompt_dir);
    env.mode = mode;
    env.pipeline_options = PipelineOptions{profile.temperature, profile.max_output_tokens};
    env.judge_options = JudgeOptions{profile.temperature, profile.judge_max_output_tokens};
    env.synonyms = synonyms;
    return env;
}

AblationRun run_ablation(const ValidatedRunSpec& spec, const RunEnvironment& env,
                         const fs::path& run_dir) {
    return execute("ablation", spec, ablation_plan(spec.spec()), env, run_dir, false);
}

AblationRun run_captioner_comparison(const ValidatedRunSpec& spec, const RunEnvironment& env,
                                     const fs::path& run_dir) {
    return execute("captioner_comparison", spec, captioner_plan(spec.spec()), env, run_dir,
                   false);
}

AblationRun resume(const fs::path& run_dir, const RunEnvironment& env,
                   const ValidatedRunSpec* expected) {
    const RunManifest manifest = read_run_manifest(run_dir);
    if (expected && !(*expected == manifest.spec))
        throw SpecMismatchError("run directory spec differs from the invocation spec: " +
                                run_dir.string());
    return execute(manifest.kind, manifest.spec, manifest.plan, env, run_dir, true);
}

AblationRun rescore(const fs::path& run_dir, const RunEnvironment& env) {
    const RunManifest manifest = read_run_manifest(run_dir);
    // wipe previous scores, keep traces
    const fs::path scores_path = run_dir / "scores.jsonl";
    if (fs::exists(scores_path)) fs::remove(scores_path);
    return execute(manifest.kind, manifest.spec, manifest.plan, env, run_dir, true);
}

std::optional<std::string> replay_verify(const fs::path& run_dir) {
    const RunManifest manifest = read_run_manifest(run_dir);
    const RunSpec& spec = manifest.spec.spec();
    const fs::path cassette_path = run_dir / "cassette.jsonl";
    if (!fs::exists(cassette_path))
        throw RunError("no cassette.jsonl in run directory: " + run_dir.string());

    RunEnvironment env = make_environment(manifest.spec, ProviderMode::replay_strict,
                                          cassette_path);
    const RunState stored =
        load_state(run_dir / "traces.jsonl", run_dir / "scores.jsonl");

    LoadResult loaded = load_for_run(spec.dataset_kind, spec.dataset_path, spec.frames_per_gif);
    const std::vector<Sample> subset =
        sample_subset(loaded.samples, spec.sample_count, spec.seed);
    const AgentPipeline pipeline(env.agent_provider, env.prompts, env.pipeline_options);

    for (const RowPlan& row : manifest.plan) {
        for (const Sample& sample : subset) {
            const CellKey key{row.label, sample.id};
            if (stored.failures.count(key)) continue;  // failed cells carry no recorded calls
            const auto trace_it = stored.traces.find(key);
            if (trace_it == stored.traces.end())
                return "cell not recorded: " + row.label + "/" + sample.id;

            AgentTrace fresh;
            try {
                fresh = pipeline.run_pipeline(sample, row.config);
            } catch (const StageError& e) {
                return std::string(e.what());  // carries the missing digest on replay misses
            }

            const json fresh_json = fresh;
            const json stored_json = trace_it->second;
            if (fresh_json != stored_json) {
                const auto& stored_ex = trace_it->second.raw_exchanges;
                for (std::size_t i = 0; i < fresh.raw_exchanges.size(); ++i) {
                    if (i >= stored_ex.size())
                        return fresh.raw_exchanges[i].request_digest;
                    if (fresh.raw_exchanges[i].request_digest != stored_ex[i].request_digest ||
                        fresh.raw_exchanges[i].response.text != stored_ex[i].response.text)
                        return fresh.raw_exchanges[i].request_digest;
                }
                return "trace diverges for " + row.label + "/" + sample.id;
            }

            const auto score_it = stored.scores.find(key);
            if (score_it != stored.scores.end()) {
                const ChatRequest judge_req = build_judge_request(
                    sample, fresh.final_answer, env.prompts.judge, env.judge_options);
                JudgeScore js;
                try {
                    js = judge(sample, fresh.final_answer, *env.judge_provider, env.prompts.judge,
                               env.judge_options);
                } catch (const std::exception& e) {
                    return request_digest(judge_req);
                }
                if (js.score != score_it->second.first.score ||
                    js.raw_reply != score_it->second.first.raw_reply)
                    return request_digest(judge_req);
            }
        }
    }
    return std::nullopt;
}

}  // namespace cartoonqa
