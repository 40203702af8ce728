#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cartoonqa/agents.hpp"
#include "cartoonqa/core.hpp"
#include "cartoonqa/metrics.hpp"
#include "cartoonqa/provider.hpp"

namespace cartoonqa {

class RunError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class SpecMismatchError : public RunError {
  public:
    using RunError::RunError;
};

struct SampleFailure {
    std::string sample_id;
    std::string stage;
    std::string error;
};

struct AblationRow {
    std::string label;
    EvaluationSummary summary;
};

struct AblationRun {
    std::string kind;  // "ablation" or "captioner_comparison"
    RunSpec spec;
    long started_at_ms{0};
    long finished_at_ms{0};
    std::vector<AblationRow> rows;
    std::string per_sample_path{"traces.jsonl"};
    std::vector<SampleFailure> failures;
    int critic_fallback_count{0};
    int unevaluated_count{0};
    // decoding parameters echoed into reports (artifact-chosen defaults)
    double temperature{0.0};
    int max_output_tokens{512};
    int judge_max_output_tokens{16};

    // Deterministic serialization: sorted keys, no wall-clock content in
    // replay mode (timestamps are zeroed there by the runner).
    json to_json() const;
    std::string serialize() const;  // pretty dump + trailing newline, as written to summary.json
};

struct RunEnvironment {
    std::shared_ptr<Provider> agent_provider;
    std::shared_ptr<Provider> judge_provider;  // may alias agent_provider
    std::shared_ptr<Provider> embed_provider;  // token embeddings for BERTScore
    PromptSet prompts;
    SynonymTable synonyms;
    ProviderMode mode{ProviderMode::live};
    PipelineOptions pipeline_options;
    JudgeOptions judge_options;
};

// Convenience: profile lookup with the built-in "mock" fallback.
ProviderProfile resolve_profile(const RunSpec& spec);

// Full environment wiring for a validated spec: builds the profile's
// provider, wraps it for record/replay against cassette_path, loads
// prompts. The same wrapped provider serves agents, judge and embedder.
RunEnvironment make_environment(const ValidatedRunSpec& spec, ProviderMode mode,
                                const std::filesystem::path& cassette_path,
                                const SynonymTable& synonyms = {});

// The §-style ablation matrix over spec.configurations. Persists spec.json,
// traces.jsonl, scores.jsonl and summary.json under run_dir. The same
// seeded subset feeds every configuration.
AblationRun run_ablation(const ValidatedRunSpec& spec, const RunEnvironment& env,
                         const std::filesystem::path& run_dir);

// Frozen-captioner vs multimodal visual source: four rows over the same
// subset (Visual + Language and the full pipeline under each source).
AblationRun run_captioner_comparison(const ValidatedRunSpec& spec, const RunEnvironment& env,
                                     const std::filesystem::path& run_dir);

// Completes missing (sample, configuration) cells of a partial run
// directory; finished cells and their scores are not touched. When
// `expected` is given it must match the directory's stored spec.
AblationRun resume(const std::filesystem::path& run_dir, const RunEnvironment& env,
                   const ValidatedRunSpec* expected = nullptr);

// Judge-only re-run over existing traces: rewrites scores.jsonl and
// summary.json, leaves traces untouched.
AblationRun rescore(const std::filesystem::path& run_dir, const RunEnvironment& env);

// Replays the run against its own cassette and byte-compares every trace
// and judge score with the persisted records. Returns the first divergent
// request digest, or nullopt when the run replays faithfully.
std::optional<std::string> replay_verify(const std::filesystem::path& run_dir);

}  // namespace cartoonqa
