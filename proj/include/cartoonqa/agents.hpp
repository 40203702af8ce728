#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cartoonqa/core.hpp"
#include "cartoonqa/provider.hpp"

namespace cartoonqa {

// Prompt templates loaded from a directory of plain-text files
// (visual.txt, language.txt, critic.txt, judge.txt).
struct PromptSet {
    std::string visual;
    std::string language;
    std::string critic;
    std::string judge;

    static PromptSet load(const std::filesystem::path& dir);
};

enum class VisualReliability { reliable, partial, unreliable };

std::string to_string(VisualReliability r);
std::optional<VisualReliability> visual_reliability_from_alias(const std::string& s);

struct VisualDescription {
    std::string text;
    CaptionerKind source{CaptionerKind::multimodal_chat};
    // per-frame captions in frame order; empty for joint multimodal descriptions
    std::vector<std::pair<int, std::string>> per_image;
};

struct LanguageAnswer {
    std::string text;
    bool used_visual_context{false};
    bool used_dialogue_context{false};
};

struct CriticVerdict {
    std::string final_answer;
    bool revised{false};
    QuestionType strategy{QuestionType::other};
    VisualReliability visual_reliability{VisualReliability::partial};
    double confidence{0.0};
    std::string explanation;
    std::string visual_rationale;
};

struct StageExchange {
    std::string stage;  // visual | language | critic
    std::string request_digest;
    ChatResponse response;
};

struct AgentTrace {
    std::string sample_id;
    AgentConfiguration configuration;
    std::optional<VisualDescription> visual;
    LanguageAnswer answer;
    std::optional<CriticVerdict> verdict;
    std::string final_answer;
    std::vector<StageExchange> raw_exchanges;
    bool critic_fallback{false};  // verdict came from the unparseable-reply fallback
    int critic_parse_retries{0};

    // Throws std::logic_error when stage presence or the final-answer rule
    // does not match the configuration.
    void validate() const;
    // Sum of provider-reported latencies per stage.
    long stage_latency_ms(const std::string& stage) const;
};

void to_json(json& j, const VisualDescription& v);
void from_json(const json& j, VisualDescription& v);
void to_json(json& j, const LanguageAnswer& a);
void from_json(const json& j, LanguageAnswer& a);
void to_json(json& j, const CriticVerdict& v);
void from_json(const json& j, CriticVerdict& v);
void to_json(json& j, const StageExchange& e);
void from_json(const json& j, StageExchange& e);
void to_json(json& j, const AgentTrace& t);
void from_json(const json& j, AgentTrace& t);

// Provider failure annotated with the pipeline stage it occurred in.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& msg)
        : std::runtime_error("[" + stage + "] " + msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

// Tolerant extraction of a CriticVerdict from a model reply: the first
// balanced JSON object is parsed; "revised" and (when revising a) non-empty
// "final_answer" are required, everything else falls back to defaults.
// language_answer is the text a preserve verdict keeps verbatim.
std::optional<CriticVerdict> parse_critic_reply(const std::string& reply,
                                                const std::string& language_answer,
                                                QuestionType default_strategy);

struct PipelineOptions {
    double temperature{0.0};
    int max_output_tokens{512};
};

class AgentPipeline {
  public:
    AgentPipeline(std::shared_ptr<Provider> provider, PromptSet prompts,
                  PipelineOptions options = {});

    VisualDescription describe_scene(const Sample& sample, CaptionerKind captioner,
                                     std::vector<StageExchange>* log = nullptr) const;
    LanguageAnswer answer_question(const Sample& sample,
                                   const std::optional<VisualDescription>& visual,
                                   std::vector<StageExchange>* log = nullptr) const;
    CriticVerdict critique(const Sample& sample, const LanguageAnswer& answer,
                           const std::optional<VisualDescription>& visual,
                           std::vector<StageExchange>* log = nullptr, bool* fallback = nullptr,
                           int* retries = nullptr) const;

    AgentTrace run_pipeline(const Sample& sample, const AgentConfiguration& cfg) const;

    // Request assembly, exposed so tests can audit prompts (e.g. the
    // ground-truth leakage guard).
    ChatRequest build_visual_request(const Sample& sample) const;
    ChatRequest build_language_request(const Sample& sample,
                                       const std::optional<VisualDescription>& visual) const;
    ChatRequest build_critic_request(const Sample& sample, const LanguageAnswer& answer,
                                     const std::optional<VisualDescription>& visual) const;

    const PromptSet& prompts() const { return prompts_; }

  private:
    ChatResponse call(const std::string& stage, const ChatRequest& req,
                      std::vector<StageExchange>* log) const;

    std::shared_ptr<Provider> provider_;
    PromptSet prompts_;
    PipelineOptions options_;
};

}  // namespace cartoonqa
