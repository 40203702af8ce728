#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cartoonqa/base64.hpp"
#include "json.hpp"

namespace cartoonqa {

using json = nlohmann::json;

enum class QuestionType {
    colour_counting,
    object_recognition,
    dialogue_consistency,
    spatial_reasoning,
    other,
};

enum class DatasetKind { pororo, simpsons, custom };
enum class MediaType { png, jpeg, gif_frame };
enum class CaptionerKind { multimodal_chat, frozen_captioner };

std::string to_string(QuestionType t);
std::string to_string(DatasetKind k);
std::string to_string(MediaType m);
std::string to_string(CaptionerKind c);

QuestionType question_type_from_string(const std::string& s);
DatasetKind dataset_kind_from_string(const std::string& s);
MediaType media_type_from_string(const std::string& s);
CaptionerKind captioner_kind_from_string(const std::string& s);

// Tolerant mapping for critic replies: accepts label variants like
// "colour/counting" or "object recognition". Unrecognised -> nullopt.
std::optional<QuestionType> question_type_from_alias(const std::string& s);

std::string trim(const std::string& s);

// stderr warning channel shared by loaders and providers
void log_warn(const std::string& msg);

// Fills {name} placeholders in a prompt template. Only known keys are
// substituted, so literal braces (e.g. JSON examples) survive. A line whose
// known placeholders all expand to empty text is dropped entirely, which is
// how optional context/visual blocks disappear from prompts.
std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& values);

struct ImageAsset {
    std::vector<std::uint8_t> bytes;
    MediaType media_type{MediaType::png};
    std::optional<int> source_frame_index;

    std::string base64() const { return base64_encode(bytes); }
};

struct Sample {
    std::string id;
    std::vector<ImageAsset> images;
    std::string question;
    QuestionType question_type{QuestionType::other};
    std::string ground_truth;
    std::optional<std::string> context;
    DatasetKind dataset{DatasetKind::custom};

    // Throws std::invalid_argument when an invariant is broken.
    void validate() const;
};

struct AgentConfiguration {
    bool visual_enabled{true};
    bool critic_enabled{true};
    CaptionerKind captioner{CaptionerKind::multimodal_chat};

    bool operator==(const AgentConfiguration&) const = default;
};

AgentConfiguration full_configuration();
AgentConfiguration language_only_configuration();
AgentConfiguration visual_language_configuration();
AgentConfiguration language_critic_configuration();

// The four ablation rows in canonical order: Full, Language Only,
// Visual + Language, Language + Critic.
std::vector<AgentConfiguration> standard_ablation_configurations();

std::string configuration_label(const AgentConfiguration& cfg);
std::optional<AgentConfiguration> configuration_from_label(const std::string& label);

struct ProviderProfile {
    std::string name;
    std::string kind{"mock"};  // "mock" or "http"
    std::string base_url;
    std::string chat_model;
    std::string judge_model;
    std::string captioner_model;
    std::string embed_model;
    std::string api_key_env{"CARTOONQA_API_KEY"};
    std::string base_url_env{"CARTOONQA_BASE_URL"};
    double temperature{0.0};
    int max_output_tokens{512};
    int judge_max_output_tokens{16};
    int max_attempts{4};
    int backoff_base_ms{250};
    // Display names used for visual-source comparison rows.
    std::string frozen_captioner_name{"BLIP2"};
    std::string multimodal_chat_name{"GPT-4o-mini"};

    bool operator==(const ProviderProfile&) const = default;
};

struct RunSpec {
    std::string dataset_path;
    DatasetKind dataset_kind{DatasetKind::custom};
    int sample_count{0};
    std::uint64_t seed{0};
    std::vector<AgentConfiguration> configurations;
    std::string provider_profile{"mock"};
    int max_parallel{1};
    std::string output_dir;
    std::string prompt_dir{"prompts"};
    int frames_per_gif{4};
    std::map<std::string, ProviderProfile> profiles;

    bool operator==(const RunSpec&) const = default;
};

struct ValidationResult;

// Normalizes paths, applies defaults, deduplicates the configuration list
// and checks the provider profile. Collects all errors instead of stopping
// at the first one.
ValidationResult validate_run_spec(const RunSpec& spec);

class ValidatedRunSpec {
  public:
    const RunSpec& spec() const { return spec_; }

    json to_json() const;
    // Parses and re-validates; throws std::invalid_argument on failure.
    static ValidatedRunSpec from_json(const json& j);

    bool operator==(const ValidatedRunSpec& other) const { return spec_ == other.spec_; }

  private:
    friend ValidationResult validate_run_spec(const RunSpec&);
    explicit ValidatedRunSpec(RunSpec s) : spec_(std::move(s)) {}
    RunSpec spec_;
};

struct ValidationResult {
    std::optional<ValidatedRunSpec> spec;
    std::vector<std::string> errors;

    bool ok() const { return errors.empty(); }
};

// splitmix64 output function over a counter stream; the fixed, portable
// generator behind seeded subset sampling.
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

inline std::uint64_t sample_key(std::uint64_t seed, std::uint64_t index) {
    return mix64(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

// JSON (de)serialization. Optionals map to absent keys, enums to strings,
// image bytes to base64.
void to_json(json& j, const ImageAsset& a);
void from_json(const json& j, ImageAsset& a);
void to_json(json& j, const Sample& s);
void from_json(const json& j, Sample& s);
void to_json(json& j, const AgentConfiguration& c);
void from_json(const json& j, AgentConfiguration& c);
void to_json(json& j, const ProviderProfile& p);
void from_json(const json& j, ProviderProfile& p);
void to_json(json& j, const RunSpec& s);
void from_json(const json& j, RunSpec& s);

}  // namespace cartoonqa
