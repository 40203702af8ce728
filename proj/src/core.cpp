#include "cartoonqa/core.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <stdexcept>

namespace fs = std::filesystem;

namespace cartoonqa {

std::string to_string(QuestionType t) {
    switch (t) {
        case QuestionType::colour_counting: return "colour_counting";
        case QuestionType::object_recognition: return "object_recognition";
        case QuestionType::dialogue_consistency: return "dialogue_consistency";
        case QuestionType::spatial_reasoning: return "spatial_reasoning";
        case QuestionType::other: return "other";
    }
    throw std::logic_error("bad QuestionType");
}

std::string to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::pororo: return "pororo";
        case DatasetKind::simpsons: return "simpsons";
        case DatasetKind::custom: return "custom";
    }
    throw std::logic_error("bad DatasetKind");
}

std::string to_string(MediaType m) {
    switch (m) {
        case MediaType::png: return "png";
        case MediaType::jpeg: return "jpeg";
        case MediaType::gif_frame: return "gif_frame";
    }
    throw std::logic_error("bad MediaType");
}

std::string to_string(CaptionerKind c) {
    switch (c) {
        case CaptionerKind::multimodal_chat: return "multimodal_chat";
        case CaptionerKind::frozen_captioner: return "frozen_captioner";
    }
    throw std::logic_error("bad CaptionerKind");
}

namespace {

[[noreturn]] void bad_enum(const std::string& what, const std::string& value) {
    throw std::invalid_argument("unknown " + what + ": '" + value + "'");
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

QuestionType question_type_from_string(const std::string& s) {
    if (s == "colour_counting") return QuestionType::colour_counting;
    if (s == "object_recognition") return QuestionType::object_recognition;
    if (s == "dialogue_consistency") return QuestionType::dialogue_consistency;
    if (s == "spatial_reasoning") return QuestionType::spatial_reasoning;
    if (s == "other") return QuestionType::other;
    bad_enum("question type", s);
}

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "pororo") return DatasetKind::pororo;
    if (s == "simpsons") return DatasetKind::simpsons;
    if (s == "custom") return DatasetKind::custom;
    bad_enum("dataset kind", s);
}

MediaType media_type_from_string(const std::string& s) {
    if (s == "png") return MediaType::png;
    if (s == "jpeg") return MediaType::jpeg;
    if (s == "gif_frame") return MediaType::gif_frame;
    bad_enum("media type", s);
}

CaptionerKind captioner_kind_from_string(const std::string& s) {
    if (s == "multimodal_chat") return CaptionerKind::multimodal_chat;
    if (s == "frozen_captioner") return CaptionerKind::frozen_captioner;
    bad_enum("captioner kind", s);
}

std::optional<QuestionType> question_type_from_alias(const std::string& s) {
    std::string key = lower(trim(s));
    for (char& c : key) {
        if (c == '/' || c == '-' || c == ' ') c = '_';
    }
    // collapse doubled underscores from e.g. "colour / counting"
    std::string collapsed;
    for (char c : key) {
        if (c == '_' && !collapsed.empty() && collapsed.back() == '_') continue;
        collapsed.push_back(c);
    }
    if (collapsed == "colour_counting" || collapsed == "color_counting" ||
        collapsed == "counting" || collapsed == "colour" || collapsed == "color")
        return QuestionType::colour_counting;
    if (collapsed == "object_recognition" || collapsed == "object")
        return QuestionType::object_recognition;
    if (collapsed == "dialogue_consistency" || collapsed == "dialogue")
        return QuestionType::dialogue_consistency;
    if (collapsed == "spatial_reasoning" || collapsed == "spatial")
        return QuestionType::spatial_reasoning;
    if (collapsed == "other") return QuestionType::other;
    return std::nullopt;
}

void log_warn(const std::string& msg) {
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::fprintf(stderr, "[cartoonqa] warning: %s\n", msg.c_str());
}

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& values) {
    std::string out;
    std::size_t line_start = 0;
    while (line_start <= tmpl.size()) {
        std::size_t line_end = tmpl.find('\n', line_start);
        const bool last = line_end == std::string::npos;
        if (last) line_end = tmpl.size();
        const std::string line = tmpl.substr(line_start, line_end - line_start);

        std::string rendered;
        int known = 0;
        int empty_known = 0;
        std::size_t pos = 0;
        while (pos < line.size()) {
            const std::size_t open = line.find('{', pos);
            if (open == std::string::npos) {
                rendered += line.substr(pos);
                break;
            }
            const std::size_t close = line.find('}', open + 1);
            if (close == std::string::npos) {
                rendered += line.substr(pos);
                break;
            }
            const std::string name = line.substr(open + 1, close - open - 1);
            const auto it = values.find(name);
            if (it == values.end()) {
                // not a known placeholder; keep the brace literally and
                // continue scanning right after it
                rendered += line.substr(pos, open - pos + 1);
                pos = open + 1;
                continue;
            }
            rendered += line.substr(pos, open - pos);
            rendered += it->second;
            ++known;
            if (trim(it->second).empty()) ++empty_known;
            pos = close + 1;
        }

        const bool drop = known > 0 && known == empty_known;
        if (!drop) {
            out += rendered;
            if (!last) out.push_back('\n');
        }
        if (last) break;
        line_start = line_end + 1;
    }
    return out;
}

void Sample::validate() const {
    if (trim(id).empty())
        throw std::invalid_argument("sample id must be non-empty");
    if (images.empty())
        throw std::invalid_argument("sample '" + id + "': images must be non-empty");
    if (trim(question).empty())
        throw std::invalid_argument("sample '" + id + "': question must be non-empty");
    if (trim(ground_truth).empty())
        throw std::invalid_argument("sample '" + id + "': ground_truth must be non-empty");
    for (const ImageAsset& a : images) {
        if (a.bytes.empty())
            throw std::invalid_argument("sample '" + id + "': empty image payload");
        if (a.media_type == MediaType::gif_frame && !a.source_frame_index.has_value())
            throw std::invalid_argument("sample '" + id +
                                        "': gif_frame asset without source_frame_index");
    }
}

AgentConfiguration full_configuration() { return {true, true, CaptionerKind::multimodal_chat}; }
AgentConfiguration language_only_configuration() { return {false, false, CaptionerKind::multimodal_chat}; }
AgentConfiguration visual_language_configuration() { return {true, false, CaptionerKind::multimodal_chat}; }
AgentConfiguration language_critic_configuration() { return {false, true, CaptionerKind::multimodal_chat}; }

std::vector<AgentConfiguration> standard_ablation_configurations() {
    return {full_configuration(), language_only_configuration(),
            visual_language_configuration(), language_critic_configuration()};
}

std::string configuration_label(const AgentConfiguration& cfg) {
    if (cfg.visual_enabled && cfg.critic_enabled) return "Full";
    if (!cfg.visual_enabled && !cfg.critic_enabled) return "Language Only";
    if (cfg.visual_enabled) return "Visual + Language";
    return "Language + Critic";
}

std::optional<AgentConfiguration> configuration_from_label(const std::string& label) {
    const std::string key = lower(trim(label));
    if (key == "full") return full_configuration();
    if (key == "language only" || key == "language_only") return language_only_configuration();
    if (key == "visual + language" || key == "visual_language")
        return visual_language_configuration();
    if (key == "language + critic" || key == "language_critic")
        return language_critic_configuration();
    return std::nullopt;
}

namespace {

std::string resolve_path(const std::string& p) {
    return fs::absolute(fs::path(p)).lexically_normal().string();
}

}  // namespace

ValidationResult validate_run_spec(const RunSpec& spec) {
    ValidationResult result;
    RunSpec norm = spec;

    if (norm.dataset_path.empty()) {
        result.errors.push_back("dataset_path is required");
    } else {
        norm.dataset_path = resolve_path(norm.dataset_path);
        if (!fs::exists(norm.dataset_path))
            result.errors.push_back("dataset path does not exist: " + norm.dataset_path);
    }

    if (norm.sample_count < 1)
        result.errors.push_back("sample_count must be >=1");

    if (norm.configurations.empty()) {
        result.errors.push_back("configuration list must be non-empty");
    } else {
        std::vector<AgentConfiguration> deduped;
        for (AgentConfiguration cfg : norm.configurations) {
            // captioner is only consulted when the visual stage runs
            if (!cfg.visual_enabled) cfg.captioner = CaptionerKind::multimodal_chat;
            if (std::find(deduped.begin(), deduped.end(), cfg) == deduped.end())
                deduped.push_back(cfg);
        }
        norm.configurations = std::move(deduped);
    }

    if (norm.provider_profile != "mock" && !norm.profiles.count(norm.provider_profile))
        result.errors.push_back("unknown provider profile: '" + norm.provider_profile + "'");

    if (norm.max_parallel < 1)
        result.errors.push_back("max_parallel must be >=1");
    if (norm.frames_per_gif < 1)
        result.errors.push_back("frames_per_gif must be >=1");

    if (norm.output_dir.empty()) norm.output_dir = "run-out";
    norm.output_dir = resolve_path(norm.output_dir);
    if (norm.prompt_dir.empty()) norm.prompt_dir = "prompts";
    norm.prompt_dir = resolve_path(norm.prompt_dir);

    if (result.errors.empty())
        result.spec = ValidatedRunSpec(std::move(norm));
    return result;
}

json ValidatedRunSpec::to_json() const {
    json j = spec_;
    return j;
}

ValidatedRunSpec ValidatedRunSpec::from_json(const json& j) {
    RunSpec raw = j.get<RunSpec>();
    ValidationResult res = validate_run_spec(raw);
    if (!res.ok()) {
        std::string msg = "invalid run spec:";
        for (const std::string& e : res.errors) msg += " " + e + ";";
        throw std::invalid_argument(msg);
    }
    return *res.spec;
}

void to_json(json& j, const ImageAsset& a) {
    j = json{{"media_type", to_string(a.media_type)}, {"base64", a.base64()}};
    if (a.source_frame_index) j["frame_index"] = *a.source_frame_index;
}

void from_json(const json& j, ImageAsset& a) {
    a.media_type = media_type_from_string(j.at("media_type").get<std::string>());
    a.bytes = base64_decode(j.at("base64").get<std::string>());
    if (j.contains("frame_index"))
        a.source_frame_index = j.at("frame_index").get<int>();
    else
        a.source_frame_index.reset();
}

void to_json(json& j, const Sample& s) {
    j = json{{"id", s.id},
             {"images", s.images},
             {"question", s.question},
             {"question_type", to_string(s.question_type)},
             {"ground_truth", s.ground_truth},
             {"dataset", to_string(s.dataset)}};
    if (s.context) j["context"] = *s.context;
}

void from_json(const json& j, Sample& s) {
    s.id = j.at("id").get<std::string>();
    s.images = j.at("images").get<std::vector<ImageAsset>>();
    s.question = j.at("question").get<std::string>();
    s.question_type = question_type_from_string(j.at("question_type").get<std::string>());
    s.ground_truth = j.at("ground_truth").get<std::string>();
    s.dataset = dataset_kind_from_string(j.at("dataset").get<std::string>());
    if (j.contains("context"))
        s.context = j.at("context").get<std::string>();
    else
        s.context.reset();
}

void to_json(json& j, const AgentConfiguration& c) {
    j = json{{"visual_enabled", c.visual_enabled},
             {"critic_enabled", c.critic_enabled},
             {"captioner", to_string(c.captioner)}};
}

void from_json(const json& j, AgentConfiguration& c) {
    if (j.is_string()) {
        auto cfg = configuration_from_label(j.get<std::string>());
        if (!cfg) throw std::invalid_argument("unknown configuration label: " + j.dump());
        c = *cfg;
        return;
    }
    c.visual_enabled = j.at("visual_enabled").get<bool>();
    c.critic_enabled = j.at("critic_enabled").get<bool>();
    c.captioner = j.contains("captioner")
                      ? captioner_kind_from_string(j.at("captioner").get<std::string>())
                      : CaptionerKind::multimodal_chat;
}

void to_json(json& j, const ProviderProfile& p) {
    j = json{{"name", p.name},
             {"kind", p.kind},
             {"base_url", p.base_url},
             {"chat_model", p.chat_model},
             {"judge_model", p.judge_model},
             {"captioner_model", p.captioner_model},
             {"embed_model", p.embed_model},
             {"api_key_env", p.api_key_env},
             {"base_url_env", p.base_url_env},
             {"temperature", p.temperature},
             {"max_output_tokens", p.max_output_tokens},
             {"judge_max_output_tokens", p.judge_max_output_tokens},
             {"max_attempts", p.max_attempts},
             {"backoff_base_ms", p.backoff_base_ms},
             {"frozen_captioner_name", p.frozen_captioner_name},
             {"multimodal_chat_name", p.multimodal_chat_name}};
}

void from_json(const json& j, ProviderProfile& p) {
    ProviderProfile defaults;
    p.name = j.value("name", defaults.name);
    p.kind = j.value("kind", defaults.kind);
    p.base_url = j.value("base_url", defaults.base_url);
    p.chat_model = j.value("chat_model", defaults.chat_model);
    p.judge_model = j.value("judge_model", defaults.judge_model);
    p.captioner_model = j.value("captioner_model", defaults.captioner_model);
    p.embed_model = j.value("embed_model", defaults.embed_model);
    p.api_key_env = j.value("api_key_env", defaults.api_key_env);
    p.base_url_env = j.value("base_url_env", defaults.base_url_env);
    p.temperature = j.value("temperature", defaults.temperature);
    p.max_output_tokens = j.value("max_output_tokens", defaults.max_output_tokens);
    p.judge_max_output_tokens = j.value("judge_max_output_tokens", defaults.judge_max_output_tokens);
    p.max_attempts = j.value("max_attempts", defaults.max_attempts);
    p.backoff_base_ms = j.value("backoff_base_ms", defaults.backoff_base_ms);
    p.frozen_captioner_name = j.value("frozen_captioner_name", defaults.frozen_captioner_name);
    p.multimodal_chat_name = j.value("multimodal_chat_name", defaults.multimodal_chat_name);
}

void to_json(json& j, const RunSpec& s) {
    j = json{{"dataset_path", s.dataset_path},
             {"dataset_kind", to_string(s.dataset_kind)},
             {"sample_count", s.sample_count},
             {"seed", s.seed},
             {"configurations", s.configurations},
             {"provider_profile", s.provider_profile},
             {"max_parallel", s.max_parallel},
             {"output_dir", s.output_dir},
             {"prompt_dir", s.prompt_dir},
             {"frames_per_gif", s.frames_per_gif},
             {"profiles", s.profiles}};
}

void from_json(const json& j, RunSpec& s) {
    RunSpec defaults;
    s.dataset_path = j.at("dataset_path").get<std::string>();
    s.dataset_kind = dataset_kind_from_string(j.at("dataset_kind").get<std::string>());
    s.sample_count = j.at("sample_count").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.configurations = j.at("configurations").get<std::vector<AgentConfiguration>>();
    s.provider_profile = j.value("provider_profile", defaults.provider_profile);
    s.max_parallel = j.value("max_parallel", defaults.max_parallel);
    s.output_dir = j.value("output_dir", defaults.output_dir);
    s.prompt_dir = j.value("prompt_dir", defaults.prompt_dir);
    s.frames_per_gif = j.value("frames_per_gif", defaults.frames_per_gif);
    s.profiles.clear();
    if (j.contains("profiles")) {
        for (const auto& [key, value] : j.at("profiles").items()) {
            ProviderProfile p = value.get<ProviderProfile>();
            if (p.name.empty()) p.name = key;
            s.profiles[key] = std::move(p);
        }
    }
}

}  // namespace cartoonqa
