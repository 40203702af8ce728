#include "cartoonqa/agents.hpp"

#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace cartoonqa {

namespace {

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read prompt template: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

constexpr const char* kRepairInstruction =
    "Your previous reply could not be parsed. Reply again with only the JSON object, "
    "no surrounding prose or code fences.";

}  // namespace

PromptSet PromptSet::load(const fs::path& dir) {
    PromptSet set;
    set.visual = read_text_file(dir / "visual.txt");
    set.language = read_text_file(dir / "language.txt");
    set.critic = read_text_file(dir / "critic.txt");
    set.judge = read_text_file(dir / "judge.txt");
    return set;
}

std::string to_string(VisualReliability r) {
    switch (r) {
        case VisualReliability::reliable: return "reliable";
        case VisualReliability::partial: return "partial";
        case VisualReliability::unreliable: return "unreliable";
    }
    return "partial";
}

std::optional<VisualReliability> visual_reliability_from_alias(const std::string& s) {
    const std::string key = trim(s);
    if (key == "reliable" || key == "high") return VisualReliability::reliable;
    if (key == "partial" || key == "partially reliable" || key == "medium")
        return VisualReliability::partial;
    if (key == "unreliable" || key == "low") return VisualReliability::unreliable;
    return std::nullopt;
}

void AgentTrace::validate() const {
    if (visual.has_value() != configuration.visual_enabled)
        throw std::logic_error("trace " + sample_id + ": visual presence does not match configuration");
    if (verdict.has_value() != configuration.critic_enabled)
        throw std::logic_error("trace " + sample_id + ": verdict presence does not match configuration");
    if (trim(answer.text).empty())
        throw std::logic_error("trace " + sample_id + ": empty language answer");
    if (verdict) {
        if (verdict->confidence < 0.0 || verdict->confidence > 1.0)
            throw std::logic_error("trace " + sample_id + ": confidence outside [0,1]");
        if (!verdict->revised && verdict->final_answer != answer.text)
            throw std::logic_error("trace " + sample_id + ": preserve verdict altered the answer");
        if (final_answer != verdict->final_answer)
            throw std::logic_error("trace " + sample_id + ": final answer does not match verdict");
    } else if (final_answer != answer.text) {
        throw std::logic_error("trace " + sample_id + ": final answer does not match language answer");
    }
}

long AgentTrace::stage_latency_ms(const std::string& stage) const {
    long total = 0;
    for (const StageExchange& e : raw_exchanges)
        if (e.stage == stage) total += e.response.latency_ms;
    return total;
}

void to_json(json& j, const VisualDescription& v) {
    json frames = json::array();
    for (const auto& [idx, text] : v.per_image) frames.push_back(json{{"frame", idx}, {"text", text}});
    j = json{{"text", v.text}, {"source", to_string(v.source)}, {"per_image", std::move(frames)}};
}

void from_json(const json& j, VisualDescription& v) {
    v.text = j.at("text").get<std::string>();
    v.source = captioner_kind_from_string(j.at("source").get<std::string>());
    v.per_image.clear();
    for (const json& f : j.at("per_image"))
        v.per_image.emplace_back(f.at("frame").get<int>(), f.at("text").get<std::string>());
}

void to_json(json& j, const LanguageAnswer& a) {
    j = json{{"text", a.text},
             {"used_visual_context", a.used_visual_context},
             {"used_dialogue_context", a.used_dialogue_context}};
}

void from_json(const json& j, LanguageAnswer& a) {
    a.text = j.at("text").get<std::string>();
    a.used_visual_context = j.at("used_visual_context").get<bool>();
    a.used_dialogue_context = j.at("used_dialogue_context").get<bool>();
}

void to_json(json& j, const CriticVerdict& v) {
    j = json{{"final_answer", v.final_answer},
             {"revised", v.revised},
             {"strategy", to_string(v.strategy)},
             {"visual_reliability", to_string(v.visual_reliability)},
             {"confidence", v.confidence},
             {"explanation", v.explanation},
             {"visual_rationale", v.visual_rationale}};
}

void from_json(const json& j, CriticVerdict& v) {
    v.final_answer = j.at("final_answer").get<std::string>();
    v.revised = j.at("revised").get<bool>();
    v.strategy = question_type_from_string(j.at("strategy").get<std::string>());
    v.visual_reliability = *visual_reliability_from_alias(j.at("visual_reliability").get<std::string>());
    v.confidence = j.at("confidence").get<double>();
    v.explanation = j.at("explanation").get<std::string>();
    v.visual_rationale = j.at("visual_rationale").get<std::string>();
}

void to_json(json& j, const StageExchange& e) {
    j = json{{"stage", e.stage},
             {"request_digest", e.request_digest},
             {"response",
              json{{"text", e.response.text},
                   {"provider_id", e.response.provider_id},
                   {"latency_ms", e.response.latency_ms},
                   {"attempt_count", e.response.attempt_count}}}};
}

void from_json(const json& j, StageExchange& e) {
    e.stage = j.at("stage").get<std::string>();
    e.request_digest = j.at("request_digest").get<std::string>();
    const json& r = j.at("response");
    e.response.text = r.at("text").get<std::string>();
    e.response.provider_id = r.at("provider_id").get<std::string>();
    e.response.latency_ms = r.at("latency_ms").get<long>();
    e.response.attempt_count = r.at("attempt_count").get<int>();
}

void to_json(json& j, const AgentTrace& t) {
    j = json{{"sample_id", t.sample_id},
             {"configuration", t.configuration},
             {"answer", t.answer},
             {"final_answer", t.final_answer},
             {"raw_exchanges", t.raw_exchanges},
             {"critic_fallback", t.critic_fallback},
             {"critic_parse_retries", t.critic_parse_retries},
             {"timings_ms", json{{"visual", t.stage_latency_ms("visual")},
                                 {"language", t.stage_latency_ms("language")},
                                 {"critic", t.stage_latency_ms("critic")}}}};
    if (t.visual) j["visual"] = *t.visual;
    if (t.verdict) j["verdict"] = *t.verdict;
}

void from_json(const json& j, AgentTrace& t) {
    t.sample_id = j.at("sample_id").get<std::string>();
    t.configuration = j.at("configuration").get<AgentConfiguration>();
    t.answer = j.at("answer").get<LanguageAnswer>();
    t.final_answer = j.at("final_answer").get<std::string>();
    t.raw_exchanges = j.at("raw_exchanges").get<std::vector<StageExchange>>();
    t.critic_fallback = j.value("critic_fallback", false);
    t.critic_parse_retries = j.value("critic_parse_retries", 0);
    if (j.contains("visual"))
        t.visual = j.at("visual").get<VisualDescription>();
    else
        t.visual.reset();
    if (j.contains("verdict"))
        t.verdict = j.at("verdict").get<CriticVerdict>();
    else
        t.verdict.reset();
}

// -------------------------------------------------------- critic parsing ----

namespace {

std::optional<json> extract_json_object(const std::string& text) {
    const std::size_t start = text.find('{');
    if (start == std::string::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}') {
            --depth;
            if (depth == 0) {
                try {
                    return json::parse(text.substr(start, i - start + 1));
                } catch (const json::exception&) {
                    return std::nullopt;
                }
            }
        }
    }
    return std::nullopt;
}

std::optional<bool> read_flexible_bool(const json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_string()) {
        const std::string s = trim(j.get<std::string>());
        if (s == "true" || s == "yes") return true;
        if (s == "false" || s == "no") return false;
    }
    return std::nullopt;
}

std::optional<double> read_flexible_number(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        try {
            return std::stod(j.get<std::string>());
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<CriticVerdict> parse_critic_reply(const std::string& reply,
                                                const std::string& language_answer,
                                                QuestionType default_strategy) {
    const std::optional<json> obj = extract_json_object(reply);
    if (!obj) return std::nullopt;

    if (!obj->contains("revised")) return std::nullopt;
    const std::optional<bool> revised = read_flexible_bool(obj->at("revised"));
    if (!revised) return std::nullopt;

    CriticVerdict v;
    v.revised = *revised;
    if (v.revised) {
        if (!obj->contains("final_answer") || !obj->at("final_answer").is_string())
            return std::nullopt;
        v.final_answer = trim(obj->at("final_answer").get<std::string>());
        if (v.final_answer.empty()) return std::nullopt;  // revision to nothing is malformed
    } else {
        v.final_answer = language_answer;  // preserve verbatim
    }

    v.strategy = default_strategy;
    if (obj->contains("strategy") && obj->at("strategy").is_string()) {
        if (auto s = question_type_from_alias(obj->at("strategy").get<std::string>()))
            v.strategy = *s;
    }
    v.visual_reliability = VisualReliability::partial;
    if (obj->contains("visual_reliability") && obj->at("visual_reliability").is_string()) {
        if (auto r = visual_reliability_from_alias(obj->at("visual_reliability").get<std::string>()))
            v.visual_reliability = *r;
    }
    v.confidence = 0.0;
    if (obj->contains("confidence")) {
        if (auto c = read_flexible_number(obj->at("confidence")))
            v.confidence = std::min(1.0, std::max(0.0, *c));
    }
    if (obj->contains("explanation") && obj->at("explanation").is_string())
        v.explanation = obj->at("explanation").get<std::string>();
    if (obj->contains("visual_rationale") && obj->at("visual_rationale").is_string())
        v.visual_rationale = obj->at("visual_rationale").get<std::string>();
    return v;
}

// -------------------------------------------------------------- pipeline ----

AgentPipeline::AgentPipeline(std::shared_ptr<Provider> provider, PromptSet prompts,
                             PipelineOptions options)
    : provider_(std::move(provider)), prompts_(std::move(prompts)), options_(options) {}

ChatResponse AgentPipeline::call(const std::string& stage, const ChatRequest& req,
                                 std::vector<StageExchange>* log) const {
    ChatResponse resp;
    try {
        resp = provider_->chat(req);
    } catch (const ProviderError& e) {
        throw StageError(stage, e.what());
    }
    if (log) log->push_back(StageExchange{stage, request_digest(req), resp});
    return resp;
}

ChatRequest AgentPipeline::build_visual_request(const Sample& sample) const {
    ChatRequest req;
    req.user_text = render_template(prompts_.visual,
                                    {{"frame_count", std::to_string(sample.images.size())}});
    req.images = sample.images;
    req.temperature = options_.temperature;
    req.max_output_tokens = options_.max_output_tokens;
    return req;
}

VisualDescription AgentPipeline::describe_scene(const Sample& sample, CaptionerKind captioner,
                                                std::vector<StageExchange>* log) const {
    if (sample.images.empty())
        throw StageError("visual", "sample has no images");

    VisualDescription desc;
    desc.source = captioner;

    if (captioner == CaptionerKind::multimodal_chat) {
        const ChatResponse resp = call("visual", build_visual_request(sample), log);
        desc.text = trim(resp.text);
    } else {
        std::string joined;
        for (std::size_t i = 0; i < sample.images.size(); ++i) {
            const ImageAsset& img = sample.images[i];
            std::string caption;
            try {
                caption = provider_->caption(img);
            } catch (const ProviderError& e) {
                throw StageError("visual", e.what());
            }
            const int frame = img.source_frame_index.value_or(static_cast<int>(i));
            // fixed provider tag: caption exchanges must serialize identically
            // under record and replay wrappers
            if (log)
                log->push_back(StageExchange{"visual", request_digest(caption_key_request(img)),
                                             ChatResponse{caption, "captioner", 0, 1}});
            desc.per_image.emplace_back(frame, caption);
            if (!joined.empty()) joined.push_back('\n');
            joined += caption;
        }
        desc.text = trim(joined);
    }

    if (desc.text.empty()) desc.text = kNoVisualSentinel;
    return desc;
}

ChatRequest AgentPipeline::build_language_request(
    const Sample& sample, const std::optional<VisualDescription>& visual) const {
    ChatRequest req;
    req.user_text = render_template(prompts_.language,
                                    {{"question", sample.question},
                                     {"context", sample.context.value_or("")},
                                     {"visual", visual ? visual->text : ""}});
    // without a visual stage the raw image(s) go straight to this agent
    if (!visual) req.images = sample.images;
    req.temperature = options_.temperature;
    req.max_output_tokens = options_.max_output_tokens;
    return req;
}

LanguageAnswer AgentPipeline::answer_question(const Sample& sample,
                                              const std::optional<VisualDescription>& visual,
                                              std::vector<StageExchange>* log) const {
    const ChatResponse resp = call("language", build_language_request(sample, visual), log);
    LanguageAnswer answer;
    answer.text = trim(resp.text);
    answer.used_visual_context = visual.has_value();
    answer.used_dialogue_context = sample.context.has_value() && !trim(*sample.context).empty();
    if (answer.text.empty())
        throw StageError("language", "language agent returned an empty answer");
    return answer;
}

ChatRequest AgentPipeline::build_critic_request(const Sample& sample, const LanguageAnswer& answer,
                                                const std::optional<VisualDescription>& visual) const {
    ChatRequest req;
    req.user_text = render_template(prompts_.critic,
                                    {{"question", sample.question},
                                     {"context", sample.context.value_or("")},
                                     {"visual", visual ? visual->text : ""},
                                     {"answer", answer.text}});
    // the critic reasons over text only: descriptions and dialogue, no raw images
    req.temperature = options_.temperature;
    req.max_output_tokens = options_.max_output_tokens;
    return req;
}

CriticVerdict AgentPipeline::critique(const Sample& sample, const LanguageAnswer& answer,
                                      const std::optional<VisualDescription>& visual,
                                      std::vector<StageExchange>* log, bool* fallback,
                                      int* retries) const {
    if (fallback) *fallback = false;
    if (retries) *retries = 0;

    ChatRequest req = build_critic_request(sample, answer, visual);
    ChatResponse resp = call("critic", req, log);
    std::optional<CriticVerdict> verdict =
        parse_critic_reply(resp.text, answer.text, sample.question_type);
    if (verdict) return *verdict;

    // one repair attempt, then fail open by preserving the answer
    if (retries) *retries = 1;
    ChatRequest repair = req;
    repair.user_text += "\n\n";
    repair.user_text += kRepairInstruction;
    resp = call("critic", repair, log);
    verdict = parse_critic_reply(resp.text, answer.text, sample.question_type);
    if (verdict) return *verdict;

    if (fallback) *fallback = true;
    CriticVerdict v;
    v.final_answer = answer.text;
    v.revised = false;
    v.strategy = sample.question_type;
    v.visual_reliability = VisualReliability::unreliable;
    v.confidence = 0.0;
    v.explanation = "critic output unparseable";
    return v;
}

AgentTrace AgentPipeline::run_pipeline(const Sample& sample, const AgentConfiguration& cfg) const {
    AgentTrace trace;
    trace.sample_id = sample.id;
    trace.configuration = cfg;

    if (cfg.visual_enabled)
        trace.visual = describe_scene(sample, cfg.captioner, &trace.raw_exchanges);

    trace.answer = answer_question(sample, trace.visual, &trace.raw_exchanges);

    if (cfg.critic_enabled) {
        trace.verdict = critique(sample, trace.answer, trace.visual, &trace.raw_exchanges,
                                 &trace.critic_fallback, &trace.critic_parse_retries);
        trace.final_answer = trace.verdict->final_answer;
    } else {
        trace.final_answer = trace.answer.text;
    }

    trace.validate();
    return trace;
}

}  // namespace cartoonqa
