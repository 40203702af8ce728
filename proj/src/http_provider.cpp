#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "cartoonqa/png.hpp"
#include "cartoonqa/provider.hpp"

namespace cartoonqa {

namespace {

// "https://host:port/prefix" -> origin "https://host:port", path prefix "/prefix"
std::pair<std::string, std::string> split_base_url(const std::string& base) {
    const std::size_t scheme = base.find("://");
    if (scheme == std::string::npos)
        throw ProviderError(ProviderErrorKind::transport, "base URL missing scheme: " + base);
    const std::size_t slash = base.find('/', scheme + 3);
    if (slash == std::string::npos) return {base, ""};
    std::string prefix = base.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base.substr(0, slash), prefix};
}

HttpResult httplib_transport(const std::string& url,
                             const std::vector<std::pair<std::string, std::string>>& headers,
                             const std::string& body) {
    const auto [origin, _] = split_base_url(url);
    const std::string path = url.substr(origin.size());
    httplib::Client client(origin);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) return {0, "", httplib::to_string(res.error())};
    return {res->status, res->body, ""};
}

bool retryable_status(int status) {
    return status == 0 || status == 429 || status >= 500;
}

std::string env_or_empty(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    return v ? std::string(v) : std::string();
}

}  // namespace

HttpProvider::HttpProvider(ProviderProfile profile, HttpTransport transport)
    : profile_(std::move(profile)),
      transport_(transport ? std::move(transport) : httplib_transport) {}

std::string HttpProvider::resolved_base_url() const {
    const std::string from_env = env_or_empty(profile_.base_url_env);
    const std::string base = from_env.empty() ? profile_.base_url : from_env;
    if (base.empty())
        throw ProviderError(ProviderErrorKind::transport,
                            "profile '" + profile_.name + "' has no base URL");
    return base;
}

std::string HttpProvider::api_key() const {
    const std::string key = env_or_empty(profile_.api_key_env);
    if (key.empty())
        throw ProviderError(ProviderErrorKind::auth,
                            "missing credentials: set " + profile_.api_key_env);
    return key;
}

HttpProvider::PostOutcome HttpProvider::post_with_retry(const std::string& path,
                                                        const json& payload) {
    const auto [origin, prefix] = split_base_url(resolved_base_url());
    const std::string url = origin + prefix + path;
    const std::vector<std::pair<std::string, std::string>> headers = {
        {"Authorization", "Bearer " + api_key()}};
    const std::string body = payload.dump();

    const auto started = std::chrono::steady_clock::now();
    for (int attempt = 1;; ++attempt) {
        const HttpResult r = transport_(url, headers, body);
        if (r.status == 200) {
            json parsed;
            try {
                parsed = json::parse(r.body);
            } catch (const json::exception& e) {
                throw ProviderError(ProviderErrorKind::malformed_reply,
                                    std::string("endpoint returned invalid JSON: ") + e.what());
            }
            const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started);
            return {std::move(parsed), elapsed.count(), attempt};
        }
        if (r.status == 401 || r.status == 403)
            throw ProviderError(ProviderErrorKind::auth,
                                "authentication rejected (HTTP " + std::to_string(r.status) + ")");
        if (!retryable_status(r.status))
            throw ProviderError(ProviderErrorKind::malformed_reply,
                                "endpoint rejected request (HTTP " + std::to_string(r.status) +
                                    "): " + r.body.substr(0, 200));
        if (attempt >= profile_.max_attempts) {
            const auto kind = r.status == 429 ? ProviderErrorKind::rate_limit
                                              : ProviderErrorKind::transport;
            throw ProviderError(kind, "gave up after " + std::to_string(attempt) +
                                          " attempts (last status " + std::to_string(r.status) +
                                          (r.error.empty() ? "" : ", " + r.error) + ")");
        }
        const long delay = static_cast<long>(profile_.backoff_base_ms) << (attempt - 1);
        if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
}

ChatResponse HttpProvider::chat(const ChatRequest& req) {
    json user_content;
    if (req.images.empty()) {
        user_content = req.user_text;
    } else {
        user_content = json::array();
        user_content.push_back(json{{"type", "text"}, {"text", req.user_text}});
        for (const ImageAsset& img : req.images) {
            const std::string mime = img.media_type == MediaType::jpeg ? "image/jpeg" : "image/png";
            user_content.push_back(
                json{{"type", "image_url"},
                     {"image_url", json{{"url", "data:" + mime + ";base64," + img.base64()}}}});
        }
    }
    const json payload{{"model", profile_.chat_model},
                       {"temperature", req.temperature},
                       {"max_tokens", req.max_output_tokens},
                       {"messages", json::array({json{{"role", "system"}, {"content", req.role_prompt}},
                                                 json{{"role", "user"}, {"content", user_content}}})}};
    PostOutcome outcome = post_with_retry("/v1/chat/completions", payload);
    ChatResponse resp;
    try {
        resp.text = outcome.body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw ProviderError(ProviderErrorKind::malformed_reply,
                            "chat reply missing choices[0].message.content");
    }
    resp.provider_id = id();
    resp.latency_ms = outcome.latency_ms;
    resp.attempt_count = outcome.attempt_count;
    return resp;
}

std::string HttpProvider::caption(const ImageAsset& image) {
    if (!sniff_image_format(image.bytes))
        throw ProviderError(ProviderErrorKind::image_decode,
                            "caption: image bytes are not a decodable png/jpeg/gif");
    const json payload{{"model", profile_.captioner_model},
                       {"image", image.base64()},
                       {"media_type", to_string(image.media_type)}};
    PostOutcome outcome = post_with_retry("/v1/captions", payload);
    std::string text;
    try {
        text = outcome.body.at("caption").get<std::string>();
    } catch (const json::exception&) {
        throw ProviderError(ProviderErrorKind::malformed_reply, "caption reply missing 'caption'");
    }
    if (trim(text).empty()) {
        log_warn("captioner returned an empty caption; substituting sentinel");
        return kNoVisualSentinel;
    }
    return text;
}

std::vector<TokenEmbedding> HttpProvider::embed_tokens(const std::string& text) {
    if (text.empty())
        throw ProviderError(ProviderErrorKind::empty_text, "embed_tokens: empty text");
    const json payload{{"model", profile_.embed_model}, {"text", text}};
    PostOutcome outcome = post_with_retry("/v1/token-embeddings", payload);
    std::vector<TokenEmbedding> out;
    try {
        for (const json& item : outcome.body.at("tokens")) {
            TokenEmbedding e;
            e.token = item.at("token").get<std::string>();
            e.vector = item.at("embedding").get<std::vector<double>>();
            out.push_back(std::move(e));
        }
    } catch (const json::exception&) {
        throw ProviderError(ProviderErrorKind::malformed_reply,
                            "embedding reply missing tokens[].token/embedding");
    }
    if (!out.empty()) {
        const std::size_t dim = out.front().vector.size();
        for (const TokenEmbedding& e : out)
            if (e.vector.size() != dim || dim == 0)
                throw ProviderError(ProviderErrorKind::dimension_mismatch,
                                    "embedding dimensions are inconsistent");
    }
    return out;
}

}  // namespace cartoonqa
