#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cartoonqa/core.hpp"

namespace cartoonqa {

// Caption/description stand-in when a provider returns empty text.
inline constexpr const char* kNoVisualSentinel = "no visual description available";

struct ChatRequest {
    std::string role_prompt;
    std::string user_text;
    std::vector<ImageAsset> images;
    double temperature{0.0};
    int max_output_tokens{512};
};

struct ChatResponse {
    std::string text;
    std::string provider_id;
    long latency_ms{0};
    int attempt_count{1};
};

struct TokenEmbedding {
    std::string token;
    std::vector<double> vector;
};

enum class ProviderErrorKind {
    auth,
    rate_limit,
    transport,
    malformed_reply,
    replay_miss,
    image_decode,
    empty_text,
    dimension_mismatch,
    cassette_io,
    cassette_corrupt,
};

class ProviderError : public std::runtime_error {
  public:
    ProviderError(ProviderErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ProviderErrorKind kind() const { return kind_; }

  private:
    ProviderErrorKind kind_;
};

std::string to_string(ProviderErrorKind k);

// Canonical serialization of a request: sorted-key compact JSON in which
// image payloads appear as their SHA-256 digests. Credentials and endpoint
// never participate, so digests survive endpoint relocation.
std::string canonical_request_bytes(const ChatRequest& req);
std::string request_digest(const ChatRequest& req);

std::string sha256_hex(const std::uint8_t* data, std::size_t size);
std::string sha256_hex(const std::string& data);

class Provider {
  public:
    virtual ~Provider() = default;
    virtual ChatResponse chat(const ChatRequest& req) = 0;
    virtual std::string caption(const ImageAsset& image) = 0;
    virtual std::vector<TokenEmbedding> embed_tokens(const std::string& text) = 0;
    virtual std::string id() const = 0;
};

// Deterministic offline provider. Chat replies are derived from the request
// digest; requests that ask for a structured verdict or a graded score (the
// critic/judge prompt shapes) get well-formed replies so full pipelines can
// run without a network. Embeddings are hash-seeded per token.
class MockProvider : public Provider {
  public:
    ChatResponse chat(const ChatRequest& req) override;
    std::string caption(const ImageAsset& image) override;
    std::vector<TokenEmbedding> embed_tokens(const std::string& text) override;
    std::string id() const override { return "mock"; }

    int call_count() const { return calls_; }
    static std::vector<TokenEmbedding> hash_seeded_embeddings(const std::string& text, int dim);

  private:
    int calls_{0};
};

struct CassetteEntry {
    std::string digest;
    std::string response_text;
    std::string provider_id;
    long latency_ms{0};
};

// In-memory view of a cassette file (append-only JSON lines). Two entries
// with the same digest but different payloads are treated as corruption.
class Cassette {
  public:
    static Cassette load(const std::filesystem::path& path);

    bool contains(const std::string& digest) const { return entries_.count(digest) > 0; }
    const CassetteEntry* find(const std::string& digest) const;
    // Returns false when the digest was already present (idempotent put);
    // throws on digest collision.
    bool put(CassetteEntry entry);
    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, CassetteEntry>& entries() const { return entries_; }

  private:
    std::map<std::string, CassetteEntry> entries_;
};

enum class ProviderMode { live, record, replay_strict };

std::string to_string(ProviderMode m);
ProviderMode provider_mode_from_string(const std::string& s);

// Wraps any provider with cassette recording/replay. Replay mode needs no
// inner provider and never performs a call outside the cassette. Caption and
// embedding calls are keyed through synthetic canonical requests so every
// wire surface replays.
class RecordReplayProvider : public Provider {
  public:
    RecordReplayProvider(ProviderMode mode, std::shared_ptr<Provider> inner,
                         std::filesystem::path cassette_path);

    ChatResponse chat(const ChatRequest& req) override;
    std::string caption(const ImageAsset& image) override;
    std::vector<TokenEmbedding> embed_tokens(const std::string& text) override;
    std::string id() const override;

    ProviderMode mode() const { return mode_; }
    const Cassette& cassette() const { return cassette_; }

  private:
    ChatResponse serve(const ChatRequest& key_request,
                       const std::function<ChatResponse()>& live_call);
    void append_entry(const CassetteEntry& entry);

    ProviderMode mode_;
    std::shared_ptr<Provider> inner_;
    std::filesystem::path path_;
    Cassette cassette_;
    std::mutex mutex_;
};

// Synthetic canonical requests used to key non-chat calls in cassettes.
ChatRequest caption_key_request(const ImageAsset& image);
ChatRequest embed_key_request(const std::string& text);

struct HttpResult {
    int status{0};  // 0 means the transport itself failed
    std::string body;
    std::string error;
};

using HttpTransport = std::function<HttpResult(
    const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
    const std::string& body)>;

// Chat-completion-style JSON over HTTP(S). The exact wire format is
// documented in the README. The transport is injectable for tests; the
// default one is backed by cpp-httplib.
class HttpProvider : public Provider {
  public:
    explicit HttpProvider(ProviderProfile profile, HttpTransport transport = {});

    ChatResponse chat(const ChatRequest& req) override;
    std::string caption(const ImageAsset& image) override;
    std::vector<TokenEmbedding> embed_tokens(const std::string& text) override;
    std::string id() const override { return "http:" + profile_.name; }

  private:
    struct PostOutcome {
        json body;
        long latency_ms{0};
        int attempt_count{1};
    };
    PostOutcome post_with_retry(const std::string& path, const json& payload);
    std::string resolved_base_url() const;
    std::string api_key() const;

    ProviderProfile profile_;
    HttpTransport transport_;
};

// Builds the provider stack for a validated spec: profile lookup, then
// record/replay wrapping when requested. cassette_path is ignored in live
// mode.
std::shared_ptr<Provider> make_provider(const ProviderProfile& profile);

}  // namespace cartoonqa
