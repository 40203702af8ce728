#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cartoonqa/provider.hpp"
#include "cartoonqa/runner.hpp"

namespace fixtures {

// Self-deleting scratch directory under the system temp root.
class TempDir {
  public:
    explicit TempDir(const std::string& hint);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

// Minimal GIF89a encoder used as the independent counterpart of the
// production decoder: literal-only LZW codes, global palette, full-frame
// images. index_frames hold one palette index per pixel.
std::vector<std::uint8_t> encode_gif(int width, int height,
                                     const std::vector<std::vector<std::uint8_t>>& index_frames,
                                     const std::vector<std::array<std::uint8_t, 3>>& palette);

// Frames with a moving vertical stripe so every frame differs.
std::vector<std::vector<std::uint8_t>> stripe_frames(int width, int height, int count);

// Expected RGBA canvas for a stripe frame (same palette as stripe_palette()).
std::vector<std::uint8_t> stripe_frame_rgba(int width, int height, int frame_index);
std::vector<std::array<std::uint8_t, 3>> stripe_palette();

// Tiny valid PNG via the production encoder; seed varies the pixels.
std::vector<std::uint8_t> tiny_png(std::uint32_t seed);

// Pororo root with manifest.jsonl and GIF assets: 3 valid records, the
// first backed by an 8-frame GIF, the rest by 2-frame GIFs. Candidate
// distractors carry the "CANARY-" prefix for leakage tests.
void write_pororo_fixture(const std::filesystem::path& root);

// Simpsons root with overall scores [1, 0.5, 1, 0]; all images valid PNGs.
void write_simpsons_fixture(const std::filesystem::path& root);

// Scripted provider: first substring rule matching the request's user_text
// wins; otherwise a digest-derived reply. Fully deterministic.
class ScriptedProvider : public cartoonqa::Provider {
  public:
    void add_rule(const std::string& substring, const std::string& reply) {
        rules_.emplace_back(substring, reply);
    }

    cartoonqa::ChatResponse chat(const cartoonqa::ChatRequest& req) override {
        ++chat_calls;
        cartoonqa::ChatResponse resp;
        resp.provider_id = id();
        for (const auto& [needle, reply] : rules_) {
            if (req.user_text.find(needle) != std::string::npos) {
                resp.text = reply;
                return resp;
            }
        }
        resp.text = "scripted " + cartoonqa::request_digest(req).substr(0, 8);
        return resp;
    }

    std::string caption(const cartoonqa::ImageAsset& image) override {
        ++caption_calls;
        return "scripted caption " +
               cartoonqa::sha256_hex(image.bytes.data(), image.bytes.size()).substr(0, 8);
    }

    std::vector<cartoonqa::TokenEmbedding> embed_tokens(const std::string& text) override {
        ++embed_calls;
        if (text.empty())
            throw cartoonqa::ProviderError(cartoonqa::ProviderErrorKind::empty_text, "empty");
        return cartoonqa::MockProvider::hash_seeded_embeddings(text, 8);
    }

    std::string id() const override { return "scripted"; }

    int total_calls() const { return chat_calls + caption_calls + embed_calls; }

    int chat_calls{0};
    int caption_calls{0};
    int embed_calls{0};

  private:
    std::vector<std::pair<std::string, std::string>> rules_;
};

// Preserve-everything critic verdict reply (parseable JSON).
std::string preserve_verdict_json();

// The standard scripted stack used by pipeline/runner tests: critic
// preserves, judge scores 1.0 for answers grounded in a scene description
// and 0.75 otherwise, visual agent emits a fixed description.
std::shared_ptr<ScriptedProvider> make_pipeline_provider();

// Simpsons root with `retained` records at overall==1 plus two filtered ones.
void write_simpsons_fixture_n(const std::filesystem::path& root, int retained);

// Standard validated spec over the repo prompts and the four ablation rows.
cartoonqa::ValidatedRunSpec make_run_spec(const std::filesystem::path& dataset_dir,
                                          int sample_count, cartoonqa::DatasetKind kind);

cartoonqa::RunEnvironment make_test_env(std::shared_ptr<cartoonqa::Provider> provider,
                                        cartoonqa::ProviderMode mode);

}  // namespace fixtures
