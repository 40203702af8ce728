#include "support/fixtures.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>

#include "cartoonqa/png.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace fixtures {

TempDir::TempDir(const std::string& hint) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("cartoonqa-" + hint + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

namespace {

class BitWriter {
  public:
    void put(int code, int width) {
        buf_ |= static_cast<std::uint32_t>(code) << used_;
        used_ += width;
        while (used_ >= 8) {
            bytes_.push_back(buf_ & 0xFF);
            buf_ >>= 8;
            used_ -= 8;
        }
    }
    std::vector<std::uint8_t> finish() {
        if (used_ > 0) bytes_.push_back(buf_ & 0xFF);
        buf_ = 0;
        used_ = 0;
        return std::move(bytes_);
    }

  private:
    std::vector<std::uint8_t> bytes_;
    std::uint32_t buf_{0};
    int used_{0};
};

void push_u16le(std::vector<std::uint8_t>& out, int v) {
    out.push_back(v & 0xFF);
    out.push_back((v >> 8) & 0xFF);
}

// literal-only LZW stream mirroring the decoder's dictionary bookkeeping
std::vector<std::uint8_t> lzw_encode_literals(const std::vector<std::uint8_t>& pixels,
                                              int min_code_size) {
    const int clear = 1 << min_code_size;
    const int eoi = clear + 1;
    BitWriter bits;
    int code_size = min_code_size + 1;
    int next = eoi + 1;
    bool first = true;
    bits.put(clear, code_size);
    for (std::uint8_t p : pixels) {
        if (next >= 4094) {
            bits.put(clear, code_size);
            code_size = min_code_size + 1;
            next = eoi + 1;
            first = true;
        }
        bits.put(p, code_size);
        if (!first) {
            ++next;
            if (next == (1 << code_size) && code_size < 12) ++code_size;
        }
        first = false;
    }
    bits.put(eoi, code_size);
    return bits.finish();
}

}  // namespace

std::vector<std::uint8_t> encode_gif(int width, int height,
                                     const std::vector<std::vector<std::uint8_t>>& index_frames,
                                     const std::vector<std::array<std::uint8_t, 3>>& palette) {
    // palette padded to a power of two, at least 4 entries
    int table_bits = 2;
    while ((1 << table_bits) < static_cast<int>(palette.size())) ++table_bits;
    const int table_size = 1 << table_bits;

    std::vector<std::uint8_t> out;
    const char* header = "GIF89a";
    out.insert(out.end(), header, header + 6);
    push_u16le(out, width);
    push_u16le(out, height);
    out.push_back(0x80 | (table_bits - 1));  // global color table flag + size
    out.push_back(0);                        // background color index
    out.push_back(0);                        // aspect ratio

    for (int i = 0; i < table_size; ++i) {
        if (i < static_cast<int>(palette.size())) {
            out.push_back(palette[i][0]);
            out.push_back(palette[i][1]);
            out.push_back(palette[i][2]);
        } else {
            out.push_back(0);
            out.push_back(0);
            out.push_back(0);
        }
    }

    for (const auto& frame : index_frames) {
        // graphic control: disposal 1 (leave), no transparency
        out.push_back(0x21);
        out.push_back(0xF9);
        out.push_back(4);
        out.push_back(0x04);
        push_u16le(out, 10);  // delay
        out.push_back(0);
        out.push_back(0);

        out.push_back(0x2C);  // image descriptor, full canvas
        push_u16le(out, 0);
        push_u16le(out, 0);
        push_u16le(out, width);
        push_u16le(out, height);
        out.push_back(0);  // no local table, not interlaced

        const int min_code_size = table_bits;
        out.push_back(static_cast<std::uint8_t>(min_code_size));
        const std::vector<std::uint8_t> data = lzw_encode_literals(frame, min_code_size);
        std::size_t pos = 0;
        while (pos < data.size()) {
            const std::size_t chunk = std::min<std::size_t>(255, data.size() - pos);
            out.push_back(static_cast<std::uint8_t>(chunk));
            out.insert(out.end(), data.begin() + pos, data.begin() + pos + chunk);
            pos += chunk;
        }
        out.push_back(0);  // block terminator
    }
    out.push_back(0x3B);
    return out;
}

std::vector<std::array<std::uint8_t, 3>> stripe_palette() {
    return {{{20, 20, 20}}, {{230, 40, 40}}, {{40, 230, 40}}, {{40, 40, 230}}};
}

std::vector<std::vector<std::uint8_t>> stripe_frames(int width, int height, int count) {
    std::vector<std::vector<std::uint8_t>> frames;
    for (int f = 0; f < count; ++f) {
        std::vector<std::uint8_t> frame(static_cast<std::size_t>(width) * height, 0);
        const int stripe = f % width;
        for (int y = 0; y < height; ++y)
            frame[static_cast<std::size_t>(y) * width + stripe] =
                static_cast<std::uint8_t>(1 + f % 3);
        frames.push_back(std::move(frame));
    }
    return frames;
}

std::vector<std::uint8_t> stripe_frame_rgba(int width, int height, int frame_index) {
    // frames are full-canvas opaque redraws, so the expectation is simply
    // the frame's palette indices mapped to RGBA
    const auto palette = stripe_palette();
    const auto indices = stripe_frames(width, height, frame_index + 1)[frame_index];
    std::vector<std::uint8_t> rgba(indices.size() * 4);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& c = palette[indices[i]];
        rgba[i * 4 + 0] = c[0];
        rgba[i * 4 + 1] = c[1];
        rgba[i * 4 + 2] = c[2];
        rgba[i * 4 + 3] = 255;
    }
    return rgba;
}

std::vector<std::uint8_t> tiny_png(std::uint32_t seed) {
    std::vector<std::uint8_t> rgba(2 * 2 * 4);
    for (std::size_t i = 0; i < rgba.size(); ++i)
        rgba[i] = static_cast<std::uint8_t>((seed * 31 + i * 97) & 0xFF);
    for (std::size_t i = 3; i < rgba.size(); i += 4) rgba[i] = 255;
    return cartoonqa::encode_png_rgba(2, 2, rgba);
}

namespace {

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
}

}  // namespace

void write_pororo_fixture(const fs::path& root) {
    fs::create_directories(root);
    const auto palette = stripe_palette();
    write_file(root / "scene0.gif", encode_gif(10, 8, stripe_frames(10, 8, 8), palette));
    write_file(root / "scene1.gif", encode_gif(10, 8, stripe_frames(10, 8, 2), palette));
    write_file(root / "scene2.gif", encode_gif(10, 8, stripe_frames(10, 8, 2), palette));

    nlohmann::json rows = nlohmann::json::array();
    rows.push_back({{"gif", "scene0.gif"},
                    {"question", "What colour is the hat Pororo wears?"},
                    {"candidates", {"CANARY-green", "CANARY-yellow", "blue", "CANARY-purple",
                                    "CANARY-orange"}},
                    {"correct_index", 2},
                    {"dialogue", "Pororo: look at my new hat! Crong: crong crong!"}});
    rows.push_back({{"gif", "scene1.gif"},
                    {"question", "Who is holding the fish?"},
                    {"candidates", {"Poby", "CANARY-Eddy", "CANARY-Loopy", "CANARY-Harry",
                                    "CANARY-Petty"}},
                    {"correct_index", 0},
                    {"dialogue", "Poby: I caught a big one."}});
    rows.push_back({{"gif", "scene2.gif"},
                    {"question", "How many penguins appear in the scene?"},
                    {"candidates", {"CANARY-one", "CANARY-three", "CANARY-four", "two",
                                    "CANARY-five"}},
                    {"correct_index", 3},
                    {"dialogue", ""}});

    std::string manifest;
    for (const auto& row : rows) manifest += row.dump() + "\n";
    write_text(root / "manifest.jsonl", manifest);
}

void write_simpsons_fixture(const fs::path& root) {
    fs::create_directories(root);
    for (int i = 0; i < 4; ++i)
        write_file(root / ("img" + std::to_string(i) + ".png"), tiny_png(100 + i));

    nlohmann::json rows = nlohmann::json::array();
    rows.push_back({{"image", "img0.png"},
                    {"question", "What is Homer eating?"},
                    {"answer", "a donut"},
                    {"relevance", 1.0},
                    {"correctness", 1.0},
                    {"overall", 1.0}});
    rows.push_back({{"image", "img1.png"},
                    {"question", "What colour is the couch?"},
                    {"answer", "orange"},
                    {"relevance", 1.0},
                    {"correctness", 0.5},
                    {"overall", 0.5}});
    rows.push_back({{"image", "img2.png"},
                    {"question", "Who is driving the car?"},
                    {"answer", "Marge"},
                    {"relevance", 1.0},
                    {"correctness", 1.0},
                    {"overall", 1.0}});
    rows.push_back({{"image", "img3.png"},
                    {"question", "Is the sky green?"},
                    {"answer", "no"},
                    {"relevance", 0.0},
                    {"correctness", 0.0},
                    {"overall", 0.0}});

    std::string manifest;
    for (const auto& row : rows) manifest += row.dump() + "\n";
    write_text(root / "manifest.jsonl", manifest);
}

std::string preserve_verdict_json() {
    return R"({"final_answer": "", "revised": false, "strategy": "other", )"
           R"("visual_reliability": "partial", "confidence": 0.9, )"
           R"("explanation": "the proposal matches the evidence", "visual_rationale": "scene agrees"})";
}

std::shared_ptr<ScriptedProvider> make_pipeline_provider() {
    auto p = std::make_shared<ScriptedProvider>();
    // rule order matters: critic and judge prompts both embed question text
    p->add_rule("\"revised\"", preserve_verdict_json());
    p->add_rule("Predicted answer: seeing the scene", "1.0");
    p->add_rule("Predicted answer: from memory", "0.75");
    p->add_rule("You are the visual agent", "a cartoon scene with striped characters");
    p->add_rule("Scene description:", "seeing the scene");
    p->add_rule("Reply with the answer only", "from memory");
    return p;
}

void write_simpsons_fixture_n(const fs::path& root, int retained) {
    fs::create_directories(root);
    nlohmann::json rows = nlohmann::json::array();
    const std::vector<std::pair<std::string, std::string>> qa = {
        {"What is Homer eating?", "a donut"},     {"What colour is the couch?", "orange"},
        {"Who is driving the car?", "Marge"},     {"How many kids are on the sofa?", "three"},
        {"What is Bart holding?", "a slingshot"}, {"Where is Maggie?", "on the floor"},
    };
    for (int i = 0; i < retained; ++i) {
        const std::string img = "keep" + std::to_string(i) + ".png";
        write_file(root / img, tiny_png(500 + i));
        rows.push_back({{"image", img},
                        {"question", qa[i % qa.size()].first},
                        {"answer", qa[i % qa.size()].second},
                        {"relevance", 1.0},
                        {"correctness", 1.0},
                        {"overall", 1.0}});
    }
    for (int i = 0; i < 2; ++i) {
        const std::string img = "drop" + std::to_string(i) + ".png";
        write_file(root / img, tiny_png(900 + i));
        rows.push_back({{"image", img},
                        {"question", "Filtered question?"},
                        {"answer", "filtered"},
                        {"relevance", 1.0},
                        {"correctness", i == 0 ? 0.5 : 0.0},
                        {"overall", i == 0 ? 0.5 : 0.0}});
    }
    std::string manifest;
    for (const auto& row : rows) manifest += row.dump() + "\n";
    write_text(root / "manifest.jsonl", manifest);
}

cartoonqa::ValidatedRunSpec make_run_spec(const fs::path& dataset_dir, int sample_count,
                                          cartoonqa::DatasetKind kind) {
    cartoonqa::RunSpec spec;
    spec.dataset_path = dataset_dir.string();
    spec.dataset_kind = kind;
    spec.sample_count = sample_count;
    spec.seed = 7;
    spec.configurations = cartoonqa::standard_ablation_configurations();
    spec.provider_profile = "mock";
    spec.max_parallel = 2;
    spec.output_dir = (dataset_dir.parent_path() / "out").string();
    spec.prompt_dir = CARTOONQA_PROMPTS_DIR;
    const cartoonqa::ValidationResult result = cartoonqa::validate_run_spec(spec);
    if (!result.ok()) throw std::runtime_error("fixture spec did not validate");
    return *result.spec;
}

cartoonqa::RunEnvironment make_test_env(std::shared_ptr<cartoonqa::Provider> provider,
                                        cartoonqa::ProviderMode mode) {
    cartoonqa::RunEnvironment env;
    env.agent_provider = provider;
    env.judge_provider = provider;
    env.embed_provider = provider;
    env.prompts = cartoonqa::PromptSet::load(CARTOONQA_PROMPTS_DIR);
    env.mode = mode;
    return env;
}

}  // namespace fixtures
