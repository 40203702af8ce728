#include "cartoonqa/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "cartoonqa/gif.hpp"
#include "cartoonqa/png.hpp"

namespace fs = std::filesystem;

namespace cartoonqa {

std::vector<int> select_frame_indices(int total_frames, int k) {
    if (total_frames < 1) throw std::invalid_argument("select_frame_indices: no frames");
    if (k < 1) throw std::invalid_argument("select_frame_indices: k must be >=1");
    if (k == 1 || total_frames == 1) return {0};

    std::vector<int> indices;
    for (int i = 0; i < k; ++i) {
        const double pos = static_cast<double>(i) * (total_frames - 1) / (k - 1);
        const int idx = static_cast<int>(std::lround(pos));
        if (indices.empty() || indices.back() != idx) indices.push_back(idx);
    }
    return indices;
}

std::pair<FrameSelection, std::vector<ImageAsset>> extract_frames(
    const std::vector<std::uint8_t>& gif_bytes, int k) {
    const GifImage gif = decode_gif(gif_bytes);
    if (gif.frames.empty()) throw std::runtime_error("gif: zero frames");

    FrameSelection selection;
    selection.total_frames = static_cast<int>(gif.frames.size());
    selection.k = k;
    selection.selected_indices = select_frame_indices(selection.total_frames, k);

    std::vector<ImageAsset> assets;
    assets.reserve(selection.selected_indices.size());
    for (int idx : selection.selected_indices) {
        ImageAsset asset;
        asset.bytes = encode_png_rgba(gif.width, gif.height, gif.frames[idx].rgba);
        asset.media_type = MediaType::gif_frame;
        asset.source_frame_index = idx;
        assets.push_back(std::move(asset));
    }
    return {std::move(selection), std::move(assets)};
}

namespace {

std::vector<std::uint8_t> read_binary_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

// JSONL iteration with 1-based row numbers; parse errors carry the row.
template <typename Fn>
void for_each_manifest_row(const fs::path& manifest, Fn&& fn) {
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest.string());
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("manifest row " + std::to_string(row) + ": invalid JSON (" +
                                     e.what() + ")");
        }
        fn(row, j);
    }
}

[[noreturn]] void malformed(const std::string& dataset, int row, const std::string& what) {
    throw std::runtime_error(dataset + " manifest row " + std::to_string(row) + ": " + what);
}

std::string default_id(const std::string& prefix, int row) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%05d", prefix.c_str(), row);
    return buf;
}

QuestionType optional_question_type(const json& j, const std::string& dataset, int row) {
    if (!j.contains("question_type")) return QuestionType::other;
    try {
        return question_type_from_string(j.at("question_type").get<std::string>());
    } catch (const std::exception& e) {
        malformed(dataset, row, e.what());
    }
}

void check_unique_id(std::set<std::string>& seen, const std::string& id, const std::string& dataset,
                     int row) {
    if (!seen.insert(id).second)
        malformed(dataset, row, "duplicate sample id '" + id + "'");
}

}  // namespace

LoadResult load_pororo(const fs::path& root, int frames_per_gif) {
    LoadResult result;
    std::set<std::string> seen_ids;

    for_each_manifest_row(root / "manifest.jsonl", [&](int row, const json& j) {
        PororoRecord record;
        try {
            record.gif_path = j.at("gif").get<std::string>();
            record.question = j.at("question").get<std::string>();
            record.candidates = j.at("candidates").get<std::vector<std::string>>();
            record.correct_index = j.at("correct_index").get<int>();
            record.dialogue = j.value("dialogue", std::string{});
        } catch (const json::exception& e) {
            malformed("pororo", row, e.what());
        }
        if (record.candidates.size() != 5)
            malformed("pororo", row, "expected exactly 5 candidates, got " +
                                         std::to_string(record.candidates.size()));
        if (record.correct_index < 0 || record.correct_index > 4)
            malformed("pororo", row, "correct_index out of [0,4]");

        const fs::path gif_file = root / record.gif_path;
        if (!fs::exists(gif_file)) {
            result.warnings.push_back("pororo row " + std::to_string(row) + ": missing GIF " +
                                      record.gif_path + " (skipped)");
            return;
        }

        Sample sample;
        sample.id = j.contains("id") ? j.at("id").get<std::string>() : default_id("pororo", row);
        sample.question = record.question;
        sample.question_type = optional_question_type(j, "pororo", row);
        // candidates are discarded: only the marked correct answer survives
        sample.ground_truth = record.candidates[record.correct_index];
        if (!trim(record.dialogue).empty()) sample.context = record.dialogue;
        sample.dataset = DatasetKind::pororo;
        try {
            sample.images = extract_frames(read_binary_file(gif_file), frames_per_gif).second;
        } catch (const std::exception& e) {
            result.warnings.push_back("pororo row " + std::to_string(row) + ": " + e.what() +
                                      " (skipped)");
            return;
        }

        check_unique_id(seen_ids, sample.id, "pororo", row);
        sample.validate();
        result.samples.push_back(std::move(sample));
    });
    return result;
}

LoadResult load_simpsons(const fs::path& root) {
    LoadResult result;
    std::set<std::string> seen_ids;

    for_each_manifest_row(root / "manifest.jsonl", [&](int row, const json& j) {
        SimpsonsRecord record;
        try {
            record.image_path = j.at("image").get<std::string>();
            record.question = j.at("question").get<std::string>();
            record.answer = j.at("answer").get<std::string>();
            record.relevance_score = j.value("relevance", 0.0);
            record.correctness_score = j.value("correctness", 0.0);
            record.overall_score = j.at("overall").get<double>();
        } catch (const json::exception& e) {
            malformed("simpsons", row, e.what());
        }
        if (record.relevance_score != 0.0 && record.relevance_score != 1.0)
            malformed("simpsons", row, "relevance must be 0 or 1");
        if (record.correctness_score != 0.0 && record.correctness_score != 0.5 &&
            record.correctness_score != 1.0)
            malformed("simpsons", row, "correctness must be 0, 0.5 or 1");
        if (record.overall_score < 0.0 || record.overall_score > 1.0)
            malformed("simpsons", row, "overall score outside [0,1]");

        // only high-quality pairs (overall score exactly 1) are retained
        if (record.overall_score != 1.0) return;

        const fs::path image_file = root / record.image_path;
        if (!fs::exists(image_file)) {
            result.warnings.push_back("simpsons row " + std::to_string(row) + ": missing image " +
                                      record.image_path + " (skipped)");
            return;
        }

        Sample sample;
        sample.id = j.contains("id") ? j.at("id").get<std::string>() : default_id("simpsons", row);
        sample.question = record.question;
        sample.question_type = optional_question_type(j, "simpsons", row);
        sample.ground_truth = record.answer;  // verbatim, no normalization at ingest
        sample.dataset = DatasetKind::simpsons;

        ImageAsset asset;
        asset.bytes = read_binary_file(image_file);
        const auto format = sniff_image_format(asset.bytes);
        if (!format) {
            result.warnings.push_back("simpsons row " + std::to_string(row) +
                                      ": unrecognised image format (skipped)");
            return;
        }
        asset.media_type = *format == "jpeg" ? MediaType::jpeg : MediaType::png;
        sample.images.push_back(std::move(asset));

        check_unique_id(seen_ids, sample.id, "simpsons", row);
        sample.validate();
        result.samples.push_back(std::move(sample));
    });
    return result;
}

LoadResult load_for_run(DatasetKind kind, const fs::path& path, int frames_per_gif) {
    if (fs::is_regular_file(path)) {
        LoadResult result;
        result.samples = read_sample_cache(path);
        return result;
    }
    switch (kind) {
        case DatasetKind::pororo: return load_pororo(path, frames_per_gif);
        case DatasetKind::simpsons: return load_simpsons(path);
        case DatasetKind::custom:
            throw std::runtime_error("custom datasets need a sample cache file, got directory: " +
                                     path.string());
    }
    throw std::logic_error("bad DatasetKind");
}

std::vector<Sample> sample_subset(const std::vector<Sample>& samples, int n, std::uint64_t seed) {
    if (n < 1 || static_cast<std::size_t>(n) > samples.size())
        throw std::invalid_argument("sample_subset: n out of range [1," +
                                    std::to_string(samples.size()) + "]");
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) keyed.emplace_back(sample_key(seed, i), i);
    std::sort(keyed.begin(), keyed.end());

    std::vector<std::size_t> picked;
    picked.reserve(n);
    for (int i = 0; i < n; ++i) picked.push_back(keyed[i].second);
    std::sort(picked.begin(), picked.end());  // original corpus order

    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t idx : picked) out.push_back(samples[idx]);
    return out;
}

void write_sample_cache(const fs::path& path, const std::vector<Sample>& samples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write sample cache: " + path.string());
    for (const Sample& s : samples) {
        const json j = s;
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("short write to sample cache: " + path.string());
}

std::vector<Sample> read_sample_cache(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read sample cache: " + path.string());
    std::vector<Sample> samples;
    std::set<std::string> seen_ids;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        Sample s;
        try {
            s = json::parse(line).get<Sample>();
        } catch (const std::exception& e) {
            throw std::runtime_error("sample cache row " + std::to_string(row) + ": " + e.what());
        }
        if (!seen_ids.insert(s.id).second)
            throw std::runtime_error("sample cache row " + std::to_string(row) +
                                     ": duplicate sample id '" + s.id + "'");
        s.validate();
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace cartoonqa
