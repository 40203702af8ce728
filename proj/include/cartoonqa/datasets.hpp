#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cartoonqa/core.hpp"

namespace cartoonqa {

struct PororoRecord {
    std::string gif_path;
    std::string question;
    std::vector<std::string> candidates;  // exactly 5
    int correct_index{0};
    std::string dialogue;  // subtitle text, no speaker tags
};

struct SimpsonsRecord {
    std::string image_path;
    std::string question;
    std::string answer;
    double relevance_score{0.0};
    double correctness_score{0.0};
    double overall_score{0.0};
};

struct FrameSelection {
    int total_frames{0};
    std::vector<int> selected_indices;
    int k{0};
};

// Evenly spaced frame indices: round(i*(N-1)/(k-1)) for i in 0..k-1 when
// k>=2 (half rounds away from zero), deduplicated ascending; k=1 picks
// frame 0. Endpoints are always included when k>=2 and N>=2.
std::vector<int> select_frame_indices(int total_frames, int k);

// Decodes a GIF, picks frames per select_frame_indices and re-encodes each
// as PNG. Throws on undecodable or zero-frame GIFs.
std::pair<FrameSelection, std::vector<ImageAsset>> extract_frames(
    const std::vector<std::uint8_t>& gif_bytes, int k);

struct LoadResult {
    std::vector<Sample> samples;
    std::vector<std::string> warnings;  // skipped records, one line each
};

// root must contain manifest.jsonl; asset paths are relative to root.
// Missing or undecodable assets skip the record with a warning; malformed
// manifest rows throw with the row number.
LoadResult load_pororo(const std::filesystem::path& root, int frames_per_gif = 4);
LoadResult load_simpsons(const std::filesystem::path& root);

// Dispatch used by the runner: a regular file is read as a sample cache
// (JSONL of serialized samples), a directory goes through the dataset
// adapter for `kind`.
LoadResult load_for_run(DatasetKind kind, const std::filesystem::path& path, int frames_per_gif);

// Uniform sample without replacement driven by the fixed counter-based
// generator; output keeps original corpus order.
std::vector<Sample> sample_subset(const std::vector<Sample>& samples, int n, std::uint64_t seed);

void write_sample_cache(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> read_sample_cache(const std::filesystem::path& path);

}  // namespace cartoonqa
