#include "doctest.h"

#include <fstream>
#include <set>

#include "cartoonqa/runner.hpp"
#include "support/fixtures.hpp"

using namespace cartoonqa;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

// record a 2-sample x 4-configuration ablation into dir, return the run
AblationRun record_run(const fs::path& dir, const ValidatedRunSpec& spec) {
    const RunEnvironment env = fixtures::make_test_env(
        std::make_shared<RecordReplayProvider>(ProviderMode::record,
                                               fixtures::make_pipeline_provider(),
                                               dir / "cassette.jsonl"),
        ProviderMode::record);
    return run_ablation(spec, env, dir);
}

RunEnvironment replay_env(const fs::path& cassette) {
    return fixtures::make_test_env(
        std::make_shared<RecordReplayProvider>(ProviderMode::replay_strict, nullptr, cassette),
        ProviderMode::replay_strict);
}

}  // namespace

TEST_CASE("ablation run produces the full cell matrix and summary rows") {
    fixtures::TempDir tmp("run");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);
    const fs::path dir = tmp.path() / "rec";
    const AblationRun run = record_run(dir, spec);

    CHECK(run.rows.size() == 4);
    CHECK(run.failures.empty());
    CHECK(line_count(dir / "traces.jsonl") == 8);   // 2 samples x 4 configurations
    CHECK(line_count(dir / "scores.jsonl") == 8);
    CHECK(fs::exists(dir / "summary.json"));
    CHECK(fs::exists(dir / "spec.json"));
    CHECK(fs::exists(dir / "cassette.jsonl"));
    CHECK(run.started_at_ms > 0);  // wall clock in record mode

    SUBCASE("preserve-only critic: row accuracy pattern") {
        double full = -1, lo = -1, vl = -1, lc = -1;
        for (const AblationRow& row : run.rows) {
            if (row.label == "Full") full = row.summary.average;
            if (row.label == "Language Only") lo = row.summary.average;
            if (row.label == "Visual + Language") vl = row.summary.average;
            if (row.label == "Language + Critic") lc = row.summary.average;
        }
        CHECK(full == vl);
        CHECK(lo == lc);
        CHECK(full == 1.0);  // scripted judge scores grounded answers 1.0
        CHECK(lo == 0.75);
    }

    SUBCASE("subset fairness: identical sample ids across rows") {
        std::map<std::string, std::set<std::string>> per_row;
        std::ifstream in(dir / "traces.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            const json j = json::parse(line);
            per_row[j.at("row").get<std::string>()].insert(
                j.at("trace").at("sample_id").get<std::string>());
        }
        REQUIRE(per_row.size() == 4);
        const auto& reference = per_row.begin()->second;
        for (const auto& [row, ids] : per_row) CHECK(ids == reference);
    }
}

TEST_CASE("replay runs are byte-identical and touch no inner provider") {
    fixtures::TempDir tmp("replay");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);
    const fs::path rec_dir = tmp.path() / "rec";
    record_run(rec_dir, spec);

    const AblationRun replay_a =
        run_ablation(spec, replay_env(rec_dir / "cassette.jsonl"), tmp.path() / "replay-a");
    const AblationRun replay_b =
        run_ablation(spec, replay_env(rec_dir / "cassette.jsonl"), tmp.path() / "replay-b");

    CHECK(replay_a.serialize() == replay_b.serialize());
    CHECK(read_file(tmp.path() / "replay-a" / "summary.json") ==
          read_file(tmp.path() / "replay-b" / "summary.json"));
    CHECK(read_file(tmp.path() / "replay-a" / "traces.jsonl") ==
          read_file(tmp.path() / "replay-b" / "traces.jsonl"));
    CHECK(read_file(tmp.path() / "replay-a" / "scores.jsonl") ==
          read_file(tmp.path() / "replay-b" / "scores.jsonl"));
    CHECK(replay_a.started_at_ms == 0);  // no wall clock under replay
    CHECK(replay_a.finished_at_ms == 0);
}

TEST_CASE("resume completes only the missing cells") {
    fixtures::TempDir tmp("resume");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);
    const fs::path dir = tmp.path() / "rec";
    const AblationRun original = record_run(dir, spec);

    // simulate an interrupt: keep the first 3 trace lines, drop all scores
    const std::string traces = read_file(dir / "traces.jsonl");
    std::vector<std::string> lines;
    std::istringstream ss(traces);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    REQUIRE(lines.size() == 8);
    {
        std::ofstream out(dir / "traces.jsonl", std::ios::trunc);
        for (int i = 0; i < 3; ++i) out << lines[i] << "\n";
        std::ofstream scores(dir / "scores.jsonl", std::ios::trunc);
    }

    const AblationRun resumed = resume(dir, replay_env(dir / "cassette.jsonl"));
    CHECK(resumed.rows.size() == 4);
    CHECK(line_count(dir / "traces.jsonl") == 8);
    // untouched prefix: the first three records remain byte-identical
    const std::string after = read_file(dir / "traces.jsonl");
    CHECK(after.substr(0, lines[0].size() + lines[1].size() + lines[2].size() + 3) ==
          lines[0] + "\n" + lines[1] + "\n" + lines[2] + "\n");
    // same evaluation outcome as the uninterrupted run
    for (std::size_t i = 0; i < original.rows.size(); ++i) {
        CHECK(resumed.rows[i].label == original.rows[i].label);
        CHECK(resumed.rows[i].summary.average == original.rows[i].summary.average);
    }

    SUBCASE("resume of a complete run is a no-op") {
        const std::string before = read_file(dir / "traces.jsonl");
        resume(dir, replay_env(dir / "cassette.jsonl"));
        CHECK(read_file(dir / "traces.jsonl") == before);
    }

    SUBCASE("resume with an altered spec is a mismatch") {
        RunSpec altered = spec.spec();
        altered.seed = 999;
        const ValidationResult revalidated = validate_run_spec(altered);
        REQUIRE(revalidated.ok());
        CHECK_THROWS_AS(resume(dir, replay_env(dir / "cassette.jsonl"), &*revalidated.spec),
                        SpecMismatchError);
    }
}

TEST_CASE("a torn trailing record is recomputed, not misread") {
    fixtures::TempDir tmp("torn");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);
    const fs::path dir = tmp.path() / "rec";
    const AblationRun original = record_run(dir, spec);

    // chop the final record mid-JSON, as a crash during append would
    std::string traces = read_file(dir / "traces.jsonl");
    traces.resize(traces.size() - 40);
    {
        std::ofstream out(dir / "traces.jsonl", std::ios::trunc | std::ios::binary);
        out << traces;
        std::ofstream scores(dir / "scores.jsonl", std::ios::trunc);
    }

    const AblationRun resumed = resume(dir, replay_env(dir / "cassette.jsonl"));
    for (std::size_t i = 0; i < original.rows.size(); ++i)
        CHECK(resumed.rows[i].summary.average == original.rows[i].summary.average);
}

TEST_CASE("fresh runs refuse a dirty directory") {
    fixtures::TempDir tmp("dirty");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);
    const fs::path dir = tmp.path() / "rec";
    record_run(dir, spec);
    const RunEnvironment env = replay_env(dir / "cassette.jsonl");
    CHECK_THROWS_AS(run_ablation(spec, env, dir), RunError);
}

TEST_CASE("stage failures are per-sample, the run continues") {
    fixtures::TempDir tmp("fail");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);

    // language stage returns empty text for one question only
    auto provider = std::make_shared<fixtures::ScriptedProvider>();
    provider->add_rule("\"revised\"", fixtures::preserve_verdict_json());
    provider->add_rule("Predicted answer:", "0.75");
    provider->add_rule("You are the visual agent", "a scene");
    provider->add_rule("Question: What is Homer eating?", "");
    provider->add_rule("Reply with the answer only", "an answer");
    // rules above also catch prompts with a visual block
    const RunEnvironment env = fixtures::make_test_env(provider, ProviderMode::live);

    const AblationRun run = run_ablation(spec, env, tmp.path() / "out");
    CHECK(run.failures.size() == 4);  // one sample fails in all four configurations
    for (const SampleFailure& f : run.failures) CHECK(f.stage == "language");
    CHECK(run.rows.size() == 4);
    for (const AblationRow& row : run.rows) CHECK(row.summary.n == 1);
}

TEST_CASE("a failing judge beyond one percent aborts the run") {
    fixtures::TempDir tmp("judgefail");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);

    auto provider = std::make_shared<fixtures::ScriptedProvider>();
    provider->add_rule("\"revised\"", fixtures::preserve_verdict_json());
    provider->add_rule("Predicted answer:", "no score in this reply");
    provider->add_rule("You are the visual agent", "a scene");
    provider->add_rule("Reply with the answer only", "an answer");
    const RunEnvironment env = fixtures::make_test_env(provider, ProviderMode::live);

    CHECK_THROWS_AS(run_ablation(spec, env, tmp.path() / "out"), RunError);
}

TEST_CASE("captioner comparison produces the four visual-source rows") {
    fixtures::TempDir tmp("captioner");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);

    // make the frozen caption equal the multimodal description so the
    // downstream language/critic requests are identical across sources
    class EqualCaption : public fixtures::ScriptedProvider {
      public:
        std::string caption(const ImageAsset&) override { return "the same visual text"; }
    };
    auto provider = std::make_shared<EqualCaption>();
    provider->add_rule("\"revised\"", fixtures::preserve_verdict_json());
    provider->add_rule("Predicted answer: seeing the scene", "1.0");
    provider->add_rule("You are the visual agent", "the same visual text");
    provider->add_rule("Scene description:", "seeing the scene");
    provider->add_rule("Reply with the answer only", "from memory");

    const RunEnvironment env = fixtures::make_test_env(
        std::make_shared<RecordReplayProvider>(ProviderMode::record, provider,
                                               tmp.path() / "out" / "cassette.jsonl"),
        ProviderMode::record);
    fs::create_directories(tmp.path() / "out");
    const AblationRun run = run_captioner_comparison(spec, env, tmp.path() / "out");

    // the frozen-captioner rows replay faithfully too
    CHECK_FALSE(replay_verify(tmp.path() / "out").has_value());

    REQUIRE(run.rows.size() == 4);
    CHECK(run.rows[0].label == "BLIP2 Visual + Language");
    CHECK(run.rows[1].label == "GPT-4o-mini Visual + Language");
    CHECK(run.rows[2].label == "BLIP2 Visual + Language + Critic");
    CHECK(run.rows[3].label == "GPT-4o-mini Visual + Language + Critic");

    // identical visual text means only the visual-stage exchanges differ
    std::map<std::string, std::map<std::string, json>> traces;  // row -> sample -> trace
    std::ifstream in(tmp.path() / "out" / "traces.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        const json j = json::parse(line);
        traces[j.at("row").get<std::string>()]
              [j.at("trace").at("sample_id").get<std::string>()] = j.at("trace");
    }
    for (const auto& [sample_id, frozen_trace] : traces.at("BLIP2 Visual + Language")) {
        const json& chat_trace = traces.at("GPT-4o-mini Visual + Language").at(sample_id);
        REQUIRE(frozen_trace.at("raw_exchanges").size() ==
                chat_trace.at("raw_exchanges").size());
        for (std::size_t i = 0; i < frozen_trace.at("raw_exchanges").size(); ++i) {
            const json& fe = frozen_trace.at("raw_exchanges").at(i);
            const json& ce = chat_trace.at("raw_exchanges").at(i);
            if (fe.at("stage").get<std::string>() == "visual") continue;
            CHECK(fe.at("request_digest") == ce.at("request_digest"));
        }
        CHECK(frozen_trace.at("final_answer") == chat_trace.at("final_answer"));
    }
}

TEST_CASE("replay-verify passes a faithful run and pinpoints tampering") {
    fixtures::TempDir tmp("verify");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);
    const fs::path dir = tmp.path() / "rec";
    record_run(dir, spec);

    CHECK_FALSE(replay_verify(dir).has_value());

    // tamper with the recorded language answer
    std::string cassette = read_file(dir / "cassette.jsonl");
    std::vector<std::string> lines;
    std::istringstream ss(cassette);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    std::string tampered_digest;
    {
        std::ofstream out(dir / "cassette.jsonl", std::ios::trunc);
        for (std::string& l : lines) {
            json j = json::parse(l);
            if (tampered_digest.empty() &&
                j.at("response_text").get<std::string>() == "from memory") {
                j["response_text"] = "tampered";
                tampered_digest = j.at("digest").get<std::string>();
            }
            out << j.dump() << "\n";
        }
    }
    REQUIRE_FALSE(tampered_digest.empty());
    const auto divergence = replay_verify(dir);
    REQUIRE(divergence.has_value());
    CHECK(*divergence == tampered_digest);
}

TEST_CASE("rescore rebuilds scores from existing traces") {
    fixtures::TempDir tmp("rescore");
    fixtures::write_simpsons_fixture_n(tmp.path() / "data", 2);
    const ValidatedRunSpec spec =
        fixtures::make_run_spec(tmp.path() / "data", 2, DatasetKind::simpsons);
    const fs::path dir = tmp.path() / "rec";
    record_run(dir, spec);
    const std::string traces_before = read_file(dir / "traces.jsonl");

    // a different judge: every prediction now scores 0.5
    auto provider = std::make_shared<fixtures::ScriptedProvider>();
    provider->add_rule("Predicted answer:", "0.5");
    const RunEnvironment env = fixtures::make_test_env(provider, ProviderMode::live);

    const AblationRun rescored = rescore(dir, env);
    CHECK(read_file(dir / "traces.jsonl") == traces_before);
    for (const AblationRow& row : rescored.rows) CHECK(row.summary.average == 0.5);
}
