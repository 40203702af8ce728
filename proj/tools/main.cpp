#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cartoonqa/datasets.hpp"
#include "cartoonqa/report.hpp"
#include "cartoonqa/runner.hpp"

namespace fs = std::filesystem;
using namespace cartoonqa;

namespace {

ValidatedRunSpec load_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read spec file: " + path);
    json j;
    in >> j;
    const RunSpec raw = j.get<RunSpec>();
    ValidationResult result = validate_run_spec(raw);
    if (!result.ok()) {
        std::string msg = "invalid run spec:";
        for (const std::string& e : result.errors) msg += "\n  - " + e;
        throw std::runtime_error(msg);
    }
    return *result.spec;
}

SynonymTable load_synonyms(const std::string& path) {
    if (path.empty()) return {};
    return SynonymTable::from_file(path);
}

void write_or_print(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write: " + out_path);
    out << text;
}

void print_run(const AblationRun& run) {
    std::cout << render_table(run, ReportFormat::markdown);
    if (!run.failures.empty())
        std::cout << "\n" << run.failures.size() << " sample failure(s); see traces.jsonl\n";
}

int command_ingest(const std::string& kind, const std::string& root, const std::string& out,
                   int frames) {
    const DatasetKind dataset_kind = dataset_kind_from_string(kind);
    const LoadResult result = load_for_run(dataset_kind, root, frames);
    for (const std::string& w : result.warnings) log_warn(w);
    write_sample_cache(out, result.samples);
    std::cout << "ingested " << result.samples.size() << " sample(s) ("
              << result.warnings.size() << " skipped) -> " << out << "\n";
    return 0;
}

int command_run(const std::string& spec_path, const std::string& mode_name,
                const std::string& out_dir, const std::string& cassette,
                const std::string& synonyms, bool do_resume, bool compare_captioners) {
    const ValidatedRunSpec spec = load_spec_file(spec_path);
    const ProviderMode mode = provider_mode_from_string(mode_name);
    const fs::path run_dir = out_dir.empty() ? fs::path(spec.spec().output_dir) : fs::path(out_dir);
    fs::create_directories(run_dir);
    const fs::path cassette_path =
        cassette.empty() ? run_dir / "cassette.jsonl" : fs::path(cassette);

    const RunEnvironment env =
        make_environment(spec, mode, cassette_path, load_synonyms(synonyms));
    AblationRun run = do_resume     ? resume(run_dir, env, &spec)
                      : compare_captioners ? run_captioner_comparison(spec, env, run_dir)
                                           : run_ablation(spec, env, run_dir);
    print_run(run);
    std::cout << "run artifacts in " << run_dir.string() << "\n";
    return 0;
}

int command_score(const std::string& run_dir, const std::string& mode_name,
                  const std::string& synonyms) {
    const fs::path dir(run_dir);
    std::ifstream in(dir / "spec.json");
    if (!in) throw std::runtime_error("cannot read " + (dir / "spec.json").string());
    json manifest;
    in >> manifest;
    const ValidatedRunSpec spec = ValidatedRunSpec::from_json(manifest.at("spec"));
    const ProviderMode mode = provider_mode_from_string(mode_name);
    const RunEnvironment env =
        make_environment(spec, mode, dir / "cassette.jsonl", load_synonyms(synonyms));
    print_run(rescore(dir, env));
    return 0;
}

int command_report(const std::vector<std::string>& run_dirs, const std::string& format_name,
                   const std::string& out_path) {
    const ReportFormat format = report_format_from_string(format_name);
    std::vector<SummaryTable> tables;
    for (const std::string& dir : run_dirs) {
        std::ifstream in(fs::path(dir) / "summary.json");
        if (!in) throw std::runtime_error("cannot read " + dir + "/summary.json");
        json j;
        in >> j;
        AblationRun run;
        run.kind = j.at("kind").get<std::string>();
        run.spec = j.at("spec").get<RunSpec>();
        for (const json& row : j.at("rows"))
            run.rows.push_back(AblationRow{row.at("label").get<std::string>(),
                                           row.at("summary").get<EvaluationSummary>()});
        tables.push_back(SummaryTable::from_run(run));
    }
    if (tables.empty()) throw std::runtime_error("no run directories given");

    std::string text;
    if (format == ReportFormat::markdown) {
        text = render_panels_markdown(tables);
    } else if (tables.size() == 1) {
        text = render_table(tables.front(), format);
    } else {
        for (const SummaryTable& t : tables) text += render_table(t, format);
    }
    write_or_print(out_path, text);
    return 0;
}

int command_replay_verify(const std::string& run_dir) {
    const std::optional<std::string> divergence = replay_verify(run_dir);
    if (!divergence) {
        std::cout << "replay OK: " << run_dir << " reproduces byte-identically\n";
        return 0;
    }
    std::cerr << "replay DIVERGED at: " << *divergence << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent cartoon VQA pipeline and evaluation harness"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate a dataset and cache it as sample JSONL");
    std::string ingest_kind, ingest_root, ingest_out;
    int ingest_frames = 4;
    ingest->add_option("--kind", ingest_kind, "pororo|simpsons")->required();
    ingest->add_option("--root", ingest_root, "dataset root directory")->required();
    ingest->add_option("--out", ingest_out, "output cache file")->required();
    ingest->add_option("--frames", ingest_frames, "frames per GIF (pororo)");

    // run / compare-captioners
    std::string run_spec, run_mode = "live", run_out, run_cassette, run_synonyms;
    bool run_resume = false;
    auto* run = app.add_subcommand("run", "Execute the ablation matrix");
    run->add_option("--spec", run_spec, "run spec JSON file")->required();
    run->add_option("--mode", run_mode, "live|record|replay");
    run->add_option("--out", run_out, "run directory (default: spec output_dir)");
    run->add_option("--cassette", run_cassette, "cassette path (default: <run dir>/cassette.jsonl)");
    run->add_option("--synonyms", run_synonyms, "two-column synonym table for METEOR");
    run->add_flag("--resume", run_resume, "complete a partial run directory");

    std::string cc_spec, cc_mode = "live", cc_out, cc_cassette, cc_synonyms;
    auto* cc = app.add_subcommand("compare-captioners",
                                  "Frozen captioner vs multimodal visual source");
    cc->add_option("--spec", cc_spec, "run spec JSON file")->required();
    cc->add_option("--mode", cc_mode, "live|record|replay");
    cc->add_option("--out", cc_out, "run directory (default: spec output_dir)");
    cc->add_option("--cassette", cc_cassette, "cassette path");
    cc->add_option("--synonyms", cc_synonyms, "two-column synonym table for METEOR");

    // score
    std::string score_dir, score_mode = "live", score_synonyms;
    auto* score = app.add_subcommand("score", "Judge-only re-run over existing traces");
    score->add_option("--run-dir", score_dir, "run directory")->required();
    score->add_option("--mode", score_mode, "live|record|replay");
    score->add_option("--synonyms", score_synonyms, "two-column synonym table for METEOR");

    // report
    std::vector<std::string> report_dirs;
    std::string report_format = "markdown", report_out;
    auto* report = app.add_subcommand("report", "Re-render summary tables");
    report->add_option("--run-dir", report_dirs, "run directory (repeatable)")->required();
    report->add_option("--format", report_format, "markdown|csv|json");
    report->add_option("--out", report_out, "output file (default: stdout)");

    // replay-verify
    std::string verify_dir;
    auto* verify = app.add_subcommand("replay-verify", "Audit a recorded run for determinism");
    verify->add_option("--run-dir", verify_dir, "run directory with cassette.jsonl")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (ingest->parsed())
            return command_ingest(ingest_kind, ingest_root, ingest_out, ingest_frames);
        if (run->parsed())
            return command_run(run_spec, run_mode, run_out, run_cassette, run_synonyms,
                               run_resume, false);
        if (cc->parsed())
            return command_run(cc_spec, cc_mode, cc_out, cc_cassette, cc_synonyms, false, true);
        if (score->parsed()) return command_score(score_dir, score_mode, score_synonyms);
        if (report->parsed()) return command_report(report_dirs, report_format, report_out);
        if (verify->parsed()) return command_replay_verify(verify_dir);
    } catch (const ProviderError& e) {
        std::cerr << "error [provider:" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return 1;
    } catch (const SpecMismatchError& e) {
        std::cerr << "error [spec-mismatch]: " << e.what() << "\n";
        return 1;
    } catch (const RunError& e) {
        std::cerr << "error [run]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
