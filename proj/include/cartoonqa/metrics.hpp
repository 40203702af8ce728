#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "cartoonqa/core.hpp"
#include "cartoonqa/provider.hpp"

namespace cartoonqa {

// Deterministic metric tokenization: lowercase, punctuation mapped to
// spaces, whitespace split.
std::vector<std::string> tokenize(const std::string& text);

struct TokenizedPair {
    std::vector<std::string> candidate_tokens;
    std::vector<std::string> reference_tokens;

    static TokenizedPair from_texts(const std::string& candidate, const std::string& reference);
};

// Clipped n-gram precision counts for one order: (matched, total candidate n-grams).
std::pair<long, long> clipped_ngram_counts(const std::vector<std::string>& candidate,
                                           const std::vector<std::string>& reference, int n);

// Geometric mean of clipped n-gram precisions for n=1..max_n times the
// brevity penalty min(1, e^{1-r/c}). No smoothing: any zero precision
// yields 0. Empty candidate yields 0.
double bleu_n(const TokenizedPair& pair, int max_n);

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len);

enum class RougeVariant { r1, r2, rl };

// F1 over unigram/bigram overlap or LCS length.
double rouge(const TokenizedPair& pair, RougeVariant variant);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Flat two-column synonym lookup (symmetric). Default constructed table is
// empty, which disables the synonym stage.
class SynonymTable {
  public:
    SynonymTable() = default;
    static SynonymTable from_file(const std::string& path);

    void add(const std::string& a, const std::string& b);
    bool related(const std::string& a, const std::string& b) const;
    std::size_t size() const { return pairs_.size(); }

  private:
    std::set<std::pair<std::string, std::string>> pairs_;
};

struct MeteorParams {
    double alpha{0.9};
    double beta{3.0};
    double gamma{0.5};
};

// Staged leftmost alignment (exact, then stem, then synonym), harmonic
// Fmean and a chunk-based fragmentation penalty.
double meteor(const TokenizedPair& pair, const SynonymTable& synonyms = {},
              const MeteorParams& params = {});

struct BertScoreResult {
    double precision{0.0};
    double recall{0.0};
    double f1{0.0};
};

// Greedy matching over the token-embedding cosine matrix; no idf weighting,
// no baseline rescaling. Results are clamped to [0,1].
BertScoreResult bert_score_from_embeddings(const std::vector<TokenEmbedding>& candidate,
                                           const std::vector<TokenEmbedding>& reference);
BertScoreResult bert_score(const std::string& candidate, const std::string& reference,
                           Provider& embedder);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// ------------------------------------------------------------- judging ----

struct JudgeScore {
    std::string sample_id;
    std::string raw_reply;
    double score{0.0};  // one of {0.0, 0.25, 0.5, 0.75, 1.0}
    bool snapped{false};
};

bool is_judge_level(double x);
// Nearest of the five levels; exact midpoints resolve toward the lower level.
double snap_to_level(double x);

// Thrown when a judge reply carries no numeric score; callers treat the
// sample as unevaluated.
class JudgeReplyUnparseable : public std::runtime_error {
  public:
    explicit JudgeReplyUnparseable(const std::string& reply)
        : std::runtime_error("judge reply carries no numeric score: " + reply.substr(0, 120)) {}
};

struct JudgeOptions {
    double temperature{0.0};
    int max_output_tokens{16};
};

ChatRequest build_judge_request(const Sample& sample, const std::string& predicted,
                                const std::string& judge_template, const JudgeOptions& options);

// One chat call with the judge prompt; empty predictions score 0.0 without
// any provider call.
JudgeScore judge(const Sample& sample, const std::string& predicted, Provider& provider,
                 const std::string& judge_template, const JudgeOptions& options = {});

double average_accuracy(const std::vector<double>& scores);

struct EvaluationSummary {
    int n{0};
    std::vector<double> scores;
    double average{0.0};
    std::map<std::string, double> per_metric;

    static EvaluationSummary build(const std::vector<double>& scores,
                                   const std::vector<std::map<std::string, double>>& per_sample);
};

void to_json(json& j, const EvaluationSummary& s);
void from_json(const json& j, EvaluationSummary& s);

// Signed percent change of a variant against the Full row.
double relative_delta(double variant_acc, double full_acc);
// Display form: 2 decimals, half away from zero, "0%" for a zero delta.
std::string format_delta(double percent);

const std::vector<std::string>& lexical_metric_names();

// All lexical metrics for one candidate/reference pair. BERTScore uses the
// injected embedder; a candidate that tokenizes to nothing scores 0 across
// the board without touching the embedder.
std::map<std::string, double> lexical_scores(const std::string& candidate,
                                             const std::string& reference, Provider& embedder,
                                             const SynonymTable& synonyms = {});

}  // namespace cartoonqa
