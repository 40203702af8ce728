#include "cartoonqa/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "cartoonqa/stemmer.hpp"

namespace cartoonqa {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

TokenizedPair TokenizedPair::from_texts(const std::string& candidate, const std::string& reference) {
    return TokenizedPair{tokenize(candidate), tokenize(reference)};
}

// ----------------------------------------------------------------- BLEU ----

namespace {

std::unordered_map<std::string, long> ngram_counts(const std::vector<std::string>& tokens, int n) {
    std::unordered_map<std::string, long> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int k = 1; k < n; ++k) {
            key.push_back('\x1f');
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace

std::pair<long, long> clipped_ngram_counts(const std::vector<std::string>& candidate,
                                           const std::vector<std::string>& reference, int n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    long total = 0;
    long matched = 0;
    for (const auto& [gram, count] : cand) {
        total += count;
        const auto it = ref.find(gram);
        if (it != ref.end()) matched += std::min(count, it->second);
    }
    return {matched, total};
}

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len) {
    if (candidate_len == 0) return 0.0;
    if (candidate_len >= reference_len) return 1.0;
    return std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
}

double bleu_n(const TokenizedPair& pair, int max_n) {
    if (max_n < 1 || max_n > 3)
        throw std::invalid_argument("bleu_n: max_n must be 1, 2 or 3");
    const auto& cand = pair.candidate_tokens;
    const auto& ref = pair.reference_tokens;
    if (cand.empty() || ref.empty()) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto [matched, total] = clipped_ngram_counts(cand, ref, n);
        if (matched == 0 || total == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
    }
    return brevity_penalty(cand.size(), ref.size()) * std::exp(log_sum / max_n);
}

// ---------------------------------------------------------------- ROUGE ----

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

namespace {

double f1_from(double precision, double recall) {
    const double denom = precision + recall;
    if (denom <= 0.0) return 0.0;
    return 2.0 * precision * recall / denom;
}

}  // namespace

double rouge(const TokenizedPair& pair, RougeVariant variant) {
    const auto& cand = pair.candidate_tokens;
    const auto& ref = pair.reference_tokens;
    if (cand.empty() || ref.empty()) return 0.0;

    double precision = 0.0;
    double recall = 0.0;
    if (variant == RougeVariant::rl) {
        const double lcs = static_cast<double>(lcs_length(cand, ref));
        precision = lcs / static_cast<double>(cand.size());
        recall = lcs / static_cast<double>(ref.size());
    } else {
        const int n = variant == RougeVariant::r1 ? 1 : 2;
        const auto cand_counts = ngram_counts(cand, n);
        const auto ref_counts = ngram_counts(ref, n);
        long cand_total = 0;
        long ref_total = 0;
        long overlap = 0;
        for (const auto& [gram, count] : cand_counts) cand_total += count;
        for (const auto& [gram, count] : ref_counts) ref_total += count;
        for (const auto& [gram, count] : cand_counts) {
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) overlap += std::min(count, it->second);
        }
        if (cand_total == 0 || ref_total == 0) return 0.0;  // no n-grams of this order
        precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
        recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
    }
    return f1_from(precision, recall);
}

// --------------------------------------------------------------- METEOR ----

SynonymTable SynonymTable::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open synonym table: " + path);
    SynonymTable table;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t ws = line.find_first_of(" \t");
        if (ws == std::string::npos)
            throw std::runtime_error("synonym table line needs two columns: " + line);
        const std::string a = trim(line.substr(0, ws));
        const std::string b = trim(line.substr(ws));
        if (a.empty() || b.empty())
            throw std::runtime_error("synonym table line needs two columns: " + line);
        table.add(a, b);
    }
    return table;
}

void SynonymTable::add(const std::string& a, const std::string& b) {
    pairs_.insert(a <= b ? std::make_pair(a, b) : std::make_pair(b, a));
}

bool SynonymTable::related(const std::string& a, const std::string& b) const {
    return pairs_.count(a <= b ? std::make_pair(a, b) : std::make_pair(b, a)) > 0;
}

double meteor(const TokenizedPair& pair, const SynonymTable& synonyms,
              const MeteorParams& params) {
    const auto& cand = pair.candidate_tokens;
    const auto& ref = pair.reference_tokens;
    if (cand.empty() || ref.empty()) return 0.0;

    std::vector<int> cand_match(cand.size(), -1);  // candidate index -> reference index
    std::vector<bool> ref_used(ref.size(), false);

    // stage 0 exact, stage 1 stem, stage 2 synonym; leftmost unmatched
    // reference token wins within a stage
    for (int stage = 0; stage < 3; ++stage) {
        if (stage == 2 && synonyms.size() == 0) break;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            if (cand_match[i] >= 0) continue;
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (ref_used[j]) continue;
                bool hit = false;
                switch (stage) {
                    case 0: hit = cand[i] == ref[j]; break;
                    case 1: hit = porter_stem(cand[i]) == porter_stem(ref[j]); break;
                    case 2: hit = synonyms.related(cand[i], ref[j]); break;
                }
                if (hit) {
                    cand_match[i] = static_cast<int>(j);
                    ref_used[j] = true;
                    break;
                }
            }
        }
    }

    long matches = 0;
    for (int m : cand_match)
        if (m >= 0) ++matches;
    if (matches == 0) return 0.0;

    const double precision = static_cast<double>(matches) / static_cast<double>(cand.size());
    const double recall = static_cast<double>(matches) / static_cast<double>(ref.size());
    const double fmean =
        precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);

    // chunks: maximal runs that are contiguous in both candidate and reference
    long chunks = 0;
    int prev_ref = -2;
    bool in_run = false;
    for (std::size_t i = 0; i < cand.size(); ++i) {
        if (cand_match[i] < 0) {
            in_run = false;
            prev_ref = -2;
            continue;
        }
        if (!in_run || cand_match[i] != prev_ref + 1) ++chunks;
        in_run = true;
        prev_ref = cand_match[i];
    }

    const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
    const double penalty = params.gamma * std::pow(frag, params.beta);
    return fmean * (1.0 - penalty);
}

// ------------------------------------------------------------ BERTScore ----

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ProviderError(ProviderErrorKind::dimension_mismatch,
                            "cosine: vectors of different dimension");
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

BertScoreResult bert_score_from_embeddings(const std::vector<TokenEmbedding>& candidate,
                                           const std::vector<TokenEmbedding>& reference) {
    if (candidate.empty() || reference.empty()) return {};

    double precision_sum = 0.0;
    for (const TokenEmbedding& c : candidate) {
        double best = -1.0;
        for (const TokenEmbedding& r : reference)
            best = std::max(best, cosine_similarity(c.vector, r.vector));
        precision_sum += best;
    }
    double recall_sum = 0.0;
    for (const TokenEmbedding& r : reference) {
        double best = -1.0;
        for (const TokenEmbedding& c : candidate)
            best = std::max(best, cosine_similarity(c.vector, r.vector));
        recall_sum += best;
    }

    BertScoreResult result;
    result.precision = std::clamp(precision_sum / candidate.size(), 0.0, 1.0);
    result.recall = std::clamp(recall_sum / reference.size(), 0.0, 1.0);
    result.f1 = f1_from(result.precision, result.recall);
    return result;
}

BertScoreResult bert_score(const std::string& candidate, const std::string& reference,
                           Provider& embedder) {
    if (candidate.empty() || reference.empty())
        throw std::invalid_argument("bert_score: texts must be non-empty");
    return bert_score_from_embeddings(embedder.embed_tokens(candidate),
                                      embedder.embed_tokens(reference));
}

// -------------------------------------------------------------- judging ----

namespace {

constexpr double kLevels[] = {0.0, 0.25, 0.5, 0.75, 1.0};

std::optional<double> first_number(const std::string& text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        const bool digit = std::isdigit(static_cast<unsigned char>(c));
        const bool sign = (c == '-' || c == '+') && i + 1 < text.size() &&
                          std::isdigit(static_cast<unsigned char>(text[i + 1]));
        if (!digit && !sign) continue;
        try {
            return std::stod(text.substr(i));
        } catch (const std::exception&) {
            continue;
        }
    }
    return std::nullopt;
}

}  // namespace

bool is_judge_level(double x) {
    for (double l : kLevels)
        if (x == l) return true;
    return false;
}

double snap_to_level(double x) {
    double best = kLevels[0];
    double best_dist = std::fabs(x - kLevels[0]);
    for (double l : kLevels) {
        const double d = std::fabs(x - l);
        if (d < best_dist) {  // strict: exact ties keep the lower level
            best_dist = d;
            best = l;
        }
    }
    return best;
}

ChatRequest build_judge_request(const Sample& sample, const std::string& predicted,
                                const std::string& judge_template, const JudgeOptions& options) {
    ChatRequest req;
    req.user_text = render_template(judge_template, {{"question", sample.question},
                                                     {"predicted", predicted},
                                                     {"reference", sample.ground_truth},
                                                     {"answer_type", to_string(sample.question_type)}});
    req.temperature = options.temperature;
    req.max_output_tokens = options.max_output_tokens;
    return req;
}

JudgeScore judge(const Sample& sample, const std::string& predicted, Provider& provider,
                 const std::string& judge_template, const JudgeOptions& options) {
    JudgeScore result;
    result.sample_id = sample.id;
    if (trim(predicted).empty()) {
        result.score = 0.0;
        result.snapped = false;
        return result;
    }

    const ChatRequest req = build_judge_request(sample, predicted, judge_template, options);
    const ChatResponse resp = provider.chat(req);
    result.raw_reply = resp.text;
    const std::optional<double> value = first_number(resp.text);
    if (!value) throw JudgeReplyUnparseable(resp.text);
    result.score = snap_to_level(*value);
    result.snapped = !(is_judge_level(*value) && *value == result.score);
    return result;
}

double average_accuracy(const std::vector<double>& scores) {
    if (scores.empty())
        throw std::invalid_argument("average_accuracy: empty score list");
    for (double s : scores)
        if (s < 0.0 || s > 1.0)
            throw std::invalid_argument("average_accuracy: score outside [0,1]");
    const double sum = std::accumulate(scores.begin(), scores.end(), 0.0);
    return sum / static_cast<double>(scores.size());
}

EvaluationSummary EvaluationSummary::build(
    const std::vector<double>& scores, const std::vector<std::map<std::string, double>>& per_sample) {
    EvaluationSummary summary;
    summary.n = static_cast<int>(scores.size());
    summary.scores = scores;
    summary.average = average_accuracy(scores);
    for (const std::string& name : lexical_metric_names()) {
        double sum = 0.0;
        for (const auto& m : per_sample) {
            const auto it = m.find(name);
            sum += it == m.end() ? 0.0 : it->second;
        }
        summary.per_metric[name] =
            per_sample.empty() ? 0.0 : sum / static_cast<double>(per_sample.size());
    }
    return summary;
}

void to_json(json& j, const EvaluationSummary& s) {
    j = json{{"n", s.n},
             {"scores", s.scores},
             {"average_accuracy", s.average},
             {"per_metric", s.per_metric}};
}

void from_json(const json& j, EvaluationSummary& s) {
    s.n = j.at("n").get<int>();
    s.scores = j.at("scores").get<std::vector<double>>();
    s.average = j.at("average_accuracy").get<double>();
    s.per_metric = j.at("per_metric").get<std::map<std::string, double>>();
}

// --------------------------------------------------------------- deltas ----

double relative_delta(double variant_acc, double full_acc) {
    if (full_acc <= 0.0)
        throw std::invalid_argument("relative_delta: full accuracy must be > 0");
    return 100.0 * (variant_acc - full_acc) / full_acc;
}

std::string format_delta(double percent) {
    const double rounded = std::round(percent * 100.0) / 100.0;  // half away from zero
    if (rounded == 0.0) return "0%";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.2f%%", rounded);
    return buf;
}

const std::vector<std::string>& lexical_metric_names() {
    static const std::vector<std::string> names = {"BLEU-1",  "BLEU-2",  "BLEU-3",
                                                   "ROUGE-1", "ROUGE-2", "ROUGE-L",
                                                   "METEOR",  "BERTScore"};
    return names;
}

std::map<std::string, double> lexical_scores(const std::string& candidate,
                                             const std::string& reference, Provider& embedder,
                                             const SynonymTable& synonyms) {
    std::map<std::string, double> out;
    const TokenizedPair pair = TokenizedPair::from_texts(candidate, reference);
    out["BLEU-1"] = bleu_n(pair, 1);
    out["BLEU-2"] = bleu_n(pair, 2);
    out["BLEU-3"] = bleu_n(pair, 3);
    out["ROUGE-1"] = rouge(pair, RougeVariant::r1);
    out["ROUGE-2"] = rouge(pair, RougeVariant::r2);
    out["ROUGE-L"] = rouge(pair, RougeVariant::rl);
    out["METEOR"] = meteor(pair, synonyms);
    if (pair.candidate_tokens.empty() || pair.reference_tokens.empty()) {
        out["BERTScore"] = 0.0;
    } else {
        out["BERTScore"] = bert_score(candidate, reference, embedder).f1;
    }
    return out;
}

}  // namespace cartoonqa
