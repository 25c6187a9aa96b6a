#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "regionlm/image.hpp"
#include "regionlm/tensor.hpp"

namespace regionlm {

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MalformedVerdictError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ItemKind { Mcq, Caption };
enum class CaptionProtocol { Simple, Detailed };

// One benchmark question. Subtask tags: color, shape, texture, material
// (perception); position, non_entity, relation (reasoning); cap_simple,
// cap_detailed (caption).
struct BenchItem {
    std::string id;
    std::string image_ref;
    std::vector<std::string> masks;  // RLE strings or PNG paths, in prompt order
    std::string question;
    ItemKind kind = ItemKind::Mcq;
    std::map<std::string, std::string> choices;  // label -> text (MCQ)
    std::string gold;                            // gold label (MCQ)
    CaptionProtocol protocol = CaptionProtocol::Simple;
    std::string rubric;
    std::string subtask;

    void validate() const;
};

BenchItem bench_item_from_json_line(const std::string& line);
std::vector<BenchItem> load_bench_items(const std::string& path);

// ---- MCQ scoring ----

struct McqScore {
    int score = 0;  // 0 or 1
    bool parse_failure = false;
    bool ambiguous = false;
    std::string parsed;  // normalized letter, empty on parse failure
};

// Extracts the first standalone choice letter (case-insensitive; "A.",
// "(a)", "Answer: A" all normalize). Unparseable answers score 0 with the
// parse-failure flag set; multiple distinct standalone letters set the
// ambiguity flag but the first one still decides.
McqScore score_mcq(const std::string& pred_text, const BenchItem& item);

// ---- caption judging ----

struct JudgeEvidence {
    std::string item_id;
    std::string question;
    std::string rubric;
    std::string candidate;
    Tensor full_image;               // [3 x H x W]
    std::vector<Tensor> crops;       // one bbox crop per prompt
    std::vector<MaskImage> masks;    // per prompt
};

struct JudgeVerdict {
    std::string item_id;
    double score = 0.0;  // in [0, 1]
    std::string rationale;
    std::string judge_model;
};

class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual JudgeVerdict judge(const JudgeEvidence& evidence) = 0;
    virtual std::string model_id() const = 0;
};

struct RetryPolicy {
    int attempts = 3;
    int backoff_ms = 100;  // doubles per retry
};

// Packages the full image, one crop and mask per prompt, the rubric, and the
// candidate, then calls the judge. Transient (transport) failures retry with
// exponential backoff; a malformed verdict propagates for the caller to
// record and skip.
JudgeVerdict judge_caption(const BenchItem& item, const std::string& candidate_text,
                           JudgeClient& judge, const Tensor& image,
                           const std::vector<MaskImage>& masks,
                           const RetryPolicy& retry = RetryPolicy{});

// ---- difficulty filtering ----

// item id -> per-model correctness. Every row must cover the same panel.
struct PanelMatrix {
    std::vector<std::string> models;
    std::map<std::string, std::vector<bool>> rows;

    void validate() const;
};

// Keeps every item except those answered correctly by all panel models.
std::vector<std::string> difficulty_filter(const PanelMatrix& matrix);

// ---- aggregation ----

struct ItemResult {
    std::string id;
    std::string subtask;
    ItemKind kind = ItemKind::Mcq;
    double score = 0.0;  // 0/1 for MCQ, [0,1] for judged captions
    bool parse_failure = false;
    bool ambiguous = false;
    bool judge_failed = false;  // excluded from the denominator, counted
};

struct BucketStats {
    int64_t count = 0;
    double score_sum = 0.0;
    double accuracy() const { return count == 0 ? 0.0 : score_sum / static_cast<double>(count); }
};

struct Report {
    std::map<std::string, BucketStats> subtasks;
    std::map<std::string, BucketStats> buckets;  // perception, reasoning, caption
    BucketStats overall;
    int64_t parse_failures = 0;
    int64_t ambiguous_answers = 0;
    int64_t judge_failures = 0;
};

// Perception: color/shape/texture/material. Reasoning: position/non_entity/
// relation. Caption: cap_simple/cap_detailed. Unknown subtasks throw.
Report aggregate(const std::vector<ItemResult>& results);

std::string report_to_json(const Report& report);
std::string report_to_table(const Report& report);

}  // namespace regionlm
