#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "regionlm/eval.hpp"

namespace regionlm {

// Thrown when a client output fails structural validation; the record is
// quarantined with the reason, never silently dropped.
struct QuarantineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Monotone stage ladder. A record's stage names the last completed step.
enum class Stage { SeedCaption, Validated, RegionCaptions, Merged };

Stage stage_from_string(const std::string& s);
std::string stage_to_string(Stage stage);
int stage_rank(Stage stage);

struct RelationTriple {
    int64_t subject = 0;
    std::string predicate;
    int64_t object = 0;
};

struct SceneGraphAnnotation {
    int64_t region_count = 0;
    std::vector<RelationTriple> triples;

    void validate() const;  // triple indices must reference existing regions
};

struct PipelineRecord {
    std::string id;
    std::string image_ref;
    std::vector<std::string> region_masks;  // RLE strings, prompt order
    std::string category;                   // ground-truth label for validation
    std::optional<SceneGraphAnnotation> scene_graph;
    Stage stage = Stage::SeedCaption;
    nlohmann::json payload = nlohmann::json::object();
    bool quarantined = false;
    std::string quarantine_reason;
};

// ---- narrow client interfaces; everything model-shaped goes through these ----

class TextClient {
public:
    virtual ~TextClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

class CaptionClient {
public:
    virtual ~CaptionClient() = default;
    virtual std::string caption(const std::string& image_ref, const std::string& region_rle) = 0;
};

// ---- prompt templates (editable data files) ----

struct PromptTemplates {
    std::string validate;     // placeholders {caption}, {category}
    std::string merge_caption;  // {region_captions}, {relations}
    std::string merge_qa;
    std::string merge_mcq;
};

// Loads validate.txt, merge_caption.txt, merge_qa.txt, merge_mcq.txt.
PromptTemplates load_prompt_templates(const std::string& dir);
std::string render_template(const std::string& tpl,
                            const std::map<std::string, std::string>& values);

// ---- round operations ----

struct ValidationResult {
    bool keep = false;
    std::string rationale;
};

// Sends the validation prompt with caption and category; expects a JSON
// reply {"verdict": "keep"|"drop", "rationale": ...} (a bare keep/drop word
// also parses). Transport or malformed replies propagate for the caller to
// mark needs_retry.
ValidationResult round1_validate(const std::string& caption, const std::string& category,
                                 TextClient& judge, const std::string& prompt_template);

struct QaPair {
    std::string question;
    std::string answer;
};

struct MergedMcq {
    std::string question;
    std::map<std::string, std::string> choices;
    std::string gold;
};

struct MergedOutputs {
    std::vector<std::string> descriptions;
    std::vector<QaPair> qa_pairs;
    std::vector<MergedMcq> mcqs;
};

// Issues the merge prompts: descriptions always; QA and MCQ only when the
// scene graph has relations. Outputs are structurally validated (QA needs
// question+answer, MCQ needs >= 2 choices and a valid gold, placeholders
// must reference existing regions); violations throw QuarantineError.
MergedOutputs round2_merge(const std::vector<std::string>& region_captions,
                           const SceneGraphAnnotation& sg, TextClient& merger,
                           const PromptTemplates& templates);

// ---- orchestration ----

struct PipelineConfig {
    std::string journal_path;
    Stage target = Stage::Merged;
    int64_t batch_size = 4;
    int64_t max_in_flight = 8;
    PromptTemplates templates;
    TextClient* judge = nullptr;
    TextClient* merger = nullptr;
    CaptionClient* captioner = nullptr;
    bool compact_manifest = true;  // rewrite the manifest at the end of the run

    // Reference corpus-scale targets; reporting only, never control flow.
    int64_t round1_target_samples = 456000;
    int64_t round2_description_target = 144000;
    int64_t round2_qa_target = 144000;
    int64_t round2_mcq_target = 126000;
};

struct PipelineSummary {
    int64_t total = 0;
    int64_t advanced = 0;
    int64_t quarantined = 0;
    int64_t needs_retry = 0;
    int64_t untouched = 0;
    std::map<std::string, int64_t> stage_counts;        // final stage distribution
    std::map<std::string, int64_t> quarantine_reasons;  // reason -> count (this run)

    bool conserved() const {
        return advanced + quarantined + needs_retry + untouched == total;
    }
};

std::string summary_to_json(const PipelineSummary& summary);

std::vector<PipelineRecord> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<PipelineRecord>& records);

// Replays journal events over manifest records (advance / quarantine marks).
void apply_journal(std::vector<PipelineRecord>& records, const std::string& journal_path);

// Processes records below the target stage in batches; the journal is
// appended and flushed at every batch boundary, so a killed run resumes from
// the last completed batch. Re-running a completed manifest performs zero
// client calls.
PipelineSummary run_pipeline(const std::string& manifest_path, const PipelineConfig& config);

}  // namespace regionlm
