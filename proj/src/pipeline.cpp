#include "regionlm/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace regionlm {

Stage stage_from_string(const std::string& s) {
    if (s == "seed_caption") return Stage::SeedCaption;
    if (s == "validated") return Stage::Validated;
    if (s == "region_captions") return Stage::RegionCaptions;
    if (s == "merged") return Stage::Merged;
    throw std::invalid_argument("unknown stage: " + s);
}

std::string stage_to_string(Stage stage) {
    switch (stage) {
        case Stage::SeedCaption: return "seed_caption";
        case Stage::Validated: return "validated";
        case Stage::RegionCaptions: return "region_captions";
        case Stage::Merged: return "merged";
    }
    throw std::logic_error("unreachable");
}

int stage_rank(Stage stage) { return static_cast<int>(stage); }

void SceneGraphAnnotation::validate() const {
    for (const auto& t : triples) {
        if (t.subject < 0 || t.subject >= region_count || t.object < 0 ||
            t.object >= region_count) {
            throw std::invalid_argument("scene graph: triple references region outside 0.." +
                                        std::to_string(region_count - 1));
        }
    }
}

PromptTemplates load_prompt_templates(const std::string& dir) {
    const auto read = [&dir](const std::string& name) {
        const std::string path = (std::filesystem::path(dir) / name).string();
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open prompt template: " + path);
        std::ostringstream os;
        os << is.rdbuf();
        return os.str();
    };
    PromptTemplates t;
    t.validate = read("validate.txt");
    t.merge_caption = read("merge_caption.txt");
    t.merge_qa = read("merge_qa.txt");
    t.merge_mcq = read("merge_mcq.txt");
    return t;
}

std::string render_template(const std::string& tpl,
                            const std::map<std::string, std::string>& values) {
    std::string out = tpl;
    for (const auto& [key, value] : values) {
        const std::string needle = "{" + key + "}";
        size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Largest K of any <PromptK> / </PromptK> placeholder in the text, or -1.
int64_t max_placeholder_index(const std::string& text) {
    int64_t max_k = -1;
    size_t pos = 0;
    while ((pos = text.find("<Prompt", pos)) != std::string::npos) {
        size_t p = pos + 7;
        int64_t k = 0;
        size_t digits = 0;
        while (p < text.size() && text[p] >= '0' && text[p] <= '9') {
            k = k * 10 + (text[p] - '0');
            ++p;
            ++digits;
        }
        if (digits > 0 && p < text.size() && text[p] == '>') max_k = std::max(max_k, k);
        pos += 7;
    }
    size_t cpos = 0;
    while ((cpos = text.find("</Prompt", cpos)) != std::string::npos) {
        size_t p = cpos + 8;
        int64_t k = 0;
        size_t digits = 0;
        while (p < text.size() && text[p] >= '0' && text[p] <= '9') {
            k = k * 10 + (text[p] - '0');
            ++p;
            ++digits;
        }
        if (digits > 0 && p < text.size() && text[p] == '>') max_k = std::max(max_k, k);
        cpos += 8;
    }
    return max_k;
}

void check_placeholders(const std::string& text, int64_t region_count, const char* what) {
    const int64_t k = max_placeholder_index(text);
    if (k >= region_count) {
        throw QuarantineError(std::string(what) + " references <Prompt" + std::to_string(k) +
                              "> with only " + std::to_string(region_count) + " regions");
    }
}

}  // namespace

ValidationResult round1_validate(const std::string& caption, const std::string& category,
                                 TextClient& judge, const std::string& prompt_template) {
    if (trim(caption).empty()) throw std::invalid_argument("round1_validate: empty caption");
    if (trim(category).empty()) throw std::invalid_argument("round1_validate: empty category");

    const std::string prompt =
        render_template(prompt_template, {{"caption", caption}, {"category", category}});
    const std::string reply = judge.complete(prompt);

    ValidationResult result;
    try {
        const nlohmann::json j = nlohmann::json::parse(reply);
        if (j.is_object() && j.contains("verdict") && j["verdict"].is_string()) {
            const std::string verdict = lower(j["verdict"].get<std::string>());
            if (verdict != "keep" && verdict != "drop") {
                throw MalformedVerdictError("validation verdict must be keep|drop, got " + verdict);
            }
            result.keep = verdict == "keep";
            result.rationale = j.value("rationale", "");
            return result;
        }
    } catch (const nlohmann::json::exception&) {
        // fall through to the bare-word form
    }
    const std::string word = lower(trim(reply));
    if (word == "keep" || word == "drop") {
        result.keep = word == "keep";
        return result;
    }
    throw MalformedVerdictError("unparseable validation reply: " + reply.substr(0, 120));
}

MergedOutputs round2_merge(const std::vector<std::string>& region_captions,
                           const SceneGraphAnnotation& sg, TextClient& merger,
                           const PromptTemplates& templates) {
    if (static_cast<int64_t>(region_captions.size()) != sg.region_count) {
        throw std::invalid_argument("round2_merge: " + std::to_string(region_captions.size()) +
                                    " captions for " + std::to_string(sg.region_count) +
                                    " regions");
    }
    sg.validate();

    std::ostringstream caps;
    for (size_t i = 0; i < region_captions.size(); ++i) {
        caps << "<Prompt" << i << ">: " << region_captions[i] << "\n";
    }
    std::ostringstream rels;
    for (const auto& t : sg.triples) {
        rels << "<Prompt" << t.subject << "> " << t.predicate << " <Prompt" << t.object << ">\n";
    }
    const std::map<std::string, std::string> values = {{"region_captions", caps.str()},
                                                       {"relations", rels.str()}};

    const auto parse_reply = [](const std::string& reply, const char* what) {
        try {
            return nlohmann::json::parse(reply);
        } catch (const nlohmann::json::exception&) {
            throw QuarantineError(std::string(what) + " reply is not JSON: " + reply.substr(0, 120));
        }
    };

    MergedOutputs out;

    const nlohmann::json jd =
        parse_reply(merger.complete(render_template(templates.merge_caption, values)),
                    "description");
    if (!jd.is_object() || !jd.contains("descriptions") || !jd["descriptions"].is_array() ||
        jd["descriptions"].empty()) {
        throw QuarantineError("description reply missing non-empty 'descriptions' array");
    }
    for (const auto& d : jd["descriptions"]) {
        if (!d.is_string() || trim(d.get<std::string>()).empty()) {
            throw QuarantineError("description entry empty or not a string");
        }
        check_placeholders(d.get<std::string>(), sg.region_count, "description");
        out.descriptions.push_back(d.get<std::string>());
    }

    // nothing relational to probe without triples
    if (sg.triples.empty()) return out;

    const nlohmann::json jq =
        parse_reply(merger.complete(render_template(templates.merge_qa, values)), "qa");
    if (!jq.is_object() || !jq.contains("qa_pairs") || !jq["qa_pairs"].is_array()) {
        throw QuarantineError("qa reply missing 'qa_pairs' array");
    }
    for (const auto& p : jq["qa_pairs"]) {
        QaPair qa;
        qa.question = p.is_object() ? p.value("question", "") : "";
        qa.answer = p.is_object() ? p.value("answer", "") : "";
        if (trim(qa.question).empty() || trim(qa.answer).empty()) {
            throw QuarantineError("qa pair missing question or answer");
        }
        check_placeholders(qa.question + " " + qa.answer, sg.region_count, "qa pair");
        out.qa_pairs.push_back(std::move(qa));
    }

    const nlohmann::json jm =
        parse_reply(merger.complete(render_template(templates.merge_mcq, values)), "mcq");
    if (!jm.is_object() || !jm.contains("mcqs") || !jm["mcqs"].is_array()) {
        throw QuarantineError("mcq reply missing 'mcqs' array");
    }
    for (const auto& m : jm["mcqs"]) {
        MergedMcq mcq;
        mcq.question = m.is_object() ? m.value("question", "") : "";
        if (trim(mcq.question).empty()) throw QuarantineError("mcq missing question");
        if (!m.contains("choices") || !m["choices"].is_object() || m["choices"].size() < 2) {
            throw QuarantineError("mcq needs >= 2 choices");
        }
        for (const auto& [label, text] : m["choices"].items()) {
            if (!text.is_string()) throw QuarantineError("mcq choice text must be a string");
            mcq.choices[label] = text.get<std::string>();
            check_placeholders(text.get<std::string>(), sg.region_count, "mcq choice");
        }
        mcq.gold = m.value("gold", "");
        if (mcq.choices.find(mcq.gold) == mcq.choices.end()) {
            throw QuarantineError("mcq gold '" + mcq.gold + "' not among choice labels");
        }
        check_placeholders(mcq.question, sg.region_count, "mcq question");
        out.mcqs.push_back(std::move(mcq));
    }
    return out;
}

// ---- persistence ----

namespace {

PipelineRecord record_from_json(const nlohmann::json& j) {
    PipelineRecord r;
    r.id = j.at("id").get<std::string>();
    r.image_ref = j.value("image", "");
    if (j.contains("regions")) {
        for (const auto& m : j["regions"]) r.region_masks.push_back(m.get<std::string>());
    }
    r.category = j.value("category", "");
    if (j.contains("relations")) {
        SceneGraphAnnotation sg;
        sg.region_count = static_cast<int64_t>(r.region_masks.size());
        for (const auto& t : j["relations"]) {
            sg.triples.push_back(RelationTriple{t.at(0).get<int64_t>(),
                                                t.at(1).get<std::string>(),
                                                t.at(2).get<int64_t>()});
        }
        sg.validate();
        r.scene_graph = std::move(sg);
    }
    r.stage = stage_from_string(j.value("stage", "seed_caption"));
    if (j.contains("payload")) r.payload = j["payload"];
    r.quarantined = j.value("quarantined", false);
    r.quarantine_reason = j.value("quarantine_reason", "");
    return r;
}

nlohmann::json record_to_json(const PipelineRecord& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["image"] = r.image_ref;
    j["regions"] = r.region_masks;
    if (!r.category.empty()) j["category"] = r.category;
    if (r.scene_graph) {
        nlohmann::json rels = nlohmann::json::array();
        for (const auto& t : r.scene_graph->triples) {
            rels.push_back({t.subject, t.predicate, t.object});
        }
        j["relations"] = rels;
    }
    j["stage"] = stage_to_string(r.stage);
    j["payload"] = r.payload;
    if (r.quarantined) {
        j["quarantined"] = true;
        j["quarantine_reason"] = r.quarantine_reason;
    }
    return j;
}

}  // namespace

std::vector<PipelineRecord> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);
    std::vector<PipelineRecord> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error("manifest " + path + " line " + std::to_string(lineno) +
                                     ": " + e.what());
        }
    }
    return records;
}

void save_manifest(const std::string& path, const std::vector<PipelineRecord>& records) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("cannot write manifest: " + tmp);
        for (const auto& r : records) os << record_to_json(r).dump() << "\n";
        if (!os) throw std::runtime_error("manifest write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void apply_journal(std::vector<PipelineRecord>& records, const std::string& journal_path) {
    std::ifstream is(journal_path);
    if (!is) return;  // no journal yet
    std::map<std::string, PipelineRecord*> by_id;
    for (auto& r : records) by_id[r.id] = &r;

    std::string line;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        const auto it = by_id.find(j.at("id").get<std::string>());
        if (it == by_id.end()) continue;  // journal of a pruned record
        PipelineRecord& r = *it->second;
        const std::string event = j.at("event").get<std::string>();
        if (event == "advance") {
            const Stage stage = stage_from_string(j.at("stage").get<std::string>());
            if (stage_rank(stage) > stage_rank(r.stage)) r.stage = stage;
            if (j.contains("payload")) {
                for (const auto& [k, v] : j["payload"].items()) r.payload[k] = v;
            }
        } else if (event == "quarantine") {
            r.quarantined = true;
            r.quarantine_reason = j.value("reason", "");
        }
        // needs_retry events carry no state change
    }
}

// ---- orchestration ----

namespace {

struct JournalEvent {
    nlohmann::json body;
};

enum class Disposition { Untouched, Advanced, NeedsRetry, Quarantined };

struct WorkResult {
    Disposition disposition = Disposition::Untouched;
    std::vector<JournalEvent> events;
    std::string reason;
};

// Advances one record as far as it can go toward the target; every completed
// stage becomes an advance event even when a later stage fails.
WorkResult process_record(PipelineRecord& r, const PipelineConfig& cfg) {
    WorkResult result;
    try {
        while (stage_rank(r.stage) < stage_rank(cfg.target)) {
            if (r.stage == Stage::SeedCaption) {
                std::string caption = r.payload.value("caption", "");
                nlohmann::json payload = nlohmann::json::object();
                if (caption.empty()) {
                    if (!cfg.captioner) throw TransportError("no captioner configured");
                    const std::string region =
                        r.region_masks.empty() ? std::string() : r.region_masks[0];
                    caption = cfg.captioner->caption(r.image_ref, region);
                    payload["caption"] = caption;
                }
                if (!cfg.judge) throw TransportError("no judge configured");
                const ValidationResult v =
                    round1_validate(caption, r.category, *cfg.judge, cfg.templates.validate);
                payload["verdict"] = v.keep ? "keep" : "drop";
                payload["verdict_rationale"] = v.rationale;
                for (const auto& [k, val] : payload.items()) r.payload[k] = val;
                r.stage = Stage::Validated;
                result.events.push_back(JournalEvent{{{"id", r.id},
                                                      {"event", "advance"},
                                                      {"stage", "validated"},
                                                      {"payload", payload}}});
            } else if (r.stage == Stage::Validated) {
                if (r.payload.value("verdict", "keep") == "drop") break;  // terminal
                if (!r.scene_graph || r.region_masks.empty()) break;      // round-1-only record
                if (!cfg.captioner) throw TransportError("no captioner configured");
                nlohmann::json captions = nlohmann::json::array();
                for (const auto& region : r.region_masks) {
                    captions.push_back(cfg.captioner->caption(r.image_ref, region));
                }
                r.payload["region_captions"] = captions;
                r.stage = Stage::RegionCaptions;
                result.events.push_back(
                    JournalEvent{{{"id", r.id},
                                  {"event", "advance"},
                                  {"stage", "region_captions"},
                                  {"payload", {{"region_captions", captions}}}}});
            } else if (r.stage == Stage::RegionCaptions) {
                if (!r.scene_graph) break;
                if (!cfg.merger) throw TransportError("no merger configured");
                std::vector<std::string> captions;
                for (const auto& c : r.payload.at("region_captions")) {
                    captions.push_back(c.get<std::string>());
                }
                const MergedOutputs merged =
                    round2_merge(captions, *r.scene_graph, *cfg.merger, cfg.templates);
                nlohmann::json jm;
                jm["descriptions"] = merged.descriptions;
                nlohmann::json qa = nlohmann::json::array();
                for (const auto& p : merged.qa_pairs) {
                    qa.push_back({{"question", p.question}, {"answer", p.answer}});
                }
                jm["qa_pairs"] = qa;
                nlohmann::json mcqs = nlohmann::json::array();
                for (const auto& m : merged.mcqs) {
                    mcqs.push_back(
                        {{"question", m.question}, {"choices", m.choices}, {"gold", m.gold}});
                }
                jm["mcqs"] = mcqs;
                r.payload["merged"] = jm;
                r.stage = Stage::Merged;
                result.events.push_back(JournalEvent{{{"id", r.id},
                                                      {"event", "advance"},
                                                      {"stage", "merged"},
                                                      {"payload", {{"merged", jm}}}}});
            } else {
                break;
            }
        }
        result.disposition =
            result.events.empty() ? Disposition::Untouched : Disposition::Advanced;
    } catch (const QuarantineError& e) {
        r.quarantined = true;
        r.quarantine_reason = e.what();
        result.disposition = Disposition::Quarantined;
        result.reason = e.what();
        result.events.push_back(
            JournalEvent{{{"id", r.id}, {"event", "quarantine"}, {"reason", e.what()}}});
    } catch (const TransportError& e) {
        result.disposition = Disposition::NeedsRetry;
        result.reason = e.what();
        result.events.push_back(
            JournalEvent{{{"id", r.id}, {"event", "needs_retry"}, {"reason", e.what()}}});
    } catch (const MalformedVerdictError& e) {
        result.disposition = Disposition::NeedsRetry;
        result.reason = e.what();
        result.events.push_back(
            JournalEvent{{{"id", r.id}, {"event", "needs_retry"}, {"reason", e.what()}}});
    }
    return result;
}

}  // namespace

std::string summary_to_json(const PipelineSummary& s) {
    nlohmann::json j;
    j["total"] = s.total;
    j["advanced"] = s.advanced;
    j["quarantined"] = s.quarantined;
    j["needs_retry"] = s.needs_retry;
    j["untouched"] = s.untouched;
    j["stage_counts"] = s.stage_counts;
    j["quarantine_reasons"] = s.quarantine_reasons;
    return j.dump(2);
}

PipelineSummary run_pipeline(const std::string& manifest_path, const PipelineConfig& config) {
    // Everything loads before any mutation; manifest I/O errors abort here.
    std::vector<PipelineRecord> records = load_manifest(manifest_path);
    apply_journal(records, config.journal_path);

    std::ofstream journal(config.journal_path, std::ios::app);
    if (!journal) throw std::runtime_error("cannot open journal: " + config.journal_path);

    PipelineSummary summary;
    summary.total = static_cast<int64_t>(records.size());

    std::vector<size_t> pending;
    for (size_t i = 0; i < records.size(); ++i) {
        const PipelineRecord& r = records[i];
        if (!r.quarantined && stage_rank(r.stage) < stage_rank(config.target)) {
            pending.push_back(i);
        } else {
            ++summary.untouched;
        }
    }

    std::exception_ptr crash;
    for (size_t batch_start = 0; batch_start < pending.size() && !crash;
         batch_start += static_cast<size_t>(config.batch_size)) {
        const size_t batch_end =
            std::min(pending.size(), batch_start + static_cast<size_t>(config.batch_size));
        std::vector<WorkResult> results(batch_end - batch_start);

        // workers are stateless; the journal writer below is the single writer
        const size_t workers = std::min<size_t>(
            static_cast<size_t>(std::max<int64_t>(1, config.max_in_flight)),
            batch_end - batch_start);
        std::mutex next_mutex;
        size_t next = batch_start;
        std::vector<std::exception_ptr> worker_errors(workers);
        std::vector<std::thread> threads;
        for (size_t t = 0; t < workers; ++t) {
            threads.emplace_back([&, t]() {
                try {
                    while (true) {
                        size_t idx;
                        {
                            std::lock_guard<std::mutex> lock(next_mutex);
                            if (next >= batch_end) return;
                            idx = next++;
                        }
                        results[idx - batch_start] =
                            process_record(records[pending[idx]], config);
                    }
                } catch (...) {
                    worker_errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : threads) th.join();
        for (const auto& err : worker_errors) {
            if (err && !crash) crash = err;
        }

        // checkpoint: append this batch's events in record order, then flush
        size_t completed = batch_end - batch_start;
        if (crash) {
            // a worker died mid-batch; keep only the prefix of contiguous
            // finished records so the journal never skips ahead of a redo
            completed = 0;
        }
        for (size_t i = 0; i < completed; ++i) {
            const WorkResult& wr = results[i];
            for (const auto& ev : wr.events) journal << ev.body.dump() << "\n";
            switch (wr.disposition) {
                case Disposition::Untouched: ++summary.untouched; break;
                case Disposition::Advanced: ++summary.advanced; break;
                case Disposition::NeedsRetry: ++summary.needs_retry; break;
                case Disposition::Quarantined:
                    ++summary.quarantined;
                    ++summary.quarantine_reasons[wr.reason];
                    break;
            }
        }
        journal.flush();
    }
    if (crash) std::rethrow_exception(crash);

    for (const auto& r : records) {
        ++summary.stage_counts[stage_to_string(r.stage)];
    }
    if (config.compact_manifest) save_manifest(manifest_path, records);
    return summary;
}

}  // namespace regionlm
