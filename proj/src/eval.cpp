#include "regionlm/eval.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace regionlm {

namespace {

const std::set<std::string> kPerception = {"color", "shape", "texture", "material"};
const std::set<std::string> kReasoning = {"position", "non_entity", "relation"};
const std::set<std::string> kCaption = {"cap_simple", "cap_detailed"};

}  // namespace

void BenchItem::validate() const {
    if (id.empty()) throw std::invalid_argument("bench item: empty id");
    if (kind == ItemKind::Mcq) {
        if (choices.size() < 2) {
            throw std::invalid_argument("bench item " + id + ": MCQ needs >= 2 choices");
        }
        if (choices.find(gold) == choices.end()) {
            throw std::invalid_argument("bench item " + id + ": gold '" + gold +
                                        "' not among choice labels");
        }
    }
    if (!kPerception.count(subtask) && !kReasoning.count(subtask) && !kCaption.count(subtask)) {
        throw std::invalid_argument("bench item " + id + ": unknown subtask '" + subtask + "'");
    }
    if (kPerception.count(subtask) && masks.size() != 1) {
        throw std::invalid_argument("bench item " + id + ": perception items carry exactly 1 mask");
    }
}

BenchItem bench_item_from_json_line(const std::string& line) {
    const nlohmann::json j = nlohmann::json::parse(line);
    BenchItem item;
    item.id = j.at("id").get<std::string>();
    item.image_ref = j.value("image", "");
    for (const auto& m : j.at("masks")) item.masks.push_back(m.get<std::string>());
    item.question = j.at("question").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "mcq") {
        item.kind = ItemKind::Mcq;
        for (const auto& [label, text] : j.at("choices").items()) {
            item.choices[label] = text.get<std::string>();
        }
        item.gold = j.at("gold").get<std::string>();
    } else if (kind == "caption") {
        item.kind = ItemKind::Caption;
        const std::string protocol = j.value("protocol", "simple");
        if (protocol == "simple") {
            item.protocol = CaptionProtocol::Simple;
        } else if (protocol == "detailed") {
            item.protocol = CaptionProtocol::Detailed;
        } else {
            throw std::invalid_argument("bench item " + item.id + ": unknown protocol " + protocol);
        }
        item.rubric = j.value("rubric", "");
    } else {
        throw std::invalid_argument("bench item " + item.id + ": unknown kind " + kind);
    }
    item.subtask = j.at("subtask").get<std::string>();
    item.validate();
    return item;
}

std::vector<BenchItem> load_bench_items(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open dataset: " + path);
    std::vector<BenchItem> items;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        items.push_back(bench_item_from_json_line(line));
    }
    return items;
}

McqScore score_mcq(const std::string& pred_text, const BenchItem& item) {
    if (item.kind != ItemKind::Mcq) {
        throw std::invalid_argument("score_mcq: item " + item.id + " is not MCQ");
    }
    const auto is_word_char = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0;
    };

    McqScore result;
    std::set<std::string> seen;
    for (size_t i = 0; i < pred_text.size(); ++i) {
        const char c = pred_text[i];
        if (!std::isalpha(static_cast<unsigned char>(c))) continue;
        const bool left_ok = i == 0 || !is_word_char(pred_text[i - 1]);
        const bool right_ok = i + 1 >= pred_text.size() || !is_word_char(pred_text[i + 1]);
        if (!left_ok || !right_ok) continue;
        std::string letter(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        if (item.choices.find(letter) == item.choices.end()) continue;
        if (result.parsed.empty()) result.parsed = letter;
        seen.insert(letter);
    }
    if (result.parsed.empty()) {
        result.parse_failure = true;
        result.score = 0;
        return result;
    }
    result.ambiguous = seen.size() > 1;
    result.score = (result.parsed == item.gold) ? 1 : 0;
    return result;
}

JudgeVerdict judge_caption(const BenchItem& item, const std::string& candidate_text,
                           JudgeClient& judge, const Tensor& image,
                           const std::vector<MaskImage>& masks, const RetryPolicy& retry) {
    if (item.kind != ItemKind::Caption) {
        throw std::invalid_argument("judge_caption: item " + item.id + " is not a caption item");
    }
    JudgeEvidence evidence;
    evidence.item_id = item.id;
    evidence.question = item.question;
    evidence.rubric = item.rubric;
    evidence.candidate = candidate_text;
    evidence.full_image = image;
    for (const auto& mask : masks) {
        evidence.crops.push_back(crop_image(image, mask_to_bbox(mask)));
        evidence.masks.push_back(mask);
    }

    int backoff = retry.backoff_ms;
    for (int attempt = 1;; ++attempt) {
        try {
            JudgeVerdict verdict = judge.judge(evidence);
            if (verdict.score < 0.0 || verdict.score > 1.0) {
                throw MalformedVerdictError("judge score " + std::to_string(verdict.score) +
                                            " outside [0,1] for item " + item.id);
            }
            verdict.item_id = item.id;
            verdict.judge_model = judge.model_id();
            return verdict;
        } catch (const TransportError&) {
            if (attempt >= retry.attempts) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
    }
}

void PanelMatrix::validate() const {
    for (const auto& [id, row] : rows) {
        if (row.size() != models.size()) {
            throw std::invalid_argument("panel matrix: row " + id + " has " +
                                        std::to_string(row.size()) + " entries for " +
                                        std::to_string(models.size()) + " models");
        }
    }
}

std::vector<std::string> difficulty_filter(const PanelMatrix& matrix) {
    matrix.validate();
    std::vector<std::string> retained;
    for (const auto& [id, row] : matrix.rows) {
        const bool all_correct = std::all_of(row.begin(), row.end(), [](bool b) { return b; });
        if (!all_correct) retained.push_back(id);
    }
    return retained;
}

namespace {

std::string bucket_of(const std::string& subtask) {
    if (kPerception.count(subtask)) return "perception";
    if (kReasoning.count(subtask)) return "reasoning";
    if (kCaption.count(subtask)) return "caption";
    throw std::invalid_argument("aggregate: unknown subtask '" + subtask + "'");
}

}  // namespace

Report aggregate(const std::vector<ItemResult>& results) {
    Report report;
    for (const auto& r : results) {
        const std::string bucket = bucket_of(r.subtask);
        if (r.parse_failure) ++report.parse_failures;
        if (r.ambiguous) ++report.ambiguous_answers;
        if (r.judge_failed) {
            ++report.judge_failures;
            continue;  // recorded, excluded from every denominator
        }
        auto& sub = report.subtasks[r.subtask];
        ++sub.count;
        sub.score_sum += r.score;
        auto& b = report.buckets[bucket];
        ++b.count;
        b.score_sum += r.score;
        ++report.overall.count;
        report.overall.score_sum += r.score;
    }
    return report;
}

std::string report_to_json(const Report& report) {
    nlohmann::json j;
    const auto stats = [](const BucketStats& s) {
        return nlohmann::json{{"count", s.count}, {"score_sum", s.score_sum},
                              {"accuracy", s.accuracy()}};
    };
    for (const auto& [name, s] : report.subtasks) j["subtasks"][name] = stats(s);
    for (const auto& [name, s] : report.buckets) j["buckets"][name] = stats(s);
    j["overall"] = stats(report.overall);
    j["parse_failures"] = report.parse_failures;
    j["ambiguous_answers"] = report.ambiguous_answers;
    j["judge_failures"] = report.judge_failures;
    return j.dump(2);
}

std::string report_to_table(const Report& report) {
    std::ostringstream os;
    const auto row = [&os](const std::string& name, const BucketStats& s) {
        os << "  " << std::left << std::setw(14) << name << std::right << std::setw(6) << s.count
           << std::setw(10) << std::fixed << std::setprecision(1) << s.accuracy() * 100.0 << "\n";
    };
    os << "bucket            count     score\n";
    for (const auto& [name, s] : report.buckets) row(name, s);
    os << "subtask           count     score\n";
    for (const auto& [name, s] : report.subtasks) row(name, s);
    row("overall", report.overall);
    os << "parse failures: " << report.parse_failures
       << "  ambiguous: " << report.ambiguous_answers
       << "  judge failures: " << report.judge_failures << "\n";
    return os.str();
}

}  // namespace regionlm
