#include "regionlm/judge_client.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace regionlm {

std::map<std::string, std::string> load_kv_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = value;
    }
    return kv;
}

namespace {

std::string pick(const std::map<std::string, std::string>& kv, const std::string& key,
                 const char* env_name, const std::string& fallback = "") {
    if (env_name) {
        if (const char* env = std::getenv(env_name); env && *env) return env;
    }
    const auto it = kv.find(key);
    return it != kv.end() ? it->second : fallback;
}

}  // namespace

JudgeEndpointConfig judge_config_from(const std::map<std::string, std::string>& kv) {
    JudgeEndpointConfig cfg;
    cfg.base_url = pick(kv, "judge_url", "REGIONLM_JUDGE_URL");
    cfg.path = pick(kv, "judge_path", nullptr, "/v1/chat/completions");
    cfg.model = pick(kv, "judge_model", "REGIONLM_JUDGE_MODEL", "judge");
    cfg.auth_token = pick(kv, "judge_token", "REGIONLM_JUDGE_TOKEN");
    const std::string timeout = pick(kv, "judge_timeout_sec", nullptr);
    if (!timeout.empty()) cfg.timeout_sec = std::stoi(timeout);
    if (cfg.base_url.empty()) {
        throw std::invalid_argument("judge config: judge_url (or REGIONLM_JUDGE_URL) is required");
    }
    return cfg;
}

std::string base64_encode(const std::string& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    while (i + 3 <= bytes.size()) {
        const uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
        i += 3;
    }
    if (i + 1 == bytes.size()) {
        const uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out += "=";
    }
    return out;
}

std::string build_judge_request_body(const JudgeEvidence& evidence, const std::string& model) {
    nlohmann::json content = nlohmann::json::array();
    std::ostringstream text;
    text << "Score the candidate description of the prompted regions against the rubric.\n"
         << "Rubric:\n" << evidence.rubric << "\n"
         << "Question: " << evidence.question << "\n"
         << "Candidate: " << evidence.candidate << "\n"
         << "Reply with a JSON object {\"score\": <0..1>, \"rationale\": <string>}.";
    content.push_back({{"type", "text"}, {"text", text.str()}});

    const auto attach = [&content](const std::string& label, const std::string& png_bytes) {
        content.push_back({{"type", "image"},
                           {"label", label},
                           {"media_type", "image/png"},
                           {"data", base64_encode(png_bytes)}});
    };
    attach("full_image", encode_image_png(evidence.full_image));
    for (size_t i = 0; i < evidence.crops.size(); ++i) {
        attach("crop_" + std::to_string(i), encode_image_png(evidence.crops[i]));
    }
    for (size_t i = 0; i < evidence.masks.size(); ++i) {
        attach("mask_" + std::to_string(i), encode_mask_png(evidence.masks[i]));
    }

    nlohmann::json body;
    body["model"] = model;
    body["messages"] = nlohmann::json::array({
        nlohmann::json{{"role", "user"}, {"content", content}},
    });
    return body.dump();
}

JudgeVerdict parse_judge_reply(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        throw MalformedVerdictError("judge reply is not JSON: " + body.substr(0, 120));
    }
    // Either the verdict object itself, or chat-style with the verdict as the
    // first message content (possibly a JSON string).
    nlohmann::json verdict = j;
    if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
        const auto& msg = j["choices"][0];
        nlohmann::json content;
        if (msg.contains("message") && msg["message"].contains("content")) {
            content = msg["message"]["content"];
        }
        if (content.is_string()) {
            try {
                verdict = nlohmann::json::parse(content.get<std::string>());
            } catch (const nlohmann::json::exception&) {
                throw MalformedVerdictError("judge message content is not a JSON verdict");
            }
        } else {
            verdict = content;
        }
    }
    if (!verdict.is_object() || !verdict.contains("score") || !verdict["score"].is_number()) {
        throw MalformedVerdictError("judge verdict missing numeric score: " + body.substr(0, 120));
    }
    JudgeVerdict out;
    out.score = verdict["score"].get<double>();
    out.rationale = verdict.value("rationale", "");
    return out;
}

TextEndpointConfig text_endpoint_from(const std::map<std::string, std::string>& kv,
                                      const std::string& model_key) {
    TextEndpointConfig cfg;
    cfg.base_url = pick(kv, "pipeline_url", "REGIONLM_PIPELINE_URL");
    cfg.path = pick(kv, "pipeline_path", nullptr, "/v1/chat/completions");
    cfg.model = pick(kv, model_key, nullptr, model_key);
    cfg.auth_token = pick(kv, "pipeline_token", "REGIONLM_PIPELINE_TOKEN");
    if (cfg.base_url.empty()) {
        throw std::invalid_argument(
            "pipeline config: pipeline_url (or REGIONLM_PIPELINE_URL) is required");
    }
    return cfg;
}

HttpTextClient::HttpTextClient(TextEndpointConfig config) : config_(std::move(config)) {}

std::string HttpTextClient::complete(const std::string& prompt) {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_sec, 0);
    client.set_read_timeout(config_.timeout_sec, 0);
    httplib::Headers headers;
    if (!config_.auth_token.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.auth_token);
    }
    nlohmann::json body;
    body["model"] = config_.model;
    body["messages"] =
        nlohmann::json::array({nlohmann::json{{"role", "user"}, {"content", prompt}}});
    const auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("text request failed: " + httplib::to_string(res.error()));
    if (res->status >= 500) {
        throw TransportError("text endpoint returned status " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw MalformedVerdictError("text endpoint returned status " +
                                    std::to_string(res->status));
    }
    try {
        const nlohmann::json j = nlohmann::json::parse(res->body);
        if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
            const auto& msg = j["choices"][0];
            if (msg.contains("message") && msg["message"].contains("content") &&
                msg["message"]["content"].is_string()) {
                return msg["message"]["content"].get<std::string>();
            }
        }
    } catch (const nlohmann::json::exception&) {
    }
    return res->body;
}

HttpCaptionClient::HttpCaptionClient(TextEndpointConfig config) : text_(std::move(config)) {}

std::string HttpCaptionClient::caption(const std::string& image_ref,
                                       const std::string& region_rle) {
    std::ostringstream prompt;
    prompt << "Describe the masked region of the image in detail.\n"
           << "Image: " << image_ref << "\n"
           << "Region mask (RLE): " << region_rle << "\n";
    return text_.complete(prompt.str());
}

HttpJudgeClient::HttpJudgeClient(JudgeEndpointConfig config) : config_(std::move(config)) {}

JudgeVerdict HttpJudgeClient::judge(const JudgeEvidence& evidence) {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_sec, 0);
    client.set_read_timeout(config_.timeout_sec, 0);
    httplib::Headers headers;
    if (!config_.auth_token.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.auth_token);
    }
    const std::string body = build_judge_request_body(evidence, config_.model);
    const auto res = client.Post(config_.path, headers, body, "application/json");
    if (!res) {
        throw TransportError("judge request failed: " + httplib::to_string(res.error()));
    }
    if (res->status >= 500) {
        throw TransportError("judge returned status " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw MalformedVerdictError("judge returned status " + std::to_string(res->status) + ": " +
                                    res->body.substr(0, 120));
    }
    return parse_judge_reply(res->body);
}

}  // namespace regionlm
