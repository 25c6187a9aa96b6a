#pragma once

#include <map>
#include <string>

#include "regionlm/eval.hpp"
#include "regionlm/pipeline.hpp"

namespace regionlm {

// Plain key=value config ('#' comments, blank lines ignored). Lookup order
// for client settings: explicit key, then environment variable, then file.
std::map<std::string, std::string> load_kv_config(const std::string& path);

struct JudgeEndpointConfig {
    std::string base_url;   // e.g. http://host:port
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string auth_token;  // optional bearer token
    int timeout_sec = 30;
};

// Builds the endpoint config from a kv map + environment. Keys:
// judge_url, judge_path, judge_model, judge_token (env: REGIONLM_JUDGE_URL,
// REGIONLM_JUDGE_MODEL, REGIONLM_JUDGE_TOKEN). Environment wins over file.
JudgeEndpointConfig judge_config_from(const std::map<std::string, std::string>& kv);

// Chat-completion-style judge over HTTP. The request carries the rubric,
// question and candidate as text plus the full image, per-prompt crops and
// masks as base64 PNG attachments. The reply must contain a JSON object
// {"score": float in [0,1], "rationale": string}, either as the body itself
// or as the first message content.
class HttpJudgeClient : public JudgeClient {
public:
    explicit HttpJudgeClient(JudgeEndpointConfig config);
    JudgeVerdict judge(const JudgeEvidence& evidence) override;
    std::string model_id() const override { return config_.model; }

private:
    JudgeEndpointConfig config_;
};

// Request/verdict plumbing, exposed for tests and the server side.
std::string build_judge_request_body(const JudgeEvidence& evidence, const std::string& model);
JudgeVerdict parse_judge_reply(const std::string& body);

std::string base64_encode(const std::string& bytes);

// ---- pipeline clients over the same chat-completion shape ----

struct TextEndpointConfig {
    std::string base_url;
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string auth_token;
    int timeout_sec = 60;
};

// Keys: pipeline_url, pipeline_path, pipeline_model/captioner_model,
// pipeline_token (env: REGIONLM_PIPELINE_URL, REGIONLM_PIPELINE_TOKEN).
TextEndpointConfig text_endpoint_from(const std::map<std::string, std::string>& kv,
                                      const std::string& model_key);

// Sends the prompt as a single user message; returns the reply body's first
// message content (or the raw body when the reply is not chat-shaped).
class HttpTextClient : public TextClient {
public:
    explicit HttpTextClient(TextEndpointConfig config);
    std::string complete(const std::string& prompt) override;

private:
    TextEndpointConfig config_;
};

// Captioner over the same endpoint: the region mask rides along as an RLE
// string in the message.
class HttpCaptionClient : public CaptionClient {
public:
    explicit HttpCaptionClient(TextEndpointConfig config);
    std::string caption(const std::string& image_ref, const std::string& region_rle) override;

private:
    HttpTextClient text_;
};

}  // namespace regionlm
