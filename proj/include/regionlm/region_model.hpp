#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regionlm/anyres.hpp"
#include "regionlm/decoder.hpp"
#include "regionlm/image.hpp"
#include "regionlm/prompt_encoder.hpp"
#include "regionlm/roi_align.hpp"
#include "regionlm/tensor.hpp"
#include "regionlm/vit.hpp"

namespace regionlm {

// Table of encoder modes for differential testing:
//   LocalOnly      - per-prompt bbox crops only, no global pass
//   GlobalPlusCrop - global AnyRes pass plus per-prompt crops
//   RoiReplay      - global AnyRes pass plus RoI-aligned feature replay
enum class EncoderMode { LocalOnly, GlobalPlusCrop, RoiReplay };

EncoderMode encoder_mode_from_string(const std::string& s);
std::string encoder_mode_to_string(EncoderMode mode);

// Which map the replay reads from: the stitched tile-level map (default) or
// the low-resolution thumbnail map.
enum class ReplaySource { Stitched, Thumbnail };

struct PromptSet {
    std::vector<MaskImage> masks;  // indices 0..N-1

    MaskImage union_mask() const { return mask_union(masks); }
    int64_t size() const { return static_cast<int64_t>(masks.size()); }
};

struct Request {
    Tensor image;  // [3 x H x W]
    PromptSet prompts;
    std::string instruction;
    EncoderMode mode = EncoderMode::RoiReplay;
};

struct ModelConfig {
    VitConfig vit;
    int64_t tile_side = 336;
    int64_t tile_budget = 16;
    RoiConfig roi;  // 16x16 bins keeps the replay budget equal to one view
    DecoderConfig decoder;
    int64_t prompt_hidden = 16;
    ReplaySource replay_source = ReplaySource::Stitched;

    void validate() const;
};

struct ModelWeights {
    PromptEncoderWeights prompt_encoder;
    VitWeights vit;
    DecoderWeights decoder;
};

// zero_init_prompt=false randomizes the prompt projection too (differential
// tests only; the default matches a freshly initialized model).
ModelWeights init_model(const ModelConfig& cfg, uint64_t seed, bool zero_init_prompt = true);

void save_model(const std::string& path, const ModelWeights& w);
ModelWeights load_model(const std::string& path, const ModelConfig& cfg);

enum class SegmentKind { Global, Tile, PromptOpen, PromptTokens, PromptClose, Instruction };

struct Segment {
    SegmentKind kind;
    int64_t index;  // tile index or prompt index; -1 otherwise
    int64_t begin, end;  // [begin, end) into items
};

std::string segment_kind_to_string(SegmentKind k);

struct ModelInputSequence {
    std::vector<SequenceItem> items;
    std::vector<Segment> segments;

    int64_t length() const { return static_cast<int64_t>(items.size()); }
};

// Builds the decoder input: [global][tiles...][<PromptK> replay </PromptK>]
// per prompt in index order, then instruction tokens. The crop modes replace
// the replay span with crop-encoded tokens (and LocalOnly drops the global
// and tile spans).
ModelInputSequence assemble(const Request& req, const ModelConfig& cfg, const ModelWeights& w);

// Next-token distributions for an assembled sequence, [n x vocab].
Tensor model_forward(const ModelInputSequence& seq, const ModelConfig& cfg, const ModelWeights& w);

struct RespondResult {
    std::string text;
    std::vector<Segment> segments;
    int64_t prefix_tokens = 0;
    int64_t generated_tokens = 0;
};

// Greedy decode; deterministic given weights.
RespondResult respond(const Request& req, const ModelConfig& cfg, const ModelWeights& w,
                      int64_t max_tokens);

// Encoder-side outputs for one request, exposed for probing and tests.
struct EncodedPrompts {
    std::vector<Tensor> prompt_tokens;  // per prompt, [(tokens) x D]
    TilePlan plan;
};
EncodedPrompts encode_prompts(const Request& req, const ModelConfig& cfg, const ModelWeights& w);

// Evenly spaced frame indices: linspace over [0, frame_count-1], rounded,
// deduplicated preserving order; all frames when frame_count <= target.
std::vector<int64_t> sample_frames(int64_t frame_count, int64_t target = 16);

// ---- request/response JSON ----
// {"image_path", "masks": [rle or png path, ...], "instruction", "mode"};
// mask entries containing ';' parse as RLE, others as PNG paths.
Request load_request_json(const std::string& json_text, const std::string& base_dir);
std::string respond_result_to_json(const RespondResult& result);

}  // namespace regionlm
