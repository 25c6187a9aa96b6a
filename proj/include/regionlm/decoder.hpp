#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regionlm/tensor.hpp"
#include "regionlm/tensor_io.hpp"
#include "regionlm/transformer.hpp"

namespace regionlm {

// Byte-level vocabulary plus a reserved special-token range: an end token
// and paired per-prompt delimiters. "<PromptK>" / "</PromptK>" in text map
// to the delimiter ids.
constexpr int64_t kByteVocab = 256;
constexpr int64_t kEndToken = 256;
constexpr int64_t kMaxPromptSlots = 32;
constexpr int64_t kVocabSize = 257 + 2 * kMaxPromptSlots;

int64_t prompt_open_token(int64_t k);
int64_t prompt_close_token(int64_t k);

// Tokenizes UTF-8 text as raw bytes, recognizing <PromptK> / </PromptK>
// placeholders. Placeholders with K >= n_prompts throw.
std::vector<int64_t> tokenize(const std::string& text, int64_t n_prompts);
std::string detokenize(const std::vector<int64_t>& tokens);

// One position of the decoder input: a discrete token or a continuous
// vision/replay vector.
struct SequenceItem {
    int64_t token = -1;          // valid when >= 0
    std::vector<double> vector;  // used when token < 0

    static SequenceItem from_token(int64_t t) { return SequenceItem{t, {}}; }
    static SequenceItem from_vector(std::vector<double> v) { return SequenceItem{-1, std::move(v)}; }
    bool is_token() const { return token >= 0; }
};

struct DecoderConfig {
    int64_t d_model = 64;
    int64_t depth = 2;
    int64_t heads = 4;
    int64_t mlp_ratio = 4;
    int64_t vision_dim = 64;  // width of continuous items
};

struct DecoderWeights {
    Tensor token_embed;          // [vocab x d_model]
    Tensor vision_w, vision_b;   // [vision_dim x d_model], [d_model]
    std::vector<BlockWeights> blocks;
    LnWeights final_ln;
    Tensor head_w, head_b;  // [d_model x vocab], [vocab]
};

DecoderWeights init_decoder(const DecoderConfig& cfg, uint64_t seed);

// Causal forward over mixed items; returns next-token distributions
// [n x vocab], each row softmax-normalized.
Tensor decoder_forward(const std::vector<SequenceItem>& items, const DecoderConfig& cfg,
                       const DecoderWeights& weights);

// Greedy decode continuing after the given prefix; stops at the end token
// or max_tokens. Returns generated token ids (end token excluded).
std::vector<int64_t> greedy_decode(std::vector<SequenceItem> prefix, const DecoderConfig& cfg,
                                   const DecoderWeights& weights, int64_t max_tokens);

WeightMap decoder_to_sections(const DecoderWeights& w, const std::string& prefix);
DecoderWeights decoder_from_sections(const WeightMap& sections, const std::string& prefix,
                                     const DecoderConfig& cfg);

}  // namespace regionlm
