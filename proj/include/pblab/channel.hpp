#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pblab/models.hpp"

namespace pblab {

// Query-surface transforms applied between challenger and adversary. When
// stacked the order is fixed: quantize (weights) → watermark (logits) →
// top-k (response).
struct ChannelConfig {
    bool quantize = false;
    int bits = 8;
    bool watermark = false;
    double gamma = 0.5;
    double delta = 2.0;
    std::uint64_t hash_seed = 0x5eed;
    std::size_t topk = 0;  // 0 = dense response

    bool plain() const { return !quantize && !watermark && topk == 0; }
};

// Either a dense logit vector or k (token id, log probability) pairs sorted
// by log probability descending.
struct QueryResponse {
    std::vector<float> dense;
    std::vector<std::pair<int, float>> sparse;

    bool is_sparse() const { return !sparse.empty() || dense.empty(); }
};

// The k largest log probabilities; ties broken toward the lower token id.
QueryResponse apply_topk(const std::vector<float>& logprobs, std::size_t k);

// Keyed permutation of the vocabulary; the first ⌊γV⌋ ids form the green list.
std::vector<int> watermark_green_set(std::size_t vocab, int prev_token, double gamma,
                                     std::uint64_t hash_seed);
// +δ on the green list, −δ on the rest, conditioned on the preceding token.
void watermark_logits(std::vector<float>& logits, int prev_token, double gamma, double delta,
                      std::uint64_t hash_seed);

// Model with channel weight transforms already applied (quantization).
struct PreparedModel {
    ModelBundle model;
    ChannelConfig config;
};

PreparedModel prepare_channel(const ModelBundle& model, const ChannelConfig& cfg);

// One response per predicting position: entry t describes p(token_{t+1} | ≤t).
std::vector<QueryResponse> query_lm(const PreparedModel& pm, const std::vector<int>& tokens);
QueryResponse query_classifier(const PreparedModel& pm, const Tensor& x_row);

// Scalar statistic recovered from a restricted response: exact true-token log
// probability when visible, otherwise the pessimistic floor
// (min returned logprob) − log k.
double statistic_from_channel(const QueryResponse& response, int true_token);
// Mean per-position statistic over a sequence; equals −NLL on a dense channel.
double lm_statistic_from_channel(const std::vector<QueryResponse>& responses,
                                 const std::vector<int>& tokens);

std::vector<float> log_softmax_vec(const std::vector<float>& logits);

void write_responses_csv(const std::string& path,
                         const std::vector<std::vector<QueryResponse>>& responses);

}  // namespace pblab
