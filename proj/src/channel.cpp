#include "pblab/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "pblab/rng.hpp"

namespace pblab {

std::vector<float> log_softmax_vec(const std::vector<float>& logits) {
    float mx = logits[0];
    for (float v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (float v : logits) sum += std::exp(static_cast<double>(v) - mx);
    const float lse = mx + static_cast<float>(std::log(sum));
    std::vector<float> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

QueryResponse apply_topk(const std::vector<float>& logprobs, std::size_t k) {
    if (k == 0 || k > logprobs.size())
        throw std::invalid_argument("apply_topk: k must be in [1, V], got " + std::to_string(k));
    std::vector<int> idx(logprobs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (logprobs[a] != logprobs[b]) return logprobs[a] > logprobs[b];
        return a < b;  // ties toward the lower token id
    });
    QueryResponse r;
    for (std::size_t i = 0; i < k; ++i) r.sparse.emplace_back(idx[i], logprobs[idx[i]]);
    return r;
}

std::vector<int> watermark_green_set(std::size_t vocab, int prev_token, double gamma,
                                     std::uint64_t hash_seed) {
    if (gamma <= 0.0 || gamma >= 1.0)
        throw std::invalid_argument("watermark: gamma must be in (0,1)");
    if (prev_token < 0 || static_cast<std::size_t>(prev_token) >= vocab)
        throw std::out_of_range("watermark: prev_token outside vocabulary");
    CounterRng rng(mix64(hash_seed ^ mix64(static_cast<std::uint64_t>(prev_token))));
    std::vector<int> perm(vocab);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    perm.resize(static_cast<std::size_t>(gamma * static_cast<double>(vocab)));
    return perm;
}

void watermark_logits(std::vector<float>& logits, int prev_token, double gamma, double delta,
                      std::uint64_t hash_seed) {
    const auto green = watermark_green_set(logits.size(), prev_token, gamma, hash_seed);
    std::vector<std::uint8_t> is_green(logits.size(), 0);
    for (int g : green) is_green[static_cast<std::size_t>(g)] = 1;
    for (std::size_t i = 0; i < logits.size(); ++i)
        logits[i] += static_cast<float>(is_green[i] ? delta : -delta);
}

PreparedModel prepare_channel(const ModelBundle& model, const ChannelConfig& cfg) {
    if (cfg.quantize && cfg.bits != 4 && cfg.bits != 8)
        throw std::invalid_argument("channel: quantization bits must be 4 or 8");
    PreparedModel pm{model.clone(), cfg};
    if (cfg.quantize) quantize_model_weights(pm.model, cfg.bits);
    return pm;
}

namespace {

QueryResponse respond(const std::vector<float>& raw_logits, const ChannelConfig& cfg,
                      int prev_token) {
    std::vector<float> logits = raw_logits;
    if (cfg.watermark) {
        if (prev_token < 0)
            throw std::invalid_argument("channel: watermark requires a preceding token");
        watermark_logits(logits, prev_token, cfg.gamma, cfg.delta, cfg.hash_seed);
    }
    if (cfg.topk > 0) return apply_topk(log_softmax_vec(logits), cfg.topk);
    QueryResponse r;
    r.dense = std::move(logits);
    return r;
}

}  // namespace

std::vector<QueryResponse> query_lm(const PreparedModel& pm, const std::vector<int>& tokens) {
    if (pm.model.kind != ModelKind::causal_lm)
        throw std::invalid_argument("query_lm: model is not a causal LM");
    Tape t;
    Tensor logits = pm.model.lm.forward(t, tokens);
    std::vector<QueryResponse> out;
    out.reserve(tokens.size() - 1);
    for (std::size_t pos = 0; pos + 1 < tokens.size(); ++pos) {
        std::vector<float> row(logits.data() + pos * logits.cols(),
                               logits.data() + (pos + 1) * logits.cols());
        out.push_back(respond(row, pm.config, tokens[pos]));
    }
    return out;
}

QueryResponse query_classifier(const PreparedModel& pm, const Tensor& x_row) {
    if (pm.model.kind != ModelKind::classifier)
        throw std::invalid_argument("query_classifier: model is not a classifier");
    if (pm.config.watermark)
        throw std::invalid_argument("query_classifier: watermark channel needs token context");
    Tape t;
    Tensor logits = pm.model.clf.forward(t, x_row);
    std::vector<float> row(logits.data(), logits.data() + logits.cols());
    return respond(row, pm.config, -1);
}

double statistic_from_channel(const QueryResponse& response, int true_token) {
    if (response.dense.empty() && response.sparse.empty())
        throw std::invalid_argument("statistic_from_channel: empty response");
    if (!response.is_sparse()) {
        const auto lp = log_softmax_vec(response.dense);
        if (true_token < 0 || static_cast<std::size_t>(true_token) >= lp.size())
            throw std::out_of_range("statistic_from_channel: true token outside response");
        return lp[static_cast<std::size_t>(true_token)];
    }
    for (const auto& [tok, lp] : response.sparse)
        if (tok == true_token) return lp;
    // pessimistic floor: below every returned entry
    double floor = response.sparse.back().second;
    return floor - std::log(static_cast<double>(response.sparse.size()));
}

double lm_statistic_from_channel(const std::vector<QueryResponse>& responses,
                                 const std::vector<int>& tokens) {
    if (responses.size() + 1 != tokens.size())
        throw std::invalid_argument("lm_statistic_from_channel: response/token length mismatch");
    double acc = 0.0;
    for (std::size_t pos = 0; pos < responses.size(); ++pos)
        acc += statistic_from_channel(responses[pos], tokens[pos + 1]);
    return acc / static_cast<double>(responses.size());
}

void write_responses_csv(const std::string& path,
                         const std::vector<std::vector<QueryResponse>>& responses) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_responses_csv: cannot open " + path);
    out << "query_id,position,token_id,logprob\n";
    for (std::size_t q = 0; q < responses.size(); ++q) {
        for (std::size_t pos = 0; pos < responses[q].size(); ++pos) {
            const auto& r = responses[q][pos];
            if (r.is_sparse()) {
                for (const auto& [tok, lp] : r.sparse)
                    out << q << ',' << pos << ',' << tok << ',' << lp << '\n';
            } else {
                const auto lp = log_softmax_vec(r.dense);
                for (std::size_t tok = 0; tok < lp.size(); ++tok)
                    out << q << ',' << pos << ',' << tok << ',' << lp[tok] << '\n';
            }
        }
    }
}

}  // namespace pblab
