#include "pblab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

namespace pblab {

ParamDeltaProfile relative_param_change(const ModelBundle& before, const ModelBundle& after) {
    auto tb = before.named_tensors();
    auto ta = after.named_tensors();
    if (tb.size() != ta.size())
        throw std::invalid_argument("relative_param_change: architecture mismatch");
    ParamDeltaProfile profile;
    for (std::size_t k = 0; k < tb.size(); ++k) {
        const Tensor& b = tb[k].second;
        const Tensor& a = ta[k].second;
        if (b.shape() != a.shape())
            throw std::invalid_argument("relative_param_change: tensor " + tb[k].first +
                                        " differs in shape");
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double d = std::fabs(static_cast<double>(a.data()[i]) - b.data()[i]);
            profile.r.push_back(
                static_cast<float>(d / (std::fabs(static_cast<double>(b.data()[i])) + kDeltaEps)));
        }
    }
    return profile;
}

double profile_percentile(const ParamDeltaProfile& profile, double q) {
    if (profile.r.empty()) throw std::invalid_argument("profile_percentile: empty profile");
    if (q <= 0.0 || q > 100.0)
        throw std::invalid_argument("profile_percentile: q must be in (0,100]");
    std::vector<float> sorted = profile.r;
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(q / 100.0 * static_cast<double>(sorted.size())));
    return sorted[std::max<std::size_t>(rank, 1) - 1];
}

ModelBundle single_record_finetune(const ModelBundle& pretrained, const std::vector<int>& tokens,
                                   const SingleRecordFtConfig& cfg, std::uint64_t run_seed) {
    if (pretrained.kind != ModelKind::causal_lm)
        throw std::invalid_argument("single_record_finetune: needs a causal LM");
    if (tokens.size() < 3)
        throw std::invalid_argument("single_record_finetune: record too short");

    ModelBundle model = pretrained.clone();
    CounterRng rng = CounterRng(cfg.seed).derive(run_seed);

    // one predicted position is dropped from the loss, mirroring the masked
    // token the fine-tuning victim randomizes
    const std::size_t predictions = tokens.size() - 1;
    std::size_t skip;
    if (cfg.mask_mode == MaskMode::random) {
        skip = static_cast<std::size_t>(rng.below(predictions));
    } else {
        std::uint64_t h = 0x9E3779B97F4A7C15ULL;
        for (int t : tokens) h = mix64(h ^ static_cast<std::uint64_t>(t));
        skip = static_cast<std::size_t>(h % predictions);
    }

    const std::size_t vocab = model.lm.vocab();
    Tensor pick(predictions, vocab);
    for (std::size_t i = 0; i < predictions; ++i)
        if (i != skip) pick.at(i, static_cast<std::size_t>(tokens[i + 1])) = 1.0f;
    const float inv = -1.0f / static_cast<float>(predictions - 1);

    AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    AdamW opt(model.trainable(ModelBundle::TrainableSet::all), ocfg);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        Tape t;
        Tensor logits = model.lm.forward(t, tokens);
        Tensor lsm = t.log_softmax(t.slice_rows(logits, 0, predictions));
        Tensor loss = t.scale(t.sum(t.mul(lsm, pick)), inv);
        t.backward(loss);
        opt.step();
    }
    return model;
}

double calibrate_threshold(const ModelBundle& pretrained,
                           const std::vector<std::vector<int>>& records,
                           const SingleRecordFtConfig& cfg, std::size_t threads) {
    if (records.size() < 2)
        throw std::invalid_argument("calibrate_threshold: need at least 2 runs");
    std::vector<double> percentiles(records.size());
    auto run_one = [&](std::size_t k) {
        ModelBundle tuned = single_record_finetune(pretrained, records[k], cfg, k);
        percentiles[k] = profile_percentile(relative_param_change(pretrained, tuned),
                                            cfg.percentile);
    };
    if (threads <= 1) {
        for (std::size_t k = 0; k < records.size(); ++k) run_one(k);
    } else {
        const std::size_t workers = std::min(threads, records.size());
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t)
            pool.emplace_back([&, t]() {
                for (std::size_t k = t; k < records.size(); k += workers) run_one(k);
            });
        for (auto& th : pool) th.join();
    }
    double acc = 0.0;
    for (double p : percentiles) acc += p;
    return acc / static_cast<double>(percentiles.size());
}

std::vector<std::uint32_t> find_leaking_params(const ModelBundle& model_secret,
                                               const ModelBundle& model_reference,
                                               const ModelBundle& pretrained, double tau) {
    const auto rs = relative_param_change(pretrained, model_secret);
    const auto rr = relative_param_change(pretrained, model_reference);
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < rs.r.size(); ++i)
        if (rs.r[i] > tau && rr.r[i] <= tau) out.push_back(static_cast<std::uint32_t>(i));
    return out;
}

OverlapReport overlap_across_seeds(const std::vector<std::vector<std::uint32_t>>& sets) {
    if (sets.size() < 2)
        throw std::invalid_argument("overlap_across_seeds: need at least 2 sets");
    OverlapReport report;
    report.jaccard.assign(sets.size(), std::vector<double>(sets.size(), 1.0));
    std::vector<std::set<std::uint32_t>> s;
    for (const auto& v : sets) {
        s.emplace_back(v.begin(), v.end());
        report.set_sizes.push_back(v.size());
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = i + 1; j < s.size(); ++j) {
            std::vector<std::uint32_t> inter, uni;
            std::set_intersection(s[i].begin(), s[i].end(), s[j].begin(), s[j].end(),
                                  std::back_inserter(inter));
            std::set_union(s[i].begin(), s[i].end(), s[j].begin(), s[j].end(),
                           std::back_inserter(uni));
            const double jac = uni.empty()
                                   ? 1.0
                                   : static_cast<double>(inter.size()) /
                                         static_cast<double>(uni.size());
            report.jaccard[i][j] = report.jaccard[j][i] = jac;
        }
    }
    std::set<std::uint32_t> global = s[0];
    for (std::size_t i = 1; i < s.size(); ++i) {
        std::set<std::uint32_t> next;
        std::set_intersection(global.begin(), global.end(), s[i].begin(), s[i].end(),
                              std::inserter(next, next.begin()));
        global.swap(next);
    }
    report.global_intersection = global.size();
    return report;
}

std::vector<double> neuron_attribution(const CausalLMModel& model, const std::vector<int>& prompt,
                                       std::size_t answer_pos, std::size_t block,
                                       std::size_t steps) {
    if (block >= model.blocks.size())
        throw std::out_of_range("neuron_attribution: block " + std::to_string(block) +
                                " out of range");
    if (answer_pos == 0 || answer_pos >= prompt.size())
        throw std::invalid_argument("neuron_attribution: answer position must be interior");
    if (steps == 0) throw std::invalid_argument("neuron_attribution: need at least one step");

    const std::size_t width = model.blocks[block].fc1.out_dim();
    const int answer = prompt[answer_pos];
    std::vector<double> attribution(width, 0.0);

    for (std::size_t k = 1; k <= steps; ++k) {
        const float alpha = static_cast<float>(k) / static_cast<float>(steps);
        Tensor s = Tensor::vec(width, true);
        std::fill(s.data(), s.data() + width, alpha);

        Tape t;
        LmForwardOpts opts;
        opts.ffn_scale_block = static_cast<int>(block);
        opts.ffn_scale = s;
        Tensor logits = model.forward(t, prompt, opts);
        Tensor row = t.slice_rows(logits, answer_pos - 1, answer_pos);
        Tensor probs = t.softmax(row);
        Tensor onehot(1, probs.cols());
        onehot.at(0, static_cast<std::size_t>(answer)) = 1.0f;
        Tensor p = t.sum(t.mul(probs, onehot));
        t.backward(p);
        for (std::size_t i = 0; i < width; ++i)
            attribution[i] += static_cast<double>(s.grad()[i]) / static_cast<double>(steps);
    }
    return attribution;
}

std::vector<std::uint32_t> coarse_neurons(const std::vector<double>& attribution, double q) {
    std::vector<double> sorted = attribution;
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(q / 100.0 * static_cast<double>(sorted.size())));
    const double cut = sorted[std::max<std::size_t>(rank, 1) - 1];
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < attribution.size(); ++i)
        if (attribution[i] > cut) out.push_back(static_cast<std::uint32_t>(i));
    return out;
}

std::vector<std::uint32_t> refine_neurons(const std::vector<std::vector<std::uint32_t>>& coarse,
                                          double t_share) {
    if (coarse.empty()) throw std::invalid_argument("refine_neurons: no prompt sets");
    if (coarse.size() == 1) return coarse[0];
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& set : coarse)
        for (auto n : std::set<std::uint32_t>(set.begin(), set.end())) counts[n]++;
    const double need = t_share * static_cast<double>(coarse.size());
    std::vector<std::uint32_t> out;
    for (const auto& [n, c] : counts)
        if (static_cast<double>(c) + 1e-9 >= need) out.push_back(n);
    return out;
}

void amplify_neuron(ModelBundle& model, std::size_t block, std::size_t neuron, double factor) {
    if (model.kind != ModelKind::causal_lm)
        throw std::invalid_argument("amplify_neuron: needs a causal LM");
    if (block >= model.lm.blocks.size())
        throw std::out_of_range("amplify_neuron: block out of range");
    if (factor < 1.0 || factor > 20.0)
        throw std::invalid_argument("amplify_neuron: factor must be in [1, 20]");
    Linear& fc2 = model.lm.blocks[block].fc2;
    if (neuron >= fc2.in_dim()) throw std::out_of_range("amplify_neuron: neuron out of range");
    // fc2 is stored out×in, so the neuron's outgoing weights are one column
    for (std::size_t o = 0; o < fc2.out_dim(); ++o)
        fc2.w.at(o, neuron) = static_cast<float>(static_cast<double>(fc2.w.at(o, neuron)) * factor);
}

ExposureReport exposure(const std::vector<int>& canary_tokens,
                        const std::vector<std::vector<int>>& candidates,
                        const ModelBundle& model) {
    if (model.kind != ModelKind::causal_lm)
        throw std::invalid_argument("exposure: needs a causal LM");
    bool present = false;
    for (const auto& c : candidates) present = present || c == canary_tokens;
    if (!present)
        throw std::invalid_argument("exposure: canary absent from the candidate set");

    const double canary_nll = sequence_nll_value(model.lm, canary_tokens);
    std::size_t rank = 1;
    for (const auto& c : candidates) {
        if (c == canary_tokens) continue;
        if (sequence_nll_value(model.lm, c) < canary_nll) ++rank;
    }
    ExposureReport report;
    report.candidates = candidates.size();
    report.rank = rank;
    report.exposure = std::log2(static_cast<double>(candidates.size())) -
                      std::log2(static_cast<double>(rank));
    return report;
}

void write_overlap_csv(const std::string& path, const OverlapReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_overlap_csv: cannot open " + path);
    out << "run_id,set_size";
    for (std::size_t j = 0; j < report.jaccard.size(); ++j) out << ",jaccard_" << j;
    out << "\n";
    for (std::size_t i = 0; i < report.jaccard.size(); ++i) {
        out << i << ',' << report.set_sizes[i];
        for (std::size_t j = 0; j < report.jaccard.size(); ++j) out << ',' << report.jaccard[i][j];
        out << "\n";
    }
    out << "global_intersection," << report.global_intersection;
    for (std::size_t j = 0; j < report.jaccard.size(); ++j) out << ',';
    out << "\n";
}

}  // namespace pblab
