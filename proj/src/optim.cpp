#include "pblab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace pblab {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : cfg_(cfg) {
    for (auto& p : params) {
        if (!p.requires_grad())
            throw std::invalid_argument("AdamW: parameter does not require grad");
        Slot s;
        s.p = p;
        s.m.assign(p.size(), 0.0f);
        s.v.assign(p.size(), 0.0f);
        slots_.push_back(std::move(s));
    }
}

void AdamW::step() {
    ++t_;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (auto& s : slots_) {
        const float* g = s.p.grad();
        float* p = s.p.data();
        for (std::size_t i = 0; i < s.p.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw std::runtime_error("AdamW: non-finite gradient at step " +
                                         std::to_string(t_));
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0f - cfg_.beta1) * g[i];
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
            const float mhat = s.m[i] / bc1;
            const float vhat = s.v[i] / bc2;
            p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& s : slots_) s.p.zero_grad();
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::full: return "full";
        case Strategy::linear_probe: return "linear_probe";
        case Strategy::lora: return "lora";
        case Strategy::qlora: return "qlora";
        case Strategy::neftune: return "neftune";
    }
    return "?";
}

Strategy strategy_from_name(const std::string& name) {
    for (Strategy s : {Strategy::full, Strategy::linear_probe, Strategy::lora, Strategy::qlora,
                       Strategy::neftune})
        if (name == strategy_name(s)) return s;
    throw std::invalid_argument("unknown fine-tuning strategy: " + name);
}

const std::vector<std::uint32_t>& TrainData::ids() const {
    if (clf) return clf->ids;
    if (lm) return lm->ids;
    throw std::logic_error("TrainData: empty");
}

namespace {

std::vector<Tensor> select_trainable(ModelBundle& model, const TrainConfig& cfg) {
    switch (cfg.strategy) {
        case Strategy::linear_probe:
            return model.trainable(ModelBundle::TrainableSet::head_only);
        case Strategy::lora:
        case Strategy::qlora:
            return model.trainable(ModelBundle::TrainableSet::lora_only);
        default:
            return model.trainable(ModelBundle::TrainableSet::all);
    }
}

void prepare_strategy(ModelBundle& model, const TrainConfig& cfg, CounterRng& rng) {
    if (cfg.strategy == Strategy::qlora && !model.lora_attached()) {
        quantize_model_weights(model, cfg.qlora_bits);  // quantize base, then adapt
        attach_lora(model, cfg.lora_rank, cfg.lora_scale, {}, rng.derive(streams::kInit));
    } else if (cfg.strategy == Strategy::lora && !model.lora_attached()) {
        attach_lora(model, cfg.lora_rank, cfg.lora_scale, {}, rng.derive(streams::kInit));
    }
}

struct BatchPlan {
    std::size_t total_steps = 0;
    std::size_t steps_per_epoch = 0;
};

BatchPlan plan_steps(std::size_t n, const TrainConfig& cfg) {
    BatchPlan plan;
    plan.steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    plan.total_steps = cfg.steps > 0 ? cfg.steps : cfg.epochs * plan.steps_per_epoch;
    return plan;
}

}  // namespace

double classifier_accuracy(const ModelBundle& model, const ClassifierDataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("classifier_accuracy: empty dataset");
    std::size_t correct = 0;
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        std::vector<std::uint32_t> pos;
        for (std::size_t i = start; i < std::min(ds.size(), start + chunk); ++i)
            pos.push_back(static_cast<std::uint32_t>(i));
        Tape t;
        Tensor logits = model.clf.forward(t, ds.batch(pos));
        for (std::size_t i = 0; i < pos.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < logits.cols(); ++c)
                if (logits.at(i, c) > logits.at(i, best)) best = c;
            if (static_cast<int>(best) == ds.y[pos[i]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double lm_mean_nll(const ModelBundle& model, const Corpus& corpus) {
    if (corpus.size() == 0) throw std::invalid_argument("lm_mean_nll: empty corpus");
    double acc = 0.0;
    for (const auto& seq : corpus.seqs) acc += sequence_nll_value(model.lm, seq);
    return acc / static_cast<double>(corpus.size());
}

double heldout_utility(const ModelBundle& model, const TrainData& heldout) {
    return model.kind == ModelKind::classifier ? classifier_accuracy(model, *heldout.clf)
                                               : lm_mean_nll(model, *heldout.lm);
}

LossTrace train(ModelBundle& model, const TrainData& data, const TrainConfig& cfg,
                const TrainData* heldout) {
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch == 0) throw std::invalid_argument("train: batch size must be >= 1");

    CounterRng rng(cfg.seed);
    prepare_strategy(model, cfg, rng);
    AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.weight_decay = cfg.weight_decay;
    AdamW opt(select_trainable(model, cfg), ocfg);

    const auto plan = plan_steps(data.size(), cfg);
    LossTrace trace;
    trace.step_loss.reserve(plan.total_steps);

    const bool is_clf = model.kind == ModelKind::classifier;
    const float neftune_alpha = cfg.strategy == Strategy::neftune ? cfg.neftune_alpha : 0.0f;
    CounterRng noise_rng = rng.derive(streams::kNeftune);

    std::vector<std::uint32_t> order(data.size());
    std::size_t cursor = 0;
    std::size_t epoch = 0;
    auto reshuffle = [&]() {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
        if (cfg.shuffle) {
            CounterRng erng = rng.derive(1000 + epoch);
            erng.shuffle(order);
        }
        cursor = 0;
    };
    reshuffle();

    for (std::size_t step = 0; step < plan.total_steps; ++step) {
        std::vector<std::uint32_t> batch;
        while (batch.size() < cfg.batch) {
            if (cursor == order.size()) {
                ++epoch;
                reshuffle();
                // epoch mode: partial final batch instead of wrapping
                if (cfg.steps == 0 && !batch.empty()) break;
            }
            batch.push_back(order[cursor++]);
        }

        opt.zero_grad();
        double loss_acc = 0.0;
        if (is_clf) {
            Tape t;
            Tensor x = data.clf->batch(batch);
            if (neftune_alpha > 0.0f) {
                Tensor noisy = neftune_noise(x, neftune_alpha, noise_rng);
                x = noisy;
            }
            std::vector<int> labels;
            labels.reserve(batch.size());
            for (auto p : batch) labels.push_back(data.clf->y[p]);
            Tensor loss = t.cross_entropy(model.clf.forward(t, x), labels);
            t.backward(loss);
            loss_acc = loss.item();
        } else {
            // per-sequence graphs; gradients accumulate across the batch
            const float inv = 1.0f / static_cast<float>(batch.size());
            for (auto p : batch) {
                Tape t;
                LmForwardOpts opts;
                Tensor noise;
                const auto& seq = data.lm->seqs[p];
                if (neftune_alpha > 0.0f) {
                    const float bound = neftune_alpha /
                        std::sqrt(static_cast<float>(seq.size() * model.lm.tok_emb.cols()));
                    noise = draw_uniform_noise(seq.size(), model.lm.tok_emb.cols(), bound,
                                               noise_rng);
                    opts.embed_noise = &noise;
                }
                Tensor nll = sequence_nll(t, model.lm, seq, opts);
                Tensor scaled = t.scale(nll, inv);
                t.backward(scaled);
                loss_acc += static_cast<double>(nll.item()) * inv;
            }
        }
        opt.step();
        trace.step_loss.push_back(static_cast<float>(loss_acc));

        if (heldout && cfg.heldout_every > 0 && (step + 1) % cfg.heldout_every == 0) {
            double u = heldout_utility(model, *heldout);
            trace.heldout.emplace_back(step + 1, static_cast<float>(u));
        }
    }
    return trace;
}

}  // namespace pblab
