#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pblab/data.hpp"
#include "pblab/models.hpp"
#include "pblab/rng.hpp"

namespace pblab {

struct AdamWConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

// Decoupled weight decay: θ ← θ − lr·(m̂/(√v̂+ε) + λθ)
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg);
    void step();       // consumes gradients currently stored on the parameters
    void zero_grad();
    std::size_t step_count() const { return t_; }
    AdamWConfig& config() { return cfg_; }

private:
    struct Slot {
        Tensor p;
        std::vector<float> m, v;
    };
    std::vector<Slot> slots_;
    AdamWConfig cfg_;
    std::size_t t_ = 0;
};

enum class Strategy { full, linear_probe, lora, qlora, neftune };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 0;
    std::size_t steps = 0;  // when nonzero, takes precedence over epochs
    std::size_t batch = 32;
    float lr = 3e-3f;
    float weight_decay = 0.0f;
    std::uint64_t seed = 1;
    bool shuffle = true;
    Strategy strategy = Strategy::full;
    std::size_t lora_rank = 8;
    float lora_scale = 0.25f;  // 2/r with the default rank
    int qlora_bits = 8;
    float neftune_alpha = 5.0f;
    std::size_t heldout_every = 0;  // 0 disables periodic held-out evaluation
};

struct LossTrace {
    std::vector<float> step_loss;
    std::vector<std::pair<std::size_t, float>> heldout;  // (step, loss)
};

// One dataset reference of either kind; exactly one pointer is set.
struct TrainData {
    const ClassifierDataset* clf = nullptr;
    const Corpus* lm = nullptr;

    TrainData() = default;
    TrainData(const ClassifierDataset& d) : clf(&d) {}
    TrainData(const Corpus& c) : lm(&c) {}
    std::size_t size() const { return clf ? clf->size() : (lm ? lm->size() : 0); }
    const std::vector<std::uint32_t>& ids() const;
};

// Deterministic given (seed, config, data). Respects the strategy's
// trainable-parameter mask; epoch order reshuffles with per-epoch derived
// seeds. For lora/qlora the adapters are attached here (and left attached).
LossTrace train(ModelBundle& model, const TrainData& data, const TrainConfig& cfg,
                const TrainData* heldout = nullptr);

// Classifier → accuracy in [0,1]; LM → mean NLL (≥ 0).
double heldout_utility(const ModelBundle& model, const TrainData& heldout);
double classifier_accuracy(const ModelBundle& model, const ClassifierDataset& ds);
double lm_mean_nll(const ModelBundle& model, const Corpus& corpus);

}  // namespace pblab
