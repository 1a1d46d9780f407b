#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pblab/checkpoint.hpp"
#include "pblab/data.hpp"
#include "pblab/rng.hpp"
#include "pblab/tensor.hpp"

namespace pblab {

enum class ModelKind { classifier, causal_lm };

struct ModelConfig {
    ModelKind kind = ModelKind::classifier;
    // classifier dims
    std::size_t input_dim = 32;
    std::size_t hidden_dim = 64;
    std::size_t classes = 10;
    // causal LM dims
    std::size_t vocab = 64;
    std::size_t context = 64;
    std::size_t embed_dim = 64;
    std::size_t blocks = 2;
    std::size_t heads = 4;
    std::uint64_t seed = 1;
};

// Low-rank adapter: y += scale·((x·A)·B). B starts at zero so attaching is a
// forward no-op; the frozen weight is never touched while attached.
struct LoraAdapter {
    Tensor a;  // d_in×r
    Tensor b;  // r×d_out
    float scale = 0.25f;
};

struct Linear {
    Tensor w;  // out×in
    Tensor b;  // out, may be undefined (no bias)
    std::optional<LoraAdapter> lora;

    std::size_t in_dim() const { return w.cols(); }
    std::size_t out_dim() const { return w.rows(); }
    Tensor apply(Tape& t, const Tensor& x) const;
};

struct ClassifierModel {
    std::vector<Linear> encoder;  // GELU between layers
    Linear head;                  // classes×hidden

    Tensor encode(Tape& t, const Tensor& x) const;
    Tensor forward(Tape& t, const Tensor& x) const;  // logits B×C
};

struct TransformerBlock {
    Tensor ln1_g, ln1_b;
    Linear wq, wk, wv, wo;
    Tensor ln2_g, ln2_b;
    Linear fc1, fc2;  // d→4d, 4d→d
};

// Options threaded through the LM forward pass: training-time embedding noise
// and the neuron-scaling hook used by the attribution probe.
struct LmForwardOpts {
    const Tensor* embed_noise = nullptr;  // T×d, added to embeddings
    int ffn_scale_block = -1;             // block whose GELU output is scaled
    Tensor ffn_scale;                     // length 4d
};

struct CausalLMModel {
    Tensor tok_emb;  // V×d
    Tensor pos_emb;  // T×d
    std::vector<TransformerBlock> blocks;
    Tensor lnf_g, lnf_b;
    Linear head;  // V×d, untied, no bias
    std::size_t heads = 4;

    std::size_t vocab() const { return tok_emb.rows(); }
    std::size_t context() const { return pos_emb.rows(); }
    Tensor forward(Tape& t, const std::vector<int>& tokens,
                   const LmForwardOpts& opts = {}) const;  // logits T×V
};

struct ModelBundle {
    ModelKind kind = ModelKind::classifier;
    ModelConfig config;
    ClassifierModel clf;
    CausalLMModel lm;

    static ModelBundle make(const ModelConfig& cfg);  // seeded from cfg.seed

    // Every persistent tensor, in a fixed order (checkpoint order).
    NamedTensors named_tensors() const;
    enum class TrainableSet { all, head_only, lora_only };
    std::vector<Tensor> trainable(TrainableSet set) const;
    std::vector<std::pair<std::string, Linear*>> linears();
    std::vector<std::pair<std::string, const Linear*>> linears() const;

    bool lora_attached() const;
    ModelBundle clone() const;

    void save(const std::string& path) const;
    static ModelBundle load(const std::string& path);
};

bool same_parameters(const ModelBundle& a, const ModelBundle& b);  // bitwise

// mean over positions 1..T−1 of −log p(token | prefix); scalar, differentiable
Tensor sequence_nll(Tape& t, const CausalLMModel& m, const std::vector<int>& tokens,
                    const LmForwardOpts& opts = {});
double sequence_nll_value(const CausalLMModel& m, const std::vector<int>& tokens);

// head weight ← row-normalized prototypes (C×h), bias ← 0
void init_zero_shot_head(ClassifierModel& m, const Tensor& prototypes);
// class-mean encoder outputs over a labeled subset, per_class rows each
Tensor class_prototypes(const ClassifierModel& m, const ClassifierDataset& ds,
                        std::size_t per_class, CounterRng rng);

void attach_lora(ModelBundle& m, std::size_t rank, float scale,
                 const std::vector<std::string>& targets, CounterRng rng);  // empty = all
void merge_lora(ModelBundle& m);
std::size_t lora_trainable_count(const ModelBundle& m);

Tensor draw_uniform_noise(std::size_t rows, std::size_t cols, float bound, CounterRng& rng);
// iid uniform noise in ±alpha/√(T·d) added per component; alpha = 0 is identity
Tensor neftune_noise(const Tensor& embeddings, float alpha, CounterRng& rng);

// Symmetric per-tensor round-trip quantization, bits ∈ {4, 8}.
Tensor quantize_dequantize(const Tensor& w, int bits);
void quantize_model_weights(ModelBundle& m, int bits);  // matrices + embeddings

}  // namespace pblab
