#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pblab/game.hpp"
#include "pblab/models.hpp"
#include "pblab/optim.hpp"

namespace pblab {

// Per-parameter relative change r_i = |θ'_i − θ_i| / (|θ_i| + ε_d) over the
// flattened parameter space, checkpoint order.
struct ParamDeltaProfile {
    std::vector<float> r;
};

inline constexpr double kDeltaEps = 1e-8;

ParamDeltaProfile relative_param_change(const ModelBundle& before, const ModelBundle& after);

// Nearest-rank percentile, q in (0, 100].
double profile_percentile(const ParamDeltaProfile& profile, double q);

// Fine-tunes one copy of the model per record. The loss skips one token
// position per record: drawn fresh each run in `random` mode (the masking
// randomness the attack cannot control), fixed from the record content in
// `fixed` mode.
enum class MaskMode { random, fixed };

struct SingleRecordFtConfig {
    std::size_t steps = 12;
    float lr = 1e-3f;
    MaskMode mask_mode = MaskMode::random;
    double percentile = 99.9;
    std::uint64_t seed = 1;
};

ModelBundle single_record_finetune(const ModelBundle& pretrained, const std::vector<int>& tokens,
                                   const SingleRecordFtConfig& cfg, std::uint64_t run_seed);

// Mean over runs of the per-run percentile of relative changes.
double calibrate_threshold(const ModelBundle& pretrained, const std::vector<std::vector<int>>& records,
                           const SingleRecordFtConfig& cfg, std::size_t threads = 1);

// { i : r_i(secret) > τ ∧ r_i(reference) ≤ τ }
std::vector<std::uint32_t> find_leaking_params(const ModelBundle& model_secret,
                                               const ModelBundle& model_reference,
                                               const ModelBundle& pretrained, double tau);

struct OverlapReport {
    std::vector<std::vector<double>> jaccard;  // pairwise
    std::size_t global_intersection = 0;
    std::vector<std::size_t> set_sizes;
};

OverlapReport overlap_across_seeds(const std::vector<std::vector<std::uint32_t>>& sets);

// Integrated-gradients attribution of p(answer) to each FFN hidden neuron of
// one block, via an m-step Riemann sum over the activation scale.
std::vector<double> neuron_attribution(const CausalLMModel& model, const std::vector<int>& prompt,
                                       std::size_t answer_pos, std::size_t block,
                                       std::size_t steps = 20);

// Coarse set: neurons above the per-prompt `q`-th percentile of attribution.
std::vector<std::uint32_t> coarse_neurons(const std::vector<double>& attribution, double q = 99.0);

// Neurons present in at least t_share of the per-prompt coarse sets.
std::vector<std::uint32_t> refine_neurons(const std::vector<std::vector<std::uint32_t>>& coarse,
                                          double t_share);

// Scales the neuron's outgoing weight row, equivalent to multiplying its
// post-GELU activation. factor must lie in [1, 20].
void amplify_neuron(ModelBundle& model, std::size_t block, std::size_t neuron, double factor);

struct ExposureReport {
    std::size_t candidates = 0;
    std::size_t rank = 0;  // 1-based, ascending NLL
    double exposure = 0.0;
};

// exposure = log₂(R) − log₂(rank of the canary among candidates by NLL)
ExposureReport exposure(const std::vector<int>& canary_tokens,
                        const std::vector<std::vector<int>>& candidates, const ModelBundle& model);

void write_overlap_csv(const std::string& path, const OverlapReport& report);

}  // namespace pblab
