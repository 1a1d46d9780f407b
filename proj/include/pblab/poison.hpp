#pragma once

#include <cstdint>

#include "pblab/optim.hpp"

namespace pblab {

enum class PoisonDirection { maximize, minimize };

const char* poison_direction_name(PoisonDirection d);
PoisonDirection poison_direction_from_name(const std::string& name);

struct PoisonConfig {
    double alpha = 0.5;  // weight on the auxiliary (stealth) term
    PoisonDirection direction = PoisonDirection::maximize;
    std::size_t steps = 500;
    float lr = 1e-3f;
    std::size_t aux_batch = 32;
    std::size_t target_batch = 32;
    std::uint64_t seed = 1;
    // maximize direction: the target term is hinged at cap_factor·ln(C) so the
    // objective cannot diverge on desk-scale models
    float loss_cap_factor = 3.0f;
};

struct PoisonReport {
    double heldout_before = 0.0;  // accuracy (classifier) or mean NLL (LM)
    double heldout_after = 0.0;
    double target_loss_before = 0.0;
    double target_loss_after = 0.0;
    std::size_t steps_run = 0;
    bool stealthy = true;
    double utility_delta = 0.0;  // relative acc drop, or absolute NLL increase
};

// maximize: α·aux − (1−α)·target;   minimize: α·aux + (1−α)·target
double combined_poison_loss(double aux_loss, double target_loss, double alpha,
                            PoisonDirection direction);

// Each step samples one aux batch and one target batch, takes one AdamW step
// on the combined objective. Aux and target id sets must be disjoint.
PoisonReport poison_train(ModelBundle& model, const TrainData& aux, const TrainData& target,
                          const TrainData* heldout, const PoisonConfig& cfg);

// Paired utilities of two same-architecture models on a held-out set; flags
// the poisoned model non-stealthy past the given budget (relative accuracy
// drop for classifiers, absolute NLL increase for LMs).
PoisonReport stealth_report(const ModelBundle& clean, const ModelBundle& poisoned,
                            const TrainData& heldout, double budget = 0.05);

double mean_loss(const ModelBundle& model, const TrainData& data);

}  // namespace pblab
