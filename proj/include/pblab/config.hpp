#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pblab/channel.hpp"
#include "pblab/data.hpp"
#include "pblab/models.hpp"
#include "pblab/optim.hpp"
#include "pblab/poison.hpp"

namespace pblab {

enum class AttackKind { lira, loss };

// Everything one end-to-end run needs. The file format is nested key/value
// text (two-space indentation); see configs/ for annotated examples.
struct ExperimentConfig {
    std::string name = "classifier_game";
    ModelKind kind = ModelKind::classifier;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::uint64_t base_seed = 7;  // data, targets, pretraining
    std::string out_dir = "out";
    std::size_t threads = 0;  // 0 → hardware concurrency

    ModelConfig model;
    SyntheticClassificationSpec clf_data;
    std::size_t pretrain_set_size = 4000;
    CorpusSpec corpus;
    std::size_t pretrain_corpus_size = 1500;
    std::size_t heldout_corpus_size = 200;

    TrainConfig pretrain;
    bool poison_enabled = true;
    PoisonConfig poison;
    TrainConfig finetune;

    // game
    int threat_model = 2;
    double aux_fraction = 0.1;
    double train_fraction = 0.5;
    std::size_t target_count = 200;
    std::size_t trials = 200;
    bool head_literal = false;
    std::size_t shadows = 16;
    AttackKind attack = AttackKind::lira;
    double op_fpr = 0.05;
    std::size_t zero_shot_per_class = 10;
    bool eval_nontarget = true;

    // LM game
    std::size_t canary_count = 200;
    std::size_t canary_reps = 10;

    ChannelConfig channel;
};

ExperimentConfig default_classifier_config();
ExperimentConfig default_lm_config();

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

// One canonical "key: value" line per semantically meaningful field; both the
// config hash and the determinism tests build on it.
std::string config_canonical_string(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);  // 16 hex chars, FNV-1a

}  // namespace pblab
