#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pblab/optim.hpp"

namespace pblab {

struct ScoreRecord {
    std::uint32_t example_id = 0;
    double score = 0.0;
    bool is_member = false;
    std::string attack;
};

struct RocPoint {
    double fpr = 0.0, tpr = 0.0, threshold = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // threshold descending; (0,0) first, (1,1) last
};

// Threshold sweep over unique scores, descending; ties enter together.
RocCurve roc_curve(const std::vector<ScoreRecord>& records);
double auc(const RocCurve& curve);  // trapezoid; equals tie-aware pair counting
// Max TPR among sweep points with FPR ≤ target; no interpolation.
double tpr_at_fpr(const RocCurve& curve, double fpr_target = 0.01);

// Test oracle used in the metric suite; O(members·non-members).
double pairwise_auc(const std::vector<ScoreRecord>& records);

// φ = log(p̃/(1−p̃)), p̃ clamped to [ε, 1−ε] with ε = 1e-7
double logit_confidence(double p_true);

struct GaussianPair {
    double mu_in = 0.0, sigma_in = 1.0;
    double mu_out = 0.0, sigma_out = 1.0;
};

inline constexpr double kSigmaFloor = 1e-3;

// Sample means / unbiased stds per side; a side with fewer than two samples
// falls back to the supplied pooled sigma. Sigmas are floored.
GaussianPair fit_gaussian_pair(std::span<const double> phi_in, std::span<const double> phi_out,
                               double fallback_sigma_in, double fallback_sigma_out);

// log N(φ; μ_in, σ_in) − log N(φ; μ_out, σ_out); higher ⇒ more likely member
double lira_score(double phi_victim, const GaussianPair& fit);

// −sequence_nll for LMs, −cross_entropy for classifiers; higher ⇒ member
double loss_attack_score(const ModelBundle& model, const std::vector<int>& tokens);
double loss_attack_score(const ModelBundle& model, const Tensor& x_row, int label);

struct ShadowEnsemble {
    std::vector<ModelBundle> models;
    std::vector<std::vector<std::uint8_t>> masks;  // K × N over universal positions
    TrainConfig trainer;

    std::size_t size() const { return models.size(); }
};

// K shadows trained from `base` on random halves of the universal set. Shadows
// are drawn as complementary pairs, so every example is IN for some shadow and
// OUT for another; an explicit coverage check resamples if ever violated.
// `init_hook` replays the victim pipeline's initialization on each clone.
ShadowEnsemble train_shadows(const TrainData& universal, const ModelBundle& base, std::size_t K,
                             const TrainConfig& cfg, double split_fraction, CounterRng rng,
                             const std::function<void(ModelBundle&)>& init_hook = {},
                             std::size_t threads = 1);

std::vector<std::vector<std::uint8_t>> draw_shadow_masks(std::size_t n, std::size_t k,
                                                         double fraction, CounterRng rng);

// CSV with header example_id,statistic,is_member,attack_name
void write_score_csv(const std::string& path, const std::vector<ScoreRecord>& records);

}  // namespace pblab
