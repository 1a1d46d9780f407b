#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pblab/data.hpp"
#include "pblab/mia.hpp"
#include "pblab/rng.hpp"

namespace pblab {

// PII-style synthetic record. The secret slot (phone digits) doubles as the
// varying fill for the exposure probe's candidate space.
struct Canary {
    std::uint32_t id = 0;
    std::string text;
    std::vector<int> tokens;  // padded to the corpus sequence length
    std::string secret;       // 4-digit phone suffix
};

// n unique template-filled records, deterministic per seed.
std::vector<Canary> generate_canaries(std::size_t n, std::size_t seq_len, CounterRng rng);

// Each canary inserted exactly `reps` times at uniformly random positions.
void inject_canaries(Corpus& corpus, const std::vector<Canary>& canaries, std::size_t reps,
                     CounterRng rng);

// Same template and prefix, R candidate secrets (true one included), each as
// a padded token sequence. Candidate 0 is the true canary.
std::vector<std::vector<int>> exposure_candidates(const Canary& canary, std::size_t r,
                                                  std::size_t seq_len, CounterRng rng);

// Uniform subset without replacement of size ⌊fraction·n⌋, as sorted indices.
std::vector<std::uint32_t> sample_train_split(std::size_t n, double fraction, CounterRng rng);

struct TrialRecord {
    bool coin_head = false;
    std::uint32_t example_id = 0;
    double score = 0.0;
    bool guess_head = false;
    bool correct = false;
};

struct GameTranscript {
    std::vector<TrialRecord> trials;

    double accuracy() const;
};

// Membership-inference game trial loop. Heads sample from the member pool
// (D_target ∩ D_train), tails from the non-member pool (D_target \ D_train).
// With literal_head set, heads sample from all of D_target instead, which is
// the verbatim reading of the poisoned-game protocol.
GameTranscript play_trials(const std::vector<std::uint32_t>& member_pool,
                           const std::vector<std::uint32_t>& nonmember_pool, std::size_t trials,
                           double threshold, const std::function<double(std::uint32_t)>& score,
                           CounterRng rng, bool literal_head = false);

// Largest threshold whose false-positive rate on the calibration scores stays
// at or below fpr (guesses use score > threshold).
double calibrate_threshold(std::vector<double> nonmember_scores, double fpr);

struct AttackResult {
    std::string attack;
    std::vector<ScoreRecord> records;  // balanced member/non-member counts
    RocCurve roc;
    double auc_value = 0.5;
    double tpr_at_1fpr = 0.0;
    double tpr_at_5fpr = 0.0;
    double trial_accuracy = 0.0;
};

// Balances classes by seeded subsampling of the larger side, then derives the
// ROC and the headline metrics.
AttackResult build_attack_result(std::vector<ScoreRecord> records, CounterRng rng,
                                 const std::string& attack_name);

void write_transcript_csv(const std::string& path, const GameTranscript& transcript);

}  // namespace pblab
