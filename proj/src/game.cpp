#include "pblab/game.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace pblab {

namespace {

std::string synth_word(std::size_t len, CounterRng& rng) {
    static constexpr char kCons[] = "bcdfgklmnprstvz";
    static constexpr char kVowel[] = "aeiou";
    std::string w;
    for (std::size_t i = 0; i < len; ++i)
        w.push_back(i % 2 == 0 ? kCons[rng.below(sizeof(kCons) - 1)]
                               : kVowel[rng.below(sizeof(kVowel) - 1)]);
    return w;
}

std::string digits(std::size_t len, CounterRng& rng) {
    std::string d;
    for (std::size_t i = 0; i < len; ++i) d.push_back(static_cast<char>('0' + rng.below(10)));
    return d;
}

std::string canary_text(const std::string& name, const std::string& number,
                        const std::string& street, const std::string& phone,
                        const std::string& email) {
    return name + " lives at " + number + " " + street + " st; phone " + phone + "; email " +
           email;
}

}  // namespace

std::vector<Canary> generate_canaries(std::size_t n, std::size_t seq_len, CounterRng rng) {
    std::vector<Canary> out;
    std::set<std::string> seen;
    std::size_t attempts = 0;
    while (out.size() < n) {
        if (++attempts > 100 * n + 100)
            throw std::runtime_error("generate_canaries: cannot draw enough unique records");
        Canary c;
        c.id = static_cast<std::uint32_t>(out.size());
        const std::string name = synth_word(5, rng);
        const std::string number = digits(3, rng);
        const std::string street = synth_word(5, rng);
        c.secret = digits(4, rng);
        const std::string phone = "555-" + c.secret;
        const std::string email = synth_word(3, rng) + "@" + synth_word(4, rng) + ".com";
        c.text = canary_text(name, number, street, phone, email);
        if (!seen.insert(c.text).second) continue;
        c.tokens = encode_text(c.text, seq_len);
        out.push_back(std::move(c));
    }
    return out;
}

void inject_canaries(Corpus& corpus, const std::vector<Canary>& canaries, std::size_t reps,
                     CounterRng rng) {
    if (reps < 1) throw std::invalid_argument("inject_canaries: reps must be >= 1");
    for (const auto& c : canaries) {
        for (std::size_t r = 0; r < reps; ++r) {
            const std::size_t pos = static_cast<std::size_t>(rng.below(corpus.size() + 1));
            corpus.seqs.insert(corpus.seqs.begin() + static_cast<std::ptrdiff_t>(pos), c.tokens);
            corpus.ids.insert(corpus.ids.begin() + static_cast<std::ptrdiff_t>(pos), c.id);
        }
    }
}

std::vector<std::vector<int>> exposure_candidates(const Canary& canary, std::size_t r,
                                                  std::size_t seq_len, CounterRng rng) {
    if (r < 2) throw std::invalid_argument("exposure_candidates: need at least 2 candidates");
    const std::string marker = "phone 555-";
    const auto at = canary.text.find(marker);
    if (at == std::string::npos)
        throw std::invalid_argument("exposure_candidates: canary does not carry the secret slot");
    const std::size_t secret_pos = at + marker.size();

    std::set<std::string> pool;
    pool.insert(canary.secret);
    std::size_t attempts = 0;
    while (pool.size() < r) {
        if (++attempts > 100 * r + 100)
            throw std::runtime_error("exposure_candidates: secret pool exhausted");
        pool.insert(digits(4, rng));
    }
    std::vector<std::vector<int>> out;
    out.reserve(r);
    std::string text = canary.text;
    out.push_back(canary.tokens);  // candidate 0 is the true secret
    for (const auto& s : pool) {
        if (s == canary.secret) continue;
        text.replace(secret_pos, 4, s);
        out.push_back(encode_text(text, seq_len));
    }
    return out;
}

std::vector<std::uint32_t> sample_train_split(std::size_t n, double fraction, CounterRng rng) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw std::invalid_argument("sample_train_split: fraction must be in (0,1)");
    const auto k = static_cast<std::uint32_t>(fraction * static_cast<double>(n));
    auto picks = rng.sample_indices(static_cast<std::uint32_t>(n), k);
    std::sort(picks.begin(), picks.end());
    return picks;
}

double GameTranscript::accuracy() const {
    if (trials.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& t : trials) ok += t.correct;
    return static_cast<double>(ok) / static_cast<double>(trials.size());
}

GameTranscript play_trials(const std::vector<std::uint32_t>& member_pool,
                           const std::vector<std::uint32_t>& nonmember_pool, std::size_t trials,
                           double threshold, const std::function<double(std::uint32_t)>& score,
                           CounterRng rng, bool literal_head) {
    if (member_pool.empty() || nonmember_pool.empty())
        throw std::invalid_argument("play_trials: empty member or non-member target pool");
    std::vector<std::uint32_t> head_pool = member_pool;
    if (literal_head) {
        head_pool.insert(head_pool.end(), nonmember_pool.begin(), nonmember_pool.end());
        std::sort(head_pool.begin(), head_pool.end());
    }
    GameTranscript transcript;
    transcript.trials.reserve(trials);
    for (std::size_t i = 0; i < trials; ++i) {
        TrialRecord t;
        t.coin_head = rng.below(2) == 0;
        const auto& pool = t.coin_head ? head_pool : nonmember_pool;
        t.example_id = pool[rng.below(pool.size())];
        t.score = score(t.example_id);
        t.guess_head = t.score > threshold;
        t.correct = t.guess_head == t.coin_head;
        transcript.trials.push_back(t);
    }
    return transcript;
}

double calibrate_threshold(std::vector<double> nonmember_scores, double fpr) {
    if (nonmember_scores.empty())
        throw std::invalid_argument("calibrate_threshold: empty calibration set");
    std::sort(nonmember_scores.begin(), nonmember_scores.end(), std::greater<double>());
    const auto k = static_cast<std::size_t>(fpr * static_cast<double>(nonmember_scores.size()));
    return nonmember_scores[std::min(k, nonmember_scores.size() - 1)];
}

AttackResult build_attack_result(std::vector<ScoreRecord> records, CounterRng rng,
                                 const std::string& attack_name) {
    std::vector<ScoreRecord> member, non;
    for (auto& r : records) (r.is_member ? member : non).push_back(r);
    if (member.empty() || non.empty())
        throw std::invalid_argument("build_attack_result: need both classes");
    const std::size_t n = std::min(member.size(), non.size());
    rng.shuffle(member);
    rng.shuffle(non);
    member.resize(n);
    non.resize(n);

    AttackResult result;
    result.attack = attack_name;
    result.records = member;
    result.records.insert(result.records.end(), non.begin(), non.end());
    for (auto& r : result.records) r.attack = attack_name;
    result.roc = roc_curve(result.records);
    result.auc_value = auc(result.roc);
    result.tpr_at_1fpr = tpr_at_fpr(result.roc, 0.01);
    result.tpr_at_5fpr = tpr_at_fpr(result.roc, 0.05);
    return result;
}

void write_transcript_csv(const std::string& path, const GameTranscript& transcript) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_transcript_csv: cannot open " + path);
    out << "trial,coin,example_id,score,guess,correct\n";
    for (std::size_t i = 0; i < transcript.trials.size(); ++i) {
        const auto& t = transcript.trials[i];
        out << i << ',' << (t.coin_head ? "head" : "tail") << ',' << t.example_id << ','
            << t.score << ',' << (t.guess_head ? "head" : "tail") << ',' << (t.correct ? 1 : 0)
            << '\n';
    }
}

}  // namespace pblab
