#include "pblab/mia.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>

namespace pblab {

RocCurve roc_curve(const std::vector<ScoreRecord>& records) {
    std::size_t pos = 0, neg = 0;
    for (const auto& r : records) (r.is_member ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("roc_curve: need both member and non-member records");

    std::map<double, std::pair<std::size_t, std::size_t>, std::greater<double>> by_score;
    for (const auto& r : records) {
        auto& [p, n] = by_score[r.score];
        (r.is_member ? p : n)++;
    }

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    for (const auto& [score, counts] : by_score) {
        tp += counts.first;
        fp += counts.second;
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                                static_cast<double>(tp) / static_cast<double>(pos), score});
    }
    return curve;
}

double auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    return area;
}

double tpr_at_fpr(const RocCurve& curve, double fpr_target) {
    double best = 0.0;
    for (const auto& p : curve.points)
        if (p.fpr <= fpr_target + 1e-12) best = std::max(best, p.tpr);
    return best;
}

double pairwise_auc(const std::vector<ScoreRecord>& records) {
    std::vector<double> member, non;
    for (const auto& r : records) (r.is_member ? member : non).push_back(r.score);
    if (member.empty() || non.empty())
        throw std::invalid_argument("pairwise_auc: need both classes");
    double acc = 0.0;
    for (double m : member)
        for (double n : non) acc += m > n ? 1.0 : (m == n ? 0.5 : 0.0);
    return acc / (static_cast<double>(member.size()) * static_cast<double>(non.size()));
}

double logit_confidence(double p_true) {
    constexpr double eps = 1e-7;
    const double p = std::clamp(p_true, eps, 1.0 - eps);
    return std::log(p / (1.0 - p));
}

namespace {

double mean_of(std::span<const double> xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs, double mu) {
    double acc = 0.0;
    for (double x : xs) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

double log_normal_pdf(double x, double mu, double sigma) {
    constexpr double kLogSqrt2Pi = 0.9189385332046727;
    const double z = (x - mu) / sigma;
    return -std::log(sigma) - kLogSqrt2Pi - 0.5 * z * z;
}

}  // namespace

GaussianPair fit_gaussian_pair(std::span<const double> phi_in, std::span<const double> phi_out,
                               double fallback_sigma_in, double fallback_sigma_out) {
    if (phi_in.empty() || phi_out.empty())
        throw std::invalid_argument("fit_gaussian_pair: empty side");
    GaussianPair g;
    g.mu_in = mean_of(phi_in);
    g.mu_out = mean_of(phi_out);
    g.sigma_in = phi_in.size() >= 2 ? sample_std(phi_in, g.mu_in) : fallback_sigma_in;
    g.sigma_out = phi_out.size() >= 2 ? sample_std(phi_out, g.mu_out) : fallback_sigma_out;
    g.sigma_in = std::max(g.sigma_in, kSigmaFloor);
    g.sigma_out = std::max(g.sigma_out, kSigmaFloor);
    return g;
}

double lira_score(double phi_victim, const GaussianPair& fit) {
    return log_normal_pdf(phi_victim, fit.mu_in, fit.sigma_in) -
           log_normal_pdf(phi_victim, fit.mu_out, fit.sigma_out);
}

double loss_attack_score(const ModelBundle& model, const std::vector<int>& tokens) {
    return -sequence_nll_value(model.lm, tokens);
}

double loss_attack_score(const ModelBundle& model, const Tensor& x_row, int label) {
    Tape t;
    Tensor loss = t.cross_entropy(model.clf.forward(t, x_row), {label});
    return -static_cast<double>(loss.item());
}

std::vector<std::vector<std::uint8_t>> draw_shadow_masks(std::size_t n, std::size_t k,
                                                         double fraction, CounterRng rng) {
    if (k < 2) throw std::invalid_argument("draw_shadow_masks: need at least 2 shadows");
    if (fraction <= 0.0 || fraction >= 1.0)
        throw std::invalid_argument("draw_shadow_masks: fraction must be in (0,1)");
    const auto half = static_cast<std::uint32_t>(fraction * static_cast<double>(n));
    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        CounterRng draw = rng.derive(attempt);
        std::vector<std::vector<std::uint8_t>> masks(k, std::vector<std::uint8_t>(n, 0));
        for (std::size_t s = 0; s < k; ++s) {
            if (s % 2 == 1 && std::abs(fraction - 0.5) < 1e-9) {
                for (std::size_t i = 0; i < n; ++i) masks[s][i] = !masks[s - 1][i];
                continue;
            }
            for (auto i : draw.sample_indices(static_cast<std::uint32_t>(n), half))
                masks[s][i] = 1;
        }
        bool covered = true;
        for (std::size_t i = 0; i < n && covered; ++i) {
            std::size_t in = 0;
            for (std::size_t s = 0; s < k; ++s) in += masks[s][i];
            covered = in >= 1 && in <= k - 1;
        }
        if (covered) return masks;
    }
    throw std::runtime_error("draw_shadow_masks: coverage not achievable");
}

ShadowEnsemble train_shadows(const TrainData& universal, const ModelBundle& base, std::size_t K,
                             const TrainConfig& cfg, double split_fraction, CounterRng rng,
                             const std::function<void(ModelBundle&)>& init_hook,
                             std::size_t threads) {
    if (K < 2) throw std::invalid_argument("train_shadows: K must be >= 2");
    ShadowEnsemble ens;
    ens.trainer = cfg;
    ens.masks = draw_shadow_masks(universal.size(), K, split_fraction, rng.derive(1));
    ens.models.resize(K);

    std::vector<std::uint64_t> seeds(K);
    for (std::size_t s = 0; s < K; ++s) seeds[s] = rng.derive(streams::kShadow + s).seed();

    auto train_one = [&](std::size_t s) {
        std::vector<std::uint32_t> positions;
        for (std::size_t i = 0; i < universal.size(); ++i)
            if (ens.masks[s][i]) positions.push_back(static_cast<std::uint32_t>(i));
        ModelBundle shadow = base.clone();
        if (init_hook) init_hook(shadow);
        TrainConfig scfg = cfg;
        scfg.seed = seeds[s];
        if (universal.clf) {
            ClassifierDataset sub = universal.clf->subset(positions);
            train(shadow, TrainData(sub), scfg);
        } else {
            Corpus sub = universal.lm->subset(positions);
            train(shadow, TrainData(sub), scfg);
        }
        if (shadow.lora_attached()) merge_lora(shadow);
        ens.models[s] = std::move(shadow);
    };

    if (threads <= 1) {
        for (std::size_t s = 0; s < K; ++s) train_one(s);
    } else {
        const std::size_t workers = std::min(threads, K);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t)
            pool.emplace_back([&, t, workers]() {
                for (std::size_t s = t; s < K; s += workers) train_one(s);
            });
        for (auto& th : pool) th.join();
    }
    return ens;
}

void write_score_csv(const std::string& path, const std::vector<ScoreRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_score_csv: cannot open " + path);
    out << "example_id,statistic,is_member,attack_name\n";
    for (const auto& r : records)
        out << r.example_id << ',' << r.score << ',' << (r.is_member ? 1 : 0) << ',' << r.attack
            << '\n';
}

}  // namespace pblab
