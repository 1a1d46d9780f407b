#include "pblab/poison.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace pblab {

const char* poison_direction_name(PoisonDirection d) {
    return d == PoisonDirection::maximize ? "maximize" : "minimize";
}

PoisonDirection poison_direction_from_name(const std::string& name) {
    if (name == "maximize") return PoisonDirection::maximize;
    if (name == "minimize") return PoisonDirection::minimize;
    throw std::invalid_argument("unknown poison direction: " + name);
}

double combined_poison_loss(double aux_loss, double target_loss, double alpha,
                            PoisonDirection direction) {
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("combined_poison_loss: alpha must be in [0,1]");
    if (!std::isfinite(aux_loss) || !std::isfinite(target_loss))
        throw std::domain_error("combined_poison_loss: non-finite loss input");
    const double t = direction == PoisonDirection::maximize ? -target_loss : target_loss;
    return alpha * aux_loss + (1.0 - alpha) * t;
}

double mean_loss(const ModelBundle& model, const TrainData& data) {
    if (data.size() == 0) throw std::invalid_argument("mean_loss: empty dataset");
    if (model.kind == ModelKind::classifier) {
        double acc = 0.0;
        const std::size_t chunk = 256;
        for (std::size_t start = 0; start < data.size(); start += chunk) {
            std::vector<std::uint32_t> pos;
            std::vector<int> labels;
            for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i) {
                pos.push_back(static_cast<std::uint32_t>(i));
                labels.push_back(data.clf->y[i]);
            }
            Tape t;
            Tensor loss = t.cross_entropy(model.clf.forward(t, data.clf->batch(pos)), labels);
            acc += static_cast<double>(loss.item()) * static_cast<double>(pos.size());
        }
        return acc / static_cast<double>(data.size());
    }
    return lm_mean_nll(model, *data.lm);
}

namespace {

std::vector<std::uint32_t> draw_batch(std::size_t n, std::size_t batch, CounterRng& rng) {
    std::vector<std::uint32_t> out(batch);
    for (std::size_t i = 0; i < batch; ++i)
        out[i] = static_cast<std::uint32_t>(rng.below(n));
    return out;
}

// α·L_aux + (1−α)·T  where T = L_target (minimize) or relu(L_cap − L_target)
Tensor poison_objective(Tape& t, const Tensor& aux_loss, const Tensor& target_loss,
                        const PoisonConfig& cfg, float loss_cap) {
    Tensor target_term = cfg.direction == PoisonDirection::minimize
                             ? target_loss
                             : t.relu(t.affine(target_loss, -1.0f, loss_cap));
    return t.add(t.scale(aux_loss, static_cast<float>(cfg.alpha)),
                 t.scale(target_term, static_cast<float>(1.0 - cfg.alpha)));
}

}  // namespace

PoisonReport poison_train(ModelBundle& model, const TrainData& aux, const TrainData& target,
                          const TrainData* heldout, const PoisonConfig& cfg) {
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0)
        throw std::invalid_argument("poison_train: alpha must be in [0,1]");
    if (aux.size() == 0 || target.size() == 0)
        throw std::invalid_argument("poison_train: aux and target sets must be non-empty");
    {
        std::unordered_set<std::uint32_t> aux_ids(aux.ids().begin(), aux.ids().end());
        for (auto id : target.ids())
            if (aux_ids.count(id))
                throw std::invalid_argument("poison_train: aux and target sets overlap at id " +
                                            std::to_string(id));
    }

    PoisonReport report;
    report.target_loss_before = mean_loss(model, target);
    if (heldout) report.heldout_before = heldout_utility(model, *heldout);

    const bool is_clf = model.kind == ModelKind::classifier;
    const std::size_t out_classes =
        is_clf ? model.clf.head.out_dim() : model.lm.vocab();
    const float loss_cap =
        cfg.loss_cap_factor * std::log(static_cast<float>(out_classes));

    AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    AdamW opt(model.trainable(ModelBundle::TrainableSet::all), ocfg);
    CounterRng rng = CounterRng(cfg.seed).derive(streams::kPoison);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        auto aux_pos = draw_batch(aux.size(), cfg.aux_batch, rng);
        auto tgt_pos = draw_batch(target.size(), cfg.target_batch, rng);
        opt.zero_grad();
        if (is_clf) {
            Tape t;
            std::vector<int> aux_labels, tgt_labels;
            for (auto p : aux_pos) aux_labels.push_back(aux.clf->y[p]);
            for (auto p : tgt_pos) tgt_labels.push_back(target.clf->y[p]);
            Tensor aux_loss =
                t.cross_entropy(model.clf.forward(t, aux.clf->batch(aux_pos)), aux_labels);
            Tensor tgt_loss =
                t.cross_entropy(model.clf.forward(t, target.clf->batch(tgt_pos)), tgt_labels);
            t.backward(poison_objective(t, aux_loss, tgt_loss, cfg, loss_cap));
        } else {
            // two per-sequence passes feeding one combined scalar per batch pair
            Tape t;
            Tensor aux_sum, tgt_sum;
            for (auto p : aux_pos) {
                Tensor nll = sequence_nll(t, model.lm, aux.lm->seqs[p]);
                aux_sum = aux_sum.defined() ? t.add(aux_sum, nll) : nll;
            }
            for (auto p : tgt_pos) {
                Tensor nll = sequence_nll(t, model.lm, target.lm->seqs[p]);
                tgt_sum = tgt_sum.defined() ? t.add(tgt_sum, nll) : nll;
            }
            Tensor aux_loss = t.scale(aux_sum, 1.0f / static_cast<float>(aux_pos.size()));
            Tensor tgt_loss = t.scale(tgt_sum, 1.0f / static_cast<float>(tgt_pos.size()));
            t.backward(poison_objective(t, aux_loss, tgt_loss, cfg, loss_cap));
        }
        opt.step();
        ++report.steps_run;
    }

    report.target_loss_after = mean_loss(model, target);
    if (heldout) report.heldout_after = heldout_utility(model, *heldout);
    if (heldout) {
        if (is_clf) {
            report.utility_delta =
                report.heldout_before > 0.0
                    ? (report.heldout_before - report.heldout_after) / report.heldout_before
                    : 0.0;
            report.stealthy = report.utility_delta <= 0.05;
        } else {
            report.utility_delta = report.heldout_after - report.heldout_before;
            report.stealthy = report.utility_delta <= 0.05;
        }
    }
    return report;
}

PoisonReport stealth_report(const ModelBundle& clean, const ModelBundle& poisoned,
                            const TrainData& heldout, double budget) {
    if (clean.kind != poisoned.kind)
        throw std::invalid_argument("stealth_report: model kinds differ");
    auto ca = clean.named_tensors();
    auto pa = poisoned.named_tensors();
    if (ca.size() != pa.size())
        throw std::invalid_argument("stealth_report: architecture mismatch");
    for (std::size_t i = 0; i < ca.size(); ++i)
        if (ca[i].second.shape() != pa[i].second.shape())
            throw std::invalid_argument("stealth_report: tensor " + ca[i].first +
                                        " differs in shape");

    PoisonReport r;
    r.heldout_before = heldout_utility(clean, heldout);
    r.heldout_after = heldout_utility(poisoned, heldout);
    if (clean.kind == ModelKind::classifier) {
        r.utility_delta = r.heldout_before > 0.0
                              ? (r.heldout_before - r.heldout_after) / r.heldout_before
                              : 0.0;
    } else {
        r.utility_delta = r.heldout_after - r.heldout_before;
    }
    r.stealthy = r.utility_delta <= budget;
    return r;
}

}  // namespace pblab
