#include "pblab/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>

namespace pblab {

namespace {

Tensor gauss_tensor(std::size_t rows, std::size_t cols, float std, CounterRng& rng) {
    Tensor t(rows, cols, true);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = std * static_cast<float>(rng.gaussian());
    return t;
}

Tensor const_vector(std::size_t n, float v) {
    Tensor t = Tensor::vec(n, true);
    std::fill(t.data(), t.data() + n, v);
    return t;
}

Linear make_linear(std::size_t out, std::size_t in, CounterRng& rng, bool bias = true) {
    Linear l;
    l.w = gauss_tensor(out, in, 1.0f / std::sqrt(static_cast<float>(in)), rng);
    if (bias) l.b = const_vector(out, 0.0f);
    return l;
}

void overwrite_values(Tensor& dst, const Tensor& src) {
    if (dst.size() != src.size())
        throw std::invalid_argument("overwrite_values: size mismatch");
    std::memcpy(dst.data(), src.data(), dst.size() * sizeof(float));
}

double round_half_even(double x) {
    double fl = std::floor(x);
    double frac = x - fl;
    if (frac > 0.5) return fl + 1.0;
    if (frac < 0.5) return fl;
    return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

}  // namespace

// ---------------------------------------------------------------- Linear

Tensor Linear::apply(Tape& t, const Tensor& x) const {
    Tensor y = t.matmul_nt(x, w);
    if (b.defined()) y = t.add(y, b);
    if (lora) {
        Tensor lo = t.matmul(t.matmul(x, lora->a), lora->b);
        y = t.add(y, t.scale(lo, lora->scale));
    }
    return y;
}

// ------------------------------------------------------------ classifier

Tensor ClassifierModel::encode(Tape& t, const Tensor& x) const {
    Tensor h = x;
    for (const auto& layer : encoder) h = t.gelu(layer.apply(t, h));
    return h;
}

Tensor ClassifierModel::forward(Tape& t, const Tensor& x) const {
    return head.apply(t, encode(t, x));
}

void init_zero_shot_head(ClassifierModel& m, const Tensor& prototypes) {
    if (prototypes.rows() != m.head.out_dim() || prototypes.cols() != m.head.in_dim())
        throw std::invalid_argument("init_zero_shot_head: prototypes " + prototypes.shape_str() +
                                    " do not match head " + m.head.w.shape_str());
    Tensor w(prototypes.rows(), prototypes.cols());
    for (std::size_t c = 0; c < prototypes.rows(); ++c) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < prototypes.cols(); ++j)
            norm2 += static_cast<double>(prototypes.at(c, j)) * prototypes.at(c, j);
        if (norm2 <= 0.0)
            throw std::domain_error("init_zero_shot_head: zero-norm prototype row " +
                                    std::to_string(c));
        const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (std::size_t j = 0; j < prototypes.cols(); ++j)
            w.at(c, j) = prototypes.at(c, j) * inv;
    }
    overwrite_values(m.head.w, w);
    std::fill(m.head.b.data(), m.head.b.data() + m.head.b.size(), 0.0f);
}

Tensor class_prototypes(const ClassifierModel& m, const ClassifierDataset& ds,
                        std::size_t per_class, CounterRng rng) {
    const std::size_t C = m.head.out_dim();
    const std::size_t h = m.head.in_dim();
    std::vector<std::uint32_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    rng.shuffle(order);
    std::map<int, std::vector<std::uint32_t>> picks;
    for (auto p : order) {
        auto& v = picks[ds.y[p]];
        if (v.size() < per_class) v.push_back(p);
    }
    Tensor proto(C, h);
    for (std::size_t c = 0; c < C; ++c) {
        auto it = picks.find(static_cast<int>(c));
        if (it == picks.end() || it->second.empty())
            throw std::invalid_argument("class_prototypes: class " + std::to_string(c) +
                                        " missing from the labeled subset");
        Tape t;
        Tensor emb = m.encode(t, ds.batch(it->second));
        for (std::size_t j = 0; j < h; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < emb.rows(); ++i) acc += emb.at(i, j);
            proto.at(c, j) = static_cast<float>(acc / static_cast<double>(emb.rows()));
        }
    }
    return proto;
}

// ------------------------------------------------------------- causal LM

Tensor CausalLMModel::forward(Tape& t, const std::vector<int>& tokens,
                              const LmForwardOpts& opts) const {
    const std::size_t T = tokens.size();
    if (T == 0) throw std::invalid_argument("lm_forward: empty sequence");
    if (T > context())
        throw std::invalid_argument("lm_forward: sequence length " + std::to_string(T) +
                                    " exceeds context " + std::to_string(context()));
    for (int id : tokens)
        if (id < 0 || static_cast<std::size_t>(id) >= vocab())
            throw std::out_of_range("lm_forward: token id " + std::to_string(id) +
                                    " outside vocabulary of " + std::to_string(vocab()));
    const std::size_t d = tok_emb.cols();
    const std::size_t dh = d / heads;

    std::vector<int> positions(T);
    for (std::size_t i = 0; i < T; ++i) positions[i] = static_cast<int>(i);
    Tensor x = t.add(t.gather_rows(tok_emb, tokens), t.gather_rows(pos_emb, positions));
    if (opts.embed_noise) x = t.add(x, *opts.embed_noise);

    Tensor mask(T, T);
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = i + 1; j < T; ++j) mask.at(i, j) = -1e9f;

    const float att_scale = 1.0f / std::sqrt(static_cast<float>(dh));
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& blk = blocks[bi];
        Tensor h = t.layer_norm(x, blk.ln1_g, blk.ln1_b);
        Tensor q = blk.wq.apply(t, h);
        Tensor k = blk.wk.apply(t, h);
        Tensor v = blk.wv.apply(t, h);
        std::vector<Tensor> ctx;
        ctx.reserve(heads);
        for (std::size_t hd = 0; hd < heads; ++hd) {
            Tensor qi = t.slice_cols(q, hd * dh, (hd + 1) * dh);
            Tensor ki = t.slice_cols(k, hd * dh, (hd + 1) * dh);
            Tensor vi = t.slice_cols(v, hd * dh, (hd + 1) * dh);
            Tensor scores = t.add(t.scale(t.matmul_nt(qi, ki), att_scale), mask);
            ctx.push_back(t.matmul(t.softmax(scores), vi));
        }
        x = t.add(x, blk.wo.apply(t, t.concat_cols(ctx)));

        Tensor h2 = t.layer_norm(x, blk.ln2_g, blk.ln2_b);
        Tensor g = t.gelu(blk.fc1.apply(t, h2));
        if (opts.ffn_scale_block == static_cast<int>(bi))
            g = t.colwise_scale(g, opts.ffn_scale);
        x = t.add(x, blk.fc2.apply(t, g));
    }
    return head.apply(t, t.layer_norm(x, lnf_g, lnf_b));
}

Tensor sequence_nll(Tape& t, const CausalLMModel& m, const std::vector<int>& tokens,
                    const LmForwardOpts& opts) {
    if (tokens.size() < 2)
        throw std::invalid_argument("sequence_nll: need at least 2 tokens, got " +
                                    std::to_string(tokens.size()));
    Tensor logits = m.forward(t, tokens, opts);
    Tensor pred = t.slice_rows(logits, 0, tokens.size() - 1);
    std::vector<int> labels(tokens.begin() + 1, tokens.end());
    return t.cross_entropy(pred, labels);
}

double sequence_nll_value(const CausalLMModel& m, const std::vector<int>& tokens) {
    Tape t;
    return static_cast<double>(sequence_nll(t, m, tokens).item());
}

// ----------------------------------------------------------- ModelBundle

ModelBundle ModelBundle::make(const ModelConfig& cfg) {
    ModelBundle m;
    m.kind = cfg.kind;
    m.config = cfg;
    CounterRng rng = CounterRng(cfg.seed).derive(streams::kInit);
    if (cfg.kind == ModelKind::classifier) {
        m.clf.encoder.push_back(make_linear(cfg.hidden_dim, cfg.input_dim, rng));
        m.clf.head = make_linear(cfg.classes, cfg.hidden_dim, rng);
    } else {
        const std::size_t d = cfg.embed_dim;
        if (d % cfg.heads != 0)
            throw std::invalid_argument("ModelBundle: embed_dim must be divisible by heads");
        m.lm.heads = cfg.heads;
        m.lm.tok_emb = gauss_tensor(cfg.vocab, d, 0.02f, rng);
        m.lm.pos_emb = gauss_tensor(cfg.context, d, 0.02f, rng);
        for (std::size_t b = 0; b < cfg.blocks; ++b) {
            TransformerBlock blk;
            blk.ln1_g = const_vector(d, 1.0f);
            blk.ln1_b = const_vector(d, 0.0f);
            blk.wq = make_linear(d, d, rng);
            blk.wk = make_linear(d, d, rng);
            blk.wv = make_linear(d, d, rng);
            blk.wo = make_linear(d, d, rng);
            blk.ln2_g = const_vector(d, 1.0f);
            blk.ln2_b = const_vector(d, 0.0f);
            blk.fc1 = make_linear(4 * d, d, rng);
            blk.fc2 = make_linear(d, 4 * d, rng);
            m.lm.blocks.push_back(std::move(blk));
        }
        m.lm.lnf_g = const_vector(d, 1.0f);
        m.lm.lnf_b = const_vector(d, 0.0f);
        m.lm.head = make_linear(cfg.vocab, d, rng, /*bias=*/false);
    }
    return m;
}

NamedTensors ModelBundle::named_tensors() const {
    NamedTensors out;
    if (kind == ModelKind::classifier) {
        for (std::size_t i = 0; i < clf.encoder.size(); ++i) {
            out.emplace_back("enc." + std::to_string(i) + ".w", clf.encoder[i].w);
            out.emplace_back("enc." + std::to_string(i) + ".b", clf.encoder[i].b);
        }
        out.emplace_back("head.w", clf.head.w);
        out.emplace_back("head.b", clf.head.b);
    } else {
        out.emplace_back("tok_emb", lm.tok_emb);
        out.emplace_back("pos_emb", lm.pos_emb);
        for (std::size_t i = 0; i < lm.blocks.size(); ++i) {
            const auto& b = lm.blocks[i];
            const std::string p = "blk." + std::to_string(i) + ".";
            out.emplace_back(p + "ln1.g", b.ln1_g);
            out.emplace_back(p + "ln1.b", b.ln1_b);
            for (auto [n, l] : {std::pair<const char*, const Linear*>{"wq", &b.wq},
                                {"wk", &b.wk},
                                {"wv", &b.wv},
                                {"wo", &b.wo}}) {
                out.emplace_back(p + "attn." + n + ".w", l->w);
                out.emplace_back(p + "attn." + n + ".b", l->b);
            }
            out.emplace_back(p + "ln2.g", b.ln2_g);
            out.emplace_back(p + "ln2.b", b.ln2_b);
            out.emplace_back(p + "ffn.fc1.w", b.fc1.w);
            out.emplace_back(p + "ffn.fc1.b", b.fc1.b);
            out.emplace_back(p + "ffn.fc2.w", b.fc2.w);
            out.emplace_back(p + "ffn.fc2.b", b.fc2.b);
        }
        out.emplace_back("lnf.g", lm.lnf_g);
        out.emplace_back("lnf.b", lm.lnf_b);
        out.emplace_back("head.w", lm.head.w);
    }
    return out;
}

std::vector<std::pair<std::string, Linear*>> ModelBundle::linears() {
    std::vector<std::pair<std::string, Linear*>> out;
    if (kind == ModelKind::classifier) {
        for (std::size_t i = 0; i < clf.encoder.size(); ++i)
            out.emplace_back("enc." + std::to_string(i), &clf.encoder[i]);
        out.emplace_back("head", &clf.head);
    } else {
        for (std::size_t i = 0; i < lm.blocks.size(); ++i) {
            auto& b = lm.blocks[i];
            const std::string p = "blk." + std::to_string(i) + ".";
            out.emplace_back(p + "attn.wq", &b.wq);
            out.emplace_back(p + "attn.wk", &b.wk);
            out.emplace_back(p + "attn.wv", &b.wv);
            out.emplace_back(p + "attn.wo", &b.wo);
            out.emplace_back(p + "ffn.fc1", &b.fc1);
            out.emplace_back(p + "ffn.fc2", &b.fc2);
        }
        out.emplace_back("head", &lm.head);
    }
    return out;
}

std::vector<std::pair<std::string, const Linear*>> ModelBundle::linears() const {
    std::vector<std::pair<std::string, const Linear*>> out;
    for (auto& [n, l] : const_cast<ModelBundle*>(this)->linears()) out.emplace_back(n, l);
    return out;
}

std::vector<Tensor> ModelBundle::trainable(TrainableSet set) const {
    std::vector<Tensor> out;
    if (set == TrainableSet::lora_only) {
        for (const auto& [n, l] : linears())
            if (l->lora) {
                out.push_back(l->lora->a);
                out.push_back(l->lora->b);
            }
        if (out.empty()) throw std::logic_error("trainable: no adapters attached");
        return out;
    }
    if (set == TrainableSet::head_only) {
        const Linear& h = kind == ModelKind::classifier ? clf.head : lm.head;
        out.push_back(h.w);
        if (h.b.defined()) out.push_back(h.b);
        return out;
    }
    if (lora_attached())
        throw std::logic_error("trainable: full strategy with adapters attached");
    for (const auto& [n, t] : named_tensors()) out.push_back(t);
    return out;
}

bool ModelBundle::lora_attached() const {
    for (const auto& [n, l] : linears())
        if (l->lora) return true;
    return false;
}

ModelBundle ModelBundle::clone() const {
    ModelBundle m = *this;  // shares storage; now deep-copy every tensor
    auto deep = [](Tensor& t) {
        if (t.defined()) t = t.clone();
    };
    if (kind == ModelKind::classifier) {
        for (auto& l : m.clf.encoder) {
            deep(l.w);
            deep(l.b);
        }
        deep(m.clf.head.w);
        deep(m.clf.head.b);
    } else {
        deep(m.lm.tok_emb);
        deep(m.lm.pos_emb);
        for (auto& b : m.lm.blocks) {
            deep(b.ln1_g);
            deep(b.ln1_b);
            deep(b.wq.w);
            deep(b.wq.b);
            deep(b.wk.w);
            deep(b.wk.b);
            deep(b.wv.w);
            deep(b.wv.b);
            deep(b.wo.w);
            deep(b.wo.b);
            deep(b.ln2_g);
            deep(b.ln2_b);
            deep(b.fc1.w);
            deep(b.fc1.b);
            deep(b.fc2.w);
            deep(b.fc2.b);
        }
        deep(m.lm.lnf_g);
        deep(m.lm.lnf_b);
        deep(m.lm.head.w);
    }
    for (auto& [n, l] : m.linears())
        if (l->lora) {
            l->lora->a = l->lora->a.clone();
            l->lora->b = l->lora->b.clone();
        }
    return m;
}

bool same_parameters(const ModelBundle& a, const ModelBundle& b) {
    if (a.kind != b.kind) return false;
    auto ta = a.named_tensors();
    auto tb = b.named_tensors();
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i].first != tb[i].first) return false;
        if (ta[i].second.shape() != tb[i].second.shape()) return false;
        if (std::memcmp(ta[i].second.data(), tb[i].second.data(),
                        ta[i].second.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

// ---------------------------------------------------------- persistence

namespace {
constexpr const char* kMetaName = "__meta__";
}

void ModelBundle::save(const std::string& path) const {
    if (lora_attached())
        throw std::logic_error("ModelBundle::save: merge adapters before saving");
    NamedTensors all;
    Tensor meta = Tensor::from({kind == ModelKind::classifier ? 0.0f : 1.0f,
                                static_cast<float>(config.input_dim),
                                static_cast<float>(config.hidden_dim),
                                static_cast<float>(config.classes),
                                static_cast<float>(config.vocab),
                                static_cast<float>(config.context),
                                static_cast<float>(config.embed_dim),
                                static_cast<float>(config.blocks),
                                static_cast<float>(config.heads)});
    all.emplace_back(kMetaName, meta);
    for (auto& [n, t] : named_tensors()) all.emplace_back(n, t);
    save_checkpoint(path, all);
}

ModelBundle ModelBundle::load(const std::string& path) {
    NamedTensors all = load_checkpoint(path);
    if (all.empty() || all[0].first != kMetaName)
        throw ManifestMismatchError("model load: missing " + std::string(kMetaName) +
                                    " tensor in " + path);
    const Tensor& meta = all[0].second;
    ModelConfig cfg;
    cfg.kind = meta.at(0) == 0.0f ? ModelKind::classifier : ModelKind::causal_lm;
    cfg.input_dim = static_cast<std::size_t>(meta.at(1));
    cfg.hidden_dim = static_cast<std::size_t>(meta.at(2));
    cfg.classes = static_cast<std::size_t>(meta.at(3));
    cfg.vocab = static_cast<std::size_t>(meta.at(4));
    cfg.context = static_cast<std::size_t>(meta.at(5));
    cfg.embed_dim = static_cast<std::size_t>(meta.at(6));
    cfg.blocks = static_cast<std::size_t>(meta.at(7));
    cfg.heads = static_cast<std::size_t>(meta.at(8));
    ModelBundle m = ModelBundle::make(cfg);
    auto named = m.named_tensors();
    if (named.size() != all.size() - 1)
        throw ManifestMismatchError("model load: tensor count mismatch in " + path);
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& [name, src] = all[i + 1];
        if (name != named[i].first || src.shape() != named[i].second.shape())
            throw ManifestMismatchError("model load: unexpected tensor " + name + " in " + path);
        Tensor dst = named[i].second;
        std::memcpy(dst.data(), src.data(), src.size() * sizeof(float));
    }
    return m;
}

// ----------------------------------------------------------------- LoRA

void attach_lora(ModelBundle& m, std::size_t rank, float scale,
                 const std::vector<std::string>& targets, CounterRng rng) {
    if (rank == 0) throw std::invalid_argument("attach_lora: rank must be positive");
    auto layers = m.linears();
    auto want = [&](const std::string& name) {
        return targets.empty() || std::find(targets.begin(), targets.end(), name) != targets.end();
    };
    std::size_t matched = 0;
    for (auto& [name, l] : layers) {
        if (!want(name)) continue;
        ++matched;
        LoraAdapter ad;
        ad.a = gauss_tensor(l->in_dim(), rank, 1.0f / std::sqrt(static_cast<float>(l->in_dim())),
                            rng);
        ad.b = Tensor(rank, l->out_dim(), true);  // zero: attach is a forward no-op
        ad.scale = scale;
        l->lora = std::move(ad);
    }
    if (!targets.empty() && matched != targets.size())
        throw std::invalid_argument("attach_lora: unknown target layer in target list");
}

void merge_lora(ModelBundle& m) {
    if (!m.lora_attached()) throw std::logic_error("merge_lora: no adapters attached");
    for (auto& [name, l] : m.linears()) {
        if (!l->lora) continue;
        Tensor delta = nt::matmul(l->lora->a, l->lora->b);  // in×out
        for (std::size_t o = 0; o < l->out_dim(); ++o)
            for (std::size_t i = 0; i < l->in_dim(); ++i)
                l->w.at(o, i) += l->lora->scale * delta.at(i, o);
        l->lora.reset();
    }
}

std::size_t lora_trainable_count(const ModelBundle& m) {
    std::size_t n = 0;
    for (const auto& [name, l] : m.linears())
        if (l->lora) n += l->lora->a.size() + l->lora->b.size();
    return n;
}

// ---------------------------------------------------------------- noise

Tensor draw_uniform_noise(std::size_t rows, std::size_t cols, float bound, CounterRng& rng) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
    return t;
}

Tensor neftune_noise(const Tensor& embeddings, float alpha, CounterRng& rng) {
    if (alpha < 0.0f) throw std::invalid_argument("neftune_noise: alpha must be >= 0");
    if (alpha == 0.0f) return embeddings;
    const float bound =
        alpha / std::sqrt(static_cast<float>(embeddings.rows() * embeddings.cols()));
    Tensor noise = draw_uniform_noise(embeddings.rows(), embeddings.cols(), bound, rng);
    Tensor out(embeddings.rows(), embeddings.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = embeddings.data()[i] + noise.data()[i];
    return out;
}

// ------------------------------------------------------------- quantize

Tensor quantize_dequantize(const Tensor& w, int bits) {
    if (bits != 4 && bits != 8)
        throw std::invalid_argument("quantize_dequantize: bits must be 4 or 8");
    float mx = 0.0f;
    for (std::size_t i = 0; i < w.size(); ++i) mx = std::max(mx, std::fabs(w.data()[i]));
    Tensor out = w.clone();
    if (mx == 0.0f) return out;
    // scale kept in double so a second application reproduces the same grid
    const double levels = static_cast<double>((1 << (bits - 1)) - 1);
    const double scale = static_cast<double>(mx) / levels;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double q = round_half_even(static_cast<double>(w.data()[i]) / scale);
        q = std::clamp(q, -levels, levels);
        out.data()[i] = static_cast<float>(q * scale);
    }
    return out;
}

void quantize_model_weights(ModelBundle& m, int bits) {
    for (auto& [name, l] : m.linears()) {
        Tensor q = quantize_dequantize(l->w, bits);
        overwrite_values(l->w, q);
    }
    if (m.kind == ModelKind::causal_lm) {
        Tensor qt = quantize_dequantize(m.lm.tok_emb, bits);
        overwrite_values(m.lm.tok_emb, qt);
        Tensor qp = quantize_dequantize(m.lm.pos_emb, bits);
        overwrite_values(m.lm.pos_emb, qp);
    }
}

}  // namespace pblab
