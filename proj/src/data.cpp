#include "pblab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pblab {

// ------------------------------------------------------------- classifier

Tensor ClassifierDataset::row(std::size_t i) const {
    Tensor t(1, input_dim);
    std::memcpy(t.data(), x.data() + i * input_dim, input_dim * sizeof(float));
    return t;
}

Tensor ClassifierDataset::batch(const std::vector<std::uint32_t>& positions) const {
    Tensor t(positions.size(), input_dim);
    for (std::size_t i = 0; i < positions.size(); ++i)
        std::memcpy(t.data() + i * input_dim, x.data() + positions[i] * input_dim,
                    input_dim * sizeof(float));
    return t;
}

ClassifierDataset ClassifierDataset::subset(const std::vector<std::uint32_t>& positions) const {
    ClassifierDataset out;
    out.input_dim = input_dim;
    out.classes = classes;
    out.x.reserve(positions.size() * input_dim);
    for (auto p : positions) {
        out.x.insert(out.x.end(), x.begin() + p * input_dim, x.begin() + (p + 1) * input_dim);
        out.y.push_back(y[p]);
        out.ids.push_back(ids[p]);
    }
    return out;
}

Tensor class_means(std::size_t classes, std::size_t dim, CounterRng rng) {
    Tensor m(classes, dim);
    for (std::size_t c = 0; c < classes; ++c) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            float v = static_cast<float>(rng.gaussian());
            m.at(c, j) = v;
            norm2 += static_cast<double>(v) * v;
        }
        const float inv = static_cast<float>(1.0 / std::sqrt(std::max(norm2, 1e-30)));
        for (std::size_t j = 0; j < dim; ++j) m.at(c, j) *= inv;
    }
    return m;
}

ClassifierDataset sample_mixture(const Tensor& means, float noise, std::size_t count,
                                 CounterRng& rng, std::uint32_t first_id) {
    if (noise <= 0.0f) throw std::invalid_argument("sample_mixture: noise must be positive");
    ClassifierDataset ds;
    ds.classes = means.rows();
    ds.input_dim = means.cols();
    ds.x.resize(count * ds.input_dim);
    ds.y.resize(count);
    ds.ids.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(rng.below(ds.classes));
        ds.y[i] = label;
        ds.ids[i] = first_id + static_cast<std::uint32_t>(i);
        float* xi = ds.x.data() + i * ds.input_dim;
        const float* mu = means.data() + static_cast<std::size_t>(label) * ds.input_dim;
        for (std::size_t j = 0; j < ds.input_dim; ++j)
            xi[j] = mu[j] + noise * static_cast<float>(rng.gaussian());
    }
    return ds;
}

std::pair<ClassifierDataset, ClassifierDataset> gen_classification_data(
    const SyntheticClassificationSpec& spec, CounterRng rng) {
    if (spec.classes < 2) throw std::invalid_argument("gen_classification_data: classes < 2");
    Tensor means = class_means(spec.classes, spec.input_dim, rng.derive(1));
    CounterRng udraw = rng.derive(2);
    CounterRng hdraw = rng.derive(3);
    auto universal = sample_mixture(means, spec.class_noise, spec.universal_size, udraw, 0);
    auto heldout = sample_mixture(means, spec.class_noise, spec.heldout_size, hdraw,
                                  static_cast<std::uint32_t>(spec.universal_size));
    return {std::move(universal), std::move(heldout)};
}

// ---------------------------------------------------------------- charset

namespace {
constexpr char kCharset[65] = "abcdefghijklmnopqrstuvwxyz0123456789 .,;:@-'/()#&+!?<>$\"*=_%~[]";
}

std::size_t charset_size() { return 64; }

int encode_char(char c) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    const char* p = std::strchr(kCharset, c);
    return p && c != '\0' ? static_cast<int>(p - kCharset) : encode_char(' ');
}

char decode_char(int id) {
    if (id < 0 || id >= 64) throw std::out_of_range("decode_char: id out of range");
    return kCharset[id];
}

std::vector<int> encode_text(const std::string& text, std::size_t pad_to) {
    std::vector<int> out;
    out.reserve(std::max(text.size(), pad_to));
    for (char c : text) out.push_back(encode_char(c));
    if (pad_to > 0) {
        if (out.size() > pad_to) out.resize(pad_to);
        while (out.size() < pad_to) out.push_back(encode_char(' '));
    }
    return out;
}

std::string decode_tokens(const std::vector<int>& tokens) {
    std::string s;
    s.reserve(tokens.size());
    for (int t : tokens) s.push_back(decode_char(t));
    return s;
}

// ---------------------------------------------------------------- corpus

Corpus Corpus::subset(const std::vector<std::uint32_t>& positions) const {
    Corpus out;
    out.vocab = vocab;
    out.seq_len = seq_len;
    for (auto p : positions) {
        out.seqs.push_back(seqs[p]);
        out.ids.push_back(ids[p]);
    }
    return out;
}

MarkovSource MarkovSource::make(std::size_t vocab, std::size_t support, CounterRng& rng) {
    if (support < 1 || support > vocab)
        throw std::invalid_argument("MarkovSource: support must be in [1, vocab]");
    MarkovSource src;
    src.vocab = vocab;
    src.support = support;
    const std::size_t rows = vocab * vocab;
    src.tokens.resize(rows * support);
    src.probs.resize(rows * support);
    for (std::size_t r = 0; r < rows; ++r) {
        auto picks = rng.sample_indices(static_cast<std::uint32_t>(vocab),
                                        static_cast<std::uint32_t>(support));
        double total = 0.0;
        std::vector<double> w(support);
        for (std::size_t s = 0; s < support; ++s) {
            src.tokens[r * support + s] = static_cast<int>(picks[s]);
            w[s] = 0.2 + rng.next_double();  // keep every supported token plausible
            total += w[s];
        }
        for (std::size_t s = 0; s < support; ++s)
            src.probs[r * support + s] = static_cast<float>(w[s] / total);
    }
    return src;
}

int MarkovSource::sample(int prev2, int prev1, CounterRng& rng) const {
    const std::size_t r = (static_cast<std::size_t>(prev2) * vocab +
                           static_cast<std::size_t>(prev1)) * support;
    double u = rng.next_double();
    for (std::size_t s = 0; s < support; ++s) {
        u -= probs[r + s];
        if (u <= 0.0) return tokens[r + s];
    }
    return tokens[r + support - 1];
}

double MarkovSource::prob(int prev2, int prev1, int next) const {
    const std::size_t r = (static_cast<std::size_t>(prev2) * vocab +
                           static_cast<std::size_t>(prev1)) * support;
    for (std::size_t s = 0; s < support; ++s)
        if (tokens[r + s] == next) return probs[r + s];
    return 0.0;
}

std::vector<int> MarkovSource::sample_sequence(std::size_t len, CounterRng& rng) const {
    std::vector<int> seq(len);
    int prev2 = static_cast<int>(rng.below(vocab));
    int prev1 = static_cast<int>(rng.below(vocab));
    for (std::size_t t = 0; t < len; ++t) {
        int next = sample(prev2, prev1, rng);
        seq[t] = next;
        prev2 = prev1;
        prev1 = next;
    }
    return seq;
}

MarkovSource markov_source_for(const CorpusSpec& spec) {
    CounterRng table_rng(spec.table_seed);
    return MarkovSource::make(spec.vocab, spec.support, table_rng);
}

Corpus gen_corpus(const CorpusSpec& spec, CounterRng rng) {
    // The transition table is keyed by the spec, not the sampling rng, so
    // pretraining and fine-tuning corpora share one source distribution.
    MarkovSource src = markov_source_for(spec);
    CounterRng draw = rng.derive(2);
    Corpus corpus;
    corpus.vocab = spec.vocab;
    corpus.seq_len = spec.seq_len;
    corpus.seqs.reserve(spec.corpus_size);
    for (std::size_t i = 0; i < spec.corpus_size; ++i) {
        corpus.seqs.push_back(src.sample_sequence(spec.seq_len, draw));
        corpus.ids.push_back(static_cast<std::uint32_t>(i));
    }
    return corpus;
}

}  // namespace pblab
