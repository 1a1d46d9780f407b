#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pblab/rng.hpp"
#include "pblab/tensor.hpp"

namespace pblab {

// ------------------------------------------------------------- classifier

struct SyntheticClassificationSpec {
    std::size_t classes = 10;
    std::size_t input_dim = 32;
    float class_noise = 0.35f;     // within-class σ
    std::size_t universal_size = 2000;
    std::size_t heldout_size = 500;
};

struct ClassifierDataset {
    std::size_t input_dim = 0;
    std::size_t classes = 0;
    std::vector<float> x;            // row-major size()×input_dim
    std::vector<int> y;
    std::vector<std::uint32_t> ids;  // stable example ids, survive subsetting

    std::size_t size() const { return y.size(); }
    Tensor row(std::size_t i) const;
    Tensor batch(const std::vector<std::uint32_t>& positions) const;  // positions into this set
    ClassifierDataset subset(const std::vector<std::uint32_t>& positions) const;
};

// Seeded unit-norm class means, C rows of dim d.
Tensor class_means(std::size_t classes, std::size_t dim, CounterRng rng);

ClassifierDataset sample_mixture(const Tensor& means, float noise, std::size_t count,
                                 CounterRng& rng, std::uint32_t first_id = 0);

// (universal, heldout); deterministic per rng seed, disjoint draws.
std::pair<ClassifierDataset, ClassifierDataset> gen_classification_data(
    const SyntheticClassificationSpec& spec, CounterRng rng);

// ---------------------------------------------------------------- corpus

// 64-symbol character vocabulary shared by the corpus generator and canaries.
std::size_t charset_size();
int encode_char(char c);
char decode_char(int id);
std::vector<int> encode_text(const std::string& text, std::size_t pad_to = 0);
std::string decode_tokens(const std::vector<int>& tokens);

struct CorpusSpec {
    std::size_t vocab = 64;
    std::size_t seq_len = 64;
    std::size_t corpus_size = 600;
    std::size_t support = 4;  // tokens with nonzero probability per transition row
    std::uint64_t table_seed = 99;  // keys the transition table independently of sampling
};

struct Corpus {
    std::size_t vocab = 0;
    std::size_t seq_len = 0;
    std::vector<std::vector<int>> seqs;
    std::vector<std::uint32_t> ids;

    std::size_t size() const { return seqs.size(); }
    Corpus subset(const std::vector<std::uint32_t>& positions) const;
};

// Order-2 Markov source over the token vocabulary with a seeded, sparse
// transition table.
struct MarkovSource {
    std::size_t vocab = 0;
    std::size_t support = 0;
    std::vector<int> tokens;     // (vocab²·support), support token ids per (prev2,prev1)
    std::vector<float> probs;    // matching probabilities, rows sum to 1

    static MarkovSource make(std::size_t vocab, std::size_t support, CounterRng& rng);
    int sample(int prev2, int prev1, CounterRng& rng) const;
    double prob(int prev2, int prev1, int next) const;
    std::vector<int> sample_sequence(std::size_t len, CounterRng& rng) const;
};

MarkovSource markov_source_for(const CorpusSpec& spec);
Corpus gen_corpus(const CorpusSpec& spec, CounterRng rng);

}  // namespace pblab
