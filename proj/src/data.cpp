// SPDX-License-Identifier: Apache-2.0

#include "moelab/data.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "moelab/common.hpp"

namespace moelab {

void CorpusConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("CorpusConfig: vocab >= 2");
  if (seq_len < 2) throw std::invalid_argument("CorpusConfig: seq_len >= 2");
  if (n_sequences < 1)
    throw std::invalid_argument("CorpusConfig: n_sequences >= 1");
  if (markov_order != 1 && markov_order != 2)
    throw std::invalid_argument("CorpusConfig: markov_order must be 1 or 2");
  if (!(pad_fraction >= 0.0 && pad_fraction < 0.5))
    throw std::invalid_argument("CorpusConfig: pad_fraction in [0, 0.5)");
}

Matrix transition_matrix(const CorpusConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::size_t contexts = config.vocab_size;
  if (config.markov_order == 2) contexts *= config.vocab_size;
  Matrix t(contexts, config.vocab_size);
  for (std::size_t r = 0; r < contexts; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < config.vocab_size; ++c) {
      // Fourth power concentrates rows so the chain has low entropy and the
      // teacher has something worth learning.
      double u = rng.uniform();
      t(r, c) = u * u * u * u;
      sum += t(r, c);
    }
    for (std::size_t c = 0; c < config.vocab_size; ++c) t(r, c) /= sum;
  }
  return t;
}

TokenBatch generate_corpus(const CorpusConfig& config) {
  Matrix trans = transition_matrix(config);
  // Distinct stream for sampling so transition_matrix() stays reproducible
  // on its own.
  Rng rng(config.seed ^ 0xC0FFEE5EEDULL);

  auto sample_row = [&](std::size_t ctx) {
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t c = 0; c < config.vocab_size; ++c) {
      acc += trans(ctx, c);
      if (u < acc) return static_cast<std::uint32_t>(c);
    }
    return static_cast<std::uint32_t>(config.vocab_size - 1);
  };

  const std::size_t n_pad =
      static_cast<std::size_t>(config.pad_fraction *
                               static_cast<double>(config.seq_len));
  TokenBatch batch(config.n_sequences);
  for (Sequence& seq : batch) {
    seq.tokens.resize(config.seq_len);
    seq.mask.assign(config.seq_len, 1);
    seq.tokens[0] = static_cast<std::uint32_t>(
        rng.uniform_index(config.vocab_size));
    if (config.markov_order == 2 && config.seq_len > 1)
      seq.tokens[1] = sample_row(seq.tokens[0]);
    for (std::size_t t = config.markov_order; t < config.seq_len; ++t) {
      std::size_t ctx = seq.tokens[t - 1];
      if (config.markov_order == 2)
        ctx = seq.tokens[t - 2] * config.vocab_size + seq.tokens[t - 1];
      seq.tokens[t] = sample_row(ctx);
    }
    for (std::size_t t = config.seq_len - n_pad; t < config.seq_len; ++t)
      seq.mask[t] = 0;
  }
  return batch;
}

std::pair<TokenBatch, TokenBatch> split_corpus(const TokenBatch& corpus,
                                               double calib_fraction,
                                               std::uint64_t seed) {
  if (!(calib_fraction > 0.0 && calib_fraction < 1.0))
    throw std::invalid_argument("split_corpus: fraction must be in (0, 1)");
  const std::size_t n = corpus.size();
  const std::size_t n_calib = static_cast<std::size_t>(
      std::floor(calib_fraction * static_cast<double>(n) + 0.5));
  if (n_calib == 0 || n_calib == n)
    throw std::invalid_argument("split_corpus: degenerate split");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = rng.uniform_index(i);
    std::swap(idx[i - 1], idx[j]);
  }

  std::pair<TokenBatch, TokenBatch> out;
  for (std::size_t i = 0; i < n; ++i)
    (i < n_calib ? out.first : out.second).push_back(corpus[idx[i]]);
  return out;
}

}  // namespace moelab
