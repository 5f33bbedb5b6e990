// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>

#include "moelab/model.hpp"

namespace moelab {

// Synthetic calibration corpus: a seeded random Markov chain, so the toy
// teacher has real next-token structure to learn.
struct CorpusConfig {
  std::size_t vocab_size = 0;
  std::size_t seq_len = 0;
  std::size_t n_sequences = 0;
  std::size_t markov_order = 1;  // 1 or 2
  std::uint64_t seed = 0;
  double pad_fraction = 0.0;  // in [0, 0.5); tail of each sequence masked

  void validate() const;
};

// The planted transition matrix. Rows are contexts (vocab^order), columns
// next-token probabilities; deterministic given config.seed.
Matrix transition_matrix(const CorpusConfig& config);

TokenBatch generate_corpus(const CorpusConfig& config);

// Seeded-permutation split; the halves partition the corpus.
std::pair<TokenBatch, TokenBatch> split_corpus(const TokenBatch& corpus,
                                               double calib_fraction,
                                               std::uint64_t seed = 0);

}  // namespace moelab
