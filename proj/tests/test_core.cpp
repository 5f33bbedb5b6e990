// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "moelab/common.hpp"
#include "moelab/data.hpp"
#include "moelab/diagnostics.hpp"
#include "moelab/kernels.hpp"
#include "moelab/model.hpp"
#include "moelab/tensor.hpp"
#include "moelab/threading.hpp"

using namespace moelab;
namespace fs = std::filesystem;

namespace {

// Independent high-precision softmax for cross-checking.
std::vector<double> softmax_oracle(const std::vector<double>& z, double tau) {
  long double m = z[0];
  for (double v : z) m = std::max<long double>(m, v);
  std::vector<long double> e(z.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = expl((static_cast<long double>(z[i]) - m) / tau);
    sum += e[i];
  }
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    out[i] = static_cast<double>(e[i] / sum);
  return out;
}

// Sort-based top-k reference with the same tie rule (lower index wins).
std::vector<std::size_t> topk_oracle(const std::vector<double>& s,
                                     std::size_t k) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return a < b;
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Symmetric Jacobi eigensolver, used as an SVD oracle through W^T W.
std::vector<double> eigenvalues_jacobi(Matrix a) {
  const std::size_t n = a.rows;
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("rng is deterministic and in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng c(43);
  CHECK(Rng(42).next_u64() != c.next_u64());
}

TEST_CASE("softmax matches high-precision oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + rng.uniform_index(30);
    std::vector<double> z(n);
    for (double& v : z) v = rng.uniform(-30.0, 30.0);
    double tau = rng.uniform(0.1, 4.0);
    ProbVector p = softmax(z, tau);
    auto q = softmax_oracle(z, tau);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(p[i] - q[i]) < 1e-12);
  }
  CHECK_THROWS_AS(softmax({1.0, 2.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax({1.0, 2.0}, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax({1.0, std::nan("")}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax({}, 1.0), std::invalid_argument);
}

TEST_CASE("softmax is invariant under logit shifts") {
  std::vector<double> z{1.0, -2.0, 0.5, 3.0};
  ProbVector a = softmax(z, 1.0);
  for (double& v : z) v += 1000.0;
  ProbVector b = softmax(z, 1.0);
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("top_k matches sort oracle including ties") {
  Rng rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    std::size_t n = 1 + rng.uniform_index(12);
    std::size_t k = 1 + rng.uniform_index(n);
    std::vector<double> s(n);
    for (double& v : s) v = static_cast<double>(rng.uniform_index(4));  // ties
    CHECK(top_k(s, k) == topk_oracle(s, k));
  }
  CHECK(top_k({0.5, 0.5, 0.5}, 2) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("kl divergence basics") {
  ProbVector p({0.2, 0.3, 0.5});
  CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-12));
  ProbVector q({0.5, 0.3, 0.2});
  long double ref = 0.2L * logl(0.2L / 0.5L) + 0.3L * logl(0.3L / 0.3L) +
                    0.5L * logl(0.5L / 0.2L);
  CHECK(kl_divergence(p, q) ==
        doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
  CHECK(kl_divergence(p, q) >= 0.0);
  // 0 * ln 0 = 0
  ProbVector z({0.0, 1.0});
  CHECK(std::isfinite(kl_divergence(z, ProbVector({0.5, 0.5}))));
}

TEST_CASE("prob vector validates") {
  CHECK_THROWS_AS(ProbVector({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(ProbVector({-0.1, 1.1}), std::invalid_argument);
}

TEST_CASE("kernel variants are bit-identical") {
  Rng rng(3);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 64u, 129u, 1000u}) {
    std::vector<double> a(n), b(n), y1(n, 0.5), y2(n, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(-2.0, 2.0);
      b[i] = rng.uniform(-2.0, 2.0);
    }
    double ds = kernels::detail::dot_scalar(a.data(), b.data(), n);
    double dv = kernels::detail::dot_avx2(a.data(), b.data(), n);
    CHECK(ds == dv);
    kernels::detail::axpy_scalar(1.7, a.data(), y1.data(), n);
    kernels::detail::axpy_avx2(1.7, a.data(), y2.data(), n);
    CHECK(y1 == y2);
    CHECK(kernels::dot(a.data(), b.data(), n) == ds);
  }
  CHECK((kernels::backend() == "scalar" || kernels::backend() == "avx2"));
}

TEST_CASE("matvec agrees with a naive loop") {
  Rng rng(4);
  Matrix w = random_matrix(7, 13, rng);
  std::vector<double> x(13), y(7);
  for (double& v : x) v = rng.normal();
  kernels::matvec(w.data.data(), 7, 13, x.data(), y.data());
  for (std::size_t r = 0; r < 7; ++r) {
    long double acc = 0.0L;
    for (std::size_t c = 0; c < 13; ++c) acc += (long double)w(r, c) * x[c];
    CHECK(y[r] == doctest::Approx(static_cast<double>(acc)).epsilon(1e-12));
  }
  // transposed accumulate and outer product
  std::vector<double> v(7), yt(13, 0.0), yt_ref(13, 0.0);
  for (double& q : v) q = rng.normal();
  kernels::matvec_t_acc(w.data.data(), 7, 13, v.data(), yt.data());
  for (std::size_t c = 0; c < 13; ++c) {
    long double acc = 0.0L;
    for (std::size_t r = 0; r < 7; ++r) acc += (long double)v[r] * w(r, c);
    CHECK(yt[c] == doctest::Approx(static_cast<double>(acc)).epsilon(1e-12));
  }
  Matrix g(7, 13);
  kernels::outer_acc(v.data(), 7, x.data(), 13, g.data.data());
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 13; ++c)
      CHECK(g(r, c) == doctest::Approx(v[r] * x[c]).epsilon(1e-14));
}

TEST_CASE("truncated svd vs eigensolver oracle") {
  Rng rng(5);
  for (auto [r, c] : std::vector<std::pair<std::size_t, std::size_t>>{
           {6, 6}, {8, 5}, {5, 8}, {12, 3}, {3, 12}}) {
    Matrix w = random_matrix(r, c, rng);
    const std::size_t full = std::min(r, c);

    // Gram eigenvalues = squared singular values.
    Matrix gram(c, c);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        long double acc = 0.0L;
        for (std::size_t k = 0; k < r; ++k)
          acc += (long double)w(k, i) * w(k, j);
        gram(i, j) = static_cast<double>(acc);
      }
    std::vector<double> ev = eigenvalues_jacobi(gram);

    for (std::size_t rank = 1; rank <= full; ++rank) {
      SvdResult svd = truncated_svd(w, rank);
      REQUIRE(svd.s.size() == rank);
      for (std::size_t i = 0; i + 1 < rank; ++i) CHECK(svd.s[i] >= svd.s[i + 1]);
      for (double s : svd.s) CHECK(s >= 0.0);
      for (std::size_t i = 0; i < rank; ++i)
        CHECK(svd.s[i] * svd.s[i] ==
              doctest::Approx(ev[i]).epsilon(1e-8).scale(1.0));

      // Orthonormal columns.
      for (std::size_t i = 0; i < rank; ++i)
        for (std::size_t j = 0; j < rank; ++j) {
          double uu = 0.0, vv = 0.0;
          for (std::size_t k = 0; k < r; ++k) uu += svd.u(k, i) * svd.u(k, j);
          for (std::size_t k = 0; k < c; ++k) vv += svd.v(k, i) * svd.v(k, j);
          CHECK(std::abs(uu - (i == j ? 1.0 : 0.0)) < 1e-9);
          CHECK(std::abs(vv - (i == j ? 1.0 : 0.0)) < 1e-9);
        }

      // Tail-energy identity for the reconstruction error.
      double tail = 0.0;
      for (std::size_t i = rank; i < full; ++i) tail += std::max(0.0, ev[i]);
      double err = frobenius_norm_diff(w, svd_reconstruct(svd));
      CHECK(std::abs(err - std::sqrt(tail)) < 1e-8);
    }
    SvdResult fullsvd = truncated_svd(w, full);
    CHECK(frobenius_norm_diff(w, svd_reconstruct(fullsvd)) < 1e-9);
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  ModelConfig cfg{.vocab_size = 17,
                  .d_model = 6,
                  .d_ff = 9,
                  .n_layers = 2,
                  .n_experts = 4,
                  .top_k = 2,
                  .seed = 11};
  MoEModel m = init_model(cfg);
  fs::path dir = fs::temp_directory_path() / "moelab_test_ckpt";
  fs::create_directories(dir);
  std::string p1 = (dir / "a.moec").string();
  std::string p2 = (dir / "b.moec").string();

  save_checkpoint(m, p1);
  MoEModel loaded = load_checkpoint(p1);
  CHECK(loaded == m);
  save_checkpoint(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));

  // Truncations at every prefix length of a small file must all be rejected.
  std::string bytes = slurp(p1);
  std::string pt = (dir / "t.moec").string();
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{10},
                          bytes.size() / 2, bytes.size() - 1}) {
    std::ofstream(pt, std::ios::binary).write(bytes.data(), len);
    CHECK_THROWS_AS(load_checkpoint(pt), format_error);
  }
  // Bad magic.
  std::string corrupt = bytes;
  corrupt[0] = 'X';
  std::ofstream(pt, std::ios::binary).write(corrupt.data(), corrupt.size());
  CHECK_THROWS_AS(load_checkpoint(pt), format_error);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.moec").string()),
                  format_error);
  fs::remove_all(dir);
}

TEST_CASE("corpus matches planted markov statistics") {
  CorpusConfig cc{.vocab_size = 8,
                  .seq_len = 64,
                  .n_sequences = 1500,
                  .markov_order = 1,
                  .seed = 9,
                  .pad_fraction = 0.0};
  Matrix trans = transition_matrix(cc);
  REQUIRE(trans.rows == 8);
  for (std::size_t r = 0; r < 8; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 8; ++c) {
      CHECK(trans(r, c) >= 0.0);
      s += trans(r, c);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  TokenBatch corpus = generate_corpus(cc);
  REQUIRE(corpus.size() == 1500);
  CHECK(generate_corpus(cc)[13].tokens == corpus[13].tokens);

  // Empirical bigram conditionals within 0.02 total-variation of planted rows.
  Matrix counts(8, 8);
  for (const Sequence& s : corpus)
    for (std::size_t t = 0; t + 1 < s.tokens.size(); ++t)
      counts(s.tokens[t], s.tokens[t + 1]) += 1.0;
  for (std::size_t r = 0; r < 8; ++r) {
    double n = 0.0;
    for (std::size_t c = 0; c < 8; ++c) n += counts(r, c);
    REQUIRE(n > 100);
    double tv = 0.0;
    for (std::size_t c = 0; c < 8; ++c)
      tv += std::abs(counts(r, c) / n - trans(r, c));
    CHECK(tv / 2.0 < 0.02);
  }
}

TEST_CASE("padding mask covers exactly the tail") {
  CorpusConfig cc{.vocab_size = 8,
                  .seq_len = 20,
                  .n_sequences = 5,
                  .markov_order = 1,
                  .seed = 3,
                  .pad_fraction = 0.25};
  for (const Sequence& s : generate_corpus(cc)) {
    REQUIRE(s.mask.size() == 20);
    std::size_t masked = 0;
    for (std::size_t t = 0; t < 20; ++t) masked += s.mask[t] == 0;
    CHECK(masked == 5);
    for (std::size_t t = 0; t < 15; ++t) CHECK(s.mask[t] == 1);
    for (std::size_t t = 15; t < 20; ++t) CHECK(s.mask[t] == 0);
  }
  CHECK_THROWS_AS(
      (CorpusConfig{.vocab_size = 8, .seq_len = 20, .n_sequences = 5,
                    .markov_order = 3, .seed = 0, .pad_fraction = 0.0}
           .validate()),
      std::invalid_argument);
}

TEST_CASE("split_corpus partitions deterministically") {
  CorpusConfig cc{.vocab_size = 6, .seq_len = 8, .n_sequences = 10,
                  .markov_order = 1, .seed = 1, .pad_fraction = 0.0};
  TokenBatch corpus = generate_corpus(cc);
  auto [calib, held] = split_corpus(corpus, 0.3, 5);
  CHECK(calib.size() == 3);
  CHECK(held.size() == 7);
  auto [c2, h2] = split_corpus(corpus, 0.3, 5);
  CHECK(c2[0].tokens == calib[0].tokens);
  CHECK_THROWS_AS(split_corpus(corpus, 0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(split_corpus(corpus, 1.0, 5), std::invalid_argument);
}

TEST_CASE("gate weights renormalize and selection has size k") {
  Rng rng(6);
  ModelConfig cfg{.vocab_size = 11, .d_model = 8, .d_ff = 6, .n_layers = 1,
                  .n_experts = 8, .top_k = 3, .seed = 21};
  MoEModel m = init_model(cfg);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(8);
    for (double& v : x) v = rng.normal();
    auto [y, trace] = moe_layer_forward(m.layers[0], x);
    REQUIRE(trace.selected.size() == 3);
    CHECK(std::is_sorted(trace.selected.begin(), trace.selected.end()));
    double s = 0.0;
    for (double w : trace.weights) s += w;
    CHECK(std::abs(s - 1.0) < 1e-9);
    double gs = 0.0;
    for (double g : trace.scores) gs += g;
    CHECK(std::abs(gs - 1.0) < 1e-9);
  }
}

TEST_CASE("moe layer matches dense enumeration oracle") {
  Rng rng(7);
  ModelConfig cfg{.vocab_size = 5, .d_model = 10, .d_ff = 7, .n_layers = 1,
                  .n_experts = 6, .top_k = 2, .seed = 33};
  MoEModel m = init_model(cfg);
  const MoELayer& layer = m.layers[0];
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(10);
    for (double& v : x) v = rng.normal();
    auto [y, trace] = moe_layer_forward(layer, x, true);

    // From-scratch reference: logits, softmax, top-2, renorm, weighted sum.
    std::vector<double> logits(6);
    for (std::size_t e = 0; e < 6; ++e) {
      long double acc = 0.0L;
      for (std::size_t d = 0; d < 10; ++d)
        acc += (long double)layer.router(e, d) * x[d];
      logits[e] = static_cast<double>(acc);
    }
    auto probs = softmax_oracle(logits, 1.0);
    auto sel = topk_oracle(probs, 2);
    double denom = probs[sel[0]] + probs[sel[1]];
    std::vector<double> ref(10, 0.0);
    for (std::size_t j = 0; j < 2; ++j) {
      const ExpertWeights& ew = layer.experts[sel[j]];
      std::vector<double> pre(7, 0.0), out(10, 0.0);
      for (std::size_t f = 0; f < 7; ++f)
        for (std::size_t d = 0; d < 10; ++d) pre[f] += ew.w_in(f, d) * x[d];
      for (double& v : pre) v = v / (1.0 + std::exp(-v));  // silu
      for (std::size_t d = 0; d < 10; ++d)
        for (std::size_t f = 0; f < 7; ++f) out[d] += ew.w_out(d, f) * pre[f];
      for (std::size_t d = 0; d < 10; ++d)
        ref[d] += probs[sel[j]] / denom * out[d];
    }
    CHECK(trace.selected == sel);
    for (std::size_t d = 0; d < 10; ++d) {
      CHECK(std::abs(trace.moe_output[d] - ref[d]) < 1e-10);
      CHECK(std::abs(y[d] - (x[d] + ref[d])) < 1e-10);  // residual
    }
  }
}

TEST_CASE("forward is independent of thread count") {
  ModelConfig cfg{.vocab_size = 12, .d_model = 6, .d_ff = 5, .n_layers = 2,
                  .n_experts = 4, .top_k = 2, .seed = 44};
  MoEModel m = init_model(cfg);
  CorpusConfig cc{.vocab_size = 12, .seq_len = 10, .n_sequences = 6,
                  .markov_order = 1, .seed = 2, .pad_fraction = 0.0};
  TokenBatch corpus = generate_corpus(cc);
  set_max_threads(1);
  ForwardResult a = forward(m, corpus);
  set_max_threads(4);
  ForwardResult b = forward(m, corpus);
  set_max_threads(0);
  REQUIRE(a.logits.size() == b.logits.size());
  for (std::size_t i = 0; i < a.logits.size(); ++i)
    CHECK(a.logits[i] == b.logits[i]);
}

TEST_CASE("parallel_map preserves index order") {
  set_max_threads(3);
  auto v = parallel_map<int>(100, [](std::size_t i) {
    return static_cast<int>(i * i);
  });
  set_max_threads(0);
  for (int i = 0; i < 100; ++i) CHECK(v[i] == i * i);
}

TEST_CASE("routing space size") {
  CHECK(routing_space_size(8, 2) == 28);
  CHECK(routing_space_size(128, 8) == 1429702652400ULL);
  CHECK(routing_space_size(5, 0) == 1);
  CHECK(routing_space_size(5, 5) == 1);
  CHECK_THROWS_AS(routing_space_size(4, 5), std::invalid_argument);
}

TEST_CASE("diagnostics on identical traces") {
  ModelConfig cfg{.vocab_size = 9, .d_model = 6, .d_ff = 4, .n_layers = 2,
                  .n_experts = 4, .top_k = 2, .seed = 55};
  MoEModel m = init_model(cfg);
  CorpusConfig cc{.vocab_size = 9, .seq_len = 12, .n_sequences = 4,
                  .markov_order = 1, .seed = 8, .pad_fraction = 0.0};
  TokenBatch corpus = generate_corpus(cc);
  ForwardResult f = forward(m, corpus);
  auto l1 = routing_l1(f.trace, f.trace);
  auto ov = topk_overlap(f.trace, f.trace);
  for (double v : l1) CHECK(v == 0.0);
  for (double v : ov) CHECK(v == 1.0);
  auto h = routing_entropy(f.trace);
  REQUIRE(h.size() == 2);
  for (double v : h) {
    CHECK(v >= 0.0);
    CHECK(v <= std::log(4.0) + 1e-9);
  }
}

TEST_CASE("emit_report writes deterministic csv") {
  std::vector<LayerReport> reports{{0.125, 0.875, 1.5, 100},
                                   {0.25, 0.75, 1.25, 100}};
  fs::path d1 = fs::temp_directory_path() / "moelab_rep1";
  fs::path d2 = fs::temp_directory_path() / "moelab_rep2";
  emit_report(reports, d1.string(), "{}");
  emit_report(reports, d2.string(), "{}");
  for (const char* f : {"l1.csv", "overlap.csv", "entropy.csv", "summary.json"})
    CHECK(slurp((d1 / f).string()) == slurp((d2 / f).string()));
  std::string l1 = slurp((d1 / "l1.csv").string());
  CHECK(l1 == "layer,value,token_count\n0,0.125,100\n1,0.25,100\n");

  // Empty report list: header-only files.
  fs::path d3 = fs::temp_directory_path() / "moelab_rep3";
  emit_report({}, d3.string(), "{}");
  CHECK(slurp((d3 / "overlap.csv").string()) == "layer,value,token_count\n");
  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
}
