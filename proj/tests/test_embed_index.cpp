#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "raspref/embed_index.hpp"
#include "raspref/text.hpp"

using namespace raspref;

namespace {

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector(std::move(v)); }

// Independent selection oracle: score everything, full stable sort, truncate.
std::vector<SearchHit> top_k_oracle(const std::vector<IndexEntry>& index, const EmbeddingVector& q,
                                    std::size_t k) {
  std::vector<SearchHit> hits;
  for (const auto& e : index) {
    hits.push_back({e.key, cosine_similarity(e.vector, q), e.insertion_seq});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.insertion_seq < b.insertion_seq;
  });
  hits.resize(std::min(k, hits.size()));
  return hits;
}

std::vector<IndexEntry> random_index(std::size_t n, std::size_t dim, text::SplitMix64& rng) {
  std::vector<IndexEntry> index;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.next_unit() * 2.0 - 1.0;
    index.push_back({"key-" + std::to_string(i), vec(std::move(v)), i});
  }
  return index;
}

}  // namespace

TEST_CASE("cosine_similarity on fixed vectors") {
  CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_similarity(vec({3, 4}), vec({3, 4})) == doctest::Approx(1.0).epsilon(1e-12));

  // dot = 32, norms sqrt(14) and sqrt(77)
  const double expected = 32.0 / (std::sqrt(14.0) * std::sqrt(77.0));
  CHECK(expected == doctest::Approx(0.974632).epsilon(1e-6));
  CHECK(cosine_similarity(vec({1, 2, 3}), vec({4, 5, 6})) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cosine_similarity is symmetric and bounded") {
  text::SplitMix64 rng(11);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = rng.next_unit() * 4.0 - 2.0;
    for (auto& x : b) x = rng.next_unit() * 4.0 - 2.0;
    const double ab = cosine_similarity(vec(a), vec(b));
    const double ba = cosine_similarity(vec(b), vec(a));
    CHECK(ab == ba);
    CHECK(ab >= -1.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("cosine_similarity scale and antipodal invariants") {
  text::SplitMix64 rng(12);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<double> a(6);
    for (auto& x : a) x = rng.next_unit() * 2.0 - 1.0;
    double norm = 0;
    for (double x : a) norm += x * x;
    if (norm == 0.0) continue;
    const double c = 0.01 + rng.next_unit() * 99.0;
    std::vector<double> scaled(a), negated(a);
    for (auto& x : scaled) x *= c;
    for (auto& x : negated) x = -x;
    CHECK(cosine_similarity(vec(a), vec(scaled)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cosine_similarity(vec(a), vec(negated)) == doctest::Approx(-1.0).epsilon(1e-9));
  }
}

TEST_CASE("cosine_similarity rejects invalid inputs") {
  CHECK_THROWS_AS(cosine_similarity(vec({1, 2}), vec({1, 2, 3})), DimensionMismatch);
  CHECK_THROWS_AS(cosine_similarity(vec({0, 0}), vec({1, 2})), ZeroVector);
  CHECK_THROWS_AS(cosine_similarity(vec({1, 2}), vec({0, 0})), ZeroVector);
  CHECK_THROWS_AS(EmbeddingVector({1.0, std::nan("")}), OutOfRange);
}

TEST_CASE("top_k self-match and size clamping") {
  std::vector<IndexEntry> index;
  index.push_back({"a", vec({1, 0, 0}), 0});
  index.push_back({"b", vec({0, 1, 0}), 1});
  index.push_back({"c", vec({0.5, 0.5, 0}), 2});

  auto hits = top_k(index, vec({0, 1, 0}), 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].key == "b");
  CHECK(hits[0].similarity == doctest::Approx(1.0).epsilon(1e-12));

  // k larger than the index returns everything.
  hits = top_k(index, vec({0, 1, 0}), 10);
  CHECK(hits.size() == 3);
}

TEST_CASE("top_k breaks ties by insertion order") {
  std::vector<IndexEntry> index;
  index.push_back({"later-dup", vec({2, 0}), 5});
  index.push_back({"first-dup", vec({1, 0}), 1});
  // Both are exactly aligned with the query, so similarity ties at 1.0.
  auto hits = top_k(index, vec({3, 0}), 2);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].key == "first-dup");
  CHECK(hits[1].key == "later-dup");
}

TEST_CASE("top_k rejects invalid arguments") {
  std::vector<IndexEntry> index;
  index.push_back({"a", vec({1, 0}), 0});
  CHECK_THROWS_AS(top_k(index, vec({1, 0, 0}), 1), DimensionMismatch);
  CHECK_THROWS_AS(top_k(index, vec({1, 0}), 0), Precondition);
}

TEST_CASE("top_k equals the full-scan oracle on random indices") {
  text::SplitMix64 rng(99);
  for (std::size_t n : {1u, 7u, 64u, 333u, 1000u}) {
    auto index = random_index(n, 16, rng);
    std::vector<double> qv(16);
    for (auto& x : qv) x = rng.next_unit() * 2.0 - 1.0;
    const auto q = vec(qv);
    for (std::size_t k : {1u, 3u, 50u}) {
      auto got = top_k(index, q, k);
      auto expected = top_k_oracle(index, q, k);
      REQUIRE(got.size() == expected.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].key == expected[i].key);
        CHECK(got[i].similarity == expected[i].similarity);
      }
    }
  }
}
