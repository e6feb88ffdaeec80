#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "tabvfl/data/batches.hpp"
#include "tabvfl/data/partition.hpp"
#include "tabvfl/data/prepared.hpp"
#include "tabvfl/errors.hpp"

using namespace tabvfl;
using namespace tabvfl::data;

namespace {

DatasetSchema mixed_schema() {
  return parse_schema(R"({"age":"numerical","color":"categorical","smoker":"binary","y":"label"})");
}

RawTable read(const std::string& text, const DatasetSchema& s) {
  std::istringstream in(text);
  return read_csv(in, s, "t.csv");
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("schema parsing") {
  auto s = mixed_schema();
  REQUIRE(s.columns.size() == 4);
  CHECK(s.columns[1].kind == ColumnKind::Categorical);
  CHECK(s.label_index() == 3);
  CHECK_THROWS_AS(parse_schema(R"({"a":"numerical"})"), DataError);
  CHECK_THROWS_AS(parse_schema(R"({"a":"numerical","y":"label","z":"label"})"), DataError);
  CHECK_THROWS_AS(parse_schema(R"({"a":"ordinal","y":"label"})"), DataError);
  CHECK_THROWS_AS(parse_schema("not json"), DataError);
  CHECK(parse_schema(schema_json(s)).columns.size() == 4);
  const auto msg = error_of([] { load_schema("/nonexistent/schema.json"); });
  CHECK(msg.find("/nonexistent/schema.json") != std::string::npos);
}

TEST_CASE("csv loading") {
  const auto s = mixed_schema();
  SUBCASE("well formed") {
    auto t = read("age,color,smoker,y\n30,red,no,a\n41.5,\"blue, dark\",yes,b\n 7 ,green,no,a\n", s);
    CHECK(t.rows == 3);
    CHECK(t.columns[0].numbers == std::vector<double>{30, 41.5, 7});
    CHECK(t.columns[1].tokens[1] == "blue, dark");
    CHECK(t.label().tokens == std::vector<std::string>{"a", "b", "a"});
  }
  SUBCASE("header order follows the file") {
    auto t = read("y,age,smoker,color\na,1,no,red\n", s);
    CHECK(t.columns[0].name == "y");
    CHECK(t.columns[1].numbers[0] == 1.0);
  }
  SUBCASE("non-numeric token names row and column") {
    const auto e = error_of([&] { read("age,color,smoker,y\n30,red,no,a\nabc,red,no,a\n", s); });
    CHECK(e.find("t.csv:3") != std::string::npos);
    CHECK(e.find("'age'") != std::string::npos);
    CHECK(e.find("abc") != std::string::npos);
  }
  SUBCASE("schema mismatch") {
    CHECK_THROWS_AS(read("age,colour,smoker,y\n1,r,no,a\n", s), DataError);
    CHECK_THROWS_AS(read("age,smoker,y\n1,no,a\n", s), DataError);
  }
  SUBCASE("missing values and ragged rows") {
    const auto e = error_of([&] { read("age,color,smoker,y\n30,,no,a\n", s); });
    CHECK(e.find("missing value") != std::string::npos);
    CHECK(e.find("'color'") != std::string::npos);
    CHECK_THROWS_AS(read("age,color,smoker,y\n30,red,no\n", s), DataError);
    CHECK_THROWS_AS(read("age,color,smoker,y\n30,\"red,no,a\n", s), DataError);
  }
  SUBCASE("write then read is lossless") {
    auto t = synthetic_cross_partition(50, 12, 1);
    std::ostringstream out;
    write_csv(out, t);
    std::istringstream in(out.str());
    auto back = read_csv(in, synthetic_schema(12));
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
      CHECK(back.columns[j].numbers == t.columns[j].numbers);
      CHECK(back.columns[j].tokens == t.columns[j].tokens);
    }
  }
}

TEST_CASE("preprocessing") {
  const auto s = mixed_schema();
  auto t = read(
      "age,color,smoker,y\n10,red,no,b\n20,blue,yes,a\n30,green,no,b\n40,red,yes,a\n50,blue,no,b\n", s);
  const auto tf = fit_transform(t);
  const auto p = apply_transform(tf, t);
  SUBCASE("standard scaling") {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 5; ++i) mean += p.x(i, 0);
    mean /= 5;
    for (std::size_t i = 0; i < 5; ++i) var += (p.x(i, 0) - mean) * (p.x(i, 0) - mean);
    CHECK(std::abs(mean) <= 1e-10);
    CHECK(std::abs(std::sqrt(var / 5) - 1.0) <= 1e-8);
  }
  SUBCASE("one-hot in lexicographic order") {
    CHECK(p.x.cols() == 5);
    CHECK(p.block_widths == std::vector<std::size_t>{1, 3, 1});
    CHECK(tf.features[1].vocabulary == std::vector<std::string>{"blue", "green", "red"});
    for (std::size_t i = 0; i < 5; ++i) CHECK(p.x(i, 1) + p.x(i, 2) + p.x(i, 3) == 1.0);
    CHECK(p.x(0, 3) == 1.0);  // red
  }
  SUBCASE("binary codes") {
    CHECK(p.x(0, 4) == 0.0);  // no
    CHECK(p.x(1, 4) == 1.0);  // yes
    CHECK(p.y == std::vector<int>{1, 0, 1, 0, 1});
    CHECK(p.n_classes == 2);
  }
  SUBCASE("replay is stable and unseen categories go blank") {
    CHECK(apply_transform(tf, t).x == p.x);
    auto other = read("age,color,smoker,y\n10,purple,no,a\n", s);
    auto q = apply_transform(tf, other);
    CHECK(q.x(0, 1) + q.x(0, 2) + q.x(0, 3) == 0.0);
    CHECK_THROWS_AS(apply_transform(tf, read("age,color,smoker,y\n10,red,no,c\n", s)), DataError);
    CHECK_THROWS_AS(apply_transform(tf, read("age,color,smoker,y\n10,red,maybe,a\n", s)), DataError);
  }
  SUBCASE("constant column keeps unit scale") {
    auto c = read("age,color,smoker,y\n5,red,no,a\n5,red,no,b\n", s);
    auto tc = fit_transform(c);
    CHECK(tc.features[0].scale == 1.0);
    CHECK(apply_transform(tc, c).x(0, 0) == 0.0);
  }
  SUBCASE("numeric labels order numerically") {
    auto sch = parse_schema(R"({"a":"numerical","y":"label"})");
    auto n = read("a,y\n1,10\n2,2\n3,9\n", sch);
    CHECK(fit_transform(n).classes == std::vector<std::string>{"2", "9", "10"});
  }
  SUBCASE("manifest round trip") {
    auto back = Transform::from_json(tf.to_json());
    CHECK(apply_transform(back, t).x == p.x);
  }
}

TEST_CASE("stratified down-sampling") {
  SUBCASE("90/10 to 100") {
    std::vector<int> y(1000, 0);
    std::fill(y.begin(), y.begin() + 100, 1);
    std::mt19937_64 rng(1);
    auto idx = stratified_indices(y, 2, 100, rng);
    std::size_t ones = 0;
    for (auto i : idx) ones += y[i];
    CHECK(idx.size() == 100);
    CHECK(ones == 10);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
  }
  SUBCASE("identity at full size") {
    std::vector<int> y{0, 1, 1, 0, 2};
    std::mt19937_64 rng(1);
    auto idx = stratified_indices(y, 3, 5, rng);
    CHECK(idx == std::vector<std::size_t>{0, 1, 2, 3, 4});
  }
  SUBCASE("proportions within one sample, property") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t c = 2 + rng() % 5, n = 20 + rng() % 500;
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i < c ? i : rng() % c);
      std::vector<std::size_t> counts(c);
      for (int v : y) ++counts[v];
      const std::size_t target = c + rng() % (n - c + 1);
      std::vector<std::size_t> got(c);
      try {
        for (auto i : stratified_indices(y, c, target, rng)) ++got[y[i]];
      } catch (const DataError&) {
        continue;  // a tiny class rounded to zero
      }
      CHECK(std::accumulate(got.begin(), got.end(), std::size_t{0}) == target);
      for (std::size_t k = 0; k < c; ++k) {
        const double exact = static_cast<double>(counts[k]) * target / n;
        CHECK(std::abs(got[k] - exact) < 1.0);
      }
    }
  }
  SUBCASE("deterministic and rejects vanishing classes") {
    std::vector<int> y(100, 0);
    y[3] = 1;
    std::mt19937_64 a(5), b(5);
    CHECK(stratified_indices(y, 2, 60, a) == stratified_indices(y, 2, 60, b));
    CHECK_THROWS_AS(stratified_indices(y, 2, 10, a), DataError);
    CHECK_THROWS_AS(stratified_indices(y, 2, 101, a), DataError);
  }
}

TEST_CASE("vertical partitions") {
  SUBCASE("examples") {
    CHECK(vertical_partition(106, 5).widths() == std::vector<std::size_t>{22, 21, 21, 21, 21});
    CHECK(vertical_partition(10, 2).widths() == std::vector<std::size_t>{5, 5});
    CHECK(vertical_partition(7, 3).widths() == std::vector<std::size_t>{3, 2, 2});
    CHECK_THROWS_AS(vertical_partition(2, 3), ConfigError);
  }
  SUBCASE("disjoint and exhaustive over random shapes") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 2000; ++trial) {
      const std::size_t k = 1 + rng() % 12, n = k + rng() % 200;
      const auto p = vertical_partition(n, k);
      REQUIRE(p.ranges.size() == k);
      std::vector<int> hit(n, 0);
      std::size_t lo = n, hi = 0;
      for (const auto& r : p.ranges) {
        for (std::size_t c = r.begin; c < r.end; ++c) ++hit[c];
        lo = std::min(lo, r.size());
        hi = std::max(hi, r.size());
      }
      CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
      CHECK(hi - lo <= 1);
      CHECK(p.ranges.front().size() == hi);
    }
  }
  SUBCASE("block aware") {
    const std::vector<std::size_t> ones(7, 1);
    CHECK(vertical_partition_blocks(ones, 3) == vertical_partition(7, 3));
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t k = 1 + rng() % 5, nb = k + rng() % 20;
      std::vector<std::size_t> w(nb);
      std::size_t widest = 0;
      for (auto& v : w) widest = std::max(widest, v = 1 + rng() % 4);
      const auto p = vertical_partition_blocks(w, k);
      std::set<std::size_t> cuts{0};
      std::size_t at = 0;
      for (auto v : w) cuts.insert(at += v);
      REQUIRE(p.ranges.size() == k);
      CHECK(p.ranges.front().begin == 0);
      CHECK(p.ranges.back().end == at);
      for (std::size_t g = 0; g < k; ++g) {
        CHECK(p.ranges[g].size() > 0);
        CHECK(cuts.count(p.ranges[g].end));
        if (g) CHECK(p.ranges[g].begin == p.ranges[g - 1].end);
      }
    }
  }
  SUBCASE("apply slices columns") {
    nn::Matrix x(2, 5);
    for (std::size_t j = 0; j < 5; ++j) x(1, j) = j;
    const auto parts = vertical_partition(5, 2).apply(x);
    CHECK(parts[0].cols() == 3);
    CHECK(parts[1](1, 0) == 3.0);
  }
}

TEST_CASE("splits and batches") {
  std::mt19937_64 rng(1);
  auto s = split_indices(1000, {0.7, 0.15, 0.15}, rng);
  CHECK(s.train.size() == 700);
  CHECK(s.validation.size() == 150);
  CHECK(s.test.size() == 150);
  std::vector<std::size_t> all;
  for (auto* v : {&s.train, &s.validation, &s.test}) {
    CHECK(std::is_sorted(v->begin(), v->end()));
    all.insert(all.end(), v->begin(), v->end());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 1000; ++i) CHECK(all[i] == i);

  SUBCASE("integer rounding over many sizes") {
    for (std::size_t n = 10; n < 3000; n += 37) {
      const auto sz = split_sizes(n, std::array<double, 3>{0.7, 0.15, 0.15});
      CHECK(sz[0] + sz[1] + sz[2] == n);
      CHECK(std::abs(static_cast<double>(sz[0]) - 0.7 * n) < 1.0);
      CHECK(std::abs(static_cast<double>(sz[1]) - 0.15 * n) < 1.0);
      auto [a, b] = split_two(n, 0.7, rng);
      CHECK(std::abs(static_cast<double>(a.size()) - 0.7 * n) < 1.0);
      CHECK(a.size() + b.size() == n);
    }
    auto [a, b] = split_two(1000, 0.7, rng);
    CHECK(a.size() == 700);
    CHECK(b.size() == 300);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(split_sizes(2, std::array<double, 3>{0.7, 0.15, 0.15}), DataError);
    CHECK_THROWS_AS(split_sizes(100, std::array<double, 3>{0.7, 0.2, 0.2}), ConfigError);
  }
  SUBCASE("batches") {
    auto b = batch_ranges(130, 64);
    REQUIRE(b.size() == 3);
    CHECK(b[2].size() == 2);
    CHECK(batch_ranges(129, 64).size() == 2);  // trailing single row dropped
    CHECK(batch_ranges(129, 64, false).size() == 3);
    CHECK_THROWS_AS(batch_ranges(10, 1), ConfigError);
    CHECK(epoch_order(50, 5, false, 1) == epoch_order(50, 0, false, 1));
    CHECK(epoch_order(50, 5, true, 1) != epoch_order(50, 0, true, 1));
  }
}

TEST_CASE("prepare, cache and reload") {
  const auto raw = synthetic_cross_partition(1200, 20, 3);
  PrepareOptions o;
  o.seed = 9;
  o.target_rows = 1000;
  const auto p = prepare_dataset(raw, o);
  CHECK(p.data.rows() == 1000);
  CHECK(p.split.train.size() == 700);
  CHECK(p.data.x.cols() == 20);
  // scaled on the training rows only
  const auto tr = p.train();
  for (std::size_t j = 0; j < 20; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < tr.rows(); ++i) m += tr.x(i, j);
    CHECK(std::abs(m / tr.rows()) <= 1e-10);
  }
  const auto dir = std::filesystem::temp_directory_path() / "tabvfl_prepared_test";
  std::filesystem::remove_all(dir);
  save_prepared(p, dir);
  const auto q = load_prepared(dir);
  CHECK(q.data.x == p.data.x);
  CHECK(q.data.y == p.data.y);
  CHECK(q.split.test == p.split.test);
  CHECK(q.transform.to_json() == p.transform.to_json());
  auto bytes = [&](const char* f) {
    std::ifstream in(dir / f, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const auto m1 = bytes("manifest.json"), b1 = bytes("prepared.bin");
  save_prepared(prepare_dataset(raw, o), dir);
  CHECK(bytes("manifest.json") == m1);
  CHECK(bytes("prepared.bin") == b1);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_prepared(dir), DataError);

  SUBCASE("fixture label crosses the guest boundary") {
    const auto t = synthetic_cross_partition(4000, 20, 1);
    std::size_t ones = 0;
    for (const auto& s : t.label().tokens) ones += s == "1";
    CHECK(ones > 1800);
    CHECK(ones < 2200);
    for (std::size_t i = 0; i < 20; ++i) {
      const auto& c = t.columns;
      const bool y = c[0].numbers[i] * c[10].numbers[i] + c[1].numbers[i] * c[11].numbers[i] > 0;
      CHECK(t.label().tokens[i] == (y ? "1" : "0"));
    }
  }
}
