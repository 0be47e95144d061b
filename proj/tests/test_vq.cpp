#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "vqrl/rng.hpp"
#include "vqrl/vq.hpp"

using namespace vqrl;
using vq::Batch;
using vq::PerDimCodebooks;
using vq::Vec;

namespace {

PerDimCodebooks make_cb(std::vector<Vec> rows) {
  PerDimCodebooks cb;
  cb.D = rows.size();
  cb.K = rows.front().size();
  cb.items = std::move(rows);
  return cb;
}

/// Independent Lloyd iteration: alternate nearest-assignment and
/// cluster-mean moves until fixed point.
Vec lloyd_1d(Vec items, const Vec& data, int iters) {
  for (int it = 0; it < iters; ++it) {
    Vec sum(items.size(), 0.0), cnt(items.size(), 0.0);
    for (double x : data) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < items.size(); ++k) {
        if (std::abs(x - items[k]) < std::abs(x - items[best])) best = k;
      }
      sum[best] += x;
      cnt[best] += 1.0;
    }
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (cnt[k] > 0.0) items[k] = sum[k] / cnt[k];
    }
  }
  return items;
}

}  // namespace

TEST_CASE("quantile init: uniform data, K=2 -> {0.25, 0.75}") {
  Rng rng(42);
  Batch warmup(5000, Vec(1));
  for (auto& row : warmup) row[0] = rng.uniform();
  auto cb = vq::init_codebooks(warmup, 2);
  CHECK(cb.items[0][0] == doctest::Approx(0.25).epsilon(0.2));
  CHECK(std::abs(cb.items[0][0] - 0.25) < 0.05);
  CHECK(std::abs(cb.items[0][1] - 0.75) < 0.05);
}

TEST_CASE("quantile init: K=1 is the median") {
  Batch warmup{{1.0}, {2.0}, {3.0}, {100.0}, {4.0}};
  auto cb = vq::init_codebooks(warmup, 1);
  CHECK(cb.items[0][0] == doctest::Approx(3.0));
}

TEST_CASE("quantile init: constant dimension collapses with warning") {
  Batch warmup(10, Vec{0.0, 1.0});
  vq::InitReport report;
  auto cb = vq::init_codebooks(warmup, 4, false, &report);
  for (double v : cb.items[0]) CHECK(v == 0.0);
  REQUIRE(report.constant_dims.size() == 2);  // both dims are constant here
  CHECK(report.has_warnings());
}

TEST_CASE("quantize picks nearest item") {
  auto cb = make_cb({{-1.0, 0.0, 1.0}});
  auto q = vq::quantize(Vec{0.6}, cb);
  CHECK(q.values[0] == 1.0);
  CHECK(q.assignments[0] == 2);
}

TEST_CASE("quantize tie breaks toward the lower index") {
  auto cb = make_cb({{0.0, 1.0}});
  auto q = vq::quantize(Vec{0.5}, cb);
  CHECK(q.values[0] == 0.0);
  CHECK(q.assignments[0] == 0);
}

TEST_CASE("quantize of an item vector is the identity") {
  auto cb = make_cb({{-1.0, 0.5, 2.0}, {0.0, 3.0, 7.0}});
  auto q = vq::quantize(Vec{0.5, 3.0}, cb);
  CHECK(q.values[0] == 0.5);
  CHECK(q.values[1] == 3.0);
}

TEST_CASE("quantize rejects non-finite input naming the dimension") {
  auto cb = make_cb({{0.0}, {0.0}});
  try {
    vq::quantize(Vec{0.0, std::nan("")}, cb);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("dimension 1") != std::string::npos);
  }
}

TEST_CASE("quantize is idempotent") {
  Rng rng(9);
  Batch warmup(500, Vec(3));
  for (auto& row : warmup)
    for (double& v : row) v = rng.normal();
  auto cb = vq::init_codebooks(warmup, 8);
  for (int i = 0; i < 1000; ++i) {
    Vec s{rng.normal() * 2.0, rng.normal() * 2.0, rng.normal() * 2.0};
    auto q1 = vq::quantize(s, cb);
    auto q2 = vq::quantize(q1.values, cb);
    CHECK(q1.values == q2.values);
    CHECK(q1.assignments == q2.assignments);
  }
}

TEST_CASE("straight_through passes the upstream gradient unchanged") {
  auto cb = make_cb({{0.0, 1.0}, {0.0, 1.0}});
  auto q = vq::quantize(Vec{0.2, 0.9}, cb);
  Vec up{0.1, -0.2};
  CHECK(vq::straight_through(q, up) == up);
  Vec zero{0.0, 0.0};
  CHECK(vq::straight_through(q, zero) == zero);
}

TEST_CASE("vq_loss matches the worked example: 0.025") {
  auto cb = make_cb({{0.0, 1.0}});
  Batch batch{{0.2}, {0.9}};
  CHECK(vq::vq_loss(batch, cb) == doctest::Approx(0.025).epsilon(1e-12));
}

TEST_CASE("vq_loss is zero on items and positive otherwise") {
  auto cb = make_cb({{0.0, 1.0}, {-2.0, 2.0}});
  Batch on_items{{0.0, 2.0}, {1.0, -2.0}};
  CHECK(vq::vq_loss(on_items, cb) == 0.0);
  Batch off{{0.3, 2.0}};
  CHECK(vq::vq_loss(off, cb) > 0.0);
}

TEST_CASE("vq_loss: single state at distance 0.3 from a single item") {
  auto cb = make_cb({{1.0}});
  Batch batch{{1.3}};
  CHECK(vq::vq_loss(batch, cb) == doctest::Approx(0.09));
}

TEST_CASE("adaptive scale: mean |Q| 30 over alpha 60 is 0.5") {
  Vec q{30.0, -30.0, 30.0};
  CHECK(vq::adaptive_scale(q, 60.0, 0.0, 10.0) == doctest::Approx(0.5));
}

TEST_CASE("adaptive scale clips at the lower bound for zero Q") {
  Vec q{0.0, 0.0};
  CHECK(vq::adaptive_scale(q, 60.0, 0.01, 10.0) == 0.01);
}

TEST_CASE("adaptive scale matches mean(|Q|)/alpha on random batches") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    Vec q(32);
    double mean_abs = 0.0;
    for (double& v : q) {
      v = rng.normal() * 50.0;
      mean_abs += std::abs(v);
    }
    mean_abs /= q.size();
    double lam = vq::adaptive_scale(q, 60.0, 0.0, 1e9);
    CHECK(lam == doctest::Approx(mean_abs / 60.0).epsilon(1e-12));
  }
}

TEST_CASE("update_codebooks: lambda 0 leaves items unchanged") {
  auto cb = make_cb({{0.0, 1.0}});
  auto before = cb.items;
  Batch batch{{0.4}, {0.6}};
  vq::update_codebooks(batch, cb, 0.5, 0.0);
  CHECK(cb.items == before);
}

TEST_CASE("update_codebooks converges to the Lloyd fixed point") {
  Rng rng(100);
  Vec data;
  for (int i = 0; i < 200; ++i) data.push_back(rng.normal());
  for (int i = 0; i < 200; ++i) data.push_back(5.0 + rng.normal());
  Batch batch;
  for (double x : data) batch.push_back(Vec{x});

  auto cb = vq::init_codebooks(batch, 2);
  Vec oracle = lloyd_1d(cb.items[0], data, 200);

  // lr chosen so one step moves items most of the way to the cluster mean:
  // step fraction = lr * lambda * 2 / (D*K).
  for (int it = 0; it < 300; ++it) vq::update_codebooks(batch, cb, 0.9, 1.0);
  CHECK(std::abs(cb.items[0][0] - oracle[0]) < 1e-6);
  CHECK(std::abs(cb.items[0][1] - oracle[1]) < 1e-6);
}

TEST_CASE("update_codebooks: single item converges to the batch mean") {
  auto cb = make_cb({{0.0}});
  Batch batch{{1.0}, {2.0}, {3.0}};
  for (int i = 0; i < 500; ++i) vq::update_codebooks(batch, cb, 0.45, 1.0);
  CHECK(cb.items[0][0] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("update_codebooks leaves empty items in place and keeps order") {
  auto cb = make_cb({{0.0, 10.0, 100.0}});
  Batch batch{{0.2}, {0.1}};  // only item 0 gets assignments
  vq::update_codebooks(batch, cb, 0.5, 1.0);
  CHECK(cb.items[0][1] == 10.0);
  CHECK(cb.items[0][2] == 100.0);
  CHECK(std::is_sorted(cb.items[0].begin(), cb.items[0].end()));
}

TEST_CASE("descent property: small lr strictly decreases vq_loss") {
  Rng rng(55);
  Batch batch(64, Vec(2));
  for (auto& row : batch)
    for (double& v : row) v = rng.normal();
  auto cb = vq::init_codebooks(batch, 4);
  // Perturb away from the quantile optimum so there is room to descend.
  for (auto& row : cb.items)
    for (double& v : row) v += 0.3;
  for (auto& row : cb.items) std::sort(row.begin(), row.end());
  double before = vq::vq_loss(batch, cb);
  vq::update_codebooks(batch, cb, 0.05, 1.0);
  double after = vq::vq_loss(batch, cb);
  CHECK(after < before);
}

TEST_CASE("attack space: worked interval examples") {
  auto cb = make_cb({{0.0, 1.0}});
  CHECK(vq::attack_space_size(Vec{0.2}, 0.1, cb).per_dim[0] == 1);
  CHECK(vq::attack_space_size(Vec{0.2}, 0.4, cb).per_dim[0] == 2);
  CHECK(vq::attack_space_size(Vec{0.2}, 0.0, cb).per_dim[0] == 1);
}

TEST_CASE("attack space: eps=0 is always a point query") {
  Rng rng(5);
  Batch warmup(300, Vec(2));
  for (auto& row : warmup)
    for (double& v : row) v = rng.normal();
  auto cb = vq::init_codebooks(warmup, 8);
  for (int i = 0; i < 500; ++i) {
    Vec s{rng.normal(), rng.normal()};
    auto sp = vq::attack_space_size(s, 0.0, cb);
    CHECK(sp.per_dim[0] == 1);
    CHECK(sp.per_dim[1] == 1);
  }
}

TEST_CASE("cell invariance: singleton attack space pins the quantization") {
  Rng rng(17);
  Batch warmup(1000, Vec(3));
  for (auto& row : warmup)
    for (double& v : row) v = rng.normal();
  auto cb = vq::init_codebooks(warmup, 6);
  int tested = 0;
  for (int i = 0; i < 2000; ++i) {
    Vec s{rng.normal(), rng.normal(), rng.normal()};
    double eps = rng.uniform(0.0, 0.2);
    auto sp = vq::attack_space_size(s, eps, cb);
    if (sp.max_per_dim() != 1) continue;
    ++tested;
    auto qs = vq::quantize(s, cb);
    for (int j = 0; j < 5; ++j) {
      Vec sh = s;
      for (double& v : sh) v += rng.uniform(-eps, eps);
      auto qh = vq::quantize(sh, cb);
      CHECK(qh.values == qs.values);
    }
  }
  CHECK(tested > 50);
}

TEST_CASE("mean attack space grows with K") {
  Rng rng(23);
  Batch warmup(2000, Vec(2));
  for (auto& row : warmup)
    for (double& v : row) v = rng.normal();
  std::vector<std::size_t> ks{2, 4, 8, 16};
  std::vector<double> means;
  for (std::size_t K : ks) {
    auto cb = vq::init_codebooks(warmup, K);
    double total = 0.0;
    Rng state_rng(99);
    const int n = 200;
    for (int i = 0; i < n; ++i) {
      Vec s{state_rng.normal(), state_rng.normal()};
      total += vq::attack_space_size(s, 0.15, cb).mean_per_dim();
    }
    means.push_back(total / n);
  }
  for (std::size_t i = 1; i < means.size(); ++i) CHECK(means[i] >= means[i - 1]);
}

TEST_CASE("bdr: two-level rounding and fixed points") {
  vq::BdrRange r{{0.0}, {1.0}};
  CHECK(vq::bdr_quantize(Vec{0.7}, 1, r)[0] == 1.0);
  // A value already on an 8-bit level stays put.
  double level = 37.0 / 255.0;
  CHECK(vq::bdr_quantize(Vec{level}, 8, r)[0] == doctest::Approx(level).epsilon(1e-15));
}

TEST_CASE("bdr is monotone") {
  Rng rng(31);
  vq::BdrRange r{{-2.0, -2.0}, {2.0, 2.0}};
  for (int i = 0; i < 2000; ++i) {
    Vec a{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    Vec b{a[0] + rng.uniform(0.0, 2.0), a[1] + rng.uniform(0.0, 2.0)};
    Vec qa = vq::bdr_quantize(a, 3, r);
    Vec qb = vq::bdr_quantize(b, 3, r);
    CHECK(qa[0] <= qb[0]);
    CHECK(qa[1] <= qb[1]);
  }
}

TEST_CASE("codebook serialization round-trips bit-exactly") {
  Rng rng(63);
  Batch warmup(400, Vec(4));
  for (auto& row : warmup)
    for (double& v : row) v = rng.normal() * 3.14159;
  auto cb = vq::init_codebooks(warmup, 8);
  std::stringstream ss;
  vq::save_codebooks(cb, ss);
  auto cb2 = vq::load_codebooks(ss);
  CHECK(cb2.D == cb.D);
  CHECK(cb2.K == cb.K);
  CHECK(cb2.shared == cb.shared);
  CHECK(cb2.items == cb.items);
}

TEST_CASE("shared mode pools dimensions and serializes") {
  Batch warmup;
  Rng rng(8);
  for (int i = 0; i < 200; ++i) warmup.push_back(Vec{rng.uniform(), rng.uniform() + 10.0});
  auto cb = vq::init_codebooks(warmup, 4, /*shared=*/true);
  CHECK(cb.items.size() == 1);
  CHECK(cb.row(0) == cb.row(1));
  std::stringstream ss;
  vq::save_codebooks(cb, ss);
  auto cb2 = vq::load_codebooks(ss);
  CHECK(cb2.shared);
  CHECK(cb2.items == cb.items);
}
