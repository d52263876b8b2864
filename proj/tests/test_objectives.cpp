#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "t2/objectives.hpp"

using namespace t2;

TEST_CASE("mean_pool selects and averages rows") {
  Mat e(2, 2);
  e << 1, 0, 0, 1;
  PooledVector one = mean_pool(e, {1});
  CHECK(one.value(0) == 0.0);
  CHECK(one.value(1) == 1.0);
  CHECK_FALSE(one.absent);

  PooledVector avg = mean_pool(e, {0, 1});
  CHECK(avg.value(0) == doctest::Approx(0.5));
  CHECK(avg.value(1) == doctest::Approx(0.5));

  PooledVector empty = mean_pool(e, {});
  CHECK(empty.absent);
  CHECK(empty.value.cwiseAbs().sum() == 0.0);

  CHECK_THROWS_AS(mean_pool(e, {2}), InternalError);
}

namespace {

PooledViews views_for(const Eigen::RowVectorXd& a_cross, const Eigen::RowVectorXd& a_single) {
  PooledViews v;
  v.a_cross = {a_cross, false};
  v.a_single = {a_single, false};
  v.b_cross.absent = true;
  v.b_single.absent = true;
  v.b_cross.value = Eigen::RowVectorXd::Zero(a_cross.size());
  v.b_single.value = Eigen::RowVectorXd::Zero(a_cross.size());
  return v;
}

}  // namespace

TEST_CASE("alignment loss on the equal-unit-vector pair is 2 log 2") {
  Eigen::RowVectorXd u(2);
  u << 1, 0;
  std::vector<PooledViews> batch = {views_for(u, u), views_for(u, u)};
  double loss = alignment_loss(batch, 1.0);
  CHECK(loss == doctest::Approx(2 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("alignment loss vanishes without in-batch negatives") {
  Eigen::RowVectorXd u(2);
  u << 1, 0;
  std::vector<PooledViews> batch = {views_for(u, u)};
  CHECK(alignment_loss(batch, 0.1) == 0.0);
}

TEST_CASE("alignment loss tightens as the positive dominates") {
  // positive dot 1, sole negative dot -1: term -> 0 as tau -> 0+
  Eigen::RowVectorXd p(2), n(2);
  p << 1, 0;
  n << -1, 0;
  std::vector<PooledViews> batch = {views_for(p, p), views_for(n, n)};
  double wide = alignment_loss(batch, 1.0);
  double sharp = alignment_loss(batch, 0.05);
  CHECK(sharp < wide);
  CHECK(sharp < 1e-8);
}

TEST_CASE("alignment loss ignores user order") {
  std::mt19937_64 rng(44);
  std::vector<PooledViews> batch;
  for (int i = 0; i < 5; ++i) {
    batch.push_back(views_for(oracle::random_mat(1, 4, rng()).row(0),
                              oracle::random_mat(1, 4, rng()).row(0)));
  }
  double base = alignment_loss(batch, 0.2);
  std::shuffle(batch.begin(), batch.end(), rng);
  CHECK(alignment_loss(batch, 0.2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("feedback contrast hand instances") {
  // empty negative set
  Mat e1(1, 2);
  e1 << 1, 0;
  CHECK(feedback_contrast_loss(e1, {0}, {}, 1.0) == 0.0);

  // single positive at distance^2 4 from the negative centroid, margin 1
  Mat e2(2, 2);
  e2 << 0, 0, 2, 0;
  CHECK(feedback_contrast_loss(e2, {0}, {1}, 1.0) == 0.0);

  // d+ = 0 (single positive), d- = 1, alpha = 1.5 -> max(0 - 1 + 1.5, 0)
  Mat e3(2, 2);
  e3 << 1, 0, 0, 0;
  CHECK(feedback_contrast_loss(e3, {0}, {1}, 1.5) == doctest::Approx(0.5));
}

TEST_CASE("feedback contrast is invariant under label-preserving permutations") {
  std::mt19937_64 rng(911);
  Mat e = oracle::random_mat(6, 3, 101);
  std::vector<int> pos = {0, 2, 5}, neg = {1, 3, 4};
  double base = feedback_contrast_loss(e, pos, neg, 1.0);
  // permute rows while permuting the index sets consistently
  std::vector<int> perm = {3, 5, 0, 1, 4, 2};
  Mat pe(6, 3);
  std::vector<int> where(6);
  for (int i = 0; i < 6; ++i) {
    pe.row(i) = e.row(perm[i]);
    where[perm[i]] = i;
  }
  std::vector<int> ppos, pneg;
  for (int i : pos) ppos.push_back(where[i]);
  for (int i : neg) pneg.push_back(where[i]);
  CHECK(feedback_contrast_loss(pe, ppos, pneg, 1.0) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("recommendation loss hand values") {
  Eigen::RowVectorXd rep = Eigen::RowVectorXd::Zero(2);
  Mat w = Mat::Zero(2, 10);
  Mat b = Mat::Zero(1, 10);
  CHECK(recommendation_loss(rep, w, b, 3) == doctest::Approx(std::log(10.0)));

  Mat b2 = Mat::Zero(1, 2);
  b2 << 2.0, 0.0;
  Mat w2 = Mat::Zero(2, 2);
  CHECK(recommendation_loss(rep, w2, b2, 0) == doctest::Approx(0.1269280110429725));

  Mat b3 = Mat::Zero(1, 5);
  b3(0, 2) = 50.0;
  CHECK(recommendation_loss(rep, Mat::Zero(2, 5), b3, 2) < 1e-12);

  CHECK_THROWS_AS(recommendation_loss(rep, w, b, 10), InternalError);
}

TEST_CASE("recommendation loss is shift invariant") {
  std::mt19937_64 rng(123);
  Eigen::RowVectorXd rep = oracle::random_mat(1, 4, 9).row(0);
  Mat w = oracle::random_mat(4, 7, 10);
  Mat b = oracle::random_mat(1, 7, 11);
  double base = recommendation_loss(rep, w, b, 3);
  Mat shifted = b;
  shifted.array() += 13.7;
  CHECK(recommendation_loss(rep, w, shifted, 3) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("total loss weighting") {
  LossWeights weights;
  weights.mu1 = 0.5;
  weights.mu2 = 0.5;
  CHECK(total_loss(1, 1, 1, 1, 1, 1, weights) == doctest::Approx(5.0));
  weights.mu1 = 0;
  weights.mu2 = 0;
  CHECK(total_loss(0.3, 0.4, 0.1, 0.2, 9.0, 9.0, weights) == doctest::Approx(1.0));
}

TEST_CASE("tape losses match the value-level implementations and pass FD") {
  std::mt19937_64 rng(31337);
  const double h = 1e-6;

  for (int trial = 0; trial < 5; ++trial) {
    Mat e = oracle::random_mat(5, 4, rng());
    std::vector<int> pos = {0, 2}, neg = {1, 3, 4};
    double alpha = 0.7;

    ad::Tape tape;
    int leaf = tape.leaf(e);
    int node = feedback_contrast_node(tape, leaf, pos, neg, alpha);
    CHECK(tape.value(node)(0, 0) ==
          doctest::Approx(feedback_contrast_loss(e, pos, neg, alpha)).epsilon(1e-12));
    tape.backward(node);
    Mat grad = tape.grad(leaf);
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
      for (Eigen::Index j = 0; j < e.cols(); ++j) {
        Mat up = e, down = e;
        up(i, j) += h;
        down(i, j) -= h;
        double fd = (feedback_contrast_loss(up, pos, neg, alpha) -
                     feedback_contrast_loss(down, pos, neg, alpha)) /
                    (2 * h);
        CHECK(std::abs(fd - grad(i, j)) < 1e-5);
      }
    }
  }
}

TEST_CASE("all losses stay non-negative and finite on random inputs") {
  std::mt19937_64 rng(777);
  for (int trial = 0; trial < 50; ++trial) {
    Mat e = oracle::random_mat(6, 4, rng());
    std::vector<int> pos, neg;
    for (int i = 0; i < 6; ++i) (rng() % 2 ? pos : neg).push_back(i);
    double cont = feedback_contrast_loss(e, pos, neg, 1.0);
    CHECK(cont >= 0.0);
    CHECK(std::isfinite(cont));

    std::vector<PooledViews> batch;
    for (int u = 0; u < 3; ++u) {
      PooledViews v;
      v.a_cross = {oracle::random_mat(1, 4, rng()).row(0), false};
      v.a_single = {oracle::random_mat(1, 4, rng()).row(0), false};
      v.b_cross = {oracle::random_mat(1, 4, rng()).row(0), false};
      v.b_single = {oracle::random_mat(1, 4, rng()).row(0), false};
      batch.push_back(std::move(v));
    }
    double align = alignment_loss(batch, 0.1);
    CHECK(align >= 0.0);
    CHECK(std::isfinite(align));

    Eigen::RowVectorXd rep = oracle::random_mat(1, 4, rng()).row(0);
    double rec = recommendation_loss(rep, oracle::random_mat(4, 9, rng()),
                                     oracle::random_mat(1, 9, rng()),
                                     static_cast<int>(rng() % 9));
    CHECK(rec >= 0.0);
    CHECK(std::isfinite(rec));
  }
}
