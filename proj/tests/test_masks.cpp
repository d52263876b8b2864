#include <doctest.h>

#include <random>

#include "t2/masks.hpp"

using namespace t2;

namespace {

BoolGrid grid3(std::initializer_list<int> bits) {
  BoolGrid g(3, 3);
  int idx = 0;
  for (int b : bits) {
    g(idx / 3, idx % 3) = b != 0;
    ++idx;
  }
  return g;
}

bool same(const BoolGrid& a, const BoolGrid& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a == b).all();
}

}  // namespace

TEST_CASE("feedback mask marks differing feedback pairs") {
  CHECK(same(feedback_mask({1, 1, -1}), grid3({0, 0, 1, 0, 0, 1, 1, 1, 0})));
  CHECK_FALSE(feedback_mask({1, 1, 1, 1}).any());
  CHECK(same(feedback_mask({1}), BoolGrid::Constant(1, 1, false)));
}

TEST_CASE("domain mask marks differing domain pairs") {
  CHECK(same(domain_mask({Domain::A, Domain::B, Domain::A}),
             grid3({0, 1, 0, 1, 0, 1, 0, 1, 0})));
  CHECK_FALSE(domain_mask({Domain::B, Domain::B}).any());

  BoolGrid alt = domain_mask({Domain::A, Domain::B, Domain::A, Domain::B});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(alt(i, j) == ((i + j) % 2 == 1));
}

TEST_CASE("cross masks on the ABA ++- example") {
  MaskSet set = build_mask_set({Domain::A, Domain::B, Domain::A}, {1, 1, -1});
  CHECK(same(set.cross.m1, grid3({0, 0, 0, 0, 0, 1, 0, 1, 0})));
  CHECK(same(set.cross.m2, grid3({0, 0, 1, 0, 0, 0, 1, 0, 0})));
  CHECK(same(set.cross.m3, grid3({0, 1, 0, 1, 0, 0, 0, 0, 0})));
  CHECK(same(set.cross.m4, grid3({1, 0, 0, 0, 1, 0, 0, 0, 1})));
}

TEST_CASE("homogeneous sequence puts everything in M4") {
  MaskSet set = build_mask_set({Domain::A, Domain::A}, {1, 1});
  CHECK(set.cross.m4.all());
  CHECK_FALSE(set.cross.m1.any());
  CHECK_FALSE(set.cross.m2.any());
  CHECK_FALSE(set.cross.m3.any());
}

TEST_CASE("cross masks reject shape mismatches") {
  CHECK_THROWS_AS(cross_masks(feedback_mask({1, -1}), domain_mask({Domain::A})), InternalError);
}

TEST_CASE("masks partition the grid and stay symmetric on random sequences") {
  std::mt19937_64 rng(411);
  for (int trial = 0; trial < 300; ++trial) {
    int length = 1 + static_cast<int>(rng() % 64);
    std::vector<Domain> domains(length);
    std::vector<int> feedbacks(length);
    for (int i = 0; i < length; ++i) {
      domains[i] = rng() % 2 ? Domain::A : Domain::B;
      feedbacks[i] = rng() % 2 ? 1 : -1;
    }
    MaskSet set = build_mask_set(domains, feedbacks);
    const BoolGrid* grids[] = {&set.mf, &set.md, &set.cross.m1, &set.cross.m2, &set.cross.m3,
                               &set.cross.m4};
    for (const BoolGrid* g : grids) CHECK((*g == g->transpose()).all());
    for (int i = 0; i < length; ++i) {
      CHECK_FALSE(set.mf(i, i));
      CHECK_FALSE(set.md(i, i));
      for (int j = 0; j < length; ++j) {
        int members = set.cross.m1(i, j) + set.cross.m2(i, j) + set.cross.m3(i, j) +
                      set.cross.m4(i, j);
        REQUIRE(members == 1);
      }
    }
  }
}
