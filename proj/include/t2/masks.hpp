#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "t2/types.hpp"

namespace t2 {

using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Entry (i,j) true iff f_i != f_j. Feedback values must be +1/-1.
BoolGrid feedback_mask(const std::vector<int>& feedbacks);

// Entry (i,j) true iff d_i != d_j.
BoolGrid domain_mask(const std::vector<Domain>& domains);

struct CrossMasks {
  BoolGrid m1;  // feedback differs AND domain differs
  BoolGrid m2;  // feedback differs, same domain
  BoolGrid m3;  // same feedback, domain differs
  BoolGrid m4;  // same feedback, same domain (diagonal lives here)
};

CrossMasks cross_masks(const BoolGrid& mf, const BoolGrid& md);

struct MaskSet {
  BoolGrid mf;
  BoolGrid md;
  CrossMasks cross;
};

MaskSet build_mask_set(const std::vector<Domain>& domains, const std::vector<int>& feedbacks);

BoolGrid all_true(int n);
BoolGrid lower_triangular(int n);  // j <= i

std::string grid_to_string(const BoolGrid& g);  // 0/1 rows for inspect-masks

}  // namespace t2
