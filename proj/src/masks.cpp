#include "t2/masks.hpp"

#include <sstream>

namespace t2 {

BoolGrid feedback_mask(const std::vector<int>& feedbacks) {
  const auto n = static_cast<Eigen::Index>(feedbacks.size());
  BoolGrid m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (feedbacks[i] != 1 && feedbacks[i] != -1) {
      throw InternalError("feedback_mask: feedback must be +1 or -1");
    }
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = feedbacks[i] != feedbacks[j];
  }
  return m;
}

BoolGrid domain_mask(const std::vector<Domain>& domains) {
  const auto n = static_cast<Eigen::Index>(domains.size());
  BoolGrid m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = domains[i] != domains[j];
  return m;
}

CrossMasks cross_masks(const BoolGrid& mf, const BoolGrid& md) {
  if (mf.rows() != md.rows() || mf.cols() != md.cols()) {
    throw InternalError("cross_masks: shape mismatch");
  }
  CrossMasks out;
  out.m1 = mf && md;
  out.m2 = mf && !md;
  out.m3 = !mf && md;
  out.m4 = !mf && !md;
  return out;
}

MaskSet build_mask_set(const std::vector<Domain>& domains, const std::vector<int>& feedbacks) {
  if (domains.size() != feedbacks.size()) {
    throw InternalError("build_mask_set: domains and feedbacks differ in length");
  }
  MaskSet set;
  set.mf = feedback_mask(feedbacks);
  set.md = domain_mask(domains);
  set.cross = cross_masks(set.mf, set.md);
  return set;
}

BoolGrid all_true(int n) { return BoolGrid::Constant(n, n, true); }

BoolGrid lower_triangular(int n) {
  BoolGrid m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = j <= i;
  return m;
}

std::string grid_to_string(const BoolGrid& g) {
  std::ostringstream out;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      if (j) out << ' ';
      out << (g(i, j) ? '1' : '0');
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace t2
