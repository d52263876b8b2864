#include "t2/objectives.hpp"

#include <cmath>

#include "t2/types.hpp"

namespace t2 {

PooledVector mean_pool(const Mat& e, const std::vector<int>& subset) {
  PooledVector out;
  out.value = Eigen::RowVectorXd::Zero(e.cols());
  if (subset.empty()) {
    out.absent = true;
    return out;
  }
  for (int idx : subset) {
    if (idx < 0 || idx >= e.rows()) {
      throw InternalError("mean_pool: index " + std::to_string(idx) + " out of range");
    }
    out.value += e.row(idx);
  }
  out.value /= static_cast<double>(subset.size());
  return out;
}

namespace {

double info_nce_value(const std::vector<Eigen::RowVectorXd>& anchor,
                      const std::vector<Eigen::RowVectorXd>& other, double tau) {
  const std::size_t m = anchor.size();
  Mat z(m, m);
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t v = 0; v < m; ++v) z(u, v) = anchor[u].dot(other[v]) / tau;
  double loss = 0;
  for (std::size_t u = 0; u < m; ++u) {
    double rmax = z.row(u).maxCoeff();
    double rlse = rmax + std::log((z.row(u).array() - rmax).exp().sum());
    double cmax = z.col(u).maxCoeff();
    double clse = cmax + std::log((z.col(u).array() - cmax).exp().sum());
    loss += (rlse - z(u, u)) + (clse - z(u, u));
  }
  return loss / static_cast<double>(m);
}

}  // namespace

double alignment_loss(const std::vector<PooledViews>& batch, double tau,
                      long* skipped_domains) {
  if (tau <= 0) throw InternalError("alignment_loss: tau must be positive");
  double total = 0;
  for (int domain = 0; domain < 2; ++domain) {
    std::vector<Eigen::RowVectorXd> cross, single;
    for (const auto& views : batch) {
      const auto& c = domain == 0 ? views.a_cross : views.b_cross;
      const auto& s = domain == 0 ? views.a_single : views.b_single;
      if (c.absent || s.absent) continue;
      if (!c.value.allFinite() || !s.value.allFinite()) {
        throw InternalError("alignment_loss: non-finite pooled embedding");
      }
      cross.push_back(c.value);
      single.push_back(s.value);
    }
    if (cross.size() < 2) {  // no in-batch negatives available
      if (skipped_domains) ++*skipped_domains;
      continue;
    }
    total += info_nce_value(cross, single, tau);
  }
  return total;
}

double feedback_contrast_loss(const Mat& e, const std::vector<int>& pos_idx,
                              const std::vector<int>& neg_idx, double alpha) {
  if (pos_idx.empty() || neg_idx.empty()) return 0.0;
  Eigen::RowVectorXd c_pos = mean_pool(e, pos_idx).value;
  Eigen::RowVectorXd c_neg = mean_pool(e, neg_idx).value;
  double loss = 0;
  for (int i : pos_idx) {
    double d_pos = (e.row(i) - c_pos).squaredNorm();
    double d_neg = (e.row(i) - c_neg).squaredNorm();
    loss += std::max(d_pos - d_neg + alpha, 0.0);
  }
  return loss;
}

double recommendation_loss(const Eigen::RowVectorXd& rep, const Mat& w, const Mat& b, int target) {
  if (target < 0 || target >= w.cols()) {
    throw InternalError("recommendation_loss: target " + std::to_string(target) +
                        " out of range for catalog of " + std::to_string(w.cols()));
  }
  Eigen::RowVectorXd logits = rep * w + b.row(0);
  double mx = logits.maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits(target);
}

double total_loss(double single_a, double single_b, double cross_a, double cross_b, double align,
                  double cont, const LossWeights& weights) {
  return single_a + single_b + cross_a + cross_b + weights.mu1 * align + weights.mu2 * cont;
}

// ---- tape builders ----------------------------------------------------

int alignment_loss_node(ad::Tape& tape, const std::vector<PooledViewNodes>& batch, double tau) {
  if (tau <= 0) throw InternalError("alignment_loss: tau must be positive");
  int total = -1;
  for (int domain = 0; domain < 2; ++domain) {
    std::vector<int> cross, single;
    for (const auto& views : batch) {
      int c = domain == 0 ? views.a_cross : views.b_cross;
      int s = domain == 0 ? views.a_single : views.b_single;
      if (c < 0 || s < 0) continue;
      cross.push_back(c);
      single.push_back(s);
    }
    if (cross.size() < 2) continue;
    // z(u, v) = <e''(u), e'(v)> / tau: stack the pooled rows into m x d
    // matrices (concat the transposed rows, transpose back), one matmul
    std::vector<int> ct(cross.size()), st(single.size());
    for (std::size_t i = 0; i < cross.size(); ++i) ct[i] = tape.transpose(cross[i]);
    for (std::size_t i = 0; i < single.size(); ++i) st[i] = tape.transpose(single[i]);
    int cross_mat = tape.transpose(tape.concat_cols(ct));
    int single_mat = tape.transpose(tape.concat_cols(st));
    int z = tape.scale(tape.matmul(cross_mat, tape.transpose(single_mat)), 1.0 / tau);
    int loss = tape.info_nce(z);
    total = total < 0 ? loss : tape.add(total, loss);
  }
  if (total < 0) total = tape.leaf(Mat::Zero(1, 1));
  return total;
}

int feedback_contrast_node(ad::Tape& tape, int e, const std::vector<int>& pos_idx,
                           const std::vector<int>& neg_idx, double alpha) {
  if (pos_idx.empty() || neg_idx.empty()) return tape.leaf(Mat::Zero(1, 1));
  int c_pos = tape.mean_rows(e, pos_idx);
  int c_neg = tape.mean_rows(e, neg_idx);
  int total = -1;
  int margin = tape.leaf(Mat::Constant(1, 1, alpha));
  for (int i : pos_idx) {
    int row = tape.gather_rows(e, {i});
    int dp = tape.sub(row, c_pos);
    int dn = tape.sub(row, c_neg);
    int d_pos = tape.sum_all(tape.cmul(dp, dp));
    int d_neg = tape.sum_all(tape.cmul(dn, dn));
    int hinge = tape.relu(tape.add(tape.sub(d_pos, d_neg), margin));
    total = total < 0 ? hinge : tape.add(total, hinge);
  }
  return total;
}

}  // namespace t2
