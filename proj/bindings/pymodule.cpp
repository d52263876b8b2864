// Python bindings for the core operations: masks, signed-graph
// propagation, losses, ranking metrics, transition statistics and the
// synthetic generator.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "t2/data.hpp"
#include "t2/evaluate.hpp"
#include "t2/graph.hpp"
#include "t2/masks.hpp"
#include "t2/objectives.hpp"

namespace py = pybind11;
using t2::Mat;

namespace {

py::array_t<bool> grid_to_numpy(const t2::BoolGrid& g) {
  py::array_t<bool> out({g.rows(), g.cols()});
  auto view = out.mutable_unchecked<2>();
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) view(i, j) = g(i, j);
  return out;
}

t2::BoolGrid grid_from_numpy(const py::array_t<bool>& a) {
  if (a.ndim() != 2) throw py::value_error("mask must be a 2-d boolean array");
  t2::BoolGrid g(a.shape(0), a.shape(1));
  auto view = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) g(i, j) = view(i, j);
  return g;
}

std::vector<t2::Domain> parse_domains(const std::string& letters) {
  std::vector<t2::Domain> out;
  for (char c : letters) {
    if (c == 'A') out.push_back(t2::Domain::A);
    else if (c == 'B') out.push_back(t2::Domain::B);
    else throw py::value_error("domains may contain only 'A' and 'B'");
  }
  return out;
}

t2::SignedGraph graph_from_edges(int n,
                                 const std::vector<std::tuple<int, int, int>>& edges) {
  t2::SignedGraph g;
  g.n = n;
  g.degree.assign(n, 0);
  for (auto [i, j, s] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
      throw py::value_error("edge endpoints must be distinct node ids in [0, n)");
    }
    if (s != 1 && s != -1) throw py::value_error("edge sign must be +1 or -1");
    if (i > j) std::swap(i, j);
    g.edges.emplace_back(i, j, s);
    ++g.degree[i];
    ++g.degree[j];
  }
  normalize_adjacency(g);
  return g;
}

t2::LayerMeanRule parse_rule(const std::string& rule) {
  if (rule == "k+1") return t2::LayerMeanRule::KPlus1;
  if (rule == "k") return t2::LayerMeanRule::Literal;
  throw py::value_error("layer mean rule must be 'k+1' or 'k'");
}

}  // namespace

PYBIND11_MODULE(_t2rec, m) {
  m.doc() = "Transition-aware cross-domain sequential recommender core operations";

  m.def(
      "feedback_mask",
      [](const std::vector<int>& feedbacks) { return grid_to_numpy(t2::feedback_mask(feedbacks)); },
      py::arg("feedbacks"), "Boolean grid with entry (i, j) true iff feedbacks differ.");
  m.def(
      "domain_mask",
      [](const std::string& domains) {
        return grid_to_numpy(t2::domain_mask(parse_domains(domains)));
      },
      py::arg("domains"), "Boolean grid from a string like 'ABA'.");
  m.def(
      "cross_masks",
      [](const py::array_t<bool>& mf, const py::array_t<bool>& md) {
        t2::CrossMasks c = t2::cross_masks(grid_from_numpy(mf), grid_from_numpy(md));
        return py::make_tuple(grid_to_numpy(c.m1), grid_to_numpy(c.m2), grid_to_numpy(c.m3),
                              grid_to_numpy(c.m4));
      },
      py::arg("feedback_mask"), py::arg("domain_mask"),
      "The four cross-transition masks (M1, M2, M3, M4).");

  m.def(
      "propagate",
      [](int n, const std::vector<std::tuple<int, int, int>>& edges, const Mat& e0, int k,
         const std::string& rule) {
        return t2::propagate(graph_from_edges(n, edges), e0, k, parse_rule(rule));
      },
      py::arg("n"), py::arg("edges"), py::arg("e0"), py::arg("k") = 1,
      py::arg("rule") = "k+1",
      "Layer-averaged signed-graph propagation of an n x d embedding table.");

  m.def(
      "alignment_loss",
      [](const Mat& cross_a, const Mat& single_a, const Mat& cross_b, const Mat& single_b,
         double tau) {
        if (cross_a.rows() != single_a.rows() || cross_b.rows() != single_b.rows()) {
          throw py::value_error("pooled views must pair up per user");
        }
        std::vector<t2::PooledViews> batch;
        auto rows = std::max(cross_a.rows(), cross_b.rows());
        for (Eigen::Index u = 0; u < rows; ++u) {
          t2::PooledViews v;
          v.a_cross.absent = u >= cross_a.rows();
          v.a_single.absent = v.a_cross.absent;
          v.b_cross.absent = u >= cross_b.rows();
          v.b_single.absent = v.b_cross.absent;
          if (!v.a_cross.absent) {
            v.a_cross.value = cross_a.row(u);
            v.a_single.value = single_a.row(u);
          }
          if (!v.b_cross.absent) {
            v.b_cross.value = cross_b.row(u);
            v.b_single.value = single_b.row(u);
          }
          batch.push_back(std::move(v));
        }
        return t2::alignment_loss(batch, tau);
      },
      py::arg("cross_a"), py::arg("single_a"), py::arg("cross_b"), py::arg("single_b"),
      py::arg("tau") = 0.1,
      "Two-direction in-batch InfoNCE over per-user pooled views (rows are users).");

  m.def(
      "feedback_contrast_loss",
      [](const Mat& e, const std::vector<int>& pos, const std::vector<int>& neg, double alpha) {
        return t2::feedback_contrast_loss(e, pos, neg, alpha);
      },
      py::arg("e"), py::arg("positive_rows"), py::arg("negative_rows"), py::arg("alpha") = 1.0,
      "In-sequence triplet loss against feedback centroids.");

  m.def(
      "recommendation_loss",
      [](const Eigen::RowVectorXd& rep, const Mat& w, const Eigen::RowVectorXd& b, int target) {
        Mat bias(1, b.size());
        bias.row(0) = b;
        return t2::recommendation_loss(rep, w, bias, target);
      },
      py::arg("rep"), py::arg("w"), py::arg("b"), py::arg("target"),
      "Softmax cross entropy of an affine head at the target item.");

  m.def(
      "rank_metrics",
      [](const std::vector<double>& scores, int positive_index) {
        t2::RankResult r = t2::rank_and_score(scores, positive_index);
        py::dict d;
        d["rank"] = r.rank;
        d["MRR@10"] = r.mrr10;
        d["NDCG@5"] = r.ndcg5;
        d["NDCG@10"] = r.ndcg10;
        d["HR@1"] = r.hr1;
        d["HR@5"] = r.hr5;
        d["HR@10"] = r.hr10;
        return d;
      },
      py::arg("scores"), py::arg("positive_index"),
      "Pessimistic-tie rank of the positive candidate and the derived metrics.");

  m.def(
      "transition_stats",
      [](const std::vector<std::vector<std::pair<std::string, int>>>& sequences) {
        std::vector<t2::UserHistory> histories;
        int user = 0;
        for (const auto& seq : sequences) {
          t2::UserHistory h;
          h.user_id = "u" + std::to_string(user++);
          std::int64_t ts = 0;
          for (const auto& [domain, feedback] : seq) {
            if (feedback != 1 && feedback != -1) {
              throw py::value_error("feedback must be +1 or -1");
            }
            t2::Interaction ev{h.user_id, 0, parse_domains(domain).at(0), feedback, ts++};
            h.seq_c.push_back(ev);
            (ev.domain == t2::Domain::A ? h.seq_a : h.seq_b).push_back(ev);
          }
          histories.push_back(std::move(h));
        }
        t2::TransitionStats s = t2::transition_stats(histories);
        py::dict d;
        d["type1"] = s.type1;
        d["type2"] = s.type2;
        d["other"] = s.other;
        d["type1_pct"] = s.type1_pct();
        d["type2_pct"] = s.type2_pct();
        return d;
      },
      py::arg("sequences"),
      "Type-1/Type-2 statistics over merged sequences of (domain, feedback) pairs.");

  m.def(
      "synthesize",
      [](int users, int items_a, int items_b, int len_min, int len_max, double type1,
         double type2, bool planted, std::uint64_t seed) {
        t2::SynthSpec spec;
        spec.users = users;
        spec.items_a = items_a;
        spec.items_b = items_b;
        spec.len_min = len_min;
        spec.len_max = len_max;
        spec.type1_rate = type1;
        spec.type2_rate = type2;
        spec.planted = planted;
        spec.seed = seed;
        std::vector<std::tuple<std::string, int, std::string, int, std::int64_t>> rows;
        for (const auto& ev : t2::generate_synthetic(spec)) {
          rows.emplace_back(ev.user_id, ev.item_id, std::string(1, t2::domain_char(ev.domain)),
                            ev.feedback > 0 ? 5 : 1, ev.timestamp);
        }
        return rows;
      },
      py::arg("users") = 200, py::arg("items_a") = 50, py::arg("items_b") = 50,
      py::arg("len_min") = 12, py::arg("len_max") = 20, py::arg("type1") = 0.1831,
      py::arg("type2") = 0.1828, py::arg("planted") = false, py::arg("seed") = 1,
      "Synthetic (user, item, domain, rating, timestamp) rows.");

  py::register_exception<t2::DataError>(m, "DataError");

  m.attr("__version__") = "0.1.0";
}
