#pragma once

// Scalar-loop LabGNN: every node, edge and generation computed with explicit
// loops over nested vectors, following the layer definitions directly.

#include <cstddef>
#include <vector>

#include "metalab/labgnn.hpp"

namespace oracle {

using Nodes = std::vector<std::vector<std::vector<double>>>;  // [B][T][d]
using Edges = std::vector<std::vector<std::vector<double>>>;  // [B][T][T]

struct Interacter {
  std::size_t d = 0;
  std::vector<double> w1, b1, gamma, beta, w2;  // w1 [d x d], w2 [d]
  double b2 = 0.0;
};

struct Aggregator {
  std::size_t d = 0;
  std::vector<double> w1, b1, w2, b2;  // w1 [d x 2d], w2 [d x d]
};

struct GraphParams {
  Interacter light, color;
  Aggregator layering, gradient;
};

struct GraphState {
  Nodes v_light, v_color;
  Edges e_light, e_color;
};

template <typename T>
GraphParams extract(const metalab::LabGnnParams<T>& p);

template <typename T>
Nodes to_nodes(const metalab::Tensor<T>& t);  // [B x T x d]
template <typename T>
Edges to_edges(const metalab::Tensor<T>& t);  // [B x T x T]

// Off-diagonal sigmoid(w2 . relu(BN(w1 |v_i - v_j| + b1)) + b2) with BN over
// every unordered pair of every episode; diagonal 1.
Edges similarity(const Nodes& v, const Interacter& p);
// e_new[i][j] = S[i][j] e_prev[i][j] off the diagonal, 1 on it.
Edges update_edges(const Nodes& v, const Edges& e_prev, const Interacter& p);
// Row-normalized edges (self weight 1) aggregate v_prev; MLP over [agg ; v_prev].
Nodes aggregate(const Edges& e, const Nodes& v_prev, const Aggregator& p);

std::vector<GraphState> trajectory(const Nodes& pe_light, const Nodes& pe_color,
                                   const Nodes& ls_light, const Nodes& ls_color,
                                   std::size_t generations, const GraphParams& p);

// Largest |a - b| over every entry.
double max_abs_diff(const Nodes& a, const Nodes& b);

}  // namespace oracle
