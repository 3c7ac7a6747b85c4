/* Copyright 2026 The chanprune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "chanprune/error.hpp"
#include "chanprune/metrics.hpp"

namespace chanprune {

// DI = sum_c n_c d_c^T (S + rho I)^-1 d_c with d_c = centroid_c - centroid,
// which equals tr((S + rho I)^-1 S_B) since S_B = sum_c n_c d_c d_c^T.
// With X the centered N x D data, S = X^T X. When D > N the N x N system is
// solved instead: (X^T X + rho I)^-1 X^T = X^T (X X^T + rho I)^-1 and
// d_c = X^T u_c with u_c the class indicator scaled by 1/n_c.
double discriminant_information(const ActivationSet& set,
                                const MetricConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(set.size());
  const Eigen::Index dim = static_cast<Eigen::Index>(set.map_size());
  const Eigen::Index num_classes = static_cast<Eigen::Index>(set.num_classes());

  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (std::uint32_t label : set.labels()) counts[label] += 1.0;
  for (Eigen::Index c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0.0) {
      throw NumericError("class " + std::to_string(c) + " has no samples");
    }
  }

  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto map = set.map(static_cast<std::size_t>(i));
    for (Eigen::Index d = 0; d < dim; ++d) {
      x(i, d) = static_cast<double>(map[static_cast<std::size_t>(d)]);
    }
  }
  const Eigen::RowVectorXd centroid = x.colwise().mean();
  x.rowwise() -= centroid;

  // Centered class centroids, one column per class.
  Eigen::MatrixXd deltas = Eigen::MatrixXd::Zero(dim, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    deltas.col(set.label(static_cast<std::size_t>(i))) += x.row(i).transpose();
  }
  for (Eigen::Index c = 0; c < num_classes; ++c) {
    deltas.col(c) /= counts[static_cast<std::size_t>(c)];
  }

  Eigen::MatrixXd solved;  // (S + rho I)^-1 d_c, one column per class
  if (dim <= n) {
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(dim, dim);
    scatter.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    scatter.diagonal().array() += cfg.ridge_rho;
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(scatter);
    if (llt.info() != Eigen::Success) {
      throw NumericError("DI: Cholesky factorization of the scatter failed");
    }
    solved = llt.solve(deltas);
  } else {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x);
    gram.diagonal().array() += cfg.ridge_rho;
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw NumericError("DI: Cholesky factorization of the Gram matrix failed");
    }
    Eigen::MatrixXd indicators = Eigen::MatrixXd::Zero(n, num_classes);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(set.label(static_cast<std::size_t>(i)));
      indicators(i, c) = 1.0 / counts[static_cast<std::size_t>(c)];
    }
    solved = x.transpose() * llt.solve(indicators);
  }

  double total = 0.0;
  for (Eigen::Index c = 0; c < num_classes; ++c) {
    total += counts[static_cast<std::size_t>(c)] * deltas.col(c).dot(solved.col(c));
  }
  if (!std::isfinite(total)) throw NumericError("DI: non-finite result");
  return std::max(0.0, total);
}

}  // namespace chanprune
