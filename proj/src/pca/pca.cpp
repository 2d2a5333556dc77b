/*
  Copyright 2026 The protoguide Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

  http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/

#include "pca/pca.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace pg {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

PrincipalComponents fit_pca(const Tensor3& keys, int n_components) {
  const int nc = keys.channels;
  const int L = keys.height * keys.width;
  require(n_components >= 1 && n_components <= std::min(nc, L), ErrorKind::Parameter,
          "PCA: N_b=" + std::to_string(n_components) + " exceeds min(N_c, H*W)=" + std::to_string(std::min(nc, L)));
  for (double v : keys.data) require(std::isfinite(v), ErrorKind::Parameter, "PCA: non-finite key");

  PrincipalComponents pc;
  pc.n_components = n_components;
  pc.channels = nc;
  pc.height = keys.height;
  pc.width = keys.width;

  Eigen::Map<const Mat> X(keys.data.data(), nc, L);  // channel-major
  Eigen::VectorXd mean(nc);
  for (int c = 0; c < nc; ++c) {
    double acc = 0.0;
    bool flat = true;
    for (int p = 0; p < L; ++p) {
      acc += X(c, p);
      flat = flat && X(c, p) == X(c, 0);
    }
    mean(c) = flat ? X(c, 0) : acc / L;  // keeps constant channels exactly zero-variance
  }
  const Mat centered = X.colwise() - mean;
  const Mat cov = centered * centered.transpose() / static_cast<double>(L);
  pc.mean.assign(mean.data(), mean.data() + nc);

  const double trace = cov.trace();
  pc.basis.assign(static_cast<std::size_t>(n_components) * nc, 0.0);
  pc.eigenvalues.assign(n_components, 0.0);
  pc.active.assign(n_components, 0);
  if (!(trace > 0.0)) {
    pc.degenerate = true;
    for (int i = 0; i < n_components; ++i) pc.basis[static_cast<std::size_t>(i) * nc + i] = 1.0;
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> solver(cov);
    require(solver.info() == Eigen::Success, ErrorKind::Parameter, "PCA: eigensolver failed");
    for (int i = 0; i < n_components; ++i) {
      const int col = nc - 1 - i;  // ascending order from the solver
      Eigen::VectorXd v = solver.eigenvectors().col(col);
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v(arg) < 0) v = -v;
      const double lambda = solver.eigenvalues()(col);
      pc.eigenvalues[i] = std::max(lambda, 0.0);
      pc.active[i] = lambda > kRankTolerance * trace;
      for (int c = 0; c < nc; ++c) pc.basis[static_cast<std::size_t>(i) * nc + c] = v(c);
    }
  }
  pc.components = project_onto(pc, keys);
  return pc;
}

std::vector<double> project_onto(const PrincipalComponents& pc, const Tensor3& keys) {
  require(keys.channels == pc.channels, ErrorKind::Contract,
          "projection: key channels " + std::to_string(keys.channels) + " vs basis " + std::to_string(pc.channels));
  const int L = keys.height * keys.width;
  Eigen::Map<const Mat> X(keys.data.data(), pc.channels, L);
  Eigen::Map<const Mat> B(pc.basis.data(), pc.n_components, pc.channels);
  Eigen::Map<const Eigen::VectorXd> mu(pc.mean.data(), pc.channels);
  const Mat coords = B * (X.colwise() - mu);
  std::vector<double> out(coords.data(), coords.data() + coords.size());
  for (int i = 0; i < pc.n_components; ++i)
    if (!pc.active[i]) std::fill(out.begin() + static_cast<std::ptrdiff_t>(i) * L, out.begin() + static_cast<std::ptrdiff_t>(i + 1) * L, 0.0);
  return out;
}

}  // namespace pg
