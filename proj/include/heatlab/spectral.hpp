#pragma once

#include "heatlab/axioms.hpp"

#include <Eigen/SparseCholesky>

namespace heatlab {

struct SpectralData {
  std::string model_id;
  std::uint64_t model_hash = 0;
  Vec eigenvalues;  // ascending
  Mat eigenfields;  // N x k, mu-orthonormal columns
  double residual = 0.0;

  Index count() const { return eigenvalues.size(); }
  ScalarField field(Index k) const { return {model_id, eigenfields.col(k)}; }
};

// -D^{1/2} L D^{-1/2}: symmetric positive semidefinite with the spectrum of -L.
inline Eigen::SparseMatrix<double> symmetrized_operator(const DiscretizedModel& m) {
  Vec s = m.mu.cwiseSqrt();
  Vec si = s.cwiseInverse();
  Eigen::SparseMatrix<double> S = -(s.asDiagonal() * Eigen::SparseMatrix<double>(m.L) * si.asDiagonal());
  Eigen::SparseMatrix<double> St = S.transpose();
  S = 0.5 * (S + St);
  S.makeCompressed();
  return S;
}

namespace detail {

// Flip each column so its largest-magnitude entry is positive.
inline void fix_signs(Mat& X) {
  for (Index c = 0; c < X.cols(); ++c) {
    Index r = 0;
    X.col(c).cwiseAbs().maxCoeff(&r);
    if (X(r, c) < 0) X.col(c) *= -1.0;
  }
}

inline SpectralData finish(const DiscretizedModel& m, const Eigen::SparseMatrix<double>& S, Vec lam, Mat X) {
  fix_signs(X);
  SpectralData sd;
  sd.model_id = m.id;
  sd.model_hash = model_hash(m);
  double res = 0.0;
  for (Index c = 0; c < X.cols(); ++c) res = std::max(res, (S * X.col(c) - lam[c] * X.col(c)).norm());
  sd.residual = res;
  for (Index c = 0; c < lam.size(); ++c)
    if (std::abs(lam[c]) < 1e-12) lam[c] = 0.0;
  sd.eigenvalues = lam;
  sd.eigenfields = m.mu.cwiseSqrt().cwiseInverse().asDiagonal() * X;
  return sd;
}

}  // namespace detail

inline SpectralData spectral_decompose_dense(const DiscretizedModel& m, Index k) {
  require(k >= 1 && k <= m.size(), ErrorKind::invalid_argument, "eigenpair count out of range");
  Eigen::SparseMatrix<double> S = symmetrized_operator(m);
  Eigen::SelfAdjointEigenSolver<Mat> es(Mat(S), Eigen::ComputeEigenvectors);
  require(es.info() == Eigen::Success, ErrorKind::non_convergence, "dense eigensolver failed");
  return detail::finish(m, S, es.eigenvalues().head(k), es.eigenvectors().leftCols(k));
}

struct LanczosOptions {
  std::uint64_t seed = 0;
  double tol = 1e-9;     // accepted when |S x - lambda x| <= tol * max(1, lambda)
  int max_runs = 64;
};

// Shift-invert Lanczos with full reorthogonalization on the symmetrized
// operator. Converged Ritz pairs are locked and the iteration restarts from a
// fresh random vector orthogonal to them, which recovers repeated eigenvalues.
inline SpectralData spectral_decompose(const DiscretizedModel& m, Index k, const LanczosOptions& opt = {}) {
  const Index N = m.size();
  require(k >= 1 && k <= N, ErrorKind::invalid_argument, "eigenpair count out of range");
  if (N <= 400) return spectral_decompose_dense(m, k);

  Eigen::SparseMatrix<double> S = symmetrized_operator(m);
  const double dmean = S.diagonal().mean();
  const double sigma = 1e-4 * dmean;
  Eigen::SparseMatrix<double> A = S;
  for (Index i = 0; i < N; ++i) A.coeffRef(i, i) += sigma;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  require(ldlt.info() == Eigen::Success, ErrorKind::non_convergence, "shifted factorization failed");

  Rng rng(opt.seed);
  Mat Q(N, 0);
  std::vector<double> locked;
  auto orth_against = [](const Mat& B, Index cols, Vec& w) {
    if (cols == 0) return;
    for (int pass = 0; pass < 2; ++pass) w -= B.leftCols(cols) * (B.leftCols(cols).transpose() * w);
  };
  auto kth_smallest = [&](Index kk) {
    std::vector<double> v = locked;
    std::sort(v.begin(), v.end());
    return static_cast<Index>(v.size()) >= kk ? v[kk - 1] : std::numeric_limits<double>::infinity();
  };

  int runs = 0;
  while (true) {
    require(runs < opt.max_runs, ErrorKind::non_convergence,
            "Lanczos did not converge within " + std::to_string(opt.max_runs) + " restarts");
    ++runs;
    const Index nlock = Q.cols();
    const Index rem = N - nlock;
    if (rem == 0) break;
    const double before = kth_smallest(k);
    Index want = std::max<Index>(k - nlock, 20);
    Index steps = std::min<Index>(rem, std::max<Index>(2 * want + 40, 150));

    Mat V(N, steps + 1);
    Vec alpha(steps), beta(steps);
    Vec v = random_values(N, rng);
    orth_against(Q, nlock, v);
    v.normalize();
    V.col(0) = v;
    Index used = steps;
    for (Index j = 0; j < steps; ++j) {
      Vec w = ldlt.solve(Vec(V.col(j)));
      alpha[j] = V.col(j).dot(w);
      w -= alpha[j] * V.col(j);
      if (j > 0) w -= beta[j - 1] * V.col(j - 1);
      orth_against(V, j + 1, w);
      orth_against(Q, nlock, w);
      beta[j] = w.norm();
      if (beta[j] < 1e-12 * alpha.head(j + 1).cwiseAbs().maxCoeff() || j + 1 == steps) {
        used = j + 1;
        break;
      }
      V.col(j + 1) = w / beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Mat> tri;
    Vec sub = used > 1 ? Vec(beta.head(used - 1)) : Vec(Vec::Zero(0));
    tri.computeFromTridiagonal(alpha.head(used), sub, Eigen::ComputeEigenvectors);
    Mat X = V.leftCols(used) * tri.eigenvectors();

    bool found_below = false;
    Index accepted = 0;
    for (Index c = used - 1; c >= 0; --c) {  // largest theta first = smallest lambda
      Vec x = X.col(c);
      x.normalize();
      double lam = x.dot(S * x);
      double res = (S * x - lam * x).norm();
      // lock only the leading converged run; deeper converged Ritz pairs
      // (the far end of the spectrum) would leave gaps
      if (res > opt.tol * std::max(1.0, std::abs(lam))) break;
      Vec y = x;
      orth_against(Q, Q.cols(), y);
      double nrm = y.norm();
      if (nrm < 0.5) continue;
      y /= nrm;
      Q.conservativeResize(N, Q.cols() + 1);
      Q.col(Q.cols() - 1) = y;
      locked.push_back(lam);
      ++accepted;
      if (lam < before - opt.tol * std::max(1.0, before)) found_below = true;
    }
    if (static_cast<Index>(locked.size()) >= k && !found_below && std::isfinite(before)) break;
    if (static_cast<Index>(locked.size()) >= k && accepted == 0) break;
  }

  // Rayleigh-Ritz on the locked subspace, then keep the k smallest.
  Mat H = Q.transpose() * (S * Q);
  H = 0.5 * (H + H.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> rr(H);
  Mat X = Q * rr.eigenvectors().leftCols(k);
  Vec lam = rr.eigenvalues().head(k);
  SpectralData sd = detail::finish(m, S, lam, X);
  require(sd.residual <= 1e-6 * std::max(1.0, lam.cwiseAbs().maxCoeff()), ErrorKind::non_convergence,
          "eigenpair residual too large: " + std::to_string(sd.residual));
  return sd;
}

}  // namespace heatlab
