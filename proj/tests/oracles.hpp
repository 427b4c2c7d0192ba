#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

// Independent reference computations for the drift-diffusion model, written
// directly from the linear-Gaussian state-space recursions.
namespace oracle {

struct Moments {
  double mean;
  double var;
};

inline double normal_logpdf(double x, double m, double v) {
  return -0.5 * std::log(2 * M_PI * v) - (x - m) * (x - m) / (2 * v);
}

// Scalar Kalman filter + RTS smoother for x_1 ~ N(a, 1), x_t = x_{t-1} + a + w,
// y_T = x_T + a + v, unit noise; observation only at T.
struct GddKalman {
  int T;
  double alpha;
  double y;
  double log_likelihood = 0;
  std::vector<Moments> filtered, predicted, smoothed;

  GddKalman(int T_, double alpha_, double y_) : T(T_), alpha(alpha_), y(y_) {
    Moments m{alpha, 1.0};
    for (int t = 1; t <= T; ++t) {
      if (t > 1) m = {m.mean + alpha, m.var + 1.0};
      predicted.push_back(m);
      if (t == T) {
        const double s = m.var + 1.0;
        const double innov = y - (m.mean + alpha);
        log_likelihood = normal_logpdf(y, m.mean + alpha, s);
        const double gain = m.var / s;
        m = {m.mean + gain * innov, m.var * (1 - gain)};
      }
      filtered.push_back(m);
    }
    smoothed.resize(T);
    smoothed[T - 1] = filtered[T - 1];
    for (int t = T - 1; t >= 1; --t) {
      const Moments& f = filtered[t - 1];
      const Moments& p = predicted[t];
      const double j = f.var / p.var;
      smoothed[t - 1] = {f.mean + j * (smoothed[t].mean - p.mean),
                         f.var + j * j * (smoothed[t].var - p.var)};
    }
  }
};

// Joint Gaussian of (x_1..x_T, y_T) assembled from the noise representation and
// conditioned by dense linear algebra; returns p(x_t | x_{t-1}, y_T).
inline Moments gdd_conditional(int T, double alpha, int t, double x_prev, double y) {
  const int n = T + 1;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);  // z = mu + L eps
  Eigen::VectorXd mu(n);
  for (int i = 0; i < T; ++i) {
    mu(i) = (i + 1) * alpha;
    for (int j = 0; j <= i; ++j) L(i, j) = 1.0;
  }
  mu(T) = (T + 1) * alpha;
  for (int j = 0; j < n; ++j) L(T, j) = 1.0;
  const Eigen::MatrixXd S = L * L.transpose();
  std::vector<int> cond;
  std::vector<double> vals;
  if (t > 1) {
    cond.push_back(t - 2);
    vals.push_back(x_prev);
  }
  cond.push_back(T);
  vals.push_back(y);
  const int k = static_cast<int>(cond.size());
  Eigen::MatrixXd Scc(k, k);
  Eigen::VectorXd Sxc(k), diff(k);
  for (int a = 0; a < k; ++a) {
    Sxc(a) = S(t - 1, cond[a]);
    diff(a) = vals[a] - mu(cond[a]);
    for (int b = 0; b < k; ++b) Scc(a, b) = S(cond[a], cond[b]);
  }
  const Eigen::VectorXd w = Scc.ldlt().solve(Sxc);
  return {mu(t - 1) + w.dot(diff), S(t - 1, t - 1) - w.dot(Sxc)};
}

}  // namespace oracle
