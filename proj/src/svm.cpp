#include <cmath>
#include <fstream>
#include <sstream>

#include "sixo/errors.hpp"
#include "sixo/model.hpp"
#include "sixo/ops.hpp"

namespace sixo {

SvmModel::SvmModel(int dim, int T) : N_(dim), T_(T) {
  if (dim < 1 || T < 1) throw ConfigError("SVM dimension and length must be positive");
  declare("mu", Matrix::Zero(1, dim));
  declare("phi_raw", Matrix::Zero(1, dim));
  declare("log_beta", Matrix::Zero(1, dim));
  declare("log_q", Matrix::Zero(1, dim));
}

std::vector<char> SvmModel::observation_mask() const {
  return std::vector<char>(static_cast<std::size_t>(T_), 1);
}

std::unique_ptr<StateSpaceModel> SvmModel::clone() const { return std::make_unique<SvmModel>(*this); }

Tensor SvmModel::phi() const { return tanh(param("phi_raw")); }
Tensor SvmModel::q() const { return exp(param("log_q")); }
Tensor SvmModel::beta() const { return exp(param("log_beta")); }

DiagonalGaussian SvmModel::initial(Index) const { return {Tensor::zeros(1, N_), q()}; }

DiagonalGaussian SvmModel::transition(const Tensor& x_prev, int t) const {
  check_step(t, 2);
  const Tensor& mu = param("mu");
  return {mu + phi() * (x_prev - mu), q()};
}

Tensor SvmModel::observation_component_logpdf(int d, const Tensor& x_state, const Tensor& y_d,
                                              int t) const {
  check_step(t, 1);
  const Tensor log_beta = col(param("log_beta"), d);
  return gaussian_logpdf(y_d, Tensor::scalar(0.0), exp(log_beta * 2.0 + x_state));
}

Tensor SvmModel::observation_logpdf(const Tensor& x, const Tensor& y, int t) const {
  check_step(t, 1);
  if (x.cols() != N_ || y.cols() != N_) throw ContractViolation("SVM dimension mismatch");
  return row_sum(gaussian_logpdf(y, Tensor::scalar(0.0), exp(param("log_beta") * 2.0 + x)));
}

Matrix SvmModel::sample_observation(const Matrix& x, int, RngStream& rng) const {
  const Matrix eps = rng.normal(x.rows(), N_);
  const RowVector b = beta().value();
  Matrix y = (x.array() * 0.5).exp() * eps.array();
  return y.array().rowwise() * b.array();
}

Matrix load_returns_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = line.back() != ',';
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw ConfigError("non-numeric or missing value in '" + path + "': " + line);
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError("ragged row in '" + path + "'");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("no data rows in '" + path + "'");
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return out;
}

Observations observations_from_matrix(const Matrix& values) {
  std::vector<Matrix> ys;
  for (Index t = 0; t < values.rows(); ++t) ys.emplace_back(values.row(t));
  return Observations(std::move(ys), std::vector<char>(static_cast<std::size_t>(values.rows()), 1));
}

}  // namespace sixo
