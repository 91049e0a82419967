#include "samlab/diagnostics.hpp"

#include <cmath>
#include <stdexcept>

namespace samlab {

double balancedness(const Vec& x, const Vec& y) {
  return 0.5 * (x.squaredNorm() - y.squaredNorm());
}

double c_gap(const Vec& x, const Vec& y) {
  return std::abs(x.norm() - y.norm());
}

double predicted_dbdt_nop(const Vec& gx, const Vec& gy, double rho) {
  const double gx2 = gx.squaredNorm();
  const double gy2 = gy.squaredNorm();
  const double joint = gx2 + gy2;
  if (joint <= 0.0) {
    throw std::domain_error("predicted_dbdt_nop: zero joint gradient");
  }
  return rho * (gx2 - gy2) / std::sqrt(joint);
}

double predicted_dbdt_op(const Vec& x, const Vec& y, double fprime, double rho,
                         const std::vector<double>* m_terms) {
  const double norms = x.squaredNorm() + y.squaredNorm();
  if (norms <= 0.0) {
    throw std::domain_error("predicted_dbdt_op: zero parameter norms");
  }
  double magnitude = std::abs(fprime);
  if (m_terms != nullptr) {
    if (m_terms->empty()) {
      throw std::domain_error("predicted_dbdt_op: empty m_terms");
    }
    magnitude = 0.0;
    for (double f : *m_terms) magnitude += std::abs(f);
    magnitude /= static_cast<double>(m_terms->size());
  }
  return -2.0 * rho * magnitude * balancedness(x, y) / std::sqrt(norms);
}

double balance_threshold(const Vec& x, const Vec& y, const Mat& grad_w) {
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx <= 0.0 || ny <= 0.0) {
    throw std::domain_error("balance_threshold: degenerate parameter norms");
  }
  // Balanced representative of the same product: ||xb|| = ||yb||,
  // xb yb^T = x y^T.
  const double scale = std::sqrt(nx / ny);
  const Vec xb = x / scale;
  const Vec yb = scale * y;

  const double gyb = (grad_w * yb).norm();
  const double gxb = (grad_w.transpose() * xb).norm();
  if (gxb <= 0.0 || gyb <= 0.0) {
    throw std::domain_error("balance_threshold: degenerate gradient norms");
  }
  const double ab2 = gyb / gxb;
  return 0.5 * (ab2 * xb.squaredNorm() - yb.squaredNorm() / ab2);
}

double sharpness_op(const Vec& x, const Vec& y, double fsecond) {
  return fsecond * (x.squaredNorm() + y.squaredNorm());
}

}  // namespace samlab
