#include "meshmotion/pca.hpp"

#include <Eigen/SVD>
#include <string>

namespace meshmotion {

PcaBasis fit_pca(const RowMatrix& samples, int k) {
  const Eigen::Index m = samples.rows(), d = samples.cols();
  if (k < 1) throw Error("fit_pca: k must be positive");
  if (k > m) throw Error("fit_pca: k=" + std::to_string(k) + " exceeds the sample count " + std::to_string(m));
  if (k > d) throw Error("fit_pca: k=" + std::to_string(k) + " exceeds the dimension " + std::to_string(d));
  PcaBasis b;
  b.mean = samples.colwise().mean();
  const RowMatrix centred = samples.rowwise() - b.mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  b.components.resize(k, d);
  b.variance.resize(k);
  const double denom = m > 1 ? static_cast<double>(m - 1) : 1.0;
  for (int i = 0; i < k; ++i) {
    Eigen::RowVectorXd c = svd.matrixV().col(i).transpose();
    Eigen::Index arg = 0;
    c.cwiseAbs().maxCoeff(&arg);
    if (c(arg) < 0) c = -c;
    b.components.row(i) = c;
    b.variance(i) = i < sv.size() ? sv(i) * sv(i) / denom : 0.0;
  }
  return b;
}

RowMatrix pca_project(const PcaBasis& basis, const RowMatrix& samples) {
  if (samples.cols() != basis.mean.size()) throw Error("pca_project: sample width does not match the basis");
  return (samples.rowwise() - basis.mean) * basis.components.transpose();
}

RowMatrix pca_reconstruct(const PcaBasis& basis, const RowMatrix& coefficients) {
  if (coefficients.cols() != basis.components.rows()) throw Error("pca_reconstruct: coefficient width does not match k");
  return (coefficients * basis.components).rowwise() + basis.mean;
}

}  // namespace meshmotion
