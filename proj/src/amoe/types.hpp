#pragma once

#include <Eigen/Dense>

namespace amoe {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace amoe
