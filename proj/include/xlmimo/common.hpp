#ifndef XLMIMO_COMMON_HPP
#define XLMIMO_COMMON_HPP

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace xlmimo {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using CArr = Eigen::ArrayXXcd;
using RArr = Eigen::ArrayXXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr Complex kJ{0.0, 1.0};

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline double db2lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin2db(double lin) { return 10.0 * std::log10(lin); }

// Thrown when simulation inputs violate a documented precondition.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw DomainError(what);
}

} // namespace xlmimo

#endif
