#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>

namespace haptrain {

// Piecewise cubic Hermite interpolant with zero tangent at every knot.
//
// Segment i covers [x_i, x_{i+1}] and is stored as polynomial coefficients in
// the local coordinate s = (x - x_i) / h_i, s in [0, 1]:
//   z(s) = c0 + c1 s + c2 s^2 + c3 s^3,   c1 = 0, c2 = 3 dz, c3 = -2 dz.
// With zero end tangents each segment is monotone, so the curve never leaves
// the range spanned by the two knots it joins.
template <typename Scalar>
class ZeroTangentHermite {
public:
    using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Coefficients = Eigen::Matrix<Scalar, Eigen::Dynamic, 4, Eigen::RowMajor>;

    ZeroTangentHermite() = default;

    // xs strictly increasing, same length as zs, at least two knots.
    ZeroTangentHermite(const VectorX& xs, const VectorX& zs) : xs_(xs), coeffs_(xs.size() - 1, 4) {
        for (Eigen::Index i = 0; i + 1 < xs.size(); ++i) {
            const Scalar dz = zs(i + 1) - zs(i);
            coeffs_.row(i) << zs(i), Scalar(0), Scalar(3) * dz, Scalar(-2) * dz;
        }
    }

    Eigen::Index segments() const { return coeffs_.rows(); }
    const VectorX& knots_x() const { return xs_; }
    const Coefficients& coefficients() const { return coeffs_; }

    Scalar front() const { return xs_(0); }
    Scalar back() const { return xs_(xs_.size() - 1); }

    // Caller guarantees front() <= x <= back().
    Scalar operator()(Scalar x) const {
        const Eigen::Index i = segment_of(x);
        const Scalar h = xs_(i + 1) - xs_(i);
        const Scalar s = (x - xs_(i)) / h;
        const auto c = coeffs_.row(i);
        return c(0) + s * (c(1) + s * (c(2) + s * c(3)));
    }

    Scalar derivative(Scalar x) const {
        const Eigen::Index i = segment_of(x);
        const Scalar h = xs_(i + 1) - xs_(i);
        const Scalar s = (x - xs_(i)) / h;
        const auto c = coeffs_.row(i);
        return (c(1) + s * (Scalar(2) * c(2) + s * Scalar(3) * c(3))) / h;
    }

    // Largest |dz/dx| over the whole curve (attained at segment midpoints).
    Scalar max_slope() const {
        Scalar m(0);
        for (Eigen::Index i = 0; i < coeffs_.rows(); ++i) {
            const Scalar h = xs_(i + 1) - xs_(i);
            m = std::max<Scalar>(m, Scalar(1.5) * std::abs(coeffs_(i, 2) / Scalar(3)) / h);
        }
        return m;
    }

private:
    Eigen::Index segment_of(Scalar x) const {
        const auto* begin = xs_.data();
        const auto* end = xs_.data() + xs_.size();
        auto it = std::upper_bound(begin, end, x);
        Eigen::Index i = static_cast<Eigen::Index>(it - begin) - 1;
        return std::clamp<Eigen::Index>(i, 0, coeffs_.rows() - 1);
    }

    VectorX xs_;
    Coefficients coeffs_;
};

}  // namespace haptrain
