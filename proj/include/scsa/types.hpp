#pragma once

// Core value types shared by every module: signals, MVAR coefficients,
// mixing matrices and the two equivalent model parameterizations.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace scsa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Condition-number bound below which a square matrix counts as invertible.
inline constexpr double kMaxConditionNumber = 1e8;

/// Spectral radius of the MVAR companion matrix considered stable.
inline constexpr double kStableSpectralRadius = 0.95;

double condition_number(const Matrix& m);
bool is_invertible(const Matrix& m);

/// D channels x T samples; rows are channels, columns time points.
class TimeSeries {
public:
    TimeSeries() = default;
    explicit TimeSeries(Matrix data);

    const Matrix& data() const { return data_; }
    Eigen::Index channels() const { return data_.rows(); }
    Eigen::Index samples() const { return data_.cols(); }

    /// Contiguous sub-block of columns [first, first + count).
    TimeSeries slice(Eigen::Index first, Eigen::Index count) const;

private:
    Matrix data_;
};

/// Lag matrices H(1) .. H(P) of a D-dimensional MVAR process.
class MvarCoefficients {
public:
    MvarCoefficients() = default;
    MvarCoefficients(Eigen::Index dim, std::vector<Matrix> lags);

    static MvarCoefficients zeros(Eigen::Index dim, std::size_t order);

    std::size_t order() const { return lags_.size(); }
    Eigen::Index dim() const { return dim_; }
    const Matrix& lag(std::size_t p) const { return lags_.at(p - 1); }  // 1-based
    Matrix& lag(std::size_t p) { return lags_.at(p - 1); }
    const std::vector<Matrix>& lags() const { return lags_; }

    /// l2 norm of (H_df(1), ..., H_df(P)).
    double group_norm(Eigen::Index d, Eigen::Index f) const;
    /// D x D matrix of all group norms (diagonal included).
    Matrix group_norms() const;

    /// Companion-form block matrix of size (D P) x (D P).
    Matrix companion() const;
    double spectral_radius() const;

private:
    Eigen::Index dim_ = 0;
    std::vector<Matrix> lags_;
};

class MixingMatrix {
public:
    MixingMatrix() = default;
    explicit MixingMatrix(Matrix m);

    const Matrix& matrix() const { return m_; }
    Eigen::Index dim() const { return m_.rows(); }

private:
    Matrix m_;
};

/// Demixing matrix B = M^-1 together with source MVAR coefficients.
struct SourceModel {
    Matrix demixing;
    MvarCoefficients mvar;

    Eigen::Index dim() const { return demixing.rows(); }
    std::size_t order() const { return mvar.order(); }
    /// Throws DegenerateModelError / ShapeError when the invariants fail.
    void validate() const;
};

/// FIR inverse filter W(0) .. W(P) mapping observations to innovations.
struct FilterBank {
    std::vector<Matrix> taps;

    Eigen::Index dim() const { return taps.empty() ? 0 : taps.front().rows(); }
    std::size_t order() const { return taps.empty() ? 0 : taps.size() - 1; }
    void validate() const;
};

// Flat parameter layouts. Every matrix is stored row-major:
//   filter bank  -> [vec(W0); vec(W1); ...; vec(WP)]
//   source model -> [vec(B);  vec(H1); ...; vec(HP)]
Vector flatten(const FilterBank& fb);
FilterBank unflatten_filter_bank(const Vector& x, Eigen::Index dim, std::size_t order);
Vector flatten(const SourceModel& model);
SourceModel unflatten_source_model(const Vector& x, Eigen::Index dim, std::size_t order);

/// Offset of H(p)_{df} in the source-model layout.
inline Eigen::Index source_model_index(Eigen::Index dim, std::size_t p, Eigen::Index d,
                                       Eigen::Index f) {
    return static_cast<Eigen::Index>(p) * dim * dim + d * dim + f;
}

}  // namespace scsa
