#include "scsa/types.hpp"

#include "scsa/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>

namespace scsa {

double condition_number(const Matrix& m) {
    if (m.size() == 0) return std::numeric_limits<double>::infinity();
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
    return sv(0) / smin;
}

bool is_invertible(const Matrix& m) {
    return m.rows() == m.cols() && m.allFinite() && condition_number(m) < kMaxConditionNumber;
}

TimeSeries::TimeSeries(Matrix data) : data_(std::move(data)) {
    if (data_.rows() <= 0 || data_.cols() <= 0)
        throw ShapeError("time series needs at least one channel and one sample");
    for (Eigen::Index t = 0; t < data_.cols(); ++t)
        for (Eigen::Index d = 0; d < data_.rows(); ++d)
            if (!std::isfinite(data_(d, t)))
                throw NumericError("nonfinite sample at channel " + std::to_string(d) +
                                   ", time " + std::to_string(t));
}

TimeSeries TimeSeries::slice(Eigen::Index first, Eigen::Index count) const {
    if (first < 0 || count <= 0 || first + count > samples())
        throw ShapeError("time-series slice out of range");
    return TimeSeries(data_.middleCols(first, count));
}

MvarCoefficients::MvarCoefficients(Eigen::Index dim, std::vector<Matrix> lags)
    : dim_(dim), lags_(std::move(lags)) {
    if (dim_ <= 0) throw ShapeError("MVAR dimension must be positive");
    for (const auto& h : lags_) {
        if (h.rows() != dim_ || h.cols() != dim_)
            throw ShapeError("MVAR lag matrix must be D x D");
        if (!h.allFinite()) throw NumericError("nonfinite MVAR coefficient");
    }
}

MvarCoefficients MvarCoefficients::zeros(Eigen::Index dim, std::size_t order) {
    return MvarCoefficients(dim, std::vector<Matrix>(order, Matrix::Zero(dim, dim)));
}

double MvarCoefficients::group_norm(Eigen::Index d, Eigen::Index f) const {
    double sq = 0.0;
    for (const auto& h : lags_) sq += h(d, f) * h(d, f);
    return std::sqrt(sq);
}

Matrix MvarCoefficients::group_norms() const {
    Matrix out = Matrix::Zero(dim_, dim_);
    for (const auto& h : lags_) out.array() += h.array().square();
    return out.array().sqrt();
}

Matrix MvarCoefficients::companion() const {
    const Eigen::Index d = dim_;
    const auto p = static_cast<Eigen::Index>(order());
    if (p == 0) return Matrix::Zero(d, d);
    Matrix c = Matrix::Zero(d * p, d * p);
    for (Eigen::Index k = 0; k < p; ++k) c.block(0, k * d, d, d) = lags_[k];
    if (p > 1) c.block(d, 0, d * (p - 1), d * (p - 1)).setIdentity();
    return c;
}

double MvarCoefficients::spectral_radius() const {
    if (order() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(companion(), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

MixingMatrix::MixingMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0) throw ShapeError("mixing matrix must be square");
    if (!m_.allFinite()) throw NumericError("nonfinite mixing matrix entry");
    if (condition_number(m_) >= kMaxConditionNumber)
        throw DegenerateModelError("mixing matrix is not invertible");
}

void SourceModel::validate() const {
    if (demixing.rows() != demixing.cols() || demixing.rows() == 0)
        throw ShapeError("demixing matrix must be square");
    if (mvar.order() > 0 && mvar.dim() != demixing.rows())
        throw ShapeError("MVAR dimension does not match demixing matrix");
    if (!is_invertible(demixing)) throw DegenerateModelError("demixing matrix is singular");
}

void FilterBank::validate() const {
    if (taps.empty()) throw ShapeError("filter bank needs at least W(0)");
    const auto d = taps.front().rows();
    for (const auto& w : taps) {
        if (w.rows() != d || w.cols() != d) throw ShapeError("filter taps must be D x D");
        if (!w.allFinite()) throw NumericError("nonfinite filter tap");
    }
    if (!is_invertible(taps.front())) throw DegenerateModelError("W(0) is singular");
}

namespace {

void put_row_major(Vector& x, Eigen::Index offset, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) x(offset++) = m(r, c);
}

Matrix get_row_major(const Vector& x, Eigen::Index offset, Eigen::Index dim) {
    Matrix m(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r)
        for (Eigen::Index c = 0; c < dim; ++c) m(r, c) = x(offset++);
    return m;
}

}  // namespace

Vector flatten(const FilterBank& fb) {
    const auto d = fb.dim();
    Vector x(d * d * static_cast<Eigen::Index>(fb.taps.size()));
    for (std::size_t p = 0; p < fb.taps.size(); ++p)
        put_row_major(x, static_cast<Eigen::Index>(p) * d * d, fb.taps[p]);
    return x;
}

FilterBank unflatten_filter_bank(const Vector& x, Eigen::Index dim, std::size_t order) {
    if (x.size() != dim * dim * static_cast<Eigen::Index>(order + 1))
        throw ShapeError("flat filter-bank vector has wrong length");
    FilterBank fb;
    for (std::size_t p = 0; p <= order; ++p)
        fb.taps.push_back(get_row_major(x, static_cast<Eigen::Index>(p) * dim * dim, dim));
    return fb;
}

Vector flatten(const SourceModel& model) {
    const auto d = model.dim();
    Vector x(d * d * static_cast<Eigen::Index>(model.order() + 1));
    put_row_major(x, 0, model.demixing);
    for (std::size_t p = 1; p <= model.order(); ++p)
        put_row_major(x, static_cast<Eigen::Index>(p) * d * d, model.mvar.lag(p));
    return x;
}

SourceModel unflatten_source_model(const Vector& x, Eigen::Index dim, std::size_t order) {
    if (x.size() != dim * dim * static_cast<Eigen::Index>(order + 1))
        throw ShapeError("flat source-model vector has wrong length");
    std::vector<Matrix> lags;
    for (std::size_t p = 1; p <= order; ++p)
        lags.push_back(get_row_major(x, static_cast<Eigen::Index>(p) * dim * dim, dim));
    return SourceModel{get_row_major(x, 0, dim), MvarCoefficients(dim, std::move(lags))};
}

}  // namespace scsa
