#include "fairload/nn.hpp"

#include <cmath>

namespace fairload::nn {

void init_uniform_fanin(Matrix& w, int fan_in, rng::Stream& rs) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            w(r, c) = rs.uniform(-bound, bound);
}

// ---- Dense -----------------------------------------------------------------

void Dense::init(int in, int out, rng::Stream& rs) {
    w.resize(in, out);
    init_uniform_fanin(w, in, rs);
    b = Matrix::Zero(1, out);
    gw = Matrix::Zero(in, out);
    gb = Matrix::Zero(1, out);
}

Matrix Dense::apply(const Matrix& x) const {
    return (x * w).rowwise() + b.row(0);
}

Matrix Dense::forward(const Matrix& x) {
    x_ = x;
    return apply(x);
}

Matrix Dense::backward(const Matrix& dy, bool accumulate) {
    if (accumulate) {
        gw.noalias() += x_.transpose() * dy;
        gb.row(0) += dy.colwise().sum();
    }
    return dy * w.transpose();
}

void Dense::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w, &gw, true});
    out.push_back({prefix + ".b", &b, &gb, true});
}

// ---- Conv1d ----------------------------------------------------------------

void Conv1d::init(int in, int out, int k, rng::Stream& rs) {
    require_data(k % 2 == 1, "conv kernel size must be odd");
    in_ch = in;
    out_ch = out;
    ksize = k;
    w.resize(in * k, out);
    init_uniform_fanin(w, in * k, rs);
    b = Matrix::Zero(1, out);
    gw = Matrix::Zero(in * k, out);
    gb = Matrix::Zero(1, out);
}

Matrix Conv1d::im2col(const Matrix& x) const {
    const int rows = static_cast<int>(x.rows());
    const int pad = (ksize - 1) / 2;
    Matrix col = Matrix::Zero(rows, in_ch * ksize);
    for (int dk = 0; dk < ksize; ++dk) {
        const int lo = std::max(0, pad - dk);
        const int hi = std::min(rows, rows + pad - dk);
        if (hi <= lo) continue;
        for (int ci = 0; ci < in_ch; ++ci)
            col.block(lo, ci * ksize + dk, hi - lo, 1) =
                x.block(lo + dk - pad, ci, hi - lo, 1);
    }
    return col;
}

Matrix Conv1d::apply(const Matrix& x) const {
    return (im2col(x) * w).rowwise() + b.row(0);
}

// The batch is stacked into one [N*L x in_ch*ksize] matrix so each call runs
// a single GEMM instead of one per sample.
std::vector<Matrix> Conv1d::forward(const std::vector<Matrix>& xs) {
    const int rows = static_cast<int>(xs.front().rows());
    const int n = static_cast<int>(xs.size());
    stacked_cols_.resize(static_cast<Eigen::Index>(n) * rows, in_ch * ksize);
    rows_ = rows;
    for (int i = 0; i < n; ++i)
        stacked_cols_.middleRows(static_cast<Eigen::Index>(i) * rows, rows) =
            im2col(xs[static_cast<size_t>(i)]);
    const Matrix y = (stacked_cols_ * w).rowwise() + b.row(0);
    std::vector<Matrix> ys;
    ys.reserve(xs.size());
    for (int i = 0; i < n; ++i)
        ys.push_back(y.middleRows(static_cast<Eigen::Index>(i) * rows, rows));
    return ys;
}

std::vector<Matrix> Conv1d::backward(const std::vector<Matrix>& dys, bool want_dx,
                                     bool accumulate) {
    const int pad = (ksize - 1) / 2;
    const int n = static_cast<int>(dys.size());
    Matrix dy_stack(static_cast<Eigen::Index>(n) * rows_, out_ch);
    for (int i = 0; i < n; ++i)
        dy_stack.middleRows(static_cast<Eigen::Index>(i) * rows_, rows_) =
            dys[static_cast<size_t>(i)];
    if (accumulate) {
        gw.noalias() += stacked_cols_.transpose() * dy_stack;
        gb.row(0) += dy_stack.colwise().sum();
    }
    std::vector<Matrix> dxs;
    if (want_dx) {
        const Matrix dcol_stack = dy_stack * w.transpose();
        dxs.reserve(dys.size());
        for (int i = 0; i < n; ++i) {
            const auto dcol =
                dcol_stack.middleRows(static_cast<Eigen::Index>(i) * rows_, rows_);
            Matrix dx = Matrix::Zero(rows_, in_ch);
            for (int dk = 0; dk < ksize; ++dk) {
                const int lo = std::max(0, pad - dk);
                const int hi = std::min(rows_, rows_ + pad - dk);
                if (hi <= lo) continue;
                for (int ci = 0; ci < in_ch; ++ci)
                    dx.block(lo + dk - pad, ci, hi - lo, 1) +=
                        dcol.block(lo, ci * ksize + dk, hi - lo, 1);
            }
            dxs.push_back(std::move(dx));
        }
    }
    return dxs;
}

void Conv1d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w, &gw, true});
    out.push_back({prefix + ".b", &b, &gb, true});
}

// ---- MaxPool1d ---------------------------------------------------------------

Matrix MaxPool1d::apply(const Matrix& x) const {
    require_data(x.rows() % 2 == 0, "max-pool input length must be even");
    Matrix y(x.rows() / 2, x.cols());
    for (Eigen::Index t = 0; t < y.rows(); ++t)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            y(t, c) = std::max(x(2 * t, c), x(2 * t + 1, c));
    return y;
}

std::vector<Matrix> MaxPool1d::forward(const std::vector<Matrix>& xs) {
    argmax_.clear();
    argmax_.reserve(xs.size());
    std::vector<Matrix> ys;
    ys.reserve(xs.size());
    for (const auto& x : xs) {
        require_data(x.rows() % 2 == 0, "max-pool input length must be even");
        in_rows_ = static_cast<int>(x.rows());
        Matrix y(x.rows() / 2, x.cols());
        Eigen::MatrixXi am(y.rows(), y.cols());
        for (Eigen::Index t = 0; t < y.rows(); ++t)
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                // ties go to the earlier sample
                if (x(2 * t, c) >= x(2 * t + 1, c)) {
                    y(t, c) = x(2 * t, c);
                    am(t, c) = 0;
                } else {
                    y(t, c) = x(2 * t + 1, c);
                    am(t, c) = 1;
                }
            }
        argmax_.push_back(std::move(am));
        ys.push_back(std::move(y));
    }
    return ys;
}

std::vector<Matrix> MaxPool1d::backward(const std::vector<Matrix>& dys) const {
    std::vector<Matrix> dxs;
    dxs.reserve(dys.size());
    for (size_t n = 0; n < dys.size(); ++n) {
        const Matrix& dy = dys[n];
        Matrix dx = Matrix::Zero(in_rows_, dy.cols());
        for (Eigen::Index t = 0; t < dy.rows(); ++t)
            for (Eigen::Index c = 0; c < dy.cols(); ++c)
                dx(2 * t + argmax_[n](t, c), c) = dy(t, c);
        dxs.push_back(std::move(dx));
    }
    return dxs;
}

// ---- Upsample1d -------------------------------------------------------------

Matrix Upsample1d::apply(const Matrix& x) {
    Matrix y(2 * x.rows(), x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        y.row(2 * t) = x.row(t);
        y.row(2 * t + 1) = x.row(t);
    }
    return y;
}

Matrix Upsample1d::backward(const Matrix& dy) {
    Matrix dx(dy.rows() / 2, dy.cols());
    for (Eigen::Index t = 0; t < dx.rows(); ++t)
        dx.row(t) = dy.row(2 * t) + dy.row(2 * t + 1);
    return dx;
}

// ---- BatchNorm1d ------------------------------------------------------------

void BatchNorm1d::init(int features) {
    gamma = Matrix::Ones(1, features);
    beta = Matrix::Zero(1, features);
    running_mean = Matrix::Zero(1, features);
    running_var = Matrix::Ones(1, features);
    ggamma = Matrix::Zero(1, features);
    gbeta = Matrix::Zero(1, features);
}

Matrix BatchNorm1d::apply(const Matrix& x) const {
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double inv = 1.0 / std::sqrt(running_var(0, c) + eps);
        y.col(c) = ((x.col(c).array() - running_mean(0, c)) * inv) * gamma(0, c) +
                   beta(0, c);
    }
    return y;
}

Matrix BatchNorm1d::forward(const Matrix& x, bool update_running) {
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Matrix centered = x.rowwise() - mu;
    const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
    inv_std_ = (var.array() + eps).rsqrt();
    xhat_ = centered.array().rowwise() * inv_std_.array();
    if (update_running) {
        running_mean.row(0) = (1.0 - momentum) * running_mean.row(0) + momentum * mu;
        running_var.row(0) = (1.0 - momentum) * running_var.row(0) + momentum * var;
    }
    return (xhat_.array().rowwise() * gamma.row(0).array()).rowwise() +
           beta.row(0).array();
}

Matrix BatchNorm1d::backward(const Matrix& dy, bool accumulate) {
    const double n = static_cast<double>(dy.rows());
    const Matrix dxhat = dy.array().rowwise() * gamma.row(0).array();
    const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
    const Eigen::RowVectorXd sum_dxhat_xhat =
        (dxhat.array() * xhat_.array()).colwise().sum();
    Matrix dx = (n * dxhat).array().rowwise() - sum_dxhat.array();
    dx.array() -= xhat_.array().rowwise() * sum_dxhat_xhat.array();
    dx.array() = dx.array().rowwise() * (inv_std_.array() / n);
    if (accumulate) {
        ggamma.row(0) +=
            (dy.array() * xhat_.array()).colwise().sum().matrix();
        gbeta.row(0) += dy.colwise().sum();
    }
    return dx;
}

void BatchNorm1d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".gamma", &gamma, &ggamma, true});
    out.push_back({prefix + ".beta", &beta, &gbeta, true});
    out.push_back({prefix + ".running_mean", &running_mean, nullptr, false});
    out.push_back({prefix + ".running_var", &running_var, nullptr, false});
}

// ---- Dropout ----------------------------------------------------------------

Matrix Dropout::forward(const Matrix& x, rng::Stream* rs) {
    active_ = rate > 0.0 && rs != nullptr;
    if (!active_) return x;
    const double keep = 1.0 - rate;
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            mask_(r, c) = rs->uniform() < rate ? 0.0 : 1.0 / keep;
    return x.cwiseProduct(mask_);
}

Matrix Dropout::backward(const Matrix& dy) const {
    return active_ ? dy.cwiseProduct(mask_) : dy;
}

// ---- Adam -------------------------------------------------------------------

void Adam::init(const std::vector<ParamRef>& params) {
    m_.clear();
    v_.clear();
    t_ = 0;
    for (const auto& p : params) {
        m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
        v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
}

void Adam::step(const std::vector<ParamRef>& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        const Matrix& g = *params[i].grad;
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * g.cwiseProduct(g);
        params[i].value->array() -= lr * (m_[i] / bc1).array() /
                                    ((v_[i] / bc2).array().sqrt() + eps);
    }
}

}  // namespace fairload::nn
