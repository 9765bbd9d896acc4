#pragma once

#include <string>
#include <vector>

#include "fairload/rng.hpp"
#include "fairload/types.hpp"

namespace fairload::nn {

// Named view over one parameter tensor and its gradient. Non-trainable
// entries (batch-norm running stats) are serialized but skipped by the
// optimizer and by gradient checks.
struct ParamRef {
    std::string name;
    Matrix* value;
    Matrix* grad;
    bool trainable;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in))
void init_uniform_fanin(Matrix& w, int fan_in, rng::Stream& rs);

// ---------------------------------------------------------------------------
// Layers. forward() caches what backward() needs; apply() is the cache-free
// const path used at inference time.
// ---------------------------------------------------------------------------

struct Dense {
    Matrix w;  // [in x out]
    Matrix b;  // [1 x out]
    Matrix gw, gb;

    void init(int in, int out, rng::Stream& rs);
    Matrix apply(const Matrix& x) const;
    Matrix forward(const Matrix& x);
    // returns dx; accumulates gw/gb unless accumulate is false
    Matrix backward(const Matrix& dy, bool accumulate = true);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);

  private:
    Matrix x_;
};

struct ReLU {
    Matrix apply(const Matrix& x) const { return x.cwiseMax(0.0); }
    Matrix forward(const Matrix& x) {
        mask_ = (x.array() > 0.0).cast<double>();
        return x.cwiseMax(0.0);
    }
    Matrix backward(const Matrix& dy) const { return dy.cwiseProduct(mask_); }

  private:
    Matrix mask_;
};

// 1D convolution over time, stride 1, same zero padding, odd kernel.
// Operates per sample on [L x Cin] matrices.
struct Conv1d {
    int in_ch = 0, out_ch = 0, ksize = 0;
    Matrix w;  // [in_ch*ksize x out_ch]
    Matrix b;  // [1 x out_ch]
    Matrix gw, gb;

    void init(int in, int out, int k, rng::Stream& rs);
    Matrix im2col(const Matrix& x) const;
    Matrix apply(const Matrix& x) const;
    std::vector<Matrix> forward(const std::vector<Matrix>& xs);
    std::vector<Matrix> backward(const std::vector<Matrix>& dys, bool want_dx,
                                 bool accumulate = true);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);

  private:
    Matrix stacked_cols_;  // [N*L x in_ch*ksize]
    int rows_ = 0;
};

// kernel 2, stride 2; input length must be even.
struct MaxPool1d {
    Matrix apply(const Matrix& x) const;
    std::vector<Matrix> forward(const std::vector<Matrix>& xs);
    std::vector<Matrix> backward(const std::vector<Matrix>& dys) const;

  private:
    std::vector<Eigen::MatrixXi> argmax_;
    int in_rows_ = 0;
};

// nearest-neighbor x2 along time.
struct Upsample1d {
    static Matrix apply(const Matrix& x);
    static Matrix backward(const Matrix& dy);
};

// Batch normalization over the batch dimension of [N x F] activations.
// Population variance in both the batch statistics and the running averages.
struct BatchNorm1d {
    Matrix gamma, beta;                // [1 x F]
    Matrix running_mean, running_var;  // [1 x F], non-trainable
    Matrix ggamma, gbeta;
    double momentum = 0.1;
    double eps = 1e-5;

    void init(int features);
    Matrix apply(const Matrix& x) const;  // eval: running statistics
    Matrix forward(const Matrix& x, bool update_running);
    Matrix backward(const Matrix& dy, bool accumulate = true);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);

  private:
    Matrix xhat_;
    Eigen::RowVectorXd inv_std_;
};

// Inverted dropout; identity in eval mode or at rate 0.
struct Dropout {
    double rate = 0.0;
    Matrix forward(const Matrix& x, rng::Stream* rs);
    Matrix backward(const Matrix& dy) const;

  private:
    Matrix mask_;
    bool active_ = false;
};

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    void init(const std::vector<ParamRef>& params);
    void step(const std::vector<ParamRef>& params, double lr);

  private:
    std::vector<Matrix> m_, v_;
    long t_ = 0;
};

}  // namespace fairload::nn
