#include "fairload/dvae.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include <json.hpp>

#include "fairload/dataset_io.hpp"
#include "fairload/signal.hpp"

namespace fairload::dvae {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

const char* to_string(Mode m) { return m == Mode::dvae ? "dvae" : "plain_vae"; }

Mode mode_from_string(std::string_view s) {
    if (s == "dvae") return Mode::dvae;
    if (s == "plain_vae" || s == "vae") return Mode::plain_vae;
    throw DataError("unknown model mode: " + std::string(s));
}

void ModelConfig::validate() const {
    require_data(input_length >= 8 && input_length % 8 == 0,
                 "input_length must be a positive multiple of 8 (three pools)");
    require_data(n_channels >= 1, "n_channels must be positive");
    require_data(latent_dim >= 1, "latent_dim must be positive");
    require_data(arch_scale > 0, "arch_scale must be positive");
    require_data(conv_kernel >= 1 && conv_kernel % 2 == 1,
                 "conv kernel must be odd");
    require_data(dropout_rate >= 0 && dropout_rate < 1,
                 "dropout rate must be in [0, 1)");
    require_data(logvar_clamp > 0, "logvar clamp must be positive");
}

void TrainConfig::validate() const {
    require_data(learning_rate >= 0, "learning rate must be non-negative");
    require_data(epochs >= 1, "epochs must be >= 1");
    require_data(batch_size >= 1, "batch size must be >= 1");
    require_data(beta1 >= 0 && beta2 >= 0, "beta weights must be non-negative");
    require_data(mc_samples >= 1, "mc_samples must be >= 1");
}

double kl_diag_gaussian(const Vector& mean, const Vector& logvar) {
    require_data(mean.size() == logvar.size(), "KL: shape mismatch");
    return 0.5 * (logvar.array().exp() + mean.array().square() - 1.0 -
                  logvar.array())
                     .sum();
}

Matrix reparameterize(const Matrix& mean, const Matrix& logvar,
                      const Matrix& eps) {
    require_data(mean.rows() == logvar.rows() && mean.cols() == logvar.cols() &&
                     mean.rows() == eps.rows() && mean.cols() == eps.cols(),
                 "reparameterize: shape mismatch");
    return mean.array() + (0.5 * logvar.array()).exp() * eps.array();
}

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

namespace {

struct EncoderNet {
    const ModelConfig* cfg = nullptr;
    nn::Conv1d c1, c2, c3;
    nn::MaxPool1d p1, p2, p3;
    nn::Dense fc1, fc2, f_mu, f_logvar;
    int t3 = 0, ch3 = 0;

    // caches
    std::vector<Matrix> m1, m2, m3;  // conv-stage relu masks
    Matrix fc1_mask;
    Matrix clamp_mask;

    void build(const ModelConfig& c, rng::Stream rs) {
        cfg = &c;
        const int f1 = c.scaled(c.conv_filters[0]);
        const int f2 = c.scaled(c.conv_filters[1]);
        const int f3 = c.scaled(c.conv_filters[2]);
        c1.init(c.n_channels, f1, c.conv_kernel, rs);
        c2.init(f1, f2, c.conv_kernel, rs);
        c3.init(f2, f3, c.conv_kernel, rs);
        t3 = c.input_length / 8;
        ch3 = f3;
        const int h1 = c.scaled(c.fc_hidden1);
        const int h2 = c.scaled(c.fc_hidden2);
        fc1.init(t3 * ch3, h1, rs);
        fc2.init(h1, h2, rs);
        f_mu.init(h2, c.latent_dim, rs);
        f_logvar.init(h2, c.latent_dim, rs);
    }

    void collect(const std::string& p, std::vector<nn::ParamRef>& out) {
        c1.collect(p + ".conv1", out);
        c2.collect(p + ".conv2", out);
        c3.collect(p + ".conv3", out);
        fc1.collect(p + ".fc1", out);
        fc2.collect(p + ".fc2", out);
        f_mu.collect(p + ".mu", out);
        f_logvar.collect(p + ".logvar", out);
    }

    Matrix flatten(const std::vector<Matrix>& xs) const {
        Matrix flat(static_cast<Eigen::Index>(xs.size()), t3 * ch3);
        for (size_t n = 0; n < xs.size(); ++n)
            for (int t = 0; t < t3; ++t)
                for (int ch = 0; ch < ch3; ++ch)
                    flat(static_cast<Eigen::Index>(n), t * ch3 + ch) = xs[n](t, ch);
        return flat;
    }

    std::vector<Matrix> unflatten(const Matrix& flat) const {
        std::vector<Matrix> out(static_cast<size_t>(flat.rows()));
        for (Eigen::Index n = 0; n < flat.rows(); ++n) {
            Matrix m(t3, ch3);
            for (int t = 0; t < t3; ++t)
                for (int ch = 0; ch < ch3; ++ch) m(t, ch) = flat(n, t * ch3 + ch);
            out[static_cast<size_t>(n)] = std::move(m);
        }
        return out;
    }

    static void relu_stage(std::vector<Matrix>& ys, std::vector<Matrix>& masks) {
        masks.clear();
        masks.reserve(ys.size());
        for (auto& y : ys) {
            masks.push_back((y.array() > 0.0).cast<double>());
            y = y.cwiseMax(0.0);
        }
    }

    // mu and clamped logvar, [N x latent]
    std::pair<Matrix, Matrix> forward(const std::vector<const Matrix*>& xs) {
        std::vector<Matrix> a;
        a.reserve(xs.size());
        for (const Matrix* x : xs) {
            require_data(x->rows() == cfg->input_length &&
                             x->cols() == cfg->n_channels,
                         "encode: cycle shape does not match model config");
            a.push_back(*x);
        }
        auto y1 = c1.forward(a);
        relu_stage(y1, m1);
        auto z1 = p1.forward(y1);
        auto y2 = c2.forward(z1);
        relu_stage(y2, m2);
        auto z2 = p2.forward(y2);
        auto y3 = c3.forward(z2);
        relu_stage(y3, m3);
        auto z3 = p3.forward(y3);

        Matrix h1 = fc1.forward(flatten(z3));
        fc1_mask = (h1.array() > 0.0).cast<double>();
        const Matrix h1r = h1.cwiseMax(0.0);
        const Matrix h2 = fc2.forward(h1r);
        Matrix mu = f_mu.forward(h2);
        Matrix lv = f_logvar.forward(h2);
        clamp_mask = (lv.array().abs() < cfg->logvar_clamp).cast<double>();
        lv = lv.array().min(cfg->logvar_clamp).max(-cfg->logvar_clamp);
        return {std::move(mu), std::move(lv)};
    }

    void backward(const Matrix& dmu, const Matrix& dlv) {
        const Matrix dlv_raw = dlv.cwiseProduct(clamp_mask);
        Matrix dh2 = f_mu.backward(dmu);
        dh2 += f_logvar.backward(dlv_raw);
        const Matrix dh1r = fc2.backward(dh2);
        const Matrix dh1 = dh1r.cwiseProduct(fc1_mask);
        const Matrix dflat = fc1.backward(dh1);

        auto dz3 = unflatten(dflat);
        auto dy3 = p3.backward(dz3);
        for (size_t n = 0; n < dy3.size(); ++n)
            dy3[n] = dy3[n].cwiseProduct(m3[n]);
        auto dz2 = c3.backward(dy3, true);
        auto dy2 = p2.backward(dz2);
        for (size_t n = 0; n < dy2.size(); ++n)
            dy2[n] = dy2[n].cwiseProduct(m2[n]);
        auto dz1 = c2.backward(dy2, true);
        auto dy1 = p1.backward(dz1);
        for (size_t n = 0; n < dy1.size(); ++n)
            dy1[n] = dy1[n].cwiseProduct(m1[n]);
        c1.backward(dy1, false);
    }

    // cache-free single-sample eval
    std::pair<Vector, Vector> apply(const Matrix& x) const {
        require_data(
            x.rows() == cfg->input_length && x.cols() == cfg->n_channels,
            "encode: cycle shape does not match model config");
        Matrix a = p1.apply(c1.apply(x).cwiseMax(0.0));
        a = p2.apply(c2.apply(a).cwiseMax(0.0));
        a = p3.apply(c3.apply(a).cwiseMax(0.0));
        Matrix flat(1, t3 * ch3);
        for (int t = 0; t < t3; ++t)
            for (int ch = 0; ch < ch3; ++ch) flat(0, t * ch3 + ch) = a(t, ch);
        const Matrix h2 = fc2.apply(fc1.apply(flat).cwiseMax(0.0));
        Vector mu = f_mu.apply(h2).row(0);
        Vector lv = f_logvar.apply(h2).row(0);
        lv = lv.array().min(cfg->logvar_clamp).max(-cfg->logvar_clamp);
        return {std::move(mu), std::move(lv)};
    }
};

struct DecoderNet {
    const ModelConfig* cfg = nullptr;
    nn::Dense fc1, fc2, fc3;
    nn::Conv1d d1, d2, d3;
    Matrix log_var_x, g_log_var_x;  // [1x1], learned_scalar mode
    int t3 = 0, ch3 = 0;

    // caches
    Matrix mf1, mf2, mf3;            // fc relu masks
    std::vector<Matrix> md1, md2;    // conv relu masks

    void build(const ModelConfig& c, rng::Stream rs) {
        cfg = &c;
        const int zin = c.mode == Mode::dvae ? 2 * c.latent_dim : c.latent_dim;
        const int h1 = c.scaled(c.fc_hidden1);
        const int h2 = c.scaled(c.fc_hidden2);
        const int f1 = c.scaled(c.conv_filters[0]);
        const int f2 = c.scaled(c.conv_filters[1]);
        const int f3 = c.scaled(c.conv_filters[2]);
        t3 = c.input_length / 8;
        ch3 = f3;
        fc1.init(zin, h2, rs);
        fc2.init(h2, h1, rs);
        fc3.init(h1, t3 * ch3, rs);
        d1.init(f3, f2, c.conv_kernel, rs);
        d2.init(f2, f1, c.conv_kernel, rs);
        d3.init(f1, c.n_channels, c.conv_kernel, rs);
        log_var_x = Matrix::Zero(1, 1);
        g_log_var_x = Matrix::Zero(1, 1);
    }

    void collect(const std::string& p, std::vector<nn::ParamRef>& out) {
        fc1.collect(p + ".fc1", out);
        fc2.collect(p + ".fc2", out);
        fc3.collect(p + ".fc3", out);
        d1.collect(p + ".deconv1", out);
        d2.collect(p + ".deconv2", out);
        d3.collect(p + ".deconv3", out);
        if (cfg->decoder_variance == DecoderVariance::learned_scalar)
            out.push_back({p + ".log_var_x", &log_var_x, &g_log_var_x, true});
    }

    std::vector<Matrix> forward(const Matrix& zin) {
        Matrix h1 = fc1.forward(zin);
        mf1 = (h1.array() > 0.0).cast<double>();
        Matrix h2 = fc2.forward(h1.cwiseMax(0.0));
        mf2 = (h2.array() > 0.0).cast<double>();
        Matrix h3 = fc3.forward(h2.cwiseMax(0.0));
        mf3 = (h3.array() > 0.0).cast<double>();
        const Matrix h3r = h3.cwiseMax(0.0);

        std::vector<Matrix> a(static_cast<size_t>(zin.rows()));
        for (Eigen::Index n = 0; n < zin.rows(); ++n) {
            Matrix m(t3, ch3);
            for (int t = 0; t < t3; ++t)
                for (int ch = 0; ch < ch3; ++ch) m(t, ch) = h3r(n, t * ch3 + ch);
            a[static_cast<size_t>(n)] = nn::Upsample1d::apply(m);
        }
        auto u1 = d1.forward(a);
        md1.clear();
        for (auto& y : u1) {
            md1.push_back((y.array() > 0.0).cast<double>());
            y = nn::Upsample1d::apply(y.cwiseMax(0.0));
        }
        auto u2 = d2.forward(u1);
        md2.clear();
        for (auto& y : u2) {
            md2.push_back((y.array() > 0.0).cast<double>());
            y = nn::Upsample1d::apply(y.cwiseMax(0.0));
        }
        return d3.forward(u2);
    }

    Matrix backward(const std::vector<Matrix>& dxhat) {
        auto du2 = d3.backward(dxhat, true);
        for (size_t n = 0; n < du2.size(); ++n)
            du2[n] = nn::Upsample1d::backward(du2[n]).cwiseProduct(md2[n]);
        auto du1 = d2.backward(du2, true);
        for (size_t n = 0; n < du1.size(); ++n)
            du1[n] = nn::Upsample1d::backward(du1[n]).cwiseProduct(md1[n]);
        auto da = d1.backward(du1, true);

        Matrix dh3r(static_cast<Eigen::Index>(da.size()), t3 * ch3);
        for (size_t n = 0; n < da.size(); ++n) {
            const Matrix dm = nn::Upsample1d::backward(da[n]);
            for (int t = 0; t < t3; ++t)
                for (int ch = 0; ch < ch3; ++ch)
                    dh3r(static_cast<Eigen::Index>(n), t * ch3 + ch) = dm(t, ch);
        }
        const Matrix dh2r = fc3.backward(dh3r.cwiseProduct(mf3));
        const Matrix dh1r = fc2.backward(dh2r.cwiseProduct(mf2));
        return fc1.backward(dh1r.cwiseProduct(mf1));
    }
};

struct HeadNet {
    const ModelConfig* cfg = nullptr;
    nn::Dense fc1, fc2, out;
    nn::BatchNorm1d bn1, bn2;
    nn::Dropout dr1, dr2;
    Matrix m1, m2;

    void build(const ModelConfig& c, int out_dim, rng::Stream rs) {
        cfg = &c;
        const int h1 = c.scaled(c.head_hidden1);
        const int h2 = c.scaled(c.head_hidden2);
        fc1.init(c.latent_dim, h1, rs);
        fc2.init(h1, h2, rs);
        out.init(h2, out_dim, rs);
        bn1.init(h1);
        bn2.init(h2);
        dr1.rate = c.dropout_rate;
        dr2.rate = c.dropout_rate;
    }

    void collect(const std::string& p, std::vector<nn::ParamRef>& o) {
        fc1.collect(p + ".fc1", o);
        fc2.collect(p + ".fc2", o);
        out.collect(p + ".out", o);
        if (cfg->batchnorm) {
            bn1.collect(p + ".bn1", o);
            bn2.collect(p + ".bn2", o);
        }
    }

    Matrix forward(const Matrix& z, bool train, bool update_running,
                   rng::Stream* rs) {
        Matrix a1 = fc1.forward(z);
        m1 = (a1.array() > 0.0).cast<double>();
        Matrix r1 = a1.cwiseMax(0.0);
        Matrix b1 = cfg->batchnorm
                        ? (train ? bn1.forward(r1, update_running) : bn1.apply(r1))
                        : r1;
        Matrix v1 = dr1.forward(b1, train ? rs : nullptr);
        Matrix a2 = fc2.forward(v1);
        m2 = (a2.array() > 0.0).cast<double>();
        Matrix r2 = a2.cwiseMax(0.0);
        Matrix b2 = cfg->batchnorm
                        ? (train ? bn2.forward(r2, update_running) : bn2.apply(r2))
                        : r2;
        Matrix v2 = dr2.forward(b2, train ? rs : nullptr);
        return out.forward(v2);
    }

    // valid after a train-mode forward
    Matrix backward(const Matrix& dout, bool accumulate) {
        const Matrix dv2 = out.backward(dout, accumulate);
        const Matrix db2 = dr2.backward(dv2);
        const Matrix dr2v = cfg->batchnorm ? bn2.backward(db2, accumulate) : db2;
        const Matrix da2 = dr2v.cwiseProduct(m2);
        const Matrix dv1 = fc2.backward(da2, accumulate);
        const Matrix db1 = dr1.backward(dv1);
        const Matrix dr1v = cfg->batchnorm ? bn1.backward(db1, accumulate) : db1;
        const Matrix da1 = dr1v.cwiseProduct(m1);
        return fc1.backward(da1, accumulate);
    }

    Matrix apply(const Matrix& z) const {
        Matrix a = fc1.apply(z).cwiseMax(0.0);
        if (cfg->batchnorm) a = bn1.apply(a);
        a = fc2.apply(a).cwiseMax(0.0);
        if (cfg->batchnorm) a = bn2.apply(a);
        return out.apply(a);
    }
};

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
        p.row(i) = e / e.sum();
    }
    return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Model::Impl {
    ModelConfig cfg;  // the networks point here; stable across Model moves
    EncoderNet enc;
    EncoderNet enc_sex;  // unused in plain_vae mode
    DecoderNet dec;
    HeadNet reg;
    HeadNet cls;  // unused in plain_vae mode
};

Model::Model(const ModelConfig& cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
    cfg_.validate();
}

Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

void Model::init_params(uint64_t seed) {
    rng::Stream root{seed};
    impl_->cfg = cfg_;
    impl_->enc.build(impl_->cfg, root.child("enc_agnostic"));
    if (cfg_.mode == Mode::dvae)
        impl_->enc_sex.build(impl_->cfg, root.child("enc_specific"));
    impl_->dec.build(impl_->cfg, root.child("decoder"));
    impl_->reg.build(impl_->cfg, 1, root.child("regressor"));
    if (cfg_.mode == Mode::dvae)
        impl_->cls.build(impl_->cfg, 2, root.child("classifier"));
}

std::vector<nn::ParamRef> Model::params() {
    std::vector<nn::ParamRef> out;
    impl_->enc.collect("enc_agnostic", out);
    if (cfg_.mode == Mode::dvae) impl_->enc_sex.collect("enc_specific", out);
    impl_->dec.collect("decoder", out);
    impl_->reg.collect("regressor", out);
    if (cfg_.mode == Mode::dvae) impl_->cls.collect("classifier", out);
    return out;
}

void Model::zero_grads() {
    for (auto& p : params())
        if (p.grad) p.grad->setZero();
}

LatentBatch Model::encode(const std::vector<const Matrix*>& xs, bool train) {
    (void)train;  // encoders hold no batch statistics or dropout
    LatentBatch lb;
    auto [mu, lv] = impl_->enc.forward(xs);
    lb.mu = std::move(mu);
    lb.logvar = std::move(lv);
    if (cfg_.mode == Mode::dvae) {
        auto [mus, lvs] = impl_->enc_sex.forward(xs);
        lb.mu_sex = std::move(mus);
        lb.logvar_sex = std::move(lvs);
    }
    return lb;
}

LatentPair Model::encode_one(const Matrix& x) const {
    LatentPair lp;
    auto [mu, lv] = impl_->enc.apply(x);
    lp.z_mean = std::move(mu);
    lp.z_logvar = std::move(lv);
    if (cfg_.mode == Mode::dvae) {
        auto [mus, lvs] = impl_->enc_sex.apply(x);
        lp.zsex_mean = std::move(mus);
        lp.zsex_logvar = std::move(lvs);
    }
    return lp;
}

std::vector<Matrix> Model::decode(const Matrix& z, const Matrix& zsex, bool train) {
    (void)train;
    require_data(z.cols() == cfg_.latent_dim, "decode: latent dim mismatch");
    if (cfg_.mode == Mode::plain_vae) {
        require_data(zsex.size() == 0,
                     "plain_vae decoder takes a single latent");
        return impl_->dec.forward(z);
    }
    require_data(zsex.rows() == z.rows() && zsex.cols() == cfg_.latent_dim,
                 "decode: sex latent dim mismatch");
    Matrix zin(z.rows(), 2 * cfg_.latent_dim);
    zin << z, zsex;
    return impl_->dec.forward(zin);
}

LossBreakdown Model::evaluate(const Batch& batch, const EpsDraws& eps,
                              const StepOptions& opts, rng::Stream* dropout_rng) {
    const int n = static_cast<int>(batch.size());
    require_data(n >= 1, "evaluate: empty batch");
    require_data(static_cast<int>(batch.target.size()) == n &&
                     batch.sex.size() == batch.x.size(),
                 "evaluate: batch label shape mismatch");
    const int mc = static_cast<int>(eps.agnostic.size());
    require_data(mc >= 1, "evaluate: need at least one eps draw");
    if (opts.with_grad)
        require_data(opts.train, "gradients require train-mode forward");
    const bool dvae_mode = cfg_.mode == Mode::dvae;
    if (dvae_mode)
        require_data(eps.specific.size() == eps.agnostic.size(),
                     "evaluate: eps draws for both latents required");
    const double dim_const =
        0.5 * cfg_.input_length * cfg_.n_channels;  // D/2 factor

    LossBreakdown lb;
    lb.beta1 = opts.beta1;
    lb.beta2 = opts.beta2;

    // --- encode ---
    auto [mu, lv] = impl_->enc.forward(batch.x);
    Matrix mus, lvs;
    if (dvae_mode) {
        auto [m2, l2] = impl_->enc_sex.forward(batch.x);
        mus = std::move(m2);
        lvs = std::move(l2);
    }

    Matrix dmu = Matrix::Zero(n, cfg_.latent_dim);
    Matrix dlv = Matrix::Zero(n, cfg_.latent_dim);
    Matrix dmus, dlvs;
    if (dvae_mode) {
        dmus = Matrix::Zero(n, cfg_.latent_dim);
        dlvs = Matrix::Zero(n, cfg_.latent_dim);
    }

    const double s = cfg_.decoder_variance == DecoderVariance::learned_scalar
                         ? impl_->dec.log_var_x(0, 0)
                         : 0.0;
    const double inv_var = std::exp(-s);

    // --- reconstruction over mc draws ---
    Matrix z0, zs0;
    for (int d = 0; d < mc; ++d) {
        const Matrix z = reparameterize(mu, lv, eps.agnostic[d]);
        Matrix zs;
        if (dvae_mode) zs = reparameterize(mus, lvs, eps.specific[d]);
        if (d == 0) {
            z0 = z;
            zs0 = zs;
        }
        Matrix zin;
        if (dvae_mode) {
            zin.resize(n, 2 * cfg_.latent_dim);
            zin << z, zs;
        } else {
            zin = z;
        }
        const auto xhat = impl_->dec.forward(zin);

        double rec_draw = 0.0;
        std::vector<Matrix> dxhat(xhat.size());
        for (int i = 0; i < n; ++i) {
            const Matrix resid = xhat[i] - *batch.x[i];
            rec_draw += 0.5 * inv_var * resid.squaredNorm() +
                        dim_const * (s + kLog2Pi);
            if (opts.with_grad)
                dxhat[i] = (opts.vae_weight * inv_var / (mc * n)) * resid;
        }
        rec_draw /= n;
        lb.reconstruction += rec_draw / mc;

        if (opts.with_grad) {
            if (cfg_.decoder_variance == DecoderVariance::learned_scalar) {
                double gs = 0.0;
                for (int i = 0; i < n; ++i) {
                    const Matrix resid = xhat[i] - *batch.x[i];
                    gs += -0.5 * inv_var * resid.squaredNorm() + dim_const;
                }
                impl_->dec.g_log_var_x(0, 0) +=
                    opts.vae_weight * gs / (mc * n);
            }
            const Matrix dzin = impl_->dec.backward(dxhat);
            const Matrix dz = dzin.leftCols(cfg_.latent_dim);
            dmu += dz;
            dlv.array() += dz.array() * eps.agnostic[d].array() * 0.5 *
                           (0.5 * lv.array()).exp();
            if (dvae_mode) {
                const Matrix dzs = dzin.rightCols(cfg_.latent_dim);
                dmus += dzs;
                dlvs.array() += dzs.array() * eps.specific[d].array() * 0.5 *
                                (0.5 * lvs.array()).exp();
            }
        }
    }

    // --- KL terms (closed form) ---
    lb.kl_agnostic =
        0.5 *
        (lv.array().exp() + mu.array().square() - 1.0 - lv.array()).sum() / n;
    if (dvae_mode)
        lb.kl_specific =
            0.5 *
            (lvs.array().exp() + mus.array().square() - 1.0 - lvs.array()).sum() /
            n;
    if (opts.with_grad) {
        dmu += (opts.vae_weight / n) * mu;
        dlv.array() += (opts.vae_weight * 0.5 / n) * (lv.array().exp() - 1.0);
        if (dvae_mode) {
            dmus += (opts.vae_weight / n) * mus;
            dlvs.array() +=
                (opts.vae_weight * 0.5 / n) * (lvs.array().exp() - 1.0);
        }
    }
    lb.vae_loss = lb.reconstruction + lb.kl_agnostic + lb.kl_specific;

    // --- discriminative heads on the first draw's latents ---
    {
        const Matrix pred = impl_->reg.forward(z0, opts.train, true, dropout_rng);
        const Vector resid = pred.col(0) - batch.target;
        lb.regressor_term = resid.squaredNorm() / n;
        if (opts.with_grad) {
            Matrix dpred(n, 1);
            dpred.col(0) = (2.0 * opts.beta1 / n) * resid;
            const Matrix dz = impl_->reg.backward(dpred, true);
            dmu += dz;
            dlv.array() += dz.array() * eps.agnostic[0].array() * 0.5 *
                           (0.5 * lv.array()).exp();
        }
    }
    if (dvae_mode) {
        const Matrix logits =
            impl_->cls.forward(zs0, opts.train, true, dropout_rng);
        const Matrix p = softmax_rows(logits);
        double ce = 0.0;
        for (int i = 0; i < n; ++i)
            ce += -std::log(std::max(p(i, batch.sex[i]), 1e-300));
        lb.classifier_term = ce / n;
        if (opts.with_grad) {
            Matrix dlogits = p;
            for (int i = 0; i < n; ++i) dlogits(i, batch.sex[i]) -= 1.0;
            dlogits *= opts.beta1 / n;
            const Matrix dzs = impl_->cls.backward(dlogits, true);
            dmus += dzs;
            dlvs.array() += dzs.array() * eps.specific[0].array() * 0.5 *
                            (0.5 * lvs.array()).exp();
        }
    }
    lb.discriminative = lb.regressor_term + lb.classifier_term;

    // --- independence excitation: cross-routed heads, encoder-only grads ---
    if (dvae_mode) {
        const Matrix pred_x =
            impl_->reg.forward(zs0, opts.train, false, dropout_rng);
        const Vector resid_x = pred_x.col(0) - batch.target;
        const double lr_cross = resid_x.squaredNorm() / n;
        if (opts.with_grad) {
            Matrix dpred(n, 1);
            dpred.col(0) = (-opts.beta2 * 2.0 / n) * resid_x;
            const Matrix dzs = impl_->reg.backward(dpred, false);
            dmus += dzs;
            dlvs.array() += dzs.array() * eps.specific[0].array() * 0.5 *
                            (0.5 * lvs.array()).exp();
        }

        const Matrix logits_x =
            impl_->cls.forward(z0, opts.train, false, dropout_rng);
        const Matrix px = softmax_rows(logits_x);
        double ce_cross = 0.0;
        for (int i = 0; i < n; ++i)
            ce_cross += -std::log(std::max(px(i, batch.sex[i]), 1e-300));
        ce_cross /= n;
        if (opts.with_grad) {
            Matrix dlogits = px;
            for (int i = 0; i < n; ++i) dlogits(i, batch.sex[i]) -= 1.0;
            dlogits *= -opts.beta2 / n;
            const Matrix dz = impl_->cls.backward(dlogits, false);
            dmu += dz;
            dlv.array() += dz.array() * eps.agnostic[0].array() * 0.5 *
                           (0.5 * lv.array()).exp();
        }
        lb.independence = -(lr_cross + ce_cross);
    }

    if (opts.with_grad) {
        impl_->enc.backward(dmu, dlv);
        if (dvae_mode) impl_->enc_sex.backward(dmus, dlvs);
    }

    lb.total = opts.vae_weight * lb.vae_loss + opts.beta1 * lb.discriminative +
               opts.beta2 * lb.independence;
    require_numeric(std::isfinite(lb.total), "loss is non-finite");
    return lb;
}

namespace {

double cross_entropy_rows(const Matrix& logits, const std::vector<int>& label) {
    const Matrix p = softmax_rows(logits);
    double ce = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        ce += -std::log(std::max(p(i, label[static_cast<size_t>(i)]), 1e-300));
    return ce / static_cast<double>(logits.rows());
}

}  // namespace

double Model::discriminative_loss(const Matrix& z, const Matrix& zsex,
                                  const Vector& target,
                                  const std::vector<int>& sex) const {
    require_data(z.rows() == target.size(), "discriminative_loss: shape mismatch");
    const Matrix pred = impl_->reg.apply(z);
    const double l_r =
        (pred.col(0) - target).squaredNorm() / static_cast<double>(z.rows());
    if (cfg_.mode == Mode::plain_vae) return l_r;  // classifier term is 0
    require_data(zsex.rows() == z.rows(),
                 "discriminative_loss: sex latent shape mismatch");
    return l_r + cross_entropy_rows(impl_->cls.apply(zsex), sex);
}

double Model::independence_excitation_loss(const Matrix& z, const Matrix& zsex,
                                           const Vector& target,
                                           const std::vector<int>& sex) const {
    require_data(cfg_.mode == Mode::dvae,
                 "independence_excitation_loss requires dvae mode");
    require_data(z.rows() == target.size() && zsex.rows() == z.rows(),
                 "independence_excitation_loss: shape mismatch");
    const Matrix pred_cross = impl_->reg.apply(zsex);
    const double l_r_cross = (pred_cross.col(0) - target).squaredNorm() /
                             static_cast<double>(z.rows());
    const double l_c_cross = cross_entropy_rows(impl_->cls.apply(z), sex);
    return -(l_r_cross + l_c_cross);
}

double Model::predict_standardized(const Matrix& x) const {
    const LatentPair lp = encode_one(x);
    Matrix z(1, cfg_.latent_dim);
    z.row(0) = lp.z_mean;
    return impl_->reg.apply(z)(0, 0);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainResult train(const Dataset& normalized, const ModelConfig& arch,
                  const TrainConfig& cfg) {
    arch.validate();
    cfg.validate();
    require_data(normalized.channel_stats.has_value(),
                 "train: dataset must be normalized (channel_stats missing)");
    require_data(!normalized.cycles.empty(), "train: empty dataset");
    const int n = static_cast<int>(normalized.cycles.size());

    bool has_male = false, has_female = false;
    for (const auto& c : normalized.cycles)
        (c.sex == Sex::male ? has_male : has_female) = true;
    if (arch.mode == Mode::dvae)
        require_data(has_male && has_female,
                     "dvae mode needs both sexes in the training set");

    double tmean = 0.0, tstd = 1.0;
    if (cfg.target_standardization) {
        double sum = 0.0;
        for (const auto& c : normalized.cycles) sum += c.weight_kg;
        tmean = sum / n;
        double var = 0.0;
        for (const auto& c : normalized.cycles) {
            const double d = c.weight_kg - tmean;
            var += d * d;
        }
        tstd = std::sqrt(var / n);
        if (tstd < 1e-8) tstd = 1.0;
    }

    Model model(arch);
    rng::Stream root{cfg.seed};
    model.init_params(root.child("init").key());
    auto params = model.params();
    nn::Adam opt;
    opt.beta1 = cfg.adam_beta1;
    opt.beta2 = cfg.adam_beta2;
    opt.eps = cfg.adam_eps;
    opt.init(params);

    rng::Stream shuffle_root = root.child("shuffle");
    rng::Stream eps_root = root.child("eps");
    rng::Stream dropout_root = root.child("dropout");

    std::vector<int> order(normalized.cycles.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    std::vector<LossBreakdown> log;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto epoch_order = order;
        shuffle_root.child(static_cast<uint64_t>(epoch)).shuffle(epoch_order);

        LossBreakdown acc;
        for (size_t start = 0; start < epoch_order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(
                epoch_order.size(), start + static_cast<size_t>(cfg.batch_size));
            const int bn = static_cast<int>(end - start);

            Batch batch;
            batch.target.resize(bn);
            for (size_t k = start; k < end; ++k) {
                const auto& c = normalized.cycles[static_cast<size_t>(
                    epoch_order[k])];
                batch.x.push_back(&c.data);
                batch.target(static_cast<Eigen::Index>(k - start)) =
                    (c.weight_kg - tmean) / tstd;
                batch.sex.push_back(c.sex == Sex::female ? 1 : 0);
            }

            rng::Stream estream = eps_root.child(static_cast<uint64_t>(step));
            EpsDraws eps;
            for (int d = 0; d < cfg.mc_samples; ++d) {
                Matrix e(bn, arch.latent_dim);
                for (int i = 0; i < bn; ++i)
                    for (int j = 0; j < arch.latent_dim; ++j)
                        e(i, j) = estream.normal();
                eps.agnostic.push_back(std::move(e));
            }
            if (arch.mode == Mode::dvae)
                for (int d = 0; d < cfg.mc_samples; ++d) {
                    Matrix e(bn, arch.latent_dim);
                    for (int i = 0; i < bn; ++i)
                        for (int j = 0; j < arch.latent_dim; ++j)
                            e(i, j) = estream.normal();
                    eps.specific.push_back(std::move(e));
                }

            rng::Stream dstream =
                dropout_root.child(static_cast<uint64_t>(step));
            model.zero_grads();
            StepOptions opts;
            opts.train = true;
            opts.with_grad = true;
            opts.vae_weight = 1.0;
            opts.beta1 = cfg.beta1;
            opts.beta2 = cfg.beta2;
            LossBreakdown lb;
            try {
                lb = model.evaluate(batch, eps, opts, &dstream);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " +
                                   std::to_string(epoch) + ", step " +
                                   std::to_string(step) + ": " + e.what());
            }
            opt.step(params, cfg.learning_rate);

            const double w = static_cast<double>(bn) / n;
            acc.reconstruction += w * lb.reconstruction;
            acc.kl_agnostic += w * lb.kl_agnostic;
            acc.kl_specific += w * lb.kl_specific;
            acc.vae_loss += w * lb.vae_loss;
            acc.regressor_term += w * lb.regressor_term;
            acc.classifier_term += w * lb.classifier_term;
            acc.discriminative += w * lb.discriminative;
            acc.independence += w * lb.independence;
            acc.total += w * lb.total;
            ++step;
        }
        acc.beta1 = cfg.beta1;
        acc.beta2 = cfg.beta2;
        require_numeric(acc.kl_agnostic >= -1e-9 && acc.kl_specific >= -1e-9,
                        "KL term went negative");
        log.push_back(acc);
    }

    TrainResult result{TrainedModel{std::move(model), cfg, tmean, tstd,
                                    *normalized.channel_stats},
                       std::move(log)};
    return result;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

double predict_weight(const TrainedModel& m, const Matrix& normalized_cycle) {
    const double p = m.model.predict_standardized(normalized_cycle);
    return m.train_config.target_standardization
               ? p * m.target_std + m.target_mean
               : p;
}

double predict_trial(const TrainedModel& m,
                     const std::vector<const GaitCycle*>& cycles) {
    require_data(!cycles.empty(), "predict_trial: no cycles");
    for (const auto* c : cycles)
        require_data(c->trial_id == cycles.front()->trial_id,
                     "predict_trial: cycles from different trials");
    double sum = 0.0;
    for (const auto* c : cycles) sum += predict_weight(m, c->data);
    return sum / static_cast<double>(cycles.size());
}

std::vector<std::pair<std::string, double>> predict_dataset(
    const TrainedModel& m, const Dataset& ds) {
    const Dataset norm = signal::normalize(ds, m.channel_stats);
    std::vector<std::string> order;
    std::vector<std::vector<const GaitCycle*>> groups;
    for (const auto& c : norm.cycles) {
        size_t g = 0;
        for (; g < order.size(); ++g)
            if (order[g] == c.trial_id) break;
        if (g == order.size()) {
            order.push_back(c.trial_id);
            groups.emplace_back();
        }
        groups[g].push_back(&c);
    }
    std::vector<std::pair<std::string, double>> out;
    for (size_t g = 0; g < order.size(); ++g)
        out.emplace_back(order[g], predict_trial(m, groups[g]));
    return out;
}

void export_latents(const TrainedModel& m, const Dataset& ds, std::ostream& os) {
    const Dataset norm = signal::normalize(ds, m.channel_stats);
    const int latent = m.model.config().latent_dim;
    const bool dvae_mode = m.model.config().mode == Mode::dvae;
    os << "subject_id,trial_id,sex,weight_kg";
    for (int j = 0; j < latent; ++j) os << ",z_mean_" << j;
    if (dvae_mode)
        for (int j = 0; j < latent; ++j) os << ",zsex_mean_" << j;
    os << '\n';
    os << std::setprecision(17);
    for (const auto& c : norm.cycles) {
        const LatentPair lp = m.model.encode_one(c.data);
        os << c.subject_id << ',' << c.trial_id << ',' << to_string(c.sex) << ','
           << c.weight_kg;
        for (int j = 0; j < latent; ++j) os << ',' << lp.z_mean(j);
        if (dvae_mode)
            for (int j = 0; j < latent; ++j) os << ',' << lp.zsex_mean(j);
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Artifact IO
// ---------------------------------------------------------------------------

namespace {

json arch_to_json(const ModelConfig& c) {
    return json{{"input_length", c.input_length},
                {"n_channels", c.n_channels},
                {"latent_dim", c.latent_dim},
                {"arch_scale", c.arch_scale},
                {"conv_kernel", c.conv_kernel},
                {"conv_filters", c.conv_filters},
                {"fc_hidden1", c.fc_hidden1},
                {"fc_hidden2", c.fc_hidden2},
                {"head_hidden1", c.head_hidden1},
                {"head_hidden2", c.head_hidden2},
                {"dropout_rate", c.dropout_rate},
                {"batchnorm", c.batchnorm},
                {"logvar_clamp", c.logvar_clamp},
                {"mode", to_string(c.mode)},
                {"decoder_variance",
                 c.decoder_variance == DecoderVariance::fixed_unit
                     ? "fixed_unit"
                     : "learned_scalar"}};
}

ModelConfig arch_from_json(const json& j) {
    ModelConfig c;
    c.input_length = j.at("input_length").get<int>();
    c.n_channels = j.at("n_channels").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.arch_scale = j.at("arch_scale").get<double>();
    c.conv_kernel = j.at("conv_kernel").get<int>();
    c.conv_filters = j.at("conv_filters").get<std::array<int, 3>>();
    c.fc_hidden1 = j.at("fc_hidden1").get<int>();
    c.fc_hidden2 = j.at("fc_hidden2").get<int>();
    c.head_hidden1 = j.at("head_hidden1").get<int>();
    c.head_hidden2 = j.at("head_hidden2").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.batchnorm = j.at("batchnorm").get<bool>();
    c.logvar_clamp = j.at("logvar_clamp").get<double>();
    c.mode = mode_from_string(j.at("mode").get<std::string>());
    c.decoder_variance = j.at("decoder_variance").get<std::string>() ==
                                 "fixed_unit"
                             ? DecoderVariance::fixed_unit
                             : DecoderVariance::learned_scalar;
    return c;
}

json train_to_json(const TrainConfig& c) {
    return json{{"learning_rate", c.learning_rate},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"seed", c.seed},
                {"mc_samples", c.mc_samples},
                {"target_standardization", c.target_standardization},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.mc_samples = j.at("mc_samples").get<int>();
    c.target_standardization = j.at("target_standardization").get<bool>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    return c;
}

}  // namespace

void save_model(const fs::path& dir, const TrainedModel& m) {
    fs::create_directories(dir);
    json meta;
    meta["format_version"] = 1;
    meta["arch"] = arch_to_json(m.model.config());
    meta["train"] = train_to_json(m.train_config);
    meta["target_mean"] = m.target_mean;
    meta["target_std"] = m.target_std;
    meta["channel_stats"] = {{"mean", m.channel_stats.mean},
                             {"std", m.channel_stats.stddev}};
    {
        std::ofstream out(dir / "model.json");
        require_data(out.good(), "cannot write model.json");
        out << meta.dump(2) << '\n';
    }

    auto params = const_cast<Model&>(m.model).params();
    json header;
    header["tensors"] = json::array();
    size_t offset = 0;
    for (const auto& p : params) {
        header["tensors"].push_back({{"name", p.name},
                                     {"rows", p.value->rows()},
                                     {"cols", p.value->cols()},
                                     {"offset", offset}});
        offset += static_cast<size_t>(p.value->size());
    }
    header["total_floats"] = offset;
    const std::string hs = header.dump();

    std::ofstream bin(dir / "params.f32", std::ios::binary);
    require_data(bin.good(), "cannot write params.f32");
    bin.write("FLP1", 4);
    const uint32_t hlen = static_cast<uint32_t>(hs.size());
    bin.write(reinterpret_cast<const char*>(&hlen), 4);
    bin.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<double> row;
    for (const auto& p : params) {
        row.resize(static_cast<size_t>(p.value->size()));
        size_t k = 0;
        for (Eigen::Index r = 0; r < p.value->rows(); ++r)
            for (Eigen::Index c = 0; c < p.value->cols(); ++c)
                row[k++] = (*p.value)(r, c);
        io::write_f32(bin, row.data(), row.size());
    }
}

TrainedModel load_model(const fs::path& dir) {
    std::ifstream in(dir / "model.json");
    require_data(in.good(), "cannot open model.json in " + dir.string());
    json meta;
    try {
        in >> meta;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model.json: ") + e.what());
    }
    require_data(meta.at("format_version").get<int>() == 1,
                 "unsupported model format version");
    const ModelConfig arch = arch_from_json(meta.at("arch"));
    const TrainConfig tc = train_from_json(meta.at("train"));

    Model model(arch);
    model.init_params(0);

    std::ifstream bin(dir / "params.f32", std::ios::binary);
    require_data(bin.good(), "cannot open params.f32");
    char magic[4];
    bin.read(magic, 4);
    require_data(bin.gcount() == 4 && std::string(magic, 4) == "FLP1",
                 "params.f32: bad magic");
    uint32_t hlen = 0;
    bin.read(reinterpret_cast<char*>(&hlen), 4);
    std::string hs(hlen, '\0');
    bin.read(hs.data(), hlen);
    require_data(bin.good(), "params.f32: truncated header");
    const json header = json::parse(hs);

    auto params = model.params();
    const auto& tensors = header.at("tensors");
    require_data(tensors.size() == params.size(),
                 "params.f32: tensor count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& t = tensors[i];
        require_data(t.at("name").get<std::string>() == params[i].name,
                     "params.f32: tensor name mismatch at " + params[i].name);
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        require_data(rows == params[i].value->rows() &&
                         cols == params[i].value->cols(),
                     "params.f32: tensor shape mismatch at " + params[i].name);
        const auto vals =
            io::read_f32(bin, static_cast<size_t>(rows) * static_cast<size_t>(cols));
        size_t k = 0;
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                (*params[i].value)(r, c) = vals[k++];
    }

    TrainedModel m{std::move(model), tc, meta.at("target_mean").get<double>(),
                   meta.at("target_std").get<double>(), ChannelStats{}};
    m.channel_stats.mean =
        meta.at("channel_stats").at("mean").get<std::vector<double>>();
    m.channel_stats.stddev =
        meta.at("channel_stats").at("std").get<std::vector<double>>();
    return m;
}

void save_training_log(const fs::path& file, const std::vector<LossBreakdown>& log) {
    std::ofstream os(file);
    require_data(os.good(), "cannot write training log " + file.string());
    os << "epoch,total,vae_loss,reconstruction,kl_agnostic,kl_specific,"
          "discriminative,regressor_term,classifier_term,independence,beta1,"
          "beta2\n";
    os << std::setprecision(17);
    for (size_t e = 0; e < log.size(); ++e) {
        const auto& l = log[e];
        os << e << ',' << l.total << ',' << l.vae_loss << ',' << l.reconstruction
           << ',' << l.kl_agnostic << ',' << l.kl_specific << ','
           << l.discriminative << ',' << l.regressor_term << ','
           << l.classifier_term << ',' << l.independence << ',' << l.beta1 << ','
           << l.beta2 << '\n';
    }
}

}  // namespace fairload::dvae
