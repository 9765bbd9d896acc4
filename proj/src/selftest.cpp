#include "fairload/selftest.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fairload/dvae.hpp"
#include "fairload/metrics.hpp"
#include "fairload/rng.hpp"
#include "fairload/signal.hpp"

namespace fairload::selftest {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// reduced architecture per the gradient-oracle contract: latent 2, one conv
// filter per layer, batch norm off, dropout 0
dvae::ModelConfig reduced_arch() {
    dvae::ModelConfig cfg;
    cfg.input_length = 8;
    cfg.n_channels = 2;
    cfg.latent_dim = 2;
    cfg.conv_filters = {1, 1, 1};
    cfg.fc_hidden1 = 4;
    cfg.fc_hidden2 = 3;
    cfg.head_hidden1 = 4;
    cfg.head_hidden2 = 3;
    cfg.conv_kernel = 3;
    cfg.dropout_rate = 0.0;
    cfg.batchnorm = false;
    cfg.mode = dvae::Mode::dvae;
    return cfg;
}

struct TinyProblem {
    dvae::Model model;
    std::vector<Matrix> xs;
    dvae::Batch batch;
    dvae::EpsDraws eps;
};

TinyProblem make_tiny(uint64_t seed, int n = 4) {
    TinyProblem p{dvae::Model(reduced_arch()), {}, {}, {}};
    p.model.init_params(seed);
    const auto& cfg = p.model.config();
    rng::Stream rs{rng::mix64(seed ^ 0xABCDEF)};
    // move off the all-zero biases so no pre-activation sits exactly on a
    // ReLU kink, where central differences straddle the corner
    for (auto& pr : p.model.params())
        if (pr.trainable)
            for (Eigen::Index i = 0; i < pr.value->size(); ++i)
                (*pr.value)(i) += rs.uniform(-0.15, 0.15);
    p.xs.reserve(n);
    for (int i = 0; i < n; ++i) {
        Matrix x(cfg.input_length, cfg.n_channels);
        for (int t = 0; t < cfg.input_length; ++t)
            for (int c = 0; c < cfg.n_channels; ++c) x(t, c) = rs.normal();
        p.xs.push_back(std::move(x));
    }
    p.batch.target.resize(n);
    for (int i = 0; i < n; ++i) {
        p.batch.x.push_back(&p.xs[i]);
        p.batch.target(i) = rs.normal();
        p.batch.sex.push_back(static_cast<int>(rs.below(2)));
    }
    Matrix ea(n, cfg.latent_dim), es(n, cfg.latent_dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < cfg.latent_dim; ++j) {
            ea(i, j) = rs.normal();
            es(i, j) = rs.normal();
        }
    p.eps.agnostic.push_back(std::move(ea));
    p.eps.specific.push_back(std::move(es));
    return p;
}

double component_loss(TinyProblem& p, double wv, double b1, double b2) {
    dvae::StepOptions opts;
    opts.train = true;
    opts.with_grad = false;
    opts.vae_weight = wv;
    opts.beta1 = b1;
    opts.beta2 = b2;
    return p.model.evaluate(p.batch, p.eps, opts, nullptr).total;
}

}  // namespace

CheckResult check_kl_closed_forms() {
    const auto t0 = Clock::now();
    CheckResult r{"kl_closed_forms", false, "", 0};
    std::ostringstream msg;
    bool ok = true;

    const Vector zero = Vector::Zero(16);
    const double kl0 = dvae::kl_diag_gaussian(zero, zero);
    if (kl0 != 0.0) {
        ok = false;
        msg << "KL(N(0,I)||N(0,I)) = " << kl0 << " != 0; ";
    }

    Vector one = Vector::Ones(1);
    Vector lv0 = Vector::Zero(1);
    const double kl1 = dvae::kl_diag_gaussian(one, lv0);
    if (std::abs(kl1 - 0.5) > 1e-9) {
        ok = false;
        msg << "per-dim KL(N(1,1)||N(0,1)) = " << kl1 << " != 0.5; ";
    }

    // quadrature oracle on random 16-dim posteriors: per dimension
    // integrate q(x) log(q(x)/p(x)) dx with Simpson's rule
    rng::Stream rs{411};
    double max_quad_err = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        Vector mu(16), lv(16);
        for (int j = 0; j < 16; ++j) {
            mu(j) = rs.normal();
            lv(j) = 0.8 * rs.normal();
        }
        double quad = 0.0;
        for (int j = 0; j < 16; ++j) {
            const double m = mu(j), sd = std::exp(0.5 * lv(j));
            const int steps = 4000;
            const double lo = m - 12 * sd, hi = m + 12 * sd;
            const double h = (hi - lo) / steps;
            double acc = 0.0;
            for (int i = 0; i <= steps; ++i) {
                const double x = lo + i * h;
                const double q = std::exp(-0.5 * (x - m) * (x - m) / (sd * sd)) /
                                 (sd * std::sqrt(2 * std::numbers::pi));
                const double logq = -0.5 * (x - m) * (x - m) / (sd * sd) -
                                    std::log(sd) -
                                    0.5 * std::log(2 * std::numbers::pi);
                const double logp =
                    -0.5 * x * x - 0.5 * std::log(2 * std::numbers::pi);
                const double f = q * (logq - logp);
                const double wgt = (i == 0 || i == steps) ? 1 : (i % 2 ? 4 : 2);
                acc += wgt * f;
            }
            quad += acc * h / 3.0;
        }
        max_quad_err = std::max(max_quad_err,
                                std::abs(quad - dvae::kl_diag_gaussian(mu, lv)));
    }
    if (max_quad_err > 1e-6) {
        ok = false;
        msg << "quadrature mismatch " << max_quad_err << "; ";
    }

    r.pass = ok;
    msg << "quad_err=" << max_quad_err;
    r.detail = msg.str();
    r.seconds = elapsed(t0);
    return r;
}

CheckResult check_loss_additivity() {
    const auto t0 = Clock::now();
    CheckResult r{"loss_additivity", false, "", 0};
    double max_err = 0.0;
    rng::Stream rs{902};
    for (int rep = 0; rep < 100; ++rep) {
        TinyProblem p = make_tiny(rs.next_u64(), 3);
        dvae::StepOptions opts;
        opts.train = true;
        opts.with_grad = false;
        opts.vae_weight = 1.0;
        opts.beta1 = rs.uniform(0.0, 2.0);
        opts.beta2 = rs.uniform(0.0, 1.0);
        const auto lb = p.model.evaluate(p.batch, p.eps, opts, nullptr);
        const double recon = lb.vae_loss + opts.beta1 * lb.discriminative +
                             opts.beta2 * lb.independence;
        max_err = std::max(max_err, std::abs(lb.total - recon));
        max_err = std::max(
            max_err, std::abs(lb.vae_loss - (lb.reconstruction + lb.kl_agnostic +
                                             lb.kl_specific)));
        if (lb.kl_agnostic < 0 || lb.kl_specific < 0) max_err = 1.0;
    }
    r.pass = max_err < 1e-9;
    r.detail = "max additivity error " + std::to_string(max_err) +
               " over 100 random tiny batches";
    r.seconds = elapsed(t0);
    return r;
}

CheckResult check_gradient_oracle() {
    const auto t0 = Clock::now();
    CheckResult r{"gradient_oracle", false, "", 0};
    const double h = 1e-5;
    const double tol = 1e-4;

    struct Component {
        const char* name;
        double wv, b1, b2;
    };
    const Component comps[] = {{"vae", 1, 0, 0}, {"dc", 0, 1, 0}, {"ie", 0, 0, 1}};

    TinyProblem p = make_tiny(20240817);
    auto params = p.model.params();

    double worst = 0.0;
    std::string worst_at = "-";
    double worst_head_ie = 0.0;

    for (const auto& comp : comps) {
        // analytic pass
        p.model.zero_grads();
        dvae::StepOptions opts;
        opts.train = true;
        opts.with_grad = true;
        opts.vae_weight = comp.wv;
        opts.beta1 = comp.b1;
        opts.beta2 = comp.b2;
        p.model.evaluate(p.batch, p.eps, opts, nullptr);

        for (auto& pr : params) {
            if (!pr.trainable) continue;
            const bool head_param = pr.name.rfind("regressor", 0) == 0 ||
                                    pr.name.rfind("classifier", 0) == 0;
            for (Eigen::Index i = 0; i < pr.value->size(); ++i) {
                const double analytic = (*pr.grad)(i);
                if (std::string_view(comp.name) == "ie" && head_param) {
                    // routing contract: heads receive no gradient from the
                    // independence term
                    worst_head_ie = std::max(worst_head_ie, std::abs(analytic));
                    continue;
                }
                const double orig = (*pr.value)(i);
                (*pr.value)(i) = orig + h;
                const double up = component_loss(p, comp.wv, comp.b1, comp.b2);
                (*pr.value)(i) = orig - h;
                const double dn = component_loss(p, comp.wv, comp.b1, comp.b2);
                (*pr.value)(i) = orig;
                const double fd = (up - dn) / (2 * h);
                const double denom = std::max(std::abs(analytic), std::abs(fd));
                if (denom < 1e-8) continue;
                const double rel = std::abs(analytic - fd) / denom;
                if (rel > worst) {
                    worst = rel;
                    worst_at = std::string(comp.name) + ":" + pr.name + "[" +
                               std::to_string(i) + "]";
                }
            }
        }
    }

    r.pass = worst < tol && worst_head_ie == 0.0;
    std::ostringstream msg;
    msg << "max rel err " << worst << " at " << worst_at
        << "; max |dIE/dhead| = " << worst_head_ie;
    r.detail = msg.str();
    r.seconds = elapsed(t0);
    return r;
}

CheckResult check_filter_oracle() {
    const auto t0 = Clock::now();
    CheckResult r{"filter_oracle", false, "", 0};
    const double fs = 80.0, fc = 6.0;
    const int n = 400;

    auto amplitude = [&](double f_hz) {
        std::vector<double> x(n);
        for (int i = 0; i < n; ++i)
            x[i] = std::sin(2 * std::numbers::pi * f_hz * i / fs);
        const auto y = signal::butterworth_lowpass(x, fs, fc);
        double ss = 0, sc = 0, cc = 0, xs = 0, xc = 0;
        for (int i = 100; i < 300; ++i) {
            const double s = std::sin(2 * std::numbers::pi * f_hz * i / fs);
            const double c = std::cos(2 * std::numbers::pi * f_hz * i / fs);
            ss += s * s;
            cc += c * c;
            sc += s * c;
            xs += y[i] * s;
            xc += y[i] * c;
        }
        const double det = ss * cc - sc * sc;
        return std::hypot((xs * cc - xc * sc) / det, (xc * ss - xs * sc) / det);
    };

    const double g1 = signal::zero_phase_gain(1.0, fs, fc);
    const double g20 = signal::zero_phase_gain(20.0, fs, fc);
    const double e1 = std::abs(amplitude(1.0) - g1) / g1;
    const double e20 = std::abs(amplitude(20.0) - g20) / g20;

    double sym_err = 0.0;
    rng::Stream rs{7311};
    for (int rep = 0; rep < 20; ++rep) {
        const int len = 13 + static_cast<int>(rs.below(200));
        std::vector<double> x(len);
        for (auto& v : x) v = rs.normal(0.0, 3.0);
        const auto fwd = signal::butterworth_lowpass(x, fs, fc);
        std::vector<double> xr(x.rbegin(), x.rend());
        auto bwd = signal::butterworth_lowpass(xr, fs, fc);
        std::reverse(bwd.begin(), bwd.end());
        for (int i = 0; i < len; ++i)
            sym_err = std::max(sym_err, std::abs(fwd[i] - bwd[i]));
    }

    r.pass = e1 <= 0.01 && e20 <= 0.05 && sym_err < 1e-9;
    std::ostringstream msg;
    msg << "1Hz rel err " << e1 << " (tol 1%), 20Hz rel err " << e20
        << " (tol 5%), reversal sym err " << sym_err;
    r.detail = msg.str();
    r.seconds = elapsed(t0);
    return r;
}

CheckResult check_metric_oracle() {
    const auto t0 = Clock::now();
    CheckResult r{"metric_oracle", false, "", 0};
    rng::Stream rs{5150};
    double max_err = 0.0;
    double max_decomp = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        metrics::GroupedPredictions g;
        const int nf = 1 + static_cast<int>(rs.below(20));
        const int nm = 1 + static_cast<int>(rs.below(20));
        for (int i = 0; i < nf + nm; ++i) {
            metrics::Record rec;
            rec.subject_id = "s" + std::to_string(i);
            rec.trial_id = "t" + std::to_string(i);
            rec.sex = i < nf ? Sex::female : Sex::male;
            rec.y_true_kg = rs.uniform(0.0, 25.0);
            rec.y_pred_kg = rec.y_true_kg + rs.normal(0.0, 4.0);
            g.push_back(rec);
        }

        // straight-line recomputation of Eqs. 2-4 and MAE
        double sumf = 0, summ = 0, posf = 0, posm = 0, negf = 0, negm = 0,
               abs_sum = 0;
        for (const auto& rec : g) {
            const double resid = rec.y_true_kg - rec.y_pred_kg;
            abs_sum += std::abs(resid);
            if (rec.sex == Sex::female) {
                sumf += rec.y_pred_kg;
                posf += std::max(0.0, resid);
                negf += std::min(0.0, resid);
            } else {
                summ += rec.y_pred_kg;
                posm += std::max(0.0, resid);
                negm += std::min(0.0, resid);
            }
        }
        const double sp_oracle = sumf / nf - summ / nm;
        const double prd_oracle = std::abs(posf / nf - posm / nm);
        const double nrd_oracle = std::abs(negf / nf - negm / nm);
        const double mae_oracle = abs_sum / (nf + nm);

        max_err = std::max(max_err,
                           std::abs(metrics::statistical_parity(g) - sp_oracle));
        max_err = std::max(
            max_err,
            std::abs(metrics::positive_residual_difference(g) - prd_oracle));
        max_err = std::max(
            max_err,
            std::abs(metrics::negative_residual_difference(g) - nrd_oracle));
        max_err = std::max(max_err, std::abs(metrics::mae(g) - mae_oracle));

        // residual decomposition: exact per record, mean-level to rounding
        double mean_resid = 0;
        for (const auto& rec : g) {
            const double resid = rec.y_true_kg - rec.y_pred_kg;
            const double parts = std::max(0.0, resid) + std::min(0.0, resid);
            if (parts != resid) max_decomp = 1.0;
            mean_resid += resid;
        }
        mean_resid /= (nf + nm);
        const double decomp =
            (posf + posm) / (nf + nm) + (negf + negm) / (nf + nm);
        max_decomp = std::max(max_decomp, std::abs(mean_resid - decomp));
    }
    r.pass = max_err < 1e-9 && max_decomp < 1e-12;
    std::ostringstream msg;
    msg << "max metric err " << max_err << ", residual decomposition err "
        << max_decomp << " over 1000 instances";
    r.detail = msg.str();
    r.seconds = elapsed(t0);
    return r;
}

std::vector<CheckResult> run_all() {
    return {check_kl_closed_forms(), check_loss_additivity(),
            check_gradient_oracle(), check_filter_oracle(),
            check_metric_oracle()};
}

}  // namespace fairload::selftest
