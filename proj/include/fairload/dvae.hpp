#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>

#include "fairload/nn.hpp"
#include "fairload/types.hpp"

namespace fairload::dvae {

enum class Mode { dvae, plain_vae };
enum class DecoderVariance { fixed_unit, learned_scalar };

const char* to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct ModelConfig {
    int input_length = kCycleLength;
    int n_channels = 72;
    int latent_dim = 16;
    double arch_scale = 1.0;  // multiplies the nominal layer widths below
    int conv_kernel = 5;
    std::array<int, 3> conv_filters{64, 128, 256};
    int fc_hidden1 = 128;
    int fc_hidden2 = 64;
    int head_hidden1 = 128;
    int head_hidden2 = 64;
    double dropout_rate = 0.25;
    bool batchnorm = true;  // heads only
    double logvar_clamp = 10.0;
    Mode mode = Mode::dvae;
    DecoderVariance decoder_variance = DecoderVariance::fixed_unit;

    int scaled(int nominal) const {
        return std::max(1, static_cast<int>(std::lround(nominal * arch_scale)));
    }
    void validate() const;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 200;
    int batch_size = 64;
    double beta1 = 1.0;  // discriminative loss weight
    double beta2 = 0.1;  // independence excitation weight
    uint64_t seed = 0;
    int mc_samples = 1;
    bool target_standardization = true;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

    void validate() const;
};

struct LossBreakdown {
    double reconstruction = 0;
    double kl_agnostic = 0;
    double kl_specific = 0;
    double vae_loss = 0;
    double regressor_term = 0;
    double classifier_term = 0;
    double discriminative = 0;
    double independence = 0;
    double total = 0;
    double beta1 = 0;
    double beta2 = 0;
};

// sex-agnostic and sex-specific posteriors of one cycle
struct LatentPair {
    Vector z_mean, z_logvar;
    Vector zsex_mean, zsex_logvar;  // empty in plain_vae mode
};

struct LatentBatch {
    Matrix mu, logvar;          // [N x latent]
    Matrix mu_sex, logvar_sex;  // empty in plain_vae mode
};

// KL(N(mean, diag exp(logvar)) || N(0, I))
double kl_diag_gaussian(const Vector& mean, const Vector& logvar);

// mean + exp(0.5 logvar) .* eps, elementwise
Matrix reparameterize(const Matrix& mean, const Matrix& logvar, const Matrix& eps);

struct Batch {
    std::vector<const Matrix*> x;  // each [input_length x n_channels]
    Vector target;                 // standardized weight targets [N]
    std::vector<int> sex;          // 0 = male, 1 = female
    size_t size() const { return x.size(); }
};

struct EpsDraws {
    std::vector<Matrix> agnostic;  // mc_samples x [N x latent]
    std::vector<Matrix> specific;
};

struct StepOptions {
    bool train = true;      // batch statistics + dropout
    bool with_grad = true;  // accumulate parameter gradients
    double vae_weight = 1.0;
    double beta1 = 1.0;
    double beta2 = 0.1;
};

class Model {
  public:
    explicit Model(const ModelConfig& cfg);
    ~Model();
    Model(Model&&) noexcept;
    Model& operator=(Model&&) noexcept;

    const ModelConfig& config() const { return cfg_; }
    void init_params(uint64_t seed);
    std::vector<nn::ParamRef> params();
    void zero_grads();

    // train-path encode; caches activations for the following backward
    LatentBatch encode(const std::vector<const Matrix*>& xs, bool train);
    // cache-free eval path
    LatentPair encode_one(const Matrix& x) const;

    // decode a latent batch; zsex must be empty in plain_vae mode
    std::vector<Matrix> decode(const Matrix& z, const Matrix& zsex, bool train);

    // Eq.-1 style three-term objective on one batch; per-sample losses are
    // batch means. Gradients of the independence term reach the encoders
    // only; head parameters are treated as constants inside it.
    LossBreakdown evaluate(const Batch& batch, const EpsDraws& eps,
                           const StepOptions& opts, rng::Stream* dropout_rng);

    // Eq.-A5 discriminative loss on given latents, eval-mode heads:
    // MSE(target, r(z)) + cross-entropy(sex, c(zsex)).
    double discriminative_loss(const Matrix& z, const Matrix& zsex,
                               const Vector& target,
                               const std::vector<int>& sex) const;

    // Eq.-A6 independence excitation on given latents, eval-mode heads:
    // -MSE(target, r(zsex)) - cross-entropy(sex, c(z)). dvae mode only.
    double independence_excitation_loss(const Matrix& z, const Matrix& zsex,
                                        const Vector& target,
                                        const std::vector<int>& sex) const;

    // eval-mode point prediction from z_mean, in standardized target units
    double predict_standardized(const Matrix& x) const;

    struct Impl;
    Impl& impl() { return *impl_; }
    const Impl& impl() const { return *impl_; }

  private:
    ModelConfig cfg_;
    std::unique_ptr<Impl> impl_;
};

struct TrainedModel {
    Model model;
    TrainConfig train_config;
    double target_mean = 0.0;
    double target_std = 1.0;
    ChannelStats channel_stats;  // normalization applied to training inputs
};

struct TrainResult {
    TrainedModel trained;
    std::vector<LossBreakdown> log;  // one entry per epoch
};

// Trains on an already-normalized dataset (channel_stats must be present).
TrainResult train(const Dataset& normalized, const ModelConfig& arch,
                  const TrainConfig& cfg);

// Inference on cycles normalized with the model's channel stats; returns kg.
double predict_weight(const TrainedModel& m, const Matrix& normalized_cycle);

// Mean of per-cycle predictions over one trial's cycles (all same trial_id).
double predict_trial(const TrainedModel& m,
                     const std::vector<const GaitCycle*>& cycles);

// Normalizes `ds` with the model's stats and predicts each trial; returns
// (trial_id -> prediction) in first-appearance order.
std::vector<std::pair<std::string, double>> predict_dataset(
    const TrainedModel& m, const Dataset& ds);

// CSV dump of posterior means per cycle.
void export_latents(const TrainedModel& m, const Dataset& ds, std::ostream& os);

void save_model(const std::filesystem::path& dir, const TrainedModel& m);
TrainedModel load_model(const std::filesystem::path& dir);
void save_training_log(const std::filesystem::path& file,
                       const std::vector<LossBreakdown>& log);

}  // namespace fairload::dvae
