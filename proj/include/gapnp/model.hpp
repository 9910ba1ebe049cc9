#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gapnp/autodiff.hpp"
#include "gapnp/optim.hpp"

namespace gapnp::np {

/// Paired context/target records. Rows are grouped per example: example i
/// owns context rows [i*nc, (i+1)*nc) and target rows [i*nt, (i+1)*nt).
/// Input rows are raw [bins..., v, omega]; the velocity embedding happens
/// inside the model.
struct ContextTargetBatch {
    Tensor x_context;  ///< (B*nc, b+2)
    Tensor y_context;  ///< (B*nc, 1)
    Tensor x_target;   ///< (B*nt, b+2)
    Tensor y_target;   ///< (B*nt, 1)
    Tensor prior;      ///< (B*nt, 1) gap-prior steering estimate
    std::size_t examples = 0;
    std::size_t context_per_example = 1;
    std::size_t target_per_example = 1;
};

enum class ModelKind { pi_attnp, attnp, res_mlp };

std::string to_string(ModelKind kind);
/// Throws ConfigError listing the valid names.
ModelKind parse_model_kind(const std::string& name);

struct ModelConfig {
    ModelKind kind = ModelKind::pi_attnp;
    std::size_t bins = 54;
    std::size_t embed = 16;         ///< velocity embedding width e
    std::size_t repr = 128;         ///< representation width d_r
    std::size_t latent = 32;        ///< latent width d_z
    std::size_t heads = 8;
    std::size_t hidden = 128;       ///< hidden width of every MLP
    std::size_t hidden_layers = 2;
    std::size_t res_blocks = 4;
    std::size_t res_width = 128;
    double sigma_min = 1e-3;
    double max_steer = 0.6981;

    bool prior_enabled() const { return kind == ModelKind::pi_attnp; }
    std::size_t input_width() const { return bins + embed; }
    /// Width of the decoder input: [x_T, R_Lambda, z, (prior)].
    std::size_t decoder_width() const { return input_width() + repr + latent + (prior_enabled() ? 1 : 0); }

    /// Throws ConfigError on non-positive widths or heads not dividing repr.
    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// Diagonal Gaussian held as graph variables. sigma >= sigma_min by construction.
struct GaussianVars {
    ad::Var mean;
    ad::Var log_sigma;
    ad::Var sigma;
};

/// Plain-value copy of a Gaussian.
struct GaussianParams {
    Tensor mean;
    Tensor log_sigma;
};

enum class LatentMode {
    posterior_sample,  ///< training: z ~ q(z | targets) by reparameterisation
    prior_sample,      ///< z ~ q(z | context)
    prior_mean,        ///< z = mean of q(z | context), deterministic
};

struct NPForwardOutput {
    GaussianVars predictive;
    std::optional<GaussianVars> z_prior;
    std::optional<GaussianVars> z_posterior;
    std::optional<ad::Var> r_lambda;
};

struct LossTerms {
    ad::Var loss;
    double loss_value = 0.0;
    double mae = 0.0;  ///< mean |mu - y| over target points
    double nll = 0.0;  ///< mean Gaussian NLL per target point
    double kl = 0.0;   ///< mean KL per example (0 for Res-MLP)
};

/// Steering model with its parameters. One class covers PI-AttNP, AttNP and
/// the Res-MLP baseline; `config.kind` selects the forward pass.
class Model {
public:
    Model(ModelConfig config, std::uint64_t seed);
    Model(ModelConfig config, ad::ParameterSet params);

    const ModelConfig& config() const { return config_; }
    ad::ParameterSet& params() { return params_; }
    const ad::ParameterSet& params() const { return params_; }

    // Building blocks, exposed for testing.

    /// [bins, v, omega] rows -> [bins, MLP(v, omega)] rows.
    ad::Var embed_inputs(ad::Graph& g, ad::Var raw) const;
    /// Embedding MLP over [x, y] pairs followed by self-attention within each
    /// example's context set. Returns R_C, (B*nc, repr).
    ad::Var encode_context(ad::Graph& g, ad::Var x, ad::Var y, std::size_t examples,
                           std::size_t per_example) const;
    /// Mean over each example's rows of R_C, then the latent encoder.
    GaussianVars latent_path(ad::Graph& g, ad::Var r_c, std::size_t examples,
                             std::size_t per_example) const;
    /// Multi-head attention with targets as queries, contexts as keys and
    /// R_C as values. Optionally returns the (B*heads, nt, nc) weights.
    ad::Var cross_attention(ad::Graph& g, ad::Var x_context, ad::Var x_target, ad::Var r_c,
                            std::size_t examples, std::size_t nc, std::size_t nt,
                            ad::Var* weights = nullptr) const;
    /// Decoder over [x_T, R_Lambda, z, (prior)]. Throws ConfigError if a prior
    /// is supplied to a model without one, or missing for one that needs it.
    GaussianVars decode(ad::Graph& g, ad::Var x_target, ad::Var r_lambda, ad::Var z,
                        std::optional<ad::Var> prior) const;
    /// Residual MLP over embedded target inputs.
    GaussianVars resmlp_forward(ad::Graph& g, ad::Var x_target) const;

    /// Complete forward pass for a batch. `eps` supplies the reparameterisation
    /// noise (B, latent) for the sampling modes.
    NPForwardOutput forward(ad::Graph& g, const ContextTargetBatch& batch, LatentMode mode,
                            const Tensor* eps = nullptr) const;

    /// Training objective: NLL of targets plus KL(posterior || prior) for the
    /// neural processes, plain NLL for Res-MLP.
    LossTerms loss(ad::Graph& g, const ContextTargetBatch& batch, LatentMode mode, ad::Rng& rng) const;
    LossTerms loss(ad::Graph& g, const ContextTargetBatch& batch, LatentMode mode,
                   const Tensor* eps) const;

    /// Deterministic steering for one step (prior-mean latent), clamped to the
    /// steering box. Raw inputs are [bins..., v, omega].
    double predict_steering(std::span<const double> x_context, double y_context,
                            std::span<const double> x_target, std::optional<double> prior) const;

private:
    void init_parameters(std::uint64_t seed);
    void add_linear(const std::string& name, std::size_t in, std::size_t out, bool bias, ad::Rng& rng);
    void add_mlp(const std::string& name, std::size_t in, std::size_t out, ad::Rng& rng);
    ad::Var linear(ad::Graph& g, const std::string& name, ad::Var x, bool bias) const;
    ad::Var mlp(ad::Graph& g, const std::string& name, ad::Var x) const;
    ad::Var multihead(ad::Graph& g, const std::string& name, ad::Var q_in, ad::Var k_in,
                      ad::Var v_in, std::size_t examples, std::size_t nq, std::size_t nk,
                      ad::Var* weights) const;
    GaussianVars gaussian_head(ad::Graph& g, ad::Var raw, std::size_t width) const;

    ModelConfig config_;
    ad::ParameterSet params_;
};

/// Closed-form KL(q || p) for diagonal Gaussians, summed over columns; one
/// value per row.
ad::Var gaussian_kl(ad::Var q_mean, ad::Var q_log_sigma, ad::Var p_mean, ad::Var p_log_sigma);

/// Per-element Gaussian negative log-likelihood.
ad::Var gaussian_nll(ad::Var y, ad::Var mean, ad::Var log_sigma);

}  // namespace gapnp::np
