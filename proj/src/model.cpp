#include "gapnp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gapnp/errors.hpp"

namespace gapnp::np {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

ad::Var per_row_mean(ad::Graph& g, ad::Var rows, std::size_t examples, std::size_t per_example) {
    if (per_example == 1) return rows;
    const std::size_t width = rows.value().dim(1);
    ad::Var grouped = ad::reshape(rows, {examples, per_example, width});
    ad::Var weights = g.constant(Tensor({examples, 1, per_example}, 1.0 / static_cast<double>(per_example)));
    return ad::reshape(ad::bmm(weights, grouped), {examples, width});
}

/// Repeats each row of x `times` times, keeping example grouping.
ad::Var repeat_rows(ad::Graph& g, ad::Var x, std::size_t times) {
    if (times == 1) return x;
    const std::size_t rows = x.value().dim(0);
    Tensor select({rows * times, rows});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < times; ++t) select.at(r * times + t, r) = 1.0;
    return ad::matmul(g.constant(std::move(select)), x);
}

void require_width(const Tensor& t, std::size_t width, const char* what) {
    if (t.rank() != 2 || t.dim(1) != width) {
        throw DimensionError(std::string(what) + ": expected width " + std::to_string(width) + ", got " +
                             shape_string(t.shape()));
    }
}

}  // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::pi_attnp: return "pi-attnp";
        case ModelKind::attnp: return "attnp";
        case ModelKind::res_mlp: return "res-mlp";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
    if (name == "pi-attnp") return ModelKind::pi_attnp;
    if (name == "attnp") return ModelKind::attnp;
    if (name == "res-mlp") return ModelKind::res_mlp;
    throw ConfigError("unknown model '" + name + "' (valid: pi-attnp, attnp, res-mlp)");
}

void ModelConfig::validate() const {
    for (std::size_t w : {bins, embed, repr, latent, heads, hidden, hidden_layers, res_blocks, res_width}) {
        if (w == 0) throw ConfigError("model widths and counts must be positive");
    }
    if (repr % heads != 0) throw ConfigError("heads must divide the representation width");
    if (!(sigma_min > 0.0)) throw ConfigError("sigma_min must be positive");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"kind", to_string(kind)},     {"bins", bins},
            {"embed", embed},              {"repr", repr},
            {"latent", latent},            {"heads", heads},
            {"hidden", hidden},            {"hidden_layers", hidden_layers},
            {"res_blocks", res_blocks},    {"res_width", res_width},
            {"sigma_min", sigma_min},      {"max_steer", max_steer}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.kind = parse_model_kind(j.at("kind").get<std::string>());
    c.bins = j.value("bins", c.bins);
    c.embed = j.value("embed", c.embed);
    c.repr = j.value("repr", c.repr);
    c.latent = j.value("latent", c.latent);
    c.heads = j.value("heads", c.heads);
    c.hidden = j.value("hidden", c.hidden);
    c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
    c.res_blocks = j.value("res_blocks", c.res_blocks);
    c.res_width = j.value("res_width", c.res_width);
    c.sigma_min = j.value("sigma_min", c.sigma_min);
    c.max_steer = j.value("max_steer", c.max_steer);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    init_parameters(seed);
}

Model::Model(ModelConfig config, ad::ParameterSet params) : config_(config), params_(std::move(params)) {
    config_.validate();
    // A freshly initialised model defines the expected parameter layout.
    const Model reference(config_, 0);
    for (const auto& [name, t] : reference.params().items()) {
        if (!params_.contains(name)) throw ConfigError("checkpoint is missing parameter '" + name + "'");
        if (params_.get(name).shape() != t.shape()) {
            throw ConfigError("checkpoint parameter '" + name + "' has shape " +
                              shape_string(params_.get(name).shape()) + ", expected " + shape_string(t.shape()));
        }
    }
    if (params_.items().size() != reference.params().items().size()) {
        throw ConfigError("checkpoint has parameters this model does not use");
    }
}

void Model::add_linear(const std::string& name, std::size_t in, std::size_t out, bool bias, ad::Rng& rng) {
    params_.add(name + ".W", ad::uniform_init({in, out}, in, rng));
    if (bias) params_.add(name + ".b", ad::uniform_init({out}, in, rng));
}

void Model::add_mlp(const std::string& name, std::size_t in, std::size_t out, ad::Rng& rng) {
    std::size_t width = in;
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
        add_linear(name + ".l" + std::to_string(l), width, config_.hidden, true, rng);
        width = config_.hidden;
    }
    add_linear(name + ".out", width, out, true, rng);
}

void Model::init_parameters(std::uint64_t seed) {
    ad::Rng rng(seed);
    const ModelConfig& c = config_;
    add_mlp("vel", 2, c.embed, rng);
    if (c.kind == ModelKind::res_mlp) {
        add_linear("res.in", c.input_width(), c.res_width, true, rng);
        for (std::size_t b = 0; b < c.res_blocks; ++b) {
            const std::string blk = "res.blk" + std::to_string(b);
            add_linear(blk + ".l0", c.res_width, c.res_width, true, rng);
            add_linear(blk + ".l1", c.res_width, c.res_width, true, rng);
        }
        add_linear("res.head", c.res_width, 2, true, rng);
        return;
    }
    add_mlp("enc", c.input_width() + 1, c.repr, rng);
    for (const char* w : {"q", "k", "v", "o"}) add_linear(std::string("self.W") + w, c.repr, c.repr, false, rng);
    add_mlp("latent", c.repr, 2 * c.latent, rng);
    add_linear("cross.Wq", c.input_width(), c.repr, false, rng);
    add_linear("cross.Wk", c.input_width(), c.repr, false, rng);
    add_linear("cross.Wv", c.repr, c.repr, false, rng);
    add_linear("cross.Wo", c.repr, c.repr, false, rng);
    add_mlp("dec", c.decoder_width(), 2, rng);
}

ad::Var Model::linear(ad::Graph& g, const std::string& name, ad::Var x, bool bias) const {
    ad::Var y = ad::matmul(x, g.parameter(params_, name + ".W"));
    return bias ? ad::add_bias(y, g.parameter(params_, name + ".b")) : y;
}

ad::Var Model::mlp(ad::Graph& g, const std::string& name, ad::Var x) const {
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) x = ad::tanh(linear(g, name + ".l" + std::to_string(l), x, true));
    return linear(g, name + ".out", x, true);
}

GaussianVars Model::gaussian_head(ad::Graph&, ad::Var raw, std::size_t width) const {
    GaussianVars out;
    out.mean = ad::slice_cols(raw, 0, width);
    out.sigma = ad::add_scalar(ad::softplus(ad::slice_cols(raw, width, 2 * width)), config_.sigma_min);
    out.log_sigma = ad::log(out.sigma);
    return out;
}

ad::Var Model::embed_inputs(ad::Graph& g, ad::Var raw) const {
    const std::size_t b = config_.bins;
    require_width(raw.value(), b + 2, "model input");
    ad::Var bins = ad::slice_cols(raw, 0, b);
    ad::Var vel = mlp(g, "vel", ad::slice_cols(raw, b, b + 2));
    return ad::concat_cols({bins, vel});
}

ad::Var Model::multihead(ad::Graph& g, const std::string& name, ad::Var q_in, ad::Var k_in, ad::Var v_in,
                         std::size_t examples, std::size_t nq, std::size_t nk, ad::Var* weights) const {
    const std::size_t h = config_.heads;
    const std::size_t d = config_.repr;
    const std::size_t dh = d / h;
    auto split = [&](ad::Var x, std::size_t n) {
        return ad::reshape(ad::swap_axes12(ad::reshape(x, {examples, n, h, dh})), {examples * h, n, dh});
    };
    ad::Var q = split(linear(g, name + ".Wq", q_in, false), nq);
    ad::Var k = split(linear(g, name + ".Wk", k_in, false), nk);
    ad::Var v = split(linear(g, name + ".Wv", v_in, false), nk);
    ad::Var scores = ad::scale(ad::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
    ad::Var attn = ad::softmax(scores);
    if (weights) *weights = attn;
    ad::Var heads = ad::bmm(attn, v);
    ad::Var merged = ad::reshape(ad::swap_axes12(ad::reshape(heads, {examples, h, nq, dh})), {examples * nq, d});
    return linear(g, name + ".Wo", merged, false);
}

ad::Var Model::encode_context(ad::Graph& g, ad::Var x, ad::Var y, std::size_t examples,
                              std::size_t per_example) const {
    if (config_.kind == ModelKind::res_mlp) throw ConfigError("Res-MLP has no context encoder");
    require_width(x.value(), config_.input_width(), "encode_context x");
    require_width(y.value(), 1, "encode_context y");
    if (x.value().dim(0) != examples * per_example || y.value().dim(0) != x.value().dim(0)) {
        throw DimensionError("encode_context: row count does not match examples x per_example");
    }
    ad::Var embedded = mlp(g, "enc", ad::concat_cols({x, y}));
    return multihead(g, "self", embedded, embedded, embedded, examples, per_example, per_example, nullptr);
}

GaussianVars Model::latent_path(ad::Graph& g, ad::Var r_c, std::size_t examples, std::size_t per_example) const {
    ad::Var pooled = per_row_mean(g, r_c, examples, per_example);
    return gaussian_head(g, mlp(g, "latent", pooled), config_.latent);
}

ad::Var Model::cross_attention(ad::Graph& g, ad::Var x_context, ad::Var x_target, ad::Var r_c,
                               std::size_t examples, std::size_t nc, std::size_t nt, ad::Var* weights) const {
    return multihead(g, "cross", x_target, x_context, r_c, examples, nt, nc, weights);
}

GaussianVars Model::decode(ad::Graph& g, ad::Var x_target, ad::Var r_lambda, ad::Var z,
                           std::optional<ad::Var> prior) const {
    if (prior && !config_.prior_enabled()) throw ConfigError("decode: prior supplied to a model without a prior input");
    if (!prior && config_.prior_enabled()) throw ConfigError("decode: model requires a prior input");
    std::vector<ad::Var> parts{x_target, r_lambda, z};
    if (prior) parts.push_back(*prior);
    return gaussian_head(g, mlp(g, "dec", ad::concat_cols(parts)), 1);
}

GaussianVars Model::resmlp_forward(ad::Graph& g, ad::Var x_target) const {
    if (config_.kind != ModelKind::res_mlp) throw ConfigError("resmlp_forward on a neural-process model");
    require_width(x_target.value(), config_.input_width(), "resmlp_forward");
    ad::Var h = linear(g, "res.in", x_target, true);
    for (std::size_t b = 0; b < config_.res_blocks; ++b) {
        const std::string blk = "res.blk" + std::to_string(b);
        h = ad::add(h, linear(g, blk + ".l1", ad::tanh(linear(g, blk + ".l0", h, true)), true));
    }
    return gaussian_head(g, linear(g, "res.head", h, true), 1);
}

NPForwardOutput Model::forward(ad::Graph& g, const ContextTargetBatch& batch, LatentMode mode,
                               const Tensor* eps) const {
    const std::size_t B = batch.examples, nc = batch.context_per_example, nt = batch.target_per_example;
    if (B == 0) throw ContractError("forward: empty batch");
    NPForwardOutput out;
    ad::Var xt = embed_inputs(g, g.constant(batch.x_target));
    if (xt.value().dim(0) != B * nt) throw DimensionError("forward: target rows do not match the batch size");
    if (config_.kind == ModelKind::res_mlp) {
        out.predictive = resmlp_forward(g, xt);
        return out;
    }

    ad::Var xc = embed_inputs(g, g.constant(batch.x_context));
    ad::Var yc = g.constant(batch.y_context);
    ad::Var r_c = encode_context(g, xc, yc, B, nc);
    out.z_prior = latent_path(g, r_c, B, nc);
    if (mode == LatentMode::posterior_sample || (g.tracks_gradients() && batch.y_target.size() == B * nt)) {
        ad::Var r_t = encode_context(g, xt, g.constant(batch.y_target), B, nt);
        out.z_posterior = latent_path(g, r_t, B, nt);
    }

    ad::Var z;
    if (mode == LatentMode::prior_mean) {
        z = out.z_prior->mean;
    } else {
        if (!eps || eps->shape() != Shape{B, config_.latent}) {
            throw ContractError("forward: sampling requires noise of shape " + shape_string({B, config_.latent}));
        }
        const GaussianVars& q = mode == LatentMode::posterior_sample ? *out.z_posterior : *out.z_prior;
        z = ad::add(q.mean, ad::mul(q.sigma, g.constant(*eps)));
    }
    z = repeat_rows(g, z, nt);

    out.r_lambda = cross_attention(g, xc, xt, r_c, B, nc, nt);
    std::optional<ad::Var> prior;
    if (config_.prior_enabled()) prior = g.constant(batch.prior);
    out.predictive = decode(g, xt, *out.r_lambda, z, prior);
    return out;
}

LossTerms Model::loss(ad::Graph& g, const ContextTargetBatch& batch, LatentMode mode, ad::Rng& rng) const {
    if (mode == LatentMode::prior_mean || config_.kind == ModelKind::res_mlp) return loss(g, batch, mode, nullptr);
    Tensor eps({batch.examples, config_.latent});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& e : eps.storage()) e = normal(rng);
    return loss(g, batch, mode, &eps);
}

LossTerms Model::loss(ad::Graph& g, const ContextTargetBatch& batch, LatentMode mode, const Tensor* eps) const {
    const NPForwardOutput out = forward(g, batch, mode, eps);
    ad::Var y = g.constant(batch.y_target);
    ad::Var nll = ad::mean_all(gaussian_nll(y, out.predictive.mean, out.predictive.log_sigma));
    LossTerms terms;
    terms.nll = nll.value().item();
    terms.loss = nll;
    if (out.z_posterior && out.z_prior) {
        ad::Var kl = ad::mean_all(gaussian_kl(out.z_posterior->mean, out.z_posterior->log_sigma,
                                              out.z_prior->mean, out.z_prior->log_sigma));
        terms.kl = kl.value().item();
        terms.loss = ad::add(nll, kl);
    }
    terms.loss_value = terms.loss.value().item();
    const Tensor& mu = out.predictive.mean.value();
    double mae = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) mae += std::abs(mu[i] - batch.y_target[i]);
    terms.mae = mae / static_cast<double>(mu.size());
    return terms;
}

double Model::predict_steering(std::span<const double> x_context, double y_context,
                               std::span<const double> x_target, std::optional<double> prior) const {
    const std::size_t w = config_.bins + 2;
    if (x_context.size() != w || x_target.size() != w) {
        throw DimensionError("predict_steering: inputs must have " + std::to_string(w) + " values");
    }
    if (prior.has_value() != config_.prior_enabled()) {
        throw ConfigError(config_.prior_enabled() ? "predict_steering: model requires a prior"
                                                  : "predict_steering: model takes no prior");
    }
    ContextTargetBatch batch;
    batch.examples = 1;
    batch.x_context = Tensor({1, w}, std::vector<double>(x_context.begin(), x_context.end()));
    batch.y_context = Tensor({1, 1}, y_context);
    batch.x_target = Tensor({1, w}, std::vector<double>(x_target.begin(), x_target.end()));
    batch.prior = Tensor({1, 1}, prior.value_or(0.0));
    ad::Graph g(false);
    const NPForwardOutput out = forward(g, batch, LatentMode::prior_mean);
    return std::clamp(out.predictive.mean.value().item(), -config_.max_steer, config_.max_steer);
}

// ---------------------------------------------------------------------------

ad::Var gaussian_kl(ad::Var q_mean, ad::Var q_log_sigma, ad::Var p_mean, ad::Var p_log_sigma) {
    ad::Var var_q = ad::exp(ad::scale(q_log_sigma, 2.0));
    ad::Var inv_var_p = ad::exp(ad::scale(p_log_sigma, -2.0));
    ad::Var diff2 = ad::square(ad::sub(q_mean, p_mean));
    ad::Var ratio = ad::scale(ad::mul(ad::add(var_q, diff2), inv_var_p), 0.5);
    ad::Var terms = ad::add_scalar(ad::add(ad::sub(p_log_sigma, q_log_sigma), ratio), -0.5);
    return ad::sum(terms, 1);
}

ad::Var gaussian_nll(ad::Var y, ad::Var mean, ad::Var log_sigma) {
    ad::Var z = ad::mul(ad::sub(y, mean), ad::exp(ad::neg(log_sigma)));
    return ad::add_scalar(ad::add(log_sigma, ad::scale(ad::square(z), 0.5)), kHalfLog2Pi);
}

}  // namespace gapnp::np
