#include "spamdet/head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spamdet/checkpoint.hpp"
#include "spamdet/error.hpp"

namespace spamdet {

namespace {

std::span<double> span_of(MatrixD &m) { return m.data(); }
std::span<const double> span_of(const MatrixD &m) { return m.data(); }

MatrixD linear(const MatrixD &x, const MatrixD &w, std::span<const double> b) {
    MatrixD y = matmul(x, w);
    add_row_bias(y, b);
    return y;
}

void apply_mask(MatrixD &x, const MatrixD &mask) {
    if (mask.empty()) return;
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] *= mask.data()[i];
}

void relu_inplace(MatrixD &x) {
    for (auto &v : x.data()) v = std::max(v, 0.0);
}

void relu_backward(MatrixD &grad, const MatrixD &pre) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(pre.data()[i] > 0.0)) grad.data()[i] = 0.0;
}

std::vector<double> column_sums(const MatrixD &m) {
    std::vector<double> s(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s[j] += m(i, j);
    return s;
}

// Gradient through batch norm; fills dgamma/dbeta, returns d(input).
MatrixD batchnorm_backward(const MatrixD &dy, const BatchNormCache &bn, std::span<const double> gamma, Mode mode,
                           std::span<double> dgamma, std::span<double> dbeta) {
    const std::size_t n = dy.rows(), f = dy.cols();
    MatrixD dx(n, f);
    for (std::size_t j = 0; j < f; ++j) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0, g = 0.0, b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g += dy(i, j) * bn.xhat(i, j);
            b += dy(i, j);
            const double dxhat = dy(i, j) * gamma[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * bn.xhat(i, j);
        }
        dgamma[j] = g;
        dbeta[j] = b;
        for (std::size_t i = 0; i < n; ++i) {
            const double dxhat = dy(i, j) * gamma[j];
            if (mode == Mode::Train) {
                dx(i, j) = bn.inv_std[j] / static_cast<double>(n) *
                           (static_cast<double>(n) * dxhat - sum_dxhat - bn.xhat(i, j) * sum_dxhat_xhat);
            } else {
                dx(i, j) = dxhat * bn.inv_std[j];
            }
        }
    }
    return dx;
}

struct BlockParams {
    const MatrixD &w;
    std::span<const double> b, gamma, beta, running_mean, running_var;
};

MatrixD block_forward(const MatrixD &x, const BlockParams &p, Mode mode, const HeadOptions &opt,
                      const MatrixD *drop_in, const MatrixD *drop_out, HeadCache::Block &cache) {
    cache.input = x;
    MatrixD z = linear(x, p.w, p.b);
    if (mode == Mode::Train && drop_in) {
        cache.drop_in_mask = *drop_in;
        apply_mask(z, *drop_in);
    } else {
        cache.drop_in_mask = MatrixD();
    }
    // batchnorm_forward never writes running stats when handed copies.
    std::vector<double> rm(p.running_mean.begin(), p.running_mean.end());
    std::vector<double> rv(p.running_var.begin(), p.running_var.end());
    MatrixD y;
    if (opt.order == BlockOrder::NormThenRelu) {
        y = batchnorm_forward(z, p.gamma, p.beta, rm, rv, mode, 0.0, opt.bn_eps, &cache.bn);
        cache.relu_in = y;
        relu_inplace(y);
    } else {
        cache.relu_in = z;
        relu_inplace(z);
        y = batchnorm_forward(z, p.gamma, p.beta, rm, rv, mode, 0.0, opt.bn_eps, &cache.bn);
    }
    if (mode == Mode::Train && drop_out) {
        cache.drop_out_mask = *drop_out;
        apply_mask(y, *drop_out);
    } else {
        cache.drop_out_mask = MatrixD();
    }
    return y;
}

// Backward through one hidden block; writes parameter gradients, returns d(input).
MatrixD block_backward(MatrixD grad, const HeadCache::Block &c, const MatrixD &w, std::span<const double> gamma,
                       Mode mode, const HeadOptions &opt, MatrixD &dw, std::span<double> db,
                       std::span<double> dgamma, std::span<double> dbeta) {
    apply_mask(grad, c.drop_out_mask);
    if (opt.order == BlockOrder::NormThenRelu) {
        relu_backward(grad, c.relu_in);
        grad = batchnorm_backward(grad, c.bn, gamma, mode, dgamma, dbeta);
    } else {
        grad = batchnorm_backward(grad, c.bn, gamma, mode, dgamma, dbeta);
        relu_backward(grad, c.relu_in);
    }
    apply_mask(grad, c.drop_in_mask);
    dw = matmul_at(c.input, grad);
    const auto sums = column_sums(grad);
    std::copy(sums.begin(), sums.end(), db.begin());
    return matmul_bt(grad, w);
}

MatrixD xavier(std::size_t fan_in, std::size_t fan_out, Rng &rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    MatrixD w(fan_in, fan_out);
    for (auto &v : w.data()) v = rng.uniform(-a, a);
    return w;
}

} // namespace

HeadParams HeadParams::zeros(std::size_t d_model) {
    HeadParams p;
    p.w1 = MatrixD(d_model, kHidden1);
    p.b1.assign(kHidden1, 0.0);
    p.gamma1.assign(kHidden1, 1.0);
    p.beta1.assign(kHidden1, 0.0);
    p.running_mean1.assign(kHidden1, 0.0);
    p.running_var1.assign(kHidden1, 1.0);
    p.w2 = MatrixD(kHidden1, kHidden2);
    p.b2.assign(kHidden2, 0.0);
    p.gamma2.assign(kHidden2, 1.0);
    p.beta2.assign(kHidden2, 0.0);
    p.running_mean2.assign(kHidden2, 0.0);
    p.running_var2.assign(kHidden2, 1.0);
    p.w3 = MatrixD(kHidden2, kNumClasses);
    p.b3.assign(kNumClasses, 0.0);
    return p;
}

std::array<std::span<double>, 10> HeadParams::trainable() {
    return {span_of(w1), b1, gamma1, beta1, span_of(w2), b2, gamma2, beta2, span_of(w3), b3};
}

std::array<std::span<const double>, 10> HeadParams::trainable() const {
    return {span_of(w1), b1, gamma1, beta1, span_of(w2), b2, gamma2, beta2, span_of(w3), b3};
}

HeadParams init_xavier(std::size_t d_model, std::uint64_t seed) {
    if (d_model == 0) throw ConfigError("head input width must be positive");
    Rng rng = Rng::substream(seed, "head-init");
    HeadParams p = HeadParams::zeros(d_model);
    p.w1 = xavier(d_model, kHidden1, rng);
    p.w2 = xavier(kHidden1, kHidden2, rng);
    p.w3 = xavier(kHidden2, kNumClasses, rng);
    return p;
}

void HeadOptions::validate() const {
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0, 1)");
    if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn_momentum must lie in [0, 1]");
    if (!(bn_eps > 0.0)) throw ConfigError("bn_eps must be positive");
}

void to_json(nlohmann::ordered_json &j, const HeadOptions &o) {
    j = nlohmann::ordered_json{{"dropout_p", o.dropout_p},
                               {"bn_momentum", o.bn_momentum},
                               {"bn_eps", o.bn_eps},
                               {"block_order", o.order == BlockOrder::NormThenRelu ? "norm-relu" : "relu-norm"}};
}

void from_json(const nlohmann::ordered_json &j, HeadOptions &o) {
    j.at("dropout_p").get_to(o.dropout_p);
    j.at("bn_momentum").get_to(o.bn_momentum);
    j.at("bn_eps").get_to(o.bn_eps);
    const auto order = j.value("block_order", std::string("norm-relu"));
    if (order == "norm-relu") o.order = BlockOrder::NormThenRelu;
    else if (order == "relu-norm") o.order = BlockOrder::ReluThenNorm;
    else throw ConfigError("unknown block_order " + order);
}

std::vector<double> relu(std::span<const double> x) {
    std::vector<double> out(x.begin(), x.end());
    for (auto &v : out) v = std::max(v, 0.0);
    return out;
}

std::vector<double> log_softmax(std::span<const double> x) {
    if (x.empty()) throw ShapeError("log_softmax of an empty vector");
    const double max = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (double v : x) sum += std::exp(v - max);
    const double lse = max + std::log(sum);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
    return out;
}

std::vector<double> softmax(std::span<const double> x) {
    auto out = log_softmax(x);
    for (auto &v : out) v = std::exp(v);
    return out;
}

MatrixD dropout(const MatrixD &x, double p, Mode mode, Rng &rng, MatrixD *mask_out) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1)");
    if (mask_out) *mask_out = MatrixD();
    if (mode == Mode::Eval || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    MatrixD mask(x.rows(), x.cols());
    for (auto &m : mask.data()) m = rng.uniform() < p ? 0.0 : keep_scale;
    MatrixD out = x;
    apply_mask(out, mask);
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

MatrixD batchnorm_forward(const MatrixD &x, std::span<const double> gamma, std::span<const double> beta,
                          std::span<double> running_mean, std::span<double> running_var, Mode mode,
                          double momentum, double eps, BatchNormCache *cache) {
    const std::size_t n = x.rows(), f = x.cols();
    if (gamma.size() != f || beta.size() != f || running_mean.size() != f || running_var.size() != f)
        throw ShapeError("batch norm parameter width differs from input width");
    if (mode == Mode::Train && n < 2)
        throw BatchError("batch norm in train mode needs at least 2 rows, got " + std::to_string(n));

    std::vector<double> mean(f), var(f), inv_std(f);
    if (mode == Mode::Train) {
        for (std::size_t j = 0; j < f; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += x(i, j);
            m /= static_cast<double>(n);
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) v += (x(i, j) - m) * (x(i, j) - m);
            v /= static_cast<double>(n);
            mean[j] = m;
            var[j] = v;
            const double unbiased = v * static_cast<double>(n) / static_cast<double>(n - 1);
            running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * m;
            running_var[j] = (1.0 - momentum) * running_var[j] + momentum * unbiased;
        }
    } else {
        std::copy(running_mean.begin(), running_mean.end(), mean.begin());
        std::copy(running_var.begin(), running_var.end(), var.begin());
    }
    for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

    MatrixD xhat(n, f), y(n, f);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) {
            xhat(i, j) = (x(i, j) - mean[j]) * inv_std[j];
            y(i, j) = gamma[j] * xhat(i, j) + beta[j];
        }
    if (cache) *cache = BatchNormCache{std::move(xhat), std::move(mean), std::move(var), std::move(inv_std)};
    return y;
}

DropoutMasks draw_masks(std::size_t batch, HeadState &state) {
    DropoutMasks m;
    if (state.mode == Mode::Eval) return m;
    const double p = state.options().dropout_p;
    const std::array<std::size_t, 4> widths = {kHidden1, kHidden1, kHidden2, kHidden2};
    for (std::size_t k = 0; k < 4; ++k) dropout(MatrixD(batch, widths[k], 1.0), p, Mode::Train, state.rng(), &m.masks[k]);
    return m;
}

MatrixD forward_with_masks(const MatrixD &x, const HeadParams &params, Mode mode, const HeadOptions &options,
                           const DropoutMasks *masks, HeadCache *cache) {
    if (x.cols() != params.input_dim())
        throw ShapeError("head expects " + std::to_string(params.input_dim()) + " features, got " +
                         std::to_string(x.cols()));
    HeadCache local;
    HeadCache &c = cache ? *cache : local;
    c.valid = false;
    c.mode = mode;
    auto mask = [&](std::size_t k) -> const MatrixD * {
        return masks && !masks->masks[k].empty() ? &masks->masks[k] : nullptr;
    };
    const BlockParams p1{params.w1, params.b1, params.gamma1, params.beta1, params.running_mean1,
                         params.running_var1};
    const BlockParams p2{params.w2, params.b2, params.gamma2, params.beta2, params.running_mean2,
                         params.running_var2};
    MatrixD h = block_forward(x, p1, mode, options, mask(0), mask(1), c.blocks[0]);
    h = block_forward(h, p2, mode, options, mask(2), mask(3), c.blocks[1]);
    c.hidden = h;
    MatrixD logits = linear(h, params.w3, params.b3);
    MatrixD out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto lp = log_softmax(logits.row(i));
        std::copy(lp.begin(), lp.end(), out.row(i).begin());
    }
    c.log_probs = out;
    c.valid = true;
    return out;
}

void update_running_stats(HeadParams &params, const HeadCache &cache, double momentum) {
    if (!cache.valid || cache.mode != Mode::Train) return;
    const std::size_t n = cache.blocks[0].input.rows();
    auto update = [&](const BatchNormCache &bn, std::vector<double> &rm, std::vector<double> &rv) {
        for (std::size_t j = 0; j < rm.size(); ++j) {
            const double unbiased = bn.var[j] * static_cast<double>(n) / static_cast<double>(n - 1);
            rm[j] = (1.0 - momentum) * rm[j] + momentum * bn.mean[j];
            rv[j] = (1.0 - momentum) * rv[j] + momentum * unbiased;
        }
    };
    update(cache.blocks[0].bn, params.running_mean1, params.running_var1);
    update(cache.blocks[1].bn, params.running_mean2, params.running_var2);
}

MatrixD forward(const MatrixD &x, HeadParams &params, HeadState &state, HeadCache *cache) {
    HeadCache local;
    HeadCache &c = cache ? *cache : local;
    const DropoutMasks masks = draw_masks(x.rows(), state);
    MatrixD out = forward_with_masks(x, params, state.mode, state.options(), &masks, &c);
    update_running_stats(params, c, state.options().bn_momentum);
    return out;
}

double nll_loss(const MatrixD &log_probs, std::span<const int> labels) {
    if (labels.size() != log_probs.rows() || labels.empty()) throw ShapeError("nll_loss: label count mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= log_probs.cols())
            throw InputError("label outside {0,1}");
        sum -= log_probs(i, static_cast<std::size_t>(labels[i]));
    }
    return sum / static_cast<double>(labels.size());
}

HeadParams backward(const HeadCache &cache, std::span<const int> labels, const HeadParams &params,
                    const HeadOptions &options) {
    if (!cache.valid) throw StateError("backward called without a completed forward pass");
    const std::size_t n = cache.log_probs.rows();
    if (labels.size() != n) throw ShapeError("backward: label count mismatch");

    HeadParams g = HeadParams::zeros(params.input_dim());
    std::fill(g.gamma1.begin(), g.gamma1.end(), 0.0);
    std::fill(g.gamma2.begin(), g.gamma2.end(), 0.0);
    std::fill(g.running_var1.begin(), g.running_var1.end(), 0.0);
    std::fill(g.running_var2.begin(), g.running_var2.end(), 0.0);

    // d(mean NLL)/d(logits) = (softmax - one_hot) / n
    MatrixD dlogits(n, kNumClasses);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < kNumClasses; ++k)
            dlogits(i, k) = (std::exp(cache.log_probs(i, k)) - (labels[i] == static_cast<int>(k) ? 1.0 : 0.0)) /
                            static_cast<double>(n);

    g.w3 = matmul_at(cache.hidden, dlogits);
    g.b3 = column_sums(dlogits);
    MatrixD grad = matmul_bt(dlogits, params.w3);
    grad = block_backward(std::move(grad), cache.blocks[1], params.w2, params.gamma2, cache.mode, options, g.w2,
                          g.b2, g.gamma2, g.beta2);
    block_backward(std::move(grad), cache.blocks[0], params.w1, params.gamma1, cache.mode, options, g.w1, g.b1,
                   g.gamma1, g.beta1);
    return g;
}

std::vector<int> predict_classes(const MatrixD &log_probs) {
    std::vector<int> out(log_probs.rows());
    for (std::size_t i = 0; i < log_probs.rows(); ++i) out[i] = log_probs(i, 1) > log_probs(i, 0) ? 1 : 0;
    return out;
}

void save_head(const std::filesystem::path &dir, const HeadParams &p, const HeadOptions &options,
               const nlohmann::ordered_json &metadata) {
    auto vec = [](std::string name, const std::vector<double> &v) {
        return Tensor{std::move(name), {v.size()}, std::vector<float>(v.begin(), v.end())};
    };
    auto mat = [](std::string name, const MatrixD &m) {
        return Tensor{std::move(name), {m.rows(), m.cols()}, std::vector<float>(m.data().begin(), m.data().end())};
    };
    const std::vector<Tensor> tensors = {
        mat("w1", p.w1),        vec("b1", p.b1),
        vec("bn1.gamma", p.gamma1), vec("bn1.beta", p.beta1),
        vec("bn1.running_mean", p.running_mean1), vec("bn1.running_var", p.running_var1),
        mat("w2", p.w2),        vec("b2", p.b2),
        vec("bn2.gamma", p.gamma2), vec("bn2.beta", p.beta2),
        vec("bn2.running_mean", p.running_mean2), vec("bn2.running_var", p.running_var2),
        mat("w3", p.w3),        vec("b3", p.b3),
    };
    nlohmann::ordered_json extra;
    extra["head"] = options;
    extra["metadata"] = metadata;
    write_checkpoint(dir, tensors, extra);
}

HeadCheckpoint load_head(const std::filesystem::path &dir) {
    const Checkpoint ck = read_checkpoint(dir);
    const Tensor *w1 = ck.find("w1");
    if (!w1 || w1->shape.size() != 2) throw LoadError("head checkpoint is missing tensor w1");
    const std::size_t d = w1->shape[0];
    const std::vector<TensorSpec> schema = {
        {"w1", {d, kHidden1}},         {"b1", {kHidden1}},
        {"bn1.gamma", {kHidden1}},     {"bn1.beta", {kHidden1}},
        {"bn1.running_mean", {kHidden1}}, {"bn1.running_var", {kHidden1}},
        {"w2", {kHidden1, kHidden2}},  {"b2", {kHidden2}},
        {"bn2.gamma", {kHidden2}},     {"bn2.beta", {kHidden2}},
        {"bn2.running_mean", {kHidden2}}, {"bn2.running_var", {kHidden2}},
        {"w3", {kHidden2, kNumClasses}}, {"b3", {kNumClasses}},
    };
    const auto t = match_schema(ck, schema);
    auto vec = [](const Tensor &x) { return std::vector<double>(x.values.begin(), x.values.end()); };
    auto mat = [](const Tensor &x) {
        return MatrixD(x.shape[0], x.shape[1], std::vector<double>(x.values.begin(), x.values.end()));
    };
    HeadCheckpoint out;
    auto &p = out.params;
    p.w1 = mat(t[0]);
    p.b1 = vec(t[1]);
    p.gamma1 = vec(t[2]);
    p.beta1 = vec(t[3]);
    p.running_mean1 = vec(t[4]);
    p.running_var1 = vec(t[5]);
    p.w2 = mat(t[6]);
    p.b2 = vec(t[7]);
    p.gamma2 = vec(t[8]);
    p.beta2 = vec(t[9]);
    p.running_mean2 = vec(t[10]);
    p.running_var2 = vec(t[11]);
    p.w3 = mat(t[12]);
    p.b3 = vec(t[13]);
    for (double v : p.running_var1)
        if (v < 0) throw LoadError("bn1.running_var has a negative entry");
    for (double v : p.running_var2)
        if (v < 0) throw LoadError("bn2.running_var has a negative entry");
    try {
        if (ck.manifest.contains("head")) out.options = ck.manifest["head"].get<HeadOptions>();
    } catch (const nlohmann::json::exception &e) {
        throw LoadError(std::string("bad head options: ") + e.what());
    }
    out.metadata = ck.manifest.value("metadata", nlohmann::ordered_json::object());
    return out;
}

} // namespace spamdet
