#include "svmorph/mlp.h"

#include <cmath>
#include <numeric>
#include <random>

#include "svmorph/errors.h"

namespace svmorph {

namespace {

const char* kActivationNames[] = {"identity", "leaky-relu", "cubic", "scaled-sigmoid"};

double activate(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::LeakyRelu: return x >= 0.0 ? x : 0.01 * x;
        case Activation::Cubic: return x + x * x * x;
        case Activation::ScaledSigmoid: return 10.0 / (1.0 + std::exp(-x)) - 5.0;
    }
    throw ConfigError("mlp: unknown activation");
}

double activate_grad(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::LeakyRelu: return x >= 0.0 ? 1.0 : 0.01;
        case Activation::Cubic: return 1.0 + 3.0 * x * x;
        case Activation::ScaledSigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return 10.0 * s * (1.0 - s);
        }
    }
    throw ConfigError("mlp: unknown activation");
}

// Forward pass storing pre-activations; rows of x are samples.
struct Forward {
    Eigen::MatrixXd pre;    // n x hidden
    Eigen::MatrixXd hidden; // n x hidden
    Eigen::VectorXd out;    // n
};

Forward forward(const MlpModel& m, const Eigen::MatrixXd& x) {
    Forward f;
    f.pre = (x * m.w1.transpose()).rowwise() + m.b1.transpose();
    f.hidden.resizeLike(f.pre);
    for (Eigen::Index i = 0; i < f.pre.size(); ++i)
        f.hidden.data()[i] = activate(m.config.activation, f.pre.data()[i]);
    f.out = (f.hidden * m.w2).array() + m.b2;
    return f;
}

} // namespace

const char* activation_name(Activation a) { return kActivationNames[static_cast<int>(a)]; }

Activation parse_activation(const std::string& name) {
    for (int i = 0; i < 4; ++i)
        if (name == kActivationNames[i]) return static_cast<Activation>(i);
    throw ConfigError("unknown activation \"" + name +
                      "\"; expected identity, leaky-relu, cubic or scaled-sigmoid");
}

void MlpConfig::validate() const {
    const int allowed[] = {1, 8, 16, 32, 64};
    bool ok = false;
    for (int w : allowed) ok = ok || hidden_width == w;
    if (!ok) throw ConfigError("mlp: hidden_width must be one of {1, 8, 16, 32, 64}");
    if (!(learning_rate > 0.0)) throw ConfigError("mlp: learning_rate must be > 0");
    if (l2 < 0.0) throw ConfigError("mlp: l2 must be >= 0");
    if (batch_size < 1) throw ConfigError("mlp: batch_size must be >= 1");
    if (iterations < 1) throw ConfigError("mlp: iterations must be >= 1");
}

double mlp_loss(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Forward f = forward(m, x);
    const double mse = (f.out - y).squaredNorm() / static_cast<double>(x.rows());
    const double reg = 0.5 * m.config.l2 *
                       (m.w1.squaredNorm() + m.b1.squaredNorm() + m.w2.squaredNorm() +
                        m.b2 * m.b2);
    return mse + reg;
}

MlpGradients mlp_loss_gradients(const MlpModel& m, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y) {
    const Eigen::Index n = x.rows();
    const Forward f = forward(m, x);

    // dL/dout for MSE = 2 (out - y) / n
    const Eigen::VectorXd dout = 2.0 * (f.out - y) / static_cast<double>(n);

    MlpGradients g;
    g.w2 = f.hidden.transpose() * dout + m.config.l2 * m.w2;
    g.b2 = dout.sum() + m.config.l2 * m.b2;

    Eigen::MatrixXd dpre = dout * m.w2.transpose(); // n x hidden
    for (Eigen::Index i = 0; i < dpre.size(); ++i)
        dpre.data()[i] *= activate_grad(m.config.activation, f.pre.data()[i]);

    g.w1 = dpre.transpose() * x + m.config.l2 * m.w1;
    g.b1 = dpre.colwise().sum().transpose() + m.config.l2 * m.b1;
    return g;
}

MlpModel fit_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpConfig& config) {
    config.validate();
    if (x.rows() != y.size()) throw DataError("fit_mlp: row count mismatch");
    if (x.rows() < 1) throw DataError("fit_mlp: empty training set");

    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    const int h = config.hidden_width;

    std::mt19937_64 rng(config.seed);
    auto uniform = [&rng](double lo, double hi) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    };

    MlpModel m;
    m.config = config;
    const double a1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(h));
    m.w1.resize(h, d);
    for (Eigen::Index r = 0; r < m.w1.rows(); ++r)
        for (Eigen::Index c = 0; c < m.w1.cols(); ++c) m.w1(r, c) = uniform(-a1, a1);
    m.b1.resize(h);
    for (int i = 0; i < h; ++i) m.b1(i) = uniform(-a1, a1);
    m.w2.resize(h);
    for (int i = 0; i < h; ++i) m.w2(i) = uniform(-a2, a2);
    m.b2 = uniform(-a2, a2);

    const Eigen::Index batch = std::min<Eigen::Index>(config.batch_size, n);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    Eigen::MatrixXd bx(batch, d);
    Eigen::VectorXd by(batch);
    for (int iter = 0; iter < config.iterations; ++iter) {
        if (batch == n) {
            bx = x;
            by = y;
        } else {
            // Partial Fisher-Yates: the first `batch` entries become a
            // uniform sample without replacement.
            for (Eigen::Index i = 0; i < batch; ++i) {
                const std::size_t j =
                    static_cast<std::size_t>(i) +
                    static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n - i));
                std::swap(order[static_cast<std::size_t>(i)], order[j]);
                bx.row(i) = x.row(order[static_cast<std::size_t>(i)]);
                by(i) = y(order[static_cast<std::size_t>(i)]);
            }
        }

        const MlpGradients g = mlp_loss_gradients(m, bx, by);
        m.w1 -= config.learning_rate * g.w1;
        m.b1 -= config.learning_rate * g.b1;
        m.w2 -= config.learning_rate * g.w2;
        m.b2 -= config.learning_rate * g.b2;

        if (!m.w1.allFinite() || !m.b1.allFinite() || !m.w2.allFinite() ||
            !std::isfinite(m.b2))
            throw NumericError("mlp training diverged at iteration " + std::to_string(iter));
    }
    return m;
}

Eigen::VectorXd mlp_predict(const MlpModel& m, const Eigen::MatrixXd& x) {
    if (x.cols() != m.w1.cols()) throw DataError("mlp_predict: column count mismatch");
    return forward(m, x).out;
}

} // namespace svmorph
