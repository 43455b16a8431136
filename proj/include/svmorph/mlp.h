#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace svmorph {

enum class Activation : int { Identity = 0, LeakyRelu = 1, Cubic = 2, ScaledSigmoid = 3 };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct MlpConfig {
    int hidden_width = 1;  // one of {1, 8, 16, 32, 64}
    Activation activation = Activation::Identity;
    double learning_rate = 1e-2;
    double l2 = 1e-3; // weight-decay style: adds l2 * theta to each gradient
    int batch_size = 256;
    int iterations = 10000;
    std::uint64_t seed = 0;

    void validate() const;
};

// Two-layer perceptron with a scalar output: y = w2 . act(W1 x + b1) + b2.
struct MlpModel {
    MlpConfig config;
    Eigen::MatrixXd w1; // hidden x input
    Eigen::VectorXd b1; // hidden
    Eigen::VectorXd w2; // hidden
    double b2 = 0.0;
};

// SGD with MSE loss and L2 weight decay; seeded init and batch sampling make
// training fully deterministic. Throws NumericError (with the iteration
// index) if the loss goes non-finite.
MlpModel fit_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpConfig& config);

Eigen::VectorXd mlp_predict(const MlpModel& m, const Eigen::MatrixXd& x);

// Loss and analytic gradients on a batch, exposed for finite-difference
// verification.
struct MlpGradients {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::VectorXd w2;
    double b2 = 0.0;
};

double mlp_loss(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
MlpGradients mlp_loss_gradients(const MlpModel& m, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y);

} // namespace svmorph
