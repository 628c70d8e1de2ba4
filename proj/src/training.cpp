#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ghicast/error.hpp"
#include "ghicast/neural.hpp"

namespace ghicast {

void TrainConfig::validate() const {
    if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation fraction must lie in (0, 1)");
    }
    if (!(adam.learning_rate > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
        !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.epsilon > 0.0)) {
        throw ConfigError("invalid Adam hyperparameters");
    }
    if (clip_norm < 0.0) throw ConfigError("clip norm must be >= 0 (0 disables clipping)");
}

template <typename Model>
TrainResult<Model> train(Model model, const Dataset& data, const TrainConfig& config) {
    config.validate();
    const Eigen::Index n = data.rows();
    if (data.dim() != model.input_dim()) {
        throw DataError("dataset has d = " + std::to_string(data.dim()) + ", model expects " +
                        std::to_string(model.input_dim()));
    }
    const auto n_val = static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * config.validation_fraction));
    const Eigen::Index n_train = n - n_val;
    if (n_val < 1 || n_train < 1) {
        throw DataError("dataset of " + std::to_string(n) + " rows is too small for a train/validation split");
    }

    // Rows are chronological; the validation block is the most recent one.
    const Eigen::MatrixXd inputs = data.X.topRows(n_train).transpose();
    const Eigen::VectorXd labels = data.y.head(n_train);
    const Eigen::MatrixXd val_X = data.X.bottomRows(n_val);
    const Eigen::VectorXd val_y = data.y.tail(n_val);

    std::mt19937_64 rng(config.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    // Updates follow |z - y| on the output pre-activation z: an upper bound of
    // |relu(z) - y| for y >= 0, equal wherever z >= 0, whose gradient does not
    // vanish when every output is clamped.
    Model surrogate = model;
    surrogate.output.activation = Activation::identity;

    Eigen::VectorXd params = flatten(model);
    AdamState<double> adam(params.size(), config.adam);

    TrainResult<Model> result{model, {}};
    Eigen::VectorXd best_params = params;
    double best_val = std::numeric_limits<double>::infinity();
    int waited = 0;

    const auto batch_size = static_cast<Eigen::Index>(config.batch_size);
    Eigen::MatrixXd batch_inputs;
    Eigen::VectorXd batch_labels;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (Eigen::Index start = 0; start < n_train; start += batch_size) {
            const Eigen::Index len = std::min(batch_size, n_train - start);
            batch_inputs.resize(inputs.rows(), len);
            batch_labels.resize(len);
            for (Eigen::Index k = 0; k < len; ++k) {
                const Eigen::Index row = order[static_cast<std::size_t>(start + k)];
                batch_inputs.col(k) = inputs.col(row);
                batch_labels(k) = labels(row);
            }
            const Eigen::RowVectorXd z = forward_batch(surrogate, batch_inputs);
            Eigen::RowVectorXd upstream(len);
            for (Eigen::Index k = 0; k < len; ++k) {
                const double r = z(k) - batch_labels(k);
                loss_sum += std::abs(std::max(z(k), 0.0) - batch_labels(k));
                upstream(k) = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / static_cast<double>(len);
            }

            Eigen::VectorXd grads = flatten(backward_output(surrogate, batch_inputs, upstream));
            clip_global_norm(grads, config.clip_norm);
            adam_step<double>(params, grads, adam);
            if (!params.allFinite()) {
                throw DivergenceError("non-finite parameters after epoch " + std::to_string(epoch) + " update");
            }
            assign_parameters(surrogate, params);
        }
        assign_parameters(model, params);

        EpochRecord record;
        record.epoch = epoch;
        record.train_mae = loss_sum / static_cast<double>(n_train);
        record.validation_mae = mae(val_y, predict(model, val_X));
        if (!std::isfinite(record.validation_mae)) {
            throw DivergenceError("validation MAE became non-finite at epoch " + std::to_string(epoch));
        }
        result.history.epochs.push_back(record);

        if (record.validation_mae < best_val) {
            best_val = record.validation_mae;
            best_params = params;
            result.history.best_epoch = epoch;
            waited = 0;
        } else if (++waited > config.patience) {
            result.history.stopped_early = true;
            break;
        }
    }

    result.history.best_validation_mae = best_val;
    assign_parameters(model, best_params);
    result.model = std::move(model);
    return result;
}

template TrainResult<FFNNModel> train(FFNNModel, const Dataset&, const TrainConfig&);
template TrainResult<EncoderDecoderModel> train(EncoderDecoderModel, const Dataset&, const TrainConfig&);

}  // namespace ghicast
