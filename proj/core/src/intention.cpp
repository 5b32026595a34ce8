#include "crossdiff/intention.hpp"

namespace crossdiff {

using ag::Tensor;

void IntentionConfig::validate() const {
    if (model_dim % heads != 0) throw ArgumentError("IntentionConfig: model_dim must divide by heads");
    if (layers < 1) throw ArgumentError("IntentionConfig: layers must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ArgumentError("IntentionConfig: dropout must be in [0, 1)");
}

IntentionModel::IntentionModel(IntentionConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(mix_seed(seed, 0x696e74656eULL));
    embed_ = nn::Linear(params_, "embed", config_.raw_dim, config_.model_dim, rng);
    for (int i = 0; i < config_.layers; ++i)
        layers_.emplace_back(params_, "layer." + std::to_string(i), config_.model_dim, config_.heads,
                             4 * config_.model_dim, config_.dropout, rng);
    head_ = nn::Linear(params_, "head", config_.model_dim, 2, rng);
    pe_ = nn::sinusoidal_encoding(config_.window, config_.model_dim);
}

Tensor IntentionModel::forward(const Tensor& window, bool training, Rng& rng) const {
    if (!all_finite(window.value())) throw ArgumentError("predict_intention: non-finite input window");
    if (window.rows() != config_.window || window.cols() != config_.raw_dim)
        throw ArgumentError("predict_intention: window has wrong shape");
    Tensor h = ag::add(embed_(window), Tensor::constant(pe_));
    for (const auto& layer : layers_) h = layer(h, training, rng);
    Tensor pooled = config_.pooling == Pooling::mean ? ag::mean_rows(h) : ag::slice_rows(h, h.rows() - 1, 1);
    return ag::softmax_rows(head_(pooled));
}

double IntentionModel::predict(const Mat& window) const {
    ag::NoGradGuard guard;
    Rng unused(0);
    return forward(Tensor::constant(window), false, unused).value()(0, 1);
}

double predict_intention(const Mat& window, const IntentionModel& model) {
    return model.predict(window);
}

int classify(double p, double threshold) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("classify: probability outside [0, 1]");
    return p >= threshold ? 1 : 0;
}

}  // namespace crossdiff
