#pragma once

#include "crossdiff/nn.hpp"

#include <string>
#include <vector>

namespace crossdiff {

enum class Pooling { mean, last };

struct IntentionConfig {
    int layers = 4;
    int heads = 4;
    int model_dim = 64;
    Pooling pooling = Pooling::mean;
    double dropout = 0.1;
    int raw_dim = kRawDim;
    int window = kWindow;
    // Off for the no-diffusion ablation: the classifier then consumes the
    // masked raw observation instead of the reconstruction.
    bool use_reconstruction = true;

    void validate() const;
};

// Transformer classifier over an observation window; emits the crossing
// probability through a two-way softmax.
class IntentionModel {
public:
    explicit IntentionModel(IntentionConfig config, std::uint64_t seed = 0);

    IntentionModel(const IntentionModel&) = delete;
    IntentionModel& operator=(const IntentionModel&) = delete;

    const IntentionConfig& config() const { return config_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Two-class probability row [1 x 2], column 1 = P(cross).
    ag::Tensor forward(const ag::Tensor& window, bool training, Rng& rng) const;

    // Inference-mode scalar P(cross).
    double predict(const Mat& window) const;

private:
    IntentionConfig config_;
    nn::ParamStore params_;
    nn::Linear embed_;
    std::vector<nn::TransformerLayer> layers_;
    nn::Linear head_;
    Mat pe_;
};

double predict_intention(const Mat& window, const IntentionModel& model);

// 1 iff p >= threshold (boundary inclusive); p must lie in [0, 1].
int classify(double p, double threshold = 0.5);

}  // namespace crossdiff
