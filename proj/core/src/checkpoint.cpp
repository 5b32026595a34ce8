#include "crossdiff/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace crossdiff {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "crossdiff-checkpoint";
constexpr int kVersion = 1;

json matrix_to_json(const Mat& m) {
    json data = json::array();
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Mat matrix_from_json(const json& j) {
    Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& data = j.at("data");
    if (static_cast<long long>(data.size()) != static_cast<long long>(m.rows()) * m.cols())
        throw VersionError("checkpoint: tensor payload size mismatch");
    int at = 0;
    for (int i = 0; i < m.rows(); ++i)
        for (int j2 = 0; j2 < m.cols(); ++j2) m(i, j2) = data.at(at++).get<double>();
    return m;
}

json params_to_json(const nn::ParamStore& params) {
    json out = json::array();
    for (const auto& [name, tensor] : params.items())
        out.push_back(json{{"name", name}, {"tensor", matrix_to_json(tensor.value())}});
    return out;
}

void params_from_json(const json& j, nn::ParamStore& params) {
    if (j.size() != params.items().size())
        throw VersionError("checkpoint: parameter count differs from model config");
    for (const auto& item : j) {
        const std::string name = item.at("name").get<std::string>();
        nn::Tensor t = params.find(name);
        Mat stored = matrix_from_json(item.at("tensor"));
        if (stored.rows() != t.rows() || stored.cols() != t.cols())
            throw VersionError("checkpoint: shape mismatch for parameter '" + name + "'");
        t.raw_value() = std::move(stored);
    }
}

json denoiser_config_to_json(const DenoiserConfig& c) {
    return json{{"model_dim", c.model_dim},
                {"heads", c.heads},
                {"encoder_layers", c.encoder_layers},
                {"decoder_layers", c.decoder_layers},
                {"masking_block_layers", c.masking_block_layers},
                {"dropout", c.dropout},
                {"raw_dim", c.raw_dim},
                {"window", c.window},
                {"offset_clamp", c.offset_clamp},
                {"attention", to_string(c.attention)},
                {"use_transformer_mask", c.use_transformer_mask},
                {"spatial_residual_from_scaled", c.spatial_residual_from_scaled},
                {"modalities", json{{"bbox", c.modalities.bbox}, {"center", c.modalities.center}, {"speed", c.modalities.speed}}},
                {"fusion", to_string(c.fusion)}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
    DenoiserConfig c;
    c.model_dim = j.at("model_dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.masking_block_layers = j.at("masking_block_layers").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.raw_dim = j.at("raw_dim").get<int>();
    c.window = j.at("window").get<int>();
    c.offset_clamp = j.at("offset_clamp").get<double>();
    c.attention = attention_variant_from_string(j.at("attention").get<std::string>());
    c.use_transformer_mask = j.at("use_transformer_mask").get<bool>();
    c.spatial_residual_from_scaled = j.at("spatial_residual_from_scaled").get<bool>();
    c.modalities.bbox = j.at("modalities").at("bbox").get<bool>();
    c.modalities.center = j.at("modalities").at("center").get<bool>();
    c.modalities.speed = j.at("modalities").at("speed").get<bool>();
    c.fusion = fusion_kind_from_string(j.at("fusion").get<std::string>());
    return c;
}

json intention_config_to_json(const IntentionConfig& c) {
    return json{{"layers", c.layers},          {"heads", c.heads},
                {"model_dim", c.model_dim},    {"pooling", c.pooling == Pooling::mean ? "mean" : "last"},
                {"dropout", c.dropout},        {"raw_dim", c.raw_dim},
                {"window", c.window},          {"use_reconstruction", c.use_reconstruction}};
}

IntentionConfig intention_config_from_json(const json& j) {
    IntentionConfig c;
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.model_dim = j.at("model_dim").get<int>();
    c.pooling = j.at("pooling").get<std::string>() == "last" ? Pooling::last : Pooling::mean;
    c.dropout = j.at("dropout").get<double>();
    c.raw_dim = j.at("raw_dim").get<int>();
    c.window = j.at("window").get<int>();
    c.use_reconstruction = j.at("use_reconstruction").get<bool>();
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& denoiser,
                     const IntentionModel& intention, const NoiseSchedule& schedule,
                     const NormalizationStats& stats) {
    json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["denoiser"] = {{"config", denoiser_config_to_json(denoiser.config())},
                     {"params", params_to_json(denoiser.params())}};
    j["intention"] = {{"config", intention_config_to_json(intention.config())},
                      {"params", params_to_json(intention.params())}};
    j["schedule"] = {{"steps", schedule.steps}, {"kind", to_string(schedule.kind)}, {"beta", schedule.beta}};
    j["stats"] = {{"shift", stats.shift}, {"scale", stats.scale}};

    const auto bytes = json::to_cbor(j);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

Pipeline load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    json j;
    try {
        j = json::from_cbor(bytes);
    } catch (const json::exception& e) {
        throw VersionError("checkpoint: not a valid container: " + std::string(e.what()));
    }
    if (!j.contains("format") || j.at("format").get<std::string>() != kFormat)
        throw VersionError("checkpoint: unrecognized format field");
    if (j.at("version").get<int>() != kVersion)
        throw VersionError("checkpoint: unsupported version " + j.at("version").dump());

    Pipeline p;
    try {
        p.denoiser = std::make_unique<DenoiserModel>(denoiser_config_from_json(j.at("denoiser").at("config")));
        params_from_json(j.at("denoiser").at("params"), p.denoiser->params());
        p.intention = std::make_unique<IntentionModel>(intention_config_from_json(j.at("intention").at("config")));
        params_from_json(j.at("intention").at("params"), p.intention->params());

        const auto& js = j.at("schedule");
        auto beta = js.at("beta").get<std::vector<double>>();
        if (static_cast<int>(beta.size()) != js.at("steps").get<int>())
            throw VersionError("checkpoint: beta table length differs from step count");
        p.schedule = schedule_from_beta(schedule_kind_from_string(js.at("kind").get<std::string>()), std::move(beta));

        const auto& st = j.at("stats");
        for (int c = 0; c < kRawDim; ++c) {
            p.stats.shift[c] = st.at("shift").at(c).get<double>();
            p.stats.scale[c] = st.at("scale").at(c).get<double>();
        }
    } catch (const json::exception& e) {
        throw VersionError("checkpoint: missing or malformed field: " + std::string(e.what()));
    }
    return p;
}

}  // namespace crossdiff
