// Command-line front end: dataset synthesis, training, occlusion-grid
// evaluation, single-record reconstruction dumps and denoising scatter
// plots.

#include "crossdiff/checkpoint.hpp"
#include "crossdiff/config.hpp"
#include "crossdiff/dataset.hpp"
#include "crossdiff/evaluation.hpp"
#include "crossdiff/training.hpp"

#include "svg_scatter.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crossdiff;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

// "0", "1-5" or "1,3,5"
std::vector<int> parse_lengths(const std::string& spec) {
    std::vector<int> out;
    for (const std::string& part : split_list(spec, ',')) {
        const auto dash = part.find('-');
        if (dash != std::string::npos && dash > 0) {
            const int lo = std::stoi(part.substr(0, dash));
            const int hi = std::stoi(part.substr(dash + 1));
            if (hi < lo) throw ArgumentError("lengths: bad range '" + part + "'");
            for (int v = lo; v <= hi; ++v) out.push_back(v);
        } else {
            out.push_back(std::stoi(part));
        }
    }
    if (out.empty()) throw ArgumentError("lengths: empty list");
    return out;
}

std::vector<OcclusionPattern> parse_patterns(const std::string& spec) {
    std::vector<OcclusionPattern> out;
    for (const std::string& part : split_list(spec, ',')) out.push_back(pattern_from_string(part));
    if (out.empty()) throw ArgumentError("patterns: empty list");
    return out;
}

ModalitySet parse_modalities(const std::string& spec) {
    ModalitySet m{false, false, false};
    for (char c : spec) {
        switch (c) {
            case 'B': case 'b': m.bbox = true; break;
            case 'C': case 'c': m.center = true; break;
            case 'V': case 'v': m.speed = true; break;
            default: throw ConfigError("modalities: unknown letter '" + std::string(1, c) + "' (use B, C, V)");
        }
    }
    return m;
}

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 1;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "flat key=value config file");
    cmd->add_option("--override", args.overrides, "config override key=value (repeatable)");
    cmd->add_option("--seed", args.seed, "rng seed");
    cmd->add_option("--out", args.out, "output path");
}

KeyValueConfig load_config(const CommonArgs& args) {
    KeyValueConfig config;
    if (!args.config_path.empty()) config = KeyValueConfig::from_file(args.config_path);
    for (const auto& o : args.overrides) config.apply_override(o);
    return config;
}

DenoiserConfig denoiser_config_from(const KeyValueConfig& config) {
    DenoiserConfig c;
    c.model_dim = config.get_int("model_dim", c.model_dim);
    c.heads = config.get_int("heads", c.heads);
    c.encoder_layers = config.get_int("encoder_layers", c.encoder_layers);
    c.decoder_layers = config.get_int("decoder_layers", c.decoder_layers);
    c.masking_block_layers = config.get_int("masking_block_layers", c.masking_block_layers);
    c.dropout = config.get_double("dropout", c.dropout);
    c.offset_clamp = config.get_double("offset_clamp", c.offset_clamp);
    c.attention = attention_variant_from_string(config.get("attention", to_string(c.attention)));
    c.use_transformer_mask = config.get_bool("use_transformer_mask", c.use_transformer_mask);
    c.spatial_residual_from_scaled = config.get_bool("spatial_residual_from_scaled", c.spatial_residual_from_scaled);
    c.modalities = parse_modalities(config.get("modalities", "BCV"));
    c.fusion = fusion_kind_from_string(config.get("fusion", to_string(c.fusion)));
    return c;
}

IntentionConfig intention_config_from(const KeyValueConfig& config) {
    IntentionConfig c;
    c.layers = config.get_int("intention_layers", c.layers);
    c.heads = config.get_int("intention_heads", c.heads);
    c.model_dim = config.get_int("intention_dim", c.model_dim);
    c.dropout = config.get_double("dropout", c.dropout);
    c.use_reconstruction = config.get_bool("use_reconstruction", c.use_reconstruction);
    return c;
}

TrainConfig train_config_from(const KeyValueConfig& config, std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    c.lr = config.get_double("lr", c.lr);
    c.batch = config.get_int("batch", c.batch);
    c.lambda = config.get_double("lambda", c.lambda);
    c.epochs = config.get_int("epochs", c.epochs);
    c.grad_clip = config.get_double("grad_clip", c.grad_clip);
    c.pattern = pattern_from_string(config.get("pattern", to_string(c.pattern)));
    c.occlusion_length = config.get_int("occlusion_length", c.occlusion_length);
    c.noise_std = config.get_double("noise_std", c.noise_std);
    c.schedule_steps = config.get_int("K", c.schedule_steps);
    c.schedule_kind = schedule_kind_from_string(config.get("schedule", to_string(c.schedule_kind)));
    c.schedule_params.beta_start = config.get_double("beta_start", c.schedule_params.beta_start);
    c.schedule_params.beta_end = config.get_double("beta_end", c.schedule_params.beta_end);
    return c;
}

DatasetManifest manifest_with_splits(const fs::path& data, const KeyValueConfig& config, std::uint64_t seed,
                                     const std::string& splits_file) {
    DatasetManifest manifest;
    manifest.records = load_jsonl(data);
    manifest.stats = compute_default_stats(manifest.records);
    if (!splits_file.empty()) {
        std::ifstream in(splits_file);
        if (!in) throw IoError("cannot open splits file '" + splits_file + "'");
        json j = json::parse(in, nullptr, true, true);
        for (const auto& [name, ids] : j.items()) manifest.splits[name] = ids.get<std::vector<std::string>>();
        return manifest;
    }
    const std::array<double, 3> ratios{config.get_double("train_ratio", 0.8), config.get_double("val_ratio", 0.1),
                                       config.get_double("test_ratio", 0.1)};
    for (const auto& r : manifest.records) manifest.splits["train"].push_back(r.id);
    Rng rng(mix_seed(seed, 0x511717ULL));
    return split_manifest(manifest, ratios, rng);
}

void write_splits(const DatasetManifest& manifest, const fs::path& path) {
    json j;
    for (const auto& [name, ids] : manifest.splits) j[name] = ids;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write splits file '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

// --- subcommands -------------------------------------------------------------

int cmd_synth(const CommonArgs& common, int n, int t_total, const std::string& profile) {
    if (common.out.empty()) throw ArgumentError("synth: --out is required");
    Rng rng(common.seed);
    DatasetManifest manifest = generate_synthetic(n, t_total, rng, profile_from_string(profile));
    save_jsonl(manifest.records, common.out);
    std::cout << "wrote " << manifest.records.size() << " records to " << common.out << "\n";
    return 0;
}

int cmd_train(const CommonArgs& common, const std::string& data, const std::string& splits_file) {
    if (data.empty()) throw ArgumentError("train: --data is required");
    const fs::path out_dir = common.out.empty() ? fs::path("run") : fs::path(common.out);
    KeyValueConfig config = load_config(common);

    DenoiserConfig denoiser_config = denoiser_config_from(config);
    IntentionConfig intention_config = intention_config_from(config);
    TrainConfig train_config = train_config_from(config, common.seed);
    DatasetManifest manifest = manifest_with_splits(data, config, common.seed, splits_file);
    config.get_bool("use_diffusion_mask", true);  // eval-stage key, legal in shared manifests
    config.check_consumed();

    std::cout << "train: lr=" << train_config.lr << " batch=" << train_config.batch
              << " lambda=" << train_config.lambda << " epochs=" << train_config.epochs
              << " K=" << train_config.schedule_steps << " dim=" << denoiser_config.model_dim
              << " heads=" << denoiser_config.heads << " dropout=" << denoiser_config.dropout
              << " pattern=" << to_string(train_config.pattern) << train_config.occlusion_length
              << " seed=" << common.seed << "\n";
    std::cout << "records=" << manifest.records.size() << " train=" << manifest.splits["train"].size()
              << " val=" << manifest.splits["val"].size() << " test=" << manifest.splits["test"].size() << "\n";

    fs::create_directories(out_dir);
    write_splits(manifest, out_dir / "splits.json");
    FitResult result = fit(manifest, train_config, denoiser_config, intention_config, out_dir, &std::cout);

    std::cout << "checkpoint: " << result.checkpoint_path.string() << "\n";
    std::cout << "metrics:    " << result.metrics_path.string() << "\n";
    if (result.best_epoch >= 0)
        std::cout << "best epoch " << result.best_epoch << ": val_acc=" << result.final_val.acc
                  << " val_auc=" << result.final_val.auc << " val_f1=" << result.final_val.f1
                  << " val_ade_center=" << result.final_val.ade_center << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint, const std::string& data,
             const std::string& splits_file, const std::string& split, const std::string& patterns_spec,
             const std::string& lengths_spec) {
    if (checkpoint.empty() || data.empty()) throw ArgumentError("eval: --checkpoint and --data are required");
    const fs::path out_dir = common.out.empty() ? fs::path(".") : fs::path(common.out);
    KeyValueConfig config = load_config(common);

    EvalFlags flags;
    flags.use_diffusion_mask = config.get_bool("use_diffusion_mask", true);
    flags.noise_std = config.get_double("noise_std", 0.0);

    Pipeline pipe = load_checkpoint(checkpoint);
    DatasetManifest manifest = manifest_with_splits(data, config, common.seed, splits_file);
    manifest.stats = pipe.stats;  // evaluate in the training-time feature space
    // Training-stage keys are legal in a shared experiment manifest; the
    // authoritative model configuration comes from the checkpoint.
    denoiser_config_from(config);
    intention_config_from(config);
    train_config_from(config, common.seed);
    config.check_consumed();

    std::string use_split = split;
    if (split == "all") {
        std::vector<std::string> all;
        for (const auto& r : manifest.records) all.push_back(r.id);
        manifest.splits["all"] = std::move(all);
        use_split = "all";
    }

    EvalReport report =
        run_occlusion_grid(*pipe.denoiser, *pipe.intention, pipe.schedule, pipe.stats, manifest, use_split,
                           parse_patterns(patterns_spec), parse_lengths(lengths_spec), flags, common.seed);

    fs::create_directories(out_dir);
    write_report(report, out_dir / "report.csv", out_dir / "report.json");
    std::cout << report_table(report);
    std::cout << "report: " << (out_dir / "report.csv").string() << "\n";
    return 0;
}

int cmd_reconstruct(const CommonArgs& common, const std::string& checkpoint, const std::string& data,
                    const std::string& record_id, const std::string& pattern_spec, int length) {
    if (checkpoint.empty() || data.empty() || record_id.empty())
        throw ArgumentError("reconstruct: --checkpoint, --data and --record are required");
    const fs::path out_path = common.out.empty() ? fs::path("reconstruction.json") : fs::path(common.out);

    Pipeline pipe = load_checkpoint(checkpoint);
    DatasetManifest manifest;
    manifest.records = load_jsonl(data);
    const TrajectoryRecord& record = manifest.find(record_id);

    EvalFlags flags;
    RecordEval eval = evaluate_record(*pipe.denoiser, *pipe.intention, pipe.schedule, pipe.stats, record,
                                      pattern_from_string(pattern_spec), length, flags, common.seed);

    const Mat recon_px = denormalize_window(eval.x_rec, pipe.stats);
    const Mat obs_raw = apply_mask(eval.truth_raw, eval.mask, MaskFill::zero);
    auto to_rows = [](const Mat& m) {
        json rows = json::array();
        for (int i = 0; i < m.rows(); ++i) {
            json row = json::array();
            for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
            rows.push_back(std::move(row));
        }
        return rows;
    };

    json j;
    j["id"] = record.id;
    j["label"] = record.label;
    j["p_cross"] = eval.p_cross;
    j["pred"] = eval.pred;
    json bits = json::array();
    for (int t = 0; t < kWindow; ++t) bits.push_back(eval.mask.frame_occluded(t) ? 1 : 0);
    j["mask"] = std::move(bits);
    j["truth"] = to_rows(eval.truth_raw);
    j["observed"] = to_rows(obs_raw);
    j["reconstruction"] = to_rows(recon_px);
    j["ade"] = {{"bbox", ade({recon_px}, {eval.truth_raw}, AdeChannels::bbox)},
                {"center", ade({recon_px}, {eval.truth_raw}, AdeChannels::center)}};
    for (auto [name, kind] : {std::pair{"mean", ImputeKind::mean}, std::pair{"linear", ImputeKind::linear},
                              std::pair{"hold_last", ImputeKind::hold_last}}) {
        const Mat imputed = baseline_impute(obs_raw, eval.mask, kind);
        j["baselines"][name] = {{"bbox", ade({imputed}, {eval.truth_raw}, AdeChannels::bbox)},
                                {"center", ade({imputed}, {eval.truth_raw}, AdeChannels::center)}};
        j["baselines"][name]["window"] = to_rows(imputed);
    }

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write '" + out_path.string() + "'");
    out << j.dump(2) << "\n";
    std::cout << "p_cross=" << eval.p_cross << " pred=" << eval.pred << " label=" << record.label
              << " ade_center=" << j["ade"]["center"].get<double>() << "px -> " << out_path.string() << "\n";
    return 0;
}

int cmd_plot_denoise(const CommonArgs& common, const std::string& checkpoint, const std::string& data,
                     const std::string& record_id, const std::string& steps_spec, const std::string& pattern_spec,
                     int length) {
    if (checkpoint.empty() || data.empty() || record_id.empty())
        throw ArgumentError("plot-denoise: --checkpoint, --data and --record are required");
    const std::vector<int> steps = parse_lengths(steps_spec);
    const fs::path out_dir = common.out.empty() ? fs::path(".") : fs::path(common.out);

    Pipeline pipe = load_checkpoint(checkpoint);
    DatasetManifest manifest;
    manifest.records = load_jsonl(data);
    const TrajectoryRecord& record = manifest.find(record_id);

    EvalFlags flags;
    RecordEval eval = evaluate_record(*pipe.denoiser, *pipe.intention, pipe.schedule, pipe.stats, record,
                                      pattern_from_string(pattern_spec), length, flags, common.seed, true);

    fs::create_directories(out_dir);
    for (int k : steps) {
        const auto it = std::find_if(eval.trace.begin(), eval.trace.end(),
                                     [k](const auto& entry) { return entry.first == k; });
        if (it == eval.trace.end())
            throw ArgumentError("plot-denoise: step " + std::to_string(k) + " outside the chain (K=" +
                                std::to_string(pipe.schedule.steps) + ")");
        const Mat state_px = denormalize_window(it->second, pipe.stats);

        tools::ScatterPanel panel_x{"X coordinates (px)", {}};
        tools::ScatterPanel panel_y{"Y coordinates (px)", {}};
        for (int t = 0; t < kWindow; ++t) {
            const bool occ = eval.mask.frame_occluded(t);
            panel_x.points.push_back({eval.truth_raw(t, 0), state_px(t, 0), occ});
            panel_x.points.push_back({eval.truth_raw(t, 2), state_px(t, 2), occ});
            panel_y.points.push_back({eval.truth_raw(t, 1), state_px(t, 1), occ});
            panel_y.points.push_back({eval.truth_raw(t, 3), state_px(t, 3), occ});
        }
        const fs::path file = out_dir / ("denoise_k" + std::to_string(k) + ".svg");
        tools::write_scatter_svg(file.string(), "reverse step k=" + std::to_string(k) + "  (" + record.id + ")",
                                 {panel_x, panel_y});
        std::cout << "k=" << k << "  mean|pred-truth| diag distance: x="
                  << tools::mean_diagonal_distance(panel_x.points)
                  << " y=" << tools::mean_diagonal_distance(panel_y.points) << "  -> " << file.string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"occlusion-aware trajectory reconstruction and crossing-intention prediction"};
    app.require_subcommand(1);

    CommonArgs common;

    auto* synth = app.add_subcommand("synth", "generate a synthetic JSONL dataset");
    int synth_n = 512, synth_t = 16;
    std::string synth_profile = "curver";
    synth->add_option("--n", synth_n, "number of records");
    synth->add_option("--t-total", synth_t, "frames per record (>= 16)");
    synth->add_option("--profile", synth_profile, "walker|stopper|curver");
    add_common(synth, common);

    auto* train = app.add_subcommand("train", "train on a JSONL dataset");
    std::string train_data, train_splits;
    train->add_option("--data", train_data, "dataset JSONL path");
    train->add_option("--splits", train_splits, "reuse an existing splits.json");
    add_common(train, common);

    auto* eval_cmd = app.add_subcommand("eval", "run the occlusion grid on a checkpoint");
    std::string eval_checkpoint, eval_data, eval_splits, eval_split = "test", eval_patterns = "EO,PO",
                eval_lengths = "1-5";
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint path");
    eval_cmd->add_option("--data", eval_data, "dataset JSONL path");
    eval_cmd->add_option("--splits", eval_splits, "splits.json from the training run");
    eval_cmd->add_option("--split", eval_split, "train|val|test|all");
    eval_cmd->add_option("--patterns", eval_patterns, "comma list: EO,PO");
    eval_cmd->add_option("--lengths", eval_lengths, "occlusion lengths, e.g. 1-5 or 0 or 1,3,5");
    add_common(eval_cmd, common);

    auto* rec = app.add_subcommand("reconstruct", "dump one record's imputation");
    std::string rec_checkpoint, rec_data, rec_record, rec_pattern = "PO";
    int rec_length = 3;
    rec->add_option("--checkpoint", rec_checkpoint, "checkpoint path");
    rec->add_option("--data", rec_data, "dataset JSONL path");
    rec->add_option("--record", rec_record, "record id");
    rec->add_option("--pattern", rec_pattern, "EO|PO");
    rec->add_option("--length", rec_length, "occluded frames");
    add_common(rec, common);

    auto* plot = app.add_subcommand("plot-denoise", "scatter plots of the reverse chain");
    std::string plot_checkpoint, plot_data, plot_record, plot_steps = "100,75,50,25,0", plot_pattern = "EO";
    int plot_length = 3;
    plot->add_option("--checkpoint", plot_checkpoint, "checkpoint path");
    plot->add_option("--data", plot_data, "dataset JSONL path");
    plot->add_option("--record", plot_record, "record id");
    plot->add_option("--steps", plot_steps, "reverse steps to plot");
    plot->add_option("--pattern", plot_pattern, "EO|PO");
    plot->add_option("--length", plot_length, "occluded frames");
    add_common(plot, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(common, synth_n, synth_t, synth_profile);
        if (train->parsed()) return cmd_train(common, train_data, train_splits);
        if (eval_cmd->parsed())
            return cmd_eval(common, eval_checkpoint, eval_data, eval_splits, eval_split, eval_patterns,
                            eval_lengths);
        if (rec->parsed()) return cmd_reconstruct(common, rec_checkpoint, rec_data, rec_record, rec_pattern,
                                                  rec_length);
        if (plot->parsed())
            return cmd_plot_denoise(common, plot_checkpoint, plot_data, plot_record, plot_steps, plot_pattern,
                                    plot_length);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitUsage;
}
