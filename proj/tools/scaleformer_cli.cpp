#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scaleformer/data.hpp"
#include "scaleformer/error.hpp"
#include "scaleformer/experiment.hpp"
#include "scaleformer/harness.hpp"
#include "scaleformer/plot.hpp"

namespace fs = std::filesystem;
using namespace scaleformer;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

// Where the series comes from: a CSV file, or the synthetic set.
struct DataSource {
    std::string path;
    bool no_header = false;
    std::string timestamp_column;
    std::size_t synth_length = 10000;

    MultiSeries load() const {
        if (path.empty()) return synthetic_dataset(synth_length);
        return load_csv(path, !no_header,
                        timestamp_column.empty() ? std::nullopt : std::optional<std::string>(timestamp_column));
    }
    nlohmann::json to_json() const {
        return {{"path", path}, {"no-header", no_header}, {"timestamp-column", timestamp_column},
                {"synth-length", synth_length}};
    }
    static DataSource from_json(const nlohmann::json& j) {
        DataSource d;
        d.path = j.at("path").get<std::string>();
        d.no_header = j.at("no-header").get<bool>();
        d.timestamp_column = j.at("timestamp-column").get<std::string>();
        d.synth_length = j.at("synth-length").get<std::size_t>();
        return d;
    }
};

struct Strings {
    std::string norm = "mean";
    std::string variant = "msa";
    std::string loss = "adaptive";
    std::string head = "point";
    std::size_t m_override = 0;
};

void add_data_flags(CLI::App* app, DataSource& src) {
    app->add_option("--data", src.path, "Input CSV (default: generated synthetic set)");
    app->add_flag("--no-header", src.no_header, "The CSV has no header row");
    app->add_option("--timestamp-column", src.timestamp_column, "Name of the timestamp column");
    app->add_option("--synth-length", src.synth_length, "Length of the synthetic set");
}

void add_train_flags(CLI::App* app, TrainConfig& cfg, Strings& s) {
    auto& f = cfg.forecast;
    app->add_option("--lookback", f.lookback);
    app->add_option("--horizon", f.horizon);
    app->add_option("--scale-factor", f.scale_factor);
    app->add_option("--m-override", s.m_override, "Number of coarser scales (0: derived from the lookback)");
    app->add_option("--norm-mode", s.norm)->check(CLI::IsMember({"none", "mean", "mean_std"}));
    app->add_option("--variant", s.variant)->check(CLI::IsMember({"msa", "msa_r", "ia", "single"}));
    app->add_option("--iterations", f.mode.iterations, "Refinement steps of the ia variant");
    app->add_flag("--detach-between-scales", f.detach_between_scales);
    app->add_option("--backbone", cfg.backbone)->check(CLI::IsMember({"transformer", "linear"}));
    app->add_option("--d-model", cfg.model.d_model);
    app->add_option("--n-heads", cfg.model.n_heads);
    app->add_option("--enc-layers", cfg.model.enc_layers);
    app->add_option("--dec-layers", cfg.model.dec_layers);
    app->add_option("--d-ff", cfg.model.d_ff);
    app->add_option("--dropout", cfg.model.dropout);
    app->add_option("--head", s.head)->check(CLI::IsMember({"point", "gaussian"}));
    app->add_option("--loss", s.loss)->check(CLI::IsMember({"mse", "mae", "huber", "adaptive", "nll"}));
    app->add_option("--huber-delta", cfg.huber_delta);
    app->add_option("--lr-model", cfg.lr_model);
    app->add_option("--lr-loss-params", cfg.lr_loss_params);
    app->add_option("--batch-size", cfg.batch_size);
    app->add_option("--epochs", cfg.epochs);
    app->add_option("--patience", cfg.patience);
    app->add_option("--seed", cfg.seed);
    app->add_option("--grad-clip", cfg.grad_clip);
    app->add_option("--train-stride", cfg.train_stride);
    app->add_option("--eval-stride", cfg.eval_stride);
    app->add_option("--scale-weights", cfg.scale_weights)->delimiter(',');
}

void finish_config(TrainConfig& cfg, const Strings& s) {
    cfg.forecast.norm = parse_norm_mode(s.norm);
    cfg.forecast.mode.variant = parse_variant(s.variant);
    cfg.loss = parse_loss(s.loss);
    cfg.model.head = parse_head(s.head);
    if (s.m_override > 0) cfg.forecast.m_override = s.m_override;
    cfg.validate();
}

void add_data_option_flags(CLI::App* app, DataOptions& d) {
    app->add_option("--outliers", d.train_outlier_pct, "Fraction of training rows replaced by outliers");
    app->add_option("--test-shift", d.test_shift, "Constant added to the standardized test split");
}

// Reads a flat key=value file ('#' starts a comment) into --key=value arguments.
std::vector<std::string> config_arguments(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::vector<std::string> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key=value");
        }
        auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t\r");
            const auto e = v.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        out.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
    }
    return out;
}

// argv with the contents of --config <file> spliced in right after the
// subcommand, so that explicit flags (parsed later) win.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    for (std::size_t i = 1; i < args.size(); ++i) {
        std::string path;
        std::size_t erase = 0;
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            erase = 2;
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            erase = 1;
        } else {
            continue;
        }
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + erase));
        const auto extra = config_arguments(path);
        const std::size_t at = args.size() > 1 ? 2 : 1;
        args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), extra.begin(), extra.end());
        break;
    }
    return args;
}

struct Sets {
    PreparedData data;
    WindowSet train, val, test;
};

Sets build_sets(const MultiSeries& series, const DataOptions& opts, const TrainConfig& cfg) {
    Sets s{prepare_data(series, opts), {}, {}, {}};
    const auto& f = cfg.forecast;
    s.train = make_window_set(s.data.splits.train, s.data.featurizer, f.lookback, f.horizon, cfg.train_stride);
    s.val = make_window_set(s.data.splits.val, s.data.featurizer, f.lookback, f.horizon, cfg.eval_stride);
    s.test = make_window_set(s.data.splits.test, s.data.featurizer, f.lookback, f.horizon, cfg.eval_stride);
    return s;
}

void write_loss_plot(const fs::path& path, const std::vector<EpochLog>& log) {
    PlotSeries tr{"train loss", {}, {}}, va{"val loss", {}, {}}, mse{"val mse", {}, {}};
    for (const auto& e : log) {
        const auto x = static_cast<double>(e.epoch);
        tr.x.push_back(x), tr.y.push_back(e.train_loss);
        va.x.push_back(x), va.y.push_back(e.val_loss);
        mse.x.push_back(x), mse.y.push_back(e.val_mse);
    }
    write_svg(path, svg_line_chart("training curves", {tr, va, mse}));
}

int run(int argc, char** argv) {
    CLI::App app{"Iterative multi-scale refinement forecasting"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--config", "Flat key=value file with option defaults");

    // synth
    auto* synth = app.add_subcommand("synth", "Write the synthetic Mackey-Glass set as CSV");
    std::string synth_out = "synthetic.csv";
    std::size_t synth_length = 10000;
    double synth_outliers = 0.0;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out);
    synth->add_option("--length", synth_length);
    synth->add_option("--outliers", synth_outliers);
    synth->add_option("--seed", synth_seed);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model and evaluate it on the test split");
    TrainConfig train_cfg;
    Strings train_s;
    DataSource train_src;
    DataOptions train_data;
    std::string train_out = "run";
    add_train_flags(train_cmd, train_cfg, train_s);
    add_data_flags(train_cmd, train_src);
    add_data_option_flags(train_cmd, train_data);
    train_cmd->add_option("--out", train_out, "Output directory");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    std::string eval_ckpt;
    std::string eval_out = ".";
    DataSource eval_src;
    bool eval_src_given = false;
    eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("--out", eval_out);
    add_data_flags(eval_cmd, eval_src);

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "Plot every scale's forecast for one test window");
    std::string plot_ckpt;
    std::string plot_out = ".";
    std::size_t plot_window = 0;
    std::size_t plot_column = 0;
    DataSource plot_src;
    plot_cmd->add_option("--checkpoint", plot_ckpt)->required();
    plot_cmd->add_option("--out", plot_out);
    plot_cmd->add_option("--window", plot_window);
    plot_cmd->add_option("--column", plot_column);
    add_data_flags(plot_cmd, plot_src);

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "Run a preset over several seeds");
    std::string preset;
    std::uint64_t exp_seed = 0;
    ExperimentOptions exp_opts;
    std::string exp_out;
    exp_cmd->add_option("preset", preset)->required()->check(CLI::IsMember(preset_names()));
    exp_cmd->add_option("--seed", exp_seed)->required();
    exp_cmd->add_option("--n-seeds", exp_opts.n_seeds);
    exp_cmd->add_option("--series-length", exp_opts.scale.series_length);
    exp_cmd->add_option("--train-stride", exp_opts.scale.train_stride);
    exp_cmd->add_option("--eval-stride", exp_opts.scale.eval_stride);
    exp_cmd->add_option("--epochs", exp_opts.scale.epochs);
    exp_cmd->add_option("--batch-size", exp_opts.scale.batch_size);
    exp_cmd->add_option("--lr-model", exp_opts.scale.lr_model);
    exp_cmd->add_option("--cells", exp_opts.only_cells, "Run only these cells")->delimiter(',');
    exp_cmd->add_option("--out", exp_out, "Output directory (default: results/<preset>)");
    bool quiet = false;
    exp_cmd->add_flag("--quiet", quiet);

    const std::vector<std::string> args = expand_config(argc, argv);
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(cargs.size()), const_cast<char**>(cargs.data()));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    eval_src_given = eval_cmd->count("--data") > 0 || eval_cmd->count("--synth-length") > 0;

    if (synth->parsed()) {
        MultiSeries s = synthetic_dataset(synth_length);
        if (synth_outliers > 0.0) s = inject_outliers(s, synth_outliers, synth_seed);
        write_csv(s, synth_out);
        std::cout << "wrote " << s.length() << " rows to " << synth_out << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        finish_config(train_cfg, train_s);
        const MultiSeries series = train_src.load();
        Sets sets = build_sets(series, train_data, train_cfg);
        std::cout << "windows: train " << sets.train.size() << ", val " << sets.val.size() << ", test "
                  << sets.test.size() << "\n";
        TrainResult result = train(sets.train, sets.val, train_cfg);
        MetricsReport metrics = evaluate(result.model, sets.test, train_cfg);
        metrics.wall_clock_train = result.wall_clock;
        const fs::path out(train_out);
        fs::create_directories(out / "plots");
        nlohmann::json extra = {{"data", train_src.to_json()}, {"data-options", to_json(train_data)}};
        save_model(out / "checkpoint.bin", result.model, train_cfg, extra);
        write_log_csv(out / "log.csv", result.log);
        write_metrics_csv(out / "metrics.csv", metrics);
        write_loss_plot(out / "plots" / "loss.svg", result.log);
        std::cout << "best epoch " << result.best_epoch << " of " << result.log.size() << "; test mse " << metrics.mse
                  << ", mae " << metrics.mae << "\n";
        return 0;
    }

    if (eval_cmd->parsed() || plot_cmd->parsed()) {
        const bool is_eval = eval_cmd->parsed();
        LoadedModel loaded = load_model(is_eval ? eval_ckpt : plot_ckpt);
        DataSource src = DataSource::from_json(loaded.meta.at("data"));
        if (is_eval && eval_src_given) src = eval_src;
        if (!is_eval && (plot_cmd->count("--data") > 0 || plot_cmd->count("--synth-length") > 0)) src = plot_src;
        const DataOptions data_opts = data_options_from_json(loaded.meta.at("data-options"));
        Sets sets = build_sets(src.load(), data_opts, loaded.config);
        const fs::path out(is_eval ? eval_out : plot_out);
        if (is_eval) {
            fs::create_directories(out);
            const MetricsReport m = evaluate(loaded.model, sets.test, loaded.config);
            write_metrics_csv(out / "metrics.csv", m);
            std::cout << "test mse " << m.mse << ", mae " << m.mae << "\n";
            return 0;
        }
        fs::create_directories(out / "plots");
        const auto preds = predict_window(loaded.model, sets.test, plot_window, loaded.config);
        const std::size_t rows[] = {plot_window};
        const Matrix lookback = sets.test.batch(rows).lookback.matrix();
        const Matrix horizon = sets.test.horizon_batch(rows).matrix();
        std::vector<std::size_t> factors;
        for (const auto& st : loaded.config.forecast.schedule().steps) factors.push_back(st.factor);
        const auto series = forecast_series(lookback, horizon, preds, factors, plot_column);
        const std::string stem = "window_" + std::to_string(plot_window);
        write_svg(out / "plots" / (stem + ".svg"), svg_line_chart("test window " + std::to_string(plot_window), series));
        write_series_csv(out / "plots" / (stem + ".csv"), series);
        std::cout << "wrote " << (out / "plots" / (stem + ".svg")).string() << "\n";
        return 0;
    }

    exp_opts.seed = exp_seed;
    if (!quiet) exp_opts.progress = [](const std::string& msg) { std::cerr << "[experiment] " << msg << "\n"; };
    const ExperimentResult result = run_experiment(preset, exp_opts);
    const fs::path out = exp_out.empty() ? fs::path("results") / preset : fs::path(exp_out);
    write_experiment_csv(out, result);
    for (const auto& c : result.comparisons) {
        std::cout << c.pair.a << " vs " << c.pair.b << ": t=" << c.mse.t << " p=" << c.mse.p_two_sided
                  << " (one-sided " << c.mse.p_less << ")\n";
    }
    std::cout << "wrote " << (out / "summary.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
