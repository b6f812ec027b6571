#include "scaleformer/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "scaleformer/checkpoint.hpp"
#include "scaleformer/error.hpp"
#include "scaleformer/optim.hpp"

namespace scaleformer {

void TrainConfig::validate() const {
    forecast.validate();
    model.validate();
    if (!(lr_model >= 0.0) || !(lr_loss_params >= 0.0)) throw ConfigError("learning rates must be non-negative");
    if (batch_size == 0) throw ConfigError("batch-size must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
    if (!(grad_clip > 0.0)) throw ConfigError("grad-clip must be positive");
    if (train_stride == 0 || eval_stride == 0) throw ConfigError("strides must be positive");
    if (model.head == HeadKind::gaussian && loss != LossKind::nll) {
        throw ConfigError("the gaussian head is trained with the nll loss");
    }
    if (loss == LossKind::nll && model.head != HeadKind::gaussian) throw ConfigError("the nll loss needs head=gaussian");
}

nlohmann::json to_json(const TrainConfig& cfg) {
    const auto& f = cfg.forecast;
    const auto& m = cfg.model;
    nlohmann::json j = {
        {"lookback", f.lookback},
        {"horizon", f.horizon},
        {"scale-factor", f.scale_factor},
        {"norm-mode", to_string(f.norm)},
        {"variant", to_string(f.mode.variant)},
        {"iterations", f.mode.iterations},
        {"detach-between-scales", f.detach_between_scales},
        {"backbone", cfg.backbone},
        {"d-model", m.d_model},
        {"n-heads", m.n_heads},
        {"enc-layers", m.enc_layers},
        {"dec-layers", m.dec_layers},
        {"d-ff", m.d_ff},
        {"dropout", m.dropout},
        {"head", to_string(m.head)},
        {"loss", to_string(cfg.loss)},
        {"huber-delta", cfg.huber_delta},
        {"lr-model", cfg.lr_model},
        {"lr-loss-params", cfg.lr_loss_params},
        {"batch-size", cfg.batch_size},
        {"epochs", cfg.epochs},
        {"patience", cfg.patience},
        {"seed", cfg.seed},
        {"grad-clip", cfg.grad_clip},
        {"train-stride", cfg.train_stride},
        {"eval-stride", cfg.eval_stride},
        {"scale-weights", cfg.scale_weights},
    };
    j["m-override"] = f.m_override ? nlohmann::json(*f.m_override) : nlohmann::json(nullptr);
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    try {
        TrainConfig c;
        c.forecast.lookback = j.at("lookback").get<std::size_t>();
        c.forecast.horizon = j.at("horizon").get<std::size_t>();
        c.forecast.scale_factor = j.at("scale-factor").get<std::size_t>();
        if (!j.at("m-override").is_null()) c.forecast.m_override = j.at("m-override").get<std::size_t>();
        c.forecast.norm = parse_norm_mode(j.at("norm-mode").get<std::string>());
        c.forecast.mode.variant = parse_variant(j.at("variant").get<std::string>());
        c.forecast.mode.iterations = j.at("iterations").get<std::size_t>();
        c.forecast.detach_between_scales = j.at("detach-between-scales").get<bool>();
        c.backbone = j.at("backbone").get<std::string>();
        c.model.d_model = j.at("d-model").get<std::size_t>();
        c.model.n_heads = j.at("n-heads").get<std::size_t>();
        c.model.enc_layers = j.at("enc-layers").get<std::size_t>();
        c.model.dec_layers = j.at("dec-layers").get<std::size_t>();
        c.model.d_ff = j.at("d-ff").get<std::size_t>();
        c.model.dropout = j.at("dropout").get<double>();
        c.model.head = parse_head(j.at("head").get<std::string>());
        c.loss = parse_loss(j.at("loss").get<std::string>());
        c.huber_delta = j.at("huber-delta").get<double>();
        c.lr_model = j.at("lr-model").get<double>();
        c.lr_loss_params = j.at("lr-loss-params").get<double>();
        c.batch_size = j.at("batch-size").get<std::size_t>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.patience = j.at("patience").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.grad_clip = j.at("grad-clip").get<double>();
        c.train_stride = j.at("train-stride").get<std::size_t>();
        c.eval_stride = j.at("eval-stride").get<std::size_t>();
        c.scale_weights = j.at("scale-weights").get<std::vector<double>>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad training configuration: ") + e.what());
    }
}

nlohmann::json to_json(const DataOptions& o) {
    return {{"ratios", o.ratios},
            {"standardize", o.standardize},
            {"train-outlier-pct", o.train_outlier_pct},
            {"outlier-seed", o.outlier_seed},
            {"test-shift", o.test_shift}};
}

DataOptions data_options_from_json(const nlohmann::json& j) {
    DataOptions o;
    o.ratios = j.at("ratios").get<std::array<double, 3>>();
    o.standardize = j.at("standardize").get<bool>();
    o.train_outlier_pct = j.at("train-outlier-pct").get<double>();
    o.outlier_seed = j.at("outlier-seed").get<std::uint64_t>();
    o.test_shift = j.at("test-shift").get<double>();
    return o;
}

PreparedData prepare_data(const MultiSeries& series, const DataOptions& opts) {
    PreparedData out;
    out.featurizer = TimeFeaturizer::for_series(series);
    out.splits = split(series, opts.ratios);
    if (opts.standardize) {
        out.standardizer = Standardizer::fit(out.splits.train.values);
        out.splits.train = out.standardizer->apply(out.splits.train);
        out.splits.val = out.standardizer->apply(out.splits.val);
        out.splits.test = out.standardizer->apply(out.splits.test);
    }
    if (opts.train_outlier_pct > 0.0) {
        out.splits.train = inject_outliers(out.splits.train, opts.train_outlier_pct, opts.outlier_seed);
    }
    if (opts.test_shift != 0.0) {
        for (double& v : out.splits.test.values.data()) v += opts.test_shift;
    }
    return out;
}

namespace {

Tensor gather(const Tensor& src, std::span<const std::size_t> rows) {
    const Shape s = src.shape();
    Tensor out(Shape{rows.size(), s.l, s.w});
    const std::size_t block = s.l * s.w;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= s.b) throw ShapeError("window index out of range");
        std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * block), block,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * block));
    }
    return out;
}

}  // namespace

ForecastBatch WindowSet::batch(std::span<const std::size_t> rows) const {
    return {gather(lookback, rows), gather(lookback_time, rows), gather(horizon_time, rows)};
}

Tensor WindowSet::horizon_batch(std::span<const std::size_t> rows) const { return gather(horizon, rows); }

WindowSet make_window_set(const MultiSeries& series, const TimeFeaturizer& featurizer, std::size_t lookback,
                          std::size_t horizon, std::size_t stride) {
    const std::vector<WindowPair> windows = make_windows(series, lookback, horizon, stride);
    if (windows.empty()) throw DataError("series '" + series.name + "' yields no windows");
    std::vector<Matrix> lb, hz, lt, ht;
    WindowSet set;
    for (const auto& w : windows) {
        lb.push_back(w.lookback);
        hz.push_back(w.horizon);
        lt.push_back(featurizer.features(w.lookback_stamps));
        ht.push_back(featurizer.features(w.horizon_stamps));
        set.origins.push_back(w.t0);
    }
    set.lookback = Tensor::stack(lb);
    set.horizon = Tensor::stack(hz);
    set.lookback_time = Tensor::stack(lt);
    set.horizon_time = Tensor::stack(ht);
    return set;
}

Model make_model(const TrainConfig& cfg, std::size_t d_x, std::size_t n_time_feats) {
    cfg.validate();
    Model m;
    m.backbone = make_backbone(cfg.backbone, cfg.model, d_x, n_time_feats);
    m.params = m.backbone->init(cfg.seed);
    m.objective = Objective(cfg.loss, cfg.huber_delta);
    return m;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

ScaleLoss bind_objective(ad::Graph& g, Objective& objective) {
    return [&g, &objective](ad::Var mean, std::optional<ad::Var> sigma, ad::Var target) {
        return objective(g, mean, sigma, target);
    };
}

std::vector<std::vector<std::size_t>> chunks(std::size_t n, std::size_t size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t begin = 0; begin < n; begin += size) {
        std::vector<std::size_t> rows(std::min(size, n - begin));
        std::iota(rows.begin(), rows.end(), begin);
        out.push_back(std::move(rows));
    }
    return out;
}

struct Accumulator {
    double sq = 0.0;
    double abs = 0.0;
    double nll = 0.0;
    double crps = 0.0;
    double count = 0.0;
};

// Objective value and final-scale MSE over a whole set, without gradients.
std::pair<double, double> validate_model(Model& model, const WindowSet& set, const TrainConfig& cfg) {
    double loss_sum = 0.0;
    double sq_sum = 0.0;
    double elements = 0.0;
    for (const auto& rows : chunks(set.size(), cfg.batch_size)) {
        ad::Graph g(false);
        const ScaleOutputs out = forecast(g, *model.backbone, model.params, cfg.forecast, set.batch(rows));
        const Tensor target = set.horizon_batch(rows);
        const ad::Var loss = multi_scale_loss(g, out, target, bind_objective(g, model.objective), cfg.scale_weights);
        loss_sum += loss.value().item() * static_cast<double>(rows.size());
        const auto& pred = out.final_mean().value().data();
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double r = pred[i] - target.data()[i];
            sq_sum += r * r;
        }
        elements += static_cast<double>(pred.size());
    }
    return {loss_sum / static_cast<double>(set.size()), sq_sum / elements};
}

}  // namespace

TrainResult train(const WindowSet& train_set, const WindowSet& val_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0 || val_set.size() == 0) throw DataError("training needs at least one window per split");
    const auto start = Clock::now();
    const Shape s = train_set.lookback.shape();
    TrainResult result;
    Model model = make_model(cfg, s.w, train_set.lookback_time.shape().w);

    Adam adam;
    adam.add_group(model.params, cfg.lr_model);
    adam.add_group(model.objective.params(), cfg.lr_loss_params);
    const std::vector<ParameterSet*> groups{&model.params, &model.objective.params()};

    std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    EarlyStopper stopper(cfg.patience);
    ParameterSet best_params = model.params;
    ParameterSet best_loss_params = model.objective.params();

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double train_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::span<const std::size_t> rows(order.data() + begin, std::min(cfg.batch_size, order.size() - begin));
            model.params.zero_grad();
            model.objective.params().zero_grad();
            ad::Graph g;
            const ForwardContext ctx{true, &rng};
            const ScaleOutputs out = forecast(g, *model.backbone, model.params, cfg.forecast, train_set.batch(rows), ctx);
            const ad::Var loss = multi_scale_loss(g, out, train_set.horizon_batch(rows),
                                                  bind_objective(g, model.objective), cfg.scale_weights);
            g.backward(loss);
            clip_grad_norm(groups, cfg.grad_clip);
            adam.step();
            train_sum += loss.value().item() * static_cast<double>(rows.size());
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = train_sum / static_cast<double>(order.size());
        std::tie(entry.val_loss, entry.val_mse) = validate_model(model, val_set, cfg);
        if (cfg.loss == LossKind::adaptive) {
            const auto [alpha, c] = model.objective.alpha_c();
            entry.alpha = alpha;
            entry.c = c;
        }
        result.log.push_back(entry);
        if (stopper.update(entry.val_mse)) {
            best_params = model.params;
            best_loss_params = model.objective.params();
            result.best_epoch = epoch;
        }
        if (stopper.should_stop()) {
            result.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    model.params = std::move(best_params);
    model.objective.params() = std::move(best_loss_params);
    result.model = std::move(model);
    result.wall_clock = seconds_since(start);
    return result;
}

MetricsReport evaluate(Model& model, const WindowSet& set, const TrainConfig& cfg) {
    if (set.size() == 0) throw DataError("evaluation needs at least one window");
    const auto start = Clock::now();
    const ScaleSchedule schedule = cfg.forecast.schedule();
    Accumulator total;
    std::vector<double> scale_sq(schedule.count(), 0.0);
    std::vector<double> scale_n(schedule.count(), 0.0);
    bool probabilistic = false;
    for (const auto& rows : chunks(set.size(), cfg.batch_size)) {
        ad::Graph g(false);
        const ScaleOutputs out = forecast(g, *model.backbone, model.params, cfg.forecast, set.batch(rows));
        const Tensor target = set.horizon_batch(rows);
        const std::vector<Tensor> pooled = pool_targets(target, out.schedule);
        for (std::size_t i = 0; i < out.count(); ++i) {
            const auto& p = out.mean[i].value().data();
            for (std::size_t k = 0; k < p.size(); ++k) {
                const double r = p[k] - pooled[i].data()[k];
                scale_sq[i] += r * r;
            }
            scale_n[i] += static_cast<double>(p.size());
        }
        const Matrix pred(target.size(), 1, out.final_mean().value().data());
        const Matrix truth(target.size(), 1, target.data());
        const double n = static_cast<double>(target.size());
        total.sq += mse(pred, truth) * n;
        total.abs += mae(pred, truth) * n;
        total.count += n;
        if (out.sigma.back()) {
            probabilistic = true;
            const Matrix sigma(target.size(), 1, out.sigma.back()->value().data());
            total.nll += gaussian_nll(pred, sigma, truth) * n;
            total.crps += gaussian_crps(pred, sigma, truth) * n;
        }
    }
    MetricsReport m;
    m.mse = total.sq / total.count;
    m.mae = total.abs / total.count;
    if (probabilistic) {
        m.nll = total.nll / total.count;
        m.crps = total.crps / total.count;
    }
    for (std::size_t i = 0; i < scale_sq.size(); ++i) m.per_scale_mse.push_back(scale_sq[i] / scale_n[i]);
    m.wall_clock_eval = seconds_since(start);
    return m;
}

std::vector<Matrix> predict_window(Model& model, const WindowSet& set, std::size_t row, const TrainConfig& cfg) {
    if (row >= set.size()) throw DataError("window " + std::to_string(row) + " out of range");
    const std::size_t rows[] = {row};
    const ForecastBatch b = set.batch(rows);
    return forecast_window(*model.backbone, model.params, cfg.forecast, b.lookback.matrix(), b.lookback_time.matrix(),
                           b.horizon_time.matrix());
}

void save_model(const std::filesystem::path& path, const Model& model, const TrainConfig& cfg,
                const nlohmann::json& extra) {
    ParameterSet all = model.params;
    for (const auto& p : model.objective.params()) all.add(p.name, p.value);
    nlohmann::json meta = extra;
    meta["config"] = to_json(cfg);
    meta["d_x"] = model.backbone->d_x();
    meta["n_time_feats"] = model.backbone->n_time_feats();
    save_checkpoint(path, all, meta);
}

LoadedModel load_model(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    LoadedModel out;
    try {
        out.config = train_config_from_json(ck.meta.at("config"));
        out.model = make_model(out.config, ck.meta.at("d_x").get<std::size_t>(),
                               ck.meta.at("n_time_feats").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint metadata incomplete: ") + e.what());
    }
    assign_parameters(out.model.params, ck.params);
    assign_parameters(out.model.objective.params(), ck.params);
    out.meta = std::move(ck.meta);
    return out;
}

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.precision(10);
    out << "epoch,train_loss,val_loss,val_mse,alpha,c\n";
    for (const auto& e : log) {
        out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_mse << ',';
        if (e.alpha) out << *e.alpha;
        out << ',';
        if (e.c) out << *e.c;
        out << '\n';
    }
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.precision(10);
    out << "metric,value\n";
    out << "mse," << m.mse << "\nmae," << m.mae << '\n';
    if (m.nll) out << "nll," << *m.nll << '\n';
    if (m.crps) out << "crps," << *m.crps << '\n';
    for (std::size_t i = 0; i < m.per_scale_mse.size(); ++i) out << "mse_scale_" << i << ',' << m.per_scale_mse[i] << '\n';
    out << "wall_clock_train," << m.wall_clock_train << "\nwall_clock_eval," << m.wall_clock_eval << '\n';
}

}  // namespace scaleformer
