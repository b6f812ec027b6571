#include "scaleformer/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "scaleformer/error.hpp"

namespace scaleformer {

namespace {

TrainConfig base_config(const ExperimentScale& scale) {
    TrainConfig c;
    c.forecast.lookback = 96;
    c.forecast.horizon = 96;
    c.forecast.scale_factor = 2;
    c.forecast.norm = NormMode::mean;
    c.forecast.mode.variant = Variant::msa;
    c.model.d_model = 32;
    c.model.n_heads = 2;
    c.model.enc_layers = 2;
    c.model.dec_layers = 1;
    c.model.d_ff = 64;
    c.loss = LossKind::adaptive;
    c.lr_model = scale.lr_model;
    c.batch_size = scale.batch_size;
    c.epochs = scale.epochs;
    c.train_stride = scale.train_stride;
    c.eval_stride = scale.eval_stride;
    return c;
}

Cell cell(std::string name, TrainConfig cfg, DataOptions data = {}) { return {std::move(name), cfg, data}; }

std::string pct_label(double pct) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", pct);
    return buf;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::vector<std::string> preset_names() {
    return {"synth-msa-vs-single", "ablate-norm",   "ablate-loss", "outlier-sweep",
            "scale-sweep",         "prob-forecast", "ia-vs-msa",   "msa_r-vs-msa"};
}

Preset make_preset(const std::string& name, const ExperimentScale& scale) {
    const TrainConfig base = base_config(scale);
    Preset p;
    p.name = name;
    if (name == "synth-msa-vs-single") {
        TrainConfig single = base;
        single.forecast.mode.variant = Variant::single;
        single.forecast.norm = NormMode::none;
        single.loss = LossKind::mse;
        p.cells = {cell("msa-mean-adaptive", base), cell("single-none-mse", single)};
        p.comparisons = {{"msa-mean-adaptive", "single-none-mse"}};
    } else if (name == "ablate-norm") {
        DataOptions shifted;
        shifted.test_shift = 3.0;  // the splits are z-scored, so this is 3 train-split deviations
        TrainConfig none = base;
        none.forecast.norm = NormMode::none;
        TrainConfig mean_std = base;
        mean_std.forecast.norm = NormMode::mean_std;
        p.cells = {cell("msa-mean", base, shifted), cell("msa-none", none, shifted),
                   cell("msa-mean_std", mean_std, shifted)};
        p.comparisons = {{"msa-mean", "msa-none"}, {"msa-mean_std", "msa-none"}};
    } else if (name == "ablate-loss") {
        TrainConfig mse = base;
        mse.loss = LossKind::mse;
        TrainConfig huber = base;
        huber.loss = LossKind::huber;
        p.cells = {cell("msa-adaptive", base), cell("msa-mse", mse), cell("msa-huber", huber)};
        p.comparisons = {{"msa-adaptive", "msa-mse"}, {"msa-adaptive", "msa-huber"}};
    } else if (name == "outlier-sweep") {
        TrainConfig mse = base;
        mse.loss = LossKind::mse;
        for (double pct : {0.0, 0.01, 0.03, 0.05}) {
            DataOptions d;
            d.train_outlier_pct = pct;
            const std::string a = "adaptive@" + pct_label(pct);
            const std::string b = "mse@" + pct_label(pct);
            p.cells.push_back(cell(a, base, d));
            p.cells.push_back(cell(b, mse, d));
            p.comparisons.push_back({a, b});
        }
    } else if (name == "scale-sweep") {
        TrainConfig s4 = base;
        s4.forecast.scale_factor = 4;
        TrainConfig s16 = base;
        s16.forecast.scale_factor = 16;
        s16.forecast.m_override = 1;  // floor(log16 96) - 1 = 0 leaves no coarser scale
        p.cells = {cell("s=2", base), cell("s=4", s4), cell("s=16", s16)};
        p.comparisons = {{"s=2", "s=16"}, {"s=4", "s=16"}};
    } else if (name == "prob-forecast") {
        TrainConfig msa = base;
        msa.model.head = HeadKind::gaussian;
        msa.loss = LossKind::nll;
        TrainConfig single = msa;
        single.forecast.mode.variant = Variant::single;
        p.cells = {cell("msa-gaussian", msa), cell("single-gaussian", single)};
        p.comparisons = {{"msa-gaussian", "single-gaussian"}};
    } else if (name == "ia-vs-msa") {
        TrainConfig msa = base;
        msa.forecast.m_override = 4;
        TrainConfig ia = base;
        ia.forecast.mode = {Variant::ia, 5};
        p.cells = {cell("msa", msa), cell("ia", ia)};
        p.comparisons = {{"msa", "ia"}};
    } else if (name == "msa_r-vs-msa") {
        TrainConfig reduced = base;
        reduced.forecast.mode.variant = Variant::msa_r;
        p.cells = {cell("msa_r", reduced), cell("msa", base)};
        p.comparisons = {{"msa_r", "msa"}};
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return p;
}

std::vector<double> CellResult::mse() const {
    std::vector<double> v;
    for (const auto& s : seeds) v.push_back(s.metrics.mse);
    return v;
}

std::vector<double> CellResult::mae() const {
    std::vector<double> v;
    for (const auto& s : seeds) v.push_back(s.metrics.mae);
    return v;
}

const CellResult& ExperimentResult::cell(const std::string& name) const {
    for (const auto& c : cells)
        if (c.name == name) return c;
    throw ConfigError("experiment has no cell '" + name + "'");
}

ExperimentResult run_experiment(const std::string& preset_name, const ExperimentOptions& options) {
    if (options.n_seeds == 0) throw ConfigError("n-seeds must be positive");
    const Preset preset = make_preset(preset_name, options.scale);
    const MultiSeries series = synthetic_dataset(options.scale.series_length);

    ExperimentResult result;
    result.preset = preset.name;
    for (const auto& c : preset.cells) {
        if (!options.only_cells.empty() &&
            std::find(options.only_cells.begin(), options.only_cells.end(), c.name) == options.only_cells.end()) {
            continue;
        }
        CellResult cr;
        cr.name = c.name;
        for (std::size_t r = 0; r < options.n_seeds; ++r) {
            const std::uint64_t seed = options.seed + r;
            if (options.progress) options.progress(c.name + " seed " + std::to_string(seed));
            DataOptions data = c.data;
            data.outlier_seed = seed;
            const PreparedData prepared = prepare_data(series, data);
            TrainConfig cfg = c.train;
            cfg.seed = seed;
            const auto& f = cfg.forecast;
            const WindowSet train_set =
                make_window_set(prepared.splits.train, prepared.featurizer, f.lookback, f.horizon, cfg.train_stride);
            const WindowSet val_set =
                make_window_set(prepared.splits.val, prepared.featurizer, f.lookback, f.horizon, cfg.eval_stride);
            const WindowSet test_set =
                make_window_set(prepared.splits.test, prepared.featurizer, f.lookback, f.horizon, cfg.eval_stride);
            TrainResult trained = train(train_set, val_set, cfg);
            SeedResult sr;
            sr.seed = seed;
            sr.metrics = evaluate(trained.model, test_set, cfg);
            sr.metrics.wall_clock_train = trained.wall_clock;
            sr.best_epoch = trained.best_epoch;
            sr.epochs_run = trained.log.size();
            if (cfg.loss == LossKind::adaptive) std::tie(sr.alpha, sr.c) = trained.model.objective.alpha_c();
            cr.seeds.push_back(std::move(sr));
        }
        result.cells.push_back(std::move(cr));
    }
    for (const auto& cmp : preset.comparisons) {
        const auto has = [&](const std::string& n) {
            return std::any_of(result.cells.begin(), result.cells.end(), [&](const auto& c) { return c.name == n; });
        };
        if (!has(cmp.a) || !has(cmp.b) || options.n_seeds < 2) continue;
        const auto& a = result.cell(cmp.a);
        const auto& b = result.cell(cmp.b);
        result.comparisons.push_back({cmp, t_test(a.mse(), b.mse()), t_test(a.mae(), b.mae())});
    }
    return result;
}

void write_experiment_csv(const std::filesystem::path& dir, const ExperimentResult& result) {
    std::filesystem::create_directories(dir);
    const auto open = [&](const char* file) {
        std::ofstream out(dir / file);
        if (!out) throw DataError("cannot write '" + (dir / file).string() + "'");
        return out;
    };

    // The p-value column refers to the first comparison in which the cell is the left operand.
    std::map<std::string, const ComparisonResult*> first;
    for (const auto& c : result.comparisons) first.emplace(c.pair.a, &c);

    auto summary = open("summary.csv");
    summary << "preset,cell,n,mse_mean,mse_std,mse_median,mae_mean,mae_std,nll_mean,crps_mean,alpha_mean,c_mean,"
               "compared_to,p_mse,p_mae\n";
    for (const auto& c : result.cells) {
        const auto mse = c.mse();
        const auto mae = c.mae();
        std::vector<double> nll, crps, alpha, cs;
        for (const auto& s : c.seeds) {
            if (s.metrics.nll) nll.push_back(*s.metrics.nll);
            if (s.metrics.crps) crps.push_back(*s.metrics.crps);
            if (s.alpha) alpha.push_back(*s.alpha);
            if (s.c) cs.push_back(*s.c);
        }
        const auto mean_or_blank = [](const std::vector<double>& v) {
            return v.empty() ? std::string() : fmt(sample_mean(v));
        };
        summary << result.preset << ',' << c.name << ',' << c.seeds.size() << ',' << fmt(sample_mean(mse)) << ','
                << fmt(sample_stdev(mse)) << ',' << fmt(sample_median(mse)) << ',' << fmt(sample_mean(mae)) << ','
                << fmt(sample_stdev(mae)) << ',' << mean_or_blank(nll) << ',' << mean_or_blank(crps) << ','
                << mean_or_blank(alpha) << ',' << mean_or_blank(cs) << ',';
        if (auto it = first.find(c.name); it != first.end()) {
            summary << it->second->pair.b << ',' << fmt(it->second->mse.p_two_sided) << ','
                    << fmt(it->second->mae.p_two_sided);
        } else {
            summary << ",,";
        }
        summary << '\n';
    }

    auto comparisons = open("comparisons.csv");
    comparisons << "preset,a,b,metric,t,df,p_two_sided,p_a_less\n";
    for (const auto& c : result.comparisons) {
        for (const auto& [metric, t] : {std::pair{"mse", &c.mse}, std::pair{"mae", &c.mae}}) {
            comparisons << result.preset << ',' << c.pair.a << ',' << c.pair.b << ',' << metric << ',' << fmt(t->t)
                        << ',' << fmt(t->df) << ',' << fmt(t->p_two_sided) << ',' << fmt(t->p_less) << '\n';
        }
    }

    auto seeds = open("seeds.csv");
    seeds << "preset,cell,seed,mse,mae,nll,crps,best_epoch,epochs_run,alpha,c";
    std::size_t max_scales = 0;
    for (const auto& c : result.cells)
        for (const auto& s : c.seeds) max_scales = std::max(max_scales, s.metrics.per_scale_mse.size());
    for (std::size_t i = 0; i < max_scales; ++i) seeds << ",mse_scale_" << i;
    seeds << '\n';
    for (const auto& c : result.cells) {
        for (const auto& s : c.seeds) {
            seeds << result.preset << ',' << c.name << ',' << s.seed << ',' << fmt(s.metrics.mse) << ','
                  << fmt(s.metrics.mae) << ',' << fmt(s.metrics.nll) << ',' << fmt(s.metrics.crps) << ','
                  << s.best_epoch << ',' << s.epochs_run << ',' << fmt(s.alpha) << ',' << fmt(s.c);
            for (std::size_t i = 0; i < max_scales; ++i) {
                seeds << ',';
                if (i < s.metrics.per_scale_mse.size()) seeds << fmt(s.metrics.per_scale_mse[i]);
            }
            seeds << '\n';
        }
    }
}

}  // namespace scaleformer
