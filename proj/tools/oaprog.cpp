// Command-line driver for the progression-prediction pipeline.  Every
// subcommand reads one JSON run configuration, derives all randomness from
// the single master seed, and writes versioned artifacts into --out.
// Artifacts embed the parameter hash and seed; paths never enter the hash,
// so reruns of one configuration are byte-identical wherever they land.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oaprog/artifacts.hpp"
#include "oaprog/cohort.hpp"
#include "oaprog/csv.hpp"
#include "oaprog/eval.hpp"
#include "oaprog/explain.hpp"
#include "oaprog/forest.hpp"
#include "oaprog/labeling.hpp"
#include "oaprog/metrics.hpp"
#include "oaprog/parallel.hpp"
#include "oaprog/preprocess.hpp"
#include "oaprog/rfe.hpp"
#include "oaprog/rng.hpp"
#include "oaprog/select.hpp"
#include "oaprog/strategies.hpp"
#include "oaprog/synth.hpp"

namespace fs = std::filesystem;
using oaprog::json;

namespace {

struct RunContext {
    json config;
    std::uint64_t seed = 0;
    std::string out_dir;
    unsigned workers = 1;
    std::string param_hash;  // hash of the config minus file-location keys
};

// The hash covers everything that shapes results; where the inputs live on
// disk does not.
std::string hash_parameters(json cfg) {
    cfg.erase("data");
    cfg.erase("metadata");
    for (auto& [key, section] : cfg.items()) {
        (void)key;
        if (!section.is_object()) continue;
        section.erase("store");
        section.erase("model");
    }
    return oaprog::config_hash(cfg);
}

RunContext make_context(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
                        const std::string& out_dir, unsigned workers_flag) {
    RunContext ctx;
    if (!config_path.empty()) ctx.config = oaprog::read_json_file(config_path);
    else ctx.config = json::object();
    if (!ctx.config.is_object()) throw oaprog::ConfigError("run configuration must be a JSON object");
    ctx.seed = seed_flag ? *seed_flag : ctx.config.value("seed", std::uint64_t{0});
    ctx.config["seed"] = ctx.seed;
    ctx.out_dir = out_dir;
    fs::create_directories(ctx.out_dir);
    ctx.workers = oaprog::resolve_workers(workers_flag);
    ctx.param_hash = hash_parameters(ctx.config);
    return ctx;
}

std::string artifact_path(const RunContext& ctx, const std::string& name) {
    return (fs::path(ctx.out_dir) / name).string();
}

json stamp(const RunContext& ctx, json j) {
    j["version"] = oaprog::kArtifactVersion;
    j["config_hash"] = ctx.param_hash;
    j["seed"] = ctx.seed;
    return j;
}

void write_error_record(const std::string& out_dir, const std::string& type,
                        const std::string& message) {
    if (out_dir.empty()) return;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) return;
    std::ofstream out(fs::path(out_dir) / "error.json", std::ios::binary);
    if (!out) return;
    out << json{{"error", {{"type", type}, {"message", message}}}}.dump(2) << "\n";
}

const json& section(const RunContext& ctx, const std::string& name) {
    static const json empty = json::object();
    auto it = ctx.config.find(name);
    if (it == ctx.config.end()) return empty;
    if (!it->is_object()) throw oaprog::ConfigError("config section '" + name + "' must be an object");
    return *it;
}

std::string required_path(const RunContext& ctx, const std::string& key) {
    auto it = ctx.config.find(key);
    if (it == ctx.config.end() || !it->is_string())
        throw oaprog::ConfigError("config needs a '" + key + "' file path");
    return it->get<std::string>();
}

oaprog::ForestConfig forest_from_config(const json& j) {
    oaprog::ForestConfig c;
    c.n_trees = j.value("n_trees", c.n_trees);
    c.max_depth = j.value("max_depth", c.max_depth);
    if (j.contains("criterion")) {
        auto crit = oaprog::parse_criterion(j.at("criterion").get<std::string>());
        if (!crit) throw oaprog::ConfigError("unknown criterion '" +
                                             j.at("criterion").get<std::string>() + "'");
        c.criterion = *crit;
    }
    c.min_samples_split = j.value("min_samples_split", c.min_samples_split);
    c.features_per_split = j.value("features_per_split", c.features_per_split);
    c.bootstrap = j.value("bootstrap", c.bootstrap);
    c.validate();
    return c;
}

oaprog::StrategyKind strategy_from_config(const RunContext& ctx) {
    std::string name = ctx.config.value("strategy", "duo");
    auto kind = oaprog::parse_strategy(name);
    if (!kind) throw oaprog::ConfigError("unknown strategy '" + name + "'");
    return *kind;
}

oaprog::LabelOptions labeling_from_config(const RunContext& ctx) {
    const json& j = section(ctx, "labeling");
    oaprog::LabelOptions o;
    o.sustained_rise_per_year = j.value("sustained_rise_per_year", o.sustained_rise_per_year);
    o.sustained_rise_floor = j.value("sustained_rise_floor", o.sustained_rise_floor);
    o.rapid_rise_per_year = j.value("rapid_rise_per_year", o.rapid_rise_per_year);
    o.rapid_rise_floor = j.value("rapid_rise_floor", o.rapid_rise_floor);
    o.high_start = j.value("high_start", o.high_start);
    o.high_end = j.value("high_end", o.high_end);
    o.narrowing_rate = j.value("narrowing_rate", o.narrowing_rate);
    std::string src = j.value("pain_source", "combined_max");
    if (src == "combined_max") o.pain_source = oaprog::PainSource::combined_max;
    else if (src == "per_knee") o.pain_source = oaprog::PainSource::per_knee;
    else throw oaprog::ConfigError("unknown pain_source '" + src + "'");
    return o;
}

oaprog::PreprocessPlan plan_from_config(const RunContext& ctx) {
    const json& j = section(ctx, "preprocess");
    oaprog::PreprocessPlan p;
    p.attr_missing_threshold = j.value("attr_missing_threshold", p.attr_missing_threshold);
    p.row_missing_threshold = j.value("row_missing_threshold", p.row_missing_threshold);
    p.scaling = j.value("scaling", p.scaling);
    p.validate();
    return p;
}

oaprog::CvOptions cv_from_config(const RunContext& ctx) {
    const json& j = section(ctx, "cv");
    oaprog::CvOptions o;
    o.n_repeats = j.value("repeats", o.n_repeats);
    o.k = j.value("k", o.k);
    o.n_seeds = j.value("seeds", o.n_seeds);
    o.master_seed = ctx.seed;
    o.workers = ctx.workers;
    o.plan = plan_from_config(ctx);
    o.validate();
    return o;
}

struct PipelineData {
    oaprog::CohortTable table;
    std::size_t excluded_after_replacement = 0;
    oaprog::LabelSummary labels;
    oaprog::Dataset dataset;  // filtered, ready for fold-level transforms
    oaprog::FilterReport filter;
};

PipelineData load_pipeline(const RunContext& ctx) {
    PipelineData p;
    p.table = oaprog::load_cohort_files(required_path(ctx, "data"), required_path(ctx, "metadata"));
    p.table = oaprog::apply_fill_forward(p.table);
    auto replacements = oaprog::replacement_events(p.table);
    oaprog::BuildPeriodsOptions popts;
    const json& pj = section(ctx, "periods");
    popts.min_duration_years = pj.value("min_duration_years", popts.min_duration_years);
    popts.keep_period_ending_at_replacement =
        pj.value("keep_period_ending_at_replacement", popts.keep_period_ending_at_replacement);
    auto built = oaprog::build_periods(p.table, replacements, popts);
    p.excluded_after_replacement = built.excluded_after_replacement;
    p.labels = oaprog::label_periods(built.periods, labeling_from_config(ctx));
    if (p.labels.labeled.empty()) throw oaprog::DataError("no labelable periods in the cohort");
    auto raw = oaprog::assemble_dataset(p.table, p.labels.labeled);
    p.dataset = oaprog::filter_dataset(raw, plan_from_config(ctx), &p.filter);
    return p;
}

json summary_to_json(const oaprog::ScoreSummary& s) {
    return json{{"median_f1", s.median_score},
                {"ci_lo", s.ci_lo},
                {"ci_hi", s.ci_hi},
                {"mad", s.mad},
                {"repeat_medians", s.repeat_medians}};
}

json label_counts_json(const PipelineData& p) {
    json counts = json::object();
    for (std::size_t c = 0; c < oaprog::kNumClasses; ++c)
        counts[oaprog::class_name(static_cast<oaprog::ProgressionClass>(c))] =
            p.labels.class_counts[c];
    return counts;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw oaprog::DataError("cannot write " + path);
    out << text;
}

std::string fmt(double v) { return oaprog::format_double(v); }

// -------------------------------------------------------------- synth

int cmd_synth(const RunContext& ctx) {
    const json& j = section(ctx, "synth");
    oaprog::SynthConfig cfg;
    cfg.n_patients = j.value("n_patients", cfg.n_patients);
    if (j.contains("timepoints")) cfg.timepoints = j.at("timepoints").get<std::vector<int>>();
    cfg.n_informative = j.value("n_informative", cfg.n_informative);
    cfg.n_noise = j.value("n_noise", cfg.n_noise);
    if (j.contains("class_fractions")) {
        auto f = j.at("class_fractions").get<std::vector<double>>();
        if (f.size() != oaprog::kNumClasses)
            throw oaprog::ConfigError("class_fractions needs exactly 4 entries");
        std::copy(f.begin(), f.end(), cfg.class_fractions.begin());
    }
    cfg.missing_rate = j.value("missing_rate", cfg.missing_rate);
    cfg.p_signal = j.value("p_signal", cfg.p_signal);
    cfg.s_signal = j.value("s_signal", cfg.s_signal);
    cfg.replacement_rate = j.value("replacement_rate", cfg.replacement_rate);
    cfg.exclude_outcome_features = j.value("exclude_outcome_features", cfg.exclude_outcome_features);
    cfg.master_seed = ctx.seed;
    cfg.validate();

    auto result = oaprog::generate_cohort(cfg);

    {
        std::ofstream out(artifact_path(ctx, "cohort.csv"), std::ios::binary);
        if (!out) throw oaprog::DataError("cannot write cohort.csv");
        oaprog::save_cohort_csv(out, result.table);
    }
    {
        std::ofstream out(artifact_path(ctx, "cohort.meta"), std::ios::binary);
        if (!out) throw oaprog::DataError("cannot write cohort.meta");
        oaprog::save_metadata(out, result.table);
    }
    {
        std::ofstream out(artifact_path(ctx, "truth.csv"), std::ios::binary);
        if (!out) throw oaprog::DataError("cannot write truth.csv");
        oaprog::write_csv(out, oaprog::sidecar_table(result));
    }
    json fractions = json::array();
    for (double f : result.realized_fractions) fractions.push_back(f);
    oaprog::write_json_file(
        artifact_path(ctx, "synth_report.json"),
        stamp(ctx, json{{"n_patients", cfg.n_patients},
                        {"realized_fractions", std::move(fractions)},
                        {"calibration_iterations", result.calibration_iterations},
                        {"sidecar_rows", result.sidecar.size()}}));
    return 0;
}

// -------------------------------------------------------------- label

int cmd_label(const RunContext& ctx) {
    auto p = load_pipeline(ctx);

    std::string csv = "patient,start_tp,end_tp,duration_years,label\n";
    for (const auto& lp : p.labels.labeled) {
        csv += lp.period.patient_id;
        csv += ',' + std::to_string(lp.period.start_tp);
        csv += ',' + std::to_string(lp.period.end_tp);
        csv += ',' + fmt(lp.period.duration_years);
        csv += ',';
        csv += oaprog::class_name(lp.label);
        csv += '\n';
    }
    write_text_file(artifact_path(ctx, "periods.csv"), csv);

    json exclusions = json::object();
    for (const auto& [reason, count] : p.labels.exclusions)
        exclusions[oaprog::exclusion_name(reason)] = count;
    oaprog::write_json_file(
        artifact_path(ctx, "label_report.json"),
        stamp(ctx, json{{"labeled_periods", p.labels.labeled.size()},
                        {"class_counts", label_counts_json(p)},
                        {"exclusions", std::move(exclusions)},
                        {"excluded_after_replacement", p.excluded_after_replacement}}));
    return 0;
}

// -------------------------------------------------------------- preprocess

int cmd_preprocess(const RunContext& ctx) {
    auto p = load_pipeline(ctx);
    std::vector<std::size_t> all(p.dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto transform = oaprog::fit_transform(p.dataset, all, plan_from_config(ctx));
    auto rows = oaprog::apply_transform_rows(transform, p.dataset, all);

    std::string csv;
    for (const auto& name : transform.feature_names) csv += name + ',';
    csv += "label\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (double v : rows[i]) csv += fmt(v) + ',';
        csv += oaprog::class_name(p.dataset.labels[i]);
        csv += '\n';
    }
    write_text_file(artifact_path(ctx, "design_matrix.csv"), csv);
    oaprog::write_json_file(artifact_path(ctx, "transform.json"),
                            stamp(ctx, oaprog::transform_to_json(transform)));

    json dropped = json::array();
    for (const auto& [name, reason] : p.filter.dropped_attrs)
        dropped.push_back(json{{"attribute", name}, {"reason", oaprog::drop_reason_name(reason)}});
    oaprog::write_json_file(
        artifact_path(ctx, "filter_report.json"),
        stamp(ctx, json{{"dropped_attributes", std::move(dropped)},
                        {"dropped_rows", p.filter.dropped_rows},
                        {"kept_rows", p.dataset.size()},
                        {"kept_attributes", p.dataset.attrs.size()},
                        {"feature_columns", transform.feature_names.size()}}));
    return 0;
}

// -------------------------------------------------------------- train

int cmd_train(const RunContext& ctx) {
    auto p = load_pipeline(ctx);
    std::vector<std::size_t> all(p.dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto transform = oaprog::fit_transform(p.dataset, all, plan_from_config(ctx));
    auto rows = oaprog::apply_transform_rows(transform, p.dataset, all);

    auto kind = strategy_from_config(ctx);
    auto config = forest_from_config(section(ctx, "forest"));
    config.seed = oaprog::derive_seed(ctx.seed, "train");
    auto weights = oaprog::make_weight_context(p.dataset.labels);
    auto model = oaprog::train_strategy(kind, rows, p.dataset.labels, config, weights, ctx.workers);

    json artifact = oaprog::strategy_to_json(model);
    artifact["config_hash"] = ctx.param_hash;
    artifact["seed"] = ctx.seed;
    artifact["feature_names"] = transform.feature_names;
    artifact["transform"] = oaprog::transform_to_json(transform);
    oaprog::write_json_file(artifact_path(ctx, "model.json"), artifact);
    return 0;
}

// -------------------------------------------------------------- evaluate / tune

void write_scores_csv(const RunContext& ctx, const std::string& name,
                      const std::vector<oaprog::ForestConfig>& grid,
                      const std::vector<oaprog::ScoreSummary>& summaries) {
    std::string csv = "config,n_trees,max_depth,criterion,median_f1,ci_lo,ci_hi,mad\n";
    for (std::size_t c = 0; c < grid.size(); ++c) {
        csv += std::to_string(c);
        csv += ',' + std::to_string(grid[c].n_trees);
        csv += ',' + std::to_string(grid[c].max_depth);
        csv += ',';
        csv += oaprog::criterion_name(grid[c].criterion);
        csv += ',' + fmt(summaries[c].median_score);
        csv += ',' + fmt(summaries[c].ci_lo);
        csv += ',' + fmt(summaries[c].ci_hi);
        csv += ',' + fmt(summaries[c].mad);
        csv += '\n';
    }
    write_text_file(artifact_path(ctx, name), csv);
}

int cmd_evaluate(const RunContext& ctx) {
    auto p = load_pipeline(ctx);
    auto kind = strategy_from_config(ctx);
    auto config = forest_from_config(section(ctx, "forest"));
    auto opts = cv_from_config(ctx);

    auto store = oaprog::repeated_cv(p.dataset, kind, config, opts);
    auto summary = oaprog::score_configuration(store, 0);

    oaprog::write_json_file(artifact_path(ctx, "store.json"),
                            stamp(ctx, oaprog::store_to_json(store)));
    write_scores_csv(ctx, "scores.csv", {config}, {summary});
    oaprog::write_json_file(
        artifact_path(ctx, "score_report.json"),
        stamp(ctx, json{{"strategy", oaprog::strategy_name(kind)},
                        {"forest", oaprog::forest_config_to_json(config)},
                        {"repeats", opts.n_repeats},
                        {"k", opts.k},
                        {"seeds", opts.n_seeds},
                        {"fold_redraws", store.fold_redraws},
                        {"summary", summary_to_json(summary)},
                        {"class_counts", label_counts_json(p)}}));
    return 0;
}

int cmd_tune(const RunContext& ctx) {
    auto p = load_pipeline(ctx);
    auto kind = strategy_from_config(ctx);
    auto opts = cv_from_config(ctx);

    std::vector<oaprog::ForestConfig> grid;
    if (ctx.config.contains("grid")) {
        for (const auto& g : ctx.config.at("grid")) grid.push_back(forest_from_config(g));
        if (grid.empty()) throw oaprog::ConfigError("grid must not be empty");
    } else {
        grid = oaprog::default_tuning_grid();
    }

    auto result = oaprog::tune_grid(p.dataset, kind, std::move(grid), opts);

    oaprog::write_json_file(artifact_path(ctx, "store.json"),
                            stamp(ctx, oaprog::store_to_json(result.store)));
    write_scores_csv(ctx, "tune_scores.csv", result.grid, result.summaries);
    json configs = json::array();
    for (std::size_t c = 0; c < result.grid.size(); ++c)
        configs.push_back(json{{"config", oaprog::forest_config_to_json(result.grid[c])},
                               {"summary", summary_to_json(result.summaries[c])}});
    oaprog::write_json_file(
        artifact_path(ctx, "tune_report.json"),
        stamp(ctx, json{{"strategy", oaprog::strategy_name(kind)},
                        {"best_index", result.best_index},
                        {"best_config", oaprog::forest_config_to_json(result.grid[result.best_index])},
                        {"best_summary", summary_to_json(result.summaries[result.best_index])},
                        {"configurations", std::move(configs)}}));
    return 0;
}

// -------------------------------------------------------------- bbc

int cmd_bbc(const RunContext& ctx, const std::string& store_flag) {
    const json& j = section(ctx, "bbc");
    std::string store_path = !store_flag.empty() ? store_flag
                             : j.contains("store") ? j.at("store").get<std::string>()
                                                   : artifact_path(ctx, "store.json");
    auto store = oaprog::store_from_json(oaprog::read_json_file(store_path));
    std::size_t n_boot = j.value("bootstraps", std::size_t{500});
    auto result = oaprog::bbc_cv(store, n_boot, oaprog::derive_seed(ctx.seed, "bbc"));

    std::vector<double> naive(store.n_configs);
    double best_naive = 0;
    for (std::size_t c = 0; c < store.n_configs; ++c) {
        naive[c] = oaprog::score_configuration(store, c).median_score;
        best_naive = std::max(best_naive, naive[c]);
    }
    oaprog::write_json_file(
        artifact_path(ctx, "bbc_report.json"),
        stamp(ctx, json{{"bootstraps", n_boot},
                        {"estimate", result.estimate},
                        {"ci_lo", result.ci_lo},
                        {"ci_hi", result.ci_hi},
                        {"winner_counts", result.winner_counts},
                        {"naive_best_score", best_naive},
                        {"naive_scores", naive}}));
    return 0;
}

// -------------------------------------------------------------- curve

int cmd_curve(const RunContext& ctx) {
    auto p = load_pipeline(ctx);
    auto kind = strategy_from_config(ctx);
    auto config = forest_from_config(section(ctx, "forest"));

    oaprog::CurveOptions copts;
    copts.cv = cv_from_config(ctx);
    const json& j = section(ctx, "curve");
    if (j.contains("fractions")) copts.fractions = j.at("fractions").get<std::vector<double>>();
    std::string mode = j.value("mode", "full_imbalanced");
    if (mode == "full_imbalanced") copts.mode = oaprog::CurveMode::full_imbalanced;
    else if (mode == "balanced_downsample") copts.mode = oaprog::CurveMode::balanced_downsample;
    else throw oaprog::ConfigError("unknown curve mode '" + mode + "'");
    copts.n_samples = j.value("n_samples", copts.n_samples);
    copts.balanced_per_class = j.value("balanced_per_class", copts.balanced_per_class);

    auto points = oaprog::learning_curve(p.dataset, kind, config, copts);

    std::string csv = "fraction,median_f1,ci_lo,ci_hi,mad,min,max\n";
    json rows = json::array();
    for (const auto& pt : points) {
        csv += fmt(pt.fraction) + ',' + fmt(pt.summary.median_score) + ',' + fmt(pt.summary.ci_lo) +
               ',' + fmt(pt.summary.ci_hi) + ',' + fmt(pt.summary.mad) + ',' + fmt(pt.min_score) +
               ',' + fmt(pt.max_score) + '\n';
        rows.push_back(json{{"fraction", pt.fraction},
                            {"summary", summary_to_json(pt.summary)},
                            {"min", pt.min_score},
                            {"max", pt.max_score}});
    }
    write_text_file(artifact_path(ctx, "curve.csv"), csv);
    oaprog::write_json_file(artifact_path(ctx, "curve_report.json"),
                            stamp(ctx, json{{"strategy", oaprog::strategy_name(kind)},
                                            {"mode", mode},
                                            {"forest", oaprog::forest_config_to_json(config)},
                                            {"points", std::move(rows)}}));
    return 0;
}

// -------------------------------------------------------------- rfe

int cmd_rfe(const RunContext& ctx) {
    auto p = load_pipeline(ctx);
    auto kind = strategy_from_config(ctx);
    auto config = forest_from_config(section(ctx, "forest"));
    auto plan = plan_from_config(ctx);
    const json& j = section(ctx, "rfe");
    std::size_t repeats = j.value("repeats", std::size_t{10});
    std::size_t k = j.value("k", std::size_t{10});
    std::size_t inner_k = j.value("inner_k", std::size_t{3});
    if (repeats == 0 || k < 2) throw oaprog::ConfigError("rfe needs repeats >= 1 and k >= 2");

    std::vector<int> labels;
    for (auto c : p.dataset.labels) labels.push_back(static_cast<int>(c));
    auto weights = oaprog::make_weight_context(p.dataset.labels);

    std::size_t redraws = 0;
    std::vector<std::vector<int>> fold_of(repeats);
    for (std::size_t r = 0; r < repeats; ++r)
        fold_of[r] = oaprog::detail::draw_complete_folds(labels, k, ctx.seed, r, 100, redraws);

    std::vector<std::pair<oaprog::RfeTrace, std::vector<std::string>>> traces(repeats * k);
    oaprog::parallel_for(repeats * k, ctx.workers, [&](std::size_t item) {
        std::size_t r = item / k, f = item % k;
        std::vector<std::size_t> train_ix;
        for (std::size_t i = 0; i < p.dataset.size(); ++i)
            if (fold_of[r][i] != static_cast<int>(f)) train_ix.push_back(i);
        auto transform = oaprog::fit_transform(p.dataset, train_ix, plan);
        auto rows = oaprog::apply_transform_rows(transform, p.dataset, train_ix);
        std::vector<oaprog::ProgressionClass> train_labels;
        for (auto i : train_ix) train_labels.push_back(p.dataset.labels[i]);
        auto cfg = config;
        cfg.seed = 0;  // per-step seeds are derived inside from the trace seed
        traces[item] = {oaprog::rfe_select(rows, train_labels, kind, cfg, weights,
                                           oaprog::derive_seed(ctx.seed, "rfe", r, f), inner_k),
                        transform.feature_names};
    });

    std::string trace_csv = "repeat,fold,subset_size,inner_f1\n";
    for (std::size_t item = 0; item < traces.size(); ++item) {
        const auto& trace = traces[item].first;
        for (std::size_t s = 0; s < trace.subset_sizes.size(); ++s)
            trace_csv += std::to_string(item / k) + ',' + std::to_string(item % k) + ',' +
                         std::to_string(trace.subset_sizes[s]) + ',' +
                         fmt(trace.inner_scores[s]) + '\n';
    }
    write_text_file(artifact_path(ctx, "rfe_trace.csv"), trace_csv);

    auto freq = oaprog::selection_frequency(traces);
    std::string freq_csv = "feature,chosen,rounds\n";
    for (const auto& [name, count] : freq)
        freq_csv += name + ',' + std::to_string(count) + ',' + std::to_string(repeats * k) + '\n';
    write_text_file(artifact_path(ctx, "rfe_frequency.csv"), freq_csv);

    json freq_json = json::object();
    for (const auto& [name, count] : freq) freq_json[name] = count;
    oaprog::write_json_file(
        artifact_path(ctx, "rfe_report.json"),
        stamp(ctx, json{{"strategy", oaprog::strategy_name(kind)},
                        {"repeats", repeats},
                        {"k", k},
                        {"inner_k", inner_k},
                        {"rounds", repeats * k},
                        {"selection_frequency", std::move(freq_json)}}));
    return 0;
}

// -------------------------------------------------------------- explain

int cmd_explain(const RunContext& ctx) {
    auto p = load_pipeline(ctx);
    auto kind = strategy_from_config(ctx);
    auto plan = plan_from_config(ctx);
    std::vector<std::size_t> all(p.dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto transform = oaprog::fit_transform(p.dataset, all, plan);
    auto rows = oaprog::apply_transform_rows(transform, p.dataset, all);

    oaprog::StrategyModel model;
    const json& j = section(ctx, "explain");
    if (j.contains("model")) {
        model = oaprog::strategy_from_json(oaprog::read_json_file(j.at("model").get<std::string>()));
        kind = model.kind;
    } else {
        auto config = forest_from_config(section(ctx, "forest"));
        config.seed = oaprog::derive_seed(ctx.seed, "train");
        model = oaprog::train_strategy(kind, rows, p.dataset.labels,
                                       config, oaprog::make_weight_context(p.dataset.labels),
                                       ctx.workers);
    }

    std::size_t max_instances = j.value("max_instances", std::size_t{0});
    std::size_t n = max_instances == 0 ? rows.size() : std::min(max_instances, rows.size());

    // one attribution stream per explained scalar output
    struct Target {
        std::string id;
        const oaprog::RandomForestModel* forest;
        oaprog::OutputSelector sel;
    };
    std::vector<Target> targets;
    switch (kind) {
        case oaprog::StrategyKind::duo:
            targets.push_back({"P", &model.pain_forest(), {0, 1, "P"}});
            targets.push_back({"S", &model.structure_forest(), {0, 1, "S"}});
            break;
        case oaprog::StrategyKind::multilabel:
            targets.push_back({"P", &model.forests[0], {0, 1, "P"}});
            targets.push_back({"S", &model.forests[0], {1, 1, "S"}});
            break;
        case oaprog::StrategyKind::one_vs_rest:
            for (std::size_t c = 0; c < oaprog::kNumClasses; ++c) {
                std::string id = oaprog::class_name(static_cast<oaprog::ProgressionClass>(c));
                targets.push_back({id, &model.forests[c], {0, 1, id}});
            }
            break;
        case oaprog::StrategyKind::single:
            for (std::size_t c = 0; c < oaprog::kNumClasses; ++c) {
                std::string id = oaprog::class_name(static_cast<oaprog::ProgressionClass>(c));
                targets.push_back({id, &model.forests[0], {0, c, id}});
            }
            break;
    }

    std::string impact_csv = "output,rank,feature,mean_abs_phi\n";
    std::string scatter_csv = "output,feature,instance,value,phi\n";
    json report_targets = json::array();
    for (const auto& target : targets) {
        std::vector<oaprog::ShapAttribution> attributions(n);
        std::vector<std::vector<double>> instances(rows.begin(), rows.begin() + n);
        oaprog::parallel_for(n, ctx.workers, [&](std::size_t i) {
            attributions[i] = oaprog::forest_shap(*target.forest, rows[i], target.sel);
        });
        auto impact = oaprog::summarize_impact(attributions, instances);
        for (std::size_t rank = 0; rank < impact.ranking.size(); ++rank) {
            std::size_t f = impact.ranking[rank];
            impact_csv += target.id + ',' + std::to_string(rank) + ',' +
                          transform.feature_names[f] + ',' + fmt(impact.mean_abs_phi[f]) + '\n';
        }
        for (std::size_t f = 0; f < impact.scatter.size(); ++f)
            for (const auto& rec : impact.scatter[f])
                scatter_csv += target.id + ',' + transform.feature_names[f] + ',' +
                               std::to_string(rec.instance) + ',' + fmt(rec.value) + ',' +
                               fmt(rec.phi) + '\n';
        json top = json::array();
        for (std::size_t rank = 0; rank < std::min<std::size_t>(10, impact.ranking.size()); ++rank) {
            std::size_t f = impact.ranking[rank];
            top.push_back(json{{"feature", transform.feature_names[f]},
                               {"mean_abs_phi", impact.mean_abs_phi[f]}});
        }
        report_targets.push_back(json{{"output", target.id},
                                      {"base_value", attributions.empty() ? 0.0 : attributions[0].base_value},
                                      {"top_features", std::move(top)}});
    }
    write_text_file(artifact_path(ctx, "impact.csv"), impact_csv);
    write_text_file(artifact_path(ctx, "scatter.csv"), scatter_csv);
    oaprog::write_json_file(artifact_path(ctx, "impact_report.json"),
                            stamp(ctx, json{{"strategy", oaprog::strategy_name(kind)},
                                            {"instances", n},
                                            {"targets", std::move(report_targets)}}));
    return 0;
}

// -------------------------------------------------------------- select

json selection_report_json(const oaprog::SelectionReport& rep) {
    json counts = json::object(), shares = json::object(), recalls = json::object();
    for (std::size_t c = 0; c < oaprog::kNumClasses; ++c) {
        const char* name = oaprog::class_name(static_cast<oaprog::ProgressionClass>(c));
        counts[name] = rep.counts[c];
        shares[name] = rep.shares[c];
        recalls[name] = rep.recalls[c];
    }
    return json{{"counts", std::move(counts)},
                {"shares", std::move(shares)},
                {"recalls", std::move(recalls)},
                {"selected_total", rep.selected_total},
                {"unevaluable_total", rep.unevaluable_total},
                {"progressive_recall", rep.progressive_recall}};
}

int cmd_select(const RunContext& ctx, const std::string& mode, bool match_count,
               std::optional<std::size_t> target_flag, const std::string& store_flag,
               std::optional<std::size_t> config_index_flag) {
    auto p = load_pipeline(ctx);
    const json& j = section(ctx, "select");

    std::vector<oaprog::ConventionalInputs> inputs;
    inputs.reserve(p.dataset.size());
    for (std::size_t i = 0; i < p.dataset.size(); ++i)
        inputs.push_back(oaprog::conventional_inputs(p.dataset, i));
    auto conventional = oaprog::conventional_select(inputs);

    oaprog::SelectionMask mask;
    json detail = json::object();
    if (mode == "conventional") {
        mask = conventional;
    } else {
        std::string store_path = !store_flag.empty() ? store_flag
                                 : j.contains("store") ? j.at("store").get<std::string>()
                                                       : artifact_path(ctx, "store.json");
        auto store = oaprog::store_from_json(oaprog::read_json_file(store_path));
        if (store.n_instances != p.dataset.size())
            throw oaprog::DataError("prediction store does not match the dataset");
        for (std::size_t i = 0; i < store.n_instances; ++i)
            if (store.truth[i] != static_cast<int>(p.dataset.labels[i]))
                throw oaprog::DataError("prediction store truth disagrees with the dataset labels");
        std::size_t config_index = config_index_flag ? *config_index_flag
                                                     : j.value("config_index", std::size_t{0});
        if (config_index >= store.n_configs)
            throw oaprog::ConfigError("config_index out of range");

        // decisions come from the median-scoring run of the store
        auto [repeat, seed] = oaprog::median_model(store, config_index);
        detail["config_index"] = config_index;
        detail["median_repeat"] = repeat;
        detail["median_seed"] = seed;

        if (mode == "ml-l") {
            std::vector<oaprog::ProgressionClass> predicted;
            predicted.reserve(store.n_instances);
            for (std::size_t i = 0; i < store.n_instances; ++i)
                predicted.push_back(static_cast<oaprog::ProgressionClass>(
                    store.at(config_index, repeat, seed, i).pred));
            mask = oaprog::ml_label_select(predicted);
        } else if (mode == "ml-p") {
            std::size_t target;
            if (target_flag) target = *target_flag;
            else if (!match_count && j.contains("target_count"))
                target = j.at("target_count").get<std::size_t>();
            else {
                target = 0;  // count parity with the conventional arm
                for (bool s : conventional.selected) target += s ? 1 : 0;
            }
            std::vector<std::pair<double, double>> probabilities;
            probabilities.reserve(store.n_instances);
            for (std::size_t i = 0; i < store.n_instances; ++i) {
                const auto& e = store.at(config_index, repeat, seed, i);
                probabilities.emplace_back(e.p_pain, e.p_structure);
            }
            mask = oaprog::ml_prob_select(probabilities, target);
            detail["target_count"] = target;
        } else {
            throw oaprog::ConfigError("unknown selection mode '" + mode + "'");
        }
    }

    auto report = oaprog::selection_report(mask, p.dataset.labels);

    std::string csv = "patient,start_tp,end_tp,label,selected,unevaluable\n";
    for (std::size_t i = 0; i < p.dataset.size(); ++i) {
        csv += p.dataset.patient_ids[i];
        csv += ',' + std::to_string(p.dataset.start_tp[i]);
        csv += ',' + std::to_string(p.dataset.end_tp[i]);
        csv += ',';
        csv += oaprog::class_name(p.dataset.labels[i]);
        csv += mask.selected[i] ? ",1" : ",0";
        csv += mask.unevaluable[i] ? ",1" : ",0";
        csv += '\n';
    }
    write_text_file(artifact_path(ctx, "selection.csv"), csv);
    json out{{"mode", mode}, {"report", selection_report_json(report)}};
    if (!detail.empty()) out["model"] = std::move(detail);
    out["conventional_total"] = [&] {
        std::size_t n = 0;
        for (bool s : conventional.selected) n += s ? 1 : 0;
        return n;
    }();
    oaprog::write_json_file(artifact_path(ctx, "selection_report.json"), stamp(ctx, out));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"longitudinal knee-osteoarthritis progression prediction pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path, out_dir = ".";
    std::optional<std::uint64_t> seed_flag;
    unsigned workers_flag = 0;
    std::uint64_t seed_value = 0;
    app.add_option("--config", config_path, "run configuration (JSON)");
    auto* seed_opt = app.add_option("--seed", seed_value, "master seed (overrides the config)");
    app.add_option("--out", out_dir, "output directory for artifacts");
    app.add_option("--workers", workers_flag,
                   "worker threads (default: OAPROG_WORKERS or hardware)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    auto* label = app.add_subcommand("label", "build and label observation periods");
    auto* preprocess = app.add_subcommand("preprocess", "emit the encoded design matrix");
    auto* train = app.add_subcommand("train", "train a model on the full dataset");
    auto* evaluate = app.add_subcommand("evaluate", "repeated stratified cross-validation");
    auto* curve = app.add_subcommand("curve", "learning-curve experiment");
    auto* tune = app.add_subcommand("tune", "grid search over forest configurations");
    auto* bbc = app.add_subcommand("bbc", "bootstrap bias correction of a tuning store");
    auto* rfe = app.add_subcommand("rfe", "recursive feature elimination per outer fold");
    auto* explain = app.add_subcommand("explain", "per-instance attribution report");
    auto* select = app.add_subcommand("select", "patient-selection simulation");

    std::string bbc_store, select_store, select_mode = "conventional";
    bool match_count = false;
    std::optional<std::size_t> select_target, select_config_index;
    std::size_t target_value = 0, config_index_value = 0;
    bbc->add_option("--store", bbc_store, "prediction store to correct");
    select->add_option("--mode", select_mode, "conventional | ml-l | ml-p");
    select->add_flag("--match-count", match_count,
                     "size the ml-p selection to the conventional count");
    auto* target_opt = select->add_option("--target", target_value, "ml-p selection size");
    select->add_option("--store", select_store, "prediction store holding the model runs");
    auto* cfgix_opt = select->add_option("--config-index", config_index_value,
                                         "store configuration to read predictions from");

    CLI11_PARSE(app, argc, argv);
    if (seed_opt->count()) seed_flag = seed_value;
    if (target_opt->count()) select_target = target_value;
    if (cfgix_opt->count()) select_config_index = config_index_value;

    try {
        RunContext ctx = make_context(config_path, seed_flag, out_dir, workers_flag);
        if (synth->parsed()) return cmd_synth(ctx);
        if (label->parsed()) return cmd_label(ctx);
        if (preprocess->parsed()) return cmd_preprocess(ctx);
        if (train->parsed()) return cmd_train(ctx);
        if (evaluate->parsed()) return cmd_evaluate(ctx);
        if (curve->parsed()) return cmd_curve(ctx);
        if (tune->parsed()) return cmd_tune(ctx);
        if (bbc->parsed()) return cmd_bbc(ctx, bbc_store);
        if (rfe->parsed()) return cmd_rfe(ctx);
        if (explain->parsed()) return cmd_explain(ctx);
        if (select->parsed())
            return cmd_select(ctx, select_mode, match_count, select_target, select_store,
                              select_config_index);
        return 2;
    } catch (const oaprog::ConfigError& e) {
        write_error_record(out_dir, "config", e.what());
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        write_error_record(out_dir, "stage", e.what());
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
