// svmorph: supervoxel-based morphological regression pipeline.
//
// Subcommands: phantom, slic, features, fit, predict, evaluate, saliency,
// ablate, qc-filter, report. Every run writes a run.json echo of the
// resolved configuration next to its outputs.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

#include "svmorph/csv.h"
#include "svmorph/errors.h"
#include "svmorph/eval.h"
#include "svmorph/features.h"
#include "svmorph/model.h"
#include "svmorph/nrrd.h"
#include "svmorph/phantom.h"
#include "svmorph/pipeline.h"
#include "svmorph/saliency.h"
#include "svmorph/slic.h"
#include "svmorph/volume.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace svmorph;

namespace {

struct GlobalOptions {
    int threads = 1;
};

void write_run_json(const std::string& dir_or_file, const std::string& subcommand,
                    const json& options, const std::string& config_echo) {
    fs::path base(dir_or_file);
    fs::path path = fs::is_directory(base) || base.extension().empty()
                        ? base / "run.json"
                        : base.parent_path() / (base.stem().string() + ".run.json");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());

    json run;
    run["subcommand"] = subcommand;
    run["options"] = options;
    run["config"] = config_echo;
    std::ofstream out(path);
    out << run.dump(2) << "\n";
}

std::string metrics_value(double v) {
    return std::isnan(v) ? "nan" : csv_num(v);
}

void write_metrics_csv(const std::string& path, const MetricsReport& report,
                       const std::vector<int>& fold_of) {
    std::vector<int> fold_sizes(report.per_fold.size(), 0);
    for (int f : fold_of) ++fold_sizes[static_cast<std::size_t>(f)];

    CsvTable t;
    t.header = {"fold", "n", "mae", "r2", "spearman"};
    for (std::size_t f = 0; f < report.per_fold.size(); ++f) {
        const Metrics& m = report.per_fold[f];
        t.rows.push_back({csv_int(static_cast<long long>(f)), csv_int(fold_sizes[f]),
                          metrics_value(m.mae), metrics_value(m.r2),
                          metrics_value(m.spearman)});
    }
    t.rows.push_back({"pooled", csv_int(static_cast<long long>(fold_of.size())),
                      metrics_value(report.pooled.mae), metrics_value(report.pooled.r2),
                      metrics_value(report.pooled.spearman)});
    write_csv(path, t);
}

void write_predictions_csv(const std::string& path, const std::vector<std::string>& ids,
                           const std::vector<int>& fold_of, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& yhat) {
    CsvTable t;
    t.header = {"subject", "fold", "y", "yhat"};
    for (std::size_t i = 0; i < ids.size(); ++i)
        t.rows.push_back({ids[i], csv_int(fold_of[i]),
                          csv_num(y(static_cast<Eigen::Index>(i))),
                          csv_num(yhat(static_cast<Eigen::Index>(i)))});
    write_csv(path, t);
}

void write_scatter_csv(const std::string& path, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& yhat) {
    CsvTable t;
    t.header = {"y", "yhat"};
    for (Eigen::Index i = 0; i < y.size(); ++i)
        t.rows.push_back({csv_num(y(i)), csv_num(yhat(i))});
    write_csv(path, t);
}

// Shared model options for fit / evaluate / saliency / ablate.
struct ModelOptions {
    double clip_level = 1.0;
    int n_components = 550;
    bool no_pca = false;
    std::string regressor = "ols";
    int mlp_width = 1;
    std::string mlp_activation = "identity";
    double mlp_lr = 1e-2;
    double mlp_l2 = 1e-3;
    int mlp_batch = 256;
    int mlp_iters = 10000;
    std::uint64_t seed = 0;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--clip", clip_level, "z-score clip level c in sigma units");
        cmd->add_option("--components", n_components, "number of PCA components");
        cmd->add_flag("--no-pca", no_pca, "regress on clipped z-scores directly");
        cmd->add_option("--regressor", regressor, "ols or mlp")
            ->check(CLI::IsMember({"ols", "mlp"}));
        cmd->add_option("--mlp-width", mlp_width, "hidden layer width (1, 8, 16, 32, 64)");
        cmd->add_option("--mlp-activation", mlp_activation,
                        "identity, leaky-relu, cubic or scaled-sigmoid");
        cmd->add_option("--mlp-lr", mlp_lr, "SGD learning rate");
        cmd->add_option("--mlp-l2", mlp_l2, "L2 weight decay");
        cmd->add_option("--mlp-batch", mlp_batch, "SGD batch size");
        cmd->add_option("--mlp-iters", mlp_iters, "SGD iterations");
        cmd->add_option("--seed", seed, "model seed (MLP init and batches)");
    }

    PipelineConfig to_config() const {
        PipelineConfig config;
        config.clip_level = clip_level;
        config.use_pca = !no_pca;
        config.n_components = n_components;
        config.regressor = regressor == "mlp" ? RegressorKind::Mlp : RegressorKind::Ols;
        config.mlp.hidden_width = mlp_width;
        config.mlp.activation = parse_activation(mlp_activation);
        config.mlp.learning_rate = mlp_lr;
        config.mlp.l2 = mlp_l2;
        config.mlp.batch_size = mlp_batch;
        config.mlp.iterations = mlp_iters;
        config.mlp.seed = seed;
        return config;
    }

    json echo() const {
        return json{{"clip", clip_level},
                    {"components", n_components},
                    {"no_pca", no_pca},
                    {"regressor", regressor},
                    {"mlp_width", mlp_width},
                    {"mlp_activation", mlp_activation},
                    {"mlp_lr", mlp_lr},
                    {"mlp_l2", mlp_l2},
                    {"mlp_batch", mlp_batch},
                    {"mlp_iters", mlp_iters},
                    {"seed", seed}};
    }
};

struct SlicOptions {
    int grid_size = 14;
    double proximity = 0.2;
    int max_iters = 10;
    std::uint64_t seed = 0;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--grid-size", grid_size, "initial centroid spacing in voxels");
        cmd->add_option("--proximity", proximity, "spatial proximity factor m");
        cmd->add_option("--max-iters", max_iters, "SLIC iteration cap");
        cmd->add_option("--slic-seed", seed, "SLIC tie-breaking seed");
    }

    SlicParams params() const { return SlicParams{grid_size, proximity, max_iters, seed}; }

    json echo() const {
        return json{{"grid_size", grid_size},
                    {"proximity", proximity},
                    {"max_iters", max_iters},
                    {"slic_seed", seed}};
    }
};

// Restrict a feature matrix to the kinds in a named subset.
FeatureMatrix restrict_to_subset(const FeatureMatrix& fm, const std::string& subset_name) {
    const auto kinds = feature_subset_by_name(subset_name);
    std::vector<Eigen::Index> cols;
    FeatureMatrix out;
    out.subject_ids = fm.subject_ids;
    out.target_names = fm.target_names;
    out.targets = fm.targets;
    for (std::size_t c = 0; c < fm.columns.size(); ++c) {
        const auto& col = fm.columns[c];
        if (col.supervoxel_id < 0 ||
            std::find(kinds.begin(), kinds.end(), col.kind) != kinds.end()) {
            out.columns.push_back(col);
            cols.push_back(static_cast<Eigen::Index>(c));
        }
    }
    out.values.resize(fm.values.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
        out.values.col(static_cast<Eigen::Index>(c)) = fm.values.col(cols[c]);
    return out;
}

FeatureMatrix filter_subjects(const FeatureMatrix& fm, const std::string& subjects_csv) {
    const CsvTable t = read_csv(subjects_csv);
    const std::size_t col = t.column("subject");
    std::set<std::string> keep;
    for (const auto& row : t.rows) keep.insert(row[col]);

    std::vector<Eigen::Index> rows;
    FeatureMatrix out;
    out.columns = fm.columns;
    out.target_names = fm.target_names;
    for (std::size_t i = 0; i < fm.subject_ids.size(); ++i)
        if (keep.count(fm.subject_ids[i])) {
            out.subject_ids.push_back(fm.subject_ids[i]);
            rows.push_back(static_cast<Eigen::Index>(i));
        }
    if (out.subject_ids.empty()) throw DataError("subject filter removed every subject");
    out.values.resize(static_cast<Eigen::Index>(rows.size()), fm.values.cols());
    out.targets.resize(static_cast<Eigen::Index>(rows.size()), fm.targets.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.values.row(static_cast<Eigen::Index>(i)) = fm.values.row(rows[i]);
        out.targets.row(static_cast<Eigen::Index>(i)) = fm.targets.row(rows[i]);
    }
    return out;
}

// Target selection honoring the explicit-baseline alias (predict age from
// the explicit-measurement features).
Eigen::VectorXd target_vector(const FeatureMatrix& fm, const std::string& target) {
    return select_target(fm, target == "explicit-baseline" ? "age" : target);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"supervoxel-based morphological regression pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a key=value config file");

    GlobalOptions global;
    app.add_option("--threads", global.threads, "worker pool size (1 = reference execution)");

    // --- phantom -----------------------------------------------------------
    auto* cmd_phantom = app.add_subcommand("phantom", "generate a synthetic cohort");
    std::string phantom_out;
    PhantomSpec phantom_spec = default_phantom_spec();
    int phantom_dims = 64;
    cmd_phantom->add_option("--out", phantom_out, "output directory")->required();
    cmd_phantom->add_option("--subjects", phantom_spec.cohort_size, "cohort size");
    cmd_phantom->add_option("--cohort-seed", phantom_spec.seed, "cohort seed");
    cmd_phantom->add_option("--dims", phantom_dims, "cubic grid size (default 64)");
    cmd_phantom->add_option("--age-min", phantom_spec.age_min_years, "minimum age (years)");
    cmd_phantom->add_option("--age-max", phantom_spec.age_max_years, "maximum age (years)");
    cmd_phantom->add_option("--density-noise", phantom_spec.density_noise_sigma,
                            "per-subject per-region density offset sigma (HU)");
    cmd_phantom->add_option("--scale-noise", phantom_spec.scale_noise_sigma,
                            "per-subject per-region volume-scale sigma");
    cmd_phantom->add_option("--deform-noise", phantom_spec.deform_noise_amplitude,
                            "smooth deformation noise amplitude (voxels)");

    // --- slic --------------------------------------------------------------
    auto* cmd_slic = app.add_subcommand("slic", "supervoxel segmentation of a template");
    std::string slic_input, slic_out, slic_sizes, slic_mask;
    SlicOptions slic_opts;
    cmd_slic->add_option("--input", slic_input, "template density volume (HU)")->required();
    cmd_slic->add_option("--out", slic_out, "output label volume")->required();
    cmd_slic->add_option("--sizes-csv", slic_sizes, "sidecar label,size csv");
    cmd_slic->add_option("--mask", slic_mask, "eligibility mask (labels > 0)");
    slic_opts.add_to(cmd_slic);

    // --- features ----------------------------------------------------------
    auto* cmd_features = app.add_subcommand("features", "extract per-supervoxel features");
    std::string feat_manifest, feat_out, feat_index_out, feat_sv_out;
    std::string feat_roi = "whole-heart", feat_subset = "all", feat_filter = "own";
    int feat_min_voxels = 50;
    bool feat_explicit = false;
    SlicOptions feat_slic;
    cmd_features->add_option("--manifest", feat_manifest, "cohort manifest.csv")->required();
    cmd_features->add_option("--out", feat_out, "output features csv")->required();
    cmd_features->add_option("--roi", feat_roi, "roi name (see README for the vocabulary)");
    cmd_features->add_option("--subset", feat_subset, "feature subset name");
    cmd_features->add_option("--min-voxels", feat_min_voxels,
                             "minimum in-roi voxels per supervoxel");
    cmd_features->add_option("--jacdet-filter", feat_filter,
                             "IQR channel for stddev jacdet: own or density")
        ->check(CLI::IsMember({"own", "density"}));
    cmd_features->add_option("--index-out", feat_index_out, "retained-supervoxel index csv");
    cmd_features->add_option("--supervoxels-out", feat_sv_out, "save the supervoxel map");
    cmd_features->add_flag("--explicit", feat_explicit,
                           "emit the 12 explicit segment measurements instead");
    feat_slic.add_to(cmd_features);

    // --- fit ----------------------------------------------------------------
    auto* cmd_fit = app.add_subcommand("fit", "fit a pipeline on all rows");
    std::string fit_features, fit_target = "age", fit_out;
    ModelOptions fit_model;
    cmd_fit->add_option("--features", fit_features, "features csv")->required();
    cmd_fit->add_option("--target", fit_target, "target name");
    cmd_fit->add_option("--out", fit_out, "output model file")->required();
    fit_model.add_to(cmd_fit);

    // --- predict -------------------------------------------------------------
    auto* cmd_predict = app.add_subcommand("predict", "predict with a fitted pipeline");
    std::string pred_model, pred_features, pred_out, pred_target = "age";
    cmd_predict->add_option("--model", pred_model, "model file from fit")->required();
    cmd_predict->add_option("--features", pred_features, "features csv")->required();
    cmd_predict->add_option("--target", pred_target, "target column for the y output");
    cmd_predict->add_option("--out", pred_out, "output predictions csv")->required();

    // --- evaluate -------------------------------------------------------------
    auto* cmd_evaluate = app.add_subcommand("evaluate", "cross-validated evaluation");
    std::string eval_features, eval_target = "age", eval_out_dir, eval_subjects;
    int eval_folds = 25;
    std::uint64_t eval_fold_seed = 0;
    ModelOptions eval_model;
    cmd_evaluate->add_option("--features", eval_features, "features csv")->required();
    cmd_evaluate->add_option("--target", eval_target,
                             "age, lvv, rvv, lav, rav, myov, av or explicit-baseline");
    cmd_evaluate->add_option("--out-dir", eval_out_dir, "output directory")->required();
    cmd_evaluate->add_option("--folds", eval_folds, "number of folds");
    cmd_evaluate->add_option("--fold-seed", eval_fold_seed, "fold assignment seed");
    cmd_evaluate->add_option("--subjects", eval_subjects,
                             "csv with a subject column; restricts the rows");
    eval_model.add_to(cmd_evaluate);

    // --- saliency ---------------------------------------------------------------
    auto* cmd_saliency = app.add_subcommand("saliency", "fold-averaged saliency maps");
    std::string sal_features, sal_target = "age", sal_supervoxels, sal_out_dir;
    std::string sal_roi = "whole-heart";
    int sal_folds = 25;
    std::uint64_t sal_fold_seed = 0;
    bool sal_per_kind = false, sal_average_then_normalize = false;
    ModelOptions sal_model;
    cmd_saliency->add_option("--features", sal_features, "features csv")->required();
    cmd_saliency->add_option("--target", sal_target, "target name");
    cmd_saliency->add_option("--supervoxels", sal_supervoxels,
                             "supervoxel label volume for back-projection");
    cmd_saliency->add_option("--out-dir", sal_out_dir, "output directory")->required();
    cmd_saliency->add_option("--roi", sal_roi, "roi label recorded as provenance");
    cmd_saliency->add_option("--folds", sal_folds, "number of folds");
    cmd_saliency->add_option("--fold-seed", sal_fold_seed, "fold assignment seed");
    cmd_saliency->add_flag("--per-kind", sal_per_kind,
                           "normalize each feature kind by its own maximum");
    cmd_saliency->add_flag("--average-then-normalize", sal_average_then_normalize,
                           "aggregate raw fold maps before a single normalization");
    sal_model.add_to(cmd_saliency);

    // --- ablate ------------------------------------------------------------------
    auto* cmd_ablate = app.add_subcommand("ablate", "hyperparameter sweep");
    std::string abl_axis, abl_features, abl_manifest, abl_target = "age", abl_out;
    std::vector<std::string> abl_values;
    std::string abl_roi = "whole-heart", abl_filter = "own";
    int abl_min_voxels = 50;
    int abl_folds = 25;
    std::uint64_t abl_fold_seed = 0;
    SlicOptions abl_slic;
    ModelOptions abl_model;
    cmd_ablate->add_option("--axis", abl_axis,
                           "grid_size, clip_level, n_components or feature_subset")
        ->required();
    cmd_ablate->add_option("--values", abl_values, "axis values (default: the full grid)");
    cmd_ablate->add_option("--features", abl_features,
                           "features csv (clip_level/n_components/feature_subset axes)");
    cmd_ablate->add_option("--manifest", abl_manifest, "cohort manifest (grid_size axis)");
    cmd_ablate->add_option("--roi", abl_roi, "roi for grid_size re-extraction");
    cmd_ablate->add_option("--min-voxels", abl_min_voxels, "minimum in-roi voxels");
    cmd_ablate->add_option("--jacdet-filter", abl_filter, "own or density")
        ->check(CLI::IsMember({"own", "density"}));
    cmd_ablate->add_option("--target", abl_target, "target name");
    cmd_ablate->add_option("--out", abl_out, "output csv")->required();
    cmd_ablate->add_option("--folds", abl_folds, "number of folds");
    cmd_ablate->add_option("--fold-seed", abl_fold_seed, "fold assignment seed");
    abl_slic.add_to(cmd_ablate);
    abl_model.add_to(cmd_ablate);

    // --- qc-filter ------------------------------------------------------------------
    auto* cmd_qc = app.add_subcommand("qc-filter", "drop volume-prediction outliers");
    std::vector<std::string> qc_predictions;
    std::string qc_out;
    cmd_qc->add_option("--predictions", qc_predictions,
                       "prediction csvs, one per volume target")
        ->required()
        ->expected(-1);
    cmd_qc->add_option("--out", qc_out, "output csv of retained subjects")->required();

    // --- report ---------------------------------------------------------------------
    auto* cmd_report = app.add_subcommand("report", "summaries, correlations, Fisher tests");
    std::vector<std::string> rep_predictions, rep_metrics;
    std::string rep_out_dir;
    int rep_n_tests = 18;
    cmd_report->add_option("--predictions", rep_predictions,
                           "label=path prediction csvs; first label is the reference ROI")
        ->expected(-1);
    cmd_report->add_option("--metrics", rep_metrics, "label=path metrics csvs to stack")
        ->expected(-1);
    cmd_report->add_option("--out-dir", rep_out_dir, "output directory")->required();
    cmd_report->add_option("--n-tests", rep_n_tests,
                           "Bonferroni test count for the significance flag");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string config_echo = app.config_to_str(true, true);

    try {
        if (*cmd_phantom) {
            phantom_spec.dims = Dims{phantom_dims, phantom_dims, phantom_dims};
            json echo{{"out", phantom_out},
                      {"subjects", phantom_spec.cohort_size},
                      {"cohort_seed", phantom_spec.seed},
                      {"dims", phantom_dims},
                      {"age_min", phantom_spec.age_min_years},
                      {"age_max", phantom_spec.age_max_years},
                      {"density_noise", phantom_spec.density_noise_sigma},
                      {"scale_noise", phantom_spec.scale_noise_sigma},
                      {"deform_noise", phantom_spec.deform_noise_amplitude},
                      {"threads", global.threads}};
            generate_cohort(phantom_spec, phantom_out, global.threads);
            write_run_json(phantom_out, "phantom", echo, config_echo);
            std::cout << "wrote cohort of " << phantom_spec.cohort_size << " subjects to "
                      << phantom_out << "\n";
        } else if (*cmd_slic) {
            const Volume density = load_volume(slic_input);
            const Volume transformed = clamp_transform(density);
            LabelVolume mask;
            const bool has_mask = !slic_mask.empty();
            if (has_mask) mask = load_label_volume(slic_mask);
            const SupervoxelMap sv = slic_segment(transformed, has_mask ? &mask : nullptr,
                                                  slic_opts.params(), global.threads);
            const std::string sizes = slic_sizes.empty() ? slic_out + ".sizes.csv" : slic_sizes;
            save_supervoxels(sv, slic_out, sizes);
            json echo = slic_opts.echo();
            echo["input"] = slic_input;
            echo["out"] = slic_out;
            echo["sizes_csv"] = sizes;
            echo["mask"] = slic_mask;
            echo["threads"] = global.threads;
            write_run_json(slic_out, "slic", echo, config_echo);
            std::cout << "segmented " << sv.count << " supervoxels\n";
        } else if (*cmd_features) {
            CohortOptions opts;
            opts.slic = feat_slic.params();
            opts.roi = feat_roi;
            opts.feature_subset = feat_subset;
            opts.min_voxels = feat_min_voxels;
            opts.jacdet_filter = feat_filter == "density" ? StddevFilter::DensityChannel
                                                          : StddevFilter::OwnChannel;
            opts.threads = global.threads;

            const CohortData data = build_cohort_from_manifest(feat_manifest, opts);

            FeatureMatrix out;
            if (feat_explicit) {
                out.subject_ids = data.features.subject_ids;
                for (const auto& name : data.explicit_names) {
                    FeatureColumn col;
                    col.name = name;
                    out.columns.push_back(col);
                }
                out.values = data.explicit_features;
                out.target_names = data.features.target_names;
                out.targets = data.features.targets;
            } else {
                out = data.features;
            }
            write_feature_matrix(feat_out, out);
            if (!feat_index_out.empty()) write_retained_index(feat_index_out, data.index);
            if (!feat_sv_out.empty())
                save_supervoxels(data.supervoxels, feat_sv_out, feat_sv_out + ".sizes.csv");

            json echo = feat_slic.echo();
            echo["manifest"] = feat_manifest;
            echo["out"] = feat_out;
            echo["roi"] = feat_roi;
            echo["subset"] = feat_subset;
            echo["min_voxels"] = feat_min_voxels;
            echo["jacdet_filter"] = feat_filter;
            echo["explicit"] = feat_explicit;
            echo["threads"] = global.threads;
            write_run_json(feat_out, "features", echo, config_echo);
            std::cout << "wrote " << out.values.rows() << " x " << out.values.cols()
                      << " feature matrix to " << feat_out << "\n";
        } else if (*cmd_fit) {
            const FeatureMatrix fm = read_feature_matrix(fit_features);
            const Eigen::VectorXd y = target_vector(fm, fit_target);
            const TrainedPipeline p = fit_pipeline(fm.values, y, fit_model.to_config());
            save_pipeline(p, fit_out);
            json echo = fit_model.echo();
            echo["features"] = fit_features;
            echo["target"] = fit_target;
            echo["out"] = fit_out;
            write_run_json(fit_out, "fit", echo, config_echo);
            std::cout << "fitted pipeline saved to " << fit_out << "\n";
        } else if (*cmd_predict) {
            const FeatureMatrix fm = read_feature_matrix(pred_features);
            const TrainedPipeline p = load_pipeline(pred_model);
            const Eigen::VectorXd yhat = predict(p, fm.values);
            Eigen::VectorXd y = Eigen::VectorXd::Constant(yhat.size(), std::nan(""));
            try {
                y = target_vector(fm, pred_target);
            } catch (const ConfigError&) {
                // no reference target column in this matrix
            }
            std::vector<int> zero_folds(fm.subject_ids.size(), 0);
            write_predictions_csv(pred_out, fm.subject_ids, zero_folds, y, yhat);
            json echo{{"model", pred_model},
                      {"features", pred_features},
                      {"target", pred_target},
                      {"out", pred_out}};
            write_run_json(pred_out, "predict", echo, config_echo);
            std::cout << "wrote predictions for " << yhat.size() << " subjects\n";
        } else if (*cmd_evaluate) {
            FeatureMatrix fm = read_feature_matrix(eval_features);
            if (!eval_subjects.empty()) fm = filter_subjects(fm, eval_subjects);
            const Eigen::VectorXd y = target_vector(fm, eval_target);
            const FoldAssignment folds =
                kfold_split(static_cast<int>(fm.values.rows()), eval_folds, eval_fold_seed);
            const CvResult cv =
                cross_validate(fm.values, y, eval_model.to_config(), folds, global.threads);

            fs::create_directories(eval_out_dir);
            write_metrics_csv(eval_out_dir + "/metrics.csv", cv.report, cv.fold_of);
            write_predictions_csv(eval_out_dir + "/predictions.csv", fm.subject_ids, cv.fold_of,
                                  y, cv.predictions);
            write_scatter_csv(eval_out_dir + "/scatter.csv", y, cv.predictions);

            json echo = eval_model.echo();
            echo["features"] = eval_features;
            echo["target"] = eval_target;
            echo["out_dir"] = eval_out_dir;
            echo["folds"] = eval_folds;
            echo["fold_seed"] = eval_fold_seed;
            echo["subjects"] = eval_subjects;
            echo["threads"] = global.threads;
            write_run_json(eval_out_dir, "evaluate", echo, config_echo);
            std::cout << "pooled: mae=" << cv.report.pooled.mae << " r2=" << cv.report.pooled.r2
                      << " spearman=" << cv.report.pooled.spearman << "\n";
        } else if (*cmd_saliency) {
            const FeatureMatrix fm = read_feature_matrix(sal_features);
            const Eigen::VectorXd y = target_vector(fm, sal_target);
            const PipelineConfig config = sal_model.to_config();
            if (config.regressor != RegressorKind::Ols)
                throw ConfigError("saliency is defined only for the linear regressor");
            const FoldAssignment folds =
                kfold_split(static_cast<int>(fm.values.rows()), sal_folds, sal_fold_seed);

            std::vector<TrainedPipeline> models;
            cross_validate(fm.values, y, config, folds, global.threads, &models);

            std::vector<Eigen::VectorXd> fold_maps;
            for (const auto& model : models) {
                const Eigen::VectorXd raw = compute_saliency(model);
                if (sal_average_then_normalize)
                    fold_maps.push_back(raw);
                else
                    fold_maps.push_back(sal_per_kind ? normalize_saliency_per_kind(raw, fm.columns)
                                                     : normalize_saliency(raw));
            }
            Eigen::VectorXd aggregated = aggregate_folds(fold_maps);
            if (sal_average_then_normalize)
                aggregated = sal_per_kind ? normalize_saliency_per_kind(aggregated, fm.columns)
                                          : normalize_saliency(aggregated);

            SaliencyMap map;
            map.columns = fm.columns;
            map.values = aggregated;
            map.target = sal_target;
            map.roi = sal_roi;
            map.n_folds = sal_folds;

            fs::create_directories(sal_out_dir);
            write_saliency_csv(sal_out_dir + "/saliency.csv", map);
            if (!sal_supervoxels.empty()) {
                const SupervoxelMap sv = load_supervoxels(sal_supervoxels);
                for (int k = 0; k < kFeatureKindCount; ++k) {
                    const auto kind = static_cast<FeatureKind>(k);
                    const bool has_kind = std::any_of(
                        fm.columns.begin(), fm.columns.end(), [&](const FeatureColumn& c) {
                            return c.supervoxel_id >= 0 && c.kind == kind;
                        });
                    if (!has_kind) continue;
                    const Volume v = project_to_volume(map, sv, kind);
                    save_volume(v, sal_out_dir + "/saliency_" + sal_target + "_" +
                                       feature_kind_name(kind) + ".nrrd");
                }
            }

            json echo = sal_model.echo();
            echo["features"] = sal_features;
            echo["target"] = sal_target;
            echo["supervoxels"] = sal_supervoxels;
            echo["out_dir"] = sal_out_dir;
            echo["folds"] = sal_folds;
            echo["fold_seed"] = sal_fold_seed;
            echo["per_kind"] = sal_per_kind;
            echo["average_then_normalize"] = sal_average_then_normalize;
            write_run_json(sal_out_dir, "saliency", echo, config_echo);
            std::cout << "wrote saliency for " << map.columns.size() << " features\n";
        } else if (*cmd_ablate) {
            const AblationAxis axis = parse_ablation_axis(abl_axis);
            std::vector<std::string> values =
                abl_values.empty() ? ablation_default_values(axis) : abl_values;

            FeatureMatrix base_fm;
            CohortOptions cohort_opts;
            cohort_opts.slic = abl_slic.params();
            cohort_opts.roi = abl_roi;
            cohort_opts.min_voxels = abl_min_voxels;
            cohort_opts.jacdet_filter = abl_filter == "density" ? StddevFilter::DensityChannel
                                                                : StddevFilter::OwnChannel;
            cohort_opts.threads = global.threads;

            if (axis == AblationAxis::GridSize) {
                if (abl_manifest.empty())
                    throw ConfigError("ablate --axis grid_size needs --manifest");
            } else {
                if (abl_features.empty())
                    throw ConfigError("ablate --axis " + abl_axis + " needs --features");
                base_fm = read_feature_matrix(abl_features);
            }

            const int n = axis == AblationAxis::GridSize
                              ? static_cast<int>(read_manifest(abl_manifest).size())
                              : static_cast<int>(base_fm.values.rows());
            const FoldAssignment folds = kfold_split(n, abl_folds, abl_fold_seed);

            const DatasetProvider provider =
                [&](const std::string& value) -> std::pair<Eigen::MatrixXd, Eigen::VectorXd> {
                if (axis == AblationAxis::GridSize) {
                    CohortOptions opts = cohort_opts;
                    opts.slic.grid_size = std::stoi(value);
                    const CohortData data = build_cohort_from_manifest(abl_manifest, opts);
                    return {data.features.values, target_vector(data.features, abl_target)};
                }
                if (axis == AblationAxis::FeatureSubset) {
                    const FeatureMatrix sub = restrict_to_subset(base_fm, value);
                    return {sub.values, target_vector(sub, abl_target)};
                }
                return {base_fm.values, target_vector(base_fm, abl_target)};
            };

            const auto rows = ablation_sweep(axis, values, abl_model.to_config(), folds,
                                             provider, global.threads);
            CsvTable t;
            t.header = {abl_axis, "mae", "r2", "spearman"};
            for (const auto& row : rows)
                t.rows.push_back({row.value, metrics_value(row.pooled.mae),
                                  metrics_value(row.pooled.r2),
                                  metrics_value(row.pooled.spearman)});
            write_csv(abl_out, t);

            json echo = abl_model.echo();
            echo["axis"] = abl_axis;
            echo["values"] = values;
            echo["features"] = abl_features;
            echo["manifest"] = abl_manifest;
            echo["target"] = abl_target;
            echo["out"] = abl_out;
            echo["folds"] = abl_folds;
            echo["fold_seed"] = abl_fold_seed;
            write_run_json(abl_out, "ablate", echo, config_echo);
            std::cout << "wrote " << rows.size() << "-row sweep to " << abl_out << "\n";
        } else if (*cmd_qc) {
            std::vector<std::string> subjects;
            Eigen::MatrixXd errors;
            for (std::size_t t = 0; t < qc_predictions.size(); ++t) {
                const CsvTable table = read_csv(qc_predictions[t]);
                const std::size_t subj_col = table.column("subject");
                const std::size_t y_col = table.column("y");
                const std::size_t yhat_col = table.column("yhat");
                if (t == 0) {
                    for (const auto& row : table.rows) subjects.push_back(row[subj_col]);
                    errors.resize(static_cast<Eigen::Index>(table.rows.size()),
                                  static_cast<Eigen::Index>(qc_predictions.size()));
                }
                if (table.rows.size() != subjects.size())
                    throw DataError(qc_predictions[t] + ": subject count differs");
                for (std::size_t r = 0; r < table.rows.size(); ++r) {
                    if (table.rows[r][subj_col] != subjects[r])
                        throw DataError(qc_predictions[t] + ": subject order differs");
                    errors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) =
                        std::abs(std::stod(table.rows[r][y_col]) -
                                 std::stod(table.rows[r][yhat_col]));
                }
            }
            const std::vector<bool> keep = qc_filter(errors);
            CsvTable out;
            out.header = {"subject"};
            for (std::size_t i = 0; i < subjects.size(); ++i)
                if (keep[i]) out.rows.push_back({subjects[i]});
            write_csv(qc_out, out);
            json echo{{"predictions", qc_predictions}, {"out", qc_out}};
            write_run_json(qc_out, "qc-filter", echo, config_echo);
            std::cout << "retained " << out.rows.size() << " of " << subjects.size()
                      << " subjects\n";
        } else if (*cmd_report) {
            fs::create_directories(rep_out_dir);
            auto split_label = [](const std::string& spec) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos)
                    throw ConfigError("report: expected label=path, got \"" + spec + "\"");
                return std::make_pair(spec.substr(0, eq), spec.substr(eq + 1));
            };

            if (!rep_metrics.empty()) {
                CsvTable summary;
                summary.header = {"label", "n", "mae", "r2", "spearman"};
                for (const auto& spec : rep_metrics) {
                    const auto [label, path] = split_label(spec);
                    const CsvTable t = read_csv(path);
                    const std::size_t fold_col = t.column("fold");
                    for (const auto& row : t.rows)
                        if (row[fold_col] == "pooled")
                            summary.rows.push_back({label, row[t.column("n")],
                                                    row[t.column("mae")], row[t.column("r2")],
                                                    row[t.column("spearman")]});
                }
                write_csv(rep_out_dir + "/summary.csv", summary);
            }

            if (!rep_predictions.empty()) {
                std::vector<std::string> labels;
                std::vector<Eigen::VectorXd> vectors;
                Eigen::VectorXd age;
                for (std::size_t i = 0; i < rep_predictions.size(); ++i) {
                    const auto [label, path] = split_label(rep_predictions[i]);
                    const CsvTable t = read_csv(path);
                    const std::size_t y_col = t.column("y");
                    const std::size_t yhat_col = t.column("yhat");
                    Eigen::VectorXd yhat(static_cast<Eigen::Index>(t.rows.size()));
                    Eigen::VectorXd y(static_cast<Eigen::Index>(t.rows.size()));
                    for (std::size_t r = 0; r < t.rows.size(); ++r) {
                        y(static_cast<Eigen::Index>(r)) = std::stod(t.rows[r][y_col]);
                        yhat(static_cast<Eigen::Index>(r)) = std::stod(t.rows[r][yhat_col]);
                    }
                    if (i == 0) {
                        age = y;
                        labels.push_back("age");
                        vectors.push_back(age);
                    }
                    labels.push_back(label);
                    vectors.push_back(yhat);
                }

                const CorrelationStudy study = correlation_study(labels, vectors);
                CsvTable corr;
                corr.header = {"label"};
                for (const auto& l : labels) corr.header.push_back(l);
                for (std::size_t i = 0; i < labels.size(); ++i) {
                    std::vector<std::string> row = {labels[i]};
                    for (std::size_t j = 0; j < labels.size(); ++j)
                        row.push_back(metrics_value(study.matrix(
                            static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
                    corr.rows.push_back(std::move(row));
                }
                write_csv(rep_out_dir + "/correlations.csv", corr);

                // Fisher tests: rho_CA (age vs roi prediction) against rho_WH
                // (reference-roi prediction vs roi prediction).
                CsvTable fisher;
                fisher.header = {"roi", "rho_ca", "rho_wh", "n", "z", "p", "significant"};
                const int n = static_cast<int>(age.size());
                for (std::size_t i = 2; i < vectors.size(); ++i) {
                    const double rho_ca = pearson(age, vectors[i]);
                    const double rho_wh = pearson(vectors[1], vectors[i]);
                    const FisherTest test = fisher_z_test(rho_ca, rho_wh, n, 0.05, rep_n_tests);
                    fisher.rows.push_back({labels[i], csv_num(rho_ca), csv_num(rho_wh),
                                           csv_int(n), csv_num(test.z), csv_num(test.p),
                                           test.significant ? "1" : "0"});
                }
                write_csv(rep_out_dir + "/fisher_tests.csv", fisher);
            }

            json echo{{"predictions", rep_predictions},
                      {"metrics", rep_metrics},
                      {"out_dir", rep_out_dir},
                      {"n_tests", rep_n_tests}};
            write_run_json(rep_out_dir, "report", echo, config_echo);
            std::cout << "report written to " << rep_out_dir << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
