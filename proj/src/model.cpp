#include "svmorph/model.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "svmorph/errors.h"

namespace svmorph {

namespace {

// Flip component rows so the largest-magnitude entry is positive.
void fix_component_signs(Eigen::MatrixXd& components) {
    for (Eigen::Index r = 0; r < components.rows(); ++r) {
        Eigen::Index arg = 0;
        components.row(r).cwiseAbs().maxCoeff(&arg);
        if (components(r, arg) < 0.0) components.row(r) *= -1.0;
    }
}

} // namespace

Standardizer fit_standardizer(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                              double clip_level) {
    const Eigen::Index n = x_train.rows();
    if (n < 2) throw DataError("fit_standardizer: need at least 2 training rows");
    if (y_train.size() != n)
        throw DataError("fit_standardizer: feature/target row count mismatch");
    if (!(clip_level > 0.0)) throw ConfigError("fit_standardizer: clip level must be > 0");

    Standardizer s;
    s.clip_level = clip_level;
    s.feature_mean = x_train.colwise().mean();
    s.feature_std.resize(x_train.cols());
    for (Eigen::Index c = 0; c < x_train.cols(); ++c) {
        const double ss = (x_train.col(c).array() - s.feature_mean(c)).square().sum();
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        s.feature_std(c) = sd > 0.0 ? sd : 1.0;
    }
    s.target_mean = y_train.mean();
    const double yss = (y_train.array() - s.target_mean).square().sum();
    const double ysd = std::sqrt(yss / static_cast<double>(n - 1));
    s.target_std = ysd > 0.0 ? ysd : 1.0;
    return s;
}

Eigen::MatrixXd apply_standardizer(const Eigen::MatrixXd& x, const Standardizer& s) {
    if (x.cols() != s.feature_mean.size())
        throw DataError("apply_standardizer: column count mismatch");
    Eigen::MatrixXd z = (x.rowwise() - s.feature_mean.transpose()).array().rowwise() /
                        s.feature_std.transpose().array();
    const double c = s.clip_level;
    return z.cwiseMax(-c).cwiseMin(c);
}

Eigen::VectorXd standardize_target(const Eigen::VectorXd& y, const Standardizer& s) {
    return (y.array() - s.target_mean) / s.target_std;
}

PcaModel fit_pca(const Eigen::MatrixXd& z_train, int n_components) {
    const Eigen::Index rows = z_train.rows(), cols = z_train.cols();
    if (n_components < 1 || n_components > std::min(rows, cols))
        throw ConfigError("fit_pca: n_components must be in [1, min(rows, cols)]; got " +
                          std::to_string(n_components));

    PcaModel m;
    m.mean = z_train.colwise().mean();
    const Eigen::MatrixXd centered = z_train.rowwise() - m.mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    m.components = svd.matrixV().leftCols(n_components).transpose();
    fix_component_signs(m.components);
    m.explained_variance = svd.singularValues()
                               .head(n_components)
                               .array()
                               .square() /
                           static_cast<double>(rows - 1);
    return m;
}

PcaModel fit_pca_incremental(const Eigen::MatrixXd& z_train, int n_components, int batch_size) {
    const Eigen::Index rows = z_train.rows(), cols = z_train.cols();
    if (n_components < 1 || n_components > std::min(rows, cols))
        throw ConfigError("fit_pca_incremental: n_components must be in [1, min(rows, cols)]");
    if (batch_size < n_components)
        throw ConfigError("fit_pca_incremental: batch_size must be >= n_components");

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(cols);
    Eigen::MatrixXd components;       // k x cols
    Eigen::VectorXd singular_values;  // k
    Eigen::Index n_seen = 0;

    for (Eigen::Index start = 0; start < rows; start += batch_size) {
        const Eigen::Index b = std::min<Eigen::Index>(batch_size, rows - start);
        const Eigen::MatrixXd batch = z_train.middleRows(start, b);
        const Eigen::VectorXd batch_mean = batch.colwise().mean();

        Eigen::MatrixXd stacked;
        if (n_seen == 0) {
            stacked = batch.rowwise() - batch_mean.transpose();
            mean = batch_mean;
        } else {
            const Eigen::Index new_n = n_seen + b;
            const Eigen::VectorXd new_mean =
                (static_cast<double>(n_seen) * mean + static_cast<double>(b) * batch_mean) /
                static_cast<double>(new_n);
            const double corr_scale = std::sqrt(static_cast<double>(n_seen) *
                                                static_cast<double>(b) /
                                                static_cast<double>(new_n));
            stacked.resize(components.rows() + b + 1, cols);
            stacked.topRows(components.rows()) = singular_values.asDiagonal() * components;
            stacked.middleRows(components.rows(), b) = batch.rowwise() - batch_mean.transpose();
            stacked.bottomRows(1) = (corr_scale * (mean - batch_mean)).transpose();
            mean = new_mean;
        }
        n_seen += b;

        Eigen::BDCSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinV);
        const Eigen::Index keep =
            std::min<Eigen::Index>(n_components, svd.singularValues().size());
        components = svd.matrixV().leftCols(keep).transpose();
        fix_component_signs(components);
        singular_values = svd.singularValues().head(keep);
    }

    PcaModel m;
    m.mean = mean;
    m.components = components;
    m.explained_variance =
        singular_values.array().square() / static_cast<double>(std::max<Eigen::Index>(n_seen - 1, 1));
    return m;
}

Eigen::MatrixXd pca_transform(const Eigen::MatrixXd& z, const PcaModel& m) {
    if (z.cols() != m.mean.size()) throw DataError("pca_transform: column count mismatch");
    return (z.rowwise() - m.mean.transpose()) * m.components.transpose();
}

Eigen::MatrixXd pca_inverse_transform(const Eigen::MatrixXd& scores, const PcaModel& m) {
    if (scores.cols() != m.components.rows())
        throw DataError("pca_inverse_transform: score count mismatch");
    return (scores * m.components).rowwise() + m.mean.transpose();
}

LinearModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() != y.size()) throw DataError("fit_ols: row count mismatch");
    if (x.rows() < 1) throw DataError("fit_ols: empty design");

    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(xc);
    LinearModel m;
    m.coefficients = cod.solve(yc);
    m.rank_deficient = cod.rank() < x.cols();
    m.intercept = y_mean - x_mean.dot(m.coefficients);
    return m;
}

Eigen::VectorXd linear_predict(const LinearModel& m, const Eigen::MatrixXd& x) {
    if (x.cols() != m.coefficients.size())
        throw DataError("linear_predict: column count mismatch");
    return (x * m.coefficients).array() + m.intercept;
}

TrainedPipeline fit_pipeline(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                             const PipelineConfig& config) {
    TrainedPipeline p;
    p.standardizer = fit_standardizer(x_train, y_train, config.clip_level);
    const Eigen::MatrixXd z = apply_standardizer(x_train, p.standardizer);
    const Eigen::VectorXd yz = standardize_target(y_train, p.standardizer);

    Eigen::MatrixXd scores;
    if (config.use_pca) {
        const int max_comp = static_cast<int>(std::min(z.rows(), z.cols()));
        const int n_comp = std::min(config.n_components, max_comp);
        if (n_comp < 1) throw ConfigError("fit_pipeline: n_components must be >= 1");
        p.has_pca = true;
        p.pca = fit_pca(z, n_comp);
        scores = pca_transform(z, p.pca);
    } else {
        scores = z;
    }

    p.regressor = config.regressor;
    if (config.regressor == RegressorKind::Ols) {
        p.linear = fit_ols(scores, yz);
    } else {
        p.mlp = fit_mlp(scores, yz, config.mlp);
    }
    return p;
}

Eigen::VectorXd predict(const TrainedPipeline& p, const Eigen::MatrixXd& x_raw) {
    const Eigen::MatrixXd z = apply_standardizer(x_raw, p.standardizer);
    const Eigen::MatrixXd scores = p.has_pca ? pca_transform(z, p.pca) : z;
    const Eigen::VectorXd yz = p.regressor == RegressorKind::Ols
                                   ? linear_predict(p.linear, scores)
                                   : mlp_predict(p.mlp, scores);
    return (yz.array() * p.standardizer.target_std) + p.standardizer.target_mean;
}

// --- serialization ---------------------------------------------------------

namespace {

constexpr char kPipeMagic[8] = {'S', 'V', 'M', 'P', 'I', 'P', 'E', '1'};

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

void put_vec(std::string& out, const Eigen::VectorXd& v) {
    put_u64(out, static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

void put_mat(std::string& out, const Eigen::MatrixXd& m) {
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;
    std::string path;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n)
            throw DataError(path + ": truncated pipeline file");
    }
    std::uint8_t u8() {
        need(1);
        return *p++;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    Eigen::VectorXd vec() {
        const std::uint64_t n = u64();
        Eigen::VectorXd v(static_cast<Eigen::Index>(n));
        for (std::uint64_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = f64();
        return v;
    }
    Eigen::MatrixXd mat() {
        const std::uint64_t rows = u64(), cols = u64();
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (std::uint64_t r = 0; r < rows; ++r)
            for (std::uint64_t c = 0; c < cols; ++c)
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f64();
        return m;
    }
};

} // namespace

std::string pipeline_to_bytes(const TrainedPipeline& p) {
    std::string out(kPipeMagic, sizeof(kPipeMagic));
    put_u8(out, p.has_pca ? 1 : 0);
    put_u8(out, static_cast<std::uint8_t>(p.regressor));

    put_f64(out, p.standardizer.clip_level);
    put_f64(out, p.standardizer.target_mean);
    put_f64(out, p.standardizer.target_std);
    put_vec(out, p.standardizer.feature_mean);
    put_vec(out, p.standardizer.feature_std);

    if (p.has_pca) {
        put_vec(out, p.pca.mean);
        put_mat(out, p.pca.components);
        put_vec(out, p.pca.explained_variance);
    }

    if (p.regressor == RegressorKind::Ols) {
        put_vec(out, p.linear.coefficients);
        put_f64(out, p.linear.intercept);
        put_u8(out, p.linear.rank_deficient ? 1 : 0);
    } else {
        put_u64(out, static_cast<std::uint64_t>(p.mlp.config.hidden_width));
        put_u64(out, static_cast<std::uint64_t>(p.mlp.config.activation));
        put_f64(out, p.mlp.config.learning_rate);
        put_f64(out, p.mlp.config.l2);
        put_u64(out, static_cast<std::uint64_t>(p.mlp.config.batch_size));
        put_u64(out, static_cast<std::uint64_t>(p.mlp.config.iterations));
        put_u64(out, p.mlp.config.seed);
        put_mat(out, p.mlp.w1);
        put_vec(out, p.mlp.b1);
        put_vec(out, p.mlp.w2);
        put_f64(out, p.mlp.b2);
    }
    return out;
}

void save_pipeline(const TrainedPipeline& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    const std::string bytes = pipeline_to_bytes(p);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path);
}

TrainedPipeline load_pipeline(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof(kPipeMagic) ||
        std::memcmp(bytes.data(), kPipeMagic, sizeof(kPipeMagic)) != 0)
        throw DataError(path + ": not a pipeline file (bad magic)");

    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()) + sizeof(kPipeMagic),
             reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size(), path};

    TrainedPipeline p;
    p.has_pca = r.u8() != 0;
    p.regressor = static_cast<RegressorKind>(r.u8());

    p.standardizer.clip_level = r.f64();
    p.standardizer.target_mean = r.f64();
    p.standardizer.target_std = r.f64();
    p.standardizer.feature_mean = r.vec();
    p.standardizer.feature_std = r.vec();

    if (p.has_pca) {
        p.pca.mean = r.vec();
        p.pca.components = r.mat();
        p.pca.explained_variance = r.vec();
    }

    if (p.regressor == RegressorKind::Ols) {
        p.linear.coefficients = r.vec();
        p.linear.intercept = r.f64();
        p.linear.rank_deficient = r.u8() != 0;
    } else {
        p.mlp.config.hidden_width = static_cast<int>(r.u64());
        p.mlp.config.activation = static_cast<Activation>(r.u64());
        p.mlp.config.learning_rate = r.f64();
        p.mlp.config.l2 = r.f64();
        p.mlp.config.batch_size = static_cast<int>(r.u64());
        p.mlp.config.iterations = static_cast<int>(r.u64());
        p.mlp.config.seed = r.u64();
        p.mlp.w1 = r.mat();
        p.mlp.b1 = r.vec();
        p.mlp.w2 = r.vec();
        p.mlp.b2 = r.f64();
    }
    return p;
}

} // namespace svmorph
