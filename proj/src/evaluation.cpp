#include "fswap/evaluation.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "fswap/image_io.hpp"

namespace fs = std::filesystem;

namespace fswap {

std::pair<double, double> id_retrieval(const std::vector<Tensor>& swapped, const std::vector<Tensor>& sources,
                                       const std::vector<BinaryMask>& swapped_masks,
                                       const std::vector<BinaryMask>& source_masks, const ImageEncoder& id_encoder,
                                       std::vector<int>* ranks_out) {
    const std::size_t n = swapped.size();
    if (n == 0) throw RangeError("id_retrieval: empty image sets");
    if (sources.size() != n || swapped_masks.size() != n || source_masks.size() != n)
        throw ShapeError("id_retrieval: set sizes differ");

    std::vector<Eigen::VectorXd> fs_swap(n), fs_src(n);
    for (std::size_t i = 0; i < n; ++i) {
        fs_swap[i] = id_encoder.embed(apply_mask(swapped[i], swapped_masks[i])).array().matrix();
        fs_src[i] = id_encoder.embed(apply_mask(sources[i], source_masks[i])).array().matrix();
    }
    auto cosine = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return a.dot(b) / (a.norm() * b.norm() + 1e-12);
    };

    int top1 = 0, top5 = 0;
    if (ranks_out) ranks_out->assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> sim(n);
        for (std::size_t j = 0; j < n; ++j) sim[j] = cosine(fs_swap[i], fs_src[j]);
        // documented deterministic tie-break: higher similarity first, then lowest index
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (sim[a] != sim[b]) return sim[a] > sim[b];
            return a < b;
        });
        int rank = static_cast<int>(std::find(order.begin(), order.end(), i) - order.begin()) + 1;
        if (ranks_out) (*ranks_out)[i] = rank;
        if (rank <= 1) ++top1;
        if (rank <= 5) ++top5;
    }
    return {static_cast<double>(top1) / n, static_cast<double>(top5) / n};
}

PoseExprResult pose_expr_error(const std::vector<Tensor>& swapped, const std::vector<Tensor>& targets,
                               const FactorExtractor& pose_fn, const FactorExtractor& expr_fn) {
    if (swapped.size() != targets.size()) throw ShapeError("pose_expr_error: unpaired sets");
    PoseExprResult r;
    int pose_n = 0, expr_n = 0;
    for (std::size_t i = 0; i < swapped.size(); ++i) {
        auto ps = pose_fn(swapped[i]);
        auto pt = pose_fn(targets[i]);
        if (ps && pt && ps->size() == pt->size()) {
            r.pose_l2 += (*ps - *pt).norm();
            ++pose_n;
        } else {
            ++r.pose_failures;
        }
        auto es = expr_fn(swapped[i]);
        auto et = expr_fn(targets[i]);
        if (es && et && es->size() == et->size()) {
            r.expr_l2 += (*es - *et).norm();
            ++expr_n;
        } else {
            ++r.expr_failures;
        }
    }
    r.pose_l2 = pose_n ? r.pose_l2 / pose_n : 0.0;
    r.expr_l2 = expr_n ? r.expr_l2 / expr_n : 0.0;
    return r;
}

FactorExtractor toy_pose_extractor() {
    return [](const Tensor& img) -> std::optional<Eigen::VectorXd> {
        auto v = estimate_pose_deg(img);
        if (!v) return std::nullopt;
        Eigen::VectorXd out(1);
        out[0] = *v;
        return out;
    };
}

FactorExtractor toy_expression_extractor() {
    return [](const Tensor& img) -> std::optional<Eigen::VectorXd> {
        auto v = estimate_expression(img);
        if (!v) return std::nullopt;
        Eigen::VectorXd out(1);
        out[0] = *v;
        return out;
    };
}

namespace {

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, double shrinkage) {
    Eigen::RowVectorXd mu = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mu;
    Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, x.rows() - 1);
    if (shrinkage > 0.0) {
        double scale = cov.trace() / cov.rows();
        cov = (1.0 - shrinkage) * cov + shrinkage * scale * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    }
    return cov;
}

}  // namespace

double frechet_feature_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double shrinkage) {
    if (a.cols() != b.cols()) throw ShapeError("frechet_feature_distance: feature dims differ");
    if (a.rows() < 2 || b.rows() < 2) throw RangeError("frechet_feature_distance: need >= 2 samples per set");
    if (shrinkage <= 0.0 && (a.rows() < a.cols() + 1 || b.rows() < b.cols() + 1))
        throw RangeError("frechet_feature_distance: insufficient samples for dimension " + std::to_string(a.cols()) +
                         " without shrinkage");

    Eigen::RowVectorXd mu_a = a.colwise().mean(), mu_b = b.colwise().mean();
    Eigen::MatrixXd ca = covariance(a, shrinkage), cb = covariance(b, shrinkage);
    Eigen::MatrixXd sa = sqrtm_psd(ca);
    Eigen::MatrixXd cross = sqrtm_psd(sa * cb * sa);  // tr((Sa Sb)^{1/2}) via the symmetric form
    double d = (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross.trace();
    return std::max(0.0, d);
}

void EvalReport::validate() const {
    if (!(id_top1 >= 0 && id_top1 <= 1 && id_top5 >= 0 && id_top5 <= 1 && id_top1 <= id_top5))
        throw RangeError("EvalReport: retrieval fractions out of order");
    for (double v : {frechet_distance, frechet_baseline, pose_l2, expr_l2})
        if (!std::isfinite(v)) throw NumericError("EvalReport: non-finite metric");
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    out << "faceswap_eval_report v1\n";
    out << "pairs: " << pairs << "\n";
    char buf[64];
    auto put = [&](const char* k, double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        out << k << ": " << buf << "\n";
    };
    put("frechet_distance", frechet_distance);
    put("frechet_baseline", frechet_baseline);
    put("id_top1", id_top1);
    put("id_top5", id_top5);
    put("pose_l2", pose_l2);
    put("expr_l2", expr_l2);
    out << "pose_failures: " << pose_failures << "\n";
    out << "expr_failures: " << expr_failures << "\n";
    out << "config_hash: " << to_hex(config_hash) << "\n";
    return out.str();
}

EvalReport EvalReport::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "faceswap_eval_report v1")
        throw SchemaError("EvalReport::from_text: bad header");
    EvalReport r;
    while (std::getline(in, line)) {
        auto colon = line.find(": ");
        if (colon == std::string::npos) continue;
        std::string k = line.substr(0, colon), v = line.substr(colon + 2);
        if (k == "pairs") r.pairs = std::stoi(v);
        else if (k == "frechet_distance") r.frechet_distance = std::stod(v);
        else if (k == "frechet_baseline") r.frechet_baseline = std::stod(v);
        else if (k == "id_top1") r.id_top1 = std::stod(v);
        else if (k == "id_top5") r.id_top5 = std::stod(v);
        else if (k == "pose_l2") r.pose_l2 = std::stod(v);
        else if (k == "expr_l2") r.expr_l2 = std::stod(v);
        else if (k == "pose_failures") r.pose_failures = std::stoi(v);
        else if (k == "expr_failures") r.expr_failures = std::stoi(v);
        else if (k == "config_hash") r.config_hash = std::stoull(v, nullptr, 16);
        else throw SchemaError("EvalReport::from_text: unknown key " + k);
    }
    return r;
}

EvalReport run_benchmark(const ModelBundle& bundle, const Dataset& ds, const EvalConfig& cfg,
                         const std::string& out_dir) {
    if (cfg.n_pairs < 1) throw RangeError("run_benchmark: n_pairs must be >= 1");
    auto val = ds.split_indices("val");
    if (static_cast<int>(val.size()) < 2 * cfg.n_pairs)
        throw RangeError("run_benchmark: split has " + std::to_string(val.size()) + " items, need " +
                         std::to_string(2 * cfg.n_pairs) + " for disjoint source/target sets");
    fs::create_directories(out_dir);

    // disjoint source/target items; targets re-paired so every pair crosses identities
    std::vector<int> pool = val;
    Rng rng(mix_seed(cfg.seed, fnv1a64("bench_pairs")));
    for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) std::swap(pool[i], pool[rng.uniform_int(0, i)]);
    std::vector<int> sources(pool.begin(), pool.begin() + cfg.n_pairs);
    std::vector<int> targets(pool.begin() + cfg.n_pairs, pool.begin() + 2 * cfg.n_pairs);
    for (int i = 0; i < cfg.n_pairs; ++i) {
        if (ds.items[sources[i]].identity != ds.items[targets[i]].identity) continue;
        for (int j = 0; j < cfg.n_pairs; ++j) {
            if (ds.items[sources[i]].identity != ds.items[targets[j]].identity &&
                ds.items[sources[j]].identity != ds.items[targets[i]].identity) {
                std::swap(targets[i], targets[j]);
                break;
            }
        }
    }

    std::vector<SwapRequest> requests;
    std::vector<std::pair<std::string, std::string>> names;
    for (int i = 0; i < cfg.n_pairs; ++i) {
        SwapRequest rq;
        rq.x_src = ds.image(sources[i]);
        rq.x_tar = ds.image(targets[i]);
        rq.labels_src = ds.labels(sources[i]);
        rq.labels_tar = ds.labels(targets[i]);
        rq.lm_tar = ds.landmarks(targets[i]);
        rq.preset = cfg.preset;
        rq.custom_categories = cfg.custom_categories;
        rq.n_steps = cfg.n_steps;
        rq.seed = mix_seed(cfg.seed, fnv1a64("pair") + static_cast<std::uint64_t>(i));
        requests.push_back(std::move(rq));
        names.emplace_back(ds.items[sources[i]].image_path, ds.items[targets[i]].image_path);
    }
    BatchResult batch = swap_batch(bundle, requests, names, out_dir + "/swaps", cfg.workers);
    for (const auto& row : batch.rows)
        if (row.status != "ok") throw NumericError("run_benchmark: swap failed: " + row.status);

    const auto& cats = preset_categories(cfg.preset, cfg.custom_categories);
    std::vector<BinaryMask> swap_masks, src_masks;
    for (int i = 0; i < cfg.n_pairs; ++i) {
        swap_masks.push_back(category_mask(ds.labels(targets[i]), cats));
        src_masks.push_back(category_mask(ds.labels(sources[i]), cats));
    }
    std::vector<Tensor> source_images;
    for (int i : sources) source_images.push_back(ds.image(i));
    std::vector<Tensor> target_images;
    for (int i : targets) target_images.push_back(ds.image(i));

    EvalReport rep;
    rep.pairs = cfg.n_pairs;
    std::vector<int> ranks;
    std::tie(rep.id_top1, rep.id_top5) =
        id_retrieval(batch.images, source_images, swap_masks, src_masks, *bundle.suite.identity, &ranks);

    PoseExprResult pe = pose_expr_error(batch.images, target_images, toy_pose_extractor(),
                                        toy_expression_extractor());
    rep.pose_l2 = pe.pose_l2;
    rep.expr_l2 = pe.expr_l2;
    rep.pose_failures = pe.pose_failures;
    rep.expr_failures = pe.expr_failures;

    // Frechet features from the frozen semantic trunk; swapped vs real
    // sources, with sources vs targets as the real-real baseline.
    auto features = [&](const std::vector<Tensor>& imgs) {
        auto* enc = dynamic_cast<ConvEncoder*>(bundle.suite.semantic.get());
        Eigen::MatrixXd m;
        for (std::size_t i = 0; i < imgs.size(); ++i) {
            Tensor f = enc ? enc->trunk(ag::constant(imgs[i])).value()
                           : bundle.suite.semantic->embed(imgs[i]);
            if (m.rows() == 0) m.resize(imgs.size(), f.size());
            m.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
        }
        return m;
    };
    Eigen::MatrixXd f_swap = features(batch.images);
    Eigen::MatrixXd f_src = features(source_images);
    Eigen::MatrixXd f_tar = features(target_images);
    rep.frechet_distance = frechet_feature_distance(f_swap, f_src, cfg.shrinkage);
    rep.frechet_baseline = frechet_feature_distance(f_src, f_tar, cfg.shrinkage);

    rep.config_hash = fnv1a64(train_config_echo(bundle.cfg));
    rep.validate();

    std::string csv = "pair,source,target,rank\n";
    for (int i = 0; i < cfg.n_pairs; ++i)
        csv += std::to_string(i) + "," + names[i].first + "," + names[i].second + "," + std::to_string(ranks[i]) +
               "\n";
    write_text_file(out_dir + "/ranks.csv", csv);
    write_text_file(out_dir + "/eval_report.txt", rep.to_text());
    return rep;
}

}  // namespace fswap
