#ifndef FSWAP_EVALUATION_HPP
#define FSWAP_EVALUATION_HPP

#include <functional>
#include <optional>

#include "fswap/inference.hpp"

namespace fswap {

// Background-masked identity retrieval: features on masked images, cosine
// ranking over all sources, deterministic lowest-index tie-break.
std::pair<double, double> id_retrieval(const std::vector<Tensor>& swapped, const std::vector<Tensor>& sources,
                                       const std::vector<BinaryMask>& swapped_masks,
                                       const std::vector<BinaryMask>& source_masks, const ImageEncoder& id_encoder,
                                       std::vector<int>* ranks_out = nullptr);

using FactorExtractor = std::function<std::optional<Eigen::VectorXd>(const Tensor&)>;

struct PoseExprResult {
    double pose_l2 = 0, expr_l2 = 0;
    int pose_failures = 0, expr_failures = 0;
};

// Mean Euclidean distance between extractor outputs on swapped vs target;
// per-item extractor failures are excluded and counted.
PoseExprResult pose_expr_error(const std::vector<Tensor>& swapped, const std::vector<Tensor>& targets,
                               const FactorExtractor& pose_fn, const FactorExtractor& expr_fn);

FactorExtractor toy_pose_extractor();
FactorExtractor toy_expression_extractor();

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}) over Gaussians fitted to
// the rows. Without shrinkage each set needs >= dim+1 samples; shrinkage
// blends each covariance toward its scaled identity.
double frechet_feature_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double shrinkage = 0.0);

struct EvalConfig {
    int n_pairs = 64;
    int n_steps = 50;
    MaskPreset preset = MaskPreset::face;
    std::vector<int> custom_categories;
    std::uint64_t seed = 0;
    double shrinkage = 0.05;
    int workers = 1;
};

struct EvalReport {
    double frechet_distance = 0;
    double frechet_baseline = 0;  // real-vs-real reference over the same protocol
    double id_top1 = 0, id_top5 = 0;
    double pose_l2 = 0, expr_l2 = 0;
    int pairs = 0;
    int pose_failures = 0, expr_failures = 0;
    std::uint64_t config_hash = 0;

    void validate() const;
    std::string to_text() const;
    static EvalReport from_text(const std::string& text);
};

// The full protocol: sample disjoint source/target items from the val split
// (cross-identity pairs), swap_batch, compute retrieval / pose / expression /
// Frechet metrics, write eval_report.txt and ranks.csv under out_dir.
EvalReport run_benchmark(const ModelBundle& bundle, const Dataset& ds, const EvalConfig& cfg,
                         const std::string& out_dir);

}  // namespace fswap

#endif
