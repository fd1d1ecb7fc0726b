#pragma once

#include <optional>
#include <string>
#include <vector>

namespace iconmark {

struct ScoredSample {
    double score = 0.0;
    bool label = false;  // true = watermarked
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    // Generating threshold(s); classify positive iff score > tau. tau_b is
    // set only on fused curves. +/-inf mark the appended endpoints.
    double tau_a = 0.0;
    std::optional<double> tau_b;
};

struct RocCurve {
    std::vector<RocPoint> points;  // fpr non-decreasing, tpr non-decreasing
    double auc = 0.0;
};

// Threshold sweep over distinct scores under the strict `score > tau` rule;
// ties collapse to one vertex; endpoints (0,0) and (1,1) included; trapezoid AUC.
RocCurve roc_curve(const std::vector<ScoredSample>& samples);

double auroc(const std::vector<ScoredSample>& samples);

// Max TPR over achievable thresholds with empirical FPR <= alpha. Conservative
// step convention: no interpolation between operating points.
double tpr_at_fpr(const std::vector<ScoredSample>& samples, double alpha);

double best_threshold_accuracy(const std::vector<ScoredSample>& samples);

// OR-rule fusion: positive iff score_a > tau_a OR score_b > tau_b. Enumerates
// all threshold pairs over distinct scores plus +inf sentinels, keeps the
// Pareto frontier (P is dropped iff some Q has Q.fpr < P.fpr and Q.tpr >= P.tpr),
// dedupes identical operating points, appends (0,0) and (1,1).
RocCurve fuse_or_roc(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                     const std::vector<bool>& labels);

double clip_score(const std::vector<double>& text_emb, const std::vector<double>& image_emb);

// Mean over unordered pairs of (1 - cosine similarity).
double diversity_score(const std::vector<std::vector<double>>& image_embs);

// Smallest threshold (over distinct observed scores) whose empirical FPR on
// the clean calibration scores is <= alpha.
double calibrate_threshold(const std::vector<double>& clean_scores, double alpha);

// The four scalars reported per detector/attack cell.
struct DetectionMetrics {
    double auc = 0.0;
    double accuracy = 0.0;
    double tpr_at_5fpr = 0.0;
    double tpr_at_1fpr = 0.0;
};

DetectionMetrics compute_metrics(const std::vector<ScoredSample>& samples);
DetectionMetrics metrics_from_curve(const RocCurve& curve, size_t n_pos, size_t n_neg);

std::string roc_csv(const RocCurve& curve);  // fpr,tpr,threshold_a,threshold_b

}  // namespace iconmark
