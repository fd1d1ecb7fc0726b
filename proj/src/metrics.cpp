#include "iconmark/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "iconmark/strutil.hpp"

namespace iconmark {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SweepPoint {
    double tau;
    size_t tp, fp;
};

struct ClassCounts {
    size_t pos = 0, neg = 0;
};

ClassCounts check_two_class(const std::vector<ScoredSample>& samples) {
    ClassCounts c;
    for (const auto& s : samples) {
        if (!std::isfinite(s.score)) throw std::invalid_argument("non-finite score");
        (s.label ? c.pos : c.neg)++;
    }
    if (c.pos == 0 || c.neg == 0)
        throw std::invalid_argument("both classes required: pos=" + std::to_string(c.pos) +
                                    " neg=" + std::to_string(c.neg));
    return c;
}

// Operating points for tau in {+inf} + distinct scores (desc) + {-inf},
// under the strict `score > tau` rule. tp/fp counts are monotone in the walk.
std::vector<SweepPoint> threshold_sweep(const std::vector<ScoredSample>& samples) {
    std::vector<ScoredSample> sorted = samples;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });
    std::vector<SweepPoint> pts;
    pts.push_back({kInf, 0, 0});
    size_t tp = 0, fp = 0, i = 0;
    while (i < sorted.size()) {
        const double tau = sorted[i].score;
        pts.push_back({tau, tp, fp});  // predicted positive: score > tau (groups above)
        while (i < sorted.size() && sorted[i].score == tau) {
            (sorted[i].label ? tp : fp)++;
            ++i;
        }
    }
    pts.push_back({-kInf, tp, fp});  // everything predicted positive
    return pts;
}

double trapezoid_auc(const std::vector<RocPoint>& pts) {
    double auc = 0.0;
    for (size_t i = 1; i < pts.size(); ++i)
        auc += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) * 0.5;
    return auc;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("embedding dimension mismatch");
    if (a.empty()) throw std::invalid_argument("empty embedding");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
            throw std::invalid_argument("non-finite embedding component");
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("zero-norm embedding");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

RocCurve roc_curve(const std::vector<ScoredSample>& samples) {
    const ClassCounts c = check_two_class(samples);
    const auto sweep = threshold_sweep(samples);
    RocCurve curve;
    for (const auto& p : sweep) {
        const double fpr = double(p.fp) / double(c.neg);
        const double tpr = double(p.tp) / double(c.pos);
        if (!curve.points.empty() && curve.points.back().fpr == fpr &&
            curve.points.back().tpr == tpr)
            continue;  // tied scores / sentinel duplicates collapse to one vertex
        curve.points.push_back({fpr, tpr, p.tau, std::nullopt});
    }
    curve.auc = trapezoid_auc(curve.points);
    return curve;
}

double auroc(const std::vector<ScoredSample>& samples) { return roc_curve(samples).auc; }

double tpr_at_fpr(const std::vector<ScoredSample>& samples, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha out of [0,1]");
    const ClassCounts c = check_two_class(samples);
    double best = 0.0;
    for (const auto& p : threshold_sweep(samples)) {
        const double fpr = double(p.fp) / double(c.neg);
        if (fpr <= alpha) best = std::max(best, double(p.tp) / double(c.pos));
    }
    return best;
}

double best_threshold_accuracy(const std::vector<ScoredSample>& samples) {
    const ClassCounts c = check_two_class(samples);
    const double total = double(c.pos + c.neg);
    double best = 0.0;
    for (const auto& p : threshold_sweep(samples)) {
        const double acc = (double(p.tp) + double(c.neg - p.fp)) / total;
        best = std::max(best, acc);
    }
    return best;
}

RocCurve fuse_or_roc(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                     const std::vector<bool>& labels) {
    const size_t n = labels.size();
    if (scores_a.size() != n || scores_b.size() != n)
        throw std::invalid_argument("fuse_or_roc: misaligned score/label lengths");
    if (n == 0) throw std::invalid_argument("fuse_or_roc: empty input");
    size_t P = 0, N = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(scores_a[i]) || !std::isfinite(scores_b[i]))
            throw std::invalid_argument("non-finite score");
        (labels[i] ? P : N)++;
    }
    if (P == 0 || N == 0) throw std::invalid_argument("both classes required");

    std::vector<double> va(scores_a), vb(scores_b);
    std::sort(va.begin(), va.end());
    va.erase(std::unique(va.begin(), va.end()), va.end());
    std::sort(vb.begin(), vb.end());
    vb.erase(std::unique(vb.begin(), vb.end()), vb.end());
    const size_t da = va.size(), db = vb.size();

    // le[i][j] = #samples with a <= va[i-1] and b <= vb[j-1], per label.
    // tau_a = va[i-1] misses a sample via A iff a <= tau_a; the pair (tau_a,
    // tau_b) then detects TP = P - le_pos[i][j]. The +inf sentinel coincides
    // with the max-score threshold under the strict `>` rule.
    auto idx = [db](size_t i, size_t j) { return i * (db + 1) + j; };
    std::vector<std::uint32_t> le_pos((da + 1) * (db + 1), 0), le_neg((da + 1) * (db + 1), 0);
    for (size_t s = 0; s < n; ++s) {
        const size_t ra = size_t(std::lower_bound(va.begin(), va.end(), scores_a[s]) - va.begin());
        const size_t rb = size_t(std::lower_bound(vb.begin(), vb.end(), scores_b[s]) - vb.begin());
        (labels[s] ? le_pos : le_neg)[idx(ra + 1, rb + 1)]++;
    }
    for (size_t i = 1; i <= da; ++i)
        for (size_t j = 1; j <= db; ++j) {
            le_pos[idx(i, j)] += le_pos[idx(i - 1, j)] + le_pos[idx(i, j - 1)] - le_pos[idx(i - 1, j - 1)];
            le_neg[idx(i, j)] += le_neg[idx(i - 1, j)] + le_neg[idx(i, j - 1)] - le_neg[idx(i - 1, j - 1)];
        }

    // Dedupe identical operating points, keeping the largest threshold pair.
    std::map<std::pair<double, double>, std::pair<double, double>> points;
    for (size_t i = 1; i <= da; ++i) {
        for (size_t j = 1; j <= db; ++j) {
            const size_t tp = P - le_pos[idx(i, j)];
            const size_t fp = N - le_neg[idx(i, j)];
            const double fpr = double(fp) / double(N);
            const double tpr = double(tp) / double(P);
            const std::pair<double, double> taus{va[i - 1], vb[j - 1]};
            auto [it, inserted] = points.emplace(std::make_pair(fpr, tpr), taus);
            if (!inserted && taus > it->second) it->second = taus;
        }
    }

    // Pareto filter: drop P iff some Q has Q.fpr < P.fpr and Q.tpr >= P.tpr.
    // Map iteration is (fpr asc, tpr asc); track max tpr at strictly smaller fpr.
    std::vector<RocPoint> kept;
    double best_tpr_before = -1.0;
    double group_fpr = -1.0, group_max_tpr = -1.0;
    for (const auto& [key, taus] : points) {
        const auto [fpr, tpr] = key;
        if (fpr != group_fpr) {
            best_tpr_before = std::max(best_tpr_before, group_max_tpr);
            group_fpr = fpr;
            group_max_tpr = -1.0;
        }
        group_max_tpr = std::max(group_max_tpr, tpr);
        if (tpr > best_tpr_before) kept.push_back({fpr, tpr, taus.first, taus.second});
    }

    RocCurve curve;
    curve.points = std::move(kept);
    const bool has_origin =
        !curve.points.empty() && curve.points.front().fpr == 0.0 && curve.points.front().tpr == 0.0;
    if (!has_origin)
        curve.points.insert(curve.points.begin(), {0.0, 0.0, kInf, kInf});
    if (curve.points.back().fpr != 1.0 || curve.points.back().tpr != 1.0)
        curve.points.push_back({1.0, 1.0, -kInf, -kInf});
    curve.auc = trapezoid_auc(curve.points);
    return curve;
}

double clip_score(const std::vector<double>& text_emb, const std::vector<double>& image_emb) {
    return cosine(text_emb, image_emb);
}

double diversity_score(const std::vector<std::vector<double>>& image_embs) {
    if (image_embs.size() < 2)
        throw std::invalid_argument("diversity_score needs at least 2 embeddings");
    double sum = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < image_embs.size(); ++i)
        for (size_t j = i + 1; j < image_embs.size(); ++j) {
            sum += 1.0 - cosine(image_embs[i], image_embs[j]);
            ++pairs;
        }
    return sum / double(pairs);
}

double calibrate_threshold(const std::vector<double>& clean_scores, double alpha) {
    if (clean_scores.empty()) throw std::invalid_argument("empty calibration set");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha out of [0,1]");
    std::vector<double> v = clean_scores;
    std::sort(v.begin(), v.end());
    const double n = double(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        if (i + 1 < v.size() && v[i + 1] == v[i]) continue;  // skip to last of tie group
        const double above = n - double(i + 1);              // scores > v[i]
        if (above / n <= alpha) return v[i];
    }
    return v.back();
}

DetectionMetrics compute_metrics(const std::vector<ScoredSample>& samples) {
    DetectionMetrics m;
    m.auc = auroc(samples);
    m.accuracy = best_threshold_accuracy(samples);
    m.tpr_at_5fpr = tpr_at_fpr(samples, 0.05);
    m.tpr_at_1fpr = tpr_at_fpr(samples, 0.01);
    return m;
}

DetectionMetrics metrics_from_curve(const RocCurve& curve, size_t n_pos, size_t n_neg) {
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("both classes required");
    DetectionMetrics m;
    m.auc = curve.auc;
    const double total = double(n_pos + n_neg);
    for (const auto& p : curve.points) {
        m.accuracy = std::max(m.accuracy,
                              (p.tpr * double(n_pos) + (1.0 - p.fpr) * double(n_neg)) / total);
        if (p.fpr <= 0.05) m.tpr_at_5fpr = std::max(m.tpr_at_5fpr, p.tpr);
        if (p.fpr <= 0.01) m.tpr_at_1fpr = std::max(m.tpr_at_1fpr, p.tpr);
    }
    return m;
}

std::string roc_csv(const RocCurve& curve) {
    std::string out = "fpr,tpr,threshold_a,threshold_b\n";
    for (const auto& p : curve.points) {
        out += format_double(p.fpr) + "," + format_double(p.tpr) + "," + format_double(p.tau_a) +
               ",";
        if (p.tau_b) out += format_double(*p.tau_b);
        out += "\n";
    }
    return out;
}

}  // namespace iconmark
