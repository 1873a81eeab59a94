#include "sodkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace sodkit {

namespace {

constexpr double kEps = 1e-12;

void check_pair(const MapPair& p) {
    const size_t n = static_cast<size_t>(p.width) * p.height;
    if (p.pred.size() != n || p.gt.size() != n)
        throw DimensionError("metrics: map size does not match declared dimensions");
    for (double g : p.gt)
        if (g != 0.0 && g != 1.0)
            throw ValidationError("metrics: ground truth must be binary {0,1}");
}

struct Hist {
    std::array<long long, 256> pos{}, neg{};
    long long npos = 0, nneg = 0;
};

Hist quantized_hist(const MapPair& p) {
    Hist h;
    for (size_t i = 0; i < p.pred.size(); ++i) {
        const int q = quantize8(p.pred[i]);
        if (p.gt[i] > 0.5) {
            h.pos[q] += 1;
            h.npos += 1;
        } else {
            h.neg[q] += 1;
            h.nneg += 1;
        }
    }
    return h;
}

// TP/FP counts of the binarization {q >= t}
void counts_at(const Hist& h, int t, long long& tp, long long& fp) {
    tp = fp = 0;
    for (int q = t; q < 256; ++q) {
        tp += h.pos[q];
        fp += h.neg[q];
    }
}

double f_from_pr(double precision, double recall) {
    const double denom = kFBetaSq * precision + recall;
    return denom > 0.0 ? (1.0 + kFBetaSq) * precision * recall / denom : 0.0;
}

int adaptive_threshold(const MapPair& p) {
    double mean = 0.0;
    for (double v : p.pred) mean += quantize8(v);
    mean /= static_cast<double>(p.pred.size());
    return std::min(254, static_cast<int>(std::floor(2.0 * mean)));
}

}  // namespace

double mae(const MapPair& p) {
    check_pair(p);
    double s = 0.0;
    for (size_t i = 0; i < p.pred.size(); ++i) s += std::abs(p.pred[i] - p.gt[i]);
    return s / static_cast<double>(p.pred.size());
}

double fbeta(const MapPair& p, FbetaPolicy policy, bool* empty_gt_flag) {
    check_pair(p);
    const Hist h = quantized_hist(p);
    if (empty_gt_flag) *empty_gt_flag = h.npos == 0;
    if (h.npos == 0) return 0.0;
    long long tp, fp;
    if (policy == FbetaPolicy::Adaptive) {
        counts_at(h, adaptive_threshold(p) + 1, tp, fp);  // strict q > t
        const double prec = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        return f_from_pr(prec, static_cast<double>(tp) / h.npos);
    }
    double best = 0.0;
    for (int t = 0; t < 256; ++t) {
        counts_at(h, t, tp, fp);
        const double prec = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        best = std::max(best, f_from_pr(prec, static_cast<double>(tp) / h.npos));
    }
    return best;
}

Curves pr_curves(const std::vector<MapPair>& dataset) {
    if (dataset.empty()) throw ValidationError("pr_curves: empty dataset");
    Curves c;
    for (const auto& p : dataset) {
        check_pair(p);
        const Hist h = quantized_hist(p);
        for (int t = 0; t < 256; ++t) {
            long long tp, fp;
            counts_at(h, t, tp, fp);
            const double prec = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
            const double rec = h.npos > 0 ? static_cast<double>(tp) / h.npos : 0.0;
            c.precision[t] += prec;
            c.recall[t] += rec;
            c.f[t] += f_from_pr(prec, rec);
        }
    }
    const double inv = 1.0 / static_cast<double>(dataset.size());
    for (int t = 0; t < 256; ++t) {
        c.precision[t] *= inv;
        c.recall[t] *= inv;
        c.f[t] *= inv;
    }
    return c;
}

double e_measure(const MapPair& p) {
    check_pair(p);
    const int ta = adaptive_threshold(p);
    const size_t n = p.pred.size();
    std::vector<double> fm(n);
    for (size_t i = 0; i < n; ++i) fm[i] = quantize8(p.pred[i]) > ta ? 1.0 : 0.0;
    double gsum = 0.0;
    for (double g : p.gt) gsum += g;
    double score = 0.0;
    if (gsum == 0.0) {
        for (size_t i = 0; i < n; ++i) score += 1.0 - fm[i];
    } else if (gsum == static_cast<double>(n)) {
        for (size_t i = 0; i < n; ++i) score += fm[i];
    } else {
        double fmean = 0.0;
        for (double v : fm) fmean += v;
        fmean /= static_cast<double>(n);
        const double gmean = gsum / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) {
            const double dfm = fm[i] - fmean;
            const double dgt = p.gt[i] - gmean;
            const double align = 2.0 * dgt * dfm / (dgt * dgt + dfm * dfm + kEps);
            score += (align + 1.0) * (align + 1.0) / 4.0;
        }
    }
    return score / static_cast<double>(n);
}

namespace {

struct Moments {
    double mean = 0.0, sd = 0.0;
    long long n = 0;
};

Moments masked_moments(const std::vector<double>& v, const std::vector<double>& mask,
                       bool select_fg) {
    Moments m;
    for (size_t i = 0; i < v.size(); ++i)
        if ((mask[i] > 0.5) == select_fg) {
            m.mean += v[i];
            m.n += 1;
        }
    if (m.n == 0) return m;
    m.mean /= static_cast<double>(m.n);
    double acc = 0.0;
    for (size_t i = 0; i < v.size(); ++i)
        if ((mask[i] > 0.5) == select_fg) acc += (v[i] - m.mean) * (v[i] - m.mean);
    if (m.n > 1) m.sd = std::sqrt(acc / static_cast<double>(m.n - 1));
    return m;
}

double object_score(const Moments& m) {
    return 2.0 * m.mean / (m.mean * m.mean + 1.0 + m.sd + kEps);
}

double region_ssim(const MapPair& p, int x0, int x1, int y0, int y1) {
    const long long n = static_cast<long long>(x1 - x0) * (y1 - y0);
    if (n == 0) return 1.0;
    double xm = 0.0, ym = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            xm += p.pred[static_cast<size_t>(y) * p.width + x];
            ym += p.gt[static_cast<size_t>(y) * p.width + x];
        }
    xm /= static_cast<double>(n);
    ym /= static_cast<double>(n);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const double dx = p.pred[static_cast<size_t>(y) * p.width + x] - xm;
            const double dy = p.gt[static_cast<size_t>(y) * p.width + x] - ym;
            sx += dx * dx;
            sy += dy * dy;
            sxy += dx * dy;
        }
    const double div = n > 1 ? static_cast<double>(n - 1) : 1.0;
    sx /= div;
    sy /= div;
    sxy /= div;
    const double alpha = 4.0 * xm * ym * sxy;
    const double beta = (xm * xm + ym * ym) * (sx + sy);
    if (alpha != 0.0) return alpha / (beta + kEps);
    return beta == 0.0 ? 1.0 : 0.0;
}

}  // namespace

double s_measure(const MapPair& p) {
    check_pair(p);
    const size_t n = p.pred.size();
    double gsum = 0.0, psum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        gsum += p.gt[i];
        psum += p.pred[i];
    }
    const double y = gsum / static_cast<double>(n);
    if (y == 0.0) return 1.0 - psum / static_cast<double>(n);
    if (y == 1.0) return psum / static_cast<double>(n);

    // object-aware term
    std::vector<double> inv_pred(n);
    for (size_t i = 0; i < n; ++i) inv_pred[i] = 1.0 - p.pred[i];
    const double s_o = y * object_score(masked_moments(p.pred, p.gt, true)) +
                       (1.0 - y) * object_score(masked_moments(inv_pred, p.gt, false));

    // region-aware term: 4-way split about the foreground centroid
    double cx = 0.0, cy = 0.0;
    for (int yy = 0; yy < p.height; ++yy)
        for (int xx = 0; xx < p.width; ++xx) {
            const double g = p.gt[static_cast<size_t>(yy) * p.width + xx];
            cx += g * xx;
            cy += g * yy;
        }
    cx /= gsum;
    cy /= gsum;
    // cut placed at the pixel boundary nearest the centroid center
    const int X = std::clamp(static_cast<int>(std::lround(cx + 0.5)), 1, p.width - 1);
    const int Y = std::clamp(static_cast<int>(std::lround(cy + 0.5)), 1, p.height - 1);
    const std::array<std::array<int, 4>, 4> regions{{{0, X, 0, Y},
                                                     {X, p.width, 0, Y},
                                                     {0, X, Y, p.height},
                                                     {X, p.width, Y, p.height}}};
    double s_r = 0.0;
    for (const auto& r : regions) {
        const double w =
            static_cast<double>(r[1] - r[0]) * (r[3] - r[2]) / static_cast<double>(n);
        s_r += w * region_ssim(p, r[0], r[1], r[2], r[3]);
    }
    return std::max(0.0, kSAlpha * s_o + (1.0 - kSAlpha) * s_r);
}

MetricReport evaluate_pairs(const std::vector<MapPair>& dataset) {
    if (dataset.empty()) throw ValidationError("evaluate: empty dataset");
    MetricReport r;
    r.images = static_cast<int>(dataset.size());
    for (const auto& p : dataset) {
        r.mae += mae(p);
        r.fbeta_max += fbeta(p, FbetaPolicy::MaxThreshold);
        r.fbeta_adaptive += fbeta(p, FbetaPolicy::Adaptive);
        r.e_measure += e_measure(p);
        r.s_measure += s_measure(p);
    }
    const double inv = 1.0 / r.images;
    r.mae *= inv;
    r.fbeta_max *= inv;
    r.fbeta_adaptive *= inv;
    r.e_measure *= inv;
    r.s_measure *= inv;
    r.curves = pr_curves(dataset);
    double fsum = 0.0;
    for (double f : r.curves.f) fsum += f;
    r.fbeta_mean = fsum / kCurvePoints;
    return r;
}

MetricReport evaluate_dataset(const std::filesystem::path& pred_dir,
                              const std::filesystem::path& gt_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(pred_dir) || !fs::is_directory(gt_dir))
        throw IoError("evaluate_dataset: both arguments must be directories");
    std::map<std::string, fs::path> preds;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.path().extension() == ".pgm") preds[e.path().stem().string()] = e.path();
    if (preds.empty()) throw ValidationError("evaluate_dataset: no .pgm predictions found");
    std::vector<MapPair> pairs;
    std::vector<std::string> missing;
    for (const auto& [stem, ppath] : preds) {
        const fs::path gpath = gt_dir / (stem + ".pgm");
        if (!fs::exists(gpath)) {
            missing.push_back(stem);
            continue;
        }
        Image pi = read_pnm(ppath);
        Image gi = read_pnm(gpath);
        if (pi.width != gi.width || pi.height != gi.height || pi.channels != 1 ||
            gi.channels != 1)
            throw ValidationError("evaluate_dataset: size/format mismatch for stem " + stem);
        MapPair mp{pi.width, pi.height, std::move(pi.v), std::move(gi.v)};
        for (auto& g : mp.gt) g = g >= 0.5 ? 1.0 : 0.0;
        pairs.push_back(std::move(mp));
    }
    if (pairs.empty()) throw ValidationError("evaluate_dataset: no matching pairs");
    MetricReport r = evaluate_pairs(pairs);
    r.missing = std::move(missing);
    return r;
}

void write_report_csv(const MetricReport& r, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "report.csv");
        out << "metric,value\n";
        char buf[64];
        auto row = [&](const char* name, double v) {
            std::snprintf(buf, sizeof buf, "%.10g", v);
            out << name << "," << buf << "\n";
        };
        row("mae", r.mae);
        row("fbeta_max", r.fbeta_max);
        row("fbeta_adaptive", r.fbeta_adaptive);
        row("fbeta_mean", r.fbeta_mean);
        row("e_measure", r.e_measure);
        row("s_measure", r.s_measure);
        out << "images," << r.images << "\n";
        out << "missing," << r.missing.size() << "\n";
    }
    {
        std::ofstream out(out_dir / "pr_curve.csv");
        out << "threshold,precision,recall\n";
        char buf[96];
        for (int t = 0; t < kCurvePoints; ++t) {
            std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g", t, r.curves.precision[t],
                          r.curves.recall[t]);
            out << buf << "\n";
        }
    }
    {
        std::ofstream out(out_dir / "f_curve.csv");
        out << "threshold,f\n";
        char buf[64];
        for (int t = 0; t < kCurvePoints; ++t) {
            std::snprintf(buf, sizeof buf, "%d,%.10g", t, r.curves.f[t]);
            out << buf << "\n";
        }
    }
}

}  // namespace sodkit
