#include "tseqgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tseqgan/error.hpp"
#include "tseqgan/kernels.hpp"
#include "tseqgan/synthdata.hpp"

namespace tseqgan::metrics {

const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kIntervals: return "delta_t";
    case FeatureKind::kHidden: return "hidden_state";
    case FeatureKind::kCustom: return "custom";
  }
  return "?";
}

void FeatureBatch::validate(const char* what) const {
  if (x.rows() < 2) throw ContractError(std::string(what) + ": need at least two samples");
  if (!x.allFinite()) throw NumericError(std::string(what) + ": non-finite features");
}

namespace {

std::size_t common_length(const std::vector<Sequence>& seqs, const char* what) {
  if (seqs.empty()) throw ContractError(std::string(what) + ": empty batch");
  const std::size_t len = seqs.front().size();
  for (const auto& s : seqs)
    if (s.size() != len) throw ContractError(std::string(what) + ": sequences differ in length");
  return len;
}

void check_dims(const FeatureBatch& x, const FeatureBatch& y, const char* what) {
  x.validate(what);
  y.validate(what);
  if (x.dim() != y.dim()) throw DimensionError(std::string(what) + ": feature dimensions differ");
}

Eigen::VectorXd column_mean(const RowMatrix& x) { return x.colwise().mean().transpose(); }

Eigen::MatrixXd covariance(const RowMatrix& x) {
  Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

}  // namespace

FeatureBatch interval_features(const std::vector<Sequence>& seqs) {
  const std::size_t len = common_length(seqs, "interval_features");
  if (len < 2) throw ContractError("interval_features: sequences have no intervals");
  FeatureBatch f;
  f.kind = FeatureKind::kIntervals;
  f.x.resize(static_cast<Eigen::Index>(seqs.size()), static_cast<Eigen::Index>(len - 1));
  for (std::size_t i = 0; i < seqs.size(); ++i)
    for (std::size_t m = 1; m < len; ++m) f.x(i, m - 1) = seqs[i][m].dt;
  return f;
}

FeatureBatch hidden_features(const nets::Discrimination& d) {
  FeatureBatch f;
  f.kind = FeatureKind::kHidden;
  const auto rows = static_cast<Eigen::Index>(d.hidden.rows());
  const auto cols = static_cast<Eigen::Index>(d.hidden.cols());
  f.x = Eigen::Map<const RowMatrix>(d.hidden.data().data(), rows, cols);
  return f;
}

double rbq_mean(const std::vector<Sequence>& seqs) {
  if (seqs.empty()) throw ContractError("rbq_mean: empty batch");
  double s = 0.0;
  for (const auto& q : seqs) s += static_cast<double>(synth::check_rules(q).rbq);
  return s / static_cast<double>(seqs.size());
}

double mad(const std::vector<Sequence>& batch, const std::vector<Sequence>* base) {
  const std::vector<Sequence>& ref = base ? *base : batch;
  const std::size_t len = common_length(batch, "mad");
  if (common_length(ref, "mad") != len) throw ContractError("mad: batch and base lengths differ");

  // Coordinate-wise median of 0/1 values: 1, 0 or 0.5 on an exact tie.
  std::vector<std::array<double, kNumEventTypes>> median(len);
  for (std::size_t m = 0; m < len; ++m) {
    std::array<std::size_t, kNumEventTypes> ones{};
    for (const auto& s : ref) ++ones[index(s[m].type)];
    for (std::size_t k = 0; k < kNumEventTypes; ++k) {
      const std::size_t twice = 2 * ones[k];
      median[m][k] = twice > ref.size() ? 1.0 : twice < ref.size() ? 0.0 : 0.5;
    }
  }
  double total = 0.0;
  for (const auto& s : batch) {
    for (std::size_t m = 0; m < len; ++m) {
      const std::size_t hot = index(s[m].type);
      for (std::size_t k = 0; k < kNumEventTypes; ++k) total += std::abs((k == hot ? 1.0 : 0.0) - median[m][k]);
    }
  }
  return total / static_cast<double>(batch.size());
}

FidResult fid_detail(const FeatureBatch& x, const FeatureBatch& g) {
  check_dims(x, g, "fid");
  const Eigen::VectorXd dmu = column_mean(x.x) - column_mean(g.x);
  const Eigen::MatrixXd sx = covariance(x.x);
  const Eigen::MatrixXd sg = covariance(g.x);

  double clamped = 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ex(sx);
  Eigen::VectorXd lx = ex.eigenvalues();
  for (Eigen::Index i = 0; i < lx.size(); ++i) {
    if (lx[i] < 0) {
      clamped -= lx[i];
      lx[i] = 0;
    }
  }
  const Eigen::MatrixXd sx_half = ex.eigenvectors() * lx.cwiseSqrt().asDiagonal() * ex.eigenvectors().transpose();
  Eigen::MatrixXd m = sx_half * sg * sx_half;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < em.eigenvalues().size(); ++i) {
    const double v = em.eigenvalues()[i];
    if (v < 0) {
      clamped -= v;
    } else {
      tr_sqrt += std::sqrt(v);
    }
  }
  const double trace = sx.trace() + sg.trace();
  FidResult r;
  r.value = dmu.squaredNorm() + trace - 2.0 * tr_sqrt;
  r.clamped_fraction = trace > 0 ? clamped / trace : 0.0;
  if (!std::isfinite(r.value)) throw NumericError("fid: non-finite result");
  return r;
}

double fid(const FeatureBatch& x, const FeatureBatch& g) { return fid_detail(x, g).value; }

namespace {

double median_gamma(const FeatureBatch& x, const FeatureBatch& y, const MmdOptions& opts) {
  const std::size_t pool = x.n() + y.n();
  const std::size_t d = x.dim();
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t take = std::min(pool, std::max<std::size_t>(opts.median_sample, 2));
  Rng rng(opts.seed);
  for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(pool - i)]);
  std::vector<double> pts(take * d);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = idx[i];
    const auto& src = j < x.n() ? x.x : y.x;
    const Eigen::Index r = static_cast<Eigen::Index>(j < x.n() ? j : j - x.n());
    for (std::size_t c = 0; c < d; ++c) pts[i * d + c] = src(r, static_cast<Eigen::Index>(c));
  }
  std::vector<double> dists(take * (take - 1) / 2);
  kernels::pairwise_sq_dists(pts.data(), take, d, dists.data());
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double med = *mid;
  if (dists.size() % 2 == 0) med = 0.5 * (med + *std::max_element(dists.begin(), mid));
  return med > 0 ? 1.0 / (2.0 * med) : 1.0;
}

double kernel_mean(const RowMatrix& a, const RowMatrix& b, double gamma, bool skip_diagonal) {
  const auto na = static_cast<std::size_t>(a.rows()), nb = static_cast<std::size_t>(b.rows());
  std::vector<double> rows(na);
  kernels::rbf_row_sums(a.data(), na, b.data(), nb, static_cast<std::size_t>(a.cols()), gamma, skip_diagonal,
                        rows.data());
  double s = 0.0;
  for (double v : rows) s += v;
  const double pairs = skip_diagonal ? double(na) * double(na - 1) : double(na) * double(nb);
  return s / pairs;
}

}  // namespace

MmdResult mmd_detail(const FeatureBatch& x, const FeatureBatch& y, const MmdOptions& opts) {
  check_dims(x, y, "mmd");
  MmdResult r;
  r.gamma = opts.gamma ? *opts.gamma : median_gamma(x, y, opts);
  if (!(r.gamma > 0)) throw ContractError("mmd: kernel gamma must be positive");
  const double kxx = kernel_mean(x.x, x.x, r.gamma, true);
  const double kyy = kernel_mean(y.x, y.x, r.gamma, true);
  const double kxy = kernel_mean(x.x, y.x, r.gamma, x.n() == y.n());
  r.value = kxx + kyy - 2.0 * kxy;
  return r;
}

double mmd(const FeatureBatch& x, const FeatureBatch& y, const MmdOptions& opts) {
  return mmd_detail(x, y, opts).value;
}

double fidh(const nets::DiscriminatorParams& d, const std::vector<Sequence>& x, const std::vector<Sequence>& g,
            std::size_t length, nets::IntervalActivation act) {
  return fid(hidden_features(nets::discriminate(d, x, length, act)),
             hidden_features(nets::discriminate(d, g, length, act)));
}

// --- PRD ----------------------------------------------------------------------

namespace {

KMeansResult kmeans_once(const RowMatrix& pts, std::size_t k, std::size_t max_iter, Rng& rng) {
  const auto n = static_cast<std::size_t>(pts.rows());
  const auto d = static_cast<std::size_t>(pts.cols());
  KMeansResult r;
  r.centers.resize(static_cast<Eigen::Index>(k), pts.cols());
  r.labels.assign(n, -1);
  std::vector<double> dist(n);
  std::vector<int> lab(n);

  r.centers.row(0) = pts.row(static_cast<Eigen::Index>(rng.below(n)));
  for (std::size_t c = 1; c < k; ++c) {
    kernels::nearest_center(pts.data(), n, r.centers.data(), c, d, lab.data(), dist.data());
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    const std::size_t pick = total > 0 ? rng.categorical(dist) : rng.below(n);
    r.centers.row(static_cast<Eigen::Index>(c)) = pts.row(static_cast<Eigen::Index>(pick));
  }

  for (std::size_t it = 0; it < max_iter; ++it) {
    kernels::nearest_center(pts.data(), n, r.centers.data(), k, d, lab.data(), dist.data());
    const bool changed = lab != r.labels;
    r.labels = lab;
    if (!changed) break;
    RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(k), pts.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(lab[i]) += pts.row(static_cast<Eigen::Index>(i));
      ++counts[static_cast<std::size_t>(lab[i])];
    }
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      if (counts[c] > 0) {
        r.centers.row(ci) = sums.row(ci) / static_cast<double>(counts[c]);
      } else {
        // Empty cluster: move it onto the point farthest from its center.
        const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
        r.centers.row(ci) = pts.row(far);
        dist[static_cast<std::size_t>(far)] = 0.0;
      }
    }
  }
  kernels::nearest_center(pts.data(), n, r.centers.data(), k, d, lab.data(), dist.data());
  r.labels = lab;
  r.inertia = std::accumulate(dist.begin(), dist.end(), 0.0);
  return r;
}

}  // namespace

KMeansResult kmeans(const RowMatrix& points, std::size_t k, std::size_t restarts, std::size_t max_iter,
                    std::uint64_t seed) {
  if (k < 1 || static_cast<Eigen::Index>(k) > points.rows()) throw ContractError("kmeans: need 1 <= k <= n");
  if (restarts < 1) throw ContractError("kmeans: need at least one restart");
  Rng rng(seed);
  KMeansResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    KMeansResult cur = kmeans_once(points, k, max_iter, rng);
    if (r == 0 || cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

PrdCurve prd_from_histograms(const std::vector<double>& p, const std::vector<double>& q, std::size_t num_angles) {
  if (p.size() != q.size()) throw DimensionError("prd: histogram sizes differ");
  if (num_angles < 3) throw ContractError("prd: need at least 3 angles");
  constexpr double eps = 1e-10;
  PrdCurve c;
  c.precision.resize(num_angles);
  c.recall.resize(num_angles);
  const double step = (std::numbers::pi / 2 - 2 * eps) / static_cast<double>(num_angles - 1);
  for (std::size_t a = 0; a < num_angles; ++a) {
    const double lambda = std::tan(eps + step * static_cast<double>(a));
    double alpha = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] == 0.0 && q[i] == 0.0) continue;
      alpha += std::min(lambda * p[i], q[i]);
    }
    c.precision[a] = std::clamp(alpha, 0.0, 1.0);
    c.recall[a] = std::clamp(alpha / lambda, 0.0, 1.0);
  }
  return c;
}

PrdCurve prd_curve(const FeatureBatch& p, const FeatureBatch& q, const PrdOptions& opts) {
  check_dims(p, q, "prd");
  if (opts.num_clusters < 2) throw ContractError("prd: need at least 2 clusters");
  RowMatrix pooled(p.x.rows() + q.x.rows(), p.x.cols());
  pooled << p.x, q.x;
  KMeansResult km = kmeans(pooled, opts.num_clusters, opts.restarts, opts.max_iter, opts.seed);
  std::vector<double> hp(opts.num_clusters, 0.0), hq(opts.num_clusters, 0.0);
  for (std::size_t i = 0; i < p.n(); ++i) hp[static_cast<std::size_t>(km.labels[i])] += 1.0 / double(p.n());
  for (std::size_t i = 0; i < q.n(); ++i) hq[static_cast<std::size_t>(km.labels[p.n() + i])] += 1.0 / double(q.n());
  return prd_from_histograms(hp, hq, opts.num_angles);
}

double max_f_beta(const PrdCurve& c, double beta) {
  double best = 0.0;
  const double b2 = beta * beta;
  for (std::size_t i = 0; i < c.precision.size(); ++i) {
    const double p = c.precision[i], r = c.recall[i];
    if (p + r <= 0) continue;
    best = std::max(best, (1 + b2) * p * r / (b2 * p + r));
  }
  return best;
}

std::string prd_csv(const PrdCurve& c) {
  std::ostringstream out;
  out.precision(17);
  out << "precision,recall\n";
  for (std::size_t i = 0; i < c.precision.size(); ++i) out << c.precision[i] << ',' << c.recall[i] << '\n';
  return out.str();
}

// --- Reports ------------------------------------------------------------------

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["rbq"] = rbq_mean;
  j["mad"] = mad;
  j["fid"] = fid;
  j["mmd"] = mmd;
  j["fidh"] = fidh ? nlohmann::json(*fidh) : nlohmann::json(nullptr);
  j["base"] = base;
  j["n_eval"] = n_eval;
  j["n_base"] = n_base;
  j["features"] = {{"fid_mmd", interval_features}, {"fidh_prd", hidden_features}};
  j["mmd_gamma"] = mmd_gamma;
  j["fid_clamped_fraction"] = fid_clamped_fraction;
  if (!prd.precision.empty()) {
    j["prd"] = {{"points", prd.precision.size()}, {"f8", max_f_beta(prd, 8.0)}, {"f1_8", max_f_beta(prd, 1.0 / 8.0)}};
  }
  return j;
}

MetricReport evaluate(const std::vector<Sequence>& eval, const std::vector<Sequence>& base,
                      const nets::DiscriminatorParams* disc, const std::string& base_name, const ReportOptions& opts) {
  MetricReport r;
  r.base = base_name;
  r.n_eval = eval.size();
  r.n_base = base.size();
  r.rbq_mean = rbq_mean(eval);
  r.mad = mad(eval, &base);
  const FeatureBatch fe = interval_features(eval), fb = interval_features(base);
  const FidResult f = fid_detail(fe, fb);
  r.fid = f.value;
  r.fid_clamped_fraction = f.clamped_fraction;
  const MmdResult m = mmd_detail(fe, fb, opts.mmd);
  r.mmd = m.value;
  r.mmd_gamma = m.gamma;
  if (disc) {
    const FeatureBatch he = hidden_features(nets::discriminate(*disc, eval, opts.length, opts.activation));
    const FeatureBatch hb = hidden_features(nets::discriminate(*disc, base, opts.length, opts.activation));
    r.fidh = fid(he, hb);
    if (opts.with_prd) r.prd = prd_curve(hb, he, opts.prd);
  }
  return r;
}

}  // namespace tseqgan::metrics
