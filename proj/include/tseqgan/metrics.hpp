#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tseqgan/nets.hpp"
#include "tseqgan/sequence.hpp"

namespace tseqgan::metrics {

/// Samples in rows; row-major so the rows can be handed to the kernels.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class FeatureKind { kIntervals, kHidden, kCustom };
const char* to_string(FeatureKind kind);

struct FeatureBatch {
  RowMatrix x;
  FeatureKind kind = FeatureKind::kCustom;

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }
  /// Throws ContractError for n < 2, NumericError for non-finite entries.
  void validate(const char* what) const;
};

/// Intervals of steps 1 .. L-1 (the INI interval is constant and dropped).
FeatureBatch interval_features(const std::vector<Sequence>& seqs);
/// Final discriminator states [T_L ; h_L].
FeatureBatch hidden_features(const nets::Discrimination& d);

double rbq_mean(const std::vector<Sequence>& seqs);

/// Mean over `batch` of sum_m |one_hot(x_m) - median_m|_1, where median_m is
/// the coordinate-wise median of the one-hot encodings at step m of `base`
/// (of `batch` itself when base is null).
double mad(const std::vector<Sequence>& batch, const std::vector<Sequence>* base = nullptr);

struct FidResult {
  double value = 0.0;
  /// Negative eigenvalue mass removed by clamping, relative to the trace.
  double clamped_fraction = 0.0;
  bool clamp_warning() const { return clamped_fraction > 1e-6; }
};

/// |mu_x - mu_g|^2 + Tr(S_x + S_g - 2 (S_x^1/2 S_g S_x^1/2)^1/2), covariances
/// with the n-1 denominator.
FidResult fid_detail(const FeatureBatch& x, const FeatureBatch& g);
double fid(const FeatureBatch& x, const FeatureBatch& g);

struct MmdOptions {
  /// Kernel exp(-gamma |a-b|^2). If unset, gamma = 1 / (2 median^2) with the
  /// median pairwise distance of the pooled sample.
  std::optional<double> gamma;
  /// Points drawn (without replacement) from the pool for the median.
  std::size_t median_sample = 2000;
  std::uint64_t seed = 0;
};

struct MmdResult {
  double value = 0.0;
  double gamma = 0.0;
};

/// Unbiased squared MMD. Within-sample sums skip the diagonal; when the two
/// samples have equal size the cross sum skips i == j as well (U-statistic),
/// otherwise it is normalized by n m.
MmdResult mmd_detail(const FeatureBatch& x, const FeatureBatch& y, const MmdOptions& opts = {});
double mmd(const FeatureBatch& x, const FeatureBatch& y, const MmdOptions& opts = {});

/// FID between final discriminator hidden states of two batches.
double fidh(const nets::DiscriminatorParams& d, const std::vector<Sequence>& x, const std::vector<Sequence>& g,
            std::size_t length = kDefaultLength, nets::IntervalActivation act = nets::IntervalActivation::kSigmoid);

// --- PRD --------------------------------------------------------------------

struct KMeansResult {
  RowMatrix centers;
  std::vector<int> labels;
  double inertia = 0.0;
};

/// k-means++ seeding followed by Lloyd iterations; the best of `restarts`
/// runs by inertia is kept.
KMeansResult kmeans(const RowMatrix& points, std::size_t k, std::size_t restarts, std::size_t max_iter,
                    std::uint64_t seed);

struct PrdOptions {
  std::size_t num_clusters = 20;
  std::size_t num_angles = 1001;
  std::size_t restarts = 10;
  std::size_t max_iter = 100;
  std::uint64_t seed = 0;
};

struct PrdCurve {
  std::vector<double> precision;
  std::vector<double> recall;
};

/// Curve from histograms: reference P, evaluated Q, lambda = tan(theta) on a
/// uniform theta grid inside (0, pi/2).
PrdCurve prd_from_histograms(const std::vector<double>& p, const std::vector<double>& q, std::size_t num_angles);

/// Clusters the pooled features and compares the cluster histograms of the
/// evaluated batch `q` against the reference `p`.
PrdCurve prd_curve(const FeatureBatch& p, const FeatureBatch& q, const PrdOptions& opts = {});

/// max over the curve of F_beta(precision, recall).
double max_f_beta(const PrdCurve& c, double beta);
std::string prd_csv(const PrdCurve& c);

// --- Reports ----------------------------------------------------------------

struct MetricReport {
  double rbq_mean = 0.0;
  double mad = 0.0;
  double fid = 0.0;
  double mmd = 0.0;
  std::optional<double> fidh;
  PrdCurve prd;
  std::string base;  // description of the reference batch
  std::size_t n_eval = 0;
  std::size_t n_base = 0;
  std::string interval_features = "dt[1..L-1]";
  std::string hidden_features = "disc final [T;h]";
  double mmd_gamma = 0.0;
  double fid_clamped_fraction = 0.0;

  nlohmann::json to_json() const;
};

struct ReportOptions {
  MmdOptions mmd;
  PrdOptions prd;
  bool with_prd = true;
  std::size_t length = kDefaultLength;
  nets::IntervalActivation activation = nets::IntervalActivation::kSigmoid;
};

/// Full metric suite for `eval` against `base`. FIDH and PRD need a
/// discriminator; without one they are omitted.
MetricReport evaluate(const std::vector<Sequence>& eval, const std::vector<Sequence>& base,
                      const nets::DiscriminatorParams* disc, const std::string& base_name,
                      const ReportOptions& opts = {});

}  // namespace tseqgan::metrics
