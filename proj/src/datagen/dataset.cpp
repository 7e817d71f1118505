#include "softsense/datagen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "softsense/common/json_util.hpp"
#include "softsense/common/rng.hpp"

namespace softsense::datagen {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double FeatureSeries::horizon_hours() const {
  return rows() < 2 ? 0.0 : (t[t.size() - 1] - t[0]) / 3600.0;
}

FeatureSeries select_features(const Table& trajectory) {
  FeatureSeries s;
  const auto n = static_cast<Index>(trajectory.rows());
  const auto& tcol = trajectory.col("t");
  s.t = Eigen::Map<const VectorXd>(tcol.data(), n);
  s.X.resize(n, static_cast<Index>(kFeatureNames.size()));
  for (std::size_t j = 0; j < kFeatureNames.size(); ++j) {
    const auto& c = trajectory.col(kFeatureNames[j]);
    s.X.col(static_cast<Index>(j)) = Eigen::Map<const VectorXd>(c.data(), n);
  }
  const auto& y = trajectory.col(kQualityName);
  s.y = Eigen::Map<const VectorXd>(y.data(), n);
  s.dt = trajectory.dt;
  return s;
}

std::string_view to_string(Structure s) {
  switch (s) {
    case Structure::X: return "X";
    case Structure::X5: return "X5";
    case Structure::XS: return "XS";
  }
  return "?";
}

std::string_view to_string(Noise n) { return n == Noise::Y ? "Y" : "N"; }

Structure structure_from_string(std::string_view s) {
  if (s == "X") return Structure::X;
  if (s == "X5") return Structure::X5;
  if (s == "XS") return Structure::XS;
  throw std::invalid_argument("unknown input structure: " + std::string(s));
}

Noise noise_from_string(std::string_view s) {
  if (s == "Y") return Noise::Y;
  if (s == "N") return Noise::N;
  throw std::invalid_argument("unknown noise tag: " + std::string(s));
}

std::string DatasetCode::str() const {
  return std::to_string(set) + "-" + std::string(to_string(noise)) + "-" + std::string(to_string(structure));
}

DatasetCode DatasetCode::parse(std::string_view code) {
  const auto a = code.find('-');
  const auto b = a == std::string_view::npos ? a : code.find('-', a + 1);
  if (b == std::string_view::npos || code.find('-', b + 1) != std::string_view::npos)
    throw std::invalid_argument("dataset code must look like 1-Y-X5: " + std::string(code));
  const std::string_view set = code.substr(0, a);
  if (set.size() != 1 || set[0] < '1' || set[0] > '4')
    throw std::invalid_argument("dataset code set must be 1..4: " + std::string(code));
  DatasetCode c;
  c.set = set[0] - '0';
  c.noise = noise_from_string(code.substr(a + 1, b - a - 1));
  c.structure = structure_from_string(code.substr(b + 1));
  return c;
}

double LabelSetSpec::rate_for_set(int set) {
  switch (set) {
    case 1: return 10.0;
    case 2: return 100.0;
    case 3: return 300.0;
    case 4: return 1000.0;
  }
  throw std::invalid_argument("label set must be 1..4, got " + std::to_string(set));
}

LabelSetSpec LabelSetSpec::for_set(int set, double label_scale, std::size_t min_count) {
  if (!(label_scale > 0.0)) throw std::invalid_argument("label_scale must be positive");
  return {set, rate_for_set(set), label_scale, min_count};
}

std::size_t LabelSetSpec::count(double horizon_hours) const {
  const double raw = std::round(per_1000h * horizon_hours * label_scale / 1000.0);
  return std::max(min_count, static_cast<std::size_t>(std::max(raw, 0.0)));
}

std::vector<std::size_t> place_labels(const std::vector<std::size_t>& eligible, std::size_t count,
                                      std::uint64_t seed) {
  if (count > eligible.size())
    throw std::invalid_argument("place_labels: " + std::to_string(count) + " labels requested but only " +
                                std::to_string(eligible.size()) + " grid points are eligible");
  // Partial Fisher-Yates over a copy.
  std::vector<std::size_t> pool = eligible;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<bool> TestSplit::mask(std::size_t rows) const {
  std::vector<bool> m(rows, false);
  if (rows == 0) return m;
  const double last = static_cast<double>(rows - 1);
  for (const auto& [a, b] : windows) {
    if (!(0.0 <= a && a < b && b <= 1.0)) throw std::invalid_argument("test window must satisfy 0 <= a < b <= 1");
    const auto lo = static_cast<std::size_t>(std::ceil(a * last));
    const auto hi = static_cast<std::size_t>(std::floor(b * last));
    for (std::size_t k = lo; k <= hi && k < rows; ++k) m[k] = true;
  }
  return m;
}

VectorXd default_thresholds(const MatrixXd& X, double fraction) {
  if (X.rows() == 0) return VectorXd::Zero(X.cols());
  // The floor keeps columns that are constant up to rounding from being
  // judged on their rounding noise.
  const VectorXd range = (X.colwise().maxCoeff() - X.colwise().minCoeff()).transpose();
  const VectorXd scale = X.cwiseAbs().colwise().maxCoeff().transpose();
  return (fraction * range).cwiseMax(1e-9 * scale);
}

std::vector<bool> detect_steady_state(const MatrixXd& X, std::size_t window_rows, const VectorXd& thresholds) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (window_rows == 0) throw std::invalid_argument("steady-state window must cover at least one row");
  if (thresholds.size() != X.cols()) throw std::invalid_argument("one steady-state threshold per column required");
  std::vector<bool> steady(n, n > 0);
  for (std::size_t k = 0; k + 1 < window_rows && k < n; ++k) steady[k] = false;
  // Sliding-window min and max with monotone deques.
  for (Index j = 0; j < X.cols(); ++j) {
    std::deque<std::size_t> lo, hi;
    for (std::size_t k = 0; k < n; ++k) {
      const double v = X(static_cast<Index>(k), j);
      while (!lo.empty() && X(static_cast<Index>(lo.back()), j) >= v) lo.pop_back();
      while (!hi.empty() && X(static_cast<Index>(hi.back()), j) <= v) hi.pop_back();
      lo.push_back(k);
      hi.push_back(k);
      if (k >= window_rows) {
        if (lo.front() <= k - window_rows) lo.pop_front();
        if (hi.front() <= k - window_rows) hi.pop_front();
      }
      if (k + 1 >= window_rows) {
        const double range = X(static_cast<Index>(hi.front()), j) - X(static_cast<Index>(lo.front()), j);
        if (!(range < thresholds[j])) steady[k] = false;
      }
    }
  }
  return steady;
}

MatrixXd trailing_mean(const MatrixXd& X, std::size_t rows) {
  if (rows <= 1) return X;
  MatrixXd out(X.rows(), X.cols());
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(X.cols());
  const auto L = static_cast<Index>(rows);
  for (Index k = 0; k < X.rows(); ++k) {
    acc += X.row(k);
    if (k >= L) acc -= X.row(k - L);
    out.row(k) = acc / static_cast<double>(std::min(k + 1, L));
  }
  return out;
}

std::vector<bool> SteadyDetector::detect(const FeatureSeries& series) const {
  if (!(series.dt > 0.0)) throw std::invalid_argument("steady-state detection needs a positive grid spacing");
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(window / series.dt)));
  const auto l = static_cast<std::size_t>(std::llround(std::max(smoothing, 0.0) / series.dt));
  return detect_steady_state(trailing_mean(series.X, l), w, default_thresholds(series.X, threshold_fraction));
}

MatrixXd lagged_rows(const MatrixXd& X, const std::vector<std::size_t>& rows, std::size_t lags) {
  const Index d = X.cols();
  MatrixXd out(static_cast<Index>(rows.size()), d * static_cast<Index>(lags));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t k = rows[r];
    if (k + 1 < lags) throw std::out_of_range("lagged row " + std::to_string(k) + " lacks history");
    for (std::size_t l = 0; l < lags; ++l)
      out.block(static_cast<Index>(r), static_cast<Index>(l) * d, 1, d) = X.row(static_cast<Index>(k - l));
  }
  return out;
}

MinMax MinMax::fit(const MatrixXd& A) {
  if (A.rows() == 0) throw std::invalid_argument("MinMax::fit on empty data");
  return {A.colwise().minCoeff().transpose(), A.colwise().maxCoeff().transpose()};
}

double MinMax::apply(double v, Index j) const {
  return constant(j) ? 0.5 : (v - lo[j]) / (hi[j] - lo[j]);
}

double MinMax::invert(double v, Index j) const {
  return constant(j) ? lo[j] : lo[j] + v * (hi[j] - lo[j]);
}

MatrixXd MinMax::apply(const MatrixXd& A) const {
  MatrixXd out(A.rows(), A.cols());
  for (Index j = 0; j < A.cols(); ++j)
    for (Index i = 0; i < A.rows(); ++i) out(i, j) = apply(A(i, j), j);
  return out;
}

MatrixXd MinMax::invert(const MatrixXd& A) const {
  MatrixXd out(A.rows(), A.cols());
  for (Index j = 0; j < A.cols(); ++j)
    for (Index i = 0; i < A.rows(); ++i) out(i, j) = invert(A(i, j), j);
  return out;
}

void to_json(nlohmann::json& j, const MinMax& m) {
  j = {{"lo", std::vector<double>(m.lo.data(), m.lo.data() + m.lo.size())},
       {"hi", std::vector<double>(m.hi.data(), m.hi.data() + m.hi.size())}};
}

void from_json(const nlohmann::json& j, MinMax& m) {
  const auto lo = j.at("lo").get<std::vector<double>>();
  const auto hi = j.at("hi").get<std::vector<double>>();
  if (lo.size() != hi.size()) throw std::invalid_argument("MinMax: lo/hi length mismatch");
  m.lo = Eigen::Map<const VectorXd>(lo.data(), static_cast<Index>(lo.size()));
  m.hi = Eigen::Map<const VectorXd>(hi.data(), static_cast<Index>(hi.size()));
}

namespace {

MatrixXd raw_features(const FeatureSeries& s, Structure st, const std::vector<std::size_t>& rows) {
  if (st == Structure::X5) return lagged_rows(s.X, rows, kLags);
  MatrixXd out(static_cast<Index>(rows.size()), s.X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = s.X.row(static_cast<Index>(rows[r]));
  return out;
}

VectorXd gather(const VectorXd& v, const std::vector<std::size_t>& rows) {
  VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Index>(r)] = v[static_cast<Index>(rows[r])];
  return out;
}

std::vector<std::string> feature_names_for(Structure st) {
  std::vector<std::string> names;
  const std::size_t lags = st == Structure::X5 ? kLags : 1;
  for (std::size_t l = 0; l < lags; ++l)
    for (auto f : kFeatureNames) names.push_back(l == 0 ? std::string(f) : std::string(f) + "[k-" + std::to_string(l) + "]");
  return names;
}

}  // namespace

SensorDataset build_dataset(const FeatureSeries& series, const DatasetSpec& spec) {
  const std::size_t n = series.rows();
  if (n <= kLags) throw std::invalid_argument("build_dataset: trajectory too short");
  if (!(series.dt > 0.0)) throw std::invalid_argument("build_dataset: trajectory grid spacing must be positive");

  SensorDataset d;
  d.code = spec.code;
  d.seed = spec.seed;
  d.dt = series.dt;
  d.feature_names = feature_names_for(spec.code.structure);

  const std::vector<bool> test = spec.test.mask(n);
  std::vector<std::size_t> eligible;
  for (std::size_t k = kLags - 1; k < n; ++k) {
    if (test[k])
      d.test_rows.push_back(k);
    else
      eligible.push_back(k);
  }
  if (d.test_rows.empty()) throw std::invalid_argument("build_dataset: empty test set");

  const LabelSetSpec ls = LabelSetSpec::for_set(spec.code.set, spec.label_scale, spec.min_labels);
  std::vector<std::size_t> labels =
      place_labels(eligible, ls.count(series.horizon_hours()), derive_seed(spec.seed, "labels", static_cast<std::uint64_t>(spec.code.set)));
  std::vector<std::size_t> unlabeled;
  std::set_difference(eligible.begin(), eligible.end(), labels.begin(), labels.end(), std::back_inserter(unlabeled));

  const std::vector<bool> steady = spec.steady.detect(series);
  std::size_t steady_count = 0;
  for (std::size_t k : eligible) steady_count += steady[k];
  d.steady_fraction = static_cast<double>(steady_count) / static_cast<double>(eligible.size());
  if (spec.code.structure == Structure::XS) {
    auto keep_steady = [&](std::vector<std::size_t>& v) {
      v.erase(std::remove_if(v.begin(), v.end(), [&](std::size_t k) { return !steady[k]; }), v.end());
    };
    keep_steady(labels);
    keep_steady(unlabeled);
    if (labels.empty())
      throw std::runtime_error("build_dataset: no labeled row is steady for " + spec.code.str());
    if (unlabeled.empty())
      throw std::runtime_error("build_dataset: no unlabeled row is steady for " + spec.code.str());
  }
  d.label_rows = std::move(labels);
  d.unlabeled_rows = std::move(unlabeled);

  const MatrixXd XL = raw_features(series, spec.code.structure, d.label_rows);
  const MatrixXd XU = raw_features(series, spec.code.structure, d.unlabeled_rows);
  const MatrixXd XT = raw_features(series, spec.code.structure, d.test_rows);
  const VectorXd yL = gather(series.y, d.label_rows);
  const VectorXd yT = gather(series.y, d.test_rows);

  MatrixXd train(XL.rows() + XU.rows(), XL.cols());
  train << XL, XU;
  d.norm.x = MinMax::fit(train);
  d.norm.y = MinMax::fit(yL);
  for (Index j = 0; j < train.cols(); ++j)
    if (d.norm.x.constant(j)) d.norm.constant_columns.push_back(d.feature_names[static_cast<std::size_t>(j)]);

  d.X_L = d.norm.x.apply(XL);
  d.X_U = d.norm.x.apply(XU);
  d.X_test = d.norm.x.apply(XT);
  d.y_L = d.norm.y.apply(MatrixXd(yL)).col(0);
  d.y_test = d.norm.y.apply(MatrixXd(yT)).col(0);
  d.norm.test_values_out_of_range = static_cast<std::size_t>(
      ((d.X_test.array() < 0.0) || (d.X_test.array() > 1.0)).count());
  d.y_ref_min = series.y.minCoeff();
  d.y_ref_max = series.y.maxCoeff();
  return d;
}

SensorDataset subsample_unlabeled(const SensorDataset& d, std::size_t max_count, std::uint64_t seed) {
  if (max_count < 1) throw std::invalid_argument("subsample_unlabeled: max_count must be at least 1");
  if (d.n() <= max_count) return d;
  std::vector<std::size_t> idx(d.n());
  std::iota(idx.begin(), idx.end(), 0);
  const std::vector<std::size_t> keep = place_labels(idx, max_count, seed);
  SensorDataset out = d;
  out.X_U.resize(static_cast<Index>(max_count), d.X_U.cols());
  out.unlabeled_rows.resize(max_count);
  for (std::size_t r = 0; r < max_count; ++r) {
    out.X_U.row(static_cast<Index>(r)) = d.X_U.row(static_cast<Index>(keep[r]));
    out.unlabeled_rows[r] = d.unlabeled_rows[keep[r]];
  }
  return out;
}

MatrixXd structured_features(const FeatureSeries& series, const SensorDataset& d,
                             const std::vector<std::size_t>& rows) {
  return d.norm.x.apply(raw_features(series, d.code.structure, rows));
}

namespace {

constexpr double kLabeledPool = 0.0, kUnlabeledPool = 1.0, kTestPool = 2.0;

}  // namespace

void save_dataset(const std::filesystem::path& dir, const SensorDataset& d, const FeatureSeries& series) {
  std::filesystem::create_directories(dir);
  Table x;
  x.dt = d.dt;
  const std::size_t total = d.m() + d.n() + d.test_rows.size();
  std::vector<double> row, t, pool, y;
  row.reserve(total);
  auto add_pool = [&](const std::vector<std::size_t>& rows, double tag, const VectorXd* yn) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      row.push_back(static_cast<double>(rows[r]));
      t.push_back(series.t[static_cast<Index>(rows[r])]);
      pool.push_back(tag);
      y.push_back(yn ? (*yn)[static_cast<Index>(r)] : std::numeric_limits<double>::quiet_NaN());
    }
  };
  add_pool(d.label_rows, kLabeledPool, &d.y_L);
  add_pool(d.unlabeled_rows, kUnlabeledPool, nullptr);
  add_pool(d.test_rows, kTestPool, &d.y_test);
  x.add_column("row", std::move(row));
  x.add_column("t", std::move(t));
  x.add_column("pool", std::move(pool));
  x.add_column("y_norm", std::move(y));
  for (std::size_t j = 0; j < d.feature_names.size(); ++j) {
    std::vector<double> c;
    c.reserve(total);
    const auto jj = static_cast<Index>(j);
    for (Index i = 0; i < d.X_L.rows(); ++i) c.push_back(d.X_L(i, jj));
    for (Index i = 0; i < d.X_U.rows(); ++i) c.push_back(d.X_U(i, jj));
    for (Index i = 0; i < d.X_test.rows(); ++i) c.push_back(d.X_test(i, jj));
    x.add_column(d.feature_names[j], std::move(c));
  }
  write_columnar(dir / "X.bin", x);

  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw std::runtime_error("cannot write " + (dir / "labels.csv").string());
  labels << "t,y\n" << std::setprecision(17);
  for (std::size_t r = 0; r < d.label_rows.size(); ++r)
    labels << series.t[static_cast<Index>(d.label_rows[r])] << ',' << series.y[static_cast<Index>(d.label_rows[r])] << '\n';

  nlohmann::json meta = {{"code", d.code.str()},
                         {"seed", d.seed},
                         {"dt", d.dt},
                         {"features", d.feature_names},
                         {"m", d.m()},
                         {"n", d.n()},
                         {"test_rows", d.test_rows.size()},
                         {"steady_fraction", d.steady_fraction},
                         {"y_reference", {d.y_ref_min, d.y_ref_max}},
                         {"normalization",
                          {{"x", d.norm.x},
                           {"y", d.norm.y},
                           {"constant_columns", d.norm.constant_columns},
                           {"test_values_out_of_range", d.norm.test_values_out_of_range}}}};
  write_json_file(dir / "meta.json", meta);
}

SensorDataset load_dataset(const std::filesystem::path& dir) {
  const nlohmann::json meta = read_json_file(dir / "meta.json");
  SensorDataset d;
  d.code = DatasetCode::parse(meta.at("code").get<std::string>());
  d.seed = meta.at("seed").get<std::uint64_t>();
  d.dt = meta.at("dt").get<double>();
  d.feature_names = meta.at("features").get<std::vector<std::string>>();
  d.steady_fraction = meta.at("steady_fraction").get<double>();
  d.y_ref_min = meta.at("y_reference")[0].get<double>();
  d.y_ref_max = meta.at("y_reference")[1].get<double>();
  const auto& jn = meta.at("normalization");
  d.norm.x = jn.at("x").get<MinMax>();
  d.norm.y = jn.at("y").get<MinMax>();
  d.norm.constant_columns = jn.at("constant_columns").get<std::vector<std::string>>();
  d.norm.test_values_out_of_range = jn.at("test_values_out_of_range").get<std::size_t>();

  const Table x = read_columnar(dir / "X.bin");
  const auto& row = x.col("row");
  const auto& pool = x.col("pool");
  const auto& y = x.col("y_norm");
  std::array<std::vector<std::size_t>, 3> idx;
  for (std::size_t i = 0; i < x.rows(); ++i) idx[static_cast<std::size_t>(pool[i])].push_back(i);
  const auto nf = static_cast<Index>(d.feature_names.size());
  auto fill = [&](const std::vector<std::size_t>& ids, MatrixXd& X, VectorXd* yv, std::vector<std::size_t>& rows) {
    X.resize(static_cast<Index>(ids.size()), nf);
    if (yv) yv->resize(static_cast<Index>(ids.size()));
    rows.clear();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      rows.push_back(static_cast<std::size_t>(row[ids[r]]));
      for (Index j = 0; j < nf; ++j) X(static_cast<Index>(r), j) = x.col(d.feature_names[static_cast<std::size_t>(j)])[ids[r]];
      if (yv) (*yv)[static_cast<Index>(r)] = y[ids[r]];
    }
  };
  fill(idx[0], d.X_L, &d.y_L, d.label_rows);
  fill(idx[1], d.X_U, nullptr, d.unlabeled_rows);
  fill(idx[2], d.X_test, &d.y_test, d.test_rows);
  return d;
}

}  // namespace softsense::datagen
