#include "softsense/eval/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace softsense::eval {

using Eigen::Index;
using datagen::Structure;

double rmse(const VectorXd& predictions, const VectorXd& truth) {
  if (predictions.size() != truth.size())
    throw std::invalid_argument("rmse: lengths differ (" + std::to_string(predictions.size()) + " vs " +
                                std::to_string(truth.size()) + ")");
  if (predictions.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((predictions - truth).squaredNorm() / static_cast<double>(predictions.size()));
}

VectorXd to_reference_scale(const datagen::SensorDataset& d, const VectorXd& y_normalized) {
  const double span = d.y_ref_max - d.y_ref_min;
  VectorXd out(y_normalized.size());
  for (Index i = 0; i < y_normalized.size(); ++i) {
    const double phys = d.norm.y.invert(y_normalized[i], 0);
    out[i] = span > 0.0 ? (phys - d.y_ref_min) / span : phys - d.y_ref_min;
  }
  return out;
}

double test_rmse(const regress::RegressorModel& model, const datagen::SensorDataset& d) {
  const VectorXd pred = regress::gp_predict(model, d.X_test).mean;
  return rmse(to_reference_scale(d, pred), to_reference_scale(d, d.y_test));
}

Table TrajectoryPrediction::to_table(double dt) const {
  Table t;
  t.t0 = this->t.size() > 0 ? this->t[0] : 0.0;
  t.dt = dt;
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  t.add_column("t", vec(this->t));
  t.add_column("y", vec(truth));
  t.add_column("y_hat", vec(mean));
  t.add_column("y_std", vec(std));
  return t;
}

TrajectoryPrediction predict_trajectory(const regress::RegressorModel& model, const datagen::FeatureSeries& series,
                                        const datagen::SensorDataset& d, std::size_t chunk) {
  if (chunk < 1) throw std::invalid_argument("predict_trajectory: chunk must be >= 1");
  const auto width = static_cast<Index>(d.feature_names.size());
  if (model.input_dim() != width)
    throw std::invalid_argument("predict_trajectory: model expects " + std::to_string(model.input_dim()) +
                                " inputs but the " + std::string(datagen::to_string(d.code.structure)) +
                                " structure has " + std::to_string(width));
  const std::size_t first = d.code.structure == Structure::X5 ? datagen::kLags - 1 : 0;
  const std::size_t n = series.rows();
  if (n <= first) throw std::invalid_argument("predict_trajectory: trajectory shorter than the lag window");

  TrajectoryPrediction p;
  const auto count = static_cast<Index>(n - first);
  p.rows.resize(n - first);
  p.t.resize(count);
  p.truth.resize(count);
  p.mean.resize(count);
  p.std.resize(count);
  const double span = d.norm.y.constant(0) ? 1.0 : d.norm.y.hi[0] - d.norm.y.lo[0];
  for (std::size_t start = first; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    std::vector<std::size_t> rows;
    for (std::size_t k = start; k < stop; ++k) rows.push_back(k);
    const regress::Prediction pr = regress::gp_predict(model, datagen::structured_features(series, d, rows));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto o = static_cast<Index>(rows[i] - first);
      const auto k = static_cast<Index>(rows[i]);
      p.rows[static_cast<std::size_t>(o)] = rows[i];
      p.t[o] = series.t[k];
      p.truth[o] = series.y[k];
      p.mean[o] = d.norm.y.invert(pr.mean[static_cast<Index>(i)], 0);
      p.std[o] = std::sqrt(pr.variance[static_cast<Index>(i)]) * span;
    }
  }
  return p;
}

SegmentErrors segment_error_decomposition(const VectorXd& predicted, const VectorXd& truth,
                                          const std::vector<bool>& steady) {
  if (predicted.size() != truth.size() || static_cast<std::size_t>(predicted.size()) != steady.size())
    throw std::invalid_argument("segment_error_decomposition: series and mask lengths differ");
  double s_sum = 0.0, t_sum = 0.0;
  SegmentErrors e;
  for (Index i = 0; i < predicted.size(); ++i) {
    const double err = std::abs(predicted[i] - truth[i]);
    if (steady[static_cast<std::size_t>(i)]) {
      s_sum += err;
      ++e.steady_count;
    } else {
      t_sum += err;
      ++e.transient_count;
    }
  }
  if (e.steady_count > 0) e.steady_mae = s_sum / static_cast<double>(e.steady_count);
  if (e.transient_count > 0) e.transient_mae = t_sum / static_cast<double>(e.transient_count);
  if (e.steady_mae && e.transient_mae) {
    if (*e.steady_mae > 0.0)
      e.ratio = *e.transient_mae / *e.steady_mae;
    else if (*e.transient_mae > 0.0)
      e.ratio_infinite = true;
  }
  return e;
}

std::string format_alpha(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", alpha);
  return buf;
}

namespace {

char kind_letter(regress::ModelKind k) {
  switch (k) {
    case regress::ModelKind::SSDKL: return 'S';
    case regress::ModelKind::DKL: return 'D';
    case regress::ModelKind::GP: return 'G';
  }
  return '?';
}

double parse_double(std::string_view s, const char* what) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::invalid_argument(std::string(what) + ": cannot parse '" + std::string(s) + "'");
  return v;
}

std::string full(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_full(const std::string& s, const char* what) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return parse_double(s, what);
}

}  // namespace

std::string ScenarioCode::str() const {
  std::string s = data.str() + "-" + kind_letter(kind);
  if (kind == regress::ModelKind::SSDKL) s += "-" + format_alpha(alpha);
  return s;
}

ScenarioCode ScenarioCode::parse(std::string_view code) {
  // The dataset code has exactly three dash-separated fields.
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    pos = code.find('-', pos);
    if (pos == std::string_view::npos) throw std::invalid_argument("bad scenario code '" + std::string(code) + "'");
    ++pos;
  }
  ScenarioCode c;
  c.data = datagen::DatasetCode::parse(code.substr(0, pos - 1));
  const std::string rest(code.substr(pos));
  const std::size_t dash = rest.find('-');
  c.kind = regress::model_kind_from_string(std::string_view(rest).substr(0, dash));
  if (std::string_view(rest).substr(0, dash).size() != 1) throw std::invalid_argument("bad model letter in '" + std::string(code) + "'");
  if (c.kind == regress::ModelKind::SSDKL) {
    if (dash == std::string_view::npos) throw std::invalid_argument("SSDKL code needs alpha: '" + std::string(code) + "'");
    c.alpha = parse_double(std::string_view(rest).substr(dash + 1), "scenario alpha");
    if (!(c.alpha >= 0.0)) throw std::invalid_argument("negative alpha in '" + std::string(code) + "'");
  } else if (dash != std::string_view::npos) {
    throw std::invalid_argument("only SSDKL codes carry alpha: '" + std::string(code) + "'");
  }
  return c;
}

void assign_relative_to_dkl(std::vector<ScenarioResult>& results) {
  std::map<std::tuple<std::string, std::string, std::uint64_t>, double> dkl;
  for (const auto& r : results)
    if (r.status == "ok" && r.code.kind == regress::ModelKind::DKL)
      dkl[{r.trajectory, r.code.data.str(), r.seed}] = r.test_rmse;
  for (auto& r : results) {
    r.relative_to_dkl.reset();
    if (r.status != "ok") continue;
    const auto it = dkl.find({r.trajectory, r.code.data.str(), r.seed});
    if (it != dkl.end() && it->second > 0.0) r.relative_to_dkl = 100.0 * (r.test_rmse - it->second) / it->second;
  }
}

namespace {

const char* kCsvHeader =
    "trajectory,code,set,noise,structure,kind,alpha,seed,status,test_rmse,relative_to_dkl,selected_restart,"
    "validation_rmses,labels,unlabeled,wall_seconds,prediction_path,error";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits one CSV record (quotes may span newlines); returns false at EOF.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool quoted = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

}  // namespace

void write_results_csv(const std::filesystem::path& path, const std::vector<ScenarioResult>& results) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCsvHeader << '\n';
  for (const auto& r : results) {
    std::string vals;
    for (std::size_t i = 0; i < r.validation_rmses.size(); ++i) vals += (i ? ";" : "") + full(r.validation_rmses[i]);
    out << csv_field(r.trajectory) << ',' << r.code.str() << ',' << r.code.data.set << ','
        << datagen::to_string(r.code.data.noise) << ',' << datagen::to_string(r.code.data.structure) << ','
        << regress::to_string(r.code.kind) << ',' << full(r.code.alpha) << ',' << r.seed << ',' << r.status << ','
        << full(r.test_rmse) << ',' << (r.relative_to_dkl ? full(*r.relative_to_dkl) : "") << ','
        << r.selected_restart << ',' << vals << ',' << r.labels << ',' << r.unlabeled << ','
        << full(r.wall_seconds) << ',' << csv_field(r.prediction_path) << ',' << csv_field(r.error) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ScenarioResult> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> f;
  if (!read_record(in, f)) throw std::runtime_error(path.string() + ": empty results file");
  std::string header;
  for (std::size_t i = 0; i < f.size(); ++i) header += (i ? "," : "") + f[i];
  if (header != kCsvHeader) throw std::runtime_error(path.string() + ": unexpected results header");
  std::vector<ScenarioResult> out;
  std::size_t line = 1;
  while (read_record(in, f)) {
    ++line;
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 18) throw std::runtime_error(path.string() + ": record " + std::to_string(line) + " has " +
                                                 std::to_string(f.size()) + " fields");
    ScenarioResult r;
    r.trajectory = f[0];
    r.code = ScenarioCode::parse(f[1]);
    r.seed = std::stoull(f[7]);
    r.status = f[8];
    r.test_rmse = parse_full(f[9], "test_rmse");
    if (!f[10].empty()) r.relative_to_dkl = parse_full(f[10], "relative_to_dkl");
    r.selected_restart = std::stoul(f[11]);
    std::stringstream vs(f[12]);
    for (std::string v; std::getline(vs, v, ';');) r.validation_rmses.push_back(parse_full(v, "validation_rmses"));
    r.labels = std::stoul(f[13]);
    r.unlabeled = std::stoul(f[14]);
    r.wall_seconds = parse_full(f[15], "wall_seconds");
    r.prediction_path = f[16];
    r.error = f[17];
    out.push_back(std::move(r));
  }
  return out;
}

ComparisonTable build_comparison_table(const std::vector<ScenarioResult>& results, const std::string& trajectory,
                                       int set, datagen::Noise noise, std::uint64_t seed) {
  std::vector<const ScenarioResult*> sel;
  for (const auto& r : results)
    if (r.status == "ok" && r.trajectory == trajectory && r.code.data.set == set && r.code.data.noise == noise &&
        r.seed == seed)
      sel.push_back(&r);
  if (sel.empty())
    throw std::invalid_argument("build_comparison_table: no results for " + trajectory + " set " + std::to_string(set));

  std::vector<double> alphas;
  bool has_gp = false;
  std::vector<Structure> structures;
  for (const auto* r : sel) {
    if (r->code.kind == regress::ModelKind::SSDKL) alphas.push_back(r->code.alpha);
    has_gp = has_gp || r->code.kind == regress::ModelKind::GP;
    structures.push_back(r->code.data.structure);
  }
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  std::sort(structures.begin(), structures.end());
  structures.erase(std::unique(structures.begin(), structures.end()), structures.end());

  ComparisonTable t;
  t.trajectory = trajectory;
  t.set = set;
  t.noise = noise;
  t.seed = seed;
  struct RowKey {
    regress::ModelKind kind;
    double alpha;
  };
  std::vector<RowKey> rows;
  for (double a : alphas) {
    rows.push_back({regress::ModelKind::SSDKL, a});
    t.row_labels.push_back("SSDKL a=" + format_alpha(a));
  }
  rows.push_back({regress::ModelKind::DKL, 0.0});
  t.row_labels.push_back("DKL");
  if (has_gp) {
    rows.push_back({regress::ModelKind::GP, 0.0});
    t.row_labels.push_back("GP");
  }
  for (Structure s : structures) t.column_labels.emplace_back(datagen::to_string(s));
  t.cells.assign(rows.size(), std::vector<ComparisonTable::Cell>(structures.size()));

  for (std::size_t c = 0; c < structures.size(); ++c) {
    std::optional<double> dkl;
    for (const auto* r : sel)
      if (r->code.data.structure == structures[c] && r->code.kind == regress::ModelKind::DKL) dkl = r->test_rmse;
    if (!dkl)
      throw std::invalid_argument("build_comparison_table: no DKL baseline for " + trajectory + " " +
                                  datagen::DatasetCode{set, noise, structures[c]}.str());
    for (std::size_t rr = 0; rr < rows.size(); ++rr)
      for (const auto* r : sel)
        if (r->code.data.structure == structures[c] && r->code.kind == rows[rr].kind &&
            (rows[rr].kind != regress::ModelKind::SSDKL || r->code.alpha == rows[rr].alpha)) {
          auto& cell = t.cells[rr][c];
          cell.rmse = r->test_rmse;
          cell.relative = *dkl > 0.0 ? std::optional<double>(100.0 * (r->test_rmse - *dkl) / *dkl) : std::nullopt;
        }
    std::optional<std::size_t> best;
    for (std::size_t rr = 0; rr < rows.size(); ++rr) {
      const auto& cell = t.cells[rr][c];
      if (cell.rmse && (!best || *cell.rmse < *t.cells[*best][c].rmse)) best = rr;
    }
    if (best) t.cells[*best][c].is_min = true;
  }
  return t;
}

std::string render_markdown(const ComparisonTable& t) {
  std::ostringstream s;
  s << "| " << t.trajectory << " set " << t.set << "-" << datagen::to_string(t.noise) << " |";
  for (const auto& c : t.column_labels) s << ' ' << c << " |";
  s << "\n|---|";
  for (std::size_t c = 0; c < t.column_labels.size(); ++c) s << "---|";
  s << '\n';
  char buf[64];
  for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
    s << "| " << t.row_labels[r] << " |";
    for (const auto& cell : t.cells[r]) {
      if (!cell.rmse) {
        s << " - |";
        continue;
      }
      std::snprintf(buf, sizeof buf, "%.5f", *cell.rmse);
      std::string txt = buf;
      if (cell.relative) {
        std::snprintf(buf, sizeof buf, " (%+.1f %%)", *cell.relative);
        txt += buf;
      }
      s << ' ' << (cell.is_min ? "**" + txt + "**" : txt) << " |";
    }
    s << '\n';
  }
  return s.str();
}

std::string render_csv(const ComparisonTable& t) {
  std::ostringstream s;
  s << "row,column,rmse,relative_percent,is_min\n";
  for (std::size_t r = 0; r < t.row_labels.size(); ++r)
    for (std::size_t c = 0; c < t.column_labels.size(); ++c) {
      const auto& cell = t.cells[r][c];
      if (!cell.rmse) continue;
      s << t.row_labels[r] << ',' << t.column_labels[c] << ',' << full(*cell.rmse) << ','
        << (cell.relative ? full(*cell.relative) : "") << ',' << (cell.is_min ? 1 : 0) << '\n';
    }
  return s.str();
}

std::vector<std::vector<std::string>> parse_markdown_table(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] != '|') continue;
    if (line.rfind("|---", 0) == 0) continue;
    std::vector<std::string> cells;
    std::size_t pos = 1;
    while (pos < line.size()) {
      const std::size_t next = line.find('|', pos);
      if (next == std::string::npos) break;
      std::string cell = line.substr(pos, next - pos);
      for (std::size_t p; (p = cell.find("**")) != std::string::npos;) cell.erase(p, 2);
      const auto b = cell.find_first_not_of(' ');
      const auto e = cell.find_last_not_of(' ');
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
      pos = next + 1;
    }
    out.push_back(std::move(cells));
  }
  return out;
}

FrequencyAlphaMatrix build_frequency_alpha_matrix(const std::vector<ScenarioResult>& results,
                                                  const std::string& trajectory, datagen::Noise noise,
                                                  Structure structure, std::uint64_t seed) {
  FrequencyAlphaMatrix m;
  m.trajectory = trajectory;
  m.noise = noise;
  m.structure = structure;
  m.seed = seed;
  std::vector<const ScenarioResult*> sel;
  for (const auto& r : results)
    if (r.status == "ok" && r.trajectory == trajectory && r.code.kind == regress::ModelKind::SSDKL &&
        r.code.data.noise == noise && r.code.data.structure == structure && r.seed == seed) {
      sel.push_back(&r);
      m.sets.push_back(r.code.data.set);
      m.alphas.push_back(r.code.alpha);
    }
  if (sel.empty()) throw std::invalid_argument("build_frequency_alpha_matrix: no SSDKL results for " + trajectory);
  std::sort(m.sets.begin(), m.sets.end());
  m.sets.erase(std::unique(m.sets.begin(), m.sets.end()), m.sets.end());
  std::sort(m.alphas.begin(), m.alphas.end());
  m.alphas.erase(std::unique(m.alphas.begin(), m.alphas.end()), m.alphas.end());
  m.values.assign(m.sets.size(), std::vector<std::optional<double>>(m.alphas.size()));
  for (const auto* r : sel) {
    const auto i = static_cast<std::size_t>(std::find(m.sets.begin(), m.sets.end(), r->code.data.set) - m.sets.begin());
    const auto j =
        static_cast<std::size_t>(std::find(m.alphas.begin(), m.alphas.end(), r->code.alpha) - m.alphas.begin());
    m.values[i][j] = 100.0 * r->test_rmse;
  }
  return m;
}

std::string render_markdown(const FrequencyAlphaMatrix& m) {
  std::ostringstream s;
  s << "| 100 x RMSE " << m.trajectory << " " << datagen::to_string(m.noise) << "-"
    << datagen::to_string(m.structure) << " |";
  for (double a : m.alphas) s << " a=" << format_alpha(a) << " |";
  s << "\n|---|";
  for (std::size_t j = 0; j < m.alphas.size(); ++j) s << "---|";
  s << '\n';
  char buf[32];
  for (std::size_t i = 0; i < m.sets.size(); ++i) {
    s << "| Set " << m.sets[i] << " |";
    for (const auto& v : m.values[i]) {
      if (v) {
        std::snprintf(buf, sizeof buf, "%.5f", *v);
        s << ' ' << buf << " |";
      } else {
        s << " - |";
      }
    }
    s << '\n';
  }
  return s.str();
}

std::string render_csv(const FrequencyAlphaMatrix& m) {
  std::ostringstream s;
  s << "set,alpha,rmse_x100\n";
  for (std::size_t i = 0; i < m.sets.size(); ++i)
    for (std::size_t j = 0; j < m.alphas.size(); ++j)
      if (m.values[i][j]) s << m.sets[i] << ',' << format_alpha(m.alphas[j]) << ',' << full(*m.values[i][j]) << '\n';
  return s.str();
}

}  // namespace softsense::eval
