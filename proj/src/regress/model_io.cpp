#include "softsense/regress/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace softsense::regress {

using Eigen::Index;

static_assert(std::endian::native == std::endian::little, "model files are little-endian");

namespace {

constexpr char kMagic[8] = {'S', 'S', 'D', 'K', 'L', 'M', 'D', 'L'};

void put(std::ostream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void put(std::ostream& out, const MatrixXd& M) { put(out, M.data(), static_cast<std::size_t>(M.size())); }

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  void read(void* dst, std::size_t bytes, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes)
      throw std::runtime_error(std::string("model file truncated while reading ") + what);
  }
  double scalar(const char* what) {
    double v;
    read(&v, sizeof v, what);
    return v;
  }
  MatrixXd matrix(Index rows, Index cols, const char* what) {
    MatrixXd M(rows, cols);
    read(M.data(), sizeof(double) * static_cast<std::size_t>(M.size()), what);
    return M;
  }

 private:
  std::istream& in_;
};

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

}  // namespace

void save_model(const std::filesystem::path& path, const RegressorModel& model) {
  nlohmann::json h;
  h["kind"] = std::string(to_string(model.kind));
  h["alpha"] = model.alpha;
  h["n_train"] = model.X_train.rows();
  h["input_dim"] = model.X_train.cols();
  h["noise_floor"] = model.kernel.noise_floor;
  h["fingerprint"] = hex(training_fingerprint(model));
  h["metadata"] = model.metadata;
  if (model.net) {
    h["activation"] = std::string(to_string(model.net->activation));
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& W : model.net->weights) shapes.push_back({W.rows(), W.cols()});
    h["layers"] = shapes;
  }
  const std::string header = h.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kModelFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const double head[7] = {model.kernel.log_signal_var, model.kernel.log_lengthscale, model.kernel.log_noise,
                          model.kernel.noise_floor,    model.y_offset,                model.y_scale,
                          model.jitter};
  put(out, head, 7);
  if (model.net)
    for (std::size_t l = 0; l < model.net->weights.size(); ++l) {
      put(out, model.net->weights[l]);
      put(out, model.net->biases[l]);
    }
  put(out, model.X_train);
  put(out, model.y_train);
  put(out, model.chol);
  put(out, model.weights);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

RegressorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Reader rd(in);
  char magic[8];
  rd.read(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw std::runtime_error(path.string() + ": not a model file");
  std::uint32_t version = 0;
  rd.read(&version, sizeof version, "version");
  if (version != kModelFormatVersion)
    throw std::runtime_error(path.string() + ": unsupported model format version " + std::to_string(version));
  std::uint64_t len = 0;
  rd.read(&len, sizeof len, "header length");
  if (len > (1u << 26)) throw std::runtime_error(path.string() + ": implausible header length");
  std::string header(len, '\0');
  rd.read(header.data(), len, "header");
  const nlohmann::json h = nlohmann::json::parse(header);

  RegressorModel m;
  m.kind = model_kind_from_string(h.at("kind").get<std::string>());
  m.alpha = h.at("alpha").get<double>();
  m.metadata = h.value("metadata", nlohmann::json::object());
  const Index n = h.at("n_train").get<Index>();
  const Index d = h.at("input_dim").get<Index>();
  m.kernel.log_signal_var = rd.scalar("kernel");
  m.kernel.log_lengthscale = rd.scalar("kernel");
  m.kernel.log_noise = rd.scalar("kernel");
  m.kernel.noise_floor = rd.scalar("kernel");
  m.y_offset = rd.scalar("y_offset");
  m.y_scale = rd.scalar("y_scale");
  m.jitter = rd.scalar("jitter");
  if (h.contains("layers")) {
    FeatureNet net;
    net.activation = activation_from_string(h.at("activation").get<std::string>());
    for (const auto& s : h.at("layers")) {
      const Index r = s.at(0).get<Index>(), c = s.at(1).get<Index>();
      net.weights.push_back(rd.matrix(r, c, "net weights"));
      net.biases.push_back(rd.matrix(1, c, "net biases"));
    }
    net.validate();
    m.net = std::move(net);
  }
  m.X_train = rd.matrix(n, d, "training inputs");
  m.y_train = rd.matrix(n, 1, "training labels");
  m.chol = rd.matrix(n, n, "Cholesky factor");
  m.weights = rd.matrix(n, 1, "weights");
  if (hex(training_fingerprint(m)) != h.at("fingerprint").get<std::string>())
    throw std::runtime_error(path.string() + ": training-data fingerprint mismatch");
  m.Z_train = m.net ? feature_forward(*m.net, m.X_train) : m.X_train;
  const double drift = factorization_drift(m);
  if (!(drift <= 1e-8 * std::max(1.0, m.chol.cwiseAbs().maxCoeff())))
    throw std::runtime_error(path.string() + ": cached factorization does not match hyperparameters");
  return m;
}

nlohmann::json training_summary(const TrainResult& r, const TrainOptions& opt) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(r.model.kind));
  j["alpha"] = r.model.alpha;
  j["selected_restart"] = r.selected;
  j["options"] = opt;
  j["train_labels"] = r.train_index.size();
  j["validation_labels"] = r.validation_index.size();
  j["kernel"] = {{"signal_var", r.model.kernel.signal_var()},
                 {"lengthscale", r.model.kernel.lengthscale()},
                 {"noise_var", r.model.kernel.noise_var()},
                 {"jitter", r.model.jitter}};
  j["restarts"] = r.restarts;
  j["metadata"] = r.model.metadata;
  return j;
}

}  // namespace softsense::regress
