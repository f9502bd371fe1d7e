#include "rkhs/io.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <charconv>
#include <cstdint>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace rkhs {

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : columns_(header.size()), path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += header[i];
  }
  buffer_ += '\n';
}

CsvWriter::~CsvWriter() {
  try {
    close();
  } catch (...) {
  }
}

void CsvWriter::row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_)
    throw std::invalid_argument("CsvWriter: row width " + std::to_string(values.size()) + " != " + std::to_string(columns_));
  auto it = std::back_inserter(buffer_);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) buffer_ += ',';
    fmt::format_to(it, "{:.17g}", values[i]);
  }
  buffer_ += '\n';
  if (buffer_.size() > (1u << 20)) {
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    buffer_.clear();
  }
}

void CsvWriter::close() {
  if (!out_.is_open()) return;
  out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  buffer_.clear();
  out_.close();
  if (!out_) throw std::runtime_error("error writing " + path_.string());
}

Eigen::MatrixXd read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    bool numeric = true;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t end = line.find(',', pos);
      if (end == std::string::npos) end = line.size();
      std::string_view field(line.data() + pos, end - pos);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double v = 0.0;
      if (!field.empty() && field.front() == '+') field.remove_prefix(1);
      auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || p != field.data() + field.size()) numeric = false;
      row.push_back(v);
      pos = end + 1;
    }
    if (!numeric) {
      if (rows == 0 && values.empty() && cols == 0) {
        cols = row.size();  // header line
        continue;
      }
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (rows == 0 && cols == 0) cols = row.size();
    if (row.size() != cols)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                               " fields, found " + std::to_string(row.size()));
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw std::runtime_error(path.string() + ": no data rows");
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = values[i * cols + j];
  return m;
}

namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      throw std::runtime_error("sha256: initialization failed");
  }
  void update(const void* p, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), p, n) != 1) throw std::runtime_error("sha256: update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw std::runtime_error("sha256: finalization failed");
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx_;
};

constexpr char kMagic[8] = {'R', 'K', 'H', 'S', 'F', 'I', 'T', '1'};

void put_i64(std::ostream& o, std::int64_t v) { o.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_f64(std::ostream& o, double v) { o.write(reinterpret_cast<const char*>(&v), sizeof v); }

void put_matrix(std::ostream& o, const Eigen::MatrixXd& m) {
  put_i64(o, m.rows());
  put_i64(o, m.cols());
  o.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

void put_vector(std::ostream& o, const Eigen::VectorXd& v) { put_matrix(o, v); }

std::int64_t get_i64(std::istream& in) {
  std::int64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("fit file truncated");
  return v;
}

double get_f64(std::istream& in) {
  double v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("fit file truncated");
  return v;
}

Eigen::MatrixXd get_matrix(std::istream& in) {
  const auto r = get_i64(in), c = get_i64(in);
  if (r < 0 || c < 0 || (r > 0 && c > (std::int64_t{1} << 40) / r)) throw std::runtime_error("fit file corrupt");
  Eigen::MatrixXd m(r, c);
  if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size())))
    throw std::runtime_error("fit file truncated");
  return m;
}

Eigen::VectorXd get_vector(std::istream& in) {
  Eigen::MatrixXd m = get_matrix(in);
  if (m.cols() != 1 && m.size() != 0) throw std::runtime_error("fit file corrupt: expected a vector");
  return Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

void save_fit(const std::filesystem::path& path, const FitArtifact& fit) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw std::runtime_error("cannot write " + tmp);
    o.write(kMagic, sizeof kMagic);
    put_matrix(o, fit.data);
    put_matrix(o, fit.features);
    put_i64(o, fit.knn);
    put_f64(o, fit.bandwidth.epsilon);
    put_f64(o, fit.bandwidth.density_epsilon);
    put_f64(o, fit.bandwidth.dimension);
    put_vector(o, fit.bandwidth.density);
    put_vector(o, fit.bandwidth.sigma);
    put_vector(o, fit.d);
    put_vector(o, fit.basis.lambda);
    put_matrix(o, fit.basis.phi);
    put_matrix(o, fit.basis.gamma);
    put_vector(o, fit.basis.q);
    put_f64(o, fit.markov_defect);
    if (!o) throw std::runtime_error("error writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

FitArtifact load_fit(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path.string() + ": not a fit file");
  FitArtifact f;
  f.data = get_matrix(in);
  f.features = get_matrix(in);
  f.knn = get_i64(in);
  f.bandwidth.epsilon = get_f64(in);
  f.bandwidth.density_epsilon = get_f64(in);
  f.bandwidth.dimension = get_f64(in);
  f.bandwidth.density = get_vector(in);
  f.bandwidth.sigma = get_vector(in);
  f.d = get_vector(in);
  f.basis.lambda = get_vector(in);
  f.basis.phi = get_matrix(in);
  f.basis.gamma = get_matrix(in);
  f.basis.q = get_vector(in);
  f.markov_defect = get_f64(in);
  const auto n = f.data.rows();
  if (f.features.rows() != n || f.bandwidth.sigma.size() != n || f.basis.phi.rows() != n ||
      f.basis.gamma.rows() != n || f.basis.q.size() != n || f.basis.phi.cols() != f.basis.lambda.size())
    throw std::runtime_error(path.string() + ": inconsistent fit file");
  return f;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw std::runtime_error("cannot write " + tmp);
    o.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!o) throw std::runtime_error("error writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace rkhs
