#pragma once

#include "rkhs/basis.hpp"
#include "rkhs/kernel.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace rkhs {

/// CSV writer: header row, comma separator, LF line endings, numbers printed with 17
/// significant digits.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  ~CsvWriter();

  void row(std::initializer_list<double> values);
  void row(const std::vector<double>& values);
  void close();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::string buffer_;
  std::filesystem::path path_;
};

std::string format_double(double v);

/// Numeric CSV with an optional header line. Throws std::runtime_error on ragged rows or
/// unparsable fields (with line numbers).
Eigen::MatrixXd read_csv(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Everything needed to rebuild spectra, forecasts and out-of-sample evaluations
/// without recomputing distances, bandwidths or the eigenbasis.
struct FitArtifact {
  Eigen::MatrixXd data;      // training points in data space (after delay embedding)
  Eigen::MatrixXd features;  // observation-map values aligned with the rows of data
  Eigen::Index knn = 0;
  BandwidthModel bandwidth;
  Eigen::VectorXd d;
  EigenBasis basis;
  double markov_defect = 0.0;
};

void save_fit(const std::filesystem::path& path, const FitArtifact& fit);
/// Throws std::runtime_error on a malformed or truncated file.
FitArtifact load_fit(const std::filesystem::path& path);

/// Writes text atomically (temporary file + rename).
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace rkhs
