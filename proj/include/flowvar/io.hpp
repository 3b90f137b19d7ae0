#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace flowvar {

// RFC-4180 CSV, UTF-8, header row mandatory. Numeric cells are written with
// 17 significant digits so reruns byte-match.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header);

  CsvWriter& field(const std::string& value);
  CsvWriter& field(double value);
  CsvWriter& field(std::int64_t value);
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
  std::size_t in_row_ = 0;
};

std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Eigen::MatrixXd to_matrix() const;
};

CsvTable read_csv(const std::filesystem::path& path);

void write_matrix_csv(const std::filesystem::path& path,
                      const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

// Creates <base>/<name>-<stamp>[-k]; never reuses an existing directory.
std::filesystem::path make_run_dir(const std::filesystem::path& base,
                                   const std::string& name);

std::string version_string();

}  // namespace flowvar
