#include "flowvar/io.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "flowvar/errors.hpp"

namespace flowvar {

namespace {

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\r\n") != std::string::npos;
}

std::string quote(const std::string& s) {
  if (!needs_quoting(s)) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) {
    throw DomainError("CsvWriter: cannot open " + path.string());
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << quote(header[i]);
  }
  out_ << "\r\n";
}

CsvWriter& CsvWriter::field(const std::string& value) {
  if (in_row_ > 0) out_ << ',';
  out_ << quote(value);
  ++in_row_;
  return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(format_double(value)); }

CsvWriter& CsvWriter::field(std::int64_t value) {
  return field(std::to_string(value));
}

void CsvWriter::end_row() {
  if (in_row_ != columns_) {
    throw DomainError("CsvWriter: row width mismatch");
  }
  out_ << "\r\n";
  in_row_ = 0;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DomainError("read_csv: cannot open " + path.string());
  }
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.eof()) break;
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cell += '"';
            ++i;
          } else {
            quoted = false;
          }
        } else {
          cell += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        cells.push_back(std::move(cell));
        cell.clear();
      } else {
        cell += c;
      }
    }
    cells.push_back(std::move(cell));
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

Eigen::MatrixXd CsvTable::to_matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != header.size()) {
      throw ShapeError("CsvTable: ragged row");
    }
    for (std::size_t j = 0; j < header.size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::stod(rows[i][j]);
    }
  }
  return m;
}

void write_matrix_csv(const std::filesystem::path& path,
                      const Eigen::MatrixXd& m) {
  std::vector<std::string> header;
  header.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    header.push_back("c" + std::to_string(j));
  }
  CsvWriter w(path, header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      w.field(m(i, j));
    }
    w.end_row();
  }
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  return read_csv(path).to_matrix();
}

std::filesystem::path make_run_dir(const std::filesystem::path& base,
                                   const std::string& name) {
  std::filesystem::create_directories(base);
  const auto now = std::chrono::system_clock::now();
  const auto secs =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch())
          .count();
  for (int k = 0;; ++k) {
    std::ostringstream dir;
    dir << name << '-' << secs;
    if (k > 0) dir << '-' << k;
    const auto candidate = base / dir.str();
    if (!std::filesystem::exists(candidate)) {
      std::filesystem::create_directories(candidate);
      return candidate;
    }
  }
}

std::string version_string() {
  return std::string(FLOWVAR_VERSION) + " (" + FLOWVAR_GIT_DESCRIBE + ")";
}

}  // namespace flowvar
