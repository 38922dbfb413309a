#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

/// Plain-text helpers for the CSV artifacts the pipeline exchanges.
///
/// Numeric CSV files may open with any number of `#` comment lines (used for
/// provenance) and one header line of column names. Values are written in
/// shortest round-trip form, so a write/read cycle is exact.
namespace nidda::io {

std::string format_double(double v);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> comments;  // without the leading "# "
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);
std::string to_csv(const CsvTable& t);

/// Numeric matrix with a header and provenance comments.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header, const std::vector<std::string>& comments);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* comments = nullptr);

}  // namespace nidda::io
