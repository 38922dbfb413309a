#include "nidda/table_io.hpp"

#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

#include "nidda/error.hpp"

namespace nidda::io {

std::string format_double(double v) { return fmt::format("{}", v); }

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw ConfigError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view tok, double& v) {
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  return ec == std::errc{} && ptr == tok.data() + tok.size() && !tok.empty();
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_done && line.starts_with('#')) {
      std::string_view c(line);
      c.remove_prefix(1);
      if (c.starts_with(' ')) c.remove_prefix(1);
      t.comments.emplace_back(c);
      continue;
    }
    if (!header_done) {
      t.header = split(line);
      header_done = true;
      continue;
    }
    t.rows.push_back(split(line));
  }
  return t;
}

std::string to_csv(const CsvTable& t) {
  std::string out;
  for (const auto& c : t.comments) out += "# " + c + "\n";
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  };
  emit(t.header);
  for (const auto& r : t.rows) emit(r);
  return out;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header, const std::vector<std::string>& comments) {
  if (static_cast<Eigen::Index>(header.size()) != m.cols()) {
    throw DimensionError("write_matrix_csv: header has " + std::to_string(header.size()) + " names for " +
                         std::to_string(m.cols()) + " columns");
  }
  std::string out;
  for (const auto& c : comments) out += "# " + c + "\n";
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* comments) {
  const CsvTable t = read_csv(path);
  if (comments) *comments = t.comments;
  // A header is optional: a first line that parses as numbers is data.
  std::vector<std::vector<std::string>> rows = t.rows;
  bool header_numeric = !t.header.empty();
  for (const auto& tok : t.header) {
    double v;
    header_numeric = header_numeric && parse_double(tok, v);
  }
  if (header_numeric) rows.insert(rows.begin(), t.header);
  const std::size_t cols = rows.empty() ? t.header.size() : rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) {
      throw ParseError(path.string() + ": row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                           " values, expected " + std::to_string(cols),
                       r + 1);
    }
    for (std::size_t c = 0; c < cols; ++c) {
      double v;
      if (!parse_double(rows[r][c], v)) {
        throw ParseError(path.string() + ": row " + std::to_string(r + 1) + " column " + std::to_string(c + 1) +
                             " is not a number: '" + rows[r][c] + "'",
                         r + 1, c + 1);
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return m;
}

}  // namespace nidda::io
