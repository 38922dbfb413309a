#include "nidda/kdd.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <unordered_map>

#include "nidda/error.hpp"

namespace nidda::kdd {

const std::array<std::size_t, kFeatureDim>& feature_columns() {
  static const auto cols = [] {
    std::array<std::size_t, kFeatureDim> c{};
    std::size_t k = 0;
    for (std::size_t col = 0; col < kNumColumns; ++col) {
      if (std::find(kSymbolicColumns.begin(), kSymbolicColumns.end(), col) == kSymbolicColumns.end()) {
        c[k++] = col;
      }
    }
    return c;
  }();
  return cols;
}

const std::array<std::string_view, kNumColumns>& column_names() {
  static constexpr std::array<std::string_view, kNumColumns> names{
      "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
      "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
      "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
      "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
      "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
      "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
      "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
      "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
      "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate"};
  return names;
}

namespace {

// Returns the byte offset of the first invalid sequence, or npos.
std::size_t invalid_utf8_offset(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > s.size()) return i;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (cc & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::string_view::npos;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::string strip_underscores(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c != '_') out.push_back(c);
  }
  return out;
}

}  // namespace

RawRecord parse_line(std::string_view line, std::size_t line_no) {
  line = trim(line);
  if (const auto bad = invalid_utf8_offset(line); bad != std::string_view::npos) {
    throw ParseError("line " + std::to_string(line_no) + ": invalid UTF-8 at byte " +
                         std::to_string(bad + 1),
                     line_no, 0);
  }
  std::vector<std::string> tokens;
  tokens.reserve(kNumColumns + 1);
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    tokens.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (tokens.size() != kNumColumns + 1) {
    throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(kNumColumns + 1) +
                         " comma-separated tokens, found " + std::to_string(tokens.size()),
                     line_no, std::min(tokens.size(), kNumColumns + 1) + 1);
  }
  RawRecord r;
  r.line = line_no;
  std::string label = std::move(tokens.back());
  tokens.pop_back();
  if (!label.empty() && label.back() == '.') label.pop_back();
  if (label.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": empty label", line_no, kNumColumns + 1);
  }
  r.label = std::move(label);
  r.values = std::move(tokens);
  return r;
}

std::string format_record(const RawRecord& r) {
  std::string out;
  for (const auto& v : r.values) {
    out += v;
    out += ',';
  }
  out += r.label;
  out += '.';
  return out;
}

std::vector<RawRecord> parse_records(std::istream& in) {
  std::vector<RawRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    out.push_back(parse_line(line, line_no));
  }
  return out;
}

std::vector<RawRecord> parse_records_file(const std::filesystem::path& path) {
  // gzread reads plain files transparently.
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw ParseError("cannot open " + path.string(), 0);
  std::vector<RawRecord> out;
  std::string line;
  std::size_t line_no = 0;
  char buf[8192];
  try {
    for (;;) {
      int n = gzread(f, buf, sizeof buf);
      if (n < 0) throw ParseError("read error in " + path.string(), line_no);
      if (n == 0) break;
      for (int i = 0; i < n; ++i) {
        if (buf[i] == '\n') {
          ++line_no;
          if (!is_blank(line)) out.push_back(parse_line(line, line_no));
          line.clear();
        } else {
          line.push_back(buf[i]);
        }
      }
    }
    if (!line.empty()) {
      ++line_no;
      if (!is_blank(line)) out.push_back(parse_line(line, line_no));
    }
  } catch (const ParseError& e) {
    gzclose(f);
    throw ParseError(path.string() + ": " + e.what(), e.line(), e.column());
  }
  gzclose(f);
  return out;
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Normal: return "NORMAL";
    case Category::Dos: return "DOS";
    case Category::Probe: return "PROBE";
    case Category::U2R: return "U2R";
    case Category::R2L: return "R2L";
  }
  return "?";
}

Category category_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    if (to_string(static_cast<Category>(i)) == s) return static_cast<Category>(i);
  }
  throw LabelError("unknown category '" + std::string(s) + "'");
}

bool same_attack(std::string_view a, std::string_view b) { return strip_underscores(a) == strip_underscores(b); }

ClassLabel map_label(std::string_view fine) {
  // Training (22 attack types) and test-only (17) names, keyed without underscores.
  static const std::unordered_map<std::string, Category> table = [] {
    std::unordered_map<std::string, Category> t;
    auto add = [&](Category c, std::initializer_list<std::string_view> names) {
      for (auto n : names) t.emplace(strip_underscores(n), c);
    };
    add(Category::Normal, {"normal"});
    add(Category::Dos, {"back", "land", "neptune", "pod", "smurf", "teardrop", "apache2", "mailbomb",
                        "processtable", "udpstorm"});
    add(Category::Probe, {"ipsweep", "nmap", "portsweep", "satan", "mscan", "saint"});
    add(Category::R2L, {"ftp_write", "guess_passwd", "imap", "multihop", "phf", "spy", "warezclient",
                        "warezmaster", "named", "sendmail", "snmpgetattack", "snmpguess", "xlock",
                        "xsnoop", "worm"});
    add(Category::U2R, {"buffer_overflow", "loadmodule", "perl", "rootkit", "httptunnel", "ps",
                        "sqlattack", "xterm"});
    return t;
  }();
  std::string_view name = fine;
  if (!name.empty() && name.back() == '.') name.remove_suffix(1);
  const auto it = table.find(strip_underscores(name));
  if (it == table.end()) throw LabelError("unknown attack label '" + std::string(name) + "'");
  return ClassLabel{it->second, std::string(name)};
}

std::pair<Eigen::VectorXd, ClassLabel> encode_features(const RawRecord& r) {
  if (r.values.size() != kNumColumns) {
    throw EncodeError("record has " + std::to_string(r.values.size()) + " feature tokens, expected " +
                          std::to_string(kNumColumns),
                      r.values.size());
  }
  Eigen::VectorXd x(kFeatureDim);
  const auto& cols = feature_columns();
  for (std::size_t k = 0; k < kFeatureDim; ++k) {
    const std::string& tok = r.values[cols[k]];
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || tok.empty() || !std::isfinite(v) || v < 0.0) {
      throw EncodeError("line " + std::to_string(r.line) + ": column " + std::to_string(cols[k]) + " (" +
                            std::string(column_names()[cols[k]]) + ") is not a non-negative real: '" + tok + "'",
                        cols[k]);
    }
    x[static_cast<Eigen::Index>(k)] = v;
  }
  return {std::move(x), map_label(r.label)};
}

EncodedSet EncodedSet::subset(std::span<const std::size_t> rows) const {
  EncodedSet s;
  s.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  s.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    s.labels.push_back(labels[rows[i]]);
  }
  return s;
}

std::vector<std::size_t> EncodedSet::rows_of(std::string_view fine) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (same_attack(labels[i].fine, fine)) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> EncodedSet::rows_of(Category c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].coarse == c) out.push_back(i);
  }
  return out;
}

EncodedSet encode_all(std::span<const RawRecord> records) {
  EncodedSet s;
  s.x.resize(static_cast<Eigen::Index>(records.size()), kFeatureDim);
  s.labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [x, label] = encode_features(records[i]);
    s.x.row(static_cast<Eigen::Index>(i)) = x.transpose();
    s.labels.push_back(std::move(label));
  }
  return s;
}

std::array<std::size_t, kNumCategories> count_by_category(const EncodedSet& s) {
  std::array<std::size_t, kNumCategories> c{};
  for (const auto& l : s.labels) ++c[static_cast<std::size_t>(l.coarse)];
  return c;
}

std::map<std::string, std::size_t> count_by_fine(const EncodedSet& s) {
  std::map<std::string, std::size_t> c;
  for (const auto& l : s.labels) ++c[l.fine];
  return c;
}

Eigen::VectorXd Normalizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) throw DimensionError("Normalizer::apply: dimension mismatch");
  Eigen::VectorXd z = x;
  for (Eigen::Index i = 0; i < dim(); ++i) {
    if (continuous[static_cast<std::size_t>(i)]) z[i] = (x[i] - mean[i]) / std[i];
  }
  return z;
}

Eigen::MatrixXd Normalizer::apply(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != dim()) throw DimensionError("Normalizer::apply: dimension mismatch");
  Eigen::MatrixXd z = rows;
  for (Eigen::Index i = 0; i < dim(); ++i) {
    if (continuous[static_cast<std::size_t>(i)]) z.col(i) = (rows.col(i).array() - mean[i]) / std[i];
  }
  return z;
}

Eigen::VectorXd Normalizer::invert(const Eigen::VectorXd& z) const {
  if (z.size() != dim()) throw DimensionError("Normalizer::invert: dimension mismatch");
  Eigen::VectorXd x = z;
  for (Eigen::Index i = 0; i < dim(); ++i) {
    if (continuous[static_cast<std::size_t>(i)]) x[i] = z[i] * std[i] + mean[i];
  }
  return x;
}

Normalizer fit_normalizer(const Eigen::MatrixXd& train) {
  if (train.rows() == 0) throw DomainError("fit_normalizer: empty training set");
  const Eigen::Index k = train.cols();
  Normalizer n;
  n.mean = Eigen::VectorXd::Zero(k);
  n.std = Eigen::VectorXd::Ones(k);
  n.continuous.assign(static_cast<std::size_t>(k), false);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto col = train.col(i).array();
    const bool binary = ((col == 0.0) || (col == 1.0)).all();
    if (binary) continue;
    const double mu = col.mean();
    const double var = (col - mu).square().mean();
    n.continuous[static_cast<std::size_t>(i)] = true;
    n.mean[i] = mu;
    n.std[i] = std::max(std::sqrt(var), Normalizer::kStdFloor);
  }
  return n;
}

const Eigen::MatrixXd& SmallSamplePartition::seeds_of(std::string_view type) const {
  for (const auto& [name, m] : seeds) {
    if (same_attack(name, type)) return m;
  }
  throw ConfigError("no seeds for attack type '" + std::string(type) + "'");
}

namespace {

// First `count` entries of a seeded Fisher-Yates shuffle, kept in draw order.
std::vector<std::size_t> choose(std::vector<std::size_t> pool, std::size_t count, RandomSource& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

SmallSamplePartition partition_small_sample(const EncodedSet& train, const EncodedSet& test,
                                            std::span<const std::string> attack_types, std::size_t m,
                                            RandomSource& rng) {
  SmallSamplePartition p;
  p.attack_types.assign(attack_types.begin(), attack_types.end());
  p.normal_pool = train.rows_of(Category::Normal);
  std::vector<bool> removed(test.size(), false);
  for (const auto& type : attack_types) {
    const auto train_rows = train.rows_of(type);
    const auto test_rows = test.rows_of(type);
    if (train_rows.size() + test_rows.size() < m) {
      throw ConfigError("attack type '" + type + "' has " + std::to_string(train_rows.size() + test_rows.size()) +
                        " records, fewer than M=" + std::to_string(m));
    }
    SeedSource src;
    src.from_train = train_rows.size() >= m;
    src.rows = choose(src.from_train ? train_rows : test_rows, m, rng);
    const EncodedSet& from = src.from_train ? train : test;
    Eigen::MatrixXd seeds(static_cast<Eigen::Index>(m), from.x.cols());
    for (std::size_t i = 0; i < m; ++i) {
      seeds.row(static_cast<Eigen::Index>(i)) = from.x.row(static_cast<Eigen::Index>(src.rows[i]));
      if (!src.from_train) removed[src.rows[i]] = true;
    }
    p.seeds[type] = std::move(seeds);
    p.seed_sources[type] = std::move(src);
  }
  p.reduced_test.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!removed[i]) p.reduced_test.push_back(i);
  }
  return p;
}

}  // namespace nidda::kdd
