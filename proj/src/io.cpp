#include "mtdl/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "parallel.hpp"

namespace mtdl::io {

std::string format_double(double v, int significant_digits) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::general, significant_digits);
  if (ec != std::errc{}) throw Error(ErrorCode::IoError, "cannot format number");
  return std::string(buf.data(), end);
}

double parse_double(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::IoError, "not a number: '" + std::string(s) + "'");
  }
  return v;
}

long long parse_int(std::string_view s) {
  s = trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::IoError, "not an integer: '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw Error(ErrorCode::IoError, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

/// Non-empty lines after the header; checks the header's column count.
std::vector<std::vector<std::string_view>> csv_rows(std::string_view text,
                                                    std::string_view first_column,
                                                    std::size_t* columns = nullptr) {
  auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]).empty()) throw Error(ErrorCode::IoError, "empty CSV");
  const auto header = split(trim(lines[0]), ',');
  if (trim(header[0]) != first_column) {
    throw Error(ErrorCode::IoError, "unexpected CSV header '" + std::string(trim(lines[0])) + "'");
  }
  if (columns) *columns = header.size();
  std::vector<std::vector<std::string_view>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::IoError, "CSV row " + std::to_string(i + 1) + " has " +
                                          std::to_string(cells.size()) + " cells, expected " +
                                          std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

void check_frame(std::string_view cell, std::size_t expected) {
  if (parse_int(cell) != static_cast<long long>(expected)) {
    throw Error(ErrorCode::IoError, "frames must be numbered 1..N in order");
  }
}

}  // namespace

std::string video_csv(const SimVideo& v) {
  std::string out = "frame,label";
  for (Eigen::Index j = 0; j < v.features.cols(); ++j) out += ",f" + std::to_string(j + 1);
  out += '\n';
  for (std::size_t n = 0; n < v.num_frames(); ++n) {
    out += std::to_string(n + 1) + ',' + std::to_string(v.labels[n]);
    for (Eigen::Index j = 0; j < v.features.cols(); ++j) {
      out += ',' + format_double(v.features(static_cast<Eigen::Index>(n), j), 17);
    }
    out += '\n';
  }
  return out;
}

SimVideo parse_video_csv(std::string_view text, int id) {
  std::size_t cols = 0;
  const auto rows = csv_rows(text, "frame", &cols);
  if (cols < 3) throw Error(ErrorCode::IoError, "video CSV needs frame,label,f1..");
  SimVideo v;
  v.id = id;
  v.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols - 2));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    check_frame(rows[n][0], n + 1);
    v.labels.push_back(static_cast<Stage>(parse_int(rows[n][1])));
    for (std::size_t j = 2; j < cols; ++j) {
      v.features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j - 2)) = parse_double(rows[n][j]);
    }
  }
  if (v.labels.empty()) throw Error(ErrorCode::IoError, "video has no frames");
  return v;
}

std::string split_csv(const DatasetSplit& split) {
  std::vector<std::pair<int, const char*>> rows;
  for (int id : split.train) rows.emplace_back(id, "train");
  for (int id : split.validation) rows.emplace_back(id, "validation");
  for (int id : split.test) rows.emplace_back(id, "test");
  std::sort(rows.begin(), rows.end());
  std::string out = "video_id,part\n";
  for (const auto& [id, part] : rows) out += std::to_string(id) + ',' + part + '\n';
  return out;
}

DatasetSplit parse_split_csv(std::string_view text) {
  DatasetSplit split;
  for (const auto& row : csv_rows(text, "video_id")) {
    const int id = static_cast<int>(parse_int(row[0]));
    const auto part = trim(row[1]);
    if (part == "train") split.train.push_back(id);
    else if (part == "validation") split.validation.push_back(id);
    else if (part == "test") split.test.push_back(id);
    else throw Error(ErrorCode::IoError, "unknown split part '" + std::string(part) + "'");
  }
  return split;
}

std::string probs_csv(const ProbabilityMatrix& m) {
  std::string out = "frame";
  for (int l = 1; l <= m.num_stages(); ++l) out += ",p" + std::to_string(l);
  out += '\n';
  for (std::size_t n = 0; n < m.num_frames(); ++n) {
    out += std::to_string(n + 1);
    for (double p : m.column(n)) out += ',' + format_double(p, 9);
    out += '\n';
  }
  return out;
}

ProbabilityMatrix parse_probs_csv(std::string_view text) {
  std::size_t cols = 0;
  const auto rows = csv_rows(text, "frame", &cols);
  if (cols < 3 || rows.empty()) throw Error(ErrorCode::IoError, "probability CSV needs frame,p1,p2,..");
  ProbabilityMatrix m(rows.size(), static_cast<int>(cols - 1));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    check_frame(rows[n][0], n + 1);
    for (std::size_t l = 1; l < cols; ++l) m.column(n)[l - 1] = parse_double(rows[n][l]);
  }
  return m;
}

std::string labels_csv(std::span<const Stage> s) {
  std::string out = "frame,label\n";
  for (std::size_t n = 0; n < s.size(); ++n) {
    out += std::to_string(n + 1) + ',' + std::to_string(s[n]) + '\n';
  }
  return out;
}

StageSequence parse_labels_csv(std::string_view text) {
  StageSequence s;
  const auto rows = csv_rows(text, "frame");
  for (std::size_t n = 0; n < rows.size(); ++n) {
    check_frame(rows[n][0], n + 1);
    s.push_back(static_cast<Stage>(parse_int(rows[n][1])));
  }
  return s;
}

std::string train_log_csv(std::span<const EpochLog> log) {
  std::string out = "phase,epoch,train_loss,validation_loss\n";
  for (const auto& e : log) {
    out += std::to_string(e.phase) + ',' + std::to_string(e.epoch) + ',' +
           format_double(e.train_loss, 17) + ',' + format_double(e.validation_loss, 17) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

constexpr char kMagic[8] = {'M', 'T', 'D', 'L', 'N', 'E', 'T', '\0'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    const U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      u |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(u);
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw Error(ErrorCode::IoError, "truncated parameter file");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void put_dense(Writer& w, const Dense& d) {
  w.put(static_cast<std::uint32_t>(d.weight.rows()));
  w.put(static_cast<std::uint32_t>(d.weight.cols()));
  for (Eigen::Index i = 0; i < d.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < d.weight.cols(); ++j) w.put(d.weight(i, j));
  for (Eigen::Index i = 0; i < d.bias.size(); ++i) w.put(d.bias(i));
}

void get_dense(Reader& r, Dense& d) {
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  if (rows != d.weight.rows() || cols != d.weight.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter file layer shape does not match its header");
  }
  for (Eigen::Index i = 0; i < d.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < d.weight.cols(); ++j) d.weight(i, j) = r.get<double>();
  for (Eigen::Index i = 0; i < d.bias.size(); ++i) d.bias(i) = r.get<double>();
}

}  // namespace

std::string encode_params(const ParamsFile& file) {
  const auto& p = file.params;
  const auto& c = p.config;
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put(kParamsFormatVersion);
  w.put(file.config_hash);
  w.put(file.parent_hash);
  w.put(static_cast<std::uint32_t>(c.variant));
  w.put(static_cast<std::int32_t>(c.tau));
  w.put(static_cast<std::int32_t>(c.input_dim));
  w.put(static_cast<std::int32_t>(c.num_stages));
  w.put(static_cast<std::int32_t>(c.head_hidden));
  w.put(static_cast<std::uint32_t>(c.trunk_hidden.size()));
  for (int h : c.trunk_hidden) w.put(static_cast<std::int32_t>(h));
  w.put(static_cast<std::uint32_t>(p.heads.size()));
  w.put(static_cast<std::uint32_t>(p.heads.empty() ? 0 : p.heads.front().size()));
  for (const auto& d : p.trunk) put_dense(w, d);
  for (const auto& head : p.heads)
    for (const auto& d : head) put_dense(w, d);
  return w.take();
}

ParamsFile decode_params(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw Error(ErrorCode::IoError, "not a parameter file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kParamsFormatVersion) {
    throw Error(ErrorCode::IoError, "unsupported parameter file version " + std::to_string(version));
  }
  ParamsFile file;
  file.config_hash = r.get<std::uint64_t>();
  file.parent_hash = r.get<std::uint64_t>();

  NetConfig c;
  const auto variant = r.get<std::uint32_t>();
  if (variant > static_cast<std::uint32_t>(Variant::ManyToMany)) {
    throw Error(ErrorCode::IoError, "unknown variant in parameter file");
  }
  c.variant = static_cast<Variant>(variant);
  c.tau = r.get<std::int32_t>();
  c.input_dim = r.get<std::int32_t>();
  c.num_stages = r.get<std::int32_t>();
  c.head_hidden = r.get<std::int32_t>();
  const auto depth = r.get<std::uint32_t>();
  if (depth == 0 || depth > 64) throw Error(ErrorCode::IoError, "implausible trunk depth");
  c.trunk_hidden.resize(depth);
  for (auto& h : c.trunk_hidden) h = r.get<std::int32_t>();
  c.validate();

  // Shapes come from the header; init_params builds them, values are overwritten.
  file.params = init_params(c, 0);
  const auto heads = r.get<std::uint32_t>();
  const auto layers = r.get<std::uint32_t>();
  if (heads != file.params.heads.size() || layers != file.params.heads.front().size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter file head layout does not match its header");
  }
  for (auto& d : file.params.trunk) get_dense(r, d);
  for (auto& head : file.params.heads)
    for (auto& d : head) get_dense(r, d);
  if (!r.done()) throw Error(ErrorCode::IoError, "trailing bytes in parameter file");
  return file;
}

// ---------------------------------------------------------------------------
// Dataset directories

namespace {

std::string numbered(const char* prefix, int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d.csv", prefix, id);
  return buf;
}

}  // namespace

std::string video_filename(int id) { return numbered("video", id); }
std::string probs_filename(int id) { return numbered("probs", id); }
std::string decoded_filename(int id) { return numbered("decoded", id); }
std::string argmax_filename(int id) { return numbered("argmax", id); }

void write_dataset(const fs::path& dir, const Dataset& data, int jobs) {
  fs::create_directories(dir);
  detail::parallel_for(static_cast<int>(data.videos.size()), jobs, [&](int i) {
    const auto& v = data.videos[i];
    write_file_atomic(dir / video_filename(v.id), video_csv(v));
  });
  write_file_atomic(dir / "split.csv", split_csv(data.split));
}

Dataset read_dataset(const fs::path& dir) {
  Dataset data;
  data.split = parse_split_csv(read_file(dir / "split.csv"));
  std::set<int> ids;
  for (const auto* part : {&data.split.train, &data.split.validation, &data.split.test}) {
    ids.insert(part->begin(), part->end());
  }
  const int count = static_cast<int>(ids.size());
  const auto listed = data.split.train.size() + data.split.validation.size() + data.split.test.size();
  if (listed != ids.size() || ids.empty() || *ids.begin() != 0 || *ids.rbegin() != count - 1) {
    throw Error(ErrorCode::IoError, "split.csv must list video ids 0..N-1 exactly once");
  }
  data.videos.reserve(count);
  for (int id = 0; id < count; ++id) {
    const auto path = dir / video_filename(id);
    if (!fs::exists(path)) throw Error(ErrorCode::MissingVideo, "missing " + path.string());
    data.videos.push_back(parse_video_csv(read_file(path), id));
  }
  return data;
}

}  // namespace mtdl::io
