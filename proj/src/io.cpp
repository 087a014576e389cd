#include "degkit/io.hpp"

#include "degkit/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace degkit {

std::string format_double(double x) {
  if (x == 0.0) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, std::size_t line, const std::string& what) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (begin != end && *begin == '+') ++begin;
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
    throw InputError("line " + std::to_string(line) + ": cannot parse " + what + " '" + s + "'");
  return v;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

CsvReader::CsvReader(const std::filesystem::path& path) : source_(path.string()) {
  auto f = std::make_unique<std::ifstream>(path);
  if (!*f) throw InputError("cannot open " + path.string());
  owned_ = std::move(f);
  in_ = owned_.get();
  read_header();
}

CsvReader::CsvReader(std::istream& in, std::string source_name) : in_(&in), source_(std::move(source_name)) {
  read_header();
}

void CsvReader::read_header() {
  std::string line;
  while (std::getline(*in_, line)) {
    ++line_;
    if (!trim(line).empty()) {
      header_ = split_csv_line(line);
      return;
    }
  }
  throw InputError(source_ + ": empty file");
}

void CsvReader::expect_header(const std::vector<std::string>& columns) const {
  if (header_.size() < columns.size() ||
      !std::equal(columns.begin(), columns.end(), header_.begin())) {
    std::string want;
    for (const auto& c : columns) want += (want.empty() ? "" : ",") + c;
    throw InputError(source_ + ": header must start with " + want);
  }
}

bool CsvReader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(*in_, line)) {
    ++line_;
    if (trim(line).empty()) continue;
    fields = split_csv_line(line);
    if (fields.size() != header_.size())
      fail("expected " + std::to_string(header_.size()) + " fields, found " +
           std::to_string(fields.size()));
    return true;
  }
  return false;
}

void CsvReader::fail(const std::string& msg) const {
  throw InputError(source_ + ": line " + std::to_string(line_) + ": " + msg);
}

namespace {

struct RawPoint {
  double time;
  std::size_t channel;
  double value;
  std::size_t line;
};

Dataset read_degradation(CsvReader& r) {
  r.expect_header({"unit_id", "time", "channel", "value"});
  Dataset data;
  std::map<std::string, std::size_t> unit_index, channel_index;
  std::vector<std::vector<RawPoint>> points;
  std::vector<std::string> f;
  while (r.next(f)) {
    const double t = parse_double(f[1], r.line(), "time");
    const double v = parse_double(f[3], r.line(), "value");
    if (f[0].empty()) r.fail("empty unit_id");
    if (f[2].empty()) r.fail("empty channel");
    auto [uit, unew] = unit_index.try_emplace(f[0], points.size());
    if (unew) {
      points.emplace_back();
      data.units.push_back(UnitRecord{f[0], {}, {}, std::nullopt, 0});
    }
    auto [cit, cnew] = channel_index.try_emplace(f[2], data.channel_names.size());
    if (cnew) data.channel_names.push_back(f[2]);
    points[uit->second].push_back(RawPoint{t, cit->second, v, r.line()});
  }
  if (data.units.empty()) throw InputError("degradation file has no rows");
  const std::size_t p = data.channel_names.size();
  for (std::size_t i = 0; i < data.units.size(); ++i) {
    auto& pts = points[i];
    std::stable_sort(pts.begin(), pts.end(), [](const RawPoint& a, const RawPoint& b) {
      return a.time < b.time || (a.time == b.time && a.channel < b.channel);
    });
    for (std::size_t k = 1; k < pts.size(); ++k) {
      if (pts[k].time == pts[k - 1].time && pts[k].channel == pts[k - 1].channel) {
        const std::size_t line = std::max(pts[k].line, pts[k - 1].line);
        throw InputError("line " + std::to_string(line) + ": duplicate (" + data.units[i].unit_id +
                         ", " + format_double(pts[k].time) + ", " + data.channel_names[pts[k].channel] +
                         ")");
      }
    }
    UnitRecord& u = data.units[i];
    u.channels.assign(p, {});
    for (std::size_t k = 0; k < pts.size();) {
      std::size_t e = k;
      while (e < pts.size() && pts[e].time == pts[k].time) ++e;
      if (e - k != p)
        throw InputError("line " + std::to_string(pts[k].line) + ": unit " + u.unit_id + " at time " +
                         format_double(pts[k].time) + " is missing channel values");
      u.times.push_back(pts[k].time);
      for (std::size_t q = k; q < e; ++q) u.channels[pts[q].channel].push_back(pts[q].value);
      k = e;
    }
  }
  return data;
}

Dataset read_events(CsvReader& r) {
  r.expect_header({"unit_id", "event_time", "event"});
  Dataset data;
  std::set<std::string> seen;
  std::vector<std::string> f;
  while (r.next(f)) {
    const double t = parse_double(f[1], r.line(), "event_time");
    if (f[2] != "0" && f[2] != "1") r.fail("event must be 0 or 1");
    if (!seen.insert(f[0]).second) r.fail("duplicate event row for unit " + f[0]);
    data.units.push_back(UnitRecord{f[0], {}, {}, t, f[2] == "1" ? 1 : 0});
  }
  return data;
}

std::string cell_name(long row, long col) {
  return "r" + std::to_string(row) + "c" + std::to_string(col);
}

Dataset read_field(CsvReader& r) {
  r.expect_header({"time", "row", "col", "value"});
  std::map<double, std::map<std::pair<long, long>, std::pair<double, std::size_t>>> frames;
  long rows = 0, cols = 0;
  std::vector<std::string> f;
  while (r.next(f)) {
    const double t = parse_double(f[0], r.line(), "time");
    const double rr = parse_double(f[1], r.line(), "row");
    const double cc = parse_double(f[2], r.line(), "col");
    const double v = parse_double(f[3], r.line(), "value");
    if (rr < 0 || cc < 0 || rr != std::floor(rr) || cc != std::floor(cc))
      r.fail("row/col must be non-negative integers");
    const auto key = std::make_pair(static_cast<long>(rr), static_cast<long>(cc));
    if (!frames[t].emplace(key, std::make_pair(v, r.line())).second)
      r.fail("duplicate (time, row, col)");
    rows = std::max(rows, key.first + 1);
    cols = std::max(cols, key.second + 1);
  }
  if (frames.empty()) throw InputError("field file has no rows");
  Dataset data;
  data.meta["rows"] = std::to_string(rows);
  data.meta["cols"] = std::to_string(cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) data.channel_names.push_back(cell_name(i, j));
  UnitRecord u{"field", {}, std::vector<std::vector<double>>(rows * cols), std::nullopt, 0};
  for (const auto& [t, frame] : frames) {
    if (static_cast<long>(frame.size()) != rows * cols)
      throw InputError("field frame at time " + format_double(t) + " is missing cells");
    u.times.push_back(t);
    for (const auto& [key, val] : frame) u.channels[key.first * cols + key.second].push_back(val.first);
  }
  data.units.push_back(std::move(u));
  return data;
}

}  // namespace

Dataset read_long_csv(std::istream& in, Schema schema, const std::string& source) {
  CsvReader r(in, source);
  Dataset d;
  switch (schema) {
    case Schema::kDegradation: d = read_degradation(r); break;
    case Schema::kEvents: d = read_events(r); break;
    case Schema::kField: d = read_field(r); break;
  }
  if (schema != Schema::kEvents) d.validate();
  return d;
}

Dataset load_long_csv(const std::filesystem::path& path, Schema schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_long_csv(in, schema, path.string());
}

Dataset join_events(Dataset data, const Dataset& events) {
  for (const auto& e : events.units) {
    const std::size_t i = data.find_unit(e.unit_id);
    if (i == static_cast<std::size_t>(-1)) throw InputError("event for unknown unit " + e.unit_id);
    data.units[i].event_time = e.event_time;
    data.units[i].event_indicator = e.event_indicator;
  }
  data.validate();
  return data;
}

void write_long_csv(const Dataset& data, std::ostream& out, Schema schema) {
  switch (schema) {
    case Schema::kDegradation:
      out << "unit_id,time,channel,value\n";
      for (const auto& u : data.units)
        for (std::size_t k = 0; k < u.times.size(); ++k)
          for (std::size_t j = 0; j < data.p(); ++j)
            out << u.unit_id << ',' << format_double(u.times[k]) << ',' << data.channel_names[j] << ','
                << format_double(u.channels[j][k]) << '\n';
      break;
    case Schema::kEvents:
      out << "unit_id,event_time,event\n";
      for (const auto& u : data.units) {
        const double t = u.event_time ? *u.event_time : (u.times.empty() ? 0.0 : u.times.back());
        out << u.unit_id << ',' << format_double(t) << ',' << u.event_indicator << '\n';
      }
      break;
    case Schema::kField: {
      require(data.units.size() == 1, "field output expects a single field unit");
      const long cols = std::stol(data.meta.at("cols"));
      const auto& u = data.units.front();
      out << "time,row,col,value\n";
      for (std::size_t k = 0; k < u.times.size(); ++k)
        for (std::size_t c = 0; c < data.p(); ++c)
          out << format_double(u.times[k]) << ',' << static_cast<long>(c) / cols << ','
              << static_cast<long>(c) % cols << ',' << format_double(u.channels[c][k]) << '\n';
      break;
    }
  }
}

void save_long_csv(const Dataset& data, const std::filesystem::path& path, Schema schema) {
  std::ostringstream os;
  write_long_csv(data, os, schema);
  write_file(path, os.str());
}

CurveTable read_curves_csv(std::istream& in, const std::string& source) {
  CsvReader r(in, source);
  r.expect_header({"unit_id", "time", "arg", "value"});
  const bool has_channel = r.header().size() >= 5 && r.header()[4] == "channel";
  if (r.header().size() != (has_channel ? 5u : 4u))
    throw InputError(source + ": curves header must be unit_id,time,arg,value[,channel]");
  CurveTable table;
  std::map<std::tuple<std::string, double, std::string>, std::size_t> index;
  std::vector<std::vector<std::pair<double, double>>> pts;
  std::set<std::string> channels_seen;
  std::vector<std::string> f;
  while (r.next(f)) {
    const double t = parse_double(f[1], r.line(), "time");
    const double a = parse_double(f[2], r.line(), "arg");
    const double v = parse_double(f[3], r.line(), "value");
    const std::string ch = has_channel ? f[4] : std::string("x");
    if (channels_seen.insert(ch).second) table.channels.push_back(ch);
    auto [it, fresh] = index.try_emplace({f[0], t, ch}, table.curves.size());
    if (fresh) {
      table.curves.push_back(CurveRecord{f[0], t, ch, {}, {}});
      pts.emplace_back();
    }
    pts[it->second].emplace_back(a, v);
  }
  if (table.curves.empty()) throw InputError(source + ": no curve rows");
  for (std::size_t c = 0; c < table.curves.size(); ++c) {
    auto& p = pts[c];
    std::sort(p.begin(), p.end());
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k].first == p[k - 1].first)
        throw InputError(source + ": duplicate arg " + format_double(p[k].first) + " in curve of unit " +
                         table.curves[c].unit_id);
    for (auto& [a, v] : p) {
      table.curves[c].args.push_back(a);
      table.curves[c].values.push_back(v);
    }
  }
  return table;
}

CurveTable load_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_curves_csv(in, path.string());
}

void write_curves_csv(const CurveTable& table, std::ostream& out) {
  const bool multi = table.channels.size() > 1;
  out << "unit_id,time,arg,value" << (multi ? ",channel\n" : "\n");
  for (const auto& c : table.curves)
    for (std::size_t k = 0; k < c.args.size(); ++k) {
      out << c.unit_id << ',' << format_double(c.time) << ',' << format_double(c.args[k]) << ','
          << format_double(c.values[k]);
      if (multi) out << ',' << c.channel;
      out << '\n';
    }
}

SurvivalData read_survival_csv(std::istream& in, const std::string& source) {
  CsvReader r(in, source);
  r.expect_header({"unit_id", "time", "delta"});
  SurvivalData d;
  d.covariate_names.assign(r.header().begin() + 3, r.header().end());
  const std::size_t p = d.covariate_names.size();
  std::vector<double> t, x;
  std::vector<int> delta;
  std::vector<std::string> f;
  while (r.next(f)) {
    d.unit_ids.push_back(f[0]);
    const double tt = parse_double(f[1], r.line(), "time");
    if (!(tt > 0.0)) r.fail("time must be positive");
    t.push_back(tt);
    if (f[2] != "0" && f[2] != "1") r.fail("delta must be 0 or 1");
    delta.push_back(f[2] == "1" ? 1 : 0);
    for (std::size_t j = 0; j < p; ++j) x.push_back(parse_double(f[3 + j], r.line(), "covariate"));
  }
  const auto n = static_cast<Eigen::Index>(t.size());
  if (n == 0) throw InputError(source + ": no survival rows");
  d.times = Eigen::Map<Eigen::VectorXd>(t.data(), n);
  d.delta = Eigen::Map<Eigen::VectorXi>(delta.data(), n);
  d.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      x.data(), n, static_cast<Eigen::Index>(p));
  return d;
}

SurvivalData load_survival_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_survival_csv(in, path.string());
}

void write_survival_csv(const SurvivalData& d, std::ostream& out) {
  out << "unit_id,time,delta";
  for (const auto& c : d.covariate_names) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < d.times.size(); ++i) {
    out << d.unit_ids[i] << ',' << format_double(d.times(i)) << ',' << d.delta(i);
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) out << ',' << format_double(d.x(i, j));
    out << '\n';
  }
}

Eigen::MatrixXd load_matrix_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) row.push_back(parse_double(tok, ln, "matrix entry in " + path.string()));
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw InputError(path.string() + ": line " + std::to_string(ln) + ": ragged matrix row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(path.string() + ": empty matrix");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

void write_matrix_text(const Eigen::MatrixXd& m, std::ostream& out) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << '\n';
  }
}

ImageData load_image_manifest(const std::filesystem::path& manifest) {
  CsvReader r(manifest);
  r.expect_header({"unit_id", "path", "y"});
  ImageData d;
  std::vector<double> y;
  std::vector<std::string> f;
  while (r.next(f)) {
    d.unit_ids.push_back(f[0]);
    std::filesystem::path p = f[1];
    if (p.is_relative()) p = manifest.parent_path() / p;
    d.images.push_back(load_matrix_text(p));
    if (d.images.back().rows() != d.images.front().rows() || d.images.back().cols() != d.images.front().cols())
      r.fail("image " + f[1] + " has a different shape");
    y.push_back(parse_double(f[2], r.line(), "y"));
  }
  if (y.empty()) throw InputError(manifest.string() + ": no images");
  d.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  return d;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << contents;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace degkit
