#pragma once

#include "degkit/dataset.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace degkit {

/// Shortest decimal text that parses back to exactly `x`.
std::string format_double(double x);
double parse_double(const std::string& s, std::size_t line, const std::string& what);

/// Minimal comma-separated reader: header check plus per-line access.
class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path);
  CsvReader(std::istream& in, std::string source_name);

  const std::vector<std::string>& header() const { return header_; }
  void expect_header(const std::vector<std::string>& columns) const;
  bool next(std::vector<std::string>& fields);
  std::size_t line() const { return line_; }
  [[noreturn]] void fail(const std::string& msg) const;

 private:
  void read_header();
  std::unique_ptr<std::istream> owned_;
  std::istream* in_ = nullptr;
  std::string source_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

std::vector<std::string> split_csv_line(const std::string& line);

enum class Schema { kDegradation, kEvents, kField };

/// Long-form ingestion. Degradation: `unit_id,time,channel,value`.
/// Events: `unit_id,event_time,event` (units carry no channels).
/// Field: `time,row,col,value`, loaded as one unit named "field" whose
/// channels are the cells in row-major order, named "r<row>c<col>".
Dataset load_long_csv(const std::filesystem::path& path, Schema schema);
Dataset read_long_csv(std::istream& in, Schema schema, const std::string& source = "<stream>");

/// Copies event information onto the matching units.
Dataset join_events(Dataset data, const Dataset& events);

void write_long_csv(const Dataset& data, std::ostream& out, Schema schema);
void save_long_csv(const Dataset& data, const std::filesystem::path& path, Schema schema);

/// Curves CSV `unit_id,time,arg,value` with an optional trailing
/// `channel` column for multi-channel curves.
struct CurveRecord {
  std::string unit_id;
  double time = 0.0;
  std::string channel;
  std::vector<double> args;
  std::vector<double> values;
};
struct CurveTable {
  std::vector<CurveRecord> curves;  // grouped by (unit, time, channel), args ascending
  std::vector<std::string> channels;
};
CurveTable load_curves_csv(const std::filesystem::path& path);
CurveTable read_curves_csv(std::istream& in, const std::string& source = "<stream>");
void write_curves_csv(const CurveTable& table, std::ostream& out);

/// Survival CSV `unit_id,time,delta,x1..xp`.
struct SurvivalData {
  std::vector<std::string> unit_ids;
  Eigen::VectorXd times;
  Eigen::VectorXi delta;
  Eigen::MatrixXd x;
  std::vector<std::string> covariate_names;
};
SurvivalData load_survival_csv(const std::filesystem::path& path);
SurvivalData read_survival_csv(std::istream& in, const std::string& source = "<stream>");
void write_survival_csv(const SurvivalData& data, std::ostream& out);

/// Image manifest CSV `unit_id,path,y`; paths resolve relative to the manifest.
struct ImageData {
  std::vector<std::string> unit_ids;
  std::vector<Eigen::MatrixXd> images;
  Eigen::VectorXd y;
};
ImageData load_image_manifest(const std::filesystem::path& manifest);
Eigen::MatrixXd load_matrix_text(const std::filesystem::path& path);
void write_matrix_text(const Eigen::MatrixXd& m, std::ostream& out);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace degkit
