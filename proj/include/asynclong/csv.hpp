#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "asynclong/bandwidth.hpp"
#include "asynclong/dataset.hpp"
#include "asynclong/fit_report.hpp"
#include "asynclong/simulation.hpp"
#include "asynclong/sync_estimators.hpp"

namespace asynclong {

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& field, long row, const std::string& column) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw DataError("malformed number '" + field + "' at row " + std::to_string(row) +
                    ", column " + column);
  return v;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

struct LongRows {
  std::vector<std::string> ids;
  std::vector<double> times;
  std::vector<std::vector<double>> values;  // per row, ncols entries
  int ncols = 0;
};

// Long-format reader: header `id,time,<value_names...>`.
inline LongRows parse_long_csv(std::istream& in, const std::vector<std::string>& value_names,
                               const std::string& what) {
  LongRows out;
  out.ncols = static_cast<int>(value_names.size());
  std::string line;
  if (!std::getline(in, line)) throw DataError(what + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string expected = "id,time";
  for (const auto& nm : value_names) expected += "," + nm;
  if (line != expected)
    throw DataError(what + ": bad header '" + line + "', expected '" + expected + "'");

  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != 2 + out.ncols)
      throw DataError(what + ": row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(2 + out.ncols));
    out.ids.push_back(fields[0]);
    out.times.push_back(parse_double(fields[1], row, "time"));
    std::vector<double> vals(out.ncols);
    for (int c = 0; c < out.ncols; ++c)
      vals[c] = parse_double(fields[2 + c], row, value_names[c]);
    out.values.push_back(std::move(vals));
  }
  return out;
}

inline std::vector<std::string> value_header(const std::string& lead, const std::string& prefix,
                                             int count) {
  std::vector<std::string> names;
  if (!lead.empty()) names.push_back(lead);
  for (int c = 1; c <= count; ++c) names.push_back(prefix + std::to_string(c));
  return names;
}

}  // namespace detail

inline void write_sync_csv(const LongitudinalDataset& d, std::ostream& out) {
  out << "id,time,y";
  for (int c = 1; c <= d.p; ++c) out << ",x" << c;
  out << "\n";
  for (const auto& s : d.subjects)
    for (long j = 0; j < s.n_sync(); ++j) {
      out << s.id << "," << format_double(s.sync_times[j]) << ","
          << format_double(s.responses[j]);
      for (int c = 0; c < d.p; ++c) out << "," << format_double(s.sync_covariates(j, c));
      out << "\n";
    }
}

inline void write_async_csv(const LongitudinalDataset& d, std::ostream& out) {
  out << "id,time";
  for (int c = 1; c <= d.q; ++c) out << ",z" << c;
  out << "\n";
  for (const auto& s : d.subjects)
    for (long k = 0; k < s.n_async(); ++k) {
      out << s.id << "," << format_double(s.async_times[k]);
      for (int c = 0; c < d.q; ++c) out << "," << format_double(s.async_covariates(k, c));
      out << "\n";
    }
}

// Assembles a dataset from long-format sync/async streams. Subjects keep
// their first-appearance order (sync file first); rows are sorted by time
// within subject; duplicate (id, time) is an error. When the union of raw
// times leaves [0, 1], all times are rescaled by (t - min) / (max - min) and
// the affine map is recorded.
inline LongitudinalDataset load_dataset_streams(std::istream* sync_in, std::istream* async_in,
                                                int p_hint = -1, int q_hint = -1) {
  detail::LongRows sync_rows, async_rows;
  int p = 0, q = 0;
  if (sync_in) {
    p = p_hint;
    if (p < 0) {
      // sniff the header for the covariate count
      std::string header;
      std::getline(*sync_in, header);
      if (!header.empty() && header.back() == '\r') header.pop_back();
      p = static_cast<int>(std::count(header.begin(), header.end(), ',')) - 2;
      if (p < 0) throw DataError("sync csv: bad header '" + header + "'");
      std::stringstream replay;
      replay << header << "\n" << sync_in->rdbuf();
      sync_rows = detail::parse_long_csv(replay, detail::value_header("y", "x", p), "sync csv");
    } else {
      sync_rows = detail::parse_long_csv(*sync_in, detail::value_header("y", "x", p), "sync csv");
    }
  }
  if (async_in) {
    q = q_hint;
    if (q < 0) {
      std::string header;
      std::getline(*async_in, header);
      if (!header.empty() && header.back() == '\r') header.pop_back();
      q = static_cast<int>(std::count(header.begin(), header.end(), ',')) - 1;
      if (q < 0) throw DataError("async csv: bad header '" + header + "'");
      std::stringstream replay;
      replay << header << "\n" << async_in->rdbuf();
      async_rows = detail::parse_long_csv(replay, detail::value_header("", "z", q), "async csv");
    } else {
      async_rows = detail::parse_long_csv(*async_in, detail::value_header("", "z", q), "async csv");
    }
  }

  LongitudinalDataset d;
  d.p = p;
  d.q = q;
  std::map<std::string, int> index_of;
  auto subject_index = [&](const std::string& id) {
    const auto it = index_of.find(id);
    if (it != index_of.end()) return it->second;
    const int idx = static_cast<int>(d.subjects.size());
    index_of.emplace(id, idx);
    SubjectRecord rec;
    rec.id = id;
    rec.sync_covariates.resize(0, p);
    rec.async_covariates.resize(0, q);
    d.subjects.push_back(std::move(rec));
    return idx;
  };

  // group row indices per subject
  std::vector<std::vector<long>> sync_of, async_of;
  for (std::size_t r = 0; r < sync_rows.ids.size(); ++r) {
    const int i = subject_index(sync_rows.ids[r]);
    if (i >= static_cast<int>(sync_of.size())) sync_of.resize(i + 1);
    sync_of[i].push_back(static_cast<long>(r));
  }
  for (std::size_t r = 0; r < async_rows.ids.size(); ++r) {
    const int i = subject_index(async_rows.ids[r]);
    if (i >= static_cast<int>(async_of.size())) async_of.resize(i + 1);
    async_of[i].push_back(static_cast<long>(r));
  }
  sync_of.resize(d.subjects.size());
  async_of.resize(d.subjects.size());

  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    auto& s = d.subjects[i];
    auto by_time = [&](const std::vector<double>& times) {
      return [&times](long a, long b) { return times[a] < times[b]; };
    };
    std::sort(sync_of[i].begin(), sync_of[i].end(), by_time(sync_rows.times));
    std::sort(async_of[i].begin(), async_of[i].end(), by_time(async_rows.times));
    for (std::size_t r = 1; r < sync_of[i].size(); ++r)
      if (sync_rows.times[sync_of[i][r]] == sync_rows.times[sync_of[i][r - 1]])
        throw DataError("sync csv: duplicate (id, time) for subject '" + s.id + "' at t=" +
                        format_double(sync_rows.times[sync_of[i][r]]));
    for (std::size_t r = 1; r < async_of[i].size(); ++r)
      if (async_rows.times[async_of[i][r]] == async_rows.times[async_of[i][r - 1]])
        throw DataError("async csv: duplicate (id, time) for subject '" + s.id + "' at t=" +
                        format_double(async_rows.times[async_of[i][r]]));

    s.sync_times.reserve(sync_of[i].size());
    s.responses.reserve(sync_of[i].size());
    s.sync_covariates.resize(sync_of[i].size(), p);
    for (std::size_t r = 0; r < sync_of[i].size(); ++r) {
      const long row = sync_of[i][r];
      s.sync_times.push_back(sync_rows.times[row]);
      s.responses.push_back(sync_rows.values[row][0]);
      for (int c = 0; c < p; ++c) s.sync_covariates(r, c) = sync_rows.values[row][1 + c];
    }
    s.async_times.reserve(async_of[i].size());
    s.async_covariates.resize(async_of[i].size(), q);
    for (std::size_t r = 0; r < async_of[i].size(); ++r) {
      const long row = async_of[i][r];
      s.async_times.push_back(async_rows.times[row]);
      for (int c = 0; c < q; ++c) s.async_covariates(r, c) = async_rows.values[row][c];
    }
  }

  // rescale to [0, 1] only when the raw times leave it
  double tmin = std::numeric_limits<double>::infinity();
  double tmax = -std::numeric_limits<double>::infinity();
  for (const auto& s : d.subjects) {
    for (double t : s.sync_times) { tmin = std::min(tmin, t); tmax = std::max(tmax, t); }
    for (double t : s.async_times) { tmin = std::min(tmin, t); tmax = std::max(tmax, t); }
  }
  if (std::isfinite(tmin) && (tmin < 0.0 || tmax > 1.0)) {
    if (!(tmax > tmin))
      throw DataError("cannot rescale times: all observation times are identical");
    d.time_rescale = {tmin, tmax - tmin, true};
    for (auto& s : d.subjects) {
      for (double& t : s.sync_times) t = (t - tmin) / (tmax - tmin);
      for (double& t : s.async_times) t = (t - tmin) / (tmax - tmin);
    }
  }
  return d;
}

inline LongitudinalDataset load_dataset(const std::string& sync_path,
                                        const std::string& async_path) {
  std::ifstream sync_in, async_in;
  std::istream* sp = nullptr;
  std::istream* ap = nullptr;
  if (!sync_path.empty()) {
    sync_in.open(sync_path);
    if (!sync_in) throw DataError("cannot open sync csv '" + sync_path + "'");
    sp = &sync_in;
  }
  if (!async_path.empty()) {
    async_in.open(async_path);
    if (!async_in) throw DataError("cannot open async csv '" + async_path + "'");
    ap = &async_in;
  }
  if (!sp && !ap) throw DataError("load_dataset: no input files");
  return load_dataset_streams(sp, ap);
}

// `h,avg_pe,fold1,...,foldK,flag` rows of a cross-validation curve.
inline void write_cv_curve_csv(const CvCurve& curve, std::ostream& out) {
  const int folds = curve.fold_pe.empty() ? 0 : static_cast<int>(curve.fold_pe.front().size());
  out << "h,avg_pe";
  for (int k = 1; k <= folds; ++k) out << ",fold" << k;
  out << ",flag\n";
  for (std::size_t g = 0; g < curve.grid.size(); ++g) {
    out << format_double(curve.grid[g]) << "," << format_double(curve.avg_pe[g]);
    for (int k = 0; k < folds; ++k) out << "," << format_double(curve.fold_pe[g][k]);
    out << "," << (curve.flagged[g] ? 1 : 0) << "\n";
  }
}

inline void write_mc_summary_csv(const std::vector<MonteCarloSummary>& summaries,
                                 std::ostream& out) {
  out << "method,param,bias,sd,se,cp,reps,failures\n";
  for (const auto& s : summaries) {
    if (s.params.empty())
      out << s.method << ",,,,,," << s.reps << "," << s.failures << "\n";
    for (const auto& row : s.params)
      out << s.method << "," << row.param << "," << format_double(row.bias) << ","
          << format_double(row.sd) << "," << format_double(row.se) << ","
          << format_double(row.cp) << "," << s.reps << "," << s.failures << "\n";
  }
}

inline void write_screen_csv(const ScreenTable& table, std::ostream& out) {
  out << "z,x,estimate,se,p\n";
  for (const auto& row : table.rows)
    out << row.z_name << "," << row.x_name << "," << format_double(row.estimate) << ","
        << format_double(row.se) << "," << format_double(row.p_value) << "\n";
}

}  // namespace asynclong
