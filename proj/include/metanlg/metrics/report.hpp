// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "metanlg/error.hpp"

namespace metanlg::metrics {

struct ReportRow {
  std::string phase;
  std::size_t step = 0;
  std::string split;
  std::optional<double> nll;
  std::optional<double> bleu4;
  std::optional<double> err;
  std::optional<double> seconds;
};

/// Per-step training curve. Rows are kept in (phase, step) order where
/// phases are ordered by first appearance; appending out of order throws.
class TrainRunReport {
 public:
  void add(ReportRow row) {
    if (!rows_.empty()) {
      const ReportRow& last = rows_.back();
      if (row.phase == last.phase) {
        if (row.step <= last.step) {
          throw Error("report: step " + std::to_string(row.step) + " in phase '" + row.phase +
                      "' does not follow step " + std::to_string(last.step));
        }
      } else {
        for (const ReportRow& r : rows_)
          if (r.phase == row.phase) throw Error("report: phase '" + row.phase + "' was already closed");
      }
    }
    rows_.push_back(std::move(row));
  }

  const std::vector<ReportRow>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }

  std::vector<ReportRow> phase(const std::string& name) const {
    std::vector<ReportRow> out;
    for (const auto& r : rows_)
      if (r.phase == name) out.push_back(r);
    return out;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "phase,step,split,nll,bleu4,err,seconds\r\n";
    for (const ReportRow& r : rows_) {
      os << quote(r.phase) << ',' << r.step << ',' << quote(r.split) << ',' << number(r.nll) << ','
         << number(r.bleu4) << ',' << number(r.err) << ',' << number(r.seconds) << "\r\n";
    }
    return os.str();
  }

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << to_csv();
  }

  /// RFC 4180: fields with comma, quote, CR or LF are quoted, quotes doubled.
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + '"';
  }

  static std::string number(const std::optional<double>& v) {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
  }

 private:
  std::vector<ReportRow> rows_;
};

/// Parses what to_csv writes. Used by the sweep aggregation and tests.
inline std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      fields.push_back(cur);
      records.push_back(fields);
      fields.clear();
      cur.clear();
      any = false;
    } else {
      cur += c;
      any = true;
    }
  }
  if (any || !cur.empty()) {
    fields.push_back(cur);
    records.push_back(fields);
  }
  if (records.empty() || records[0].size() != 7 || records[0][0] != "phase") throw Error("report: bad CSV header");
  std::vector<ReportRow> out;
  auto num = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
  };
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() != 7) throw Error("report: row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    out.push_back({f[0], static_cast<std::size_t>(std::stoull(f[1])), f[2], num(f[3]), num(f[4]), num(f[5]), num(f[6])});
  }
  return out;
}

}  // namespace metanlg::metrics
