#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ncomp/error.hpp"
#include "ncomp/experiments.hpp"

namespace ncomp {
namespace {

const char* kHeader = "experiment,model,item,metric,value,comparator,threshold,criterion,passed";

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
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
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("bad number '" + s + "' in CSV");
  return v;
}

std::string short_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : rows) {
    out += csv_field(r.experiment) + "," + csv_field(r.model) + "," + csv_field(r.item) + "," + csv_field(r.metric) +
           "," + num(r.value) + "," + r.comparator + "," + num(r.threshold) + "," + std::to_string(r.criterion) + "," +
           (r.passed ? "true" : "false") + "\n";
  }
  return out;
}

std::vector<ResultRow> rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw ConfigError("CSV header does not match the row layout");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 9) throw ConfigError("CSV row has " + std::to_string(f.size()) + " fields, expected 9");
    ResultRow r;
    r.experiment = f[0];
    r.model = f[1];
    r.item = f[2];
    r.metric = f[3];
    r.value = parse_double(f[4]);
    r.comparator = f[5];
    r.threshold = parse_double(f[6]);
    r.criterion = std::stoi(f[7]);
    r.passed = f[8] == "true";
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string rows_to_json(const std::vector<ResultRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["experiment"] = r.experiment;
    j["model"] = r.model;
    j["item"] = r.item;
    j["metric"] = r.metric;
    j["value"] = r.value;
    j["comparator"] = r.comparator;
    j["threshold"] = r.threshold;
    j["criterion"] = r.criterion;
    j["passed"] = r.passed;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string rows_to_markdown(const std::vector<ResultRow>& rows) {
  std::string out;
  std::string current;
  for (const auto& r : rows) {
    if (r.experiment != current) {
      current = r.experiment;
      out += (out.empty() ? "" : "\n") + std::string("## ") + current + "\n\n";
      out += "| item | model | metric | value | target | status |\n|---|---|---|---|---|---|\n";
    }
    std::string target = r.comparator == "info" ? "" : r.comparator + " " + short_num(r.threshold);
    std::string status = r.criterion == 0 ? (r.comparator == "info" ? "info" : (r.passed ? "ok (info)" : "miss (info)"))
                                          : (r.passed ? "PASS" : "FAIL") + std::string(" C") + std::to_string(r.criterion);
    out += "| " + r.item + " | " + r.model + " | " + r.metric + " | " + short_num(r.value) + " | " + target + " | " +
           status + " |\n";
  }
  return out;
}

std::filesystem::path emit_report(const std::vector<ResultRow>& rows, const std::string& format,
                                  const std::filesystem::path& dir) {
  std::string text, name;
  if (format == "csv") {
    text = rows_to_csv(rows);
    name = "rows.csv";
  } else if (format == "json") {
    text = rows_to_json(rows);
    name = "rows.json";
  } else if (format == "markdown") {
    text = rows_to_markdown(rows);
    name = "report.md";
  } else {
    throw ConfigError("unknown report format '" + format + "'");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto path = dir / name;
  std::ofstream out(path);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
  return path;
}

void write_loss_curve(const std::filesystem::path& file, const std::vector<double>& train,
                      const std::vector<double>& test) {
  std::error_code ec;
  std::filesystem::create_directories(file.parent_path(), ec);
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << "epoch,train_loss,test_loss\n";
  for (std::size_t i = 0; i < train.size(); ++i) {
    out << i << "," << num(train[i]) << "," << (i < test.size() ? num(test[i]) : "") << "\n";
  }
}

}  // namespace ncomp
