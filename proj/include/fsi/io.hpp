#pragma once

#include <boost/algorithm/string.hpp>

#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fsi/error.hpp"

namespace fsi {

/// Provenance line carried as the first comment of every output file:
///   # fsi alpha=0.75 T=1 N=100 mesh=50 seed=42 key=value ...
struct RunHeader {
  std::map<std::string, std::string> fields;

  RunHeader& set(const std::string& key, const std::string& value) {
    fields[key] = value;
    return *this;
  }
  template <class T>
  RunHeader& set(const std::string& key, const T& value) {
    std::ostringstream s;
    s << std::setprecision(std::numeric_limits<double>::max_digits10) << value;
    fields[key] = s.str();
    return *this;
  }

  bool has(const std::string& key) const { return fields.count(key) != 0; }
  const std::string& get(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("file header is missing '" + key + "'");
    return it->second;
  }
  double number(const std::string& key) const {
    try {
      return std::stod(get(key));
    } catch (const std::logic_error&) {
      throw ConfigError("file header field '" + key + "' is not a number");
    }
  }

  std::string line() const {
    std::string s = "# fsi";
    for (const auto& [k, v] : fields) s += " " + k + "=" + v;
    return s;
  }

  static RunHeader parse(const std::string& line) {
    RunHeader h;
    std::istringstream in(line);
    std::string tok;
    in >> tok;  // '#'
    in >> tok;  // 'fsi'
    if (tok != "fsi") throw ConfigError("not an fsi provenance line: " + line);
    while (in >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      h.fields[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return h;
  }
};

/// Fails with a clear message when two files disagree on a provenance key.
inline void require_same(const RunHeader& a, const RunHeader& b, const std::string& key, const std::string& what) {
  if (a.get(key) != b.get(key)) {
    throw ConfigError(what + ": header mismatch on '" + key + "' (" + a.get(key) + " vs " + b.get(key) + ")");
  }
}

/// Column-oriented delimited table with a provenance header and free comments.
struct Table {
  RunHeader header;
  std::vector<std::string> comments;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  const std::vector<double>& column(const std::string& name) const {
    for (std::size_t c = 0; c < names.size(); ++c)
      if (names[c] == name) return columns[c];
    throw ConfigError("table has no column '" + name + "'");
  }
  bool has_column(const std::string& name) const {
    for (const auto& n : names)
      if (n == name) return true;
    return false;
  }

  void add(const std::string& name, std::vector<double> values) {
    if (!columns.empty() && values.size() != rows()) throw ConfigError("column '" + name + "' has wrong length");
    names.push_back(name);
    columns.push_back(std::move(values));
  }

  void write(std::ostream& out) const {
    out << header.line() << '\n';
    for (const auto& c : comments) out << "# " << c << '\n';
    for (std::size_t c = 0; c < names.size(); ++c) out << (c ? ", " : "") << names[c];
    out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t r = 0; r < rows(); ++r) {
      for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? ", " : "") << columns[c][r];
      out << '\n';
    }
  }

  void write_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    write(out);
  }

  static Table read(std::istream& in, const std::string& what) {
    Table t;
    std::string line;
    bool have_names = false;
    while (std::getline(in, line)) {
      boost::algorithm::trim(line);
      if (line.empty()) continue;
      if (line[0] == '#') {
        if (line.rfind("# fsi", 0) == 0) t.header = RunHeader::parse(line);
        else t.comments.push_back(boost::algorithm::trim_copy(line.substr(1)));
        continue;
      }
      std::vector<std::string> cells;
      boost::algorithm::split(cells, line, boost::is_any_of(","));
      for (auto& c : cells) boost::algorithm::trim(c);
      if (!have_names) {
        t.names = cells;
        t.columns.assign(cells.size(), {});
        have_names = true;
        continue;
      }
      if (cells.size() != t.names.size()) throw ConfigError(what + ": ragged row '" + line + "'");
      for (std::size_t c = 0; c < cells.size(); ++c) {
        try {
          t.columns[c].push_back(std::stod(cells[c]));
        } catch (const std::logic_error&) {
          throw ConfigError(what + ": non-numeric cell '" + cells[c] + "'");
        }
      }
    }
    if (!have_names) throw ConfigError(what + ": no column header found");
    return t;
  }

  static Table read_file(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(what + ": cannot open '" + path + "'");
    return read(in, what);
  }
};

}  // namespace fsi
