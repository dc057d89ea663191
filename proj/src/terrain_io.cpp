#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "trnav/error.hpp"
#include "trnav/terrain.hpp"

namespace trnav {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double parse_number(const std::string& token, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Load, where + ": expected a number, got '" + token + "'");
  }
}

}  // namespace

Dtm parse_esri_ascii(std::istream& in, const std::string& source_name) {
  std::map<std::string, double> header;
  std::string key;
  int line_no = 0;
  std::string line;
  std::string first_data_line;
  // Header lines are "<keyword> <value>"; the first line starting with a
  // number begins the data block.
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    if (!(ls >> key)) continue;
    if (std::isalpha(static_cast<unsigned char>(key[0]))) {
      std::string value;
      if (!(ls >> value)) {
        throw Error(ErrorKind::Load, source_name + ":" + std::to_string(line_no) +
                                         ": header keyword without value");
      }
      header[lower(key)] = parse_number(value, source_name + ":" + std::to_string(line_no));
    } else {
      first_data_line = line;
      break;
    }
  }

  for (const char* required : {"ncols", "nrows", "cellsize"}) {
    if (!header.count(required)) {
      throw Error(ErrorKind::Load, source_name + ": missing header '" + required + "'");
    }
  }
  const double ncols_d = header["ncols"];
  const double nrows_d = header["nrows"];
  if (ncols_d < 2 || nrows_d < 2 || ncols_d != std::floor(ncols_d) || nrows_d != std::floor(nrows_d)) {
    throw Error(ErrorKind::Load, source_name + ": ncols/nrows must be integers >= 2");
  }
  const int ncols = static_cast<int>(ncols_d);
  const int nrows = static_cast<int>(nrows_d);
  const double cell = header["cellsize"];
  if (!(cell > 0.0)) throw Error(ErrorKind::Load, source_name + ": cellsize must be > 0");

  double origin_x = 0.0;
  double origin_y = 0.0;
  if (header.count("xllcorner") && header.count("yllcorner")) {
    origin_x = header["xllcorner"] + 0.5 * cell;
    origin_y = header["yllcorner"] + 0.5 * cell;
  } else if (header.count("xllcenter") && header.count("yllcenter")) {
    origin_x = header["xllcenter"];
    origin_y = header["yllcenter"];
  } else {
    throw Error(ErrorKind::Load, source_name + ": missing xllcorner/yllcorner header");
  }
  const bool has_nodata = header.count("nodata_value") > 0;
  const double nodata = has_nodata ? header["nodata_value"] : 0.0;

  std::vector<double> z(static_cast<std::size_t>(ncols) * nrows);
  std::size_t count = 0;
  auto consume = [&](const std::string& text, int at_line) {
    std::istringstream ls(text);
    std::string tok;
    while (ls >> tok) {
      if (count >= z.size()) {
        throw Error(ErrorKind::Load, source_name + ":" + std::to_string(at_line) +
                                         ": more values than ncols*nrows");
      }
      const double v = parse_number(tok, source_name + ":" + std::to_string(at_line));
      if (has_nodata && v == nodata) {
        throw Error(ErrorKind::Load, source_name + ":" + std::to_string(at_line) +
                                         ": NODATA cell is not supported");
      }
      // File rows run north to south; grid row 0 is the southernmost.
      const std::size_t file_row = count / ncols;
      const std::size_t col = count % ncols;
      const std::size_t grid_row = static_cast<std::size_t>(nrows) - 1 - file_row;
      z[grid_row * ncols + col] = v;
      ++count;
    }
  };
  if (!first_data_line.empty()) consume(first_data_line, line_no);
  while (std::getline(in, line)) {
    ++line_no;
    consume(line, line_no);
  }
  if (count != z.size()) {
    throw Error(ErrorKind::Load, source_name + ": expected " + std::to_string(z.size()) +
                                     " values, found " + std::to_string(count));
  }
  try {
    return Dtm(origin_x, origin_y, cell, ncols, nrows, std::move(z));
  } catch (const Error& e) {
    throw Error(ErrorKind::Load, source_name + ": " + e.what());
  }
}

Dtm load_esri_ascii(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Load, "cannot open DTM file " + path.string());
  return parse_esri_ascii(in, path.string());
}

void write_esri_ascii(const Dtm& dtm, std::ostream& out) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  out << "ncols " << dtm.width() << "\n";
  out << "nrows " << dtm.height() << "\n";
  out << "xllcorner " << num(dtm.origin_x() - 0.5 * dtm.cell_size()) << "\n";
  out << "yllcorner " << num(dtm.origin_y() - 0.5 * dtm.cell_size()) << "\n";
  out << "cellsize " << num(dtm.cell_size()) << "\n";
  out << "NODATA_value -9999\n";
  for (int j = dtm.height() - 1; j >= 0; --j) {
    for (int i = 0; i < dtm.width(); ++i) {
      if (i) out << ' ';
      out << num(dtm.at(i, j));
    }
    out << '\n';
  }
}

void save_esri_ascii(const Dtm& dtm, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Load, "cannot write DTM file " + path.string());
  write_esri_ascii(dtm, out);
  if (!out) throw Error(ErrorKind::Load, "write failed for " + path.string());
}

}  // namespace trnav
