#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "trnav/error.hpp"
#include "trnav/flow.hpp"

namespace trnav {

namespace {

constexpr const char* kHeader = "id,u1x,u1y,u2x,u2y,status,score";

}  // namespace

void write_flow_csv(const std::vector<FlowFeature>& features, std::ostream& out) {
  out << kHeader << '\n';
  char buf[256];
  for (const FlowFeature& f : features) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%s,%.6g", f.id, f.u1.x(), f.u1.y(),
                  f.u2.x(), f.u2.y(), f.tracked() ? "tracked" : "lost", f.score);
    out << buf << '\n';
  }
}

void save_flow_csv(const std::vector<FlowFeature>& features, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Load, "cannot write flow CSV " + path.string());
  write_flow_csv(features, out);
  if (!out) throw Error(ErrorKind::Load, "write failed for " + path.string());
}

std::vector<FlowFeature> read_flow_csv(std::istream& in, const std::string& source_name) {
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::Load, source_name + ":" + std::to_string(line_no) + ": " + why +
                                     " in line '" + line + "'");
  };
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::Load, source_name + ": empty flow CSV");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) fail("unexpected header");

  std::vector<FlowFeature> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 7) fail("expected 7 columns");
    FlowFeature f;
    try {
      std::size_t used = 0;
      auto num = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      f.id = std::stoi(cols[0], &used);
      if (used != cols[0].size()) throw std::invalid_argument(cols[0]);
      f.u1 = Vec2(num(cols[1]), num(cols[2]));
      f.u2 = Vec2(num(cols[3]), num(cols[4]));
      f.score = num(cols[6]);
    } catch (const std::exception&) {
      fail("malformed number");
    }
    if (cols[5] == "tracked") {
      f.status = TrackStatus::Tracked;
    } else if (cols[5] == "lost") {
      f.status = TrackStatus::Lost;
    } else {
      fail("status must be 'tracked' or 'lost'");
    }
    if (!f.u1.allFinite() || !f.u2.allFinite()) fail("non-finite coordinate");
    out.push_back(f);
  }
  return out;
}

std::vector<FlowFeature> load_flow_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Load, "cannot open flow CSV " + path.string());
  return read_flow_csv(in, path.string());
}

}  // namespace trnav
