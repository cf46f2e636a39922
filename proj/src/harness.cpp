#include "oodbench/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "oodbench/checkpoint.hpp"
#include "oodbench/errors.hpp"

namespace oodbench {

namespace {

constexpr const char* kCsvHeader =
    "instance_id,origin,variation,novelty,y,y_hat,confidence,m_hat,s_hat,ml_time_s,"
    "sm_time_s";

double seconds_since(std::chrono::steady_clock::time_point t0,
                     std::chrono::steady_clock::time_point t1) {
  return std::chrono::duration<double>(t1 - t0).count();
}

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void check_field(const std::string& s, const char* what) {
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
    throw ParameterError(std::string(what) + " may not contain commas or newlines");
}

TimeStats time_stats(std::vector<double> v) {
  TimeStats s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  const auto rank = [&](double q) {
    // Nearest-rank percentile: the ceil(q*n)-th smallest value.
    std::size_t r = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(v.size())));
    if (r == 0) r = 1;
    return v[r - 1];
  };
  s.p50 = rank(0.50);
  s.p95 = rank(0.95);
  return s;
}

}  // namespace

std::vector<Readout> run_stream(const Network& net, const Monitor& monitor,
                                const BenchmarkDataset& bench) {
  if (bench.instances.empty()) throw DataError("benchmark stream is empty");
  using Clock = std::chrono::steady_clock;

  const auto process = [&](const LabeledInstance& inst, Readout& row) {
    const auto sut0 = Clock::now();
    const auto ml0 = Clock::now();
    ForwardTrace trace;
    try {
      trace = forward(net, inst.image);
    } catch (const ShapeError& e) {
      throw ShapeError(std::string(e.what()) + " while processing instance " + inst.id);
    }
    const auto ml1 = Clock::now();
    const auto sm0 = Clock::now();
    bool flag = false;
    try {
      flag = monitor.detect(net, inst.image, trace);
    } catch (const ShapeError& e) {
      throw ShapeError(std::string(e.what()) + " while processing instance " + inst.id);
    }
    const auto sm1 = Clock::now();
    row.instance_id = inst.id;
    row.origin = inst.origin;
    row.variation = inst.variation;
    row.novelty = inst.novelty;
    row.y = inst.label;
    row.y_hat = trace.prediction;
    row.confidence = trace.confidence;
    row.m_hat = flag;
    row.s_hat = flag;  // current policy: an alarm invalidates the prediction
    row.ml_time_s = seconds_since(ml0, ml1);
    row.sm_time_s = seconds_since(sm0, sm1);
    row.sut_time_s = seconds_since(sut0, Clock::now());
  };

  Readout warmup;
  process(bench.instances.front(), warmup);

  std::vector<Readout> out(bench.instances.size());
  for (std::size_t i = 0; i < bench.instances.size(); ++i)
    process(bench.instances[i], out[i]);
  return out;
}

void write_readout_csv(const std::string& path, const std::vector<Readout>& rows,
                       std::uint64_t config_hash) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const Readout& r : rows) {
    check_field(r.instance_id, "instance id");
    check_field(r.variation, "variation");
    os << r.instance_id << ',' << origin_str(r.origin) << ',' << r.variation << ','
       << (r.novelty ? 1 : 0) << ',' << r.y << ',' << r.y_hat << ','
       << fmt9(r.confidence) << ',' << (r.m_hat ? 1 : 0) << ',' << (r.s_hat ? 1 : 0)
       << ',' << fmt9(r.ml_time_s) << ',' << fmt9(r.sm_time_s) << '\n';
  }
  os << "# config_hash=" << hash_hex(config_hash) << '\n';
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  const std::string s = os.str();
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw DataError("failed writing " + path);
}

std::vector<Readout> read_readout_csv(const std::string& path, std::uint64_t* config_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(f, line)) throw FormatError("empty readout file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw FormatError("unexpected readout header in " + path);

  std::vector<Readout> rows;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# config_hash=";
      if (config_hash != nullptr && line.rfind(tag, 0) == 0)
        *config_hash = std::stoull(line.substr(tag.size()), nullptr, 16);
      continue;
    }
    std::vector<std::string> f11;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        f11.push_back(line.substr(start));
        break;
      }
      f11.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (f11.size() != 11)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 11 fields, got " +
                        std::to_string(f11.size()));
    const auto parse_bool = [&](const std::string& s) {
      if (s == "0") return false;
      if (s == "1") return true;
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad boolean '" + s + "'");
    };
    try {
      Readout r;
      r.instance_id = f11[0];
      if (f11[1] == "ID")
        r.origin = Origin::ID;
      else if (f11[1] == "OOD")
        r.origin = Origin::OOD;
      else
        throw FormatError(path + ":" + std::to_string(lineno) + ": bad origin '" + f11[1] +
                          "'");
      r.variation = f11[2];
      r.novelty = parse_bool(f11[3]);
      r.y = std::stoi(f11[4]);
      r.y_hat = std::stoi(f11[5]);
      r.confidence = std::stod(f11[6]);
      r.m_hat = parse_bool(f11[7]);
      r.s_hat = parse_bool(f11[8]);
      r.ml_time_s = std::stod(f11[9]);
      r.sm_time_s = std::stod(f11[10]);
      rows.push_back(std::move(r));
    } catch (const std::invalid_argument&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed number");
    } catch (const std::out_of_range&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": number out of range");
    }
  }
  return rows;
}

ResourceReport measure_resources(const Network& net, const Monitor& monitor,
                                 const std::vector<Readout>& readouts) {
  if (readouts.empty()) throw ParameterError("resource report needs at least one readout");
  std::vector<double> ml, sm, sut;
  ml.reserve(readouts.size());
  sm.reserve(readouts.size());
  sut.reserve(readouts.size());
  for (const Readout& r : readouts) {
    ml.push_back(r.ml_time_s);
    sm.push_back(r.sm_time_s);
    sut.push_back(r.sut_time_s);
  }
  ResourceReport rep;
  rep.ml_time_s = time_stats(std::move(ml));
  rep.sm_time_s = time_stats(std::move(sm));
  rep.sut_time_s = time_stats(std::move(sut));
  rep.ml_bytes = serialize_network(net, 0).size();
  rep.sm_bytes = serialize_monitor(monitor, 0).size();
  rep.sm_share = rep.sut_time_s.mean > 0.0 ? rep.sm_time_s.mean / rep.sut_time_s.mean : 0.0;
  return rep;
}

std::string resource_report_json(const ResourceReport& r) {
  nlohmann::json j;
  const auto stats = [](const TimeStats& s) {
    return nlohmann::json{{"mean", s.mean}, {"p50", s.p50}, {"p95", s.p95}};
  };
  j["ml_time_s"] = stats(r.ml_time_s);
  j["sm_time_s"] = stats(r.sm_time_s);
  j["sut_time_s"] = stats(r.sut_time_s);
  j["ml_bytes"] = r.ml_bytes;
  j["sm_bytes"] = r.sm_bytes;
  j["sm_share"] = r.sm_share;
  return j.dump(2) + "\n";
}

ResourceReport parse_resource_report(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad resource report: ") + e.what());
  }
  try {
    ResourceReport r;
    const auto stats = [](const nlohmann::json& s) {
      TimeStats t;
      t.mean = s.at("mean").get<double>();
      t.p50 = s.at("p50").get<double>();
      t.p95 = s.at("p95").get<double>();
      return t;
    };
    r.ml_time_s = stats(j.at("ml_time_s"));
    r.sm_time_s = stats(j.at("sm_time_s"));
    r.sut_time_s = stats(j.at("sut_time_s"));
    r.ml_bytes = j.at("ml_bytes").get<std::uint64_t>();
    r.sm_bytes = j.at("sm_bytes").get<std::uint64_t>();
    r.sm_share = j.at("sm_share").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad resource report: ") + e.what());
  }
}

}  // namespace oodbench
