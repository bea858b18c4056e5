#include "solarlab/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "solarlab/errors.hpp"

namespace solarlab {

namespace {

constexpr double kTau = 6.283185307179586;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

int parse_int(const std::string& s, const std::string& path, size_t line_no) {
  try {
    size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line_no) +
                     ": expected an integer, got '" + s + "'");
  }
}

double parse_num(const std::string& s, const std::string& path, size_t line_no) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing junk");
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line_no) +
                     ": expected a finite number, got '" + s + "'");
  }
}

// reads all lines, checks the header, hands back (line_no, fields) rows
std::vector<std::pair<size_t, std::vector<std::string>>> read_csv_rows(
    const std::string& path, const std::string& expected_header,
    bool allow_metadata) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path);
  std::vector<std::pair<size_t, std::vector<std::string>>> rows;
  std::string line;
  size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty()) continue;
    if (allow_metadata && t[0] == '#') continue;
    if (!header_seen) {
      if (t != expected_header)
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": expected header '" + expected_header + "', got '" +
                         t + "'");
      header_seen = true;
      continue;
    }
    rows.emplace_back(line_no, split_commas(t));
  }
  if (!header_seen)
    throw ParseError(path + ": missing header '" + expected_header + "'");
  return rows;
}

}  // namespace

void Dataset::validate(bool require_contiguous) const {
  for (size_t i = 0; i < days.size(); ++i) {
    const DayRecord& r = days[i];
    if (r.day < 0) throw ValidationError("negative day index");
    if (!std::isfinite(r.price) || !std::isfinite(r.generation))
      throw ValidationError("non-finite value at day " + std::to_string(r.day));
    if (r.price <= 0.0)
      throw ValidationError("non-positive price at day " + std::to_string(r.day));
    if (r.generation < 0.0)
      throw ValidationError("negative generation at day " + std::to_string(r.day));
    if (i > 0) {
      int prev = days[i - 1].day;
      if (r.day <= prev)
        throw ValidationError("day indices not strictly increasing at day " +
                              std::to_string(r.day));
      if (require_contiguous && r.day != prev + 1)
        throw ValidationError("day indices not contiguous between " +
                              std::to_string(prev) + " and " +
                              std::to_string(r.day));
    }
  }
}

std::vector<SolarSample> load_solar_csv(const std::string& path) {
  auto rows = read_csv_rows(path, "day,timestep,vmp,imp", true);
  std::vector<SolarSample> out;
  out.reserve(rows.size());
  std::set<std::pair<int, int>> seen;
  for (const auto& [line_no, f] : rows) {
    if (f.size() != 4)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 4 fields, got " + std::to_string(f.size()));
    SolarSample s;
    s.day = parse_int(f[0], path, line_no);
    s.timestep = parse_int(f[1], path, line_no);
    s.vmp = parse_num(f[2], path, line_no);
    s.imp = parse_num(f[3], path, line_no);
    if (s.day < 0)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": negative day index");
    if (s.timestep < 0 || s.timestep >= kTimestepsPerDay)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": timestep " + std::to_string(s.timestep) +
                            " outside [0, " + std::to_string(kTimestepsPerDay) +
                            ")");
    if (s.vmp < 0.0 || s.imp < 0.0)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": negative vmp or imp");
    if (!seen.insert({s.day, s.timestep}).second)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": duplicate reading for day " +
                            std::to_string(s.day) + " timestep " +
                            std::to_string(s.timestep));
    out.push_back(s);
  }
  return out;
}

std::vector<std::pair<int, double>> aggregate_daily(
    const std::vector<SolarSample>& samples) {
  if (samples.empty()) return {};
  int lo = samples.front().day, hi = samples.front().day;
  for (const SolarSample& s : samples) {
    lo = std::min(lo, s.day);
    hi = std::max(hi, s.day);
  }
  std::map<int, double> sums;
  for (int d = lo; d <= hi; ++d) sums[d] = 0.0;
  for (const SolarSample& s : samples) sums[s.day] += s.vmp * s.imp;
  std::vector<std::pair<int, double>> out;
  out.reserve(sums.size());
  for (const auto& [day, watts] : sums) out.emplace_back(day, watts);
  return out;
}

std::vector<std::pair<int, double>> load_prices_csv(const std::string& path) {
  auto rows = read_csv_rows(path, "day,price", true);
  std::vector<std::pair<int, double>> out;
  out.reserve(rows.size());
  std::set<int> seen;
  for (const auto& [line_no, f] : rows) {
    if (f.size() != 2)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 2 fields, got " + std::to_string(f.size()));
    int day = parse_int(f[0], path, line_no);
    double price = parse_num(f[1], path, line_no);
    if (day < 0)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": negative day index");
    if (price <= 0.0)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": non-positive price");
    if (!seen.insert(day).second)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": duplicate price for day " + std::to_string(day));
    out.emplace_back(day, price);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Dataset join_days(const std::vector<std::pair<int, double>>& generation,
                  const std::vector<std::pair<int, double>>& prices) {
  std::map<int, double> gen(generation.begin(), generation.end());
  Dataset d;
  d.provenance = Provenance::RealCsv;
  size_t dropped = 0;
  for (const auto& [day, price] : prices) {
    auto it = gen.find(day);
    if (it == gen.end()) {
      ++dropped;
      continue;
    }
    d.days.push_back({day, price, it->second});
  }
  dropped += generation.size() - d.days.size();
  if (dropped > 0)
    std::cerr << "join: dropped " << dropped
              << " day(s) missing price or generation\n";
  if (d.days.empty())
    throw ValidationError("price and generation days do not overlap");
  std::sort(d.days.begin(), d.days.end(),
            [](const DayRecord& a, const DayRecord& b) { return a.day < b.day; });
  d.validate(false);
  return d;
}

std::pair<Dataset, Dataset> split_chronological(const Dataset& d,
                                                double test_fraction) {
  if (d.empty()) throw ValidationError("cannot split an empty dataset");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must be in (0, 1)");
  size_t n = d.size();
  size_t n_test = static_cast<size_t>(
      std::ceil(static_cast<double>(n) * test_fraction));
  n_test = std::min(n_test, n);
  Dataset train, test;
  train.provenance = test.provenance = d.provenance;
  train.seed = test.seed = d.seed;
  train.days.assign(d.days.begin(), d.days.end() - static_cast<long>(n_test));
  test.days.assign(d.days.end() - static_cast<long>(n_test), d.days.end());
  return {train, test};
}

std::pair<Dataset, Dataset> split_random(const Dataset& d,
                                         double test_fraction, uint64_t seed) {
  if (d.empty()) throw ValidationError("cannot split an empty dataset");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must be in (0, 1)");
  size_t n = d.size();
  size_t n_test = static_cast<size_t>(
      std::ceil(static_cast<double>(n) * test_fraction));
  n_test = std::min(n_test, n);
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<bool> in_test(n, false);
  for (size_t i = 0; i < n_test; ++i) in_test[idx[i]] = true;
  Dataset train, test;
  train.provenance = test.provenance = d.provenance;
  train.seed = test.seed = d.seed;
  for (size_t i = 0; i < n; ++i)
    (in_test[i] ? test : train).days.push_back(d.days[i]);
  return {train, test};
}

void SynthParams::validate() const {
  if (price_base <= 0.0) throw ConfigError("price base must be positive");
  if (price_amplitude < 0.0 || gen_amplitude <= 0.0)
    throw ConfigError("amplitudes must be non-negative (generation positive)");
  if (price_noise < 0.0 || gen_noise < 0.0)
    throw ConfigError("noise levels must be non-negative");
  if (price_amplitude < 0.3 * price_base)
    throw ConfigError("price seasonal swing must be at least 30% of base");
}

Dataset synth_dataset(int n_days, uint64_t seed, const SynthParams& params) {
  if (n_days < 10) throw ConfigError("synthetic dataset needs at least 10 days");
  params.validate();
  Dataset d;
  d.provenance = Provenance::Synthetic;
  d.seed = seed;
  d.days.reserve(static_cast<size_t>(n_days));
  Rng price_rng = Rng(seed).substream(1);
  Rng gen_rng = Rng(seed).substream(2);
  constexpr double kPricePhase = kTau / 4.0;  // peak at the year edges
  constexpr double kGenPhase = kTau / 2.0;    // peak mid second half-year
  for (int day = 0; day < n_days; ++day) {
    double t = kTau * static_cast<double>(day) / kYearPeriodDays;
    double price = params.price_base +
                   params.price_amplitude * std::sin(t + kPricePhase) +
                   price_rng.normal(0.0, params.price_noise);
    price = std::max(price, 0.01);
    double gen = params.gen_amplitude * std::sin(t + kGenPhase) +
                 gen_rng.normal(0.0, params.gen_noise);
    gen = std::max(gen, 0.0);
    d.days.push_back({day, price, gen});
  }
  d.validate(true);
  return d;
}

void write_dataset_csv(std::ostream& os, const Dataset& d,
                       const std::vector<std::string>& metadata) {
  for (const std::string& m : metadata) os << "# " << m << "\n";
  os << "day,price,generation\n";
  for (const DayRecord& r : d.days)
    os << r.day << "," << format_double(r.price) << ","
       << format_double(r.generation) << "\n";
}

void write_dataset_csv_file(const std::string& path, const Dataset& d,
                            const std::vector<std::string>& metadata) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_dataset_csv(os, d, metadata);
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

Dataset load_dataset_csv(const std::string& path) {
  auto rows = read_csv_rows(path, "day,price,generation", true);
  Dataset d;
  d.provenance = Provenance::RealCsv;
  for (const auto& [line_no, f] : rows) {
    if (f.size() != 3)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 3 fields, got " + std::to_string(f.size()));
    DayRecord r;
    r.day = parse_int(f[0], path, line_no);
    r.price = parse_num(f[1], path, line_no);
    r.generation = parse_num(f[2], path, line_no);
    d.days.push_back(r);
  }
  d.validate(false);
  return d;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // %.17g always round-trips; shave digits while the value still survives
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(shorter, "%lf", &back);
    if (back == v) return shorter;
  }
  return buf;
}

}  // namespace solarlab
