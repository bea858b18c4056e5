#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "solarlab/rng.hpp"

namespace solarlab {

inline constexpr int kTimestepsPerDay = 48;
inline constexpr double kYearPeriodDays = 365.0;

// one half-hourly panel reading
struct SolarSample {
  int day = 0;
  int timestep = 0;  // 0..47
  double vmp = 0.0;  // volts at max power
  double imp = 0.0;  // amps at max power
};

struct DayRecord {
  int day = 0;
  double price = 0.0;
  double generation = 0.0;
};

enum class Provenance : uint8_t { RealCsv = 0, Synthetic = 1 };

struct Dataset {
  std::vector<DayRecord> days;
  Provenance provenance = Provenance::RealCsv;
  uint64_t seed = 0;  // meaningful for synthetic data only

  size_t size() const { return days.size(); }
  bool empty() const { return days.empty(); }
  const DayRecord& operator[](size_t i) const { return days[i]; }

  // Day indices must be strictly increasing, prices positive, generation
  // non-negative, everything finite. Contiguity is additionally required
  // for source datasets and chronological splits; random splits only keep
  // the ordering.
  void validate(bool require_contiguous = true) const;
};

// header must be exactly: day,timestep,vmp,imp
std::vector<SolarSample> load_solar_csv(const std::string& path);

// Sum vmp*imp over each day's timesteps. Days inside the observed range
// with no readings come out as zero generation (no sun recorded). Output
// is sorted by day and covers [first observed day, last observed day].
std::vector<std::pair<int, double>> aggregate_daily(
    const std::vector<SolarSample>& samples);

// header must be exactly: day,price
std::vector<std::pair<int, double>> load_prices_csv(const std::string& path);

// inner join on day index; days missing from either side are dropped
// (a count goes to stderr), empty intersection is a ValidationError
Dataset join_days(const std::vector<std::pair<int, double>>& generation,
                  const std::vector<std::pair<int, double>>& prices);

// test slice is the last ceil(n * fraction) days
std::pair<Dataset, Dataset> split_chronological(const Dataset& d,
                                                double test_fraction);

// seeded uniform partition without replacement, both halves sorted by day
std::pair<Dataset, Dataset> split_random(const Dataset& d,
                                         double test_fraction, uint64_t seed);

struct SynthParams {
  // prices are currency per watt, deliberately below 1: selling a single
  // day's output then earns less than the day's generation subtracts in the
  // recurrent reward, so only batched, well-timed sales score
  double price_base = 0.5;
  double price_amplitude = 0.3;  // seasonal swing, well above 30% of base
  double price_noise = 0.05;
  double gen_amplitude = 30.0;
  double gen_noise = 2.0;

  void validate() const;
};

// One seasonal year-cycle each for price and generation, phased so that
// generation peaks while price is low and price peaks near the year edges:
//   price(d) = base + amp * sin(2 pi d / 365 + pi/2) + noise, clamped >= 0.01
//   gen(d)   = max(0, amp * sin(2 pi d / 365 + pi)   + noise)
// Bit-reproducible for a given seed.
Dataset synth_dataset(int n_days, uint64_t seed, const SynthParams& params = {});

// csv with optional "# key=value" metadata lines, then day,price,generation
void write_dataset_csv(std::ostream& os, const Dataset& d,
                       const std::vector<std::string>& metadata = {});
void write_dataset_csv_file(const std::string& path, const Dataset& d,
                            const std::vector<std::string>& metadata = {});
Dataset load_dataset_csv(const std::string& path);

// shortest decimal form that round-trips a double exactly
std::string format_double(double v);

}  // namespace solarlab
