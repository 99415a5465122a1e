// Simulated per-round wall-clock accounting.
//
// Each device pays a dense model download, I_t local compute steps, and an
// uplink transfer sized by what it actually sends (sampled atoms, or the
// dense vector when compression is off). The round completes when the
// slowest device finishes.

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "eafo/errors.hpp"

namespace eafo {

struct TimeModel {
  double uplink_bps = 100e3;
  double downlink_bps = 100e3;
  double per_step_compute_s = 0.005;  // one local SGD step on one device
  int bits_per_param = 32;
  int bits_per_atom = 64;  // index + coefficient
  // Optional per-device slowdown multipliers (empty = homogeneous fleet).
  std::vector<double> device_multipliers;

  void validate(int num_clients) const {
    if (!(uplink_bps > 0.0) || !(downlink_bps > 0.0))
      throw config_error("time model: link rates must be positive");
    if (!(per_step_compute_s > 0.0))
      throw config_error("time model: per-step compute time must be positive");
    if (bits_per_param <= 0 || bits_per_atom <= 0)
      throw config_error("time model: bit widths must be positive");
    if (!device_multipliers.empty() &&
        device_multipliers.size() != static_cast<std::size_t>(num_clients))
      throw config_error("time model: device multiplier count must equal num_clients");
    for (double m : device_multipliers)
      if (!(m > 0.0)) throw config_error("time model: device multipliers must be positive");
  }

  double multiplier(std::size_t device) const {
    return device_multipliers.empty() ? 1.0 : device_multipliers[device];
  }
};

struct DeviceDelays {
  double download_s = 0.0;
  double compute_s = 0.0;
  double upload_s = 0.0;
  double total() const { return download_s + compute_s + upload_s; }
};

struct RoundDelays {
  std::vector<DeviceDelays> per_device;
  double round_s = 0.0;  // max over devices
};

// uplink_bits_per_device: what each device actually sends this round.
inline RoundDelays simulate_round_time(int I_t, const std::vector<std::uint64_t>& uplink_bits_per_device,
                                       std::size_t model_dim, const TimeModel& tm) {
  RoundDelays r;
  r.per_device.resize(uplink_bits_per_device.size());
  const double down_bits = static_cast<double>(model_dim) * tm.bits_per_param;
  for (std::size_t n = 0; n < uplink_bits_per_device.size(); ++n) {
    const double m = tm.multiplier(n);
    auto& d = r.per_device[n];
    d.download_s = m * down_bits / tm.downlink_bps;
    d.compute_s = m * static_cast<double>(I_t) * tm.per_step_compute_s;
    d.upload_s = m * static_cast<double>(uplink_bits_per_device[n]) / tm.uplink_bps;
    r.round_s = std::max(r.round_s, d.total());
  }
  return r;
}

}  // namespace eafo
