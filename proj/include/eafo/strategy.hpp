// Strategy selection: which of (I_t, eps_t) adapts, which is fixed, and
// whether uploads are compressed at all.

#pragma once

#include <string>

#include "eafo/errors.hpp"

namespace eafo {

struct StrategyConfig {
  enum class Kind {
    Eafo,           // adaptive I and eps, compressed uplink
    FixedBoth,      // fixed I and eps (eps == 0 disables compression)
    AdaptiveIOnly,  // adaptive I, dense uplink
    FixedEpsOnly,   // I = 1, fixed eps, compressed uplink
    FedAvgPlain,    // fixed I, dense uplink
  };
  enum class ControllerMode { CubeRoot, Stationary };

  Kind kind = Kind::Eafo;
  double fixed_I = 1.0;
  double fixed_eps = 0.0;  // 0 = lossless/dense for FixedBoth
  ControllerMode controller = ControllerMode::CubeRoot;

  bool adapts_I() const { return kind == Kind::Eafo || kind == Kind::AdaptiveIOnly; }
  bool compresses() const {
    switch (kind) {
      case Kind::Eafo: return true;
      case Kind::FixedBoth: return fixed_eps > 0.0;
      case Kind::FixedEpsOnly: return true;
      default: return false;
    }
  }

  void validate() const {
    if ((kind == Kind::FixedBoth || kind == Kind::FedAvgPlain) && fixed_I < 1.0)
      throw config_error("strategy: fixed I must be >= 1");
    if (kind == Kind::FixedEpsOnly && !(fixed_eps > 0.0))
      throw config_error("strategy: fixed eps must be positive");
    if (kind == Kind::FixedBoth && fixed_eps < 0.0)
      throw config_error("strategy: fixed eps must be >= 0 (0 = lossless)");
  }

  static std::string kind_name(Kind k) {
    switch (k) {
      case Kind::Eafo: return "eafo";
      case Kind::FixedBoth: return "fixed_both";
      case Kind::AdaptiveIOnly: return "adaptive_i";
      case Kind::FixedEpsOnly: return "fixed_eps";
      case Kind::FedAvgPlain: return "fedavg";
    }
    return "unknown";
  }

  static Kind kind_from_name(const std::string& s) {
    if (s == "eafo") return Kind::Eafo;
    if (s == "fixed_both") return Kind::FixedBoth;
    if (s == "adaptive_i") return Kind::AdaptiveIOnly;
    if (s == "fixed_eps") return Kind::FixedEpsOnly;
    if (s == "fedavg") return Kind::FedAvgPlain;
    throw config_error("strategy: unknown kind '" + s + "'");
  }
};

}  // namespace eafo
