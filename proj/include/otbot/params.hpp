#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "otbot/config.hpp"

namespace otbot {

class InvalidParams : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Identifies one scalar field of RobotParams. Used by the identification
/// code to name the subset of parameters being estimated.
enum class Param { l1, l2, r, xB, yB, xF, yF, mc, mp, Ic, Ip, Ia, bw, bp };

inline constexpr std::array<Param, 14> kAllParams = {
    Param::l1, Param::l2, Param::r,  Param::xB, Param::yB, Param::xF, Param::yF,
    Param::mc, Param::mp, Param::Ic, Param::Ip, Param::Ia, Param::bw, Param::bp};

inline constexpr std::string_view param_name(Param p) {
  switch (p) {
    case Param::l1: return "l1";
    case Param::l2: return "l2";
    case Param::r: return "r";
    case Param::xB: return "xB";
    case Param::yB: return "yB";
    case Param::xF: return "xF";
    case Param::yF: return "yF";
    case Param::mc: return "mc";
    case Param::mp: return "mp";
    case Param::Ic: return "Ic";
    case Param::Ip: return "Ip";
    case Param::Ia: return "Ia";
    case Param::bw: return "bw";
    case Param::bp: return "bp";
  }
  return "?";
}

/// Geometric, inertial and friction constants of the robot (SI units).
///
/// (xB, yB) locate the chassis centre of mass in the chassis frame attached at
/// the pivot; (xF, yF) locate the platform centre of mass in the platform frame.
/// mp, Ip, xF, yF are the working-platform values (platform plus load).
struct RobotParams {
  double l1 = 0.25;
  double l2 = 0.20;
  double r = 0.10;
  double xB = -0.13;
  double yB = 0.0;
  double xF = 0.0;
  double yF = 0.0;
  double mc = 109.14;
  double mp = 21.95;
  double Ic = 1.30;
  double Ip = 2.22;
  double Ia = 1.04e-2;
  double bw = 0.18;
  double bp = 0.24;

  /// Nominal values of the reference robot with the unloaded platform.
  static RobotParams nominal() { return RobotParams{}; }

  double& at(Param p) {
    switch (p) {
      case Param::l1: return l1;
      case Param::l2: return l2;
      case Param::r: return r;
      case Param::xB: return xB;
      case Param::yB: return yB;
      case Param::xF: return xF;
      case Param::yF: return yF;
      case Param::mc: return mc;
      case Param::mp: return mp;
      case Param::Ic: return Ic;
      case Param::Ip: return Ip;
      case Param::Ia: return Ia;
      case Param::bw: return bw;
      case Param::bp: return bp;
    }
    throw std::logic_error("unknown parameter");
  }
  double at(Param p) const { return const_cast<RobotParams*>(this)->at(p); }

  /// Throws InvalidParams if any invariant is violated.
  void validate() const {
    for (Param p : kAllParams)
      if (!std::isfinite(at(p)))
        throw InvalidParams("parameter " + std::string(param_name(p)) + " is not finite");
    auto positive = [](double v, std::string_view name) {
      if (!(v > 0.0)) throw InvalidParams(std::string(name) + " must be > 0");
    };
    positive(l1, "l1");
    positive(l2, "l2");
    positive(r, "r");
    positive(mc, "mc");
    positive(mp, "mp");
    positive(Ic, "Ic");
    positive(Ip, "Ip");
    positive(Ia, "Ia");
    if (bw < 0.0) throw InvalidParams("bw must be >= 0");
    if (bp < 0.0) throw InvalidParams("bp must be >= 0");
  }

  bool valid() const {
    try {
      validate();
      return true;
    } catch (const InvalidParams&) {
      return false;
    }
  }

  /// Copy with friction removed.
  RobotParams frictionless() const {
    RobotParams p = *this;
    p.bw = 0.0;
    p.bp = 0.0;
    return p;
  }

  friend bool operator==(const RobotParams&, const RobotParams&) = default;
};

/// Builds RobotParams from a config; absent keys keep their nominal value.
inline RobotParams params_from_config(const Config& cfg, const std::string& prefix = "") {
  RobotParams p = RobotParams::nominal();
  for (Param id : kAllParams) {
    const auto key = prefix + std::string(param_name(id));
    if (cfg.has(key)) p.at(id) = cfg.get_double(key);
  }
  try {
    p.validate();
  } catch (const InvalidParams& e) {
    throw ConfigError(cfg.origin() + ": " + e.what());
  }
  return p;
}

inline RobotParams load_params(const std::string& path) { return params_from_config(Config::load(path)); }

inline std::string params_to_text(const RobotParams& p) {
  std::string out;
  for (Param id : kAllParams) {
    out += std::string(param_name(id)) + " = " + format_double(p.at(id)) + "\n";
  }
  return out;
}

inline void save_params(const RobotParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path + ": cannot write file");
  out << params_to_text(p);
}

}  // namespace otbot
