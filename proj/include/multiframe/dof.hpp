#pragma once

// Degrees-of-freedom balances for the three projection regimes. Integer only.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multiframe/error.hpp"

namespace mf {

enum class Regime { orthographic, perspective_calibrated, perspective_uncalibrated };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::orthographic: return "orthographic";
    case Regime::perspective_calibrated: return "perspective_calibrated";
    case Regime::perspective_uncalibrated: return "perspective_uncalibrated";
  }
  return "unknown";
}

inline Regime regime_from_string(std::string_view s) {
  if (s == "orthographic") return Regime::orthographic;
  if (s == "perspective_calibrated") return Regime::perspective_calibrated;
  if (s == "perspective_uncalibrated") return Regime::perspective_uncalibrated;
  fail(ErrorKind::parse, "unknown regime tag '" + std::string(s) + "'");
}

struct FeatureCount {
  int p = 0;  ///< traced points
  int s = 0;  ///< traced straight lines
  int k = 1;  ///< frames

  void validate() const {
    if (p < 0 || s < 0) fail(ErrorKind::input, "feature counts must be nonnegative");
    if (p + s < 1) fail(ErrorKind::input, "at least one traced feature is required");
    if (k < 1) fail(ErrorKind::input, "at least one frame is required");
  }
};

enum class Feasibility { feasible, infeasible, infeasible_by_claim };

inline std::string_view to_string(Feasibility f) {
  switch (f) {
    case Feasibility::feasible: return "feasible";
    case Feasibility::infeasible: return "infeasible";
    case Feasibility::infeasible_by_claim: return "infeasible-by-claim";
  }
  return "unknown";
}

struct DofVerdict {
  Regime regime = Regime::orthographic;
  FeatureCount count;
  long dof = 0;
  long info = 0;
  Feasibility status = Feasibility::infeasible;
  std::optional<std::string> override_reason;

  bool feasible() const { return status == Feasibility::feasible; }
  /// "<", "=" or ">" comparing dof against info.
  std::string_view relation() const { return dof < info ? "<" : (dof == info ? "=" : ">"); }
  std::string summary() const {
    return std::to_string(dof) + " " + std::string(relation()) + " " + std::to_string(info) + " " +
           std::string(to_string(status));
  }
};

namespace detail {
inline DofVerdict balance(Regime r, FeatureCount c, long dof, long info) {
  DofVerdict v;
  v.regime = r;
  v.count = c;
  v.dof = dof;
  v.info = info;
  v.status = dof <= info ? Feasibility::feasible : Feasibility::infeasible;
  return v;
}
}  // namespace detail

inline DofVerdict dof_orthographic(FeatureCount c) {
  c.validate();
  const long p = c.p, s = c.s, k = c.k;
  DofVerdict v = detail::balance(Regime::orthographic, c, -1 + 3 * p + 4 * s + 5 * (k - 1), k * (2 * p + 2 * s));
  if (k == 2) {
    v.status = Feasibility::infeasible;
    v.override_reason = "two orthographic frames never fix depth structure beyond three points";
  } else if (s == 0 && (k < 3 || p < 3)) {
    v.status = Feasibility::infeasible;
    v.override_reason = "orthographic recovery from points needs at least 3 frames and 3 points";
  }
  return v;
}

inline DofVerdict dof_perspective_calibrated(FeatureCount c) {
  c.validate();
  const long p = c.p, s = c.s, k = c.k;
  return detail::balance(Regime::perspective_calibrated, c, -1 + 3 * p + 4 * s + 6 * (k - 1),
                         k * (2 * p + 2 * s));
}

/// Points only: the uncalibrated balance has no line term.
inline DofVerdict dof_uncalibrated(int p, int k) {
  const FeatureCount c{p, 0, k};
  c.validate();
  const long pl = p, kl = k;
  DofVerdict v = detail::balance(Regime::perspective_uncalibrated, c, -1 + 3 * pl + 3 + 9 * (kl - 1), 2 * kl * pl);
  if (p <= 4) {
    v.status = Feasibility::infeasible;
    v.override_reason = "four or fewer points never determine structure and motion for any frame count";
  } else if (k == 2) {
    v.status = Feasibility::infeasible;
    v.override_reason = "two uncalibrated frames never determine structure, whatever the point count";
  } else if (k == 3) {
    v.status = Feasibility::infeasible_by_claim;
    v.override_reason = "three uncalibrated frames are claimed insufficient; only a proof sketch exists";
  }
  return v;
}

inline DofVerdict dof_verdict(Regime r, FeatureCount c) {
  switch (r) {
    case Regime::orthographic: return dof_orthographic(c);
    case Regime::perspective_calibrated: return dof_perspective_calibrated(c);
    case Regime::perspective_uncalibrated:
      if (c.s != 0) fail(ErrorKind::input, "the uncalibrated balance counts points only (lines must be 0)");
      return dof_uncalibrated(c.p, c.k);
  }
  fail(ErrorKind::input, "unknown regime");
}

/// Inclusive integer range; empty when hi < lo.
struct CountRange {
  int lo = 0;
  int hi = -1;
  bool empty() const { return hi < lo; }
};

/// Rows ordered by p, then s, then k. Combinations with no feature (p + s = 0)
/// are skipped; uncalibrated tables accept only s = 0.
inline std::vector<DofVerdict> verdict_table(Regime r, CountRange p, CountRange s, CountRange k) {
  std::vector<DofVerdict> rows;
  if (p.empty() || s.empty() || k.empty()) return rows;
  if (p.lo < 0 || s.lo < 0 || k.lo < 1) fail(ErrorKind::input, "count ranges must be nonnegative (frames >= 1)");
  if (r == Regime::perspective_uncalibrated && (s.lo != 0 || s.hi != 0))
    fail(ErrorKind::input, "the uncalibrated balance counts points only (lines must be 0)");
  for (int pi = p.lo; pi <= p.hi; ++pi)
    for (int si = s.lo; si <= s.hi; ++si)
      for (int ki = k.lo; ki <= k.hi; ++ki) {
        if (pi + si < 1) continue;
        rows.push_back(dof_verdict(r, {pi, si, ki}));
      }
  return rows;
}

}  // namespace mf
