#pragma once

namespace xct::tol {

// Numeric tolerances, declared once per precision mode.

// 64-bit mode (gradient checks, oracle comparisons).
inline constexpr double kFdStep = 1e-5;         // central finite-difference step
inline constexpr double kFdRelTol = 1e-4;       // max relative error vs analytic gradient
inline constexpr double kFdRelFloor = 1e-4;     // denominator floor (absolute regime below it)
inline constexpr double kOracleAbs = 1e-9;      // conv/projection vs brute-force loop oracle
inline constexpr double kExactAbs = 1e-12;      // algebraic identities (linearity, mean preservation)

// 32-bit mode (training-speed path).
inline constexpr double kOracleAbs32 = 1e-4;
inline constexpr double kExactAbs32 = 1e-5;

// Bookkeeping.
inline constexpr double kLossReportAbs = 1e-9;  // logged total vs weighted recomputation

} // namespace xct::tol
