#pragma once

#include "mjls/mode_space.h"

namespace mjls {

// x(k+1) = A x + B u + F v,  z = [C x; D u], mode chain driven by `kernel`
// and started from `initial`.
struct SystemModel {
  GridPtr grid;
  KernelDensity kernel;
  InitialDensity initial;
  MatrixField A;  // n x n
  MatrixField B;  // n x m
  MatrixField C;  // p x n
  MatrixField D;  // q x m
  MatrixField F;  // n x r

  int n() const { return A.rows(); }
  int m() const { return B.cols(); }
  int p() const { return C.rows(); }
  int r() const { return F.cols(); }

  // Shape and grid consistency. Throws ConfigError.
  void Validate() const;
  // D^T D = I in every cell (required by the game and H-infinity designs).
  void RequireOrthonormalD(double tol = 1e-9) const;
};

// Fills absent B, C, D, F with conformal defaults: B and F zero n x 1,
// C zero 1 x n, D identity m x m.
SystemModel MakeSystemModel(KernelDensity kernel, InitialDensity initial, MatrixField A,
                            MatrixField B = {}, MatrixField C = {}, MatrixField D = {},
                            MatrixField F = {});

}  // namespace mjls
