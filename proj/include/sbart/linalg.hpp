#pragma once

#include "sbart/types.hpp"

namespace sbart {

/// Lambda = Q Q^T, exactly symmetric by construction (lower half computed,
/// then mirrored).
SpdMatrix chol_product(const CholFactor& q);

/// Lower Cholesky factor of m. Throws NotPositiveDefinite when a pivot
/// fails (invalid scale matrix or numerically indefinite input).
CholFactor cholesky(const SpdMatrix& m);

/// Value q*_jk that forces (QQ^T)_jk = 0 given the first k columns' rows j
/// and k of q and the diagonal entry q_kk. Zero-based indices, 0 <= k < j.
/// Only columns 0..k-1 of q are read.
///
/// Uses the same dot-product expression as chol_product so the cancellation
/// in the product is exact up to a few ulps.
double constrained_entry(const Matrix& q, double q_kk, int j, int k);

/// Zero pattern of m: z_jk = 0 iff |m_jk| <= tol * max(diag(m)). The
/// diagonal of the result is always 1.
SparsityPattern pattern_of(const SpdMatrix& m, double tol);

}  // namespace sbart
