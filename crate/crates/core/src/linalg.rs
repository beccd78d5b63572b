//! Small dense matrix algebra for intensity matrices and their exponentials.
//!
//! Matrices here are tiny (the alive-state count plus one), so everything is
//! stored dense and row-major.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::math;

/// Square dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Matrix::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data; `data.len()` must be a square.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Matrix { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::invalid(
                    "matrix rows must all have length equal to the row count",
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.data[i * d..(i + 1) * d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[k * n..(k + 1) * n];
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Row vector times matrix: `v * self`.
    pub fn left_mul_vec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &a) in v.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, b) in out.iter_mut().zip(&self.data[k * n..(k + 1) * n]) {
                *o += a * b;
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.dim;
        let mut t = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let n = self.dim;
        (0..n)
            .map(|j| (0..n).map(|i| math::abs(self[(i, j)])).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Solves `self * X = rhs` by LU with partial pivoting. `None` if singular.
    pub fn solve(&self, rhs: &Matrix) -> Option<Matrix> {
        let n = self.dim;
        let mut a = self.clone();
        let mut b = rhs.clone();
        for col in 0..n {
            let mut piv = col;
            let mut best = math::abs(a[(col, col)]);
            for r in col + 1..n {
                let v = math::abs(a[(r, col)]);
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(col * n + j, piv * n + j);
                    b.data.swap(col * n + j, piv * n + j);
                }
            }
            let d = a[(col, col)];
            for r in col + 1..n {
                let f = a[(r, col)] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a.data[r * n + j] -= f * a.data[col * n + j];
                }
                for j in 0..n {
                    b.data[r * n + j] -= f * b.data[col * n + j];
                }
            }
        }
        for col in (0..n).rev() {
            let d = a[(col, col)];
            for j in 0..n {
                let mut s = b[(col, j)];
                for k in col + 1..n {
                    s -= a[(col, k)] * b[(k, j)];
                }
                b[(col, j)] = s / d;
            }
        }
        Some(b)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Absolute row-sum tolerance for intensity matrices, scaled up for rows
/// holding large rates.
const ROW_SUM_TOL: f64 = 1e-12;
/// Pre-clamp floor on exponential entries; anything below is a numerical failure.
const NEGATIVE_CLAMP: f64 = 1e-12;

/// Generator of the alive/dead chain: `M` alive states followed by one
/// absorbing death state. Rates are per day.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrix(Matrix);

impl IntensityMatrix {
    /// Validates the generator invariants: non-negative off-diagonals,
    /// non-positive diagonal, zero row sums and an all-zero last row.
    pub fn new(m: Matrix) -> Result<Self> {
        let n = m.dim();
        if n < 2 {
            return Err(Error::invalid(
                "intensity matrix needs at least one alive state and the death state",
            ));
        }
        if !m.is_finite() {
            return Err(Error::invalid("intensity matrix has non-finite entries"));
        }
        for i in 0..n {
            let row = m.row(i);
            let mut sum = 0.0;
            let mut scale: f64 = 1.0;
            for (j, &v) in row.iter().enumerate() {
                if i != j && v < 0.0 {
                    return Err(Error::invalid(format!(
                        "negative off-diagonal intensity at ({i}, {j})"
                    )));
                }
                sum += v;
                scale = scale.max(math::abs(v));
            }
            if row[i] > 0.0 {
                return Err(Error::invalid(format!(
                    "positive diagonal intensity at ({i}, {i})"
                )));
            }
            if math::abs(sum) > ROW_SUM_TOL * scale {
                return Err(Error::invalid(format!(
                    "row {i} of intensity matrix sums to {sum}, not 0"
                )));
            }
        }
        if m.row(n - 1).iter().any(|&v| v != 0.0) {
            return Err(Error::invalid(
                "last (death) row of intensity matrix must be zero",
            ));
        }
        Ok(IntensityMatrix(m))
    }

    /// Builds a generator from off-diagonal rates of the alive rows; the
    /// diagonal is the negative row sum and the death row is zero.
    pub fn from_rates(dim: usize, mut rate: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = Matrix::zeros(dim);
        for i in 0..dim.saturating_sub(1) {
            let mut total = 0.0;
            for j in 0..dim {
                if i != j {
                    let r = rate(i, j);
                    m[(i, j)] = r;
                    total += r;
                }
            }
            m[(i, i)] = -total;
        }
        IntensityMatrix::new(m)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Number of alive states.
    pub fn alive_states(&self) -> usize {
        self.0.dim() - 1
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.0[(from, to)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Row-stochastic matrix of transition probabilities over a time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(Matrix);

impl TransitionMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        let n = m.dim();
        if !m.is_finite() {
            return Err(Error::invalid("transition matrix has non-finite entries"));
        }
        for i in 0..n {
            let row = m.row(i);
            if row.iter().any(|&v| !(-1e-12..=1.0 + 1e-12).contains(&v)) {
                return Err(Error::invalid(format!(
                    "transition matrix row {i} has entries outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if math::abs(s - 1.0) > 1e-10 {
                return Err(Error::invalid(format!(
                    "transition matrix row {i} sums to {s}"
                )));
            }
        }
        if n > 0 && (0..n).any(|j| m[(n - 1, j)] != if j == n - 1 { 1.0 } else { 0.0 }) {
            return Err(Error::invalid(
                "death state of a transition matrix must be absorbing",
            ));
        }
        Ok(TransitionMatrix(m))
    }

    pub fn identity(dim: usize) -> Self {
        TransitionMatrix(Matrix::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.0[(from, to)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Chapman-Kolmogorov composition `self` then `next`.
    pub fn then(&self, next: &TransitionMatrix) -> TransitionMatrix {
        TransitionMatrix(self.0.mul(&next.0))
    }
}

/// `exp(q * dt)` for a valid generator, with the result post-processed into a
/// proper transition matrix: the death row is set exactly absorbing, entries in
/// `(-1e-12, 0)` are clamped to zero and rows are renormalised.
pub fn matrix_exponential(q: &IntensityMatrix, dt: f64) -> Result<TransitionMatrix> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::invalid(format!(
            "time step must be finite and non-negative, got {dt}"
        )));
    }
    let n = q.dim();
    if dt == 0.0 {
        return Ok(TransitionMatrix::identity(n));
    }
    let mut p = expm(&q.as_matrix().scaled(dt))?;
    for j in 0..n {
        p[(n - 1, j)] = if j == n - 1 { 1.0 } else { 0.0 };
    }
    for i in 0..n - 1 {
        let row = p.row_mut(i);
        for v in row.iter_mut() {
            if *v < 0.0 {
                if *v > -NEGATIVE_CLAMP {
                    *v = 0.0;
                } else {
                    return Err(Error::Numerical(format!(
                        "matrix exponential produced negative probability {v}"
                    )));
                }
            }
        }
        let s: f64 = row.iter().sum();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Numerical(
                "matrix exponential produced a degenerate row".into(),
            ));
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(TransitionMatrix(p))
}

/// Mean time spent in alive state `state` (1-based label) before leaving it.
pub fn mean_sojourn_time(q: &IntensityMatrix, state: usize) -> Result<f64> {
    if state == 0 || state > q.alive_states() {
        return Err(Error::UndefinedSojourn { state });
    }
    let d = q.rate(state - 1, state - 1);
    if d >= 0.0 {
        return Err(Error::UndefinedSojourn { state });
    }
    Ok(-1.0 / d)
}

// Scaling-and-squaring with diagonal Padé approximants (Higham 2005). The
// thresholds bound the backward error of the degree-m approximant in the
// 1-norm at double precision.
const PADE_THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

/// Coefficients `c_i = (2m-i)! m! / ((2m)! i! (m-i)!)` of the [m/m] Padé
/// numerator of `exp`.
fn pade_coefficients(m: usize) -> [f64; 14] {
    let mut c = [0.0; 14];
    c[0] = 1.0;
    for i in 1..=m {
        c[i] = c[i - 1] * (m - i + 1) as f64 / (i as f64 * (2 * m - i + 1) as f64);
    }
    c
}

/// Raw matrix exponential of an arbitrary square matrix, no post-processing.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_finite() {
        return Err(Error::invalid("matrix exponential of a non-finite matrix"));
    }
    let n = a.dim();
    let norm = a.norm1();
    let id = Matrix::identity(n);
    if norm == 0.0 {
        return Ok(id);
    }

    for &(m, theta) in &PADE_THETA[..4] {
        if norm <= theta {
            return pade_solve(a, m, &id);
        }
    }

    let theta13 = PADE_THETA[4].1;
    let s = if norm > theta13 {
        math::ceil(math::log2(norm / theta13)).max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scaled(libm::ldexp(1.0, -s));
    let mut r = pade_solve(&scaled, 13, &id)?;
    for _ in 0..s {
        r = r.mul(&r);
    }
    Ok(r)
}

fn pade_solve(a: &Matrix, m: usize, id: &Matrix) -> Result<Matrix> {
    let c = pade_coefficients(m);
    let a2 = a.mul(a);
    let (u, v) = if m < 13 {
        // U = A * sum c_{2k+1} A^{2k}, V = sum c_{2k} A^{2k}
        let mut odd = id.scaled(c[1]);
        let mut even = id.scaled(c[0]);
        let mut pow = a2.clone();
        let mut k = 2;
        while k <= m {
            even.add_scaled(&pow, c[k]);
            odd.add_scaled(&pow, c[k + 1]);
            k += 2;
            if k <= m {
                pow = pow.mul(&a2);
            }
        }
        (a.mul(&odd), even)
    } else {
        let a4 = a2.mul(&a2);
        let a6 = a4.mul(&a2);
        let mut inner_u = a6.scaled(c[13]);
        inner_u.add_scaled(&a4, c[11]);
        inner_u.add_scaled(&a2, c[9]);
        let mut u = a6.mul(&inner_u);
        u.add_scaled(&a6, c[7]);
        u.add_scaled(&a4, c[5]);
        u.add_scaled(&a2, c[3]);
        u.add_scaled(id, c[1]);
        let u = a.mul(&u);

        let mut inner_v = a6.scaled(c[12]);
        inner_v.add_scaled(&a4, c[10]);
        inner_v.add_scaled(&a2, c[8]);
        let mut v = a6.mul(&inner_v);
        v.add_scaled(&a6, c[6]);
        v.add_scaled(&a4, c[4]);
        v.add_scaled(&a2, c[2]);
        v.add_scaled(id, c[0]);
        (u, v)
    };
    let mut num = v.clone();
    num.add_scaled(&u, 1.0);
    let mut den = v;
    den.add_scaled(&u, -1.0);
    den.solve(&num)
        .ok_or_else(|| Error::Numerical("singular Padé denominator in matrix exponential".into()))
}

/// Cholesky factor `L` (lower) of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.dim();
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = math::sqrt(d);
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Lower factor `L` with `L Lᵀ = a` for a symmetric positive semi-definite
/// matrix. Zero pivots (within `tol` of the diagonal scale) give zero columns;
/// a clearly negative pivot means the matrix is indefinite and yields `None`.
pub fn psd_factor(a: &Matrix, tol: f64) -> Option<Matrix> {
    let n = a.dim();
    let scale = (0..n)
        .map(|i| math::abs(a[(i, i)]))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !d.is_finite() || d < -tol * scale {
            return None;
        }
        if d <= tol * scale {
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if math::abs(s) > math::sqrt(tol) * scale {
                    return None;
                }
            }
            continue;
        }
        let d = math::sqrt(d);
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(a: &Matrix) -> Option<Matrix> {
    let l = cholesky(a)?;
    let n = a.dim();
    // Solve L Y = I, then Lᵀ X = Y.
    let mut y = Matrix::identity(n);
    for col in 0..n {
        for i in 0..n {
            let mut s = y[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * y[(k, col)];
            }
            y[(i, col)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[(i, col)];
            for k in i + 1..n {
                s -= l[(k, i)] * y[(k, col)];
            }
            y[(i, col)] = s / l[(i, i)];
        }
    }
    // symmetrise away rounding
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (y[(i, j)] + y[(j, i)]);
            y[(i, j)] = m;
            y[(j, i)] = m;
        }
    }
    Some(y)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are the eigenvectors.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.dim();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if math::abs(apq) < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (math::abs(theta) + math::sqrt(theta * theta + 1.0));
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

/// Nearest positive semi-definite matrix in Frobenius norm, by clipping
/// negative eigenvalues at `floor`.
pub fn nearest_psd(a: &Matrix, floor: f64) -> Matrix {
    let n = a.dim();
    let mut sym = a.clone();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            sym[(i, j)] = m;
            sym[(j, i)] = m;
        }
    }
    let (vals, vecs) = symmetric_eigen(&sym);
    let mut out = Matrix::zeros(n);
    for (k, &lam) in vals.iter().enumerate() {
        let lam = lam.max(floor);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += lam * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q2(rate: f64) -> IntensityMatrix {
        IntensityMatrix::new(Matrix::from_rows(&[[-rate, rate], [0.0, 0.0]]).unwrap()).unwrap()
    }

    /// Direct truncated power series, the definition of the exponential.
    fn taylor(a: &Matrix, terms: usize) -> Matrix {
        let n = a.dim();
        let mut sum = Matrix::identity(n);
        let mut term = Matrix::identity(n);
        for d in 1..terms {
            term = term.mul(a).scaled(1.0 / d as f64);
            sum.add_scaled(&term, 1.0);
        }
        sum
    }

    fn random_generator(offdiag: &[f64], dim: usize) -> IntensityMatrix {
        let mut it = offdiag.iter();
        IntensityMatrix::from_rates(dim, |_, _| *it.next().unwrap()).unwrap()
    }

    #[test]
    fn zero_generator_gives_identity() {
        let q = IntensityMatrix::new(Matrix::zeros(3)).unwrap();
        let p = matrix_exponential(&q, 17.0).unwrap();
        assert_eq!(p.as_matrix(), &Matrix::identity(3));
    }

    #[test]
    fn two_state_absorbing_closed_form() {
        let p = matrix_exponential(&q2(0.01), 100.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((p.prob(0, 0) - e).abs() < 1e-14);
        assert!((p.prob(0, 1) - (1.0 - e)).abs() < 1e-14);
        assert_eq!(p.prob(1, 0), 0.0);
        assert_eq!(p.prob(1, 1), 1.0);
        assert!((p.prob(0, 0) - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn zero_step_is_identity() {
        let q = q2(3.0);
        assert_eq!(
            matrix_exponential(&q, 0.0).unwrap(),
            TransitionMatrix::identity(2)
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = q2(1.0);
        assert!(matrix_exponential(&q, -1.0).is_err());
        assert!(matrix_exponential(&q, f64::NAN).is_err());
        assert!(matrix_exponential(&q, f64::INFINITY).is_err());
        let bad = Matrix::from_rows(&[[-1.0, 0.5], [0.0, 0.0]]).unwrap();
        assert!(IntensityMatrix::new(bad).is_err());
        let neg = Matrix::from_rows(&[[1.0, -1.0], [0.0, 0.0]]).unwrap();
        assert!(IntensityMatrix::new(neg).is_err());
        let alive_death = Matrix::from_rows(&[[-1.0, 1.0], [1.0, -1.0]]).unwrap();
        assert!(IntensityMatrix::new(alive_death).is_err());
        let nan = Matrix::from_rows(&[[f64::NAN, 1.0], [0.0, 0.0]]).unwrap();
        assert!(IntensityMatrix::new(nan).is_err());
    }

    #[test]
    fn sojourn_times() {
        assert_eq!(mean_sojourn_time(&q2(0.01), 1).unwrap(), 100.0);
        assert_eq!(mean_sojourn_time(&q2(1.0), 1).unwrap(), 1.0);
        assert_eq!(
            mean_sojourn_time(&q2(1.0), 2),
            Err(Error::UndefinedSojourn { state: 2 })
        );
        assert_eq!(
            mean_sojourn_time(&q2(0.0), 1),
            Err(Error::UndefinedSojourn { state: 1 })
        );
        assert!(mean_sojourn_time(&q2(1.0), 0).is_err());
    }

    #[test]
    fn stiff_products_stay_stochastic() {
        let q = IntensityMatrix::from_rates(3, |i, j| match (i, j) {
            (0, 1) => 150.0,
            (1, 0) => 1e-4,
            (_, 2) => 1e-3,
            _ => 0.0,
        })
        .unwrap();
        for dt in [1e-6, 0.3, 30.0, 3000.0] {
            let p = matrix_exponential(&q, dt).unwrap();
            TransitionMatrix::new(p.as_matrix().clone()).unwrap();
        }
    }

    #[test]
    fn solve_recovers_known_system() {
        let a = Matrix::from_rows(&[[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0, 2.0], [0.5, -1.0, 0.0], [2.0, 2.0, 2.0]]).unwrap();
        let b = a.mul(&x);
        assert!(a.solve(&b).unwrap().max_abs_diff(&x) < 1e-12);
        assert!(Matrix::zeros(2).solve(&Matrix::identity(2)).is_none());
    }

    #[test]
    fn spd_inverse_and_eigen() {
        let a = Matrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]).unwrap();
        let inv = spd_inverse(&a).unwrap();
        assert!(a.mul(&inv).max_abs_diff(&Matrix::identity(3)) < 1e-12);
        let (vals, vecs) = symmetric_eigen(&a);
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[(i, j)] * vecs[(j, k)]).sum();
                assert!((av - vals[k] * vecs[(i, k)]).abs() < 1e-10);
            }
        }
        let indefinite = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(cholesky(&indefinite).is_none());
        assert!(psd_factor(&indefinite, 1e-12).is_none());
        let fixed = nearest_psd(&indefinite, 1e-8);
        assert!(cholesky(&fixed).is_some());
        let zero = psd_factor(&Matrix::zeros(3), 1e-12).unwrap();
        assert_eq!(zero, Matrix::zeros(3));
    }

    proptest! {
        #[test]
        fn exponential_is_stochastic_and_semigroup(
            rates in proptest::collection::vec(0.0f64..1.0, 6),
            a in 0.0f64..100.0,
            b in 0.0f64..100.0,
        ) {
            let q = random_generator(&rates, 3);
            let pa = matrix_exponential(&q, a).unwrap();
            let pb = matrix_exponential(&q, b).unwrap();
            let pab = matrix_exponential(&q, a + b).unwrap();
            for i in 0..3 {
                let s: f64 = pa.as_matrix().row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
                prop_assert!(pa.as_matrix().row(i).iter().all(|&v| v >= 0.0));
            }
            prop_assert!(pa.then(&pb).as_matrix().max_abs_diff(pab.as_matrix()) < 1e-10);
        }

        #[test]
        fn raw_exponential_matches_truncated_series(
            rates in proptest::collection::vec(0.0f64..1.0, 6),
            dt in 0.0f64..10.0,
        ) {
            let q = random_generator(&rates, 3);
            let norm = q.as_matrix().norm1() * dt;
            let a = q.as_matrix().scaled(dt * (0.49 / norm.max(0.49)));
            let reference = taylor(&a, 30);
            prop_assert!(expm(&a).unwrap().max_abs_diff(&reference) < 1e-12);
        }

        #[test]
        fn general_matrices_match_series(entries in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let a = Matrix::from_row_major(4, entries).unwrap();
            let a = a.scaled(0.45 / a.norm1().max(1e-3));
            prop_assert!(expm(&a).unwrap().max_abs_diff(&taylor(&a, 30)) < 1e-12);
        }
    }
}
