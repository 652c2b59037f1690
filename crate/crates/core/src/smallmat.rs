//! Dense small-matrix kernel.
//!
//! Matrices here are tiny (`2 <= n <= 8`) and always square. The SVD is
//! computed in closed form for `n = 2` and by cyclic one-sided Jacobi
//! rotations otherwise, so results are reproducible bit for bit across
//! platforms that implement IEEE arithmetic.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RocError};

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 8;

/// Default relative tolerance for [`is_conformal`].
pub const CONFORMAL_TOL: f64 = 1e-9;

/// Square `n x n` matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from rows, validating shape, dimension and finiteness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        check_dim(n)?;
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(RocError::Input(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        let m = Self { n, data };
        m.check_finite()?;
        Ok(m)
    }

    /// Row-major slice constructor; `data.len()` must be a perfect square.
    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        check_dim(n)?;
        if data.len() != n * n {
            return Err(RocError::Input(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        let m = Self {
            n,
            data: data.to_vec(),
        };
        m.check_finite()?;
        Ok(m)
    }

    /// `xi ⊗ eta`, i.e. the matrix with entries `xi[i] * eta[j]`.
    pub fn outer(xi: &[f64], eta: &[f64]) -> Self {
        assert_eq!(xi.len(), eta.len(), "outer product of mismatched vectors");
        let n = xi.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = xi[i] * eta[j];
            }
        }
        m
    }

    /// Planar rotation by `theta` radians.
    pub fn rotation2(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            n: 2,
            data: vec![c, -s, s, c],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(RocError::Input("matrix has non-finite entries".into()))
        }
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + t * other`
    pub fn add_scaled(&self, t: f64, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + t * b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Determinant via LU factorisation with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        if n == 2 {
            return self.data[0] * self.data[3] - self.data[1] * self.data[2];
        }
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
                .unwrap();
            if a[pivot * n + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for i in col + 1..n {
                let f = a[i * n + col] / p;
                for j in col..n {
                    a[i * n + j] -= f * a[col * n + j];
                }
            }
        }
        det
    }

    /// Solves `self * x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
                .unwrap();
            if a[pivot * n + col] == 0.0 {
                return Err(RocError::Domain("singular matrix in solve".into()));
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                x.swap(pivot, col);
            }
            let p = a[col * n + col];
            for i in col + 1..n {
                let f = a[i * n + col] / p;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[i * n + j] -= f * a[col * n + j];
                }
                x[i] -= f * x[col];
            }
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / a[i * n + i];
        }
        Ok(x)
    }

    fn col(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = RocError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.rows()
    }
}

fn check_dim(n: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(RocError::Input(format!(
            "matrix dimension {n} outside supported range 2..={MAX_DIM}"
        )))
    }
}

/// Ordered singular values `λ̂₁ ≥ … ≥ λ̂ₙ > 0`, an element of the closed
/// ordered cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OrderedSingularTuple(Vec<f64>);

impl OrderedSingularTuple {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() > MAX_DIM {
            return Err(RocError::Input(format!(
                "singular tuple length {} outside 1..={MAX_DIM}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(RocError::Input(format!(
                "singular values must be finite and positive: {values:?}"
            )));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(RocError::Input(format!(
                "singular values must be weakly decreasing: {values:?}"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.0[0]
    }

    pub fn smallest(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// True when every consecutive gap exceeds `rel_tol * λ̂₁`.
    pub fn is_simple(&self, rel_tol: f64) -> bool {
        let scale = self.largest();
        self.0.windows(2).all(|w| w[0] - w[1] > rel_tol * scale)
    }

    pub fn is_strictly_ordered(&self) -> bool {
        self.0.windows(2).all(|w| w[0] > w[1])
    }

    /// Disjoint partition of the index set into blocks of (numerically)
    /// equal values. Values whose gap is at most `rel_tol * λ̂₁` share a block.
    pub fn blocks(&self, rel_tol: f64) -> Vec<std::ops::RangeInclusive<usize>> {
        let scale = self.largest();
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.0.len() {
            if i == self.0.len() || self.0[i - 1] - self.0[i] > rel_tol * scale {
                out.push(start..=i - 1);
                start = i;
            }
        }
        out
    }
}

impl TryFrom<Vec<f64>> for OrderedSingularTuple {
    type Error = RocError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OrderedSingularTuple> for Vec<f64> {
    fn from(s: OrderedSingularTuple) -> Self {
        s.0
    }
}

/// Output of [`svd_ordered`]: `F = U · diag(s) · Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    /// Singular values, weakly decreasing and nonnegative.
    pub s: Vec<f64>,
    pub v: Matrix,
    /// Set when `det F <= 0`; the factorisation is still valid.
    pub orientation_reversed: bool,
}

impl Svd {
    /// The singular values as an ordered tuple; fails if any value is zero.
    pub fn ordered(&self) -> Result<OrderedSingularTuple> {
        OrderedSingularTuple::new(self.s.clone())
    }
}

/// Singular value decomposition with weakly decreasing singular values.
pub fn svd_ordered(f: &Matrix) -> Result<Svd> {
    if !f.is_finite() {
        return Err(RocError::Input("svd of a matrix with non-finite entries".into()));
    }
    let orientation_reversed = f.det() <= 0.0;
    let (u, s, v) = if f.n == 2 {
        svd2(f)
    } else {
        svd_jacobi(f)
    };
    Ok(Svd {
        u,
        s,
        v,
        orientation_reversed,
    })
}

/// Singular values only, weakly decreasing.
pub fn singular_values(f: &Matrix) -> Result<Vec<f64>> {
    if !f.is_finite() {
        return Err(RocError::Input("svd of a matrix with non-finite entries".into()));
    }
    if f.n == 2 {
        let (hi, lo) = sv2(f.data[0], f.data[1], f.data[2], f.data[3]);
        Ok(vec![hi, lo])
    } else {
        Ok(svd_jacobi(f).1)
    }
}

/// Closed-form singular values of `[[a, b], [c, d]]`.
///
/// `σ_max = (√((a+d)²+(c−b)²) + √((a−d)²+(b+c)²)) / 2`; the smaller value is
/// recovered as `|det| / σ_max`, which equals the difference form but keeps
/// full relative accuracy for ill-conditioned matrices.
fn sv2(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let q = (a + d).hypot(c - b);
    let r = (a - d).hypot(b + c);
    let hi = 0.5 * (q + r);
    if hi == 0.0 {
        return (0.0, 0.0);
    }
    let lo = ((a * d - b * c).abs() / hi).min(hi);
    (hi, lo)
}

fn svd2(f: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let (a, b, c, d) = (f.data[0], f.data[1], f.data[2], f.data[3]);
    let e = 0.5 * (a + d);
    let fq = 0.5 * (a - d);
    let g = 0.5 * (c + b);
    let h = 0.5 * (c - b);
    let a1 = g.atan2(fq);
    let a2 = h.atan2(e);
    let theta = 0.5 * (a2 - a1);
    let phi = 0.5 * (a2 + a1);
    let (hi, lo) = sv2(a, b, c, d);
    // F = R(phi) · diag(hi, ±lo) · R(theta); a reflection absorbs the sign.
    let mut u = Matrix::rotation2(phi);
    if a * d - b * c < 0.0 {
        u[(0, 1)] = -u[(0, 1)];
        u[(1, 1)] = -u[(1, 1)];
    }
    let v = Matrix::rotation2(theta).transpose();
    (u, vec![hi, lo], v)
}

fn svd_jacobi(f: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let n = f.n;
    let mut a = f.clone();
    let mut v = Matrix::identity(n);
    const MAX_SWEEPS: usize = 60;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..n {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..n {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    a[(i, p)] = cs * ap - sn * aq;
                    a[(i, q)] = sn * ap + cs * aq;
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = cs * vp - sn * vq;
                    v[(i, q)] = sn * vp + cs * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut u = Matrix::zeros(n);
    let mut vs = Matrix::zeros(n);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
        let col = if norms[j] > 0.0 {
            a.col(j).iter().map(|x| x / norms[j]).collect()
        } else {
            complete_basis(&u_cols, n)
        };
        u_cols.push(col);
    }
    for (k, col) in u_cols.iter().enumerate() {
        for i in 0..n {
            u[(i, k)] = col[i];
        }
    }
    (u, s, vs)
}

/// A unit vector orthogonal to `cols`, by Gram–Schmidt on the standard basis.
fn complete_basis(cols: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = 0.0;
    for e in 0..n {
        let mut w = vec![0.0; n];
        w[e] = 1.0;
        for c in cols {
            let d: f64 = w.iter().zip(c).map(|(a, b)| a * b).sum();
            for i in 0..n {
                w[i] -= d * c[i];
            }
        }
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > best_norm {
            best_norm = nrm;
            best = Some(w);
        }
    }
    let w = best.expect("n > 0");
    w.iter().map(|x| x / best_norm).collect()
}

/// `λ̂₁ − λ̂ₙ ≤ tol · λ̂₁`: all singular values coincide up to `tol`.
///
/// For `n = 2` this is membership in `CSO(2) = ℝ⁺·SO(2)`.
pub fn is_conformal(f: &Matrix, tol: f64) -> Result<bool> {
    if f.det() <= 0.0 {
        return Err(RocError::Domain("is_conformal requires det F > 0".into()));
    }
    let s = singular_values(f)?;
    Ok(s[0] - s[s.len() - 1] <= tol * s[0])
}

/// Ky Fan `k`-norm: the sum of the `k` largest singular values.
pub fn ky_fan_norm(f: &Matrix, k: usize) -> Result<f64> {
    if k == 0 || k > f.dim() {
        return Err(RocError::Input(format!(
            "Ky Fan index {k} outside 1..={}",
            f.dim()
        )));
    }
    Ok(singular_values(f)?.iter().take(k).sum())
}

/// An admissible rank-one segment `t ↦ F + t·ξ⊗η` on `t_range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SegmentRecord", into = "SegmentRecord")]
pub struct RankOneSegment {
    f: Matrix,
    xi: Vec<f64>,
    eta: Vec<f64>,
    h: Matrix,
    t_range: (f64, f64),
}

/// Serialized form of a segment (`H` is recomputed on load).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub f: Matrix,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub t_range: (f64, f64),
}

impl TryFrom<SegmentRecord> for RankOneSegment {
    type Error = RocError;
    fn try_from(r: SegmentRecord) -> Result<Self> {
        RankOneSegment::new(r.f, r.xi, r.eta, r.t_range)
    }
}

impl From<RankOneSegment> for SegmentRecord {
    fn from(s: RankOneSegment) -> Self {
        SegmentRecord {
            f: s.f,
            xi: s.xi,
            eta: s.eta,
            t_range: s.t_range,
        }
    }
}

impl RankOneSegment {
    /// Validates `rank H = 1` and positive determinant at both endpoints.
    pub fn new(f: Matrix, xi: Vec<f64>, eta: Vec<f64>, t_range: (f64, f64)) -> Result<Self> {
        let n = f.dim();
        if xi.len() != n || eta.len() != n {
            return Err(RocError::Input(format!(
                "direction vectors must have length {n}"
            )));
        }
        if xi.iter().chain(&eta).any(|v| !v.is_finite()) {
            return Err(RocError::Input("direction vectors must be finite".into()));
        }
        let (t0, t1) = t_range;
        if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
            return Err(RocError::Input(format!("invalid t_range {t_range:?}")));
        }
        let h = Matrix::outer(&xi, &eta);
        let hn = h.frobenius_norm();
        if hn == 0.0 {
            return Err(RocError::Input("rank-one direction must be nonzero".into()));
        }
        if hn > 0.0 {
            let s = singular_values(&h)?;
            if s[1] > 1e-12 * hn {
                return Err(RocError::Input("direction is not rank one".into()));
            }
        }
        let seg = Self {
            f,
            xi,
            eta,
            h,
            t_range,
        };
        for t in [t0, t1] {
            if seg.at(t).det() <= 0.0 {
                return Err(RocError::Domain(format!(
                    "det(F + tH) <= 0 at endpoint t = {t}"
                )));
            }
        }
        Ok(seg)
    }

    pub fn f(&self) -> &Matrix {
        &self.f
    }
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
    pub fn h(&self) -> &Matrix {
        &self.h
    }
    pub fn t_range(&self) -> (f64, f64) {
        self.t_range
    }
    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// `F + t·H`
    pub fn at(&self, t: f64) -> Matrix {
        self.f.add_scaled(t, &self.h)
    }

    /// `det(F + tH)` via the matrix determinant lemma:
    /// `det F · (1 + t·η·F⁻¹ξ)`.
    pub fn det_affine(&self, t: f64) -> Result<f64> {
        let w = self.f.solve(&self.xi)?;
        let c: f64 = self.eta.iter().zip(&w).map(|(a, b)| a * b).sum();
        Ok(self.f.det() * (1.0 + t * c))
    }
}

/// Random unit vector of length `n`.
pub fn random_unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-8 {
            return v.into_iter().map(|x| x / nrm).collect();
        }
    }
}

/// Random rotation (orthogonal with `det = +1`) via Gram–Schmidt on a
/// Gaussian matrix.
pub fn random_rotation<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for c in &cols {
            let d: f64 = w.iter().zip(c).map(|(a, b)| a * b).sum();
            for i in 0..n {
                w[i] -= d * c[i];
            }
        }
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            cols.push(w.into_iter().map(|x| x / nrm).collect());
        }
    }
    let mut q = Matrix::zeros(n);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            q[(i, j)] = c[i];
        }
    }
    if q.det() < 0.0 {
        for i in 0..n {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    q
}

/// `U · diag(s) · Vᵀ` for random rotations `U`, `V`.
pub fn matrix_with_singular_values<R: Rng>(rng: &mut R, s: &[f64]) -> Matrix {
    let n = s.len();
    let u = random_rotation(rng, n);
    let v = random_rotation(rng, n);
    u.matmul(&Matrix::from_diag(s)).matmul(&v.transpose())
}

/// Independent per-trial seed from a base seed (SplitMix64 finaliser).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SEGMENT_RETRIES: usize = 1000;

/// Samples an admissible rank-one segment on `[0, 1]`.
///
/// `F = scale·(I + G/2)` with Gaussian `G`, redrawn until `det F > 0` and the
/// condition number is moderate; `H = scale·ξ⊗η` is shrunk when needed so
/// that `det(F + H) ≥ 0.5·det F`. Endpoint determinants therefore always
/// exceed `0.1·det F`.
pub fn make_segment(seed: u64, n: usize, scale: f64) -> Result<RankOneSegment> {
    check_dim(n)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(RocError::Input(format!("scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SEGMENT_RETRIES {
        let mut f = Matrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                let g: f64 = rng.sample(StandardNormal);
                f[(i, j)] += 0.5 * g;
            }
        }
        let f = f.scaled(scale);
        let det = f.det();
        if det <= 0.0 {
            continue;
        }
        let s = singular_values(&f)?;
        if s[n - 1] < 1e-2 * s[0] {
            continue;
        }
        let xi: Vec<f64> = random_unit_vector(&mut rng, n)
            .into_iter()
            .map(|x| x * scale)
            .collect();
        let mut eta = random_unit_vector(&mut rng, n);
        let w = f.solve(&xi)?;
        let c: f64 = eta.iter().zip(&w).map(|(a, b)| a * b).sum();
        if 1.0 + c <= 0.1 {
            // 1 + α·c = 0.5
            let alpha = -0.5 / c;
            eta.iter_mut().for_each(|e| *e *= alpha);
        }
        match RankOneSegment::new(f, xi, eta, (0.0, 1.0)) {
            Ok(seg) => return Ok(seg),
            Err(_) => continue,
        }
    }
    Err(RocError::Sampling(format!(
        "no admissible segment after {SEGMENT_RETRIES} draws (seed {seed}, n {n})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn reconstruct(svd: &Svd) -> Matrix {
        svd.u
            .matmul(&Matrix::from_diag(&svd.s))
            .matmul(&svd.v.transpose())
    }

    fn orthogonality_error(q: &Matrix) -> f64 {
        q.transpose().matmul(q).sub(&Matrix::identity(q.dim())).max_abs()
    }

    #[test]
    fn svd_identity() {
        let s = svd_ordered(&Matrix::identity(2)).unwrap();
        assert_eq!(s.s, vec![1.0, 1.0]);
    }

    #[test]
    fn svd_diagonal() {
        let s = svd_ordered(&Matrix::from_diag(&[3.0, 2.0])).unwrap();
        assert!((s.s[0] - 3.0).abs() < 1e-15);
        assert!((s.s[1] - 2.0).abs() < 1e-15);
        let s = svd_ordered(&Matrix::from_diag(&[2.0, 3.0, 1.0])).unwrap();
        assert_eq!(s.s, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn svd_shear() {
        // eigenvalues of FᵀF are 3 ± 2√2
        let f = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let svd = svd_ordered(&f).unwrap();
        let r2 = 2f64.sqrt();
        assert!((svd.s[0] - (1.0 + r2)).abs() < 1e-14);
        assert!((svd.s[1] - (r2 - 1.0)).abs() < 1e-14);
        assert!(reconstruct(&svd).sub(&f).max_abs() < 1e-14);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut f = Matrix::identity(3);
        f[(1, 2)] = f64::NAN;
        assert!(matches!(svd_ordered(&f), Err(RocError::Input(_))));
    }

    #[test]
    fn svd_flags_orientation() {
        let f = Matrix::from_diag(&[1.0, -2.0]);
        let svd = svd_ordered(&f).unwrap();
        assert!(svd.orientation_reversed);
        assert_eq!(svd.s, vec![2.0, 1.0]);
        assert!(reconstruct(&svd).sub(&f).max_abs() < 1e-15);
        let g = Matrix::from_diag(&[1.0, -2.0, 3.0]);
        let svd = svd_ordered(&g).unwrap();
        assert!(svd.orientation_reversed);
        assert!(reconstruct(&svd).sub(&g).max_abs() < 1e-15);
    }

    #[test]
    fn svd_rank_deficient() {
        let f = Matrix::outer(&[1.0, 2.0, 3.0], &[0.5, -1.0, 2.0]);
        let svd = svd_ordered(&f).unwrap();
        assert!(orthogonality_error(&svd.u) < 1e-12);
        assert!(reconstruct(&svd).sub(&f).max_abs() < 1e-12 * f.frobenius_norm());
        assert!(svd.s[1] < 1e-12);
    }

    #[test]
    fn closed_form_matches_jacobi_on_planar_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let data: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let f = Matrix::from_row_slice(2, &data).unwrap();
            let (_, s_j, _) = svd_jacobi(&f);
            let s_c = singular_values(&f).unwrap();
            for k in 0..2 {
                assert!((s_j[k] - s_c[k]).abs() <= 1e-13 * s_c[0]);
            }
        }
    }

    #[test]
    fn svd_reconstruction_and_orthogonality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10_000 {
            let n = 2 + trial % 7;
            let data: Vec<f64> = (0..n * n)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let f = Matrix::from_row_slice(n, &data).unwrap();
            let svd = svd_ordered(&f).unwrap();
            let nrm = f.frobenius_norm();
            assert!(reconstruct(&svd).sub(&f).frobenius_norm() <= 1e-12 * nrm);
            assert!(orthogonality_error(&svd.u) <= 1e-12, "U at trial {trial}");
            assert!(orthogonality_error(&svd.v) <= 1e-12, "V at trial {trial}");
            assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn conformal_examples() {
        let f = Matrix::rotation2(std::f64::consts::PI / 6.0).scaled(2.0);
        assert!(is_conformal(&f, CONFORMAL_TOL).unwrap());
        assert!(!is_conformal(&Matrix::from_diag(&[2.0, 1.0]), CONFORMAL_TOL).unwrap());
        assert!(is_conformal(&Matrix::from_diag(&[1.0 + 1e-12, 1.0]), 1e-9).unwrap());
        assert!(matches!(
            is_conformal(&Matrix::from_diag(&[1.0, -1.0]), 1e-9),
            Err(RocError::Domain(_))
        ));
    }

    #[test]
    fn ky_fan_examples() {
        assert_eq!(ky_fan_norm(&Matrix::from_diag(&[3.0, 2.0, 1.0]), 2).unwrap(), 5.0);
        assert_eq!(ky_fan_norm(&Matrix::identity(3), 3).unwrap(), 3.0);
        let f = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!((ky_fan_norm(&f, 1).unwrap() - (1.0 + 2f64.sqrt())).abs() < 1e-14);
        assert!(ky_fan_norm(&f, 0).is_err());
        assert!(ky_fan_norm(&f, 3).is_err());
    }

    #[test]
    fn identity_segment() {
        let seg = RankOneSegment::new(
            Matrix::identity(2),
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            (0.0, 1.0),
        )
        .unwrap();
        for t in [0.0, 0.25, 0.5, 1.0] {
            assert_eq!(seg.at(t).det(), 1.0 + t);
        }
    }

    #[test]
    fn segment_rejects_bad_endpoints() {
        let r = RankOneSegment::new(
            Matrix::identity(2),
            vec![-2.0, 0.0],
            vec![1.0, 0.0],
            (0.0, 1.0),
        );
        assert!(matches!(r, Err(RocError::Domain(_))));
        let r = RankOneSegment::new(Matrix::identity(2), vec![0.0; 2], vec![1.0, 0.0], (0.0, 1.0));
        assert!(matches!(r, Err(RocError::Input(_))));
    }

    #[test]
    fn make_segment_endpoints_positive() {
        for seed in 0..200 {
            for n in [2, 3, 5] {
                let seg = make_segment(seed, n, 1.0).unwrap();
                let d0 = seg.at(0.0).det();
                let d1 = seg.at(1.0).det();
                assert!(d0 > 0.0 && d1 > 0.1 * d0, "seed {seed} n {n}");
            }
        }
        assert!(make_segment(0, 2, 0.0).is_err());
        assert!(make_segment(0, 9, 1.0).is_err());
    }

    #[test]
    fn determinant_lemma_agrees() {
        for seed in 0..500 {
            let seg = make_segment(seed, 2 + (seed as usize) % 5, 1.3).unwrap();
            for t in [0.0, 0.3, 0.77, 1.0] {
                let direct = seg.at(t).det();
                let lemma = seg.det_affine(t).unwrap();
                assert!((direct - lemma).abs() <= 1e-12 * direct.abs().max(seg.f().det().abs()));
            }
        }
    }

    #[test]
    fn ordered_tuple_validation_and_blocks() {
        assert!(OrderedSingularTuple::new(vec![1.0, 2.0]).is_err());
        assert!(OrderedSingularTuple::new(vec![1.0, 0.0]).is_err());
        let s = OrderedSingularTuple::new(vec![3.0, 2.0, 2.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.blocks(1e-12), vec![0..=0, 1..=2, 3..=4]);
        assert!(!s.is_strictly_ordered());
    }

    #[test]
    fn matrix_serde_round_trip() {
        let f = Matrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0]]).unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let back: Matrix = serde_json::from_str(&json).unwrap();
        assert_eq!(f, back);
        assert!(serde_json::from_str::<Matrix>("[[1.0, 2.0], [3.0]]").is_err());
    }

    proptest! {
        #[test]
        fn determinant_is_affine_along_rank_one_lines(seed in 0u64..10_000, n in 2usize..=8) {
            let seg = make_segment(seed, n, 1.0).unwrap();
            let d0 = seg.at(0.0).det();
            let dm = seg.at(0.5).det();
            let d1 = seg.at(1.0).det();
            prop_assert!((d0 - 2.0 * dm + d1).abs() <= 1e-10 * d0.abs());
        }

        #[test]
        fn ky_fan_is_midpoint_convex_along_segments(seed in 0u64..10_000, n in 2usize..=6) {
            let seg = make_segment(seed, n, 1.0).unwrap();
            for k in 1..=n {
                for i in 1..16 {
                    let t = i as f64 / 16.0;
                    let h = 1.0 / 16.0;
                    let lo = ky_fan_norm(&seg.at(t - h), k).unwrap();
                    let mid = ky_fan_norm(&seg.at(t), k).unwrap();
                    let hi = ky_fan_norm(&seg.at(t + h), k).unwrap();
                    prop_assert!(lo - 2.0 * mid + hi >= -1e-8 * (1.0 + mid));
                }
            }
        }

        #[test]
        fn cso2_differences_are_never_rank_one(a in 0.01f64..100.0, b in 0.01f64..100.0,
                                               t1 in -3.2f64..3.2, t2 in -3.2f64..3.2) {
            let z1 = Matrix::rotation2(t1).scaled(a);
            let z2 = Matrix::rotation2(t2).scaled(b);
            let d = z2.sub(&z1);
            let nrm = d.frobenius_norm();
            let s = singular_values(&d).unwrap();
            prop_assert!(nrm == 0.0 || s[1] >= 1e-8 * nrm);
        }
    }
}
