//! Pointwise ellipticity criteria and grid sweeps.
//!
//! Every check returns raw margins (the quantity required to be
//! nonnegative) so callers can inspect how close an energy sits to the
//! ellipticity boundary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energymodel::{DerivativeMethod, EnergySpec, Regularity};
use crate::error::{Result, RocError};
use crate::smallmat::{random_unit_vector, svd_ordered, Matrix, OrderedSingularTuple};

/// Relative singular-value gap below which a matrix counts as having a
/// repeated singular value for [`lh_sample_at`].
pub const SIMPLE_GAP_TOL: f64 = 1e-9;

/// A margin `m` passes iff `m ≥ −(abs + rel·scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn threshold(&self, scale: f64) -> f64 {
        self.abs + self.rel * scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.abs >= 0.0 && self.rel >= 0.0 && self.abs.is_finite() && self.rel.is_finite() {
            Ok(())
        } else {
            Err(RocError::Input(format!("tolerances must be finite and >= 0: {self:?}")))
        }
    }
}

/// One evaluated inequality at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionMargin {
    /// Label such as `KS-iv`, `RED-i.1`, `BE(1,3)`, `ORD(2,3)`, `LH`.
    pub id: String,
    pub value: f64,
    /// Sum of absolute values of the terms making up `value`.
    pub scale: f64,
    /// Rounding-noise estimate carried over from finite differences.
    pub noise: f64,
    pub point: Vec<f64>,
    pub passed: bool,
}

impl ConditionMargin {
    fn new(id: impl Into<String>, value: f64, scale: f64, noise: f64, point: &[f64], tol: &Tolerances) -> Self {
        Self {
            id: id.into(),
            value,
            scale,
            noise,
            point: point.to_vec(),
            passed: value >= -tol.threshold(scale),
        }
    }

    /// Fails, but only by an amount comparable to tolerance or noise.
    pub fn is_noise_scale_failure(&self, tol: &Tolerances) -> bool {
        !self.passed && self.value >= -10.0 * (tol.threshold(self.scale) + self.noise)
    }
}

/// `λ̂ᵢ·ĝᵢ − λ̂ⱼ·ĝⱼ` for all `i < j` with `λ̂ᵢ > λ̂ⱼ`.
pub fn baker_ericksen(spec: &EnergySpec, s: &OrderedSingularTuple, tol: &Tolerances) -> Result<Vec<ConditionMargin>> {
    let (g, gn) = spec.gradient_at(s)?;
    let l = s.values();
    let mut out = Vec::new();
    for i in 0..l.len() {
        for j in i + 1..l.len() {
            if l[i] == l[j] {
                continue;
            }
            let (a, b) = (l[i] * g[i], l[j] * g[j]);
            out.push(ConditionMargin::new(
                format!("BE({},{})", i + 1, j + 1),
                a - b,
                a.abs() + b.abs(),
                gn * (l[i] + l[j]),
                l,
                tol,
            ));
        }
    }
    Ok(out)
}

struct Planar {
    l1: f64,
    l2: f64,
    g1: f64,
    g2: f64,
    g11: f64,
    g12: f64,
    g22: f64,
    gn: f64,
    hn: f64,
}

impl Planar {
    fn at(spec: &EnergySpec, l1: f64, l2: f64) -> Result<Self> {
        if spec.dim() != 2 {
            return Err(RocError::Input(format!(
                "planar criterion needs n = 2, energy has n = {}",
                spec.dim()
            )));
        }
        let s = OrderedSingularTuple::new(vec![l1, l2])?;
        let d = spec.derivatives_at(&s)?;
        let (gn, hn) = match d.method {
            DerivativeMethod::ClosedForm => (0.0, 0.0),
            DerivativeMethod::FiniteDifference => (d.grad_noise, d.hess_noise),
        };
        Ok(Self {
            l1,
            l2,
            g1: d.grad[0],
            g2: d.grad[1],
            g11: d.hess[0][0],
            g12: d.hess[0][1],
            g22: d.hess[1][1],
            gn,
            hn,
        })
    }

    /// `(√(g₁₁g₂₂), noise)`; a negative product within tolerance is clamped
    /// to zero, a clearly negative one is left to condition i) to report.
    fn sqrt_term(&self) -> (f64, f64) {
        let p = self.g11 * self.g22;
        let root = if p > 0.0 { p.sqrt() } else { 0.0 };
        let widened = ((self.g11.abs() + self.hn) * (self.g22.abs() + self.hn)).sqrt();
        (root, widened - (self.g11.abs() * self.g22.abs()).sqrt())
    }

    fn cond_i(&self, prefix: &str, tol: &Tolerances) -> Vec<ConditionMargin> {
        let p = [self.l1, self.l2];
        vec![
            ConditionMargin::new(format!("{prefix}-i.1"), self.g11, self.g11.abs(), self.hn, &p, tol),
            ConditionMargin::new(format!("{prefix}-i.2"), self.g22, self.g22.abs(), self.hn, &p, tol),
        ]
    }

    fn cond_ii(&self, id: &str, tol: &Tolerances) -> ConditionMargin {
        let gap = self.l1 - self.l2;
        let (a, b) = (self.l1 * self.g1, self.l2 * self.g2);
        ConditionMargin::new(
            id,
            (a - b) / gap,
            (a.abs() + b.abs()) / gap,
            self.gn * (self.l1 + self.l2) / gap,
            &[self.l1, self.l2],
            tol,
        )
    }

    fn cond_iv(&self, id: &str, tol: &Tolerances) -> ConditionMargin {
        let gap = self.l1 - self.l2;
        let (r, rn) = self.sqrt_term();
        let q = (self.g1 - self.g2) / gap;
        ConditionMargin::new(
            id,
            r + self.g12 + q,
            r + self.g12.abs() + (self.g1.abs() + self.g2.abs()) / gap,
            rn + self.hn + 2.0 * self.gn / gap,
            &[self.l1, self.l2],
            tol,
        )
    }

    fn cond_v(&self, id: &str, tol: &Tolerances) -> ConditionMargin {
        let sum = self.l1 + self.l2;
        let (r, rn) = self.sqrt_term();
        let q = (self.g1 + self.g2) / sum;
        ConditionMargin::new(
            id,
            r - self.g12 + q,
            r + self.g12.abs() + (self.g1.abs() + self.g2.abs()) / sum,
            rn + self.hn + 2.0 * self.gn / sum,
            &[self.l1, self.l2],
            tol,
        )
    }

    fn cond_iii(&self, tol: &Tolerances) -> Vec<ConditionMargin> {
        let p = [self.l1, self.l2];
        let a = self.g11 - self.g12 + self.g1 / self.l1;
        let b = self.g22 - self.g12 + self.g2 / self.l2;
        vec![
            ConditionMargin::new(
                "KS-iii.1",
                a,
                self.g11.abs() + self.g12.abs() + (self.g1 / self.l1).abs(),
                2.0 * self.hn + self.gn / self.l1,
                &p,
                tol,
            ),
            ConditionMargin::new(
                "KS-iii.2",
                b,
                self.g22.abs() + self.g12.abs() + (self.g2 / self.l2).abs(),
                2.0 * self.hn + self.gn / self.l2,
                &p,
                tol,
            ),
        ]
    }
}

/// Planar pointwise ellipticity conditions on `ĝ`: `{i, ii, iv, v}` off the
/// diagonal, `{i, iii, v}` on it (the latter needs a `c2-closure` claim).
pub fn knowles_sternberg_point(spec: &EnergySpec, l1: f64, l2: f64, tol: &Tolerances) -> Result<Vec<ConditionMargin>> {
    if l1 < l2 {
        return Err(RocError::Input(format!("expected λ₁ ≥ λ₂, got ({l1}, {l2})")));
    }
    if l1 == l2 && spec.regularity() != Regularity::C2Closure {
        return Err(RocError::NotApplicable(
            "conditions on the diagonal need second derivatives there (c2-closure)".into(),
        ));
    }
    let p = Planar::at(spec, l1, l2)?;
    let mut out = p.cond_i("KS", tol);
    if l1 > l2 {
        out.push(p.cond_ii("KS-ii", tol));
        out.push(p.cond_iv("KS-iv", tol));
    } else {
        out.extend(p.cond_iii(tol));
    }
    out.push(p.cond_v("KS-v", tol));
    Ok(out)
}

/// The four conditions of the reduced planar criterion at a strictly
/// ordered point: `RED-i` (`ĝ₁₁, ĝ₂₂ ≥ 0`), `RED-ii`, `RED-iii`, `RED-iv`
/// (the off-diagonal conditions ii, iv, v above).
pub fn reduced_ks_point(spec: &EnergySpec, l1: f64, l2: f64, tol: &Tolerances) -> Result<Vec<ConditionMargin>> {
    if !(l1 > l2) {
        return Err(RocError::Input(format!(
            "reduced criterion needs λ₁ > λ₂ strictly, got ({l1}, {l2})"
        )));
    }
    let p = Planar::at(spec, l1, l2)?;
    let mut out = p.cond_i("RED", tol);
    out.push(p.cond_ii("RED-ii", tol));
    out.push(p.cond_iv("RED-iii", tol));
    out.push(p.cond_v("RED-iv", tol));
    Ok(out)
}

/// `ĝᵢ − ĝᵢ₊₁` for consecutive indices inside each block of equal singular
/// values.
pub fn partial_order_check(spec: &EnergySpec, s: &OrderedSingularTuple, tol: &Tolerances) -> Result<Vec<ConditionMargin>> {
    let (g, gn) = spec.gradient_at(s)?;
    let mut out = Vec::new();
    for block in s.blocks(0.0) {
        for i in *block.start()..*block.end() {
            out.push(ConditionMargin::new(
                format!("ORD({},{})", i + 1, i + 2),
                g[i] - g[i + 1],
                g[i].abs() + g[i + 1].abs(),
                2.0 * gn,
                s.values(),
                tol,
            ));
        }
    }
    Ok(out)
}

/// Minimum of the sampled rank-one quadratic form at one matrix.
#[derive(Clone, Debug, Serialize)]
pub struct LhSample {
    pub min: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    /// Largest `|D²W(ξ⊗η, ξ⊗η)|` seen; the tolerance scale.
    pub scale: f64,
    pub noise: f64,
    pub directions: usize,
    pub method: DerivativeMethod,
}

impl LhSample {
    pub fn margin(&self, point: &[f64], tol: &Tolerances) -> ConditionMargin {
        ConditionMargin::new("LH", self.min, self.scale, self.noise, point, tol)
    }
}

fn axis_pairs(n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let unit = |i: usize| {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        e
    };
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            out.push((unit(i), unit(j)));
        }
    }
    for i in 0..n {
        for j in 0..n {
            let mut b = vec![0.0; n];
            b[j] += r;
            b[(j + 1) % n] += r;
            out.push((unit(i), b));
        }
    }
    out
}

/// `D²W[F](ξ⊗η, ξ⊗η)` from the derivatives of `ĝ`, with `F = U·diag(λ)·Vᵀ`
/// and `H̃ = Uᵀ(ξ⊗η)V`:
/// `Σ ĝᵢⱼ H̃ᵢᵢH̃ⱼⱼ + Σ_{i<j} [A(H̃ᵢⱼ² + H̃ⱼᵢ²) + 2B·H̃ᵢⱼH̃ⱼᵢ]` where
/// `A = (λᵢĝᵢ − λⱼĝⱼ)/(λᵢ² − λⱼ²)` and `B = (λⱼĝᵢ − λᵢĝⱼ)/(λᵢ² − λⱼ²)`.
fn singular_frame_form(
    u: &Matrix,
    v: &Matrix,
    l: &[f64],
    g: &[f64],
    hs: &[Vec<f64>],
    xi: &[f64],
    eta: &[f64],
) -> f64 {
    let n = l.len();
    let a = u.transpose().matvec(xi);
    let b = v.transpose().matvec(eta);
    let ht = |i: usize, j: usize| a[i] * b[j];
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += hs[i][j] * ht(i, i) * ht(j, j);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = l[i] * l[i] - l[j] * l[j];
            let aa = (l[i] * g[i] - l[j] * g[j]) / d;
            let bb = (l[j] * g[i] - l[i] * g[j]) / d;
            let (x, y) = (ht(i, j), ht(j, i));
            q += aa * (x * x + y * y) + 2.0 * bb * x * y;
        }
    }
    q
}

/// Exact rank-one quadratic form for energies with closed-form derivatives
/// at matrices with simple singular values.
pub fn lh_quadratic_form(spec: &EnergySpec, f: &Matrix, xi: &[f64], eta: &[f64]) -> Result<f64> {
    let svd = svd_ordered(f)?;
    let s = svd.ordered()?;
    if !s.is_simple(SIMPLE_GAP_TOL) {
        return Err(RocError::NotApplicable("singular values are not simple".into()));
    }
    let (g, hs) = spec
        .closed_form(s.values())
        .ok_or_else(|| RocError::NotApplicable("energy has no closed-form derivatives".into()))?;
    Ok(singular_frame_form(&svd.u, &svd.v, s.values(), &g, &hs, xi, eta))
}

/// Samples `D²W[F](ξ⊗η, ξ⊗η)` over `n_dirs` random unit pairs and `2n²`
/// axis-aligned pairs and returns the minimum.
///
/// Energies with closed-form derivatives use the exact quadratic form in the
/// singular frame; the rest use a central second difference along `ξ⊗η`.
pub fn lh_sample_at(spec: &EnergySpec, f: &Matrix, n_dirs: usize, seed: u64) -> Result<LhSample> {
    let n = spec.dim();
    if f.dim() != n {
        return Err(RocError::Input(format!("matrix has dimension {}, energy {}", f.dim(), n)));
    }
    if f.det() <= 0.0 {
        return Err(RocError::Domain("det F <= 0".into()));
    }
    let svd = svd_ordered(f)?;
    let s = svd.ordered()?;
    if !s.is_simple(SIMPLE_GAP_TOL) {
        return Err(RocError::NotApplicable(format!(
            "singular values {:?} are not simple; W need not be twice differentiable here",
            s.values()
        )));
    }
    let mut dirs = Vec::with_capacity(n_dirs + 2 * n * n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_dirs {
        let xi = random_unit_vector(&mut rng, n);
        let eta = random_unit_vector(&mut rng, n);
        dirs.push((xi, eta));
    }
    dirs.extend(axis_pairs(n));

    let l = s.values();
    let (values, noise, method): (Vec<f64>, f64, DerivativeMethod) = if let Some((g, hs)) = spec.closed_form(l) {
        let q = dirs
            .iter()
            .map(|(xi, eta)| singular_frame_form(&svd.u, &svd.v, l, &g, &hs, xi, eta))
            .collect();
        (q, 0.0, DerivativeMethod::ClosedForm)
    } else {
        let w0 = spec.eval_w(f)?;
        let h = f64::EPSILON.cbrt() * (1.0 + f.frobenius_norm());
        let mut noise: f64 = 0.0;
        let mut q = Vec::with_capacity(dirs.len());
        for (xi, eta) in &dirs {
            let hm = Matrix::outer(xi, eta);
            let wp = spec.eval_w(&f.add_scaled(h, &hm))?;
            let wm = spec.eval_w(&f.add_scaled(-h, &hm))?;
            q.push((wp - 2.0 * w0 + wm) / (h * h));
            let m = w0.abs().max(wp.abs()).max(wm.abs());
            noise = noise.max(8.0 * f64::EPSILON * m / (h * h));
        }
        (q, noise, DerivativeMethod::FiniteDifference)
    };
    let mut best = 0;
    for k in 1..values.len() {
        if values[k] < values[best] {
            best = k;
        }
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(LhSample {
        min: values[best],
        xi: dirs[best].0.clone(),
        eta: dirs[best].1.clone(),
        scale,
        noise,
        directions: dirs.len(),
        method,
    })
}

/// Log-spaced sampling of the ordered cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points_per_axis: usize,
    /// Relative exclusion band `λᵢ > λᵢ₊₁·(1 + min_gap)`.
    pub min_gap: f64,
    /// Largest admitted `λ̂₁/λ̂ₙ`.
    pub ratio_cap: f64,
    /// Random direction pairs per point for `n ≥ 3`.
    pub lh_directions: usize,
    pub seed: u64,
}

impl GridSpec {
    /// 64 points per axis in the plane, 16 in higher dimensions.
    pub fn default_for(n: usize) -> Self {
        Self {
            lo: 1e-2,
            hi: 1e2,
            points_per_axis: if n == 2 { 64 } else { 16 },
            min_gap: 1e-3,
            ratio_cap: 1e4,
            lh_directions: 64,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lo > 0.0
            && self.lo < self.hi
            && self.hi.is_finite()
            && self.points_per_axis >= 2
            && self.min_gap > 0.0
            && self.ratio_cap > 1.0;
        if ok {
            Ok(())
        } else {
            Err(RocError::Input(format!("invalid grid: {self:?}")))
        }
    }

    pub fn axis(&self) -> Vec<f64> {
        let k = self.points_per_axis;
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..k)
            .map(|i| {
                if i == 0 {
                    self.lo
                } else if i == k - 1 {
                    self.hi
                } else {
                    (a + (b - a) * i as f64 / (k - 1) as f64).exp()
                }
            })
            .collect()
    }

    /// Strictly decreasing `n`-tuples drawn from the axis, in lexicographic
    /// order, respecting the gap band and ratio cap.
    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        let axis = self.axis();
        let mut out = Vec::new();
        let mut idx: Vec<usize> = Vec::with_capacity(n);
        self.collect_points(&axis, n, &mut idx, &mut out);
        out
    }

    fn collect_points(&self, axis: &[f64], n: usize, idx: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if idx.len() == n {
            out.push(idx.iter().map(|&i| axis[i]).collect());
            return;
        }
        let upper = idx.last().copied().unwrap_or(axis.len());
        for i in (0..upper).rev() {
            if let Some(&prev) = idx.last() {
                if axis[prev] <= axis[i] * (1.0 + self.min_gap) {
                    continue;
                }
            }
            if let Some(&first) = idx.first() {
                if axis[first] / axis[i] > self.ratio_cap {
                    continue;
                }
            }
            idx.push(i);
            self.collect_points(axis, n, idx, out);
            idx.pop();
        }
    }
}

/// Worst margin of one condition over a grid.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConditionSummary {
    pub id: String,
    pub worst: f64,
    pub worst_point: Vec<f64>,
    pub failures: usize,
    pub noise_scale_failures: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PointError {
    pub point: Vec<f64>,
    pub message: String,
}

/// Result of [`grid_check`]. `passed` means "criterion satisfied on grid":
/// sampling evidence, not a proof.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CriterionReport {
    pub criterion: String,
    pub passed: bool,
    pub points_total: usize,
    pub points_evaluated: usize,
    pub completeness: f64,
    pub conditions: Vec<ConditionSummary>,
    /// Margin with the most negative value, if any condition failed.
    pub worst_failure: Option<ConditionMargin>,
    /// True when there are failures and every one is noise-scale.
    pub failures_noise_scale_only: bool,
    pub errors: Vec<PointError>,
}

const MAX_RECORDED_ERRORS: usize = 20;

/// Sweeps the reduced criterion (`n = 2`) or sampled rank-one ellipticity at
/// `diag(s)` (`n ≥ 3`) over the grid.
pub fn grid_check(spec: &EnergySpec, grid: &GridSpec, tol: &Tolerances) -> Result<CriterionReport> {
    grid.validate()?;
    tol.validate()?;
    let n = spec.dim();
    let points = grid.points(n);
    let results: Vec<Result<Vec<ConditionMargin>>> = points
        .par_iter()
        .map(|p| {
            if n == 2 {
                reduced_ks_point(spec, p[0], p[1], tol)
            } else {
                lh_sample_at(spec, &Matrix::from_diag(p), grid.lh_directions, grid.seed)
                    .map(|s| vec![s.margin(p, tol)])
            }
        })
        .collect();

    let mut conditions: Vec<ConditionSummary> = Vec::new();
    let mut errors = Vec::new();
    let mut error_count = 0;
    let mut worst_failure: Option<ConditionMargin> = None;
    let mut any_failure = false;
    let mut all_noise = true;
    for (p, r) in points.iter().zip(results) {
        match r {
            Err(e) => {
                error_count += 1;
                if errors.len() < MAX_RECORDED_ERRORS {
                    errors.push(PointError {
                        point: p.clone(),
                        message: e.to_string(),
                    });
                }
            }
            Ok(margins) => {
                for m in margins {
                    let pos = match conditions.iter().position(|c| c.id == m.id) {
                        Some(i) => i,
                        None => {
                            conditions.push(ConditionSummary {
                                id: m.id.clone(),
                                worst: f64::INFINITY,
                                worst_point: Vec::new(),
                                failures: 0,
                                noise_scale_failures: 0,
                            });
                            conditions.len() - 1
                        }
                    };
                    let c = &mut conditions[pos];
                    if m.value < c.worst {
                        c.worst = m.value;
                        c.worst_point = m.point.clone();
                    }
                    if !m.passed {
                        any_failure = true;
                        c.failures += 1;
                        if m.is_noise_scale_failure(tol) {
                            c.noise_scale_failures += 1;
                        } else {
                            all_noise = false;
                        }
                        if worst_failure.as_ref().is_none_or(|w| m.value < w.value) {
                            worst_failure = Some(m);
                        }
                    }
                }
            }
        }
    }
    let evaluated = points.len() - error_count;
    Ok(CriterionReport {
        criterion: if n == 2 {
            "reduced planar criterion".into()
        } else {
            "sampled rank-one ellipticity at simple singular values".into()
        },
        passed: !any_failure && error_count == 0 && evaluated > 0,
        points_total: points.len(),
        points_evaluated: evaluated,
        completeness: if points.is_empty() {
            0.0
        } else {
            evaluated as f64 / points.len() as f64
        },
        conditions,
        worst_failure,
        failures_noise_scale_only: any_failure && all_noise,
        errors,
    })
}
