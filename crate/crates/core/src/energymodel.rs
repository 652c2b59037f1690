//! Isotropic energies `W(F) = ĝ(λ̂₁, …, λ̂ₙ)` given on the ordered cone.
//!
//! Only the ordered representation `ĝ` is ever evaluated; the symmetric
//! extension to unordered singular values is never built. Derivatives come
//! from closed forms for the built-in energies and from finite differences
//! otherwise, with one-sided stencils near the boundary of the cone.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RocError};
use crate::exprlang::{parse, BoundExpr};
use crate::smallmat::{singular_values, Matrix, OrderedSingularTuple, MAX_DIM};

/// Differentiability class of `ĝ`, as asserted by whoever defined it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularity {
    /// `ĝ ∈ C²(interior) ∩ C¹(closure)`
    #[serde(rename = "c1-closure")]
    C2InteriorC1Closure,
    /// `ĝ ∈ C²(closure)`
    #[serde(rename = "c2-closure")]
    C2Closure,
}

impl Regularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Regularity::C2InteriorC1Closure => "c1-closure",
            Regularity::C2Closure => "c2-closure",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "c1-closure" | "C2_interior_C1_closure" => Ok(Regularity::C2InteriorC1Closure),
            "c2-closure" | "C2_closure" => Ok(Regularity::C2Closure),
            other => Err(RocError::Input(format!(
                "unknown regularity `{other}` (expected c1-closure or c2-closure)"
            ))),
        }
    }
}

/// Serializable definition of an energy; [`EnergySpec::from_def`] builds it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyDef {
    Zoo {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hhat: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regularity: Option<Regularity>,
    },
    Ghat {
        expr: String,
        n: usize,
        regularity: Regularity,
    },
}

impl EnergyDef {
    pub fn zoo(name: &str) -> Self {
        EnergyDef::Zoo {
            name: name.to_string(),
            n: None,
            hhat: None,
            f: None,
            regularity: None,
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    OpNorm,
    Distortion,
    LogDistortion,
    DistortionSquared,
    Det,
    Ghat(BoundExpr),
    /// `ĥ(λ̂₁/λ̂₂) + f(λ̂₁·λ̂₂)`
    Conformal {
        hhat: BoundExpr,
        f: Option<BoundExpr>,
    },
    Scaled(f64, Box<Kind>),
}

/// An energy on `GL⁺(n)` in ordered-singular-value form. Immutable and
/// shareable across threads.
#[derive(Clone, Debug)]
pub struct EnergySpec {
    name: String,
    n: usize,
    regularity: Regularity,
    def: EnergyDef,
    kind: Kind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMethod {
    ClosedForm,
    FiniteDifference,
}

/// First and second partial derivatives of `ĝ` at one point.
#[derive(Clone, Debug, Serialize)]
pub struct DerivativeBundle {
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
    pub method: DerivativeMethod,
    /// Largest second-derivative step used (zero for closed forms).
    pub step_used: f64,
    /// Rounding-error estimate for gradient entries.
    pub grad_noise: f64,
    /// Rounding-error estimate for Hessian entries.
    pub hess_noise: f64,
}

impl EnergySpec {
    pub fn from_def(def: &EnergyDef) -> Result<Self> {
        match def {
            EnergyDef::Zoo {
                name,
                n,
                hhat,
                f,
                regularity,
            } => {
                let mut spec = zoo(
                    name,
                    &ZooParams {
                        n: *n,
                        hhat: hhat.clone(),
                        f: f.clone(),
                    },
                )?;
                if let Some(r) = regularity {
                    spec.regularity = *r;
                }
                spec.def = def.clone();
                Ok(spec)
            }
            EnergyDef::Ghat {
                expr,
                n,
                regularity,
            } => Self::from_ghat_expr(expr, *n, *regularity),
        }
    }

    /// `ĝ` given as an expression over `l1 … ln`.
    pub fn from_ghat_expr(source: &str, n: usize, regularity: Regularity) -> Result<Self> {
        check_n(n)?;
        let names: Vec<String> = (1..=n).map(|i| format!("l{i}")).collect();
        let slots: Vec<&str> = names.iter().map(String::as_str).collect();
        let bound = parse(source)?.bind(&slots)?;
        Ok(Self {
            name: format!("ghat: {source}"),
            n,
            regularity,
            def: EnergyDef::Ghat {
                expr: source.to_string(),
                n,
                regularity,
            },
            kind: Kind::Ghat(bound),
        })
    }

    /// `c · ĝ` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(RocError::Input(format!("scale factor must be positive, got {c}")));
        }
        Ok(Self {
            name: format!("{c} * ({})", self.name),
            n: self.n,
            regularity: self.regularity,
            def: self.def.clone(),
            kind: Kind::Scaled(c, Box::new(self.kind.clone())),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn regularity(&self) -> Regularity {
        self.regularity
    }
    pub fn def(&self) -> &EnergyDef {
        &self.def
    }

    pub fn has_closed_form(&self) -> bool {
        kind_has_closed_form(&self.kind)
    }

    /// `ĝ(λ)`; `λ` is normally ordered but the evaluators accept any point
    /// of the positive orthant (finite-difference stencils may step outside
    /// the cone when no inward stencil fits).
    pub fn ghat(&self, l: &[f64]) -> Result<f64> {
        if l.len() != self.n {
            return Err(RocError::Input(format!(
                "expected {} singular values, got {}",
                self.n,
                l.len()
            )));
        }
        let v = eval_kind(&self.kind, l)?;
        if !v.is_finite() {
            return Err(RocError::Evaluation(format!(
                "ĝ{l:?} = {v} is not finite"
            )));
        }
        Ok(v)
    }

    /// `W(F) = ĝ(λ̂(F))`.
    pub fn eval_w(&self, f: &Matrix) -> Result<f64> {
        if f.dim() != self.n {
            return Err(RocError::Input(format!(
                "energy has dimension {}, matrix has {}",
                self.n,
                f.dim()
            )));
        }
        if f.det() <= 0.0 {
            return Err(RocError::Domain("W is defined on GL⁺(n) only (det F <= 0)".into()));
        }
        let s = singular_values(f)?;
        if s[self.n - 1] <= 0.0 {
            return Err(RocError::Domain("F is numerically singular".into()));
        }
        self.ghat(&s)
    }

    /// Closed-form gradient and Hessian, if this energy has them.
    pub fn closed_form(&self, l: &[f64]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        closed_form_kind(&self.kind, l, self.n)
    }

    /// Gradient only. Valid on the closed cone for `C¹(closure)` energies.
    pub fn gradient_at(&self, s: &OrderedSingularTuple) -> Result<(Vec<f64>, f64)> {
        self.check_tuple(s)?;
        if let Some((g, _)) = self.closed_form(s.values()) {
            return Ok((g, 0.0));
        }
        let x = s.values();
        let f0 = self.ghat(x)?;
        let mut grad = Vec::with_capacity(self.n);
        let mut noise: f64 = 0.0;
        for i in 0..self.n {
            let mut d = vec![0.0; self.n];
            d[i] = 1.0;
            let h0 = f64::EPSILON.sqrt() * x[i].max(1.0);
            let (v, nz) = self.first_directional(x, &d, h0, f0)?;
            grad.push(v);
            noise = noise.max(nz);
        }
        Ok((grad, noise))
    }

    /// Gradient and Hessian of `ĝ` at `s`.
    pub fn derivatives_at(&self, s: &OrderedSingularTuple) -> Result<DerivativeBundle> {
        self.check_tuple(s)?;
        if !s.is_strictly_ordered() && self.regularity != Regularity::C2Closure {
            return Err(RocError::NotApplicable(format!(
                "second derivatives at the cone boundary {:?} require a c2-closure claim",
                s.values()
            )));
        }
        let x = s.values();
        if let Some((grad, hess)) = self.closed_form(x) {
            return Ok(DerivativeBundle {
                grad,
                hess,
                method: DerivativeMethod::ClosedForm,
                step_used: 0.0,
                grad_noise: 0.0,
                hess_noise: 0.0,
            });
        }
        let (grad, grad_noise) = self.gradient_at(s)?;
        let n = self.n;
        let f0 = self.ghat(x)?;
        let mut hess = vec![vec![0.0; n]; n];
        let mut hess_noise: f64 = 0.0;
        let mut step_used: f64 = 0.0;
        let cbrt_eps = f64::EPSILON.cbrt();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            let h = cbrt_eps * x[i].max(1.0);
            let (v, nz, hu) = self.second_directional(x, &d, h, f0)?;
            diag[i] = v;
            hess[i][i] = v;
            hess_noise = hess_noise.max(nz);
            step_used = step_used.max(hu);
        }
        for i in 0..n {
            for j in i + 1..n {
                let h = cbrt_eps * x[i].max(x[j]).max(1.0);
                let (v, nz, hu) = match self.mixed_central(x, i, j, h)? {
                    Some(r) => r,
                    None => {
                        let mut d = vec![0.0; n];
                        d[i] = 1.0;
                        d[j] = 1.0;
                        let (dd, nz, hu) = self.second_directional(x, &d, h, f0)?;
                        (0.5 * (dd - diag[i] - diag[j]), nz, hu)
                    }
                };
                hess[i][j] = v;
                hess[j][i] = v;
                hess_noise = hess_noise.max(nz);
                step_used = step_used.max(hu);
            }
        }
        Ok(DerivativeBundle {
            grad,
            hess,
            method: DerivativeMethod::FiniteDifference,
            step_used,
            grad_noise,
            hess_noise,
        })
    }

    fn check_tuple(&self, s: &OrderedSingularTuple) -> Result<()> {
        if s.len() != self.n {
            return Err(RocError::Input(format!(
                "energy has dimension {}, tuple has {}",
                self.n,
                s.len()
            )));
        }
        Ok(())
    }

    fn at(&self, x: &[f64], d: &[f64], t: f64) -> Result<f64> {
        let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        self.ghat(&y)
    }

    /// First derivative of `ĝ` along `d`, with its rounding-noise estimate.
    fn first_directional(&self, x: &[f64], d: &[f64], h0: f64, f0: f64) -> Result<(f64, f64)> {
        let (stencil, h) = choose_stencil(x, d, h0, 2.0)?;
        let e = f64::EPSILON;
        Ok(match stencil {
            Stencil::Central | Stencil::Extension => {
                let fp = self.at(x, d, h)?;
                let fm = self.at(x, d, -h)?;
                ((fp - fm) / (2.0 * h), e * fp.abs().max(fm.abs()) / h)
            }
            Stencil::Forward | Stencil::Backward => {
                let s = if stencil == Stencil::Forward { 1.0 } else { -1.0 };
                let f1 = self.at(x, d, s * h)?;
                let f2 = self.at(x, d, 2.0 * s * h)?;
                let m = f0.abs().max(f1.abs()).max(f2.abs());
                (s * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h), 4.0 * e * m / h)
            }
        })
    }

    /// Second derivative of `ĝ` along `d`: (value, noise, step).
    fn second_directional(
        &self,
        x: &[f64],
        d: &[f64],
        h0: f64,
        f0: f64,
    ) -> Result<(f64, f64, f64)> {
        let (stencil, h) = choose_stencil(x, d, h0, 3.0)?;
        let e = f64::EPSILON;
        Ok(match stencil {
            Stencil::Central | Stencil::Extension => {
                let fp = self.at(x, d, h)?;
                let fm = self.at(x, d, -h)?;
                let m = f0.abs().max(fp.abs()).max(fm.abs());
                ((fp - 2.0 * f0 + fm) / (h * h), 4.0 * e * m / (h * h), h)
            }
            Stencil::Forward | Stencil::Backward => {
                let s = if stencil == Stencil::Forward { 1.0 } else { -1.0 };
                let f1 = self.at(x, d, s * h)?;
                let f2 = self.at(x, d, 2.0 * s * h)?;
                let f3 = self.at(x, d, 3.0 * s * h)?;
                let m = f0.abs().max(f1.abs()).max(f2.abs()).max(f3.abs());
                (
                    (2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f3) / (h * h),
                    12.0 * e * m / (h * h),
                    h,
                )
            }
        })
    }

    /// Four-point central mixed partial, when all corners stay in the cone.
    fn mixed_central(&self, x: &[f64], i: usize, j: usize, h: f64) -> Result<Option<(f64, f64, f64)>> {
        let corners = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
        let mut vals = [0.0; 4];
        for (k, (si, sj)) in corners.iter().enumerate() {
            let mut y = x.to_vec();
            y[i] += 2.0 * si * h;
            y[j] += 2.0 * sj * h;
            if !in_closed_cone(&y) {
                return Ok(None);
            }
            let mut y = x.to_vec();
            y[i] += si * h;
            y[j] += sj * h;
            vals[k] = self.ghat(&y)?;
        }
        let m = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(Some((
            (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h * h),
            f64::EPSILON * m / (h * h),
            h,
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stencil {
    Central,
    Forward,
    Backward,
    /// Central stencil that leaves the closed cone (only the extension of
    /// `ĝ` is sampled there).
    Extension,
}

fn in_closed_cone(y: &[f64]) -> bool {
    y.iter().all(|v| *v > 0.0) && y.windows(2).all(|w| w[0] >= w[1])
}

fn in_orthant(y: &[f64]) -> bool {
    y.iter().all(|v| *v > 0.0)
}

/// Picks a stencil for a directional derivative with `reach` one-sided
/// points. Central stencils need twice their reach inside the closed cone,
/// otherwise a one-sided stencil pointing into the cone is used.
fn choose_stencil(x: &[f64], d: &[f64], h0: f64, reach: f64) -> Result<(Stencil, f64)> {
    let shift = |t: f64| -> Vec<f64> { x.iter().zip(d).map(|(a, b)| a + t * b).collect() };
    let mut h = h0;
    loop {
        if in_closed_cone(&shift(2.0 * h)) && in_closed_cone(&shift(-2.0 * h)) {
            return Ok((Stencil::Central, h));
        }
        if in_closed_cone(&shift(reach * h)) {
            return Ok((Stencil::Forward, h));
        }
        if in_closed_cone(&shift(-reach * h)) {
            return Ok((Stencil::Backward, h));
        }
        if in_orthant(&shift(h)) && in_orthant(&shift(-h)) {
            return Ok((Stencil::Extension, h));
        }
        h *= 0.5;
        if h < 1e-12 {
            return Err(RocError::Evaluation(format!(
                "finite-difference step collapsed below 1e-12 at {x:?}"
            )));
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(RocError::Input(format!("dimension {n} outside 2..={MAX_DIM}")))
    }
}

fn eval_kind(kind: &Kind, l: &[f64]) -> Result<f64> {
    Ok(match kind {
        Kind::OpNorm => l[0],
        Kind::Distortion => l[0] / l[1],
        Kind::LogDistortion => l[0].ln() - l[1].ln(),
        Kind::DistortionSquared => {
            let k = l[0] / l[1];
            k * k
        }
        Kind::Det => l.iter().product(),
        Kind::Ghat(e) => e.eval(l)?,
        Kind::Conformal { hhat, f } => {
            let mut v = hhat.eval(&[l[0] / l[1]])?;
            if let Some(f) = f {
                v += f.eval(&[l[0] * l[1]])?;
            }
            v
        }
        Kind::Scaled(c, inner) => c * eval_kind(inner, l)?,
    })
}

fn kind_has_closed_form(kind: &Kind) -> bool {
    match kind {
        Kind::OpNorm
        | Kind::Distortion
        | Kind::LogDistortion
        | Kind::DistortionSquared
        | Kind::Det => true,
        Kind::Ghat(_) | Kind::Conformal { .. } => false,
        Kind::Scaled(_, inner) => kind_has_closed_form(inner),
    }
}

fn closed_form_kind(kind: &Kind, l: &[f64], n: usize) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let zero = || vec![vec![0.0; n]; n];
    match kind {
        Kind::OpNorm => {
            let mut g = vec![0.0; n];
            g[0] = 1.0;
            Some((g, zero()))
        }
        Kind::Distortion => {
            let (a, b) = (l[0], l[1]);
            let h12 = -1.0 / (b * b);
            Some((
                vec![1.0 / b, -a / (b * b)],
                vec![vec![0.0, h12], vec![h12, 2.0 * a / (b * b * b)]],
            ))
        }
        Kind::LogDistortion => {
            let (a, b) = (l[0], l[1]);
            Some((
                vec![1.0 / a, -1.0 / b],
                vec![vec![-1.0 / (a * a), 0.0], vec![0.0, 1.0 / (b * b)]],
            ))
        }
        Kind::DistortionSquared => {
            let (a, b) = (l[0], l[1]);
            let b2 = b * b;
            let b3 = b2 * b;
            let h12 = -4.0 * a / b3;
            Some((
                vec![2.0 * a / b2, -2.0 * a * a / b3],
                vec![vec![2.0 / b2, h12], vec![h12, 6.0 * a * a / (b2 * b2)]],
            ))
        }
        Kind::Det => {
            let prod_except = |skip: &[usize]| -> f64 {
                l.iter()
                    .enumerate()
                    .filter(|(k, _)| !skip.contains(k))
                    .map(|(_, v)| *v)
                    .product()
            };
            let g = (0..n).map(|i| prod_except(&[i])).collect();
            let mut h = zero();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        h[i][j] = prod_except(&[i, j]);
                    }
                }
            }
            Some((g, h))
        }
        Kind::Ghat(_) | Kind::Conformal { .. } => None,
        Kind::Scaled(c, inner) => closed_form_kind(inner, l, n).map(|(g, h)| {
            (
                g.into_iter().map(|v| c * v).collect(),
                h.into_iter()
                    .map(|row| row.into_iter().map(|v| c * v).collect())
                    .collect(),
            )
        }),
    }
}

/// Parameters for [`zoo`].
#[derive(Clone, Debug, Default)]
pub struct ZooParams {
    pub n: Option<usize>,
    pub hhat: Option<String>,
    pub f: Option<String>,
}

impl ZooParams {
    pub fn n(n: usize) -> Self {
        Self {
            n: Some(n),
            ..Self::default()
        }
    }
}

/// Names accepted by [`zoo`].
pub const ZOO_NAMES: &[&str] = &[
    "opnorm",
    "distortion",
    "logk",
    "k2",
    "det",
    "conformal",
    "voliso",
];

/// Built-in energies.
///
/// | name         | `ĝ`                              | params       |
/// |--------------|----------------------------------|--------------|
/// | `opnorm`     | `λ̂₁`                             | `n` (def. 2) |
/// | `distortion` | `K = λ̂₁/λ̂₂`                      |              |
/// | `logk`       | `log K`                          |              |
/// | `k2`         | `K²`                             |              |
/// | `det`        | `λ̂₁⋯λ̂ₙ`                          | `n` (def. 2) |
/// | `conformal`  | `ĥ(K)`                           | `hhat` (in t)|
/// | `voliso`     | `ĥ(K) + f(λ̂₁λ̂₂)`                 | `hhat`, `f` (in d) |
pub fn zoo(name: &str, params: &ZooParams) -> Result<EnergySpec> {
    let planar = |kind: Kind, label: &str| -> Result<EnergySpec> {
        if let Some(n) = params.n {
            if n != 2 {
                return Err(RocError::Input(format!("zoo energy `{name}` is planar (n = 2)")));
            }
        }
        Ok(EnergySpec {
            name: label.to_string(),
            n: 2,
            regularity: Regularity::C2Closure,
            def: EnergyDef::zoo(name),
            kind,
        })
    };
    let sized = |kind: Kind, label: &str| -> Result<EnergySpec> {
        let n = params.n.unwrap_or(2);
        check_n(n)?;
        Ok(EnergySpec {
            name: format!("{label} (n = {n})"),
            n,
            regularity: Regularity::C2Closure,
            def: EnergyDef::Zoo {
                name: name.to_string(),
                n: Some(n),
                hhat: None,
                f: None,
                regularity: None,
            },
            kind,
        })
    };
    let hhat_expr = || -> Result<(String, BoundExpr)> {
        let src = params
            .hhat
            .clone()
            .ok_or_else(|| RocError::Input(format!("zoo energy `{name}` requires hhat")))?;
        let b = parse(&src)?.bind(&["t"])?;
        Ok((src, b))
    };
    match name {
        "opnorm" => sized(Kind::OpNorm, "operator norm"),
        "det" => sized(Kind::Det, "determinant"),
        "distortion" => planar(Kind::Distortion, "distortion K"),
        "logk" => planar(Kind::LogDistortion, "log K"),
        "k2" => planar(Kind::DistortionSquared, "K^2"),
        "conformal" => {
            let (src, hhat) = hhat_expr()?;
            let mut spec = planar(Kind::Conformal { hhat, f: None }, &format!("hhat(K), hhat = {src}"))?;
            spec.def = EnergyDef::Zoo {
                name: name.into(),
                n: None,
                hhat: Some(src),
                f: None,
                regularity: None,
            };
            Ok(spec)
        }
        "voliso" => {
            let (src, hhat) = hhat_expr()?;
            let fsrc = params
                .f
                .clone()
                .ok_or_else(|| RocError::Input("zoo energy `voliso` requires f".into()))?;
            let f = parse(&fsrc)?.bind(&["d"])?;
            let mut spec = planar(
                Kind::Conformal { hhat, f: Some(f) },
                &format!("hhat(K) + f(det), hhat = {src}, f = {fsrc}"),
            )?;
            spec.def = EnergyDef::Zoo {
                name: name.into(),
                n: None,
                hhat: Some(src),
                f: Some(fsrc),
                regularity: None,
            };
            Ok(spec)
        }
        other => Err(RocError::Input(format!(
            "unknown zoo energy `{other}` (known: {})",
            ZOO_NAMES.join(", ")
        ))),
    }
}

/// Scalar path energy `x ↦ (x − sign(x − x₀)·a − x₀)²`: two parabolas glued
/// at `x₀`, each strictly convex, but with a downward kink at `x₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluedParabola {
    pub a: f64,
    pub x0: f64,
}

impl GluedParabola {
    pub fn new(a: f64, x0: f64) -> Self {
        Self { a, x0 }
    }

    pub fn value(&self, x: f64) -> f64 {
        let shift = if x < self.x0 { -self.a } else { self.a };
        let y = x - shift - self.x0;
        y * y
    }

    /// Points where the two smooth pieces meet.
    pub fn irregular_points(&self) -> Vec<f64> {
        vec![self.x0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tuple(v: &[f64]) -> OrderedSingularTuple {
        OrderedSingularTuple::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zoo_values() {
        let op = zoo("opnorm", &ZooParams::n(2)).unwrap();
        assert_eq!(op.eval_w(&Matrix::from_diag(&[3.0, 2.0])).unwrap(), 3.0);
        let op3 = zoo("opnorm", &ZooParams::n(3)).unwrap();
        assert_eq!(op3.ghat(&[4.0, 2.0, 1.0]).unwrap(), 4.0);
        let k = zoo("distortion", &ZooParams::default()).unwrap();
        assert_eq!(k.eval_w(&Matrix::from_diag(&[2.0, 1.0])).unwrap(), 2.0);
        let v = zoo(
            "voliso",
            &ZooParams {
                hhat: Some("t".into()),
                f: Some("d + 1/d".into()),
                ..Default::default()
            },
        )
        .unwrap();
        let (a, b) = (3.0, 1.5);
        let expected = a / b + a * b + 1.0 / (a * b);
        assert!(close(v.ghat(&[a, b]).unwrap(), expected, 1e-14));
    }

    #[test]
    fn zoo_errors() {
        assert!(matches!(zoo("nope", &ZooParams::default()), Err(RocError::Input(_))));
        assert!(zoo("conformal", &ZooParams::default()).is_err());
        assert!(zoo("distortion", &ZooParams::n(3)).is_err());
        assert!(zoo("opnorm", &ZooParams::n(9)).is_err());
    }

    #[test]
    fn eval_w_domain() {
        let k = zoo("distortion", &ZooParams::default()).unwrap();
        assert!(matches!(
            k.eval_w(&Matrix::from_diag(&[1.0, -1.0])),
            Err(RocError::Domain(_))
        ));
        let bad = EnergySpec::from_ghat_expr("log(l1 - 2)", 2, Regularity::C2Closure).unwrap();
        assert!(matches!(
            bad.eval_w(&Matrix::identity(2)),
            Err(RocError::Eval(_))
        ));
    }

    #[test]
    fn isotropy_of_zoo_energies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let energies = [
            zoo("opnorm", &ZooParams::n(3)).unwrap(),
            zoo("det", &ZooParams::n(3)).unwrap(),
            zoo("distortion", &ZooParams::default()).unwrap(),
            zoo("logk", &ZooParams::default()).unwrap(),
            zoo("k2", &ZooParams::default()).unwrap(),
        ];
        for e in &energies {
            for _ in 0..100 {
                let n = e.dim();
                let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..3.0)).collect();
                let f = crate::smallmat::matrix_with_singular_values(&mut rng, &s);
                let q1 = crate::smallmat::random_rotation(&mut rng, n);
                let q2 = crate::smallmat::random_rotation(&mut rng, n);
                let w = e.eval_w(&f).unwrap();
                let wr = e.eval_w(&q1.matmul(&f).matmul(&q2)).unwrap();
                assert!(close(w, wr, 1e-12 * w.abs().max(1e-300)), "{} {w} {wr}", e.name());
            }
        }
    }

    #[test]
    fn distortion_derivatives_by_hand() {
        let expr = EnergySpec::from_ghat_expr("l1/l2", 2, Regularity::C2Closure).unwrap();
        let d = expr.derivatives_at(&tuple(&[2.0, 1.0])).unwrap();
        assert_eq!(d.method, DerivativeMethod::FiniteDifference);
        assert!(close(d.grad[0], 1.0, 1e-7) && close(d.grad[1], -2.0, 1e-7));
        assert!(close(d.hess[0][0], 0.0, 1e-4));
        assert!(close(d.hess[0][1], -1.0, 1e-4));
        assert!(close(d.hess[1][1], 4.0, 1e-4));
        let cf = zoo("distortion", &ZooParams::default())
            .unwrap()
            .derivatives_at(&tuple(&[2.0, 1.0]))
            .unwrap();
        assert_eq!(cf.grad, vec![1.0, -2.0]);
        assert_eq!(cf.hess, vec![vec![0.0, -1.0], vec![-1.0, 4.0]]);
    }

    #[test]
    fn linear_and_log_derivatives() {
        let lin = EnergySpec::from_ghat_expr("l1", 2, Regularity::C2Closure).unwrap();
        let d = lin.derivatives_at(&tuple(&[3.0, 0.5])).unwrap();
        assert!(close(d.grad[0], 1.0, 1e-9) && close(d.grad[1], 0.0, 1e-9));
        assert!(d.hess.iter().flatten().all(|v| v.abs() < 1e-5));
        let logk = EnergySpec::from_ghat_expr("log(l1)-log(l2)", 2, Regularity::C2Closure).unwrap();
        let d = logk.derivatives_at(&tuple(&[2.0, 1.0])).unwrap();
        assert!(close(d.hess[0][0], -0.25, 1e-5));
    }

    #[test]
    fn finite_differences_match_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let names = ["opnorm", "distortion", "logk", "k2", "det"];
        for name in names {
            for n in [2usize, 3] {
                let params = ZooParams::n(n);
                let Ok(spec) = zoo(name, &params) else { continue };
                let fd = FdOnly(&spec);
                for _ in 0..100 {
                    // strictly ordered, gaps at least 0.1
                    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..4.0)).collect();
                    v.sort_by(|a, b| b.total_cmp(a));
                    for i in (0..n - 1).rev() {
                        if v[i] - v[i + 1] < 0.1 {
                            v[i] = v[i + 1] + 0.1 + rng.gen_range(0.0..0.5);
                        }
                    }
                    for i in (0..n - 1).rev() {
                        v[i] = v[i].max(v[i + 1] + 0.1);
                    }
                    let s = tuple(&v);
                    let (g, h) = spec.closed_form(&v).unwrap();
                    let d = fd.derivatives(&s);
                    let gs = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                    let hs = h.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
                    for i in 0..n {
                        assert!(close(d.grad[i], g[i], 1e-6 * gs), "{name} grad {v:?}");
                        for j in 0..n {
                            assert!(
                                close(d.hess[i][j], h[i][j], 1e-4 * hs),
                                "{name} hess {v:?}: {} vs {}",
                                d.hess[i][j],
                                h[i][j]
                            );
                            assert_eq!(d.hess[i][j], d.hess[j][i]);
                        }
                    }
                }
            }
        }
    }

    /// Forces the finite-difference path for a closed-form energy.
    struct FdOnly<'a>(&'a EnergySpec);

    impl FdOnly<'_> {
        fn derivatives(&self, s: &OrderedSingularTuple) -> DerivativeBundle {
            let mut stripped = self.0.clone();
            stripped.kind = Kind::Ghat(
                parse(&match self.0.kind {
                    Kind::OpNorm => "l1".to_string(),
                    Kind::Distortion => "l1/l2".to_string(),
                    Kind::LogDistortion => "log(l1) - log(l2)".to_string(),
                    Kind::DistortionSquared => "(l1/l2)^2".to_string(),
                    Kind::Det => (1..=self.0.n)
                        .map(|i| format!("l{i}"))
                        .collect::<Vec<_>>()
                        .join("*"),
                    _ => unreachable!(),
                })
                .unwrap()
                .bind(
                    &(1..=self.0.n)
                        .map(|i| format!("l{i}"))
                        .collect::<Vec<_>>()
                        .iter()
                        .map(String::as_str)
                        .collect::<Vec<_>>(),
                )
                .unwrap(),
            );
            stripped.derivatives_at(s).unwrap()
        }
    }

    #[test]
    fn one_sided_stencils_on_the_diagonal() {
        // ĝ = l1 is smooth across the diagonal; the gradient at (c, c) must
        // still come out as (1, 0) from inward stencils.
        let lin = EnergySpec::from_ghat_expr("l1 + 0.5*l1*l2", 2, Regularity::C2Closure).unwrap();
        let c = 1.5;
        let (g, _) = lin.gradient_at(&tuple(&[c, c])).unwrap();
        assert!(close(g[0], 1.0 + 0.5 * c, 1e-7));
        assert!(close(g[1], 0.5 * c, 1e-7));
        let d = lin.derivatives_at(&tuple(&[c, c])).unwrap();
        assert!(close(d.hess[0][1], 0.5, 1e-3), "{:?}", d.hess);
        assert!(close(d.hess[0][0], 0.0, 1e-3));
    }

    #[test]
    fn boundary_hessian_needs_c2_claim() {
        let e = EnergySpec::from_ghat_expr("l1", 2, Regularity::C2InteriorC1Closure).unwrap();
        assert!(matches!(
            e.derivatives_at(&tuple(&[1.0, 1.0])),
            Err(RocError::NotApplicable(_))
        ));
        assert!(e.gradient_at(&tuple(&[1.0, 1.0])).is_ok());
    }

    #[test]
    fn tiny_singular_values_shrink_the_step() {
        // On the diagonal near the origin no inward stencil fits at the
        // nominal step, so the step is halved until one does.
        let e = EnergySpec::from_ghat_expr("l1 + 2*l2", 2, Regularity::C2Closure).unwrap();
        let (g, _) = e.gradient_at(&tuple(&[1e-9, 1e-9])).unwrap();
        assert!(close(g[0], 1.0, 1e-6) && close(g[1], 2.0, 1e-6), "{g:?}");
        assert!(matches!(
            e.gradient_at(&tuple(&[1e-13, 1e-13])),
            Err(RocError::Evaluation(_))
        ));
    }

    #[test]
    fn scaled_energy() {
        let k = zoo("distortion", &ZooParams::default()).unwrap();
        let k3 = k.scaled(3.0).unwrap();
        assert_eq!(k3.ghat(&[2.0, 1.0]).unwrap(), 6.0);
        let (g, _) = k3.closed_form(&[2.0, 1.0]).unwrap();
        assert_eq!(g, vec![3.0, -6.0]);
        assert!(k.scaled(-1.0).is_err());
    }

    #[test]
    fn glued_parabola_shape() {
        let w = GluedParabola::new(0.5, 0.0);
        assert_eq!(w.value(0.0), 0.25);
        assert_eq!(w.value(-0.5), 0.0);
        assert_eq!(w.value(0.5), 0.0);
        assert_eq!(w.irregular_points(), vec![0.0]);
    }

    #[test]
    fn energy_def_round_trip() {
        let def = EnergyDef::Ghat {
            expr: "l1/l2".into(),
            n: 2,
            regularity: Regularity::C2InteriorC1Closure,
        };
        let json = serde_json::to_string(&def).unwrap();
        assert!(json.contains("\"c1-closure\""));
        let back: EnergyDef = serde_json::from_str(&json).unwrap();
        assert_eq!(def, back);
        let spec = EnergySpec::from_def(&back).unwrap();
        assert_eq!(spec.dim(), 2);
    }
}
