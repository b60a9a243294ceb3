//! Energy densities `f(x, y, xi)` with `p`-growth, and the finite test dictionary.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::frobenius;

type ValueFn = dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Growth record: `alpha |xi|^p - offset <= f <= beta (1 + |xi|^p)`.
///
/// `offset` is zero for the pure power-type built-ins; the double well needs
/// a positive one since it vanishes on its wells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub offset: f64,
}

impl Growth {
    pub fn lower(&self, xi_norm: f64) -> f64 {
        self.alpha * xi_norm.powf(self.p) - self.offset
    }

    pub fn upper(&self, xi_norm: f64) -> f64 {
        self.beta * (1.0 + xi_norm.powf(self.p))
    }
}

/// Piecewise constant coefficient `a(y)` along one axis of the unit cell:
/// `a(y) = values[k]` for `y_axis` in `[k/m, (k+1)/m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Laminate {
    pub values: Vec<f64>,
    #[serde(default)]
    pub axis: usize,
}

impl Laminate {
    pub fn new(values: Vec<f64>, axis: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("laminate needs at least one phase coefficient"));
        }
        if values.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(invalid("laminate coefficients must be positive"));
        }
        if axis > 1 {
            return Err(invalid(format!("laminate axis must be 0 or 1, got {axis}")));
        }
        Ok(Self { values, axis })
    }

    #[inline]
    pub fn at(&self, y: &[f64]) -> f64 {
        let m = self.values.len();
        let t = y.get(self.axis).copied().unwrap_or(0.0);
        let k = ((t * m as f64).floor() as isize).clamp(0, m as isize - 1) as usize;
        self.values[k]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of equal-width phases; grids resolving the laminate need a
    /// multiple of this many cells per unit along `axis`.
    pub fn phases(&self) -> usize {
        self.values.len()
    }
}

#[derive(Clone)]
enum Density {
    PNorm {
        p: f64,
    },
    Laminate {
        a: Laminate,
        p: f64,
    },
    ModulatedLaminate {
        a: Laminate,
    },
    DoubleWell,
    LinearProbe {
        phi: Vec<f64>,
    },
    Product {
        a: Laminate,
        inner: Box<Density>,
    },
    Custom {
        value: Arc<ValueFn>,
        gradient: Option<Arc<GradFn>>,
    },
}

impl Density {
    fn value(&self, x: &[f64], y: &[f64], xi: &[f64]) -> f64 {
        match self {
            Density::PNorm { p } => norm_pow(xi, *p),
            Density::Laminate { a, p } => a.at(y) * norm_pow(xi, *p),
            Density::ModulatedLaminate { a } => a.at(y) * (1.0 + 0.5 * x[0]) * norm_pow(xi, 2.0),
            Density::DoubleWell => {
                let s = sq(xi) - 1.0;
                s * s
            }
            Density::LinearProbe { phi } => phi.iter().zip(xi).map(|(a, b)| a * b).sum(),
            Density::Product { a, inner } => a.at(y) * inner.value(x, y, xi),
            Density::Custom { value, .. } => value(x, y, xi),
        }
    }

    fn gradient(&self, x: &[f64], y: &[f64], xi: &[f64], out: &mut [f64]) {
        match self {
            Density::PNorm { p } => norm_pow_gradient(xi, *p, 1.0, out),
            Density::Laminate { a, p } => norm_pow_gradient(xi, *p, a.at(y), out),
            Density::ModulatedLaminate { a } => {
                norm_pow_gradient(xi, 2.0, a.at(y) * (1.0 + 0.5 * x[0]), out)
            }
            Density::DoubleWell => {
                let s = 4.0 * (sq(xi) - 1.0);
                for (o, v) in out.iter_mut().zip(xi) {
                    *o = s * v;
                }
            }
            Density::LinearProbe { phi } => out[..phi.len()].copy_from_slice(phi),
            Density::Product { a, inner } => {
                inner.gradient(x, y, xi, out);
                let s = a.at(y);
                out[..xi.len()].iter_mut().for_each(|o| *o *= s);
            }
            Density::Custom {
                gradient: Some(g), ..
            } => g(x, y, xi, out),
            Density::Custom { gradient: None, .. } => self.fd_gradient(x, y, xi, out),
        }
    }

    fn fd_gradient(&self, x: &[f64], y: &[f64], xi: &[f64], out: &mut [f64]) {
        let step = 1e-6 * (1.0 + frobenius(xi));
        let mut buf = [0.0; 4];
        let m = xi.len();
        buf[..m].copy_from_slice(xi);
        for k in 0..m {
            buf[k] = xi[k] + step;
            let fp = self.value(x, y, &buf[..m]);
            buf[k] = xi[k] - step;
            let fm = self.value(x, y, &buf[..m]);
            buf[k] = xi[k];
            out[k] = (fp - fm) / (2.0 * step);
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        match self {
            Density::Custom { gradient, .. } => gradient.is_some(),
            Density::Product { inner, .. } => inner.has_analytic_gradient(),
            _ => true,
        }
    }
}

#[inline]
fn sq(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v * v).sum()
}

#[inline]
fn norm_pow(xi: &[f64], p: f64) -> f64 {
    let s = sq(xi);
    if p == 2.0 {
        s
    } else {
        s.powf(0.5 * p)
    }
}

#[inline]
fn norm_pow_gradient(xi: &[f64], p: f64, scale: f64, out: &mut [f64]) {
    let s = sq(xi);
    let factor = if p == 2.0 {
        2.0 * scale
    } else if s == 0.0 {
        0.0
    } else {
        scale * p * s.powf(0.5 * p - 1.0)
    };
    for (o, v) in out.iter_mut().zip(xi) {
        *o = factor * v;
    }
}

/// Declarative description of a built-in integrand, as used in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandSpec {
    PNorm {
        #[serde(default = "default_p")]
        p: f64,
    },
    Laminate {
        a: Vec<f64>,
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default)]
        axis: usize,
    },
    ModulatedLaminate {
        a: Vec<f64>,
        #[serde(default)]
        axis: usize,
    },
    DoubleWell,
    LinearProbe {
        phi: Vec<f64>,
        #[serde(default = "default_p")]
        p: f64,
    },
    Product {
        a: Vec<f64>,
        #[serde(default)]
        axis: usize,
        inner: Box<IntegrandSpec>,
    },
}

fn default_p() -> f64 {
    2.0
}

impl IntegrandSpec {
    pub fn build(&self) -> Result<Integrand> {
        match self {
            IntegrandSpec::PNorm { p } => Integrand::p_norm(*p),
            IntegrandSpec::Laminate { a, p, axis } => {
                Integrand::laminate(Laminate::new(a.clone(), *axis)?, *p)
            }
            IntegrandSpec::ModulatedLaminate { a, axis } => Ok(Integrand::modulated_laminate(
                Laminate::new(a.clone(), *axis)?,
            )),
            IntegrandSpec::DoubleWell => Ok(Integrand::double_well()),
            IntegrandSpec::LinearProbe { phi, p } => Integrand::linear_probe(phi.clone(), *p),
            IntegrandSpec::Product { a, axis, inner } => {
                Integrand::product(Laminate::new(a.clone(), *axis)?, inner.build()?)
            }
        }
    }
}

/// An energy density `f(x, y, xi)` with its growth record.
#[derive(Clone)]
pub struct Integrand {
    name: String,
    density: Density,
    growth: Growth,
    nonnegative: bool,
    convex: bool,
    x_independent: bool,
    spec: Option<IntegrandSpec>,
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand")
            .field("name", &self.name)
            .field("growth", &self.growth)
            .field("convex", &self.convex)
            .finish()
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("growth exponent must be > 1, got {p}")))
    }
}

impl Integrand {
    /// `|xi|^p`.
    pub fn p_norm(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(Self {
            name: format!("p_norm(p={p})"),
            density: Density::PNorm { p },
            growth: Growth {
                alpha: 1.0,
                beta: 1.0,
                p,
                offset: 0.0,
            },
            nonnegative: true,
            convex: true,
            x_independent: true,
            spec: Some(IntegrandSpec::PNorm { p }),
        })
    }

    /// `a(y) |xi|^p`.
    pub fn laminate(a: Laminate, p: f64) -> Result<Self> {
        check_p(p)?;
        let spec = IntegrandSpec::Laminate {
            a: a.values.clone(),
            p,
            axis: a.axis,
        };
        Ok(Self {
            name: format!("laminate(a={:?},p={p})", a.values),
            growth: Growth {
                alpha: a.min(),
                beta: a.max(),
                p,
                offset: 0.0,
            },
            density: Density::Laminate { a, p },
            nonnegative: true,
            convex: true,
            x_independent: true,
            spec: Some(spec),
        })
    }

    /// `a(y) (1 + x_1 / 2) |xi|^2`, the only built-in depending on `x`.
    pub fn modulated_laminate(a: Laminate) -> Self {
        let spec = IntegrandSpec::ModulatedLaminate {
            a: a.values.clone(),
            axis: a.axis,
        };
        Self {
            name: format!("modulated_laminate(a={:?})", a.values),
            growth: Growth {
                alpha: a.min(),
                beta: 1.5 * a.max(),
                p: 2.0,
                offset: 0.0,
            },
            density: Density::ModulatedLaminate { a },
            nonnegative: true,
            convex: true,
            x_independent: false,
            spec: Some(spec),
        }
    }

    /// `(|xi|^2 - 1)^2`; satisfies `|xi|^4 / 2 - 1 <= f <= 1 + |xi|^4`.
    pub fn double_well() -> Self {
        Self {
            name: "double_well".into(),
            density: Density::DoubleWell,
            growth: Growth {
                alpha: 0.5,
                beta: 1.0,
                p: 4.0,
                offset: 1.0,
            },
            nonnegative: true,
            convex: false,
            x_independent: true,
            spec: Some(IntegrandSpec::DoubleWell),
        }
    }

    /// Signed linear probe `xi : phi`; `|f| <= |phi| (1 + |xi|^p)`.
    pub fn linear_probe(phi: Vec<f64>, p: f64) -> Result<Self> {
        check_p(p)?;
        if phi.is_empty() || phi.len() > 4 {
            return Err(invalid("probe matrix must have 1 to 4 entries"));
        }
        let norm = frobenius(&phi);
        Ok(Self {
            name: format!("linear_probe(phi={phi:?})"),
            spec: Some(IntegrandSpec::LinearProbe {
                phi: phi.clone(),
                p,
            }),
            density: Density::LinearProbe { phi },
            growth: Growth {
                alpha: 0.0,
                beta: norm,
                p,
                offset: 0.0,
            },
            nonnegative: false,
            convex: true,
            x_independent: true,
        })
    }

    /// `a(y) * g(xi)` for a y-independent inner density `g`.
    pub fn product(a: Laminate, inner: Integrand) -> Result<Self> {
        if !inner.x_independent {
            return Err(invalid("product inner density must not depend on x"));
        }
        if let Density::Custom { .. } = inner.density {
            return Err(invalid("product inner density must be a built-in"));
        }
        let g = inner.growth;
        let spec = inner.spec.clone().map(|s| IntegrandSpec::Product {
            a: a.values.clone(),
            axis: a.axis,
            inner: Box::new(s),
        });
        Ok(Self {
            name: format!("product(a={:?},{})", a.values, inner.name),
            growth: Growth {
                alpha: a.min() * g.alpha,
                beta: a.max() * g.beta,
                p: g.p,
                offset: a.max() * g.offset,
            },
            nonnegative: inner.nonnegative,
            convex: inner.convex,
            x_independent: true,
            density: Density::Product {
                a,
                inner: Box::new(inner.density),
            },
            spec,
        })
    }

    /// User-defined density. Without `gradient`, central differences with
    /// step `1e-6 (1 + |xi|)` are used.
    pub fn custom<F>(name: impl Into<String>, growth: Growth, value: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            density: Density::Custom {
                value: Arc::new(value),
                gradient: None,
            },
            growth,
            nonnegative: true,
            convex: false,
            x_independent: false,
            spec: None,
        }
    }

    /// Attaches an analytic `xi`-gradient to a custom density.
    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if let Density::Custom { gradient: g, .. } = &mut self.density {
            *g = Some(Arc::new(gradient));
        }
        self
    }

    pub fn with_flags(mut self, nonnegative: bool, convex: bool, x_independent: bool) -> Self {
        self.nonnegative = nonnegative;
        self.convex = convex;
        self.x_independent = x_independent;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Multiplies the density (and its growth constants) by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid("scale factor must be positive"));
        }
        let inner = self.density.clone();
        let value: Arc<ValueFn> =
            Arc::new(move |x: &[f64], y: &[f64], xi: &[f64]| s * inner.value(x, y, xi));
        let inner = self.density.clone();
        let gradient: Arc<GradFn> =
            Arc::new(move |x: &[f64], y: &[f64], xi: &[f64], out: &mut [f64]| {
                inner.gradient(x, y, xi, out);
                out[..xi.len()].iter_mut().for_each(|o| *o *= s);
            });
        Ok(Self {
            name: format!("{s}*{}", self.name),
            density: Density::Custom {
                value,
                gradient: Some(gradient),
            },
            growth: Growth {
                alpha: s * self.growth.alpha,
                beta: s * self.growth.beta,
                p: self.growth.p,
                offset: s * self.growth.offset,
            },
            nonnegative: self.nonnegative,
            convex: self.convex,
            x_independent: self.x_independent,
            spec: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn is_x_independent(&self) -> bool {
        self.x_independent
    }

    pub fn spec(&self) -> Option<&IntegrandSpec> {
        self.spec.as_ref()
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.density.has_analytic_gradient()
    }

    /// True when the density is known not to depend on `y`.
    pub fn is_y_independent(&self) -> bool {
        matches!(
            self.density,
            Density::PNorm { .. } | Density::DoubleWell | Density::LinearProbe { .. }
        )
    }

    /// `f_hom(F) = f(F)` for convex densities that depend on `xi` only.
    pub fn closed_form_fhom(&self, matrix: &[f64]) -> Option<f64> {
        (self.convex && self.is_y_independent())
            .then(|| self.density.value(&[0.0; 2], &[0.0; 2], matrix))
    }

    /// Laminate along `axis` carried by this density, if any.
    pub fn laminate_structure(&self) -> Option<&Laminate> {
        match &self.density {
            Density::Laminate { a, .. }
            | Density::ModulatedLaminate { a }
            | Density::Product { a, .. } => Some(a),
            _ => None,
        }
    }

    /// Checked evaluation; `y` must lie in the unit cell `[0,1)^N`.
    pub fn evaluate(&self, x: &[f64], y: &[f64], xi: &[f64]) -> Result<f64> {
        check_cell_point(y)?;
        Ok(self.density.value(x, y, xi))
    }

    /// `xi`-gradient, analytic when available.
    pub fn gradient_xi(&self, x: &[f64], y: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        check_cell_point(y)?;
        let mut out = vec![0.0; xi.len()];
        self.density.gradient(x, y, xi, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation for inner loops.
    #[inline]
    pub(crate) fn value(&self, x: &[f64], y: &[f64], xi: &[f64]) -> f64 {
        self.density.value(x, y, xi)
    }

    #[inline]
    pub(crate) fn gradient_into(&self, x: &[f64], y: &[f64], xi: &[f64], out: &mut [f64]) {
        self.density.gradient(x, y, xi, out)
    }
}

fn check_cell_point(y: &[f64]) -> Result<()> {
    if y.iter().all(|v| (0.0..1.0).contains(v)) {
        Ok(())
    } else {
        Err(invalid(format!(
            "cell point {y:?} lies outside [0,1)^N; wrap it with cell_coordinates"
        )))
    }
}

/// Lower bound on the `E_p` norm `sup |f(y, xi)| / (1 + |xi|^p)`, sampled on
/// `|xi| <= radius`.
///
/// `samples` radii are spread uniformly over `[0, radius]`, along the
/// coordinate directions and the diagonals of `R^{d x N}`, at `samples`
/// points per axis of the unit cell.
pub fn ep_norm_estimate(
    f: &Integrand,
    dim: usize,
    components: usize,
    radius: f64,
    samples: usize,
) -> Result<f64> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!(
            "sample radius must be positive, got {radius}"
        )));
    }
    if !(1..=2).contains(&dim) || !(1..=2).contains(&components) {
        return Err(invalid("dim and components must be 1 or 2"));
    }
    let samples = samples.max(2);
    let m = dim * components;
    let p = f.growth().p;

    let mut directions: Vec<Vec<f64>> = Vec::new();
    for k in 0..m {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; m];
            e[k] = s;
            directions.push(e);
        }
    }
    if m > 1 {
        for mask in 0..(1usize << m) {
            let e: Vec<f64> = (0..m)
                .map(|k| if (mask >> k) & 1 == 1 { 1.0 } else { -1.0 } / (m as f64).sqrt())
                .collect();
            directions.push(e);
        }
    }

    let ys: Vec<Vec<f64>> = if dim == 1 {
        (0..samples)
            .map(|k| vec![(k as f64 + 0.5) / samples as f64])
            .collect()
    } else {
        (0..samples * samples)
            .map(|k| {
                vec![
                    ((k % samples) as f64 + 0.5) / samples as f64,
                    ((k / samples) as f64 + 0.5) / samples as f64,
                ]
            })
            .collect()
    };
    let x = vec![0.5; dim];
    let mut best: f64 = 0.0;
    let mut xi = vec![0.0; m];
    for y in &ys {
        for r_idx in 0..samples {
            let r = radius * r_idx as f64 / (samples - 1) as f64;
            for e in &directions {
                for (v, ek) in xi.iter_mut().zip(e) {
                    *v = r * ek;
                }
                let ratio = f.value(&x, y, &xi).abs() / (1.0 + r.powf(p));
                best = best.max(ratio);
                if r == 0.0 {
                    break;
                }
            }
        }
    }
    Ok(best)
}

/// A named, finite family of y-dependent test integrands.
#[derive(Clone, Debug)]
pub struct TestDictionary {
    members: Vec<Integrand>,
}

impl TestDictionary {
    pub fn new(members: Vec<Integrand>) -> Result<Self> {
        if members.is_empty() {
            return Err(invalid("test dictionary must not be empty"));
        }
        if members.iter().any(|m| !m.is_x_independent()) {
            return Err(invalid("test dictionary members must not depend on x"));
        }
        Ok(Self { members })
    }

    /// Default dictionary for `d x N` gradients: the `p`-norm, three laminates
    /// of distinct contrast, the double well, four linear probes and two
    /// products `a(y) w(xi)`.
    pub fn standard(dim: usize, components: usize, p: f64) -> Result<Self> {
        let m = dim * components;
        let mut members = vec![
            Integrand::p_norm(p)?,
            Integrand::laminate(Laminate::new(vec![1.0, 4.0], 0)?, 2.0)?,
            Integrand::laminate(Laminate::new(vec![1.0, 10.0], 0)?, 2.0)?,
            Integrand::laminate(Laminate::new(vec![2.0, 3.0], 0)?, 2.0)?,
            Integrand::double_well(),
        ];
        for phi in probe_matrices(m) {
            members.push(Integrand::linear_probe(phi, p)?);
        }
        members.push(Integrand::product(
            Laminate::new(vec![1.0, 4.0], 0)?,
            Integrand::double_well(),
        )?);
        members.push(Integrand::product(
            Laminate::new(vec![3.0, 1.0], 0)?,
            Integrand::p_norm(3.0)?,
        )?);
        Self::new(members)
    }

    pub fn members(&self) -> &[Integrand] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.name()).collect()
    }
}

fn probe_matrices(m: usize) -> Vec<Vec<f64>> {
    match m {
        1 => vec![vec![1.0], vec![-1.0], vec![2.0], vec![-0.5]],
        2 => vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, -1.0],
            vec![-0.5, 2.0],
        ],
        _ => {
            let mut out = vec![];
            let mut e0 = vec![0.0; m];
            e0[0] = 1.0;
            out.push(e0);
            let mut e1 = vec![0.0; m];
            e1[m - 1] = 1.0;
            out.push(e1);
            out.push(
                (0..m)
                    .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 })
                    .collect(),
            );
            out.push((0..m).map(|k| 0.5 * (k as f64 + 1.0)).collect());
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lam14() -> Integrand {
        Integrand::laminate(Laminate::new(vec![1.0, 4.0], 0).unwrap(), 2.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(lam14().evaluate(&[0.0], &[0.25], &[2.0]).unwrap(), 4.0);
        assert_eq!(lam14().evaluate(&[0.0], &[0.75], &[2.0]).unwrap(), 16.0);
        assert_eq!(
            Integrand::double_well()
                .evaluate(&[0.0], &[0.1], &[1.0])
                .unwrap(),
            0.0
        );
        assert!(lam14().evaluate(&[0.0], &[1.0], &[2.0]).is_err());
        assert!(lam14().evaluate(&[0.0], &[-0.1], &[2.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let y = [0.3];
        assert_eq!(
            Integrand::p_norm(2.0)
                .unwrap()
                .gradient_xi(&[0.0], &y, &[3.0])
                .unwrap(),
            vec![6.0]
        );
        assert_eq!(
            Integrand::double_well()
                .gradient_xi(&[0.0], &y, &[1.0])
                .unwrap(),
            vec![0.0]
        );
        let g = Integrand::double_well()
            .gradient_xi(&[0.0], &y, &[0.5])
            .unwrap()[0];
        assert_abs_diff_eq!(g, -1.5, epsilon = 1e-14);
        // central-difference cross-check of the chain rule value
        let f = |t: f64| (t * t - 1.0).powi(2);
        let fd = (f(0.5 + 1e-6) - f(0.5 - 1e-6)) / 2e-6;
        assert_abs_diff_eq!(fd, -1.5, epsilon = 1e-8);
    }

    #[test]
    fn custom_falls_back_to_finite_differences() {
        let growth = Growth {
            alpha: 1.0,
            beta: 2.0,
            p: 2.0,
            offset: 0.0,
        };
        let f = Integrand::custom("cosh", growth, |_, _, xi| xi[0].cosh());
        assert!(!f.has_analytic_gradient());
        let g = f.gradient_xi(&[0.0], &[0.5], &[0.7]).unwrap()[0];
        assert!((g - 0.7f64.sinh()).abs() < 1e-6);
    }

    fn builtins() -> Vec<Integrand> {
        vec![
            Integrand::p_norm(2.0).unwrap(),
            Integrand::p_norm(1.5).unwrap(),
            Integrand::p_norm(3.0).unwrap(),
            lam14(),
            Integrand::laminate(Laminate::new(vec![2.0, 5.0, 1.0], 1).unwrap(), 3.0).unwrap(),
            Integrand::modulated_laminate(Laminate::new(vec![1.0, 4.0], 0).unwrap()),
            Integrand::double_well(),
            Integrand::product(
                Laminate::new(vec![1.0, 4.0], 0).unwrap(),
                Integrand::double_well(),
            )
            .unwrap(),
            Integrand::product(
                Laminate::new(vec![3.0, 1.0], 0).unwrap(),
                Integrand::p_norm(3.0).unwrap(),
            )
            .unwrap(),
        ]
    }

    #[test]
    fn growth_sandwich_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in builtins() {
            let g = f.growth();
            for _ in 0..10_000 {
                let m = 4;
                let xi: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
                let y = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                let v = f.evaluate(&x, &y, &xi).unwrap();
                let r = frobenius(&xi);
                assert!(
                    v >= g.lower(r) - 1e-9 * (1.0 + v.abs()),
                    "{} lower bound at {xi:?}",
                    f.name()
                );
                assert!(
                    v <= g.upper(r) + 1e-9 * (1.0 + v.abs()),
                    "{} upper bound at {xi:?}",
                    f.name()
                );
            }
        }
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut all = builtins();
        all.push(Integrand::linear_probe(vec![1.0, -2.0, 0.5, 3.0], 2.0).unwrap());
        for f in all {
            for _ in 0..100 {
                let xi: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
                let x = [rng.random_range(0.0..1.0), 0.3];
                let g = f.gradient_xi(&x, &y, &xi).unwrap();
                let h = 1e-6 * (1.0 + frobenius(&xi));
                for k in 0..4 {
                    let mut a = xi.clone();
                    let mut b = xi.clone();
                    a[k] += h;
                    b[k] -= h;
                    let fd = (f.value(&x, &y, &a) - f.value(&x, &y, &b)) / (2.0 * h);
                    let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
                    assert!(
                        (fd - g[k]).abs() <= 1e-5 * scale,
                        "{}: fd {fd} vs {}",
                        f.name(),
                        g[k]
                    );
                }
            }
        }
    }

    #[test]
    fn linear_probe_is_additive() {
        let f = Integrand::linear_probe(vec![0.5, -1.25], 2.0).unwrap();
        let y = [0.2, 0.9];
        let a = [0.125, 3.5];
        let b = [-2.0, 0.75];
        let s = [a[0] + b[0], a[1] + b[1]];
        let lhs = f.value(&[0.0, 0.0], &y, &s);
        let rhs = f.value(&[0.0, 0.0], &y, &a) + f.value(&[0.0, 0.0], &y, &b);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn ep_norm_examples() {
        let pn = Integrand::p_norm(2.0).unwrap();
        let e = ep_norm_estimate(&pn, 1, 1, 10.0, 201).unwrap();
        assert!(e > 0.9 && e <= 1.0);
        let growth = Growth {
            alpha: 0.0,
            beta: 1.0,
            p: 2.0,
            offset: 0.0,
        };
        let lin = Integrand::custom("id", growth, |_, _, xi| xi[0]);
        // max of t / (1 + t^2) is 1/2 at t = 1
        let e = ep_norm_estimate(&lin, 1, 1, 4.0, 401).unwrap();
        assert_abs_diff_eq!(e, 0.5, epsilon = 1e-6);
        let c = Integrand::custom("c", growth, |_, _, _| -3.0);
        assert_abs_diff_eq!(
            ep_norm_estimate(&c, 2, 1, 1.0, 5).unwrap(),
            3.0,
            epsilon = 1e-15
        );
        assert!(ep_norm_estimate(&c, 1, 1, 0.0, 5).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let spec: IntegrandSpec =
            serde_json::from_str(r#"{"kind":"laminate","a":[1,4],"p":2}"#).unwrap();
        let f = spec.build().unwrap();
        assert_eq!(f.spec(), Some(&spec));
        assert_eq!(f.evaluate(&[0.0], &[0.75], &[1.0]).unwrap(), 4.0);
        let bad = serde_json::from_str::<IntegrandSpec>(r#"{"kind":"laminate","p":2}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn standard_dictionary_contents() {
        let d = TestDictionary::standard(1, 1, 2.0).unwrap();
        assert_eq!(d.len(), 11);
        let d2 = TestDictionary::standard(2, 2, 2.0).unwrap();
        assert_eq!(d2.len(), 11);
        assert!(d2.members().iter().all(|m| m.is_x_independent()));
        assert!(TestDictionary::new(vec![]).is_err());
    }

    #[test]
    fn scaled_integrand() {
        let f = lam14().scaled(3.0).unwrap();
        assert_eq!(f.evaluate(&[0.0], &[0.75], &[1.0]).unwrap(), 12.0);
        assert_eq!(f.gradient_xi(&[0.0], &[0.75], &[1.0]).unwrap(), vec![24.0]);
    }
}
