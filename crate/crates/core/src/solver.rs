//! Homotopy operators `H_q` on model domains in ℂ² and the experiments built
//! on them.
//!
//! For `z ∈ Ω`,
//!
//! `H_q f(z) = ∫_{Ω∪U₁} B_{q−1}(z, ·) ∧ Ef + ∫_{U₁\Ω̄} K_{q−1}(z, ·) ∧ [∂̄, E] f`,
//!
//! where `E` reflects across `bΩ` along rays through the origin and is cut off
//! inside the collar `U₁`. Outside `Ω̄` the extension of a form with
//! `∂̄f = 0` satisfies `E∂̄f = 0`, so there `[∂̄, E] f = ∂̄(Ef)`.
//!
//! Quadrature uses common random numbers in a form that keeps the computed
//! `u = H_q f` smooth in `z`:
//! - the Bochner–Martinelli kernel depends on `w = ζ − z` alone, so its
//!   integral is sampled on one fixed point set in `w`, and
//!   `z ↦ Σ_i B(w_i) Ef(z + w_i)` is exactly as smooth as `Ef`; the points
//!   come in antithetic pairs `±w_i`, and since `B` is odd in `w` each pair
//!   contributes `B(w_i) (Ef(z + w_i) − Ef(z − w_i))`;
//! - the collar integral is sampled on one fixed point set in `ζ`, and the
//!   Cauchy–Fantappiè kernel is smooth in `z` away from the boundary.
//!
//! Finite differences of `u` are therefore free of sampling noise at the
//! scale of the step, and a linear combination `Σ c_k u(z_k)` carries its own
//! standard error, computed from the per-sample combined terms.

use crate::cforms::{zeta_volume_factor, Form, Gen, Var};
use crate::domains::{random_sphere, DefiningDomain, ModelKind};
use crate::error::{Error, Result};
use crate::kernels::{bm_kernel, cf_k0_n2, cf_kernel, k0_wedge_n2, kernel_project};
use crate::littlewood_paley::{smooth_cutoff, ReflectionExt};
use crate::quadrature_estimates::{approach_point, fit_exponent, type_of, ExponentFit};
use crate::scalar::{c64, C64};
use crate::support_leray::{Support, SupportKind, SupportParams, ZetaData};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::PathBuf;

/// Surface area of the unit sphere `S³ ⊂ ℝ⁴`.
const SPHERE3: f64 = 2.0 * PI * PI;

// ------------------------------------------------------------------ fields

/// The forms the solver is exercised on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Zero,
    /// `∂̄u` for `u = z̄₁ β(|z|²/r²)` with `β(x) = exp(1 − 1/(1 − x))` on `x < 1`.
    BumpSolution { radius: f64 },
    /// `∂̄u` for `u = z̄₁² z₂ + |z₂|² z̄₁`.
    PolynomialSolution,
    /// `(ζ₁ + 2ζ̄₂) dζ̄₁`.
    Linear,
    /// `δ^s (1 + ¼ cos 2π Re ζ₂) dζ̄₁` with `δ = 1 − μ` and `μ` the gauge.
    BoundaryProfile { s: f64 },
    /// `|Re ζ₁|^s β(|ζ|²/r²) dζ̄₁`: a kink across a real hyperplane.
    InteriorKink { s: f64, radius: f64 },
    /// The `(0, 2)`-form `ζ₂ ζ̄₁ dζ̄₁ ∧ dζ̄₂`.
    TopPolynomial,
}

/// A `(0, q)`-form given by coefficient oracles on `Ω̄`, with the Hölder
/// exponent of its coefficients (`∞` for smooth fields).
///
/// Coefficients are returned as `[C64; 2]`: `(f₁, f₂)` in the basis
/// `dζ̄₁, dζ̄₂` for `q = 1`, and `(f₁₂, 0)` for `q = 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormField {
    pub kind: FieldKind,
    pub holder: f64,
}

fn bump(x: f64) -> (f64, f64) {
    if x >= 1.0 {
        return (0.0, 0.0);
    }
    let b = (1.0 - 1.0 / (1.0 - x)).exp();
    (b, -b / ((1.0 - x) * (1.0 - x)))
}

impl FormField {
    pub fn new(kind: FieldKind) -> Result<Self> {
        let holder = match &kind {
            FieldKind::BumpSolution { radius } => {
                if !(*radius > 0.0 && *radius <= 1.0) {
                    return Err(Error::InvalidParameter(format!("bump radius {radius} outside (0, 1]")));
                }
                f64::INFINITY
            }
            FieldKind::BoundaryProfile { s } => {
                if !(*s > 0.0 && *s < 1.0) {
                    return Err(Error::InvalidParameter(format!("profile exponent {s} outside (0, 1)")));
                }
                *s
            }
            FieldKind::InteriorKink { s, radius } => {
                if !(*s > 0.0 && *s < 1.0) || !(*radius > 0.0 && *radius <= 1.0) {
                    return Err(Error::InvalidParameter(format!("kink parameters s = {s}, r = {radius}")));
                }
                *s
            }
            _ => f64::INFINITY,
        };
        Ok(Self { kind, holder })
    }

    /// Form degree `q`.
    pub fn degree(&self) -> usize {
        match self.kind {
            FieldKind::TopPolynomial => 2,
            _ => 1,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.kind == FieldKind::Zero
    }

    /// Whether `∂̄f = 0` holds by construction.
    pub fn is_closed(&self) -> bool {
        matches!(
            self.kind,
            FieldKind::Zero | FieldKind::BumpSolution { .. } | FieldKind::PolynomialSolution | FieldKind::TopPolynomial
        )
    }

    /// Coefficients at `ζ ∈ Ω̄`.
    pub fn eval(&self, domain: &DefiningDomain, z: &[C64]) -> [C64; 2] {
        let zero = c64(0.0, 0.0);
        match &self.kind {
            FieldKind::Zero => [zero, zero],
            FieldKind::BumpSolution { radius } => {
                let r2 = radius * radius;
                let (b, db) = bump((z[0].norm_sqr() + z[1].norm_sqr()) / r2);
                let zb1 = z[0].conj();
                [zb1 * z[0] * (db / r2) + b, zb1 * z[1] * (db / r2)]
            }
            FieldKind::PolynomialSolution => {
                [2.0 * z[0].conj() * z[1] + z[1].norm_sqr(), z[1] * z[0].conj()]
            }
            FieldKind::Linear => [z[0] + 2.0 * z[1].conj(), zero],
            FieldKind::BoundaryProfile { s } => {
                let d = (1.0 - domain.gauge(z)).max(0.0);
                let osc = 1.0 + 0.25 * (2.0 * PI * z[1].re).cos();
                [c64(d.powf(*s) * osc, 0.0), zero]
            }
            FieldKind::InteriorKink { s, radius } => {
                let (b, _) = bump((z[0].norm_sqr() + z[1].norm_sqr()) / (radius * radius));
                [c64(z[0].re.abs().powf(*s) * b, 0.0), zero]
            }
            FieldKind::TopPolynomial => [z[1] * z[0].conj(), zero],
        }
    }

    /// The manufactured potential `u` with `∂̄u = f`, when there is one.
    pub fn potential(&self, z: &[C64]) -> Option<C64> {
        match &self.kind {
            FieldKind::Zero => Some(c64(0.0, 0.0)),
            FieldKind::BumpSolution { radius } => {
                let (b, _) = bump((z[0].norm_sqr() + z[1].norm_sqr()) / (radius * radius));
                Some(z[0].conj() * b)
            }
            FieldKind::PolynomialSolution => {
                Some(z[0].conj() * z[0].conj() * z[1] + z[1].norm_sqr() * z[0].conj())
            }
            _ => None,
        }
    }

    /// Whether `u − H_q f` is expected to vanish identically: true when the
    /// potential has compact support in `Ω`.
    pub fn potential_is_compact(&self) -> bool {
        matches!(self.kind, FieldKind::Zero | FieldKind::BumpSolution { .. })
    }
}

// --------------------------------------------------------------- extension

/// Largest `t` such that `(1 + t)·bΩ` stays inside the collar `{ϱ < T₁}`.
pub fn collar_gauge_width(domain: &DefiningDomain) -> Result<f64> {
    let t1 = domain.collar_width;
    match &domain.kind {
        ModelKind::Ball { radius } => Ok((1.0 + t1 / (radius * radius)).sqrt() - 1.0),
        // ϱ((1+t)p) ≤ (1+t)^{2m} − 1 on the boundary of |z₁|² + |z₂|^{2m} < 1
        ModelKind::Ellipsoid { m } => Ok((1.0 + t1).powf(1.0 / (2.0 * *m as f64)) - 1.0),
        ModelKind::CustomPolynomial { .. } => Err(Error::Unsupported(
            "the radial collar chart is implemented for the model domains".into(),
        )),
    }
}

/// Largest `|ζ|` over `Ω̄`.
pub fn outer_radius(domain: &DefiningDomain) -> f64 {
    match &domain.kind {
        ModelKind::Ball { radius } => *radius,
        ModelKind::Ellipsoid { m } => {
            // maximise a + b over a + b^m = 1, b = |z₂|²
            let m = *m as f64;
            let b = (1.0 / m).powf(1.0 / (m - 1.0)).min(1.0);
            (1.0 - b.powf(m) + b).sqrt()
        }
        ModelKind::CustomPolynomial { .. } => {
            let mut rng = crate::rng(0x0e7);
            let r = (0..4000)
                .map(|_| 1.0 / domain.gauge(&random_sphere(&mut rng, domain.n)))
                .fold(0.0, f64::max);
            1.05 * r
        }
    }
}

/// Extension settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionConfig {
    /// Reflection order `M`, with rates `b = 1, …, 2M + 1`.
    pub order: usize,
    /// Outer edge of the cutoff in the gauge variable `t = μ − 1`; the
    /// default is `min(0.05, 0.9 t_c)` with `t_c` the collar's gauge width.
    pub cut: Option<f64>,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        Self { order: 4, cut: None }
    }
}

/// Reflection extension in the radial chart `ζ = (1 + t) p`, `p ∈ bΩ`:
/// `Ef((1 + t)p) = χ(t) Σ_j a_j f((1 − b_j t) p)` for `t > 0`.
#[derive(Clone, Debug)]
pub struct Extension {
    pub reflect: ReflectionExt,
    pub cut_lo: f64,
    pub cut_hi: f64,
}

impl Extension {
    pub fn new(domain: &DefiningDomain, cfg: &ExtensionConfig) -> Result<Self> {
        let reflect = ReflectionExt::standard(cfg.order)?;
        let tc = collar_gauge_width(domain)?;
        let cut_hi = cfg.cut.unwrap_or((0.9 * tc).min(0.05));
        let bmax = reflect.b.iter().cloned().fold(0.0, f64::max);
        if !(cut_hi > 0.0 && cut_hi <= tc) {
            return Err(Error::ScaleTooLarge(cut_hi));
        }
        if bmax * cut_hi >= 0.9 {
            return Err(Error::InvalidParameter(format!(
                "reflected points leave the domain: b_max·t = {}",
                bmax * cut_hi
            )));
        }
        Ok(Self {
            reflect,
            cut_lo: 0.5 * cut_hi,
            cut_hi,
        })
    }

    /// `Ef(ζ)`; zero beyond the cutoff.
    pub fn apply(&self, field: &FormField, domain: &DefiningDomain, z: &[C64]) -> [C64; 2] {
        let zero = c64(0.0, 0.0);
        if field.is_zero() {
            return [zero, zero];
        }
        let mu = domain.gauge(z);
        if mu <= 1.0 {
            return field.eval(domain, z);
        }
        let t = mu - 1.0;
        if t >= self.cut_hi {
            return [zero, zero];
        }
        let chi = smooth_cutoff(t, self.cut_lo, self.cut_hi);
        let mut out = [zero, zero];
        for (a, b) in self.reflect.a.iter().zip(&self.reflect.b) {
            let s = (1.0 - b * t) / mu;
            let p = [z[0] * s, z[1] * s];
            let v = field.eval(domain, &p);
            out[0] += v[0] * *a;
            out[1] += v[1] * *a;
        }
        [out[0] * chi, out[1] * chi]
    }
}

// ------------------------------------------------------------- derivatives

/// Fourth-order central difference of a vector-valued function along a real
/// direction `e` (coordinate `axis` of `ℝ⁴ ≅ ℂ²`: `2k` is `Re z_k`, `2k + 1`
/// is `Im z_k`).
fn shift(z: &[C64], axis: usize, h: f64) -> Vec<C64> {
    let mut p = z.to_vec();
    let k = axis / 2;
    if axis % 2 == 0 {
        p[k] += c64(h, 0.0);
    } else {
        p[k] += c64(0.0, h);
    }
    p
}

/// Stencil `(offset, weight)` of the fourth-order first derivative.
const D1: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];

/// `∂/∂z̄_k = ½(∂_x + i ∂_y)` as a list of `(point, weight)` pairs.
pub fn dbar_stencil(z: &[C64], k: usize, h: f64) -> Vec<(Vec<C64>, C64)> {
    let mut out = Vec::with_capacity(8);
    for &(o, w) in &D1 {
        out.push((shift(z, 2 * k, o * h), c64(0.5 * w / h, 0.0)));
        out.push((shift(z, 2 * k + 1, o * h), c64(0.0, 0.5 * w / h)));
    }
    out
}

/// `∂f/∂z̄_k` of a coefficient vector by fourth-order differences.
pub fn dbar_fd(f: impl Fn(&[C64]) -> [C64; 2], z: &[C64], k: usize, h: f64) -> [C64; 2] {
    let mut out = [c64(0.0, 0.0); 2];
    for (p, w) in dbar_stencil(z, k, h) {
        let v = f(&p);
        out[0] += v[0] * w;
        out[1] += v[1] * w;
    }
    out
}

/// `∂̄f` for a `(0, 1)`-form: the `dζ̄₁ ∧ dζ̄₂` coefficient `∂₁̄f₂ − ∂₂̄f₁`.
pub fn dbar_one_form(f: impl Fn(&[C64]) -> [C64; 2], z: &[C64], h: f64) -> C64 {
    dbar_fd(&f, z, 0, h)[1] - dbar_fd(&f, z, 1, h)[0]
}

// ---------------------------------------------------------------- sampling

/// Collar point-set settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollarSampling {
    pub points: usize,
    /// `t = t_cut · U^κ`, so the density in `t` is `∝ t^{1/κ − 1}`; `κ = 1/s`
    /// balances a `t^{s−1}` commutator.
    pub t_power: f64,
    /// Optional concentration of directions around a boundary point.
    pub focus: Option<Focus>,
}

impl Default for CollarSampling {
    fn default() -> Self {
        Self {
            points: 100_000,
            t_power: 1.0,
            focus: None,
        }
    }
}

/// Mixture component drawing directions within the geodesic angle
/// `angle` of `point/|point|`, with the angle uniform (so the density on
/// `S³` grows like `angle^{−2}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Focus {
    pub point: [C64; 2],
    pub weight: f64,
    pub angle: f64,
}

/// Quadrature budgets of one homotopy operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBudget {
    pub bm_points: usize,
    pub collar: CollarSampling,
    pub seed: u64,
}

impl Default for SolverBudget {
    fn default() -> Self {
        Self {
            bm_points: 100_000,
            collar: CollarSampling::default(),
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
struct BmPoint {
    w: [C64; 2],
    weight: f64,
    /// `c[k][j]`: coefficient of output component `k` per unit of input
    /// component `j`, already including the volume factor.
    c: [[C64; 2]; 2],
}

#[derive(Clone, Debug)]
struct CollarPoint {
    zeta: [C64; 2],
    weight: f64,
    data: ZetaData,
}

fn real4(z: &[C64]) -> [f64; 4] {
    [z[0].re, z[0].im, z[1].re, z[1].im]
}

fn from4(x: &[f64; 4]) -> [C64; 2] {
    [c64(x[0], x[1]), c64(x[2], x[3])]
}

fn volume_gens(extra: Option<Gen>) -> Vec<Gen> {
    let mut g = vec![Gen::Dzeta(0), Gen::Dzeta(1), Gen::Dzetab(0), Gen::Dzetab(1)];
    if let Some(e) = extra {
        g.push(e);
    }
    g
}

/// Coefficients of `B_{q−1}(0, w) ∧ Ef` per unit input through the general
/// exterior-algebra route.
fn bm_coefficients(w: &[C64], q: usize) -> Result<[[C64; 2]; 2]> {
    let origin = [c64(0.0, 0.0); 2];
    let b = bm_kernel(&origin, w, q - 1)?;
    let vol = zeta_volume_factor(2);
    let one = c64(1.0, 0.0);
    let mut c = [[c64(0.0, 0.0); 2]; 2];
    if q == 1 {
        for j in 0..2 {
            let e = Form::gen(2, Gen::Dzetab(j), one);
            c[0][j] = b.wedge(&e).coeff(&volume_gens(None)) * vol;
        }
    } else {
        let e = Form::monomial(2, &[Gen::Dzetab(0), Gen::Dzetab(1)], one);
        let bw = b.wedge(&e);
        for k in 0..2 {
            c[k][0] = bw.coeff(&volume_gens(Some(Gen::Dzb(k)))) * vol;
        }
    }
    Ok(c)
}

/// Geodesic angle between unit vectors of `ℝ⁴`.
fn angle4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    d.clamp(-1.0, 1.0).acos()
}

fn unit4(x: &[f64; 4]) -> [f64; 4] {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    [x[0] / n, x[1] / n, x[2] / n, x[3] / n]
}

// ---------------------------------------------------------------- operator

/// Everything fixed across evaluation points: domain, kernels, extension and
/// the two shared point sets.
#[derive(Clone, Debug)]
pub struct Homotopy {
    pub domain: DefiningDomain,
    pub support: Option<Support>,
    pub q: usize,
    pub ext: Extension,
    pub budget: SolverBudget,
    bm: Vec<BmPoint>,
    collar: Vec<CollarPoint>,
}

/// The collar integrand `[∂̄, E] f` of one field on the shared collar points.
#[derive(Clone, Debug)]
pub struct Prepared<'a> {
    pub hom: &'a Homotopy,
    pub field: &'a FormField,
    g: Vec<C64>,
}

/// `Σ_k c_k u(z_k)` with its standard error; `u` has `C(2, q − 1)` components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Combination {
    pub value: Vec<C64>,
    pub stderr: Vec<f64>,
    pub bm: Vec<C64>,
    pub collar: Vec<C64>,
}

/// Default support function: Henkin–Ramírez on balls, the finite-type
/// function with the calibrated constants `(M₁, M₂, M₃) = (1, 8, 2)` otherwise.
pub fn default_support(domain: &DefiningDomain) -> SupportKind {
    match domain.kind {
        ModelKind::Ball { .. } => SupportKind::HenkinRamirez,
        _ => SupportKind::DiederichFornaess(SupportParams::for_domain(domain).with_constants(1.0, 8.0, 2.0)),
    }
}

impl Homotopy {
    pub fn new(
        domain: &DefiningDomain,
        support: SupportKind,
        q: usize,
        ext: &ExtensionConfig,
        budget: &SolverBudget,
    ) -> Result<Self> {
        if domain.n != 2 {
            return Err(Error::Unsupported("the solver works in ℂ²".into()));
        }
        if !(1..=2).contains(&q) {
            return Err(Error::InvalidParameter(format!("form degree q = {q} must be 1 or 2")));
        }
        if budget.bm_points < 2 || (q == 1 && budget.collar.points < 2) {
            return Err(Error::InvalidParameter("quadrature budget exhausted: need at least 2 points".into()));
        }
        if !(budget.collar.t_power >= 1.0) {
            return Err(Error::InvalidParameter("collar t-power must be at least 1".into()));
        }
        let ext = Extension::new(domain, ext)?;
        let bm_radius = 2.0 * outer_radius(domain) * (1.0 + ext.cut_hi);
        let mut rng = crate::rng(budget.seed);
        let nb = budget.bm_points;
        let mut bm = Vec::with_capacity(nb);
        for i in 0..nb {
            let r = bm_radius * (i as f64 + rng.random::<f64>()) / nb as f64;
            let th = random_sphere(&mut rng, 2);
            let w = [th[0] * r, th[1] * r];
            let weight = SPHERE3 * bm_radius * r.powi(3) / nb as f64;
            let c = bm_coefficients(&w, q)?;
            bm.push(BmPoint { w, weight, c });
        }
        let (support, collar) = if q == 1 {
            let s = Support::new(domain, support)?;
            let pts = collar_points(domain, &s, &ext, &budget.collar, &mut rng)?;
            (Some(s), pts)
        } else {
            (None, Vec::new())
        };
        Ok(Self {
            domain: domain.clone(),
            support,
            q,
            ext,
            budget: budget.clone(),
            bm,
            collar,
        })
    }

    /// Number of components of `u`.
    pub fn out_len(&self) -> usize {
        if self.q == 1 {
            1
        } else {
            2
        }
    }

    /// Evaluate the collar integrand for `field`.
    pub fn prepare<'a>(&'a self, field: &'a FormField) -> Result<Prepared<'a>> {
        if field.degree() != self.q {
            return Err(Error::DimensionMismatch {
                expected: self.q,
                got: field.degree(),
            });
        }
        let g = if self.q == 1 && !field.is_zero() {
            self.collar
                .iter()
                .map(|c| self.commutator(field, &c.zeta))
                .collect()
        } else {
            vec![c64(0.0, 0.0); self.collar.len()]
        };
        Ok(Prepared { hom: self, field, g })
    }

    /// `[∂̄, E] f = ∂̄(Ef) − E(∂̄f)` at a point outside `Ω̄`, with difference
    /// steps scaled to the distance from `bΩ` in the gauge variable. The
    /// second term vanishes for `∂̄`-closed fields and is skipped for them.
    pub fn commutator(&self, field: &FormField, zeta: &[C64]) -> C64 {
        let mu = self.domain.gauge(zeta);
        let t = (mu - 1.0).max(T_MIN_REL * self.ext.cut_hi);
        let h = (0.05 * t).min(1e-3);
        let outer = dbar_one_form(|p| self.ext.apply(field, &self.domain, p), zeta, h);
        if field.is_closed() || t >= self.ext.cut_hi {
            return outer;
        }
        let chi = smooth_cutoff(t, self.ext.cut_lo, self.ext.cut_hi);
        let mut inner = c64(0.0, 0.0);
        for (a, b) in self.ext.reflect.a.iter().zip(&self.ext.reflect.b) {
            let sc = (1.0 - b * t) / mu;
            let p = [zeta[0] * sc, zeta[1] * sc];
            let hi = (0.05 * b * t).min(1e-3);
            inner += dbar_one_form(|x| field.eval(&self.domain, x), &p, hi) * *a;
        }
        outer - inner * chi
    }

    /// Smallest distance to `bΩ` accepted for evaluation points.
    pub fn check_point(&self, z: &[C64], floor: f64) -> Result<f64> {
        if self.domain.rho_f(z) >= 0.0 {
            return Err(Error::InvalidParameter("evaluation point outside the domain".into()));
        }
        let d = self.domain.dist_to_boundary(z)?;
        if d < floor {
            return Err(Error::InvalidParameter(format!("dist(z) = {d:.3e} below the floor {floor:.3e}")));
        }
        Ok(d)
    }
}

/// Collar samples start at `t = T_MIN_REL · t_cut`: below that the gauge no
/// longer resolves `t` well enough for the difference quotient of `Ef`. The
/// omitted sliver carries a fraction `T_MIN_REL^s` of a `t^{s−1}` commutator.
pub const T_MIN_REL: f64 = 1e-10;

fn collar_points<R: Rng>(
    domain: &DefiningDomain,
    support: &Support,
    ext: &Extension,
    cs: &CollarSampling,
    rng: &mut R,
) -> Result<Vec<CollarPoint>> {
    let n = cs.points;
    let tcut = ext.cut_hi;
    let kappa = cs.t_power;
    let focus = cs
        .focus
        .as_ref()
        .map(|f| (unit4(&real4(&f.point)), f.weight.clamp(0.0, 1.0), f.angle.clamp(1e-6, PI)));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let u = (i as f64 + rng.random::<f64>()) / n as f64;
        let span = tcut - T_MIN_REL * tcut;
        let t = T_MIN_REL * tcut + span * u.powf(kappa);
        let lag = t - T_MIN_REL * tcut;
        if lag <= 0.0 {
            continue;
        }
        let pdf_t = lag.powf(1.0 / kappa - 1.0) / (kappa * span.powf(1.0 / kappa));
        let th = match focus {
            Some((c, wb, amax)) if rng.random::<f64>() < wb => {
                let alpha = amax * rng.random::<f64>();
                let mut v = [0.0; 4];
                for x in v.iter_mut() {
                    *x = crate::normal(rng);
                }
                let d: f64 = v.iter().zip(&c).map(|(a, b)| a * b).sum();
                for k in 0..4 {
                    v[k] -= d * c[k];
                }
                let v = unit4(&v);
                let mut x = [0.0; 4];
                for k in 0..4 {
                    x[k] = alpha.cos() * c[k] + alpha.sin() * v[k];
                }
                from4(&x)
            }
            _ => {
                let s = random_sphere(rng, 2);
                [s[0], s[1]]
            }
        };
        let pdf_th = match focus {
            Some((c, wb, amax)) => {
                let a = angle4(&real4(&th), &c);
                let foc = if a < amax && a > 0.0 {
                    1.0 / (amax * 4.0 * PI * a.sin().powi(2))
                } else {
                    0.0
                };
                (1.0 - wb) / SPHERE3 + wb * foc
            }
            None => 1.0 / SPHERE3,
        };
        let g = domain.gauge(&th);
        let scale = (1.0 + t) / g;
        let zeta = [th[0] * scale, th[1] * scale];
        let jac = (1.0 + t).powi(3) / g.powi(4);
        let weight = jac / (pdf_t * pdf_th * n as f64);
        out.push(CollarPoint {
            zeta,
            weight,
            data: support.at_zeta(&zeta)?,
        });
    }
    Ok(out)
}

impl Prepared<'_> {
    /// `u(z) = H_q f(z)`.
    pub fn apply(&self, z: &[C64]) -> Result<Combination> {
        self.combine(&[(z.to_vec(), c64(1.0, 0.0))])
    }

    /// `Σ_k c_k u(z_k)` over the shared point sets, with the standard error
    /// of the combined per-sample terms.
    pub fn combine(&self, terms: &[(Vec<C64>, C64)]) -> Result<Combination> {
        let hom = self.hom;
        let m = hom.out_len();
        let zero = c64(0.0, 0.0);
        let mut bm_sum = vec![zero; m];
        let mut bm_sq = vec![0.0; m];
        let nb = hom.bm.len() as f64;
        let outer = 1.0 + hom.ext.cut_hi;
        for p in &hom.bm {
            let mut x = [zero; 2];
            for (z, c) in terms {
                // antithetic pair: the kernel is odd in w, so the pair carries Ef(z + w) − Ef(z − w)
                for (sign, half) in [(1.0, 0.5), (-1.0, -0.5)] {
                    let zeta = [z[0] + p.w[0] * sign, z[1] + p.w[1] * sign];
                    if hom.domain.gauge(&zeta) >= outer {
                        continue;
                    }
                    let e = hom.ext.apply(self.field, &hom.domain, &zeta);
                    for k in 0..m {
                        x[k] += (p.c[k][0] * e[0] + p.c[k][1] * e[1]) * *c * half;
                    }
                }
            }
            for k in 0..m {
                let v = x[k] * p.weight;
                bm_sum[k] += v;
                bm_sq[k] += (v * nb).norm_sqr();
            }
        }
        let mut col_sum = vec![zero; m];
        let mut col_sq = vec![0.0; m];
        let nc = hom.collar.len().max(1) as f64;
        if hom.q == 1 && !self.field.is_zero() {
            for (p, g) in hom.collar.iter().zip(&self.g) {
                if g.norm_sqr() == 0.0 {
                    continue;
                }
                let mut x = zero;
                for (z, c) in terms {
                    let l = p.data.leray(z);
                    let k0 = cf_k0_n2(z, &p.zeta, &l)?;
                    x += k0_wedge_n2(k0, *g) * *c;
                }
                let v = x * p.weight;
                col_sum[0] += v;
                col_sq[0] += (v * nc).norm_sqr();
            }
        }
        // the estimate is the mean of the terms `n·v_i`, whose second moment is `sq / n`
        let var = |sum: C64, sq: f64, n: f64| ((sq / n - sum.norm_sqr()) / (n - 1.0)).max(0.0);
        let mut value = vec![zero; m];
        let mut stderr = vec![0.0; m];
        for k in 0..m {
            value[k] = bm_sum[k] + col_sum[k];
            let vb = var(bm_sum[k], bm_sq[k], nb);
            let vc = if hom.collar.is_empty() { 0.0 } else { var(col_sum[k], col_sq[k], nc) };
            stderr[k] = (vb + vc).sqrt();
        }
        Ok(Combination {
            value,
            stderr,
            bm: bm_sum,
            collar: col_sum,
        })
    }

    /// `∂u/∂z̄_k` by the fourth-order stencil on the shared point sets.
    pub fn dbar_u(&self, z: &[C64], k: usize, h: f64) -> Result<Combination> {
        self.combine(&dbar_stencil(z, k, h))
    }

    /// `∂̄u` in the output basis of `f`: `(∂₁̄u, ∂₂̄u)` for `q = 1`, and the
    /// `dz̄₁ ∧ dz̄₂` coefficient `∂₁̄u₂ − ∂₂̄u₁` (stored first) for `q = 2`.
    pub fn dbar(&self, z: &[C64], h: f64) -> Result<([C64; 2], [f64; 2])> {
        let d0 = self.dbar_u(z, 0, h)?;
        let d1 = self.dbar_u(z, 1, h)?;
        if self.hom.q == 1 {
            Ok(([d0.value[0], d1.value[0]], [d0.stderr[0], d1.stderr[0]]))
        } else {
            let v = d0.value[1] - d1.value[0];
            let se = (d0.stderr[1].powi(2) + d1.stderr[0].powi(2)).sqrt();
            Ok(([v, c64(0.0, 0.0)], [se, 0.0]))
        }
    }
}

/// `H_q f(z)` for one point, building the operator from its parts.
pub fn homotopy_apply(hom: &Homotopy, field: &FormField, z: &[C64], floor: f64) -> Result<Combination> {
    hom.check_point(z, floor)?;
    hom.prepare(field)?.apply(z)
}

// ---------------------------------------------------------------- residual

/// Evaluation points of the residual experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualGrid {
    /// Points per real axis of the cube `[−w, w]⁴`.
    pub per_axis: usize,
    pub half_width: f64,
    /// Extra points at distance `dist_min` below random boundary points.
    pub boundary_points: usize,
    pub dist_min: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ResidualGrid {
    fn default() -> Self {
        Self {
            per_axis: 3,
            half_width: 0.5,
            boundary_points: 12,
            dist_min: 0.05,
            tolerance: 5e-2,
            seed: 11,
        }
    }
}

impl ResidualGrid {
    pub fn points(&self, domain: &DefiningDomain) -> Result<Vec<Vec<C64>>> {
        let mut out = Vec::new();
        let k = self.per_axis;
        let coord = |i: usize| {
            if k == 1 {
                0.0
            } else {
                -self.half_width + 2.0 * self.half_width * i as f64 / (k - 1) as f64
            }
        };
        for i in 0..k.pow(4) {
            let idx = [i % k, (i / k) % k, (i / k / k) % k, i / k / k / k];
            let z = vec![c64(coord(idx[0]), coord(idx[1])), c64(coord(idx[2]), coord(idx[3]))];
            if domain.rho_f(&z) < 0.0 && domain.dist_to_boundary(&z)? >= self.dist_min {
                out.push(z);
            }
        }
        let mut rng = crate::rng(self.seed);
        for _ in 0..self.boundary_points {
            let p = domain.random_boundary_point(&mut rng);
            out.push(approach_point(domain, &p, self.dist_min)?);
        }
        Ok(out)
    }
}

/// One evaluation point of the residual experiment.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualRow {
    pub z: [f64; 4],
    pub dist: f64,
    pub step: f64,
    pub residual: f64,
    pub f_norm: f64,
    pub stderr: f64,
    pub potential_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub domain: String,
    pub field: FieldKind,
    pub q: usize,
    pub points: usize,
    /// `max |∂̄f|` over the grid (the closedness check).
    pub closed_defect: f64,
    pub sup_residual: f64,
    pub sup_f: f64,
    pub sup_relative: f64,
    pub l2_relative: f64,
    /// Largest standard error of a `∂̄u` component.
    pub max_stderr: f64,
    /// `max |u − u_exact| / max |u_exact|` when `u − H_q f ≡ 0` is expected.
    pub potential_relative: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub rows: Vec<ResidualRow>,
}

/// Tolerance of the `∂̄`-closedness check on inputs.
pub const CLOSED_TOLERANCE: f64 = 1e-6;

/// Difference step: `(relative stderr)^{1/2}` times the inradius, kept
/// between `10⁻³` and a quarter of the distance to `bΩ`.
pub fn fd_step(rel_stderr: f64, inradius: f64, dist: f64) -> f64 {
    (rel_stderr.max(0.0).sqrt() * inradius).clamp(1e-3, 0.25 * dist)
}

/// Solve `∂̄u = f` with `u = H_q f` and measure the residual on a grid.
pub fn dbar_residual(hom: &Homotopy, field: &FormField, grid: &ResidualGrid) -> Result<ResidualReport> {
    let pts = grid.points(&hom.domain)?;
    let prep = hom.prepare(field)?;
    let dom = &hom.domain;
    let mut closed = 0.0f64;
    if field.degree() == 1 {
        for z in &pts {
            closed = closed.max(dbar_one_form(|p| field.eval(dom, p), z, 1e-3).norm());
        }
    }
    let sup_f_grid = pts
        .iter()
        .map(|z| {
            let v = field.eval(dom, z);
            v[0].norm().max(v[1].norm())
        })
        .fold(0.0, f64::max);
    if closed > CLOSED_TOLERANCE * sup_f_grid.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "input is not ∂̄-closed: |∂̄f| = {closed:.3e}"
        )));
    }
    let inr = dom.inradius();
    let mut rows = Vec::with_capacity(pts.len());
    let (mut num2, mut den2) = (0.0, 0.0);
    let (mut pot_err, mut pot_max) = (0.0f64, 0.0f64);
    let mut max_se = 0.0f64;
    for z in &pts {
        let dist = dom.dist_to_boundary(z)?;
        let u = prep.apply(z)?;
        let scale = u.value.iter().map(|c| c.norm()).fold(sup_f_grid * inr, f64::max);
        let rel = u.stderr.iter().cloned().fold(0.0, f64::max) / scale.max(1e-300);
        let h = fd_step(rel, inr, dist);
        let (du, se) = prep.dbar(z, h)?;
        let f = field.eval(dom, z);
        let comps = if hom.q == 1 { 2 } else { 1 };
        let mut r2 = 0.0;
        let mut f2 = 0.0;
        for k in 0..comps {
            r2 += (du[k] - f[k]).norm_sqr();
            f2 += f[k].norm_sqr();
        }
        num2 += r2;
        den2 += f2;
        max_se = max_se.max(se[0]).max(se[1]);
        let potential_error = if field.potential_is_compact() && hom.q == 1 {
            field.potential(z).map(|p| {
                pot_max = pot_max.max(p.norm());
                let e = (u.value[0] - p).norm();
                pot_err = pot_err.max(e);
                e
            })
        } else {
            None
        };
        rows.push(ResidualRow {
            z: real4(z),
            dist,
            step: h,
            residual: r2.sqrt(),
            f_norm: f2.sqrt(),
            stderr: se[0].max(se[1]),
            potential_error,
        });
    }
    let sup_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let sup_f = rows.iter().map(|r| r.f_norm).fold(0.0, f64::max);
    let (sup_relative, l2_relative) = if sup_f > 0.0 {
        (sup_residual / sup_f, (num2 / den2).sqrt())
    } else {
        (sup_residual, num2.sqrt())
    };
    let potential_relative = if rows.iter().any(|r| r.potential_error.is_some()) {
        Some(if pot_max > 0.0 { pot_err / pot_max } else { pot_err })
    } else {
        None
    };
    Ok(ResidualReport {
        domain: dom.name(),
        field: field.kind.clone(),
        q: hom.q,
        points: rows.len(),
        closed_defect: closed,
        sup_residual,
        sup_f,
        sup_relative,
        l2_relative,
        max_stderr: max_se,
        potential_relative,
        tolerance: grid.tolerance,
        pass: sup_relative <= grid.tolerance,
        rows,
    })
}

// -------------------------------------------------------------- regularity

/// Dyadic probe of the regularity experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularityConfig {
    pub s: f64,
    /// Separations `δ = 2^{−j}` for these `j`.
    pub levels: Vec<i32>,
    pub tolerance: f64,
    /// Levels whose second difference is below `noise_ratio` standard
    /// errors are dropped from the fit and reported.
    pub noise_ratio: f64,
    pub budget: SolverBudget,
    /// Separations and budget of the Bochner–Martinelli gain probe.
    pub bm_levels: Vec<i32>,
    pub bm_budget: SolverBudget,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        Self {
            s: 0.3,
            levels: (3..=8).collect(),
            tolerance: 0.05,
            noise_ratio: 3.0,
            budget: SolverBudget {
                bm_points: 400_000,
                collar: CollarSampling {
                    points: 400_000,
                    t_power: 1.0,
                    focus: None,
                },
                seed: 21,
            },
            bm_levels: (4..=10).collect(),
            bm_budget: SolverBudget {
                bm_points: 200_000,
                collar: CollarSampling {
                    points: 1000,
                    ..Default::default()
                },
                seed: 5,
            },
        }
    }
}

/// Second differences of `u` at one separation.
#[derive(Clone, Debug, Serialize)]
pub struct ModulusRow {
    pub delta: f64,
    pub normal: f64,
    pub normal_stderr: f64,
    pub tangential: f64,
    pub tangential_stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub domain: String,
    pub s: f64,
    pub gain: f64,
    pub target: f64,
    pub rows: Vec<ModulusRow>,
    pub fit_normal: Option<ExponentFit>,
    pub fit_tangential: Option<ExponentFit>,
    /// Smaller of the two fitted exponents (the Hölder exponent of `u`).
    pub exponent: f64,
    /// Smallest separation kept by the noise filter.
    pub noise_cutoff: Option<f64>,
    pub pass: bool,
}

/// Boundary point where the probe is placed: `(1, 0)` scaled onto `bΩ`. On
/// the complex ellipsoids this is where the complex tangent direction `z₂`
/// has contact of the full type.
pub fn probe_point(domain: &DefiningDomain) -> [C64; 2] {
    let p = domain.boundary_point(&[c64(1.0, 0.0), c64(0.0, 0.0)]);
    [p[0], p[1]]
}

/// Fitted exponents of second differences `|Δ²_{δv} u(c_δ)|` at the base
/// points `c_δ` at distance `2δ` below `p₀`, along the outward normal and
/// the complex tangent `i·J ν`.
pub fn modulus_rows(prep: &Prepared, p0: &[C64], levels: &[i32]) -> Result<Vec<ModulusRow>> {
    let dom = &prep.hom.domain;
    let nu = dom.theta1(p0)?;
    let tau = [-nu[1].conj(), nu[0].conj()];
    let one = c64(1.0, 0.0);
    let mut rows = Vec::new();
    for &j in levels {
        let delta = 2f64.powi(-j);
        let c = approach_point(dom, p0, 2.0 * delta)?;
        let second = |v: &[C64]| {
            let plus: Vec<C64> = c.iter().zip(v).map(|(a, b)| a + b * delta).collect();
            let minus: Vec<C64> = c.iter().zip(v).map(|(a, b)| a - b * delta).collect();
            prep.combine(&[(plus, one), (c.clone(), c64(-2.0, 0.0)), (minus, one)])
        };
        let n = second(&nu)?;
        let t = second(&tau)?;
        rows.push(ModulusRow {
            delta,
            normal: n.value[0].norm(),
            normal_stderr: n.stderr[0],
            tangential: t.value[0].norm(),
            tangential_stderr: t.stderr[0],
        });
    }
    Ok(rows)
}

fn fit_kept(series: &[(f64, f64, f64)], ratio: f64) -> (Option<ExponentFit>, Option<f64>) {
    let kept: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, v, se)| *v > ratio * se)
        .map(|(d, v, _)| (*d, *v))
        .collect();
    let cutoff = kept.iter().map(|p| p.0).fold(None, |m: Option<f64>, d| Some(m.map_or(d, |x| x.min(d))));
    (fit_exponent(&kept).ok(), cutoff)
}

/// Fit the Hölder exponent of `u = H₁f` near the probe point for the
/// boundary profile `δ^s`, and compare with `s + 1/m₁`.
pub fn regularity_gain(domain: &DefiningDomain, support: SupportKind, cfg: &RegularityConfig) -> Result<RegularityReport> {
    let field = FormField::new(FieldKind::BoundaryProfile { s: cfg.s })?;
    regularity_probe(domain, support, &field, cfg)
}

/// The dyadic modulus fit for any `(0, 1)`-field; the comparison target is
/// `min(holder, 1) + 1/m₁`.
pub fn regularity_probe(
    domain: &DefiningDomain,
    support: SupportKind,
    field: &FormField,
    cfg: &RegularityConfig,
) -> Result<RegularityReport> {
    let s = field.holder.min(1.0);
    let p0 = probe_point(domain);
    let mut budget = cfg.budget.clone();
    budget.collar.t_power = budget.collar.t_power.max(1.0 / s);
    if budget.collar.focus.is_none() {
        budget.collar.focus = Some(Focus {
            point: p0,
            weight: 0.6,
            angle: 0.6,
        });
    }
    // order 1 keeps Σ|a_j| small; the probe is only C^s anyway
    let ext = ExtensionConfig { order: 1, cut: None };
    let hom = Homotopy::new(domain, support, 1, &ext, &budget)?;
    let prep = hom.prepare(field)?;
    let rows = modulus_rows(&prep, &p0, &cfg.levels)?;
    let gain = 1.0 / type_of(domain, 1) as f64;
    let target = s + gain;
    let normal: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.delta, r.normal, r.normal_stderr)).collect();
    let tangential: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.delta, r.tangential, r.tangential_stderr)).collect();
    let (fit_normal, cut_n) = fit_kept(&normal, cfg.noise_ratio);
    let (fit_tangential, cut_t) = fit_kept(&tangential, cfg.noise_ratio);
    let exponent = match (&fit_normal, &fit_tangential) {
        (Some(a), Some(b)) => a.slope.min(b.slope),
        (Some(a), None) => a.slope,
        (None, Some(b)) => b.slope,
        (None, None) => f64::NAN,
    };
    let noise_cutoff = match (cut_n, cut_t) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    Ok(RegularityReport {
        domain: domain.name(),
        s,
        gain,
        target,
        rows,
        fit_normal,
        fit_tangential,
        exponent,
        noise_cutoff,
        pass: exponent >= target - cfg.tolerance,
    })
}

/// Gain of the Bochner–Martinelli term on an interior kink.
#[derive(Clone, Debug, Serialize)]
pub struct BmGainRow {
    pub delta: f64,
    pub input: f64,
    pub output: f64,
    pub output_stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BmGainReport {
    pub s: f64,
    pub rows: Vec<BmGainRow>,
    pub input_exponent: f64,
    pub output_exponent: f64,
    pub gain: f64,
    pub pass: bool,
}

/// Smallest accepted gain of the Bochner–Martinelli term.
pub const BM_GAIN_FLOOR: f64 = 0.9;

/// Second differences straddling the kink hyperplane `Re ζ₁ = 0` (centred at
/// `Re z₁ = δ/2`) of the input and of `∫ B₀ ∧ f`; the collar term vanishes
/// for interior support.
/// Levels whose output is below three standard errors are left out of the fit.
pub fn bm_gain(s: f64, levels: &[i32], budget: &SolverBudget) -> Result<BmGainReport> {
    let domain = DefiningDomain::ball(2, 1.0);
    let field = FormField::new(FieldKind::InteriorKink { s, radius: 0.5 })?;
    let hom = Homotopy::new(&domain, SupportKind::HenkinRamirez, 1, &ExtensionConfig::default(), budget)?;
    let prep = hom.prepare(&field)?;
    let one = c64(1.0, 0.0);
    let fv = |p: &[C64]| field.eval(&domain, p)[0];
    let mut rows = Vec::new();
    for &j in levels {
        let d = 2f64.powi(-j);
        // off-centre by δ/2: the leading term of the output is odd across the kink
        let c = [c64(0.5 * d, 0.05), c64(0.1, 0.0)];
        let plus = vec![c[0] + d, c[1]];
        let minus = vec![c[0] - d, c[1]];
        let input = (fv(&plus) - 2.0 * fv(&c) + fv(&minus)).norm();
        let u = prep.combine(&[(plus, one), (c.to_vec(), c64(-2.0, 0.0)), (minus, one)])?;
        rows.push(BmGainRow {
            delta: d,
            input,
            output: u.value[0].norm(),
            output_stderr: u.stderr[0],
        });
    }
    let fin: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta, r.input)).collect();
    let fout: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.delta, r.output, r.output_stderr)).collect();
    let a = fit_exponent(&fin)?.slope;
    let b = fit_kept(&fout, 3.0).0.map_or(f64::NAN, |f| f.slope);
    Ok(BmGainReport {
        s,
        rows,
        input_exponent: a,
        output_exponent: b,
        gain: b - a,
        pass: b - a >= BM_GAIN_FLOOR,
    })
}

// ------------------------------------------------------------- consistency

/// The collar integral assembled unsplit and as
/// `K^⊤ ∧ [∂̄,E]f + K^⊥ ∧ ([∂̄,E]f)^⊤`, through the exterior-algebra route, on
/// the shared collar points.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub unsplit: C64,
    pub split: C64,
    /// The same integral through the closed-form `n = 2` kernel.
    pub closed_form: C64,
    pub stderr: f64,
    pub max_bot: f64,
    pub difference: f64,
}

pub fn decomposition_consistency(prep: &Prepared, z: &[C64], max_points: usize) -> Result<DecompositionReport> {
    let hom = prep.hom;
    let support = hom
        .support
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("the decomposition needs q = 1".into()))?;
    let vol = zeta_volume_factor(2);
    let gens = volume_gens(None);
    let zero = c64(0.0, 0.0);
    let (mut a, mut b, mut c) = (zero, zero, zero);
    let mut sq = 0.0;
    let mut max_bot = 0.0f64;
    // collar points are stratified in t, so subsample with a stride
    let stride = hom.collar.len().div_ceil(max_points.max(1)).max(1);
    let n = hom.collar.len().div_ceil(stride);
    let rescale = stride as f64;
    for (p, g) in hom.collar.iter().zip(&prep.g).step_by(stride) {
        let k = cf_kernel(support, z, &p.zeta, 0)?;
        let (top, bot) = kernel_project(&k, &hom.domain, &p.zeta)?;
        let gf = Form::monomial(2, &[Gen::Dzetab(0), Gen::Dzetab(1)], *g);
        let theta = hom.domain.theta1(&p.zeta)?;
        let gtop = gf.project_top_with(Var::Zeta, &theta);
        let w = p.weight * rescale;
        let un = k.wedge(&gf).coeff(&gens) * vol * w;
        let sp = (top.wedge(&gf).add(&bot.wedge(&gtop))?).coeff(&gens) * vol * w;
        let l = p.data.leray(z);
        let cf = k0_wedge_n2(cf_k0_n2(z, &p.zeta, &l)?, *g) * w;
        a += un;
        b += sp;
        c += cf;
        sq += (un * n as f64).norm_sqr();
        max_bot = max_bot.max(bot.max_abs());
    }
    let nf = n as f64;
    let stderr = ((sq / nf - a.norm_sqr()) / (nf - 1.0)).max(0.0).sqrt();
    Ok(DecompositionReport {
        unsplit: a,
        split: b,
        closed_form: c,
        stderr,
        max_bot,
        difference: (a - b).norm().max((a - c).norm()),
    })
}

/// The collar integral along rays, once directly (`k = 0`) and once after
/// integrating by parts in `t` against the antiderivative
/// `A(t) = ∫_0^t [∂̄,E]f` (`k = 1`):
/// `∫ K J g dt = K J A |_{t_cut} − ∫ ∂_t(K J) A dt`.
#[derive(Clone, Debug, Serialize)]
pub struct IbpReport {
    pub direct: C64,
    pub by_parts: C64,
    pub stderr: f64,
    pub difference: f64,
}

pub fn ibp_consistency(hom: &Homotopy, field: &FormField, z: &[C64], rays: usize, nodes: usize, seed: u64) -> Result<IbpReport> {
    let support = hom
        .support
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("integration by parts needs q = 1".into()))?;
    if nodes < 4 || rays < 2 {
        return Err(Error::InvalidParameter("need at least 4 nodes and 2 rays".into()));
    }
    let mut rng = crate::rng(seed);
    let tc = hom.ext.cut_hi;
    let ht = tc / nodes as f64;
    let zero = c64(0.0, 0.0);
    let (mut d_sum, mut p_sum, mut sq) = (zero, zero, 0.0);
    for _ in 0..rays {
        let th = random_sphere(&mut rng, 2);
        let gth = hom.domain.gauge(&th);
        let kj = |t: f64| -> Result<C64> {
            let sc = (1.0 + t) / gth;
            let zeta = [th[0] * sc, th[1] * sc];
            let l = support.leray(z, &zeta)?;
            let jac = (1.0 + t).powi(3) / gth.powi(4);
            Ok(k0_wedge_n2(cf_k0_n2(z, &zeta, &l)?, c64(1.0, 0.0)) * jac)
        };
        let gt = |t: f64| {
            let sc = (1.0 + t) / gth;
            hom.commutator(field, &[th[0] * sc, th[1] * sc])
        };
        // trapezoid nodes t_i = i·ht, i = 0..nodes; g(0) is the one-sided limit
        let ts: Vec<f64> = (0..=nodes).map(|i| (i as f64 * ht).max(1e-9 * tc)).collect();
        let gs: Vec<C64> = ts.iter().map(|&t| gt(t)).collect();
        let ks: Vec<C64> = ts.iter().map(|&t| kj(t)).collect::<Result<_>>()?;
        let mut a = vec![zero; nodes + 1];
        for i in 1..=nodes {
            a[i] = a[i - 1] + (gs[i] + gs[i - 1]) * (0.5 * ht);
        }
        let trap = |v: &dyn Fn(usize) -> C64| {
            let mut s = (v(0) + v(nodes)) * 0.5;
            for i in 1..nodes {
                s += v(i);
            }
            s * ht
        };
        let direct = trap(&|i| ks[i] * gs[i]);
        let dk = |i: usize| {
            if i == 0 {
                (ks[1] - ks[0]) / ht
            } else if i == nodes {
                (ks[nodes] - ks[nodes - 1]) / ht
            } else {
                (ks[i + 1] - ks[i - 1]) / (2.0 * ht)
            }
        };
        let parts = ks[nodes] * a[nodes] - trap(&|i| dk(i) * a[i]);
        d_sum += direct * SPHERE3;
        p_sum += parts * SPHERE3;
        sq += (direct * SPHERE3).norm_sqr();
    }
    let n = rays as f64;
    let direct = d_sum / n;
    let by_parts = p_sum / n;
    let stderr = ((sq / n - direct.norm_sqr()) / (n - 1.0)).max(0.0).sqrt();
    Ok(IbpReport {
        direct,
        by_parts,
        stderr,
        difference: (direct - by_parts).norm(),
    })
}

// ------------------------------------------------------------------ config

/// Budgets of the kernel-side experiments run by the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelBudgets {
    pub form_cases: usize,
    pub tau_levels: Vec<i32>,
    pub calibration_pairs: usize,
    pub margin_pairs: usize,
    pub leray_pairs: usize,
    pub kernel_pairs: usize,
    pub shell_points: usize,
    /// Shell scales `ε = 2^{−j}` for these `j`.
    pub shell_levels: Vec<i32>,
    pub weighted_points: usize,
    pub weighted_dists: Vec<f64>,
    pub schur_cases: usize,
}

impl Default for KernelBudgets {
    fn default() -> Self {
        Self {
            form_cases: 1000,
            tau_levels: (4..=12).collect(),
            calibration_pairs: 10_000,
            margin_pairs: 100_000,
            leray_pairs: 10_000,
            kernel_pairs: 200,
            shell_points: 4000,
            shell_levels: (4..=10).collect(),
            weighted_points: 4000,
            weighted_dists: vec![0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625],
            schur_cases: 100,
        }
    }
}

/// Littlewood–Paley suite settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpConfig {
    pub grid_step_log2: i32,
    pub moment_orders: Vec<usize>,
    pub heideman_span: i32,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            grid_step_log2: 12,
            moment_orders: vec![2, 4],
            heideman_span: 6,
        }
    }
}

/// One experiment configuration, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: ModelKind,
    #[serde(default = "one")]
    pub q: usize,
    /// Defaults to [`default_support`].
    #[serde(default)]
    pub support: Option<SupportKind>,
    /// Input of `solve-residual`; defaults to [`ExperimentConfig::default_field`].
    #[serde(default)]
    pub field: Option<FieldKind>,
    #[serde(default)]
    pub extension: ExtensionConfig,
    #[serde(default)]
    pub solver: SolverBudget,
    #[serde(default)]
    pub residual: ResidualGrid,
    #[serde(default)]
    pub regularity: RegularityConfig,
    #[serde(default)]
    pub kernels: KernelBudgets,
    #[serde(default)]
    pub lp: LpConfig,
    /// Evaluation points closer than `dist_floor·inradius` to `bΩ` are refused.
    #[serde(default = "dist_floor")]
    pub dist_floor: f64,
    #[serde(default = "output_dir")]
    pub output: PathBuf,
    #[serde(default)]
    pub svg: bool,
    #[serde(default = "seed")]
    pub seed: u64,
}

fn one() -> usize {
    1
}
fn dist_floor() -> f64 {
    0.02
}
fn output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn seed() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn for_domain(domain: ModelKind) -> Self {
        Self {
            domain,
            q: 1,
            support: None,
            field: None,
            extension: ExtensionConfig::default(),
            solver: SolverBudget::default(),
            residual: ResidualGrid::default(),
            regularity: RegularityConfig::default(),
            kernels: KernelBudgets::default(),
            lp: LpConfig::default(),
            dist_floor: dist_floor(),
            output: output_dir(),
            svg: false,
            seed: seed(),
        }
    }

    pub fn defining_domain(&self) -> Result<DefiningDomain> {
        DefiningDomain::from_kind(&self.domain)
    }

    pub fn support_kind(&self, domain: &DefiningDomain) -> SupportKind {
        self.support.unwrap_or_else(|| default_support(domain))
    }

    /// The manufactured bump solution for `q = 1`, the top-degree polynomial for `q = 2`.
    pub fn default_field(q: usize) -> FieldKind {
        if q == 2 {
            FieldKind::TopPolynomial
        } else {
            FieldKind::BumpSolution { radius: 0.5 }
        }
    }

    pub fn form_field(&self) -> Result<FormField> {
        FormField::new(self.field.clone().unwrap_or_else(|| Self::default_field(self.q)))
    }

    /// Cross-field checks beyond what the schema enforces.
    pub fn validate(&self) -> Result<()> {
        let d = self.defining_domain()?;
        if d.n != 2 {
            return Err(Error::Unsupported("experiments run in ℂ²".into()));
        }
        if !(1..=2).contains(&self.q) {
            return Err(Error::InvalidParameter(format!("q = {} must be 1 or 2", self.q)));
        }
        if self.q == 2 && !matches!(d.kind, ModelKind::Ball { .. }) {
            return Err(Error::Unsupported("q = 2 solves run on the ball only".into()));
        }
        if let Some(SupportKind::HenkinRamirez) = self.support {
            if !matches!(d.kind, ModelKind::Ball { .. }) {
                return Err(Error::InvalidParameter("support.kind = henkin_ramirez needs a ball".into()));
            }
        }
        if !(self.dist_floor > 0.0 && self.dist_floor < 0.5) {
            return Err(Error::InvalidParameter("dist_floor must lie in (0, 0.5)".into()));
        }
        if self.residual.dist_min < self.dist_floor * d.inradius() {
            return Err(Error::InvalidParameter("residual.dist_min is below dist_floor".into()));
        }
        if !(self.regularity.s > 0.0 && self.regularity.s < 1.0) {
            return Err(Error::InvalidParameter("regularity.s must lie in (0, 1)".into()));
        }
        let field = self.form_field()?;
        if field.degree() != self.q {
            return Err(Error::InvalidParameter(format!(
                "field has degree {} but q = {}",
                field.degree(),
                self.q
            )));
        }
        Extension::new(&d, &self.extension)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::bm_wedge_n2;

    fn ball() -> DefiningDomain {
        DefiningDomain::ball(2, 1.0)
    }

    fn small(seed: u64) -> SolverBudget {
        SolverBudget {
            bm_points: 4000,
            collar: CollarSampling {
                points: 4000,
                ..Default::default()
            },
            seed,
        }
    }

    #[test]
    fn form_route_matches_closed_form() {
        let w = [c64(0.3, -0.1), c64(0.2, 0.4)];
        let c = bm_coefficients(&w, 1).unwrap();
        let origin = [c64(0.0, 0.0); 2];
        for j in 0..2 {
            let mut f = [c64(0.0, 0.0); 2];
            f[j] = c64(1.0, 0.0);
            let direct = bm_wedge_n2(&origin, &w, f).unwrap();
            assert!((direct - c[0][j]).norm() < 1e-12 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn zero_field_gives_zero() {
        let hom = Homotopy::new(&ball(), SupportKind::HenkinRamirez, 1, &ExtensionConfig::default(), &small(1)).unwrap();
        let f = FormField::new(FieldKind::Zero).unwrap();
        let u = homotopy_apply(&hom, &f, &[c64(0.2, 0.1), c64(-0.3, 0.0)], 0.02).unwrap();
        assert_eq!(u.value[0], c64(0.0, 0.0));
        assert_eq!(u.stderr[0], 0.0);
    }

    #[test]
    fn extension_reproduces_low_degree_polynomials() {
        let d = ball();
        let ext = Extension::new(&d, &ExtensionConfig::default()).unwrap();
        let f = FormField::new(FieldKind::PolynomialSolution).unwrap();
        let z = [c64(0.7, 0.5), c64(0.45, -0.3)];
        let mu = d.gauge(&z);
        assert!(mu > 1.0 && mu - 1.0 < ext.cut_lo);
        let e = ext.apply(&f, &d, &z);
        let v = f.eval(&d, &z);
        for k in 0..2 {
            assert!((e[k] - v[k]).norm() < 1e-8, "{:?} vs {:?}", e[k], v[k]);
        }
    }

    #[test]
    fn rejects_points_near_the_boundary() {
        let hom = Homotopy::new(&ball(), SupportKind::HenkinRamirez, 1, &ExtensionConfig::default(), &small(2)).unwrap();
        let f = FormField::new(FieldKind::Linear).unwrap();
        assert!(homotopy_apply(&hom, &f, &[c64(0.995, 0.0), c64(0.0, 0.0)], 0.02).is_err());
        assert!(homotopy_apply(&hom, &f, &[c64(1.5, 0.0), c64(0.0, 0.0)], 0.02).is_err());
    }

    #[test]
    fn bump_potential_is_reproduced() {
        let hom = Homotopy::new(&ball(), SupportKind::HenkinRamirez, 1, &ExtensionConfig::default(), &small(3)).unwrap();
        let f = FormField::new(FieldKind::BumpSolution { radius: 0.5 }).unwrap();
        let prep = hom.prepare(&f).unwrap();
        let z = [c64(0.1, 0.05), c64(-0.1, 0.1)];
        let u = prep.apply(&z).unwrap();
        let exact = f.potential(&z).unwrap();
        assert!((u.value[0] - exact).norm() < 5.0 * u.stderr[0] + 1e-3, "{:?} vs {exact:?} ± {}", u.value[0], u.stderr[0]);
    }

    #[test]
    fn config_roundtrip_and_validation() {
        let c = ExperimentConfig::for_domain(ModelKind::Ellipsoid { m: 2 });
        let s = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        back.validate().unwrap();
        let minimal: ExperimentConfig = serde_json::from_str(r#"{"domain": {"kind": "ball", "radius": 1.0}}"#).unwrap();
        minimal.validate().unwrap();
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"domain": {"kind": "ball", "radius": 1.0}, "bogus": 1}"#).is_err());
        let mut bad = minimal.clone();
        bad.support = Some(SupportKind::HenkinRamirez);
        bad.domain = ModelKind::Ellipsoid { m: 2 };
        assert!(bad.validate().is_err());
        let mut top = minimal.clone();
        top.q = 2;
        top.validate().unwrap();
        top.q = 1;
        top.field = Some(FieldKind::TopPolynomial);
        assert!(top.validate().is_err());
    }
}
