//! Bochner–Martinelli and Cauchy–Fantappiè kernels as forms on `ℂⁿ × ℂⁿ`.
//!
//! With `b = Σ (ζ̄_j − z̄_j) dζ_j`, `∂̄b = Σ (dζ̄_j − dz̄_j) ∧ dζ_j`,
//! `Q̂ = Σ Q̂_j dζ_j` and `∂̄Q̂ = Σ_{j,k} ∂Q̂_j/∂ζ̄_k dζ̄_k ∧ dζ_j` (the Leray
//! map is holomorphic in `z`, so no `dz̄` terms occur):
//!
//! - `B = b ∧ (∂̄b)^{n−1} / ((2πi)ⁿ |z − ζ|^{2n})`,
//! - `K = (2πi)^{−n} b ∧ Q̂ ∧ Σ_{k=1}^{n−1} (−1)^k (∂̄b)^{n−1−k} ∧ (∂̄Q̂)^{k−1} / (|z − ζ|^{2(n−k)} Ŝ^k)`.
//!
//! `B_q` and `K_q` are the components of antiholomorphic degree `q` in `z`;
//! `K_q` has degree `(n, n − 2 − q)` in `ζ`. For `n = 2` only `K₀` survives
//! and it carries no `dζ̄`, so `K₀^⊥ ≡ 0` and `K₀^⊤ = K₀`.
//!
//! Derivatives are taken after the ⊤/⊥ projection, with the frame evaluated
//! at the perturbed `ζ`: the analytic scheme pushes 8-variable derivative jets
//! through the projection itself, the finite-difference scheme re-projects at
//! every stencil point.

use crate::cforms::{zeta_volume_factor, Form, Gen, Var};
use crate::domains::DefiningDomain;
use crate::error::{Error, Result};
use crate::scalar::{c64, Jet2, Scalar, C64};
use crate::support_leray::{LeraySample, Support};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Pairs closer than this are rejected instead of regularised.
pub const COINCIDENCE_RADIUS: f64 = 1e-8;

/// `(2πi)^{−n}`.
pub fn two_pi_i_inv(n: usize) -> C64 {
    c64(0.0, 2.0 * PI).powu(n as u32).inv()
}

fn check_pair(z: &[C64], zeta: &[C64]) -> Result<f64> {
    if z.len() != zeta.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: zeta.len(),
        });
    }
    let r2: f64 = z.iter().zip(zeta).map(|(a, b)| (a - b).norm_sqr()).sum();
    if r2.sqrt() < COINCIDENCE_RADIUS {
        return Err(Error::Coincident);
    }
    Ok(r2)
}

fn values<T: Scalar>(v: &[T]) -> Vec<C64> {
    v.iter().map(|c| c.value()).collect()
}

/// `b = Σ (ζ̄_j − z̄_j) dζ_j`.
pub fn b_form<T: Scalar>(z: &[T], zeta: &[T]) -> Form<T> {
    let v: Vec<T> = z.iter().zip(zeta).map(|(&a, &b)| (b - a).conj()).collect();
    Form::one_form(z.len(), Gen::Dzeta, &v)
}

/// `∂̄b = Σ (dζ̄_j − dz̄_j) ∧ dζ_j`.
pub fn dbar_b_form<T: Scalar>(n: usize) -> Form<T> {
    let mut f = Form::zero(n);
    for j in 0..n {
        let a = Form::gen(n, Gen::Dzetab(j), T::one()).sub(&Form::gen(n, Gen::Dzb(j), T::one()));
        let t = a.expect("same dimension").wedge(&Form::gen(n, Gen::Dzeta(j), T::one()));
        f = f.add(&t).expect("same dimension");
    }
    f
}

fn dist2<T: Scalar>(z: &[T], zeta: &[T]) -> T {
    let mut r = T::zero();
    for (&a, &b) in z.iter().zip(zeta) {
        r += (a - b).abs2();
    }
    r
}

/// Full Bochner–Martinelli form (all `z`-degrees).
pub fn bm_kernel_full<T: Scalar>(z: &[T], zeta: &[T]) -> Result<Form<T>> {
    let n = z.len();
    check_pair(&values(z), &values(zeta))?;
    let r2 = dist2(z, zeta);
    let coef = r2.ipow(n as u32).recip().mulc(two_pi_i_inv(n));
    Ok(b_form(z, zeta)
        .wedge(&dbar_b_form::<T>(n).wedge_power(n - 1))
        .scale(coef))
}

/// `B_q`: the component of `B` with antiholomorphic degree `q` in `z`.
pub fn bm_kernel<T: Scalar>(z: &[T], zeta: &[T], q: usize) -> Result<Form<T>> {
    Ok(bm_kernel_full(z, zeta)?.z_antidegree_part(q))
}

/// Leray data needed by the Cauchy–Fantappiè kernel.
pub struct LerayData<'a, T: Scalar> {
    pub sample: &'a LeraySample<T>,
    /// `∂Q̂_j/∂ζ̄_k` as `[j][k]`; required only for `n ≥ 3`.
    pub dbar_q: Option<&'a [Vec<T>]>,
}

/// Smallest `|Ŝ|` accepted by the kernel.
pub const SUPPORT_FLOOR: f64 = 1e-14;

/// Full Cauchy–Fantappiè form from precomputed Leray data.
pub fn cf_kernel_from<T: Scalar>(z: &[T], zeta: &[T], data: &LerayData<T>) -> Result<Form<T>> {
    let n = z.len();
    check_pair(&values(z), &values(zeta))?;
    let s = data.sample.s;
    if s.value().norm() < SUPPORT_FLOOR {
        return Err(Error::VanishingSupport(s.value().norm()));
    }
    let r2 = dist2(z, zeta);
    let bq = b_form(z, zeta).wedge(&Form::one_form(n, Gen::Dzeta, &data.sample.q));
    let dbb = dbar_b_form::<T>(n);
    let dbq = if n >= 3 {
        let d = data
            .dbar_q
            .ok_or_else(|| Error::InvalidParameter("∂̄Q̂ is required for n ≥ 3".into()))?;
        let mut f = Form::zero(n);
        for (j, row) in d.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                let t = Form::monomial(n, &[Gen::Dzetab(k), Gen::Dzeta(j)], c);
                f = f.add(&t)?;
            }
        }
        Some(f)
    } else {
        None
    };
    let mut sum = Form::zero(n);
    for k in 1..n {
        let mut t = dbb.wedge_power(n - 1 - k);
        if k >= 2 {
            t = t.wedge(&dbq.as_ref().expect("n ≥ 3").wedge_power(k - 1));
        }
        let denom = r2.ipow((n - k) as u32) * s.ipow(k as u32);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum = sum.add(&t.scale(denom.recip().scale_re(sign)))?;
    }
    Ok(bq.wedge(&sum).scale(T::from_c64(two_pi_i_inv(n))))
}

/// `K_q` at `(z, ζ)` through the general exterior-algebra route.
pub fn cf_kernel(support: &Support, z: &[C64], zeta: &[C64], q: usize) -> Result<Form<C64>> {
    let sample = support.leray(z, zeta)?;
    let dq = if support.n() >= 3 {
        Some(support.dbar_zeta_q(z, zeta)?)
    } else {
        None
    };
    let data = LerayData {
        sample: &sample,
        dbar_q: dq.as_deref(),
    };
    Ok(cf_kernel_from(z, zeta, &data)?.z_antidegree_part(q))
}

/// Coefficient of `dV(ζ)` in `B₀ ∧ (f₁ dζ̄₁ + f₂ dζ̄₂)` for `n = 2`:
/// `4 (ζ̄ − z̄)·f / ((2πi)² |z − ζ|⁴)`.
pub fn bm_wedge_n2(z: &[C64], zeta: &[C64], f: [C64; 2]) -> Result<C64> {
    let r2 = check_pair(z, zeta)?;
    let dot = (zeta[0] - z[0]).conj() * f[0] + (zeta[1] - z[1]).conj() * f[1];
    Ok(dot * zeta_volume_factor(2) * two_pi_i_inv(2) / (r2 * r2))
}

/// Coefficient of `dζ₁ ∧ dζ₂` in `K₀` for `n = 2`:
/// `−(2πi)^{−2} [(ζ̄₁ − z̄₁)Q̂₂ − (ζ̄₂ − z̄₂)Q̂₁] / (|z − ζ|² Ŝ)`.
pub fn cf_k0_n2<T: Scalar>(z: &[T], zeta: &[T], l: &LeraySample<T>) -> Result<T> {
    check_pair(&values(z), &values(zeta))?;
    if l.s.value().norm() < SUPPORT_FLOOR {
        return Err(Error::VanishingSupport(l.s.value().norm()));
    }
    let cross = (zeta[0] - z[0]).conj() * l.q[1] - (zeta[1] - z[1]).conj() * l.q[0];
    let denom = dist2(z, zeta) * l.s;
    Ok((cross / denom).mulc(-two_pi_i_inv(2)))
}

/// Coefficient of `dV(ζ)` in `K₀ ∧ g dζ̄₁ ∧ dζ̄₂` given the `dζ₁ ∧ dζ₂`
/// coefficient `k0` of `K₀`.
pub fn k0_wedge_n2(k0: C64, g: C64) -> C64 {
    k0 * g * zeta_volume_factor(2)
}

/// Which part of the kernel a derivative or integral refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Top,
    Bot,
    Full,
}

impl Part {
    pub fn label(self) -> &'static str {
        match self {
            Part::Top => "top",
            Part::Bot => "bot",
            Part::Full => "full",
        }
    }
}

/// ⊤ and ⊥ parts of a form in the `ζ` variable with respect to the level set
/// of `ϱ` through `ζ`.
pub fn kernel_project<T: Scalar>(
    f: &Form<T>,
    domain: &DefiningDomain,
    zeta: &[T],
) -> Result<(Form<T>, Form<T>)> {
    let theta = domain.theta1(zeta)?;
    let bot = f.project_bot_with(Var::Zeta, &theta);
    let top = f.sub(&bot)?;
    Ok((top, bot))
}

fn select<T: Scalar>(f: &Form<T>, domain: &DefiningDomain, zeta: &[T], part: Part) -> Result<Form<T>> {
    match part {
        Part::Full => Ok(f.clone()),
        _ => {
            let (top, bot) = kernel_project(f, domain, zeta)?;
            Ok(if part == Part::Top { top } else { bot })
        }
    }
}

/// Everything known about the kernels at one pair `(z, ζ)`.
#[derive(Clone, Debug)]
pub struct KernelSample {
    pub z: Vec<C64>,
    pub zeta: Vec<C64>,
    pub q: usize,
    pub b_q: Form<C64>,
    pub k_q: Form<C64>,
    pub k_top: Form<C64>,
    pub k_bot: Form<C64>,
    pub derivs: Option<KernelDeriv>,
}

impl KernelSample {
    pub fn new(support: &Support, z: &[C64], zeta: &[C64], q: usize) -> Result<Self> {
        let b_q = bm_kernel(z, zeta, q)?;
        let k_q = cf_kernel(support, z, zeta, q)?;
        let (k_top, k_bot) = kernel_project(&k_q, &support.domain, zeta)?;
        Ok(Self {
            z: z.to_vec(),
            zeta: zeta.to_vec(),
            q,
            b_q,
            k_q,
            k_top,
            k_bot,
            derivs: None,
        })
    }

    /// `max |K_q − K_q^⊤ − K_q^⊥|`.
    pub fn split_defect(&self) -> f64 {
        self.k_top
            .add(&self.k_bot)
            .map(|s| s.dist(&self.k_q))
            .unwrap_or(f64::INFINITY)
    }

    pub fn with_derivs(mut self, support: &Support, order: usize, part: Part) -> Result<Self> {
        self.derivs = Some(kernel_deriv(
            support,
            &self.z,
            &self.zeta,
            self.q,
            order,
            part,
            DerivScheme::default_for(support.n()),
        )?);
        Ok(self)
    }
}

/// How derivatives of projected kernels are computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum DerivScheme {
    /// Exact derivative jets through the polynomial support function.
    Analytic,
    /// Fourth-order central differences with step `h`.
    FiniteDifference { h: f64 },
}

impl DerivScheme {
    /// Analytic for `n = 2`; differences with `h = 1e-4` otherwise.
    pub fn default_for(n: usize) -> Self {
        if n == 2 {
            DerivScheme::Analytic
        } else {
            DerivScheme::FiniteDifference { h: 1e-4 }
        }
    }
}

/// Derivatives of order exactly `order` of the projected kernel in the `4n`
/// real coordinates `(Re z, Im z, Re ζ, Im ζ)`, interleaved per complex
/// coordinate: variable `2j` is `Re z_j`, `2j + 1` is `Im z_j`, and `2n + 2j`,
/// `2n + 2j + 1` are the parts of `ζ_j`.
#[derive(Clone, Debug)]
pub struct KernelDeriv {
    pub order: usize,
    pub part: Part,
    pub scheme: DerivScheme,
    /// `(variables, form)`, each variable list sorted ascending.
    pub entries: Vec<(Vec<usize>, Form<C64>)>,
}

impl KernelDeriv {
    /// Euclidean norm over all listed derivatives and all coefficients.
    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for (vars, f) in &self.entries {
            // mixed second derivatives appear twice in the full Hessian
            let mult = if vars.len() == 2 && vars[0] != vars[1] { 2.0 } else { 1.0 };
            for (_, c) in f.raw_terms() {
                acc += mult * c.norm_sqr();
            }
        }
        acc.sqrt()
    }
}

fn seed_jets<const N: usize>(z: &[C64], zeta: &[C64]) -> (Vec<Jet2<N>>, Vec<Jet2<N>>) {
    let n = z.len();
    let zj = (0..n).map(|j| Jet2::complex_var(z[j], 2 * j, 2 * j + 1)).collect();
    let zetaj = (0..n)
        .map(|j| Jet2::complex_var(zeta[j], 2 * n + 2 * j, 2 * n + 2 * j + 1))
        .collect();
    (zj, zetaj)
}

fn projected_jet(support: &Support, z: &[C64], zeta: &[C64], q: usize, part: Part) -> Result<Form<Jet2<8>>> {
    let (zj, zetaj) = seed_jets::<8>(z, zeta);
    let l = support.leray(&zj, &zetaj)?;
    let data = LerayData {
        sample: &l,
        dbar_q: None,
    };
    let k = cf_kernel_from(&zj, &zetaj, &data)?.z_antidegree_part(q);
    select(&k, &support.domain, &zetaj, part)
}

fn projected_value(support: &Support, z: &[C64], zeta: &[C64], q: usize, part: Part) -> Result<Form<C64>> {
    let k = cf_kernel(support, z, zeta, q)?;
    select(&k, &support.domain, zeta, part)
}

fn real_shift(z: &[C64], zeta: &[C64], var: usize, t: f64) -> (Vec<C64>, Vec<C64>) {
    let n = z.len();
    let mut z = z.to_vec();
    let mut zeta = zeta.to_vec();
    let d = if var % 2 == 0 { c64(t, 0.0) } else { c64(0.0, t) };
    if var < 2 * n {
        z[var / 2] += d;
    } else {
        zeta[(var - 2 * n) / 2] += d;
    }
    (z, zeta)
}

const FD4: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
const FD4_2: [(f64, f64); 5] = [
    (-2.0, -1.0 / 12.0),
    (-1.0, 16.0 / 12.0),
    (0.0, -30.0 / 12.0),
    (1.0, 16.0 / 12.0),
    (2.0, -1.0 / 12.0),
];

fn fd_first(
    f: &dyn Fn(&[C64], &[C64]) -> Result<Form<C64>>,
    z: &[C64],
    zeta: &[C64],
    var: usize,
    h: f64,
) -> Result<Form<C64>> {
    let mut acc = Form::zero(z.len());
    for (k, w) in FD4 {
        let (a, b) = real_shift(z, zeta, var, k * h);
        acc = acc.add(&f(&a, &b)?.scale(c64(w / h, 0.0)))?;
    }
    Ok(acc)
}

/// `D^α` of the projected kernel `K_q^{part}` for all `|α| = order ≤ 2`.
///
/// Refuses pairs closer than `10h` (finite differences) or
/// [`COINCIDENCE_RADIUS`] (both schemes).
pub fn kernel_deriv(
    support: &Support,
    z: &[C64],
    zeta: &[C64],
    q: usize,
    order: usize,
    part: Part,
    scheme: DerivScheme,
) -> Result<KernelDeriv> {
    if order > 2 {
        return Err(Error::OrderTooHigh { order, max: 2 });
    }
    let r = check_pair(z, zeta)?.sqrt();
    let n = support.n();
    let nv = 4 * n;
    let mut entries = Vec::new();
    if order == 0 {
        entries.push((Vec::new(), projected_value(support, z, zeta, q, part)?));
        return Ok(KernelDeriv {
            order,
            part,
            scheme,
            entries,
        });
    }
    match scheme {
        DerivScheme::Analytic => {
            if n != 2 {
                return Err(Error::Unsupported(
                    "analytic kernel derivatives are implemented for n = 2".into(),
                ));
            }
            let jet = projected_jet(support, z, zeta, q, part)?;
            if order == 1 {
                for i in 0..nv {
                    entries.push((vec![i], jet.map(|c| c.g[i])));
                }
            } else {
                for i in 0..nv {
                    for j in i..nv {
                        entries.push((vec![i, j], jet.map(|c| c.h[i][j])));
                    }
                }
            }
        }
        DerivScheme::FiniteDifference { h } => {
            if r < 10.0 * h * order as f64 {
                return Err(Error::InvalidParameter(format!(
                    "|z − ζ| = {r:e} is within the stencil reach of the singularity"
                )));
            }
            let f = |a: &[C64], b: &[C64]| projected_value(support, a, b, q, part);
            if order == 1 {
                for i in 0..nv {
                    entries.push((vec![i], fd_first(&f, z, zeta, i, h)?));
                }
            } else {
                for i in 0..nv {
                    for j in i..nv {
                        let d = if i == j {
                            let mut acc = Form::zero(n);
                            for (k, w) in FD4_2 {
                                let (a, b) = real_shift(z, zeta, i, k * h);
                                acc = acc.add(&f(&a, &b)?.scale(c64(w / (h * h), 0.0)))?;
                            }
                            acc
                        } else {
                            let mut acc = Form::zero(n);
                            for (k, w) in FD4 {
                                let (a, b) = real_shift(z, zeta, j, k * h);
                                let g = |x: &[C64], y: &[C64]| f(x, y);
                                acc = acc.add(&fd_first(&g, &a, &b, i, h)?.scale(c64(w / h, 0.0)))?;
                            }
                            acc
                        };
                        entries.push((vec![i, j], d));
                    }
                }
            }
        }
    }
    Ok(KernelDeriv {
        order,
        part,
        scheme,
        entries,
    })
}

/// `|D^k K_q^{part}(z, ζ)|` (Euclidean norm over all order-`k` derivatives and
/// coefficients) with the default scheme.
pub fn kernel_deriv_norm(support: &Support, z: &[C64], zeta: &[C64], q: usize, k: usize, part: Part) -> Result<f64> {
    if k == 0 {
        return Ok(projected_value(support, z, zeta, q, part)?.frobenius());
    }
    Ok(kernel_deriv(support, z, zeta, q, k, part, DerivScheme::default_for(support.n()))?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::support_leray::{SupportKind, SupportParams};

    fn ball_support(kind: Option<SupportKind>) -> Support {
        let d = DefiningDomain::ball(2, 1.0);
        let k = kind.unwrap_or(SupportKind::DiederichFornaess(SupportParams::for_domain(&d)));
        Support::new(&d, k).unwrap()
    }

    #[test]
    fn bm_closed_form_matches_general_route() {
        let z = [c64(0.1, 0.2), c64(-0.3, 0.05)];
        let zeta = [c64(0.7, -0.1), c64(0.2, 0.4)];
        let b0 = bm_kernel(&z, &zeta, 0).unwrap();
        let f = [c64(0.3, -1.0), c64(2.0, 0.5)];
        let ff = Form::one_form(2, Gen::Dzetab, &f);
        let top = b0.wedge(&ff).zeta_top_part();
        let general = top.coeff(&[]) * zeta_volume_factor(2);
        let closed = bm_wedge_n2(&z, &zeta, f).unwrap();
        assert!((general - closed).norm() < 1e-12 * closed.norm());
    }

    #[test]
    fn bm_only_low_degrees_at_n2() {
        let z = [c64(0.1, 0.2), c64(-0.3, 0.05)];
        let zeta = [c64(0.7, -0.1), c64(0.2, 0.4)];
        assert!(!bm_kernel(&z, &zeta, 0).unwrap().is_zero());
        assert!(!bm_kernel(&z, &zeta, 1).unwrap().is_zero());
        assert!(bm_kernel(&z, &zeta, 2).unwrap().is_zero());
    }

    #[test]
    fn bm_homogeneity() {
        let z = [c64(0.1, 0.2), c64(-0.3, 0.05)];
        let d = [c64(0.2, -0.1), c64(0.1, 0.15)];
        let zeta1: Vec<C64> = z.iter().zip(&d).map(|(a, b)| a + b).collect();
        let zeta2: Vec<C64> = z.iter().zip(&d).map(|(a, b)| a + b * 2.0).collect();
        let m1 = bm_kernel(&z, &zeta1, 0).unwrap().max_abs();
        let m2 = bm_kernel(&z, &zeta2, 0).unwrap().max_abs();
        assert!((m1 / m2 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_rejected() {
        let z = [c64(0.1, 0.2), c64(-0.3, 0.05)];
        assert_eq!(bm_kernel(&z, &z, 0).unwrap_err(), Error::Coincident);
    }

    #[test]
    fn cf_n2_closed_form_and_hand_value() {
        let s = ball_support(Some(SupportKind::HenkinRamirez));
        let z = [c64(0.5, 0.0), c64(0.0, 0.0)];
        let zeta = [c64(1.0, 0.0), c64(0.0, 0.0)];
        let l = s.leray(&z, &zeta).unwrap();
        assert!((l.s - c64(0.5, 0.0)).norm() < 1e-15);
        // cross = (1 − 0.5)·Q̂₂ − 0·Q̂₁ = 0 since Q̂ = −ζ̄ = (−1, 0)
        let k = cf_k0_n2(&z, &zeta, &l).unwrap();
        assert!(k.norm() < 1e-15);
        // off-axis point: hand value
        let zeta = [c64(0.8, 0.0), c64(0.0, 0.6)];
        let z = [c64(0.3, 0.0), c64(0.0, 0.0)];
        let l = s.leray(&z, &zeta).unwrap();
        // Q̂ = −ζ̄ = (−0.8, 0.6i), Ŝ = ζ̄·(ζ − z) = 0.8·0.5 + 0.36 = 0.76
        let cross = c64(0.5, 0.0) * c64(0.0, 0.6) - c64(0.0, -0.6) * c64(-0.8, 0.0);
        let expect = -cross / (c64(0.61, 0.0) * c64(0.76, 0.0)) * two_pi_i_inv(2);
        let got = cf_k0_n2(&z, &zeta, &l).unwrap();
        assert!((got - expect).norm() < 1e-14);
        let general = cf_kernel(&s, &z, &zeta, 0).unwrap();
        let g = general.coeff(&[Gen::Dzeta(0), Gen::Dzeta(1)]);
        assert!((g - expect).norm() < 1e-14);
    }

    #[test]
    fn cf_top_degree_vanishes() {
        let s = ball_support(None);
        let z = [c64(0.3, 0.1), c64(-0.2, 0.0)];
        let zeta = [c64(0.9, 0.2), c64(0.3, -0.2)];
        assert!(cf_kernel(&s, &z, &zeta, 1).unwrap().is_zero());
        assert!(cf_kernel(&s, &z, &zeta, 2).unwrap().is_zero());
        let k = KernelSample::new(&s, &z, &zeta, 0).unwrap();
        assert!(k.k_bot.is_zero());
        assert!(k.split_defect() < 1e-15);
    }

    #[test]
    fn n3_kernel_split_and_bot_at_axis_point() {
        let d = DefiningDomain::ball(3, 1.0);
        let s = Support::new(&d, SupportKind::DiederichFornaess(SupportParams::for_domain(&d))).unwrap();
        let z = [c64(0.3, 0.1), c64(-0.2, 0.0), c64(0.1, 0.1)];
        let zeta = [c64(1.01, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)];
        let k = KernelSample::new(&s, &z, &zeta, 0).unwrap();
        assert!(k.split_defect() < 1e-14);
        // frame at (1,0,0) is the coordinate frame: ⊥ keeps the dζ̄₁ terms
        for (key, c) in k.k_bot.terms() {
            assert!(key.dzetab.entries().contains(&0), "{key:?} {c}");
        }
        for (key, _) in k.k_top.terms() {
            assert!(!key.dzetab.entries().contains(&0));
        }
        // degrees (3, 1) in ζ, 0 in z
        for deg in k.k_q.degrees() {
            assert_eq!((deg.z, deg.zb, deg.zeta, deg.zetab), (0, 0, 3, 1));
        }
        let k1 = cf_kernel(&s, &z, &zeta, 1).unwrap();
        for deg in k1.degrees() {
            assert_eq!((deg.zb, deg.zeta, deg.zetab), (1, 3, 0));
        }
        assert!(cf_kernel(&s, &z, &zeta, 2).unwrap().is_zero());
        let k1 = bm_kernel(&z, &zeta, 1).unwrap();
        for deg in k1.degrees() {
            assert_eq!((deg.zb, deg.zeta, deg.zetab), (1, 3, 1));
        }
    }

    #[test]
    fn analytic_and_fd_derivatives_agree() {
        let d = DefiningDomain::ellipsoid(2);
        let s = Support::new(&d, SupportKind::DiederichFornaess(SupportParams::for_domain(&d))).unwrap();
        let z = [c64(0.5, 0.1), c64(0.2, -0.1)];
        let zeta = [c64(0.95, 0.05), c64(0.3, 0.1)];
        for order in 1..=2 {
            let a = kernel_deriv(&s, &z, &zeta, 0, order, Part::Top, DerivScheme::Analytic).unwrap();
            let f = kernel_deriv(&s, &z, &zeta, 0, order, Part::Top, DerivScheme::FiniteDifference { h: 1e-3 })
                .unwrap();
            for ((va, fa), (vf, ff)) in a.entries.iter().zip(&f.entries) {
                assert_eq!(va, vf);
                assert!(fa.dist(ff) < 1e-6 * (1.0 + fa.max_abs()), "{va:?} {}", fa.dist(ff));
            }
        }
    }

    #[test]
    fn radial_derivative_of_distance_factor() {
        // |z − ζ|^{-2} along the ray ζ = z + t e: derivative −2 t^{-3}
        let z = [c64(0.1, 0.0), c64(0.0, 0.0)];
        let t = 0.3;
        let zeta: Vec<Jet2<8>> = vec![
            Jet2::constant(c64(0.1, 0.0)) + Jet2::var(t, 4),
            Jet2::constant(c64(0.0, 0.0)),
        ];
        let zj: Vec<Jet2<8>> = z.iter().map(|&c| Jet2::constant(c)).collect();
        let f = dist2(&zj, &zeta).recip();
        let exact = -2.0 / (t * t * t);
        assert!(((f.g[4].re - exact) / exact).abs() < 1e-12);
        // and the finite-difference scheme on the same factor
        let h = 1e-4;
        let g = |x: f64| 1.0 / (x * x);
        let fd = (g(t - 2.0 * h) - 8.0 * g(t - h) + 8.0 * g(t + h) - g(t + 2.0 * h)) / (12.0 * h);
        assert!(((fd - exact) / exact).abs() < 1e-6);
    }

    #[test]
    fn order_zero_is_identity() {
        let s = ball_support(None);
        let z = [c64(0.3, 0.1), c64(-0.2, 0.0)];
        let zeta = [c64(0.9, 0.2), c64(0.3, -0.2)];
        let d = kernel_deriv(&s, &z, &zeta, 0, 0, Part::Full, DerivScheme::Analytic).unwrap();
        let k = cf_kernel(&s, &z, &zeta, 0).unwrap();
        assert!(d.entries[0].1.dist(&k) == 0.0);
        assert!(kernel_deriv(&s, &z, &zeta, 0, 3, Part::Full, DerivScheme::Analytic).is_err());
    }
}
