//! Holomorphic support functions and their Leray maps.
//!
//! Two support functions are provided:
//!
//! - the finite-type construction on convex domains, written without an
//!   explicit unitary frame: with `ν = ∂̄ϱ(ζ)/|∂̄ϱ(ζ)|` (the vector of
//!   `∂ϱ/∂ζ̄_j`), `h = z − ζ`, `w₁ = ν†h` and `y = h − ν w₁`,
//!
//!   `S = 3w₁ + M₁w₁² − (1/M₂) Σ_{j=1}^{m/2} M₃^{4^j} (−1)^j T_{2j}(y)`,
//!   `T_{2j}(y) = Σ_{|β|=2j} ∂^β_zϱ(ζ) y^β / β!`.
//!
//!   Choosing a unitary `Φ(ζ)` with `Φν = e₁` gives `w = Φh` and
//!   `Σ_{k≥2} w_k Φ†e_k = y`, so this agrees with the frame-based formula for
//!   every admissible `Φ`.
//! - the Henkin–Ramírez function of a ball, `S = Σ ζ̄_j (ζ_j − z_j)`, whose
//!   real part is `½(ϱ(ζ) − ϱ(z) + |ζ − z|²)`.
//!
//! Orientation: the finite-type `S` has negative real part on the domain side
//! (`S ≈ −3 S_ball` near the boundary of a ball). The Cauchy–Fantappiè kernel
//! only involves the homogeneous ratios `Q̂^k/Ŝ^k`, so it does not depend on
//! which of the two orientations is used.
//!
//! The Leray map is `Q̂_j = ∫₀¹ ∂S/∂z_j(ζ + t(z − ζ)) dt`. Writing `S` as a sum
//! of homogeneous parts `S_d` in `h`, this is exactly `Σ_d (1/d) ∂S_d/∂h_j`,
//! and Euler's identity gives `Σ_j Q̂_j h_j = S`.
//!
//! No glued support function is built: experiments run where
//! [`zero_margin`] certifies that `S` itself stays away from zero.

use crate::domains::{random_sphere, DefiningDomain, ModelKind};
use crate::error::{Error, Result};
use crate::minimal_basis::BasisResult;
use crate::scalar::{c64, Jet2, Scalar, C64};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Constants of the finite-type support function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportParams {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// Even truncation order `m` (the largest declared type).
    pub m_cap: u32,
}

impl SupportParams {
    /// Starting constants `(M₁, M₂, M₃) = (4, 1, 2)` with `m = m₁(Ω)`.
    pub fn for_domain(domain: &DefiningDomain) -> Self {
        Self {
            m1: 4.0,
            m2: 1.0,
            m3: 2.0,
            m_cap: domain.m1(),
        }
    }

    pub fn with_constants(self, m1: f64, m2: f64, m3: f64) -> Self {
        Self { m1, m2, m3, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportKind {
    /// Finite-type support function on a convex domain.
    DiederichFornaess(SupportParams),
    /// Henkin–Ramírez function of a ball.
    HenkinRamirez,
}

/// `(Q̂₁, …, Q̂_n)` and `Ŝ` at one pair `(z, ζ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LeraySample<T: Scalar> {
    pub q: Vec<T>,
    pub s: T,
}

/// A support function bound to a domain.
#[derive(Clone, Debug)]
pub struct Support {
    pub domain: DefiningDomain,
    pub kind: SupportKind,
    /// For each `j = 1..m/2`: the multi-indices `β` with `|β| = 2j` and `1/β!`.
    tables: Vec<Vec<(Vec<u32>, f64)>>,
}

fn multi_indices(n: usize, total: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in multi_indices(n - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl Support {
    pub fn new(domain: &DefiningDomain, kind: SupportKind) -> Result<Self> {
        let mut tables = Vec::new();
        match kind {
            SupportKind::DiederichFornaess(p) => {
                if p.m_cap % 2 != 0 || p.m_cap == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "truncation order {} must be even",
                        p.m_cap
                    )));
                }
                if p.m_cap != domain.m1() {
                    return Err(Error::InvalidParameter(format!(
                        "truncation order {} differs from the domain type {}",
                        p.m_cap,
                        domain.m1()
                    )));
                }
                if p.m1 < 1.0 || p.m2 < 1.0 || p.m3 < 1.0 {
                    return Err(Error::InvalidParameter("M1, M2, M3 must be ≥ 1".into()));
                }
                for j in 1..=p.m_cap / 2 {
                    tables.push(
                        multi_indices(domain.n, 2 * j)
                            .into_iter()
                            .map(|b| {
                                let inv = 1.0 / b.iter().map(|&k| factorial(k)).product::<f64>();
                                (b, inv)
                            })
                            .collect(),
                    );
                }
            }
            SupportKind::HenkinRamirez => {
                if !matches!(domain.kind, ModelKind::Ball { .. }) {
                    return Err(Error::Unsupported(
                        "the Henkin–Ramírez function needs a ball".into(),
                    ));
                }
            }
        }
        Ok(Self {
            domain: domain.clone(),
            kind,
            tables,
        })
    }

    pub fn n(&self) -> usize {
        self.domain.n
    }

    /// Leray map and support function at `(z, ζ)`, generic over jets.
    pub fn leray<T: Scalar>(&self, z: &[T], zeta: &[T]) -> Result<LeraySample<T>> {
        let n = self.n();
        if z.len() != n || zeta.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: z.len().min(zeta.len()),
            });
        }
        match self.kind {
            SupportKind::HenkinRamirez => {
                let mut s = T::zero();
                let mut q = Vec::with_capacity(n);
                for j in 0..n {
                    let zb = zeta[j].conj();
                    s += zb * (zeta[j] - z[j]);
                    q.push(-zb);
                }
                Ok(LeraySample { q, s })
            }
            SupportKind::DiederichFornaess(p) => {
                let nu = self.domain.theta1(zeta)?;
                let h: Vec<T> = (0..n).map(|j| z[j] - zeta[j]).collect();
                let mut w1 = T::zero();
                for j in 0..n {
                    w1 += nu[j].conj() * h[j];
                }
                let y: Vec<T> = (0..n).map(|j| h[j] - nu[j] * w1).collect();
                let m1 = T::from_f64(p.m1);
                let mut s = w1.scale_re(3.0) + m1 * w1 * w1;
                let mut q: Vec<T> = (0..n)
                    .map(|k| nu[k].conj() * (T::from_f64(3.0) + m1 * w1))
                    .collect();
                let zero_beta = vec![0u32; n];
                for (jj, table) in self.tables.iter().enumerate() {
                    let j = (jj + 1) as i32;
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    let c = -(1.0 / p.m2) * p.m3.powf(4f64.powi(j)) * sign;
                    let mut t = T::zero();
                    let mut grad = vec![T::zero(); n];
                    for (beta, inv) in table {
                        let d = self.domain.rho_deriv_generic(zeta, beta, &zero_beta);
                        if d.value().norm() == 0.0 && d.is_exact_zero() {
                            continue;
                        }
                        let dc = d.scale_re(*inv);
                        let mut mono = T::one();
                        for l in 0..n {
                            mono *= y[l].ipow(beta[l]);
                        }
                        t += dc * mono;
                        for l in 0..n {
                            if beta[l] == 0 {
                                continue;
                            }
                            let mut g = dc.scale_re(beta[l] as f64);
                            for k in 0..n {
                                let e = if k == l { beta[k] - 1 } else { beta[k] };
                                g *= y[k].ipow(e);
                            }
                            grad[l] += g;
                        }
                    }
                    s += t.scale_re(c);
                    // ∂/∂h_k of T(P h) is Σ_l ∂_l T · P_{lk}, P = I − ν ν†
                    let mut gnu = T::zero();
                    for l in 0..n {
                        gnu += grad[l] * nu[l];
                    }
                    let f = c / (2.0 * j as f64);
                    for k in 0..n {
                        q[k] += (grad[k] - nu[k].conj() * gnu).scale_re(f);
                    }
                }
                Ok(LeraySample { q, s })
            }
        }
    }

    pub fn s(&self, z: &[C64], zeta: &[C64]) -> Result<C64> {
        Ok(self.leray(z, zeta)?.s)
    }

    /// Precomputed data at a fixed `ζ` for fast evaluation in `z`.
    pub fn at_zeta(&self, zeta: &[C64]) -> Result<ZetaData> {
        let n = self.n();
        match self.kind {
            SupportKind::HenkinRamirez => Ok(ZetaData {
                zeta: zeta.to_vec(),
                nu: zeta.iter().map(|c| c.conj()).collect(),
                m1: 0.0,
                ht: true,
                terms: Vec::new(),
            }),
            SupportKind::DiederichFornaess(p) => {
                let nu = self.domain.theta1(zeta)?;
                let zero_beta = vec![0u32; n];
                let mut terms = Vec::new();
                for (jj, table) in self.tables.iter().enumerate() {
                    let j = (jj + 1) as i32;
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    let c = -(1.0 / p.m2) * p.m3.powf(4f64.powi(j)) * sign;
                    for (beta, inv) in table {
                        let d: C64 = self.domain.rho_deriv_generic(zeta, beta, &zero_beta);
                        if d.norm() > 0.0 {
                            terms.push((beta.clone(), d * inv * c, 2 * j as u32));
                        }
                    }
                }
                Ok(ZetaData {
                    zeta: zeta.to_vec(),
                    nu,
                    m1: p.m1,
                    ht: false,
                    terms,
                })
            }
        }
    }

    /// `∂Q̂_j/∂ζ̄_k` at `(z, ζ)` (row `j`, column `k`) through derivative jets.
    pub fn dbar_zeta_q(&self, z: &[C64], zeta: &[C64]) -> Result<Vec<Vec<C64>>> {
        match self.n() {
            2 => self.dbar_zeta_q_jet::<4>(z, zeta),
            3 => self.dbar_zeta_q_jet::<6>(z, zeta),
            n => Err(Error::Unsupported(format!("dimension {n}"))),
        }
    }

    fn dbar_zeta_q_jet<const N: usize>(&self, z: &[C64], zeta: &[C64]) -> Result<Vec<Vec<C64>>> {
        let n = self.n();
        let zj: Vec<Jet2<N>> = z.iter().map(|&c| Jet2::constant(c)).collect();
        let zetaj: Vec<Jet2<N>> = (0..n)
            .map(|k| Jet2::complex_var(zeta[k], 2 * k, 2 * k + 1))
            .collect();
        let l = self.leray(&zj, &zetaj)?;
        Ok(l.q
            .iter()
            .map(|qj| {
                (0..n)
                    .map(|k| (qj.g[2 * k] + c64(0.0, 1.0) * qj.g[2 * k + 1]) * 0.5)
                    .collect()
            })
            .collect())
    }

    /// `(∂Ŝ/∂z̄_j)_j` through derivative jets; zero for a holomorphic `Ŝ`.
    pub fn dbar_z_s(&self, z: &[C64], zeta: &[C64]) -> Result<Vec<C64>> {
        if self.n() != 2 {
            return Err(Error::Unsupported("holomorphy probe is implemented for n = 2".into()));
        }
        let zj: Vec<Jet2<4>> = (0..2)
            .map(|k| Jet2::complex_var(z[k], 2 * k, 2 * k + 1))
            .collect();
        let zetaj: Vec<Jet2<4>> = zeta.iter().map(|&c| Jet2::constant(c)).collect();
        let s = self.leray(&zj, &zetaj)?.s;
        Ok((0..2)
            .map(|k| (s.g[2 * k] + c64(0.0, 1.0) * s.g[2 * k + 1]) * 0.5)
            .collect())
    }
}

impl Support {
    /// The finite-type support function evaluated through an explicit unitary
    /// frame: `Φ = conj(U)` for the frame matrix `U` whose first row is `ν`,
    /// `w = Φ(z − ζ)`, and the tangential sums use the Taylor coefficients of
    /// `w ↦ ϱ(ζ + Φ†w)` with `α₁ = 0`.
    pub fn df_support_framed(&self, frame: &crate::cforms::Frame, z: &[C64], zeta: &[C64]) -> Result<C64> {
        let SupportKind::DiederichFornaess(p) = self.kind else {
            return Err(Error::Unsupported("framed evaluation needs the finite-type support".into()));
        };
        let n = self.n();
        let phi: Vec<Vec<C64>> = frame.rows.iter().map(|r| r.iter().map(|c| c.conj()).collect()).collect();
        let w: Vec<C64> = (0..n)
            .map(|k| (0..n).map(|l| phi[k][l] * (z[l] - zeta[l])).sum())
            .collect();
        let mut s = 3.0 * w[0] + p.m1 * w[0] * w[0];
        let zero_beta = vec![0u32; n];
        for (jj, table) in self.tables.iter().enumerate() {
            let j = (jj + 1) as i32;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let c = -(1.0 / p.m2) * p.m3.powf(4f64.powi(j)) * sign;
            // P(w) = Σ_β ∂^βϱ(ζ)/β! (Φ†w)^β expanded in monomials of w
            let mut poly: std::collections::BTreeMap<Vec<u32>, C64> = Default::default();
            for (beta, inv) in table {
                let d: C64 = self.domain.rho_deriv_generic(zeta, beta, &zero_beta);
                if d.norm() == 0.0 {
                    continue;
                }
                let mut term: std::collections::BTreeMap<Vec<u32>, C64> = Default::default();
                term.insert(vec![0; n], d * inv);
                for (i, &bi) in beta.iter().enumerate() {
                    for _ in 0..bi {
                        // multiply by (Φ†w)_i = Σ_k conj(Φ_{ki}) w_k
                        let mut next: std::collections::BTreeMap<Vec<u32>, C64> = Default::default();
                        for (e, v) in &term {
                            for k in 0..n {
                                let mut e2 = e.clone();
                                e2[k] += 1;
                                *next.entry(e2).or_insert(c64(0.0, 0.0)) += v * phi[k][i].conj();
                            }
                        }
                        term = next;
                    }
                }
                for (e, v) in term {
                    *poly.entry(e).or_insert(c64(0.0, 0.0)) += v;
                }
            }
            for (alpha, coef) in poly {
                if alpha[0] != 0 {
                    continue;
                }
                let mut mono = coef;
                for k in 0..n {
                    mono *= w[k].powu(alpha[k]);
                }
                s += c * mono;
            }
        }
        Ok(s)
    }
}

/// Support-function data frozen at one `ζ`.
#[derive(Clone, Debug)]
pub struct ZetaData {
    pub zeta: Vec<C64>,
    nu: Vec<C64>,
    m1: f64,
    ht: bool,
    /// `(β, c·∂^βϱ(ζ)/β!, |β|)` for the tangential correction.
    terms: Vec<(Vec<u32>, C64, u32)>,
}

impl ZetaData {
    pub fn leray(&self, z: &[C64]) -> LeraySample<C64> {
        let n = self.zeta.len();
        if self.ht {
            let mut s = c64(0.0, 0.0);
            for j in 0..n {
                s += self.nu[j] * (self.zeta[j] - z[j]);
            }
            return LeraySample {
                q: self.nu.iter().map(|c| -c).collect(),
                s,
            };
        }
        let h: Vec<C64> = (0..n).map(|j| z[j] - self.zeta[j]).collect();
        let w1: C64 = (0..n).map(|j| self.nu[j].conj() * h[j]).sum();
        let y: Vec<C64> = (0..n).map(|j| h[j] - self.nu[j] * w1).collect();
        let mut s = 3.0 * w1 + self.m1 * w1 * w1;
        let mut q: Vec<C64> = (0..n)
            .map(|k| self.nu[k].conj() * (3.0 + self.m1 * w1))
            .collect();
        let mut grad_acc = vec![c64(0.0, 0.0); n];
        for (beta, c, deg) in &self.terms {
            let mut mono = *c;
            for l in 0..n {
                mono *= y[l].powu(beta[l]);
            }
            s += mono;
            for l in 0..n {
                if beta[l] == 0 {
                    continue;
                }
                let mut g = *c * beta[l] as f64;
                for k in 0..n {
                    let e = if k == l { beta[k] - 1 } else { beta[k] };
                    g *= y[k].powu(e);
                }
                grad_acc[l] += g / *deg as f64;
            }
        }
        let gnu: C64 = (0..n).map(|l| grad_acc[l] * self.nu[l]).sum();
        for k in 0..n {
            q[k] += grad_acc[k] - self.nu[k].conj() * gnu;
        }
        LeraySample { q, s }
    }
}

/// Random point `ζ` with `lo < ϱ(ζ) < hi`, drawn along a random ray.
pub fn sample_level_band<R: Rng>(domain: &DefiningDomain, lo: f64, hi: f64, rng: &mut R) -> Vec<C64> {
    loop {
        let th = random_sphere(rng, domain.n);
        let b = domain.boundary_point(&th);
        let t: f64 = rng.random_range(-0.5..0.5);
        let p: Vec<C64> = b.iter().map(|c| c * (1.0 + t)).collect();
        let r = domain.rho_f(&p);
        if r > lo && r < hi {
            return p;
        }
    }
}

/// Half-width of an axis box containing the domain.
pub fn bounding_half_width(domain: &DefiningDomain) -> f64 {
    match &domain.kind {
        ModelKind::Ball { radius } => *radius,
        ModelKind::Ellipsoid { .. } => 1.0,
        ModelKind::CustomPolynomial { .. } => {
            let mut rng = crate::rng(0xb0c5);
            let r = (0..4000)
                .map(|_| {
                    let th = random_sphere(&mut rng, domain.n);
                    1.0 / domain.gauge(&th)
                })
                .fold(0.0, f64::max);
            1.1 * r
        }
    }
}

/// Uniform point of `Ω` by rejection from the bounding box.
pub fn sample_interior<R: Rng>(domain: &DefiningDomain, rng: &mut R) -> Vec<C64> {
    let a = bounding_half_width(domain);
    loop {
        let p: Vec<C64> = (0..domain.n)
            .map(|_| c64(rng.random_range(-a..a), rng.random_range(-a..a)))
            .collect();
        if domain.rho_f(&p) < 0.0 {
            return p;
        }
    }
}

/// Smallest `M₄` such that a pair `(z, ζ)` satisfies the support bound with
/// every `M ≥ M₄`: root of `M·a − b/M = Re S` with `a = max(0, ϱ(z) − ϱ(ζ))`,
/// `b = |z − ζ|^m`.
fn pair_m4(re_s: f64, a: f64, b: f64) -> f64 {
    if a == 0.0 {
        if re_s >= 0.0 {
            return f64::INFINITY;
        }
        return b / (-re_s);
    }
    // a M² − re_s M − b = 0
    (re_s + (re_s * re_s + 4.0 * a * b).sqrt()) / (2.0 * a)
}

/// Result of a calibration run.
#[derive(Clone, Debug, Serialize)]
pub struct M4Calibration {
    /// Smallest `M₄` consistent with the calibration sample.
    pub m4_raw: f64,
    /// Value used downstream: `1.1·m4_raw` (at least 1).
    pub m4: f64,
    /// Violations of the bound at `m4` on an independent validation sample.
    pub violations: usize,
    pub samples: usize,
}

fn draw_near_pair<R: Rng>(
    domain: &DefiningDomain,
    rmax: f64,
    rng: &mut R,
) -> (Vec<C64>, Vec<C64>) {
    let t1 = domain.collar_width;
    loop {
        let zeta = sample_level_band(domain, -t1, t1, rng);
        let dir = random_sphere(rng, domain.n);
        let lr: f64 = rng.random_range((1e-3f64).ln()..rmax.ln());
        let r = lr.exp();
        let z: Vec<C64> = zeta.iter().zip(&dir).map(|(a, d)| a + d * r).collect();
        if domain.rho_f(&z) < t1 {
            return (z, zeta);
        }
    }
}

/// The support-bound residual `M₄·max(0, Δϱ) − |h|^m/M₄ − Re S` (non-negative when satisfied).
pub fn bound_slack(support: &Support, m4: f64, z: &[C64], zeta: &[C64]) -> Result<f64> {
    let m = support.domain.m1() as i32;
    let s = support.s(z, zeta)?;
    let a = (support.domain.rho_f(z) - support.domain.rho_f(zeta)).max(0.0);
    let h: f64 = z.iter().zip(zeta).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let re = oriented_re(support, s);
    Ok(m4 * a - h.powi(m) / m4 - re)
}

/// `Re S` in the orientation where it is negative on the domain side.
fn oriented_re(support: &Support, s: C64) -> f64 {
    match support.kind {
        SupportKind::HenkinRamirez => -s.re,
        SupportKind::DiederichFornaess(_) => s.re,
    }
}

/// Search the smallest `M₄` over `budget` random pairs, then count violations
/// on `budget` independent pairs with `|z − ζ| < 1/M₄`.
pub fn calibrate_m4(support: &Support, budget: usize, seed: u64) -> Result<M4Calibration> {
    let domain = &support.domain;
    let m = domain.m1() as i32;
    let mut rng = crate::rng(seed);
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(budget);
    for _ in 0..budget {
        let (z, zeta) = draw_near_pair(domain, 1.0, &mut rng);
        let s = support.s(&z, &zeta)?;
        let a = (domain.rho_f(&z) - domain.rho_f(&zeta)).max(0.0);
        let r: f64 = z.iter().zip(&zeta).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        pairs.push((r, pair_m4(oriented_re(support, s), a, r.powi(m))));
    }
    // M is admissible if M ≥ m_i for every pair with r_i < 1/M.
    let mut cands: Vec<f64> = pairs.iter().map(|p| p.1).filter(|x| x.is_finite()).collect();
    cands.extend(pairs.iter().map(|p| 1.0 / p.0));
    cands.push(1.0);
    cands.retain(|&c| c >= 1.0 && c.is_finite());
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let admissible = |mm: f64| pairs.iter().all(|&(r, mi)| r >= 1.0 / mm || mi <= mm);
    let m4_raw = cands
        .iter()
        .copied()
        .find(|&c| admissible(c) && admissible(c * (1.0 + 1e-12)))
        .unwrap_or(f64::INFINITY);
    let m4 = (1.1 * m4_raw).max(1.0);
    let mut violations = 0;
    if m4.is_finite() {
        let mut vrng = crate::rng(seed ^ 0x9e37_79b9_7f4a_7c15);
        for _ in 0..budget {
            let (z, zeta) = draw_near_pair(domain, 1.0 / m4, &mut vrng);
            if bound_slack(support, m4, &z, &zeta)? < 0.0 {
                violations += 1;
            }
        }
    } else {
        violations = budget;
    }
    Ok(M4Calibration {
        m4_raw,
        m4,
        violations,
        samples: budget,
    })
}

/// Minimum of `|Ŝ|` over far pairs.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroMargin {
    pub min_abs_s: f64,
    pub argmin: Option<(Vec<C64>, Vec<C64>)>,
    pub pairs: usize,
}

/// `min |Ŝ(z, ζ)|` over `z ∈ Ω`, `ζ ∈ U₁ \ Ω̄` with `|z − ζ| ≥ 1/(2M₄)`:
/// random pairs followed by a compass-search polish of the ten smallest, so
/// that isolated zeros (a set of real codimension two) are found rather than
/// merely approached.
pub fn zero_margin(support: &Support, m4: f64, budget: usize, seed: u64) -> Result<ZeroMargin> {
    let domain = &support.domain;
    let mut rng = crate::rng(seed);
    let floor = 1.0 / (2.0 * m4);
    let t1 = domain.collar_width;
    let admissible = |z: &[C64], zeta: &[C64]| {
        let r: f64 = z.iter().zip(zeta).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let rz = domain.rho_f(z);
        let rzeta = domain.rho_f(zeta);
        r >= floor && rz < 0.0 && rzeta > 0.0 && rzeta < t1
    };
    let mut best: Vec<(f64, Vec<C64>, Vec<C64>)> = Vec::new();
    let mut count = 0;
    while count < budget {
        let z = sample_interior(domain, &mut rng);
        let zeta = sample_level_band(domain, 0.0, t1, &mut rng);
        if !admissible(&z, &zeta) {
            continue;
        }
        count += 1;
        let s = support.s(&z, &zeta)?.norm();
        if best.len() < 10 || s < best[best.len() - 1].0 {
            best.push((s, z, zeta));
            best.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            best.truncate(10);
        }
    }
    let n = domain.n;
    let mut overall = (f64::INFINITY, None);
    for (mut val, mut z, mut zeta) in best {
        let mut step = 0.05;
        while step > 1e-10 {
            let mut moved = false;
            for k in 0..4 * n {
                for sgn in [1.0, -1.0] {
                    let mut z2 = z.clone();
                    let mut zeta2 = zeta.clone();
                    let d = if k % 2 == 0 { c64(sgn * step, 0.0) } else { c64(0.0, sgn * step) };
                    let idx = (k / 2) % n;
                    if k < 2 * n {
                        z2[idx] += d;
                    } else {
                        zeta2[idx] += d;
                    }
                    if !admissible(&z2, &zeta2) {
                        continue;
                    }
                    let v = support.s(&z2, &zeta2)?.norm();
                    if v < val {
                        val = v;
                        z = z2;
                        zeta = zeta2;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if val < overall.0 {
            overall = (val, Some((z, zeta)));
        }
    }
    Ok(ZeroMargin {
        min_abs_s: overall.0,
        argmin: overall.1,
        pairs: budget,
    })
}

/// Outcome of the parameter search.
#[derive(Clone, Debug, Serialize)]
pub struct ParamSearch {
    pub params: SupportParams,
    pub calibration: M4Calibration,
    pub margin: f64,
    /// Every candidate tried: `(params, M₄, violations, margin)`.
    pub tried: Vec<(SupportParams, f64, usize, f64)>,
    pub accepted: bool,
}

/// Candidate constants in the order they are tried. The default `M₁ = 4`
/// places zeros of `S` at `w₁ = −3/4`, which lie inside the model domains,
/// so smaller `M₁` values and then larger `M₂` are tried.
pub fn candidate_constants() -> Vec<(f64, f64, f64)> {
    vec![
        (4.0, 1.0, 2.0),
        (2.0, 1.0, 2.0),
        (1.0, 1.0, 2.0),
        (1.0, 2.0, 2.0),
        (1.0, 4.0, 2.0),
        (1.0, 8.0, 2.0),
        (1.0, 16.0, 2.0),
    ]
}

/// Largest accepted `M₄`: beyond it the region `|z − ζ| < 1/M₄` where the
/// bound is certified becomes too small for the kernel experiments.
pub const M4_MAX: f64 = 10.0;

/// Far-pair margin below which `min |Ŝ|` is read as an isolated zero that
/// the compass search converged to rather than a genuine lower bound.
pub const MARGIN_FLOOR: f64 = 1e-3;

/// Try [`candidate_constants`] until the calibration gives `M₄ ≤ M4_MAX` with
/// no violations and the far-pair margin exceeds `margin_floor`.
pub fn search_params(
    domain: &DefiningDomain,
    calib_budget: usize,
    margin_budget: usize,
    margin_floor: f64,
    seed: u64,
) -> Result<ParamSearch> {
    let base = SupportParams::for_domain(domain);
    let mut tried = Vec::new();
    let mut last = None;
    for (m1, m2, m3) in candidate_constants() {
        let params = base.with_constants(m1, m2, m3);
        let support = Support::new(domain, SupportKind::DiederichFornaess(params))?;
        let cal = calibrate_m4(&support, calib_budget, seed)?;
        let margin = if cal.m4 <= M4_MAX {
            zero_margin(&support, cal.m4, margin_budget, seed ^ 0x5a5a)?.min_abs_s
        } else {
            0.0
        };
        tried.push((params, cal.m4, cal.violations, margin));
        let ok = cal.violations == 0 && cal.m4 <= M4_MAX && margin > margin_floor;
        last = Some((params, cal.clone(), margin));
        if ok {
            return Ok(ParamSearch {
                params,
                calibration: cal,
                margin,
                tried,
                accepted: true,
            });
        }
    }
    let (params, calibration, margin) = last.expect("at least one candidate");
    Ok(ParamSearch {
        params,
        calibration,
        margin,
        tried,
        accepted: false,
    })
}

/// Constants of the coefficient bounds at one `(ζ₀, ε)`:
/// `max |Q̂_{Ψ,j}| τ_j/ε`, `max |∂_{ζ̄_k} Q̂_{Ψ,j}| τ_j τ_k/ε` over sampled
/// `z ∈ Ω ∩ P_ε(ζ₀)`, and `min |Ŝ|/ε` over sampled `z ∈ Ω_{ϱ(ζ₀)} \ P_ε(ζ₀)`.
#[derive(Clone, Debug, Serialize)]
pub struct CoefficientConstants {
    pub eps: f64,
    pub q_const: f64,
    pub dq_const: f64,
    pub s_lower: f64,
}

/// Coefficients in basis coordinates: the pull-back of `Σ Q̂_i dζ_i` under
/// `ζ = Ψζ'` has coefficients `Σ_i Q̂_i Ψ_{ij}`.
pub fn coefficient_constants<R: Rng>(
    support: &Support,
    basis: &BasisResult,
    samples: usize,
    rng: &mut R,
) -> Result<CoefficientConstants> {
    let n = support.n();
    let zeta = &basis.zeta;
    let eps = basis.eps;
    let domain = &support.domain;
    let level = domain.rho_f(zeta);
    let psi = |i: usize, j: usize| basis.vectors[j][i];
    let mut q_const = 0.0f64;
    let mut dq_const = 0.0f64;
    let mut s_lower = f64::INFINITY;
    let mut got_in = 0;
    let mut tries = 0;
    while got_in < samples && tries < 200 * samples {
        tries += 1;
        let dir = random_sphere(rng, n);
        let r: f64 = rng.random::<f64>().powf(1.0 / (2 * n) as f64);
        let a: Vec<C64> = dir.iter().map(|c| c * r).collect();
        let z = basis.point(&a);
        if domain.rho_f(&z) >= 0.0 {
            continue;
        }
        got_in += 1;
        let l = support.leray(&z, zeta)?;
        let dq = support.dbar_zeta_q(&z, zeta)?;
        for j in 0..n {
            let qj: C64 = (0..n).map(|i| l.q[i] * psi(i, j)).sum();
            q_const = q_const.max(qj.norm() * basis.taus[j] / eps);
            for k in 0..n {
                let mut d = c64(0.0, 0.0);
                for i in 0..n {
                    for ll in 0..n {
                        d += psi(i, j) * psi(ll, k).conj() * dq[i][ll];
                    }
                }
                dq_const = dq_const.max(d.norm() * basis.taus[j] * basis.taus[k] / eps);
            }
        }
    }
    let mut got_out = 0;
    tries = 0;
    while got_out < samples && tries < 200 * samples {
        tries += 1;
        let dir = random_sphere(rng, n);
        let r = 1.0 + 3.0 * rng.random::<f64>();
        let a: Vec<C64> = dir.iter().map(|c| c * r).collect();
        let z = basis.point(&a);
        if domain.rho_f(&z) >= level {
            continue;
        }
        got_out += 1;
        s_lower = s_lower.min(support.s(&z, zeta)?.norm() / eps);
    }
    Ok(CoefficientConstants {
        eps,
        q_const,
        dq_const,
        s_lower,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> C64 {
        c64(1.0, 0.0)
    }
    fn zero() -> C64 {
        c64(0.0, 0.0)
    }

    #[test]
    fn henkin_ramirez_values() {
        let b = DefiningDomain::ball(2, 1.0);
        let s = Support::new(&b, SupportKind::HenkinRamirez).unwrap();
        let zeta = [one(), zero()];
        assert_eq!(s.s(&[zero(), zero()], &zeta).unwrap(), one());
        let z = [c64(0.5, 0.0), zero()];
        let v = s.s(&z, &zeta).unwrap();
        assert!((v - c64(0.5, 0.0)).norm() < 1e-15);
        let polar = 0.5 * (b.rho_f(&zeta) - b.rho_f(&z) + 0.25);
        assert!((v.re - polar).abs() < 1e-15);
        let l = s.leray(&z, &zeta).unwrap();
        assert_eq!(l.q, vec![-one(), zero()]);
    }

    #[test]
    fn ball_df_tangential_term_vanishes() {
        // holomorphic second derivatives of |z|² are zero
        let b = DefiningDomain::ball(2, 1.0);
        let p = SupportParams::for_domain(&b).with_constants(1.0, 1.0, 1.0);
        let s = Support::new(&b, SupportKind::DiederichFornaess(p)).unwrap();
        let t = 0.3;
        let v = s.s(&[c64(1.0 + t, 0.0), zero()], &[one(), zero()]).unwrap();
        assert!((v - c64(3.0 * t + t * t, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn leray_identity_and_fast_path() {
        let e = DefiningDomain::ellipsoid(2);
        let p = SupportParams::for_domain(&e).with_constants(1.0, 1.0, 2.0);
        let s = Support::new(&e, SupportKind::DiederichFornaess(p)).unwrap();
        let z = [c64(0.3, 0.2), c64(-0.4, 0.5)];
        let zeta = [c64(0.6, -0.3), c64(0.5, 0.4)];
        let l = s.leray(&z, &zeta).unwrap();
        let dot: C64 = (0..2).map(|j| l.q[j] * (z[j] - zeta[j])).sum();
        assert!((dot - l.s).norm() < 1e-13);
        let fast = s.at_zeta(&zeta).unwrap().leray(&z);
        assert!((fast.s - l.s).norm() < 1e-13);
        for j in 0..2 {
            assert!((fast.q[j] - l.q[j]).norm() < 1e-13);
        }
    }

    #[test]
    fn leray_is_segment_average_of_gradient() {
        let e = DefiningDomain::ellipsoid(2);
        let p = SupportParams::for_domain(&e).with_constants(1.0, 1.0, 2.0);
        let s = Support::new(&e, SupportKind::DiederichFornaess(p)).unwrap();
        let z = [c64(0.1, 0.2), c64(-0.3, 0.1)];
        let zeta = [c64(0.8, -0.1), c64(0.4, 0.3)];
        // Gauss–Legendre on ∫₀¹ ∂S/∂z_j(ζ + t(z−ζ)) dt with a complex-step derivative
        let nodes = [(0.5 - 0.5 * (3.0f64 / 5.0).sqrt(), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + 0.5 * (3.0f64 / 5.0).sqrt(), 5.0 / 18.0)];
        for j in 0..2 {
            let mut acc = zero();
            for &(t, w) in &nodes {
                let p: Vec<C64> = (0..2).map(|k| zeta[k] + (z[k] - zeta[k]) * t).collect();
                let h = 1e-6;
                let mut pp = p.clone();
                pp[j] += h;
                let mut pm = p.clone();
                pm[j] -= h;
                let d = (s.s(&pp, &zeta).unwrap() - s.s(&pm, &zeta).unwrap()) / (2.0 * h);
                acc += d * w;
            }
            let q = s.leray(&z, &zeta).unwrap().q[j];
            assert!((acc - q).norm() < 1e-7, "{acc} vs {q}");
        }
    }

    #[test]
    fn holomorphic_in_z() {
        let e = DefiningDomain::ellipsoid(2);
        let p = SupportParams::for_domain(&e);
        let s = Support::new(&e, SupportKind::DiederichFornaess(p)).unwrap();
        let d = s.dbar_z_s(&[c64(0.1, 0.2), c64(0.3, -0.4)], &[c64(0.7, 0.1), c64(0.5, 0.2)]).unwrap();
        assert!(d.iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn odd_truncation_rejected() {
        let e = DefiningDomain::ellipsoid(2);
        let mut p = SupportParams::for_domain(&e);
        p.m_cap = 3;
        assert!(Support::new(&e, SupportKind::DiederichFornaess(p)).is_err());
    }
}
