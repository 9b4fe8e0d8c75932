//! ε-minimal bases, the radii `τ_j(ζ, ε)` and the sets `P_ε(ζ)`.
//!
//! `τ(ζ, v, ε)` is the largest `c` with `|ϱ(ζ + λv) − ϱ(ζ)| ≤ ε` for `|λ| ≤ c`.
//! Along a complex line the increment `Δϱ(λv)` is a polynomial in `(λ, λ̄)`,
//! so it is expanded once per direction and then evaluated on circles cheaply.
//! Convexity makes the circle maximum of `|Δϱ|` monotone in the radius, and it
//! also makes `τ` equal to the distance from `ζ` to the level set
//! `{ϱ = ϱ(ζ) + ε}` along `ζ + ℂv`, which is the quantity the greedy basis
//! minimizes.

use crate::domains::{random_sphere, DefiningDomain, LocalPoly};
use crate::error::{Error, Result};
use crate::scalar::{c64, C64};
use rand::Rng;
use std::collections::BTreeMap;

/// Number of angles used for circle maxima.
pub const CIRCLE_ANGLES: usize = 64;

/// `Δϱ(λv) = Σ c_{ab} λ^a λ̄^b` for a fixed direction `v`.
#[derive(Clone, Debug)]
pub struct LinePoly {
    terms: Vec<(u32, u32, C64)>,
}

impl LinePoly {
    pub fn new(local: &LocalPoly, v: &[C64]) -> Self {
        let mut map: BTreeMap<(u32, u32), C64> = BTreeMap::new();
        for t in &local.p.terms {
            let mut c = t.c;
            for j in 0..v.len() {
                c *= v[j].powu(t.a[j]) * v[j].conj().powu(t.b[j]);
            }
            let key = (t.a.iter().sum(), t.b.iter().sum());
            *map.entry(key).or_insert(c64(0.0, 0.0)) += c;
        }
        Self {
            terms: map.into_iter().map(|((a, b), c)| (a, b, c)).collect(),
        }
    }

    pub fn eval(&self, lambda: C64) -> f64 {
        let r = lambda.norm();
        let th = lambda.arg();
        self.terms
            .iter()
            .map(|&(a, b, c)| {
                let ph = C64::from_polar(1.0, (a as f64 - b as f64) * th);
                (c * ph).re * r.powi((a + b) as i32)
            })
            .sum()
    }

    /// `max_θ Δϱ(c e^{iθ} v)` over [`CIRCLE_ANGLES`] angles.
    pub fn circle_max(&self, c: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for k in 0..CIRCLE_ANGLES {
            let th = std::f64::consts::TAU * k as f64 / CIRCLE_ANGLES as f64;
            let mut s = 0.0;
            for &(a, b, co) in &self.terms {
                let ph = C64::from_polar(1.0, (a as f64 - b as f64) * th);
                s += (co * ph).re * c.powi((a + b) as i32);
            }
            best = best.max(s.abs());
        }
        best
    }

    /// Largest `c` with `circle_max(c) ≤ eps`, to relative accuracy `1e-12`.
    pub fn tau(&self, eps: f64, hint: Option<f64>) -> f64 {
        let (mut lo, mut hi) = match hint {
            Some(h) if h > 0.0 => (h / 1.5, h * 1.5),
            _ => (0.0, eps.sqrt().max(eps)),
        };
        while self.circle_max(lo) > eps {
            hi = lo;
            lo *= 0.25;
            if lo < 1e-300 {
                return 0.0;
            }
        }
        while self.circle_max(hi) <= eps {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return f64::INFINITY;
            }
        }
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if self.circle_max(mid) <= eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn check_scale(domain: &DefiningDomain, eps: f64) -> Result<()> {
    if !(eps > 0.0) || eps > 0.5 * domain.collar_width {
        return Err(Error::ScaleTooLarge(eps));
    }
    Ok(())
}

/// `τ(ζ, v, ε)` for a unit vector `v`.
pub fn tau(domain: &DefiningDomain, zeta: &[C64], v: &[C64], eps: f64) -> Result<f64> {
    check_scale(domain, eps)?;
    let local = domain.local_at(zeta);
    Ok(LinePoly::new(&local, &normalize(v)).tau(eps, None))
}

/// An ε-minimal basis at `ζ`.
#[derive(Clone, Debug)]
pub struct BasisResult {
    pub zeta: Vec<C64>,
    pub eps: f64,
    /// Orthonormal vectors `v₁..v_n`.
    pub vectors: Vec<Vec<C64>>,
    pub taus: Vec<f64>,
    /// Number of distinct optimal directions found per step (1 for a unique minimizer).
    pub multiplicity: Vec<usize>,
    /// Whether every multi-start run met the objective tolerance.
    pub converged: bool,
}

impl BasisResult {
    /// Basis coordinates `a = V†(z − ζ)`.
    pub fn coords(&self, z: &[C64]) -> Vec<C64> {
        self.vectors
            .iter()
            .map(|v| v.iter().zip(z.iter().zip(&self.zeta)).map(|(vj, (zj, cj))| vj.conj() * (zj - cj)).sum())
            .collect()
    }

    /// `(Σ |a_j|²/τ_j²)^{1/2}`; the set `P_ε(ζ)` is `{gauge < 1}`.
    pub fn gauge(&self, z: &[C64]) -> f64 {
        self.coords(z)
            .iter()
            .zip(&self.taus)
            .map(|(a, t)| a.norm_sqr() / (t * t))
            .sum::<f64>()
            .sqrt()
    }

    /// Point `ζ + Σ τ_j a_j v_j` from unit-scaled basis coordinates.
    pub fn point(&self, a: &[C64]) -> Vec<C64> {
        let mut p = self.zeta.clone();
        for (k, v) in self.vectors.iter().enumerate() {
            for j in 0..p.len() {
                p[j] += a[k] * self.taus[k] * v[j];
            }
        }
        p
    }

    pub fn ellipsoid(&self) -> PolyEllipsoid {
        PolyEllipsoid { basis: self.clone() }
    }
}

/// The set `P_ε(ζ) = {ζ + Σ a_j v_j : Σ |a_j|²/τ_j² < 1}`.
#[derive(Clone, Debug)]
pub struct PolyEllipsoid {
    pub basis: BasisResult,
}

impl PolyEllipsoid {
    pub fn center(&self) -> &[C64] {
        &self.basis.zeta
    }

    pub fn contains(&self, z: &[C64]) -> bool {
        self.basis.gauge(z) < 1.0
    }

    /// Membership in the dilate `c · P_ε(ζ)` (dilated about ζ).
    pub fn dilate_contains(&self, c: f64, z: &[C64]) -> bool {
        self.basis.gauge(z) < c
    }
}

/// Options for the multi-start direction search.
#[derive(Clone, Debug)]
pub struct BasisOptions {
    pub starts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iters: 200,
            tol: 1e-6,
            seed: 0x5eed,
        }
    }
}

fn normalize(v: &[C64]) -> Vec<C64> {
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.iter().map(|c| c / n).collect()
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// First coordinate with modulus above `1e-9` made real and positive.
pub fn phase_normalize(v: &[C64]) -> Vec<C64> {
    let Some(c) = v.iter().find(|c| c.norm() > 1e-9) else {
        return v.to_vec();
    };
    let ph = c.conj() / c.norm();
    v.iter().map(|x| x * ph).collect()
}

/// Orthonormal basis of the orthocomplement of `vs` in ℂⁿ.
fn orthocomplement(n: usize, vs: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let mut rows: Vec<Vec<C64>> = vs.to_vec();
    let mut out = Vec::new();
    for j in 0..n {
        let mut e = vec![c64(0.0, 0.0); n];
        e[j] = c64(1.0, 0.0);
        for r in &rows {
            let ip = inner(r, &e);
            for k in 0..n {
                e[k] -= ip * r[k];
            }
        }
        let nr = e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if nr > 1e-6 {
            let u: Vec<C64> = e.iter().map(|c| c / nr).collect();
            rows.push(u.clone());
            out.push(u);
        }
    }
    out
}

fn embed(w: &[Vec<C64>], x: &[C64]) -> Vec<C64> {
    let n = w[0].len();
    let mut v = vec![c64(0.0, 0.0); n];
    for (k, wk) in w.iter().enumerate() {
        for j in 0..n {
            v[j] += x[k] * wk[j];
        }
    }
    v
}

/// Minimize `τ` over unit vectors of `span(w)` by projected gradient descent
/// from one start; returns `(x, τ, converged)` in `w`-coordinates.
fn descend(
    local: &LocalPoly,
    w: &[Vec<C64>],
    x0: Vec<C64>,
    eps: f64,
    opts: &BasisOptions,
) -> (Vec<C64>, f64, bool) {
    let d = w.len();
    let obj = |x: &[C64], hint: Option<f64>| LinePoly::new(local, &embed(w, x)).tau(eps, hint);
    let mut x = normalize(&x0);
    let mut f = obj(&x, None);
    let mut step = 0.1;
    let h = 1e-5;
    for _ in 0..opts.max_iters {
        // finite-difference gradient in the 2d real coordinates
        let mut g = vec![c64(0.0, 0.0); d];
        for k in 0..d {
            for (part, unit) in [(0, c64(1.0, 0.0)), (1, c64(0.0, 1.0))] {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += unit * h;
                xm[k] -= unit * h;
                let df = (obj(&normalize(&xp), Some(f)) - obj(&normalize(&xm), Some(f))) / (2.0 * h);
                if part == 0 {
                    g[k].re = df;
                } else {
                    g[k].im = df;
                }
            }
        }
        // tangent projection: drop the radial and phase directions
        let ip = inner(&x, &g);
        for k in 0..d {
            g[k] -= ip.re * x[k];
            g[k] -= c64(0.0, ip.im) * x[k];
        }
        let gn = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if gn < 1e-14 * f.max(1e-300) {
            return (x, f, true);
        }
        let mut improved = false;
        while step > 1e-10 {
            let cand: Vec<C64> = (0..d).map(|k| x[k] - g[k] * (step / gn)).collect();
            let cand = normalize(&cand);
            let fc = obj(&cand, Some(f));
            if fc < f {
                let rel = (f - fc) / f;
                x = cand;
                f = fc;
                step *= 1.5;
                improved = true;
                if rel < opts.tol * 1e-3 {
                    return (x, f, true);
                }
                break;
            }
            step *= 0.5;
        }
        if !improved {
            return (x, f, true);
        }
    }
    (x, f, false)
}

/// Greedy ε-minimal basis at `ζ` with the default options.
pub fn minimal_basis(domain: &DefiningDomain, zeta: &[C64], eps: f64) -> Result<BasisResult> {
    minimal_basis_with(domain, zeta, eps, &BasisOptions::default())
}

pub fn minimal_basis_with(
    domain: &DefiningDomain,
    zeta: &[C64],
    eps: f64,
    opts: &BasisOptions,
) -> Result<BasisResult> {
    check_scale(domain, eps)?;
    let n = domain.n;
    let local = domain.local_at(zeta);
    // complex normal vector (∂ϱ/∂ζ̄_j)_j, normalized
    let normal = domain.theta1(zeta)?;
    let mut rng = crate::rng(opts.seed);
    let mut vectors: Vec<Vec<C64>> = Vec::new();
    let mut taus = Vec::new();
    let mut multiplicity = Vec::new();
    let mut converged = true;
    for _ in 0..n {
        let w = orthocomplement(n, &vectors);
        let d = w.len();
        if d == 1 {
            let v = phase_normalize(&w[0]);
            taus.push(LinePoly::new(&local, &v).tau(eps, None));
            vectors.push(v);
            multiplicity.push(1);
            continue;
        }
        let mut results: Vec<(Vec<C64>, f64)> = Vec::new();
        for s in 0..opts.starts {
            let x0: Vec<C64> = if s == 0 {
                let proj: Vec<C64> = w.iter().map(|wk| inner(wk, &normal)).collect();
                if proj.iter().map(|c| c.norm_sqr()).sum::<f64>() > 1e-12 {
                    proj
                } else {
                    random_sphere(&mut rng, d)
                }
            } else {
                random_sphere(&mut rng, d)
            };
            let (x, f, ok) = descend(&local, &w, x0, eps, opts);
            converged &= ok;
            results.push((embed(&w, &x), f));
        }
        results.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = results[0].clone();
        let mut distinct: Vec<Vec<C64>> = vec![best.0.clone()];
        for (v, f) in &results[1..] {
            if (f - best.1).abs() <= 1e-4 * best.1
                && distinct.iter().all(|u| inner(u, v).norm() < 1.0 - 1e-3)
            {
                distinct.push(v.clone());
            }
        }
        multiplicity.push(distinct.len());
        let v = phase_normalize(&normalize(&best.0));
        taus.push(best.1);
        vectors.push(v);
    }
    Ok(BasisResult {
        zeta: zeta.to_vec(),
        eps,
        vectors,
        taus,
        multiplicity,
        converged,
    })
}

/// Largest dyadic `ε ≤ T₁/2` whose `P_ε(ζ)` stays inside the collar at every probe point.
pub fn eps0(domain: &DefiningDomain, probes: &[Vec<C64>]) -> Result<f64> {
    let mut k = 1;
    let mut eps = 2f64.powi(-k);
    while eps > 0.5 * domain.collar_width {
        k += 1;
        eps = 2f64.powi(-k);
    }
    let mut rng = crate::rng(0xe0);
    'outer: while k < 40 {
        for z in probes {
            let b = minimal_basis(domain, z, eps)?;
            for _ in 0..64 {
                let a = random_sphere(&mut rng, domain.n);
                if domain.rho_f(&b.point(&a)).abs() >= domain.collar_width {
                    k += 1;
                    eps = 2f64.powi(-k);
                    continue 'outer;
                }
            }
        }
        return Ok(eps);
    }
    Err(Error::NoConvergence("no admissible ε₀".into()))
}

/// Constants realizing the two inclusions of the engulfing property.
#[derive(Clone, Debug)]
pub struct EngulfReport {
    pub eps: f64,
    /// Smallest `C` with `P_ε(ζ') ⊆ C·P_{ε/2}(ζ)` over the trials.
    pub contain: f64,
    /// Smallest dyadic `C` with `2P_ε(ζ') ⊆ P_{Cε}(ζ)` over the trials.
    pub scale: f64,
    pub trials: usize,
}

/// Monte Carlo check of the engulfing inclusions at `(ζ, ε)`.
pub fn engulf_check<R: Rng>(
    domain: &DefiningDomain,
    zeta: &[C64],
    eps: f64,
    trials: usize,
    rng: &mut R,
) -> Result<EngulfReport> {
    let n = domain.n;
    let b_eps = minimal_basis(domain, zeta, eps)?;
    let b_half = minimal_basis(domain, zeta, eps / 2.0)?;
    let mut scaled: Vec<(f64, BasisResult)> = Vec::new();
    let mut contain = 0.0f64;
    let mut scale = 1.0f64;
    let boundary_samples = 48;
    for t in 0..trials {
        let zp = if t == 0 {
            zeta.to_vec()
        } else {
            let dir = random_sphere(rng, n);
            let r: f64 = rng.random::<f64>().powf(1.0 / (2 * n) as f64);
            let a: Vec<C64> = dir.iter().map(|c| c * r).collect();
            b_eps.point(&a)
        };
        let bp = minimal_basis(domain, &zp, eps)?;
        let pts: Vec<Vec<C64>> = (0..boundary_samples)
            .map(|_| bp.point(&random_sphere(rng, n)))
            .collect();
        for p in &pts {
            contain = contain.max(b_half.gauge(p));
        }
        let doubled: Vec<Vec<C64>> = pts
            .iter()
            .map(|p| p.iter().zip(&zp).map(|(x, c)| c + (x - c) * 2.0).collect())
            .collect();
        let mut c = scale;
        loop {
            let idx = scaled.iter().position(|(s, _)| *s == c);
            let basis = match idx {
                Some(i) => &scaled[i].1,
                None => {
                    if c * eps > 0.5 * domain.collar_width {
                        return Err(Error::ScaleTooLarge(c * eps));
                    }
                    scaled.push((c, minimal_basis(domain, zeta, c * eps)?));
                    &scaled.last().unwrap().1
                }
            };
            if doubled.iter().all(|p| basis.gauge(p) < 1.0) {
                break;
            }
            c *= 2.0;
        }
        scale = scale.max(c);
    }
    Ok(EngulfReport {
        eps,
        contain,
        scale,
        trials,
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
    fn tau_closed_forms() {
        let b = DefiningDomain::ball(2, 1.0);
        let zeta = [one(), zero()];
        let t1 = tau(&b, &zeta, &[one(), zero()], 0.01).unwrap();
        assert!((t1 - (1.01f64.sqrt() - 1.0)).abs() < 1e-4 * t1);
        let t2 = tau(&b, &zeta, &[zero(), one()], 0.01).unwrap();
        assert!((t2 - 0.1).abs() < 1e-5);
        let e = DefiningDomain::ellipsoid(2);
        let t = tau(&e, &zeta, &[zero(), one()], 1e-4).unwrap();
        assert!((t - 0.1).abs() < 1e-5);
        assert!(matches!(tau(&b, &zeta, &[one(), zero()], 0.5), Err(Error::ScaleTooLarge(_))));
    }

    #[test]
    fn ball_basis_splits_radial_and_tangential() {
        let b = DefiningDomain::ball(2, 1.0);
        let r = minimal_basis(&b, &[one(), zero()], 0.01).unwrap();
        assert!(r.vectors[0][0].norm() > 1.0 - 1e-5, "{:?}", r.vectors);
        assert!(r.vectors[1][1].norm() > 1.0 - 1e-5);
        assert!((r.taus[0] - 4.9876e-3).abs() < 1e-6);
        assert!((r.taus[1] - 0.1).abs() < 1e-5);
        assert!(r.taus[0] <= r.taus[1]);
    }

    #[test]
    fn ellipsoid_flat_direction() {
        let e = DefiningDomain::ellipsoid(2);
        let r = minimal_basis(&e, &[one(), zero()], 1e-4).unwrap();
        assert!((r.taus[1] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn self_inclusion_constant_at_least_one() {
        let b = DefiningDomain::ball(2, 1.0);
        let mut rng = crate::rng(3);
        let rep = engulf_check(&b, &[one(), zero()], 1e-3, 1, &mut rng).unwrap();
        assert!(rep.contain >= 1.0);
        assert!(rep.scale >= 1.0);
    }
}
