//! Model convex domains with exact defining-function derivatives.
//!
//! A domain is `{ϱ < 0}` for a real polynomial `ϱ(z, z̄)`. Partial
//! derivatives `∂^α_z ∂^β_z̄ ϱ` are exact (symbolic on monomials), and every
//! evaluation is generic over [`Scalar`] so derivative jets flow through.

use crate::error::{Error, Result};
use crate::scalar::{c64, Scalar, C64};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Monomial `c · z^a · z̄^b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub c: C64,
}

/// Polynomial in `(z, z̄)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    pub n: usize,
    pub terms: Vec<Term>,
}

fn falling(k: u32, j: u32) -> f64 {
    (0..j).map(|i| (k - i) as f64).product()
}

fn binom(k: u32, j: u32) -> f64 {
    falling(k, j) / falling(j, j)
}

impl Poly {
    pub fn new(n: usize, terms: Vec<Term>) -> Self {
        let mut map: BTreeMap<(Vec<u32>, Vec<u32>), C64> = BTreeMap::new();
        for t in terms {
            assert_eq!(t.a.len(), n);
            assert_eq!(t.b.len(), n);
            *map.entry((t.a, t.b)).or_insert(c64(0.0, 0.0)) += t.c;
        }
        let terms = map
            .into_iter()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|((a, b), c)| Term { a, b, c })
            .collect();
        Self { n, terms }
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.a.iter().chain(&t.b).sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Hermitian symmetry `c_{a,b} = conj(c_{b,a})`, i.e. real values.
    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|t| {
            let mirror = self
                .terms
                .iter()
                .find(|s| s.a == t.b && s.b == t.a)
                .map(|s| s.c)
                .unwrap_or(c64(0.0, 0.0));
            (mirror - t.c.conj()).norm() <= 1e-14 * (1.0 + t.c.norm())
        })
    }

    fn powers<T: Scalar>(&self, z: &[T], deg: usize) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        let mut zp = Vec::with_capacity(self.n);
        let mut zbp = Vec::with_capacity(self.n);
        for &zj in z.iter().take(self.n) {
            let zbj = zj.conj();
            let mut p = vec![T::one()];
            let mut pb = vec![T::one()];
            for k in 1..=deg {
                p.push(p[k - 1] * zj);
                pb.push(pb[k - 1] * zbj);
            }
            zp.push(p);
            zbp.push(pb);
        }
        (zp, zbp)
    }

    pub fn eval<T: Scalar>(&self, z: &[T]) -> T {
        self.deriv(z, &vec![0; self.n], &vec![0; self.n])
    }

    /// `∂^α_z ∂^β_z̄` of the polynomial at `z`.
    pub fn deriv<T: Scalar>(&self, z: &[T], alpha: &[u32], beta: &[u32]) -> T {
        let deg = self.degree();
        let (zp, zbp) = self.powers(z, deg);
        let mut acc = T::zero();
        'terms: for t in &self.terms {
            let mut coef = t.c;
            for j in 0..self.n {
                if t.a[j] < alpha[j] || t.b[j] < beta[j] {
                    continue 'terms;
                }
                coef *= falling(t.a[j], alpha[j]) * falling(t.b[j], beta[j]);
            }
            let mut m = T::from_c64(coef);
            for j in 0..self.n {
                let ea = (t.a[j] - alpha[j]) as usize;
                let eb = (t.b[j] - beta[j]) as usize;
                if ea > 0 {
                    m *= zp[j][ea];
                }
                if eb > 0 {
                    m *= zbp[j][eb];
                }
            }
            acc += m;
        }
        acc
    }

    /// Taylor recentering: the polynomial `w ↦ p(ζ + w)` with exact coefficients.
    pub fn shifted(&self, zeta: &[C64]) -> Poly {
        let mut out: Vec<Term> = Vec::new();
        for t in &self.terms {
            // expand Π (ζ_j + w_j)^{a_j} (ζ̄_j + w̄_j)^{b_j}
            let mut partial: Vec<(Vec<u32>, Vec<u32>, C64)> =
                vec![(vec![0; self.n], vec![0; self.n], t.c)];
            for j in 0..self.n {
                let mut next = Vec::new();
                for (a, b, c) in &partial {
                    for ka in 0..=t.a[j] {
                        for kb in 0..=t.b[j] {
                            let f = binom(t.a[j], ka)
                                * binom(t.b[j], kb)
                                * zeta[j].powu(t.a[j] - ka)
                                * zeta[j].conj().powu(t.b[j] - kb);
                            let mut a2 = a.clone();
                            let mut b2 = b.clone();
                            a2[j] = ka;
                            b2[j] = kb;
                            next.push((a2, b2, c * f));
                        }
                    }
                }
                partial = next;
            }
            out.extend(partial.into_iter().map(|(a, b, c)| Term { a, b, c }));
        }
        Poly::new(self.n, out)
    }

    /// Drop the constant term.
    pub fn without_constant(&self) -> Poly {
        Poly {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|t| t.a.iter().chain(&t.b).any(|&e| e > 0))
                .cloned()
                .collect(),
        }
    }

    /// Real gradient in coordinates `(x₁, y₁, …, x_n, y_n)`.
    pub fn real_gradient(&self, z: &[C64]) -> Vec<f64> {
        let mut g = Vec::with_capacity(2 * self.n);
        for j in 0..self.n {
            let mut e = vec![0; self.n];
            e[j] = 1;
            let dz: C64 = self.deriv(z, &e, &vec![0; self.n]);
            // ∂/∂x = ∂ + ∂̄ = 2 Re ∂, ∂/∂y = i(∂ − ∂̄) = −2 Im ∂ for real ϱ
            g.push(2.0 * dz.re);
            g.push(-2.0 * dz.im);
        }
        g
    }

    /// Real Hessian in coordinates `(x₁, y₁, …, x_n, y_n)`.
    pub fn real_hessian(&self, z: &[C64]) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut h = vec![vec![0.0; 2 * n]; 2 * n];
        // ∂_x = ∂ + ∂̄, ∂_y = i(∂ − ∂̄)
        let d = |aj: usize, ak: usize, bj: usize, bk: usize, j: usize, k: usize| -> C64 {
            let mut alpha = vec![0u32; n];
            let mut beta = vec![0u32; n];
            alpha[j] += aj as u32;
            alpha[k] += ak as u32;
            beta[j] += bj as u32;
            beta[k] += bk as u32;
            self.deriv(z, &alpha, &beta)
        };
        let i = c64(0.0, 1.0);
        for j in 0..n {
            for k in 0..n {
                let zz = d(1, 1, 0, 0, j, k);
                let zbzb = d(0, 0, 1, 1, j, k);
                let zzb = d(1, 0, 0, 1, j, k); // ∂_j ∂̄_k
                let zbz = d(0, 1, 1, 0, j, k); // ∂̄_j ∂_k
                let xx = zz + zzb + zbz + zbzb;
                let xy = i * (zz - zzb + zbz - zbzb); // ∂x_j ∂y_k
                let yx = i * (zz + zzb - zbz - zbzb); // ∂y_j ∂x_k
                let yy = -(zz - zzb - zbz + zbzb);
                h[2 * j][2 * k] = xx.re;
                h[2 * j][2 * k + 1] = xy.re;
                h[2 * j + 1][2 * k] = yx.re;
                h[2 * j + 1][2 * k + 1] = yy.re;
            }
        }
        h
    }
}

/// Which model a domain is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Ball { radius: f64 },
    /// `|z₁|² + |z₂|^{2m} − 1`, type vector `(2m, 1)`.
    Ellipsoid { m: u32 },
    CustomPolynomial { terms: Vec<Term>, type_vector: Vec<u32> },
}

/// A domain `{ϱ < 0}` with its type data and collar width `T₁`.
#[derive(Clone, Debug)]
pub struct DefiningDomain {
    pub n: usize,
    pub kind: ModelKind,
    pub poly: Poly,
    pub type_vector: Vec<u32>,
    pub collar_width: f64,
    pub max_order: usize,
}

fn unit(n: usize, j: usize) -> Vec<u32> {
    let mut e = vec![0; n];
    e[j] = 1;
    e
}

impl DefiningDomain {
    pub fn ball(n: usize, radius: f64) -> Self {
        let mut terms: Vec<Term> = (0..n)
            .map(|j| Term {
                a: unit(n, j),
                b: unit(n, j),
                c: c64(1.0, 0.0),
            })
            .collect();
        terms.push(Term {
            a: vec![0; n],
            b: vec![0; n],
            c: c64(-radius * radius, 0.0),
        });
        let mut type_vector = vec![2; n];
        type_vector[n - 1] = 1;
        Self::finish(n, ModelKind::Ball { radius }, Poly::new(n, terms), type_vector)
    }

    /// `|z₁|² + |z₂|^{2m} − 1` in ℂ².
    pub fn ellipsoid(m: u32) -> Self {
        let terms = vec![
            Term {
                a: vec![1, 0],
                b: vec![1, 0],
                c: c64(1.0, 0.0),
            },
            Term {
                a: vec![0, m],
                b: vec![0, m],
                c: c64(1.0, 0.0),
            },
            Term {
                a: vec![0, 0],
                b: vec![0, 0],
                c: c64(-1.0, 0.0),
            },
        ];
        Self::finish(
            2,
            ModelKind::Ellipsoid { m },
            Poly::new(2, terms),
            vec![2 * m, 1],
        )
    }

    pub fn custom(n: usize, terms: Vec<Term>, type_vector: Vec<u32>) -> Result<Self> {
        let poly = Poly::new(n, terms.clone());
        if !poly.is_real() {
            return Err(Error::InvalidParameter(
                "custom polynomial is not real-valued".into(),
            ));
        }
        if type_vector.len() != n || type_vector[n - 1] != 1 {
            return Err(Error::InvalidParameter(format!(
                "type vector {type_vector:?} must have length {n} and end with 1"
            )));
        }
        if poly.eval(&vec![c64(0.0, 0.0); n]).re >= 0.0 {
            return Err(Error::InvalidParameter(
                "the origin must lie inside the domain".into(),
            ));
        }
        Ok(Self::finish(
            n,
            ModelKind::CustomPolynomial { terms, type_vector: type_vector.clone() },
            poly,
            type_vector,
        ))
    }

    pub fn from_kind(kind: &ModelKind) -> Result<Self> {
        match kind {
            ModelKind::Ball { radius } => Ok(Self::ball(2, *radius)),
            ModelKind::Ellipsoid { m } => {
                if *m == 0 {
                    return Err(Error::InvalidParameter("ellipsoid exponent m must be ≥ 1".into()));
                }
                Ok(Self::ellipsoid(*m))
            }
            ModelKind::CustomPolynomial { terms, type_vector } => {
                let n = terms.first().map(|t| t.a.len()).unwrap_or(2);
                Self::custom(n, terms.clone(), type_vector.clone())
            }
        }
    }

    fn finish(n: usize, kind: ModelKind, poly: Poly, type_vector: Vec<u32>) -> Self {
        let m = type_vector[0] as usize;
        let max_order = poly.degree().max(m + 2);
        let mut d = Self {
            n,
            kind,
            poly,
            type_vector,
            collar_width: 0.0,
            max_order,
        };
        d.collar_width = 0.2 * d.inradius();
        d
    }

    pub fn with_collar(mut self, t1: f64) -> Self {
        self.collar_width = t1;
        self
    }

    pub fn name(&self) -> String {
        match &self.kind {
            ModelKind::Ball { .. } => "ball".into(),
            ModelKind::Ellipsoid { m } => format!("ellipsoid_m{m}"),
            ModelKind::CustomPolynomial { .. } => "custom".into(),
        }
    }

    /// Largest declared type `m₁`.
    pub fn m1(&self) -> u32 {
        self.type_vector[0]
    }

    pub fn rho<T: Scalar>(&self, z: &[T]) -> T {
        self.poly.eval(z)
    }

    pub fn rho_f(&self, z: &[C64]) -> f64 {
        self.poly.eval(z).re
    }

    /// Exact `∂^α_z ∂^β_z̄ ϱ(z)`.
    pub fn rho_deriv(&self, z: &[C64], alpha: &[u32], beta: &[u32]) -> Result<C64> {
        let order = alpha.iter().chain(beta).sum::<u32>() as usize;
        if order > self.max_order {
            return Err(Error::OrderTooHigh {
                order,
                max: self.max_order,
            });
        }
        if alpha.len() != self.n || beta.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: alpha.len().min(beta.len()),
            });
        }
        Ok(self.poly.deriv(z, alpha, beta))
    }

    pub fn rho_deriv_generic<T: Scalar>(&self, z: &[T], alpha: &[u32], beta: &[u32]) -> T {
        self.poly.deriv(z, alpha, beta)
    }

    /// `(∂ϱ/∂z̄_j)_j`.
    pub fn dbar_rho<T: Scalar>(&self, z: &[T]) -> Vec<T> {
        let zero = vec![0; self.n];
        (0..self.n)
            .map(|j| self.poly.deriv(z, &zero, &unit(self.n, j)))
            .collect()
    }

    /// `(∂ϱ/∂z_j)_j`.
    pub fn d_rho<T: Scalar>(&self, z: &[T]) -> Vec<T> {
        let zero = vec![0; self.n];
        (0..self.n)
            .map(|j| self.poly.deriv(z, &unit(self.n, j), &zero))
            .collect()
    }

    /// Coefficients of the unit covector `θ̄₁ = ∂̄ϱ/|∂̄ϱ|`.
    pub fn theta1<T: Scalar>(&self, z: &[T]) -> Result<Vec<T>> {
        let g = self.dbar_rho(z);
        let mut nrm = T::zero();
        for &c in &g {
            nrm += c.abs2();
        }
        if nrm.value().norm() == 0.0 {
            return Err(Error::VanishingGradient);
        }
        let inv = nrm.sqrt().recip();
        Ok(g.into_iter().map(|c| c * inv).collect())
    }

    /// Minkowski gauge `μ(z)` with `ϱ(z/μ) = 0` (the origin lies inside).
    pub fn gauge(&self, z: &[C64]) -> f64 {
        match &self.kind {
            ModelKind::Ball { radius } => {
                z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt() / radius
            }
            ModelKind::Ellipsoid { m } => {
                // |z₁|² s + |z₂|^{2m} s^m = 1 with s = 1/μ²
                let a = z[0].norm_sqr();
                let b = z[1].norm_sqr().powi(*m as i32);
                if b == 0.0 {
                    return a.sqrt();
                }
                if *m == 2 {
                    let s = 2.0 / (a + (a * a + 4.0 * b).sqrt());
                    return 1.0 / s.sqrt();
                }
                self.gauge_numeric(z)
            }
            ModelKind::CustomPolynomial { .. } => self.gauge_numeric(z),
        }
    }

    fn gauge_numeric(&self, z: &[C64]) -> f64 {
        let nz = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if nz == 0.0 {
            return 0.0;
        }
        let f = |s: f64| {
            let p: Vec<C64> = z.iter().map(|c| c * s).collect();
            self.rho_f(&p)
        };
        let mut hi = 1.0 / nz;
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        1.0 / (0.5 * (lo + hi))
    }

    /// Gauge on jets: two Newton steps on `ϱ(s·z) = 0` from the converged root.
    pub fn gauge_generic<T: Scalar>(&self, z: &[T]) -> T {
        let z0: Vec<C64> = z.iter().map(|c| c.value()).collect();
        let mu0 = self.gauge(&z0);
        let mut s = T::from_f64(1.0 / mu0);
        for _ in 0..2 {
            let p: Vec<T> = z.iter().map(|&c| c * s).collect();
            let val = self.rho(&p);
            // d/ds ϱ(s z) = 2 Re Σ ∂ϱ/∂z_j(sz) z_j
            let d = self.d_rho(&p);
            let mut ds = T::zero();
            for j in 0..self.n {
                ds += d[j] * z[j];
            }
            ds = ds.re().scale_re(2.0);
            s = s - (val / ds).re();
        }
        s.recip()
    }

    /// Inradius about the origin: exact for the models, sampled otherwise.
    pub fn inradius(&self) -> f64 {
        match &self.kind {
            ModelKind::Ball { radius } => *radius,
            ModelKind::Ellipsoid { .. } => 1.0,
            ModelKind::CustomPolynomial { .. } => {
                let mut rng = crate::rng(0x1a2b);
                (0..2000)
                    .map(|_| {
                        let th = random_sphere(&mut rng, self.n);
                        1.0 / self.gauge(&th)
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Boundary point on the ray through the unit vector `theta`.
    pub fn boundary_point(&self, theta: &[C64]) -> Vec<C64> {
        let mu = self.gauge(theta);
        theta.iter().map(|c| c / mu).collect()
    }

    pub fn random_boundary_point<R: Rng>(&self, rng: &mut R) -> Vec<C64> {
        let th = random_sphere(rng, self.n);
        self.boundary_point(&th)
    }

    /// Euclidean distance to `{ϱ = 0}`.
    pub fn dist_to_boundary(&self, z: &[C64]) -> Result<f64> {
        nearest_on_level(&self.poly, z, 0.0).map(|(d, _)| d)
    }

    /// Nearest point of `{ϱ = 0}` to `z` together with the distance.
    pub fn nearest_boundary_point(&self, z: &[C64]) -> Result<(f64, Vec<C64>)> {
        nearest_on_level(&self.poly, z, 0.0)
    }

    /// Distance from `base + w` to the level set `{ϱ = ϱ(base)}`, computed in
    /// recentred coordinates so that tiny distances keep relative accuracy.
    pub fn dist_to_level(&self, local: &LocalPoly, w: &[C64]) -> Result<f64> {
        let val = local.p.eval(w).re;
        let g = local.p.real_gradient(w);
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gn == 0.0 {
            return Err(Error::VanishingGradient);
        }
        let d1 = val.abs() / gn;
        if d1 <= 1e-9 {
            return Ok(d1);
        }
        nearest_on_level(&local.p, w, 0.0).map(|(d, _)| d)
    }

    /// Recentred polynomial `w ↦ ϱ(ζ + w) − ϱ(ζ)`.
    pub fn local_at(&self, zeta: &[C64]) -> LocalPoly {
        LocalPoly {
            zeta: zeta.to_vec(),
            p: self.poly.shifted(zeta).without_constant(),
        }
    }

    /// Contact order of the real line `ζ + t·e^{iφ}v` with the level set through
    /// `ζ`, fitted over `t ∈ [2^{-14}, 2^{-6}]` (maximum over 8 phases per `t`).
    pub fn probe_line_type(&self, zeta: &[C64], v: &[C64]) -> Result<ProbeResult> {
        let local = self.local_at(zeta);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 6..=14 {
            let t = 2f64.powi(-k);
            let mut best = 0.0f64;
            for p in 0..8 {
                let ph = C64::from_polar(t, std::f64::consts::TAU * p as f64 / 8.0);
                let w: Vec<C64> = v.iter().map(|c| c * ph).collect();
                best = best.max(self.dist_to_level(&local, &w)?);
            }
            if best > 1e-300 {
                xs.push(t.ln());
                ys.push(best.ln());
            }
        }
        if xs.len() < 4 {
            return Ok(ProbeResult {
                order: PROBE_CAP,
                capped: true,
            });
        }
        let (slope, _, _) = crate::quadrature_estimates::linear_fit(&xs, &ys);
        Ok(ProbeResult {
            order: slope.min(PROBE_CAP),
            capped: slope >= PROBE_CAP,
        })
    }
}

/// Order reported when a direction is flatter than the probe range resolves.
pub const PROBE_CAP: f64 = 24.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    pub order: f64,
    pub capped: bool,
}

/// `ϱ(ζ + w) − ϱ(ζ)` as an exact polynomial in `w`.
#[derive(Clone, Debug)]
pub struct LocalPoly {
    pub zeta: Vec<C64>,
    pub p: Poly,
}

impl LocalPoly {
    pub fn delta(&self, w: &[C64]) -> f64 {
        self.p.eval(w).re
    }
}

fn to_real(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn to_complex(x: &[f64]) -> Vec<C64> {
    x.chunks(2).map(|p| c64(p[0], p[1])).collect()
}

/// Nearest point of `{p = level}` to `z`: tangent-plane projection iteration
/// (a projected-gradient scheme on the level set) followed by a Newton polish
/// of the Lagrange system.
fn nearest_on_level(p: &Poly, z: &[C64], level: f64) -> Result<(f64, Vec<C64>)> {
    let x = to_real(z);
    let dim = x.len();
    let f = |y: &[f64]| p.eval(&to_complex(y)).re - level;
    let grad = |y: &[f64]| p.real_gradient(&to_complex(y));
    let retract = |mut y: Vec<f64>| -> Result<Vec<f64>> {
        for _ in 0..100 {
            let v = f(&y);
            let g = grad(&y);
            let g2: f64 = g.iter().map(|a| a * a).sum();
            if g2 == 0.0 {
                return Err(Error::VanishingGradient);
            }
            let step = v / g2;
            for k in 0..dim {
                y[k] -= step * g[k];
            }
            let scale = 1.0 + y.iter().map(|a| a.abs()).fold(0.0, f64::max);
            if (step * g2.sqrt()).abs() <= 1e-16 * scale {
                return Ok(y);
            }
        }
        Ok(y)
    };
    let start = {
        let g0 = grad(&x);
        if g0.iter().all(|a| a.abs() < 1e-12) {
            // critical point of ϱ (e.g. the centre of a ball): step off it
            let mut y = x.clone();
            y[0] += 1e-3;
            y
        } else {
            x.clone()
        }
    };
    let mut pt = retract(start)?;
    let mut damping = 1.0;
    let mut prev = f64::INFINITY;
    let mut converged = false;
    for _ in 0..2000 {
        let g = grad(&pt);
        let gn = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nrm: Vec<f64> = g.iter().map(|a| a / gn).collect();
        let dot: f64 = (0..dim).map(|k| (x[k] - pt[k]) * nrm[k]).sum();
        let target: Vec<f64> = (0..dim).map(|k| x[k] - dot * nrm[k]).collect();
        let cand: Vec<f64> = (0..dim)
            .map(|k| pt[k] + damping * (target[k] - pt[k]))
            .collect();
        let cand = retract(cand)?;
        let d_new = dist(&cand, &x);
        if d_new > prev + 1e-15 && damping > 1e-3 {
            damping *= 0.5;
            continue;
        }
        let mv = dist(&cand, &pt);
        pt = cand;
        prev = d_new;
        if mv <= 1e-15 * (1.0 + d_new) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence("nearest point on level set".into()));
    }
    // Newton polish on (y − x + λ∇ϱ(y) = 0, ϱ(y) = 0).
    let g = grad(&pt);
    let g2: f64 = g.iter().map(|a| a * a).sum();
    let mut lam = -(0..dim).map(|k| (pt[k] - x[k]) * g[k]).sum::<f64>() / g2;
    let mut y = pt.clone();
    for _ in 0..3 {
        let g = grad(&y);
        let h = p.real_hessian(&to_complex(&y));
        let mut jac = nalgebra::DMatrix::<f64>::zeros(dim + 1, dim + 1);
        let mut rhs = nalgebra::DVector::<f64>::zeros(dim + 1);
        for i in 0..dim {
            for k in 0..dim {
                jac[(i, k)] = if i == k { 1.0 } else { 0.0 } + lam * h[i][k];
            }
            jac[(i, dim)] = g[i];
            jac[(dim, i)] = g[i];
            rhs[i] = -(y[i] - x[i] + lam * g[i]);
        }
        rhs[dim] = -f(&y);
        let Some(sol) = jac.lu().solve(&rhs) else { break };
        let mut y2 = y.clone();
        for i in 0..dim {
            y2[i] += sol[i];
        }
        let lam2 = lam + sol[dim];
        if dist(&y2, &x) > dist(&pt, &x) * (1.0 + 1e-6) + 1e-300 {
            break;
        }
        y = y2;
        lam = lam2;
    }
    let d = dist(&y, &x).min(dist(&pt, &x).max(dist(&y, &x)));
    Ok((d, to_complex(&y)))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Uniform point on the unit sphere of ℂⁿ.
pub fn random_sphere<R: Rng>(rng: &mut R, n: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..n)
            .map(|_| c64(crate::normal(rng), crate::normal(rng)))
            .collect();
        let nrm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 1e-12 {
            return v.into_iter().map(|c| c / nrm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_values() {
        let b = DefiningDomain::ball(2, 1.0);
        let zero = [c64(0.0, 0.0); 2];
        assert_eq!(b.rho_deriv(&zero, &[0, 0], &[0, 0]).unwrap(), c64(-1.0, 0.0));
        let z = [c64(0.3, -0.2), c64(0.1, 0.7)];
        assert_eq!(b.rho_deriv(&z, &[1, 0], &[1, 0]).unwrap(), c64(1.0, 0.0));
        assert!(matches!(
            b.rho_deriv(&z, &[3, 0], &[3, 0]),
            Err(Error::OrderTooHigh { .. })
        ));
    }

    #[test]
    fn ellipsoid_fourth_derivative() {
        let e = DefiningDomain::ellipsoid(2);
        let z = [c64(0.0, 0.0), c64(0.4, 0.1)];
        assert_eq!(e.rho_deriv(&z, &[0, 2], &[0, 2]).unwrap(), c64(4.0, 0.0));
    }

    #[test]
    fn distances() {
        let b = DefiningDomain::ball(2, 1.0);
        let d0 = b.dist_to_boundary(&[c64(0.0, 0.0), c64(0.0, 0.0)]);
        // every boundary point is nearest; the iteration still lands on one
        assert!((d0.unwrap() - 1.0).abs() < 1e-8);
        let d = b.dist_to_boundary(&[c64(0.9, 0.0), c64(0.0, 0.0)]).unwrap();
        assert!((d - 0.1).abs() < 1e-9);
        let e = DefiningDomain::ellipsoid(2);
        let d = e.dist_to_boundary(&[c64(0.0, 0.0), c64(0.5, 0.0)]).unwrap();
        assert!((d - 0.5).abs() < 1e-8, "{d}");
    }

    #[test]
    fn gauge_on_jets_matches_finite_differences() {
        use crate::scalar::Jet2;
        let e = DefiningDomain::ellipsoid(2);
        let z = [c64(0.6, 0.2), c64(0.3, -0.5)];
        let zj = [
            Jet2::<4>::complex_var(z[0], 0, 1),
            Jet2::<4>::complex_var(z[1], 2, 3),
        ];
        let g = e.gauge_generic(&zj);
        assert!((g.v.re - e.gauge(&z)).abs() < 1e-14);
        let h = 1e-5;
        let mut zp = z;
        zp[1] += c64(0.0, h);
        let mut zm = z;
        zm[1] -= c64(0.0, h);
        let fd = (e.gauge(&zp) - e.gauge(&zm)) / (2.0 * h);
        assert!((g.g[3].re - fd).abs() < 1e-8);
    }

    #[test]
    fn shifted_polynomial_agrees() {
        let e = DefiningDomain::ellipsoid(2);
        let zeta = [c64(0.5, 0.3), c64(-0.2, 0.6)];
        let loc = e.local_at(&zeta);
        let w = [c64(0.01, -0.03), c64(0.02, 0.05)];
        let p: Vec<C64> = zeta.iter().zip(&w).map(|(a, b)| a + b).collect();
        let direct = e.rho_f(&p) - e.rho_f(&zeta);
        assert!((loc.delta(&w) - direct).abs() < 1e-14);
    }
}
