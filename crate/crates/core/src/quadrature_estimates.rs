//! Stratified Monte Carlo over `Ω`, the collar `U₁ \ Ω̄` and anisotropic
//! shells, the Schur-test checker, and the weighted kernel experiments.
//!
//! A [`Sampler`] is a list of strata (boxes, balls, annuli around a singular
//! centre, or a polydisc ellipsoid `P_ε(ζ)`) plus a region predicate. Drawing
//! a [`PointSet`] fixes the random points once, so every integrand evaluated
//! on the same set shares its random numbers. Per stratum the estimator is
//! `V/N · Σ f 1_region` with the usual variance `V²/N · var(f 1_region)`.

use crate::domains::{random_sphere, DefiningDomain};
use crate::error::{Error, Result};
use crate::kernels::{kernel_deriv_norm, Part};
use crate::minimal_basis::{minimal_basis, BasisResult};
use crate::scalar::{c64, C64};
use crate::support_leray::{bounding_half_width, Support};
use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Least-squares line `y = a x + b`; returns `(a, b, stderr of a)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, icpt, se)
}

/// Volume of the unit ball of `ℂⁿ = ℝ^{2n}`.
pub fn unit_ball_volume(n: usize) -> f64 {
    PI.powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>()
}

/// A sampling cell with known volume.
#[derive(Clone, Debug)]
pub enum Cell {
    /// Axis box `center + [−half, half]^{2n}`.
    Box { center: Vec<C64>, half: f64 },
    /// `{r0 ≤ |w − center| < r1}`.
    Annulus { center: Vec<C64>, r0: f64, r1: f64 },
    /// The polydisc ellipsoid `P_ε(ζ)` of a minimal basis.
    Ellipsoid { basis: BasisResult },
}

impl Cell {
    pub fn volume(&self) -> f64 {
        match self {
            Cell::Box { center, half } => (2.0 * half).powi(2 * center.len() as i32),
            Cell::Annulus { center, r0, r1 } => {
                let d = 2 * center.len() as i32;
                unit_ball_volume(center.len()) * (r1.powi(d) - r0.powi(d))
            }
            Cell::Ellipsoid { basis } => {
                unit_ball_volume(basis.zeta.len()) * basis.taus.iter().map(|t| t * t).product::<f64>()
            }
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<C64> {
        match self {
            Cell::Box { center, half } => center
                .iter()
                .map(|c| c + c64(rng.random_range(-half..*half), rng.random_range(-half..*half)))
                .collect(),
            Cell::Annulus { center, r0, r1 } => {
                let n = center.len();
                let r = annulus_radius(rng, 2 * n, *r0, *r1);
                let u = random_sphere(rng, n);
                center.iter().zip(&u).map(|(c, d)| c + d * r).collect()
            }
            Cell::Ellipsoid { basis } => {
                let n = basis.zeta.len();
                let r = annulus_radius(rng, 2 * n, 0.0, 1.0);
                let u: Vec<C64> = random_sphere(rng, n).into_iter().map(|c| c * r).collect();
                basis.point(&u)
            }
        }
    }
}

fn annulus_radius<R: Rng>(rng: &mut R, d: usize, r0: f64, r1: f64) -> f64 {
    let u: f64 = rng.random();
    let d = d as i32;
    (r0.powi(d) + u * (r1.powi(d) - r0.powi(d))).powf(1.0 / d as f64)
}

/// Region predicate.
#[derive(Clone, Debug)]
pub enum Region {
    Everywhere,
    /// `ϱ < 0`.
    Interior,
    /// `0 < ϱ < T₁`.
    Collar,
    /// `P_ε(ζ) \ P_{ε/2}(ζ)` intersected with `Ω` (`inside`) or the collar.
    Shell {
        outer: BasisResult,
        inner: BasisResult,
        inside: bool,
    },
    /// `|w| < radius` and `ϱ ≥ 0`.
    BallMinusDomain { radius: f64 },
}

impl Region {
    pub fn contains(&self, domain: &DefiningDomain, w: &[C64]) -> bool {
        match self {
            Region::Everywhere => true,
            Region::Interior => domain.rho_f(w) < 0.0,
            Region::Collar => {
                let r = domain.rho_f(w);
                r > 0.0 && r < domain.collar_width
            }
            Region::Shell { outer, inner, inside } => {
                if outer.gauge(w) >= 1.0 || inner.gauge(w) < 1.0 {
                    return false;
                }
                let r = domain.rho_f(w);
                if *inside {
                    r < 0.0
                } else {
                    r > 0.0 && r < domain.collar_width
                }
            }
            Region::BallMinusDomain { radius } => {
                w.iter().map(|c| c.norm_sqr()).sum::<f64>() < radius * radius && domain.rho_f(w) >= 0.0
            }
        }
    }
}

/// One stratum: a cell and its share of the budget.
#[derive(Clone, Debug)]
pub struct Stratum {
    pub cell: Cell,
    pub share: f64,
}

/// Smallest number of draws given to any stratum.
pub const STRATUM_FLOOR: usize = 64;

/// Region plus stratification plan plus seed.
#[derive(Clone, Debug)]
pub struct Sampler {
    pub region: Region,
    pub strata: Vec<Stratum>,
    pub seed: u64,
}

/// Half-width of a box containing the region.
pub fn region_half_width(domain: &DefiningDomain, region: &Region) -> f64 {
    let a = bounding_half_width(domain);
    match region {
        Region::Interior => a,
        Region::BallMinusDomain { radius } => *radius,
        _ => a * (1.0 + domain.collar_width).sqrt() * 1.01,
    }
}

impl Sampler {
    /// A single box stratum covering the region.
    pub fn uniform(domain: &DefiningDomain, region: Region, seed: u64) -> Self {
        let half = region_half_width(domain, &region);
        Self {
            region,
            strata: vec![Stratum {
                cell: Cell::Box {
                    center: vec![c64(0.0, 0.0); domain.n],
                    half,
                },
                share: 1.0,
            }],
            seed,
        }
    }

    /// Dyadic annuli `r_min·2^k ≤ |w − center| < r_min·2^{k+1}` plus a core
    /// ball of radius `r_min`, all with equal shares, out to the region's
    /// bounding box.
    pub fn focused(domain: &DefiningDomain, region: Region, center: &[C64], r_min: f64, seed: u64) -> Self {
        let half = region_half_width(domain, &region);
        let cn = center.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let r_max = cn + half * (2.0 * domain.n as f64).sqrt();
        let mut strata = vec![Stratum {
            cell: Cell::Annulus {
                center: center.to_vec(),
                r0: 0.0,
                r1: r_min,
            },
            share: 1.0,
        }];
        let mut r = r_min;
        while r < r_max {
            strata.push(Stratum {
                cell: Cell::Annulus {
                    center: center.to_vec(),
                    r0: r,
                    r1: 2.0 * r,
                },
                share: 1.0,
            });
            r *= 2.0;
        }
        Self { region, strata, seed }
    }

    /// The shell `P_ε(ζ) \ P_{ε/2}(ζ)` on one side of the boundary.
    pub fn shell(outer: BasisResult, inner: BasisResult, inside: bool, seed: u64) -> Self {
        let cell = Cell::Ellipsoid { basis: outer.clone() };
        Self {
            region: Region::Shell { outer, inner, inside },
            strata: vec![Stratum { cell, share: 1.0 }],
            seed,
        }
    }

    /// Draw a point set with about `budget` draws in total.
    pub fn points(&self, domain: &DefiningDomain, budget: usize) -> PointSet {
        let mut rng = crate::rng(self.seed);
        let total: f64 = self.strata.iter().map(|s| s.share).sum();
        let mut set = PointSet {
            n: domain.n,
            points: Vec::new(),
            stratum: Vec::new(),
            strata: Vec::new(),
            seed: self.seed,
        };
        for (i, st) in self.strata.iter().enumerate() {
            let draws = ((budget as f64 * st.share / total).round() as usize).max(STRATUM_FLOOR);
            for _ in 0..draws {
                let p = st.cell.draw(&mut rng);
                if self.region.contains(domain, &p) {
                    set.points.push(p);
                    set.stratum.push(i);
                }
            }
            set.strata.push(StratumInfo {
                volume: st.cell.volume(),
                draws,
            });
        }
        set
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StratumInfo {
    pub volume: f64,
    pub draws: usize,
}

/// Fixed accepted points with their stratum bookkeeping.
#[derive(Clone, Debug)]
pub struct PointSet {
    pub n: usize,
    pub points: Vec<Vec<C64>>,
    pub stratum: Vec<usize>,
    pub strata: Vec<StratumInfo>,
    pub seed: u64,
}

impl PointSet {
    pub fn draws(&self) -> usize {
        self.strata.iter().map(|s| s.draws).sum()
    }

    /// Quadrature weight `V/N` of point `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let s = &self.strata[self.stratum[i]];
        s.volume / s.draws as f64
    }

    /// Keep only the points satisfying `keep` (the rest count as zeros).
    pub fn filtered(&self, keep: impl Fn(&[C64]) -> bool) -> PointSet {
        let mut out = PointSet {
            n: self.n,
            points: Vec::new(),
            stratum: Vec::new(),
            strata: self.strata.clone(),
            seed: self.seed,
        };
        for (p, &s) in self.points.iter().zip(&self.stratum) {
            if keep(p) {
                out.points.push(p.clone());
                out.stratum.push(s);
            }
        }
        out
    }
}

/// Monte Carlo estimate of a real integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Monte Carlo estimate of a complex integral; `stderr` combines both parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplexEstimate {
    pub value: C64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Largest tolerated fraction of non-finite integrand values (treated as 0).
pub const NONFINITE_TOLERANCE: f64 = 1e-3;

struct Acc {
    sum: Vec<C64>,
    sum2: Vec<f64>,
    bad: usize,
}

fn accumulate(points: &PointSet, mut f: impl FnMut(&[C64]) -> Result<C64>) -> Result<(C64, f64)> {
    let m = points.strata.len();
    let mut acc = Acc {
        sum: vec![c64(0.0, 0.0); m],
        sum2: vec![0.0; m],
        bad: 0,
    };
    for (p, &s) in points.points.iter().zip(&points.stratum) {
        let v = f(p)?;
        if !(v.re.is_finite() && v.im.is_finite()) {
            acc.bad += 1;
            continue;
        }
        acc.sum[s] += v;
        acc.sum2[s] += v.norm_sqr();
    }
    let allowed = ((points.draws() as f64) * NONFINITE_TOLERANCE).floor() as usize;
    if acc.bad > allowed {
        return Err(Error::NonFinite(acc.bad));
    }
    let mut value = c64(0.0, 0.0);
    let mut var = 0.0;
    for (i, st) in points.strata.iter().enumerate() {
        let n = st.draws as f64;
        let mean = acc.sum[i] / n;
        value += mean * st.volume;
        if st.draws > 1 {
            let sv = (acc.sum2[i] / n - mean.norm_sqr()).max(0.0) * n / (n - 1.0);
            var += st.volume * st.volume * sv / n;
        }
    }
    Ok((value, var.sqrt()))
}

/// `∫ f` over the point set's region.
pub fn integrate(points: &PointSet, mut f: impl FnMut(&[C64]) -> Result<f64>) -> Result<IntegralEstimate> {
    let (v, se) = accumulate(points, |p| f(p).map(|x| c64(x, 0.0)))?;
    Ok(IntegralEstimate {
        value: v.re,
        stderr: se,
        samples: points.draws(),
        seed: points.seed,
    })
}

pub fn integrate_complex(points: &PointSet, f: impl FnMut(&[C64]) -> Result<C64>) -> Result<ComplexEstimate> {
    let (v, se) = accumulate(points, f)?;
    Ok(ComplexEstimate {
        value: v,
        stderr: se,
        samples: points.draws(),
        seed: points.seed,
    })
}

/// Draw `budget` points from `sampler` and integrate `f`.
pub fn integrate_with(
    domain: &DefiningDomain,
    sampler: &Sampler,
    budget: usize,
    f: impl FnMut(&[C64]) -> Result<f64>,
) -> Result<IntegralEstimate> {
    integrate(&sampler.points(domain, budget), f)
}

// ---------------------------------------------------------------- Schur test

/// Outcome of a Schur test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchurReport {
    pub gamma: f64,
    /// `sup_x ∫ |G(x, y)|^γ dν(y)`.
    pub row_sup: f64,
    /// `sup_y ∫ |G(x, y)|^γ dμ(x)`.
    pub col_sup: f64,
    /// `max(row_sup, col_sup)^{1/γ}`.
    pub a: f64,
    /// `a` times the sampled-sup safety factor (equal to `a` for exact sups).
    pub a_reported: f64,
}

/// Safety factor applied to sampled ess-sups.
pub const SCHUR_SAFETY: f64 = 1.1;

/// Exponent `q` with `1/q = 1/p + 1/γ − 1` (`p`, `q` may be infinite).
pub fn schur_target_exponent(gamma: f64, p: f64) -> Result<f64> {
    if gamma < 1.0 {
        return Err(Error::InvalidParameter(format!("γ = {gamma} < 1")));
    }
    let inv = 1.0 / p + 1.0 / gamma - 1.0;
    if inv < -1e-15 {
        return Err(Error::InvalidParameter(format!(
            "no exponent q for γ = {gamma}, p = {p}"
        )));
    }
    Ok(if inv <= 1e-15 { f64::INFINITY } else { 1.0 / inv })
}

/// Schur test for a kernel sampled on weighted point lists (weights are the
/// measures `μ` of the `x` points and `ν` of the `y` points). The sups are
/// taken over the sampled points; with `sampled = true` the reported bound
/// carries [`SCHUR_SAFETY`].
pub fn schur_bound<X, Y>(
    g: impl Fn(&X, &Y) -> f64,
    gamma: f64,
    mu: &[(X, f64)],
    nu: &[(Y, f64)],
    sampled: bool,
) -> Result<SchurReport> {
    if gamma < 1.0 {
        return Err(Error::InvalidParameter(format!("γ = {gamma} < 1")));
    }
    let mut rows = vec![0.0; mu.len()];
    let mut cols = vec![0.0; nu.len()];
    for (i, (x, wx)) in mu.iter().enumerate() {
        for (j, (y, wy)) in nu.iter().enumerate() {
            let v = g(x, y).abs().powf(gamma);
            rows[i] += v * wy;
            cols[j] += v * wx;
        }
    }
    let row_sup = rows.iter().cloned().fold(0.0, f64::max);
    let col_sup = cols.iter().cloned().fold(0.0, f64::max);
    let a = row_sup.max(col_sup).powf(1.0 / gamma);
    Ok(SchurReport {
        gamma,
        row_sup,
        col_sup,
        a,
        a_reported: if sampled { a * SCHUR_SAFETY } else { a },
    })
}

/// Schur test for a matrix with counting measures.
pub fn schur_discrete(g: &[Vec<f64>], gamma: f64) -> Result<SchurReport> {
    let rows: Vec<(usize, f64)> = (0..g.len()).map(|i| (i, 1.0)).collect();
    let cols: Vec<(usize, f64)> = (0..g.first().map_or(0, |r| r.len())).map(|j| (j, 1.0)).collect();
    schur_bound(|&i, &j| g[i][j], gamma, &rows, &cols, false)
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().map(|x| x.abs()).fold(0.0, f64::max)
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `‖T‖_{p→q}` for `(Tf)_i = Σ_j g_ij f_j` with counting measures.
///
/// Exact for `p = 1` (the largest column `ℓ^q` norm, attained at a unit
/// vector) and for `p = q = ∞` (the largest absolute row sum); otherwise a
/// lower estimate from Boyd's power iteration on `|g|`, which is exact for
/// nonnegative matrices when `p ≤ q`.
pub fn operator_norm(g: &[Vec<f64>], p: f64, q: f64) -> f64 {
    let m = g.len();
    let k = g.first().map_or(0, |r| r.len());
    if p == 1.0 {
        return (0..k)
            .map(|j| lp_norm(&(0..m).map(|i| g[i][j]).collect::<Vec<_>>(), q))
            .fold(0.0, f64::max);
    }
    if p.is_infinite() && q.is_infinite() {
        return g
            .iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
    }
    let a: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(|x| x.abs()).collect()).collect();
    let pp = if p.is_infinite() { 1.0 } else { p / (p - 1.0) };
    let mut x = vec![1.0 / (k as f64).powf(1.0 / p.min(1e9)); k];
    let mut best = 0.0;
    for _ in 0..500 {
        let y: Vec<f64> = (0..m).map(|i| (0..k).map(|j| a[i][j] * x[j]).sum()).collect();
        let ny = lp_norm(&y, q);
        let nx = lp_norm(&x, p);
        if nx > 0.0 {
            best = f64::max(best, ny / nx);
        }
        if ny == 0.0 || q.is_infinite() {
            break;
        }
        // dual step: z = Aᵀ (y^{q−1}/‖y‖^{q−1}), x = z^{p'−1}
        let yd: Vec<f64> = y.iter().map(|v| (v / ny).powf(q - 1.0)).collect();
        let z: Vec<f64> = (0..k).map(|j| (0..m).map(|i| a[i][j] * yd[i]).sum()).collect();
        let xn: Vec<f64> = z.iter().map(|v| v.powf(pp - 1.0)).collect();
        let nn = lp_norm(&xn, p);
        if nn == 0.0 {
            break;
        }
        x = xn.iter().map(|v| v / nn).collect();
    }
    best
}

// ------------------------------------------------------------- exponent fits

/// Log-log least-squares fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Root-mean-square residual in natural-log units.
    pub residual: f64,
    pub levels: usize,
}

/// Fewest usable levels accepted by [`fit_exponent`].
pub const MIN_FIT_LEVELS: usize = 4;

/// Fit `value ≈ C dist^slope` over the points with finite positive entries.
pub fn fit_exponent(series: &[(f64, f64)]) -> Result<ExponentFit> {
    let usable: Vec<(f64, f64)> = series
        .iter()
        .filter(|(d, v)| d.is_finite() && v.is_finite() && *d > 0.0 && *v > 0.0)
        .map(|(d, v)| (d.ln(), v.ln()))
        .collect();
    if usable.len() < MIN_FIT_LEVELS {
        return Err(Error::TooFewLevels(usable.len()));
    }
    let x: Vec<f64> = usable.iter().map(|p| p.0).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.1).collect();
    let (slope, intercept, stderr) = linear_fit(&x, &y);
    let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(ExponentFit {
        slope,
        stderr,
        intercept,
        residual: (rss / x.len() as f64).sqrt(),
        levels: x.len(),
    })
}

// --------------------------------------------------------- type arithmetic

/// `r_q = (n − q + 1) m_q + 2q`.
pub fn r_q(n: usize, q: usize, m_q: u32) -> u64 {
    ((n - q + 1) as u64) * m_q as u64 + 2 * q as u64
}

/// `γ_q = r_q / (r_q − 1)` as an exact fraction.
pub fn gamma_q(n: usize, q: usize, m_q: u32) -> Ratio<i64> {
    let r = r_q(n, q, m_q) as i64;
    Ratio::new(r, r - 1)
}

/// `(n − p + 1)(1 − γ_p) + (2p − 1)(1 − γ_p)/m_p + 1/m_p`, exactly.
pub fn exponent_identity(n: usize, p: usize, m_p: u32) -> Ratio<i64> {
    let one = Ratio::from_integer(1);
    let g = gamma_q(n, p, m_p);
    let m = Ratio::from_integer(m_p as i64);
    Ratio::from_integer((n - p + 1) as i64) * (one - g)
        + Ratio::from_integer(2 * p as i64 - 1) * (one - g) / m
        + one / m
}

/// Predicted exponents of the weighted estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightedPrediction {
    pub top: f64,
    pub bot: f64,
    pub top_gamma: f64,
    pub bot_gamma: f64,
    /// `0 < s < k − 1 − 1/m_q`.
    pub admissible: bool,
}

pub fn weighted_prediction(n: usize, q: usize, m_q: u32, k: usize, s: f64) -> WeightedPrediction {
    let m = m_q as f64;
    let k = k as f64;
    let g = {
        let r = gamma_q(n, q, m_q);
        *r.numer() as f64 / *r.denom() as f64
    };
    WeightedPrediction {
        top: s + 1.0 + 1.0 / m - k,
        bot: s + 2.0 / m - k,
        top_gamma: (s + 1.0 - k) * g,
        bot_gamma: (s - k + 1.0 / m) * g,
        admissible: k >= 2.0 && s > 0.0 && s < k - 1.0 - 1.0 / m,
    }
}

/// `m_q` from the domain's type vector (`q` is one-based).
pub fn type_of(domain: &DefiningDomain, q: usize) -> u32 {
    domain.type_vector[q - 1]
}

// ------------------------------------------------------ kernel experiments

/// Which variable is held fixed in a weighted integral.
#[derive(Clone, Debug)]
pub enum Fixed {
    /// `z ∈ Ω` fixed, integrate over `ζ` in the collar.
    Z(Vec<C64>),
    /// `ζ` in the collar fixed, integrate over `z ∈ Ω`.
    Zeta(Vec<C64>),
}

/// Parameters of one weighted kernel integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSpec {
    /// Form degree `q` (the kernel is `K_{q−1}`).
    pub q: usize,
    pub k: usize,
    pub s: f64,
    pub part: Part,
    /// Raise `dist^s |D^k K|` to `γ_q` when set.
    pub gamma_power: bool,
}

/// `∫ dist^s |D^k K^{part}_{q−1}|` (or its `γ_q` power) over the free variable.
pub fn weighted_kernel_integral(
    support: &Support,
    spec: &WeightedSpec,
    fixed: &Fixed,
    budget: usize,
    seed: u64,
) -> Result<IntegralEstimate> {
    let domain = &support.domain;
    let g = {
        let r = gamma_q(domain.n, spec.q, type_of(domain, spec.q));
        *r.numer() as f64 / *r.denom() as f64
    };
    let power = if spec.gamma_power { g } else { 1.0 };
    let (center, region) = match fixed {
        Fixed::Z(z) => (z.clone(), Region::Collar),
        Fixed::Zeta(zeta) => (zeta.clone(), Region::Interior),
    };
    let d0 = domain.dist_to_boundary(&center)?;
    if d0 < 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "fixed point at distance {d0:e} from the boundary"
        )));
    }
    let sampler = Sampler::focused(domain, region, &center, d0, seed);
    let points = sampler.points(domain, budget);
    integrate(&points, |w| {
        let (z, zeta) = match fixed {
            Fixed::Z(z) => (z.as_slice(), w),
            Fixed::Zeta(zeta) => (w, zeta.as_slice()),
        };
        let dist = domain.dist_to_boundary(w)?;
        let d = kernel_deriv_norm(support, z, zeta, spec.q - 1, spec.k, spec.part)?;
        Ok((dist.powf(spec.s) * d).powf(power))
    })
}

/// Approach point `p − d·ν(p)` at distance `d` inside `Ω` from the boundary
/// point `p` (with `ν` the outward unit normal).
pub fn approach_point(domain: &DefiningDomain, p: &[C64], d: f64) -> Result<Vec<C64>> {
    let nu = outward_normal(domain, p)?;
    Ok(p.iter().zip(&nu).map(|(a, b)| a - b * d).collect())
}

/// Outward unit normal at `p`: the vector `(∂ϱ/∂z̄_j)` normalised.
pub fn outward_normal(domain: &DefiningDomain, p: &[C64]) -> Result<Vec<C64>> {
    domain.theta1(p)
}

/// One row of the experiment CSV schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub experiment_id: String,
    pub domain: String,
    pub q: usize,
    pub k: usize,
    pub s: f64,
    pub part: String,
    pub dist: f64,
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> anyhow::Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Weighted-estimate sweep over the approach distances `dists` toward the
/// boundary point `p`.
#[derive(Clone, Debug, Serialize)]
pub struct WeightedSweep {
    pub spec: WeightedSpec,
    pub rows: Vec<CsvRow>,
    pub fit: Option<ExponentFit>,
    pub predicted: f64,
    pub admissible: bool,
}

pub fn weighted_sweep(
    support: &Support,
    spec: &WeightedSpec,
    p: &[C64],
    dists: &[f64],
    budget: usize,
    seed: u64,
    experiment_id: &str,
) -> Result<WeightedSweep> {
    let domain = &support.domain;
    let pred = weighted_prediction(domain.n, spec.q, type_of(domain, spec.q), spec.k, spec.s);
    let predicted = match (spec.part, spec.gamma_power) {
        (Part::Bot, false) => pred.bot,
        (Part::Bot, true) => pred.bot_gamma,
        (_, false) => pred.top,
        (_, true) => pred.top_gamma,
    };
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (i, &d) in dists.iter().enumerate() {
        let z = approach_point(domain, p, d)?;
        let est = weighted_kernel_integral(support, spec, &Fixed::Z(z), budget, seed.wrapping_add(i as u64))?;
        series.push((d, est.value));
        rows.push(CsvRow {
            experiment_id: experiment_id.to_string(),
            domain: domain.name(),
            q: spec.q,
            k: spec.k,
            s: spec.s,
            part: format!("{}{}", spec.part.label(), if spec.gamma_power { "_gamma" } else { "" }),
            dist: d,
            value: est.value,
            stderr: est.stderr,
            samples: est.samples,
            seed: est.seed,
        });
    }
    Ok(WeightedSweep {
        spec: *spec,
        rows,
        fit: fit_exponent(&series).ok(),
        predicted,
        admissible: pred.admissible,
    })
}

/// Per-shell integrals and their fitted `ε`-exponents.
#[derive(Clone, Debug, Serialize)]
pub struct ShellSuite {
    pub q: usize,
    pub j: usize,
    pub rows: Vec<CsvRow>,
    /// Fits for `|D^j K^⊤|`, `|D^j K^⊥|`, `|D^j K^⊤|^{γ_q}`, `|D^j K^⊥|^{γ_q}`.
    pub fit_top: Option<ExponentFit>,
    pub fit_bot: Option<ExponentFit>,
    pub fit_top_gamma: Option<ExponentFit>,
    pub fit_bot_gamma: Option<ExponentFit>,
    /// Fit for the unprojected kernel, which is what the ⊥ bound controls.
    pub fit_full: Option<ExponentFit>,
    pub predicted_top: f64,
    pub predicted_bot: f64,
    pub predicted_top_gamma: f64,
    pub predicted_bot_gamma: f64,
}

/// Integrals of `|D^j K_{q−1}(w, ζ)|` over `w ∈ Ω ∩ P_ε(ζ) \ P_{ε/2}(ζ)` for a
/// point `ζ` just outside the boundary point `p`.
pub fn shell_integral_suite(
    support: &Support,
    p: &[C64],
    q: usize,
    j: usize,
    eps_sweep: &[f64],
    budget: usize,
    seed: u64,
) -> Result<ShellSuite> {
    let domain = &support.domain;
    let m = type_of(domain, q) as f64;
    let g = {
        let r = gamma_q(domain.n, q, type_of(domain, q));
        *r.numer() as f64 / *r.denom() as f64
    };
    let eps_min = eps_sweep.iter().cloned().fold(f64::INFINITY, f64::min);
    let nu = outward_normal(domain, p)?;
    let zeta: Vec<C64> = p.iter().zip(&nu).map(|(a, b)| a + b * (1e-4 * eps_min)).collect();
    let mut rows = Vec::new();
    let mut series: [Vec<(f64, f64)>; 5] = Default::default();
    let labels = ["top", "bot", "top_gamma", "bot_gamma", "full"];
    for (i, &eps) in eps_sweep.iter().enumerate() {
        let outer = minimal_basis(domain, &zeta, eps)?;
        let inner = minimal_basis(domain, &zeta, eps / 2.0)?;
        let points = Sampler::shell(outer, inner, true, seed.wrapping_add(i as u64)).points(domain, budget);
        let mut vals = Vec::new();
        for (pi, &part) in [Part::Top, Part::Bot, Part::Top, Part::Bot, Part::Full].iter().enumerate() {
            let power = if pi == 2 || pi == 3 { g } else { 1.0 };
            let est = integrate(&points, |w| {
                Ok(kernel_deriv_norm(support, w, &zeta, q - 1, j, part)?.powf(power))
            })?;
            vals.push(est);
        }
        for (pi, est) in vals.iter().enumerate() {
            series[pi].push((eps, est.value));
            rows.push(CsvRow {
                experiment_id: "shell".into(),
                domain: domain.name(),
                q,
                k: j,
                s: 0.0,
                part: labels[pi].into(),
                dist: eps,
                value: est.value,
                stderr: est.stderr,
                samples: est.samples,
                seed: est.seed,
            });
        }
    }
    let jf = j as f64;
    Ok(ShellSuite {
        q,
        j,
        rows,
        fit_top: fit_exponent(&series[0]).ok(),
        fit_bot: fit_exponent(&series[1]).ok(),
        fit_top_gamma: fit_exponent(&series[2]).ok(),
        fit_bot_gamma: fit_exponent(&series[3]).ok(),
        fit_full: fit_exponent(&series[4]).ok(),
        predicted_top: 1.0 / m + 1.0 - jf,
        predicted_bot: 2.0 / m - jf,
        predicted_top_gamma: (1.0 - jf) * g,
        predicted_bot_gamma: (1.0 / m - jf) * g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_volume_estimate() {
        let d = DefiningDomain::ball(2, 1.0);
        let s = Sampler::uniform(&d, Region::Interior, 7);
        let e = integrate_with(&d, &s, 40_000, |_| Ok(1.0)).unwrap();
        let exact = PI * PI / 2.0;
        assert!((e.value - exact).abs() < 3.0 * e.stderr + 1e-12, "{e:?}");
        let z = integrate_with(&d, &s, 1000, |_| Ok(0.0)).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn radial_singular_integral_on_annulus() {
        let d = DefiningDomain::ball(2, 1.0);
        let c = vec![c64(0.1, 0.0), c64(0.0, 0.2)];
        let s = Sampler {
            region: Region::Everywhere,
            strata: vec![Stratum {
                cell: Cell::Annulus {
                    center: c.clone(),
                    r0: 0.05,
                    r1: 0.4,
                },
                share: 1.0,
            }],
            seed: 3,
        };
        let e = integrate_with(&d, &s, 20_000, |w| {
            let r: f64 = w.iter().zip(&c).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            Ok(r.powi(-3))
        })
        .unwrap();
        // ∫ r^{-3} dV = 2π² ∫ r^{-3} r³ dr
        let exact = 2.0 * PI * PI * (0.4 - 0.05);
        assert!((e.value - exact).abs() < 3.0 * e.stderr + 1e-9, "{e:?} {exact}");
    }

    #[test]
    fn focused_strata_reproduce_volume() {
        let d = DefiningDomain::ball(2, 1.0);
        let s = Sampler::focused(&d, Region::Interior, &[c64(0.9, 0.0), c64(0.0, 0.0)], 0.01, 11);
        let e = integrate_with(&d, &s, 40_000, |_| Ok(1.0)).unwrap();
        assert!((e.value - PI * PI / 2.0).abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn schur_examples() {
        // G ≡ 1 on [0,1]² with Lebesgue measure (midpoint rule)
        let xs: Vec<(f64, f64)> = (0..50).map(|i| ((i as f64 + 0.5) / 50.0, 1.0 / 50.0)).collect();
        let r = schur_bound(|_, _| 1.0, 1.0, &xs, &xs, false).unwrap();
        assert!((r.a - 1.0).abs() < 1e-12);
        // 8×8 random nonnegative matrix
        let mut rng = crate::rng(5);
        let g: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| rng.random::<f64>()).collect()).collect();
        let r = schur_discrete(&g, 1.0).unwrap();
        assert!(operator_norm(&g, 1.0, 1.0) <= r.a + 1e-12);
        assert!(operator_norm(&g, f64::INFINITY, f64::INFINITY) <= r.a + 1e-12);
        let r2 = schur_discrete(&g, 2.0).unwrap();
        let q = schur_target_exponent(2.0, 1.0).unwrap();
        assert!((q - 2.0).abs() < 1e-12);
        assert!(operator_norm(&g, 1.0, 2.0) <= r2.a + 1e-10);
        assert!(schur_bound(|_: &f64, _: &f64| 1.0, 0.5, &xs, &xs, false).is_err());
    }

    #[test]
    fn power_iteration_matches_exact_two_norm() {
        // for p = q = 2 and a nonnegative matrix Boyd's iteration gives σ_max
        let g = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let sigma = (5.0 + 5f64.sqrt()) / 2.0; // symmetric: largest eigenvalue
        assert!((operator_norm(&g, 2.0, 2.0) - sigma).abs() < 1e-9);
    }

    #[test]
    fn fit_exact_power_and_too_few_levels() {
        let s: Vec<(f64, f64)> = (2..9).map(|j| (2f64.powi(-j), 2f64.powi(-j).powf(0.5))).collect();
        let f = fit_exponent(&s).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert_eq!(
            fit_exponent(&s[..3]).unwrap_err(),
            Error::TooFewLevels(3)
        );
        let zeros: Vec<(f64, f64)> = s.iter().map(|(d, _)| (*d, 0.0)).collect();
        assert_eq!(fit_exponent(&zeros).unwrap_err(), Error::TooFewLevels(0));
    }

    #[test]
    fn fit_with_noise() {
        let mut rng = crate::rng(9);
        let s: Vec<(f64, f64)> = (2..9)
            .map(|j| {
                let d = 2f64.powi(-j);
                (d, d.powf(0.5) * (1.0 + 0.05 * (2.0 * rng.random::<f64>() - 1.0)))
            })
            .collect();
        assert!((fit_exponent(&s).unwrap().slope - 0.5).abs() < 0.02);
    }

    #[test]
    fn type_arithmetic() {
        assert_eq!(r_q(2, 1, 2), 6);
        assert_eq!(r_q(2, 1, 4), 10);
        assert_eq!(gamma_q(2, 1, 4), Ratio::new(10, 9));
        for n in 2..=4 {
            for p in 1..n {
                for m in [2u32, 4, 6, 8] {
                    assert_eq!(exponent_identity(n, p, m), Ratio::from_integer(0));
                }
            }
        }
        let w = weighted_prediction(2, 1, 2, 2, 1.0);
        assert!((w.top - 0.5).abs() < 1e-15);
        assert!((w.bot - 0.0).abs() < 1e-15);
        assert!(!w.admissible);
        assert!(weighted_prediction(2, 1, 2, 2, 0.25).admissible);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let rows = vec![CsvRow {
            experiment_id: "e".into(),
            domain: "ball".into(),
            q: 1,
            k: 2,
            s: 1.0,
            part: "top".into(),
            dist: 0.25,
            value: 3.5,
            stderr: 0.1,
            samples: 100,
            seed: 4,
        }];
        write_csv(&p, &rows).unwrap();
        assert_eq!(read_csv(&p).unwrap(), rows);
    }
}
