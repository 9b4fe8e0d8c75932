//! Exterior algebra of complex differential forms on the product ℂⁿ × ℂⁿ with
//! coordinates `z` and `ζ`, plus the ∂̄-vertical (⊥) and ∂̄-tangential (⊤)
//! projections.
//!
//! Generators are ordered `dz₁..dz_n, dz̄₁..dz̄_n, dζ₁..dζ_n, dζ̄₁..dζ̄_n` and a
//! monomial is stored as a bitmask in that order, so a coefficient always
//! multiplies the wedge of its generators in increasing order.
//!
//! Integration convention: for a form in `(ζ, z)` the integral over `ζ` acts as
//! `∫ u dζ^I ∧ dz̄^J := (∫ u dζ^I) dz̄^J`. Top-degree forms in `ζ` have even
//! degree, so moving `dz̄^J` to the right never changes a sign, and
//! `dζ₁∧…∧dζ_n∧dζ̄₁∧…∧dζ̄_n = (−1)^{n(n−1)/2} (−2i)^n dV` (equal to `4 dV` for
//! `n = 2`), see [`zeta_volume_factor`].
//!
//! Indices in the public API are zero-based.

use crate::error::{Error, Result};
use crate::scalar::{c64, Scalar, C64};
use rand::Rng;
use std::collections::BTreeMap;

/// Which coordinate block a generator belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    Z,
    Zeta,
}

/// A single generator `dz_j`, `dz̄_j`, `dζ_j` or `dζ̄_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gen {
    Dz(usize),
    Dzb(usize),
    Dzeta(usize),
    Dzetab(usize),
}

impl Gen {
    fn bit(self, n: usize) -> u32 {
        let (block, j) = match self {
            Gen::Dz(j) => (0, j),
            Gen::Dzb(j) => (1, j),
            Gen::Dzeta(j) => (2, j),
            Gen::Dzetab(j) => (3, j),
        };
        assert!(j < n, "generator index {j} out of range for n={n}");
        1u32 << (block * n + j)
    }
}

/// Strictly increasing tuple of zero-based indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "multi-index {entries:?} not strictly increasing"
            )));
        }
        Ok(Self(entries))
    }
    pub fn entries(&self) -> &[usize] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The four index sets of a monomial `dz^I ∧ dz̄^J ∧ dζ^K ∧ dζ̄^L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Key {
    pub dz: MultiIndex,
    pub dzb: MultiIndex,
    pub dzeta: MultiIndex,
    pub dzetab: MultiIndex,
}

/// Bidegree record `(z holomorphic, z antiholomorphic, ζ holomorphic, ζ antiholomorphic)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Degree {
    pub z: usize,
    pub zb: usize,
    pub zeta: usize,
    pub zetab: usize,
}

impl Degree {
    pub fn total(&self) -> usize {
        self.z + self.zb + self.zeta + self.zetab
    }
}

/// Sparse form with coefficients of scalar type `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Form<T: Scalar = C64> {
    n: usize,
    coeffs: BTreeMap<u32, T>,
}

fn block_mask(n: usize, block: usize) -> u32 {
    ((1u32 << n) - 1) << (block * n)
}

/// Sign of `A ∧ B` reordered into increasing generator order: parity of the
/// pairs `(a ∈ A, b ∈ B)` with `a > b`.
fn merge_sign(a: u32, b: u32) -> f64 {
    let mut inversions = 0u32;
    let mut bb = b;
    while bb != 0 {
        let bit = bb.trailing_zeros();
        bb &= bb - 1;
        // generators of `a` strictly above `bit`
        let above = if bit >= 31 { 0 } else { a & !((2u32 << bit) - 1) };
        inversions += above.count_ones();
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl<T: Scalar> Form<T> {
    pub fn zero(n: usize) -> Self {
        assert!((1..=4).contains(&n), "dimension {n} unsupported");
        Self {
            n,
            coeffs: BTreeMap::new(),
        }
    }

    /// The constant 0-form `c`.
    pub fn scalar(n: usize, c: T) -> Self {
        let mut f = Self::zero(n);
        f.add_term(0, c);
        f
    }

    /// The 1-form `c · g`.
    pub fn gen(n: usize, g: Gen, c: T) -> Self {
        let mut f = Self::zero(n);
        f.add_term(g.bit(n), c);
        f
    }

    /// Wedge of the given generators (in the given order) times `c`; zero on repeats.
    pub fn monomial(n: usize, gens: &[Gen], c: T) -> Self {
        let mut f = Self::scalar(n, c);
        for &g in gens {
            f = f.wedge(&Self::gen(n, g, T::one()));
        }
        f
    }

    /// One-form `Σ_j v_j dz_j` (or the analogous block).
    pub fn one_form(n: usize, make: fn(usize) -> Gen, v: &[T]) -> Self {
        let mut f = Self::zero(n);
        for (j, &c) in v.iter().enumerate() {
            f.add_term(make(j).bit(n), c);
        }
        f
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn add_term(&mut self, mask: u32, c: T) {
        if c.is_exact_zero() {
            return;
        }
        let e = self.coeffs.entry(mask).or_insert_with(T::zero);
        *e += c;
        if e.is_exact_zero() {
            self.coeffs.remove(&mask);
        }
    }

    pub fn degree_of_mask(&self, mask: u32) -> Degree {
        let n = self.n;
        Degree {
            z: (mask & block_mask(n, 0)).count_ones() as usize,
            zb: (mask & block_mask(n, 1)).count_ones() as usize,
            zeta: (mask & block_mask(n, 2)).count_ones() as usize,
            zetab: (mask & block_mask(n, 3)).count_ones() as usize,
        }
    }

    pub fn key_of_mask(&self, mask: u32) -> Key {
        let n = self.n;
        let idx = |block: usize| {
            MultiIndex(
                (0..n)
                    .filter(|j| mask & (1u32 << (block * n + j)) != 0)
                    .collect(),
            )
        };
        Key {
            dz: idx(0),
            dzb: idx(1),
            dzeta: idx(2),
            dzetab: idx(3),
        }
    }

    pub fn mask_of_key(&self, key: &Key) -> u32 {
        let n = self.n;
        let mut m = 0u32;
        for (block, mi) in [&key.dz, &key.dzb, &key.dzeta, &key.dzetab]
            .into_iter()
            .enumerate()
        {
            for &j in mi.entries() {
                m |= 1u32 << (block * n + j);
            }
        }
        m
    }

    /// Iterate over `(Key, coefficient)` pairs in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (Key, T)> + '_ {
        self.coeffs.iter().map(|(&m, &c)| (self.key_of_mask(m), c))
    }

    pub fn raw_terms(&self) -> impl Iterator<Item = (u32, T)> + '_ {
        self.coeffs.iter().map(|(&m, &c)| (m, c))
    }

    /// Coefficient of the monomial given as an ordered list of generators
    /// (with the sign of reordering absorbed).
    pub fn coeff(&self, gens: &[Gen]) -> T {
        let probe = Form::<C64>::monomial(self.n, gens, c64(1.0, 0.0));
        match probe.coeffs.iter().next() {
            None => T::zero(),
            Some((&m, &s)) => match self.coeffs.get(&m) {
                Some(&c) => c.mulc(s),
                None => T::zero(),
            },
        }
    }

    pub fn degrees(&self) -> Vec<Degree> {
        let mut d: Vec<Degree> = self.coeffs.keys().map(|&m| self.degree_of_mask(m)).collect();
        d.sort();
        d.dedup();
        d
    }

    /// Homogeneous component of the given degree.
    pub fn component(&self, deg: Degree) -> Self {
        let mut f = Self::zero(self.n);
        for (&m, &c) in &self.coeffs {
            if self.degree_of_mask(m) == deg {
                f.coeffs.insert(m, c);
            }
        }
        f
    }

    /// Components with the given `z`-antiholomorphic degree.
    pub fn z_antidegree_part(&self, q: usize) -> Self {
        let mut f = Self::zero(self.n);
        for (&m, &c) in &self.coeffs {
            if self.degree_of_mask(m).zb == q {
                f.coeffs.insert(m, c);
            }
        }
        f
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.check_n(o)?;
        let mut f = self.clone();
        for (&m, &c) in &o.coeffs {
            f.add_term(m, c);
        }
        Ok(f)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.add(&o.scale(T::from_f64(-1.0)))
    }

    pub fn scale(&self, s: T) -> Self {
        let mut f = Self::zero(self.n);
        for (&m, &c) in &self.coeffs {
            f.add_term(m, c * s);
        }
        f
    }

    fn check_n(&self, o: &Self) -> Result<()> {
        if self.n != o.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: o.n,
            });
        }
        Ok(())
    }

    /// Graded-anticommutative exterior product.
    pub fn try_wedge(&self, o: &Self) -> Result<Self> {
        self.check_n(o)?;
        let mut f = Self::zero(self.n);
        for (&ma, &ca) in &self.coeffs {
            for (&mb, &cb) in &o.coeffs {
                if ma & mb != 0 {
                    continue;
                }
                let s = merge_sign(ma, mb);
                f.add_term(ma | mb, (ca * cb).scale_re(s));
            }
        }
        Ok(f)
    }

    /// Exterior product; panics on dimension mismatch (use [`Form::try_wedge`]
    /// to get an error instead).
    pub fn wedge(&self, o: &Self) -> Self {
        self.try_wedge(o).expect("wedge of forms of different dimension")
    }

    /// `self ∧ self ∧ … ` (`k` factors); `k = 0` gives the constant 1.
    pub fn wedge_power(&self, k: usize) -> Self {
        let mut f = Self::scalar(self.n, T::one());
        for _ in 0..k {
            f = f.wedge(self);
        }
        f
    }

    /// Interior product with the (0,1)-vector `Σ v_j ∂/∂x̄_j` in block `var`.
    ///
    /// Graded: `ι_v(θ ∧ g) = ⟨v,θ⟩ g − θ ∧ ι_v g` for a 1-form `θ`.
    pub fn contract(&self, var: Var, v: &[T]) -> Result<Self> {
        let n = self.n;
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        let block = match var {
            Var::Z => 1,
            Var::Zeta => 3,
        };
        let bm = block_mask(n, block);
        if !self.is_zero() && self.coeffs.keys().all(|&m| m & bm == 0) {
            return Err(Error::DegreeZeroContraction);
        }
        let mut f = Self::zero(n);
        for (&m, &c) in &self.coeffs {
            let mut hits = m & bm;
            while hits != 0 {
                let bit = hits.trailing_zeros();
                hits &= hits - 1;
                let j = bit as usize - block * n;
                let pos = (m & ((1u32 << bit) - 1)).count_ones();
                let s = if pos % 2 == 0 { 1.0 } else { -1.0 };
                f.add_term(m & !(1u32 << bit), (c * v[j]).scale_re(s));
            }
        }
        Ok(f)
    }

    /// Replace every antiholomorphic generator `dx̄_j` of block `var` by
    /// `Σ_k p[j][k] dx̄_k` (multilinear substitution).
    pub fn substitute_anti(&self, var: Var, p: &[Vec<T>]) -> Self {
        let n = self.n;
        let block = match var {
            Var::Z => 1,
            Var::Zeta => 3,
        };
        let bm = block_mask(n, block);
        let mut out = Self::zero(n);
        for (&m, &c) in &self.coeffs {
            // Generators in increasing order; the block is contiguous so the
            // substitution can be done on the block part and re-wedged.
            let rest = m & !bm;
            let below = rest & ((1u32 << (block * n)) - 1);
            let above = rest & !((1u32 << ((block + 1) * n)) - 1);
            let mut acc = Self::monomial_mask(n, below, c);
            let mut hits = m & bm;
            while hits != 0 {
                let bit = hits.trailing_zeros();
                hits &= hits - 1;
                let j = bit as usize - block * n;
                let mut img = Self::zero(n);
                for (k, &pk) in p[j].iter().enumerate() {
                    img.add_term(1u32 << (block * n + k), pk);
                }
                acc = acc.wedge(&img);
            }
            acc = acc.wedge(&Self::monomial_mask(n, above, T::one()));
            out = out.add(&acc).expect("same dimension");
        }
        out
    }

    fn monomial_mask(n: usize, mask: u32, c: T) -> Self {
        let mut f = Self::zero(n);
        f.add_term(mask, c);
        f
    }

    /// ⊥ projection `θ̄₁ ∧ ι_{Z̄₁} f` for the unit covector `theta = (c_j)`
    /// representing `θ̄₁ = Σ c_j dx̄_j` in block `var`, `Z̄₁ = Σ c̄_j ∂/∂x̄_j`.
    pub fn project_bot_with(&self, var: Var, theta: &[T]) -> Self {
        let n = self.n;
        let vdual: Vec<T> = theta.iter().map(|c| c.conj()).collect();
        let contracted = match self.contract(var, &vdual) {
            Ok(f) => f,
            Err(_) => return Self::zero(n),
        };
        let make = match var {
            Var::Z => Gen::Dzb,
            Var::Zeta => Gen::Dzetab,
        };
        Self::one_form(n, make, theta).wedge(&contracted)
    }

    /// ⊤ projection `f − f^⊥`.
    pub fn project_top_with(&self, var: Var, theta: &[T]) -> Self {
        self.sub(&self.project_bot_with(var, theta))
            .expect("same dimension")
    }

    /// Coefficient multiplying `dζ₁∧…∧dζ_n∧dζ̄₁∧…∧dζ̄_n` in the components of
    /// top degree in `ζ`, returned as a form in `z` only.
    pub fn zeta_top_part(&self) -> Self {
        let n = self.n;
        let top = block_mask(n, 2) | block_mask(n, 3);
        let mut f = Self::zero(n);
        for (&m, &c) in &self.coeffs {
            if m & top == top {
                f.add_term(m & !top, c);
            }
        }
        f
    }

    /// Largest coefficient modulus (value part for jets).
    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .values()
            .map(|c| c.value().norm())
            .fold(0.0, f64::max)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Form<U> {
        let mut out = Form::<U>::zero(self.n);
        for (&m, &c) in &self.coeffs {
            out.add_term(m, f(c));
        }
        out
    }

    pub fn values(&self) -> Form<C64> {
        self.map(|c| c.value())
    }
}

impl Form<C64> {
    /// Max-norm distance between two forms.
    pub fn dist(&self, o: &Self) -> f64 {
        self.sub(o).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
    }

    /// Euclidean norm of the coefficient vector.
    pub fn frobenius(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `(−1)^{n(n−1)/2} (−2i)^n`: the factor with
/// `dζ₁∧…∧dζ_n∧dζ̄₁∧…∧dζ̄_n = factor · dV`.
pub fn zeta_volume_factor(n: usize) -> C64 {
    let sign = if (n * (n.saturating_sub(1)) / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    c64(0.0, -2.0).powu(n as u32) * sign
}

/// Unitary frame at a point: the first row is `θ̄₁`'s coefficient vector and
/// the remaining rows complete it by Gram–Schmidt.
#[derive(Clone, Debug)]
pub struct Frame {
    pub theta1: Vec<C64>,
    pub rows: Vec<Vec<C64>>,
}

impl Frame {
    /// Complete `theta1` (normalized) to a unitary matrix, using `seeds` as the
    /// vectors fed to Gram–Schmidt after `theta1` (the standard basis if empty).
    pub fn complete(theta1: &[C64], seeds: &[Vec<C64>]) -> Result<Self> {
        let n = theta1.len();
        let nrm = theta1.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Err(Error::VanishingGradient);
        }
        let t1: Vec<C64> = theta1.iter().map(|c| c / nrm).collect();
        let mut rows = vec![t1.clone()];
        let mut candidates: Vec<Vec<C64>> = seeds.to_vec();
        for j in 0..n {
            let mut e = vec![c64(0.0, 0.0); n];
            e[j] = c64(1.0, 0.0);
            candidates.push(e);
        }
        for cand in candidates {
            if rows.len() == n {
                break;
            }
            let mut v = cand.clone();
            for r in &rows {
                let ip: C64 = r.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for k in 0..n {
                    v[k] -= ip * r[k];
                }
            }
            let vn = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if vn > 1e-8 {
                rows.push(v.iter().map(|c| c / vn).collect());
            }
        }
        Ok(Self { theta1: t1, rows })
    }

    /// Largest deviation of `U U†` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.rows.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let ip: C64 = self.rows[i]
                    .iter()
                    .zip(&self.rows[j])
                    .map(|(a, b)| a * b.conj())
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).norm());
            }
        }
        worst
    }

    /// ⊤ projection computed in this frame: each `dx̄_j` is expanded in the
    /// frame and the `θ̄₁` component dropped.
    pub fn project_top(&self, f: &Form<C64>, var: Var) -> Form<C64> {
        let n = self.rows.len();
        // dx̄_j = Σ_k conj(U_kj) θ̄_k, θ̄_k = Σ_l U_kl dx̄_l
        let p: Vec<Vec<C64>> = (0..n)
            .map(|j| {
                (0..n)
                    .map(|l| {
                        (1..n)
                            .map(|k| self.rows[k][j].conj() * self.rows[k][l])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        f.substitute_anti(var, &p)
    }
}

/// Worst errors of the projection identities over random cases.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct ProjectionIdentities {
    pub cases: usize,
    /// `max |(f∧g)^⊤ − f^⊤∧g^⊤|`.
    pub top_of_wedge: f64,
    /// `max |f^⊥∧g^⊥|`.
    pub bot_wedge_bot: f64,
    /// `max |f^⊥∧g − f^⊥∧g^⊤|`.
    pub bot_absorbs: f64,
    /// `max |f^⊤ − f^⊤_frame|` between the contraction and frame routes.
    pub frame_route: f64,
}

impl ProjectionIdentities {
    pub fn worst(&self) -> f64 {
        self.top_of_wedge.max(self.bot_wedge_bot).max(self.bot_absorbs).max(self.frame_route)
    }
}

fn random_form<R: Rng>(n: usize, rng: &mut R) -> Form<C64> {
    let mut f = Form::zero(n);
    let terms = rng.random_range(1..=6);
    for _ in 0..terms {
        let mask: u32 = rng.random_range(0..1u32 << (4 * n));
        f.add_term(mask, c64(crate::normal(rng), crate::normal(rng)));
    }
    f
}

/// Check `(f∧g)^⊤ = f^⊤∧g^⊤`, `f^⊥∧g^⊥ = 0` and `f^⊥∧g = f^⊥∧g^⊤` on
/// `cases` random pairs of forms on ℂ² × ℂ² with a random unit `θ̄₁` in a
/// random block, and compare the ⊤ projection with its frame route.
pub fn projection_identities(cases: usize, seed: u64) -> Result<ProjectionIdentities> {
    let n = 2;
    let mut rng = crate::rng(seed);
    let mut rep = ProjectionIdentities { cases, ..Default::default() };
    for _ in 0..cases {
        let var = if rng.random_bool(0.5) { Var::Z } else { Var::Zeta };
        let raw: Vec<C64> = (0..n).map(|_| c64(crate::normal(&mut rng), crate::normal(&mut rng))).collect();
        let nrm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let theta: Vec<C64> = raw.iter().map(|c| c / nrm).collect();
        let f = random_form(n, &mut rng);
        let g = random_form(n, &mut rng);
        let ft = f.project_top_with(var, &theta);
        let gt = g.project_top_with(var, &theta);
        let fb = f.project_bot_with(var, &theta);
        let gb = g.project_bot_with(var, &theta);
        let fg_top = f.wedge(&g).project_top_with(var, &theta);
        rep.top_of_wedge = rep.top_of_wedge.max(fg_top.dist(&ft.wedge(&gt)));
        rep.bot_wedge_bot = rep.bot_wedge_bot.max(fb.wedge(&gb).max_abs());
        rep.bot_absorbs = rep.bot_absorbs.max(fb.wedge(&g).dist(&fb.wedge(&gt)));
        let frame = Frame::complete(&theta, &[])?;
        rep.frame_route = rep.frame_route.max(frame.project_top(&f, var).dist(&ft));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> C64 {
        c64(1.0, 0.0)
    }

    #[test]
    fn repeated_generator_vanishes() {
        let a = Form::gen(2, Gen::Dzeta(0), one());
        assert!(a.wedge(&a).is_zero());
    }

    #[test]
    fn antisymmetry_of_one_forms() {
        let a = Form::gen(2, Gen::Dzb(0), one());
        let b = Form::gen(2, Gen::Dzb(1), one());
        let ab = a.wedge(&b);
        let ba = b.wedge(&a);
        assert!(ab.add(&ba).unwrap().is_zero());
    }

    #[test]
    fn hand_reordered_product() {
        // (2 dζ₁) ∧ (3 dζ̄₂ ∧ dζ₂) = 6 dζ₁∧dζ̄₂∧dζ₂ = −6 dζ₁∧dζ₂∧dζ̄₂
        let a = Form::gen(2, Gen::Dzeta(0), c64(2.0, 0.0));
        let b = Form::monomial(2, &[Gen::Dzetab(1), Gen::Dzeta(1)], c64(3.0, 0.0));
        let p = a.wedge(&b);
        assert_eq!(p.len(), 1);
        let c = p.coeff(&[Gen::Dzeta(0), Gen::Dzeta(1), Gen::Dzetab(1)]);
        assert_eq!(c, c64(-6.0, 0.0));
        let c2 = p.coeff(&[Gen::Dzeta(0), Gen::Dzetab(1), Gen::Dzeta(1)]);
        assert_eq!(c2, c64(6.0, 0.0));
    }

    #[test]
    fn contraction_examples() {
        let a = Form::gen(2, Gen::Dzb(0), one());
        let r = a.contract(Var::Z, &[one(), c64(0.0, 0.0)]).unwrap();
        assert_eq!(r, Form::scalar(2, one()));
        let b = Form::monomial(2, &[Gen::Dzb(0), Gen::Dzb(1)], one());
        let r = b.contract(Var::Z, &[c64(0.0, 0.0), one()]).unwrap();
        assert_eq!(r, Form::gen(2, Gen::Dzb(0), c64(-1.0, 0.0)));
        let s = Form::scalar(2, one());
        assert_eq!(
            s.contract(Var::Z, &[one(), one()]),
            Err(Error::DegreeZeroContraction)
        );
    }

    #[test]
    fn volume_factor_n2_is_four() {
        assert!((zeta_volume_factor(2) - c64(4.0, 0.0)).norm() < 1e-15);
        assert!((zeta_volume_factor(1) - c64(0.0, -2.0)).norm() < 1e-15);
    }

    #[test]
    fn projections_at_ball_point() {
        let theta = [one(), c64(0.0, 0.0)];
        let f = Form::gen(2, Gen::Dzb(0), one());
        assert_eq!(f.project_bot_with(Var::Z, &theta), f);
        let g = Form::gen(2, Gen::Dzb(1), one());
        assert!(g.project_bot_with(Var::Z, &theta).is_zero());
        assert_eq!(g.project_top_with(Var::Z, &theta), g);
        let h = Form::gen(2, Gen::Dz(1), one());
        assert!(h.project_bot_with(Var::Z, &theta).is_zero());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Form::gen(2, Gen::Dz(0), one());
        let b = Form::gen(3, Gen::Dz(0), one());
        assert!(matches!(
            a.try_wedge(&b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_identities_on_random_forms() {
        let rep = projection_identities(200, 5).unwrap();
        assert!(rep.worst() <= 1e-12, "{rep:?}");
    }
}
