//! Dyadic convolution families on a uniform lattice, Triebel–Lizorkin norms,
//! extension operators on the half-space model, commutators and boundary
//! strips.
//!
//! Everything lives on a lattice `hℤ^N` with `N ∈ {1, 2}`, and `x₁` is axis
//! 0. A [`LatticeKernel`] is a compactly supported lattice function. It keeps
//! its support as a union of discs, so convolutions (done with `rustfft`)
//! can be masked back to their exact support. Because of this the
//! negative-cone certificate is exact rather than up to FFT noise.
//!
//! The family construction:
//! - `Φ_j(x) = 2^{jN} β(2^j x) P_j(2^j x)`, where `β` is a `C^∞` bump inside
//!   `−K = {x₁ < −|x′|}`.
//! - `P_j` is the polynomial that makes the discrete mass 1 and the moments
//!   `1..=M` vanish on the lattice at level `j`.
//! - `φ₀ = Φ₀`, and `φ_j = Φ_j − Φ_{j−1}`.
//! - The dual family comes from `T(t) = 3t² − 2t³`:
//!   `ψ₀ = 3Φ₀ − 2Φ₀∗Φ₀` and
//!   `ψ_j = 3(Φ_j + Φ_{j−1}) − 2(Φ_j∗Φ_j + Φ_j∗Φ_{j−1} + Φ_{j−1}∗Φ_{j−1})`.
//!
//! The sum `Σ_{j≤J} ψ_j∗φ_j` telescopes to `3Φ_J∗Φ_J − 2Φ_J∗Φ_J∗Φ_J`, which
//! has unit mass and vanishing moments `1..=M`. All supports stay in `−K`,
//! because `−K` is a convex cone.

use crate::error::{Error, Result};
use crate::quadrature_estimates::linear_fit;
use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::SQRT_2;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Uniform grid `origin + h·i`, `0 ≤ i < dims`, row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub h: f64,
    pub origin: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, h: f64, origin: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(Error::Unsupported(format!("{}-dimensional grids", dims.len())));
        }
        if origin.len() != dims.len() {
            return Err(Error::DimensionMismatch { expected: dims.len(), got: origin.len() });
        }
        if !(h > 0.0) || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter("grid needs h > 0 and nonempty extents".into()));
        }
        Ok(GridSpec { dims, h, origin })
    }

    /// Grid covering `[lo, hi]` on every axis, with `lo` on the lattice.
    pub fn cube(ndim: usize, lo: f64, hi: f64, h: f64) -> Result<Self> {
        let n = ((hi - lo) / h).round() as usize + 1;
        GridSpec::new(vec![n; ndim], h, vec![lo; ndim])
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.ndim() as i32)
    }

    pub fn unravel(&self, flat: usize) -> Vec<usize> {
        unravel(flat, &self.dims)
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        ravel(idx, &self.dims)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat).iter().zip(&self.origin).map(|(&i, &o)| o + self.h * i as f64).collect()
    }

    /// Index of the lattice line `x_axis = 0`, if the origin is lattice aligned.
    pub fn zero_index(&self, axis: usize) -> Option<usize> {
        let t = -self.origin[axis] / self.h;
        let r = t.round();
        if (t - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.dims[axis] {
            Some(r as usize)
        } else {
            None
        }
    }

}

fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for a in (0..dims.len()).rev() {
        idx[a] = flat % dims[a];
        flat /= dims[a];
    }
    idx
}

fn ravel(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

/// Sampled real function on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"DBGF";

impl GridFunction {
    pub fn zeros(grid: &GridSpec) -> Self {
        GridFunction { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        GridFunction { grid: grid.clone(), values }
    }

    pub fn map(&self, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let values = self.values.iter().enumerate().map(|(i, &v)| f(&self.grid.point(i), v)).collect();
        GridFunction { grid: self.grid.clone(), values }
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidParameter("grid functions live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(GridFunction { grid: self.grid.clone(), values })
    }

    /// `L^p` norm over the grid points accepted by `mask` (`p = ∞` allowed).
    pub fn lp_norm_where(&self, p: f64, mask: impl Fn(&[f64]) -> bool) -> f64 {
        let dv = self.grid.cell_volume();
        let it = self.values.iter().enumerate().filter(|(i, _)| mask(&self.grid.point(*i)));
        if p.is_infinite() {
            it.fold(0.0, |m, (_, v)| m.max(v.abs()))
        } else {
            (it.map(|(_, v)| v.abs().powf(p)).sum::<f64>() * dv).powf(1.0 / p)
        }
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.lp_norm_where(p, |_| true)
    }

    pub fn sup_norm(&self) -> f64 {
        self.lp_norm(f64::INFINITY)
    }

    /// Flat little-endian binary: magic, ndim, dims, h, origin, values.
    pub fn write_binary(&self, path: &Path) -> anyhow::Result<()> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.grid.ndim() as u32).to_le_bytes());
        for &d in &self.grid.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.grid.h.to_le_bytes());
        for &o in &self.grid.origin {
            out.extend_from_slice(&o.to_le_bytes());
        }
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> anyhow::Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut at = 0usize;
        let mut take = |n: usize| -> anyhow::Result<&[u8]> {
            let s = buf.get(at..at + n).ok_or_else(|| anyhow::anyhow!("truncated grid file"))?;
            at += n;
            Ok(s)
        };
        anyhow::ensure!(take(4)? == MAGIC, "not a grid function file");
        let ndim = u32::from_le_bytes(take(4)?.try_into()?) as usize;
        anyhow::ensure!((1..=2).contains(&ndim), "unsupported dimension {ndim}");
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(u64::from_le_bytes(take(8)?.try_into()?) as usize);
        }
        let h = f64::from_le_bytes(take(8)?.try_into()?);
        let mut origin = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            origin.push(f64::from_le_bytes(take(8)?.try_into()?));
        }
        let grid = GridSpec::new(dims, h, origin)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(f64::from_le_bytes(take(8)?.try_into()?));
        }
        Ok(GridFunction { grid, values })
    }

    /// CSV with columns `x1[,x2],value`.
    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.grid.ndim()).map(|a| format!("x{a}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut rec: Vec<String> = self.grid.point(i).iter().map(|x| format!("{x:.17e}")).collect();
            rec.push(format!("{v:.17e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Lattice kernels and FFT convolution
// ---------------------------------------------------------------------------

/// Closed disc (an interval in 1D) bounding part of a kernel's support.
#[derive(Clone, Debug, PartialEq)]
pub struct Disc {
    pub centre: Vec<f64>,
    pub radius: f64,
}

impl Disc {
    fn contains(&self, x: &[f64], slack: f64) -> bool {
        let d2: f64 = x.iter().zip(&self.centre).map(|(a, b)| (a - b) * (a - b)).sum();
        d2.sqrt() <= self.radius + slack
    }

    /// Distance from the disc to the boundary of `−K`; negative if it leaves the cone.
    pub fn cone_margin(&self) -> f64 {
        let c1 = self.centre[0];
        let tang: f64 = self.centre[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
        if self.centre.len() == 1 {
            -c1 - self.radius
        } else {
            (-c1 - tang) / SQRT_2 - self.radius
        }
    }
}

/// Compactly supported function on `hℤ^N`: value at lattice point
/// `offset + i` is `values[ravel(i)]`.
#[derive(Clone, Debug)]
pub struct LatticeKernel {
    pub h: f64,
    pub offset: Vec<i64>,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
    pub support: Vec<Disc>,
}

/// Products below this many multiply-adds use the direct sum.
const DIRECT_CONV_LIMIT: usize = 1 << 18;

fn fft_axis(data: &mut [Complex<f64>], dims: &[usize], axis: usize, fft: &Arc<dyn rustfft::Fft<f64>>) {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = data[base + i * stride];
            }
            fft.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                data[base + i * stride] = *b;
            }
        }
    }
}

/// Full linear convolution `c[t] = Σ_a a[a] b[t − a]`, dims `ad + bd − 1`.
fn convolve_full(a: &[f64], ad: &[usize], b: &[f64], bd: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let od: Vec<usize> = ad.iter().zip(bd).map(|(x, y)| x + y - 1).collect();
    let olen: usize = od.iter().product();
    let nnz_a = a.iter().filter(|v| **v != 0.0).count();
    let nnz_b = b.iter().filter(|v| **v != 0.0).count();
    if nnz_a.saturating_mul(nnz_b) <= DIRECT_CONV_LIMIT {
        let mut out = vec![0.0; olen];
        let bi: Vec<(Vec<usize>, f64)> =
            b.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (unravel(i, bd), *v)).collect();
        for (i, &va) in a.iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            let ia = unravel(i, ad);
            for (ib, vb) in &bi {
                let t: Vec<usize> = ia.iter().zip(ib).map(|(x, y)| x + y).collect();
                out[ravel(&t, &od)] += va * vb;
            }
        }
        return (out, od);
    }
    let pd: Vec<usize> = od.iter().map(|&n| n.next_power_of_two()).collect();
    let plen: usize = pd.iter().product();
    let embed = |src: &[f64], sd: &[usize]| {
        let mut buf = vec![Complex::new(0.0, 0.0); plen];
        for (i, &v) in src.iter().enumerate() {
            buf[ravel(&unravel(i, sd), &pd)] = Complex::new(v, 0.0);
        }
        buf
    };
    let mut fa = embed(a, ad);
    let mut fb = embed(b, bd);
    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..pd.len() {
        let fwd = planner.plan_fft_forward(pd[axis]);
        fft_axis(&mut fa, &pd, axis, &fwd);
        fft_axis(&mut fb, &pd, axis, &fwd);
    }
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    for axis in 0..pd.len() {
        let inv = planner.plan_fft_inverse(pd[axis]);
        fft_axis(&mut fa, &pd, axis, &inv);
    }
    let scale = 1.0 / plen as f64;
    let out = (0..olen).map(|i| fa[ravel(&unravel(i, &od), &pd)].re * scale).collect();
    (out, od)
}

impl LatticeKernel {
    /// Sample `f` on the lattice points of the box `[lo, hi]` (inclusive).
    pub fn sample(h: f64, lo: &[i64], hi: &[i64], support: Vec<Disc>, f: impl Fn(&[f64]) -> f64) -> Self {
        let dims: Vec<usize> = lo.iter().zip(hi).map(|(a, b)| (b - a + 1).max(1) as usize).collect();
        let len: usize = dims.iter().product();
        let mut k = LatticeKernel { h, offset: lo.to_vec(), dims, values: vec![0.0; len], support };
        for i in 0..len {
            let x = k.point(i);
            k.values[i] = f(&x);
        }
        k
    }

    /// Unit mass at the origin: the identity for convolution.
    pub fn delta(h: f64, ndim: usize) -> Self {
        LatticeKernel {
            h,
            offset: vec![0; ndim],
            dims: vec![1; ndim],
            values: vec![h.powi(-(ndim as i32))],
            support: vec![Disc { centre: vec![0.0; ndim], radius: 0.0 }],
        }
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    fn cell_volume(&self) -> f64 {
        self.h.powi(self.ndim() as i32)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        unravel(flat, &self.dims).iter().zip(&self.offset).map(|(&i, &o)| (o + i as i64) as f64 * self.h).collect()
    }

    pub fn value_at(&self, lattice: &[i64]) -> f64 {
        let mut idx = Vec::with_capacity(self.ndim());
        for a in 0..self.ndim() {
            let i = lattice[a] - self.offset[a];
            if i < 0 || i as usize >= self.dims[a] {
                return 0.0;
            }
            idx.push(i as usize);
        }
        self.values[ravel(&idx, &self.dims)]
    }

    /// Discrete moment `Σ h^N x^α k(x)`.
    pub fn moment(&self, alpha: &[usize]) -> f64 {
        let dv = self.cell_volume();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| {
                let x = self.point(i);
                v * x.iter().zip(alpha).map(|(xa, &e)| xa.powi(e as i32)).product::<f64>()
            })
            .sum::<f64>()
            * dv
    }

    pub fn mass(&self) -> f64 {
        self.moment(&vec![0; self.ndim()])
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.cell_volume()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut k = self.clone();
        k.values.iter_mut().for_each(|v| *v *= c);
        k
    }

    /// `a·self + b·other` on the union box.
    pub fn lin(&self, a: f64, other: &LatticeKernel, b: f64) -> Self {
        let nd = self.ndim();
        let lo: Vec<i64> = (0..nd).map(|i| self.offset[i].min(other.offset[i])).collect();
        let hi: Vec<i64> = (0..nd)
            .map(|i| {
                (self.offset[i] + self.dims[i] as i64 - 1).max(other.offset[i] + other.dims[i] as i64 - 1)
            })
            .collect();
        let mut support = self.support.clone();
        support.extend(other.support.iter().cloned());
        let dims: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| (h - l + 1) as usize).collect();
        let len: usize = dims.iter().product();
        let mut values = vec![0.0; len];
        for (i, v) in values.iter_mut().enumerate() {
            let lat: Vec<i64> = unravel(i, &dims).iter().zip(&lo).map(|(&u, &l)| l + u as i64).collect();
            *v = a * self.value_at(&lat) + b * other.value_at(&lat);
        }
        LatticeKernel { h: self.h, offset: lo, dims, values, support }
    }

    /// Lattice convolution `Σ_y h^N self(y) other(x − y)`, masked to the
    /// Minkowski sum of the supports.
    pub fn convolve(&self, other: &LatticeKernel) -> Self {
        let (c, dims) = convolve_full(&self.values, &self.dims, &other.values, &other.dims);
        let dv = self.cell_volume();
        let offset: Vec<i64> = self.offset.iter().zip(&other.offset).map(|(a, b)| a + b).collect();
        let mut support = Vec::with_capacity(self.support.len() * other.support.len());
        for d1 in &self.support {
            for d2 in &other.support {
                support.push(Disc {
                    centre: d1.centre.iter().zip(&d2.centre).map(|(a, b)| a + b).collect(),
                    radius: d1.radius + d2.radius,
                });
            }
        }
        let mut k = LatticeKernel { h: self.h, offset, dims, values: c, support };
        k.values.iter_mut().for_each(|v| *v *= dv);
        k.mask_to_support();
        k
    }

    fn mask_to_support(&mut self) {
        let slack = 1e-9 * self.h;
        for i in 0..self.values.len() {
            if self.values[i] != 0.0 {
                let x = self.point(i);
                if !self.support.iter().any(|d| d.contains(&x, slack)) {
                    self.values[i] = 0.0;
                }
            }
        }
    }

    /// Pointwise product with the coordinate `x_axis`.
    pub fn times_coordinate(&self, axis: usize) -> Self {
        let mut k = self.clone();
        for i in 0..k.values.len() {
            let x = self.point(i)[axis];
            k.values[i] *= x;
        }
        k
    }

    /// Pointwise product with `g(x + shift) − g(shift)`.
    pub fn times_increment(&self, g: &dyn Fn(&[f64]) -> f64, shift: &[f64]) -> Self {
        let g0 = g(shift);
        let mut k = self.clone();
        for i in 0..k.values.len() {
            if k.values[i] != 0.0 {
                let x: Vec<f64> = self.point(i).iter().zip(shift).map(|(a, b)| a + b).collect();
                k.values[i] *= g(&x) - g0;
            }
        }
        k
    }

    /// Fourth-order central difference along `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        let nd = self.ndim();
        let mut lo = self.offset.clone();
        let mut dims = self.dims.clone();
        lo[axis] -= 2;
        dims[axis] += 4;
        let len: usize = dims.iter().product();
        let mut values = vec![0.0; len];
        let c = [(2i64, -1.0), (1, 8.0), (-1, -8.0), (-2, 1.0)];
        for (i, v) in values.iter_mut().enumerate() {
            let lat: Vec<i64> = unravel(i, &dims).iter().zip(&lo).map(|(&u, &l)| l + u as i64).collect();
            let mut acc = 0.0;
            for &(s, w) in &c {
                let mut q = lat.clone();
                q[axis] += s;
                acc += w * self.value_at(&q);
            }
            *v = acc / (12.0 * self.h);
        }
        let support = self
            .support
            .iter()
            .map(|d| Disc { centre: d.centre.clone(), radius: d.radius + 2.0 * self.h })
            .collect();
        debug_assert_eq!(lo.len(), nd);
        LatticeKernel { h: self.h, offset: lo, dims, values, support }
    }

    /// Convolution with a grid function, zero-extended outside its grid.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if (f.grid.h - self.h).abs() > 1e-15 * self.h || f.grid.ndim() != self.ndim() {
            return Err(Error::InvalidParameter("kernel and grid use different lattices".into()));
        }
        let (c, cd) = convolve_full(&self.values, &self.dims, &f.values, &f.grid.dims);
        let dv = self.cell_volume();
        let mut out = GridFunction::zeros(&f.grid);
        for i in 0..out.values.len() {
            let idx = f.grid.unravel(i);
            let mut t = Vec::with_capacity(idx.len());
            let mut inside = true;
            for a in 0..idx.len() {
                let ti = idx[a] as i64 - self.offset[a];
                if ti < 0 || ti as usize >= cd[a] {
                    inside = false;
                    break;
                }
                t.push(ti as usize);
            }
            if inside {
                out.values[i] = dv * c[ravel(&t, &cd)];
            }
        }
        Ok(out)
    }

    /// Smallest disc margin inside `−K` and the largest value found at a
    /// lattice point outside the open cone (exactly zero when certified).
    pub fn cone_certificate(&self) -> (f64, f64) {
        let margin = self.support.iter().map(Disc::cone_margin).fold(f64::INFINITY, f64::min);
        let mut leak = 0.0f64;
        for (i, v) in self.values.iter().enumerate() {
            if *v != 0.0 {
                let x = self.point(i);
                let tang: f64 = x[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
                if x[0] >= -tang {
                    leak = leak.max(v.abs());
                }
            }
        }
        (margin, leak)
    }

    /// Furthest extent of the support along `−x₁` and across `x′`.
    pub fn reach(&self) -> (f64, f64) {
        let mut down = 0.0f64;
        let mut side = 0.0f64;
        for d in &self.support {
            down = down.max(-(d.centre[0] - d.radius));
            let t: f64 = d.centre[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
            side = side.max(t + d.radius);
        }
        (down, side)
    }
}

// ---------------------------------------------------------------------------
// The family
// ---------------------------------------------------------------------------

/// Geometry of the base bump `β`: a ball of `radius` centred at `(−centre, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FamilyShape {
    pub centre: f64,
    pub radius: f64,
}

impl FamilyShape {
    pub fn default_for(ndim: usize) -> Self {
        if ndim == 1 {
            FamilyShape { centre: 1.0, radius: 0.9 }
        } else {
            FamilyShape { centre: 1.0, radius: 0.65 }
        }
    }

    fn validate(&self, ndim: usize) -> Result<()> {
        let margin = if ndim == 1 { self.centre - self.radius } else { self.centre / SQRT_2 - self.radius };
        if !(self.radius > 0.0) || margin <= 0.0 {
            return Err(Error::InvalidParameter(format!("bump {self:?} leaves the negative cone")));
        }
        Ok(())
    }
}

/// Multi-indices of total degree `≤ m` in `ndim` variables.
pub fn multi_indices(ndim: usize, m: usize) -> Vec<Vec<usize>> {
    match ndim {
        1 => (0..=m).map(|a| vec![a]).collect(),
        _ => {
            let mut out = Vec::new();
            for t in 0..=m {
                for a in (0..=t).rev() {
                    out.push(vec![a, t - a]);
                }
            }
            out
        }
    }
}

fn bump(u2: f64) -> f64 {
    if u2 < 1.0 {
        (-1.0 / (1.0 - u2)).exp()
    } else {
        0.0
    }
}

/// Largest level resolved by the grid: `2^{−j} ≥ 4h`.
pub fn resolved_levels(h: f64) -> Result<usize> {
    let j = (1.0 / (4.0 * h)).log2().floor();
    if j < 1.0 {
        return Err(Error::GridTooCoarse(format!("h = {h} resolves no dyadic level beyond 0")));
    }
    Ok(j as usize)
}

/// Moment and mass certificate of a family.
#[derive(Clone, Debug)]
pub struct MomentCertificate {
    /// `|∫φ₀ − 1|` and `|∫ψ₀ − 1|`.
    pub mass_error: f64,
    /// Largest `|∫x^α k|` over the generators `φ₀, ψ₀` (`1 ≤ |α| ≤ M`) and
    /// `φ_j, ψ_j` for `j ≥ 1` (`0 ≤ |α| ≤ M`).
    pub max_moment: f64,
    /// Largest change of the polynomial correction between levels; zero for
    /// an exactly self-similar family.
    pub scaling_drift: f64,
}

/// Negative-cone certificate of a family.
#[derive(Clone, Debug)]
pub struct ConeCertificate {
    /// Smallest distance from a support disc to the boundary of `−K` at level 0.
    pub margin: f64,
    /// Largest kernel value found outside the cone; zero when certified.
    pub leak: f64,
}

impl ConeCertificate {
    pub fn holds(&self) -> bool {
        self.margin > 0.0 && self.leak == 0.0
    }
}

/// Dyadic families `(φ_j, ψ_j)_{j ≤ jmax}` on `hℤ^N`.
#[derive(Clone, Debug)]
pub struct LPFamily {
    pub ndim: usize,
    pub h: f64,
    pub moment_order: usize,
    pub jmax: usize,
    pub shape: FamilyShape,
    /// Partial sums `Φ_j = φ₀ + … + φ_j`.
    pub big_phi: Vec<LatticeKernel>,
    pub phi: Vec<LatticeKernel>,
    pub psi: Vec<LatticeKernel>,
    pub moments: MomentCertificate,
    pub cone: ConeCertificate,
}

/// Build the family with the default bump for the grid's dimension.
pub fn build_family(moment_order: usize, grid: &GridSpec) -> Result<LPFamily> {
    build_family_with(moment_order, grid.ndim(), grid.h, FamilyShape::default_for(grid.ndim()), None)
}

/// Build the family with an explicit bump and optionally fewer levels.
pub fn build_family_with(
    moment_order: usize,
    ndim: usize,
    h: f64,
    shape: FamilyShape,
    levels: Option<usize>,
) -> Result<LPFamily> {
    if !(1..=2).contains(&ndim) {
        return Err(Error::Unsupported(format!("{ndim}-dimensional families")));
    }
    shape.validate(ndim)?;
    let resolved = resolved_levels(h)?;
    let jmax = match levels {
        Some(j) if j > resolved => {
            return Err(Error::GridTooCoarse(format!("level {j} needs 2^-{j} >= 4h with h = {h}")))
        }
        Some(j) => j,
        None => resolved,
    };
    let basis = multi_indices(ndim, moment_order);
    let mut big_phi = Vec::with_capacity(jmax + 1);
    let mut coeffs: Vec<Vec<f64>> = Vec::new();
    for j in 0..=jmax {
        let (k, c) = corrected_level(j, ndim, h, shape, &basis)?;
        big_phi.push(k);
        coeffs.push(c);
    }
    let mut phi = vec![big_phi[0].clone()];
    for j in 1..=jmax {
        phi.push(big_phi[j].lin(1.0, &big_phi[j - 1], -1.0));
    }
    let mut psi = Vec::with_capacity(jmax + 1);
    psi.push(big_phi[0].lin(3.0, &big_phi[0].convolve(&big_phi[0]), -2.0));
    for j in 1..=jmax {
        let (a, b) = (&big_phi[j], &big_phi[j - 1]);
        let quad = a.convolve(a).lin(1.0, &a.convolve(b), 1.0).lin(1.0, &b.convolve(b), 1.0);
        psi.push(a.lin(3.0, b, 3.0).lin(1.0, &quad, -2.0));
    }
    // Relative change of the correction polynomial across levels.
    let scale0 = coeffs[0].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let scaling_drift = coeffs
        .iter()
        .skip(1)
        .map(|c| c.iter().zip(&coeffs[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale0)
        .fold(0.0, f64::max);

    let zero = vec![0; ndim];
    let mass_error = (phi[0].mass() - 1.0).abs().max((psi[0].mass() - 1.0).abs());
    let mut max_moment = 0.0f64;
    for (j, (p, q)) in phi.iter().zip(&psi).enumerate() {
        for alpha in &basis {
            if j == 0 && *alpha == zero {
                continue;
            }
            max_moment = max_moment.max(p.moment(alpha).abs()).max(q.moment(alpha).abs());
        }
    }
    let mut margin = f64::INFINITY;
    let mut leak = 0.0f64;
    for k in phi.iter().chain(&psi) {
        let (m, l) = k.cone_certificate();
        leak = leak.max(l);
        margin = margin.min(m * 2f64.powi(0));
    }
    // Report the level-0 margin: finer levels are dyadic rescalings of it.
    let level0 = phi[0].cone_certificate().0.min(psi[0].cone_certificate().0);
    let cone = ConeCertificate { margin: if margin > 0.0 { level0 } else { margin }, leak };
    Ok(LPFamily {
        ndim,
        h,
        moment_order,
        jmax,
        shape,
        big_phi,
        phi,
        psi,
        moments: MomentCertificate { mass_error, max_moment, scaling_drift },
        cone,
    })
}

/// `Φ_j` sampled at level `j` with its polynomial moment correction; returns
/// the kernel and the correction coefficients in the rescaled variable.
fn corrected_level(
    j: usize,
    ndim: usize,
    h: f64,
    shape: FamilyShape,
    basis: &[Vec<usize>],
) -> Result<(LatticeKernel, Vec<f64>)> {
    let scale = 2f64.powi(j as i32);
    let hy = h * scale;
    let mut centre = vec![0.0; ndim];
    centre[0] = -shape.centre;
    let r = shape.radius;
    // Lattice box of the support in x = y / 2^j.
    let lo: Vec<i64> = centre.iter().map(|c| ((c - r) / hy).floor() as i64).collect();
    let hi: Vec<i64> = centre.iter().map(|c| ((c + r) / hy).ceil() as i64).collect();
    let support = vec![Disc { centre: centre.iter().map(|c| c / scale).collect(), radius: r / scale }];
    let u_of = |x: &[f64]| -> Vec<f64> { x.iter().zip(&centre).map(|(xa, c)| (xa * scale - c) / r).collect() };
    let base = LatticeKernel::sample(h, &lo, &hi, support, |x| {
        let u = u_of(x);
        bump(u.iter().map(|a| a * a).sum())
    });
    let points: Vec<(Vec<f64>, f64)> = base
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (u_of(&base.point(i)), *v))
        .collect();
    if points.len() < basis.len() + 2 {
        return Err(Error::GridTooCoarse(format!(
            "level {j} has {} support points for {} moment conditions",
            points.len(),
            basis.len()
        )));
    }
    // Gram system in u = (y − c)/r; targets ∫u^α Φ = Π(−c_a / r)^{α_a}.
    let nb = basis.len();
    let mono = |u: &[f64], a: &[usize]| u.iter().zip(a).map(|(x, &e)| x.powi(e as i32)).product::<f64>();
    let wy = hy.powi(ndim as i32);
    let mut g = DMatrix::<f64>::zeros(nb, nb);
    for (u, b) in &points {
        let m: Vec<f64> = basis.iter().map(|a| mono(u, a)).collect();
        for p in 0..nb {
            for q in 0..nb {
                g[(p, q)] += wy * b * m[p] * m[q];
            }
        }
    }
    let target = DVector::from_iterator(
        nb,
        basis.iter().map(|a| a.iter().zip(&centre).map(|(&e, c)| (-c / r).powi(e as i32)).product::<f64>()),
    );
    let coef = g
        .clone()
        .lu()
        .solve(&target)
        .ok_or_else(|| Error::GridTooCoarse(format!("moment system singular at level {j}")))?;
    let resid = (&g * &coef - &target).amax();
    if !(resid <= 1e-9) {
        return Err(Error::GridTooCoarse(format!("moment system residual {resid:e} at level {j}")));
    }
    let mut k = base;
    let amp = scale.powi(ndim as i32);
    for i in 0..k.values.len() {
        if k.values[i] > 0.0 {
            let u = u_of(&k.point(i));
            let p: f64 = basis.iter().zip(coef.iter()).map(|(a, c)| c * mono(&u, a)).sum();
            k.values[i] *= amp * p;
        }
    }
    Ok((k, coef.iter().copied().collect()))
}

impl LPFamily {
    pub fn phi0(&self) -> &LatticeKernel {
        &self.phi[0]
    }
    pub fn phi1(&self) -> &LatticeKernel {
        &self.phi[1]
    }
    pub fn psi0(&self) -> &LatticeKernel {
        &self.psi[0]
    }
    pub fn psi1(&self) -> &LatticeKernel {
        &self.psi[1]
    }

    /// `Σ_{j≤J} ψ_j∗φ_j = 3Φ_J∗Φ_J − 2Φ_J∗Φ_J∗Φ_J`.
    pub fn dual_partial_sum(&self, jj: usize) -> LatticeKernel {
        let b = &self.big_phi[jj.min(self.jmax)];
        let b2 = b.convolve(b);
        b2.lin(3.0, &b2.convolve(b), -2.0)
    }

    /// Depth along `−x₁` (and tangential half-width) covered by `ψ_j∗φ_j`.
    pub fn reach(&self) -> (f64, f64) {
        let s = self.shape;
        (3.0 * (s.centre + s.radius), 3.0 * s.radius)
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if grid.ndim() != self.ndim || (grid.h - self.h).abs() > 1e-15 * self.h {
            return Err(Error::InvalidParameter("family and grid use different lattices".into()));
        }
        Ok(())
    }
}

/// Sup errors of the two reconstructions `Φ_J∗f` (`Σφ_j`) and `Σψ_j∗φ_j∗f`
/// at each level `J`, measured where the kernels stay inside the grid.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub levels: Vec<usize>,
    pub phi_error: Vec<f64>,
    pub dual_error: Vec<f64>,
}

pub fn reconstruction_sweep(family: &LPFamily, f: &GridFunction) -> Result<Reconstruction> {
    family.check_grid(&f.grid)?;
    let (down, side) = family.reach();
    let hi: Vec<f64> = f.grid.origin.iter().zip(&f.grid.dims).map(|(o, &n)| o + f.grid.h * (n - 1) as f64).collect();
    let lo = f.grid.origin.clone();
    let valid = |x: &[f64]| x[0] + down <= hi[0] && x[1..].iter().enumerate().all(|(a, &t)| t - side >= lo[a + 1] && t + side <= hi[a + 1]);
    let mut out = Reconstruction { levels: vec![], phi_error: vec![], dual_error: vec![] };
    for jj in 0..=family.jmax {
        let a = family.big_phi[jj].apply(f)?;
        let b = family.dual_partial_sum(jj).apply(f)?;
        let ea = a.zip_with(f, |x, y| x - y)?.lp_norm_where(f64::INFINITY, valid);
        let eb = b.zip_with(f, |x, y| x - y)?.lp_norm_where(f64::INFINITY, valid);
        out.levels.push(jj);
        out.phi_error.push(ea);
        out.dual_error.push(eb);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Triebel–Lizorkin norms
// ---------------------------------------------------------------------------

/// Where the norm integrates.
#[derive(Clone, Debug)]
pub enum NormRegion {
    /// The whole grid (functions zero-extended).
    Whole,
    /// The intrinsic norm over `ω`.
    Domain(SpecialDomain),
}

#[derive(Clone, Debug)]
pub struct TlNorm {
    pub value: f64,
    pub s: f64,
    pub p: f64,
    pub q: f64,
    /// Highest level included.
    pub jmax: usize,
    /// `‖2^{js}φ_j∗f‖_{L^p}` per level.
    pub level_norms: Vec<f64>,
    /// Share of the top level in the level sum; a large value means the
    /// truncation is not yet resolved.
    pub truncation: f64,
}

/// `‖(2^{js}φ_j∗f)_{j≤jmax}‖` in `L^p(ℓ^q)` for `p < ∞`, or in the ball-sup
/// form for `p = ∞`.
pub fn tl_norm(
    f: &GridFunction,
    s: f64,
    p: f64,
    q: f64,
    family: &LPFamily,
    region: &NormRegion,
    jmax: Option<usize>,
) -> Result<TlNorm> {
    family.check_grid(&f.grid)?;
    let top = jmax.unwrap_or(family.jmax);
    if top > family.jmax {
        return Err(Error::GridTooCoarse(format!("level {top} is beyond the resolved {}", family.jmax)));
    }
    if !(p >= 1.0 && q >= 1.0) {
        return Err(Error::InvalidParameter("only p, q >= 1 are supported".into()));
    }
    let grid = &f.grid;
    let inside: Vec<bool> = (0..grid.len())
        .map(|i| match region {
            NormRegion::Whole => true,
            NormRegion::Domain(d) => d.contains(&grid.point(i)),
        })
        .collect();
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(top + 1);
    let mut level_norms = Vec::with_capacity(top + 1);
    let dv = grid.cell_volume();
    for j in 0..=top {
        let w = 2f64.powf(j as f64 * s);
        let g = family.phi[j].apply(f)?;
        let vals: Vec<f64> = g.values.iter().zip(&inside).map(|(v, &m)| if m { w * v.abs() } else { 0.0 }).collect();
        let ln = if p.is_infinite() {
            vals.iter().fold(0.0f64, |m, v| m.max(*v))
        } else {
            (vals.iter().map(|v| v.powf(p)).sum::<f64>() * dv).powf(1.0 / p)
        };
        level_norms.push(ln);
        levels.push(vals);
    }
    let value = if p.is_finite() {
        let pointwise = |i: usize| -> f64 {
            if q.is_infinite() {
                levels.iter().fold(0.0f64, |m, l| m.max(l[i]))
            } else {
                levels.iter().map(|l| l[i].powf(q)).sum::<f64>().powf(1.0 / q)
            }
        };
        ((0..grid.len()).map(|i| pointwise(i).powf(p)).sum::<f64>() * dv).powf(1.0 / p)
    } else if q.is_infinite() {
        level_norms.iter().fold(0.0f64, |m, v| m.max(*v))
    } else {
        ball_sup_norm(grid, &levels, q)?
    };
    let total: f64 = level_norms.iter().sum();
    let truncation = if total > 0.0 { level_norms[top] / total } else { 0.0 };
    Ok(TlNorm { value, s, p, q, jmax: top, level_norms, truncation })
}

/// `sup_{x,J} 2^{NJ/q} ‖(g_j)_{j≥max(0,J)}‖_{L^q(B(x,2^{−J}); ℓ^q)}` over
/// `J` from the grid diameter down to the top level.
fn ball_sup_norm(grid: &GridSpec, levels: &[Vec<f64>], q: f64) -> Result<f64> {
    let nd = grid.ndim();
    let diam = grid.dims.iter().map(|&n| (n as f64) * grid.h).fold(0.0, f64::max) * (nd as f64).sqrt();
    let jlo = -(diam.log2().ceil() as i64);
    let top = levels.len() as i64 - 1;
    let mut best = 0.0f64;
    let fwork = GridFunction::zeros(grid);
    for jj in jlo..=top {
        let first = jj.max(0) as usize;
        let mut g = fwork.clone();
        for l in &levels[first..] {
            for (gv, v) in g.values.iter_mut().zip(l) {
                *gv += v.powf(q);
            }
        }
        let r = 2f64.powi(-jj as i32);
        let m = (r / grid.h).floor() as i64;
        let ball = LatticeKernel::sample(
            grid.h,
            &vec![-m; nd],
            &vec![m; nd],
            vec![Disc { centre: vec![0.0; nd], radius: r }],
            |x| if x.iter().map(|a| a * a).sum::<f64>().sqrt() <= r { 1.0 } else { 0.0 },
        );
        let sums = ball.apply(&g)?;
        let sup = sums.values.iter().fold(0.0f64, |a, v| a.max(*v)).max(0.0);
        let val = 2f64.powf(nd as f64 * jj as f64 / q) * sup.powf(1.0 / q);
        best = best.max(val);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Special Lipschitz domains and strips
// ---------------------------------------------------------------------------

/// `ω = {x₁ > σ(x′)}` with `‖∇σ‖_∞ < 1`.
#[derive(Clone)]
pub struct SpecialDomain {
    sigma: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub lipschitz: f64,
    flat: bool,
}

impl std::fmt::Debug for SpecialDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpecialDomain").field("lipschitz", &self.lipschitz).field("flat", &self.flat).finish()
    }
}

impl SpecialDomain {
    /// The half-space `σ ≡ 0`.
    pub fn half_space() -> Self {
        SpecialDomain { sigma: Arc::new(|_| 0.0), lipschitz: 0.0, flat: true }
    }

    /// A graph domain; `lipschitz` is the declared bound on `‖∇σ‖_∞`.
    pub fn graph(sigma: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, lipschitz: f64) -> Result<Self> {
        if !(lipschitz < 1.0) {
            return Err(Error::InvalidParameter(format!("Lipschitz bound violated: {lipschitz} >= 1")));
        }
        Ok(SpecialDomain { sigma: Arc::new(sigma), lipschitz, flat: false })
    }

    pub fn sigma(&self, xp: &[f64]) -> f64 {
        (self.sigma)(xp)
    }

    /// `x₁ − σ(x′)`.
    pub fn depth(&self, x: &[f64]) -> f64 {
        x[0] - self.sigma(&x[1..])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.depth(x) > 0.0
    }

    /// Euclidean distance to `bω` (1D and 2D).
    pub fn dist(&self, x: &[f64]) -> f64 {
        let d = self.depth(x);
        if self.flat || x.len() == 1 {
            return d.abs();
        }
        // Minimise |x − (σ(t), t)| over |t − x₂| ≤ |d|, which contains the foot.
        let r = d.abs();
        let f = |t: f64| ((x[0] - self.sigma(&[t])).powi(2) + (x[1] - t).powi(2)).sqrt();
        let n = 400;
        let (mut bt, mut bv) = (x[1], f(x[1]));
        for i in 0..=n {
            let t = x[1] - r + 2.0 * r * i as f64 / n as f64;
            let v = f(t);
            if v < bv {
                bv = v;
                bt = t;
            }
        }
        let (mut a, mut b) = (bt - 2.0 * r / n as f64, bt + 2.0 * r / n as f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = b - g * (b - a);
            let e = a + g * (b - a);
            if f(c) < f(e) {
                b = e;
            } else {
                a = c;
            }
        }
        bv.min(f(0.5 * (a + b)))
    }

    /// `δ(x) = min(1, dist(x, bω))`.
    pub fn delta(&self, x: &[f64]) -> f64 {
        self.dist(x).min(1.0)
    }

    /// Inner strip index: `P₀ = {depth > 2^{−1/2}}`,
    /// `P_k = {2^{−1/2−k} < depth < 2^{1/2−k}}`.
    pub fn inner_strip(&self, x: &[f64]) -> Option<usize> {
        strip_of(self.depth(x))
    }

    /// Outer strip index, the mirror image of [`Self::inner_strip`] in `ω^c`.
    pub fn outer_strip(&self, x: &[f64]) -> Option<usize> {
        strip_of(-self.depth(x))
    }

    pub fn in_inner(&self, x: &[f64], k: usize) -> bool {
        self.inner_strip(x) == Some(k)
    }

    pub fn in_outer(&self, x: &[f64], k: usize) -> bool {
        self.outer_strip(x) == Some(k)
    }

    /// `P_{<k} = {depth > 2^{1/2−k}}`.
    pub fn in_inner_below(&self, x: &[f64], k: usize) -> bool {
        self.depth(x) > 2f64.powf(0.5 - k as f64)
    }
}

fn strip_of(d: f64) -> Option<usize> {
    if !(d > 0.0) {
        return None;
    }
    if d > 2f64.powf(-0.5) {
        return Some(0);
    }
    let t = -d.log2();
    let k = t.round();
    // Strip boundaries have measure zero and belong to no strip.
    if (t - k).abs() >= 0.5 - 1e-15 || k < 1.0 {
        None
    } else {
        Some(k as usize)
    }
}

// ---------------------------------------------------------------------------
// Extensions
// ---------------------------------------------------------------------------

/// `E f = Σ_{j≤J} ψ_j∗(1_ω·(φ_j∗f))` on the grid, `J = family.jmax` unless
/// a smaller truncation is requested.
pub fn rychkov_extend(
    f: &GridFunction,
    domain: &SpecialDomain,
    family: &LPFamily,
    jmax: Option<usize>,
) -> Result<GridFunction> {
    family.check_grid(&f.grid)?;
    if !(domain.lipschitz < 1.0) {
        return Err(Error::InvalidParameter("Lipschitz bound violated".into()));
    }
    let top = jmax.unwrap_or(family.jmax).min(family.jmax);
    let restricted = f.map(|x, v| if domain.contains(x) { v } else { 0.0 });
    let mut out = GridFunction::zeros(&f.grid);
    for j in 0..=top {
        let g = family.phi[j].apply(&restricted)?.map(|x, v| if domain.contains(x) { v } else { 0.0 });
        let e = family.psi[j].apply(&g)?;
        for (o, v) in out.values.iter_mut().zip(&e.values) {
            *o += v;
        }
    }
    Ok(out)
}

/// Half-space reflection `E^M f(x₁, x′) = Σ a_j f(−b_j x₁, x′)` for `x₁ < 0`.
#[derive(Clone, Debug)]
pub struct ReflectionExt {
    pub order: usize,
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    /// `max_{|k|≤M} |Σ a_j (−b_j)^k − 1|`.
    pub residual: f64,
}

impl ReflectionExt {
    /// Coefficients from the Lagrange form: with `x_j = −b_j`, the system
    /// `Σ a_j x_j^k = 1, |k| ≤ M` is `Σ c_j x_j^m = 1, 0 ≤ m ≤ 2M` for
    /// `c_j = a_j x_j^{−M}`, so `c_j = ℓ_j(1)` for the Lagrange basis `ℓ_j`.
    pub fn new(order: usize, b: Vec<f64>) -> Result<Self> {
        if b.len() != 2 * order + 1 {
            return Err(Error::DimensionMismatch { expected: 2 * order + 1, got: b.len() });
        }
        if b.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter("reflection rates must be positive".into()));
        }
        for i in 0..b.len() {
            for j in 0..i {
                if b[i] == b[j] {
                    return Err(Error::InvalidParameter("reflection rates must be distinct".into()));
                }
            }
        }
        let x: Vec<f64> = b.iter().map(|v| -v).collect();
        let a: Vec<f64> = (0..x.len())
            .map(|j| {
                let l: f64 = (0..x.len()).filter(|&i| i != j).map(|i| (1.0 - x[i]) / (x[j] - x[i])).product();
                l * x[j].powi(order as i32)
            })
            .collect();
        let residual = reflection_residual(order, &b, &a);
        Ok(ReflectionExt { order, b, a, residual })
    }

    /// The default `M = 4`, `b = 1, …, 9`.
    pub fn standard(order: usize) -> Result<Self> {
        ReflectionExt::new(order, (1..=2 * order + 1).map(|v| v as f64).collect())
    }

    /// Exact rational coefficients for integer rates.
    pub fn exact(order: usize, b: &[i64]) -> Result<Vec<Ratio<i64>>> {
        if b.len() != 2 * order + 1 || b.iter().any(|&v| v <= 0) {
            return Err(Error::InvalidParameter("need 2M+1 positive integer rates".into()));
        }
        let x: Vec<Ratio<i64>> = b.iter().map(|&v| Ratio::from_integer(-v)).collect();
        let one = Ratio::from_integer(1);
        let mut out = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            let mut l = one;
            for i in 0..x.len() {
                if i != j {
                    if x[i] == x[j] {
                        return Err(Error::InvalidParameter("reflection rates must be distinct".into()));
                    }
                    l *= (one - x[i]) / (x[j] - x[i]);
                }
            }
            for _ in 0..order {
                l *= x[j];
            }
            out.push(l);
        }
        Ok(out)
    }

    /// The same coefficients by an LU solve of the `(2M+1)²` system.
    pub fn solve_numeric(order: usize, b: &[f64]) -> Result<Vec<f64>> {
        let n = 2 * order + 1;
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let m = DMatrix::from_fn(n, n, |r, c| (-b[c]).powi(r as i32 - order as i32));
        let rhs = DVector::from_element(n, 1.0);
        let sol = m.lu().solve(&rhs).ok_or_else(|| Error::NoConvergence("singular reflection system".into()))?;
        Ok(sol.iter().copied().collect())
    }

    /// `Σ|a_j|`, the sup-norm of the extension on the reflected side.
    pub fn amplification(&self) -> f64 {
        self.a.iter().map(|a| a.abs()).sum()
    }

    /// Extend a grid function sampled on `x₁ ≥ 0` across `x₁ = 0`.
    pub fn extend(&self, f: &GridFunction) -> Result<GridFunction> {
        let grid = &f.grid;
        let i0 = grid
            .zero_index(0)
            .ok_or_else(|| Error::InvalidParameter("x1 = 0 must be a grid line".into()))?;
        let rates: Vec<usize> = self
            .b
            .iter()
            .map(|&v| {
                if (v - v.round()).abs() < 1e-12 {
                    Ok(v.round() as usize)
                } else {
                    Err(Error::Unsupported("non-integer reflection rates on a grid".into()))
                }
            })
            .collect::<Result<_>>()?;
        let bmax = *rates.iter().max().unwrap_or(&1);
        let n0 = grid.dims[0];
        if i0 + bmax * i0 >= n0 {
            return Err(Error::GridTooCoarse(format!(
                "sampling depth: x1 > 0 needs {} rows for rate {bmax}, grid has {}",
                bmax * i0,
                n0 - 1 - i0
            )));
        }
        let stride: usize = grid.dims[1..].iter().product();
        let mut out = f.clone();
        for i in 0..i0 {
            let m = i0 - i;
            for t in 0..stride {
                out.values[i * stride + t] =
                    dot2(rates.iter().zip(&self.a).map(|(&b, &a)| (a, f.values[(i0 + b * m) * stride + t])));
            }
        }
        Ok(out)
    }
}

/// Compensated dot product (the `Dot2` scheme of Ogita, Rump and Oishi):
/// as accurate as plain summation in twice the working precision. The
/// reflection coefficients are large with alternating signs, so plain sums
/// lose about six digits.
fn dot2(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (a, b) in terms {
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let t = s + p;
        let z = t - s;
        let se = (s - (t - z)) + (p - z);
        s = t;
        c += pe + se;
    }
    s + c
}

fn reflection_residual(order: usize, b: &[f64], a: &[f64]) -> f64 {
    let m = order as i32;
    (-m..=m)
        .map(|k| (a.iter().zip(b).map(|(aj, bj)| aj * (-bj).powi(k)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Commutators
// ---------------------------------------------------------------------------

/// Fourth-order central difference along `axis`; the two outermost layers
/// are left at zero.
pub fn grid_derivative(f: &GridFunction, axis: usize) -> GridFunction {
    let grid = &f.grid;
    let stride: usize = grid.dims[axis + 1..].iter().product();
    let n = grid.dims[axis];
    let mut out = GridFunction::zeros(grid);
    for flat in 0..grid.len() {
        let i = (flat / stride) % n;
        if i < 2 || i + 2 >= n {
            continue;
        }
        let v = |s: isize| f.values[(flat as isize + s * stride as isize) as usize];
        out.values[flat] = (-v(2) + 8.0 * v(1) - 8.0 * v(-1) + v(-2)) / (12.0 * grid.h);
    }
    out
}

#[derive(Clone, Debug)]
pub struct CommutatorReport {
    pub axis: usize,
    /// `[D_ν, E] f` on the grid (zero on the two outermost layers).
    pub field: GridFunction,
    /// Sup over points of `ω` whose stencil stays inside `ω`.
    pub interior_sup: f64,
    /// Sup over the stencil band `0 ≤ x₁ < 2h`.
    pub band_sup: f64,
    /// Sup over `x₁ < 0`.
    pub exterior_sup: f64,
}

/// `[D_ν, E] f = D_ν(E f) − E(D_ν f)` for the reflection extension. `f` is
/// sampled on the whole grid; `E` only reads its values on `x₁ ≥ 0`.
pub fn commutator(axis: usize, ext: &ReflectionExt, f: &GridFunction) -> Result<CommutatorReport> {
    let grid = &f.grid;
    if axis >= grid.ndim() {
        return Err(Error::DimensionMismatch { expected: grid.ndim(), got: axis + 1 });
    }
    let i0 = grid.zero_index(0).ok_or_else(|| Error::InvalidParameter("x1 = 0 must be a grid line".into()))?;
    let ef = ext.extend(f)?;
    let d_ef = grid_derivative(&ef, axis);
    let e_df = ext.extend(&grid_derivative(f, axis))?;
    let field = d_ef.zip_with(&e_df, |a, b| a - b)?;
    let stride: usize = grid.dims[1..].iter().product();
    let (mut interior, mut band, mut exterior) = (0.0f64, 0.0f64, 0.0f64);
    for (flat, v) in field.values.iter().enumerate() {
        let idx = grid.unravel(flat);
        // Stencils touching the outer layers are not evaluated.
        if idx.iter().zip(&grid.dims).any(|(&i, &n)| i < 2 || i + 2 >= n) {
            continue;
        }
        let i = flat / stride;
        let a = v.abs();
        if i < i0 {
            exterior = exterior.max(a);
        } else if i < i0 + 2 && axis == 0 {
            band = band.max(a);
        } else {
            interior = interior.max(a);
        }
    }
    Ok(CommutatorReport { axis, field, interior_sup: interior, band_sup: band, exterior_sup: exterior })
}

// ---------------------------------------------------------------------------
// Heideman-type decay
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct HeidemanRow {
    pub j: usize,
    pub k: usize,
    pub alpha: usize,
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct HeidemanReport {
    pub rows: Vec<HeidemanRow>,
    /// Slope of `log₂ norm` against `|j−k|` with `k` pinned.
    pub slope_j_side: f64,
    /// The same with `j` pinned and `k` growing.
    pub slope_k_side: f64,
    /// The worse of the two.
    pub slope: f64,
    /// The same two fits restricted to `|j−k| ≥ span/2`, where the
    /// asymptotic rate shows once the small-`|j−k|` plateau is left behind.
    pub tail_slope_j_side: f64,
    pub tail_slope_k_side: f64,
    /// Slope of `log₂ norm` against `k` on the diagonal `j = k`.
    pub diagonal_k_slope: f64,
}

/// Column norms `‖φ_j∗[(g(·) − g(y))·D^αψ_k(· − y)]‖_{L¹}` maximised over the
/// probe centres `y`. For `f = δ_y` this is the left side of the Heideman
/// estimate with `p = 1`, and the maximum over `y` is the `L¹` operator norm.
pub fn heideman_norm(
    family: &LPFamily,
    g: &dyn Fn(&[f64]) -> f64,
    alpha: usize,
    j: usize,
    k: usize,
    probes: &[Vec<f64>],
) -> Result<f64> {
    if j > family.jmax || k > family.jmax {
        return Err(Error::GridTooCoarse(format!("levels ({j}, {k}) beyond {}", family.jmax)));
    }
    let mut dk = family.psi[k].clone();
    for _ in 0..alpha {
        dk = dk.derivative(0);
    }
    let mut best = 0.0f64;
    for y in probes {
        let col = family.phi[j].convolve(&dk.times_increment(g, y));
        best = best.max(col.l1());
    }
    Ok(best)
}

/// Decay table along `j = pivot + d` (k pinned) and `k = pivot + d` (j
/// pinned), `0 ≤ d ≤ span`, with log-log fits.
pub fn heideman_decay(
    family: &LPFamily,
    g: &dyn Fn(&[f64]) -> f64,
    alpha: usize,
    pivot: usize,
    span: usize,
    probes: &[Vec<f64>],
) -> Result<HeidemanReport> {
    if pivot + span > family.jmax {
        return Err(Error::GridTooCoarse(format!("pivot {pivot} + span {span} exceeds {}", family.jmax)));
    }
    let mut rows = Vec::new();
    let (mut xs, mut yj, mut yk) = (vec![], vec![], vec![]);
    for d in 0..=span {
        let a = heideman_norm(family, g, alpha, pivot + d, pivot, probes)?;
        rows.push(HeidemanRow { j: pivot + d, k: pivot, alpha, norm: a });
        let b = if d == 0 { a } else { heideman_norm(family, g, alpha, pivot, pivot + d, probes)? };
        if d > 0 {
            rows.push(HeidemanRow { j: pivot, k: pivot + d, alpha, norm: b });
        }
        xs.push(d as f64);
        yj.push(a.log2());
        yk.push(b.log2());
    }
    let (sj, _, _) = linear_fit(&xs, &yj);
    let (sk, _, _) = linear_fit(&xs, &yk);
    let t0 = span / 2;
    let (tj, _, _) = linear_fit(&xs[t0..], &yj[t0..]);
    let (tk, _, _) = linear_fit(&xs[t0..], &yk[t0..]);
    let (mut kx, mut ky) = (vec![], vec![]);
    for k in pivot..=pivot + span {
        let v = heideman_norm(family, g, alpha, k, k, probes)?;
        kx.push(k as f64);
        ky.push(v.log2());
    }
    let (dslope, _, _) = linear_fit(&kx, &ky);
    Ok(HeidemanReport {
        rows,
        slope_j_side: sj,
        slope_k_side: sk,
        slope: sj.max(sk),
        tail_slope_j_side: tj,
        tail_slope_k_side: tk,
        diagonal_k_slope: dslope,
    })
}

// ---------------------------------------------------------------------------
// Hardy–Littlewood check
// ---------------------------------------------------------------------------

/// Smooth step: 1 on `t ≤ a`, 0 on `t ≥ b`.
pub fn smooth_cutoff(t: f64, a: f64, b: f64) -> f64 {
    if t <= a {
        return 1.0;
    }
    if t >= b {
        return 0.0;
    }
    let u = (t - a) / (b - a);
    let e = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    e(1.0 - u) / (e(1.0 - u) + e(u))
}

/// Boundary-degenerate probe `t₊^a χ(t)` on the half-line `ω = (0, ∞)`,
/// `t = x₁ − inset`, with `χ` a cutoff to `t < 3/4`. A positive `inset`
/// moves the support into `ω` and also smooths the start at `t = 0`, so
/// the probe is then smooth and supported away from `bω`.
#[derive(Clone, Copy, Debug)]
pub struct HlProbe {
    pub a: f64,
    pub inset: f64,
}

impl HlProbe {
    pub fn eval(&self, x: f64) -> f64 {
        let t = x - self.inset;
        if t <= 0.0 {
            return 0.0;
        }
        let onset = if self.inset > 0.0 { 1.0 - smooth_cutoff(t, 0.0, 0.2) } else { 1.0 };
        t.min(1.0).powf(self.a) * smooth_cutoff(t, 0.25, 0.75) * onset
    }
}

#[derive(Clone, Debug)]
pub struct HlRow {
    pub h: f64,
    pub jmax: usize,
    pub weighted: f64,
    pub f_norm: f64,
}

#[derive(Clone, Debug)]
pub struct HardyLittlewoodReport {
    pub probe: HlProbe,
    pub s: f64,
    pub p: f64,
    pub rows: Vec<HlRow>,
    /// Growth exponents of the two sides in `1/h`.
    pub weighted_growth: f64,
    pub f_growth: f64,
    /// `max weighted / F-norm` over resolutions: the embedding constant seen.
    pub ratio_max: f64,
    /// Locally constant bound on strips: largest
    /// `‖φ_j∗f‖_{L^p(P_k)} / (min(1, 2^{(j−k)/p}) ‖f‖_{L^p(P_{<j+R})})`.
    pub local_constant: f64,
}

/// Compare `‖δ^{−s} f‖_{L^p(ω)}` with `‖f‖_{F^s_{p∞}}` on the 1D half-line
/// at the spacings `hs`.
pub fn hardy_littlewood_check(probe: HlProbe, s: f64, p: f64, hs: &[f64]) -> Result<HardyLittlewoodReport> {
    let domain = SpecialDomain::half_space();
    let mut rows = Vec::new();
    let mut local_constant = 0.0f64;
    for &h in hs {
        let grid = GridSpec::cube(1, -2.5, 1.5, h)?;
        let family = build_family(2, &grid)?;
        let f = GridFunction::from_fn(&grid, |x| probe.eval(x[0]));
        let weighted = f
            .map(|x, v| if x[0] > 0.0 { v * domain.delta(x).powf(-s) } else { 0.0 })
            .lp_norm_where(p, |x| x[0] > 0.0);
        let fnorm = tl_norm(&f, s, p, f64::INFINITY, &family, &NormRegion::Whole, None)?;
        rows.push(HlRow { h, jmax: family.jmax, weighted, f_norm: fnorm.value });
        local_constant = local_constant.max(local_constant_ratio(&family, &f, &domain, p)?);
    }
    let x: Vec<f64> = rows.iter().map(|r| (1.0 / r.h).log2()).collect();
    let wy: Vec<f64> = rows.iter().map(|r| r.weighted.log2()).collect();
    let fy: Vec<f64> = rows.iter().map(|r| r.f_norm.log2()).collect();
    let (weighted_growth, f_growth) = if rows.len() >= 2 {
        (
            linear_fit(&x, &wy).0,
            linear_fit(&x, &fy).0,
        )
    } else {
        (0.0, 0.0)
    };
    let ratio_max = rows.iter().map(|r| r.weighted / r.f_norm).fold(0.0, f64::max);
    Ok(HardyLittlewoodReport { probe, s, p, rows, weighted_growth, f_growth, ratio_max, local_constant })
}

/// Largest normalised strip ratio of the locally constant lemma over
/// `0 ≤ k ≤ j + R`, `R` taken from the support margin of `φ₀`.
pub fn local_constant_ratio(family: &LPFamily, f: &GridFunction, domain: &SpecialDomain, p: f64) -> Result<f64> {
    let c1 = family.shape.centre - family.shape.radius;
    let r = (0.5 - c1.log2()).ceil().max(1.0) as usize;
    let mut worst = 0.0f64;
    for j in 0..=family.jmax {
        let src = f.map(|x, v| if domain.in_inner_below(x, j + r) { v } else { 0.0 });
        let denom_base = src.lp_norm(p);
        if denom_base == 0.0 {
            continue;
        }
        let g = family.phi[j].apply(&src)?;
        for k in 0..=(j + r) {
            let num = g.lp_norm_where(p, |x| domain.in_inner(x, k));
            let w = if p.is_infinite() { 1.0 } else { 2f64.powf((j as f64 - k as f64) / p).min(1.0) };
            worst = worst.max(num / (w * denom_base));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(lo: f64, hi: f64, h: f64) -> GridSpec {
        GridSpec::cube(1, lo, hi, h).unwrap()
    }

    #[test]
    fn family_certificates_1d() {
        let fam = build_family(4, &grid1(-1.0, 1.0, 2f64.powi(-10))).unwrap();
        assert_eq!(fam.jmax, 8);
        assert!(fam.moments.mass_error <= 1e-8, "{:?}", fam.moments);
        assert!(fam.moments.max_moment <= 1e-8, "{:?}", fam.moments);
        assert!(fam.cone.holds(), "{:?}", fam.cone);
        assert!((fam.psi1().moment(&[1])).abs() <= 1e-8);
    }

    #[test]
    fn family_certificates_2d() {
        let fam = build_family(2, &GridSpec::cube(2, -1.0, 1.0, 2f64.powi(-6)).unwrap()).unwrap();
        assert_eq!(fam.jmax, 4);
        assert!(fam.moments.mass_error <= 1e-8, "{:?}", fam.moments);
        assert!(fam.moments.max_moment <= 1e-8, "{:?}", fam.moments);
        assert!(fam.cone.holds(), "{:?}", fam.cone);
    }

    #[test]
    fn too_many_moments_for_the_grid() {
        let err = build_family(9, &grid1(-1.0, 1.0, 2f64.powi(-8))).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse(_)));
    }

    #[test]
    fn fft_and_direct_convolutions_agree() {
        let a: Vec<f64> = (0..700).map(|i| ((i as f64) * 0.37).sin()).collect();
        let b: Vec<f64> = (0..500).map(|i| ((i as f64) * 0.11).cos()).collect();
        let (c, _) = convolve_full(&a, &[700], &b, &[500]);
        for t in [0usize, 13, 600, 1198] {
            let direct: f64 = (0..700).filter(|&i| t >= i && t - i < 500).map(|i| a[i] * b[t - i]).sum();
            assert!((c[t] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruction_converges() {
        let h = 2f64.powi(-10);
        let grid = grid1(-4.0, 8.0, h);
        let fam = build_family(2, &grid).unwrap();
        let f = GridFunction::from_fn(&grid, |x| (-x[0] * x[0]).exp());
        let rec = reconstruction_sweep(&fam, &f).unwrap();
        assert!(rec.dual_error[fam.jmax] < 1e-4, "{:?}", rec.dual_error);
        assert!(rec.phi_error[fam.jmax] < 1e-4, "{:?}", rec.phi_error);
        for w in rec.phi_error.windows(2).skip(1) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn vandermonde_example() {
        let ext = ReflectionExt::new(1, vec![1.0, 2.0, 3.0]).unwrap();
        for (a, e) in ext.a.iter().zip([-6.0, 16.0, -9.0]) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!(ext.residual <= 1e-10);
        let exact = ReflectionExt::exact(1, &[1, 2, 3]).unwrap();
        assert_eq!(exact, vec![Ratio::from_integer(-6), Ratio::from_integer(16), Ratio::from_integer(-9)]);
        let lu = ReflectionExt::solve_numeric(1, &[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in lu.iter().zip(&ext.a) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn standard_reflection_routes_agree() {
        let ext = ReflectionExt::standard(4).unwrap();
        assert!(ext.residual <= 1e-10, "{}", ext.residual);
        let exact = ReflectionExt::exact(4, &[1, 2, 3, 4, 5, 6, 7, 8, 9]).unwrap();
        let lu = ReflectionExt::solve_numeric(4, &ext.b).unwrap();
        for ((a, e), l) in ext.a.iter().zip(&exact).zip(&lu) {
            let ev = *e.numer() as f64 / *e.denom() as f64;
            assert!((a - ev).abs() <= 1e-9 * ev.abs().max(1.0));
            assert!((a - l).abs() <= 1e-6 * ev.abs().max(1.0));
        }
    }

    #[test]
    fn reflection_matches_polynomials() {
        let grid = GridSpec::new(vec![41, 5], 0.05, vec![-0.2, 0.0]).unwrap();
        let ext = ReflectionExt::standard(1).unwrap();
        let f = GridFunction::from_fn(&grid, |x| 1.0 + 2.0 * x[0] + x[1]);
        let e = ext.extend(&f).unwrap();
        for (v, w) in e.values.iter().zip(&f.values) {
            assert!((v - w).abs() < 1e-12);
        }
        let deep = GridSpec::new(vec![20, 5], 0.05, vec![-0.5, 0.0]).unwrap();
        assert!(ext.extend(&GridFunction::zeros(&deep)).is_err());
    }

    #[test]
    fn tangential_commutator_vanishes() {
        let grid = GridSpec::new(vec![161, 40], 1.0 / 64.0, vec![-0.25, -0.3]).unwrap();
        let f = GridFunction::from_fn(&grid, |x| (x[0] + 2.0 * x[1]).sin() * (1.0 + x[0] * x[1]));
        for m in [1, 2] {
            let rep = commutator(1, &ReflectionExt::standard(m).unwrap(), &f).unwrap();
            assert!(rep.exterior_sup <= 1e-10 && rep.interior_sup <= 1e-10, "M = {m}: {rep:?}");
        }
        // At M = 4 the coefficients reach 1e6, so the floor is rounding times their l1 norm.
        let ext = ReflectionExt::standard(4).unwrap();
        let rep = commutator(1, &ext, &f).unwrap();
        let floor = f64::EPSILON * ext.amplification() * grid_derivative(&f, 1).sup_norm() * 16.0;
        assert!(rep.exterior_sup <= floor, "{} > {floor}", rep.exterior_sup);
        let normal = commutator(0, &ext, &f).unwrap();
        assert_eq!(normal.interior_sup, 0.0);
    }

    #[test]
    fn even_reflection_flips_the_normal_derivative() {
        let grid = grid1(-0.5, 1.0, 1.0 / 32.0);
        let ext = ReflectionExt::new(0, vec![1.0]).unwrap();
        assert_eq!(ext.a, vec![1.0]);
        let f = GridFunction::from_fn(&grid, |x| x[0]);
        let rep = commutator(0, &ext, &f).unwrap();
        let i0 = grid.zero_index(0).unwrap();
        for i in 2..i0 - 2 {
            assert!((rep.field.values[i] + 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn strips_partition() {
        let d = SpecialDomain::half_space();
        assert_eq!(d.inner_strip(&[2f64.powi(-3)]), Some(3));
        assert_eq!(d.inner_strip(&[2.0]), Some(0));
        assert_eq!(d.outer_strip(&[-0.25]), Some(2));
        assert!(d.in_inner_below(&[0.8], 1));
        let bent = SpecialDomain::graph(|xp| 0.5 * xp[0].sin(), 0.5).unwrap();
        let mut r = crate::rng(3);
        use rand::Rng;
        for _ in 0..300 {
            let x = [r.random_range(-0.5..1.5), r.random_range(-1.0..1.0)];
            if !bent.contains(&x) {
                continue;
            }
            let k = bent.inner_strip(&x).unwrap();
            let hits = (0..40).filter(|&m| bent.in_inner(&x, m)).count();
            assert_eq!(hits, 1);
            let delta = bent.delta(&x);
            assert!(delta >= 2f64.powf(-1.0 - k as f64) - 1e-12 && delta <= 2f64.powf(0.5 - k as f64) + 1e-12);
        }
        assert!(SpecialDomain::graph(|xp| xp[0], 1.0).is_err());
    }

    #[test]
    fn grid_function_io_roundtrip() {
        let grid = GridSpec::new(vec![3, 4], 0.5, vec![-1.0, 0.25]).unwrap();
        let f = GridFunction::from_fn(&grid, |x| x[0] * 3.0 - x[1]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        f.write_binary(&path).unwrap();
        assert_eq!(GridFunction::read_binary(&path).unwrap(), f);
        f.write_csv(&dir.path().join("f.csv")).unwrap();
    }

    #[test]
    fn heideman_examples() {
        let fam = build_family_with(2, 1, 2f64.powi(-13), FamilyShape::default_for(1), Some(10)).unwrap();
        let one = |_: &[f64]| 1.0;
        assert_eq!(heideman_norm(&fam, &one, 0, 4, 6, &[vec![0.1]]).unwrap(), 0.0);
        let x1 = |x: &[f64]| x[0];
        let a0 = heideman_decay(&fam, &x1, 0, 3, 6, &[vec![0.0]]).unwrap();
        assert!(a0.slope <= -2.0, "{a0:?}");
        assert!((a0.diagonal_k_slope + 1.0).abs() < 0.05, "{}", a0.diagonal_k_slope);
        let a1 = heideman_decay(&fam, &x1, 1, 3, 6, &[vec![0.0]]).unwrap();
        assert!(a1.diagonal_k_slope.abs() < 0.05, "{}", a1.diagonal_k_slope);
    }

    #[test]
    fn rychkov_extension_examples() {
        let grid = grid1(-8.0, 8.0, 2f64.powi(-10));
        let fam = build_family(2, &grid).unwrap();
        let dom = SpecialDomain::half_space();
        let (down, _) = fam.reach();
        let one = rychkov_extend(&GridFunction::from_fn(&grid, |_| 1.0), &dom, &fam, None).unwrap();
        let dev = one.map(|_, v| v - 1.0).lp_norm_where(f64::INFINITY, |x| x[0] > 0.0 && x[0] + down <= 8.0);
        assert!(dev <= 1e-3, "{dev}");
        let f = GridFunction::from_fn(&grid, |x| smooth_cutoff((x[0] - 1.5).abs(), 0.3, 1.0));
        let e = rychkov_extend(&f, &dom, &fam, None).unwrap();
        let err = e.zip_with(&f, |a, b| a - b).unwrap().lp_norm_where(f64::INFINITY, |x| x[0] > 0.0);
        assert!(err <= 1e-3, "{err}");
        assert!(e.lp_norm_where(f64::INFINITY, |x| x[0] < -down) <= 1e-10);
        assert!(rychkov_extend(&f, &SpecialDomain { lipschitz: 1.5, ..dom }, &fam, None).is_err());
    }

    #[test]
    fn tl_norm_examples() {
        let h = 2f64.powi(-10);
        let grid = grid1(-3.0, 2.0, h);
        let f2 = build_family(2, &grid).unwrap();
        let f4 = build_family(4, &grid).unwrap();
        let zero = GridFunction::zeros(&grid);
        assert_eq!(tl_norm(&zero, 0.5, 2.0, 2.0, &f2, &NormRegion::Whole, None).unwrap().value, 0.0);
        let bump = GridFunction::from_fn(&grid, |x| smooth_cutoff(x[0].abs(), 0.2, 0.8));
        for (p, q) in [(2.0, 2.0), (f64::INFINITY, f64::INFINITY), (f64::INFINITY, 1.0)] {
            let a = tl_norm(&bump, 0.5, p, q, &f2, &NormRegion::Whole, None).unwrap().value;
            let b = tl_norm(&bump, 0.5, p, q, &f4, &NormRegion::Whole, None).unwrap().value;
            assert!(a / b <= 4.0 && b / a <= 4.0, "p {p} q {q}: {a} vs {b}");
        }
        let kink = GridFunction::from_fn(&grid, |x| x[0].max(0.0).powf(0.3) * smooth_cutoff(x[0], 0.3, 0.8));
        let sweep = |s: f64| -> Vec<f64> {
            [4, 6, 8].iter().map(|&j| tl_norm(&kink, s, 2.0, 2.0, &f4, &NormRegion::Whole, Some(j)).unwrap().value).collect()
        };
        let below = sweep(0.5);
        let above = sweep(1.0);
        assert!(below[2] / below[1] < 1.05);
        assert!(above[2] / above[1] > 1.2 && above[1] / above[0] > 1.2);
        assert!(tl_norm(&kink, 1.0, 2.0, 2.0, &f4, &NormRegion::Whole, Some(20)).is_err());
    }

    #[test]
    fn hardy_littlewood_examples() {
        let hs = [2f64.powi(-7), 2f64.powi(-9)];
        let good = hardy_littlewood_check(HlProbe { a: 0.6, inset: 0.0 }, 0.5, f64::INFINITY, &hs).unwrap();
        assert!(good.weighted_growth.abs() < 0.01, "{good:?}");
        let bad = hardy_littlewood_check(HlProbe { a: 0.4, inset: 0.0 }, 0.5, f64::INFINITY, &hs).unwrap();
        assert!((bad.weighted_growth - 0.1).abs() < 0.02, "{bad:?}");
        let inside = hardy_littlewood_check(HlProbe { a: 0.0, inset: 0.3 }, 0.5, f64::INFINITY, &hs).unwrap();
        assert!(inside.rows.iter().all(|r| r.weighted.is_finite() && r.f_norm.is_finite()));
        assert!((inside.rows[0].f_norm / inside.rows[1].f_norm - 1.0).abs() < 0.05, "{inside:?}");
        assert!(good.local_constant < 10.0);
    }
}
