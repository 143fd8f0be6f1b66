//! Periodic uniform-grid calculus on the unit torus T^n, n ∈ {1, 2, 3}.
//!
//! Nodes sit at `x_j = h · j` with `h = 1/N`. Storage is flat with axis 0
//! fastest (stride 1), axis 1 stride `N`, axis 2 stride `N²`; every stencil
//! wraps periodically.
//!
//! The weighted Laplacian is written in flux form with face-midpoint weights,
//! so that
//!
//! ```text
//! h^n Σ_i Σ_j D⁺_i u · D⁺_i v · e^{-f(x_j + h e_i / 2)} = - h^n Σ_j v_j (Δ_f u)_j e^{-f_j}
//! ```
//!
//! holds exactly up to round-off (summation by parts on the discrete torus).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum_by, Real};
use crate::weight::WeightModel;

/// Smallest admissible number of points per axis; stencils need three distinct neighbours.
pub const MIN_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    points_per_axis: usize,
}

impl GridSpec {
    pub fn new(dim: usize, points_per_axis: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} outside 1..=3")));
        }
        if points_per_axis < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "{points_per_axis} points per axis, need at least {MIN_POINTS}"
            )));
        }
        points_per_axis
            .checked_pow(dim as u32)
            .and_then(|cells| cells.checked_mul(dim * (dim + 1) / 2))
            .filter(|&cells| cells <= isize::MAX as usize / 16)
            .ok_or_else(|| Error::InvalidGrid("cell count overflows addressable memory".into()))?;
        Ok(Self { dim, points_per_axis })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Total node count `N^n`.
    #[inline]
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing<T: Real>(&self) -> T {
        T::one() / T::from_usize_lossy(self.points_per_axis)
    }

    /// Quadrature weight `h^n` of a single cell.
    #[inline]
    pub fn cell_volume<T: Real>(&self) -> T {
        self.spacing::<T>().powi(self.dim as i32)
    }

    /// Number of stored entries of a symmetric n×n matrix.
    #[inline]
    pub fn sym_len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow(axis as u32)
    }

    #[inline]
    pub fn coord(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.points_per_axis
    }

    /// Index of the neighbour one lattice step forward along `axis`.
    #[inline]
    pub fn plus(&self, idx: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if self.coord(idx, axis) + 1 == self.points_per_axis {
            idx + s - self.points_per_axis * s
        } else {
            idx + s
        }
    }

    /// Index of the neighbour one lattice step backward along `axis`.
    #[inline]
    pub fn minus(&self, idx: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if self.coord(idx, axis) == 0 {
            idx + self.points_per_axis * s - s
        } else {
            idx - s
        }
    }

    /// Index shifted by an arbitrary number of lattice steps along `axis`.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let n = self.points_per_axis as isize;
        let c = self.coord(idx, axis) as isize;
        let target = (c + offset).rem_euclid(n) as usize;
        idx - self.coord(idx, axis) * self.stride(axis) + target * self.stride(axis)
    }

    /// Node coordinates; entries beyond `dim` are zero.
    pub fn position<T: Real>(&self, idx: usize) -> [T; 3] {
        let h = self.spacing::<T>();
        let mut x = [T::zero(); 3];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = T::from_usize_lossy(self.coord(idx, axis)) * h;
        }
        x
    }

    /// Packed position of entry (i, j) in upper-triangular row-major storage.
    #[inline]
    pub fn sym_index(&self, i: usize, j: usize) -> usize {
        sym_index(self.dim, i, j)
    }
}

/// Packed position of entry (i, j) of a symmetric n×n matrix.
#[inline]
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    r * n - r * (r + 1) / 2 + c
}

/// `M v` for packed symmetric `M` (n ≤ 3).
#[inline]
pub fn sym_matvec<T: Real>(n: usize, m: &[T], v: &[T]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..n {
            acc = acc + m[sym_index(n, i, j)] * v[j];
        }
        out[i] = acc;
    }
    out
}

/// Frobenius norm squared of a packed symmetric matrix.
#[inline]
pub fn sym_frobenius_sq<T: Real>(n: usize, m: &[T]) -> T {
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            let e = m[sym_index(n, i, j)];
            acc = acc + e * e;
        }
    }
    acc
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn check_finite<T: Real>(values: &[T]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!("non-finite sample at index {i}"))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    grid: GridSpec,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(grid: GridSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: GridSpec, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: GridSpec, c: T) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at every node.
    pub fn from_fn<F: Fn(&[T]) -> T>(grid: GridSpec, f: F) -> Self {
        let values = (0..grid.len())
            .map(|j| {
                let x = grid.position::<T>(j);
                f(&x[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, idx: usize) -> T {
        self.values[idx]
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map<F: Fn(T) -> T>(&self, f: F) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<F: Fn(T, T) -> T>(&self, other: &Self, f: F) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid, values }
    }

    /// `self + a · x`
    pub fn axpy(&self, a: T, x: &Self) -> Self {
        self.zip_map(x, |s, xv| s + a * xv)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Field translated by `offset` lattice steps along `axis`: `out_j = self_{j - offset e_axis}`.
    pub fn lattice_shift(&self, axis: usize, offset: isize) -> Self {
        let mut values = vec![T::zero(); self.values.len()];
        for (j, &v) in self.values.iter().enumerate() {
            values[self.grid.shift(j, axis, offset)] = v;
        }
        Self { grid: self.grid, values }
    }
}

/// `n` components per node, stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    grid: GridSpec,
    values: Vec<T>,
}

impl<T: Real> VectorField<T> {
    pub fn new(grid: GridSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() * grid.dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} components, got {}",
                grid.len() * grid.dim(),
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![T::zero(); grid.len() * grid.dim()] }
    }

    pub fn constant(grid: GridSpec, c: &[T]) -> Self {
        assert_eq!(c.len(), grid.dim());
        let values = (0..grid.len()).flat_map(|_| c.iter().copied()).collect();
        Self { grid, values }
    }

    pub fn from_fn<F: Fn(&[T], &mut [T])>(grid: GridSpec, f: F) -> Self {
        let n = grid.dim();
        let mut values = vec![T::zero(); grid.len() * n];
        for (j, chunk) in values.chunks_mut(n).enumerate() {
            let x = grid.position::<T>(j);
            f(&x[..n], chunk);
        }
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &[T] {
        let n = self.grid.dim();
        &self.values[idx * n..(idx + 1) * n]
    }

    #[inline]
    pub fn component(&self, idx: usize, axis: usize) -> T {
        self.values[idx * self.grid.dim() + axis]
    }

    #[inline]
    pub fn norm_sq_at(&self, idx: usize) -> T {
        let p = self.at(idx);
        dot(p, p)
    }

    /// `max_j |V_j|`
    pub fn sup_norm(&self) -> T {
        (0..self.grid.len()).fold(T::zero(), |m, j| m.max(self.norm_sq_at(j).sqrt()))
    }
}

/// Symmetric n×n matrix per node in packed upper-triangular storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrixField<T> {
    grid: GridSpec,
    values: Vec<T>,
}

impl<T: Real> SymMatrixField<T> {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![T::zero(); grid.len() * grid.sym_len()] }
    }

    /// Fills entry (i, j), i ≤ j, from `f(x, i, j)`.
    pub fn from_fn<F: Fn(&[T], usize, usize) -> T>(grid: GridSpec, f: F) -> Self {
        let n = grid.dim();
        let m = grid.sym_len();
        let mut values = vec![T::zero(); grid.len() * m];
        for (idx, chunk) in values.chunks_mut(m).enumerate() {
            let x = grid.position::<T>(idx);
            for i in 0..n {
                for j in i..n {
                    chunk[sym_index(n, i, j)] = f(&x[..n], i, j);
                }
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &[T] {
        let m = self.grid.sym_len();
        &self.values[idx * m..(idx + 1) * m]
    }

    #[inline]
    pub fn entry(&self, idx: usize, i: usize, j: usize) -> T {
        self.at(idx)[self.grid.sym_index(i, j)]
    }

    #[inline]
    pub fn frobenius_sq_at(&self, idx: usize) -> T {
        sym_frobenius_sq(self.grid.dim(), self.at(idx))
    }
}

/// Central-difference gradient `(u_{j+e_i} - u_{j-e_i}) / 2h`.
pub fn gradient_c<T: Real>(u: &ScalarField<T>) -> VectorField<T> {
    let g = *u.grid();
    let n = g.dim();
    let inv_2h = T::one() / (T::lit(2.0) * g.spacing::<T>());
    let v = u.values();
    let mut out = vec![T::zero(); g.len() * n];
    for j in 0..g.len() {
        for i in 0..n {
            out[j * n + i] = (v[g.plus(j, i)] - v[g.minus(j, i)]) * inv_2h;
        }
    }
    VectorField { grid: g, values: out }
}

/// Forward (staggered) gradient `(u_{j+e_i} - u_j) / h`.
///
/// Component `i` at node `j` lives on the face midpoint `x_j + h e_i / 2`.
pub fn gradient_f<T: Real>(u: &ScalarField<T>) -> VectorField<T> {
    let g = *u.grid();
    let n = g.dim();
    let inv_h = T::one() / g.spacing::<T>();
    let v = u.values();
    let mut out = vec![T::zero(); g.len() * n];
    for j in 0..g.len() {
        for i in 0..n {
            out[j * n + i] = (v[g.plus(j, i)] - v[j]) * inv_h;
        }
    }
    VectorField { grid: g, values: out }
}

/// Second central differences on the diagonal, 4-point cross stencil off the diagonal.
pub fn hessian<T: Real>(u: &ScalarField<T>) -> SymMatrixField<T> {
    let g = *u.grid();
    let n = g.dim();
    let m = g.sym_len();
    let h = g.spacing::<T>();
    let inv_h2 = T::one() / (h * h);
    let inv_4h2 = inv_h2 / T::lit(4.0);
    let two = T::lit(2.0);
    let v = u.values();
    let mut out = vec![T::zero(); g.len() * m];
    for j in 0..g.len() {
        let node = &mut out[j * m..(j + 1) * m];
        for i in 0..n {
            let (p, q) = (g.plus(j, i), g.minus(j, i));
            node[sym_index(n, i, i)] = (v[p] - two * v[j] + v[q]) * inv_h2;
            for k in (i + 1)..n {
                let pp = v[g.plus(p, k)];
                let pm = v[g.minus(p, k)];
                let mp = v[g.plus(q, k)];
                let mm = v[g.minus(q, k)];
                node[sym_index(n, i, k)] = (pp - pm - mp + mm) * inv_4h2;
            }
        }
    }
    SymMatrixField { grid: g, values: out }
}

/// `∫ g dμ ≈ h^n Σ_j g_j e^{-f_j}`.
pub fn integrate_mu<T: Real>(g: &ScalarField<T>, w: &WeightModel<T>) -> T {
    assert_eq!(g.grid(), w.grid(), "field and weight live on different grids");
    let gv = g.values();
    let wn = w.density_node().values();
    w.grid().cell_volume::<T>() * pairwise_sum_by(gv.len(), |j| gv[j] * wn[j])
}

/// `∫ F(j) dμ` for a per-node integrand given by index.
pub(crate) fn integrate_mu_by<T: Real, F: Fn(usize) -> T>(w: &WeightModel<T>, f: F) -> T {
    let wn = w.density_node().values();
    w.grid().cell_volume::<T>() * pairwise_sum_by(wn.len(), |j| f(j) * wn[j])
}

/// `‖g‖_{L²(dμ)}`
pub fn l2_mu_norm<T: Real>(g: &ScalarField<T>, w: &WeightModel<T>) -> T {
    let gv = g.values();
    integrate_mu_by(w, |j| gv[j] * gv[j]).sqrt()
}

/// Collocated weighted divergence `div V - ∇f · V` (central differences).
pub fn div_f<T: Real>(field: &VectorField<T>, w: &WeightModel<T>) -> ScalarField<T> {
    let g = *field.grid();
    assert_eq!(&g, w.grid(), "field and weight live on different grids");
    let n = g.dim();
    let inv_2h = T::one() / (T::lit(2.0) * g.spacing::<T>());
    let grad_f = w.grad_f();
    let values = (0..g.len())
        .map(|j| {
            let mut div = T::zero();
            for i in 0..n {
                div = div + (field.component(g.plus(j, i), i) - field.component(g.minus(j, i), i)) * inv_2h;
            }
            div - dot(grad_f.at(j), field.at(j))
        })
        .collect();
    ScalarField { grid: g, values }
}

/// Mimetic weighted Laplacian `e^{f_j} D⁻·(e^{-f_mid} D⁺ u)`.
pub fn laplacian_f<T: Real>(u: &ScalarField<T>, w: &WeightModel<T>) -> ScalarField<T> {
    let g = *u.grid();
    assert_eq!(&g, w.grid(), "field and weight live on different grids");
    let n = g.dim();
    let h = g.spacing::<T>();
    let inv_h2 = T::one() / (h * h);
    let v = u.values();
    let inv_density = w.inv_density_node().values();
    let values = (0..g.len())
        .map(|j| {
            let mut flux = T::zero();
            for i in 0..n {
                let (p, q) = (g.plus(j, i), g.minus(j, i));
                let face = w.density_face(i).values();
                flux = flux + face[j] * (v[p] - v[j]) - face[q] * (v[j] - v[q]);
            }
            flux * inv_h2 * inv_density[j]
        })
        .collect();
    ScalarField { grid: g, values }
}

/// Face-weighted Dirichlet form `h^n Σ_i Σ_j D⁺_i u D⁺_i v e^{-f_mid}`.
pub fn dirichlet_form<T: Real>(u: &ScalarField<T>, v: &ScalarField<T>, w: &WeightModel<T>) -> T {
    let g = *u.grid();
    assert_eq!(&g, v.grid(), "fields live on different grids");
    assert_eq!(&g, w.grid(), "field and weight live on different grids");
    let n = g.dim();
    let inv_h = T::one() / g.spacing::<T>();
    let (uv, vv) = (u.values(), v.values());
    let total = pairwise_sum_by(g.len() * n, |k| {
        let (j, i) = (k / n, k % n);
        let p = g.plus(j, i);
        (uv[p] - uv[j]) * inv_h * (vv[p] - vv[j]) * inv_h * w.density_face(i).values()[j]
    });
    g.cell_volume::<T>() * total
}
