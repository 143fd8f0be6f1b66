//! The weight `f` of the measure `dμ = e^{-f} dx`, its derivatives, and the pinching check.
//!
//! Only the horizontal part of the ambient weight `f(x) + ξ x²_{n+1} / 2` is
//! sampled on the grid; `ξ` travels along as a scalar.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{GridSpec, ScalarField, SymMatrixField, VectorField};
use crate::linalg::min_eigenvalue_packed;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPreset {
    /// `f ≡ c`: plain (unweighted) mean curvature flow up to a constant factor.
    Constant,
    /// `f = c Σ_i (1 - cos 2πx_i)`: periodic, Hessian indefinite.
    CosineWell,
    /// `f = c |x - x₀|²` on `[0,1)^n`: convex but not periodic (seam at the cell boundary).
    QuadraticSeam,
}

impl WeightPreset {
    pub fn name(&self) -> &'static str {
        match self {
            WeightPreset::Constant => "constant",
            WeightPreset::CosineWell => "cosine_well",
            WeightPreset::QuadraticSeam => "quadratic_seam",
        }
    }

    pub fn is_periodic(&self) -> bool {
        !matches!(self, WeightPreset::QuadraticSeam)
    }
}

impl fmt::Display for WeightPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(WeightPreset::Constant),
            "cosine_well" => Ok(WeightPreset::CosineWell),
            "quadratic_seam" => Ok(WeightPreset::QuadraticSeam),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Analytic weight with first and second derivatives.
pub trait WeightFunction<T: Real> {
    fn value(&self, x: &[T]) -> T;
    fn gradient(&self, x: &[T], out: &mut [T]);
    /// Entry (i, j) of `D²f`.
    fn hessian(&self, x: &[T], i: usize, j: usize) -> T;
}

struct PresetFn<T> {
    preset: WeightPreset,
    c: T,
    x0: [T; 3],
}

impl<T: Real> WeightFunction<T> for PresetFn<T> {
    fn value(&self, x: &[T]) -> T {
        let two_pi = T::TAU();
        match self.preset {
            WeightPreset::Constant => self.c,
            WeightPreset::CosineWell => self.c * x.iter().map(|&xi| T::one() - (two_pi * xi).cos()).sum::<T>(),
            WeightPreset::QuadraticSeam => self.c * x.iter().zip(&self.x0).map(|(&xi, &x0)| (xi - x0).powi(2)).sum::<T>(),
        }
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        let two_pi = T::TAU();
        for (i, o) in out.iter_mut().enumerate() {
            *o = match self.preset {
                WeightPreset::Constant => T::zero(),
                WeightPreset::CosineWell => self.c * two_pi * (two_pi * x[i]).sin(),
                WeightPreset::QuadraticSeam => T::lit(2.0) * self.c * (x[i] - self.x0[i]),
            };
        }
    }

    fn hessian(&self, x: &[T], i: usize, j: usize) -> T {
        if i != j {
            return T::zero();
        }
        let two_pi = T::TAU();
        match self.preset {
            WeightPreset::Constant => T::zero(),
            WeightPreset::CosineWell => self.c * two_pi * two_pi * (two_pi * x[i]).cos(),
            WeightPreset::QuadraticSeam => T::lit(2.0) * self.c,
        }
    }
}

/// Weight sampled on a grid: nodes, face midpoints, gradient and Hessian, plus `ξ`.
#[derive(Clone, Debug)]
pub struct WeightModel<T> {
    grid: GridSpec,
    f_node: ScalarField<T>,
    f_face: Vec<ScalarField<T>>,
    density_node: ScalarField<T>,
    inv_density_node: ScalarField<T>,
    density_face: Vec<ScalarField<T>>,
    grad_f: VectorField<T>,
    hess_f: SymMatrixField<T>,
    xi: T,
    label: String,
    periodic: bool,
}

impl<T: Real> WeightModel<T> {
    /// Builds one of the shipped presets. `x0` is only read by `quadratic_seam`
    /// (one entry per axis, or a single entry broadcast; defaults to the cell centre).
    pub fn from_preset(preset: WeightPreset, c: T, x0: &[T], xi: T, grid: GridSpec) -> Result<Self> {
        if !(c >= T::zero()) || !c.is_finite() {
            return Err(invalid("weight.c", format!("must be finite and non-negative, got {c}")));
        }
        let n = grid.dim();
        let mut centre = [T::lit(0.5); 3];
        match x0.len() {
            0 => {}
            1 => centre[..n].fill(x0[0]),
            len if len == n => centre[..n].copy_from_slice(x0),
            len => return Err(invalid("weight.x0", format!("expected 1 or {n} entries, got {len}"))),
        }
        let func = PresetFn { preset, c, x0: centre };
        Self::from_function(grid, xi, &func, preset.name().to_string(), preset.is_periodic())
    }

    pub fn by_name(name: &str, c: T, x0: &[T], xi: T, grid: GridSpec) -> Result<Self> {
        Self::from_preset(name.parse()?, c, x0, xi, grid)
    }

    /// Samples an arbitrary analytic weight. Face values are taken at the geometric
    /// midpoints `x_j + h e_i / 2`, never averaged from nodes.
    pub fn from_function<W: WeightFunction<T> + ?Sized>(
        grid: GridSpec,
        xi: T,
        func: &W,
        label: String,
        periodic: bool,
    ) -> Result<Self> {
        if !(xi >= T::zero()) || !xi.is_finite() {
            return Err(invalid("xi", format!("must be finite and non-negative, got {xi}")));
        }
        let n = grid.dim();
        let half_h = grid.spacing::<T>() / T::lit(2.0);
        let f_node = ScalarField::from_fn(grid, |x| func.value(x));
        let f_face: Vec<ScalarField<T>> = (0..n)
            .map(|axis| {
                ScalarField::from_fn(grid, |x| {
                    let mut y = [T::zero(); 3];
                    y[..n].copy_from_slice(x);
                    y[axis] = y[axis] + half_h;
                    func.value(&y[..n])
                })
            })
            .collect();
        let grad_f = VectorField::from_fn(grid, |x, out| func.gradient(x, out));
        let hess_f = SymMatrixField::from_fn(grid, |x, i, j| func.hessian(x, i, j));
        let all_finite = f_node.all_finite()
            && f_face.iter().all(ScalarField::all_finite)
            && grad_f.values().iter().all(|v| v.is_finite())
            && hess_f.values().iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidInput("weight produced non-finite samples".into()));
        }
        let density_node = f_node.map(|f| (-f).exp());
        let inv_density_node = f_node.map(|f| f.exp());
        let density_face = f_face.iter().map(|ff| ff.map(|f| (-f).exp())).collect();
        Ok(Self {
            grid,
            f_node,
            f_face,
            density_node,
            inv_density_node,
            density_face,
            grad_f,
            hess_f,
            xi,
            label,
            periodic,
        })
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn f_node(&self) -> &ScalarField<T> {
        &self.f_node
    }

    /// Samples of `f` at the face midpoints `x_j + h e_axis / 2`.
    pub fn f_face(&self, axis: usize) -> &ScalarField<T> {
        &self.f_face[axis]
    }

    /// `e^{-f}` at nodes.
    #[inline]
    pub fn density_node(&self) -> &ScalarField<T> {
        &self.density_node
    }

    /// `e^{f}` at nodes.
    #[inline]
    pub fn inv_density_node(&self) -> &ScalarField<T> {
        &self.inv_density_node
    }

    /// `e^{-f}` at face midpoints along `axis`.
    #[inline]
    pub fn density_face(&self, axis: usize) -> &ScalarField<T> {
        &self.density_face[axis]
    }

    #[inline]
    pub fn grad_f(&self) -> &VectorField<T> {
        &self.grad_f
    }

    #[inline]
    pub fn hess_f(&self) -> &SymMatrixField<T> {
        &self.hess_f
    }

    #[inline]
    pub fn xi(&self) -> T {
        self.xi
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// False for weights that jump across the cell boundary (`quadratic_seam`).
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn max_grad_norm(&self) -> T {
        self.grad_f.sup_norm()
    }

    /// `μ(T^n)`
    pub fn total_mass(&self) -> T {
        crate::grid::integrate_mu(&ScalarField::constant(self.grid, T::one()), self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinchingReport {
    pub delta: f64,
    /// Grid minimum of the smallest eigenvalue of `D²f - δξ Id`.
    pub min_margin: f64,
    pub satisfied: bool,
}

/// Tests `D²f ≥ δξ Id` node by node using the analytic Hessian samples.
pub fn check_pinching<T: Real>(w: &WeightModel<T>, delta: T) -> Result<PinchingReport> {
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(invalid("delta", format!("must be positive, got {delta}")));
    }
    let n = w.grid().dim();
    let shift = delta * w.xi();
    let min_margin = (0..w.grid().len())
        .map(|j| min_eigenvalue_packed(n, w.hess_f().at(j)) - shift)
        .fold(T::infinity(), T::min);
    Ok(PinchingReport {
        delta: delta.to_f64_lossy(),
        min_margin: min_margin.to_f64_lossy(),
        satisfied: min_margin >= T::zero(),
    })
}

/// Largest `α` with `4α / (2 + 3α) ≤ δ`, i.e. `α = 2δ / (4 - 3δ)`; defined for `0 < δ < 4/3`.
pub fn alpha_from_delta<T: Real>(delta: T) -> Result<T> {
    let four_thirds = T::lit(4.0) / T::lit(3.0);
    if !(delta > T::zero() && delta < four_thirds) {
        return Err(invalid("delta", format!("must lie in (0, 4/3), got {delta}")));
    }
    Ok(T::lit(2.0) * delta / (T::lit(4.0) - T::lit(3.0) * delta))
}
