//! Truncated log-KL expansion of a separable exponential covariance on the
//! unit cube, and the anisotropic diffusion tensor built from it.
//!
//! The covariance `exp(-||x - x'||_1 / delta)` factorises over the three
//! coordinates, so 3D eigenpairs are products of 1D eigenpairs of
//! `exp(-|x - x'| / delta)` on `[0, 1]`. Those are computed once by a Nyström
//! discretisation (uniform grid, trapezoid weights).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One eigenpair of the unit-variance 1D exponential kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair1D {
    pub eigenvalue: f64,
    /// Eigenfunction samples on the uniform grid `i / (n - 1)`.
    pub values: Vec<f64>,
}

impl Eigenpair1D {
    /// Linear interpolation of the tabulated eigenfunction, `x` in `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let last = self.values.len() - 1;
        let t = x.clamp(0.0, 1.0) * last as f64;
        let i = (t.floor() as usize).min(last - 1);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    pub fn grid_points(&self) -> usize {
        self.values.len()
    }
}

/// Trapezoid weights on the uniform grid of `n` points over `[0, 1]`.
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Top `count` eigenpairs of `exp(-|x - x'| / delta)` on `[0, 1]`.
///
/// Eigenfunctions have unit discrete L2 norm under the trapezoid weights and
/// are positive at `x = 0`.
pub fn eigenpairs_1d(delta: f64, count: usize, grid_points: usize) -> Result<Vec<Eigenpair1D>> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!(
            "correlation length must be positive, got {delta}"
        )));
    }
    if count == 0 || count > grid_points {
        return Err(Error::Domain(format!(
            "cannot extract {count} eigenpairs from {grid_points} points"
        )));
    }
    if grid_points < 64 {
        return Err(Error::Domain(format!(
            "need at least 64 Nyström points, got {grid_points}"
        )));
    }
    let n = grid_points;
    let h = 1.0 / (n - 1) as f64;
    let w = trapezoid_weights(n);
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    // W^{1/2} K W^{1/2} keeps the discrete operator symmetric.
    let m = DMatrix::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64).abs() * h;
        sw[i] * (-d / delta).exp() * sw[j]
    });
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    order
        .into_iter()
        .take(count)
        .map(|k| {
            let lambda = eig.eigenvalues[k];
            if !(lambda > 0.0) {
                return Err(Error::Numerical(format!(
                    "eigenvalue {k} is not positive ({lambda}); increase the grid resolution"
                )));
            }
            let v = eig.eigenvectors.column(k);
            let mut values: Vec<f64> = v.iter().zip(&sw).map(|(&vi, &s)| vi / s).collect();
            let norm = values
                .iter()
                .zip(&w)
                .map(|(b, wi)| wi * b * b)
                .sum::<f64>()
                .sqrt();
            let sign = values
                .iter()
                .find(|v| v.abs() > 1e-12)
                .map_or(1.0, |v| v.signum());
            for b in &mut values {
                *b *= sign / norm;
            }
            Ok(Eigenpair1D {
                eigenvalue: lambda,
                values,
            })
        })
        .collect()
}

type EigenKey = (u64, usize, usize);

/// Memoised [`eigenpairs_1d`]; runs that share `(delta, count, grid_points)`
/// share one dense eigensolve.
pub fn eigenpairs_1d_cached(
    delta: f64,
    count: usize,
    grid_points: usize,
) -> Result<Arc<Vec<Eigenpair1D>>> {
    static CACHE: OnceLock<Mutex<HashMap<EigenKey, Arc<Vec<Eigenpair1D>>>>> = OnceLock::new();
    let key = (delta.to_bits(), count, grid_points);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().expect("eigenpair cache poisoned").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let pairs = Arc::new(eigenpairs_1d(delta, count, grid_points)?);
    cache
        .lock()
        .expect("eigenpair cache poisoned")
        .insert(key, Arc::clone(&pairs));
    Ok(pairs)
}

/// Where `sigma0` enters the 3D eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPlacement {
    /// `sigma0` is a standard deviation: eigenvalues carry `sigma0^2`.
    #[default]
    Variance,
    /// `sigma0` multiplies the kernel directly: eigenvalues carry `sigma0`.
    Kernel,
}

/// Amplitude `a_hat` in front of the exponential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AHat {
    Constant {
        value: f64,
    },
    /// Piecewise in `r = |y|` with breakpoints `sqrt(3)/4` and `sqrt(3)/2`:
    /// values 1, 100 and 10.
    Test2,
}

impl AHat {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match *self {
            AHat::Constant { value } => value,
            AHat::Test2 => {
                let d = 3f64.sqrt();
                let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r < d / 4.0 {
                    1.0
                } else if r < d / 2.0 {
                    100.0
                } else {
                    10.0
                }
            }
        }
    }
}

/// Shape of the diffusion tensor built from the scalar field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorForm {
    /// `diag(a(x, y), a_y, a_z)`.
    #[default]
    Anisotropic,
    /// `kappa(y) I` with `kappa(y) = a(x_c, y)` frozen at the cube centre, so
    /// the operator is a sample-dependent multiple of the Laplacian.
    IsotropicHomogeneous,
}

/// Field block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSpec {
    pub delta: f64,
    pub sigma0: f64,
    /// Number of retained 3D modes; defaults to the run dimension.
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n_modes: Option<usize>,
    pub a_min: f64,
    /// Constant 1 when absent; the run config fills it per problem.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_hat: Option<AHat>,
    pub a_y: f64,
    pub a_z: f64,
    pub nystrom_points: usize,
    pub sigma_placement: SigmaPlacement,
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec {
            delta: 0.25,
            sigma0: 300f64.sqrt(),
            n_modes: None,
            a_min: 0.1,
            a_hat: None,
            a_y: 1.0,
            a_z: 1.0,
            nystrom_points: 1025,
            sigma_placement: SigmaPlacement::Variance,
        }
    }
}

/// One retained 3D mode: eigenvalue and the 1D factor indices per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode3D {
    pub eigenvalue: f64,
    pub factors: [usize; 3],
}

/// Truncated log-KL diffusion field.
#[derive(Debug, Clone)]
pub struct KLDiffusionField {
    pub delta: f64,
    pub sigma0: f64,
    pub a_min: f64,
    pub a_hat: AHat,
    pub a_y: f64,
    pub a_z: f64,
    pub tensor: TensorForm,
    modes: Vec<Mode3D>,
    basis: Arc<Vec<Eigenpair1D>>,
}

/// Build the field from its spec with `n_modes` retained 3D modes.
pub fn build_field(
    spec: &FieldSpec,
    n_modes: usize,
    tensor: TensorForm,
) -> Result<KLDiffusionField> {
    if n_modes == 0 {
        return Err(Error::Config("field needs at least one mode".into()));
    }
    if !(spec.sigma0 >= 0.0) {
        return Err(Error::Config(format!(
            "sigma0 must be non-negative, got {}",
            spec.sigma0
        )));
    }
    if !(spec.a_min >= 0.0) || !(spec.a_y > 0.0) || !(spec.a_z > 0.0) {
        return Err(Error::Config(format!(
            "need a_min >= 0 and a_y, a_z > 0 (got {}, {}, {})",
            spec.a_min, spec.a_y, spec.a_z
        )));
    }
    let a_hat = spec.a_hat.unwrap_or(AHat::Constant { value: 1.0 });
    if let AHat::Constant { value } = a_hat {
        if !(value > 0.0) {
            return Err(Error::Config(format!(
                "a_hat must be positive, got {value}"
            )));
        }
    }
    // The top n products never need a 1D factor beyond index n.
    let count_1d = n_modes.min(spec.nystrom_points);
    let basis = eigenpairs_1d_cached(spec.delta, count_1d, spec.nystrom_points)?;
    if basis.len().pow(3) < n_modes {
        return Err(Error::Config(format!(
            "{} 1D modes give fewer than {n_modes} products",
            basis.len()
        )));
    }
    let scale = match spec.sigma_placement {
        SigmaPlacement::Variance => spec.sigma0 * spec.sigma0,
        SigmaPlacement::Kernel => spec.sigma0,
    };
    let mut candidates = Vec::with_capacity(basis.len().pow(3));
    for p in 0..basis.len() {
        for q in 0..basis.len() {
            for r in 0..basis.len() {
                // Multiply in a canonical order so permuted triples tie exactly.
                let mut f = [
                    basis[p].eigenvalue,
                    basis[q].eigenvalue,
                    basis[r].eigenvalue,
                ];
                f.sort_by(|a, b| b.total_cmp(a));
                candidates.push(Mode3D {
                    eigenvalue: scale * (f[0] * f[1] * f[2]),
                    factors: [p, q, r],
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.eigenvalue
            .total_cmp(&a.eigenvalue)
            .then_with(|| a.factors.cmp(&b.factors))
    });
    candidates.truncate(n_modes);
    Ok(KLDiffusionField {
        delta: spec.delta,
        sigma0: spec.sigma0,
        a_min: spec.a_min,
        a_hat,
        a_y: spec.a_y,
        a_z: spec.a_z,
        tensor,
        modes: candidates,
        basis,
    })
}

impl KLDiffusionField {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode3D] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    pub fn basis_1d(&self) -> &[Eigenpair1D] {
        &self.basis
    }

    /// `b_n(x)` for mode `n`.
    pub fn mode_value(&self, n: usize, x: [f64; 3]) -> f64 {
        let f = self.modes[n].factors;
        self.basis[f[0]].eval(x[0]) * self.basis[f[1]].eval(x[1]) * self.basis[f[2]].eval(x[2])
    }

    fn check_sample(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.modes.len() {
            return Err(Error::Domain(format!(
                "sample has {} coordinates, field has {} modes",
                y.len(),
                self.modes.len()
            )));
        }
        Ok(())
    }

    /// Log-KL coefficient `a_min + a_hat(y) exp(sum_n sqrt(lambda_n) b_n(x) y_n)`.
    pub fn eval_a(&self, x: [f64; 3], y: &[f64]) -> Result<f64> {
        self.check_sample(y)?;
        let exponent: f64 = (0..self.modes.len())
            .map(|n| self.modes[n].eigenvalue.sqrt() * self.mode_value(n, x) * y[n])
            .sum();
        Ok(self.coefficient_from_exponent(exponent, y))
    }

    fn coefficient_from_exponent(&self, exponent: f64, y: &[f64]) -> f64 {
        self.a_min + self.a_hat.eval(y) * exponent.exp()
    }

    /// Diagonal of the diffusion tensor at `x` for sample `y`.
    pub fn tensor_diagonal(&self, x: [f64; 3], y: &[f64]) -> Result<[f64; 3]> {
        Ok(match self.tensor {
            TensorForm::Anisotropic => [self.eval_a(x, y)?, self.a_y, self.a_z],
            TensorForm::IsotropicHomogeneous => {
                let k = self.eval_a([0.5; 3], y)?;
                [k; 3]
            }
        })
    }

    /// Tabulate `sqrt(lambda_n) b_n(x)` at fixed points, for repeated
    /// evaluation over many samples.
    pub fn mode_table(&self, points: &[[f64; 3]]) -> ModeTable {
        let points: Vec<[f64; 3]> = match self.tensor {
            TensorForm::Anisotropic => points.to_vec(),
            TensorForm::IsotropicHomogeneous => vec![[0.5; 3]],
        };
        let n = self.modes.len();
        let mut values = Vec::with_capacity(points.len() * n);
        for &x in &points {
            for m in 0..n {
                values.push(self.modes[m].eigenvalue.sqrt() * self.mode_value(m, x));
            }
        }
        ModeTable {
            n_modes: n,
            n_points: points.len(),
            values,
        }
    }

    /// Tensor diagonals at every tabulated point for sample `y`.
    pub fn tensor_diagonals(&self, table: &ModeTable, y: &[f64]) -> Result<Vec<[f64; 3]>> {
        self.check_sample(y)?;
        let a: Vec<f64> = table
            .values
            .chunks_exact(table.n_modes)
            .map(|row| {
                let e: f64 = row.iter().zip(y).map(|(m, yn)| m * yn).sum();
                self.coefficient_from_exponent(e, y)
            })
            .collect();
        Ok(match self.tensor {
            TensorForm::Anisotropic => a.into_iter().map(|v| [v, self.a_y, self.a_z]).collect(),
            TensorForm::IsotropicHomogeneous => vec![[a[0]; 3]; 1],
        })
    }

    /// Largest eigenvalue ratio of the diffusion tensor over `probe_points`.
    pub fn anisotropy_indicator(&self, y: &[f64], probe_points: &[[f64; 3]]) -> Result<f64> {
        let table = self.mode_table(probe_points);
        self.anisotropy_from_table(&table, y)
    }

    pub fn anisotropy_from_table(&self, table: &ModeTable, y: &[f64]) -> Result<f64> {
        if table.n_points == 0 {
            return Err(Error::Domain(
                "anisotropy needs at least one probe point".into(),
            ));
        }
        let diags = self.tensor_diagonals(table, y)?;
        Ok(diags.iter().map(|d| diag_ratio(*d)).fold(0.0, f64::max))
    }
}

/// `max/min` of a diagonal tensor's entries.
pub fn diag_ratio(d: [f64; 3]) -> f64 {
    let hi = d[0].max(d[1]).max(d[2]);
    let lo = d[0].min(d[1]).min(d[2]);
    hi / lo
}

/// `sqrt(lambda_n) b_n(x_q)` for a fixed point set, row per point.
#[derive(Debug, Clone)]
pub struct ModeTable {
    n_modes: usize,
    n_points: usize,
    values: Vec<f64>,
}

impl ModeTable {
    pub fn n_points(&self) -> usize {
        self.n_points
    }
}
