//! Trilinear hexahedral finite elements for `-div(A grad u) = f` on the unit
//! cube with `u = 0` on the boundary, assembled into lane-batched systems.

use serde::{Deserialize, Serialize};

use crate::ensemble_solver::{
    ensemble_pcg, jacobi_precond, EnsembleCsrMatrix, EnsembleVector, LaneSolveResult, PcgOptions,
};
use crate::error::{Error, Result};
use crate::random_field::{KLDiffusionField, ModeTable};

/// Gauss-Legendre abscissae of the 2-point rule mapped to `[0, 1]`.
fn gauss2() -> [f64; 2] {
    let d = 0.5 / 3f64.sqrt();
    [0.5 - d, 0.5 + d]
}

fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Uniform `m x m x m` hexahedral mesh of `[0, 1]^3`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredMesh {
    pub cells_per_dim: usize,
}

impl StructuredMesh {
    pub fn new(cells_per_dim: usize) -> Result<Self> {
        if cells_per_dim < 2 {
            return Err(Error::Config(format!(
                "mesh needs at least 2 cells per dimension, got {cells_per_dim}"
            )));
        }
        Ok(StructuredMesh { cells_per_dim })
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.cells_per_dim as f64
    }

    /// Number of interior unknowns `(m - 1)^3`.
    pub fn n_dofs(&self) -> usize {
        (self.cells_per_dim - 1).pow(3)
    }

    pub fn n_elements(&self) -> usize {
        self.cells_per_dim.pow(3)
    }

    /// Unknown number of lattice node `(i, j, k)`, or `None` on the boundary.
    pub fn dof(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let m = self.cells_per_dim;
        let inner = |v: usize| v >= 1 && v < m;
        if inner(i) && inner(j) && inner(k) {
            let n = m - 1;
            Some((i - 1) + n * ((j - 1) + n * (k - 1)))
        } else {
            None
        }
    }

    /// Lattice coordinates of unknown `d`.
    pub fn dof_node(&self, d: usize) -> [usize; 3] {
        let n = self.cells_per_dim - 1;
        [d % n + 1, (d / n) % n + 1, d / (n * n) + 1]
    }

    fn element_origin(&self, e: usize) -> [usize; 3] {
        let m = self.cells_per_dim;
        [e % m, (e / m) % m, e / (m * m)]
    }

    /// All quadrature points, eight per element, elements in x-fastest order.
    pub fn quadrature_points(&self) -> Vec<[f64; 3]> {
        let h = self.spacing();
        let g = gauss2();
        let mut pts = Vec::with_capacity(8 * self.n_elements());
        for e in 0..self.n_elements() {
            let o = self.element_origin(e);
            for q in 0..8 {
                let c = corner_offset(q);
                pts.push([
                    (o[0] as f64 + g[c[0]]) * h,
                    (o[1] as f64 + g[c[1]]) * h,
                    (o[2] as f64 + g[c[2]]) * h,
                ]);
            }
        }
        pts
    }

    /// Shared 27-point sparsity graph of the reduced system.
    pub fn graph(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.n_dofs();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(27 * n);
        offsets.push(0);
        for d in 0..n {
            let [i, j, k] = self.dof_node(d);
            for dk in 0..3 {
                for dj in 0..3 {
                    for di in 0..3 {
                        if let Some(c) = self.dof(i + di - 1, j + dj - 1, k + dk - 1) {
                            cols.push(c);
                        }
                    }
                }
            }
            offsets.push(cols.len());
        }
        (offsets, cols)
    }
}

/// Per-direction weighted gradient products on the reference cube:
/// `g[d][q][a][b] = w_q * d_d phi_a(q) * d_d phi_b(q)`.
type RefGrad = [[[[f64; 8]; 8]; 8]; 3];

fn reference_gradients() -> RefGrad {
    let g = gauss2();
    let mut out = [[[[0.0; 8]; 8]; 8]; 3];
    for q in 0..8 {
        let xi = corner_offset(q).map(|c| g[c]);
        let grad = |a: usize, d: usize| {
            let o = corner_offset(a);
            (0..3)
                .map(|e| {
                    let on = o[e] == 1;
                    match (e == d, on) {
                        (true, true) => 1.0,
                        (true, false) => -1.0,
                        (false, true) => xi[e],
                        (false, false) => 1.0 - xi[e],
                    }
                })
                .product::<f64>()
        };
        for d in 0..3 {
            for a in 0..8 {
                for b in 0..8 {
                    out[d][q][a][b] = 0.125 * grad(a, d) * grad(b, d);
                }
            }
        }
    }
    out
}

/// A lane-batched linear system for one ensemble.
#[derive(Debug, Clone)]
pub struct AssembledEnsembleSystem {
    pub matrix: EnsembleCsrMatrix,
    pub rhs: EnsembleVector,
    pub sample_ids: Vec<usize>,
}

/// Mesh, field and precomputed assembly plan for the diffusion problem.
#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    mesh: StructuredMesh,
    field: KLDiffusionField,
    table: ModeTable,
    quad_points: Vec<[f64; 3]>,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    /// CSR position of local pair `(a, b)` per element, `u32::MAX` when
    /// either node is on the boundary.
    positions: Vec<[u32; 64]>,
    ref_grad: RefGrad,
    /// Constant source term `f`.
    pub forcing: f64,
}

impl DiffusionProblem {
    pub fn new(mesh: StructuredMesh, field: KLDiffusionField) -> Result<Self> {
        let (row_offsets, col_indices) = mesh.graph();
        if col_indices.len() >= u32::MAX as usize {
            return Err(Error::Config(
                "mesh too large for 32-bit CSR positions".into(),
            ));
        }
        let m = mesh.cells_per_dim;
        let mut positions = Vec::with_capacity(mesh.n_elements());
        for e in 0..mesh.n_elements() {
            let o = [e % m, (e / m) % m, e / (m * m)];
            let dofs: Vec<Option<usize>> = (0..8)
                .map(|c| {
                    let d = corner_offset(c);
                    mesh.dof(o[0] + d[0], o[1] + d[1], o[2] + d[2])
                })
                .collect();
            let mut pos = [u32::MAX; 64];
            for a in 0..8 {
                for b in 0..8 {
                    if let (Some(r), Some(c)) = (dofs[a], dofs[b]) {
                        let row = &col_indices[row_offsets[r]..row_offsets[r + 1]];
                        let k = row.binary_search(&c).map_err(|_| {
                            Error::Assembly(format!("missing graph entry ({r}, {c})"))
                        })?;
                        pos[a * 8 + b] = (row_offsets[r] + k) as u32;
                    }
                }
            }
            positions.push(pos);
        }
        let quad_points = mesh.quadrature_points();
        let table = field.mode_table(&quad_points);
        Ok(DiffusionProblem {
            mesh,
            field,
            table,
            quad_points,
            row_offsets,
            col_indices,
            positions,
            ref_grad: reference_gradients(),
            forcing: 1.0,
        })
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn field(&self) -> &KLDiffusionField {
        &self.field
    }

    pub fn quadrature_points(&self) -> &[[f64; 3]] {
        &self.quad_points
    }

    /// Anisotropy indicator `H(y)` over the quadrature points.
    pub fn anisotropy(&self, y: &[f64]) -> Result<f64> {
        self.field.anisotropy_from_table(&self.table, y)
    }

    /// Assemble one lane per sample; `sample_ids` labels the lanes.
    pub fn assemble(
        &self,
        sample_ids: &[usize],
        samples: &[&[f64]],
    ) -> Result<AssembledEnsembleSystem> {
        let width = samples.len();
        if width == 0 || sample_ids.len() != width {
            return Err(Error::Domain(format!(
                "need one id per sample and at least one sample (got {} ids, {width} samples)",
                sample_ids.len()
            )));
        }
        let nnz = self.col_indices.len();
        let mut values = vec![0.0; nnz * width];
        let h = self.mesh.spacing();
        for (s, y) in samples.iter().enumerate() {
            let diags = self.field.tensor_diagonals(&self.table, y)?;
            if let Some(bad) = diags
                .iter()
                .flatten()
                .find(|v| !(**v > 0.0) || !v.is_finite())
            {
                return Err(Error::Assembly(format!(
                    "diffusion coefficient {bad} at a quadrature point of sample {}",
                    sample_ids[s]
                )));
            }
            let constant = diags.len() == 1;
            for (e, pos) in self.positions.iter().enumerate() {
                let mut ke = [0.0; 64];
                for q in 0..8 {
                    let coef = if constant { diags[0] } else { diags[8 * e + q] };
                    for d in 0..3 {
                        let c = h * coef[d];
                        let g = &self.ref_grad[d][q];
                        for a in 0..8 {
                            for b in 0..8 {
                                ke[a * 8 + b] += c * g[a][b];
                            }
                        }
                    }
                }
                for (ab, &p) in pos.iter().enumerate() {
                    if p != u32::MAX {
                        values[p as usize * width + s] += ke[ab];
                    }
                }
            }
        }
        let matrix = EnsembleCsrMatrix::new(
            self.mesh.n_dofs(),
            self.mesh.n_dofs(),
            width,
            self.row_offsets.clone(),
            self.col_indices.clone(),
            values,
        )?;
        // Each interior node touches eight elements, each contributing h^3/8.
        let load = self.forcing * h * h * h;
        let rhs = EnsembleVector::broadcast(&vec![load; self.mesh.n_dofs()], width);
        Ok(AssembledEnsembleSystem {
            matrix,
            rhs,
            sample_ids: sample_ids.to_vec(),
        })
    }

    /// Assemble and solve one ensemble with Jacobi-preconditioned CG.
    pub fn solve(
        &self,
        sample_ids: &[usize],
        samples: &[&[f64]],
        opts: &PcgOptions,
    ) -> Result<LaneSolveResult> {
        let sys = self.assemble(sample_ids, samples)?;
        let pre = jacobi_precond(&sys.matrix)?;
        ensemble_pcg(&sys.matrix, &sys.rhs, &pre, opts)
    }
}

/// Quantity of interest `||u||^2`.
pub fn qoi(u: &[f64]) -> f64 {
    u.iter().map(|v| v * v).sum()
}
