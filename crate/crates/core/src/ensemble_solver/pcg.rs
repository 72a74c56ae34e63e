use std::io::Write;
use std::path::Path;

use super::lanes::{EnsembleCsrMatrix, EnsembleVector};
use crate::error::{Error, Result};

/// Lane-wise preconditioner `z = M^{-1} r`.
pub trait Preconditioner {
    fn apply(&self, r: &EnsembleVector, z: &mut EnsembleVector);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &EnsembleVector, z: &mut EnsembleVector) {
        z.as_mut_slice().copy_from_slice(r.as_slice());
    }
}

/// Lane-wise inverse diagonal.
#[derive(Debug, Clone)]
pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(a: &EnsembleCsrMatrix) -> Result<Self> {
        let diag = a.diagonal();
        let w = a.width();
        let mut inv_diag = Vec::with_capacity(diag.as_slice().len());
        for (k, &d) in diag.as_slice().iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Domain(format!(
                    "Jacobi needs a positive diagonal; row {} lane {} has {d}",
                    k / w,
                    k % w
                )));
            }
            inv_diag.push(1.0 / d);
        }
        Ok(JacobiPreconditioner { inv_diag })
    }

    pub fn inverse_diagonal(&self) -> &[f64] {
        &self.inv_diag
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply(&self, r: &EnsembleVector, z: &mut EnsembleVector) {
        for ((zv, &rv), &d) in z
            .as_mut_slice()
            .iter_mut()
            .zip(r.as_slice())
            .zip(&self.inv_diag)
        {
            *zv = rv * d;
        }
    }
}

pub fn jacobi_precond(a: &EnsembleCsrMatrix) -> Result<JacobiPreconditioner> {
    JacobiPreconditioner::new(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOptions {
    /// Relative residual target `||r|| / ||b||` per lane.
    pub tol: f64,
    pub max_iterations: usize,
    /// Keep iterating lanes that already converged (as an ensemble code with
    /// a shared loop does). When false, a converged lane's iterate is held
    /// fixed so it matches an independent solve exactly.
    pub continue_converged_lanes: bool,
    /// Record per-iteration relative residuals for every lane.
    pub record_history: bool,
}

impl Default for PcgOptions {
    fn default() -> Self {
        PcgOptions {
            tol: 1e-7,
            max_iterations: 10_000,
            continue_converged_lanes: false,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSolveResult {
    pub solution: EnsembleVector,
    /// First iteration at which each lane met the tolerance (or the iteration
    /// at which it stopped, for lanes that never did).
    pub iterations_per_lane: Vec<usize>,
    /// Iterations executed by the shared recurrence.
    pub ensemble_iterations: usize,
    pub converged_per_lane: Vec<bool>,
    /// Lanes whose A-conjugate norm underflowed; their iterate stopped changing.
    pub frozen_lanes: Vec<bool>,
    /// `history[k][s]`: relative residual of lane `s` after iteration `k`
    /// (row 0 is the initial residual).
    pub residual_history: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LaneState {
    Active,
    Converged,
    Frozen,
}

/// Preconditioned CG over all lanes in one recurrence, starting from zero.
///
/// Every lane uses its own step lengths, so lane `s` follows exactly the
/// iterates of a scalar PCG on system `s`. The loop runs until every lane has
/// converged or frozen, or `max_iterations` is hit; unconverged lanes are then
/// reported, not raised.
pub fn ensemble_pcg(
    a: &EnsembleCsrMatrix,
    b: &EnsembleVector,
    precond: &dyn Preconditioner,
    opts: &PcgOptions,
) -> Result<LaneSolveResult> {
    let (n, w) = (a.nrows(), a.width());
    if a.ncols() != n {
        return Err(Error::Domain(format!(
            "matrix is {}x{}, not square",
            n,
            a.ncols()
        )));
    }
    if b.len() != n || b.width() != w {
        return Err(Error::Domain(format!(
            "rhs has {} entries and {} lanes; matrix has {n} rows and {w} lanes",
            b.len(),
            b.width()
        )));
    }
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::Config(format!(
            "tolerance must lie in (0, 1), got {}",
            opts.tol
        )));
    }

    let mut x = EnsembleVector::zeros(n, w);
    let mut r = b.clone();
    let mut z = EnsembleVector::zeros(n, w);
    let mut q = EnsembleVector::zeros(n, w);

    let b_norm = per_lane_norm(b);
    let mut state = vec![LaneState::Active; w];
    let mut iterations = vec![0usize; w];
    let mut converged = vec![false; w];
    let mut history = opts.record_history.then(Vec::new);

    let rel = |norms: &[f64], s: usize| {
        if b_norm[s] == 0.0 {
            0.0
        } else {
            norms[s] / b_norm[s]
        }
    };

    let r_norm = per_lane_norm(&r);
    if let Some(h) = history.as_mut() {
        h.push((0..w).map(|s| rel(&r_norm, s)).collect());
    }
    for s in 0..w {
        if rel(&r_norm, s) <= opts.tol {
            converged[s] = true;
            state[s] = LaneState::Converged;
        }
    }

    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = per_lane_dot(&r, &z);
    let mut alpha = vec![0.0; w];
    let mut beta = vec![0.0; w];
    let mut iter = 0;

    let stepping = |st: LaneState| match st {
        LaneState::Active => true,
        LaneState::Converged => opts.continue_converged_lanes,
        LaneState::Frozen => false,
    };

    let unfinished = |state: &[LaneState]| state.contains(&LaneState::Active);

    while iter < opts.max_iterations && unfinished(&state) {
        iter += 1;
        a.spmv_into(&p, &mut q);
        let pq = per_lane_dot(&p, &q);
        for s in 0..w {
            alpha[s] = 0.0;
            if !stepping(state[s]) {
                continue;
            }
            if pq[s].is_nan() || pq[s] < 0.0 && pq[s].abs() >= f64::MIN_POSITIVE {
                return Err(Error::Numerical(format!(
                    "lane {s}: A-conjugate norm {} at iteration {iter}",
                    pq[s]
                )));
            }
            if pq[s] < f64::MIN_POSITIVE || rz[s] < f64::MIN_POSITIVE {
                state[s] = LaneState::Frozen;
                continue;
            }
            alpha[s] = rz[s] / pq[s];
        }
        for j in 0..n {
            let range = j * w..(j + 1) * w;
            let (xs, rs) = (
                &mut x.as_mut_slice()[range.clone()],
                &mut r.as_mut_slice()[range.clone()],
            );
            let (ps, qs) = (&p.as_slice()[range.clone()], &q.as_slice()[range]);
            for s in 0..w {
                if stepping(state[s]) {
                    xs[s] += alpha[s] * ps[s];
                    rs[s] -= alpha[s] * qs[s];
                }
            }
        }

        let r_norm = per_lane_norm(&r);
        for s in 0..w {
            if stepping(state[s]) && !r_norm[s].is_finite() {
                return Err(Error::Numerical(format!(
                    "lane {s}: non-finite residual at iteration {iter}"
                )));
            }
        }
        if let Some(h) = history.as_mut() {
            h.push((0..w).map(|s| rel(&r_norm, s)).collect());
        }
        for s in 0..w {
            match state[s] {
                LaneState::Active if rel(&r_norm, s) <= opts.tol => {
                    converged[s] = true;
                    iterations[s] = iter;
                    state[s] = LaneState::Converged;
                }
                LaneState::Active => iterations[s] = iter,
                LaneState::Frozen if !converged[s] && rel(&r_norm, s) <= opts.tol => {
                    converged[s] = true;
                    iterations[s] = iter;
                }
                _ => {}
            }
        }
        if !unfinished(&state) {
            break;
        }

        precond.apply(&r, &mut z);
        let rz_new = per_lane_dot(&r, &z);
        for s in 0..w {
            beta[s] = if stepping(state[s]) {
                rz_new[s] / rz[s]
            } else {
                0.0
            };
        }
        for j in 0..n {
            let range = j * w..(j + 1) * w;
            let zs = &z.as_slice()[range.clone()];
            let ps = &mut p.as_mut_slice()[range];
            for s in 0..w {
                if stepping(state[s]) {
                    ps[s] = zs[s] + beta[s] * ps[s];
                }
            }
        }
        for s in 0..w {
            if stepping(state[s]) {
                rz[s] = rz_new[s];
            }
        }
    }

    let frozen_lanes = state.iter().map(|&st| st == LaneState::Frozen).collect();
    Ok(LaneSolveResult {
        solution: x,
        iterations_per_lane: iterations,
        ensemble_iterations: iter,
        converged_per_lane: converged,
        frozen_lanes,
        residual_history: history,
    })
}

fn per_lane_dot(x: &EnsembleVector, y: &EnsembleVector) -> Vec<f64> {
    let w = x.width();
    let mut acc = vec![0.0; w];
    for (xe, ye) in x
        .as_slice()
        .chunks_exact(w)
        .zip(y.as_slice().chunks_exact(w))
    {
        for ((a, &u), &v) in acc.iter_mut().zip(xe).zip(ye) {
            *a += u * v;
        }
    }
    acc
}

fn per_lane_norm(x: &EnsembleVector) -> Vec<f64> {
    per_lane_dot(x, x).into_iter().map(f64::sqrt).collect()
}

/// Write `iteration,lane0,...,laneS-1` rows of relative residuals.
pub fn write_residual_history_csv(path: &Path, history: &[Vec<f64>]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let width = history.first().map_or(0, Vec::len);
    let mut text = String::from("iteration");
    for s in 0..width {
        text.push_str(&format!(",lane{s}"));
    }
    text.push('\n');
    for (k, row) in history.iter().enumerate() {
        text.push_str(&k.to_string());
        for v in row {
            text.push_str(&format!(",{v:e}"));
        }
        text.push('\n');
    }
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diagonal(lanes: &[Vec<f64>]) -> EnsembleCsrMatrix {
        let n = lanes[0].len();
        EnsembleCsrMatrix::from_lane_values(n, n, (0..=n).collect(), (0..n).collect(), lanes)
            .unwrap()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = diagonal(&[vec![1.0; 6], vec![1.0; 6]]);
        let b = EnsembleVector::from_lanes(&[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![-1.0; 6]])
            .unwrap();
        let res = ensemble_pcg(&a, &b, &IdentityPreconditioner, &PcgOptions::default()).unwrap();
        assert_eq!(res.iterations_per_lane, vec![1, 1]);
        assert_eq!(res.ensemble_iterations, 1);
        assert_eq!(res.solution, b);
        assert!(res.converged_per_lane.iter().all(|&c| c));
    }

    #[test]
    fn jacobi_halves_for_twice_identity() {
        let a = diagonal(&[vec![2.0; 3]]);
        let p = jacobi_precond(&a).unwrap();
        let r = EnsembleVector::from_lanes(&[vec![2.0, 4.0, -6.0]]).unwrap();
        let mut z = EnsembleVector::zeros(3, 1);
        p.apply(&r, &mut z);
        assert_eq!(z.lane(0), vec![1.0, 2.0, -3.0]);
    }

    #[test]
    fn jacobi_diagonal_system_one_iteration() {
        let a = diagonal(&[vec![1.0, 10.0, 100.0], vec![3.0, 0.5, 7.0]]);
        let b = EnsembleVector::broadcast(&[1.0, 1.0, 1.0], 2);
        let res =
            ensemble_pcg(&a, &b, &jacobi_precond(&a).unwrap(), &PcgOptions::default()).unwrap();
        assert_eq!(res.iterations_per_lane, vec![1, 1]);
    }

    #[test]
    fn jacobi_rejects_bad_diagonal() {
        let a = diagonal(&[vec![1.0, 0.0]]);
        assert!(matches!(jacobi_precond(&a), Err(Error::Domain(_))));
        let a = diagonal(&[vec![1.0, -2.0]]);
        assert!(jacobi_precond(&a).is_err());
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let a = diagonal(&[vec![4.0; 5]]);
        let b = EnsembleVector::zeros(5, 1);
        let res = ensemble_pcg(&a, &b, &IdentityPreconditioner, &PcgOptions::default()).unwrap();
        assert_eq!(res.ensemble_iterations, 0);
        assert_eq!(res.solution.lane(0), vec![0.0; 5]);
    }

    #[test]
    fn max_iterations_reports_unconverged_lanes() {
        let a = diagonal(&[(1..=30).map(f64::from).collect()]);
        let b = EnsembleVector::broadcast(&[1.0; 30], 1);
        let opts = PcgOptions {
            max_iterations: 3,
            ..PcgOptions::default()
        };
        let res = ensemble_pcg(&a, &b, &IdentityPreconditioner, &opts).unwrap();
        assert_eq!(res.converged_per_lane, vec![false]);
        assert_eq!(res.ensemble_iterations, 3);
        assert_eq!(res.iterations_per_lane, vec![3]);
    }

    #[test]
    fn history_rows_match_iterations() {
        let a = diagonal(&[(1..=10).map(f64::from).collect(), vec![1.0; 10]]);
        let b = EnsembleVector::broadcast(&[1.0; 10], 2);
        let opts = PcgOptions {
            record_history: true,
            ..PcgOptions::default()
        };
        let res = ensemble_pcg(&a, &b, &IdentityPreconditioner, &opts).unwrap();
        let h = res.residual_history.unwrap();
        assert_eq!(h.len(), res.ensemble_iterations + 1);
        assert_eq!(h[0], vec![1.0, 1.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.csv");
        write_residual_history_csv(&path, &h).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("iteration,lane0,lane1\n0,"));
    }

    #[test]
    fn continued_lanes_freeze_on_exact_solution() {
        // Lane 1 is solved exactly at the first step; kept iterating, its
        // residual and direction vanish and the lane must freeze, not NaN.
        let a = diagonal(&[(1..=12).map(f64::from).collect(), vec![2.0; 12]]);
        let b = EnsembleVector::broadcast(&[1.0; 12], 2);
        let opts = PcgOptions {
            continue_converged_lanes: true,
            ..PcgOptions::default()
        };
        let res = ensemble_pcg(&a, &b, &IdentityPreconditioner, &opts).unwrap();
        assert!(res.frozen_lanes[1]);
        assert!(res.converged_per_lane.iter().all(|&c| c));
        assert_eq!(res.solution.lane(1), vec![0.5; 12]);
        assert!(res.solution.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = diagonal(&[vec![1.0; 3]]);
        let b = EnsembleVector::zeros(4, 1);
        assert!(ensemble_pcg(&a, &b, &IdentityPreconditioner, &PcgOptions::default()).is_err());
        let b = EnsembleVector::zeros(3, 1);
        let opts = PcgOptions {
            tol: 1.5,
            ..PcgOptions::default()
        };
        assert!(ensemble_pcg(&a, &b, &IdentityPreconditioner, &opts).is_err());
    }
}
