use std::collections::HashMap;
use std::path::Path;

use super::analytic::{analytic_iters, analytic_qoi, AnalyticQoi};
use super::config::{AnalyticParams, Problem, RunConfig};
use super::report::{
    LevelR, LevelReport, RunReport, SampleRecord, StopReason, StrategySummary, SurrogateAccuracy,
};
use crate::ensemble_solver::{write_residual_history_csv, PcgOptions};
use crate::error::{Error, Result};
use crate::fem3d::{qoi, DiffusionProblem, StructuredMesh};
use crate::grouping::{compute_r, group_by_key, group_natural, GroupingPlan, Strategy};
use crate::hier_grid::{HierGrid, RefinementPolicy, ITERATIONS_CHANNEL, QOI_CHANNEL};
use crate::random_field::build_field;

/// Per-sample results of one level.
struct LevelSolve {
    qoi: HashMap<usize, f64>,
    iterations: HashMap<usize, f64>,
    converged: HashMap<usize, bool>,
    ensemble_iterations: Vec<usize>,
}

enum Evaluator {
    Analytic {
        which: AnalyticQoi,
        params: AnalyticParams,
    },
    Pde {
        problem: Box<DiffusionProblem>,
        opts: PcgOptions,
    },
}

impl Evaluator {
    fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(match cfg.problem {
            Problem::AnalyticG1 | Problem::AnalyticG2 => Evaluator::Analytic {
                which: if cfg.problem == Problem::AnalyticG1 {
                    AnalyticQoi::G1
                } else {
                    AnalyticQoi::G2
                },
                params: cfg.analytic.clone().unwrap_or_default(),
            },
            _ => {
                let spec = cfg.field.clone().unwrap_or_default();
                let field = build_field(&spec, cfg.dims, cfg.tensor_form())?;
                let mesh = StructuredMesh::new(cfg.mesh.clone().unwrap_or_default().mesh_cells)?;
                Evaluator::Pde {
                    problem: Box::new(DiffusionProblem::new(mesh, field)?),
                    opts: PcgOptions {
                        tol: cfg.solver.tol,
                        max_iterations: cfg.solver.maxit,
                        continue_converged_lanes: false,
                        record_history: cfg.residual_history,
                    },
                }
            }
        })
    }

    fn indicator(&self, y: &[f64]) -> Result<Option<f64>> {
        match self {
            Evaluator::Analytic { .. } => Ok(None),
            Evaluator::Pde { problem, .. } => problem.anisotropy(y).map(Some),
        }
    }

    /// Evaluate every sample of `plan`, executing its ensembles as laid out.
    fn solve(
        &self,
        plan: &GroupingPlan,
        coords: &HashMap<usize, Vec<f64>>,
        history_dir: Option<&Path>,
    ) -> Result<LevelSolve> {
        let mut out = LevelSolve {
            qoi: HashMap::new(),
            iterations: HashMap::new(),
            converged: HashMap::new(),
            ensemble_iterations: Vec::new(),
        };
        match self {
            Evaluator::Analytic { which, params } => {
                for id in plan.ensembles.iter().flatten() {
                    let y = &coords[id];
                    out.qoi.insert(*id, analytic_qoi(*which, y, params));
                    out.iterations.insert(*id, analytic_iters(y, params));
                    out.converged.insert(*id, true);
                }
            }
            Evaluator::Pde { problem, opts } => {
                for (k, group) in plan.ensembles.iter().enumerate() {
                    let ys: Vec<&[f64]> = group.iter().map(|id| coords[id].as_slice()).collect();
                    let res = problem.solve(group, &ys, opts)?;
                    for (s, id) in group.iter().enumerate() {
                        // Padding lanes repeat a sample already recorded.
                        out.qoi
                            .entry(*id)
                            .or_insert_with(|| qoi(&res.solution.lane(s)));
                        out.iterations
                            .entry(*id)
                            .or_insert(res.iterations_per_lane[s] as f64);
                        out.converged
                            .entry(*id)
                            .or_insert(res.converged_per_lane[s]);
                    }
                    out.ensemble_iterations.push(res.ensemble_iterations);
                    if let (Some(dir), Some(hist)) = (history_dir, &res.residual_history) {
                        let path = dir.join(format!("residuals_level{}_ens{k}.csv", plan.level));
                        write_residual_history_csv(&path, hist)?;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn plan_for(
    strategy: Strategy,
    level: usize,
    ids: &[usize],
    s: usize,
    predicted: &HashMap<usize, f64>,
    indicator: &HashMap<usize, f64>,
    iterations: Option<&HashMap<usize, f64>>,
) -> Result<GroupingPlan> {
    if level == 1 {
        return group_natural(level, strategy, ids, s);
    }
    match strategy {
        Strategy::Nat => group_natural(level, strategy, ids, s),
        Strategy::Sur => group_by_key(level, strategy, ids, predicted, s),
        Strategy::Par => group_by_key(level, strategy, ids, indicator, s),
        Strategy::Its => {
            let its = iterations.ok_or_else(|| {
                Error::IncompleteData("the its grouping needs measured iterations".into())
            })?;
            group_by_key(level, strategy, ids, its, s)
        }
    }
}

/// Run the adaptive refine-solve-group loop.
pub fn adaptive_run(config: RunConfig) -> Result<RunReport> {
    adaptive_run_with(config, None)
}

/// [`adaptive_run`], writing residual histories into `history_dir` when the
/// config asks for them.
pub fn adaptive_run_with(config: RunConfig, history_dir: Option<&Path>) -> Result<RunReport> {
    let cfg = config.resolve()?;
    let tau = cfg.tau();
    let mut grid = HierGrid::full(cfg.problem.domain(cfg.dims), cfg.initial_level())?;
    if grid.len() > cfg.n_max {
        return Err(Error::Config(format!(
            "initial grid has {} points, more than n_max = {}",
            grid.len(),
            cfg.n_max
        )));
    }
    if cfg.residual_history && history_dir.is_none() {
        return Err(Error::Config(
            "residual_history needs an output directory".into(),
        ));
    }
    let evaluator = Evaluator::new(&cfg)?;
    let policy = RefinementPolicy::new(tau, QOI_CHANNEL, cfg.n_max)?;
    let exec_s = cfg.ensemble_sizes[0];

    let mut samples: Vec<SampleRecord> = Vec::new();
    let mut levels: Vec<LevelReport> = Vec::new();
    let mut notes = Vec::new();
    let mut failure = None;
    let mut level = 1usize;

    let stop_reason = loop {
        let ids: Vec<usize> = (grid.frontier_start()..grid.len()).collect();
        let coords: HashMap<usize, Vec<f64>> =
            ids.iter().map(|&k| (k, grid.physical_coords(k))).collect();

        let mut predicted = HashMap::new();
        let mut indicator = HashMap::new();
        for &id in &ids {
            if level > 1 {
                predicted.insert(id, grid.eval_surrogate(ITERATIONS_CHANNEL, &coords[&id])?);
            }
            if let Some(h) = evaluator.indicator(&coords[&id])? {
                indicator.insert(id, h);
            }
        }

        let exec_strategy = if cfg.strategies.contains(&Strategy::Sur) {
            Strategy::Sur
        } else {
            Strategy::Nat
        };
        let exec_plan = plan_for(
            exec_strategy,
            level,
            &ids,
            exec_s,
            &predicted,
            &indicator,
            None,
        )?;
        let solved = match evaluator.solve(&exec_plan, &coords, history_dir) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e.to_string());
                break StopReason::Aborted;
            }
        };

        let mut plans = Vec::new();
        let mut level_r = Vec::new();
        for &strategy in &cfg.strategies {
            for &s in &cfg.ensemble_sizes {
                let plan = plan_for(
                    strategy,
                    level,
                    &ids,
                    s,
                    &predicted,
                    &indicator,
                    Some(&solved.iterations),
                )?;
                let slots = plan.slot_values(&solved.iterations)?;
                let r = compute_r(&[(&plan, &slots)])?.total;
                level_r.push(LevelR {
                    strategy,
                    ensemble_size: s,
                    n_samples: plan.n_samples(),
                    n_ensembles: plan.n_ensembles(),
                    r,
                });
                plans.push(plan);
            }
        }

        let mut unconverged = 0;
        for &id in &ids {
            let conv = solved.converged[&id];
            unconverged += usize::from(!conv);
            samples.push(SampleRecord {
                id,
                level,
                coords: coords[&id].clone(),
                qoi: solved.qoi[&id],
                iterations: solved.iterations[&id],
                predicted_iterations: predicted.get(&id).copied(),
                indicator: indicator.get(&id).copied(),
                converged: conv,
            });
        }
        if unconverged > 0 {
            notes.push(format!(
                "level {level}: {unconverged} samples hit maxit; their iteration count is the cap"
            ));
        }

        let surrogate_error = (level > 1).then(|| {
            let errs: Vec<f64> = ids
                .iter()
                .map(|id| (predicted[id] - solved.iterations[id]).abs())
                .collect();
            SurrogateAccuracy {
                mean_abs: errs.iter().sum::<f64>() / errs.len() as f64,
                max_abs: errs.iter().copied().fold(0.0, f64::max),
            }
        });

        let g: Vec<f64> = ids.iter().map(|id| solved.qoi[id]).collect();
        let it: Vec<f64> = ids.iter().map(|id| solved.iterations[id]).collect();
        grid.compute_surpluses_ordered(QOI_CHANNEL, &g)?;
        grid.compute_surpluses_ordered(ITERATIONS_CHANNEL, &it)?;

        levels.push(LevelReport {
            level,
            sample_ids: ids,
            plans,
            r: level_r,
            surrogate_error,
            executed_ensemble_iterations: solved.ensemble_iterations,
        });

        if grid.error_indicator(QOI_CHANNEL)? < tau {
            break StopReason::ToleranceMet;
        }
        if grid.len() >= cfg.n_max {
            break StopReason::BudgetExhausted;
        }
        let outcome = grid.refine(&policy)?;
        if outcome.new_nodes.is_empty() {
            break if outcome.budget_exhausted {
                StopReason::BudgetExhausted
            } else {
                notes.push(format!("level {level}: refinement produced no new points"));
                StopReason::ToleranceMet
            };
        }
        if outcome.budget_exhausted {
            notes.push(format!(
                "level {}: refinement truncated to the sample budget",
                level + 1
            ));
        }
        level += 1;
    };

    let summary = summarise(&cfg, &levels, &samples)?;
    let qoi_mean = if levels.is_empty() {
        None
    } else {
        grid.integrate_surrogate(QOI_CHANNEL).ok()
    };
    Ok(RunReport {
        executed_ensemble_size: exec_s,
        config: cfg,
        stop_reason,
        failure,
        qoi_mean,
        levels,
        summary,
        samples,
        grid: grid.to_document(),
        notes,
    })
}

fn summarise(
    cfg: &RunConfig,
    levels: &[LevelReport],
    samples: &[SampleRecord],
) -> Result<Vec<StrategySummary>> {
    if levels.is_empty() {
        return Ok(Vec::new());
    }
    let iterations: HashMap<usize, f64> = samples.iter().map(|s| (s.id, s.iterations)).collect();
    let mut out = Vec::new();
    for &strategy in &cfg.strategies {
        for &s in &cfg.ensemble_sizes {
            let plans: Vec<&GroupingPlan> = levels
                .iter()
                .map(|l| {
                    l.plans
                        .iter()
                        .find(|p| p.strategy == strategy && p.ensemble_size == s)
                        .ok_or_else(|| {
                            Error::IncompleteData(format!("no {strategy} plan for S = {s}"))
                        })
                })
                .collect::<Result<_>>()?;
            let slots: Vec<Vec<Vec<f64>>> = plans
                .iter()
                .map(|p| p.slot_values(&iterations))
                .collect::<Result<_>>()?;
            let pairs: Vec<(&GroupingPlan, &[Vec<f64>])> = plans
                .iter()
                .copied()
                .zip(slots.iter().map(Vec::as_slice))
                .collect();
            let r = compute_r(&pairs)?;
            out.push(StrategySummary {
                strategy,
                ensemble_size: s,
                r: r.total,
                per_level: r.per_level.into_iter().flatten().collect(),
                predicted_speedup: None,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::MeshConfig;
    use crate::random_field::{AHat, FieldSpec, TensorForm};

    fn small_pde(problem: Problem, dims: usize, n_max: usize) -> RunConfig {
        let mut cfg = RunConfig::new(problem, dims, vec![2, 4], n_max);
        cfg.mesh = Some(MeshConfig {
            mesh_cells: 6,
            ..MeshConfig::default()
        });
        let a_hat = if problem == Problem::PdeTest2 {
            AHat::Test2
        } else {
            AHat::Constant { value: 1.0 }
        };
        cfg.field = Some(FieldSpec {
            nystrom_points: 129,
            a_hat: Some(a_hat),
            ..FieldSpec::default()
        });
        cfg
    }

    #[test]
    fn two_sample_run_matches_hand_formula() {
        let mut cfg = small_pde(Problem::PdeTest1, 1, 2);
        cfg.initial_level = Some(0);
        cfg.ensemble_sizes = vec![2];
        let rep = adaptive_run(cfg.clone()).unwrap();
        assert_eq!(rep.samples.len(), 2);
        assert_eq!(rep.levels.len(), 1);
        assert_eq!(rep.stop_reason, StopReason::BudgetExhausted);

        // Independent single-lane solves of both samples.
        let cfg = cfg.resolve().unwrap();
        let field = build_field(cfg.field.as_ref().unwrap(), 1, TensorForm::Anisotropic).unwrap();
        let problem = DiffusionProblem::new(StructuredMesh::new(6).unwrap(), field).unwrap();
        let opts = PcgOptions::default();
        let i: Vec<f64> = [[-1.0], [1.0]]
            .iter()
            .map(|y| {
                problem
                    .solve(&[0], &[y], &opts)
                    .unwrap()
                    .iterations_per_lane[0] as f64
            })
            .collect();
        assert_eq!(rep.samples[0].iterations, i[0]);
        assert_eq!(rep.samples[1].iterations, i[1]);
        let hand = 2.0 * i[0].max(i[1]) / (i[0] + i[1]);
        for row in &rep.summary {
            assert!((row.r - hand).abs() < 1e-15, "{} {}", row.strategy, row.r);
        }
    }

    #[test]
    fn physics_does_not_depend_on_strategies() {
        let mut a = small_pde(Problem::PdeTest1, 2, 40);
        a.strategies = vec![Strategy::Nat];
        let mut b = small_pde(Problem::PdeTest1, 2, 40);
        b.strategies = vec![Strategy::Sur, Strategy::Its, Strategy::Par];
        b.ensemble_sizes = vec![3];
        let (ra, rb) = (adaptive_run(a).unwrap(), adaptive_run(b).unwrap());
        assert!(ra.levels.len() > 2);
        assert_eq!(ra.samples.len(), rb.samples.len());
        for (x, y) in ra.samples.iter().zip(&rb.samples) {
            assert_eq!(
                (x.id, x.iterations, x.qoi.to_bits()),
                (y.id, y.iterations, y.qoi.to_bits())
            );
        }
    }

    #[test]
    fn first_level_is_grouped_naturally_everywhere() {
        let rep = adaptive_run(small_pde(Problem::PdeTest2, 2, 40)).unwrap();
        for s in [2, 4] {
            let r1: Vec<f64> = [Strategy::Nat, Strategy::Par, Strategy::Sur]
                .iter()
                .map(|&st| rep.summary_row(st, s).unwrap().per_level[0])
                .collect();
            assert!(r1.iter().all(|&r| r == r1[0]));
        }
        assert!(rep.levels[0].surrogate_error.is_none());
        assert!(rep.samples.iter().all(|s| s.indicator.is_some()));
        assert!(rep.levels[1..].iter().all(|l| l.surrogate_error.is_some()));
    }

    #[test]
    fn isotropic_baseline_has_no_divergence() {
        let rep = adaptive_run(small_pde(Problem::PdeIsotropicBaseline, 2, 30)).unwrap();
        let first = rep.samples[0].iterations;
        assert!(rep.samples.iter().all(|s| s.iterations == first));
        assert!(rep.summary.iter().all(|r| r.r == 1.0));
    }

    #[test]
    fn analytic_runs_are_deterministic_and_learn() {
        let cfg = RunConfig::new(Problem::AnalyticG1, 2, vec![8], 600);
        let a = adaptive_run(cfg.clone()).unwrap();
        let b = adaptive_run(cfg).unwrap();
        assert_eq!(a, b);
        let errs: Vec<f64> = a.levels[2..]
            .iter()
            .map(|l| l.surrogate_error.as_ref().unwrap().mean_abs)
            .collect();
        let drops = errs.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(drops * 5 >= 4 * (errs.len() - 1), "{errs:?}");
        assert!(a.qoi_mean.is_some());
    }

    #[test]
    fn tolerance_stop_on_easy_problem() {
        let mut cfg = RunConfig::new(Problem::AnalyticG1, 2, vec![4], 100_000);
        cfg.tau = Some(0.05);
        let rep = adaptive_run(cfg).unwrap();
        assert_eq!(rep.stop_reason, StopReason::ToleranceMet);
    }

    #[test]
    fn budget_below_initial_grid_is_rejected() {
        let cfg = RunConfig::new(Problem::AnalyticG2, 2, vec![4], 5);
        assert!(matches!(adaptive_run(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn solver_breakdown_yields_partial_report() {
        let mut cfg = small_pde(Problem::PdeTest1, 2, 40);
        cfg.field = Some(FieldSpec {
            nystrom_points: 129,
            sigma0: 1e3,
            ..FieldSpec::default()
        });
        let rep = adaptive_run(cfg).unwrap();
        assert_eq!(rep.stop_reason, StopReason::Aborted);
        assert!(rep.failure.is_some());
    }
}
