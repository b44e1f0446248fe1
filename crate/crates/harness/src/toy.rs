//! Optimizer paths on the two-dimensional test function.

use std::path::Path;

use lrdrop::optim::{LrdConfig, Optimizer};
use lrdrop::tensor::Tensor;
use lrdrop::testfn::{toy_gradient, toy_value, Domain, ToyProblem, Trajectory, REFERENCE_OPTIMUM};
use lrdrop::Rng;

use crate::error::{HarnessError, Result};
use crate::io::{write_atomic, write_csv};
use crate::spec::{Arm, ExperimentSpec, Problem};
use crate::streams;

pub const SUMMARY_HEADER: &str = "arm,seed,init,init_x,init_y,final_x,final_y,final_f,reached";
pub const REPORT_HEADER: &str = "arm,runs,reached,reach_fraction";

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub arm: String,
    pub seed: u64,
    pub init_index: usize,
    pub init: (f64, f64),
    pub trajectory: Trajectory,
    pub final_point: (f64, f64),
    pub final_value: f64,
    pub reached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachSummary {
    pub arm: String,
    pub runs: usize,
    pub reached: usize,
}

impl ReachSummary {
    pub fn fraction(&self) -> f64 {
        self.reached as f64 / self.runs as f64
    }
}

/// Initial points: the spec's explicit list, or the centers of a
/// `grid x grid` partition of the toy domain.
pub fn init_points(spec: &ExperimentSpec) -> Vec<(f64, f64)> {
    if let Some(inits) = &spec.toy.inits {
        return inits.iter().map(|p| (p[0], p[1])).collect();
    }
    let d = Domain::TOY;
    let g = spec.toy.grid;
    let (dx, dy) = ((d.x.1 - d.x.0) / g as f64, (d.y.1 - d.y.0) / g as f64);
    let mut points = Vec::with_capacity(g * g);
    for j in 0..g {
        for i in 0..g {
            points.push((d.x.0 + (i as f64 + 0.5) * dx, d.y.0 + (j as f64 + 0.5) * dy));
        }
    }
    points
}

/// Runs one optimizer path from `init`.
pub fn run_path(spec: &ExperimentSpec, arm: &Arm, seed: u64, init_index: usize, init: (f64, f64)) -> Result<ToyRun> {
    let problem = ToyProblem {
        success_radius: spec.toy.success_radius,
        ..ToyProblem::default()
    };
    let config = LrdConfig {
        learning_rate: spec.learning_rate(),
        keep_prob: arm.keep_prob,
        variant: arm.variant,
        noisy_gradient: arm.noisy_gradient,
        weight_decay: spec.weight_decay,
        unmasked: Vec::new(),
    };
    let mut params = vec![Tensor::vector(vec![init.0, init.1])];
    let mut optimizer = Optimizer::new(spec.rule(), config, &params)?;
    let mut rng = Rng::with_stream(seed, streams::OPTIM).child(init_index as u64);
    let mut trajectory = Trajectory::new();
    trajectory.push(0, init.0, init.1)?;
    let steps = spec.toy.steps;
    for s in 1..=steps {
        let (x, y) = (params[0].data()[0], params[0].data()[1]);
        let (gx, gy) = toy_gradient(x, y);
        optimizer.step(&mut params, &[Tensor::vector(vec![gx, gy])], &mut rng)?;
        if s % spec.toy.record_every == 0 || s == steps {
            trajectory.push(s, params[0].data()[0], params[0].data()[1])?;
        }
    }
    let (x, y) = (params[0].data()[0], params[0].data()[1]);
    Ok(ToyRun {
        arm: arm.label.clone(),
        seed,
        init_index,
        init,
        trajectory,
        final_point: (x, y),
        final_value: toy_value(x, y),
        reached: problem.reached(x, y),
    })
}

/// Every arm from every initial point under every seed, without writing files.
pub fn run_paths(spec: &ExperimentSpec) -> Result<(Vec<ToyRun>, Vec<ReachSummary>)> {
    if spec.problem != Problem::Toy {
        return Err(HarnessError::Invalid(vec!["problem: expected \"toy\"".into()]));
    }
    let arms = spec.arms().map_err(|e| HarnessError::Invalid(vec![e]))?;
    let inits = init_points(spec);
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for arm in &arms {
        let mut reached = 0;
        for &seed in &spec.seeds {
            for (k, &init) in inits.iter().enumerate() {
                let run = run_path(spec, arm, seed, k, init)?;
                reached += usize::from(run.reached);
                runs.push(run);
            }
        }
        summary.push(ReachSummary {
            arm: arm.label.clone(),
            runs: spec.seeds.len() * inits.len(),
            reached,
        });
    }
    Ok((runs, summary))
}

/// Runs the toy spec and writes `<out>/<arm>/seed-<s>/init-<k>.csv`
/// trajectories, `toy_summary.csv` (one row per path) and `toy_report.csv`
/// (reach fraction per arm).
pub fn run_toy(spec: &ExperimentSpec, out: &Path) -> Result<Vec<ReachSummary>> {
    let (runs, summary) = run_paths(spec)?;
    for r in &runs {
        let mut buf = Vec::new();
        r.trajectory.write_csv(&mut buf).expect("writing to memory");
        let path = out
            .join(&r.arm)
            .join(format!("seed-{}", r.seed))
            .join(format!("init-{}.csv", r.init_index));
        write_atomic(&path, &buf)?;
    }
    write_csv(
        &out.join("toy_summary.csv"),
        SUMMARY_HEADER,
        runs.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                r.arm,
                r.seed,
                r.init_index,
                r.init.0,
                r.init.1,
                r.final_point.0,
                r.final_point.1,
                r.final_value,
                r.reached
            )
        }),
    )?;
    write_csv(
        &out.join("toy_report.csv"),
        REPORT_HEADER,
        summary
            .iter()
            .map(|s| format!("{},{},{},{}", s.arm, s.runs, s.reached, s.fraction())),
    )?;
    write_atomic(&out.join("spec.json"), spec.to_json().as_bytes())?;
    for s in &summary {
        eprintln!(
            "{}: {}/{} paths end within {} of ({}, {})",
            s.arm, s.reached, s.runs, spec.toy.success_radius, REFERENCE_OPTIMUM.0, REFERENCE_OPTIMUM.1
        );
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_spec(extra: &str) -> ExperimentSpec {
        ExperimentSpec::from_json(&format!(r#"{{"version": 1, "problem": "toy"{extra}}}"#)).unwrap()
    }

    #[test]
    fn grid_is_cell_centered() {
        let pts = init_points(&toy_spec(""));
        assert_eq!(pts.len(), 16);
        assert_eq!(pts[0], (-3.5, -1.375));
        assert_eq!(pts[15], (-0.5, 2.375));
    }

    #[test]
    fn start_at_optimum_stays_there() {
        let spec = toy_spec(
            r#", "keep_prob": 1.0, "toy": {"steps": 3000, "grid": 1, "inits": [[-0.74, 1.40]], "success_radius": 0.05, "record_every": 1}"#,
        );
        let run = run_path(&spec, &spec.parse_arm("base").unwrap(), 0, 0, (-0.74, 1.40)).unwrap();
        assert!(run.reached, "{:?}", run.final_point);
        assert_eq!(run.trajectory.len(), 3001);
    }

    #[test]
    fn zero_steps_records_only_the_start() {
        let spec =
            toy_spec(r#", "toy": {"steps": 0, "grid": 1, "inits": null, "success_radius": 0.05, "record_every": 1}"#);
        let run = run_path(&spec, &spec.parse_arm("lrd").unwrap(), 0, 0, (-2.0, 1.0)).unwrap();
        assert_eq!(run.trajectory.len(), 1);
        assert_eq!(run.final_point, (-2.0, 1.0));
    }

    #[test]
    fn sparse_recording_keeps_the_last_step() {
        let spec =
            toy_spec(r#", "toy": {"steps": 10, "grid": 1, "inits": null, "success_radius": 0.05, "record_every": 4}"#);
        let run = run_path(&spec, &spec.parse_arm("lrd").unwrap(), 0, 0, (-2.0, 1.0)).unwrap();
        let steps: Vec<_> = run.trajectory.points().iter().map(|p| p.step).collect();
        assert_eq!(steps, [0, 4, 8, 10]);
    }
}
