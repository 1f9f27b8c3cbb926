use rand::Rng;
use serde::Serialize;

use super::{check_runaway, run_parallel, step, EstimateWithError, MAX_RUN_STEPS};
use crate::dynamics::{DeterministicMapModel, FixedPointSet, MetastableStructure};
use crate::error::{Error, Result};
use crate::linalg::{Point, MAX_DIM};
use crate::stats::{batch_means, binomial_stderr};

const BATCHES: usize = 20;

/// Advances until X_n ∈ M for some n ≥ 1; returns (n, ball, X_n).
fn next_return<R: Rng + ?Sized>(
    model: &DeterministicMapModel,
    structure: &MetastableStructure,
    x: &Point,
    rng: &mut R,
) -> Result<(u64, usize, Point)> {
    let mut y = *x;
    for n in 1..=MAX_RUN_STEPS {
        y = step(model, &y, rng);
        check_runaway(model, &y, n)?;
        if let Some(b) = structure.ball_containing(&y) {
            return Ok((n, b, y));
        }
    }
    Err(Error::Timeout {
        steps: MAX_RUN_STEPS,
    })
}

fn center(structure: &MetastableStructure, i: usize) -> Result<Point> {
    structure
        .balls
        .get(i)
        .map(|b| b.center_point())
        .ok_or_else(|| Error::InvalidParameter(format!("no ball {i}")))
}

/// P[τ⁺_{B_j} < τ⁺_{B_i}] from x*_i displaced by one noise kick.
pub fn estimate_committor(
    model: &DeterministicMapModel,
    structure: &MetastableStructure,
    i: usize,
    j: usize,
    n_runs: usize,
    seed: u64,
    workers: usize,
) -> Result<EstimateWithError> {
    if i == j {
        return Err(Error::InvalidParameter("the committor needs i != j".into()));
    }
    if n_runs < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 runs, got {n_runs}"
        )));
    }
    let start = center(structure, i)?;
    center(structure, j)?;
    let hits = run_parallel(n_runs, workers, seed, |rng, _| {
        let mut x = step(model, &start, rng);
        check_runaway(model, &x, 0)?;
        loop {
            let (_, b, y) = next_return(model, structure, &x, rng)?;
            if b == j {
                return Ok(true);
            }
            if b == i {
                return Ok(false);
            }
            x = y;
        }
    })?;
    let k = hits.iter().filter(|h| **h).count();
    let name = format!("committor_{i}_{j}");
    if k == 0 {
        log::warn!("no run reached ball {j}; reporting the upper bound 3/n");
        let mut e =
            EstimateWithError::new(name, model.sigma(), 3.0 / n_runs as f64, 0.0, n_runs, seed);
        e.zero_hits = true;
        return Ok(e);
    }
    let p = k as f64 / n_runs as f64;
    Ok(EstimateWithError::new(
        name,
        model.sigma(),
        p,
        binomial_stderr(p, n_runs),
        n_runs,
        seed,
    ))
}

/// Coarse lattice of `per_axis` points per axis over X, plus every unstable
/// fixed point and its neighbours at ±diam(X)/100 along each axis.
pub fn ex_start_points(
    model: &DeterministicMapModel,
    fixed_points: &FixedPointSet,
    per_axis: usize,
) -> Vec<Point> {
    let dim = model.dim();
    let per_axis = per_axis.max(2);
    let mut out = Vec::new();
    let total = per_axis.pow(dim as u32);
    for flat in 0..total {
        let mut p = [0.0; MAX_DIM];
        let mut rest = flat;
        for (k, [lo, hi]) in model.bounds().iter().enumerate() {
            let t = rest % per_axis;
            rest /= per_axis;
            p[k] = lo + (hi - lo) * t as f64 / (per_axis - 1) as f64;
        }
        out.push(p);
    }
    let h = model.diameter() / 100.0;
    for u in fixed_points.unstable() {
        let c = u.point();
        out.push(c);
        for k in 0..dim {
            for s in [-1.0, 1.0] {
                let mut p = c;
                p[k] += s * h;
                if model.in_box(&p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExStart {
    pub point: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Per-start mean return times to M and their maximum, a lower bound for
/// sup_x E^x[τ⁺_M].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExEstimate {
    pub sigma: f64,
    pub per_start: Vec<ExStart>,
    /// Index of the start with the largest mean.
    pub worst: usize,
    pub estimate: EstimateWithError,
}

/// Mean of τ⁺_M over `n_runs` runs from each start, with batch-means errors.
pub fn estimate_ex(
    model: &DeterministicMapModel,
    structure: &MetastableStructure,
    starts: &[Point],
    n_runs: usize,
    seed: u64,
    workers: usize,
) -> Result<ExEstimate> {
    if n_runs < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 runs per start, got {n_runs}"
        )));
    }
    if starts.is_empty() {
        return Err(Error::InvalidParameter("no start points".into()));
    }
    let times = run_parallel(starts.len() * n_runs, workers, seed, |rng, run| {
        Ok(next_return(model, structure, &starts[run / n_runs], rng)?.0 as f64)
    })?;
    let per_start: Vec<ExStart> = starts
        .iter()
        .zip(times.chunks(n_runs))
        .map(|(p, t)| {
            let (mean, stderr) = batch_means(t, BATCHES);
            ExStart {
                point: p[..model.dim()].to_vec(),
                mean,
                stderr,
                n: n_runs,
            }
        })
        .collect();
    let worst = (0..per_start.len())
        .max_by(|a, b| per_start[*a].mean.total_cmp(&per_start[*b].mean))
        .expect("starts are nonempty");
    let w = &per_start[worst];
    let estimate = EstimateWithError::new("ex", model.sigma(), w.mean, w.stderr, n_runs, seed);
    Ok(ExEstimate {
        sigma: model.sigma(),
        worst,
        estimate,
        per_start,
    })
}

/// Frequencies f_j(n) of X_{τ^{+,nm}_M} ∈ B_j from x*_i.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DilutedTrace {
    pub sigma: f64,
    pub start_ball: usize,
    pub m: u64,
    pub n_runs: usize,
    pub seed: u64,
    /// `frequencies[n][j]`.
    pub frequencies: Vec<Vec<f64>>,
    /// Binomial standard errors, same shape.
    pub stderr: Vec<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub fn empirical_diluted_trace(
    model: &DeterministicMapModel,
    structure: &MetastableStructure,
    i: usize,
    m: u64,
    n_blocks: usize,
    n_runs: usize,
    seed: u64,
    workers: usize,
) -> Result<DilutedTrace> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    if n_runs < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 1000 runs, got {n_runs}"
        )));
    }
    let start = center(structure, i)?;
    let n_balls = structure.n_balls();
    let paths = run_parallel(n_runs, workers, seed, |rng, _| {
        let mut x = start;
        let mut balls = Vec::with_capacity(n_blocks + 1);
        balls.push(i);
        for _ in 0..n_blocks {
            let mut b = i;
            for _ in 0..m {
                let (_, ball, y) = next_return(model, structure, &x, rng)?;
                x = y;
                b = ball;
            }
            balls.push(b);
        }
        Ok(balls)
    })?;
    let mut counts = vec![vec![0usize; n_balls]; n_blocks + 1];
    for p in &paths {
        for (n, b) in p.iter().enumerate() {
            counts[n][*b] += 1;
        }
    }
    let frequencies: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|c| *c as f64 / n_runs as f64).collect())
        .collect();
    let stderr = frequencies
        .iter()
        .map(|row| row.iter().map(|f| binomial_stderr(*f, n_runs)).collect())
        .collect();
    Ok(DilutedTrace {
        sigma: model.sigma(),
        start_ball: i,
        m,
        n_runs,
        seed,
        frequencies,
        stderr,
    })
}
