//! Monte Carlo simulation of the perturbed map: reproducible worker
//! streams, trajectories with ball events, committors, hitting times of M
//! and the law of the diluted trace process.

mod estimators;

pub use estimators::{
    empirical_diluted_trace, estimate_committor, estimate_ex, ex_start_points, DilutedTrace,
    ExEstimate, ExStart,
};

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{DeterministicMapModel, MetastableStructure};
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Point, MAX_DIM};
use crate::spectral::csv_error;

/// No single run may take more steps than this.
pub const MAX_RUN_STEPS: u64 = 100_000_000;
/// Trajectories farther than this multiple of diam(X) from the origin have
/// run away.
pub const RUNAWAY_FACTOR: f64 = 100.0;

/// Generator for worker `worker_id`: the ChaCha8 stream `worker_id` under
/// key `master_seed`, so (seed, worker, draw index) determines every value.
pub fn rng_stream(master_seed: u64, worker_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(worker_id);
    rng
}

/// ξ ~ N(0, Σ).
pub fn gaussian_noise<R: Rng + ?Sized>(model: &DeterministicMapModel, rng: &mut R) -> Point {
    let mut z = [0.0; MAX_DIM];
    for v in z.iter_mut().take(model.dim()) {
        *v = rng.sample(StandardNormal);
    }
    model.covariance().correlate(&z)
}

/// One step X ↦ Π(X) + σξ.
pub fn step<R: Rng + ?Sized>(model: &DeterministicMapModel, x: &Point, rng: &mut R) -> Point {
    let mut y = model.image(x);
    let xi = gaussian_noise(model, rng);
    for k in 0..model.dim() {
        y[k] += model.sigma() * xi[k];
    }
    y
}

pub(crate) fn check_runaway(model: &DeterministicMapModel, x: &Point, step: u64) -> Result<()> {
    let norm = norm_sq(x, model.dim()).sqrt();
    if !(norm <= RUNAWAY_FACTOR * model.diameter()) {
        return Err(Error::Runaway { step, norm });
    }
    Ok(())
}

/// Runs `f(rng, run)` for runs 0..n_runs. Worker w owns a contiguous block
/// of runs and draws from `rng_stream(seed, w)` in run order, so results
/// depend only on (seed, workers).
pub fn run_parallel<T, F>(n_runs: usize, workers: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<T> + Sync,
{
    if workers == 0 {
        return Err(Error::InvalidParameter(
            "at least one worker is required".into(),
        ));
    }
    let blocks: Vec<Result<Vec<T>>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = rng_stream(seed, w as u64);
            let (lo, hi) = (w * n_runs / workers, (w + 1) * n_runs / workers);
            (lo..hi).map(|run| f(&mut rng, run)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n_runs);
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Enter,
    Exit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallEvent {
    pub step: u64,
    pub kind: EventKind,
    pub ball: usize,
    pub position: Vec<f64>,
}

/// One trajectory with its ball entries and exits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationTrace {
    pub seed: u64,
    pub sigma: f64,
    pub workers: usize,
    pub n_steps: u64,
    pub events: Vec<BallEvent>,
    /// Number of entries into each ball.
    pub entries: Vec<u64>,
    /// Number of steps n ≥ 1 spent in each ball.
    pub occupation: Vec<u64>,
    /// Number of steps n ≥ 1 at which X_n lies outside the box.
    pub outside_box: u64,
    pub final_position: Vec<f64>,
}

impl SimulationTrace {
    /// Event log as newline-delimited JSON.
    pub fn write_events_ndjson<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e).map_err(|e| Error::Io(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Iterates the perturbed map for `n_steps` steps from `x0`.
pub fn simulate_chain(
    model: &DeterministicMapModel,
    structure: &MetastableStructure,
    x0: &Point,
    n_steps: u64,
    seed: u64,
) -> Result<SimulationTrace> {
    if !model.in_box(x0) {
        return Err(Error::InvalidParameter(format!(
            "start point {:?} lies outside the box",
            &x0[..model.dim()]
        )));
    }
    let n_balls = structure.n_balls();
    let mut rng = rng_stream(seed, 0);
    let mut x = *x0;
    let mut current = structure.ball_containing(&x);
    let mut events = Vec::new();
    let mut entries = vec![0; n_balls];
    let mut occupation = vec![0; n_balls];
    let mut outside_box = 0;
    let position = |x: &Point| x[..model.dim()].to_vec();
    if let Some(b) = current {
        events.push(BallEvent {
            step: 0,
            kind: EventKind::Enter,
            ball: b,
            position: position(&x),
        });
        entries[b] += 1;
    }
    for n in 1..=n_steps {
        x = step(model, &x, &mut rng);
        check_runaway(model, &x, n)?;
        if !model.in_box(&x) {
            outside_box += 1;
        }
        let now = structure.ball_containing(&x);
        if now != current {
            if let Some(b) = current {
                events.push(BallEvent {
                    step: n,
                    kind: EventKind::Exit,
                    ball: b,
                    position: position(&x),
                });
            }
            if let Some(b) = now {
                events.push(BallEvent {
                    step: n,
                    kind: EventKind::Enter,
                    ball: b,
                    position: position(&x),
                });
                entries[b] += 1;
            }
            current = now;
        }
        if let Some(b) = now {
            occupation[b] += 1;
        }
    }
    Ok(SimulationTrace {
        seed,
        sigma: model.sigma(),
        workers: 1,
        n_steps,
        events,
        entries,
        occupation,
        outside_box,
        final_position: position(&x),
    })
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateWithError {
    pub quantity: String,
    pub sigma: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
    /// σ² log(estimate), when the estimate is positive.
    pub log_scale: Option<f64>,
    /// No run produced the event; `estimate` is the upper bound 3/n.
    pub zero_hits: bool,
}

impl EstimateWithError {
    pub fn new(
        quantity: impl Into<String>,
        sigma: f64,
        estimate: f64,
        stderr: f64,
        n: usize,
        seed: u64,
    ) -> Self {
        Self {
            quantity: quantity.into(),
            sigma,
            estimate,
            stderr,
            n,
            seed,
            log_scale: (estimate > 0.0).then(|| sigma * sigma * estimate.ln()),
            zero_hits: false,
        }
    }
}

const CSV_HEADER: [&str; 6] = ["quantity", "sigma", "estimate", "stderr", "n", "seed"];

fn write_rows<W: Write>(w: &mut csv::Writer<W>, rows: &[EstimateWithError]) -> Result<()> {
    for r in rows {
        w.write_record(&[
            r.quantity.clone(),
            r.sigma.to_string(),
            r.estimate.to_string(),
            r.stderr.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Estimates as CSV with a header row.
pub fn write_estimates_csv<W: Write>(out: W, rows: &[EstimateWithError]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    write_rows(&mut w, rows)
}

/// Appends estimates to a CSV file, writing the header when the file is new
/// or empty.
pub fn append_estimates_csv(path: &Path, rows: &[EstimateWithError]) -> Result<()> {
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        write_estimates_csv(file, rows)
    } else {
        write_rows(&mut csv::Writer::from_writer(file), rows)
    }
}
