//! The noise-parameter sweep, its CSV output, and threshold location by
//! bisection on the star-compatibility verdict.

use std::io::Write;

use serde::Serialize;

use crate::certify::{is_star_compatible, star_incompatibility_weight, weight_lower_bound};
use crate::linalg::DensityOperator;
use crate::quantum::{pauli_pmd, Pmd};
use crate::seesaw::{seesaw_minimize, SeesawConfig, SeesawResult};
use crate::{Error, Result, SolveStatus};

/// Device families available to the sweep and threshold search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Noisy Pauli measurements `M^{±|i} = (1 ± η σ_i)/2`, settings labelled 1, 2, 3.
    Pauli,
}

impl Family {
    pub fn device(self, eta: f64) -> Result<Pmd> {
        match self {
            Family::Pauli => pauli_pmd(eta),
        }
    }

    /// Maps the family's setting label to a setting index.
    pub fn setting_index(self, label: usize) -> Result<usize> {
        match self {
            Family::Pauli if (1..=3).contains(&label) => Ok(label - 1),
            Family::Pauli => Err(Error::InvalidArgument(format!(
                "the Pauli family labels its settings 1, 2, 3; got {label}"
            ))),
        }
    }
}

pub const CSV_HEADER: &str = "eta,p_guess,two_times_one_minus_p,weight,bound_eq9,restarts_used,iterations_total,converged";

/// Tolerance on `weight ≥ bound_eq9` for an emitted row.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub eta: f64,
    pub p_guess: f64,
    pub two_times_one_minus_p: f64,
    pub weight: f64,
    pub bound_eq9: f64,
    pub restarts_used: usize,
    pub iterations_total: usize,
    pub converged: bool,
}

impl SweepRow {
    /// A row whose computation failed: values are NaN and `converged` is false.
    pub fn failed(eta: f64, restarts_used: usize) -> Self {
        SweepRow {
            eta,
            p_guess: f64::NAN,
            two_times_one_minus_p: f64::NAN,
            weight: f64::NAN,
            bound_eq9: f64::NAN,
            restarts_used,
            iterations_total: 0,
            converged: false,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.p_guess.is_nan()
    }

    /// Checks both row invariants; failed rows pass trivially.
    pub fn check(&self) -> Result<()> {
        if self.is_failed() {
            return Ok(());
        }
        let violation = |what: String| Error::Solver {
            status: SolveStatus::NumericalFailure,
            context: format!("sweep row at eta = {}: {what}", self.eta),
        };
        if (self.two_times_one_minus_p - 2.0 * (1.0 - self.p_guess)).abs() > 1e-12 {
            return Err(violation("two_times_one_minus_p disagrees with p_guess".into()));
        }
        if self.weight < self.bound_eq9 - BOUND_SLACK {
            return Err(violation(format!(
                "weight {} lies below the bound {}",
                self.weight, self.bound_eq9
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub family: Family,
    pub eta_start: f64,
    pub eta_end: f64,
    pub eta_step: f64,
    /// 0-based target setting.
    pub x_star: usize,
    /// Per-point see-saw settings; `warm_start` is managed by the sweep.
    pub seesaw: SeesawConfig,
    /// Evaluate grid points independently on worker threads, without warm starts.
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            family: Family::Pauli,
            eta_start: 0.65,
            eta_end: 1.0,
            eta_step: 0.01,
            x_star: 0,
            seesaw: SeesawConfig::default(),
            parallel: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, h) = (self.eta_start, self.eta_end, self.eta_step);
        if !(0.0 <= a && a <= b && b <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eta range must satisfy 0 <= start <= end <= 1, got [{a}, {b}]"
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidArgument(format!("eta step must be positive, got {h}")));
        }
        self.seesaw.validate()
    }

    /// Grid points `start + i·step` up to `end`, rounded to 10 decimals.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.eta_end - self.eta_start) / self.eta_step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| {
                let eta = self.eta_start + i as f64 * self.eta_step;
                ((eta * 1e10).round() / 1e10).min(self.eta_end)
            })
            .collect()
    }
}

fn point_row(pmd: &Pmd, eta: f64, x_star: usize, seesaw: &SeesawResult) -> Result<SweepRow> {
    let outcomes = pmd.outcome_count();
    let p_guess = seesaw.best_p.clamp(1.0 / outcomes as f64, 1.0);
    let weight = star_incompatibility_weight(pmd, x_star)?.w.clamp(0.0, 1.0);
    let row = SweepRow {
        eta,
        p_guess,
        two_times_one_minus_p: 2.0 * (1.0 - p_guess),
        weight,
        bound_eq9: weight_lower_bound(p_guess, outcomes)?,
        restarts_used: seesaw.restarts_used,
        iterations_total: seesaw.iterations_total,
        converged: seesaw.converged,
    };
    row.check()?;
    Ok(row)
}

/// Evaluates one grid point. Solver failures produce a failed row.
fn evaluate_point(cfg: &SweepConfig, index: usize, eta: f64, warm: Option<DensityOperator>) -> Result<(SweepRow, Option<DensityOperator>)> {
    let pmd = cfg.family.device(eta)?;
    let seesaw_cfg = SeesawConfig {
        warm_start: warm,
        seed: cfg.seesaw.seed.wrapping_add(index as u64),
        ..cfg.seesaw.clone()
    };
    let outcome = seesaw_minimize(&pmd, cfg.x_star, &seesaw_cfg)
        .and_then(|res| point_row(&pmd, eta, cfg.x_star, &res).map(|row| (row, res.best_state)));
    match outcome {
        Ok((row, best)) => Ok((row, Some(best))),
        Err(e) if e.is_solver_failure() => Ok((SweepRow::failed(eta, cfg.seesaw.restarts), None)),
        Err(e) => Err(e),
    }
}

/// Runs the sweep. Sequential sweeps warm-start each point from the previous
/// point's best state.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    run_sweep_with(cfg, |_| {})
}

/// As [`run_sweep`], calling `progress` after every finished row.
pub fn run_sweep_with(cfg: &SweepConfig, mut progress: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    cfg.family.device(cfg.eta_start)?.check_target(cfg.x_star)?;
    let grid = cfg.grid();
    if cfg.parallel {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        let mut rows = Vec::with_capacity(grid.len());
        for (wave, etas) in grid.chunks(workers).enumerate() {
            let results: Vec<Result<(SweepRow, Option<DensityOperator>)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = etas
                    .iter()
                    .enumerate()
                    .map(|(k, &eta)| scope.spawn(move || evaluate_point(cfg, wave * workers + k, eta, None)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
            });
            for result in results {
                let (row, _) = result?;
                progress(&row);
                rows.push(row);
            }
        }
        return Ok(rows);
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut warm = cfg.seesaw.warm_start.clone();
    for (index, &eta) in grid.iter().enumerate() {
        let (row, best) = evaluate_point(cfg, index, eta, warm.take())?;
        warm = best;
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Formats with 12 significant digits; plain decimal notation for moderate
/// magnitudes and scientific notation otherwise.
pub fn format_significant(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exponent = v.abs().log10().floor() as i32;
    if (-6..=15).contains(&exponent) {
        let decimals = (11 - exponent).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.11e}")
    }
}

/// Writes the header and rows with LF line endings, checking each row first.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    for row in rows {
        row.check()?;
    }
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    writer.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in rows {
        writer
            .write_record([
                format_significant(r.eta),
                format_significant(r.p_guess),
                format_significant(r.two_times_one_minus_p),
                format_significant(r.weight),
                format_significant(r.bound_eq9),
                r.restarts_used.to_string(),
                r.iterations_total.to_string(),
                r.converged.to_string(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// A gnuplot script plotting the weight (dashed), `2(1 − p)` (solid) and the
/// bound (points) from `csv_path`, rendering to `svg_path`.
pub fn gnuplot_script(csv_path: &str, svg_path: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set terminal svg size 720,480\n\
         set output '{svg_path}'\n\
         set xlabel 'eta'\n\
         set key top left\n\
         plot '{csv_path}' using 1:4 skip 1 with lines dashtype 2 linewidth 2 title 'weight', \\\n     \
         '' using 1:3 skip 1 with lines linewidth 2 title '2(1 - p_guess)', \\\n     \
         '' using 1:5 skip 1 with points pointtype 7 title 'bound'\n"
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    /// Largest probed η with the verdict found at η = 0.
    pub lower: f64,
    /// Smallest probed η with the opposite verdict.
    pub upper: f64,
    /// Verdict at `lower`.
    pub compatible_below: bool,
    pub evaluations: usize,
}

/// Number of evenly spaced probes used to check monotonicity before bisecting.
const PROBES: usize = 10;

/// Locates the η in `[0, 1]` where the star-compatibility verdict of
/// `family(η)` flips, to a bracket of width at most `tol`.
pub fn locate_threshold(family: impl Fn(f64) -> Result<Pmd>, x_star: usize, tol: f64) -> Result<ThresholdReport> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut evaluations = 0;
    let mut verdict = |eta: f64| -> Result<bool> {
        evaluations += 1;
        Ok(is_star_compatible(&family(eta)?, x_star)?.compatible())
    };
    let name = |c: bool| if c { "compatible" } else { "incompatible" };

    let probes: Vec<(f64, bool)> = (0..=PROBES)
        .map(|i| {
            let eta = i as f64 / PROBES as f64;
            verdict(eta).map(|v| (eta, v))
        })
        .collect::<Result<_>>()?;
    let first = probes[0].1;
    let last = probes[PROBES].1;
    if first == last {
        return Err(Error::Threshold(format!(
            "no sign change: {} at eta = 0 and at eta = 1",
            name(first)
        )));
    }
    let flip = probes.iter().position(|&(_, v)| v != first).expect("last probe differs");
    if let Some(&(eta_back, _)) = probes[flip..].iter().find(|&&(_, v)| v == first) {
        return Err(Error::Threshold(format!(
            "non-monotone verdicts: {} at eta = {}, {} at eta = {}, {} again at eta = {eta_back}",
            name(first),
            probes[flip - 1].0,
            name(!first),
            probes[flip].0,
            name(first)
        )));
    }

    let (mut lo, mut hi) = (probes[flip - 1].0, probes[flip].0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if verdict(mid)? == first {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdReport {
        threshold: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
        compatible_below: first,
        evaluations,
    })
}

/// [`locate_threshold`] for a named family.
pub fn family_threshold(family: Family, x_star: usize, tol: f64) -> Result<ThresholdReport> {
    locate_threshold(|eta| family.device(eta), x_star, tol)
}
