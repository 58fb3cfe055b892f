//! Run orchestration for `solve`, `sweep` and `kernel-check`. Each writes into its own
//! directory under the output root, and sweep members get distinct subdirectories.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use super::config::RunConfig;
use crate::asymptotics::{self, LogFit, Prediction, SweepMember};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};
use crate::kernel::{self, KernelBackend, KernelSample};
use crate::variational::{solve_ring, RingRun};

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_ENV: &str = "SWIRL_RINGS_OUTPUT";

/// The output root: `$SWIRL_RINGS_OUTPUT` when set, else `configured`.
pub fn output_root(configured: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.to_path_buf(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_fields(dir: &Path, run: &RingRun, fields: &[String]) -> Result<()> {
    let sol = &run.solution;
    let dump = |name: &str, f: &ScalarField, grid: &Grid| -> Result<()> {
        let mut w = create(&dir.join(format!("{name}.dat")))?;
        f.write_dump(grid, &mut w)?;
        w.flush()?;
        Ok(())
    };
    for name in fields {
        match name.as_str() {
            "zeta" => dump("zeta", &sol.zeta, &run.grid)?,
            "psi" => dump("psi", &sol.psi, &run.grid)?,
            "xi" => dump("xi", &sol.xi, &run.grid)?,
            "grid" => {
                let mut w = create(&dir.join("grid.dat"))?;
                run.grid.write_dump(&mut w)?;
                w.flush()?;
            }
            other => return Err(Error::param("output.fields", format!("unknown field `{other}`"))),
        }
    }
    Ok(())
}

fn write_record(path: &Path, rec: &DiagnosticsRecord, precision: usize) -> Result<()> {
    let mut w = create(path)?;
    rec.write(&mut w, precision)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub run: RingRun,
    pub record: DiagnosticsRecord,
    pub directory: PathBuf,
}

/// Solves one configuration and writes `diagnostics.txt` plus the requested field
/// dumps into `root/solve`.
pub fn solve(cfg: &RunConfig, root: &Path) -> Result<SolveOutcome> {
    let run = solve_ring(&cfg.setup(cfg.beta()))?;
    let record = diagnostics::record(&run, cfg.params.seed)?;
    let dir = root.join("solve");
    fs::create_dir_all(&dir)?;
    write_fields(&dir, &run, &cfg.output.fields)?;
    write_record(&dir.join("diagnostics.txt"), &record, cfg.output.precision)?;
    info!("wrote {}", dir.display());
    Ok(SolveOutcome {
        run,
        record,
        directory: dir,
    })
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub members: Vec<SweepMember>,
    pub prediction: Prediction,
    /// `(μ fit, E fit)` against `log(1/β)`.
    pub fits: (LogFit, LogFit),
    pub directory: PathBuf,
}

impl SweepOutcome {
    pub fn all_converged(&self) -> bool {
        self.members.iter().all(|m| m.record.as_ref().is_some_and(|r| r.converged))
    }
}

/// β list for a sweep: the command line wins over the config.
pub fn sweep_betas(cfg: &RunConfig, cli: Option<&[f64]>) -> Result<Vec<f64>> {
    let list = cli
        .map(<[f64]>::to_vec)
        .or_else(|| cfg.params.betas.clone())
        .or_else(|| cfg.params.beta.map(|b| vec![b]))
        .unwrap_or_default();
    asymptotics::check_betas(&list)
}

/// Runs the sweep and writes `sweep.csv`, `fit.txt` and one directory per member.
pub fn sweep(cfg: &RunConfig, betas: Option<&[f64]>, root: &Path) -> Result<SweepOutcome> {
    let betas = sweep_betas(cfg, betas)?;
    let base = cfg.setup(betas[0]);
    let members = asymptotics::run_sweep(&base, &betas, cfg.params.seed)?;
    let prediction = asymptotics::predict(cfg.domain.kind, cfg.domain.d, cfg.params.w)?;
    let dir = root.join("sweep");
    let prec = cfg.output.precision;
    for (i, m) in members.iter().enumerate() {
        let sub = dir.join(format!("member_{i:02}_beta_{:.3e}", m.beta));
        fs::create_dir_all(&sub)?;
        match (&m.run, &m.record) {
            (Some(run), Some(rec)) => {
                write_fields(&sub, run, &cfg.output.fields)?;
                write_record(&sub.join("diagnostics.txt"), rec, prec)?;
            }
            _ => {
                let mut w = create(&sub.join("error.txt"))?;
                writeln!(w, "{}", m.error.clone().unwrap_or_default())?;
            }
        }
    }
    let mut w = create(&dir.join("sweep.csv"))?;
    asymptotics::write_sweep_csv(&mut w, &members, &prediction, prec)?;
    w.flush()?;
    let fits = asymptotics::sweep_fits(&members)?;
    let mut w = create(&dir.join("fit.txt"))?;
    w.write_all(fit_summary(&prediction, &fits, prec).as_bytes())?;
    w.flush()?;
    Ok(SweepOutcome {
        members,
        prediction,
        fits,
        directory: dir,
    })
}

/// `key = value` summary of the slope fits next to the predictions.
pub fn fit_summary(pred: &Prediction, fits: &(LogFit, LogFit), precision: usize) -> String {
    let (mu, e) = fits;
    let rel = |a: f64, b: f64| (a - b) / b;
    let rows = [
        ("r_star", pred.r_star),
        ("mu_slope_fit", mu.slope),
        ("mu_slope_pred", pred.mu_slope),
        ("mu_slope_rel_err", rel(mu.slope, pred.mu_slope)),
        ("mu_intercept", mu.intercept),
        ("mu_max_residual", mu.max_residual),
        ("E_slope_fit", e.slope),
        ("E_slope_pred", pred.e_slope),
        ("E_slope_rel_err", rel(e.slope, pred.e_slope)),
        ("E_intercept", e.intercept),
        ("E_max_residual", e.max_residual),
    ];
    rows.iter().map(|(k, v)| format!("{k} = {v:.precision$e}\n")).collect()
}

pub const KERNEL_COLUMNS: &str = "r,z,r_src,z_src,sigma,G,bound,bound_holds,remainder";

/// Samples the ring kernel on `n` random pairs and writes `kernel/kernel_samples.csv`.
pub fn kernel_check(n: usize, seed: u64, backend: KernelBackend, root: &Path, precision: usize) -> Result<(Vec<KernelSample>, PathBuf)> {
    if n == 0 {
        return Err(Error::param("samples", "must be at least 1"));
    }
    let samples = kernel::kernel_samples(n, seed, backend)?;
    let path = root.join("kernel").join("kernel_samples.csv");
    let mut w = create(&path)?;
    writeln!(w, "{KERNEL_COLUMNS}")?;
    for s in &samples {
        let f = |v: f64| format!("{v:.precision$e}");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            f(s.r),
            f(s.z),
            f(s.r_src),
            f(s.z_src),
            f(s.sigma),
            f(s.g),
            f(s.bound),
            s.g <= s.bound,
            f(s.remainder)
        )?;
    }
    w.flush()?;
    Ok((samples, path))
}
