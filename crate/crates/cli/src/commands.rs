use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use entroball::{
    draw_batch, maximize_psi, rasterize_regions, solve_min_cross_entropy, BoxDomain,
    CrossEntropyRun, EmpiricalMeasure, Grid, Metric, Prior, SampleBatch, StopReason,
    WeightVector,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::points::load_points_csv;
use crate::raster;

/// What a command did: files written and whether every solve converged.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub converged: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Everything a command needs, built once from the config.
pub struct Problem {
    pub config: RunConfig,
    pub domain: BoxDomain,
    pub metric: Metric,
    pub prior: Box<dyn Prior>,
    pub mu: EmpiricalMeasure,
    pub batch: SampleBatch,
}

impl Problem {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let domain = config.domain()?;
        let metric = config.metric()?;
        let prior = config.prior()?;
        let mu = load_points_csv(&config.points_file, &domain)?;
        let batch = draw_batch(prior.as_ref(), config.batch_size, config.seed)?;
        Ok(Self {
            config,
            domain,
            metric,
            prior,
            mu,
            batch,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn prepare_output(&self) -> Result<()> {
        let dir = &self.config.output_dir;
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportCertificate {
    pub lambda: Vec<f64>,
    pub wasserstein: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub seed: u64,
    #[serde(rename = "M")]
    pub batch_size: usize,
    pub metric: String,
    pub prior: String,
    /// Region masses of the prior at `lambda`.
    pub masses: Vec<f64>,
    pub max_mass_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsJson {
    pub mass: f64,
    pub transport_cost: f64,
    pub cross_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapInfo {
    pub file: String,
    pub resolution: usize,
    /// Density value mapped to 65535; the raster is linear in `q*` from 0.
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCertificate {
    pub lambda: Vec<f64>,
    pub u: f64,
    pub v: f64,
    pub delta: f64,
    pub seed: u64,
    #[serde(rename = "M")]
    pub batch_size: usize,
    pub metric: String,
    pub prior: String,
    pub diagnostics: DiagnosticsJson,
    pub converged: bool,
    pub stop_reason: String,
    pub iterations: usize,
    pub final_radius: Option<f64>,
    pub prior_wasserstein: f64,
    pub heatmap: Option<HeatmapInfo>,
}

/// One line of the cut trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub k: usize,
    pub lambda: Vec<f64>,
    pub radius: f64,
    pub gamma: f64,
    pub g: Vec<f64>,
    pub u: f64,
    pub v: f64,
    /// The kept half-space is `<normal, lambda' - lambda> >= depth`.
    pub normal: Vec<f64>,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub cross_entropy: f64,
    pub wasserstein_check: f64,
    pub v: f64,
    pub u: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn stop_reason_name(r: StopReason) -> &'static str {
    match r {
        StopReason::PriorInsideBall => "prior_inside_ball",
        StopReason::SingleAtom => "single_atom",
        StopReason::RadiusTolerance => "radius_tolerance",
        StopReason::GradientTolerance => "gradient_tolerance",
        StopReason::Localized => "localized",
        StopReason::IterationLimit => "iteration_limit",
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

/// Fits the transport from the prior to the points and draws the weighted
/// and unweighted region maps.
pub fn cmd_transport(p: &Problem) -> Result<Report> {
    let rasters = p.config.rasters_enabled()?;
    p.prepare_output()?;
    let sol = maximize_psi(
        &p.batch,
        &|_| 1.0,
        &p.mu,
        p.metric,
        &p.config.ascent_options(),
    )?;
    let n = p.mu.len();
    let cert = TransportCertificate {
        lambda: sol.lambda_star.as_slice().to_vec(),
        wasserstein: sol.wasserstein,
        iterations: sol.iterations,
        grad_norm: sol.grad_norm,
        converged: sol.converged,
        seed: p.config.seed,
        batch_size: p.batch.len(),
        metric: p.metric.name().into(),
        prior: p.prior.name().into(),
        max_mass_deviation: sol.masses.max_deviation(1.0 / n as f64),
        masses: sol.masses.masses.clone(),
    };
    let mut files = vec![p.out("transport.json")];
    write_json(&files[0], &cert)?;
    if rasters {
        let res = p.config.resolution;
        for (lam, stem) in [
            (sol.lambda_star.clone(), "regions"),
            (WeightVector::zeros(n), "regions_unweighted"),
        ] {
            let grid = rasterize_regions(&lam, &p.mu, p.metric, res)?;
            let pgm = p.out(&format!("{stem}.pgm"));
            let png = p.out(&format!("{stem}.png"));
            let csv = p.out(&format!("{stem}.csv"));
            raster::write_regions_pgm(&pgm, &grid, n)?;
            raster::write_regions_png(&png, &grid, n)?;
            raster::write_regions_csv(&csv, &grid)?;
            files.extend([pgm, png, csv]);
        }
    }
    Ok(Report {
        converged: sol.converged,
        files,
        summary: format!(
            "W = {:.6}, {} iterations, max |mass - 1/N| = {:.2e}{}",
            sol.wasserstein,
            sol.iterations,
            cert.max_mass_deviation,
            if sol.converged { "" } else { " (not converged)" }
        ),
    })
}

/// `q*(x)` at every cell center.
pub fn density_grid(p: &Problem, run: &CrossEntropyRun) -> Result<Grid<f64>> {
    let ratio = run.solution.ratio(&p.mu, p.metric);
    Ok(Grid::sample(&p.domain, p.config.resolution, |x| {
        p.prior.density(x) * ratio.eval(x)
    })?)
}

fn certificate(p: &Problem, run: &CrossEntropyRun, heatmap: Option<HeatmapInfo>) -> EntropyCertificate {
    let s = &run.solution;
    EntropyCertificate {
        lambda: s.lambda_star.as_slice().to_vec(),
        u: s.dual.u,
        v: s.dual.v,
        delta: s.delta,
        seed: p.config.seed,
        batch_size: p.batch.len(),
        metric: p.metric.name().into(),
        prior: s.prior_name.clone(),
        diagnostics: DiagnosticsJson {
            mass: s.diagnostics.mass,
            transport_cost: s.diagnostics.transport_cost,
            cross_entropy: s.diagnostics.cross_entropy,
        },
        converged: run.converged,
        stop_reason: stop_reason_name(run.stop_reason).into(),
        iterations: run.cuts.len(),
        final_radius: run.cuts.last().map(|c| c.radius),
        prior_wasserstein: run.prior_wasserstein,
        heatmap,
    }
}

fn write_trace(path: &Path, run: &CrossEntropyRun) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    for c in &run.cuts {
        let line = TraceLine {
            k: c.iteration,
            lambda: c.center.as_slice().to_vec(),
            radius: c.radius,
            gamma: c.gamma,
            g: c.gradient.clone(),
            u: c.dual.u,
            v: c.dual.v,
            normal: c.normal.clone(),
            depth: c.depth,
        };
        let text = serde_json::to_string(&line).map_err(|source| CliError::Json {
            path: path.to_owned(),
            source,
        })?;
        writeln!(w, "{text}").map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Writes the certificate, trace and heatmap of one solve; `tag` goes into
/// the file names.
fn write_entropy_outputs(p: &Problem, run: &CrossEntropyRun, tag: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let heatmap = if p.config.rasters_enabled()? {
        let grid = density_grid(p, run)?;
        let max = grid.cells.iter().copied().fold(0.0, f64::max);
        let q = raster::quantize(&grid, max);
        let pgm = p.out(&format!("density{tag}.pgm"));
        let png = p.out(&format!("density{tag}.png"));
        raster::write_pgm16(&pgm, &q)?;
        raster::write_pgm16_png(&png, &q)?;
        let info = HeatmapInfo {
            file: format!("density{tag}.pgm"),
            resolution: p.config.resolution,
            max,
        };
        files.extend([pgm, png]);
        Some(info)
    } else {
        None
    };
    let json = p.out(&format!("solution{tag}.json"));
    write_json(&json, &certificate(p, run, heatmap))?;
    let trace = p.out(&format!("trace{tag}.jsonl"));
    write_trace(&trace, run)?;
    files.splice(0..0, [json, trace]);
    Ok(files)
}

fn solve(p: &Problem, delta: f64) -> Result<CrossEntropyRun> {
    Ok(solve_min_cross_entropy(
        p.prior.as_ref(),
        &p.mu,
        delta,
        &p.batch,
        p.metric,
        &p.config.cutting_plane_options(),
    )?)
}

fn entropy_summary(run: &CrossEntropyRun) -> String {
    let s = &run.solution;
    format!(
        "delta = {}: H = {:.6}, v = {:.4}, W(q*) = {:.6}, {} cuts, {}",
        s.delta,
        s.diagnostics.cross_entropy,
        s.dual.v,
        s.diagnostics.transport_cost,
        run.cuts.len(),
        stop_reason_name(run.stop_reason)
    )
}

/// Minimum cross-entropy density for a single delta.
pub fn cmd_mincross(p: &Problem) -> Result<Report> {
    let delta = p.config.single_delta()?;
    p.config.rasters_enabled()?;
    p.prepare_output()?;
    let run = solve(p, delta)?;
    let files = write_entropy_outputs(p, &run, "")?;
    Ok(Report {
        converged: run.converged,
        files,
        summary: entropy_summary(&run),
    })
}

/// One solve per delta on the shared batch. With `parallel` the solves run
/// on separate threads; outputs do not depend on it.
pub fn cmd_sweep(p: &Problem, parallel: bool) -> Result<Report> {
    let deltas = p.config.sweep_deltas()?;
    p.config.rasters_enabled()?;
    p.prepare_output()?;
    let runs: Vec<Result<CrossEntropyRun>> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = deltas.iter().map(|&d| s.spawn(move || solve(p, d))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        })
    } else {
        deltas.iter().map(|&d| solve(p, d)).collect()
    };

    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (i, (delta, run)) in deltas.iter().zip(runs).enumerate() {
        match run {
            Ok(run) => {
                files.extend(write_entropy_outputs(p, &run, &format!("_{i:02}"))?);
                let s = &run.solution;
                rows.push(SweepRow {
                    delta: *delta,
                    cross_entropy: s.diagnostics.cross_entropy,
                    wasserstein_check: s.diagnostics.transport_cost,
                    v: s.dual.v,
                    u: s.dual.u,
                    iterations: run.cuts.len(),
                    converged: run.converged,
                });
                lines.push(entropy_summary(&run));
            }
            // a failed row is kept, flagged, and the sweep goes on
            Err(e @ CliError::Solver(_)) if e.exit_code() == 2 => {
                rows.push(SweepRow {
                    delta: *delta,
                    cross_entropy: f64::NAN,
                    wasserstein_check: f64::NAN,
                    v: f64::NAN,
                    u: f64::NAN,
                    iterations: 0,
                    converged: false,
                });
                lines.push(format!("delta = {delta}: failed: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    let csv_path = p.out("sweep.csv");
    write_sweep_csv(&csv_path, &rows)?;
    files.insert(0, csv_path);
    Ok(Report {
        converged: rows.iter().all(|r| r.converged),
        files,
        summary: lines.join("\n"),
    })
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_owned(),
        source: std::io::Error::other(e),
    }
}
