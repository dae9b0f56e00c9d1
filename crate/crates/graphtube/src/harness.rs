//! Experiment driver: configs, runners, and result persistence.
//!
//! Each experiment kind reads an [`ExperimentConfig`], runs a deterministic
//! computation (seeded sampling, ordered parallel sweeps), and produces a
//! serializable report plus CSV tables and, for convergence sweeps, a
//! log-log SVG plot. `run_experiment` dispatches on the kind, writes
//! `report.json` and the side files into the output directory, and returns
//! the overall pass flag that drives the process exit code.

use crate::coupling::{closeness_csv, run_closeness, Coupler, SuiteParams};
use crate::estimates::{compute_bounds, deltaprime_orders, edge_rescale_bound, BoundInputs, ChainOrderReport};
use crate::fem::{assemble, eigensolve, export_matrix, PotentialSpec};
use crate::graph::{Coupling, GraphFunction, StarGraph};
use crate::linalg::{log_log_fit, LogLogFit};
use crate::mesh::{build_mesh, export_text, rectangle_mesh, FatGraphSpec, Satellite};
use crate::spectra::{
    deltaprime_resolvent_gap, intermediate_spectrum_raw, radial_negative_root,
    rayleigh_quotient_of_ones, solve_kappa_beta, star_delta_spectrum,
    star_delta_spectrum_weighted, star_deltaprime_spectrum, SpectralResult,
};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

pub const REPORT_VERSION: &str = "graphtube/1";
pub const CSV_VERSION: &str = "v1";

/// Node budget for one chain grid point; configs projecting past it are
/// rejected before any mesh is built.
pub const CHAIN_DOF_GUARD: usize = 500_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GraphSpectrum,
    ManifoldSpectrum,
    ConvergeDelta,
    ConvergeDeltaprimeGraph,
    ConvergeDeltaprimeChain,
    ClosenessSuite,
    Constants,
    NorootScan,
    ValidateFem,
}

/// Mesh-size rule applied at each sweep point.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HRule {
    /// `h = eps / factor`
    EpsOver { factor: f64 },
    Fixed { h: f64 },
}

impl HRule {
    pub fn h(&self, eps: f64) -> f64 {
        match self {
            HRule::EpsOver { factor } => eps / factor,
            HRule::Fixed { h } => *h,
        }
    }
}

fn d_n() -> usize {
    3
}
fn d_alpha() -> f64 {
    0.05
}
fn d_count() -> usize {
    4
}
fn d_h_rule() -> HRule {
    HRule::EpsOver { factor: 8.0 }
}
fn d_samples() -> usize {
    200
}
fn d_tol_disc() -> f64 {
    0.1
}
fn d_trials() -> usize {
    1000
}
fn d_a_points() -> usize {
    200
}
fn d_kappa_points() -> usize {
    2000
}
fn d_kappa_max() -> f64 {
    50.0
}
fn d_window_lo() -> f64 {
    0.5
}
fn d_window_hi() -> f64 {
    12.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    /// single tube width for spectrum and closeness experiments
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_grid: Vec<f64>,
    #[serde(default)]
    pub a_grid: Vec<f64>,
    #[serde(default = "d_h_rule")]
    pub h_rule: HRule,
    #[serde(default = "d_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    /// embedded star document for graph-spectrum runs
    #[serde(default)]
    pub graph: Option<serde_json::Value>,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_tol_disc")]
    pub tol_disc: f64,
    #[serde(default)]
    pub lambda2_vertex: Option<f64>,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_a_points")]
    pub a_points: usize,
    #[serde(default = "d_kappa_points")]
    pub kappa_points: usize,
    #[serde(default = "d_kappa_max")]
    pub kappa_max: f64,
    #[serde(default = "d_window_lo")]
    pub window_lo: f64,
    #[serde(default = "d_window_hi")]
    pub window_hi: f64,
}

impl ExperimentConfig {
    pub fn from_json(doc: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(doc).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let doc = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("star degree must be >= 2, got {}", self.n)));
        }
        if self.count == 0 {
            return Err(Error::Config("eigenvalue count must be >= 1".into()));
        }
        match self.h_rule {
            HRule::EpsOver { factor } if !(factor > 0.0) => {
                return Err(Error::Config(format!("h rule factor must be positive, got {factor}")));
            }
            HRule::Fixed { h } if !(h > 0.0) => {
                return Err(Error::Config(format!("fixed h must be positive, got {h}")));
            }
            _ => {}
        }
        check_grid("eps_grid", &self.eps_grid)?;
        check_grid("a_grid", &self.a_grid)?;

        match self.experiment {
            ExperimentKind::GraphSpectrum => {
                if self.graph.is_none() {
                    return Err(Error::Config(
                        "graph-spectrum needs an embedded \"graph\" document".into(),
                    ));
                }
            }
            ExperimentKind::ManifoldSpectrum | ExperimentKind::ClosenessSuite => {
                let eps = self.eps.ok_or_else(|| {
                    Error::Config("this experiment needs a single \"eps\" value".into())
                })?;
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::Config(format!("eps must lie in (0,1), got {eps}")));
                }
                self.check_h_floor(eps)?;
                if self.experiment == ExperimentKind::ClosenessSuite && self.samples == 0 {
                    return Err(Error::Config("closeness suite needs samples >= 1".into()));
                }
            }
            ExperimentKind::ConvergeDelta => {
                if self.eps_grid.len() < 3 {
                    return Err(Error::Config(format!(
                        "delta convergence needs >= 3 widths, got {}",
                        self.eps_grid.len()
                    )));
                }
                for &eps in &self.eps_grid {
                    self.check_h_floor(eps)?;
                }
            }
            ExperimentKind::ConvergeDeltaprimeGraph => {
                if self.a_grid.len() < 3 {
                    return Err(Error::Config(format!(
                        "spacing sweep needs >= 3 points, got {}",
                        self.a_grid.len()
                    )));
                }
            }
            ExperimentKind::ConvergeDeltaprimeChain => {
                if self.eps_grid.len() < 2 {
                    return Err(Error::Config(format!(
                        "chain sweep needs >= 2 widths, got {}",
                        self.eps_grid.len()
                    )));
                }
                if !(self.alpha > 0.0 && self.alpha < 1.0 / 13.0) {
                    return Err(Error::Config(format!(
                        "alpha = {} rejected: the chain needs 0 < alpha < 1/13 so that the \
                         error scale eps^((1-13 alpha)/2) actually decays (exponent here: {})",
                        self.alpha,
                        (1.0 - 13.0 * self.alpha) / 2.0
                    )));
                }
                if !(self.window_lo > 0.0 && self.window_hi > self.window_lo) {
                    return Err(Error::Config(format!(
                        "window [{}, {}] must satisfy 0 < lo < hi",
                        self.window_lo, self.window_hi
                    )));
                }
                for &eps in &self.eps_grid {
                    self.check_h_floor(eps)?;
                    let dofs = projected_chain_nodes(self.n, eps, self.alpha, self.h_rule.h(eps));
                    if dofs > CHAIN_DOF_GUARD {
                        return Err(Error::Config(format!(
                            "projected {dofs} mesh nodes at eps = {eps} exceed the {CHAIN_DOF_GUARD} \
                             budget; increase the h divisor or drop the finest widths"
                        )));
                    }
                }
            }
            ExperimentKind::Constants => {
                if self.trials == 0 {
                    return Err(Error::Config("constants sweep needs trials >= 1".into()));
                }
            }
            ExperimentKind::NorootScan => {
                if self.a_points < 2 || self.kappa_points < 2 {
                    return Err(Error::Config("scan grid needs >= 2 points per axis".into()));
                }
                if !(self.kappa_max > 0.0 && self.kappa_max.is_finite()) {
                    return Err(Error::Config(format!(
                        "kappa_max must be positive, got {}",
                        self.kappa_max
                    )));
                }
            }
            ExperimentKind::ValidateFem => {}
        }
        Ok(())
    }

    // solver precondition: at least four cells across the tube
    fn check_h_floor(&self, eps: f64) -> Result<()> {
        let h = self.h_rule.h(eps);
        if h > eps / 4.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "mesh rule gives h = {h} at eps = {eps}; the tube needs h <= eps/4"
            )));
        }
        Ok(())
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    for w in grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Config(format!(
                "{name} must be strictly decreasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    for &v in grid {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Config(format!("{name} entries must lie in (0,1), got {v}")));
        }
    }
    Ok(())
}

/// Estimated node count of one chain mesh, used by the budget guard.
fn projected_chain_nodes(n: usize, eps: f64, alpha: f64, h: f64) -> usize {
    let h_sat = h.min(eps.powf(1.0 + alpha) / 4.0);
    let cols = (eps / h).ceil() as usize + 1;
    let rows = ((1.0 + eps) / h).ceil() as usize + (eps / h_sat).ceil() as usize + 2;
    let k = cols.saturating_sub(1).max(1);
    let sides = if n <= 3 { 2 * n } else { n };
    let region = sides * k * k / 2 + sides * k + 2;
    n * rows * cols + region
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderFit {
    pub label: String,
    pub order: f64,
    pub intercept: f64,
    /// root mean square residual of the log-log fit
    pub residual: f64,
    pub pass: bool,
}

fn fit_order(label: &str, xs: &[f64], ys: &[f64], target: f64) -> Result<OrderFit> {
    let LogLogFit { slope, intercept, rms_residual } = log_log_fit(xs, ys)?;
    Ok(OrderFit {
        label: label.into(),
        order: slope,
        intercept,
        residual: rms_residual,
        pass: slope >= target && rms_residual < 0.2,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPointResult {
    pub param: f64,
    pub h: f64,
    pub dofs: usize,
    pub eigenvalues: Vec<f64>,
    pub errors: Vec<f64>,
    /// field-norm distance between the lifted graph ground state and the
    /// discrete eigenvector
    pub vector_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub parameter: &'static str,
    pub n: usize,
    pub q: f64,
    /// limit eigenvalues from the secular solver, multiplicity-expanded
    pub reference: Vec<f64>,
    pub reference_clusters: Vec<(f64, usize)>,
    pub points: Vec<GridPointResult>,
    pub fits: Vec<OrderFit>,
    pub order_target: f64,
    pub monotone_ok: bool,
    pub defect_decreasing: bool,
    pub multiplicity_ok: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub flattened: Vec<f64>,
    pub solver: crate::spectra::SolverKind,
    pub model: crate::spectra::ModelKind,
    /// worst vertex-condition defect across eigenfunctions, where closed
    /// forms exist
    pub residuals: Option<f64>,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dofs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

fn truncate_clusters(res: &SpectralResult, count: usize) -> (Vec<f64>, Vec<usize>) {
    let mut vals = Vec::new();
    let mut mults = Vec::new();
    let mut total = 0usize;
    for (&v, &m) in res.eigenvalues.iter().zip(&res.multiplicities) {
        if total >= count {
            break;
        }
        let take = m.min(count - total);
        vals.push(v);
        mults.push(take);
        total += take;
    }
    (vals, mults)
}

fn spectrum_report(res: &SpectralResult, count: usize) -> SpectrumReport {
    let (eigenvalues, multiplicities) = truncate_clusters(res, count);
    let mut flattened = res.flattened();
    flattened.truncate(count);
    SpectrumReport {
        eigenvalues,
        multiplicities,
        flattened,
        solver: res.solver,
        model: res.model,
        residuals: res.max_vertex_residual,
        count,
        dofs: None,
        h: None,
    }
}

fn spectrum_csv(rep: &SpectrumReport) -> String {
    let mut out = String::from("index,eigenvalue,cluster_multiplicity\n");
    let mut idx = 0usize;
    for (&v, &m) in rep.eigenvalues.iter().zip(&rep.multiplicities) {
        for _ in 0..m {
            out.push_str(&format!("{idx},{v:.12e},{m}\n"));
            idx += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// plotting

pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub slope: Option<f64>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Hand-rolled log-log scatter with per-series fit lines and slope labels.
/// Returns None when no series has positive data.
pub fn loglog_svg(title: &str, x_label: &str, y_label: &str, series: &[PlotSeries]) -> Option<String> {
    type Pts = Vec<(f64, f64)>;
    let clean: Vec<(usize, &PlotSeries, Pts)> = series
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let pts: Vec<(f64, f64)> =
                s.points.iter().copied().filter(|&(x, y)| x > 0.0 && y > 0.0).collect();
            if pts.len() >= 2 {
                Some((i, s, pts))
            } else {
                None
            }
        })
        .collect();
    if clean.is_empty() {
        return None;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, _, pts) in &clean {
        for &(x, y) in pts {
            x0 = x0.min(x.log10());
            x1 = x1.max(x.log10());
            y0 = y0.min(y.log10());
            y1 = y1.max(y.log10());
        }
    }
    let pad = |lo: &mut f64, hi: &mut f64| {
        let span = (*hi - *lo).max(0.2);
        *lo -= 0.08 * span;
        *hi += 0.08 * span;
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);

    let (w, h) = (720.0, 480.0);
    let (l, r, t, b) = (80.0, 690.0, 46.0, 420.0);
    let sx = |x: f64| l + (x - x0) / (x1 - x0) * (r - l);
    let sy = |y: f64| b - (y - y0) / (y1 - y0) * (b - t);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"monospace\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        (l + r) / 2.0,
        title
    ));
    svg.push_str(&format!(
        "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        r - l,
        b - t
    ));
    // decade grid lines with labels
    let mut dec = y0.ceil() as i64;
    while (dec as f64) < y1 {
        let yy = sy(dec as f64);
        svg.push_str(&format!(
            "<line x1=\"{l}\" y1=\"{yy:.1}\" x2=\"{r}\" y2=\"{yy:.1}\" stroke=\"#ddd\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{dec}</text>\n",
            l - 8.0,
            yy + 4.0
        ));
        dec += 1;
    }
    // x ticks at the sweep values of the first series
    for &(x, _) in &clean[0].2 {
        let xx = sx(x.log10());
        svg.push_str(&format!(
            "<line x1=\"{xx:.1}\" y1=\"{b}\" x2=\"{xx:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\n",
            b + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{xx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x}</text>\n",
            b + 20.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        (l + r) / 2.0,
        b + 40.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{:.1}\" transform=\"rotate(-90 20 {:.1})\" text-anchor=\"middle\">{}</text>\n",
        (t + b) / 2.0,
        (t + b) / 2.0,
        y_label
    ));

    for (row, (i, s, pts)) in clean.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let poly: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x.log10()), sy(y.log10())))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-dasharray=\"3 3\"/>\n",
            poly.join(" ")
        ));
        for &(x, y) in pts {
            svg.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{color}\"/>\n",
                sx(x.log10()),
                sy(y.log10())
            ));
        }
        let label = match s.slope {
            Some(sl) => format!("{} slope {:.3}", s.label, sl),
            None => s.label.clone(),
        };
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>\n",
            l + 12.0,
            t + 18.0 + 16.0 * row as f64,
            label
        ));
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

// ---------------------------------------------------------------------------
// output plumbing

#[derive(Debug)]
pub struct RunSummary {
    pub pass: bool,
    pub report_path: PathBuf,
    pub files: Vec<PathBuf>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Write `report.json` plus the named CSV tables and SVG plots. Every CSV
/// starts with the versioned marker line; an empty table still gets its
/// marker and header.
pub fn emit_outputs(
    dir: &Path,
    envelope: &serde_json::Value,
    tables: &[(String, String)],
    plots: &[(String, String)],
) -> Result<RunSummary> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let report_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(envelope)?;
    json.push('\n');
    write_file(&report_path, &json)?;
    let mut files = vec![report_path.clone()];
    for (name, content) in tables {
        let path = dir.join(format!("{name}.csv"));
        let tagged = format!("# graphtube csv {CSV_VERSION} table={name}\n{content}");
        write_file(&path, &tagged)?;
        files.push(path);
    }
    for (name, content) in plots {
        let path = dir.join(format!("{name}.svg"));
        write_file(&path, content)?;
        files.push(path);
    }
    let pass = envelope
        .get("pass")
        .and_then(|v| v.as_bool())
        .ok_or_else(|| Error::Invalid("report envelope lost its pass flag".into()))?;
    Ok(RunSummary { pass, report_path, files })
}

fn envelope<T: Serialize>(
    cfg: &ExperimentConfig,
    pass: bool,
    notes: &[String],
    report: &T,
) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "version": REPORT_VERSION,
        "experiment": cfg.experiment,
        "pass": pass,
        "notes": notes,
        "config": cfg,
        "report": serde_json::to_value(report)?,
    }))
}

// ---------------------------------------------------------------------------
// runners

fn graph_k_max(count: usize) -> f64 {
    PI * (count as f64 + 2.0)
}

fn run_graph_spectrum(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let doc = cfg.graph.as_ref().expect("validated");
    let graph = StarGraph::from_json(&serde_json::to_string(doc)?)?;
    let k_max = graph_k_max(cfg.count);
    let res = match graph.coupling() {
        Coupling::Delta { q } if graph.is_unit() => star_delta_spectrum(q, graph.n(), k_max)?,
        Coupling::Delta { .. } => star_delta_spectrum_weighted(&graph, k_max)?,
        Coupling::DeltaPrimeS { beta } => star_deltaprime_spectrum(beta, graph.n(), k_max)?,
    };
    let rep = spectrum_report(&res, cfg.count);
    let notes = vec![];
    let env = envelope(cfg, true, &notes, &rep)?;
    emit_outputs(dir, &env, &[("spectrum".into(), spectrum_csv(&rep))], &[])
}

fn run_manifold_spectrum(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let eps = cfg.eps.expect("validated");
    let h = cfg.h_rule.h(eps);
    let spec = FatGraphSpec::unit(cfg.n, eps)?;
    let mesh = build_mesh(&spec, h, &[])?;
    let sys = assemble(&mesh, &PotentialSpec::delta_strength(cfg.q, mesh.vol_vertex(), eps))?;
    let res = eigensolve(&sys, cfg.count, -1.0)?;
    let mut rep = spectrum_report(&res, cfg.count);
    rep.dofs = Some(mesh.node_count());
    rep.h = Some(h);
    let env = envelope(cfg, true, &[], &rep)?;
    let tables = [("spectrum".to_string(), spectrum_csv(&rep))];
    let summary = emit_outputs(dir, &env, &tables, &[])?;
    // side exports: the mesh in plain text and the assembled matrices in
    // coordinate form
    let mut files = summary.files;
    for (name, content) in [
        ("mesh.txt".to_string(), export_text(&mesh)),
        ("operator.mtx".to_string(), export_matrix(&sys.operator(), "operator")),
        ("mass.mtx".to_string(), export_matrix(sys.mass(), "mass")),
    ] {
        let path = dir.join(name);
        write_file(&path, &content)?;
        files.push(path);
    }
    Ok(RunSummary { files, ..summary })
}

/// Lowest eigenpair of the unit delta star: the eigenvalue and the sampled,
/// discretely normalized eigenfunction. The ground state is radial: cosh for
/// a bound state, constant at zero, cosine above.
fn delta_ground(graph: &StarGraph, h: f64) -> Result<(f64, GraphFunction)> {
    let Coupling::Delta { q } = graph.coupling() else {
        return Err(Error::Invalid("ground-state sampling expects a delta vertex".into()));
    };
    if !graph.is_unit() {
        return Err(Error::Invalid("ground-state sampling expects a unit star".into()));
    }
    let spec = star_delta_spectrum(q, graph.n(), 8.0)?;
    let lam = spec.flattened()[0];
    let shape = move |s: f64| -> f64 {
        if lam < -1e-12 {
            let kap = (-lam).sqrt();
            (kap * (1.0 - s)).cosh()
        } else if lam <= 1e-12 {
            1.0
        } else {
            let k = lam.sqrt();
            (k * (1.0 - s)).cos()
        }
    };
    let raw = GraphFunction::from_fn(graph, h, |_e, s| shape(s))?;
    let c = 1.0 / raw.norm_sq().sqrt();
    let vals = raw.values().iter().map(|v| v.iter().map(|x| x * c).collect()).collect();
    Ok((lam, GraphFunction::from_values(vals, raw.steps().to_vec())?))
}

fn vector_defect(coupler: &Coupler, phi: &GraphFunction, fem_vec: &[f64]) -> Result<f64> {
    let jphi = coupler.apply_j(phi)?;
    let mut uf = coupler.to_field(fem_vec);
    if coupler.field_dot(&jphi, &uf) < 0.0 {
        uf = uf.map(|v| -v);
    }
    Ok(coupler.field_norm_sq(&jphi.sub(&uf)).sqrt())
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn clusters_preserved(reference: &SpectralResult, fem_flat: &[f64], count: usize) -> bool {
    let mut idx = 0usize;
    for (&val, &m) in reference.eigenvalues.iter().zip(&reference.multiplicities) {
        if idx + m > count.min(fem_flat.len()) {
            break;
        }
        if m >= 2 {
            let grp = &fem_flat[idx..idx + m];
            let lo = grp.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = grp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-6 * (1.0 + val.abs()) {
                return false;
            }
        }
        idx += m;
    }
    true
}

fn run_converge_delta(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let graph = StarGraph::unit_star(cfg.n, Coupling::Delta { q: cfg.q });
    let reference_full = star_delta_spectrum(cfg.q, cfg.n, graph_k_max(cfg.count))?;
    let mut reference = reference_full.flattened();
    reference.truncate(cfg.count);
    if reference.len() < cfg.count {
        return Err(Error::Invalid(format!(
            "reference spectrum has only {} eigenvalues below the scan ceiling",
            reference.len()
        )));
    }

    let points: Vec<GridPointResult> = cfg
        .eps_grid
        .par_iter()
        .map(|&eps| -> Result<GridPointResult> {
            let h = cfg.h_rule.h(eps);
            let spec = FatGraphSpec::unit(cfg.n, eps)?;
            let mesh = build_mesh(&spec, h, &[])?;
            let sys = assemble(&mesh, &PotentialSpec::delta_strength(cfg.q, mesh.vol_vertex(), eps))?;
            let shift = reference[0].min(0.0) - 1.0;
            let res = eigensolve(&sys, cfg.count + 1, shift)
                .map_err(|e| Error::Eigensolve(format!("eps = {eps}: {e}")))?;
            let flat = res.flattened();
            let errors: Vec<f64> =
                (0..cfg.count).map(|i| (flat[i] - reference[i]).abs()).collect();
            let coupler = Coupler::new(&graph, &mesh)?;
            let (_, phi) = delta_ground(&graph, h)?;
            let vecs = res
                .eigenvectors
                .as_ref()
                .ok_or_else(|| Error::Eigensolve(format!("eps = {eps}: no eigenvectors")))?;
            let defect = vector_defect(&coupler, &phi, &vecs[0])?;
            Ok(GridPointResult {
                param: eps,
                h,
                dofs: mesh.node_count(),
                eigenvalues: flat[..cfg.count].to_vec(),
                errors,
                vector_defect: defect,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // fit orders for eigenvalues the discretization does not resolve exactly
    let mut fits = Vec::new();
    let mut monotone_ok = true;
    for i in 0..cfg.count {
        let errs: Vec<f64> = points.iter().map(|p| p.errors[i]).collect();
        if errs.iter().any(|&e| e <= 1e-9) {
            continue;
        }
        monotone_ok &= strictly_decreasing(&errs);
        fits.push(fit_order(&format!("ev{}", i + 1), &cfg.eps_grid, &errs, 0.5)?);
    }
    let defects: Vec<f64> = points.iter().map(|p| p.vector_defect).collect();
    let defect_decreasing = strictly_decreasing(&defects);
    let multiplicity_ok = points.iter().all(|p| {
        let full: Vec<f64> = p.eigenvalues.clone();
        clusters_preserved(&reference_full, &full, cfg.count)
    });
    let pass =
        monotone_ok && defect_decreasing && multiplicity_ok && fits.iter().all(|f| f.pass);

    let (ref_vals, ref_mults) = truncate_clusters(&reference_full, cfg.count);
    let report = ConvergenceReport {
        parameter: "eps",
        n: cfg.n,
        q: cfg.q,
        reference: reference.clone(),
        reference_clusters: ref_vals.into_iter().zip(ref_mults).collect(),
        points,
        fits,
        order_target: 0.5,
        monotone_ok,
        defect_decreasing,
        multiplicity_ok,
        pass,
        notes: vec![],
    };

    let mut errors_csv = String::from("param,h,index,value,reference,error\n");
    for p in &report.points {
        for (i, ((v, r), e)) in p.eigenvalues.iter().zip(&reference).zip(&p.errors).enumerate() {
            errors_csv.push_str(&format!(
                "{},{},{},{v:.12e},{r:.12e},{e:.12e}\n",
                p.param, p.h, i
            ));
        }
    }
    let mut defect_csv = String::from("param,vector_defect\n");
    for p in &report.points {
        defect_csv.push_str(&format!("{},{:.12e}\n", p.param, p.vector_defect));
    }

    let mut series: Vec<PlotSeries> = Vec::new();
    for f in &report.fits {
        let idx: usize = f.label[2..].parse::<usize>().unwrap() - 1;
        series.push(PlotSeries {
            label: f.label.clone(),
            points: report.points.iter().map(|p| (p.param, p.errors[idx])).collect(),
            slope: Some(f.order),
        });
    }
    let plots: Vec<(String, String)> = loglog_svg(
        "eigenvalue error vs tube width",
        "eps",
        "absolute error",
        &series,
    )
    .map(|svg| ("errors".to_string(), svg))
    .into_iter()
    .collect();

    let env = envelope(cfg, pass, &report.notes, &report)?;
    emit_outputs(
        dir,
        &env,
        &[("errors".into(), errors_csv), ("vector_defect".into(), defect_csv)],
        &plots,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct DpGraphPoint {
    pub a: f64,
    pub kappa: Option<f64>,
    pub kappa_error: Option<f64>,
    pub positives: Vec<f64>,
    pub positive_errors: Vec<f64>,
    /// finite-dimensional resolvent-difference surrogate at z = i
    pub resolvent_gap: f64,
    pub lambda_min: f64,
    pub rayleigh_bound: f64,
    pub rayleigh_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaPrimeGraphReport {
    pub beta: f64,
    pub n: usize,
    pub kappa_ref: Option<f64>,
    pub positive_reference: Vec<f64>,
    pub points: Vec<DpGraphPoint>,
    pub kappa_fit: Option<OrderFit>,
    pub positive_fits: Vec<OrderFit>,
    pub order_target: f64,
    pub resolvent_decreasing: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

const POSITIVE_TRACKED: usize = 3;

fn run_converge_deltaprime_graph(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let beta = cfg.beta;
    let n = cfg.n;
    let k_max = graph_k_max(cfg.count.max(POSITIVE_TRACKED));
    let reference = star_deltaprime_spectrum(beta, n, k_max)?;
    let kappa_ref = solve_kappa_beta(beta, n)?;
    let positive_reference: Vec<f64> = reference
        .flattened()
        .into_iter()
        .filter(|&v| v > 1e-9)
        .take(POSITIVE_TRACKED)
        .collect();

    let points: Vec<DpGraphPoint> = cfg
        .a_grid
        .par_iter()
        .map(|&a| -> Result<DpGraphPoint> {
            let kappa = radial_negative_root(beta, a, n)?;
            let spec = intermediate_spectrum_raw(beta, a, n, k_max)
                .map_err(|e| Error::Eigensolve(format!("a = {a}: {e}")))?;
            let flat = spec.flattened();
            let positives: Vec<f64> =
                flat.iter().copied().filter(|&v| v > 1e-9).take(POSITIVE_TRACKED).collect();
            if positives.len() < positive_reference.len() {
                return Err(Error::Eigensolve(format!(
                    "a = {a}: found only {} positive eigenvalues",
                    positives.len()
                )));
            }
            let positive_errors = positives
                .iter()
                .zip(&positive_reference)
                .map(|(v, r)| (v - r).abs())
                .collect();
            let resolvent_gap = deltaprime_resolvent_gap(beta, a, n, 0.005)?;
            let lambda_min = flat[0];
            let rayleigh_bound = rayleigh_quotient_of_ones(beta, a, n)?;
            Ok(DpGraphPoint {
                a,
                kappa,
                kappa_error: kappa.zip(kappa_ref).map(|(ka, kr)| (ka - kr).abs()),
                positives,
                positive_errors,
                resolvent_gap,
                lambda_min,
                rayleigh_ok: lambda_min <= rayleigh_bound + 1e-9 * (1.0 + rayleigh_bound.abs()),
                rayleigh_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let target = 0.9;
    let kappa_fit = if points.iter().all(|p| p.kappa_error.is_some()) {
        let errs: Vec<f64> = points.iter().map(|p| p.kappa_error.unwrap()).collect();
        Some(fit_order("kappa", &cfg.a_grid, &errs, target)?)
    } else {
        None
    };
    let mut positive_fits = Vec::new();
    for i in 0..positive_reference.len() {
        let errs: Vec<f64> = points.iter().map(|p| p.positive_errors[i]).collect();
        if errs.iter().any(|&e| e <= 1e-12) {
            continue;
        }
        positive_fits.push(fit_order(&format!("ev{}", i + 1), &cfg.a_grid, &errs, target)?);
    }
    let gaps: Vec<f64> = points.iter().map(|p| p.resolvent_gap).collect();
    let resolvent_decreasing = strictly_decreasing(&gaps);
    let rayleigh_all = points.iter().all(|p| p.rayleigh_ok);
    let pass = kappa_fit.as_ref().is_none_or(|f| f.pass)
        && positive_fits.iter().all(|f| f.pass)
        && rayleigh_all;

    let notes = vec![
        "limit convention: the satellite spacing drives the approximation as a -> 0; \
         orders are fitted against a"
            .to_string(),
    ];
    let report = DeltaPrimeGraphReport {
        beta,
        n,
        kappa_ref,
        positive_reference: positive_reference.clone(),
        points,
        kappa_fit,
        positive_fits,
        order_target: target,
        resolvent_decreasing,
        pass,
        notes,
    };

    let mut kappa_csv = String::from("a,kappa,reference,error\n");
    let mut pos_csv = String::from("a,index,value,reference,error\n");
    let mut res_csv = String::from("a,resolvent_gap,lambda_min,rayleigh_bound\n");
    for p in &report.points {
        if let (Some(k), Some(e), Some(kr)) = (p.kappa, p.kappa_error, report.kappa_ref) {
            kappa_csv.push_str(&format!("{},{k:.12e},{kr:.12e},{e:.12e}\n", p.a));
        }
        for (i, (v, e)) in p.positives.iter().zip(&p.positive_errors).enumerate() {
            pos_csv.push_str(&format!(
                "{},{},{v:.12e},{:.12e},{e:.12e}\n",
                p.a, i, positive_reference[i]
            ));
        }
        res_csv.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e}\n",
            p.a, p.resolvent_gap, p.lambda_min, p.rayleigh_bound
        ));
    }

    let mut series = Vec::new();
    if let Some(f) = &report.kappa_fit {
        series.push(PlotSeries {
            label: "kappa".into(),
            points: report.points.iter().map(|p| (p.a, p.kappa_error.unwrap())).collect(),
            slope: Some(f.order),
        });
    }
    for f in &report.positive_fits {
        let idx: usize = f.label[2..].parse::<usize>().unwrap() - 1;
        series.push(PlotSeries {
            label: f.label.clone(),
            points: report.points.iter().map(|p| (p.a, p.positive_errors[idx])).collect(),
            slope: Some(f.order),
        });
    }
    let plots: Vec<(String, String)> =
        loglog_svg("eigenvalue error vs satellite spacing", "a", "absolute error", &series)
            .map(|svg| ("errors".to_string(), svg))
            .into_iter()
            .collect();

    let env = envelope(cfg, pass, &report.notes, &report)?;
    emit_outputs(
        dir,
        &env,
        &[
            ("kappa".into(), kappa_csv),
            ("positives".into(), pos_csv),
            ("resolvent".into(), res_csv),
        ],
        &plots,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainPoint {
    pub eps: f64,
    pub a: f64,
    pub h: f64,
    pub h_satellite: f64,
    pub dofs: usize,
    pub eigenvalues: Vec<f64>,
    pub lambda_min: f64,
    /// error of the lowest eigenvalue against -kappa^2, for beta < 0
    pub lambda_min_error: Option<f64>,
    /// worst bidirectional relative mismatch between the spectra inside the
    /// window
    pub window_worst: Option<f64>,
    pub orders: ChainOrderReport,
    /// form and resolvent defects of identifying the stretched edge strips
    pub edge_rescale: (f64, f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub beta: f64,
    pub alpha: f64,
    pub window: (f64, f64),
    pub kappa_ref: Option<f64>,
    pub reference: Vec<f64>,
    pub points: Vec<ChainPoint>,
    pub trend_ok: bool,
    /// asserted only for beta > 0, where the window comparison is the claim
    pub window_ok: Option<bool>,
    pub pass: bool,
    pub notes: Vec<String>,
}

fn window_mismatch(reference: &[f64], observed: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let refs: Vec<f64> = reference.iter().copied().filter(|&v| v >= lo && v <= hi).collect();
    let obs: Vec<f64> = observed.iter().copied().filter(|&v| v >= lo && v <= hi).collect();
    if refs.is_empty() && obs.is_empty() {
        return None;
    }
    let nearest = |v: f64, pool: &[f64]| -> f64 {
        pool.iter().map(|&p| (v - p).abs()).fold(f64::INFINITY, f64::min)
    };
    let mut worst = 0.0f64;
    for &r in &refs {
        let d = if obs.is_empty() { f64::INFINITY } else { nearest(r, &obs) };
        worst = worst.max(d / r.abs());
    }
    for &o in &obs {
        let d = if refs.is_empty() { f64::INFINITY } else { nearest(o, &refs) };
        worst = worst.max(d / o.abs());
    }
    Some(worst)
}

fn run_converge_deltaprime_chain(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let beta = cfg.beta;
    let n = cfg.n;
    let k_max = cfg.window_hi.sqrt() + 2.0 * PI;
    let reference_full = star_deltaprime_spectrum(beta, n, k_max)?;
    let reference = reference_full.flattened();
    let kappa_ref = solve_kappa_beta(beta, n)?;

    let points: Vec<ChainPoint> = cfg
        .eps_grid
        .par_iter()
        .map(|&eps| -> Result<ChainPoint> {
            let a = eps.powf(cfg.alpha);
            let h = cfg.h_rule.h(eps);
            let h_sat = h.min(eps.powf(1.0 + cfg.alpha) / 4.0);
            let sats: Vec<Satellite> =
                (0..n).map(|edge| Satellite { edge, a, h: h_sat }).collect();
            let spec = FatGraphSpec::unit(n, eps)?;
            let mesh = build_mesh(&spec, h, &sats)?;
            let sys = assemble(&mesh, &PotentialSpec::chain(beta, cfg.alpha, mesh.vol_vertex(), eps))?;
            let res = eigensolve(&sys, cfg.count, -1.0)
                .map_err(|e| Error::Eigensolve(format!("eps = {eps}: {e}")))?;
            let flat = res.flattened();
            let lambda_min = flat[0];
            let lambda_min_error = kappa_ref.map(|k| (lambda_min - (-k * k)).abs());
            let window_worst = window_mismatch(&reference, &flat, cfg.window_lo, cfg.window_hi);
            Ok(ChainPoint {
                eps,
                a,
                h,
                h_satellite: h_sat,
                dofs: mesh.node_count(),
                eigenvalues: flat,
                lambda_min,
                lambda_min_error,
                window_worst,
                orders: deltaprime_orders(beta, cfg.alpha, eps)?,
                edge_rescale: edge_rescale_bound(eps)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let trend_ok = if beta < 0.0 {
        let errs: Vec<f64> = points.iter().filter_map(|p| p.lambda_min_error).collect();
        errs.len() == points.len() && strictly_decreasing(&errs)
    } else {
        let mins: Vec<f64> = points.iter().map(|p| p.lambda_min).collect();
        strictly_decreasing(&mins)
    };
    let window_ok = if beta > 0.0 {
        Some(points.iter().all(|p| p.window_worst.is_some_and(|w| w <= 0.10)))
    } else {
        None
    };
    let pass = trend_ok && window_ok.unwrap_or(true);

    let exponent = (1.0 - 13.0 * cfg.alpha) / 2.0;
    let notes = vec![
        format!(
            "the predicted spectral-error scale eps^{exponent:.4} decays too slowly at these \
             widths for a meaningful rate fit; this sweep certifies the error trend instead"
        ),
        "reference eigenvalues come from the secular solver, never from extrapolated \
         field computations"
            .to_string(),
    ];
    let report = ChainReport {
        beta,
        alpha: cfg.alpha,
        window: (cfg.window_lo, cfg.window_hi),
        kappa_ref,
        reference: reference.clone(),
        points,
        trend_ok,
        window_ok,
        pass,
        notes,
    };

    let mut points_csv = String::from(
        "eps,a,h,h_satellite,dofs,lambda_min,lambda_min_error,window_worst\n",
    );
    let mut ev_csv = String::from("eps,index,value\n");
    for p in &report.points {
        points_csv.push_str(&format!(
            "{},{:.12e},{},{:.6e},{},{:.12e},{},{}\n",
            p.eps,
            p.a,
            p.h,
            p.h_satellite,
            p.dofs,
            p.lambda_min,
            p.lambda_min_error.map_or("".into(), |v| format!("{v:.12e}")),
            p.window_worst.map_or("".into(), |v| format!("{v:.12e}")),
        ));
        for (i, v) in p.eigenvalues.iter().enumerate() {
            ev_csv.push_str(&format!("{},{},{v:.12e}\n", p.eps, i));
        }
    }

    let series = if beta < 0.0 {
        vec![PlotSeries {
            label: "ground error".into(),
            points: report
                .points
                .iter()
                .filter_map(|p| p.lambda_min_error.map(|e| (p.eps, e)))
                .collect(),
            slope: None,
        }]
    } else {
        vec![PlotSeries {
            label: "|lambda_min|".into(),
            points: report.points.iter().map(|p| (p.eps, p.lambda_min.abs())).collect(),
            slope: None,
        }]
    };
    let plots: Vec<(String, String)> =
        loglog_svg("chain ground behavior vs tube width", "eps", "value", &series)
            .map(|svg| ("trend".to_string(), svg))
            .into_iter()
            .collect();

    let env = envelope(cfg, pass, &report.notes, &report)?;
    emit_outputs(
        dir,
        &env,
        &[("points".into(), points_csv), ("eigenvalues".into(), ev_csv)],
        &plots,
    )
}

fn run_closeness_suite(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let params = SuiteParams {
        n: cfg.n,
        eps: cfg.eps.expect("validated"),
        q: cfg.q,
        h: cfg.h_rule.h(cfg.eps.expect("validated")),
        samples: cfg.samples,
        seed: cfg.seed,
        tol_disc: cfg.tol_disc,
        lambda2_vertex: cfg.lambda2_vertex,
    };
    let report = run_closeness(&params)?;
    let pass = report.pass;
    let env = envelope(cfg, pass, &[], &report)?;
    emit_outputs(dir, &env, &[("ratios".into(), closeness_csv(&report))], &[])
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantsReport {
    pub trials: usize,
    pub ordering_violations: usize,
    /// smallest observed gap c_tilde_half - c_half_bound
    pub worst_margin: f64,
    /// largest relative deviation of the defect terms from the reassociated
    /// literal evaluation
    pub worst_term_deviation: f64,
    pub max_term_consistent: bool,
    pub exponent_exact: bool,
    /// defect terms of the fixed reference inputs
    pub frozen_terms: [f64; 5],
    pub pass: bool,
}

fn run_constants(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut violations = 0usize;
    let mut worst_margin = f64::INFINITY;
    let mut worst_dev = 0.0f64;
    let mut max_consistent = true;
    let mut exponent_exact = true;

    for _ in 0..cfg.trials {
        let q_sup = rng.gen_range(0.0..5.0);
        let l_minus = rng.gen_range(0.3..2.0);
        let lambda2_vertex = rng.gen_range(1.0..20.0);
        let lambda2_edge = rng.gen_range(1.0..100.0);
        let c_vol = rng.gen_range(0.1..1.0);
        let weight_norm_sq = rng.gen_range(0.5..5.0);
        let q_vertex = rng.gen_range(-1.0..1.0) * q_sup * c_vol * weight_norm_sq;
        let eps = rng.gen_range(0.01..0.5);
        let inputs = BoundInputs {
            q_sup,
            l_minus,
            lambda2_vertex,
            lambda2_edge,
            c_vol,
            weight_norm_sq,
            q_vertex,
            eps,
        };
        let rep = compute_bounds(&inputs, 0.5)?;

        let margin = rep.c_tilde_half - rep.c_half_bound;
        if margin < -1e-12 * (1.0 + rep.c_tilde_half.abs()) {
            violations += 1;
        }
        worst_margin = worst_margin.min(margin);

        // literal re-evaluation with the algebra deliberately reassociated
        let l0 = l_minus.min(1.0);
        let trace = 1.0 + 2.0 / (l0 * lambda2_vertex);
        let hand = [
            (8.0 * eps) * (c_vol / l0),
            (eps / lambda2_edge) * eps,
            4.0 * eps * eps / lambda2_vertex + (4.0 * eps * eps * c_vol) * trace,
            (2.0 * eps * trace) / l0,
            ((4.0 * eps * c_vol) / (l0 * lambda2_vertex)) * (q_sup * q_sup),
        ];
        for (got, want) in rep.delta_eps_sq_terms.iter().zip(&hand) {
            let dev = (got - want).abs() / want.abs().max(1e-300);
            worst_dev = worst_dev.max(dev);
        }
        let hand_max = hand.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if (rep.delta_eps * rep.delta_eps - hand_max).abs() > 1e-14 * hand_max {
            max_consistent = false;
        }

        let alpha = rng.gen_range(0.005..(1.0 / 13.0 - 1e-9));
        let beta = rng.gen_range(-2.0..2.0);
        let orders = deltaprime_orders(beta, alpha, eps)?;
        exponent_exact &= orders.exponent_product == (1.0 - 13.0 * alpha) / 2.0;
    }

    let pi2 = PI * PI;
    let frozen_inputs = BoundInputs {
        q_sup: 1.0,
        l_minus: 1.0,
        lambda2_vertex: pi2,
        lambda2_edge: pi2,
        c_vol: 0.25,
        weight_norm_sq: 4.0,
        q_vertex: -1.0,
        eps: 0.1,
    };
    let frozen = compute_bounds(&frozen_inputs, 0.5)?;

    let pass = violations == 0 && worst_dev <= 1e-14 && max_consistent && exponent_exact;
    let report = ConstantsReport {
        trials: cfg.trials,
        ordering_violations: violations,
        worst_margin,
        worst_term_deviation: worst_dev,
        max_term_consistent: max_consistent,
        exponent_exact,
        frozen_terms: frozen.delta_eps_sq_terms,
        pass,
    };
    let mut terms_csv = String::from("term,value\n");
    for (i, t) in report.frozen_terms.iter().enumerate() {
        terms_csv.push_str(&format!("{i},{t:.17e}\n"));
    }
    let env = envelope(cfg, pass, &[], &report)?;
    emit_outputs(dir, &env, &[("delta_terms".into(), terms_csv)], &[])
}

#[derive(Clone, Debug, Serialize)]
pub struct NorootReport {
    pub a_points: usize,
    pub kappa_points: usize,
    pub kappa_max: f64,
    /// sign of the secular expression over the whole grid
    pub sign: i8,
    pub min_abs: f64,
    pub min_at: (f64, f64),
    pub sign_changes: usize,
    pub pass: bool,
}

fn run_noroot_scan(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    // the multiplicity-(n-1) negative branch of the interpolating operator
    let g = |a: f64, kap: f64| -> f64 {
        (kap * a).sinh() * (kap * (1.0 - a)).cosh() - kap * a * kap.cosh()
    };
    let rows: Vec<(usize, usize, f64, f64, f64)> = (1..=cfg.a_points)
        .into_par_iter()
        .map(|i| {
            let a = i as f64 / cfg.a_points as f64;
            let mut min_abs = f64::INFINITY;
            let mut min_kap = 0.0;
            let mut pos = 0usize;
            let mut neg = 0usize;
            for j in 1..=cfg.kappa_points {
                let kap = cfg.kappa_max * j as f64 / cfg.kappa_points as f64;
                let v = g(a, kap);
                if v > 0.0 {
                    pos += 1;
                } else if v < 0.0 {
                    neg += 1;
                }
                if v.abs() < min_abs {
                    min_abs = v.abs();
                    min_kap = kap;
                }
            }
            (pos, neg, a, min_kap, min_abs)
        })
        .collect();

    let pos: usize = rows.iter().map(|r| r.0).sum();
    let neg: usize = rows.iter().map(|r| r.1).sum();
    let zeros = cfg.a_points * cfg.kappa_points - pos - neg;
    let &(_, _, min_a, min_kap, min_abs) = rows
        .iter()
        .min_by(|x, y| x.4.partial_cmp(&y.4).unwrap())
        .expect("nonempty grid");
    let sign: i8 = if neg > pos { -1 } else { 1 };
    let sign_changes = pos.min(neg) + zeros;
    let pass = sign_changes == 0;
    let report = NorootReport {
        a_points: cfg.a_points,
        kappa_points: cfg.kappa_points,
        kappa_max: cfg.kappa_max,
        sign,
        min_abs,
        min_at: (min_a, min_kap),
        sign_changes,
        pass,
    };
    let mut csv = String::from(
        "a_points,kappa_points,kappa_max,sign,min_abs,min_a,min_kappa,sign_changes\n",
    );
    csv.push_str(&format!(
        "{},{},{},{},{:.12e},{},{},{}\n",
        report.a_points,
        report.kappa_points,
        report.kappa_max,
        report.sign,
        report.min_abs,
        report.min_at.0,
        report.min_at.1,
        report.sign_changes
    ));
    let env = envelope(cfg, pass, &[], &report)?;
    emit_outputs(dir, &env, &[("scan".into(), csv)], &[])
}

#[derive(Clone, Debug, Serialize)]
pub struct FemValidationReport {
    pub h: f64,
    pub dofs: usize,
    pub eigenvalues: Vec<f64>,
    pub reference: Vec<f64>,
    /// relative errors; the zero mode is compared absolutely
    pub errors: Vec<f64>,
    pub worst: f64,
    pub pass: bool,
}

fn run_validate_fem(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let h = match cfg.h_rule {
        HRule::Fixed { h } => h,
        HRule::EpsOver { .. } => 0.0125,
    };
    let nx = (1.0 / h).round().max(4.0) as usize;
    let ny = (0.1 / h).round().max(2.0) as usize;
    let mesh = rectangle_mesh(1.0, 0.1, nx, ny)?;
    let sys = assemble(&mesh, &PotentialSpec::zero())?;
    let res = eigensolve(&sys, 5, -1.0)?;
    let flat = res.flattened();
    let pi2 = PI * PI;
    let reference = vec![0.0, pi2, 4.0 * pi2, 9.0 * pi2, 16.0 * pi2];
    let errors: Vec<f64> = flat
        .iter()
        .zip(&reference)
        .map(|(v, r)| if *r == 0.0 { v.abs() } else { (v - r).abs() / r })
        .collect();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    let pass = errors[0] <= 1e-8 && errors[1..].iter().all(|&e| e <= 0.005);
    let report = FemValidationReport {
        h,
        dofs: mesh.node_count(),
        eigenvalues: flat,
        reference: reference.clone(),
        errors,
        worst,
        pass,
    };
    let mut csv = String::from("index,value,reference,error\n");
    for (i, ((v, r), e)) in report
        .eigenvalues
        .iter()
        .zip(&report.reference)
        .zip(&report.errors)
        .enumerate()
    {
        csv.push_str(&format!("{i},{v:.12e},{r:.12e},{e:.12e}\n"));
    }
    let env = envelope(cfg, pass, &[], &report)?;
    emit_outputs(dir, &env, &[("spectrum".into(), csv)], &[])
}

/// Validate the config, run the experiment, and persist its outputs.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::GraphSpectrum => run_graph_spectrum(cfg, out_dir),
        ExperimentKind::ManifoldSpectrum => run_manifold_spectrum(cfg, out_dir),
        ExperimentKind::ConvergeDelta => run_converge_delta(cfg, out_dir),
        ExperimentKind::ConvergeDeltaprimeGraph => run_converge_deltaprime_graph(cfg, out_dir),
        ExperimentKind::ConvergeDeltaprimeChain => run_converge_deltaprime_chain(cfg, out_dir),
        ExperimentKind::ClosenessSuite => run_closeness_suite(cfg, out_dir),
        ExperimentKind::Constants => run_constants(cfg, out_dir),
        ExperimentKind::NorootScan => run_noroot_scan(cfg, out_dir),
        ExperimentKind::ValidateFem => run_validate_fem(cfg, out_dir),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch(tag: &str) -> PathBuf {
        let p = std::env::temp_dir().join(format!("graphtube-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        p
    }

    fn base(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            experiment: kind,
            n: 3,
            q: 0.0,
            beta: 0.0,
            alpha: 0.05,
            eps: None,
            eps_grid: vec![],
            a_grid: vec![],
            h_rule: HRule::EpsOver { factor: 8.0 },
            count: 4,
            seed: 7,
            graph: None,
            samples: 5,
            tol_disc: 0.1,
            lambda2_vertex: None,
            trials: 50,
            a_points: 50,
            kappa_points: 200,
            kappa_max: 50.0,
            window_lo: 0.5,
            window_hi: 12.0,
        }
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let mut cfg = base(ExperimentKind::ConvergeDelta);
        cfg.eps_grid = vec![0.1, 0.2, 0.05];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("strictly decreasing"), "{err}");

        cfg.eps_grid = vec![0.2, 0.1];
        assert!(cfg.validate().is_err(), "needs three widths");

        cfg.eps_grid = vec![0.2, 0.1, 0.05];
        cfg.h_rule = HRule::EpsOver { factor: 2.0 };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("eps/4"), "{err}");

        let mut chain = base(ExperimentKind::ConvergeDeltaprimeChain);
        chain.eps_grid = vec![0.3, 0.2];
        chain.alpha = 0.1;
        let err = chain.validate().unwrap_err().to_string();
        assert!(err.contains("1/13"), "{err}");

        chain.alpha = 0.05;
        chain.h_rule = HRule::Fixed { h: 0.0002 };
        let err = chain.validate().unwrap_err().to_string();
        assert!(err.contains("budget"), "{err}");

        let gs = base(ExperimentKind::GraphSpectrum);
        assert!(gs.validate().unwrap_err().to_string().contains("graph"));

        let mut parsed = ExperimentConfig::from_json(
            r#"{"experiment":"noroot-scan","a_points":10,"kappa_points":20}"#,
        )
        .unwrap();
        assert_eq!(parsed.experiment, ExperimentKind::NorootScan);
        parsed.kappa_max = -1.0;
        assert!(parsed.validate().is_err());

        assert!(ExperimentConfig::from_json(r#"{"experiment":"constants","bogus":1}"#).is_err());
    }

    #[test]
    fn graph_spectrum_runs_from_embedded_document() {
        let mut cfg = base(ExperimentKind::GraphSpectrum);
        cfg.count = 5;
        cfg.graph = Some(serde_json::json!({
            "edges": [
                {"length": 1.0, "weight": 1.0},
                {"length": 1.0, "weight": 1.0},
                {"length": 1.0, "weight": 1.0}
            ],
            "coupling": {"type": "kirchhoff"}
        }));
        let dir = scratch("graph-spectrum");
        let summary = run_experiment(&cfg, &dir).unwrap();
        assert!(summary.pass);
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&summary.report_path).unwrap()).unwrap();
        assert_eq!(doc["version"], "graphtube/1");
        let flat = doc["report"]["flattened"].as_array().unwrap();
        let quarter_pi2 = PI * PI / 4.0;
        assert!(flat[0].as_f64().unwrap().abs() < 1e-12);
        assert!((flat[1].as_f64().unwrap() - quarter_pi2).abs() < 1e-9);
        assert!((flat[2].as_f64().unwrap() - quarter_pi2).abs() < 1e-9);
        let csv = std::fs::read_to_string(dir.join("spectrum.csv")).unwrap();
        assert!(csv.starts_with("# graphtube csv v1 table=spectrum\n"));
        assert_eq!(csv.lines().count(), 2 + 5);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn noroot_scan_is_single_signed_and_deterministic() {
        let cfg = base(ExperimentKind::NorootScan);
        let dir_a = scratch("noroot-a");
        let dir_b = scratch("noroot-b");
        let sa = run_experiment(&cfg, &dir_a).unwrap();
        let sb = run_experiment(&cfg, &dir_b).unwrap();
        assert!(sa.pass && sb.pass);
        let ja = std::fs::read(&sa.report_path).unwrap();
        let jb = std::fs::read(&sb.report_path).unwrap();
        assert_eq!(ja, jb, "reruns must be byte-identical");
        let ca = std::fs::read(dir_a.join("scan.csv")).unwrap();
        let cb = std::fs::read(dir_b.join("scan.csv")).unwrap();
        assert_eq!(ca, cb);
        let doc: serde_json::Value = serde_json::from_slice(&ja).unwrap();
        assert_eq!(doc["report"]["sign"], -1);
        assert_eq!(doc["report"]["sign_changes"], 0);
        assert!(doc["report"]["min_abs"].as_f64().unwrap() > 0.0);
        let _ = std::fs::remove_dir_all(&dir_a);
        let _ = std::fs::remove_dir_all(&dir_b);
    }

    #[test]
    fn constants_sweep_passes_and_freezes_terms() {
        let cfg = base(ExperimentKind::Constants);
        let dir = scratch("constants");
        let summary = run_experiment(&cfg, &dir).unwrap();
        assert!(summary.pass);
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&summary.report_path).unwrap()).unwrap();
        let rep = &doc["report"];
        assert_eq!(rep["ordering_violations"], 0);
        assert_eq!(rep["exponent_exact"], true);
        assert!(rep["worst_term_deviation"].as_f64().unwrap() <= 1e-14);
        let terms: Vec<f64> = rep["frozen_terms"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        // square-template reference inputs at eps = 0.1
        for (got, want) in terms.iter().zip(&[
            0.2,
            0.0010132118364233778,
            0.016079271018540266,
            0.24052847345693512,
            0.010132118364233778,
        ]) {
            assert!((got - want).abs() <= 1e-15 * (1.0 + want), "{got} vs {want}");
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn fem_validation_matches_rectangle_modes() {
        let cfg = base(ExperimentKind::ValidateFem);
        let dir = scratch("validate-fem");
        let summary = run_experiment(&cfg, &dir).unwrap();
        assert!(summary.pass);
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&summary.report_path).unwrap()).unwrap();
        assert!(doc["report"]["worst"].as_f64().unwrap() <= 0.005);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn kirchhoff_width_sweep_converges_with_plots() {
        let mut cfg = base(ExperimentKind::ConvergeDelta);
        cfg.eps_grid = vec![0.2, 0.1, 0.05];
        cfg.count = 4;
        let dir = scratch("converge-delta");
        let summary = run_experiment(&cfg, &dir).unwrap();
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&summary.report_path).unwrap()).unwrap();
        let rep = &doc["report"];
        assert_eq!(rep["monotone_ok"], true);
        assert_eq!(rep["defect_decreasing"], true);
        assert_eq!(rep["multiplicity_ok"], true);
        for f in rep["fits"].as_array().unwrap() {
            assert!(f["order"].as_f64().unwrap() >= 0.5, "{f}");
            assert!(f["residual"].as_f64().unwrap() < 0.2);
        }
        assert!(summary.pass);
        // the degenerate pair tracks the frozen discretization values
        let errors_csv = std::fs::read_to_string(dir.join("errors.csv")).unwrap();
        let pair_row: Vec<&str> = errors_csv
            .lines()
            .find(|l| l.starts_with("0.2,") && l.contains(",1,"))
            .unwrap()
            .split(',')
            .collect();
        let pair_err: f64 = pair_row[5].parse().unwrap();
        assert!((pair_err - 0.491648).abs() < 1e-3, "pair error {pair_err}");
        let svg = std::fs::read_to_string(dir.join("errors.svg")).unwrap();
        assert!(svg.contains("<svg") && svg.contains("slope"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn spacing_sweep_reports_orders_honestly() {
        let mut cfg = base(ExperimentKind::ConvergeDeltaprimeGraph);
        cfg.beta = -1.0;
        cfg.a_grid = vec![0.2, 0.1, 0.05];
        let dir = scratch("dp-graph");
        let summary = run_experiment(&cfg, &dir).unwrap();
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&summary.report_path).unwrap()).unwrap();
        let rep = &doc["report"];
        // the bound-state branch is preasymptotic on this grid and the fit
        // must say so
        let kf = &rep["kappa_fit"];
        let korder = kf["order"].as_f64().unwrap();
        assert!(korder > 0.5 && korder < 0.8, "kappa order {korder}");
        assert_eq!(kf["pass"], false);
        assert!(!summary.pass);
        for f in rep["positive_fits"].as_array().unwrap() {
            assert!(f["order"].as_f64().unwrap() >= 0.9, "{f}");
            assert_eq!(f["pass"], true);
        }
        assert_eq!(rep["resolvent_decreasing"], true);
        for p in rep["points"].as_array().unwrap() {
            assert_eq!(p["rayleigh_ok"], true);
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn chain_trend_improves_for_attractive_beta() {
        let mut cfg = base(ExperimentKind::ConvergeDeltaprimeChain);
        cfg.beta = -1.0;
        cfg.eps_grid = vec![0.3, 0.2];
        cfg.count = 4;
        let dir = scratch("chain");
        let summary = run_experiment(&cfg, &dir).unwrap();
        assert!(summary.pass);
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&summary.report_path).unwrap()).unwrap();
        let rep = &doc["report"];
        assert_eq!(rep["trend_ok"], true);
        let pts = rep["points"].as_array().unwrap();
        let e0 = pts[0]["lambda_min_error"].as_f64().unwrap();
        let e1 = pts[1]["lambda_min_error"].as_f64().unwrap();
        assert!((e0 - 8.2715).abs() < 2e-3, "{e0}");
        assert!((e1 - 8.1647).abs() < 2e-3, "{e1}");
        let notes = rep["notes"].as_array().unwrap();
        assert!(notes[0].as_str().unwrap().contains("trend"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn manifold_spectrum_exports_mesh_and_matrices() {
        let mut cfg = base(ExperimentKind::ManifoldSpectrum);
        cfg.eps = Some(0.2);
        cfg.q = -1.0;
        cfg.count = 4;
        let dir = scratch("manifold-spectrum");
        let summary = run_experiment(&cfg, &dir).unwrap();
        assert!(summary.pass);
        let mesh_txt = std::fs::read_to_string(dir.join("mesh.txt")).unwrap();
        assert!(mesh_txt.starts_with("# fat-graph mesh:"));
        let mtx = std::fs::read_to_string(dir.join("operator.mtx")).unwrap();
        assert!(mtx.starts_with("# operator: symmetric"));
        assert!(dir.join("mass.mtx").exists());
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&summary.report_path).unwrap()).unwrap();
        let flat = doc["report"]["flattened"].as_array().unwrap();
        let lo = flat[0].as_f64().unwrap();
        assert!((lo - (-0.31160231)).abs() < 1e-4, "ground {lo}");
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn closeness_experiment_round_trips() {
        let mut cfg = base(ExperimentKind::ClosenessSuite);
        cfg.eps = Some(0.1);
        cfg.samples = 5;
        cfg.lambda2_vertex = Some(4.0432317712);
        let dir = scratch("closeness");
        let summary = run_experiment(&cfg, &dir).unwrap();
        assert!(summary.pass);
        let csv = std::fs::read_to_string(dir.join("ratios.csv")).unwrap();
        assert!(csv.starts_with("# graphtube csv v1 table=ratios\n"));
        assert_eq!(csv.lines().count(), 2 + 5);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn empty_series_skip_plots_and_headers_survive() {
        assert!(loglog_svg("t", "x", "y", &[]).is_none());
        let svg = loglog_svg(
            "t",
            "x",
            "y",
            &[PlotSeries {
                label: "ev1".into(),
                points: vec![(0.2, 1.0), (0.1, 0.5), (0.05, 0.25)],
                slope: Some(1.0),
            }],
        )
        .unwrap();
        assert!(svg.contains("slope 1.000"));
        // header-only CSV for an empty sweep
        let dir = scratch("emit-empty");
        let env = serde_json::json!({"pass": true});
        let summary =
            emit_outputs(&dir, &env, &[("errors".into(), "param,index,error\n".into())], &[])
                .unwrap();
        assert!(summary.pass);
        let csv = std::fs::read_to_string(dir.join("errors.csv")).unwrap();
        assert_eq!(csv, "# graphtube csv v1 table=errors\nparam,index,error\n");
        let _ = std::fs::remove_dir_all(&dir);
    }
}
