//! The four subcommands.

use crate::config::{AmplitudeVariable, ExperimentConfig, NucleiSource};
use crate::output::{sig6, write_json, Artifacts, Provenance};
use crate::plan::{expand, resolve_sequence, Point, PointKey};
use crate::stats::{BoxStats, Histogram, HISTOGRAM_BIN};
use crate::CliError;
use nucpol_core::amplitudes::{amplitude_spectrum, locate_extremum, Extremum, ExtremumKind, ScanVariable, MAGNITUDE_LABELS};
use nucpol_core::clusters::ClusterConfig;
use nucpol_core::engine::{mode_name, EngineError, Propagation, RunHealth, RunMode};
use nucpol_core::model::{NuclearSpinParams, SpinSystem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// A loaded configuration together with how it was obtained.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: ExperimentConfig,
    pub preset: Option<String>,
    pub out: PathBuf,
}

impl Invocation {
    pub fn provenance(&self, command: &str) -> Provenance {
        Provenance::new(command, self.preset.as_deref(), &self.config.hash(), self.config.run.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub mode: RunMode,
    pub total: f64,
    pub per_spin: Vec<f64>,
    /// `(repetition, total polarization)` every `trajectory_stride` repetitions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<(usize, f64)>,
    pub health: RunHealth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub numerical: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub config_hash: String,
    pub hash: String,
    pub key: PointKey,
    pub mean_a_perp: f64,
    pub tau_pol: f64,
    pub n_rep: usize,
    pub outcomes: Vec<ModeOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<PointFailure>,
}

fn engine_failure(e: EngineError) -> PointFailure {
    PointFailure { numerical: e.is_numerical_health(), message: e.to_string() }
}

pub fn run_point(point: &Point, config_hash: &str, modes: &[RunMode], stride: usize) -> PointResult {
    let mut result = PointResult {
        config_hash: config_hash.into(),
        hash: point.hash.clone(),
        key: point.key.clone(),
        mean_a_perp: point.mean_a_perp(),
        tau_pol: point.spec.tau_pol,
        n_rep: point.n_rep,
        outcomes: Vec::new(),
        failure: None,
    };
    let propagation = match Propagation::new(&point.system, &point.spec) {
        Ok(p) => p,
        Err(e) => {
            result.failure = Some(engine_failure(e));
            return result;
        }
    };
    for &mode in modes {
        match propagation.run(mode, point.n_rep) {
            Ok(run) => {
                let trajectory = if stride == 0 {
                    Vec::new()
                } else {
                    let mut t: Vec<(usize, f64)> =
                        (0..=run.n_rep).step_by(stride).map(|r| (r, run.total_polarization(r))).collect();
                    if t.last().map(|x| x.0) != Some(run.n_rep) {
                        t.push((run.n_rep, run.final_total()));
                    }
                    t
                };
                result.outcomes.push(ModeOutcome {
                    mode,
                    total: run.final_total(),
                    per_spin: run.final_per_spin(),
                    trajectory,
                    health: run.health,
                });
            }
            Err(e) => {
                result.failure = Some(engine_failure(e));
                break;
            }
        }
    }
    result
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Io(format!("worker pool: {e}")))
}

fn value_cell(key: &PointKey) -> String {
    key.value.map(sig6).unwrap_or_default()
}

fn variable_cell(key: &PointKey) -> String {
    key.variable
        .map(|v| serde_json::to_value(v).ok().and_then(|j| j.as_str().map(String::from)).unwrap_or_default())
        .unwrap_or_default()
}

fn cluster_cell(key: &PointKey) -> String {
    key.cluster.map(|c| c.to_string()).unwrap_or_default()
}

const POLARIZATION_HEADER: [&str; 9] =
    ["config_hash", "point", "variable", "value", "n_nuc", "cluster", "mode", "quantity", "polarization"];

fn polarization_rows(results: &[PointResult]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in results {
        for o in &r.outcomes {
            let base = |quantity: String, p: f64| {
                vec![
                    r.config_hash.clone(),
                    r.key.index.to_string(),
                    variable_cell(&r.key),
                    value_cell(&r.key),
                    r.key.n_nuc.to_string(),
                    cluster_cell(&r.key),
                    mode_name(o.mode),
                    quantity,
                    sig6(p),
                ]
            };
            rows.push(base("total".into(), o.total));
            for (l, p) in o.per_spin.iter().enumerate() {
                rows.push(base(format!("spin_{}", l + 1), *p));
            }
        }
    }
    rows
}

fn trajectory_rows(results: &[PointResult]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in results {
        for o in &r.outcomes {
            for (rep, p) in &o.trajectory {
                rows.push(vec![r.config_hash.clone(), r.key.index.to_string(), mode_name(o.mode), rep.to_string(), sig6(*p)]);
            }
        }
    }
    rows
}

fn write_run_tables(art: &mut Artifacts, inv: &Invocation, results: &[PointResult]) -> Result<(), CliError> {
    if inv.config.output.csv() {
        art.csv("polarization.csv", &POLARIZATION_HEADER, &polarization_rows(results))?;
        if inv.config.run.trajectory_stride > 0 {
            art.csv("trajectory.csv", &["config_hash", "point", "mode", "rep", "total"], &trajectory_rows(results))?;
        }
    }
    Ok(())
}

fn write_clusters(art: &mut Artifacts, config_hash: &str, clusters: &[ClusterConfig]) -> Result<(), CliError> {
    let mut rows = Vec::with_capacity(clusters.len());
    for c in clusters {
        art.json(&format!("clusters/cluster_{:05}.json", c.index), c)?;
        let max = c.selected.iter().map(|n| n.a_perp).fold(0.0, f64::max);
        rows.push(vec![
            config_hash.into(),
            c.index.to_string(),
            c.attempts.to_string(),
            c.occupied.len().to_string(),
            c.selected.len().to_string(),
            sig6(c.mean_a_perp()),
            sig6(max),
        ]);
    }
    art.csv(
        "clusters/summary.csv",
        &["config_hash", "index", "attempts", "n_occupied", "n_selected", "mean_a_perp_mhz", "max_a_perp_mhz"],
        &rows,
    )?;
    Ok(())
}

fn first_failure(results: &[PointResult]) -> Option<CliError> {
    let failures: Vec<&PointResult> = results.iter().filter(|r| r.failure.is_some()).collect();
    let first = failures.first()?;
    let f = first.failure.as_ref().expect("filtered");
    let msg = format!("{} of {} points failed; point {}: {}", failures.len(), results.len(), first.key.index, f.message);
    Some(if failures.iter().any(|r| r.failure.as_ref().is_some_and(|f| f.numerical)) {
        CliError::Numerical(msg)
    } else {
        CliError::Config(msg)
    })
}

#[derive(Serialize)]
struct RunBundle<'a> {
    provenance: &'a Provenance,
    points: &'a [PointResult],
}

/// Runs every point of the configuration and writes the result tables.
pub fn simulate(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let config = &inv.config;
    let hash = config.hash();
    let (points, clusters) = expand(config, &hash)?;
    let results: Vec<PointResult> = pool(config.run.jobs)?
        .install(|| points.par_iter().map(|p| run_point(p, &hash, &config.run.modes, config.run.trajectory_stride)).collect());
    if let Some(err) = first_failure(&results) {
        return Err(err);
    }
    let provenance = inv.provenance("simulate");
    let mut art = Artifacts::new(&inv.out)?;
    write_run_tables(&mut art, inv, &results)?;
    if !clusters.is_empty() {
        write_clusters(&mut art, &hash, &clusters)?;
    }
    if config.output.json() {
        art.json("results.json", &RunBundle { provenance: &provenance, points: &results })?;
    }
    art.finish(&provenance)
}

/// Like [`simulate`], but resumable per point, tolerant of point failures and with aggregate statistics.
pub fn sweep(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let config = &inv.config;
    let hash = config.hash();
    let (points, clusters) = expand(config, &hash)?;
    let points_dir = inv.out.join("points");
    std::fs::create_dir_all(&points_dir).map_err(|e| CliError::io(&points_dir, e))?;
    let results: Vec<PointResult> = pool(config.run.jobs)?.install(|| {
        points
            .par_iter()
            .map(|p| {
                let file = points_dir.join(format!("{}.json", p.hash));
                if let Some(done) = load_point(&file, &p.hash) {
                    return Ok(done);
                }
                let r = run_point(p, &hash, &config.run.modes, config.run.trajectory_stride);
                write_json(&file, &r)?;
                Ok(r)
            })
            .collect::<Result<_, CliError>>()
    })?;

    let provenance = inv.provenance("sweep");
    let mut art = Artifacts::new(&inv.out)?;
    art.written.extend(points.iter().map(|p| points_dir.join(format!("{}.json", p.hash))));
    write_run_tables(&mut art, inv, &results)?;
    if !clusters.is_empty() {
        write_clusters(&mut art, &hash, &clusters)?;
    }
    if config.output.csv() {
        write_aggregates(&mut art, &hash, &config.run.modes, &results)?;
    }
    if config.output.json() {
        art.json("results.json", &RunBundle { provenance: &provenance, points: &results })?;
    }
    let paths = art.finish(&provenance)?;
    match first_failure(&results) {
        Some(err) => Err(err.with_paths(paths)),
        None => Ok(paths),
    }
}

fn load_point(file: &Path, hash: &str) -> Option<PointResult> {
    let text = std::fs::read_to_string(file).ok()?;
    let r: PointResult = serde_json::from_str(&text).ok()?;
    (r.hash == hash && r.failure.is_none()).then_some(r)
}

/// Grouping of sweep points: swept value and nuclear count.
type GroupKey = (Option<u64>, usize);
/// Totals of one group, by mode index.
type Group = (PointKey, BTreeMap<usize, Vec<f64>>);

fn write_aggregates(art: &mut Artifacts, hash: &str, modes: &[RunMode], results: &[PointResult]) -> Result<(), CliError> {
    let mut scatter = Vec::new();
    for r in results {
        let mut row = vec![
            hash.into(),
            r.key.index.to_string(),
            variable_cell(&r.key),
            value_cell(&r.key),
            r.key.n_nuc.to_string(),
            cluster_cell(&r.key),
            sig6(r.mean_a_perp),
        ];
        for &m in modes {
            row.push(r.outcomes.iter().find(|o| o.mode == m).map(|o| sig6(o.total)).unwrap_or_default());
        }
        row.push(r.failure.as_ref().map_or("ok".into(), |f| if f.numerical { "numerical_error".into() } else { "error".into() }));
        scatter.push(row);
    }
    let mut header: Vec<String> = ["config_hash", "point", "variable", "value", "n_nuc", "cluster", "mean_a_perp_mhz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(modes.iter().map(|&m| format!("p_{}", mode_name(m))));
    header.push("status".into());
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    art.csv("points.csv", &header_ref, &scatter)?;

    // value bit patterns keep group order equal to grid order
    let mut groups: BTreeMap<(usize, GroupKey), Group> = BTreeMap::new();
    let mut first_seen: BTreeMap<GroupKey, usize> = BTreeMap::new();
    for r in results.iter().filter(|r| r.failure.is_none()) {
        let gk = (r.key.value.map(f64::to_bits), r.key.n_nuc);
        let order = *first_seen.entry(gk).or_insert(r.key.index);
        let entry = groups.entry((order, gk)).or_insert_with(|| (r.key.clone(), BTreeMap::new()));
        for o in &r.outcomes {
            let mi = modes.iter().position(|&m| m == o.mode).unwrap_or(0);
            entry.1.entry(mi).or_default().push(o.total);
        }
    }
    let mut summary = Vec::new();
    let mut hist_rows = Vec::new();
    for (key, per_mode) in groups.values() {
        for (&mi, values) in per_mode {
            let Some(b) = BoxStats::new(values) else { continue };
            let h = Histogram::new(values, HISTOGRAM_BIN);
            let lead = vec![hash.to_string(), variable_cell(key), value_cell(key), key.n_nuc.to_string(), mode_name(modes[mi])];
            let mut row = lead.clone();
            row.extend([b.count.to_string(), sig6(b.mean), sig6(b.min), sig6(b.q1), sig6(b.median), sig6(b.q3), sig6(b.max)]);
            row.extend([sig6(b.whisker_low), sig6(b.whisker_high), b.outliers.to_string()]);
            row.push(h.peak().map(sig6).unwrap_or_default());
            summary.push(row);
            for (i, &c) in h.counts.iter().enumerate() {
                let mut r = lead.clone();
                r.extend([sig6(i as f64 * h.width), sig6((i + 1) as f64 * h.width), c.to_string()]);
                hist_rows.push(r);
            }
        }
    }
    art.csv(
        "summary.csv",
        &[
            "config_hash",
            "variable",
            "value",
            "n_nuc",
            "mode",
            "count",
            "mean",
            "min",
            "q1",
            "median",
            "q3",
            "max",
            "whisker_low",
            "whisker_high",
            "outliers",
            "histogram_peak",
        ],
        &summary,
    )?;
    art.csv("histogram.csv", &["config_hash", "variable", "value", "n_nuc", "mode", "bin_low", "bin_high", "count"], &hist_rows)?;
    Ok(())
}

/// Writes the accepted cluster configurations and their summary.
pub fn cluster_gen(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let config = &inv.config;
    if config.nuclei_source()? != NucleiSource::Clusters {
        return Err(CliError::Config("cluster-gen needs a system.clusters block".into()));
    }
    let hash = config.hash();
    let clusters = crate::plan::generate_clusters(config)?;
    let mut art = Artifacts::new(&inv.out)?;
    write_clusters(&mut art, &hash, &clusters)?;
    art.finish(&inv.provenance("cluster-gen"))
}

#[derive(Debug, Clone, Serialize)]
struct SpectrumRow {
    value: f64,
    /// `[re, im]` in the order of the magnitude labels.
    amplitudes: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
struct ExtremumRecord {
    amplitude: &'static str,
    kind: &'static str,
    extremum: Extremum,
}

#[derive(Debug, Clone, Serialize)]
struct SpectrumBundle<'a> {
    provenance: &'a Provenance,
    name: String,
    variable: AmplitudeVariable,
    track_resonance: bool,
    tau_pol: f64,
    rows: Vec<SpectrumRow>,
    extrema: Vec<ExtremumRecord>,
}

fn amplitude_template(config: &ExperimentConfig) -> Result<SpinSystem, CliError> {
    let larmor = config.larmor()?;
    let electron = nucpol_core::model::ElectronModel::new(config.system.electron);
    let nuclei: Vec<NuclearSpinParams> = match config.nuclei_source()? {
        NucleiSource::Uniform => {
            let u = config.system.uniform.as_ref().expect("validated");
            vec![NuclearSpinParams::new(u.a_par.0, u.a_perp.0); u.count]
        }
        NucleiSource::Inline => config
            .system
            .nuclei
            .as_ref()
            .expect("validated")
            .iter()
            .map(|n| NuclearSpinParams::new(n.a_par.0, n.a_perp.0))
            .collect(),
        NucleiSource::Clusters => return Err(CliError::Config("amplitudes need two explicit nuclei, not clusters".into())),
    };
    if nuclei.len() != 2 {
        return Err(CliError::Config(format!("amplitudes need exactly two nuclei, got {}", nuclei.len())));
    }
    SpinSystem::new(electron, nuclei, larmor).map_err(|e| CliError::Config(format!("system: {e}")))
}

/// Transition-amplitude spectra for every `[[amplitudes]]` scan.
pub fn amplitudes(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let config = &inv.config;
    if config.amplitudes.is_empty() {
        return Err(CliError::Config("no [[amplitudes]] scan is configured".into()));
    }
    let hash = config.hash();
    let provenance = inv.provenance("amplitudes");
    let template = amplitude_template(config)?;
    let spec = resolve_sequence(config, &template, None, None)?;
    let workers = pool(config.run.jobs)?;
    let mut art = Artifacts::new(&inv.out)?;
    for scan in &config.amplitudes {
        let grid = scan.range.values(scan.dimension())?;
        let variable = match scan.variable {
            AmplitudeVariable::Tau => ScanVariable::Tau,
            AmplitudeVariable::TargetFrequency => ScanVariable::TargetFrequency,
            AmplitudeVariable::APerp => ScanVariable::APerp { track_resonance: scan.track_resonance },
        };
        let chunks: Vec<_> = workers
            .install(|| {
                grid.par_chunks(64)
                    .map(|chunk| amplitude_spectrum(&template, &spec, variable, chunk))
                    .collect::<Result<Vec<_>, _>>()
            })
            .map_err(|e| CliError::Numerical(format!("amplitudes `{}`: {e}", scan.name)))?;
        let spectrum: Vec<_> = chunks.into_iter().flatten().collect();

        let mut rows = Vec::with_capacity(spectrum.len());
        let mut table = Vec::with_capacity(spectrum.len());
        for (v, a) in &spectrum {
            let mut row = vec![hash.clone(), sig6(*v)];
            row.extend(a.magnitudes().iter().map(|m| sig6(*m)));
            rows.push(row);
            let ordered = [
                a.alpha_minus,
                a.alpha_plus,
                a.alpha_plus_z,
                a.alpha_minus_z,
                a.beta_pm,
                a.beta_pp,
                a.beta_e,
                a.beta_z,
                a.beta_zz,
            ];
            table.push(SpectrumRow { value: *v, amplitudes: ordered.iter().map(|z| [z.re, z.im]).collect() });
        }
        let mut extrema = Vec::new();
        for (k, label) in MAGNITUDE_LABELS.iter().enumerate() {
            let mags: Vec<f64> = spectrum.iter().map(|(_, a)| a.magnitudes()[k]).collect();
            for (kind, name) in [(ExtremumKind::Maximum, "maximum"), (ExtremumKind::Minimum, "minimum")] {
                if let Some(e) = locate_extremum(&grid, &mags, kind) {
                    extrema.push(ExtremumRecord { amplitude: label, kind: name, extremum: e });
                }
            }
        }
        if config.output.csv() {
            let mut header = vec!["config_hash", "value"];
            header.extend(MAGNITUDE_LABELS.iter());
            art.csv(&format!("amplitudes_{}.csv", scan.name), &header, &rows)?;
        }
        if config.output.json() {
            let bundle = SpectrumBundle {
                provenance: &provenance,
                name: scan.name.clone(),
                variable: scan.variable,
                track_resonance: scan.track_resonance,
                tau_pol: spec.tau_pol,
                rows: table,
                extrema,
            };
            art.json(&format!("amplitudes_{}.json", scan.name), &bundle)?;
        }
    }
    art.finish(&provenance)
}
