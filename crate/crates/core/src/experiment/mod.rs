//! Config-driven experiments: Gibbs audits, the statistical-stability sweep,
//! recurrence probes, Lyapunov spectra and splitting exports.

pub mod config;
pub mod report;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::{
    gibbs_defect, itinerary_entropy_rate, phi_f_from_jacobian, GibbsReport, ItineraryEntropy, ItinerarySample,
};
use crate::error::{LabError, Result};
use crate::linalg::{min_principal_angle, min_singular_value, orthonormalize, spectral_norm};
use crate::measure::{
    empirical_measure_after, multiscale_tv, physical_measure_estimate, weak_star_distance, GridMeasure,
    GridPartition, MeasureDistanceConfig, PhysicalEstimate,
};
use crate::perturb::{perturb, PerturbationFamily};
use crate::system::{check_point, SmoothSystem};
use crate::systems::BuiltSystem;
use crate::tangent::{estimate_splitting, forward_frames, generic_frame, lyapunov_spectrum};

pub use config::{ExperimentConfig, RecurrenceTarget, WordSource, STREAM_MAIN, STREAM_NOISE, STREAM_WORDS};
pub use report::{CsvTable, RunOutcome};

fn estimate_ensemble(
    system: &dyn SmoothSystem,
    ics: &[Vec<f64>],
    cfg: &ExperimentConfig,
    partition: &GridPartition,
    dcfg: &MeasureDistanceConfig,
) -> Result<PhysicalEstimate> {
    if ics.len() >= 2 {
        return physical_measure_estimate(system, ics, cfg.orbit_length, cfg.burn_in, partition, dcfg);
    }
    // a single pinned initial condition: no dispersion to measure
    let m = empirical_measure_after(system, &ics[0], cfg.orbit_length, cfg.burn_in, partition)?;
    Ok(PhysicalEstimate {
        mean: m.clone(),
        dispersion: 0.0,
        members: vec![m],
        survivors: vec![0],
        failures: vec![],
    })
}

/// Average of the base potential `phi^F_f` along the orbit of `orbit_sys`
/// from `f^burn_in(x)` for `len` steps.
///
/// With a constant splitting the base `F` is used as is; otherwise `F` is
/// transported by the base Jacobians along the (possibly perturbed) orbit,
/// starting from a generic frame `transport` steps before sampling.
pub fn base_potential_average(
    base: &BuiltSystem,
    orbit_sys: &dyn SmoothSystem,
    x: &[f64],
    burn_in: usize,
    transport: usize,
    len: usize,
) -> Result<f64> {
    if len == 0 {
        return Err(LabError::InvalidArgument("potential length must be >= 1".into()));
    }
    check_point(orbit_sys.space(), x)?;
    let d = x.len();
    let fixed = base.constant_splitting.as_ref().map(|c| c.f_frame.clone());
    let warm = if fixed.is_some() { 0 } else { transport.min(burn_in) };
    let mut cur = x.to_vec();
    let mut next = vec![0.0; d];
    let step = |cur: &mut Vec<f64>, next: &mut Vec<f64>, i: usize| -> Result<()> {
        orbit_sys.apply_into(cur, next)?;
        if !orbit_sys.space().contains(next) {
            return Err(LabError::Escape { index: i + 1 });
        }
        std::mem::swap(cur, next);
        Ok(())
    };
    for i in 0..burn_in - warm {
        step(&mut cur, &mut next, i)?;
    }
    let mut frame = fixed.clone().unwrap_or_else(|| generic_frame(d, base.dim_f, 1));
    let mut sum = 0.0;
    for i in 0..warm + len {
        let jac = crate::system::jacobian_at(base.system.as_ref(), &cur);
        if i >= warm {
            sum += phi_f_from_jacobian(&jac, &frame, &cur)?;
        }
        if fixed.is_none() {
            frame = orthonormalize(&(jac * &frame));
        }
        if i + 1 < warm + len {
            step(&mut cur, &mut next, burn_in - warm + i)?;
        }
    }
    Ok(sum / len as f64)
}

fn itinerary_sample(
    system: &dyn SmoothSystem,
    built: &BuiltSystem,
    ics: &[Vec<f64>],
    cfg: &ExperimentConfig,
) -> Result<(ItinerarySample, GridPartition)> {
    let it = &cfg.itinerary;
    let coarse = GridPartition::new(system.space().clone(), it.resolution)?;
    let sample = match it.source {
        WordSource::OrbitWindows => {
            let per_ic = it.samples.div_ceil(ics.len()).min(cfg.orbit_length - cfg.burn_in);
            ItinerarySample::from_orbit_windows(system, ics, cfg.burn_in + per_ic, cfg.burn_in, &coarse, it.depth)?
        }
        WordSource::InitialConditions => {
            let points = cfg.sample_points(built, it.samples, STREAM_WORDS);
            ItinerarySample::from_initial_conditions(system, &points, &coarse, it.depth)?
        }
    };
    Ok((sample, coarse))
}

/// Everything the Gibbs audit measures.
#[derive(Clone, Debug, Serialize)]
pub struct GibbsAudit {
    pub report: GibbsReport,
    pub entropy: ItineraryEntropy,
    pub dispersion: f64,
    pub per_ic_potential: Vec<(usize, f64)>,
    pub survivors: usize,
    pub failures: Vec<(usize, String)>,
    pub boundary_mass: f64,
}

pub fn run_gibbs_audit(cfg: &ExperimentConfig) -> Result<GibbsAudit> {
    let built = cfg.build()?;
    gibbs_audit_with(&built, cfg)
}

pub fn gibbs_audit_with(built: &BuiltSystem, cfg: &ExperimentConfig) -> Result<GibbsAudit> {
    let system = built.system.as_ref();
    let partition = cfg.partition(built)?;
    let dcfg = cfg.distance_config(&partition)?;
    let ics = cfg.initial_conditions(built, STREAM_MAIN)?;
    let est = estimate_ensemble(system, &ics, cfg, &partition, &dcfg)?;
    let alive: Vec<Vec<f64>> = est.survivors.iter().map(|&i| ics[i].clone()).collect();

    let (sample, coarse) = itinerary_sample(system, built, &alive, cfg)?;
    let entropy = itinerary_entropy_rate(&sample)?;
    let boundary_mass = crate::measure::boundary_mass(&coarse, &alive, 1e-9);

    let len = cfg.potential_length();
    let per_ic_potential: Vec<(usize, f64)> = est
        .survivors
        .par_iter()
        .map(|&i| {
            base_potential_average(built, system, &ics[i], cfg.burn_in, cfg.splitting.transport_burn_in, len)
                .map(|v| (i, v))
        })
        .collect::<Result<_>>()?;
    let potential = per_ic_potential.iter().map(|p| p.1).sum::<f64>() / per_ic_potential.len() as f64;

    let mut report = gibbs_defect(entropy.estimate(cfg.itinerary.estimator), potential, cfg.gibbs_tolerance);
    report.entropy_samples = entropy.samples;
    report.potential_samples = len * per_ic_potential.len();
    report.undersampled = entropy.undersampled;
    Ok(GibbsAudit {
        report,
        entropy,
        dispersion: est.dispersion,
        per_ic_potential,
        survivors: est.survivors.len(),
        failures: est.failures.iter().map(|(i, e)| (*i, e.to_string())).collect(),
        boundary_mass,
    })
}

impl GibbsAudit {
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(
            "gibbs_audit",
            &[
                "scope",
                "entropy",
                "potential_average",
                "defect",
                "tolerance",
                "gibbs_compatible",
                "entropy_samples",
                "distinct_words",
                "undersampled",
                "dispersion",
            ],
        );
        let r = &self.report;
        t.row(vec![
            "ensemble".into(),
            report::num(r.entropy_estimate),
            report::num(r.potential_average),
            report::num(r.defect),
            report::num(r.tolerance),
            r.gibbs_compatible.to_string(),
            self.entropy.samples.to_string(),
            self.entropy.distinct_words.to_string(),
            r.undersampled.to_string(),
            report::num(self.dispersion),
        ]);
        for (i, p) in &self.per_ic_potential {
            t.row(vec![
                format!("ic{i}"),
                String::new(),
                report::num(*p),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ]);
        }
        t
    }
}

/// One row of the stability sweep; failed rows carry `status = failed:<kind>`.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityRow {
    pub epsilon: f64,
    pub status: String,
    pub message: Option<String>,
    pub distance: Option<f64>,
    pub dispersion: Option<f64>,
    pub lyapunov: Option<Vec<f64>>,
    pub entropy: Option<f64>,
    pub potential_average: Option<f64>,
    pub gibbs_defect: Option<f64>,
    /// `tolerance + C * eps`.
    pub slack: f64,
    pub gibbs_ok: Option<bool>,
    pub recurrence_fraction: Option<f64>,
}

impl StabilityRow {
    pub fn succeeded(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    /// `d(mu_0(R), mu_0(B))` for two independent base ensembles.
    pub noise_floor: f64,
    pub base_dispersion: f64,
    pub c1_constant: f64,
}

impl StabilityReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(StabilityRow::succeeded)
    }

    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(
            "stability",
            &[
                "epsilon",
                "status",
                "distance",
                "dispersion",
                "lyapunov",
                "entropy",
                "potential_average",
                "gibbs_defect",
                "slack",
                "gibbs_ok",
                "recurrence_fraction",
                "noise_floor",
            ],
        );
        let opt = |v: Option<f64>| v.map(report::num).unwrap_or_default();
        for r in &self.rows {
            t.row(vec![
                report::num(r.epsilon),
                r.status.clone(),
                opt(r.distance),
                opt(r.dispersion),
                r.lyapunov
                    .as_ref()
                    .map(|l| l.iter().map(|v| report::num(*v)).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default(),
                opt(r.entropy),
                opt(r.potential_average),
                opt(r.gibbs_defect),
                report::num(r.slack),
                r.gibbs_ok.map(|b| b.to_string()).unwrap_or_default(),
                opt(r.recurrence_fraction),
                report::num(self.noise_floor),
            ]);
        }
        t
    }
}

pub fn run_stability_sweep(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    let built = cfg.build()?;
    stability_sweep_with(&built, cfg)
}

pub fn stability_sweep_with(built: &BuiltSystem, cfg: &ExperimentConfig) -> Result<StabilityReport> {
    let pcfg = cfg
        .perturbation
        .as_ref()
        .ok_or_else(|| LabError::Config("stability sweep needs a `perturbation` block".into()))?;
    let partition = cfg.partition(built)?;
    let dcfg = cfg.distance_config(&partition)?;
    let ics = cfg.initial_conditions(built, STREAM_MAIN)?;
    if ics.len() < 2 {
        return Err(LabError::Config("stability sweep needs at least 2 initial conditions".into()));
    }
    let noise_ics = cfg.initial_conditions(built, STREAM_NOISE)?;
    let base = built.system.as_ref();
    let base_est = estimate_ensemble(base, &ics, cfg, &partition, &dcfg)?;
    let noise_est = estimate_ensemble(base, &noise_ics, cfg, &partition, &dcfg)?;
    let noise_floor = weak_star_distance(&base_est.mean, &noise_est.mean, &dcfg)?;
    log::info!("base dispersion {:.4e}, noise floor {:.4e}", base_est.dispersion, noise_floor);

    let family = PerturbationFamily::new(
        built.system.clone(),
        pcfg.family_kind()?,
        pcfg.center.clone(),
        pcfg.radius,
        pcfg.schedule[0],
    )?;
    let c1 = family.c1_constant();
    let mut rows = Vec::with_capacity(pcfg.schedule.len());
    for &eps in &pcfg.schedule {
        let slack = cfg.gibbs_tolerance + c1 * eps;
        let row = sweep_row(built, cfg, &family, eps, &ics, &partition, &dcfg, &base_est.mean, slack);
        let row = row.unwrap_or_else(|e| {
            log::warn!("sweep row eps = {eps} failed: {e}");
            StabilityRow {
                epsilon: eps,
                status: format!("failed:{}", e.kind()),
                message: Some(e.to_string()),
                distance: None,
                dispersion: None,
                lyapunov: None,
                entropy: None,
                potential_average: None,
                gibbs_defect: None,
                slack,
                gibbs_ok: None,
                recurrence_fraction: None,
            }
        });
        log::info!(
            "eps {eps}: status {} distance {:?} defect {:?}",
            row.status,
            row.distance,
            row.gibbs_defect
        );
        rows.push(row);
    }
    Ok(StabilityReport {
        rows,
        noise_floor,
        base_dispersion: base_est.dispersion,
        c1_constant: c1,
    })
}

#[allow(clippy::too_many_arguments)]
fn sweep_row(
    built: &BuiltSystem,
    cfg: &ExperimentConfig,
    family: &PerturbationFamily,
    eps: f64,
    ics: &[Vec<f64>],
    partition: &GridPartition,
    dcfg: &MeasureDistanceConfig,
    base_mean: &GridMeasure,
    slack: f64,
) -> Result<StabilityRow> {
    let g: Arc<dyn SmoothSystem> = perturb(&family.with_size(eps)?)?;
    let est = estimate_ensemble(g.as_ref(), ics, cfg, partition, dcfg)?;
    let distance = weak_star_distance(&est.mean, base_mean, dcfg)?;
    let alive: Vec<Vec<f64>> = est.survivors.iter().map(|&i| ics[i].clone()).collect();

    let lyap = lyapunov_spectrum(g.as_ref(), &alive[0], cfg.lyapunov_length(), cfg.lyapunov.period)?;
    let (sample, _) = itinerary_sample(g.as_ref(), built, &alive, cfg)?;
    let entropy = itinerary_entropy_rate(&sample)?.estimate(cfg.itinerary.estimator);
    let len = cfg.potential_length();
    let potentials: Vec<f64> = alive
        .par_iter()
        .map(|x| base_potential_average(built, g.as_ref(), x, cfg.burn_in, cfg.splitting.transport_burn_in, len))
        .collect::<Result<_>>()?;
    let potential = potentials.iter().sum::<f64>() / potentials.len() as f64;
    let report = gibbs_defect(entropy, potential, slack);

    let rc = &cfg.recurrence;
    let diags: Vec<RecurrenceDiagnostic> = alive
        .par_iter()
        .enumerate()
        .map(|(i, x)| recurrence_count(g.as_ref(), i, x, cfg.orbit_length, partition, base_mean, rc.radius, rc.stride, dcfg))
        .collect::<Result<_>>()?;
    let recurrence = diags.iter().map(RecurrenceDiagnostic::fraction).sum::<f64>() / diags.len() as f64;

    let partial = !est.failures.is_empty();
    Ok(StabilityRow {
        epsilon: eps,
        status: if partial { "partial".into() } else { "ok".into() },
        message: partial.then(|| format!("{} initial conditions failed", est.failures.len())),
        distance: Some(distance),
        dispersion: Some(est.dispersion),
        lyapunov: Some(lyap.exponents),
        entropy: Some(entropy),
        potential_average: Some(potential),
        gibbs_defect: Some(report.defect),
        slack,
        gibbs_ok: Some(report.gibbs_compatible),
        recurrence_fraction: Some(recurrence),
    })
}

/// Visits of the running empirical measure to a weak-* proxy ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceDiagnostic {
    pub ic: usize,
    pub radius: f64,
    /// Times `m` at which the distance was evaluated.
    pub evaluations: usize,
    /// Evaluated `m <= n` with `d(delta_x^m, target) < radius`.
    pub count: usize,
}

impl RecurrenceDiagnostic {
    pub fn fraction(&self) -> f64 {
        if self.evaluations == 0 {
            0.0
        } else {
            self.count as f64 / self.evaluations as f64
        }
    }
}

/// Counts `m in {stride, 2 stride, ...} <= n` with `d(delta_x^{f,m}, target) < radius`,
/// where `delta_x^{f,m}` is the empirical measure of `x, ..., f^{m-1} x`.
#[allow(clippy::too_many_arguments)]
pub fn recurrence_count(
    system: &dyn SmoothSystem,
    ic: usize,
    x: &[f64],
    n: usize,
    partition: &GridPartition,
    target: &GridMeasure,
    radius: f64,
    stride: usize,
    dcfg: &MeasureDistanceConfig,
) -> Result<RecurrenceDiagnostic> {
    if !(radius > 0.0) || stride == 0 || n == 0 {
        return Err(LabError::InvalidArgument("need radius > 0, stride >= 1, n >= 1".into()));
    }
    if !target.partition().compatible(partition) {
        return Err(LabError::IncompatiblePartitions("target measure lives on another grid".into()));
    }
    check_point(system.space(), x)?;
    let mut counts = vec![0u64; partition.cell_count()];
    let mut cur = x.to_vec();
    let mut next = vec![0.0; x.len()];
    let (mut evaluations, mut count) = (0, 0);
    for m in 1..=n {
        counts[partition.cell_index_unchecked(&cur)] += 1;
        if m % stride == 0 {
            let inv = 1.0 / m as f64;
            let diff: Vec<f64> = counts
                .iter()
                .zip(target.weights())
                .map(|(&c, &w)| c as f64 * inv - w)
                .collect();
            evaluations += 1;
            if multiscale_tv(diff, partition.resolution(), partition.dim(), dcfg.max_depth) < radius {
                count += 1;
            }
        }
        if m < n {
            system.apply_into(&cur, &mut next)?;
            if !system.space().contains(&next) {
                return Err(LabError::Escape { index: m });
            }
            std::mem::swap(&mut cur, &mut next);
        }
    }
    Ok(RecurrenceDiagnostic {
        ic,
        radius,
        evaluations,
        count,
    })
}

/// Per-IC recurrence counts into the radius-neighbourhood of `target`.
pub fn run_recurrence_probe(
    cfg: &ExperimentConfig,
    target: &GridMeasure,
    radius: f64,
) -> Result<Vec<RecurrenceDiagnostic>> {
    let built = cfg.build()?;
    let partition = cfg.partition(&built)?;
    let dcfg = cfg.distance_config(&partition)?;
    let ics = cfg.initial_conditions(&built, STREAM_MAIN)?;
    let system = built.system.as_ref();
    ics.par_iter()
        .enumerate()
        .map(|(i, x)| {
            recurrence_count(system, i, x, cfg.orbit_length, &partition, target, radius, cfg.recurrence.stride, &dcfg)
        })
        .collect()
}

/// Recurrence probe with the target named in the config.
pub fn recurrence_probe_from_config(cfg: &ExperimentConfig) -> Result<Vec<RecurrenceDiagnostic>> {
    let built = cfg.build()?;
    let partition = cfg.partition(&built)?;
    let radius = cfg.recurrence.radius;
    match cfg.recurrence.target {
        RecurrenceTarget::Uniform => run_recurrence_probe(cfg, &GridMeasure::uniform(partition), radius),
        RecurrenceTarget::Ensemble => {
            let dcfg = cfg.distance_config(&partition)?;
            let ics = cfg.initial_conditions(&built, STREAM_MAIN)?;
            let est = estimate_ensemble(built.system.as_ref(), &ics, cfg, &partition, &dcfg)?;
            run_recurrence_probe(cfg, &est.mean, radius)
        }
        RecurrenceTarget::OwnOrbit => {
            let dcfg = cfg.distance_config(&partition)?;
            let ics = cfg.initial_conditions(&built, STREAM_MAIN)?;
            let system = built.system.as_ref();
            ics.par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let own = empirical_measure_after(system, x, cfg.orbit_length, 0, &partition)?;
                    recurrence_count(system, i, x, cfg.orbit_length, &partition, &own, radius, cfg.recurrence.stride, &dcfg)
                })
                .collect()
        }
    }
}

pub fn recurrence_table(diags: &[RecurrenceDiagnostic]) -> CsvTable {
    let mut t = CsvTable::new("recurrence", &["ic", "radius", "evaluations", "count", "fraction"]);
    for d in diags {
        t.row(vec![
            d.ic.to_string(),
            report::num(d.radius),
            d.evaluations.to_string(),
            d.count.to_string(),
            report::num(d.fraction()),
        ]);
    }
    t
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovRow {
    pub ic: usize,
    pub x0: Vec<f64>,
    pub exponents: Option<Vec<f64>>,
    pub error: Option<String>,
}

pub fn run_lyapunov(cfg: &ExperimentConfig) -> Result<Vec<LyapunovRow>> {
    let built = cfg.build()?;
    let ics = cfg.initial_conditions(&built, STREAM_MAIN)?;
    let n = cfg.lyapunov_length();
    Ok(ics
        .par_iter()
        .enumerate()
        .map(|(i, x)| match lyapunov_spectrum(built.system.as_ref(), x, n, cfg.lyapunov.period) {
            Ok(r) => LyapunovRow {
                ic: i,
                x0: x.clone(),
                exponents: Some(r.exponents),
                error: None,
            },
            Err(e) => LyapunovRow {
                ic: i,
                x0: x.clone(),
                exponents: None,
                error: Some(format!("{}: {e}", e.kind())),
            },
        })
        .collect())
}

pub fn lyapunov_table(rows: &[LyapunovRow], dim: usize) -> CsvTable {
    let mut cols: Vec<String> = vec!["ic".into(), "status".into(), "x0".into()];
    cols.extend((1..=dim).map(|k| format!("lambda{k}")));
    cols.push("sum".into());
    let mut t = CsvTable::new_owned("lyapunov", cols);
    for r in rows {
        let mut row = vec![
            r.ic.to_string(),
            r.error.as_ref().map_or("ok".into(), |e| format!("failed:{}", e.split(':').next().unwrap_or(""))),
            report::join(&r.x0),
        ];
        match &r.exponents {
            Some(e) => {
                row.extend(e.iter().map(|v| report::num(*v)));
                row.push(report::num(e.iter().sum()));
            }
            None => row.extend(std::iter::repeat_n(String::new(), dim + 1)),
        }
        t.row(row);
    }
    t
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingRow {
    pub ic: usize,
    pub basepoint: Vec<f64>,
    /// `estimated`, `forward_only`, or `failed:<kind>`.
    pub status: String,
    pub residual: Option<f64>,
    pub min_angle: Option<f64>,
    pub domination_ratio: Option<f64>,
    /// Frame columns.
    pub f_frame: Option<Vec<Vec<f64>>>,
    pub e_frame: Option<Vec<Vec<f64>>>,
}

/// Splitting field at the first `splitting.points` initial conditions.
///
/// Systems whose backward orbits are not numerically usable (the Lorenz
/// time-one map, whose reversed flow leaves every bounded region) get `F`
/// only, transported forward from a generic frame.
pub fn run_splitting(cfg: &ExperimentConfig) -> Result<Vec<SplittingRow>> {
    let built = cfg.build()?;
    let ics = cfg.initial_conditions(&built, STREAM_MAIN)?;
    let k = cfg.splitting.points.min(ics.len());
    let system = built.system.as_ref();
    Ok(ics[..k]
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            if !built.backward_usable {
                return match forward_frames(system, x, cfg.splitting.transport_burn_in, 1, built.dim_f) {
                    Ok((orbit, frames)) => SplittingRow {
                        ic: i,
                        basepoint: orbit.points[0].clone(),
                        status: "forward_only".into(),
                        residual: None,
                        min_angle: None,
                        domination_ratio: None,
                        f_frame: Some(columns(&frames[0])),
                        e_frame: None,
                    },
                    Err(e) => failed_split(i, x, &e),
                };
            }
            match estimate_splitting(system, x, cfg.splitting.n, built.dim_f, cfg.splitting.tol) {
                Ok(s) => {
                    let jac = crate::system::jacobian_at(system, x);
                    let ratio = spectral_norm(&(&jac * &s.e_frame)) / min_singular_value(&(&jac * &s.f_frame));
                    SplittingRow {
                        ic: i,
                        basepoint: x.clone(),
                        status: "estimated".into(),
                        residual: Some(s.convergence_residual),
                        min_angle: Some(min_principal_angle(&s.e_frame, &s.f_frame)),
                        domination_ratio: Some(ratio),
                        f_frame: Some(columns(&s.f_frame)),
                        e_frame: Some(columns(&s.e_frame)),
                    }
                }
                Err(e) => failed_split(i, x, &e),
            }
        })
        .collect())
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn failed_split(i: usize, x: &[f64], e: &LabError) -> SplittingRow {
    SplittingRow {
        ic: i,
        basepoint: x.to_vec(),
        status: format!("failed:{}", e.kind()),
        residual: None,
        min_angle: None,
        domination_ratio: None,
        f_frame: None,
        e_frame: None,
    }
}

pub fn splitting_table(rows: &[SplittingRow]) -> CsvTable {
    let mut t = CsvTable::new(
        "splitting",
        &["ic", "status", "basepoint", "residual", "min_angle", "domination_ratio", "f_frame", "e_frame"],
    );
    let opt = |v: Option<f64>| v.map(report::num).unwrap_or_default();
    let frame = |m: &Option<Vec<Vec<f64>>>| {
        m.as_ref()
            .map(|m| {
                m.iter()
                    .map(|c| report::join(c))
                    .collect::<Vec<_>>()
                    .join("|")
            })
            .unwrap_or_default()
    };
    for r in rows {
        t.row(vec![
            r.ic.to_string(),
            r.status.clone(),
            report::join(&r.basepoint),
            opt(r.residual),
            opt(r.min_angle),
            opt(r.domination_ratio),
            frame(&r.f_frame),
            frame(&r.e_frame),
        ]);
    }
    t
}

/// Runs a named subcommand and writes its CSV and `summary.json` to `out`.
pub fn run_command(command: &str, cfg: &ExperimentConfig, out: &std::path::Path) -> Result<RunOutcome> {
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let (table, results, partial): (CsvTable, serde_json::Value, bool) = match command {
        "gibbs-audit" => {
            let a = run_gibbs_audit(cfg)?;
            (a.table(), serde_json::to_value(&a)?, !a.failures.is_empty())
        }
        "stability-sweep" => {
            let r = run_stability_sweep(cfg)?;
            (r.table(), serde_json::to_value(&r)?, !r.all_ok())
        }
        "recurrence-probe" => {
            let d = recurrence_probe_from_config(cfg)?;
            (recurrence_table(&d), serde_json::to_value(&d)?, false)
        }
        "lyapunov" => {
            let rows = run_lyapunov(cfg)?;
            let dim = cfg.build()?.system.dim();
            let partial = rows.iter().any(|r| r.error.is_some());
            (lyapunov_table(&rows, dim), serde_json::to_value(&rows)?, partial)
        }
        "splitting" => {
            let rows = run_splitting(cfg)?;
            let partial = rows.iter().any(|r| r.status.starts_with("failed"));
            (splitting_table(&rows), serde_json::to_value(&rows)?, partial)
        }
        other => return Err(LabError::Config(format!("unknown command `{other}`"))),
    };
    let csv_path = out.join(format!("{}.csv", table.name()));
    table.write_path(&csv_path)?;
    let summary = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "partial_failure": partial,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "results": results,
    });
    let summary_path = out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutcome {
        files: vec![csv_path, summary_path],
        partial,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::SystemSpec;

    fn small_cat() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_system(SystemSpec::Cat);
        cfg.orbit_length = 4000;
        cfg.burn_in = 100;
        cfg.ic_count = 4;
        cfg.resolution = Some(8);
        cfg.itinerary.samples = 2000;
        cfg.itinerary.depth = 4;
        cfg.splitting.potential_length = Some(200);
        cfg
    }

    #[test]
    fn cat_audit_matches_closed_form_potential() {
        let audit = run_gibbs_audit(&small_cat()).unwrap();
        let log_lambda = 0.962_423_650_119_206_9;
        assert!((audit.report.potential_average + log_lambda).abs() < 1e-9);
        assert_eq!(audit.survivors, 4);
    }

    #[test]
    fn transported_potential_converges_on_linear_map() {
        let built = crate::systems::build_system(&SystemSpec::Cat).unwrap();
        let mut free = built.clone();
        free.constant_splitting = None;
        let x = [0.123, 0.456];
        let v = base_potential_average(&free, built.system.as_ref(), &x, 60, 50, 100).unwrap();
        assert!((v + 0.962_423_650_119_206_9).abs() < 1e-9);
    }

    #[test]
    fn recurrence_of_fixed_point_to_its_dirac() {
        let space = crate::space::PhaseSpace::torus(2);
        let id = crate::system::IdentityMap::new(space.clone());
        let part = GridPartition::new(space, 4).unwrap();
        let x = [0.3, 0.3];
        let target = GridMeasure::dirac(part.clone(), part.cell_index(&x).unwrap()).unwrap();
        let dcfg = MeasureDistanceConfig::for_partition(&part);
        let d = recurrence_count(&id, 0, &x, 50, &part, &target, 1e-3, 5, &dcfg).unwrap();
        assert_eq!((d.evaluations, d.count), (10, 10));
        let far = GridMeasure::dirac(part.clone(), part.cell_index(&[0.8, 0.8]).unwrap()).unwrap();
        let d = recurrence_count(&id, 0, &x, 50, &part, &far, 0.1, 5, &dcfg).unwrap();
        assert_eq!(d.count, 0);
    }

    #[test]
    fn splitting_rows_for_cat() {
        let mut cfg = small_cat();
        cfg.splitting.points = 2;
        let rows = run_splitting(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.status, "estimated");
            let ratio = r.domination_ratio.unwrap();
            assert!((ratio - 0.145_898_033_750_315_4).abs() < 1e-6, "{ratio}");
        }
        assert_eq!(splitting_table(&rows).rows().len(), 2);
    }

    #[test]
    fn sweep_without_perturbation_is_config_error() {
        let err = run_stability_sweep(&small_cat()).unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn run_command_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_command("lyapunov", &small_cat(), dir.path()).unwrap();
        assert!(!out.partial);
        let csv = std::fs::read_to_string(dir.path().join("lyapunov.csv")).unwrap();
        assert!(csv.starts_with("# gibbslab lyapunov schema=1\nic,status,x0,lambda1,lambda2,sum\n"));
        assert!(dir.path().join("summary.json").exists());
        assert!(run_command("nope", &small_cat(), dir.path()).is_err());
    }
}
