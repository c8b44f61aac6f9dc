//! One function per subcommand. Each writes its files through an
//! [`OutputSet`] and closes with a manifest holding the resolved config.

use std::path::{Path, PathBuf};

use serde_json::json;
use wschaos::analysis::{
    find_island_family, lyapunov_map, poincare_section, resonance_locus, rotation_locus, Locus, Observable, OrbitStatus,
};
use wschaos::gpe::{run_projected, Field};
use wschaos::lattice::{integrate_with, sample_times, wrap_angle, Clock, IntegrationSettings, LatticeSystem, Trajectory};
use wschaos::units::{rescale, ModelParams};
use wschaos::ws_basis::{chi_tensor, content_hash, solve_ws_states, BasisFile, ChiTensor, NnChi, WsBasis};

use crate::config::{RunConfig, SolverChoice};
use crate::output::{fmt_f64, two_columns, Csv, OutputSet, Table};
use crate::CliError;

/// A loaded config together with the overrides that shaped it.
pub struct Context {
    pub config: RunConfig,
    pub overrides: Vec<String>,
}

impl Context {
    pub fn new(config: RunConfig, overrides: Vec<String>) -> Self {
        Context { config, overrides }
    }

    fn out_dir(&self) -> &Path {
        &self.config.output.dir
    }

    fn params(&self) -> Result<ModelParams, CliError> {
        self.config.model_params()
    }

    /// Basis from the configured file, a matching `basis.json` left in the
    /// output directory, or a fresh diagonalization.
    fn basis(&self) -> Result<(WsBasis, ChiTensor), CliError> {
        let params = self.params()?;
        let bbox = self.config.bbox;
        let expected = content_hash(&params, &bbox);
        let source = match &self.config.basis.file {
            Some(f) => Some((if f.is_absolute() { f.clone() } else { self.out_dir().join(f) }, true)),
            None => Some(self.out_dir().join("basis.json")).filter(|p| p.exists()).map(|p| (p, false)),
        };
        if let Some((path, required)) = source {
            let file = BasisFile::read(&path)?;
            if file.content_hash == expected {
                log::info!("loaded basis from {}", path.display());
                let (basis, chi) = file.into_parts()?;
                let chi =
                    if chi.cutoff_radius >= self.config.basis.chi_cutoff { chi } else { chi_tensor(&basis, self.config.basis.chi_cutoff)? };
                return Ok((basis, chi));
            }
            if required {
                return Err(CliError::Usage(format!("{} was built for other parameters or box", path.display())));
            }
            log::info!("ignoring {}: built for other parameters", path.display());
        }
        log::info!("diagonalizing {} wells at {} points per period", bbox.well_count, bbox.points_per_period);
        let basis = solve_ws_states(&params, &bbox)?;
        let chi = chi_tensor(&basis, self.config.basis.chi_cutoff)?;
        Ok((basis, chi))
    }

    /// Couplings for the mode model: the configured override or the
    /// computed tensor's nearest-neighbor part.
    fn nn_chi(&self) -> Result<NnChi, CliError> {
        match self.config.basis.chi {
            Some(chi) => Ok(chi),
            None => Ok(self.basis()?.1.nn()),
        }
    }

    fn finish(
        &self,
        out: OutputSet,
        command: &str,
        inputs: serde_json::Value,
        diagnostics: serde_json::Value,
    ) -> Result<PathBuf, CliError> {
        out.finish(command, &self.config, &self.overrides, inputs, diagnostics)
    }
}

fn well_label(prefix: &str, n: i32) -> String {
    format!("{prefix}_{n}")
}

/// `clock` names the time unit of the written tables, if they have one.
fn inputs(params: &ModelParams, chi: &NnChi, clock: Option<Clock>) -> serde_json::Value {
    let clock = clock.map(|c| match c {
        Clock::Raw => "raw",
        Clock::Rescaled => "rescaled",
    });
    json!({ "params": params, "chi": chi, "rescaled": rescale(params, chi).ok(), "clock": clock })
}

pub fn cmd_basis(ctx: &Context) -> Result<String, CliError> {
    let params = ctx.params()?;
    let basis = solve_ws_states(&params, &ctx.config.bbox)?;
    let chi = chi_tensor(&basis, ctx.config.basis.chi_cutoff)?;
    let nn = chi.nn();
    let mut out = OutputSet::create(ctx.out_dir())?;
    let file = BasisFile::new(&basis, &chi);
    out.write("basis.json", &serde_json::to_vec(&file).map_err(|e| CliError::Io(e.to_string()))?)?;

    let mut table = Csv::new(&["k", "l", "m", "chi"]);
    for (t, v) in chi.entries() {
        table.row(&[t[0].to_string(), t[1].to_string(), t[2].to_string(), fmt_f64(v)]);
    }
    out.write_csv("chi.csv", &table)?;

    let central: Vec<i32> = basis.central_wells().collect();
    let ladder = basis.ladder_deviation(central[0]..=central[central.len() - 1]);
    let translation = basis.translation_deviation(0);
    let rp = rescale(&params, &nn).ok();
    let mut report = String::new();
    report.push_str(&format!("chi_000  = {:.6}\n", nn.on_site));
    report.push_str(&format!("chi_001  = {:.6}\n", nn.forward));
    report.push_str(&format!("chi_00-1 = {:.6}\n", nn.backward));
    if let Some(rp) = rp {
        report.push_str(&format!("F_rescaled = {:.6}\nepsilon = {:.6}\nbeta = {:.6}\n", rp.force_rescaled, rp.epsilon, rp.beta));
    }
    report.push_str(&format!("ladder deviation = {ladder:.3e}\n"));
    if let Some(d) = translation {
        report.push_str(&format!("translation deviation = {d:.3e}\n"));
    }
    report.push_str(&format!("content hash = {}\n", file.content_hash));
    out.write("chi_report.txt", report.as_bytes())?;
    let diagnostics = json!({
        "wells": [basis.first_well(), basis.last_well()],
        "ladder_deviation": ladder,
        "translation_deviation": translation,
        "content_hash": file.content_hash,
    });
    ctx.finish(out, "basis", inputs(&params, &nn, None), diagnostics)?;
    Ok(report)
}

fn model_trajectory(ctx: &Context, chi: NnChi, times: &[f64]) -> Result<Trajectory, CliError> {
    let cfg = &ctx.config;
    let (lo, hi) = cfg.model_wells();
    let system = LatticeSystem::new(ctx.params()?, chi, lo..=hi, Clock::Raw)?.with_coupling_scale(cfg.run.coupling_scale);
    let c0 = cfg.preparation.mode_state(lo, hi)?;
    let settings = IntegrationSettings::new(cfg.run.tol).with_method(cfg.run.method).with_form(cfg.run.form);
    Ok(integrate_with(&c0, &system, times, &settings)?)
}

fn model_csv(traj: &Trajectory) -> Csv {
    let wells: Vec<i32> = (traj.first_well..traj.first_well + traj.states[0].len() as i32).collect();
    let mut header = vec!["t".to_string()];
    header.extend(wells.iter().map(|&n| well_label("I", n)));
    header.extend(wells.iter().map(|&n| well_label("theta", n)));
    let mut csv = Csv::new(&header);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![*t];
        row.extend(s.iter().map(|c| c.norm_sqr()));
        row.extend(s.iter().map(|c| wrap_angle(c.arg())));
        csv.floats(&row);
    }
    csv
}

/// Per-well RMS and largest population difference over common samples.
fn population_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let k = a.len().min(b.len());
    (0..k)
        .map(|w| {
            let n = a[w].len().min(b[w].len());
            let d: Vec<f64> = (0..n).map(|j| a[w][j] - b[w][j]).collect();
            let rms = (d.iter().map(|x| x * x).sum::<f64>() / n.max(1) as f64).sqrt();
            (rms, d.iter().fold(0.0, |m: f64, x| m.max(x.abs())))
        })
        .collect()
}

pub fn cmd_evolve(ctx: &Context, solver: SolverChoice) -> Result<String, CliError> {
    let cfg = &ctx.config;
    let params = ctx.params()?;
    let times = sample_times(cfg.run.horizon(&params), cfg.run.samples);
    let mut out = OutputSet::create(ctx.out_dir())?;
    let mut diagnostics = serde_json::Map::new();
    let mut summary = String::new();
    let report_wells = &cfg.run.report_wells;

    let need_basis = solver != SolverChoice::Model || cfg.basis.chi.is_none();
    let basis = if need_basis { Some(ctx.basis()?) } else { None };
    let chi = match (cfg.basis.chi, &basis) {
        (Some(chi), _) => chi,
        (None, Some((_, t))) => t.nn(),
        (None, None) => unreachable!("basis is built whenever chi is not configured"),
    };

    let mut model_pops = None;
    if solver != SolverChoice::Gpe {
        let traj = model_trajectory(ctx, chi, &times)?;
        out.write_csv("trajectory_model.csv", &model_csv(&traj))?;
        diagnostics.insert("model".into(), json!(traj.diagnostics));
        summary.push_str(&format!("model: {} samples, norm drift {:.3e}\n", traj.times.len(), traj.diagnostics.norm_drift));
        model_pops = Some(report_wells.iter().map(|&n| traj.population_series(n)).collect::<Vec<_>>());
    }

    let mut gpe_pops = None;
    if solver != SolverChoice::Model {
        let (basis, _) = basis.as_ref().expect("built above");
        let field = Field::from_preparation(basis, &cfg.preparation)?;
        let (samples, diag) = run_projected(&field, basis, &cfg.run.gpe, &times)?;
        let (lo, hi) = cfg.model_wells();
        let wells: Vec<i32> = (lo..=hi).filter(|&n| basis.contains(n)).collect();
        let mut header = vec!["t".to_string()];
        header.extend(wells.iter().map(|&n| well_label("I", n)));
        header.push("completeness".into());
        let mut csv = Csv::new(&header);
        for s in &samples {
            let mut row = vec![s.time];
            row.extend(wells.iter().map(|&n| s.modes.population(n)));
            row.push(s.completeness);
            csv.floats(&row);
        }
        out.write_csv("trajectory_gpe.csv", &csv)?;
        let min_completeness = samples.iter().map(|s| s.completeness).fold(f64::INFINITY, f64::min);
        diagnostics.insert("gpe".into(), json!({ "diagnostics": diag, "min_completeness": min_completeness }));
        summary.push_str(&format!(
            "gpe: {} samples, norm drift {:.3e}, min completeness {min_completeness:.6}\n",
            samples.len(),
            diag.norm_drift
        ));
        gpe_pops = Some(report_wells.iter().map(|&n| samples.iter().map(|s| s.modes.population(n)).collect()).collect::<Vec<Vec<f64>>>());
    }

    if let (Some(m), Some(g)) = (&model_pops, &gpe_pops) {
        let gaps = population_gap(g, m);
        let mut csv = Csv::new(&["well", "rms", "max_abs"]);
        for (&n, (rms, max)) in report_wells.iter().zip(&gaps) {
            csv.row(&[n.to_string(), fmt_f64(*rms), fmt_f64(*max)]);
            summary.push_str(&format!("well {n}: rms population difference {rms:.3e}\n"));
        }
        out.write_csv("comparison.csv", &csv)?;
        let overall = (gaps.iter().map(|g| g.0 * g.0).sum::<f64>() / gaps.len().max(1) as f64).sqrt();
        diagnostics.insert(
            "comparison".into(),
            json!({ "wells": report_wells, "rms": gaps.iter().map(|g| g.0).collect::<Vec<_>>(), "overall_rms": overall }),
        );
    }
    ctx.finish(out, "evolve", inputs(&params, &chi, Some(Clock::Raw)), json!(diagnostics))?;
    Ok(summary)
}

fn axis_label(o: &Observable) -> String {
    match *o {
        Observable::Action(n) => format!("I{n}"),
        Observable::AngleDiff(1, 0) => "dtheta".into(),
        Observable::AngleDiff(a, b) => format!("theta{a}-theta{b}"),
    }
}

fn section_system(ctx: &Context, first: i32, last: i32, scale: f64) -> Result<(LatticeSystem, NnChi), CliError> {
    let chi = ctx.nn_chi()?;
    Ok((LatticeSystem::new(ctx.params()?, chi, first..=last, Clock::Rescaled)?.with_coupling_scale(scale), chi))
}

pub fn cmd_section(ctx: &Context) -> Result<String, CliError> {
    let sc = &ctx.config.section;
    let spec = &sc.spec;
    let (system, chi) = section_system(ctx, spec.plane.first_well, spec.plane.last_well, sc.coupling_scale)?;
    let launches = sc.launches.values();
    let section = poincare_section(spec, &launches, &system, spec.max_crossings)?;
    let mut out = OutputSet::create(ctx.out_dir())?;

    let launch_col = format!("launch_I{}", spec.plane.scanned);
    let mut points =
        Csv::new(&[launch_col.clone(), "crossing_index".into(), axis_label(&spec.record_axes[0]), axis_label(&spec.record_axes[1])]);
    let mut orbits = Csv::new(&[launch_col.as_str(), "crossings", "status", "spread", "rotation_number", "max_residual"]);
    for (k, o) in section.orbits.iter().enumerate() {
        for (j, p) in o.points.iter().enumerate() {
            points.row(&[fmt_f64(o.launch), j.to_string(), fmt_f64(p[0]), fmt_f64(p[1])]);
        }
        let status = match o.status {
            OrbitStatus::Complete => "complete".to_string(),
            OrbitStatus::Horizon => "horizon".to_string(),
            OrbitStatus::Empty => "empty".to_string(),
            OrbitStatus::Singular { well, .. } => format!("singular_{well}"),
        };
        let rot = o.rotation_number().map_or_else(|| "nan".to_string(), fmt_f64);
        orbits.row(&[fmt_f64(o.launch), o.points.len().to_string(), status.clone(), fmt_f64(o.spread()), rot, fmt_f64(o.max_residual)]);
        if ctx.config.output.plot_files {
            let comment = format!("{launch_col} = {}\nstatus = {status}", fmt_f64(o.launch));
            out.write(&format!("orbits/orbit_{k:03}.dat"), two_columns(&comment, o.points.iter().copied()).as_bytes())?;
        }
    }
    out.write_csv("section.csv", &points)?;
    out.write_csv("orbits.csv", &orbits)?;

    let mut families = Vec::new();
    if !sc.islands.is_empty() {
        let mut csv = Csv::new(&["p", "q", "launch", "rotation_number", "clusters"]);
        for query in &sc.islands {
            let fam = find_island_family(spec, &system, query.p, query.q, (query.from, query.to), &sc.island_search)?;
            for m in &fam.members {
                csv.row(&[query.p.to_string(), query.q.to_string(), fmt_f64(m.launch), fmt_f64(m.rotation), m.clusters.to_string()]);
            }
            families.push(json!({ "p": query.p, "q": query.q, "found": fam.is_found(), "extent": fam.extent() }));
        }
        out.write_csv("islands.csv", &csv)?;
    }
    let crossings: usize = section.orbits.iter().map(|o| o.points.len()).sum();
    let max_residual = section.orbits.iter().map(|o| o.max_residual).fold(0.0, f64::max);
    let diagnostics = json!({ "orbits": section.orbits.len(), "crossings": crossings, "max_residual": max_residual, "islands": families });
    ctx.finish(out, "section", inputs(&system.params, &chi, Some(Clock::Rescaled)), diagnostics)?;
    let mut summary = format!("{} orbits, {crossings} crossings, max trigger residual {max_residual:.2e}\n", section.orbits.len());
    for f in &families {
        summary.push_str(&format!("{}/{} islands: {}\n", f["p"], f["q"], if f["found"] == true { "found" } else { "not found" }));
    }
    Ok(summary)
}

pub fn cmd_lyapunov(ctx: &Context) -> Result<String, CliError> {
    let lc = &ctx.config.lyapunov;
    let (system, chi) = section_system(ctx, lc.plane.first_well, lc.plane.last_well, lc.coupling_scale)?;
    let launches = lc.launches.values();
    let results = lyapunov_map(&lc.plane, &launches, &system, &lc.settings)?;
    let mut out = OutputSet::create(ctx.out_dir())?;
    let mut csv =
        Csv::new(&[format!("launch_I{}", lc.plane.scanned).as_str(), "exponent", "converged", "classification", "relative_spread"]);
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for (x, r) in &results {
        let class = serde_json::to_value(r.classification).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        *counts.entry(class.clone()).or_default() += 1;
        csv.row(&[fmt_f64(*x), fmt_f64(r.exponent), r.converged.to_string(), class, fmt_f64(r.spread)]);
    }
    out.write_csv("lyapunov.csv", &csv)?;
    ctx.finish(out, "lyapunov", inputs(&system.params, &chi, Some(Clock::Rescaled)), json!({ "classes": counts }))?;
    Ok(counts.iter().map(|(k, v)| format!("{k}: {v}\n")).collect())
}

pub fn cmd_resonances(ctx: &Context) -> Result<String, CliError> {
    let params = ctx.params()?;
    let chi = ctx.nn_chi()?;
    let rp = rescale(&params, &chi)?;
    let spec = &ctx.config.section.spec;
    let plane = &spec.plane;
    let wells: Vec<i32> = (plane.first_well..=plane.last_well).collect();
    let mut header = vec!["kind".to_string(), "a".into(), "b".into(), "n".into(), "m".into(), format!("I{}", plane.scanned)];
    header.extend(wells.iter().map(|&n| well_label("I", n)));
    let mut csv = Csv::new(&header);
    let mut summary = String::new();
    let blank = vec!["nan".to_string(); wells.len() + 1];
    for r in &ctx.config.resonances.ratios {
        let mut row = vec!["ratio".to_string(), r.a.to_string(), r.b.to_string(), r.n.to_string(), r.m.to_string()];
        match resonance_locus(r.a, r.b, r.n, r.m, &rp, plane)? {
            Locus::At(s) => {
                row.push(fmt_f64(s.scanned));
                row.extend(s.actions.iter().map(|a| fmt_f64(a.1)));
                summary.push_str(&format!("{}:{} (wells {}, {}): I{} = {:.6}\n", r.a, r.b, r.n, r.m, plane.scanned, s.scanned));
            }
            Locus::None { reason } => {
                row.extend(blank.iter().cloned());
                summary.push_str(&format!("{}:{} (wells {}, {}): none, {reason}\n", r.a, r.b, r.n, r.m));
            }
        }
        csv.row(&row);
    }
    for &[p, q] in &ctx.config.resonances.rotations {
        let xs = rotation_locus(p, q, spec, &rp);
        for x in &xs {
            let mut row = vec!["rotation".to_string(), p.to_string(), q.to_string(), String::new(), String::new(), fmt_f64(*x)];
            let launch = plane.launch(*x)?;
            row.extend(wells.iter().map(|&n| fmt_f64(launch.population(n))));
            csv.row(&row);
        }
        let shown: Vec<String> = xs.iter().map(|x| format!("{x:.6}")).collect();
        summary.push_str(&format!("rotation {p}/{q} in the decoupled flow: I{} = [{}]\n", plane.scanned, shown.join(", ")));
    }
    let mut out = OutputSet::create(ctx.out_dir())?;
    out.write_csv("resonances.csv", &csv)?;
    ctx.finish(out, "resonances", inputs(&params, &chi, None), json!({}))?;
    Ok(summary)
}

/// RMS population difference between two trajectory tables on shared wells.
pub fn cmd_compare(a: &Path, b: &Path, wells: &[i32], report: Option<&Path>) -> Result<String, CliError> {
    let read = |p: &Path| -> Result<Table, CliError> {
        Table::parse(&std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?)
    };
    let (ta, tb) = (read(a)?, read(b)?);
    let (time_a, time_b) = (
        ta.column("t").ok_or_else(|| CliError::Usage(format!("{} has no t column", a.display())))?,
        tb.column("t").ok_or_else(|| CliError::Usage(format!("{} has no t column", b.display())))?,
    );
    if time_a.len() != time_b.len() || time_a.iter().zip(&time_b).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0)) {
        return Err(CliError::Usage("the two tables are not sampled at the same times".into()));
    }
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    for &n in wells {
        let col = well_label("I", n);
        match (ta.column(&col), tb.column(&col)) {
            (Some(x), Some(y)) => {
                pa.push(x);
                pb.push(y);
            }
            _ => return Err(CliError::Usage(format!("column {col} is missing from one of the tables"))),
        }
    }
    let gaps = population_gap(&pa, &pb);
    let mut summary = String::new();
    for (n, (rms, max)) in wells.iter().zip(&gaps) {
        summary.push_str(&format!("well {n}: rms {rms:.6e}, max {max:.6e}\n"));
    }
    if let Some(path) = report {
        let body = json!({
            "a": a, "b": b, "wells": wells,
            "rms": gaps.iter().map(|g| g.0).collect::<Vec<_>>(),
            "max_abs": gaps.iter().map(|g| g.1).collect::<Vec<_>>(),
        });
        let mut bytes = serde_json::to_vec_pretty(&body).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(summary)
}
