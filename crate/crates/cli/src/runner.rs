//! Scenario execution. Grid points are evaluated in parallel; results are
//! collected in grid order and written once, so output bytes never depend
//! on the worker count.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use resetlab::analysis::{bode_data, l2_error_ratio, log_grid, no_overshoot_ratio, step_metrics, windup_threshold, AnalysisError};
use resetlab::sim::{run, SimStatus};
use resetlab::stability::{assemble_closed_loop, hbeta_check, verify_certificate};
use resetlab::tuning::{build_controller, crossover_frequency, mass_plant, phase_margin_df, BuiltController};
use resetlab::{ControllerSpec, LoopSpec, Signal, Trace};

use crate::config::{ConfigError, Family, GridPoint, Params, Scenario};
use crate::output::{line_chart, resets_csv, trace_csv, Cell, Csv, Series};

fn db(mag: f64) -> f64 {
    20.0 * mag.log10()
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("numerical failure at grid point {point}: {message}")]
    Numerical { point: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io { .. } => 2,
            RunError::Numerical { .. } => 3,
        }
    }
}

fn numerical(point: &str, e: impl std::fmt::Display) -> RunError {
    RunError::Numerical {
        point: point.to_string(),
        message: e.to_string(),
    }
}

/// Collects artifacts in memory and writes them in one pass.
struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, body: String) {
        self.files.push((name.into(), body));
    }

    fn write(self, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| RunError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut out = Vec::with_capacity(self.files.len());
        for (name, body) in self.files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io(&path))?;
            out.push(path);
        }
        Ok(out)
    }
}

fn build(sc: &Scenario, g: &GridPoint) -> Result<BuiltController, RunError> {
    let plant = mass_plant().scaled(1.0 / sc.mass);
    let mut built = build_controller(&g.spec, &plant).map_err(|e| numerical(&g.label, e))?;
    built.loop_spec = built.loop_spec.with_saturation(sc.saturation);
    Ok(built)
}

/// Runs the scenario and writes its artifacts under `root/<output>`.
pub fn run_scenario(sc: &Scenario, root: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut art = Artifacts { files: Vec::new() };
    match &sc.params {
        Params::Step => step(sc, &mut art)?,
        Params::Track { discard } => track(sc, *discard, &mut art)?,
        Params::Bode { lo, hi, points, harmonics } => bode(sc, &log_grid(*lo, *hi, *points), harmonics, &mut art)?,
        Params::Sensitivity { lo, hi, points, sim_omegas, periods, discard } => {
            sensitivity(sc, &log_grid(*lo, *hi, *points), sim_omegas, *periods, *discard, &mut art)?
        }
        Params::OvershootMap { pm } => overshoot_map(sc, pm, &mut art)?,
        Params::Windup { low, high } => windup(sc, *low, *high, &mut art)?,
        Params::Stability { kp_scale } => stability(sc, kp_scale, &mut art)?,
    }
    art.write(&root.join(&sc.output))
}

fn status_name(s: SimStatus) -> &'static str {
    match s {
        SimStatus::Completed => "completed",
        SimStatus::Diverged { .. } => "diverged",
    }
}

fn simulate_grid(sc: &Scenario, reference: &Signal) -> Result<Vec<(BuiltController, Trace, SimStatus)>, RunError> {
    sc.grid
        .par_iter()
        .map(|g| {
            let built = build(sc, g)?;
            let out = run(&built.loop_spec, reference, &sc.sim).map_err(|e| numerical(&g.label, e))?;
            Ok((built, out.trace, out.status))
        })
        .collect()
}

fn add_traces(sc: &Scenario, runs: &[(BuiltController, Trace, SimStatus)], art: &mut Artifacts) {
    for (g, (_, tr, _)) in sc.grid.iter().zip(runs) {
        art.add(format!("{}.csv", g.label), trace_csv(tr));
        art.add(format!("{}_resets.csv", g.label), resets_csv(tr));
    }
    for (which, file, ylabel) in [("y", "output.svg", "y"), ("u", "control.svg", "u")] {
        let series: Vec<Series> = sc
            .grid
            .iter()
            .zip(runs)
            .map(|(g, (_, tr, _))| Series {
                name: &g.label,
                x: &tr.t,
                y: if which == "y" { &tr.y } else { &tr.u },
            })
            .collect();
        art.add(file, line_chart(&sc.description, "t [s]", ylabel, false, &series));
    }
}

fn step(sc: &Scenario, art: &mut Artifacts) -> Result<(), RunError> {
    let runs = simulate_grid(sc, &sc.reference)?;
    let mut csv = Csv::new(&[
        "label", "family", "n", "kp", "status", "overshoot_pct", "settling_time", "peak_control",
        "steady_state_error", "y_final",
    ]);
    for (g, (built, tr, status)) in sc.grid.iter().zip(&runs) {
        let (state, m) = match status {
            SimStatus::Diverged { .. } => ("diverged", None),
            SimStatus::Completed => match step_metrics(tr) {
                Ok(m) => ("settled", Some(m)),
                Err(AnalysisError::Unsettled { .. }) => ("unsettled", None),
                Err(e) => return Err(numerical(&g.label, e)),
            },
        };
        let f = |v: Option<f64>| Cell::F(v.unwrap_or(f64::NAN));
        csv.row(&[
            Cell::S(&g.label),
            Cell::S(g.family.tag()),
            Cell::I(g.spec.n as i64),
            Cell::F(built.kp),
            Cell::S(state),
            f(m.map(|m| m.overshoot_pct)),
            f(m.map(|m| m.settling_time)),
            Cell::F(m.map(|m| m.peak_control).unwrap_or_else(|| tr.u.iter().fold(0.0, |a, v| a.max(v.abs())))),
            f(m.map(|m| m.steady_state_error)),
            f(m.map(|m| m.y_final)),
        ]);
    }
    art.add("metrics.csv", csv.finish());
    add_traces(sc, &runs, art);
    Ok(())
}

fn track(sc: &Scenario, discard: f64, art: &mut Artifacts) -> Result<(), RunError> {
    let runs = simulate_grid(sc, &sc.reference)?;
    let mut csv = Csv::new(&["label", "family", "n", "kp", "status", "l2_error", "l2_ratio"]);
    for (g, (built, tr, status)) in sc.grid.iter().zip(&runs) {
        let (l2, ratio) = match status {
            SimStatus::Diverged { .. } => (f64::NAN, f64::NAN),
            SimStatus::Completed => {
                let ratio = l2_error_ratio(tr, &sc.reference, discard).map_err(|e| numerical(&g.label, e))?;
                let start = ((tr.len() as f64) * discard).floor() as usize;
                let l2 = (tr.e[start..].iter().map(|v| v * v).sum::<f64>() * tr.dt()).sqrt();
                (l2, ratio)
            }
        };
        csv.row(&[
            Cell::S(&g.label),
            Cell::S(g.family.tag()),
            Cell::I(g.spec.n as i64),
            Cell::F(built.kp),
            Cell::S(status_name(*status)),
            Cell::F(l2),
            Cell::F(ratio),
        ]);
    }
    art.add("metrics.csv", csv.finish());
    add_traces(sc, &runs, art);
    // tracking error is the interesting signal here
    let series: Vec<Series> = sc
        .grid
        .iter()
        .zip(&runs)
        .map(|(g, (_, tr, _))| Series { name: &g.label, x: &tr.t, y: &tr.e })
        .collect();
    art.add("error.svg", line_chart(&sc.description, "t [s]", "e", false, &series));
    Ok(())
}

fn bode(sc: &Scenario, grid: &[f64], harmonics: &[u32], art: &mut Artifacts) -> Result<(), RunError> {
    let rows: Vec<_> = sc
        .grid
        .par_iter()
        .map(|g| {
            let built = build(sc, g)?;
            let rows = bode_data(&built.loop_spec, grid, harmonics).map_err(|e| numerical(&g.label, e))?;
            let wc = crossover_frequency(&built.loop_spec, g.spec.omega_c).map_err(|e| numerical(&g.label, e))?;
            let pm = phase_margin_df(&built.loop_spec, g.spec.omega_c).map_err(|e| numerical(&g.label, e))?;
            Ok((built.kp, rows, wc, pm))
        })
        .collect::<Result<Vec<_>, RunError>>()?;

    let mut csv = Csv::new(&["label", "omega", "harmonic", "re", "im", "magnitude_db", "phase_deg"]);
    let mut margins = Csv::new(&["label", "family", "n", "kp", "crossover", "phase_margin_deg"]);
    let mut curves = Vec::new();
    for (g, (kp, data, wc, pm)) in sc.grid.iter().zip(&rows) {
        for r in data {
            csv.row(&[
                Cell::S(&g.label),
                Cell::F(r.omega),
                Cell::I(r.n as i64),
                Cell::F(r.value.re),
                Cell::F(r.value.im),
                Cell::F(db(r.value.norm())),
                Cell::F(r.value.arg().to_degrees()),
            ]);
        }
        margins.row(&[
            Cell::S(&g.label),
            Cell::S(g.family.tag()),
            Cell::I(g.spec.n as i64),
            Cell::F(*kp),
            Cell::F(*wc),
            Cell::F(*pm),
        ]);
        for &h in harmonics {
            let (x, y): (Vec<f64>, Vec<f64>) =
                data.iter().filter(|r| r.n == h).map(|r| (r.omega, db(r.value.norm()))).unzip();
            curves.push((format!("{} H{h}", g.label), x, y));
        }
    }
    art.add("bode.csv", csv.finish());
    art.add("margins.csv", margins.finish());
    let series: Vec<Series> = curves.iter().map(|(n, x, y)| Series { name: n, x, y }).collect();
    art.add("bode_magnitude.svg", line_chart(&sc.description, "ω [rad/s]", "|G| [dB]", true, &series));
    Ok(())
}

fn df_sensitivity(l: &LoopSpec, w: f64) -> Result<f64, resetlab::sim::SimError> {
    let g = l.open_loop_df(w)?;
    Ok(1.0 / (g + 1.0).norm())
}

fn sensitivity(
    sc: &Scenario,
    grid: &[f64],
    sim_omegas: &[f64],
    periods: f64,
    discard: f64,
    art: &mut Artifacts,
) -> Result<(), RunError> {
    let built: Vec<BuiltController> = sc.grid.iter().map(|g| build(sc, g)).collect::<Result<_, _>>()?;
    let curves: Vec<Vec<f64>> = sc
        .grid
        .iter()
        .zip(&built)
        .map(|(g, b)| {
            grid.iter()
                .map(|&w| df_sensitivity(&b.loop_spec, w).map_err(|e| numerical(&g.label, e)))
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let cells: Vec<(usize, f64)> = (0..sc.grid.len())
        .flat_map(|i| sim_omegas.iter().map(move |&w| (i, w)))
        .collect();
    let sims: Vec<(f64, &'static str)> = cells
        .par_iter()
        .map(|&(i, w)| {
            let point = format!("{} ω={w}", sc.grid[i].label);
            let r = Signal::sine(w);
            let cfg = sc.sim.with_duration(periods * 2.0 * PI / w);
            let out = run(&built[i].loop_spec, &r, &cfg).map_err(|e| numerical(&point, e))?;
            match out.status {
                SimStatus::Diverged { .. } => Ok((f64::NAN, "diverged")),
                SimStatus::Completed => l2_error_ratio(&out.trace, &r, discard)
                    .map(|v| (v, "completed"))
                    .map_err(|e| numerical(&point, e)),
            }
        })
        .collect::<Result<_, RunError>>()?;

    let mut df = Csv::new(&["label", "omega", "magnitude", "magnitude_db"]);
    for (g, curve) in sc.grid.iter().zip(&curves) {
        for (&w, &s) in grid.iter().zip(curve) {
            df.row(&[Cell::S(&g.label), Cell::F(w), Cell::F(s), Cell::F(db(s))]);
        }
    }
    art.add("sensitivity_df.csv", df.finish());

    if !cells.is_empty() {
        let mut sim = Csv::new(&["label", "family", "n", "omega", "status", "l2_ratio", "df_magnitude"]);
        for (&(i, w), (ratio, status)) in cells.iter().zip(&sims) {
            let g = &sc.grid[i];
            let s = df_sensitivity(&built[i].loop_spec, w).map_err(|e| numerical(&g.label, e))?;
            sim.row(&[
                Cell::S(&g.label),
                Cell::S(g.family.tag()),
                Cell::I(g.spec.n as i64),
                Cell::F(w),
                Cell::S(status),
                Cell::F(*ratio),
                Cell::F(s),
            ]);
        }
        art.add("sensitivity_sim.csv", sim.finish());
    }
    let db_curves: Vec<Vec<f64>> = curves.iter().map(|c| c.iter().map(|&s| db(s)).collect()).collect();
    let series: Vec<Series> = sc
        .grid
        .iter()
        .zip(&db_curves)
        .map(|(g, y)| Series { name: &g.label, x: grid, y })
        .collect();
    art.add("sensitivity.svg", line_chart(&sc.description, "ω [rad/s]", "|S| [dB]", true, &series));
    Ok(())
}

fn overshoot_map(sc: &Scenario, pms: &[f64], art: &mut Artifacts) -> Result<(), RunError> {
    let plant = mass_plant().scaled(1.0 / sc.mass);
    let cells: Vec<(usize, f64)> = (0..sc.grid.len())
        .flat_map(|i| pms.iter().map(move |&pm| (i, pm)))
        .collect();
    let results: Vec<(&'static str, f64, f64)> = cells
        .par_iter()
        .map(|&(i, pm)| {
            let template: &ControllerSpec = &sc.grid[i].spec;
            match no_overshoot_ratio(template, &plant, pm, &sc.sim) {
                Ok(p) => Ok(("ok", p.a, p.ratio)),
                Err(AnalysisError::NotAchievable { .. }) => Ok(("not-achievable", f64::NAN, f64::NAN)),
                Err(e) => Err(numerical(&format!("{} pm={pm}", sc.grid[i].label), e)),
            }
        })
        .collect::<Result<_, RunError>>()?;

    let mut csv = Csv::new(&["label", "n", "pm_deg", "status", "a", "ratio"]);
    for (&(i, pm), (status, a, ratio)) in cells.iter().zip(&results) {
        let g = &sc.grid[i];
        csv.row(&[
            Cell::S(&g.label),
            Cell::I(g.spec.n as i64),
            Cell::F(pm),
            Cell::S(status),
            Cell::F(*a),
            Cell::F(*ratio),
        ]);
    }
    art.add("boundary.csv", csv.finish());
    let ratios: Vec<Vec<f64>> = results.chunks(pms.len()).map(|c| c.iter().map(|r| r.2).collect()).collect();
    let series: Vec<Series> = sc
        .grid
        .iter()
        .zip(&ratios)
        .map(|(g, y)| Series { name: &g.label, x: pms, y })
        .collect();
    art.add("boundary.svg", line_chart(&sc.description, "phase margin [deg]", "ω_c/ω_l", false, &series));
    Ok(())
}

fn windup(sc: &Scenario, low: f64, high: f64, art: &mut Artifacts) -> Result<(), RunError> {
    let results: Vec<_> = sc
        .grid
        .par_iter()
        .map(|g| {
            let built = build(sc, g)?;
            windup_threshold(&built.loop_spec, low, high, &sc.sim).map_err(|e| numerical(&g.label, e))
        })
        .collect::<Result<Vec<_>, RunError>>()?;

    // one row per family, one column group per n
    let mut ns: Vec<u32> = sc.grid.iter().map(|g| g.spec.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut header = vec!["family".to_string()];
    for n in &ns {
        header.extend([format!("n{n}_threshold"), format!("n{n}_low"), format!("n{n}_high")]);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for family in [Family::Pind, Family::Cr] {
        if !sc.grid.iter().any(|g| g.family == family) {
            continue;
        }
        let mut row = vec![Cell::S(family.tag())];
        for n in &ns {
            match sc.grid.iter().position(|g| g.family == family && g.spec.n == *n) {
                Some(i) => {
                    let r = &results[i];
                    row.extend([Cell::F(r.threshold), Cell::F(r.bracket.0), Cell::F(r.bracket.1)]);
                }
                None => row.extend([Cell::F(f64::NAN), Cell::F(f64::NAN), Cell::F(f64::NAN)]),
            }
        }
        csv.row(&row);
    }
    art.add("windup.csv", csv.finish());
    Ok(())
}

fn stability(sc: &Scenario, scales: &[f64], art: &mut Artifacts) -> Result<(), RunError> {
    let cells: Vec<(usize, f64)> = (0..sc.grid.len())
        .flat_map(|i| scales.iter().map(move |&k| (i, k)))
        .collect();
    let rows: Vec<_> = cells
        .par_iter()
        .map(|&(i, scale)| {
            let g = &sc.grid[i];
            let point = format!("{} kp×{scale}", g.label);
            let base = build(sc, g)?;
            let spec = ControllerSpec { kp: Some(base.kp * scale), ..g.spec.clone() };
            let gp = GridPoint { spec, ..g.clone() };
            let l = build(sc, &gp)?.loop_spec;
            let lti = assemble_closed_loop(&l.base_linear()).map_err(|e| numerical(&point, e))?;
            let max_re = lti.acl.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let mut row = (base.kp * scale, "linear", false, [f64::NAN; 5], max_re);
            if let Some(elem) = l.reset_element() {
                let gammas = elem.gammas().to_vec();
                let m = assemble_closed_loop(&l).map_err(|e| numerical(&point, e))?;
                let out = hbeta_check(&m, &gammas).map_err(|e| numerical(&point, e))?;
                row.1 = "not-certified";
                if let Some(c) = out.certificate() {
                    let v = verify_certificate(&m, &gammas, c);
                    row.1 = "certified";
                    row.2 = v.holds();
                    row.3 = [c.beta, c.p_rho, v.lyapunov_max_eig, v.eps_margin, v.p_min_eig];
                }
            }
            Ok(row)
        })
        .collect::<Result<_, RunError>>()?;

    let mut csv = Csv::new(&[
        "label", "kp_scale", "kp", "hbeta", "verified", "beta", "p_rho", "lyapunov_max_eig", "eps_margin",
        "p_min_eig", "lti_max_real_eig",
    ]);
    for (&(i, scale), (kp, state, verified, v, max_re)) in cells.iter().zip(&rows) {
        csv.row(&[
            Cell::S(&sc.grid[i].label),
            Cell::F(scale),
            Cell::F(*kp),
            Cell::S(state),
            Cell::S(if *verified { "true" } else { "false" }),
            Cell::F(v[0]),
            Cell::F(v[1]),
            Cell::F(v[2]),
            Cell::F(v[3]),
            Cell::F(v[4]),
            Cell::F(*max_re),
        ]);
    }
    art.add("hbeta.csv", csv.finish());
    Ok(())
}
