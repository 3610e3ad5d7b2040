use anyhow::{bail, ensure, Context, Result};
use mdclock::angular::HalfInt;
use mdclock::catalog::bundled;
use mdclock::fit::{fit_saturation, invert_polarizability_band, DecayTrace};
use mdclock::magic::{count_sign_changes, find_magic, scan_differential, DifferentialModel, HyperModel, MagicError, StatePair};
use mdclock::polarizability::{
    trap_depth, LevelResponse, PolarizabilityError, PolarizabilityOptions, PolarizabilitySample,
};
use mdclock::spin::{build_hamiltonian_with_g, relaxation_time, time_grid, SpinGeometry, Subspace};
use mdclock::units::{self, ATOMIC_MASS_UNIT};
use mdclock::{assemble_budget, Budget64};
use serde_json::{json, Value};

use crate::config::{load_catalog, Format, LoadedCatalog, RunConfig};
use crate::output::{num, Provenance};
use crate::{AlphaArgs, BudgetArgs, CatalogArgs, HyperArgs, LifetimeArgs, MagicArgs, ScanArgs, SpinArgs};

pub enum Body {
    Table {
        columns: Vec<String>,
        rows: Vec<Vec<Value>>,
        notes: Vec<String>,
    },
    Report {
        text: String,
        value: Value,
    },
}

pub struct Artifact {
    pub provenance: Provenance,
    pub body: Body,
}

fn cell(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map(num).unwrap_or_else(|| n.to_string()),
        Value::String(s) if s.contains(',') || s.contains('"') => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

impl Artifact {
    pub fn render(&self, format: Option<Format>) -> String {
        if format == Some(Format::Json) {
            return self.record();
        }
        let mut s = self.provenance.header();
        match &self.body {
            Body::Table { columns, rows, notes } => {
                for n in notes {
                    s.push_str(&format!("# {n}\n"));
                }
                s.push_str(&columns.join(","));
                s.push('\n');
                for r in rows {
                    let line: Vec<String> = r.iter().map(cell).collect();
                    s.push_str(&line.join(","));
                    s.push('\n');
                }
            }
            Body::Report { text, .. } => s.push_str(text),
        }
        s
    }

    pub fn record(&self) -> String {
        let result = match &self.body {
            Body::Table { columns, rows, notes } => json!({ "columns": columns, "rows": rows, "notes": notes }),
            Body::Report { value, .. } => value.clone(),
        };
        self.provenance.record(result)
    }
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn apply_catalog(cfg: &mut RunConfig, a: &CatalogArgs) {
    let c = &mut cfg.catalog;
    if a.levels.is_some() {
        c.levels = a.levels.clone();
    }
    if a.lines_calculated.is_some() {
        c.lines_calculated = a.lines_calculated.clone();
    }
    if a.lines_experimental.is_some() {
        c.lines_experimental = a.lines_experimental.clone();
    }
    if let Some(p) = a.policy {
        c.policy = p;
    }
    if a.no_continuum {
        c.continuum = false;
    }
}

fn provenance(command: &str, cfg: &RunConfig, args: &impl serde::Serialize, sources: Vec<crate::config::Source>) -> Provenance {
    let config = json!({ "run": cfg, "args": args });
    Provenance::new(command, config, sources)
}

fn with_catalog(cfg: &mut RunConfig, a: &CatalogArgs) -> Result<LoadedCatalog> {
    apply_catalog(cfg, a);
    cfg.validate()?;
    load_catalog(&cfg.catalog)
}

/// `from, from + step, …` up to `to`, computed by index so no error accumulates.
fn grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    ensure!(from.is_finite() && to.is_finite() && from > 0.0, "grid bounds must be finite and positive");
    ensure!(step > 0.0 && step.is_finite(), "step must be positive");
    ensure!(to >= from, "--to must not be below --from");
    let n = ((to - from) / step * (1.0 + 1e-12)).floor() as usize;
    ensure!(n <= 10_000_000, "grid of {n} points is too large");
    Ok((0..=n).map(|k| from + k as f64 * step).collect())
}

fn pole_skip<T>(r: Result<T, PolarizabilityError>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(PolarizabilityError::Resonance { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn magic_skip<T>(r: Result<T, MagicError>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MagicError::HyperResonance { .. }) | Err(MagicError::Polarizability(PolarizabilityError::Resonance { .. })) => {
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn catalog_validate(cfg: &mut RunConfig, a: &CatalogArgs) -> Result<Artifact> {
    let loaded = with_catalog(cfg, a)?;
    let cat = &loaded.catalog;
    let mut text = format!(
        "levels: {}\nlines: {}\npolicy: {}\nwindow: {:?} nm\ncontinuum tables: {}\n",
        cat.levels().len(),
        cat.lines().len(),
        cat.policy(),
        cat.window_nm(),
        if loaded.continuum.is_some() { "yes" } else { "no" }
    );
    let mut per_level = serde_json::Map::new();
    for id in [bundled::LOWER_CLOCK, bundled::UPPER_CLOCK] {
        if cat.levels().get(id).is_some() {
            let n = cat.lines_of(id).count();
            text.push_str(&format!("lines touching {id}: {n}\n"));
            per_level.insert(id.into(), json!(n));
        }
    }
    for w in cat.warnings() {
        text.push_str(&format!("warning: {w}\n"));
    }
    let value = json!({
        "levels": cat.levels().len(),
        "lines": cat.lines().len(),
        "policy": cat.policy(),
        "window_nm": [cat.window_nm().0, cat.window_nm().1],
        "continuum": loaded.continuum.is_some(),
        "lines_per_clock_level": per_level,
        "warnings": cat.warnings(),
    });
    Ok(Artifact {
        provenance: provenance("catalog validate", cfg, a, loaded.sources),
        body: Body::Report { text, value },
    })
}

pub fn catalog_merge(cfg: &mut RunConfig, a: &CatalogArgs) -> Result<Artifact> {
    let loaded = with_catalog(cfg, a)?;
    let rows = loaded
        .catalog
        .lines()
        .iter()
        .map(|l| {
            vec![
                json!(l.upper_id),
                json!(l.lower_id),
                json!(l.lambda_nm),
                json!(l.rate),
                json!(l.source.to_string()),
                json!(l.sign),
            ]
        })
        .collect();
    let notes = loaded.catalog.warnings().iter().map(|w| format!("warning: {w}")).collect();
    Ok(Artifact {
        provenance: provenance("catalog merge", cfg, a, loaded.sources),
        body: Body::Table {
            columns: ["upper_id", "lower_id", "lambda_nm", "A_per_s", "source", "sign"].map(String::from).to_vec(),
            rows,
            notes,
        },
    })
}

pub fn polarizability_scan(cfg: &mut RunConfig, a: &ScanArgs) -> Result<Artifact> {
    let loaded = with_catalog(cfg, &a.catalog)?;
    let level = a.level.clone().unwrap_or_else(|| bundled::LOWER_CLOCK.into());
    let resp = LevelResponse::<f64>::new(&loaded.catalog, &level, &PolarizabilityOptions::default())
        .with_context(|| format!("level {level}"))?;
    let table = loaded.continuum.as_ref().and_then(|(lo, up)| match level.as_str() {
        bundled::LOWER_CLOCK => Some(lo),
        bundled::UPPER_CLOCK => Some(up),
        _ => None,
    });
    let lambdas = grid(a.from, a.to, a.step)?;
    let mut rows = Vec::with_capacity(lambdas.len());
    let mut skipped = 0usize;
    for &nm in &lambdas {
        let w = units::wavelength_nm_to_omega_au(nm);
        match pole_skip(PolarizabilitySample::evaluate(&resp, table, w))? {
            Some(s) => rows.push(vec![json!(nm), json!(s.alpha_s), json!(s.alpha_t), json!(s.alpha_cont)]),
            None => skipped += 1,
        }
    }
    let notes = vec![
        format!("level {level}, J = {}", resp.j()),
        format!("{skipped} grid points inside line exclusion widths omitted"),
    ];
    Ok(Artifact {
        provenance: provenance("polarizability scan", cfg, a, loaded.sources),
        body: Body::Table {
            columns: ["lambda_nm", "alpha_s_au", "alpha_t_au", "alpha_cont_au"].map(String::from).to_vec(),
            rows,
            notes,
        },
    })
}

fn parse_bracket(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s.split_once(':').context("bracket must look like lo:hi")?;
    let lo: f64 = lo.trim().parse().context("bracket lower bound")?;
    let hi: f64 = hi.trim().parse().context("bracket upper bound")?;
    ensure!(lo > 0.0 && hi > lo, "bracket needs 0 < lo < hi, got {lo}:{hi}");
    Ok((lo, hi))
}

pub fn magic_find(cfg: &mut RunConfig, a: &MagicArgs) -> Result<Artifact> {
    if let Some(i) = a.intensity_kw_cm2 {
        cfg.lattice.intensity_kw_cm2 = i;
    }
    let loaded = with_catalog(cfg, &a.catalog)?;
    let bracket = parse_bracket(&a.bracket)?;
    ensure!(!a.offsets.is_empty(), "at least one continuum offset is needed");
    ensure!(a.tolerance_nm > 0.0, "tolerance must be positive");
    let pair = StatePair::thulium();
    let model = DifferentialModel::<f64>::new(&loaded.catalog, &pair, loaded.continuum_refs(), &PolarizabilityOptions::default())?;
    let intensity = units::kw_per_cm2(cfg.lattice.intensity_kw_cm2);
    let probe: Vec<f64> = (0..=1000).map(|k| bracket.0 + (bracket.1 - bracket.0) * k as f64 / 1000.0).collect();

    let mut text = format!(
        "bracket: {}:{} nm\nintensity: {} kW/cm^2\n\n{:>10} {:>12} {:>12} {:>12} {:>10} {:>12} {:>8}\n",
        bracket.0,
        bracket.1,
        cfg.lattice.intensity_kw_cm2,
        "offset_au",
        "lambda_nm",
        "slope_au/nm",
        "alpha_au",
        "depth_uK",
        "blue_det_nm",
        "changes"
    );
    let mut results = Vec::new();
    let mut roots = Vec::new();
    for &offset in &a.offsets {
        let changes = count_sign_changes(&scan_differential(&model, &probe, offset));
        let r = find_magic(&model, bracket, a.tolerance_nm, offset)
            .with_context(|| format!("continuum offset {offset} a.u."))?;
        let depth_uk = trap_depth(r.alpha, intensity) * 1e6;
        let det = r.blue_detuning_nm();
        text.push_str(&format!(
            "{:>10} {:>12.5} {:>12.3} {:>12.2} {:>10.2} {:>12} {:>8}\n",
            offset,
            r.lambda_magic,
            r.slope,
            r.alpha,
            depth_uk,
            det.map(|d| format!("{d:.4}")).unwrap_or_else(|| "-".into()),
            changes
        ));
        roots.push(r.lambda_magic);
        results.push(json!({
            "offset_au": offset,
            "lambda_magic_nm": r.lambda_magic,
            "bracket_nm": [r.bracket.0, r.bracket.1],
            "slope_au_per_nm": r.slope,
            "alpha_au": r.alpha,
            "attractive": r.attractive,
            "trap_depth_uK": depth_uk,
            "nearest_line": r.nearest_line.as_ref().map(|(nm, u, l)| json!({ "lambda_nm": nm, "upper": u, "lower": l })),
            "blue_detuning_nm": det,
            "sign_changes": changes,
        }));
    }
    let band = (
        roots.iter().copied().fold(f64::INFINITY, f64::min),
        roots.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    text.push_str(&format!("\nband over offsets: {:.5} to {:.5} nm\n", band.0, band.1));
    let value = json!({
        "bracket_nm": [bracket.0, bracket.1],
        "intensity_kw_cm2": cfg.lattice.intensity_kw_cm2,
        "band_nm": [band.0, band.1],
        "roots": results,
    });
    Ok(Artifact {
        provenance: provenance("magic find", cfg, a, loaded.sources),
        body: Body::Report { text, value },
    })
}

pub fn hyper_scan(cfg: &mut RunConfig, a: &HyperArgs) -> Result<Artifact> {
    if let Some(i) = a.intensity_kw_cm2 {
        cfg.lattice.intensity_kw_cm2 = i;
    }
    let loaded = with_catalog(cfg, &a.catalog)?;
    let exclusion = mdclock::polarizability::DEFAULT_POLE_EXCLUSION;
    let lower = HyperModel::<f64>::new(&loaded.catalog, bundled::LOWER_CLOCK, exclusion)?;
    let upper = HyperModel::<f64>::new(&loaded.catalog, bundled::UPPER_CLOCK, exclusion)?;
    let intensity = units::kw_per_cm2(cfg.lattice.intensity_kw_cm2);
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for nm in grid(a.from, a.to, a.step)? {
        let w = units::wavelength_nm_to_omega_au(nm);
        match (magic_skip(lower.evaluate(w))?, magic_skip(upper.evaluate(w))?) {
            (Some(l), Some(u)) => {
                let (sl, su) = (l.shift_at(intensity), u.shift_at(intensity));
                rows.push(vec![
                    json!(nm),
                    json!(l.gamma),
                    json!(u.gamma),
                    json!(sl),
                    json!(su),
                    json!(su - sl),
                ]);
            }
            _ => skipped += 1,
        }
    }
    let notes = vec![
        format!("intensity {} kW/cm^2", cfg.lattice.intensity_kw_cm2),
        format!("{skipped} grid points at one- or two-photon resonances omitted"),
    ];
    Ok(Artifact {
        provenance: provenance("hyper scan", cfg, a, loaded.sources),
        body: Body::Table {
            columns: [
                "lambda_nm",
                "gamma_lower_au",
                "gamma_upper_au",
                "shift_lower_hz",
                "shift_upper_hz",
                "differential_shift_hz",
            ]
            .map(String::from)
            .to_vec(),
            rows,
            notes,
        },
    })
}

pub fn spin_sim(cfg: &mut RunConfig, a: &SpinArgs) -> Result<Artifact> {
    if let Some(s) = a.spacing_nm {
        cfg.spin.spacing_nm = s;
    }
    if let Some(t) = a.threshold {
        cfg.spin.threshold = t;
    }
    if let Some(s) = a.steps {
        cfg.spin.steps = s;
    }
    cfg.validate()?;
    let subspace: Subspace = a.subspace.parse().map_err(anyhow::Error::msg)?;
    ensure!(a.tmax_ms > 0.0 && a.tmax_ms.is_finite(), "--tmax-ms must be positive");
    let f = HalfInt::int(4);
    let geometry = SpinGeometry::standard(a.atoms).with_spacing(cfg.spin.spacing_nm);
    if geometry.len() != a.atoms {
        bail!("the standard geometry holds at most {} atoms", geometry.len());
    }
    let sys = build_hamiltonian_with_g(&geometry, f, subspace, cfg.spin.g_factor)?;
    let psi = sys.polarized_zero();
    let times = time_grid(a.tmax_ms, cfg.spin.steps);
    let ev = sys.evolve(&psi, &times)?;
    let all: Vec<HalfInt> = f.projections().collect();
    let rows = ev
        .trace
        .times_ms
        .iter()
        .zip(&ev.trace.populations)
        .map(|(t, p)| {
            let mut row = vec![json!(t)];
            for m in &all {
                let v = ev.trace.projections.iter().position(|x| x == m).map(|k| p[k]).unwrap_or(0.0);
                row.push(json!(v));
            }
            row
        })
        .collect();
    let crossing = relaxation_time(&ev.trace.times_ms, &ev.trace.initial_level(), cfg.spin.threshold).ok();
    let steady = if ev.dense {
        let avg = sys.infinite_time_average(&psi)?;
        sys.local_projections().iter().position(|m| *m == HalfInt::ZERO).map(|k| avg[k])
    } else {
        None
    };
    let summary = json!({
        "atoms": a.atoms,
        "subspace": a.subspace,
        "dimension": sys.dim(),
        "relaxation_time_ms": crossing,
        "threshold": cfg.spin.threshold,
        "long_time_average_m0": steady,
        "norm_drift": ev.norm_drift,
        "energy_drift_hz": ev.energy_drift,
        "energy_scale_hz": ev.energy_scale,
        "propagator": if ev.dense { "dense" } else { "krylov" },
    });
    let notes = vec![format!("summary: {}", serde_json::to_string(&summary)?)];
    let mut columns = vec!["t_ms".to_string()];
    columns.extend(all.iter().map(|m| format!("p_m{m}")));
    Ok(Artifact {
        provenance: provenance("spin-sim", cfg, a, Vec::new()),
        body: Body::Table { columns, rows, notes },
    })
}

pub fn budget(cfg: &mut RunConfig, a: &BudgetArgs) -> Result<Artifact> {
    let b = &mut cfg.budget;
    for (slot, v) in [
        (&mut b.temperature_k, a.temp),
        (&mut b.dtemperature_k, a.dtemp),
        (&mut b.bias_mg, a.bias_mg),
        (&mut b.dbias_mg, a.dbias_mg),
        (&mut b.relative_intensity_noise, a.rin),
        (&mut b.delta_alpha_au, a.delta_alpha_au),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    cfg.validate()?;
    let budget: Budget64 = assemble_budget(&cfg.budget)?;
    let width = budget.entries.iter().map(|e| e.name.chars().count()).max().unwrap_or(0).max(6);
    let mut text = format!("{:<width$}  {:>12}  {:>17}  {:>12}\n", "Effect", "Shift (mHz)", "Uncertainty (mHz)", "Fractional");
    for e in &budget.entries {
        text.push_str(&format!(
            "{:<width$}  {:>12.3}  {:>17.3}  {:>12.2e}\n",
            e.name, e.shift_mhz, e.uncertainty_mhz, e.fractional
        ));
    }
    text.push_str(&format!(
        "{:<width$}  {:>12.3}  {:>17.3}  {:>12.2e}\n",
        "Total", budget.total_shift_mhz, budget.total_uncertainty_mhz, budget.total_fractional
    ));
    let entries: Vec<Value> = budget
        .entries
        .iter()
        .map(|e| {
            json!({
                "effect": e.name,
                "shift_mhz": finite(e.shift_mhz),
                "uncertainty_mhz": finite(e.uncertainty_mhz),
                "fractional": finite(e.fractional),
            })
        })
        .collect();
    let value = json!({
        "entries": entries,
        "total_shift_mhz": budget.total_shift_mhz,
        "total_uncertainty_mhz": budget.total_uncertainty_mhz,
        "total_fractional": budget.total_fractional,
        "clock_frequency_hz": budget.clock_frequency_hz,
    });
    Ok(Artifact {
        provenance: provenance("budget", cfg, a, Vec::new()),
        body: Body::Report { text, value },
    })
}

pub fn fit_lifetime(cfg: &mut RunConfig, a: &LifetimeArgs) -> Result<Artifact> {
    cfg.validate()?;
    let raw = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let source = crate::config::Source {
        name: "trace".into(),
        origin: a.input.display().to_string(),
        sha256: crate::config::sha256_hex(raw.as_bytes()),
    };
    let trace = DecayTrace::<f64>::parse_csv(&raw)?;
    let fit = fit_saturation(&trace)?;
    let text = format!(
        "samples: {}\nN0: {} +/- {}\ntau_ms: {} +/- {}\nchi2: {}\ndof: {}\niterations: {}\nweights: {}\n",
        trace.len(),
        num(fit.n0),
        num(fit.sigma_n0()),
        num(fit.tau_ms),
        num(fit.sigma_tau_ms()),
        num(fit.chi2),
        fit.dof,
        fit.iterations,
        if trace.sigma().is_some() { "per-sample sigma" } else { "unweighted, residual-scaled" }
    );
    let value = json!({
        "samples": trace.len(),
        "n0": fit.n0,
        "sigma_n0": fit.sigma_n0(),
        "tau_ms": fit.tau_ms,
        "sigma_tau_ms": fit.sigma_tau_ms(),
        "covariance": fit.covariance,
        "chi2": fit.chi2,
        "dof": fit.dof,
        "iterations": fit.iterations,
    });
    Ok(Artifact {
        provenance: provenance("fit lifetime", cfg, a, vec![source]),
        body: Body::Report { text, value },
    })
}

pub fn fit_alpha(cfg: &mut RunConfig, a: &AlphaArgs) -> Result<Artifact> {
    cfg.validate()?;
    for (name, v) in [("--dfa", a.dfa), ("--dfr", a.dfr), ("--dpower", a.dpower)] {
        ensure!(v >= 0.0 && v.is_finite(), "{name} must be non-negative");
    }
    let est = invert_polarizability_band(
        a.fa,
        a.dfa,
        a.fr,
        a.dfr,
        a.power,
        a.dpower,
        a.lambda_nm * 1e-9,
        a.mass_amu * ATOMIC_MASS_UNIT,
    )?;
    let text = format!(
        "alpha_au: {:.2}\nrelative_1sigma: {:.4}\nband_au: {:.2} to {:.2}\n",
        est.alpha_au, est.relative, est.lower_au, est.upper_au
    );
    let value = json!({
        "alpha_au": est.alpha_au,
        "relative": est.relative,
        "lower_au": est.lower_au,
        "upper_au": est.upper_au,
    });
    Ok(Artifact {
        provenance: provenance("fit alpha", cfg, a, Vec::new()),
        body: Body::Report { text, value },
    })
}
