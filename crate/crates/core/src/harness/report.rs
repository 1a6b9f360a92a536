//! Report files. Floats are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::Variant;

use super::ExperimentReport;

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes `errors.csv`, `timing.csv`, `stability.csv`, `config.echo.txt`,
/// `summary.txt`, and per curve one `curve_*.dat` (H1) and one `energy_curve_*.dat`. Timing columns of
/// `errors.csv` stay empty in deterministic mode so the file is reproducible.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let example = report.config.example.to_string();
    let deterministic = report.config.deterministic;

    let mut errors = String::from("example,variant,ell,H,rel_err_H1,err_dt_L2,eoc,offline_s,online_s,rel_err_energy,eoc_energy\n");
    for r in &report.records {
        let h = (-(r.h_exponent as f64)).exp2();
        let (off, on) = if deterministic {
            (String::new(), String::new())
        } else {
            (opt(r.offline_seconds), opt(r.online_seconds))
        };
        errors.push_str(&format!(
            "{example},{},{},{},{},{},{},{off},{on},{},{}\n",
            r.variant,
            r.ell.as_deref().unwrap_or(""),
            format_float(h),
            format_float(r.rel_err_h1),
            format_float(r.err_dt_l2),
            opt(r.eoc),
            opt(r.rel_err_energy),
            opt(r.eoc_energy),
        ));
    }
    write(dir, "errors.csv", &errors)?;

    let mut timing = String::from(
        "H,steps,offline_s,lumped_online_s,nonlumped_online_s,speedup,lumped_solve_iterations,nonlumped_solve_iterations\n",
    );
    for t in &report.timing {
        timing.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            format_float((-(t.h_exponent as f64)).exp2()),
            t.steps,
            format_float(t.offline_seconds),
            format_float(t.lumped_seconds),
            format_float(t.consistent_seconds),
            format_float(t.speedup()),
            t.lumped_iterations,
            t.consistent_iterations
        ));
    }
    write(dir, "timing.csv", &timing)?;

    let mut stability = String::from("row,dt,dt_max,min_energy,max_energy_drift\n");
    for s in &report.stability {
        stability.push_str(&format!(
            "{},{},{},{},{}\n",
            s.label,
            format_float(s.dt),
            format_float(s.dt_max),
            opt(s.min_energy),
            opt(s.max_energy_drift)
        ));
    }
    write(dir, "stability.csv", &stability)?;
    write(dir, "config.echo.txt", &report.config_echo)?;

    // curve_* holds H1 errors, energy_curve_* the energy-norm errors
    for (prefix, column) in [("curve", "rel_err_H1"), ("energy_curve", "rel_err_energy")] {
        let mut curves: BTreeMap<(Variant, String), Vec<(u32, f64)>> = BTreeMap::new();
        for r in &report.records {
            let e = if prefix == "curve" { Some(r.rel_err_h1) } else { r.rel_err_energy };
            if let Some(e) = e {
                curves
                    .entry((r.variant, r.ell.clone().unwrap_or_default()))
                    .or_default()
                    .push((r.h_exponent, e));
            }
        }
        for ((variant, ell), mut pts) in curves {
            // descending H
            pts.sort_by_key(|p| p.0);
            let mut text = format!("# H {column}\n");
            for (k, e) in pts {
                text.push_str(&format!("{} {}\n", format_float((-(k as f64)).exp2()), format_float(e)));
            }
            let name = if ell.is_empty() {
                format!("{prefix}_{variant}.dat")
            } else {
                format!("{prefix}_{variant}_ell{ell}.dat")
            };
            write(dir, &name, &text)?;
        }
    }

    let mut summary = format!("example: {example}\nenvironment: {}\n", report.environment);
    for (name, prov, digest) in &report.digests {
        summary.push_str(&format!("{name}: {prov} sha256={digest}\n"));
    }
    for r in &report.references {
        summary.push_str(&format!(
            "reference: {} mass, {} steps, dt={}, {} rows\n",
            r.mass,
            r.steps,
            format_float(r.dt),
            r.rows
        ));
    }
    summary.push_str("relative error normalization: max over time of the reference norm, taken separately for H1 and energy\n");
    summary.push_str(&format!("rows: {} ok, {} failed\n", report.records.len(), report.failures.len()));
    for f in &report.failures {
        summary.push_str(&format!("failed: {}: {}\n", f.label, f.message));
    }
    write(dir, "summary.txt", &summary)
}
