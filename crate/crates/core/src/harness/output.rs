//! Report and CSV emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::experiment::ComparisonReport;
use super::HarnessError;
use crate::geometric::RelativePeriodComponent;
use crate::spectral::{ScanResult, TraceProbeResult};

fn join_v(v: &[i64]) -> String {
    v.iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// `t,v,|w|,d_j,sigma_j,Re(alpha0),Im(alpha0),density_mass`.
pub fn periods_csv(components: &[RelativePeriodComponent]) -> String {
    let mut out = String::from("t,v,|w|,d_j,sigma_j,Re(alpha0),Im(alpha0),density_mass\n");
    for c in components {
        let _ = writeln!(
            out,
            "{:.12e},{},{:.12e},{},{},{:.12e},{:.12e},{:.12e}",
            c.t,
            join_v(&c.v),
            c.shift_norm,
            c.dim,
            c.maslov,
            c.alpha0.re + 0.0,
            c.alpha0.im + 0.0,
            c.density_mass
        );
    }
    out
}

/// `t,|amp|`.
pub fn scan_csv(scan: &ScanResult) -> String {
    let mut out = String::from("t,|amp|\n");
    for (t, a) in &scan.grid {
        let _ = writeln!(out, "{t:.12e},{a:.12e}");
    }
    out
}

/// `t0,s,Re(amp),Im(amp),tail_bound`.
pub fn probe_csv(probes: &[TraceProbeResult]) -> String {
    let mut out = String::from("t0,s,Re(amp),Im(amp),tail_bound\n");
    for p in probes {
        for ((s, a), tail) in p.s_ladder.iter().zip(&p.amplitudes).zip(&p.tail_bounds) {
            let _ = writeln!(
                out,
                "{:.12e},{s:.12e},{:.12e},{:.12e},{tail:.12e}",
                p.t0, a.re, a.im
            );
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

/// Key/value header followed by one table row per period.
pub fn report_text(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name = {}", report.name);
    let _ = writeln!(out, "lines = {}", report.line_count);
    let _ = writeln!(out, "components = {}", report.components.len());
    let _ = writeln!(out, "noise_floor = {:.6e}", report.scan.noise_floor);
    let _ = writeln!(out, "peaks = {}", report.scan.peaks.len());
    let _ = writeln!(out, "no_spurious_peaks = {}", report.no_spurious_pass());
    for t in &report.spurious_peaks {
        let _ = writeln!(out, "spurious_peak = {t:.6e}");
    }
    let _ = writeln!(out, "decay_off_periods = {}", report.decay_pass());
    for d in &report.decay {
        let _ = writeln!(
            out,
            "decay t = {:.6} distance/eps = {:.2} slope = {:.3} pass = {}",
            d.t, d.distance, d.slope, d.pass
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning = {w}");
    }
    let _ = writeln!(out, "all_pass = {}", report.all_pass());
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "t_predicted,components,t_detected,delta_t,exponent_predicted,exponent_fitted,sigma_predicted,\
         phase_predicted,phase_fitted,|alpha0|_predicted,|alpha0|_fitted,ratio,visible,detected,exponent_ok,phase_ok,amplitude_ok"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:.9},{},{},{},{:.3},{:.6},{},{:.6},{:.6},{:.6e},{:.6e},{:.6},{},{},{},{},{}",
            r.t_predicted,
            r.components,
            opt(r.t_detected),
            opt(r.delta_t),
            r.exponent_predicted,
            r.exponent_fitted,
            r.sigma_predicted,
            r.phase_predicted,
            r.phase_fitted,
            r.alpha_predicted.norm(),
            r.alpha_fitted.norm(),
            r.ratio,
            r.visible,
            r.detected_pass,
            r.exponent_pass,
            r.phase_pass,
            r.amplitude_pass
        );
    }
    out
}

/// Writes `report.txt`, `periods.csv`, `scan.csv` and `probes.csv` into
/// `dir`, refusing to replace existing files unless `overwrite` is set.
pub fn emit_outputs(
    report: &ComparisonReport,
    dir: &Path,
    overwrite: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    let files = [
        ("report.txt", report_text(report)),
        ("periods.csv", periods_csv(&report.components)),
        ("scan.csv", scan_csv(&report.scan)),
        ("probes.csv", probe_csv(&report.probes)),
    ];
    write_files(dir, &files, overwrite)
}

pub fn write_files(
    dir: &Path,
    files: &[(&str, String)],
    overwrite: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let paths: Vec<PathBuf> = files.iter().map(|(name, _)| dir.join(name)).collect();
    if !overwrite {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(HarnessError::Exists(p.clone()));
        }
    }
    for (path, (_, body)) in paths.iter().zip(files) {
        std::fs::write(path, body).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::product_2d;
    use crate::model::GroupoidKernel;

    #[test]
    fn periods_csv_has_one_row_per_component() {
        let m = product_2d([0.0, 0.0]);
        let k = GroupoidKernel::unit_bump(&m, 0.5).unwrap();
        let comps = crate::geometric::find_relative_periods(&m, &k, 1.0).unwrap();
        let csv = periods_csv(&comps[..3]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[0],
            "t,v,|w|,d_j,sigma_j,Re(alpha0),Im(alpha0),density_mass"
        );
        assert!(lines[1].starts_with("1.000000000000e0,0 -1,"));
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let files = [("a.csv", "x\n".to_string())];
        write_files(dir.path(), &files, false).unwrap();
        assert!(matches!(
            write_files(dir.path(), &files, false),
            Err(HarnessError::Exists(_))
        ));
        write_files(dir.path(), &files, true).unwrap();
    }
}
