//! Result persistence: one CSV per run with the fixed metrics schema, plus
//! a JSON manifest describing the experiment. Identical configs reproduce
//! byte-identical files.

use super::config::ExperimentConfig;
use super::tune::TuneOutcome;
use crate::error::{Error, Result};
use crate::metrics::{StepMetrics, CSV_COLUMNS};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Render one run as CSV text with the exact column schema.
pub fn render_csv(rows: &[StepMetrics]) -> String {
    let mut out = String::with_capacity(rows.len() * 64 + 128);
    out.push_str(CSV_COLUMNS);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.tracking_err,
            r.metric,
            r.delta_sq,
            fmt_opt(r.r_norm),
            fmt_opt(r.eta_norm_sq),
            fmt_opt(r.pg_norm_sq),
            fmt_opt(r.var_inc),
            fmt_opt(r.bound_hp),
            fmt_opt(r.bound_exp),
            fmt_opt(r.bound_pg),
        );
    }
    out
}

fn parse_opt(field: &str, path: &Path) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::CsvSchema(format!("{}: bad number `{field}`", path.display())))
}

/// Read back a run CSV written by `render_csv`.
pub fn read_csv(path: &Path) -> Result<Vec<StepMetrics>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::CsvSchema(format!("{}: empty file", path.display())))?;
    if header != CSV_COLUMNS {
        return Err(Error::CsvSchema(format!(
            "{}: header `{header}` does not match `{CSV_COLUMNS}`",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::CsvSchema(format!(
                "{}: expected 11 fields, got {}",
                path.display(),
                fields.len()
            )));
        }
        let t: u64 = fields[0]
            .parse()
            .map_err(|_| Error::CsvSchema(format!("{}: bad step `{}`", path.display(), fields[0])))?;
        let f = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| {
                Error::CsvSchema(format!("{}: bad number `{}`", path.display(), fields[i]))
            })
        };
        rows.push(StepMetrics {
            t,
            tracking_err: f(1)?,
            metric: f(2)?,
            delta_sq: f(3)?,
            r_norm: parse_opt(fields[4], path)?,
            eta_norm_sq: parse_opt(fields[5], path)?,
            pg_norm_sq: parse_opt(fields[6], path)?,
            var_inc: parse_opt(fields[7], path)?,
            bound_hp: parse_opt(fields[8], path)?,
            bound_exp: parse_opt(fields[9], path)?,
            bound_pg: parse_opt(fields[10], path)?,
        });
    }
    Ok(rows)
}

fn json_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// File name of one run's CSV.
pub fn csv_name(optimizer: &str, lr: f64, seed: u64) -> String {
    format!("{optimizer}_lr{lr}_seed{seed}.csv")
}

fn render_manifest(cfg: &ExperimentConfig, outcome: &TuneOutcome) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str("  \"config\": {\n");
    let entries: Vec<String> = cfg
        .raw
        .iter()
        .map(|(k, v)| format!("    \"{}\": \"{}\"", json_escape(k), json_escape(v)))
        .collect();
    out.push_str(&entries.join(",\n"));
    out.push_str("\n  },\n");
    let chosen: Vec<String> = outcome
        .reports
        .iter()
        .map(|r| {
            let lr = r
                .aggregate
                .as_ref()
                .map(|a| format!("{}", a.chosen_lr))
                .unwrap_or_else(|| "null".to_string());
            let tail = r
                .aggregate
                .as_ref()
                .map(|a| format!("{}", a.tail_mean))
                .unwrap_or_else(|| "null".to_string());
            format!(
                "    \"{}\": {{\"chosen_lr\": {lr}, \"tail_metric\": {tail}}}",
                json_escape(&r.optimizer)
            )
        })
        .collect();
    out.push_str("  \"optimizers\": {\n");
    out.push_str(&chosen.join(",\n"));
    out.push_str("\n  },\n");
    let seeds: Vec<String> = cfg.seeds.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "  \"seeds\": [{}],", seeds.join(", "));
    let diverged: Vec<String> = outcome
        .records
        .iter()
        .filter(|r| r.diverged.is_some())
        .map(|r| format!("\"{}\"", csv_name(&r.optimizer, r.lr, r.seed)))
        .collect();
    let _ = writeln!(out, "  \"diverged_runs\": [{}],", diverged.join(", "));
    let _ = writeln!(
        out,
        "  \"variation_estimated\": {},",
        !matches!(
            cfg.problem.kind,
            crate::problems::ProblemKind::Quadratic
                | crate::problems::ProblemKind::LeastSquares
                | crate::problems::ProblemKind::MatrixFactorization
                | crate::problems::ProblemKind::LogisticLabelFlip
                | crate::problems::ProblemKind::Lasso
        )
    );
    let _ = writeln!(out, "  \"config_hash\": \"{}\",", cfg.config_hash());
    let _ = writeln!(
        out,
        "  \"version\": \"nsopt-{}\"",
        env!("CARGO_PKG_VERSION")
    );
    out.push_str("}\n");
    out
}

/// Write every run CSV plus the manifest under `base/<config-hash>/`.
/// Returns the run directory.
pub fn persist(base: &Path, cfg: &ExperimentConfig, outcome: &TuneOutcome) -> Result<PathBuf> {
    let dir = base.join(cfg.config_hash());
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    for rec in &outcome.records {
        let path = dir.join(csv_name(&rec.optimizer, rec.lr, rec.seed));
        fs::write(&path, render_csv(&rec.rows)).map_err(|e| io_err(&path, e))?;
    }
    let manifest = dir.join("manifest.json");
    fs::write(&manifest, render_manifest(cfg, outcome)).map_err(|e| io_err(&manifest, e))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::tune::tune_and_aggregate;

    fn small_outcome() -> (ExperimentConfig, TuneOutcome) {
        let text = "problem.kind = quadratic\nproblem.d = 4\nrun.T = 40\nnoise.offset = 0.4\nrun.seeds = [0, 1]\nrun.lr_grid = [1e-2]\noptim.kind = [sgd, adam]\n";
        let cfg = ExperimentConfig::parse(text, &[]).unwrap();
        let outcome = tune_and_aggregate(&cfg).unwrap();
        (cfg, outcome)
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let (cfg, outcome) = small_outcome();
        let dir = std::env::temp_dir().join(format!("nsopt_persist_{}", std::process::id()));
        let out = persist(&dir, &cfg, &outcome).unwrap();
        for rec in &outcome.records {
            let path = out.join(csv_name(&rec.optimizer, rec.lr, rec.seed));
            let rows = read_csv(&path).unwrap();
            assert_eq!(rows, rec.rows, "round trip must preserve every field");
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (cfg, outcome1) = small_outcome();
        let (_, outcome2) = small_outcome();
        let d1 = std::env::temp_dir().join(format!("nsopt_p1_{}", std::process::id()));
        let d2 = std::env::temp_dir().join(format!("nsopt_p2_{}", std::process::id()));
        let o1 = persist(&d1, &cfg, &outcome1).unwrap();
        let o2 = persist(&d2, &cfg, &outcome2).unwrap();
        for entry in std::fs::read_dir(&o1).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(o1.join(&name)).unwrap();
            let b = std::fs::read(o2.join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between identical reruns");
        }
        std::fs::remove_dir_all(&d1).ok();
        std::fs::remove_dir_all(&d2).ok();
    }

    #[test]
    fn schema_mismatch_is_detected() {
        let dir = std::env::temp_dir().join(format!("nsopt_schema_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "t,wrong,header\n1,2,3\n").unwrap();
        let err = read_csv(&path).unwrap_err();
        assert!(err.to_string().contains("header"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
