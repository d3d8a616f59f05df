use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{AblationReport, CellOutcome};
use crate::config::TrainConfig;
use crate::env::{read_json, write_json};
use crate::error::{Error, Result};

/// Hex SHA-256 of the config's canonical JSON.
pub fn config_hash(config: &TrainConfig) -> String {
    let digest = Sha256::digest(config.to_json().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes `report.json` and `report.txt` into `dir`.
pub fn emit_report(report: &AblationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("report.json"), report)?;
    let txt = dir.join("report.txt");
    std::fs::write(&txt, render_text(report)).map_err(|e| Error::io(&txt, e))
}

pub fn load_report(path: &Path) -> Result<AblationReport> {
    read_json(path)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

pub fn render_text(report: &AblationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ablation report");
    let _ = writeln!(s, "config sha256: {}", report.config_hash);
    let seeds: Vec<String> = report.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(s, "seeds: {}", seeds.join(", "));
    let _ = writeln!(s, "report step: {}", report.report_step);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<8} {:>6} {:>8} {:>9} {:>10} {:>10} {:>9} {:>11}",
        "config", "seed", "ctcvr", "lift", "diversity", "structural", "semantic", "compliance"
    );
    for cell in &report.cells {
        match &cell.outcome {
            CellOutcome::Ok { metrics: m, .. } => {
                let _ = writeln!(
                    s,
                    "{:<8} {:>6} {:>8.4} {:>9} {:>10.4} {:>10.4} {:>9.4} {:>11.4}",
                    cell.config.as_str(),
                    cell.seed,
                    m.mean_ctcvr,
                    fmt_opt(m.delta_ctcvr),
                    m.diversity,
                    m.structural,
                    m.semantic,
                    m.compliance
                );
            }
            CellOutcome::Failed { error } => {
                let _ = writeln!(s, "{:<8} {:>6} FAILED: {error}", cell.config.as_str(), cell.seed);
            }
        }
    }
    for (title, list) in [("comparisons", &report.comparisons), ("checks", &report.checks)] {
        let _ = writeln!(s);
        let _ = writeln!(s, "{title}:");
        for c in list {
            let _ = writeln!(
                s,
                "  [{}] ({}) {}: {}/{} seeds (need {})",
                if c.pass { "PASS" } else { "FAIL" },
                c.id,
                c.description,
                c.holds,
                c.per_seed.len(),
                c.required
            );
            for p in &c.per_seed {
                let _ = writeln!(
                    s,
                    "      seed {}: {} {} {} -> {}",
                    p.seed,
                    fmt_opt(p.lhs),
                    c.relation.symbol(),
                    fmt_opt(p.rhs),
                    if p.holds { "holds" } else { "fails" }
                );
            }
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "overall: {}", if report.all_pass() { "PASS" } else { "FAIL" });
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_config() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        b.kl_beta = 0.02;
        assert_eq!(config_hash(&a).len(), 64);
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
