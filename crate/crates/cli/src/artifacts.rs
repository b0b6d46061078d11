use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use plcbf::scenarios::{ScenarioConfig, ScenarioOutcome, VariantRun, SCHEMA_VERSION};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Stamped into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: &'static str,
}

impl Provenance {
    /// Hash of the effective config (after command-line overrides).
    pub fn of(cfg: &ScenarioConfig) -> Self {
        let canonical = serde_json::to_string(cfg).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        Provenance {
            schema_version: SCHEMA_VERSION,
            config_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed: cfg.seed,
            tool_version: env!("CARGO_PKG_VERSION"),
        }
    }

    fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("schema_version={}", self.schema_version),
            format!("config_hash={}", self.config_hash),
            format!("seed={}", self.seed),
        ]
    }
}

pub struct Writer {
    dir: PathBuf,
    prov: Provenance,
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

impl Writer {
    pub fn new(dir: PathBuf, prov: Provenance) -> io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Writer { dir, prov })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Objects get a `provenance` key; anything else is wrapped.
    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> io::Result<()> {
        let v = serde_json::to_value(value).map_err(io::Error::other)?;
        let prov = serde_json::to_value(&self.prov).map_err(io::Error::other)?;
        let doc = match v {
            Value::Object(mut m) if !m.contains_key("provenance") => {
                m.insert("provenance".into(), prov);
                Value::Object(m)
            }
            other => json!({ "provenance": prov, "data": other }),
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)
    }

    fn text(&self, name: &str, body: &str) -> io::Result<()> {
        fs::write(self.dir.join(name), body)
    }
}

fn write_run(w: &Writer, run: &VariantRun) -> io::Result<Value> {
    let stem = file_stem(&run.variant);
    let log = &run.log;
    let (n, m) = log.rows.first().map(|r| (r.x.len(), r.u.len())).unwrap_or((0, 0));
    w.text(&format!("run_{stem}.csv"), &log.to_csv(n, m, &w.prov.comment_lines()))?;
    if log.rows.iter().any(|r| r.rollouts.is_some()) {
        let mut body = String::new();
        for line in w.prov.comment_lines() {
            body.push_str(&format!("# {line}\n"));
        }
        for r in &log.rows {
            let entry = json!({ "t": r.t, "rollouts": r.rollouts });
            body.push_str(&serde_json::to_string(&entry).map_err(io::Error::other)?);
            body.push('\n');
        }
        w.text(&format!("rollouts_{stem}.jsonl"), &body)?;
    }
    Ok(json!({
        "variant": run.variant,
        "steps": log.rows.len(),
        "violations": log.violations,
        "min_margin": log.min_margin,
        "safe": log.is_safe(),
        "certified_at_start": log.certified_at_start,
        "certified_at_updates": log.certified_at_updates,
        "completed_at": log.completed_at,
        "interventions": log.intervention_count(),
        "mode_switches": log.switches,
        "failure": log.failure,
    }))
}

/// Writes all artifacts of a run and returns a one-screen text summary.
pub fn write_outcome(w: &Writer, cfg: &ScenarioConfig, outcome: &ScenarioOutcome) -> io::Result<String> {
    let mut lines = vec![format!("scenario `{}`", cfg.name)];
    let mut summary = json!({ "name": cfg.name });
    match outcome {
        ScenarioOutcome::GridSweep { maps, viability } => {
            let mut entries = Vec::new();
            for m in maps {
                let stem = file_stem(&m.variant);
                w.json(&format!("coverage_{stem}.json"), m)?;
                let mut svg = m.to_svg(16);
                svg.push_str(&format!(
                    "<!-- config_hash={} seed={} -->\n",
                    w.prov.config_hash, w.prov.seed
                ));
                w.text(&format!("coverage_{stem}.svg"), &svg)?;
                let certified = m.diagnostics.iter().filter(|d| d.certified_t0).count();
                let violations: usize = m.diagnostics.iter().map(|d| d.violations).sum();
                lines.push(format!(
                    "{:>10}: coverage {:.3} ({} / {} cells), certified at t=0: {}",
                    m.variant,
                    m.fraction,
                    m.safe_count(),
                    m.cells.len(),
                    certified
                ));
                entries.push(json!({
                    "variant": m.variant,
                    "fraction": m.fraction,
                    "safe_cells": m.safe_count(),
                    "cells": m.cells.len(),
                    "certified_t0": certified,
                    "violations": violations,
                }));
            }
            summary["coverage"] = Value::Array(entries);
            if let Some(v) = viability {
                w.json("viability.json", v)?;
                lines.push(format!(
                    "viability oracle: {} / {} nodes viable, counterexamples {}, horizon gap {}",
                    v.viable_nodes, v.nodes, v.counterexamples, v.horizon_gap
                ));
                summary["viability"] = json!({
                    "viable_nodes": v.viable_nodes,
                    "nodes": v.nodes,
                    "counterexamples": v.counterexamples,
                    "horizon_gap": v.horizon_gap,
                });
            }
        }
        other => {
            let mut runs = Vec::new();
            for run in other.runs() {
                let s = write_run(w, run)?;
                lines.push(format!(
                    "{:>10}: {} steps, violations {}, min margin {:.4}, completed {:?}",
                    run.variant,
                    run.log.rows.len(),
                    run.log.violations,
                    run.log.min_margin,
                    run.log.completed_at
                ));
                runs.push(s);
            }
            summary["runs"] = Value::Array(runs);
            match other {
                ScenarioOutcome::Highway(h) => {
                    summary["mu_change_time"] = json!(h.mu_change_time);
                    summary["first_switch_after_change"] = json!(h.first_switch_after_change);
                    lines.push(format!(
                        "friction change at {:?}, first mode switch after it at {:?}",
                        h.mu_change_time, h.first_switch_after_change
                    ));
                }
                ScenarioOutcome::Quadrotor { report, sweep } => {
                    summary["obstacles"] = json!(report.spheres);
                    if let Some(s) = sweep {
                        w.json("density_sweep.json", s)?;
                        for e in &s.summary {
                            lines.push(format!(
                                "N={:>3} {:>10}: completion {:.2}, safety {:.2}",
                                e.count, e.variant, e.completion_rate, e.safety_rate
                            ));
                        }
                        summary["density_sweep"] = json!(s.summary);
                    }
                }
                _ => {}
            }
        }
    }
    w.json("summary.json", &summary)?;
    Ok(lines.join("\n"))
}
