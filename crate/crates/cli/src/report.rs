//! Text tables from the line-delimited reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use dexpipe::{Error, Result};
use serde_json::Value;

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let cells: Vec<String> = row.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", cells.join(" | "));
    }
    out
}

fn eval_table(lines: &[Value], summary: &Value) -> String {
    let skills: Vec<String> = summary["skills"]
        .as_array()
        .map(|a| a.iter().filter_map(|s| s.as_str().map(String::from)).collect())
        .unwrap_or_default();
    let trials = summary["trials"].as_u64().unwrap_or(0);
    let counts: Vec<String> = summary["counts"]
        .as_array()
        .map(|a| a.iter().map(|c| format!("{}/{trials}", c.as_u64().unwrap_or(0))).collect())
        .unwrap_or_default();
    let mut out = table(&skills, &[counts]);
    for h in summary["handoff"].as_array().into_iter().flatten().filter(|h| h["reached"].as_u64() > Some(0)) {
        let f = |k: &str| h[k].as_f64().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{}: reached {}, succeeded {}, normal force mean {:.2} N min {:.2} N",
            h["skill"].as_str().unwrap_or("?"),
            h["reached"],
            h["succeeded"],
            f("mean_normal_force"),
            f("min_normal_force")
        );
    }
    let mut reasons: BTreeMap<(String, String), usize> = BTreeMap::new();
    for l in lines {
        for s in l["skills"].as_array().into_iter().flatten() {
            if let Some(r) = s["reason"].as_str() {
                *reasons.entry((s["skill"].as_str().unwrap_or("?").into(), r.into())).or_default() += 1;
            }
        }
    }
    if !reasons.is_empty() {
        let _ = writeln!(out, "\nfailures:");
        for ((skill, reason), n) in reasons {
            let _ = writeln!(out, "  {skill}: {reason} x{n}");
        }
    }
    out
}

fn ablation_table(rows: &[&Value]) -> String {
    let variants: Vec<String> = rows[0]["scores"]
        .as_array()
        .map(|a| a.iter().map(|s| s["variant"].as_str().unwrap_or("?").to_string()).collect())
        .unwrap_or_default();
    let header: Vec<String> = std::iter::once("setup".to_string()).chain(variants).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r["label"].as_str().unwrap_or("?").to_string()];
            for s in r["scores"].as_array().into_iter().flatten() {
                cells.push(format!("{}/{}", s["successes"], s["trials"]));
            }
            cells.resize(header.len(), String::new());
            cells
        })
        .collect();
    table(&header, &body)
}

fn metrics_table(rows: &[&Value]) -> String {
    let header: Vec<String> = ["update", "return", "success", "kl"].map(String::from).to_vec();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let f = |v: &Value| v.as_f64().unwrap_or(f64::NAN);
            vec![
                r["update"].to_string(),
                format!("{:.3}", f(&r["mean_return"])),
                format!("{:.2}", f(&r["success_rate"])),
                format!("{:.4}", f(&r["stats"]["kl"])),
            ]
        })
        .collect();
    table(&header, &body)
}

/// Renders an eval report, an ablation report or training metrics.
pub fn render(text: &str) -> Result<String> {
    let lines = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str::<Value>)
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(s) = lines.iter().find_map(|l| l.get("summary").filter(|s| s.get("counts").is_some())) {
        let trials: Vec<Value> = lines.iter().filter(|l| l.get("skills").is_some()).cloned().collect();
        return Ok(eval_table(&trials, s));
    }
    let setups: Vec<&Value> = lines.iter().filter(|l| l.get("label").is_some() && l.get("scores").is_some()).collect();
    if !setups.is_empty() {
        return Ok(ablation_table(&setups));
    }
    let updates: Vec<&Value> = lines.iter().filter(|l| l.get("mean_return").is_some()).collect();
    if !updates.is_empty() {
        return Ok(metrics_table(&updates));
    }
    Err(Error::Input("unrecognized report format".into()))
}

pub fn print(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    print!("{}", render(&text)?);
    Ok(())
}
