//! Result files with numbers fixed at six significant digits.

use super::{RunReport, ScenarioError};
use crate::alloc::AllocationPlan;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SIG_DIGITS: usize = 6;

/// Files written for [`OutputFormat::Csv`], in emission order.
pub const REPORT_FILES: [&str; 6] = [
    "metrics.csv",
    "region_boundary.csv",
    "reserve_profile.csv",
    "allocation.csv",
    "sensitivity.csv",
    "report.json",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// The CSV tables plus `report.json`.
    Csv,
    /// `report.json` only.
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}`, expected csv or json")),
        }
    }
}

/// Nearest double to `x` rounded to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

fn num(x: f64) -> String {
    format!("{}", round_sig(x))
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

fn report_json(report: &RunReport) -> Result<String, ScenarioError> {
    let mut v = serde_json::to_value(report).map_err(|e| ScenarioError::Stage {
        stage: "emit",
        message: e.to_string(),
    })?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| ScenarioError::Stage {
        stage: "emit",
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

fn metrics_csv(report: &RunReport) -> String {
    let mut s = String::from(
        "label,h_vpp,d_vpp,rocof_hz_per_s,nadir_hz,t_nadir_s,qss_dev_hz,settle_time_s,energy_mwh,in_region,nadir_consistent\n",
    );
    for m in &report.metrics {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.label,
            num(m.h_vpp),
            num(m.d_vpp),
            num(m.rocof_hz_per_s),
            num(m.nadir_hz),
            num(m.t_nadir_s),
            num(m.qss_dev_hz),
            opt_num(m.settle_time_s),
            num(m.energy_mwh),
            m.in_region.map(|b| b.to_string()).unwrap_or_default(),
            m.nadir_consistent
        );
    }
    s
}

fn boundary_csv(report: &RunReport) -> String {
    let mut s = String::from("h_vpp,d_vpp,constraint\n");
    for p in report.region.iter().flat_map(|r| &r.boundary) {
        let _ = writeln!(s, "{},{},{}", num(p.h), num(p.d), p.constraint.id());
    }
    s
}

fn profile_csv(report: &RunReport) -> String {
    let mut s = String::from("t_s,res_min_pu,res_peak_pu\n");
    for r in &report.reserve_profile {
        let _ = writeln!(s, "{},{},{}", num(r.t), num(r.res_min), num(r.res_peak));
    }
    s
}

fn allocation_csv(report: &RunReport) -> String {
    let plans: &[AllocationPlan] = &report.allocations;
    let mut s = String::from("ibr");
    for p in plans {
        let tag = p.strategy.label();
        let _ = write!(s, ",{tag}_h,{tag}_d,{tag}_energy_pu_s,{tag}_profit_usd");
    }
    s.push('\n');
    let n = plans.first().map_or(0, |p| p.h_i.len());
    for i in 0..n {
        let _ = write!(s, "{}", i + 1);
        for p in plans {
            let _ = write!(
                s,
                ",{},{},{},{}",
                num(p.h_i[i]),
                num(p.d_i[i]),
                num(p.per_ibr_energy[i]),
                num(p.per_ibr_profit[i])
            );
        }
        s.push('\n');
    }
    s
}

fn sensitivity_csv(report: &RunReport) -> String {
    let mut s = String::from("sweep,value,h_vpp,d_vpp,res_min_mwh,res_peak_mwh,gap_mwh,idle_ratio\n");
    for r in &report.sensitivity {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.sweep,
            num(r.value),
            num(r.h_vpp),
            num(r.d_vpp),
            num(r.res_min_mwh),
            num(r.res_peak_mwh),
            num(r.gap_mwh),
            num(r.idle_ratio)
        );
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), ScenarioError> {
    std::fs::write(path, contents).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes the report into `dir` and returns the written paths.
pub fn emit(report: &RunReport, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let json = report_json(report)?;
    let files: Vec<(&str, String)> = match format {
        OutputFormat::Json => vec![("report.json", json)],
        OutputFormat::Csv => vec![
            ("metrics.csv", metrics_csv(report)),
            ("region_boundary.csv", boundary_csv(report)),
            ("reserve_profile.csv", profile_csv(report)),
            ("allocation.csv", allocation_csv(report)),
            ("sensitivity.csv", sensitivity_csv(report)),
            ("report.json", json),
        ],
    };
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<RunReport, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))
}
