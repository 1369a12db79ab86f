//! Plain-text artifacts. Floats are written with Rust's shortest round-trip
//! formatting so identical results give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use snapmap::detect::TransitionReport;
use snapmap::embed::EmbeddingResult;
use snapmap::observables::ObservableSeries;
use snapmap::pipeline::Detection;
use snapmap::{Error, Result};

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn embedding_csv(emb: &EmbeddingResult, parameter_name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# parameter: {parameter_name}");
    let _ = writeln!(s, "# eigenvalues: {}", join(emb.eigenvalues.iter().copied()));
    let _ = writeln!(
        s,
        "# alpha: {}, diffusion_time: {}",
        emb.alpha.map_or("none".to_string(), |a| a.to_string()),
        emb.diffusion_time
    );
    let header: Vec<String> = (1..=emb.dims()).map(|k| format!("phi{k}")).collect();
    let _ = writeln!(s, "parameter,{}", header.join(","));
    for (i, p) in emb.parameters.iter().enumerate() {
        let _ = writeln!(s, "{p},{}", join(emb.coordinates.row(i).iter().copied()));
    }
    s
}

pub fn matrix_csv(m: &DMatrix<f64>, parameters: &[f64]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "parameter,{}", join(parameters.iter().copied()));
    for (i, p) in parameters.iter().enumerate() {
        let _ = writeln!(s, "{p},{}", join(m.row(i).iter().copied()));
    }
    s
}

pub fn observables_csv(series: &[ObservableSeries]) -> String {
    let mut s = String::new();
    let mut header = vec!["parameter".to_string()];
    for o in series {
        header.push(o.name.clone());
        header.push(format!("{}_stderr", o.name));
    }
    let _ = writeln!(s, "{}", header.join(","));
    let Some(first) = series.first() else {
        return s;
    };
    for (i, p) in first.parameters.iter().enumerate() {
        let row: Vec<String> = series
            .iter()
            .flat_map(|o| [o.values[i].to_string(), o.stderr[i].to_string()])
            .collect();
        let _ = writeln!(s, "{p},{}", row.join(","));
    }
    s
}

#[derive(Serialize)]
struct TransitionFile<'a> {
    parameter_name: &'a str,
    #[serde(flatten)]
    headline: &'a TransitionReport,
    detectors: Detectors<'a>,
    failures: &'a [String],
}

#[derive(Serialize)]
struct Detectors<'a> {
    tanh: Option<&'a TransitionReport>,
    cluster: Option<&'a TransitionReport>,
}

pub fn transition_json(det: &Detection, parameter_name: &str) -> String {
    let file = TransitionFile {
        parameter_name,
        headline: &det.headline,
        detectors: Detectors {
            tanh: det.tanh.as_ref(),
            cluster: det.cluster.as_ref(),
        },
        failures: &det.failures,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("report serializes");
    s.push('\n');
    s
}
