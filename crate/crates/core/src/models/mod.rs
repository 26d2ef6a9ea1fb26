//! The built-in agriculture pipeline: stream definitions shipped as EQL
//! text and installed over a running query engine. Rain gauge readings
//! become plant-usable water through the effective precipitation model;
//! four sensor feeds get five minute rolling averages alongside.

use crate::eql::{EqlError, ExecOutcome, QueryEngine};

/// Converts a rainfall depth into the share a crop can actually use:
/// everything above a fixed runoff threshold, scaled by an efficiency
/// coefficient. Negative results mean the rain never beat the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpModel {
    pub threshold_mm: f64,
    pub coefficient: f64,
}

impl Default for EpModel {
    fn default() -> EpModel {
        EpModel { threshold_mm: 5.0, coefficient: 0.75 }
    }
}

impl EpModel {
    pub fn apply(&self, rain_mm: f64) -> f64 {
        (rain_mm - self.threshold_mm) * self.coefficient
    }

    /// Like `apply`, floored at zero: sub-threshold rain contributes
    /// nothing rather than a negative amount.
    pub fn apply_clamped(&self, rain_mm: f64) -> f64 {
        self.apply(rain_mm).max(0.0)
    }
}

/// The default model as a plain function, for callers that do not need
/// to carry the parameters around.
pub fn effective_precipitation(rain_mm: f64) -> f64 {
    EpModel::default().apply(rain_mm)
}

/// Arithmetic mean, `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

const RAIN: &str = include_str!("templates/rain.eql");
const EP: &str = include_str!("templates/ep.eql");
const EP_CLAMPED: &str = include_str!("templates/ep_clamped.eql");
const TEMPERATURE: &str = include_str!("templates/temperature.eql");
const AVG_TEMPERATURE: &str = include_str!("templates/avg_temperature.eql");
const HUMIDITY: &str = include_str!("templates/humidity.eql");
const AVG_HUMIDITY: &str = include_str!("templates/avg_humidity.eql");
const SOIL_MOISTURE: &str = include_str!("templates/soil_moisture.eql");
const AVG_SOIL_MOISTURE: &str = include_str!("templates/avg_soil_moisture.eql");
const ATMOS_PRESSURE: &str = include_str!("templates/atmos_pressure.eql");
const AVG_ATMOS_PRESSURE: &str = include_str!("templates/avg_atmos_pressure.eql");

/// How much of the pipeline to install.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scope {
    /// Rain input and the effective precipitation stream only.
    Minimal,
    /// Everything: rain, the model, and the four sensor averages.
    #[default]
    Full,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct InstallOptions {
    pub scope: Scope,
    /// Use the zero-floored model variant instead of the plain one.
    pub clamp: bool,
}

/// What an install run did. Streams that already existed are left alone,
/// so reinstalling over a live engine is safe.
#[derive(Debug, Default)]
pub struct InstallReport {
    pub created: Vec<String>,
    pub skipped: Vec<String>,
    /// Persistent query ids started by this run, with their sink streams.
    pub queries: Vec<(String, String)>,
}

/// The statement set for the given options, as (stream name, EQL) pairs
/// in install order: every source stream before the query that reads it.
pub fn statements(options: &InstallOptions) -> Vec<(&'static str, &'static str)> {
    let ep = if options.clamp { EP_CLAMPED } else { EP };
    let mut out = vec![("RAIN", RAIN), ("EP", ep)];
    if options.scope == Scope::Full {
        out.extend([
            ("TEMPERATURE", TEMPERATURE),
            ("AVG_TEMPERATURE", AVG_TEMPERATURE),
            ("HUMIDITY", HUMIDITY),
            ("AVG_HUMIDITY", AVG_HUMIDITY),
            ("SOIL_MOISTURE", SOIL_MOISTURE),
            ("AVG_SOILMOISTURE", AVG_SOIL_MOISTURE),
            ("ATMOS_PRESSURE", ATMOS_PRESSURE),
            ("AVG_ATMOSPRESSURE", AVG_ATMOS_PRESSURE),
        ]);
    }
    out
}

/// Installs the pipeline, skipping any stream that already exists.
pub fn install(engine: &QueryEngine, options: &InstallOptions) -> Result<InstallReport, EqlError> {
    let mut report = InstallReport::default();
    for (name, text) in statements(options) {
        if engine.stream(name).is_some() {
            report.skipped.push(name.to_string());
            continue;
        }
        let stmt = crate::eql::parse_statement(text)?;
        match engine.run_command(&stmt)? {
            ExecOutcome::StreamCreated { name } => report.created.push(name),
            ExecOutcome::QueryStarted { id, sink } => {
                report.created.push(sink.clone());
                report.queries.push((id, sink));
            }
            other => {
                return Err(EqlError::Semantic(format!(
                    "install statement for {name} produced unexpected outcome {other:?}"
                )))
            }
        }
    }
    Ok(report)
}
