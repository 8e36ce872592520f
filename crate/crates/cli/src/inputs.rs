use std::path::Path;

use map2risk::io;
use map2risk::reference;
use map2risk::severity::DplnParams;
use map2risk::{Error, Map2, Result};
use serde_json::Value;

/// The model in `path`, or the built-in estimate.
pub fn model(path: Option<&Path>) -> Result<Map2> {
    match path {
        Some(p) => io::read_model(p),
        None => Ok(reference::estimated_map2()),
    }
}

/// Severity parameters from a bare parameter object or from the output of
/// `fit-severity`; the published estimate when no file is given.
pub fn severity(path: Option<&Path>) -> Result<DplnParams> {
    let raw = match path {
        None => {
            let (a, b, mu, s2) = reference::DPLN;
            return DplnParams::new(a, b, mu, s2);
        }
        Some(p) => io::read_json::<Value>(p)?,
    };
    let body = raw.get("params").cloned().unwrap_or(raw);
    let p: DplnParams = serde_json::from_value(body)?;
    DplnParams::new(p.alpha, p.beta, p.mu, p.sigma2)
}

pub fn check_levels(ps: &[f64]) -> Result<()> {
    if ps.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one tolerance level is required".into(),
        ));
    }
    if let Some(&p) = ps.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::OutOfRangeQuantile(p));
    }
    Ok(())
}

pub fn check_positive(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument(format!("{name}: empty list")));
    }
    if let Some(x) = xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::InvalidArgument(format!("{name}: {x} is not a positive number")));
    }
    Ok(())
}
