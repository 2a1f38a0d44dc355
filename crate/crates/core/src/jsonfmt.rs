//! Tiny deterministic JSON emitters. Floats are written with 17 significant
//! digits so that parsing them back yields the identical `f64`.

use std::fmt::Write as _;

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn array(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 24 + 2);
    out.push('[');
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push(']');
    out
}

pub fn string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}
