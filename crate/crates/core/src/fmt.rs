//! Fixed-width number formatting shared by the CSV writers.

/// Formats `x` with 17 significant digits, which round-trips every `f64`.
pub fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Joins a row of numbers as one CSV line (without the trailing newline).
pub fn csv_row(values: &[f64]) -> String {
    values.iter().map(|v| f17(*v)).collect::<Vec<_>>().join(",")
}
