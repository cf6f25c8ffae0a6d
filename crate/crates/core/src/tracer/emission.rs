//! Temperature to emitted radiance.

/// Blackbody-style ramp from black through red and orange to white, sampled at
/// evenly spaced normalized temperatures in `[0, 1]`. Every channel is
/// non-decreasing down the table.
pub const EMISSION_RAMP: [[f64; 3]; 6] = [
    [0.0, 0.0, 0.0],
    [0.5, 0.0, 0.0],
    [1.0, 0.2, 0.0],
    [1.0, 0.55, 0.1],
    [1.0, 0.85, 0.5],
    [1.0, 1.0, 1.0],
];

/// Linear interpolation in [`EMISSION_RAMP`]; temperatures above 1 clamp to white.
pub fn emission(temperature: f64) -> [f64; 3] {
    let steps = (EMISSION_RAMP.len() - 1) as f64;
    let x = temperature.clamp(0.0, 1.0) * steps;
    let i = (x.floor() as usize).min(EMISSION_RAMP.len() - 2);
    let f = x - i as f64;
    let (a, b) = (EMISSION_RAMP[i], EMISSION_RAMP[i + 1]);
    [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * f)
}
