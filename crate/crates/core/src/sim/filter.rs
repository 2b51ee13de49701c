//! First-order Butterworth low-pass filter discretized with the bilinear
//! (Tustin) transform.

use std::f64::consts::PI;

/// `y_k = b0 x_k + b1 x_{k-1} − a1 y_{k-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub a1: f64,
}

impl FilterCoefficients {
    /// Pre-warped design: `K = tan(π f_c Δt)`, `b0 = b1 = K/(1+K)`,
    /// `a1 = (K−1)/(1+K)`.
    pub fn butterworth(cutoff_hz: f64, dt: f64) -> Self {
        let k = (PI * cutoff_hz * dt).tan();
        Self {
            b0: k / (1.0 + k),
            b1: k / (1.0 + k),
            a1: (k - 1.0) / (1.0 + k),
        }
    }

    /// Identity filter.
    pub fn passthrough() -> Self {
        Self {
            b0: 1.0,
            b1: 0.0,
            a1: 0.0,
        }
    }
}

/// Per-channel memory of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub coefficients: FilterCoefficients,
    pub prev_input: Vec<f64>,
    pub prev_output: Vec<f64>,
}

impl FilterState {
    /// Starts every channel at rest on `initial`, so a constant input passes
    /// through unchanged.
    pub fn at_rest(coefficients: FilterCoefficients, initial: &[f64]) -> Self {
        Self {
            coefficients,
            prev_input: initial.to_vec(),
            prev_output: initial.to_vec(),
        }
    }

    pub fn channels(&self) -> usize {
        self.prev_input.len()
    }
}

/// Advances every channel by one sample and returns the filtered values.
pub fn butterworth_step(state: &mut FilterState, raw: &[f64]) -> Vec<f64> {
    assert_eq!(raw.len(), state.channels(), "filter channel count");
    let c = state.coefficients;
    let mut out = Vec::with_capacity(raw.len());
    for (i, &x) in raw.iter().enumerate() {
        let y = c.b0 * x + c.b1 * state.prev_input[i] - c.a1 * state.prev_output[i];
        state.prev_input[i] = x;
        state.prev_output[i] = y;
        out.push(y);
    }
    out
}
