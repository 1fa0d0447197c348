use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::signal::C64;

/// Forward/inverse FFT pair of a fixed size. The inverse is normalized by
/// `1/len`, so `inverse(forward(x)) = x`.
pub(crate) struct FftPair {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
    len: usize,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            fwd,
            inv,
            scratch: vec![C64::new(0.0, 0.0); scratch_len],
            len,
        }
    }

    pub fn forward(&mut self, data: &mut [C64]) {
        self.fwd.process_with_scratch(data, &mut self.scratch);
    }

    pub fn inverse(&mut self, data: &mut [C64]) {
        self.inv.process_with_scratch(data, &mut self.scratch);
        let s = 1.0 / self.len as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Signed frequency index of DFT bin `k` for a length-`m` transform:
/// bins map to `[-m/2, m/2)`.
pub(crate) fn signed_bin(k: usize, m: usize) -> i64 {
    if k < m.div_ceil(2) && !(m.is_multiple_of(2) && k == m / 2) {
        k as i64
    } else {
        k as i64 - m as i64
    }
}

/// DFT bin holding signed frequency index `f` in a length-`m` transform.
pub(crate) fn bin_of(f: i64, m: usize) -> usize {
    f.rem_euclid(m as i64) as usize
}

/// Angular frequencies (rad/ps) of the DFT bins for sampling rate `fs` GHz.
pub(crate) fn angular_grid(m: usize, fs_ghz: f64) -> Vec<f64> {
    let df_thz = fs_ghz * 1e-3 / m as f64;
    (0..m)
        .map(|k| 2.0 * std::f64::consts::PI * signed_bin(k, m) as f64 * df_thz)
        .collect()
}

/// Converts a frequency offset in GHz to an integer number of bins, if it
/// lies on the grid.
pub(crate) fn offset_bins(offset_ghz: f64, m: usize, fs_ghz: f64) -> Option<i64> {
    let b = offset_ghz * m as f64 / fs_ghz;
    let r = b.round();
    ((b - r).abs() <= 1e-6 * b.abs().max(1.0)).then_some(r as i64)
}
