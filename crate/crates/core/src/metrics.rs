use nalgebra::DVector;
use rustfft::{num_complex::Complex, FftPlanner};

/// Energy of the one-sided spectrum at or above a quarter of the Nyquist frequency.
pub fn high_frequency_energy(f: &DVector<f64>) -> f64 {
    let n = f.len();
    if n == 0 {
        return 0.0;
    }
    let mut buf: Vec<Complex<f64>> = f.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let cutoff = n.div_ceil(8);
    buf[cutoff..=n / 2].iter().map(|z| z.norm_sqr()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossFactor {
    pub value: f64,
    /// The error before the switch was exactly zero, so `value` is infinite.
    pub degenerate: bool,
}

/// `||e_switch|| / ||e_{switch-1}||` from per-trial error norms indexed from trial 1.
pub fn loss_factor(error_norms: &[f64], switch_trial: usize) -> Option<LossFactor> {
    if switch_trial < 2 || switch_trial > error_norms.len() {
        return None;
    }
    let before = error_norms[switch_trial - 2];
    let after = error_norms[switch_trial - 1];
    Some(if before == 0.0 {
        LossFactor {
            value: f64::INFINITY,
            degenerate: true,
        }
    } else {
        LossFactor {
            value: after / before,
            degenerate: false,
        }
    })
}
