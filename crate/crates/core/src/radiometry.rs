//! Lambertian net power transfer and the pyroelectric sensor response.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{RadiometrySection, SensorResponseSection};
use crate::error::{Error, Result};

/// Parameters of the net radiant power reaching one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiometryParams {
    /// Atmospheric transmission `tau`.
    pub tau: f64,
    /// Lens transmission `eta`.
    pub eta: f64,
    /// In-band fraction passed by the optical filter.
    pub filter_fraction: f64,
    /// Effective aperture area (m^2).
    pub aperture_area: f64,
    pub sigma: f64,
    pub t_obj: f64,
    pub t_b: f64,
}

impl RadiometryParams {
    pub fn validate(&self) -> Result<()> {
        for (v, k) in [(self.tau, "tau"), (self.eta, "eta"), (self.filter_fraction, "F")] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Domain(format!("{k} must be in (0,1], got {v}")));
            }
        }
        if !(self.aperture_area > 0.0) {
            return Err(Error::Domain("aperture area must be > 0".into()));
        }
        if !(self.t_obj > 0.0 && self.t_b > 0.0) {
            return Err(Error::Domain("temperatures must be > 0 K".into()));
        }
        Ok(())
    }

    /// Params for a lens with the scene-wide atmosphere and background.
    pub fn for_lens(
        r: &RadiometrySection,
        eta: f64,
        filter_fraction: f64,
        aperture_area: f64,
        t_obj: f64,
    ) -> Self {
        RadiometryParams {
            tau: r.atmospheric_transmission,
            eta,
            filter_fraction,
            aperture_area,
            sigma: r.stefan_boltzmann_w_per_m2_k4,
            t_obj,
            t_b: r.background_temperature_k,
        }
    }

    /// Everything except `A_proj / R^2`.
    pub fn power_factor(&self) -> f64 {
        self.tau
            * self.eta
            * self.filter_fraction
            * self.aperture_area
            * self.sigma
            * (self.t_obj.powi(4) - self.t_b.powi(4))
            / std::f64::consts::PI
    }
}

/// Net power (W) from a Lambertian source of projected area `a_proj` (m^2)
/// at distance `r` (m).
pub fn net_power(p: &RadiometryParams, a_proj: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("distance must be > 0, got {r}")));
    }
    if !(a_proj >= 0.0) {
        return Err(Error::Domain(format!("projected area must be >= 0, got {a_proj}")));
    }
    Ok(p.power_factor() * a_proj / (r * r))
}

/// Bandpass impulse response and the abstracted amplifier stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorResponseParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub gain: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub dc_offset: f64,
    pub noise_std: f64,
}

impl SensorResponseParams {
    pub fn from_section(s: &SensorResponseSection) -> Result<Self> {
        let p = SensorResponseParams {
            k1: s.k1_per_s,
            k2: s.k2_per_s,
            k3: s.k3_per_s,
            k4: s.k4_per_s,
            gain: s.gain,
            clip_low: s.clip_low_v,
            clip_high: s.clip_high_v,
            dc_offset: s.dc_offset_v,
            noise_std: s.noise_std_v,
        };
        p.validate().map_err(|e| Error::Config(format!("sensor_response: {e}")))?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.k1, self.k2, self.k3, self.k4].iter().any(|k| !(*k > 0.0)) {
            return Err(Error::Domain("all k_i must be > 0".into()));
        }
        if self.k2 == self.k4 {
            return Err(Error::Domain("k2 and k4 must differ".into()));
        }
        if !(self.clip_low < self.dc_offset && self.dc_offset < self.clip_high) {
            return Err(Error::Domain("need clip_low < dc_offset < clip_high".into()));
        }
        if !(self.noise_std >= 0.0) || !self.gain.is_finite() {
            return Err(Error::Domain("noise_std must be >= 0 and gain finite".into()));
        }
        Ok(())
    }

    /// Steady-state response to a unit step of power.
    pub fn dc_gain(&self) -> f64 {
        self.k1 / self.k2 - self.k3 / self.k4
    }
}

/// `h(t) = k1 exp(-k2 t) - k3 exp(-k4 t)`.
pub fn impulse_response(p: &SensorResponseParams, t: f64) -> f64 {
    p.k1 * (-p.k2 * t).exp() - p.k3 * (-p.k4 * t).exp()
}

/// Number of samples of `h` kept at `dt` spacing: the tail where
/// `|h| < 1e-9 max|h|` is dropped.
pub fn impulse_support(p: &SensorResponseParams, dt: f64) -> usize {
    // |h| <= k1 e^{-k2 t} + k3 e^{-k4 t} <= (k1 + k3) e^{-min(k2,k4) t}
    let peak = (0..4096)
        .map(|n| impulse_response(p, n as f64 * dt).abs())
        .fold(0.0, f64::max);
    let floor = 1e-9 * peak;
    let kmin = p.k2.min(p.k4);
    let t_end = ((p.k1 + p.k3) / floor).ln() / kmin;
    let mut n = (t_end / dt).ceil().max(1.0) as usize;
    while n > 1 && impulse_response(p, (n - 1) as f64 * dt).abs() < floor {
        n -= 1;
    }
    n
}

/// Trapezoidal convolution over the truncated support of `h`:
/// `v[n] = dt * (sum_j h(j dt) w[n-j] - h(0) w[n] / 2)`.
///
/// Each exponential term of `h` is a first-order recursion; the sample
/// leaving the support window is removed exactly at each step.
pub fn convolve_response(w: &[f64], p: &SensorResponseParams, dt: f64) -> Vec<f64> {
    let len = impulse_support(p, dt);
    let a2 = (-p.k2 * dt).exp();
    let a4 = (-p.k4 * dt).exp();
    let tail2 = a2.powi(len as i32);
    let tail4 = a4.powi(len as i32);
    let h0 = p.k1 - p.k3;
    let (mut y2, mut y4) = (0.0, 0.0);
    let mut out = Vec::with_capacity(w.len());
    for n in 0..w.len() {
        let old = if n >= len { w[n - len] } else { 0.0 };
        y2 = a2 * y2 + w[n] - tail2 * old;
        y4 = a4 * y4 + w[n] - tail4 * old;
        out.push(dt * (p.k1 * y2 - p.k3 * y4 - 0.5 * h0 * w[n]));
    }
    out
}

/// Gain, DC offset, additive white noise and clipping.
pub fn amplify(v: &[f64], p: &SensorResponseParams, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = (p.noise_std > 0.0).then(|| Normal::new(0.0, p.noise_std).expect("finite std"));
    v.iter()
        .map(|&x| {
            let mut y = gain * x + p.dc_offset;
            if let Some(n) = &noise {
                y += n.sample(rng);
            }
            y.clamp(p.clip_low, p.clip_high)
        })
        .collect()
}

/// Power sequence to sensor voltage at sample spacing `1 / sample_rate`.
pub fn sense(w: &[f64], p: &SensorResponseParams, sample_rate: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sample_rate > 0.0) {
        return Err(Error::Domain("sample_rate must be > 0".into()));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("power sequence has non-finite samples".into()));
    }
    let v = convolve_response(w, p, 1.0 / sample_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(amplify(&v, p, p.gain, &mut rng))
}
