//! Gaussian chirplet atoms, the discrete analytic signal, and greedy
//! matching-pursuit decomposition with local maximum-likelihood refinement.
//!
//! Atom with time centre `m`, frequency `omega` (rad/sample), chirp rate
//! `c` (rad/sample^2) and duration `d` (samples):
//!
//! ```text
//! x(n) = (2 pi d^2)^(-1/4) exp(-((n - m) / 2d)^2) exp(j omega (n - m) + j (c/2) (n - m)^2)
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Envelope support used for inner products: `|n - m| <= SUPPORT * d`.
/// Beyond it the envelope is below `exp(-20)`.
const SUPPORT: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomParams {
    pub m: f64,
    pub omega: f64,
    pub c: f64,
    pub d: f64,
}

/// One weighted atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chirplet {
    pub a: f64,
    pub phi: f64,
    pub m: f64,
    pub omega: f64,
    pub c: f64,
    pub d: f64,
}

impl Chirplet {
    pub fn params(&self) -> AtomParams {
        AtomParams {
            m: self.m,
            omega: self.omega,
            c: self.c,
            d: self.d,
        }
    }

    pub fn weight(&self) -> Complex64 {
        Complex64::from_polar(self.a, self.phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Atoms in the order they were extracted.
    pub chirplets: Vec<Chirplet>,
    /// Residual energy as a fraction of the input energy.
    pub residual_energy: f64,
    /// Residual fraction after each step; entry `i` covers atoms `0..=i`.
    pub residual_trace: Vec<f64>,
    /// Normalised correlation `|<r,g>| / (|r| |g|)` at each step.
    pub step_correlation: Vec<f64>,
    pub channel: Option<String>,
}

/// Debug dump entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpletDump {
    pub a: f64,
    pub phi: f64,
    pub m: f64,
    pub omega: f64,
    pub c: f64,
    pub d: f64,
    pub step_correlation: f64,
}

impl Decomposition {
    pub fn dump(&self) -> Vec<ChirpletDump> {
        self.chirplets
            .iter()
            .zip(&self.step_correlation)
            .map(|(c, &s)| ChirpletDump {
                a: c.a,
                phi: c.phi,
                m: c.m,
                omega: c.omega,
                c: c.c,
                d: c.d,
                step_correlation: s,
            })
            .collect()
    }
}

/// Analytic signal by the one-sided spectrum method. Odd lengths are
/// padded with one zero for the transform; the returned flag records it.
/// The real part is the input, exactly.
pub fn analytic_signal(s: &[f64]) -> Result<(Vec<Complex64>, bool)> {
    if s.len() < 8 {
        return Err(Error::InvalidInput(format!(
            "analytic signal needs at least 8 samples, got {}",
            s.len()
        )));
    }
    let padded = s.len() % 2 == 1;
    let n = s.len() + padded as usize;
    let mut buf: Vec<Complex64> = s.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        if k == 0 || k == n / 2 {
            continue;
        }
        *z *= if k < n / 2 { 2.0 } else { 0.0 };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let out = s
        .iter()
        .zip(&buf)
        .map(|(&x, z)| Complex64::new(x, z.im * scale))
        .collect();
    Ok((out, padded))
}

fn norm_const(d: f64) -> f64 {
    (2.0 * PI * d * d).powf(-0.25)
}

/// Direct evaluation of the atom at sample `n`.
pub fn atom(p: &AtomParams, n: f64) -> Complex64 {
    let u = n - p.m;
    let env = norm_const(p.d) * (-(u / (2.0 * p.d)).powi(2)).exp();
    Complex64::from_polar(env, p.omega * u + 0.5 * p.c * u * u)
}

/// Sample range `[lo, hi)` holding the numerically relevant support.
fn support(p: &AtomParams, len: usize) -> (usize, usize) {
    let w = (SUPPORT * p.d).ceil();
    let lo = (p.m - w).floor().max(0.0).min(len as f64) as usize;
    let hi = ((p.m + w).ceil() + 1.0).max(0.0).min(len as f64) as usize;
    (lo, hi)
}

/// Fills `out[lo..hi]` with atom samples using the two-multiply
/// recurrence, started at the sample nearest the centre and run outwards.
fn fill_atom(p: &AtomParams, lo: usize, hi: usize, out: &mut [Complex64]) {
    if lo >= hi {
        return;
    }
    let n0 = (p.m.round().max(lo as f64).min((hi - 1) as f64)) as usize;
    let alpha = Complex64::new(-1.0 / (4.0 * p.d * p.d), 0.5 * p.c);
    let q = (alpha * 2.0).exp();
    let u0 = n0 as f64 - p.m;
    let g0 = atom(p, n0 as f64);
    out[n0] = g0;
    // forward: g(n+1) = g(n) r, r(u) = exp(j omega + alpha (2u + 1))
    let mut g = g0;
    let mut r = (Complex64::new(0.0, p.omega) + alpha * (2.0 * u0 + 1.0)).exp();
    for slot in out.iter_mut().take(hi).skip(n0 + 1) {
        g *= r;
        r *= q;
        *slot = g;
    }
    // backward: g(n-1) = g(n) s, s(u) = exp(-j omega + alpha (1 - 2u))
    let mut g = g0;
    let mut s = (Complex64::new(0.0, -p.omega) + alpha * (1.0 - 2.0 * u0)).exp();
    for k in (lo..n0).rev() {
        g *= s;
        s *= q;
        out[k] = g;
    }
}

/// Atom samples over `0..len`, zero outside the support.
pub fn atom_vec(p: &AtomParams, len: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let (lo, hi) = support(p, len);
    fill_atom(p, lo, hi, &mut out);
    out
}

/// Weighted sum of the atoms over `0..len`.
pub fn reconstruct(dec: &Decomposition, len: usize) -> Vec<Complex64> {
    reconstruct_atoms(&dec.chirplets, len)
}

pub fn reconstruct_atoms(chirplets: &[Chirplet], len: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); len];
    for ch in chirplets {
        let p = ch.params();
        let (lo, hi) = support(&p, len);
        fill_atom(&p, lo, hi, &mut scratch);
        let w = ch.weight();
        for k in lo..hi {
            out[k] += w * scratch[k];
        }
    }
    out
}

/// `10 log10(|x|^2 / |x - y|^2)`; infinite for an exact match.
pub fn snr_db(x: &[Complex64], y: &[Complex64]) -> f64 {
    let sig: f64 = x.iter().map(|z| z.norm_sqr()).sum();
    let err: f64 = x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum();
    10.0 * (sig / err).log10()
}

/// Coarse dictionary grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub m_step: usize,
    /// Frequencies `k pi / omega_bins`, `k = 0..=omega_bins`.
    pub omega_bins: usize,
    pub c_values: Vec<f64>,
    pub d_values: Vec<f64>,
}

impl Default for Dictionary {
    fn default() -> Self {
        let base = 2f64.powi(-18);
        let mut c_values = vec![0.0];
        for k in 0..6 {
            let v = base * f64::from(1u32 << k);
            c_values.push(v);
            c_values.push(-v);
        }
        c_values.sort_by(f64::total_cmp);
        Dictionary {
            m_step: 8,
            omega_bins: 64,
            c_values,
            d_values: vec![8.0, 16.0, 32.0, 64.0, 128.0, 256.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    pub q: usize,
    pub max_sweeps: usize,
    /// Relative score gain below which coordinate ascent stops.
    pub tol: f64,
    pub newton_iters: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            q: 3,
            max_sweeps: 50,
            tol: 1e-6,
            newton_iters: 60,
        }
    }
}

/// Greedy decomposition of an analytic signal into `q` atoms.
pub fn decompose(sa: &[Complex64], q: usize) -> Result<Decomposition> {
    decompose_with(
        sa,
        &DecomposeOptions {
            q,
            ..Default::default()
        },
        &Dictionary::default(),
    )
}

pub fn decompose_with(sa: &[Complex64], opts: &DecomposeOptions, dict: &Dictionary) -> Result<Decomposition> {
    let n = sa.len();
    if opts.q == 0 {
        return Err(Error::InvalidInput("q must be >= 1".into()));
    }
    if opts.q > n / 4 {
        return Err(Error::InvalidInput(format!("q = {} exceeds N/4 = {}", opts.q, n / 4)));
    }
    let total: f64 = sa.iter().map(|z| z.norm_sqr()).sum();
    if !(total > 0.0) {
        return Err(Error::EmptySignal);
    }
    let coarse = CoarseSearch::new(dict, n);
    let mut residual = sa.to_vec();
    let mut res_energy = total;
    let mut out = Decomposition {
        chirplets: Vec::with_capacity(opts.q),
        residual_energy: 1.0,
        residual_trace: Vec::with_capacity(opts.q),
        step_correlation: Vec::with_capacity(opts.q),
        channel: None,
    };
    let mut atom_buf = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..opts.q {
        if res_energy <= 0.0 {
            out.residual_trace.push(0.0);
            out.step_correlation.push(0.0);
            continue;
        }
        let (start, coarse_score) = coarse.best(&residual);
        let (p, score) = refine(&residual, start, coarse_score, opts);
        let (lo, hi) = support(&p, n);
        fill_atom(&p, lo, hi, &mut atom_buf);
        let mut ip = Complex64::new(0.0, 0.0);
        let mut norm2 = 0.0;
        for k in lo..hi {
            ip += residual[k] * atom_buf[k].conj();
            norm2 += atom_buf[k].norm_sqr();
        }
        let z = ip / norm2;
        for k in lo..hi {
            residual[k] -= z * atom_buf[k];
        }
        let before = res_energy;
        res_energy = residual.iter().map(|v| v.norm_sqr()).sum::<f64>().min(before);
        let mut phi = z.arg();
        if phi >= PI {
            phi -= 2.0 * PI;
        }
        out.chirplets.push(Chirplet {
            a: z.norm(),
            phi,
            m: p.m,
            omega: p.omega,
            c: p.c,
            d: p.d,
        });
        out.step_correlation
            .push((score / before).sqrt().min(1.0));
        out.residual_trace.push(res_energy / total);
    }
    out.residual_energy = res_energy / total;
    Ok(out)
}

/// Exhaustive search over the coarse grid: for every `(c, d)` template and
/// every grid time `m`, all grid frequencies at once via a folded FFT.
struct CoarseSearch {
    len: usize,
    m_step: usize,
    bins: usize,
    c_values: Vec<f64>,
    d_values: Vec<f64>,
    /// `conj(g(u))` at zero frequency for `u in -w..=w`, per `(d, c)`.
    templates: Vec<(usize, Vec<Complex64>)>,
    /// `|g|^2` summed over the in-range part, per `(d, m index)`.
    norms: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl CoarseSearch {
    fn new(dict: &Dictionary, len: usize) -> Self {
        let fft_len = 2 * dict.omega_bins;
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let mut templates = Vec::new();
        let mut norms = Vec::new();
        let m_count = len.div_ceil(dict.m_step);
        for &d in &dict.d_values {
            let w = ((SUPPORT * d).ceil() as usize).min(len);
            let env: Vec<f64> = (0..=2 * w)
                .map(|i| {
                    let u = i as f64 - w as f64;
                    norm_const(d) * (-(u / (2.0 * d)).powi(2)).exp()
                })
                .collect();
            for &c in &dict.c_values {
                let t = env
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| {
                        let u = i as f64 - w as f64;
                        Complex64::from_polar(e, -0.5 * c * u * u)
                    })
                    .collect();
                templates.push((w, t));
            }
            norms.push(
                (0..m_count)
                    .map(|mi| {
                        let m = (mi * dict.m_step) as i64;
                        let lo = (m - w as i64).max(0);
                        let hi = (m + w as i64).min(len as i64 - 1);
                        (lo..=hi)
                            .map(|k| env[(k - m + w as i64) as usize].powi(2))
                            .sum()
                    })
                    .collect(),
            );
        }
        CoarseSearch {
            len,
            m_step: dict.m_step,
            bins: dict.omega_bins,
            c_values: dict.c_values.clone(),
            d_values: dict.d_values.clone(),
            templates,
            norms,
            fft,
        }
    }

    /// Best grid atom; ties go to the smallest `m`, then smallest `omega`.
    fn best(&self, r: &[Complex64]) -> (AtomParams, f64) {
        let fft_len = 2 * self.bins;
        let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut best = (
            AtomParams {
                m: 0.0,
                omega: 0.0,
                c: 0.0,
                d: self.d_values[0],
            },
            -1.0,
        );
        let nc = self.c_values.len();
        for (ti, (w, tmpl)) in self.templates.iter().enumerate() {
            let (di, ci) = (ti / nc, ti % nc);
            let w = *w as i64;
            for (mi, m) in (0..self.len).step_by(self.m_step).enumerate() {
                let norm = self.norms[di][mi];
                if norm <= 0.0 {
                    continue;
                }
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                let m = m as i64;
                let lo = (m - w).max(0);
                let hi = (m + w).min(self.len as i64 - 1);
                for k in lo..=hi {
                    let u = k - m;
                    let slot = u.rem_euclid(fft_len as i64) as usize;
                    buf[slot] += r[k as usize] * tmpl[(u + w) as usize];
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                for (k, z) in buf.iter().take(self.bins + 1).enumerate() {
                    let score = z.norm_sqr() / norm;
                    if score > best.1 {
                        best = (
                            AtomParams {
                                m: m as f64,
                                omega: k as f64 * PI / self.bins as f64,
                                c: self.c_values[ci],
                                d: self.d_values[di],
                            },
                            score,
                        );
                    } else if score == best.1 {
                        let cand = (m as f64, k as f64 * PI / self.bins as f64);
                        if cand < (best.0.m, best.0.omega) {
                            best = (
                                AtomParams {
                                    m: cand.0,
                                    omega: cand.1,
                                    c: self.c_values[ci],
                                    d: self.d_values[di],
                                },
                                score,
                            );
                        }
                    }
                }
            }
        }
        best
    }
}

/// Parameter vector used by the optimiser: `(m, omega, c, ln d)`.
type Theta = [f64; 4];

fn to_theta(p: &AtomParams) -> Theta {
    [p.m, p.omega, p.c, p.d.ln()]
}

fn from_theta(t: &Theta) -> AtomParams {
    AtomParams {
        m: t[0],
        omega: t[1],
        c: t[2],
        d: t[3].exp(),
    }
}

struct Bounds {
    lo: Theta,
    hi: Theta,
}

impl Bounds {
    fn for_len(len: usize) -> Self {
        Bounds {
            lo: [0.0, 0.0, -2f64.powi(-6), 0.0],
            hi: [(len - 1) as f64, PI, 2f64.powi(-6), (4.0 * len as f64).ln()],
        }
    }

    fn clamp(&self, t: &mut Theta) {
        for i in 0..4 {
            t[i] = t[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

/// Score `|<r,g>|^2 / |g|^2` plus, on request, its gradient and Hessian
/// with respect to `(m, omega, c, ln d)`.
struct Objective<'a> {
    r: &'a [Complex64],
    buf: Vec<Complex64>,
}

struct Derivs {
    grad: Theta,
    hess: [[f64; 4]; 4],
}

impl<'a> Objective<'a> {
    fn new(r: &'a [Complex64]) -> Self {
        Objective {
            r,
            buf: vec![Complex64::new(0.0, 0.0); r.len()],
        }
    }

    fn value(&mut self, t: &Theta) -> f64 {
        let p = from_theta(t);
        let (lo, hi) = support(&p, self.r.len());
        fill_atom(&p, lo, hi, &mut self.buf);
        let mut ip = Complex64::new(0.0, 0.0);
        let mut n2 = 0.0;
        for k in lo..hi {
            let g = self.buf[k];
            ip += self.r[k] * g.conj();
            n2 += g.norm_sqr();
        }
        if n2 > 0.0 {
            ip.norm_sqr() / n2
        } else {
            0.0
        }
    }

    fn derivs(&mut self, t: &Theta) -> Derivs {
        let p = from_theta(t);
        let (lo, hi) = support(&p, self.r.len());
        fill_atom(&p, lo, hi, &mut self.buf);
        // moments S_k = sum r conj(g) u^k, T_k = sum |g|^2 u^k, k = 0..4
        let mut s = [Complex64::new(0.0, 0.0); 5];
        let mut tm = [0.0f64; 5];
        for k in lo..hi {
            let g = self.buf[k];
            let e = self.r[k] * g.conj();
            let a = g.norm_sqr();
            let u = k as f64 - p.m;
            let mut pw = 1.0;
            for i in 0..5 {
                s[i] += e * pw;
                tm[i] += a * pw;
                pw *= u;
            }
        }
        let j = Complex64::new(0.0, 1.0);
        let (om, c, d2) = (p.omega, p.c, p.d * p.d);
        // v_theta = conj(d g / d theta) / conj(g) as polynomials in u,
        // coefficients [u^0, u^1, u^2]
        let v: [[Complex64; 3]; 4] = [
            [j * om, Complex64::new(1.0 / (2.0 * d2), 0.0) + j * c, Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), -j, Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), -j * 0.5],
            [Complex64::new(-0.5, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.5 / d2, 0.0)],
        ];
        // d v_theta / d phi, same layout, indexed [theta][phi]
        let zero = [Complex64::new(0.0, 0.0); 3];
        let mut dv = [[zero; 4]; 4];
        dv[0][0] = [Complex64::new(-1.0 / (2.0 * d2), 0.0) - j * c, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        dv[0][1] = [j, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        dv[0][2] = [Complex64::new(0.0, 0.0), j, Complex64::new(0.0, 0.0)];
        dv[0][3] = [Complex64::new(0.0, 0.0), Complex64::new(-1.0 / d2, 0.0), Complex64::new(0.0, 0.0)];
        dv[1][0] = dv[0][1];
        dv[2][0] = dv[0][2];
        dv[3][0] = dv[0][3];
        dv[3][3] = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(-1.0 / d2, 0.0)];

        let apply = |poly: &[Complex64], mom: &[Complex64; 5]| -> Complex64 {
            poly.iter().enumerate().map(|(i, a)| a * mom[i]).sum()
        };
        let mul = |a: &[Complex64; 3], b: &[Complex64; 3]| -> [Complex64; 5] {
            let mut o = [Complex64::new(0.0, 0.0); 5];
            for i in 0..3 {
                for k in 0..3 {
                    o[i + k] += a[i] * b[k];
                }
            }
            o
        };
        let pr = s[0];
        let dp: [Complex64; 4] = std::array::from_fn(|i| apply(&v[i], &s));
        let mut ddp = [[Complex64::new(0.0, 0.0); 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                let prod = mul(&v[a], &v[b]);
                ddp[a][b] = apply(&prod, &s) + apply(&dv[a][b], &s);
            }
        }
        // |g|^2 moments: 2 Re v_theta and 2 Re dv
        let re2 = |poly: &[Complex64; 3]| -> [f64; 3] { poly.map(|z| 2.0 * z.re) };
        let dot = |poly: &[f64], mom: &[f64; 5]| -> f64 {
            poly.iter().enumerate().map(|(i, a)| a * mom[i]).sum()
        };
        let w: [[f64; 3]; 4] = std::array::from_fn(|i| re2(&v[i]));
        let n0 = tm[0];
        let dn: [f64; 4] = std::array::from_fn(|i| dot(&w[i], &tm));
        let mut ddn = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                let mut prod = [0.0; 5];
                for i in 0..3 {
                    for k in 0..3 {
                        prod[i + k] += w[a][i] * w[b][k];
                    }
                }
                ddn[a][b] = dot(&prod, &tm) + dot(&re2(&dv[a][b]), &tm);
            }
        }
        let q = pr.norm_sqr();
        let dq: [f64; 4] = std::array::from_fn(|i| 2.0 * (pr.conj() * dp[i]).re);
        let mut out = Derivs {
            grad: [0.0; 4],
            hess: [[0.0; 4]; 4],
        };
        if n0 <= 0.0 {
            return out;
        }
        for a in 0..4 {
            out.grad[a] = (dq[a] * n0 - q * dn[a]) / (n0 * n0);
            for b in 0..4 {
                let ddq = 2.0 * (dp[b].conj() * dp[a] + pr.conj() * ddp[a][b]).re;
                out.hess[a][b] = ddq / n0 - (dq[a] * dn[b] + dq[b] * dn[a]) / (n0 * n0) - q * ddn[a][b] / (n0 * n0)
                    + 2.0 * q * dn[a] * dn[b] / (n0 * n0 * n0);
            }
        }
        out
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximisation of `f` over `[a, b]`.
fn golden_max(mut a: f64, mut b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coordinate ascent from a coarse grid atom followed by a Newton polish.
/// Never returns a score below `start_score`.
fn refine(r: &[Complex64], start: AtomParams, start_score: f64, opts: &DecomposeOptions) -> (AtomParams, f64) {
    let bounds = Bounds::for_len(r.len());
    let mut obj = Objective::new(r);
    let mut theta = to_theta(&start);
    let mut best = obj.value(&theta).max(0.0);
    if best < start_score {
        best = start_score.min(best.max(0.0));
    }
    let mut h: Theta = [4.0, PI / 128.0, start.c.abs().max(2f64.powi(-18)), 0.5 * 2f64.ln()];
    let h_min: Theta = [1e-3, 1e-6, 1e-10, 1e-5];
    let h_max: Theta = [256.0, 0.5, 2f64.powi(-8), 2.0];
    for _ in 0..opts.max_sweeps {
        let sweep_start = best;
        for i in 0..4 {
            let lo = (theta[i] - h[i]).max(bounds.lo[i]);
            let hi = (theta[i] + h[i]).min(bounds.hi[i]);
            if hi <= lo {
                continue;
            }
            let mut probe = theta;
            let (x, fx) = golden_max(lo, hi, (hi - lo) * 1e-3, |x| {
                probe[i] = x;
                obj.value(&probe)
            });
            let edge = (x - lo).min(hi - x) < 0.02 * (hi - lo);
            if fx > best {
                theta[i] = x;
                best = fx;
            }
            h[i] = if edge {
                (h[i] * 2.0).min(h_max[i])
            } else {
                (h[i] * 0.5).max(h_min[i])
            };
        }
        if best - sweep_start <= opts.tol * sweep_start.abs() {
            break;
        }
    }
    // damped Newton (Levenberg-Marquardt) polish
    let mut lambda = 0.0;
    let mut dv = obj.derivs(&theta);
    for _ in 0..opts.newton_iters {
        let cand = newton_step(&dv, &theta, lambda).map(|step| {
            let mut c = theta;
            for i in 0..4 {
                c[i] += step[i];
            }
            bounds.clamp(&mut c);
            c
        });
        match cand.map(|c| (c, obj.value(&c))) {
            Some((c, fc)) if fc > best => {
                let gain = (fc - best) / best;
                theta = c;
                best = fc;
                lambda *= 0.1;
                if gain < 1e-13 {
                    break;
                }
                dv = obj.derivs(&theta);
            }
            _ => {
                lambda = if lambda == 0.0 { 1e-4 } else { lambda * 10.0 };
                if lambda > 1e6 {
                    break;
                }
            }
        }
    }
    (from_theta(&theta), best)
}

/// Step `-(H - lambda D)^-1 g` in variables scaled by the atom duration,
/// with `D` the diagonal of `-H`; `None` when the damped matrix is not
/// negative definite.
fn newton_step(dv: &Derivs, theta: &Theta, lambda: f64) -> Option<Theta> {
    let d = theta[3].exp();
    let sc: Theta = [d, 1.0 / d, 1.0 / (d * d), 1.0];
    let mut a = [[0.0; 5]; 4];
    for i in 0..4 {
        for k in 0..4 {
            a[i][k] = -dv.hess[i][k] * sc[i] * sc[k];
        }
        a[i][4] = dv.grad[i] * sc[i];
    }
    for i in 0..4 {
        a[i][i] += lambda * a[i][i].abs().max(1e-12);
    }
    // Cholesky of the (positive definite) negated Hessian.
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..=i {
            let mut s = a[i][k];
            for t in 0..k {
                s -= l[i][t] * l[k][t];
            }
            if i == k {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][k] = s / l[k][k];
            }
        }
    }
    let mut y = [0.0; 4];
    for i in 0..4 {
        let mut s = a[i][4];
        for t in 0..i {
            s -= l[i][t] * y[t];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let mut s = y[i];
        for t in i + 1..4 {
            s -= l[t][i] * x[t];
        }
        x[i] = s / l[i][i];
    }
    let step: Theta = std::array::from_fn(|i| x[i] * sc[i]);
    step.iter().all(|v| v.is_finite()).then_some(step)
}
