use num_complex::Complex64;
use pirsim::chirplet::{
    analytic_signal, atom_vec, decompose, decompose_with, AtomParams, DecomposeOptions, Dictionary,
};
use pirsim::classifier::{kfold_cv, Grid, Kernel};
use pirsim::config::Config;
use pirsim::features::{cross_correlation, extract, rho_max};
use pirsim::geom::Vec3;
use pirsim::optics::{
    beam_footprint, build_channel_beams, build_virtual_beams, vpa_at_plane, Channel, ChannelName, LensKind,
    LensSystem, PixelPair, SensorTowerConfig,
};
use pirsim::radiometry::{net_power, sense, RadiometryParams, SensorResponseParams};
use pirsim::scene::{Event, EventMeta};
use pirsim::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn lens(kind: LensKind, focal: f64, azimuths: Vec<f64>) -> LensSystem {
    LensSystem {
        name: "test".into(),
        kind,
        focal_length: focal,
        aperture_area: 1e-4,
        transmission: 0.9,
        filter_fraction: 0.8,
        mount: Vec3::new(0.0, 1.0, 0.0),
        yaw: 0.0,
        lenslet_azimuths: azimuths,
    }
}

fn channel(pixels: PixelPair) -> Channel {
    Channel {
        name: ChannelName::A,
        pixels,
        lens: 0,
    }
}

fn default_tower() -> SensorTowerConfig {
    SensorTowerConfig::from_section(&Config::default().tower).unwrap()
}

fn noise(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn event(channels: [Vec<f64>; 8]) -> Event {
    Event {
        channels,
        meta: EventMeta {
            id: "p".into(),
            label: Label::Human,
            speed_mps: None,
            theta_rad: None,
            range_m: None,
            seed: 0,
            flags: vec![],
        },
    }
}

fn random_event(seed: u64, n: usize) -> Event {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chans: [Vec<f64>; 8] = std::array::from_fn(|_| {
        let s = rng.gen_range(0.01..1.0);
        noise(&mut rng, n, s).into_iter().map(|x| x + 1.65).collect()
    });
    event(chans)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn beam_count_is_rectangles_times_lenslets(lenslets in 2usize..9, w in 0.0005f64..0.002, h in 0.0005f64..0.003) {
        let az: Vec<f64> = (0..lenslets).map(|i| -0.5 + i as f64 / lenslets as f64).collect();
        let l = lens(LensKind::Multi, 0.02, az);
        let beams = build_channel_beams(&[channel(PixelPair::new(w, h, 0.0002, 0.0))], &[l]).unwrap();
        prop_assert_eq!(beams.len(), 2 * lenslets);
    }

    #[test]
    fn footprint_area_grows_with_range(r in 1.0f64..20.0, dr in 0.01f64..5.0) {
        let beams = build_virtual_beams(&default_tower()).unwrap();
        let near = vpa_at_plane(&beams, r).unwrap();
        let far = vpa_at_plane(&beams, r + dr).unwrap();
        for (a, b) in near.iter().zip(&far) {
            prop_assert!(b.area() > a.area());
        }
    }

    #[test]
    fn mirror_symmetric_lens_gives_mirror_symmetric_vpa(
        a1 in 0.05f64..0.4, a2 in 0.45f64..0.8, offset in -0.002f64..0.002, r in 3.0f64..12.0,
    ) {
        let l = lens(LensKind::Multi, 0.02, vec![-a2, -a1, a1, a2]);
        let beams = build_channel_beams(&[channel(PixelPair::new(0.001, 0.002, 0.0002, offset))], &[l]).unwrap();
        let quads = vpa_at_plane(&beams, r).unwrap();
        for q in &quads {
            let mirrored: Vec<(f64, f64)> = q.corners.iter().map(|p| (-p.x, p.y)).collect();
            let found = quads.iter().any(|o| {
                beams[o.beam_id].polarity != beams[q.beam_id].polarity
                    && mirrored.iter().all(|m| o.corners.iter().any(|c| (c.x - m.0).abs() < 1e-9 && (c.y - m.1).abs() < 1e-9))
            });
            prop_assert!(found);
        }
    }

    #[test]
    fn lowering_pixels_raises_footprint(delta in 1e-5f64..0.001, r in 2.0f64..15.0, f in 0.01f64..0.05) {
        let l = lens(LensKind::Spot, f, vec![0.0]);
        let base = build_channel_beams(&[channel(PixelPair::new(0.001, 0.002, 0.0002, 0.0))], &[l.clone()]).unwrap();
        let moved = build_channel_beams(&[channel(PixelPair::new(0.001, 0.002, 0.0002, -delta))], &[l]).unwrap();
        let want = delta * r / f;
        for (a, b) in base.iter().zip(&moved) {
            let dy = beam_footprint(b, r).unwrap().centroid().y - beam_footprint(a, r).unwrap().centroid().y;
            prop_assert!((dy / want - 1.0).abs() < 1e-6, "{} vs {}", dy, want);
        }
    }

    #[test]
    fn net_power_flips_sign_when_temperatures_swap(
        t1 in 200.0f64..400.0, t2 in 200.0f64..400.0, a in 0.0f64..3.0, r in 0.1f64..30.0,
    ) {
        let p = RadiometryParams { tau: 0.9, eta: 0.8, filter_fraction: 0.7, aperture_area: 2e-4, sigma: 5.670374419e-8, t_obj: t1, t_b: t2 };
        let q = RadiometryParams { t_obj: t2, t_b: t1, ..p };
        prop_assert_eq!(net_power(&p, a, r).unwrap(), -net_power(&q, a, r).unwrap());
    }

    #[test]
    fn sense_is_affine_before_clipping(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let p = SensorResponseParams {
            k1: 1.0, k2: 0.6, k3: 50.0, k4: 30.0, gain: 2.0,
            clip_low: -1e9, clip_high: 1e9, dc_offset: 1.65, noise_std: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = noise(&mut rng, 300, 1.0);
        let w2 = noise(&mut rng, 300, 1.0);
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let v = sense(&mix, &p, 100.0, seed).unwrap();
        let v1 = sense(&w1, &p, 100.0, seed).unwrap();
        let v2 = sense(&w2, &p, 100.0, seed).unwrap();
        for i in 0..v.len() {
            let want = a * v1[i] + b * v2[i] - (a + b - 1.0) * p.dc_offset;
            prop_assert!((v[i] - want).abs() < 1e-9 * (1.0 + want.abs()));
        }
        prop_assert_eq!(sense(&mix, &p, 100.0, seed).unwrap(), v);
    }

    #[test]
    fn analytic_signal_keeps_the_real_part(seed in any::<u64>(), n in 8usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = noise(&mut rng, n, 1.0);
        let (z, _) = analytic_signal(&x).unwrap();
        for (a, b) in x.iter().zip(&z) {
            prop_assert_eq!(*a, b.re);
        }
    }

    #[test]
    fn rho_is_bounded_and_scale_free(seed in any::<u64>(), scale in 0.001f64..1000.0) {
        let ev = random_event(seed, 256);
        let c = rho_max(&ev).unwrap();
        prop_assert!(c.rho_max.abs() <= 1.0 + 1e-12);
        let mut scaled = ev.clone();
        for ch in [ChannelName::L1, ChannelName::L2, ChannelName::R1, ChannelName::R2] {
            for x in scaled.channels[ch.index()].iter_mut() {
                *x *= scale;
            }
        }
        let s = rho_max(&scaled).unwrap();
        prop_assert!((s.rho_max - c.rho_max).abs() < 1e-9);
        prop_assert_eq!(s.lag, c.lag);
    }

    #[test]
    fn correlated_pairs_stay_bounded(seed in any::<u64>(), delay in 0usize..60, mix in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = [noise(&mut rng, 200, 1.0), noise(&mut rng, 200, 1.0)];
        let r = l.clone().map(|v| {
            let extra = noise(&mut rng, 200, 1.0);
            (0..200).map(|n| mix * if n >= delay { v[n - delay] } else { 0.0 } + (1.0 - mix) * extra[n]).collect::<Vec<_>>()
        });
        let c = cross_correlation(&l, &r).unwrap();
        prop_assert!(c.rho_max <= 1.0 + 1e-12 && c.rho_max >= -1.0 - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn doubling_amplitude_scales_weights_only(m in 200.0f64..800.0, omega in 0.2f64..2.9, d in 8.0f64..60.0, c in -1e-4f64..1e-4) {
        let s = atom_vec(&AtomParams { m, omega, c, d }, 1024);
        let s2: Vec<Complex64> = s.iter().map(|z| z * 2.0).collect();
        let a = decompose(&s, 1).unwrap().chirplets[0];
        let b = decompose(&s2, 1).unwrap().chirplets[0];
        prop_assert_eq!((a.m, a.omega, a.c, a.d, a.phi), (b.m, b.omega, b.c, b.d, b.phi));
        prop_assert!((b.a / a.a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_scaling_keeps_parameters(m in 200.0f64..800.0, omega in 0.2f64..2.9, d in 8.0f64..60.0, alpha in 0.1f64..10.0) {
        let s = atom_vec(&AtomParams { m, omega, c: 0.0, d }, 1024);
        let sa: Vec<Complex64> = s.iter().map(|z| z * alpha).collect();
        let a = decompose(&s, 1).unwrap().chirplets[0];
        let b = decompose(&sa, 1).unwrap().chirplets[0];
        prop_assert!((b.a / a.a / alpha - 1.0).abs() < 1e-6);
        prop_assert!((a.m - b.m).abs() < 1e-3 && (a.omega - b.omega).abs() < 1e-5);
        prop_assert!((a.d / b.d - 1.0).abs() < 1e-4);
    }

    #[test]
    fn shifting_the_signal_shifts_arrival_time(m in 300.0f64..700.0, shift in -150.0f64..150.0, omega in 0.2f64..2.9, d in 8.0f64..40.0) {
        let p = AtomParams { m, omega, c: 5e-5, d };
        let q = AtomParams { m: m + shift, ..p };
        let a = decompose(&atom_vec(&p, 1024), 1).unwrap().chirplets[0];
        let b = decompose(&atom_vec(&q, 1024), 1).unwrap().chirplets[0];
        prop_assert!((b.m - a.m - shift).abs() <= 1.0, "{} {} {}", a.m, b.m, shift);
    }

    #[test]
    fn residual_never_grows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = noise(&mut rng, 512, 1.0);
        let (z, _) = analytic_signal(&x).unwrap();
        let dec = decompose(&z, 3).unwrap();
        prop_assert!(dec.residual_trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(dec.residual_trace[0] <= 1.0);
        prop_assert_eq!(*dec.residual_trace.last().unwrap(), dec.residual_energy);
    }

    #[test]
    fn refinement_never_loses_to_the_coarse_grid(seed in any::<u64>()) {
        const N: usize = 256;
        let dict = Dictionary { m_step: 16, omega_bins: 64, c_values: vec![0.0, 2e-4, -2e-4], d_values: vec![8.0, 32.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = vec![Complex64::new(0.0, 0.0); N];
        for _ in 0..3 {
            let p = AtomParams { m: rng.gen_range(40.0..216.0), omega: rng.gen_range(0.0..3.1), c: rng.gen_range(-3e-4..3e-4), d: rng.gen_range(6.0..40.0) };
            let w = Complex64::from_polar(rng.gen_range(0.2..1.0), rng.gen_range(-3.0..3.0));
            for (z, g) in s.iter_mut().zip(atom_vec(&p, N)) {
                *z += w * g;
            }
        }
        for (n, z) in s.iter_mut().enumerate() {
            *z += Complex64::new(0.05 * ((n * 7 % 13) as f64 - 6.0), 0.0);
        }
        let energy: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        let mut best = 0.0f64;
        for m in (0..N).step_by(dict.m_step) {
            for k in 0..=dict.omega_bins {
                for &c in &dict.c_values {
                    for &d in &dict.d_values {
                        let g = atom_vec(&AtomParams { m: m as f64, omega: k as f64 * std::f64::consts::PI / dict.omega_bins as f64, c, d }, N);
                        let ip: Complex64 = s.iter().zip(&g).map(|(x, y)| x * y.conj()).sum();
                        let gg: f64 = g.iter().map(|y| y.norm_sqr()).sum();
                        best = best.max(ip.norm() / (gg * energy).sqrt());
                    }
                }
            }
        }
        let dec = decompose_with(&s, &DecomposeOptions { q: 1, ..Default::default() }, &dict).unwrap();
        prop_assert!(dec.step_correlation[0] >= best - 1e-9, "{} < {}", dec.step_correlation[0], best);
    }

    #[test]
    fn features_are_a_pure_function_of_the_event(seed in any::<u64>()) {
        let ev = random_event(seed, 256);
        prop_assert_eq!(extract(&ev, 3).unwrap(), extract(&ev.clone(), 3).unwrap());
    }

    #[test]
    fn column_scaling_leaves_cv_unchanged(seed in any::<u64>(), col in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let c = if pos { 0.8 } else { -0.8 };
            x.push((0..3).map(|_| c + rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>());
            y.push(pos);
        }
        let ids: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| { let mut r = r.clone(); r[col] *= 10.0; r }).collect();
        let grid = Grid { points: vec![(Kernel::Linear, 1.0), (Kernel::Rbf { gamma: 0.5 }, 4.0)] };
        let a = kfold_cv(&x, &y, &ids, ["neg", "pos"], 4, &grid, seed).unwrap();
        let b = kfold_cv(&scaled, &y, &ids, ["neg", "pos"], 4, &grid, seed).unwrap();
        prop_assert_eq!(a.confusion, b.confusion);
        prop_assert_eq!(a.rows, b.rows);
    }
}
