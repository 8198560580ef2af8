//! Structural invariants over randomly drawn small configurations.

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::UserLink;
use crate::channel::{draw_channel, propagate_stream, ChannelProfile};
use crate::optimizer::{optimize_zp, Evaluator};
use crate::receiver::{dft_downsample, EqualizerKind};
use crate::scenario::LinkSetup;
use crate::sigcore::{linear_convolve, UnitaryDft};
use crate::waveform::{design_chebyshev_filter, tail_cut_split, FrameConfig, Qam, SubbandPlan, Synthesizer};

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn complex_vec(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b)), len)
}

/// Two subbands on a 32-point grid with a small random channel.
#[derive(Debug, Clone)]
struct Small {
    sizes: [usize; 2],
    first: usize,
    filter_len: usize,
    l_zp: i64,
    cfo: [f64; 2],
    tau: [usize; 2],
    l_ch: usize,
}

fn small() -> impl Strategy<Value = Small> {
    (2usize..=6, 2usize..=6, 0usize..=8, 1usize..=9, -4i64..=6, -0.3f64..0.3, -0.3f64..0.3, 0usize..=6, 0usize..=6, 1usize..=4)
        .prop_map(|(a, b, first, filter_len, l_zp, e0, e1, t0, t1, l_ch)| Small {
            sizes: [a, b],
            first,
            filter_len,
            l_zp: l_zp.max(1 - filter_len as i64),
            cfo: [e0, e1],
            tau: [t0, t1],
            l_ch,
        })
}

fn build(s: &Small) -> LinkSetup {
    let plan = SubbandPlan::new(32, &s.sizes, s.first).unwrap();
    let filters = (0..2).map(|m| design_chebyshev_filter(s.filter_len, 40.0, &plan, m).unwrap()).collect();
    let config = FrameConfig::new(plan, filters, s.l_zp).unwrap();
    let powers: Vec<f64> = (0..s.l_ch).map(|j| 0.5f64.powi(j as i32)).collect();
    let total: f64 = powers.iter().sum();
    let powers: Vec<f64> = powers.iter().map(|p| p / total).collect();
    let eta = config.min_eta(s.l_ch);
    LinkSetup {
        config,
        cfo: s.cfo.to_vec(),
        attenuation_db: vec![40.0; 2],
        links: s.tau.iter().map(|&tau| UserLink { tap_powers: powers.clone(), tau }).collect(),
        profiles: vec![ChannelProfile::flat(); 2],
        rho_sym_sq: 1.0,
        noise_var: 0.01,
        eta,
        modulation: 16,
        equalizer: EqualizerKind::Mmse,
        sample_rate_hz: 1e6,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unitary_dft_round_trip_and_parseval(x in complex_vec(1..=64)) {
        let dft = UnitaryDft::new(x.len()).unwrap();
        let mut y = x.clone();
        dft.forward(&mut y);
        let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let ey: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((ex - ey).abs() <= 1e-10 * ex.max(1.0));
        dft.inverse(&mut y);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn convolution_commutes(a in complex_vec(1..=12), b in complex_vec(1..=12)) {
        let ab = linear_convolve(&a, &b).unwrap();
        let ba = linear_convolve(&b, &a).unwrap();
        prop_assert_eq!(ab.len(), a.len() + b.len() - 1);
        for (p, q) in ab.iter().zip(&ba) {
            prop_assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn qam_bits_round_trip(order in prop::sample::select(vec![4usize, 16, 64]), seed in any::<u64>()) {
        let qam = Qam::new(order).unwrap();
        let k = qam.bits_per_symbol();
        let bits: Vec<u8> = (0..k * 16).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        prop_assert_eq!(qam.demap(&qam.map(&bits).unwrap()), bits);
        let energy: f64 = qam.constellation().iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
        prop_assert!((energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_cut_split_covers_the_cut(l_zp in -200i64..200) {
        let (u, d) = tail_cut_split(l_zp);
        prop_assert_eq!((u + d) as i64, (-l_zp).max(0));
        prop_assert!(u <= d && d <= u + 1);
    }

    /// With `1/ρ_m` applied, an untruncated subband carries unit mean
    /// energy per active carrier.
    #[test]
    fn filtered_subband_has_unit_mean_energy(s in small()) {
        let mut s = s;
        s.l_zp = s.l_zp.max(0);
        let setup = build(&s);
        let synth = Synthesizer::new(setup.config.clone()).unwrap();
        let plan = setup.config.plan();
        for m in 0..2 {
            let range = plan.subband_range(m);
            let mut total = 0.0;
            for n in range.clone() {
                let mut a = vec![zero(); 32];
                a[n] = C64::new(1.0, 0.0);
                total += synth.transmit(&a, &[0.0, 0.0]).iter().map(|v| v.norm_sqr()).sum::<f64>();
            }
            prop_assert!((total / range.len() as f64 - 1.0).abs() < 1e-10);
        }
    }

    /// The closed-form coupling equals what the streaming chain produces
    /// for a unit symbol at carrier `t` sent `e` symbols away.
    #[test]
    fn beta_matches_streaming_chain(s in small(), seed in any::<u64>(), e in -2i64..=2) {
        let setup = build(&s);
        let config = &setup.config;
        let engine = setup.engine().unwrap();
        let synth = Synthesizer::new(config.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = config.plan();
        for (m, link) in setup.links.iter().enumerate() {
            let h = draw_channel(&link.tap_powers, &mut rng).taps;
            for t in plan.active_range() {
                let mut a = vec![zero(); 32];
                a[t] = C64::new(1.0, 0.0);
                let mut blocks = vec![vec![zero(); config.l3()]; 5];
                blocks[(2 + e) as usize] = synth.transmit(&a, &setup.cfo);
                let win = propagate_stream(&blocks, &h, link.tau, 0.0, config.receive_window_len(h.len()), &mut rng).unwrap();
                let z = dft_downsample(&win[2], 32, setup.eta).unwrap();
                for n in plan.subband_range(m) {
                    let b = engine.beta(config, n, t, e, &h, link.tau, setup.eta).unwrap();
                    prop_assert!((b - z[n]).norm() < 1e-10, "n={} t={} e={}: {} vs {}", n, t, e, b, z[n]);
                }
            }
        }
    }

    #[test]
    fn breakdown_is_a_valid_power_split(s in small()) {
        let setup = build(&s);
        let bd = setup.breakdown().unwrap();
        for i in 0..bd.len() {
            prop_assert!(bd.p_d[i] > 0.0);
            prop_assert!(bd.p_ici[i] >= -1e-15 && bd.p_isi[i] >= -1e-15);
            prop_assert!(bd.noise[i] > 0.0);
            prop_assert!(bd.sinr_at(i) <= bd.p_d[i] / bd.noise[i] * (1.0 + 1e-12));
        }
        let c = bd.capacity();
        prop_assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn no_offsets_and_full_guard_means_no_interference(s in small()) {
        let mut s = s;
        s.cfo = [0.0, 0.0];
        s.tau = [0, 0];
        s.l_zp = s.l_zp.max(s.l_ch as i64 - 1);
        let bd = build(&s).breakdown().unwrap();
        for i in 0..bd.len() {
            prop_assert!(bd.interference(i) < 1e-6 * bd.p_d[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn zp_optimum_dominates_every_sample(s in small()) {
        let setup = build(&s);
        let eval = Evaluator::new(&setup).unwrap();
        let lo = 1 - s.filter_len as i64;
        let grid: Vec<i64> = (lo..=lo + 12).collect();
        let r = optimize_zp(&eval, s.filter_len, &grid, lo).unwrap();
        prop_assert_eq!(r.samples.len(), grid.len());
        prop_assert!(r.samples.iter().all(|p| p.capacity <= r.best.capacity));
        prop_assert!(grid.contains(&r.best.zp_lengths[0]));
    }
}
