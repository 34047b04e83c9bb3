//! Weight enumerators against exhaustive encoding, exact big-integer
//! arithmetic, and random-interleaver sampling.

use ccgldpc::trellis::{encode_terminated, GeneratorSpec, Trellis};
use ccgldpc::weights::*;
use ccgldpc::{Component, Coupling, EnsembleSpec};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GENERATORS: [GeneratorSpec; 3] = [GeneratorSpec::ACCUMULATOR, GeneratorSpec::FOUR_STATE, GeneratorSpec::EIGHT_STATE];

/// Weight histogram of every terminated, punctured codeword.
fn exhaustive_spectrum(trellis: &Trellis, segments: usize, pattern: &PuncturePattern) -> Vec<u64> {
    let k = pattern.period() * segments;
    let n = conv_block_length(trellis.memory() as usize, segments, pattern);
    let mut hist = vec![0u64; n + 1];
    for word in 0u32..(1 << k) {
        let input: Vec<u8> = (0..k).map(|i| ((word >> i) & 1) as u8).collect();
        let cw = encode_terminated(trellis, &input).unwrap();
        let w: usize = (0..cw.sections())
            .map(|s| cw.systematic(s) as usize + if pattern.keeps(s) { cw.parity(s) as usize } else { 0 })
            .sum();
        hist[w] += 1;
    }
    hist
}

#[test]
fn conv_spectrum_matches_exhaustive_encoding() {
    for g in GENERATORS {
        let t = Trellis::build(&g);
        for dc in [3, 4] {
            let pattern = PuncturePattern::for_check_degree(dc);
            for segments in 1..=6 {
                if (dc as usize - 1) * segments > 18 {
                    continue;
                }
                let brute = exhaustive_spectrum(&t, segments, &pattern);
                let n = brute.len() - 1;
                let dp = component_spectrum_conv_exact(&t, segments, &pattern, n).unwrap();
                let dp: Vec<u64> = dp.counts.iter().map(|c| c.to_u64().unwrap()).collect();
                assert_eq!(dp, brute, "{g} dc={dc} N={segments}");
            }
        }
    }
}

#[test]
fn other_puncture_phases_match_exhaustive_encoding() {
    let t = Trellis::build(&GeneratorSpec::FOUR_STATE);
    for kept in 0..3 {
        let pattern = PuncturePattern::with_kept(3, kept);
        let brute = exhaustive_spectrum(&t, 4, &pattern);
        let dp = component_spectrum_conv_exact(&t, 4, &pattern, brute.len() - 1).unwrap();
        let dp: Vec<u64> = dp.counts.iter().map(|c| c.to_u64().unwrap()).collect();
        assert_eq!(dp, brute, "kept={kept}");
    }
}

fn assert_log_close(exact: &[BigUint], log: &[f64], what: &str) {
    for (w, (e, &l)) in exact.iter().zip(log).enumerate() {
        if <BigUint as Zero>::is_zero(e) {
            assert_eq!(l, f64::NEG_INFINITY, "{what} w={w}");
        } else {
            let rel = (l - ln_biguint(e)).exp_m1().abs();
            assert!(rel <= 1e-9, "{what} w={w}: relative error {rel:e}");
        }
    }
}

#[test]
fn log_domain_matches_exact_integers() {
    for g in GENERATORS {
        let t = Trellis::build(&g);
        for dc in [3, 4, 6] {
            let pattern = PuncturePattern::for_check_degree(dc);
            for segments in [1, 5, 12] {
                let n = conv_block_length(g.memory() as usize, segments, &pattern);
                let exact = component_spectrum_conv_exact(&t, segments, &pattern, n).unwrap();
                let log = component_spectrum_conv(&t, segments, &pattern, n).unwrap();
                assert_log_close(&exact.counts, log.log_counts(), &format!("{g} dc={dc} N={segments}"));
            }
        }
    }
    for (segments, dc) in [(1, 3), (8, 6), (6, 8)] {
        let n = segments * dc as usize;
        let exact = component_spectrum_ldpc_exact(segments, dc, n).unwrap();
        let log = component_spectrum_ldpc(segments, dc, n).unwrap();
        assert_log_close(&exact.counts, log.log_counts(), &format!("ldpc dc={dc} N={segments}"));
    }
}

#[test]
fn spectra_count_every_codeword_once() {
    for (segments, dc) in [(3, 4), (5, 6), (4, 9)] {
        let s = component_spectrum_ldpc_exact(segments, dc, segments * dc as usize).unwrap();
        let total: BigUint = s.counts.iter().sum();
        assert_eq!(total, <BigUint as One>::one() << ((dc as usize - 1) * segments));
    }
    // two disjoint checks of length 4: (1 + 6x^2 + x^4)^2
    let s = component_spectrum_ldpc_exact(2, 4, 8).unwrap();
    let counts: Vec<u64> = s.counts.iter().map(|c| c.to_u64().unwrap()).collect();
    assert_eq!(counts, vec![1, 0, 12, 0, 38, 0, 12, 0, 1]);
}

#[test]
fn truncation_keeps_the_prefix() {
    let t = Trellis::build(&GeneratorSpec::FOUR_STATE);
    let pattern = PuncturePattern::for_check_degree(4);
    let full = component_spectrum_conv(&t, 10, &pattern, 40).unwrap();
    let short = component_spectrum_conv(&t, 10, &pattern, 12).unwrap();
    assert_eq!(&full.log_counts()[..=12], short.log_counts());
}

fn binomial(n: usize, k: usize) -> BigUint {
    (0..k).fold(<BigUint as One>::one(), |acc, i| acc * BigUint::from(n - i) / BigUint::from(i + 1))
}

#[test]
fn ensemble_average_matches_exact_ratio() {
    for (spec, segments) in [
        (EnsembleSpec::conv(4, 6, GeneratorSpec::FOUR_STATE), 4),
        (EnsembleSpec::conv(2, 3, GeneratorSpec::EIGHT_STATE), 6),
        (EnsembleSpec::ldpc(3, 6), 6),
    ] {
        let n = component_block_length(&spec, segments);
        let cap = n.min(40);
        let exact = match spec.component {
            Component::Spc => component_spectrum_ldpc_exact(segments, spec.dc, cap).unwrap(),
            Component::Conv(g) => {
                component_spectrum_conv_exact(&Trellis::build(&g), segments, &PuncturePattern::for_check_degree(spec.dc), cap)
                    .unwrap()
            }
        };
        let avg = ensemble_avg_single_edge(&component_spectrum(&spec, segments, cap).unwrap(), spec.dv);
        for (w, a) in exact.counts.iter().enumerate() {
            let num = a.pow(spec.dv);
            let den = binomial(n, w).pow(spec.dv - 1);
            let expected = num.to_f64().unwrap() / den.to_f64().unwrap();
            let got = avg.count(w);
            assert!((got - expected).abs() <= 1e-9 * expected, "{spec} w={w}: {got} vs {expected}");
            // sanity bound: averaging over interleavers never adds codewords beyond A_w when A_w <= C(n, w)
            if *a <= binomial(n, w) {
                assert!(got <= a.to_f64().unwrap() * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn dmin_bound_matches_cumulative_scan() {
    let spec = EnsembleSpec::ldpc(3, 6);
    for segments in [2, 4, 8] {
        let n = 6 * segments;
        let exact = component_spectrum_ldpc_exact(segments, 6, n).unwrap();
        // independent scan over exact ratios
        let mut acc = 0.0;
        let mut expected = n + 1;
        for w in 1..=n {
            acc += exact.counts[w].pow(3).to_f64().unwrap() / binomial(n, w).pow(2).to_f64().unwrap();
            if acc >= 0.5 {
                expected = w;
                break;
            }
        }
        let avg = ensemble_avg_single_edge(&component_spectrum(&spec, segments, n).unwrap(), 3);
        assert_eq!(dmin_bound(&avg, 0.5).unwrap().d_hat, expected, "N={segments}");
    }
}

#[test]
fn dmin_monotonicity() {
    let spec = EnsembleSpec::conv(3, 6, GeneratorSpec::FOUR_STATE);
    let avg = ensemble_avg_single_edge(&component_spectrum(&spec, 20, 60).unwrap(), 3);
    let mut last = usize::MAX;
    for alpha in [0.05, 0.2, 0.5, 0.8, 0.95] {
        let d = dmin_bound(&avg, alpha).unwrap().d_hat;
        assert!(d >= 1 && d <= last, "alpha={alpha}");
        last = d;
        // never beyond the first weight whose average alone reaches 1 - alpha
        if let Some(w) = (1..=avg.cap()).find(|&w| avg.count(w) >= 1.0 - alpha) {
            assert!(d <= w);
        }
    }
    let mut last = 0;
    for cap in [2, 4, 8, 16, 32, 60] {
        let a = ensemble_avg_single_edge(&component_spectrum(&spec, 20, cap).unwrap(), 3);
        let d = dmin_bound(&a, 0.5).unwrap();
        assert!(d.d_hat >= last, "cap={cap}");
        assert_eq!(d.truncated, d.d_hat == cap + 1);
        last = d.d_hat;
    }
}

#[test]
fn doubling_cap_reaches_an_untruncated_bound() {
    let spec = EnsembleSpec::conv(4, 6, GeneratorSpec::EIGHT_STATE);
    let p = dmin_point(&spec, 0.5, 40, CapPolicy::Doubling(4)).unwrap();
    assert!(!p.truncated && p.cap >= p.d_hat);
    let fixed = dmin_point(&spec, 0.5, 40, CapPolicy::Fixed(p.cap)).unwrap();
    assert_eq!(fixed.d_hat, p.d_hat);
    let coupled = spec.coupled(1, 10);
    assert_eq!(dmin_point(&coupled, 0.5, 4, CapPolicy::default()), Err(WeightError::Coupled));
    let curve = dmin_curve(&spec, 0.5, &[5, 10, 20], CapPolicy::default(), ccgldpc::Execution::Sequential).unwrap();
    assert!(curve.windows(2).all(|w| w[0].n < w[1].n));
    assert_eq!(spec.coupling, Coupling::Uncoupled);
}

/// Periodic puncturing keeps one parity per `d_c - 1 = 7` sections, which is
/// also the period of the primitive feedback `1 + D + D^3`. Inputs `1 + D^7`
/// starting at a phase where the impulse response vanishes on every kept
/// section give systematic-only weight-2 codewords.
#[test]
fn period_seven_puncturing_admits_weight_two_words() {
    let t = Trellis::build(&GeneratorSpec::EIGHT_STATE);
    let pattern = PuncturePattern::for_check_degree(8);
    let a = component_spectrum_conv_exact(&t, 4, &pattern, 2).unwrap();
    assert!(a.counts[2] > <BigUint as Zero>::zero());
    let brute = exhaustive_spectrum(&t, 2, &pattern);
    let dp = component_spectrum_conv_exact(&t, 2, &pattern, 2).unwrap();
    assert_eq!(dp.counts[2].to_u64().unwrap(), brute[2]);
    assert!(brute[2] > 0);
}

/// Counts structured braided codewords `(u, v1, v2)` by `(wt(u), wt(v1) + wt(v2))`
/// for one draw of the three interleavers.
fn braided_counts(t: &Trellis, n: usize, perms: &[Vec<usize>; 3], counts: &mut [Vec<f64>]) {
    let bits = |x: u32| -> Vec<u8> { (0..n).map(|i| ((x >> i) & 1) as u8).collect() };
    let permute = |v: &[u8], p: &[usize]| -> Vec<u8> { p.iter().map(|&j| v[j]).collect() };
    // two-input encoder: stream a on even sections, b on odd ones, parity kept on even sections
    let encode = |a: &[u8], b: &[u8]| -> Option<Vec<u8>> {
        let mut s = 0;
        let mut parity = Vec::with_capacity(n);
        for k in 0..n {
            let br = t.step(s, a[k]);
            parity.push(br.parity);
            s = t.step(br.to, b[k]).to;
        }
        (s == 0).then_some(parity)
    };
    for u in 0u32..(1 << n) {
        let u_bits = bits(u);
        let u_perm = permute(&u_bits, &perms[0]);
        for v2 in 0u32..(1 << n) {
            let v2_bits = bits(v2);
            let Some(v1) = encode(&u_bits, &permute(&v2_bits, &perms[1])) else { continue };
            if encode(&u_perm, &permute(&v1, &perms[2])).as_deref() == Some(&v2_bits[..]) {
                let p = v1.iter().filter(|&&b| b == 1).count() + v2.count_ones() as usize;
                counts[u.count_ones() as usize][p] += 1.0;
            }
        }
    }
}

#[test]
fn braided_average_matches_random_interleavers() {
    let n = 6;
    let t = Trellis::build(&GeneratorSpec::ACCUMULATOR);
    let a = bcc_component_spectrum(&t, n, n, n).unwrap();
    let avg = ensemble_avg_bcc(&a, &a).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples = 4000;
    let mut sum = vec![vec![0.0; 2 * n + 1]; n + 1];
    let mut sum_sq = sum.clone();
    for _ in 0..samples {
        let mut perms: [Vec<usize>; 3] = std::array::from_fn(|_| (0..n).collect());
        perms.iter_mut().for_each(|p| p.shuffle(&mut rng));
        let mut counts = vec![vec![0.0; 2 * n + 1]; n + 1];
        braided_counts(&t, n, &perms, &mut counts);
        for i in 0..=n {
            for p in 0..=2 * n {
                sum[i][p] += counts[i][p];
                sum_sq[i][p] += counts[i][p] * counts[i][p];
            }
        }
    }
    let mut checked = 0;
    for i in 0..=n {
        for p in 0..=n {
            let expected = avg.log_counts[i][p].exp();
            let mean = sum[i][p] / samples as f64;
            let var = (sum_sq[i][p] / samples as f64 - mean * mean).max(0.0);
            let se = (var / samples as f64).sqrt();
            if expected < 0.05 && mean == 0.0 {
                continue;
            }
            checked += 1;
            assert!(
                (mean - expected).abs() <= 4.0 * se + 1e-9,
                "(i,p)=({i},{p}): sampled {mean} +- {se}, predicted {expected}"
            );
        }
    }
    assert!(checked >= 10, "only {checked} cells compared");
}

/// At `n = 72` the `(3,6)` LDPC average already holds `180^3 / C(72,2)^2`
/// weight-2 words, enough to pin the `alpha = 1/2` bound at 2.
#[test]
fn short_ldpc_bound_is_pinned_by_weight_two_words() {
    let spec = EnsembleSpec::ldpc(3, 6);
    let exact = component_spectrum_ldpc_exact(12, 6, 2).unwrap();
    assert_eq!(exact.counts[2].to_u64().unwrap(), 180);
    let expected = 180f64.powi(3) / binomial(72, 2).to_f64().unwrap().powi(2);
    let avg = ensemble_avg_single_edge(&component_spectrum(&spec, 12, 2).unwrap(), 3);
    assert!((avg.count(2) - expected).abs() <= 1e-12 * expected && expected > 0.5);
    assert_eq!(dmin_bound(&avg, 0.5).unwrap().d_hat, 2);
}
