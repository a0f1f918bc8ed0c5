use std::sync::Arc;
use std::time::Duration;

use myotrack::analyze::{
    cycle_mean_curves, cycle_stats, e_body, e_joint, gait_segment, moving_average, pca, pca_ensemble, pearson,
    resample_cycle, sps_benchmark, standing_reference, Channel, RolloutLog, CYCLE_POINTS,
};
use myotrack::env::{EnvConfig, RewardConfig};
use myotrack::learn::{evaluate, Controller};
use myotrack::skeleton::ModelSpec;
use myotrack::{asset_path, Error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn model(name: &str) -> ModelSpec {
    ModelSpec::load(asset_path(&format!("models/{name}.toml"))).unwrap()
}

// ---------- tracking errors ----------

#[test]
fn e_joint_reference_values() {
    let r = vec![vec![0.1, -0.4, 0.9, 1.3]; 7];
    assert_eq!(e_joint(&r, &r).unwrap(), 0.0);
    let all: Vec<Vec<f64>> = r.iter().map(|row| row.iter().map(|v| v + 0.1).collect()).collect();
    assert!((e_joint(&all, &r).unwrap() - 5.729_577_951).abs() < 1e-6);
    let one: Vec<Vec<f64>> = r.iter().map(|row| vec![row[0], row[1] - 0.1, row[2], row[3]]).collect();
    assert!((e_joint(&one, &r).unwrap() - 1.432_394_488).abs() < 1e-6);
}

#[test]
fn e_body_reference_values() {
    let r1 = vec![vec![[0.2, 1.0]]; 5];
    let s1 = vec![vec![[0.23, 1.04]]; 5];
    assert!((e_body(&s1, &r1).unwrap() - 0.05).abs() < 1e-12);
    let r2 = vec![vec![[0.2, 1.0], [-0.1, 0.5]]; 5];
    let s2 = vec![vec![[0.23, 1.04], [-0.1, 0.5]]; 5];
    assert!((e_body(&s2, &r2).unwrap() - 0.025).abs() < 1e-12);
    assert_eq!(e_body(&r2, &r2).unwrap(), 0.0);
}

#[test]
fn tracking_errors_reject_mismatched_shapes() {
    assert!(matches!(e_joint(&[vec![0.0; 2]], &[vec![0.0; 2], vec![0.0; 2]]), Err(Error::Contract(_))));
    assert!(matches!(e_joint(&[vec![0.0; 2]], &[vec![0.0; 3]]), Err(Error::Contract(_))));
    assert!(matches!(e_body(&[vec![[0.0; 2]]], &[vec![[0.0; 2]; 2]]), Err(Error::Contract(_))));
}

proptest! {
    #[test]
    fn tracking_errors_nonnegative_and_permutation_invariant(
        a in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 1..20),
        shift in 0usize..4,
    ) {
        let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| (v * 1.7).sin()).collect()).collect();
        let rot = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            m.iter().map(|r| { let mut r = r.clone(); r.rotate_left(shift); r }).collect()
        };
        let e = e_joint(&a, &b).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert!((e - e_joint(&rot(&a), &rot(&b)).unwrap()).abs() < 1e-9);
        prop_assert_eq!(e_joint(&a, &a).unwrap(), 0.0);

        let pa: Vec<Vec<[f64; 2]>> = a.iter().map(|r| vec![[r[0], r[1]], [r[2], r[3]]]).collect();
        let pb: Vec<Vec<[f64; 2]>> = b.iter().map(|r| vec![[r[0], r[1]], [r[2], r[3]]]).collect();
        let swap = |m: &[Vec<[f64; 2]>]| -> Vec<Vec<[f64; 2]>> { m.iter().map(|r| vec![r[1], r[0]]).collect() };
        let eb = e_body(&pa, &pb).unwrap();
        prop_assert!(eb >= 0.0);
        prop_assert!((eb - e_body(&swap(&pa), &swap(&pb)).unwrap()).abs() < 1e-12);
    }
}

// ---------- correlation ----------

#[test]
fn pearson_reference_values() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.5];
    assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
    assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    // 3 / sqrt(2 · 14/3)
    assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - 0.981_980_506).abs() < 1e-8);
}

#[test]
fn pearson_errors() {
    assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
    assert!(matches!(pearson(&[1.0], &[1.0]), Err(Error::Contract(_))));
    assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]), Err(Error::Contract(_))));
}

proptest! {
    #[test]
    fn pearson_is_bounded(x in prop::collection::vec(-10.0f64..10.0, 3..40), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = x.iter().map(|v| v * rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0)).collect();
        if let Ok(r) = pearson(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}

// ---------- smoothing and gait cycles ----------

#[test]
fn moving_average_shrinks_at_edges() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(moving_average(&x, 3), vec![1.5, 2.0, 3.0, 4.0, 4.5]);
    assert_eq!(moving_average(&x, 1), x.to_vec());
    assert_eq!(moving_average(&[2.0; 9], 5), vec![2.0; 9]);
}

fn square_wave(n: usize, period: usize, stance: usize, high: f64) -> Vec<f64> {
    (0..n).map(|t| if t % period < stance { high } else { 0.0 }).collect()
}

#[test]
fn gait_square_wave_gives_period_cycles() {
    let bw = 700.0;
    let g = square_wave(500, 60, 36, 1.2 * bw);
    let cycles = gait_segment(&g, bw, 0.05).unwrap();
    assert_eq!(cycles.len(), 7);
    for c in &cycles {
        assert_eq!(c.len(), 60);
        assert_eq!(c.start % 60, 0);
    }
}

#[test]
fn gait_without_contact_has_no_cycles() {
    assert!(matches!(gait_segment(&[0.0; 300], 700.0, 0.05), Err(Error::NoCycles(_))));
}

#[test]
fn gait_threshold_robustness() {
    let bw = 700.0;
    // Stance with short loading and unloading ramps.
    let g: Vec<f64> = (0..600)
        .map(|t| {
            let p = (t % 75) as f64;
            if p < 3.0 {
                p / 3.0 * 1.1 * bw
            } else if p < 40.0 {
                1.1 * bw
            } else if p < 43.0 {
                (43.0 - p) / 3.0 * 1.1 * bw
            } else {
                0.0
            }
        })
        .collect();
    let a = gait_segment(&g, bw, 0.0).unwrap();
    let b = gait_segment(&g, bw, 0.05).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.start.abs_diff(y.start) <= 1 && x.end.abs_diff(y.end) <= 1);
    }
}

#[test]
fn gait_boundaries_invariant_to_scaling() {
    let bw = 650.0;
    let g: Vec<f64> = (0..400).map(|t| (bw * (1.0 + (t as f64 * 0.11).sin())).max(0.0) * 0.9).collect();
    let base = gait_segment(&g, bw, 0.05).unwrap();
    for s in [0.5, 3.0] {
        let scaled: Vec<f64> = g.iter().map(|v| v * s).collect();
        assert_eq!(gait_segment(&scaled, bw * s, 0.05).unwrap(), base);
    }
    let sq = square_wave(400, 50, 30, 1.1 * bw);
    let sq_base = gait_segment(&sq, bw, 0.05).unwrap();
    let sq2: Vec<f64> = sq.iter().map(|v| v * 2.5).collect();
    assert_eq!(gait_segment(&sq2, bw, 0.05).unwrap(), sq_base);
}

#[test]
fn resample_cycle_hits_endpoints() {
    let x: Vec<f64> = (0..30).map(|t| t as f64 * 0.5).collect();
    let r = resample_cycle(&x, &(4..24)).unwrap();
    assert_eq!(r.len(), CYCLE_POINTS);
    assert!((r[0] - 2.0).abs() < 1e-12 && (r[100] - 12.0).abs() < 1e-12 && (r[50] - 7.0).abs() < 1e-12);
    assert!(resample_cycle(&x, &(10..30)).is_err());
}

#[test]
fn cycle_stats_cases() {
    let f: Vec<f64> = (0..CYCLE_POINTS).map(|k| (k as f64 * 0.07).sin()).collect();
    let (mean, std) = cycle_stats(&[f.clone()]).unwrap();
    assert_eq!(mean, f);
    assert!(std.iter().all(|s| *s == 0.0));

    let m = 0.3;
    let mirror: Vec<f64> = f.iter().map(|v| 2.0 * m - v).collect();
    let (mean, _) = cycle_stats(&[f.clone(), mirror]).unwrap();
    assert!(mean.iter().all(|v| (v - m).abs() < 1e-12));

    let sigma = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noisy: Vec<Vec<f64>> = (0..2000)
        .map(|_| f.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let (mean, std) = cycle_stats(&noisy).unwrap();
    let avg_std = std.iter().sum::<f64>() / std.len() as f64;
    // Standard error of a sample standard deviation is about sigma / sqrt(2n).
    assert!((avg_std - sigma).abs() < 0.02 * sigma, "{avg_std}");
    assert!(mean.iter().zip(&f).all(|(a, b)| (a - b).abs() < 5.0 * sigma / 2000f64.sqrt()));

    assert!(matches!(cycle_stats(&[]), Err(Error::NoCycles(_))));
}

#[test]
fn cycle_mean_curves_average_columns() {
    let series: Vec<Vec<f64>> = (0..200).map(|t| vec![(t % 50) as f64, 1.0]).collect();
    let cycles = vec![0..49, 50..99, 100..149];
    let curves = cycle_mean_curves(&series, &cycles).unwrap();
    assert_eq!(curves.len(), 2);
    assert!(curves[0].1.iter().all(|s| s.abs() < 1e-12));
    assert!((curves[0].0[100] - 49.0).abs() < 1e-12);
    assert!(curves[1].0.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

// ---------- PCA ----------

fn orthonormal(d: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(v.iter().map(|x| x / n).collect());
    }
    basis
}

#[test]
fn pca_rank_one() {
    let u = &orthonormal(12, 1, 1)[0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|_| {
            let c: f64 = rng.sample(StandardNormal);
            u.iter().map(|x| 3.0 + c * x).collect()
        })
        .collect();
    let r = pca(&rows).unwrap();
    assert!(r.ratios[0] > 0.999);
    assert!(!r.degenerate);
}

#[test]
fn pca_rank_three_spectrum() {
    // Zero-mean, mutually orthogonal coefficient sequences (Hadamard columns) give an
    // exact 4:2:1 sample covariance spectrum.
    let h = [
        [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
    ];
    let scale = [2.0, 2f64.sqrt(), 1.0];
    let basis = orthonormal(20, 3, 7);
    let rows: Vec<Vec<f64>> = (0..8)
        .map(|i| (0..20).map(|j| 0.5 + (0..3).map(|k| scale[k] * h[k][i] * basis[k][j]).sum::<f64>()).collect())
        .collect();
    let r = pca(&rows).unwrap();
    for (got, want) in r.ratios.iter().zip([4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]) {
        assert!((got - want).abs() < 0.02 * want, "{got} vs {want}");
    }
    assert!((r.cumulative[2] - 1.0).abs() < 1e-9);
}

#[test]
fn pca_identical_rows_are_degenerate() {
    let r = pca(&vec![vec![1.0, 2.0, 3.0]; 5]).unwrap();
    assert!(r.degenerate);
    assert!(r.ratios.iter().all(|v| *v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_ratios_well_formed(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 2..10)) {
        let r = pca(&rows).unwrap();
        prop_assert!(r.ratios.iter().all(|v| *v >= 0.0));
        prop_assert!(r.ratios.iter().sum::<f64>() <= 1.0 + 1e-9);
        prop_assert!(r.ratios.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(r.cumulative.windows(2).all(|w| w[1] >= w[0]));
        if !r.degenerate {
            prop_assert!((r.cumulative.last().unwrap() - 1.0).abs() < 1e-9);
        }
    }
}

// ---------- logs ----------

fn teleport_log(frames: usize) -> RolloutLog {
    let spec = Arc::new(model("arm"));
    let reference = Arc::new(standing_reference(&spec, frames).unwrap());
    let (log, summary) = evaluate(
        spec,
        reference,
        &EnvConfig::default(),
        &RewardConfig::default(),
        Controller::Teleport,
        &|_: &[f64]| 0.0,
        3,
    )
    .unwrap();
    assert!(summary.e_joint_deg < 1e-9 && summary.e_body_m < 1e-9);
    log
}

#[test]
fn log_round_trip() {
    let log = teleport_log(20);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rollout.csv");
    log.save(&path).unwrap();
    let back = RolloutLog::load(&path).unwrap();
    assert_eq!(back.meta, log.meta);
    assert_eq!(back.len(), log.len());
    assert_eq!(back.q, log.q);
    assert_eq!(back.act, log.act);
    assert_eq!(back.delta, log.delta);
}

#[test]
fn pca_ensemble_checks_lengths() {
    let a = teleport_log(20);
    let b = teleport_log(25);
    assert!(matches!(pca_ensemble(&[a.clone(), b], Channel::Joint), Err(Error::Contract(_))));
    assert!(pca_ensemble(&[a.clone(), a], Channel::Joint).unwrap().degenerate);
}

// ---------- throughput ----------

#[test]
fn sps_single_env_is_live() {
    let rows = sps_benchmark(&model("arm"), &[1, 2], Duration::from_millis(200), 0).unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r.sps > 0.0 && r.sps.is_finite());
        assert!(r.steps > 0);
    }
    assert!(sps_benchmark(&model("arm"), &[], Duration::from_millis(10), 0).is_err());
}

#[test]
fn sps_is_stable_under_longer_windows() {
    let spec = model("arm");
    // Interleaved repeats so that load from concurrently running tests hits both windows alike.
    let mut short = Vec::new();
    let mut long = Vec::new();
    for _ in 0..3 {
        short.push(sps_benchmark(&spec, &[1], Duration::from_millis(500), 1).unwrap()[0].sps);
        long.push(sps_benchmark(&spec, &[1], Duration::from_millis(1000), 1).unwrap()[0].sps);
    }
    short.sort_by(f64::total_cmp);
    long.sort_by(f64::total_cmp);
    let (short, long) = (short[1], long[1]);
    assert!((long / short - 1.0).abs() < 0.15, "short {short} long {long}");
}
