use proptest::prelude::*;
use rbig::detectors::{KernelConfig, KernelKind, KernelModel, RxModel};
use rbig::evaluation::auc;
use rbig::{toy, DataMatrix, Detector, DetectorKind, FitOptions, RngState};

fn kernel(x: &DataMatrix, kind: KernelKind, reg: Option<f64>) -> KernelModel {
    let cfg = KernelConfig {
        reg_lambda: reg,
        ..KernelConfig::default()
    };
    KernelModel::fit(x, kind, &cfg).unwrap()
}

#[test]
fn kde_matches_direct_sum_on_three_points() {
    let support = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.5], [-0.5, 2.0]]).unwrap();
    let model = kernel(&support, KernelKind::Kde, None);
    let s = model.sigma();
    let query = DataMatrix::from_rows(&[[0.2, 0.1], [3.0, -1.0], [-0.5, 2.0]]).unwrap();
    let got = model.score_kde(&query).unwrap();
    for (q, g) in query.iter_rows().zip(&got) {
        let p: f64 = support
            .iter_rows()
            .map(|x| {
                let d2 = (q[0] - x[0]).powi(2) + (q[1] - x[1]).powi(2);
                (-d2 / (2.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s)
            })
            .sum::<f64>()
            / 3.0;
        assert!((g - (-p.ln())).abs() < 1e-10, "{g} vs {}", -p.ln());
    }
}

#[test]
fn kde_sigma_is_median_distance_over_root_d() {
    let support = DataMatrix::from_rows(&[[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]).unwrap();
    let model = kernel(&support, KernelKind::Kde, None);
    // distances 3, 4, 5
    assert!((model.sigma() - 4.0 / 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn kde_density_integrates_to_one() {
    let x = toy::mixture(300, 0.0, &mut RngState::new(1)).unwrap().x;
    let model = kernel(&x, KernelKind::Kde, None);
    let g = 300;
    let (lo, hi) = ([-14.0, -12.0], [14.0, 15.0]);
    let h = [(hi[0] - lo[0]) / g as f64, (hi[1] - lo[1]) / g as f64];
    let mut pts = Vec::new();
    for i in 0..g {
        for j in 0..g {
            pts.push([
                lo[0] + (i as f64 + 0.5) * h[0],
                lo[1] + (j as f64 + 0.5) * h[1],
            ]);
        }
    }
    let scores = model
        .score_kde(&DataMatrix::from_rows(&pts).unwrap())
        .unwrap();
    let mass: f64 = scores.iter().map(|s| (-s).exp()).sum::<f64>() * h[0] * h[1];
    assert!((mass - 1.0).abs() < 0.05, "mass {mass}");
}

#[test]
fn rx_matches_explicit_two_by_two_inverse() {
    let rows = [[1.0, 2.0], [2.0, 1.0], [3.0, 4.0], [0.0, 0.5], [2.5, 2.0]];
    let x = DataMatrix::from_rows(&rows).unwrap();
    let model = RxModel::fit_with_lambda(&x, 0.0).unwrap();
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r[0]).sum::<f64>() / n;
    let my = rows.iter().map(|r| r[1]).sum::<f64>() / n;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for r in &rows {
        a += (r[0] - mx) * (r[0] - mx);
        b += (r[0] - mx) * (r[1] - my);
        c += (r[1] - my) * (r[1] - my);
    }
    let (a, b, c) = (a / (n - 1.0), b / (n - 1.0), c / (n - 1.0));
    let det = a * c - b * b;
    for q in [[0.0, 0.0], [5.0, -1.0], [mx, my]] {
        let (u, v) = (q[0] - mx, q[1] - my);
        let oracle = (c * u * u - 2.0 * b * u * v + a * v * v) / det;
        let got = model.score_row(&q);
        assert!(
            (got - oracle).abs() < 1e-8 * oracle.max(1.0),
            "{got} vs {oracle}"
        );
    }
}

#[test]
fn krx_matches_hand_solved_two_point_system() {
    let support = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
    let r = 0.01;
    let model = kernel(&support, KernelKind::Krx, Some(r));
    // one pairwise distance, so σ = |a − b| and k = exp(−1/2)
    assert!((model.sigma() - 2f64.sqrt()).abs() < 1e-15);
    let k = (-0.5f64).exp();
    let expected = (1.0 - k).powi(2) / 2.0 / ((1.0 - k) + r);
    let got = model.score_krx(&support).unwrap();
    for g in got {
        assert!((g - expected).abs() < 1e-12, "{g} vs {expected}");
    }
    // the midpoint's centred kernel vector lies in the null space of K_c,
    // so only the ridge acts on it
    let mid = DataMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
    let c = (-0.125f64).exp() - (1.0 + k) / 2.0;
    let got = model.score_krx(&mid).unwrap()[0];
    assert!((got - 2.0 * c * c / r).abs() < 1e-12, "{got}");
}

#[test]
fn detector_ordering_on_gaussian_toy() {
    // RX is the right model here; everything should find the off-axis cluster
    let t = toy::gaussian(3000, 0.01, &mut RngState::new(2)).unwrap();
    for kind in DetectorKind::ALL {
        let det = Detector::fit(&t.x, &FitOptions::new(kind)).unwrap();
        let s = det.score(&t.x).unwrap();
        let a = auc(&s.scores, &t.labels).unwrap();
        assert!(a > 0.95, "{} auc {a}", kind.name());
    }
}

#[test]
fn krx_and_rbig_beat_rx_on_mixture() {
    // the anomalies sit at the background mean, where RX is blind
    let t = toy::mixture(3000, 0.01, &mut RngState::new(3)).unwrap();
    let score = |kind| {
        let det = Detector::fit(&t.x, &FitOptions::new(kind)).unwrap();
        auc(&det.score(&t.x).unwrap().scores, &t.labels).unwrap()
    };
    let rx = score(DetectorKind::Rx);
    assert!(rx < 0.1, "rx {rx}");
    assert!(score(DetectorKind::Krx) > 0.9);
    assert!(score(DetectorKind::Rbig) > 0.85);
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    rbig::numerics::stats::correlation(&ranks(a), &ranks(b))
}

#[test]
fn hybrid_ranks_gaussian_data_like_rx_and_rbig() {
    let t = toy::gaussian(4000, 0.0, &mut RngState::new(4)).unwrap();
    let hy = Detector::fit(&t.x, &FitOptions::new(DetectorKind::Hybrid))
        .unwrap()
        .score(&t.x)
        .unwrap()
        .scores;
    for kind in [DetectorKind::Rx, DetectorKind::Rbig] {
        let other = Detector::fit(&t.x, &FitOptions::new(kind))
            .unwrap()
            .score(&t.x)
            .unwrap()
            .scores;
        let rho = spearman(&other, &hy);
        assert!(rho > 0.8, "{}: spearman {rho}", kind.name());
    }
}

#[test]
fn every_detector_survives_save_and_load() {
    let t = toy::ring(600, 0.02, &mut RngState::new(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for kind in DetectorKind::ALL {
        let det = Detector::fit(&t.x, &FitOptions::new(kind)).unwrap();
        let path = dir.path().join(format!("{}.bin", kind.name()));
        det.save(&path).unwrap();
        let back = Detector::load(&path).unwrap();
        assert_eq!(back, det);
        let a = det.score(&t.x).unwrap().scores;
        let b = back.score(&t.x).unwrap().scores;
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

fn matrix_strategy() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec([-5.0..5.0f64, -5.0..5.0f64], 8..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rx_is_affine_invariant(
        rows in matrix_strategy(),
        shift in [-10.0..10.0f64, -10.0..10.0f64],
        m in [0.5..2.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.5..2.0f64],
    ) {
        let det = m[0] * m[3] - m[1] * m[2];
        prop_assume!(det.abs() > 0.2);
        let x = DataMatrix::from_rows(&rows).unwrap();
        let model = RxModel::fit_with_lambda(&x, 0.0);
        prop_assume!(model.is_ok());
        let model = model.unwrap();
        let moved: Vec<[f64; 2]> = rows
            .iter()
            .map(|r| [m[0] * r[0] + m[1] * r[1] + shift[0], m[2] * r[0] + m[3] * r[1] + shift[1]])
            .collect();
        let y = DataMatrix::from_rows(&moved).unwrap();
        let moved_model = RxModel::fit_with_lambda(&y, 0.0).unwrap();
        prop_assume!(moved_model.reg_lambda() == 0.0 && model.reg_lambda() == 0.0);
        let a = model.score(&x).unwrap();
        let b = moved_model.score(&y).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-6 * p.max(1.0), "{} vs {}", p, q);
        }
    }

    #[test]
    fn krx_ignores_support_order(rows in matrix_strategy(), seed in 0u64..1000) {
        let x = DataMatrix::from_rows(&rows).unwrap();
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        RngState::new(seed).shuffle(&mut perm);
        let y = x.select_rows(&perm);
        let a = KernelModel::fit(&x, KernelKind::Krx, &KernelConfig::default());
        prop_assume!(a.is_ok());
        let b = KernelModel::fit(&y, KernelKind::Krx, &KernelConfig::default()).unwrap();
        let sa = a.unwrap().score_krx(&x).unwrap();
        let sb = b.score_krx(&x).unwrap();
        for (p, q) in sa.iter().zip(&sb) {
            prop_assert!((p - q).abs() < 1e-6 * p.max(1.0), "{} vs {}", p, q);
        }
    }

    #[test]
    fn scores_are_finite_and_non_negative_where_defined(rows in matrix_strategy()) {
        let x = DataMatrix::from_rows(&rows).unwrap();
        if let Ok(rx) = RxModel::fit(&x) {
            prop_assert!(rx.score(&x).unwrap().iter().all(|s| s.is_finite() && *s >= 0.0));
        }
        if let Ok(k) = KernelModel::fit(&x, KernelKind::Krx, &KernelConfig::default()) {
            prop_assert!(k.score_krx(&x).unwrap().iter().all(|s| s.is_finite() && *s >= 0.0));
        }
        if let Ok(k) = KernelModel::fit(&x, KernelKind::Kde, &KernelConfig::default()) {
            prop_assert!(k.score_kde(&x).unwrap().iter().all(|s| s.is_finite()));
        }
    }
}
