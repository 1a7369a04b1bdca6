use mscan::calibrate::{simulate_null, QuantileTable};
use mscan::detect::detect;
use mscan::scan::{local_sums_fft, local_sums_sat, Scanner};
use mscan::{Backend, Field, Mode, NefModel, RegionKind, RegionSystem, ScalePolicy};
use proptest::prelude::*;

fn field_strategy(max_n: usize) -> impl Strategy<Value = Field> {
    (1usize..=2, 2usize..=max_n).prop_flat_map(|(d, n)| {
        prop::collection::vec(-5.0f64..5.0, n.pow(d as u32)).prop_map(move |v| Field::new(d, n, v).unwrap())
    })
}

fn system_for(f: &Field, kind: RegionKind, min_size: usize, v: f64) -> RegionSystem {
    RegionSystem::with_params(kind, f.dim(), f.side(), min_size.min(f.len()), v, ScalePolicy::All).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn statistic_decreases_in_v(f in field_strategy(9), v in 1.0f64..3.0, dv in 0.0f64..2.0) {
        let g = NefModel::Gaussian { sigma: 1.0 };
        let lo = scan_stat(&f, &g, &system_for(&f, RegionKind::Hypercubes, 1, v));
        let hi = scan_stat(&f, &g, &system_for(&f, RegionKind::Hypercubes, 1, v + dv));
        prop_assert!(hi <= lo);
    }

    #[test]
    fn statistic_decreases_in_min_size(f in field_strategy(9), r in 1usize..6) {
        let g = NefModel::Gaussian { sigma: 1.0 };
        let a = scan_stat(&f, &g, &system_for(&f, RegionKind::Hyperrectangles, r, 1.0));
        let b = scan_stat(&f, &g, &system_for(&f, RegionKind::Hyperrectangles, r + 1, 1.0));
        prop_assert!(b <= a);
    }

    #[test]
    fn rectangles_dominate_cubes(f in field_strategy(9)) {
        let g = NefModel::Gaussian { sigma: 1.0 };
        let cubes = scan_stat(&f, &g, &system_for(&f, RegionKind::Hypercubes, 1, 1.0));
        let rects = scan_stat(&f, &g, &system_for(&f, RegionKind::Hyperrectangles, 1, 1.0));
        prop_assert!(rects >= cubes);
    }

    #[test]
    fn gaussian_statistic_is_reflection_invariant(f in field_strategy(9), theta0 in -2.0f64..2.0) {
        let g = NefModel::Gaussian { sigma: 1.0 };
        let sys = system_for(&f, RegionKind::Hyperrectangles, 2, 1.0);
        let a = scan_statistic_at(&f, &g, theta0, &sys);
        let b = scan_statistic_at(&f.reflect(theta0), &g, theta0, &sys);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn sat_and_fft_agree(f in field_strategy(12), seed in 0usize..1000) {
        let extent: Vec<usize> = (0..f.dim()).map(|k| 1 + (seed >> (3 * k)) % f.side()).collect();
        let a = local_sums_sat(&f, &extent).unwrap();
        let b = local_sums_fft(&f, &extent).unwrap();
        prop_assert_eq!(&a.shape, &b.shape);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0) * f.len() as f64);
        }
    }

    #[test]
    fn backends_give_the_same_argmax_statistic(f in field_strategy(8)) {
        let g = NefModel::Gaussian { sigma: 1.0 };
        let sys = system_for(&f, RegionKind::Hyperrectangles, 1, 1.0);
        let sat = Scanner::new(&f, &g, 0.0, &sys, Backend::Sat).unwrap().scan().unwrap();
        let fft = Scanner::new(&f, &g, 0.0, &sys, Backend::Fft).unwrap().scan().unwrap();
        prop_assert!((sat.statistic - fft.statistic).abs() <= 1e-9 * sat.statistic.abs().max(1.0));
    }

    #[test]
    fn quantile_is_monotone_in_alpha(sample in prop::collection::vec(-10.0f64..10.0, 1..200), a in 0.001f64..0.999, b in 0.001f64..0.999) {
        let sys = RegionSystem::new(RegionKind::Hypercubes, 1, 8).unwrap();
        let t = QuantileTable::new(mscan::TableMeta::for_system(&sys, sample.len(), 0), sample).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(t.quantile(lo).unwrap() >= t.quantile(hi).unwrap());
    }
}

fn scan_stat(f: &Field, model: &NefModel, sys: &RegionSystem) -> f64 {
    scan_statistic_at(f, model, 0.0, sys)
}

fn scan_statistic_at(f: &Field, model: &NefModel, theta0: f64, sys: &RegionSystem) -> f64 {
    mscan::scan_statistic(f, model, theta0, sys).unwrap().statistic
}

#[test]
fn detection_on_planted_square() {
    let n = 32;
    let sys = RegionSystem::with_params(RegionKind::Hypercubes, 2, n, 4, 1.0, ScalePolicy::All).unwrap();
    let table = simulate_null(&sys, 400, 11).unwrap();
    let mut values = vec![0.0; n * n];
    for i in 10..16 {
        for j in 20..26 {
            values[i * n + j] = 3.0;
        }
    }
    let f = Field::new(2, n, values).unwrap();
    let g = NefModel::Gaussian { sigma: 1.0 };
    let all = detect(&f, &g, 0.0, &sys, &table, 0.1, Mode::All).unwrap();
    let maxima = detect(&f, &g, 0.0, &sys, &table, 0.1, Mode::LocalMaxima).unwrap();
    assert!(!all.is_empty());
    assert!(!maxima.is_empty() && maxima.regions.len() <= all.regions.len());
    let best = maxima.regions.iter().max_by(|a, b| a.penalized.total_cmp(&b.penalized)).unwrap();
    assert_eq!((best.anchor.clone(), best.extent.clone()), (vec![11, 21], vec![6, 6]));
    let none = detect(&Field::zeros(2, n), &g, 0.0, &sys, &table, 0.1, Mode::All).unwrap();
    assert!(none.is_empty());
}

#[test]
fn tables_survive_disk_round_trip() {
    let sys = RegionSystem::with_params(RegionKind::Hyperrectangles, 1, 64, 2, 1.5, ScalePolicy::All).unwrap();
    let table = simulate_null(&sys, 150, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.qt");
    mscan::calibrate::save_table(&table, &path).unwrap();
    let back = mscan::calibrate::load_table(&path).unwrap();
    assert_eq!(back.sample(), table.sample());
    assert_eq!(back.meta, table.meta);
    assert!(back.meta.mismatches(&sys).is_empty());
}

#[test]
fn count_families_scan_their_own_support() {
    let mut rng = mscan::rng::substream(7, 0, 0);
    for (model, theta0) in [(NefModel::Bernoulli, 0.0), (NefModel::Poisson, 0.5)] {
        let f = Field::sample(&model, theta0, 2, 16, &mut rng).unwrap();
        let sys = RegionSystem::with_params(RegionKind::Hyperrectangles, 2, 16, 4, 1.0, ScalePolicy::All).unwrap();
        let r = mscan::scan_statistic(&f, &model, theta0, &sys).unwrap();
        assert!(r.statistic.is_finite());
        assert!(r.argmax.size() >= 4);
    }
}
