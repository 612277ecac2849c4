use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use obsplan::scenarios::{make_torus, mask_geometry, solve_ks_from, GriddedDataset, KsSpec, TorusSpec};
use obsplan::{
    assemble, dare_iterate, dare_trace_bounds, lift_system, motion_violations, plan, random_trajectory, run_filter,
    Geometry, Measurements, MotionConstraint, NoiseSpec, PairMarker, PlanConfig, RealBlockModel, ReducedModel, Trajectory,
};

fn model(seed: u64, n: usize, pairs: usize, reals: usize) -> RealBlockModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ReducedModel::random(n, pairs, reals, &mut rng).unwrap().to_real_blocks().unwrap()
}

fn gaussian(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lifted_output_matrix_is_the_observability_stack(seed in 0u64..10_000, l in 1usize..6, k in 1usize..3) {
        let m = model(seed, 20, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let steps: Vec<Vec<usize>> = (0..l)
            .map(|_| {
                let a = rng.random_range(0..10);
                if k == 1 { vec![a] } else { vec![a, 10 + rng.random_range(0..10)] }
            })
            .collect();
        let traj = Trajectory::new(steps).unwrap();
        let lifted = lift_system(&m, &traj).unwrap();
        let stacked = assemble(&m, &traj).unwrap();
        prop_assert_eq!(&lifted.c_hat, stacked.matrix());
        prop_assert!((&lifted.a_hat - m.dynamics_power(l)).amax() < 1e-14);
    }

    #[test]
    fn plans_obey_speed_and_close_their_cycle(
        seed in 0u64..10_000,
        speed in 0.0f64..4.0,
        k in 1usize..4,
        l in 1usize..9,
    ) {
        let m = model(seed, 64, 2, 2);
        let geom = Geometry::torus(8, 8).unwrap();
        let mc = MotionConstraint::new(speed).unwrap();
        let traj = plan(&m, &geom, &mc, &PlanConfig::new(k, l).unwrap()).unwrap();
        prop_assert_eq!(traj.period(), l);
        prop_assert!(motion_violations(&traj, &geom, &mc).is_empty());
        for t in 0..l {
            let mut row = traj.at(t).to_vec();
            row.sort_unstable();
            row.dedup();
            prop_assert_eq!(row.len(), k);
        }
    }

    #[test]
    fn random_baseline_is_feasible(seed in 0u64..10_000, speed in 1.0f64..3.0, l in 2usize..10) {
        let geom = Geometry::grid2d(6, 7, false, true).unwrap();
        let mc = MotionConstraint::new(speed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traj = random_trajectory(&geom, &mc, &PlanConfig::new(2, l).unwrap(), &mut rng).unwrap();
        prop_assert!(motion_violations(&traj, &geom, &mc).is_empty());
    }

    #[test]
    fn riccati_trace_lies_between_the_bounds(seed in 0u64..10_000, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = gaussian(m, m, &mut rng);
        let rho = a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max);
        a *= 0.9 / rho;
        let c = gaussian(m + 1, m, &mut rng);
        let q = DMatrix::identity(m, m) * rng.random_range(0.01..1.0);
        let r = DMatrix::identity(m + 1, m + 1) * rng.random_range(0.01..1.0);
        let b = dare_trace_bounds(&a, &c, &q, &r).unwrap();
        prop_assume!(b.lower_applicable && b.upper_applicable);
        let tr = dare_iterate(&a, &c, &q, &r, 1e-12, 1_000_000).unwrap().sigma.trace();
        prop_assert!(b.lower <= tr * (1.0 + 1e-8), "lower {} > {}", b.lower, tr);
        prop_assert!(tr <= b.upper * (1.0 + 1e-8), "{} > upper {}", tr, b.upper);
    }

    #[test]
    fn extra_sensor_never_raises_the_limiting_trace(seed in 0u64..10_000) {
        let m = model(seed, 30, 2, 1);
        let noise = NoiseSpec::new(1e-2, 1e-2).unwrap();
        let run = |sites: Vec<usize>| {
            let t = Trajectory::stationary(sites).unwrap();
            run_filter(&m, &t, Measurements::None, noise, 1500, None, 1.0).unwrap().limiting_trace(1)
        };
        let fewer = run(vec![3, 11]);
        let more = run(vec![3, 11, 17]);
        prop_assert!(more <= fewer * (1.0 + 1e-9));
    }

    #[test]
    fn resampling_is_the_matrix_power(seed in 0u64..10_000, stride in 1usize..6) {
        let m = model(seed, 12, 2, 2);
        let r = m.resampled(stride).unwrap();
        prop_assert!((r.dynamics() - m.dynamics_power(stride)).amax() < 1e-12);
        prop_assert_eq!(r.modes(), m.modes());
    }

    #[test]
    fn gridded_files_roundtrip(seed in 0u64..10_000, rows in 1usize..6, cols in 1usize..7, t in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask: Vec<bool> = (0..rows * cols).map(|_| rng.random_bool(0.7)).collect();
        mask[0] = true;
        let n = mask.iter().filter(|&&b| b).count();
        let values = DMatrix::from_fn(n, t, |_, _| rng.random_range(-100.0f32..100.0) as f64);
        let ds = GriddedDataset::new(rows, cols, mask, values, 0.5).unwrap();
        prop_assert_eq!(&GriddedDataset::from_binary(&ds.to_binary()).unwrap(), &ds);
        prop_assert_eq!(&GriddedDataset::from_csv(&ds.to_csv()).unwrap(), &ds);
    }

    #[test]
    fn mask_graph_never_links_land(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (5, 6);
        let mut mask: Vec<bool> = (0..rows * cols).map(|_| rng.random_bool(0.6)).collect();
        mask[0] = true;
        let n = mask.iter().filter(|&&b| b).count();
        let ds = GriddedDataset::new(rows, cols, mask.clone(), DMatrix::zeros(n, 2), 1.0).unwrap();
        let g = mask_geometry(&ds).unwrap();
        for i in 0..n {
            let (r, c) = ds.cell(i);
            prop_assert!(mask[r * cols + c]);
            for j in g.neighbors(i) {
                let (r2, c2) = ds.cell(j);
                prop_assert_eq!(r.abs_diff(r2) + c.abs_diff(c2), 1);
            }
        }
    }

    #[test]
    fn ks_conserves_the_mean(seed in 0u64..10_000, offset in -1.0f64..1.0) {
        let spec = KsSpec {
            n_grid: 64,
            domain_length: 22.0,
            dt_solver: 0.02,
            t_start: 0.0,
            t_final: 2.0,
            output_dt: 1.0,
            seed,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0: Vec<f64> = (0..64).map(|_| offset + rng.sample::<f64, _>(StandardNormal)).collect();
        let s = solve_ks_from(&spec, &u0).unwrap();
        let m0 = s.data().column(0).mean();
        for t in 1..s.len() {
            prop_assert!((s.data().column(t).mean() - m0).abs() < 1e-10);
        }
    }

    #[test]
    fn trajectory_json_roundtrip(locs in proptest::collection::vec(0usize..50, 1..12)) {
        let traj = Trajectory::new(locs.iter().map(|&i| vec![i]).collect()).unwrap();
        prop_assert_eq!(Trajectory::from_json(&traj.to_json().unwrap()).unwrap(), traj);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn torus_fields_are_real_with_unit_modes(seed in 0u64..1000) {
        let mut spec = TorusSpec::desk(seed);
        spec.rows = 16;
        spec.cols = 16;
        let sc = make_torus(&spec).unwrap();
        let modes = sc.model.modes();
        for j in 0..modes.ncols() {
            prop_assert!((modes.column(j).norm() - 1.0).abs() < 1e-10);
        }
        let [d0, d1] = spec.damp_range;
        let [f0, f1] = spec.freq_range;
        for l in sc.model.eigenvalues() {
            let (decay, freq) = (l.norm().ln() / spec.dt, l.arg().abs() / spec.dt);
            prop_assert!(decay >= d0 - 1e-12 && decay <= d1 + 1e-12);
            prop_assert!(freq >= f0 - 1e-12 && freq <= f1 + 1e-12);
        }
        // A conjugate-symmetric state gives a real field equal to the real-block
        // reconstruction.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pm = sc.model.pair_map().to_vec();
        let mut z = vec![Complex64::new(0.0, 0.0); pm.len()];
        for (i, p) in pm.iter().enumerate() {
            match p {
                PairMarker::Real => z[i] = Complex64::new(rng.sample(StandardNormal), 0.0),
                PairMarker::PairLead => z[i] = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)),
                PairMarker::PairFollow(_) => {}
            }
        }
        for (i, p) in pm.iter().enumerate() {
            if let PairMarker::PairFollow(lead) = p {
                z[i] = z[*lead].conj();
            }
        }
        let x = sc.model.field(&z);
        let real = sc.model.to_real_blocks().unwrap();
        let xr = real.field(&sc.model.real_coefficients(&z).unwrap());
        let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!(energy > 0.0);
        for (a, b) in x.iter().zip(xr.iter()) {
            prop_assert!(a.im.abs() < 1e-10 * energy.sqrt());
            prop_assert!((a.re - b).abs() < 1e-10 * energy.sqrt());
        }
        prop_assert_eq!(sc.gauss_centers.len(), spec.n_gauss);
    }
}
