use gauss_ergodic::gamma::{apply_gamma, induced_rotation, random_family, PathBundle};
use gauss_ergodic::gaussian::{divergence, sample_wiener, Path};
use gauss_ergodic::hilbert::{inner_h, kernel_compose, Grid, HVector};
use gauss_ergodic::rng::{Domain, StreamFactory};
use gauss_ergodic::rotation::{apply_rotation, autocorrelation, spectral_measure, RotationOp};
use gauss_ergodic::shift::{apply_shift, check_unitary_shift, invert_shift, random_unitary_kernel};
use proptest::prelude::*;

fn path(g: Grid, seed: u64) -> Path {
    sample_wiener(g, &mut StreamFactory::new(seed).stream(Domain::Paths, 0), 0)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shift_then_inverse_is_identity(seed in any::<u64>(), m in 2usize..24, scale in 0.1f64..3.0) {
        let g = Grid::new(m).unwrap();
        let f = StreamFactory::new(seed);
        let k = random_unitary_kernel(g, scale, &mut f.stream(Domain::Kernels, 0));
        let inv = invert_shift(&k).unwrap();
        let p = path(g, seed);
        let back = apply_shift(&inv, &apply_shift(&k, &p).unwrap()).unwrap();
        prop_assert!(max_diff(back.increments(), p.increments()) < 1e-10);
    }

    #[test]
    fn composition_matches_sequential_shifts(seed in any::<u64>(), m in 2usize..20) {
        let g = Grid::new(m).unwrap();
        let f = StreamFactory::new(seed);
        let k = random_unitary_kernel(g, 1.0, &mut f.stream(Domain::Kernels, 0));
        let q = random_unitary_kernel(g, 1.0, &mut f.stream(Domain::Kernels, 1));
        let p = path(g, seed);
        let seq = apply_shift(&q, &apply_shift(&k, &p).unwrap()).unwrap();
        let once = apply_shift(&kernel_compose(&k, &q).unwrap(), &p).unwrap();
        prop_assert!(max_diff(seq.increments(), once.increments()) < 1e-10);
        prop_assert!(check_unitary_shift(&kernel_compose(&k, &q).unwrap(), 1e-9).unwrap().is_unitary);
    }

    #[test]
    fn unitary_shift_preserves_path_norm(seed in any::<u64>(), m in 2usize..24) {
        let g = Grid::new(m).unwrap();
        let k = random_unitary_kernel(g, 2.0, &mut StreamFactory::new(seed).stream(Domain::Kernels, 0));
        let p = path(g, seed);
        let q = apply_shift(&k, &p).unwrap();
        let n = |x: &Path| x.increments().iter().map(|d| d * d).sum::<f64>();
        prop_assert!((n(&p) - n(&q)).abs() < 1e-10 * (1.0 + n(&p)));
    }

    #[test]
    fn rotation_moves_divergence(angle in -3.0f64..3.0, seed in any::<u64>(), h in prop::collection::vec(-2.0f64..2.0, 6)) {
        let g = Grid::new(6).unwrap();
        let r = RotationOp::planar(6, 1, 4, angle).unwrap();
        let h = HVector::from_density(g, h).unwrap();
        let p = path(g, seed);
        let lhs = divergence(&h, &apply_rotation(&r, &p).unwrap()).unwrap();
        let rhs = divergence(&r.apply_h(&h).unwrap(), &p).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn spectral_measure_reproduces_autocorrelation(angle in 0.1f64..3.0, h in prop::collection::vec(-2.0f64..2.0, 5)) {
        let g = Grid::new(5).unwrap();
        let r = RotationOp::planar(5, 0, 2, angle).unwrap();
        let h = HVector::from_density(g, h).unwrap();
        let mu = spectral_measure(&r, &h).unwrap();
        prop_assert!((mu.total() - inner_h(&h, &h).unwrap()).abs() < 1e-9);
        let a = autocorrelation(&r, &h, 8).unwrap();
        for (n, v) in a.iter().enumerate() {
            prop_assert!((mu.fourier(n) - v).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_matches_induced_rotation(seed in any::<u64>(), m in 2usize..12, n in 2usize..4) {
        let g = Grid::new(m).unwrap();
        let f = StreamFactory::new(seed);
        let gp = random_family(g, n, &mut f.stream(Domain::Gamma, 0)).unwrap();
        let w = PathBundle::sample(g, n, &mut f.stream(Domain::Paths, 0));
        let y = apply_gamma(&gp, &w).unwrap().coordinates();
        let r = induced_rotation(&gp).unwrap();
        let x = w.coordinates();
        let expected: Vec<f64> = (0..x.len())
            .map(|i| (0..x.len()).map(|j| r.matrix()[(j, i)] * x[j]).sum())
            .collect();
        prop_assert!(max_diff(&y, &expected) < 1e-12);
    }
}
