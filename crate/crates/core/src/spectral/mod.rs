//! Periodic Fourier discretization, spectral calculus and dealiasing.

pub mod checkpoint;
mod field;
mod grid;

pub use field::{
    dealiased_product, differentiate, spectral_inner, spectral_l2_sq, spectral_semi_h1_sq,
    symmetrize, Field, Representation, ScalarKind,
};
pub use grid::{mode_index, storage_index, SpectralGrid};

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn grid(n: usize, l: f64) -> Arc<SpectralGrid> {
        Arc::new(SpectralGrid::new_1d(n, l).unwrap())
    }

    fn random_field(g: &Arc<SpectralGrid>, kmax: i64, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = vec![Complex64::new(0.0, 0.0); g.len()];
        for j in 1..=kmax {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            c[storage_index(j, g.n(0))] = z;
            c[storage_index(-j, g.n(0))] = z.conj();
        }
        Field::from_spectral(g, ScalarKind::Real, c).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = SpectralGrid::new(1, 64, 2.0 * PI).unwrap();
        assert_eq!(g.wavenumbers(0)[32], 32.0);
        assert_eq!(g.wavenumbers(0)[33], -31.0);
        let g = SpectralGrid::new(1, 64, 4.0 * PI).unwrap();
        assert!((g.wavenumbers(0)[1] - 0.5).abs() < 1e-15);
        let g = SpectralGrid::new(2, 128, 1.0).unwrap();
        assert!((g.wavenumbers(1)[1] - 2.0 * PI).abs() < 1e-12);
        assert_eq!(g.cutoff(0), 42);
        assert!(g.mask_axis(0)[42] && !g.mask_axis(0)[43]);
        assert!(g.mask_axis(1)[128 - 42] && !g.mask_axis(1)[128 - 43]);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(SpectralGrid::new(1, 8, 1.0).is_err());
        assert!(SpectralGrid::new(1, 48, 1.0).is_err());
        assert!(SpectralGrid::new(1, 64, 0.0).is_err());
        assert!(SpectralGrid::new(1, 64, -1.0).is_err());
        assert!(SpectralGrid::new(3, 64, 1.0).is_err());
    }

    #[test]
    fn wavenumbers_antisymmetric() {
        let g = SpectralGrid::new_1d(64, 3.0).unwrap();
        let k = g.wavenumbers(0);
        for j in 1..32 {
            assert_eq!(k[storage_index(-j, 64)], -k[storage_index(j, 64)]);
        }
    }

    #[test]
    fn ddx_of_sine() {
        let l = 3.0;
        let g = grid(64, l);
        let w = 2.0 * PI / l;
        let u = Field::from_fn(&g, |x| (w * x).sin());
        let du = u.ddx(1);
        assert_eq!(du.representation(), Representation::Physical);
        for (i, v) in du.real_samples().iter().enumerate() {
            assert!((v - w * (w * g.x(0, i)).cos()).abs() < 1e-12);
        }
        let c = Field::from_fn(&g, |_| 2.5).ddx(1);
        assert!(c.max_abs() < 1e-14);
    }

    #[test]
    fn dealias_product_of_sines() {
        let g = grid(16, 2.0 * PI);
        let u = Field::from_fn(&g, f64::sin);
        let p = u.dealias_product(&u).unwrap().to_physical();
        for (i, v) in p.real_samples().iter().enumerate() {
            let x = g.x(0, i);
            assert!((v - (0.5 - 0.5 * (2.0 * x).cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn dealias_product_masks_high_modes() {
        let g = grid(48usize.next_power_of_two(), 2.0 * PI);
        let n = g.n(0);
        let top = g.cutoff(0) as i64;
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        c[storage_index(top, n)] = Complex64::new(0.5, 0.0);
        c[storage_index(-top, n)] = Complex64::new(0.5, 0.0);
        let u = Field::from_spectral(&g, ScalarKind::Real, c).unwrap();
        let p = u.dealias_product(&u).unwrap();
        for (f, v) in p.data().iter().enumerate() {
            if !g.keeps(f) {
                assert_eq!(*v, Complex64::new(0.0, 0.0));
            }
        }
        assert!((p.data()[0].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn dealias_product_matches_direct_convolution() {
        let g = grid(64, 5.0);
        let n = 64;
        let a = random_field(&g, 16, 1);
        let b = random_field(&g, 16, 2);
        let p = a.dealias_product(&b).unwrap();
        let (ca, cb) = (a.coeffs(), b.coeffs());
        for f in 0..n {
            let j = mode_index(f, n);
            if j.abs() > g.cutoff(0) as i64 {
                continue;
            }
            let mut s = Complex64::new(0.0, 0.0);
            for p1 in -16..=16i64 {
                let q = j - p1;
                if q.abs() <= 16 {
                    s += ca[storage_index(p1, n)] * cb[storage_index(q, n)];
                }
            }
            assert!((p.data()[f] - s).norm() < 1e-12, "mode {j}");
        }
    }

    #[test]
    fn norm_examples() {
        let l = 7.0;
        let g = grid(64, l);
        let u = Field::from_fn(&g, |x| (2.0 * PI * x / l).sin());
        assert!((u.l2_norm().powi(2) - l / 2.0).abs() < 1e-12);
        let c = Field::from_fn(&g, |_| 3.0).with_zero_mean();
        assert!(c.l2_norm() < 1e-14);
        assert!((u.semi_h1_norm().powi(2) - (2.0 * PI / l).powi(2) * l / 2.0).abs() < 1e-11);
        let h1 = u.h1_norm().powi(2);
        assert!((h1 - u.l2_norm().powi(2) - u.semi_h1_norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn inner_product_complex_conjugates_second_argument() {
        let g = grid(32, 2.0 * PI);
        let u = Field::from_fn_complex(&g, |x| Complex64::from_polar(1.0, x));
        let v = u.scale(1.0);
        let iv = Field::from_fn_complex(&g, |x| Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, x));
        let ip = u.inner_product(&iv).unwrap();
        assert!((ip - Complex64::new(0.0, -2.0 * PI)).norm() < 1e-12);
        let ip = u.inner_product(&v.to_spectral()).unwrap();
        assert!((ip.re - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = Field::from_fn(&grid(32, 1.0), f64::sin);
        let b = Field::from_fn(&grid(32, 2.0), f64::sin);
        assert!(a.inner_product(&b).is_err());
        assert!(a.dealias_product(&b).is_err());
    }

    #[test]
    fn two_dimensional_derivatives() {
        let l = 2.0 * PI;
        let g = Arc::new(SpectralGrid::new_2d(32, l, 32, l).unwrap());
        let u = Field::from_fn_2d(&g, |x, y| (2.0 * x).sin() * (3.0 * y).cos());
        let ux = u.partial(0, 1).real_samples();
        let uy = u.partial(1, 1).real_samples();
        let lap = u.laplacian().real_samples();
        for i in 0..g.len() {
            let (a, b) = g.split(i);
            let (x, y) = (g.x(0, a), g.x(1, b));
            assert!((ux[i] - 2.0 * (2.0 * x).cos() * (3.0 * y).cos()).abs() < 1e-12);
            assert!((uy[i] + 3.0 * (2.0 * x).sin() * (3.0 * y).sin()).abs() < 1e-12);
            assert!((lap[i] + 13.0 * (2.0 * x).sin() * (3.0 * y).cos()).abs() < 1e-11);
        }
        let back = u.laplacian().inverse_laplacian().real_samples();
        for (a, b) in back.iter().zip(u.real_samples()) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!((u.l2_norm().powi(2) - l * l / 4.0).abs() < 1e-11);
    }

    #[test]
    fn translate_shifts_profile() {
        let g = grid(64, 2.0 * PI);
        let u = Field::from_fn(&g, |x| (x.sin()).exp());
        let v = u.translate(0.7).real_samples();
        for (i, val) in v.iter().enumerate() {
            let x = g.x(0, i) + 0.7;
            assert!((val - x.sin().exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mean_flag_survives_operations() {
        let g = grid(32, 2.0 * PI);
        let u = Field::from_fn(&g, |x| 1.0 + x.cos()).with_zero_mean();
        assert!(u.mean().norm() < 1e-15);
        let s = u.to_spectral();
        assert_eq!(s.data()[0], Complex64::new(0.0, 0.0));
        assert!(s.to_physical().mean().norm() < 1e-15);
    }

    fn arb_real_field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, n)
    }

    proptest! {
        #[test]
        fn round_trip(values in arb_real_field(64)) {
            let g = grid(64, 3.0);
            let u = Field::from_real(&g, values.clone()).unwrap();
            let back = u.to_spectral().to_physical().real_samples();
            let scale = values.iter().map(|v| v.abs()).fold(1e-300, f64::max);
            for (a, b) in back.iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-13 * scale);
            }
        }

        #[test]
        fn parseval(values in arb_real_field(64)) {
            let g = grid(64, 3.0);
            let u = Field::from_real(&g, values).unwrap();
            let a = u.l2_norm();
            let b = u.to_spectral().l2_norm();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }

        #[test]
        fn conjugate_symmetry(values in arb_real_field(32)) {
            let g = grid(32, 1.0);
            let c = Field::from_real(&g, values).unwrap().to_spectral();
            let d = c.data();
            for j in 1..16 {
                prop_assert_eq!(d[storage_index(-j, 32)], d[storage_index(j, 32)].conj());
            }
        }

        #[test]
        fn ddx_composes(seed in 0u64..1000) {
            let g = grid(64, 4.0);
            let u = random_field(&g, 20, seed);
            let a = u.ddx(1).ddx(1);
            let b = u.ddx(2);
            let diff = a.sub(&b).unwrap().l2_norm();
            prop_assert!(diff <= 1e-12 * b.l2_norm().max(1.0));
        }

        #[test]
        fn zero_mean_projection_idempotent(values in arb_real_field(32), order in 1u32..4) {
            let g = grid(32, 2.0);
            let u = Field::from_real(&g, values).unwrap();
            let p = u.project_zero_mean();
            let pp = p.project_zero_mean();
            for (a, b) in p.real_samples().iter().zip(pp.real_samples()) {
                prop_assert!((a - b).abs() <= 1e-14);
            }
            let scale = u.max_abs().max(1.0) * 1e-13 * 40f64.powi(order as i32);
            prop_assert!(u.ddx(order).mean().norm() <= scale);
        }
    }
}
