use approx::assert_relative_eq;
use ndarray::Array2;
use proptest::prelude::*;

use lomae_core::data::normalize_window;
use lomae_core::eval::{rmse_metric, RmseUnit};
use lomae_core::interpret::cka;
use lomae_core::tomo::{make_phantom, radon_project, Phantom, PhantomKind, ScanGeometry};
use lomae_core::train::{apply_mask, make_mask};
use lomae_core::zoo::{Model, ModelConfig};
use lomae_core::{round_to_f32, Slice};

fn image(n: usize) -> impl Strategy<Value = Slice> {
    prop::collection::vec(-1.0f64..2.0, n * n)
        .prop_map(move |v| Array2::from_shape_vec((n, n), v).unwrap().mapv(round_to_f32))
}

fn features(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn tiny() -> ModelConfig {
    ModelConfig {
        depths: vec![2],
        embed_dim: 8,
        n_heads: 2,
        window_size: 4,
        input_size: 16,
        ..ModelConfig::desk_swinir()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shortcut_difference_is_the_input(x in image(16), seed in 0u64..1000) {
        let on = Model::build(&tiny(), seed).unwrap();
        let mut off = on.clone();
        off.config.use_front_to_end_shortcut = false;
        let d = on.forward(&x).unwrap() - off.forward(&x).unwrap();
        prop_assert_eq!(d, x);
    }

    #[test]
    fn mask_count_and_passthrough(seed: u64, ratio in 0.0f64..1.0, x in image(32)) {
        let m = make_mask((32, 32), 8, ratio, seed).unwrap();
        prop_assert_eq!(m.n_masked(), (ratio * 16.0).round() as usize);
        let y = apply_mask(&x, &m).unwrap();
        for ((i, j), &v) in y.indexed_iter() {
            if m.is_masked_pixel(i, j) {
                prop_assert_eq!(v, 0.0);
            } else {
                prop_assert_eq!(v.to_bits(), x[[i, j]].to_bits());
            }
        }
    }

    #[test]
    fn radon_is_linear(s1 in 0u64..50, s2 in 0u64..50, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let p1 = make_phantom(PhantomKind::EllipseSoup, 32, s1).unwrap();
        let p2 = make_phantom(PhantomKind::EllipseSoup, 32, s2).unwrap();
        let mix = Phantom::new(&p1.pixels * a + &p2.pixels * b, p1.pixel_size_mm).unwrap();
        let g = ScanGeometry::parallel(32, p1.pixel_size_mm, 24);
        let lhs = radon_project(&mix, &g).unwrap().values;
        let rhs = radon_project(&p1, &g).unwrap().values * a + radon_project(&p2, &g).unwrap().values * b;
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!((l - r).abs() <= 1e-9 * (1.0 + r.abs()));
        }
    }

    #[test]
    fn cka_is_invariant_to_scale_and_shift(x in features(12, 4), y in features(12, 3), s in 0.1f64..10.0, c in -5.0f64..5.0) {
        let base = cka(&x, &y);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let moved = cka(&(&x * s + c), &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!((base - moved).abs() < 1e-8);
        prop_assert!((base - cka(&y, &x).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn rmse_is_a_scaled_metric(a in image(8), b in image(8), c in image(8), scale in 0.1f64..100.0) {
        let unit = RmseUnit { label: "u".into(), scale };
        let ab = rmse_metric(&a, &b, &unit).unwrap();
        prop_assert_eq!(rmse_metric(&a, &a, &unit).unwrap(), 0.0);
        prop_assert_eq!(ab, rmse_metric(&b, &a, &unit).unwrap());
        let via = rmse_metric(&a, &c, &unit).unwrap() + rmse_metric(&c, &b, &unit).unwrap();
        prop_assert!(ab <= via + 1e-12);
        assert_relative_eq!(ab, scale * rmse_metric(&a, &b, &RmseUnit::normalized()).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn window_normalization_lands_in_unit_interval(x in image(8), lo in -2.0f64..0.5, width in 0.1f64..3.0) {
        let y = normalize_window(&x, (lo, lo + width)).unwrap();
        prop_assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
