use proptest::prelude::*;

use sftip_core::constraints::{clip_nonneg, project_psf_support, SupportSpec};
use sftip_core::grid::{
    circular_convolve, circular_shift, forward_fft, inverse_fft_real, quantize_16bit, RealField,
};
use sftip_core::maskgen::{make_masks, split_image};
use sftip_core::metrics::{align_by_shift, psnr_db};

fn field(max_side: usize, lo: f64, hi: f64) -> impl Strategy<Value = RealField> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(w, h)| {
        prop::collection::vec(lo..hi, w * h).prop_map(move |v| RealField::new(w, h, v).unwrap())
    })
}

fn pair(max_side: usize) -> impl Strategy<Value = (RealField, RealField)> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        let v = || prop::collection::vec(-1.0f64..1.0, w * h);
        (v(), v()).prop_map(move |(a, b)| (RealField::new(w, h, a).unwrap(), RealField::new(w, h, b).unwrap()))
    })
}

fn l2(a: &RealField, b: &RealField) -> f64 {
    a.l2_distance(b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_roundtrip(x in field(24, -5.0, 5.0)) {
        let back = inverse_fft_real(&forward_fft(&x));
        prop_assert!(l2(&x, &back) <= 1e-10 * x.energy().sqrt().max(1e-300));
    }

    #[test]
    fn parseval(x in field(24, -5.0, 5.0)) {
        let spectral: f64 = forward_fft(&x).samples().iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64;
        prop_assert!((spectral - x.energy()).abs() <= 1e-10 * x.energy().max(1e-300));
    }

    #[test]
    fn convolution_commutes((a, b) in pair(16)) {
        let ab = circular_convolve(&a, &b).unwrap();
        let ba = circular_convolve(&b, &a).unwrap();
        prop_assert!(l2(&ab, &ba) <= 1e-10 * (1.0 + ab.energy().sqrt()));
    }

    #[test]
    fn clipping_is_non_expansive((a, b) in pair(16)) {
        prop_assert!(l2(&clip_nonneg(&a), &clip_nonneg(&b)) <= l2(&a, &b) + 1e-15);
    }

    #[test]
    fn psf_projection_is_feasible_and_idempotent(x in field(20, -1.0, 1.0), frac in 0.05f64..1.0) {
        let (w, h) = x.shape();
        let size = ((w.min(h) as f64 * frac).ceil() as usize).max(1);
        let support = SupportSpec::new(size, w, h).unwrap();
        let once = project_psf_support(&clip_nonneg(&x), support);
        prop_assert!((once.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(once.samples().iter().all(|&v| v >= 0.0));
        for y in 0..h {
            for xx in 0..w {
                if !support.contains(xx, y, w, h) {
                    prop_assert_eq!(once.get(xx, y), 0.0);
                }
            }
        }
        let twice = project_psf_support(&once, support);
        prop_assert!(l2(&once, &twice) <= 1e-12);
    }

    #[test]
    fn masks_partition_unity(p in 1usize..=4, tile_w in 4usize..=12, tile_h in 4usize..=12) {
        let (w, h) = (p * tile_w, p * tile_h);
        let masks = make_masks(w, h, p).unwrap();
        let ones = RealField::filled(w, h, 1.0);
        let parts = split_image(&ones, &masks).unwrap();
        for y in 0..h {
            for x in 0..w {
                let total: f64 = parts.iter().map(|m| m.get(x, y)).sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn quantization_is_idempotent(x in field(16, 0.0, 3.0)) {
        let q = quantize_16bit(&x).unwrap();
        prop_assert_eq!(quantize_16bit(&q).unwrap(), q.clone());
        prop_assert!(q.samples().iter().all(|v| v.fract() == 0.0 && (0.0..=65535.0).contains(v)));
    }

    #[test]
    fn alignment_undoes_circular_shift(x in field(16, 0.0, 1.0), dx in -8isize..8, dy in -8isize..8) {
        let shifted = circular_shift(&x, dx, dy);
        let aligned = align_by_shift(&x, &shifted).unwrap();
        // ties are possible for periodic fields; any maximizer gives the same PSNR or better
        prop_assert!(psnr_db(&x, &aligned).unwrap() >= psnr_db(&x, &shifted).unwrap());
    }
}
