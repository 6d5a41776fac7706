use privsplit::adam::{adam_step, AdamConfig, AdamState};
use privsplit::autodiff::clamped_sigmoid;
use privsplit::data::{denormalize_value, normalize_pixel, quantize_value};
use privsplit::evaluation::psnr;
use privsplit::image::{decode_pixmap, encode_pixmap, Image};
use privsplit::models::{build_models, ModelConfig, NoiseSpec, Proportion, SplitFeature};
use privsplit::obfuscate::{
    gaussian_blur, p3_decode, p3_encode, p3_reference, pixelate, quantized_coefficients, secret_proportion,
};
use privsplit::objectives::{discriminator_loss, generator_adversarial_loss, jsd, DiscreteDistributionPair};
use privsplit::tensor::Tensor;
use proptest::prelude::*;

fn image(max_side: usize, channels: usize) -> impl Strategy<Value = Image> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h * channels)
            .prop_map(move |px| Image::new(w, h, channels, px).unwrap())
    })
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..1.0f64, n).prop_filter_map("all zero", |raw| {
        let s: f64 = raw.iter().sum();
        (s > 1e-6).then(|| {
            let mut p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let residue = 1.0 - p.iter().sum::<f64>();
            p[0] += residue;
            p
        })
    })
}

fn small_config(seed: u64, input_width: usize, den: u32) -> ModelConfig {
    ModelConfig {
        input_width,
        feature_width: 16,
        privacy_proportion: Proportion::new(1, den).unwrap(),
        hidden_width: 8,
        discriminator_hidden: 6,
        discriminator_layers: 5,
        perceptual_width: 4,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noiseless_encryption_is_reconstruction(
        seed in any::<u64>(),
        width in 1usize..6,
        den in prop::sample::select(vec![2u32, 4, 8]),
        xs in proptest::collection::vec(-3.0..3.0f64, 30),
    ) {
        let b = build_models(&small_config(seed, width, den)).unwrap();
        let rows = xs.len() / width;
        let x = Tensor::matrix(rows, width, xs[..rows * width].to_vec()).unwrap();
        let rec = b.reconstruct(&x).unwrap();
        prop_assert_eq!(rec.shape(), x.shape());
        prop_assert_eq!(b.encrypt(&x, &NoiseSpec::new(0.0, seed)).unwrap(), rec.clone());
        let noisy = b.encrypt(&x, &NoiseSpec::new(1.0, seed)).unwrap();
        prop_assert_eq!(noisy.shape(), x.shape());
    }

    #[test]
    fn split_then_merge_is_bitwise(
        pw in 1usize..16,
        rows in 1usize..5,
        vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 16 * 5),
    ) {
        let y = Tensor::matrix(rows, 16, vals[..rows * 16].to_vec()).unwrap();
        let s = SplitFeature::split(&y, pw).unwrap();
        prop_assert_eq!(s.privacy_part.cols(), pw);
        prop_assert_eq!(s.public_part.cols(), 16 - pw);
        prop_assert_eq!(s.merge().unwrap(), y);
    }

    #[test]
    fn pixelate_is_idempotent_on_whole_grids(
        f in 1usize..5,
        gw in 1usize..5,
        gh in 1usize..5,
        seed in any::<u64>(),
    ) {
        let img = Image::from_fn(f * gw, f * gh, 3, |x, y, c| {
            (seed.wrapping_mul(31).wrapping_add((x * 7 + y * 13 + c * 101) as u64) % 256) as u8
        }).unwrap();
        let once = pixelate(&img, f).unwrap();
        prop_assert_eq!(pixelate(&once, f).unwrap(), once);
    }

    #[test]
    fn blur_keeps_mean_of_smooth_images(
        radius in 1usize..4,
        a in 0.0..1.0f64,
        b in 0.0..1.0f64,
    ) {
        // low-frequency content away from the border keeps the mean within a gray level
        let n = 48;
        let img = Image::from_fn(n, n, 1, |x, y, _| {
            let u = x as f64 / n as f64;
            let v = y as f64 / n as f64;
            (128.0 + 60.0 * (a * 6.0 * u).sin() * (b * 6.0 * v).cos()).round() as u8
        }).unwrap();
        let mean = |i: &Image| i.pixels().iter().map(|&p| p as f64).sum::<f64>() / i.pixels().len() as f64;
        prop_assert!((mean(&gaussian_blur(&img, radius)) - mean(&img)).abs() <= 1.0);
    }

    #[test]
    fn blur_stays_within_input_range(img in image(12, 1), radius in 0usize..5) {
        let out = gaussian_blur(&img, radius);
        let lo = *img.pixels().iter().min().unwrap();
        let hi = *img.pixels().iter().max().unwrap();
        prop_assert!(out.pixels().iter().all(|&p| p >= lo && p <= hi));
    }

    #[test]
    fn p3_partitions_and_decodes_independently_of_threshold(img in image(20, 1), t in 1u32..40) {
        let pkg = p3_encode(&img, t).unwrap();
        let full = quantized_coefficients(&img);
        let mut merged = pkg.public.clone();
        for e in &pkg.secret {
            let slot = e.block as usize * 64 + e.coefficient as usize;
            prop_assert_eq!(merged.coefficients[slot], 0);
            merged.coefficients[slot] = e.value;
        }
        prop_assert_eq!(&merged, &full);
        prop_assert_eq!(p3_decode(&pkg).unwrap(), p3_reference(&img));
        let looser = p3_encode(&img, t + 5).unwrap();
        prop_assert!(secret_proportion(&looser) <= secret_proportion(&pkg));
    }

    #[test]
    fn psnr_is_symmetric(
        a in proptest::collection::vec(-1.0..1.0f64, 1..64),
        shift in proptest::collection::vec(-0.5..0.5f64, 64),
    ) {
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
        prop_assert_eq!(psnr(&a, &b, 2.0).unwrap(), psnr(&b, &a, 2.0).unwrap());
    }

    #[test]
    fn jsd_is_bounded_and_symmetric(
        (p, q) in (2usize..24).prop_flat_map(|n| (distribution(n), distribution(n))),
    ) {
        let pq = jsd(&DiscreteDistributionPair::new(p.clone(), q.clone()).unwrap());
        let qp = jsd(&DiscreteDistributionPair::new(q, p.clone()).unwrap());
        prop_assert!((-1e-15..=std::f64::consts::LN_2 + 1e-15).contains(&pq));
        prop_assert!((pq - qp).abs() < 1e-15);
        prop_assert!(jsd(&DiscreteDistributionPair::new(p.clone(), p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn shared_adversarial_formula(
        dr in proptest::collection::vec(1e-6..1.0 - 1e-6f64, 1..16),
        de in proptest::collection::vec(1e-6..1.0 - 1e-6f64, 1..16),
    ) {
        prop_assert_eq!(discriminator_loss(&dr, &de).unwrap(), generator_adversarial_loss(&dr, &de).unwrap());
    }

    #[test]
    fn sigmoid_is_strictly_inside_unit_interval(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let y = clamped_sigmoid(x);
        prop_assert!(y > 0.0 && y < 1.0);
    }

    #[test]
    fn pixel_normalization_inverts(p in any::<u8>()) {
        let v = normalize_pixel(p);
        prop_assert!((denormalize_value(v) - p as f64).abs() < 1e-12);
        prop_assert_eq!(quantize_value(v), p);
    }

    #[test]
    fn pixmap_round_trip(gray in image(9, 1), rgb in image(9, 3)) {
        for img in [gray, rgb] {
            prop_assert_eq!(decode_pixmap(&encode_pixmap(&img)).unwrap(), img);
        }
    }

    #[test]
    fn adam_ignores_zero_gradients(params in proptest::collection::vec(-10.0..10.0f64, 1..20), steps in 1usize..20) {
        let mut p = params.clone();
        let mut state = AdamState::new(p.len(), AdamConfig::default());
        let zeros = vec![0.0; p.len()];
        for _ in 0..steps {
            adam_step(&mut p, &zeros, &mut state).unwrap();
        }
        prop_assert_eq!(p, params);
    }
}
