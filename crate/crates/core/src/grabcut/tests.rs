use super::*;
use crate::synthetic::{add_boundary_noise, disk_image};
use approx::assert_abs_diff_eq;
use rand::SeedableRng;

fn iou(a: &Array2<u8>, b: &Array2<u8>) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.iter().zip(b.iter()) {
        match (*x == 1, *y == 1) {
            (true, true) => {
                inter += 1;
                union += 1;
            }
            (false, false) => {}
            _ => union += 1,
        }
    }
    inter as f64 / union as f64
}

fn two_tone_image(size: usize) -> (RgbImage, Array2<u8>) {
    // Left half dark green, right half light gray; mask = left half.
    let mut img = RgbImage::new(size as u32, size as u32);
    let mut mask = Array2::<u8>::zeros((size, size));
    for y in 0..size {
        for x in 0..size {
            if x < size / 2 {
                img.put_pixel(x as u32, y as u32, image::Rgb([30, 140, 40]));
                mask[[y, x]] = 1;
            } else {
                img.put_pixel(x as u32, y as u32, image::Rgb([180, 180, 180]));
            }
        }
    }
    (img, mask)
}

#[test]
fn uniform_image_beta_is_zero_and_n_links_equal_gamma() {
    let img = RgbImage::from_pixel(6, 6, image::Rgb([77, 77, 77]));
    assert_eq!(contrast_beta(&img), 0.0);

    let mask = {
        let mut m = Array2::<u8>::zeros((6, 6));
        m[[2, 2]] = 1;
        m
    };
    let trimap = Trimap::from_mask(&mask);
    let fg = GmmModel {
        components: vec![GmmComponent::new(1.0, [77.0; 3], identity_cov())],
    };
    let net = build_graph(&img, &trimap, &fg, &fg.clone(), 50.0);
    for &(a, b, cap) in net.n_links() {
        let (ax, ay) = (a % 6, a / 6);
        let (bx, by) = (b % 6, b / 6);
        if ax == bx || ay == by {
            assert_abs_diff_eq!(cap, 50.0, epsilon = 1e-12);
        } else {
            assert_abs_diff_eq!(cap, 50.0 / std::f64::consts::SQRT_2, epsilon = 1e-12);
        }
    }
}

fn identity_cov() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

#[test]
fn two_tone_cross_boundary_links_weaker() {
    let (img, _) = two_tone_image(8);
    let beta = contrast_beta(&img);
    assert!(beta > 0.0);
    let mask = {
        let mut m = Array2::<u8>::zeros((8, 8));
        m[[4, 2]] = 1;
        m
    };
    let trimap = Trimap::from_mask(&mask);
    let gmm = GmmModel {
        components: vec![GmmComponent::new(1.0, [100.0; 3], identity_cov())],
    };
    let net = build_graph(&img, &trimap, &gmm, &gmm.clone(), 50.0);
    let mut within = Vec::new();
    let mut crossing = Vec::new();
    for &(a, b, cap) in net.n_links() {
        let (ax, ay) = (a % 8, a / 8);
        let (bx, by) = (b % 8, b / 8);
        if ay != by {
            continue; // horizontal links only, unit distance
        }
        let a_left = ax < 4;
        let b_left = bx < 4;
        if a_left == b_left {
            within.push(cap);
        } else {
            crossing.push(cap);
        }
    }
    let max_cross = crossing.iter().cloned().fold(f64::MIN, f64::max);
    let min_within = within.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        max_cross < min_within,
        "cross-boundary {max_cross} should be weaker than within-region {min_within}"
    );
}

#[test]
fn graph_capacities_match_hand_computed_table() {
    // 3x3 image, hand-evaluated t-links and n-links for fixed single-Gaussian
    // models with identity covariance.
    // Close tones keep the Gaussian NLLs inside floating-point range so no
    // density flooring kicks in and the table stays exact.
    let mut img = RgbImage::new(3, 3);
    let colors: [[u8; 3]; 9] = [
        [10, 10, 10],
        [10, 10, 10],
        [18, 18, 18],
        [10, 10, 10],
        [18, 18, 18],
        [18, 18, 18],
        [10, 10, 10],
        [10, 10, 10],
        [18, 18, 18],
    ];
    for (i, c) in colors.iter().enumerate() {
        img.put_pixel((i % 3) as u32, (i / 3) as u32, image::Rgb(*c));
    }
    let mut mask = Array2::<u8>::zeros((3, 3));
    mask[[0, 0]] = 1; // one probable-foreground pixel, rest definite background
    let trimap = Trimap::from_mask(&mask);
    let fg = GmmModel {
        components: vec![GmmComponent::new(1.0, [10.0; 3], identity_cov())],
    };
    let bg = GmmModel {
        components: vec![GmmComponent::new(1.0, [18.0; 3], identity_cov())],
    };
    let gamma = 50.0;
    let net = build_graph(&img, &trimap, &fg, &bg, gamma);

    // Hand computation of beta: squared diffs over the 20 neighbor pairs of a
    // 3x3 grid. Pairs with equal colors contribute 0; differing pairs
    // contribute 3 * 8^2 each. Enumerating the grid above by hand finds 9
    // differing pairs among the 20.
    let diff2 = 3.0 * 8.0f64.powi(2);
    let expected_beta = 1.0 / (2.0 * (9.0 * diff2 / 20.0));
    assert_abs_diff_eq!(contrast_beta(&img), expected_beta, epsilon = 1e-15);

    // Pixel (0,0): probable foreground. t-links = NLL under the opposite
    // model: from_source = bg NLL, to_sink = fg NLL.
    // Gaussian with identity covariance: nll(z) = 0.5*||z-mu||^2 + 1.5*ln(2*pi).
    let log_norm = 1.5 * (2.0 * std::f64::consts::PI).ln();
    let (from_source, to_sink) = net.terminal_caps(0);
    assert_abs_diff_eq!(from_source, 0.5 * diff2 + log_norm, epsilon = 1e-9);
    assert_abs_diff_eq!(to_sink, 0.0 + log_norm, epsilon = 1e-9);

    // Pixel (1,0): definite background -> clamped.
    let (fs, ts) = net.terminal_caps(1);
    assert_eq!(fs, 0.0);
    assert_abs_diff_eq!(ts, 9.0 * gamma, epsilon = 1e-12);

    // Horizontal n-link (0,0)-(1,0): equal colors -> gamma * exp(0) = gamma.
    let link = net
        .n_links()
        .iter()
        .find(|(a, b, _)| (*a, *b) == (1, 0) || (*a, *b) == (0, 1))
        .unwrap();
    assert_abs_diff_eq!(link.2, gamma, epsilon = 1e-12);

    // Horizontal n-link (1,0)-(2,0): differing colors.
    let link = net
        .n_links()
        .iter()
        .find(|(a, b, _)| (*a, *b) == (2, 1) || (*a, *b) == (1, 2))
        .unwrap();
    assert_abs_diff_eq!(
        link.2,
        gamma * (-expected_beta * diff2).exp(),
        epsilon = 1e-12
    );

    // Diagonal n-link (0,0)-(1,1): differing colors, distance sqrt(2).
    let link = net
        .n_links()
        .iter()
        .find(|(a, b, _)| (*a, *b) == (4, 0) || (*a, *b) == (0, 4))
        .unwrap();
    assert_abs_diff_eq!(
        link.2,
        gamma * (-expected_beta * diff2).exp() / std::f64::consts::SQRT_2,
        epsilon = 1e-12
    );
}

#[test]
fn zero_iterations_returns_trimap_foreground() {
    let (img, mask) = two_tone_image(8);
    let config = GrabCutConfig {
        iterations: 0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = refine_mask(&img, &mask, &config, &mut rng).unwrap();
    assert_eq!(out, mask);
}

#[test]
fn exact_two_tone_boundary_is_preserved() {
    let (img, mask) = two_tone_image(16);
    let config = GrabCutConfig {
        components: 2,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = refine_mask(&img, &mask, &config, &mut rng).unwrap();
    assert_eq!(out, mask);
}

#[test]
fn disk_recovered_from_noisy_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (img, clean) = disk_image(48, (24.0, 24.0), 14.0, &mut rng);
    let noisy = add_boundary_noise(&clean, 0.05, 2, &mut rng);
    assert!(iou(&noisy, &clean) < 1.0);
    let out = refine_mask(&img, &noisy, &GrabCutConfig::default(), &mut rng).unwrap();
    let score = iou(&out, &clean);
    assert!(score >= 0.95, "disk recovery IoU {score:.3}");
}

#[test]
fn foreground_never_escapes_trimap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (img, clean) = disk_image(32, (14.0, 18.0), 9.0, &mut rng);
    let noisy = add_boundary_noise(&clean, 0.08, 2, &mut rng);
    let out = refine_mask(&img, &noisy, &GrabCutConfig::default(), &mut rng).unwrap();
    for (o, t) in out.iter().zip(noisy.iter()) {
        assert!(*o == 0 || *t == 1, "foreground escaped the trimap");
    }
}

#[test]
fn refine_is_deterministic_given_seed() {
    let mut gen_rng = ChaCha8Rng::seed_from_u64(4);
    let (img, clean) = disk_image(24, (12.0, 12.0), 7.0, &mut gen_rng);
    let noisy = add_boundary_noise(&clean, 0.1, 1, &mut gen_rng);
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        refine_mask(&img, &noisy, &GrabCutConfig::default(), &mut rng).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn degenerate_masks_rejected() {
    let (img, _) = two_tone_image(8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let config = GrabCutConfig::default();

    let empty = Array2::<u8>::zeros((8, 8));
    assert!(matches!(
        refine_mask(&img, &empty, &config, &mut rng),
        Err(Error::DegenerateEpisode(_))
    ));

    let full = Array2::<u8>::ones((8, 8));
    assert!(matches!(
        refine_mask(&img, &full, &config, &mut rng),
        Err(Error::DegenerateEpisode(_))
    ));

    let nonbinary = Array2::<u8>::from_elem((8, 8), 2);
    assert!(matches!(
        refine_mask(&img, &nonbinary, &config, &mut rng),
        Err(Error::InvalidInput(_))
    ));
}
