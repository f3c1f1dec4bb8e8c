use super::*;
use proptest::prelude::*;
use rand::SeedableRng;

fn synthetic_tile(h: usize, w: usize, seed: u64) -> LabeledTile {
    let mut pixels = RgbImage::new(w as u32, h as u32);
    let mut mask = Array2::<u8>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let v = ((x * 7 + y * 13 + seed as usize * 31) % 251) as u8;
            pixels.put_pixel(x as u32, y as u32, image::Rgb([v, v.wrapping_add(40), v / 2]));
            mask[[y, x]] = ((x + y + seed as usize) % 3) as u8;
        }
    }
    LabeledTile {
        pixels,
        mask,
        source_id: format!("synthetic-{seed}"),
        geography: Geography::TrainDomain,
    }
}

#[test]
fn tiling_counts_match_grid() {
    // 2448 x 2448 at 612 gives the paper's 4 x 4 = 16 tiles per image;
    // checked on a same-ratio 24 x 24 at 6 to keep the test light, plus the
    // exact arithmetic for the full-size case.
    assert_eq!((2448 / 612) * (2448 / 612), 16);
    let tile = synthetic_tile(24, 24, 0);
    let tiles = tile_image(&tile.pixels, &tile.mask, 6, "img", Geography::TrainDomain).unwrap();
    assert_eq!(tiles.len(), 16);
}

#[test]
fn tiling_identity_when_tile_equals_image() {
    let tile = synthetic_tile(10, 10, 1);
    let tiles = tile_image(&tile.pixels, &tile.mask, 10, "img", Geography::TrainDomain).unwrap();
    assert_eq!(tiles.len(), 1);
    assert_eq!(tiles[0].pixels, tile.pixels);
    assert_eq!(tiles[0].mask, tile.mask);
}

#[test]
fn tiling_matches_window_copy_oracle() {
    // 4x4 raster with distinct values, tile_size 2: hand-enumerated windows.
    let mut pixels = RgbImage::new(4, 4);
    let mut mask = Array2::<u8>::zeros((4, 4));
    for y in 0..4u32 {
        for x in 0..4u32 {
            let v = (y * 4 + x) as u8;
            pixels.put_pixel(x, y, image::Rgb([v, v, v]));
            mask[[y as usize, x as usize]] = v;
        }
    }
    let tiles = tile_image(&pixels, &mask, 2, "img", Geography::TrainDomain).unwrap();
    assert_eq!(tiles.len(), 4);
    // Brute-force window copy for every tile in row-major tile order.
    for (t, (ty, tx)) in tiles.iter().zip([(0, 0), (0, 2), (2, 0), (2, 2)]) {
        for y in 0..2 {
            for x in 0..2 {
                let expected = ((ty + y) * 4 + (tx + x)) as u8;
                assert_eq!(t.mask[[y, x]], expected);
                assert_eq!(t.pixels.get_pixel(x as u32, y as u32)[0], expected);
            }
        }
    }
}

#[test]
fn tiling_rejects_bad_inputs() {
    let tile = synthetic_tile(8, 8, 2);
    assert!(tile_image(&tile.pixels, &tile.mask, 0, "img", Geography::TrainDomain).is_err());
    let small_mask = Array2::<u8>::zeros((4, 4));
    assert!(tile_image(&tile.pixels, &small_mask, 2, "img", Geography::TrainDomain).is_err());
    assert!(tile_image(&tile.pixels, &tile.mask, 9, "img", Geography::TrainDomain).is_err());
}

#[test]
fn tiling_is_lossless_over_covered_grid() {
    let tile = synthetic_tile(9, 9, 3);
    let tiles = tile_image(&tile.pixels, &tile.mask, 4, "img", Geography::TrainDomain).unwrap();
    assert_eq!(tiles.len(), 4); // remainder row/column dropped
    for (t, (ty, tx)) in tiles.iter().zip([(0, 0), (0, 4), (4, 0), (4, 4)]) {
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(t.mask[[y, x]], tile.mask[[ty + y, tx + x]]);
                assert_eq!(
                    t.pixels.get_pixel(x as u32, y as u32),
                    tile.pixels.get_pixel((tx + x) as u32, (ty + y) as u32)
                );
            }
        }
    }
}

#[test]
fn remap_deepglobe_style_merge() {
    // Source scheme 0..=6 with label 2 = Forest; everything else background.
    let entries = vec![(0, 0), (1, 0), (2, 1), (3, 0), (4, 0), (5, 0), (6, 0)];
    let mapping = ClassMapping::new(
        "forest-1way",
        entries,
        vec!["Background".into(), "Forest".into()],
    )
    .unwrap();
    let mask = ndarray::array![[0u8, 2, 4], [2, 6, 1]];
    let out = remap_labels(&mask, &mapping).unwrap();
    assert_eq!(out, ndarray::array![[0u8, 1, 0], [1, 0, 0]]);
}

#[test]
fn remap_identity_is_noop() {
    let mapping = ClassMapping::identity(2);
    let mask = ndarray::array![[0u8, 1], [2, 0]];
    assert_eq!(remap_labels(&mask, &mapping).unwrap(), mask);
}

#[test]
fn remap_two_way_matches_lookup_oracle() {
    // Test-domain scheme: Background 0, Building 1, Woodlands 2, Water 3.
    let entries = vec![(0, 0), (1, 0), (2, 1), (3, 2)];
    let mapping = ClassMapping::new(
        "woodland-water-2way",
        entries.clone(),
        vec!["Background".into(), "Woodlands".into(), "Water".into()],
    )
    .unwrap();
    let mut mask = Array2::<u8>::zeros((5, 5));
    for (i, v) in mask.iter_mut().enumerate() {
        *v = (i % 4) as u8;
    }
    let out = remap_labels(&mask, &mapping).unwrap();
    for (o, m) in out.iter().zip(mask.iter()) {
        let expected = entries.iter().find(|(s, _)| s == m).unwrap().1;
        assert_eq!(*o, expected);
    }
}

#[test]
fn remap_unmapped_label_reports_count() {
    let mapping = ClassMapping::identity(1);
    let mask = ndarray::array![[0u8, 9], [9, 9]];
    let err = remap_labels(&mask, &mapping).unwrap_err();
    match err {
        Error::UnmappedLabel { label, pixel_count } => {
            assert_eq!(label, 9);
            assert_eq!(pixel_count, 3);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn double_flip_restores_tile() {
    let tile = synthetic_tile(6, 7, 4);
    let twice = flip_horizontal(&flip_horizontal(&tile));
    assert_eq!(twice, tile);
}

#[test]
fn flip_swaps_columns() {
    let mut tile = synthetic_tile(2, 2, 5);
    tile.mask = ndarray::array![[1u8, 2], [3, 4]];
    let flipped = flip_horizontal(&tile);
    assert_eq!(flipped.mask, ndarray::array![[2u8, 1], [4, 3]]);
}

#[test]
fn augment_is_deterministic_under_seed() {
    let tile = synthetic_tile(8, 8, 6);
    let run = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..32)
            .map(|_| augment(&tile, &mut rng).mask != tile.mask)
            .collect::<Vec<bool>>()
    };
    assert_eq!(run(17), run(17));
    // Both outcomes occur over 32 draws.
    let flips = run(17);
    assert!(flips.iter().any(|f| *f) && flips.iter().any(|f| !*f));
}

#[test]
fn resize_shape_and_identity() {
    let tile = synthetic_tile(12, 12, 7);
    let resized = resize_tile(&tile, 5).unwrap();
    assert_eq!(resized.height(), 5);
    assert_eq!(resized.width(), 5);
    let same = resize_tile(&tile, 12).unwrap();
    assert_eq!(same, tile);
}

#[test]
fn resize_constant_tile_stays_constant() {
    let mut tile = synthetic_tile(9, 9, 8);
    for px in tile.pixels.pixels_mut() {
        *px = image::Rgb([120, 30, 200]);
    }
    tile.mask.fill(1);
    let resized = resize_tile(&tile, 4).unwrap();
    for px in resized.pixels.pixels() {
        assert_eq!(*px, image::Rgb([120, 30, 200]));
    }
    assert!(resized.mask.iter().all(|v| *v == 1));
}

#[test]
fn resize_mask_classes_subset_of_original() {
    let tile = synthetic_tile(16, 16, 9);
    let resized = resize_tile(&tile, 7).unwrap();
    let original: std::collections::BTreeSet<u8> = tile.mask.iter().copied().collect();
    for v in resized.mask.iter() {
        assert!(original.contains(v));
    }
}

fn forest_pool(n: usize) -> Vec<LabeledTile> {
    (0..n)
        .map(|i| {
            let mut t = synthetic_tile(8, 8, 100 + i as u64);
            // Make a quarter of each tile class 1 so every tile qualifies.
            for y in 0..4 {
                for x in 0..4 {
                    t.mask[[y, x]] = 1;
                }
            }
            for y in 4..8 {
                for x in 0..8 {
                    t.mask[[y, x]] = 0;
                }
            }
            t
        })
        .collect()
}

#[test]
fn one_shot_episode_has_one_support_one_query() {
    let pool = forest_pool(5);
    let mapping = ClassMapping::identity(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ep = sample_episode(&pool, 1, 1, &mapping, &mut rng).unwrap();
    assert_eq!(ep.supports.len(), 1);
    assert_ne!(ep.supports[0].source_id, ep.query.source_id);
}

#[test]
fn five_shot_over_six_tiles_uses_all_disjointly() {
    let pool = forest_pool(6);
    let mapping = ClassMapping::identity(1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ep = sample_episode(&pool, 1, 5, &mapping, &mut rng).unwrap();
    let mut ids: Vec<&str> = ep.supports.iter().map(|t| t.source_id.as_str()).collect();
    ids.push(ep.query.source_id.as_str());
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), 6);
}

#[test]
fn episode_stream_replays_exactly() {
    let pool = forest_pool(12);
    let mapping = ClassMapping::identity(1);
    let draw = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..100)
            .map(|_| {
                let ep = sample_episode(&pool, 1, 2, &mapping, &mut rng).unwrap();
                let mut ids: Vec<String> =
                    ep.supports.iter().map(|t| t.source_id.clone()).collect();
                ids.push(ep.query.source_id.clone());
                ids
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(), draw());
}

#[test]
fn insufficient_tiles_error_reports_counts() {
    let pool = forest_pool(2);
    let mapping = ClassMapping::identity(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = sample_episode(&pool, 1, 5, &mapping, &mut rng).unwrap_err();
    match err {
        Error::InsufficientTiles { counts, .. } => assert!(counts.contains("class 1: 2")),
        other => panic!("unexpected error {other}"),
    }
}

proptest! {
    /// Pixel counts per mapped group are preserved by remapping.
    #[test]
    fn remap_preserves_group_counts(values in proptest::collection::vec(0u8..5, 36)) {
        let mask = Array2::from_shape_vec((6, 6), values).unwrap();
        let entries = vec![(0, 0), (1, 0), (2, 1), (3, 1), (4, 2)];
        let mapping = ClassMapping::new(
            "grouping",
            entries.clone(),
            vec!["Background".into(), "A".into(), "B".into()],
        ).unwrap();
        let out = remap_labels(&mask, &mapping).unwrap();
        for target in 0u8..3 {
            let sources: Vec<u8> = entries
                .iter()
                .filter(|(_, d)| *d == target)
                .map(|(s, _)| *s)
                .collect();
            let src_count = mask.iter().filter(|v| sources.contains(v)).count();
            let dst_count = out.iter().filter(|v| **v == target).count();
            prop_assert_eq!(src_count, dst_count);
        }
    }

    /// Reassembling the tile grid reproduces the cropped source exactly.
    #[test]
    fn tiling_roundtrip(seed in 0u64..50, tile_size in 1usize..5) {
        let src = synthetic_tile(8, 8, seed);
        let tiles = tile_image(&src.pixels, &src.mask, tile_size, "img", Geography::TrainDomain).unwrap();
        let per_side = 8 / tile_size;
        prop_assert_eq!(tiles.len(), per_side * per_side);
        for (idx, t) in tiles.iter().enumerate() {
            let ty = (idx / per_side) * tile_size;
            let tx = (idx % per_side) * tile_size;
            for y in 0..tile_size {
                for x in 0..tile_size {
                    prop_assert_eq!(t.mask[[y, x]], src.mask[[ty + y, tx + x]]);
                }
            }
        }
    }

    /// Support and query never share a tile.
    #[test]
    fn episodes_never_share_tiles(seed in 0u64..200, shot in 1usize..4) {
        let pool = forest_pool(6);
        let mapping = ClassMapping::identity(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = sample_episode(&pool, 1, shot, &mapping, &mut rng).unwrap();
        for s in &ep.supports {
            prop_assert_ne!(&s.source_id, &ep.query.source_id);
        }
    }
}
