//! Seeded C-way K-shot episode sampling.

use super::{ClassMapping, Episode, LabeledTile, MIN_FG_FRACTION};
use crate::error::{Error, Result};
use rand::seq::index::sample as index_sample;
use rand_chacha::ChaCha8Rng;

/// A tile qualifies for a class when at least `MIN_FG_FRACTION` of its pixels
/// carry that class.
pub fn tile_qualifies(tile: &LabeledTile, class: u8) -> bool {
    tile.class_fraction(class) >= MIN_FG_FRACTION
}

/// Per-class counts of qualifying tiles, in `class_list` order.
pub fn qualifying_counts(pool: &[LabeledTile], class_list: &[u8]) -> Vec<usize> {
    class_list
        .iter()
        .map(|c| pool.iter().filter(|t| tile_qualifies(t, *c)).count())
        .collect()
}

/// Draws K+1 distinct tiles qualifying for every foreground class; the first
/// K become supports and the last the query. Deterministic given the rng
/// state.
pub fn sample_episode(
    pool: &[LabeledTile],
    way: usize,
    shot: usize,
    mapping: &ClassMapping,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    if mapping.way() != way {
        return Err(Error::InvalidInput(format!(
            "mapping {} declares {} foreground classes, episode wants {way}",
            mapping.name,
            mapping.way()
        )));
    }
    let class_list = mapping.foreground_classes();
    let qualified: Vec<usize> = (0..pool.len())
        .filter(|&i| class_list.iter().all(|c| tile_qualifies(&pool[i], *c)))
        .collect();
    if qualified.len() < shot + 1 {
        let counts = qualifying_counts(pool, &class_list);
        let report = class_list
            .iter()
            .zip(counts)
            .map(|(c, n)| format!("class {c}: {n}"))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::InsufficientTiles {
            way,
            shot,
            counts: format!("{report} (jointly qualifying: {})", qualified.len()),
        });
    }
    let picks = index_sample(rng, qualified.len(), shot + 1);
    let mut chosen: Vec<&LabeledTile> = picks.iter().map(|i| &pool[qualified[i]]).collect();
    let query = chosen.pop().unwrap().clone();
    let supports = chosen.into_iter().cloned().collect();
    Ok(Episode {
        supports,
        query,
        way,
        shot,
        class_list,
    })
}
