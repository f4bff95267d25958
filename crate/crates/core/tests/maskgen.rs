//! Mask generators: coverage by pixel count, determinism, shape checks.

use std::collections::VecDeque;

use mural3m_core::maskgen::{generate, skeleton_of_jelly, MaskConfig, MaskError, MaskKind, MaskSpec};
use mural3m_core::morphology::thin;
use proptest::prelude::*;

fn gen(kind: MaskKind, cov: f64, n: usize, seed: u64) -> Result<mural3m_core::maskgen::GeneratedMask, MaskError> {
    generate(&MaskSpec::new(kind, cov, n, n, seed), &MaskConfig::default())
}

/// Sizes of the 8-connected components of a 0/1 grid.
fn components(data: &[u8], w: usize, h: usize) -> Vec<usize> {
    let mut seen = vec![false; data.len()];
    let mut sizes = Vec::new();
    for start in 0..data.len() {
        if data[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                        let j = ny as usize * w + nx as usize;
                        if data[j] != 0 && !seen[j] {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

fn kind() -> impl Strategy<Value = MaskKind> {
    prop::sample::select(MaskKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn coverage_is_on_target(k in kind(), cov in 0.05f64..0.6, seed in any::<u64>()) {
        let g = gen(k, cov, 128, seed).unwrap();
        let set = g.mask.data().iter().filter(|&&v| v != 0).count();
        let counted = set as f64 / (128.0 * 128.0);
        prop_assert!(g.mask.data().iter().all(|&v| v <= 1));
        prop_assert_eq!(counted, g.achieved);
        prop_assert!((counted - cov).abs() <= k.tolerance(), "{k} {cov} -> {counted}");
    }

    #[test]
    fn same_spec_same_mask(k in kind(), cov in 0.05f64..0.5, seed in any::<u64>()) {
        prop_assert_eq!(gen(k, cov, 64, seed).unwrap().mask, gen(k, cov, 64, seed).unwrap().mask);
    }

    #[test]
    fn skeletons_are_thin(cov in 0.05f64..0.6, seed in any::<u64>()) {
        let g = gen(MaskKind::LinearSkeleton, cov, 96, seed).unwrap();
        prop_assert_eq!(thin(g.mask.data(), 96, 96), g.mask.data().to_vec());
    }
}

#[test]
fn coverage_grows_with_the_target() {
    for k in MaskKind::ALL {
        let lo = gen(k, 0.10, 128, 3).unwrap().achieved;
        let hi = gen(k, 0.30, 128, 3).unwrap().achieved;
        assert!(hi > lo, "{k}: {lo} vs {hi}");
    }
}

#[test]
fn dust_is_many_small_specks() {
    let n = 512;
    let g = gen(MaskKind::Dust, 0.05, n, 11).unwrap();
    assert!((0.04..=0.06).contains(&g.achieved));
    let sizes = components(g.mask.data(), n, n);
    assert!(sizes.len() >= 1000, "{} specks", sizes.len());
    assert!((*sizes.iter().max().unwrap() as f64) < 0.001 * (n * n) as f64);
}

#[test]
fn skeleton_lies_inside_its_jelly() {
    let (skel, jelly) = skeleton_of_jelly(5, 128, 128, &MaskConfig::default().linear);
    assert!(skel.count() < jelly.count());
    for (s, j) in skel.data().iter().zip(jelly.data()) {
        assert!(*s <= *j, "skeleton leaves its source");
    }
}

#[test]
fn dense_skeletons_reach_the_top_of_the_ladder() {
    for seed in 0..3 {
        let g = gen(MaskKind::LinearSkeleton, 0.5772, 128, seed).unwrap();
        assert!((g.achieved - 0.5772).abs() <= MaskKind::LinearSkeleton.tolerance());
        assert_eq!(thin(g.mask.data(), 128, 128), g.mask.data().to_vec());
    }
}

#[test]
fn invalid_specs_are_rejected() {
    for cov in [0.0, 1.0, -0.2, f64::NAN] {
        assert!(matches!(gen(MaskKind::Block, cov, 32, 0), Err(MaskError::InvalidSpec(_))), "{cov}");
    }
    assert!(generate(&MaskSpec::new(MaskKind::Jelly, 0.3, 0, 10, 0), &MaskConfig::default()).is_err());
}

#[test]
fn kinds_parse_from_their_names() {
    for k in MaskKind::ALL {
        assert_eq!(k.name().parse::<MaskKind>().unwrap(), k);
    }
    assert_eq!("linear".parse::<MaskKind>().unwrap(), MaskKind::LinearSkeleton);
    assert!("speckle".parse::<MaskKind>().is_err());
}

#[test]
fn small_canvases_reach_low_targets() {
    assert!(gen(MaskKind::LinearSkeleton, 0.05, 64, 1689693953986891120).is_ok());
    for seed in 0..300 {
        for k in MaskKind::ALL {
            for cov in [0.05, 0.11] {
                let g = gen(k, cov, 64, seed).unwrap_or_else(|e| panic!("{k} {cov} seed {seed}: {e}"));
                assert!((g.achieved - cov).abs() <= k.tolerance(), "{k} {cov} seed {seed}: {}", g.achieved);
            }
        }
    }
}
