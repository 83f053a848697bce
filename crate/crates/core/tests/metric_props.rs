mod common;

use commu::metrics::*;
use commu::preprocess::transpose_sample;
use commu::*;
use common::oracle::{diversity_brute, harmony_by_ticks, pair_distance};
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// A sample with a guaranteed key and chords, notes on 6..=121.
fn harmonic_sample(seed: u64) -> Sample {
    let mut r = rng(seed);
    let nm = NumMeasures::Four;
    let mut s = Sample {
        metadata: random_metadata(&mut r, nm),
        chords: random_progression(&mut r, 4, 6),
        notes: random_notes(&mut r, 4, 25, 6..=121),
    };
    s.metadata.key = Some(Key::from_index(r.random_range(0..24)).unwrap());
    if s.chords.is_empty() {
        s.chords.push(ChordEvent::new(r.random_range(0..4), r.random_range(0..128), random_chord(&mut r)));
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn harmony_matches_tick_oracle(s in arb_sample()) {
        match (harmony_counts(&s), harmony_by_ticks(&s)) {
            (Ok(c), Some((good, total))) => {
                prop_assert_eq!(c.matched, good);
                prop_assert_eq!(c.total, total);
            }
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
        }
    }

    #[test]
    fn harmony_survives_transposition(seed in any::<u64>(), delta in -6i32..=5) {
        let s = harmonic_sample(seed);
        let t = transpose_sample(&s, delta);
        prop_assert_eq!(harmony_counts(&s).unwrap(), harmony_counts(&t).unwrap());
    }

    #[test]
    fn distance_axioms(a in arb_sample(), b in arb_sample()) {
        let d = distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, distance(&b, &a));
        prop_assert_eq!(distance(&a, &a), 0.0);
        prop_assert!((d - pair_distance(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn diversity_is_the_pairwise_mean(seed in any::<u64>(), n in 2usize..=8) {
        let mut r = rng(seed);
        let mut set: Vec<Sample> = (0..n).map(|_| random_sample(&mut r)).collect();
        let d = diversity(&set).unwrap();
        prop_assert!((d - diversity_brute(&set)).abs() < 1e-12);
        set.shuffle(&mut r);
        prop_assert!((diversity(&set).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn ratios_are_fractions(s in arb_sample()) {
        for r in [controllability_pitch(&s), controllability_velocity(&s), controllability_harmony(&s)]
            .into_iter()
            .flatten()
        {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn conforming_samples_score_one(seed in any::<u64>()) {
        let mut s = harmonic_sample(seed);
        let key = s.metadata.key.unwrap();
        let range = PitchRange::ALL[(seed % 7) as usize];
        let (lo, hi) = range.bounds();
        s.metadata.pitch_range = Some(range);
        s.metadata.min_velocity = Some(Velocity(30));
        s.metadata.max_velocity = Some(Velocity(90));
        let scale = key.scale_pitch_classes();
        for (i, n) in s.notes.iter_mut().enumerate() {
            // the lowest in-range pitch of a scale class
            let pc = scale[i % 7].index();
            n.pitch = Pitch((lo..=hi).find(|p| p % 12 == pc).unwrap_or(lo));
            n.velocity = Velocity(30 + (i as u8 * 7) % 61);
        }
        s.normalize_order();
        s.notes.dedup_by_key(|n| n.sort_key());
        if !s.notes.is_empty() {
            prop_assert_eq!(controllability_velocity(&s).unwrap(), 1.0);
            prop_assert_eq!(controllability_pitch(&s).unwrap(), 1.0);
            if (hi - lo) >= 11 {
                prop_assert_eq!(controllability_harmony(&s).unwrap(), 1.0);
            }
        }
    }
}

#[test]
fn distance_endpoints() {
    assert_eq!(distance_from_similarities(1.0, 1.0), 0.0);
    assert_eq!(distance_from_similarities(0.0, 0.0), 1.0);
}

#[test]
fn cosine_handles_silence() {
    assert_eq!(cosine(&[0.0; 4], &[0.0; 4]), 1.0);
    assert_eq!(cosine(&[0.0; 4], &[1.0, 0.0, 0.0, 0.0]), 0.0);
    assert_eq!(cosine(&[3.0, 4.0], &[3.0, 4.0]), 1.0);
}

#[test]
fn corpus_stats_rows_add_up() {
    let mut r = rng(9);
    let samples: Vec<Sample> = (0..200).map(|_| random_sample(&mut r)).collect();
    let stats = corpus_stats(&samples, "instrument").unwrap();
    let counted: usize = stats.rows.iter().map(|g| g.n).sum();
    assert_eq!(counted + stats.skipped, samples.len());
    for co in &stats.cooccurrence {
        for g in &stats.rows {
            assert!(co.row_sum(&g.group) >= g.n);
        }
    }
    assert!(stats.to_csv().starts_with("group,n,density_mean,density_std,length_mean,length_std\n"));
    assert!(corpus_stats(&samples, "colour").is_err());
}
