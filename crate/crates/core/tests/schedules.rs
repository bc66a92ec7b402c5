mod common;

use common::{comm_soundness, schedule_soundness, verify_soundness};
use mumab_core::TiebreakMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn verification_verdicts_are_exact() {
    for m in 2..=5 {
        for k in 1..=m {
            let r = verify_soundness(k, m);
            assert!(r.clean(), "k={k} m={m}: {r:?}");
        }
    }
}

#[test]
fn small_systems_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = schedule_soundness(3, 4, &mut rng);
    assert!(r.clean(), "{r:?}");
    assert!(r.configurations > 100);
}

#[test]
fn tiebreak_modes_settle_identically() {
    // Fully tied rows make every matching optimal.
    for (k, m) in [(2, 3), (3, 3), (3, 5)] {
        let tied = |ids: &[usize]| ids.iter().map(|_| vec![0.5; m]).collect();
        let (a, sa) = comm_soundness(k, m, 1, TiebreakMode::Protocol, tied);
        let (b, sb) = comm_soundness(k, m, 1, TiebreakMode::Deterministic, tied);
        assert!(a.clean() && b.clean());
        assert!(a.steps > b.steps, "the protocol mode spends steps pinning");
        assert_eq!(sa, sb);
        // the canonical choice is the lexicographically smallest matching
        assert!(sa.iter().all(|s| *s == (1..=k).collect::<Vec<_>>()));
    }
}
