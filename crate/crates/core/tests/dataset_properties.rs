mod common;

use std::sync::OnceLock;

use omrl::dataset::{dataset_stats, decode, encode, load, replay_prefix, save, subsample, OfflineDataset};
use omrl::env::MultiAgentEnv;
use omrl::error::Error;
use proptest::prelude::*;

fn shared_stream() -> &'static OfflineDataset {
    static STREAM: OnceLock<OfflineDataset> = OnceLock::new();
    STREAM.get_or_init(|| common::stream(&common::tiny_uav(), 5, 10))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn subsample_is_an_exact_size_ordered_subset(fraction in 0.01f64..=1.0, seed in any::<u64>()) {
        let ds = shared_stream();
        let want = (fraction * ds.len() as f64).floor() as usize;
        match subsample(ds, fraction, seed) {
            Ok(sub) => {
                prop_assert_eq!(sub.len(), want);
                prop_assert_eq!(sub.fingerprint(), ds.fingerprint());
                prop_assert!((sub.meta().source_fraction - fraction).abs() < 1e-15);
                let mut it = ds.transitions().iter();
                prop_assert!(sub.transitions().iter().all(|t| it.any(|u| u == t)));
            }
            Err(_) => prop_assert_eq!(want, 0),
        }
    }

    #[test]
    fn subsample_depends_only_on_seed(fraction in 0.05f64..0.9, seed in any::<u64>()) {
        let ds = shared_stream();
        prop_assert_eq!(subsample(ds, fraction, seed).unwrap(), subsample(ds, fraction, seed).unwrap());
    }

    #[test]
    fn truncated_or_corrupt_bytes_are_format_errors(cut in 0usize..4000, flip in 0usize..8) {
        let ds = shared_stream();
        let bytes = encode(ds);
        let cut = cut % bytes.len();
        let truncated = matches!(decode(&bytes[..cut]), Err(Error::Format { .. }));
        prop_assert!(truncated);
        let mut bad = bytes.clone();
        bad[flip] ^= 0x5a;
        prop_assert!(decode(&bad).is_err());
    }
}

#[test]
fn encode_decode_is_identity() {
    let ds = shared_stream();
    let back = decode(&encode(ds)).unwrap();
    assert_eq!(&back, ds);
    assert_eq!(back.content_digest(), ds.content_digest());
}

#[test]
fn files_round_trip_and_guard_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let ds = shared_stream();
    let path = dir.path().join("ds.omrl");
    save(ds, &path).unwrap();
    assert_eq!(&load(&path, None).unwrap(), ds);
    assert_eq!(&load(&path, Some(&common::tiny_uav())).unwrap(), ds);
    let err = load(&path, Some(&common::tiny_rrm())).unwrap_err();
    assert!(matches!(err, Error::FingerprintMismatch { .. }));
    assert_eq!(err.exit_code(), 3);
    let missing = load(dir.path().join("nope.omrl"), None).unwrap_err();
    assert!(matches!(missing, Error::Io { .. }));
}

#[test]
fn full_streams_replay_and_subsamples_do_not() {
    let env = common::tiny_rrm();
    let ds = common::stream(&env, 3, 12);
    let report = replay_prefix(&ds, &env, ds.len()).unwrap();
    assert_eq!((report.checked, report.first_mismatch), (ds.len(), None));
    let sub = subsample(&ds, 0.5, 1).unwrap();
    assert!(replay_prefix(&sub, &env, 10).is_err());
}

#[test]
fn stream_shape_matches_the_environment() {
    let env = common::tiny_uav();
    let ds = shared_stream();
    let live = env.build().unwrap();
    let shape = ds.shape();
    assert_eq!((shape.num_agents, shape.obs_dim, shape.num_actions), (live.num_agents(), live.obs_dim(), live.num_actions()));
    assert_eq!(ds.len(), 5 * env.episode_len());
    for tr in ds.transitions() {
        assert_eq!(tr.obs.len(), shape.num_agents);
        assert!(tr.obs.iter().chain(&tr.next_obs).all(|o| o.len() == shape.obs_dim));
    }
    let stats = dataset_stats(ds);
    assert!(stats.mean_coverage() > 0.0 && stats.mean_coverage() <= 1.0);
}
