//! `OMRL-DS1` binary dataset files.
//!
//! ```text
//! "OMRL-DS1"                        8 bytes
//! version                           u32 (= 1)
//! env id                            u8  (0 rrm, 1 uav, 255 synthetic)
//! config fingerprint                32 bytes
//! has task                          u8, then power factor f64
//! behaviour policy name             u32 length + UTF-8
//! collection seed                   u64
//! source fraction, behaviour score  f64, f64
//! agents, obs dim, actions, info    4 x u32
//! transition count                  u64
//! records:
//!   t u64, done u8, reward f64, actions (agents x u32),
//!   obs (agents x obs_dim f64), next obs (same), info (info_dim f64)
//! ```
//! Everything little-endian.

use std::path::Path;

use super::{DatasetMeta, DatasetShape, OfflineDataset, Transition};
use crate::codec::{ByteReader, ByteWriter};
use crate::env::uav::TaskSpec;
use crate::env::{EnvConfig, EnvKind, Fingerprint};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"OMRL-DS1";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(ds: &OfflineDataset) -> Vec<u8> {
    let mut w = ByteWriter::default();
    let shape = ds.shape();
    w.bytes(DATASET_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(ds.env().code());
    w.bytes(&ds.fingerprint().0);
    match ds.task() {
        Some(task) => {
            w.u8(1);
            w.f64(task.power_factor);
        }
        None => {
            w.u8(0);
            w.f64(0.0);
        }
    }
    let meta = ds.meta();
    w.u32(meta.behavior_policy.len() as u32);
    w.bytes(meta.behavior_policy.as_bytes());
    w.u64(meta.collection_seed);
    w.f64(meta.source_fraction);
    w.f64(meta.behavior_score);
    w.u32(shape.num_agents as u32);
    w.u32(shape.obs_dim as u32);
    w.u32(shape.num_actions as u32);
    w.u32(shape.info_dim as u32);
    w.u64(ds.len() as u64);
    for tr in ds.transitions() {
        w.u64(tr.t);
        w.u8(tr.done as u8);
        w.f64(tr.reward);
        for &a in &tr.actions {
            w.u32(a as u32);
        }
        for v in tr.obs.iter().chain(&tr.next_obs).flatten() {
            w.f64(*v);
        }
        for &v in &tr.info {
            w.f64(v);
        }
    }
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<OfflineDataset> {
    let mut r = ByteReader::new(bytes);
    if r.take(DATASET_MAGIC.len(), "magic")? != DATASET_MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: "not an OMRL-DS1 dataset".into(),
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return r.fail(format!("unsupported version {version}"));
    }
    let code = r.u8("env id")?;
    let env = match EnvKind::from_code(code) {
        Some(e) => e,
        None => return r.fail(format!("unknown env id {code}")),
    };
    let mut fp = [0u8; 32];
    fp.copy_from_slice(r.take(32, "fingerprint")?);
    let has_task = r.u8("task flag")?;
    let factor = r.f64("power factor")?;
    let task = match has_task {
        0 => None,
        1 => Some(TaskSpec {
            power_factor: factor,
        }),
        other => return r.fail(format!("bad task flag {other}")),
    };
    let name_len = r.u32("name length")? as usize;
    let name = r.take(name_len, "behaviour policy name")?;
    let behavior_policy = match std::str::from_utf8(name) {
        Ok(s) => s.to_owned(),
        Err(_) => return r.fail("behaviour policy name is not UTF-8"),
    };
    let collection_seed = r.u64("collection seed")?;
    let source_fraction = r.f64("source fraction")?;
    let behavior_score = r.f64("behaviour score")?;
    let shape = DatasetShape {
        num_agents: r.u32("agent count")? as usize,
        obs_dim: r.u32("obs dim")? as usize,
        num_actions: r.u32("action count")? as usize,
        info_dim: r.u32("info dim")? as usize,
    };
    if shape.num_agents == 0 || shape.num_actions == 0 {
        return r.fail("agent and action counts must be positive");
    }
    let count = r.u64("transition count")? as usize;
    let record = 8 + 1 + 8 + 4 * shape.num_agents + 16 * shape.num_agents * shape.obs_dim + 8 * shape.info_dim;
    if count == 0 {
        return r.fail("dataset holds no transitions");
    }
    if r.remaining() != count.saturating_mul(record) {
        return r.fail(format!(
            "expected {count} records of {record} bytes, found {} bytes",
            r.remaining()
        ));
    }
    let mut transitions = Vec::with_capacity(count);
    for _ in 0..count {
        let t = r.u64("t")?;
        let done = match r.u8("done")? {
            0 => false,
            1 => true,
            other => return r.fail(format!("bad done flag {other}")),
        };
        let reward = r.finite_f64("reward")?;
        let mut actions = Vec::with_capacity(shape.num_agents);
        for _ in 0..shape.num_agents {
            let a = r.u32("action")? as usize;
            if a >= shape.num_actions {
                return r.fail(format!("action {a} out of range"));
            }
            actions.push(a);
        }
        let read_obs = |r: &mut ByteReader<'_>| -> Result<Vec<Vec<f64>>> {
            (0..shape.num_agents)
                .map(|_| (0..shape.obs_dim).map(|_| r.finite_f64("observation")).collect())
                .collect()
        };
        let obs = read_obs(&mut r)?;
        let next_obs = read_obs(&mut r)?;
        let info = (0..shape.info_dim)
            .map(|_| r.f64("info"))
            .collect::<Result<Vec<_>>>()?;
        transitions.push(Transition {
            obs,
            actions,
            reward,
            next_obs,
            done,
            t,
            info,
        });
    }
    OfflineDataset::new(
        env,
        Fingerprint(fp),
        task,
        DatasetMeta {
            behavior_policy,
            collection_seed,
            source_fraction,
            behavior_score,
        },
        shape,
        transitions,
    )
}

pub fn save(ds: &OfflineDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(ds)).map_err(|e| Error::io(path, e))
}

/// Loads a dataset; when `expected` is given the file must have been
/// collected under that environment configuration.
pub fn load(path: impl AsRef<Path>, expected: Option<&EnvConfig>) -> Result<OfflineDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ds = decode(&bytes)?;
    if let Some(cfg) = expected {
        ds.check_compatible(cfg)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::toy_dataset;
    use super::*;
    use crate::env::{RrmConfig, UavConfig};

    #[test]
    fn three_transition_golden_roundtrip() {
        let ds = toy_dataset(3, 4);
        let bytes = encode(&ds);
        let header = 8 + 4 + 1 + 32 + 1 + 8 + 4 + 4 + 8 + 8 + 8 + 16 + 8;
        let record = 8 + 1 + 8 + 2 * 4 + 2 * 2 * 2 * 8 + 3 * 8;
        assert_eq!(bytes.len(), header + 3 * record);
        assert_eq!(&bytes[..8], b"OMRL-DS1");
        let back = decode(&bytes).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.transitions().iter().zip(ds.transitions()) {
            assert_eq!(a.reward.to_bits(), b.reward.to_bits());
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ds");
        let p2 = dir.path().join("b.ds");
        let ds = toy_dataset(50, 3);
        save(&ds, &p1).unwrap();
        save(&load(&p1, None).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode(&toy_dataset(4, 3));
        match decode(&bytes[..bytes.len() - 5]) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn fingerprint_guard() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds");
        save(&toy_dataset(5, 3), &path).unwrap();
        let cfg = EnvConfig::Rrm(RrmConfig::default());
        assert!(matches!(
            load(&path, Some(&cfg)),
            Err(Error::FingerprintMismatch { .. })
        ));
        let uav = EnvConfig::Uav(UavConfig::default());
        assert!(load(&path, Some(&uav)).is_err());
    }
}
