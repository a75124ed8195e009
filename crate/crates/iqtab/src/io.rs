//! File formats: JSON MDPs, JSONL demonstration datasets, and a small
//! atomic-write helper so partial output never masquerades as a finished
//! artifact.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::mdp::{DemoDataset, DemoTransition, TabularMdp};
use crate::Result;

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write `bytes` to `path` through a same-directory temporary file and an
/// atomic rename. Either the old content or the complete new content is on
/// disk at every instant.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tag = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_file_name(format!(".{name}.{}.{tag}.tmp", std::process::id()));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Serialize `value` as pretty-printed JSON (plus trailing newline) to
/// `path`, atomically.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Parse a JSON file into any deserializable type.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Load an MDP from its JSON form
/// `{n_states, n_actions, gamma, p0, transition, true_reward?}` and check
/// its internal consistency.
pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    let mdp: TabularMdp = load_json(path)?;
    mdp.validate()?;
    Ok(mdp)
}

/// Save an MDP as pretty JSON, atomically.
pub fn save_mdp(path: &Path, mdp: &TabularMdp) -> Result<()> {
    save_json(path, mdp)
}

/// Load demonstrations from JSON Lines: one
/// `{episode, t, s, a, s_next, terminal}` object per line, blank lines
/// ignored.
pub fn load_demos(path: &Path) -> Result<DemoDataset> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut transitions = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: DemoTransition = serde_json::from_str(&line)?;
        transitions.push(t);
    }
    Ok(DemoDataset { transitions })
}

/// Save demonstrations as JSON Lines, atomically.
pub fn save_demos(path: &Path, demos: &DemoDataset) -> Result<()> {
    let mut bytes = Vec::new();
    for t in &demos.transitions {
        serde_json::to_writer(&mut bytes, t)?;
        bytes.push(b'\n');
    }
    atomic_write(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_loop_mdp;
    use crate::mdp::{sample_trajectories, PolicyTable, RngSeed};
    use crate::Error;

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "iqtab-io-{tag}-{}-{}",
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn mdp_round_trip() {
        let dir = temp_dir("mdp");
        let path = dir.join("loop.json");
        let mdp = make_loop_mdp(0.3, 0.97).unwrap();
        save_mdp(&path, &mdp).unwrap();
        let loaded = load_mdp(&path).unwrap();
        assert_eq!(loaded.n_states, mdp.n_states);
        assert_eq!(loaded.transition, mdp.transition);
        assert_eq!(loaded.p0, mdp.p0);
        assert_eq!(loaded.gamma, mdp.gamma);
        assert_eq!(loaded.true_reward, mdp.true_reward);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn invalid_mdp_file_is_rejected() {
        let dir = temp_dir("badmdp");
        let path = dir.join("bad.json");
        // Row sums to 2: parses but fails validation.
        let text = r#"{
            "n_states": 1, "n_actions": 1, "gamma": 0.9,
            "p0": [1.0], "transition": [[[2.0]]], "true_reward": null
        }"#;
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_mdp(&path),
            Err(Error::InvalidDistribution(_))
        ));
        fs::write(&path, "not json").unwrap();
        assert!(matches!(load_mdp(&path), Err(Error::Json(_))));
        assert!(matches!(
            load_mdp(&dir.join("missing.json")),
            Err(Error::Io(_))
        ));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn demo_round_trip_line_per_transition() {
        let dir = temp_dir("demos");
        let path = dir.join("demos.jsonl");
        let mdp = make_loop_mdp(0.5, 0.99).unwrap();
        let policy = PolicyTable::uniform(3, 2);
        let demos = sample_trajectories(&mdp, &policy, 3, 7, RngSeed(5), None).unwrap();
        save_demos(&path, &demos).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert!(text.ends_with('\n'));
        let loaded = load_demos(&path).unwrap();
        assert_eq!(loaded, demos);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = temp_dir("atomic");
        let path = dir.join("x.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second, longer content").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second, longer content");
        // No temporary litter left behind.
        let leftovers: Vec<_> = fs::read_dir(&dir)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
        fs::remove_dir_all(&dir).unwrap();
    }
}
