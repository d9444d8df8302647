//! Per-stage JSON manifests recording what produced each artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{PipelineConfig, Stage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_hash: String,
    /// Hash of the configuration sections this stage depends on.
    pub stage_hash: String,
    pub seed: u64,
    /// Path relative to the output directory → sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
    pub params: serde_json::Value,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn manifest_path(out: &Path, stage: Stage) -> PathBuf {
    out.join("manifests").join(format!("{}.json", stage.name()))
}

fn hash_all(out: &Path, files: &[&str]) -> Result<BTreeMap<String, String>> {
    files.iter().map(|f| Ok((f.to_string(), file_sha256(&out.join(f))?))).collect()
}

impl Manifest {
    pub fn write(
        out: &Path,
        stage: Stage,
        cfg: &PipelineConfig,
        inputs: &[&str],
        outputs: &[&str],
        wall_time_s: f64,
        params: serde_json::Value,
    ) -> Result<Manifest> {
        let m = Manifest {
            stage,
            config_hash: cfg.hash(),
            stage_hash: cfg.stage_hash(stage),
            seed: cfg.seed,
            inputs: hash_all(out, inputs)?,
            outputs: hash_all(out, outputs)?,
            wall_time_s,
            params,
        };
        let path = manifest_path(out, stage);
        std::fs::create_dir_all(path.parent().unwrap())?;
        std::fs::write(&path, serde_json::to_string_pretty(&m)?)?;
        Ok(m)
    }

    pub fn read(out: &Path, stage: Stage) -> Result<Manifest> {
        let path = manifest_path(out, stage);
        if !path.exists() {
            return Err(Error::MissingArtifact { path, stage: stage.name() });
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(&path)?)?)
    }
}

/// Confirms that `upstream` ran with a configuration compatible with
/// `cfg` and that every artifact it lists is still present.
pub fn require(out: &Path, upstream: Stage, cfg: &PipelineConfig, force: bool) -> Result<Manifest> {
    let m = Manifest::read(out, upstream)?;
    for f in m.outputs.keys() {
        let p = out.join(f);
        if !p.exists() {
            return Err(Error::MissingArtifact { path: p, stage: upstream.name() });
        }
    }
    let want = cfg.stage_hash(upstream);
    if m.stage_hash != want {
        if force {
            log::warn!("{} artifacts were made with a different configuration; continuing (--force)", upstream.name());
        } else {
            return Err(Error::Config(format!(
                "{} artifacts in {} were made with a different configuration (hash {} vs {}); rerun `{}` or pass --force",
                upstream.name(),
                out.display(),
                &m.stage_hash[..12],
                &want[..12],
                upstream.name()
            )));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_and_mismatched_upstream() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::default();
        match require(dir.path(), Stage::Generate, &cfg, false) {
            Err(e @ Error::MissingArtifact { .. }) => {
                assert_eq!(e.exit_code(), 3);
                assert!(e.to_string().contains("generate"));
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(dir.path().join("a.txt"), "x").unwrap();
        Manifest::write(dir.path(), Stage::Generate, &cfg, &[], &["a.txt"], 0.0, serde_json::Value::Null).unwrap();
        require(dir.path(), Stage::Generate, &cfg, false).unwrap();

        let mut other = cfg.clone();
        other.synth.snr = 1.0;
        assert!(matches!(require(dir.path(), Stage::Generate, &other, false), Err(Error::Config(_))));
        require(dir.path(), Stage::Generate, &other, true).unwrap();

        std::fs::remove_file(dir.path().join("a.txt")).unwrap();
        assert!(matches!(require(dir.path(), Stage::Generate, &cfg, false), Err(Error::MissingArtifact { .. })));
    }
}
