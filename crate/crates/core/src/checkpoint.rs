//! Pretrained-artifact checkpoints.
//!
//! One versioned binary file carries everything an online run needs: the
//! environment spec text, the dataset tier, the learner config, the frozen
//! (policy, Q, V) triple, the normalization constants, and the offline
//! dataset itself (embedded as the standard record stream). A JSON sidecar
//! duplicates the learner config for human inspection.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::buffer::ReplayBuffer;
use crate::envs::{parse_env, DatasetTier, Env};
use crate::error::{Error, Result};
use crate::learner::{LearnerConfig, OfflineArtifacts};
use crate::tabular::{digest_hex, Policy, QTable, ValueTable};

const MAGIC: &[u8; 4] = b"SRLC";
const VERSION: u32 = 1;

/// Everything the online stage consumes from offline pre-training.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub env_text: String,
    pub tier: DatasetTier,
    pub learner: LearnerConfig,
    pub offline_iters: u64,
    pub seed: u64,
    pub policy: Policy,
    pub q: QTable,
    pub v: ValueTable,
    pub dataset: ReplayBuffer,
    pub random_return: f64,
    pub optimal_return: f64,
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        env_text: String,
        tier: DatasetTier,
        learner: LearnerConfig,
        offline_iters: u64,
        seed: u64,
        artifacts: OfflineArtifacts,
        dataset: ReplayBuffer,
        random_return: f64,
        optimal_return: f64,
    ) -> Result<Self> {
        if optimal_return <= random_return {
            return Err(Error::InvalidConfig(format!(
                "degenerate env: optimal return {optimal_return} <= random return {random_return}"
            )));
        }
        Ok(Checkpoint {
            env_text,
            tier,
            learner,
            offline_iters,
            seed,
            policy: artifacts.policy,
            q: artifacts.q,
            v: artifacts.v,
            dataset,
            random_return,
            optimal_return,
        })
    }

    pub fn env(&self) -> Result<Box<dyn Env + Send + Sync>> {
        parse_env(&self.env_text)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let ns = self.q.num_states() as u32;
        let na = self.q.num_actions() as u32;
        out.extend_from_slice(&ns.to_le_bytes());
        out.extend_from_slice(&na.to_le_bytes());
        write_block(&mut out, self.env_text.as_bytes());
        write_block(&mut out, self.tier.id().as_bytes());
        let cfg = serde_json::to_vec(&self.learner).expect("config serializes");
        write_block(&mut out, &cfg);
        out.extend_from_slice(&self.offline_iters.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.random_return.to_le_bytes());
        out.extend_from_slice(&self.optimal_return.to_le_bytes());
        out.extend_from_slice(&self.policy.le_bytes());
        out.extend_from_slice(&self.q.le_bytes());
        out.extend_from_slice(&self.v.le_bytes());
        self.dataset.save(&mut out).expect("vec write");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let bad = |reason: &str| Error::MalformedFile {
            path: "checkpoint".into(),
            reason: reason.into(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("wrong magic"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let ns = read_u32(&mut r)? as usize;
        let na = read_u32(&mut r)? as usize;
        let env_text = String::from_utf8(read_block(&mut r)?).map_err(|_| bad("env text utf8"))?;
        let tier: DatasetTier = String::from_utf8(read_block(&mut r)?)
            .map_err(|_| bad("tier utf8"))?
            .parse()?;
        let learner: LearnerConfig = serde_json::from_slice(&read_block(&mut r)?)
            .map_err(|e| bad(&format!("learner config: {e}")))?;
        let offline_iters = read_u64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let random_return = read_f64(&mut r)?;
        let optimal_return = read_f64(&mut r)?;
        let logits = read_f64_vec(&mut r, ns * na)?;
        let policy = Policy::from_logits(logits, ns, na)?.freeze();
        let mut q = QTable::zeros(ns, na);
        for s in 0..ns {
            for a in 0..na {
                q.set(s, a, read_f64(&mut r)?);
            }
        }
        let mut v = ValueTable::zeros(ns);
        for s in 0..ns {
            v.set(s, read_f64(&mut r)?);
        }
        let dataset = ReplayBuffer::load(&mut r, ns, na, 1)?;
        Ok(Checkpoint {
            env_text,
            tier,
            learner,
            offline_iters,
            seed,
            policy,
            q,
            v,
            dataset,
            random_return,
            optimal_return,
        })
    }

    /// Writes the binary checkpoint and its `<path>.json` learner-config
    /// sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
        let sidecar = path_with_json(path);
        let mut f =
            fs::File::create(&sidecar).map_err(|e| Error::io(sidecar.display().to_string(), e))?;
        let json = serde_json::to_string_pretty(&self.learner).expect("config serializes");
        f.write_all(json.as_bytes())
            .map_err(|e| Error::io(sidecar.display().to_string(), e))?;
        f.write_all(b"\n")
            .map_err(|e| Error::io(sidecar.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }

    /// Content digest of the serialized checkpoint; all controllers of one
    /// comparison batch must report the same value.
    pub fn digest(&self) -> String {
        digest_hex(&self.to_bytes())
    }
}

fn path_with_json(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    os.into()
}

fn write_block(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn read_block(r: &mut &[u8]) -> Result<Vec<u8>> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::io("checkpoint block", e))?;
    Ok(buf)
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::io("checkpoint u32", e))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::io("checkpoint u64", e))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::io("checkpoint f64", e))?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64_vec(r: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_f64(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_offline_dataset, optimal_return, random_return, DatasetTier};
    use crate::learner::offline_pretrain;
    use crate::rng::{stream_rng, Stream};

    fn small_checkpoint() -> Checkpoint {
        let env_text = "max_steps = 20\nS..G\n";
        let env = parse_env(env_text).unwrap();
        let dataset =
            generate_offline_dataset(env.as_ref(), DatasetTier::Random, 2_000, 0).unwrap();
        let cfg = LearnerConfig {
            discount: 0.9,
            ..Default::default()
        };
        let mut rng = stream_rng(0, Stream::Sampler);
        let artifacts = offline_pretrain(&dataset, &cfg, 3_000, &mut rng).unwrap();
        Checkpoint::new(
            env_text.to_string(),
            DatasetTier::Random,
            cfg,
            3_000,
            0,
            artifacts,
            dataset,
            random_return(env.as_ref(), 0),
            optimal_return(env.as_ref()),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ckpt = small_checkpoint();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back.env_text, ckpt.env_text);
        assert_eq!(back.tier, ckpt.tier);
        assert_eq!(back.learner, ckpt.learner);
        assert_eq!(back.policy.digest(), ckpt.policy.digest());
        assert_eq!(back.q.digest(), ckpt.q.digest());
        assert_eq!(back.dataset.len(), ckpt.dataset.len());
        assert_eq!(back.random_return, ckpt.random_return);
        assert_eq!(back.digest(), ckpt.digest());
        assert!(back.policy.frozen());
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let ckpt = small_checkpoint();
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.digest(), ckpt.digest());
        let sidecar = std::fs::read_to_string(dir.path().join("ckpt.bin.json")).unwrap();
        let cfg: LearnerConfig = serde_json::from_str(&sidecar).unwrap();
        assert_eq!(cfg, ckpt.learner);
    }

    #[test]
    fn rejects_corrupt_bytes() {
        let ckpt = small_checkpoint();
        let mut bytes = ckpt.to_bytes();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn degenerate_normalization_rejected() {
        let ckpt = small_checkpoint();
        let art = OfflineArtifacts {
            policy: ckpt.policy.clone(),
            q: ckpt.q.clone(),
            v: ckpt.v.clone(),
        };
        assert!(Checkpoint::new(
            ckpt.env_text.clone(),
            ckpt.tier,
            ckpt.learner,
            1,
            0,
            art,
            ckpt.dataset.clone(),
            1.0,
            1.0,
        )
        .is_err());
    }
}
