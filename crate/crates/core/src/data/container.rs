//! Binary model container.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! "SNNE1" | version u32 | payload | sha256(payload)
//! payload = manifest (len-prefixed UTF-8 `key=value` lines)
//!         | pipeline blob (len-prefixed)
//!         | member count u64 | per member: seed u64, weight blob (len-prefixed)
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::codec::{ByteReader, ByteWriter};
use crate::ensemble::EnsembleModel;
use crate::error::{ContainerError, Error, Result};
use crate::model::SnnModel;
use crate::preprocess::FittedPipeline;

pub const MAGIC: &[u8; 5] = b"SNNE1";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// Ordered `key=value` metadata stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn insert(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> std::result::Result<Self, ContainerError> {
        let mut m = Manifest::default();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ContainerError::Malformed(format!("manifest line '{line}'")))?;
            m.entries.push((k.to_string(), v.to_string()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub manifest: Manifest,
    pub ensemble: EnsembleModel,
}

impl ModelContainer {
    /// Wraps an ensemble; structural keys are filled in and `extra` is
    /// appended.
    pub fn new(ensemble: EnsembleModel, extra: &[(String, String)]) -> Self {
        let mut manifest = Manifest::default();
        let p = ensemble.pipeline();
        manifest.insert("format", "snn-ensemble");
        manifest.insert("input_dim", p.input_dim());
        manifest.insert("pipeline_dim", p.output_dim());
        manifest.insert("members", ensemble.members().len());
        let seeds: Vec<String> = ensemble.member_seeds().iter().map(u64::to_string).collect();
        manifest.insert("member_seeds", seeds.join(","));
        manifest.insert("feature_names", p.feature_names().join(","));
        for (k, v) in extra {
            manifest.insert(k, v);
        }
        Self { manifest, ensemble }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = ByteWriter::new();
        payload.bytes(self.manifest.to_text().as_bytes());
        payload.bytes(&self.ensemble.pipeline().to_bytes());
        payload.usize(self.ensemble.members().len());
        for (m, &seed) in self.ensemble.members().iter().zip(self.ensemble.member_seeds()) {
            payload.u64(seed);
            payload.bytes(&m.to_bytes());
        }
        let payload = payload.into_bytes();
        let mut out = Vec::with_capacity(payload.len() + 48);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, ContainerError> {
        if bytes.len() < MAGIC.len() {
            return Err(if MAGIC.starts_with(bytes) {
                ContainerError::Truncated
            } else {
                ContainerError::BadMagic
            });
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let rest = &bytes[MAGIC.len()..];
        if rest.len() < 4 + DIGEST_LEN {
            return Err(ContainerError::Truncated);
        }
        let version = u32::from_le_bytes(rest[..4].try_into().unwrap());
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let (payload, digest) = rest[4..].split_at(rest.len() - 4 - DIGEST_LEN);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(ContainerError::ChecksumMismatch);
        }

        let mut r = ByteReader::new(payload);
        let text = std::str::from_utf8(r.bytes()?)
            .map_err(|_| ContainerError::Malformed("manifest is not UTF-8".into()))?;
        let manifest = Manifest::parse(text)?;
        let pipeline = FittedPipeline::from_bytes(r.bytes()?)?;
        let count = r.len_prefix(8)?;
        let mut members = Vec::with_capacity(count);
        let mut seeds = Vec::with_capacity(count);
        for _ in 0..count {
            seeds.push(r.u64()?);
            members.push(SnnModel::from_bytes(r.bytes()?)?);
        }
        r.finish()?;
        if manifest.get("members") != Some(count.to_string().as_str()) {
            return Err(ContainerError::Malformed("manifest member count disagrees".into()));
        }
        let ensemble = EnsembleModel::new(pipeline, members, seeds)
            .map_err(|e| ContainerError::Malformed(e.to_string()))?;
        Ok(Self { manifest, ensemble })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureMatrix;
    use crate::model::SnnSpec;
    use crate::preprocess::{fit_pipeline, PreprocessConfig};

    fn container() -> ModelContainer {
        let x = FeatureMatrix::unnamed(30, 3, (0..90).map(|i| ((i * 37) % 11) as f64).collect()).unwrap();
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let pipeline = fit_pipeline(&x, &y, &PreprocessConfig::default()).unwrap();
        let members = (0..2)
            .map(|s| {
                SnnModel::lecun_init(&SnnSpec {
                    input_dim: pipeline.output_dim(),
                    hidden_dim: 4,
                    trunk_layers: 1,
                    upper_layers: 1,
                    projection_dim: 2,
                    alpha_dropout_rate: 0.0,
                    seed: s,
                })
                .unwrap()
            })
            .collect();
        let ens = EnsembleModel::new(pipeline, members, vec![0, 1]).unwrap();
        ModelContainer::new(ens, &[("target".into(), "y".into())])
    }

    #[test]
    fn round_trip() {
        let c = container();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..5], b"SNNE1");
        let back = ModelContainer::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.manifest.get("target"), Some("y"));
        assert_eq!(back.manifest.get("members"), Some("2"));
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = container().to_bytes();
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x10;
        assert_eq!(ModelContainer::from_bytes(&flipped), Err(ContainerError::ChecksumMismatch));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert_eq!(ModelContainer::from_bytes(&magic), Err(ContainerError::BadMagic));

        let mut version = bytes.clone();
        version[5] = 9;
        assert_eq!(ModelContainer::from_bytes(&version), Err(ContainerError::UnsupportedVersion(9)));

        assert_eq!(ModelContainer::from_bytes(&bytes[..bytes.len() - 1]), Err(ContainerError::ChecksumMismatch));
        assert_eq!(ModelContainer::from_bytes(&bytes[..7]), Err(ContainerError::Truncated));
        assert_eq!(ModelContainer::from_bytes(b"SN"), Err(ContainerError::Truncated));
        assert_ne!(
            ContainerError::BadMagic.code(),
            ContainerError::ChecksumMismatch.code()
        );
    }

    #[test]
    fn manifest_text() {
        let mut m = Manifest::default();
        m.insert("a", 1);
        m.insert("b", "x=y");
        m.insert("a", 2);
        let back = Manifest::parse(&m.to_text()).unwrap();
        assert_eq!(back.get("a"), Some("2"));
        assert_eq!(back.get("b"), Some("x=y"));
        assert!(Manifest::parse("novalue\n").is_err());
    }
}
