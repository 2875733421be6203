//! JSON Lines dataset manifests and the content-addressed audio layout.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sound::{MixtureSpec, SoundSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifestRecord {
    Sound {
        spec: SoundSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        audio: Option<String>,
    },
    Mixture {
        spec: MixtureSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        audio: Option<String>,
    },
}

impl ManifestRecord {
    pub fn audio(&self) -> Option<&str> {
        match self {
            ManifestRecord::Sound { audio, .. } | ManifestRecord::Mixture { audio, .. } => {
                audio.as_deref()
            }
        }
    }
}

pub fn write_manifest(records: &[ManifestRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses a manifest. Blank lines are skipped; every other line must be a
/// record with a valid spec.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line)
            .map_err(|e| Error::format(format!("manifest line {}: {e}", no + 1)))?;
        let check = match &rec {
            ManifestRecord::Sound { spec, .. } => spec.validate(),
            ManifestRecord::Mixture { spec, .. } => spec.validate(),
        };
        check.map_err(|e| Error::format(format!("manifest line {}: {e}", no + 1)))?;
        if let Some(path) = rec.audio() {
            if !is_content_path(path) {
                return Err(Error::format(format!(
                    "manifest line {}: audio path '{path}' is not content-addressed",
                    no + 1
                )));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// `audio/<first two hex digits>/<sha256>.wav`, relative to the dataset root.
pub fn content_path(bytes: &[u8]) -> String {
    let digest = hex::encode(Sha256::digest(bytes));
    format!("audio/{}/{}.wav", &digest[..2], digest)
}

fn is_content_path(path: &str) -> bool {
    let parts: Vec<&str> = path.split('/').collect();
    match parts.as_slice() {
        ["audio", prefix, file] => {
            let Some(stem) = file.strip_suffix(".wav") else {
                return false;
            };
            stem.len() == 64
                && stem.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
                && stem.starts_with(prefix)
                && prefix.len() == 2
        }
        _ => false,
    }
}
