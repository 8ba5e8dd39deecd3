//! Cohort directory format.
//!
//! A cohort is a directory holding `manifest.json` plus one raw binary file
//! per subject: little-endian `f32`, row-major `[trials][channels][samples]`,
//! no header. All shape information lives in the manifest, so decoding is a
//! pure function of (bytes, manifest).

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Disease, Gender, Subject, Trial};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSubject {
    pub id: String,
    pub gender: Gender,
    pub disease: Disease,
    /// Number of trials stored in `file`.
    pub trials: usize,
    /// Binary file name, relative to the cohort directory.
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortManifest {
    pub name: String,
    /// Sampling rate of every trial, Hz.
    pub rate: u32,
    /// Channel count of every trial.
    pub channels: usize,
    /// Channel names in 10-20 order; length must equal `channels`.
    pub channel_names: Vec<String>,
    /// Duration of every trial in whole seconds.
    pub trial_seconds: usize,
    pub subjects: Vec<ManifestSubject>,
}

impl CohortManifest {
    pub fn samples_per_trial(&self) -> usize {
        self.trial_seconds * self.rate as usize
    }

    fn validate(&self) -> Result<()> {
        if self.rate == 0 {
            return Err(Error::Data("manifest rate must be positive".into()));
        }
        if self.channels == 0 {
            return Err(Error::Data("manifest channel count must be positive".into()));
        }
        if self.trial_seconds == 0 {
            return Err(Error::Data("manifest trial_seconds must be positive".into()));
        }
        if self.channel_names.len() != self.channels {
            return Err(Error::Data(format!(
                "manifest lists {} channel names for {} channels",
                self.channel_names.len(),
                self.channels
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.subjects {
            if s.trials == 0 {
                return Err(Error::Data(format!("subject {}: zero trials", s.id)));
            }
            if !seen.insert(&s.id) {
                return Err(Error::Data(format!("duplicate subject id {}", s.id)));
            }
        }
        Ok(())
    }
}

/// Parse and validate a manifest from its JSON text.
pub fn parse_manifest_str(text: &str) -> Result<CohortManifest> {
    let manifest: CohortManifest =
        serde_json::from_str(text).map_err(|e| Error::json("manifest.json", e))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Decode one subject's raw trial bytes into `trials` matrices of
/// `channels x samples_per_trial`. Rejects size mismatches and non-finite
/// values, naming the offending trial.
pub fn decode_trial_bytes(
    bytes: &[u8],
    trials: usize,
    channels: usize,
    samples_per_trial: usize,
) -> Result<Vec<Array2<f32>>> {
    let floats_expected = trials
        .checked_mul(channels)
        .and_then(|v| v.checked_mul(samples_per_trial))
        .ok_or_else(|| Error::Shape("trial shape overflows".into()))?;
    let bytes_expected = floats_expected
        .checked_mul(4)
        .ok_or_else(|| Error::Shape("trial byte size overflows".into()))?;
    if bytes.len() != bytes_expected {
        return Err(Error::Shape(format!(
            "expected {trials}x{channels}x{samples_per_trial} little-endian f32 ({bytes_expected} bytes), file has {} bytes",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(trials);
    let per_trial = channels * samples_per_trial;
    for t in 0..trials {
        let mut data = Array2::<f32>::zeros((channels, samples_per_trial));
        for c in 0..channels {
            for s in 0..samples_per_trial {
                let off = ((t * per_trial) + c * samples_per_trial + s) * 4;
                let v = f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "trial {t}, channel {c}, sample {s} is not finite"
                    )));
                }
                data[[c, s]] = v;
            }
        }
        out.push(data);
    }
    Ok(out)
}

fn encode_trials(trials: &[Trial]) -> Vec<u8> {
    let mut bytes = Vec::new();
    for trial in trials {
        for c in 0..trial.channels() {
            for s in 0..trial.len_samples() {
                bytes.extend_from_slice(&trial.data()[[c, s]].to_le_bytes());
            }
        }
    }
    bytes
}

/// Load a cohort directory. Returns subjects in manifest order plus the
/// parsed manifest.
pub fn load_cohort(dir: impl AsRef<Path>) -> Result<(Vec<Arc<Subject>>, CohortManifest)> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest = parse_manifest_str(&text)?;
    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for ms in &manifest.subjects {
        let path = dir.join(&ms.file);
        let bytes =
            std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let matrices =
            decode_trial_bytes(&bytes, ms.trials, manifest.channels, manifest.samples_per_trial())
                .map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("subject {}: {m}", ms.id)),
                    Error::Shape(m) => Error::Shape(format!("subject {}: {m}", ms.id)),
                    other => other,
                })?;
        let trials = matrices
            .into_iter()
            .map(|m| Trial::new(m, manifest.rate))
            .collect::<Result<Vec<_>>>()?;
        subjects.push(Arc::new(Subject::new(&ms.id, ms.gender, ms.disease, trials)));
    }
    Ok((subjects, manifest))
}

/// Write a cohort directory. All subjects must share channel count, rate and
/// trial length; the save/load round trip is bit-exact.
pub fn save_cohort(
    subjects: &[Arc<Subject>],
    dir: impl AsRef<Path>,
    name: &str,
    channel_names: Option<Vec<String>>,
) -> Result<CohortManifest> {
    let dir = dir.as_ref();
    let first = subjects
        .first()
        .ok_or_else(|| Error::Data("cannot save an empty cohort".into()))?;
    let first_trial = first
        .trials()
        .first()
        .ok_or_else(|| Error::Data(format!("subject {} has no trials", first.id())))?;
    let rate = first_trial.rate();
    let channels = first_trial.channels();
    let trial_seconds = first_trial.duration_seconds();
    for s in subjects {
        for (i, t) in s.trials().iter().enumerate() {
            if t.rate() != rate || t.channels() != channels || t.duration_seconds() != trial_seconds
            {
                return Err(Error::Data(format!(
                    "subject {} trial {i} does not match the cohort shape ({channels} ch, {trial_seconds} s @ {rate} Hz)",
                    s.id()
                )));
            }
        }
    }
    let channel_names = match channel_names {
        Some(names) => {
            if names.len() != channels {
                return Err(Error::Data(format!(
                    "{} channel names given for {channels} channels",
                    names.len()
                )));
            }
            names
        }
        None => (0..channels).map(|c| format!("ch{c:02}")).collect(),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut manifest = CohortManifest {
        name: name.to_string(),
        rate,
        channels,
        channel_names,
        trial_seconds,
        subjects: Vec::new(),
    };
    for s in subjects {
        let file = format!("{}.f32", s.id());
        let path = dir.join(&file);
        std::fs::write(&path, encode_trials(s.trials()))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        manifest.subjects.push(ManifestSubject {
            id: s.id().to_string(),
            gender: s.gender(),
            disease: s.disease(),
            trials: s.trials().len(),
            file,
        });
    }
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::json("manifest serialization", e))?;
    std::fs::write(&manifest_path, text)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cohort() -> Vec<Arc<Subject>> {
        let mk = |id: &str, gender, disease, scale: f32| {
            let t0 = Trial::new(
                Array2::from_shape_fn((3, 16), |(c, t)| scale * (c as f32 + 0.25 * t as f32)),
                8,
            )
            .unwrap();
            let t1 = Trial::new(
                Array2::from_shape_fn((3, 16), |(c, t)| scale - c as f32 * 0.5 + t as f32),
                8,
            )
            .unwrap();
            Arc::new(Subject::new(id, gender, disease, vec![t0, t1]))
        };
        vec![
            mk("s01", Gender::Female, Disease::DnPlus, 1.5),
            mk("s02", Gender::Male, Disease::DnMinus, -0.75),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = tiny_cohort();
        save_cohort(&cohort, dir.path(), "tiny", None).unwrap();
        let (loaded, manifest) = load_cohort(dir.path()).unwrap();
        assert_eq!(manifest.channels, 3);
        assert_eq!(manifest.trial_seconds, 2);
        assert_eq!(loaded.len(), 2);
        for (a, b) in cohort.iter().zip(&loaded) {
            assert_eq!(a.id(), b.id());
            assert_eq!(a.gender(), b.gender());
            assert_eq!(a.disease(), b.disease());
            for (ta, tb) in a.trials().iter().zip(b.trials()) {
                assert!(ta
                    .data()
                    .iter()
                    .zip(tb.data().iter())
                    .all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn shape_mismatch_is_named() {
        // Declared channel count differs from the stored matrix.
        let bytes = vec![0u8; 2 * 62 * 16 * 4];
        let err = decode_trial_bytes(&bytes, 2, 63, 16).unwrap_err();
        assert!(err.to_string().contains("2x63x16"), "{err}");
    }

    #[test]
    fn nan_rejection_names_subject_and_trial() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = tiny_cohort();
        save_cohort(&cohort, dir.path(), "tiny", None).unwrap();
        // Poison one float in s02's second trial.
        let path = dir.path().join("s02.f32");
        let mut bytes = std::fs::read(&path).unwrap();
        let off = (3 * 16 + 5) * 4; // trial 1, channel 0, sample 5
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load_cohort(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("s02") && msg.contains("trial 1"), "{msg}");
    }

    #[test]
    fn unknown_enum_and_unknown_key_are_rejected() {
        let good = r#"{"name":"x","rate":8,"channels":1,"channel_names":["a"],
                       "trial_seconds":1,"subjects":[{"id":"s","gender":"female",
                       "disease":"dn_plus","trials":1,"file":"s.f32"}]}"#;
        assert!(parse_manifest_str(good).is_ok());
        let bad_enum = good.replace("female", "other");
        assert!(parse_manifest_str(&bad_enum).is_err());
        let bad_key = good.replace("\"rate\":8", "\"rate\":8,\"rte\":9");
        assert!(parse_manifest_str(&bad_key).is_err());
    }
}
