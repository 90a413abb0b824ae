//! Datasets of labeled ears and the JSON manifest interchange format.
//!
//! A manifest is one UTF-8 JSON file per dataset:
//!
//! ```json
//! {
//!   "name": "HUTUBS-measured",
//!   "acquisition": "measured",
//!   "sample_rate_hz": 48000,
//!   "direction": { "azimuth_deg": 0, "elevation_deg": 0 },
//!   "deduplicate_identical": false,
//!   "hrir_length": 256,
//!   "anthro_csv": "anthro.csv",
//!   "keypoint_mapping": "mapping.json",
//!   "records": [
//!     { "subject_id": "S1", "ear": "left", "anthro_csv_row": 0, "hrir_file": "hrir/S1_L.f32" },
//!     { "subject_id": "S2", "ear": "right", "keypoints_file": "kp/S2_R.csv",
//!       "rotation_deg": 8.5, "flare_deg": 27.0, "n1_hz": 8120.5 }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest. HRIR files hold `hrir_length` raw
//! little-endian `f32` samples. The anthropometry CSV has a header naming
//! `d1`..`d7` (cm), `rotation` and `flare` (degrees); other columns are
//! ignored and `anthro_csv_row` is the 0-based data row. Keypoint files hold
//! `x,y,z` rows in millimeters and need `keypoint_mapping` to become features.
//! A record must carry `hrir_file`, `n1_hz`, or both; `prominent` defaults to
//! true when `n1_hz` is given.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anthro::{
    self, csv_error, distances_from_keypoints, AnthroVector, KeypointMapping, FEATURE_NAMES,
};
use crate::error::{Error, Result};
use crate::io::{f32_le_bytes, read_f32_le, write_atomic};
use crate::notch::{extract_n1, ExtractionParams, Hrir, NotchFeatures};

/// Notches below this frequency do not count for elevation cues.
pub const MIN_N1_HZ: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ear {
    Left,
    Right,
}

impl fmt::Display for Ear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ear::Left => "left",
            Ear::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acquisition {
    Simulated,
    Measured,
}

impl fmt::Display for Acquisition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Acquisition::Simulated => "simulated",
            Acquisition::Measured => "measured",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Direction {
    pub const FRONT: Direction = Direction {
        azimuth_deg: 0.0,
        elevation_deg: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub ear: Ear,
    pub anthro: Option<AnthroVector>,
    /// Raw keypoints in millimeters, as acquired.
    pub keypoints: Option<Vec<[f64; 3]>>,
    pub hrir: Option<Hrir>,
    pub n1_label_hz: Option<f64>,
    /// `None` until extraction has run (or a label was supplied).
    pub prominent: Option<bool>,
}

impl SubjectRecord {
    /// A record with a precomputed label and no HRIR.
    pub fn labeled(subject_id: impl Into<String>, ear: Ear, anthro: AnthroVector, n1_hz: f64) -> Self {
        Self {
            subject_id: subject_id.into(),
            ear,
            anthro: Some(anthro),
            keypoints: None,
            hrir: None,
            n1_label_hz: Some(n1_hz),
            prominent: Some(true),
        }
    }

    pub fn key(&self) -> (&str, Ear) {
        (&self.subject_id, self.ear)
    }

    pub fn require_anthro(&self) -> Result<&AnthroVector> {
        self.anthro.as_ref().ok_or_else(|| Error::MissingAnthropometry {
            subject_id: self.subject_id.clone(),
            ear: self.ear.to_string(),
        })
    }

    pub fn require_label(&self) -> Result<f64> {
        self.n1_label_hz.ok_or_else(|| Error::MissingLabel {
            subject_id: self.subject_id.clone(),
            ear: self.ear.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub acquisition: Acquisition,
    pub sample_rate_hz: f64,
    pub direction: Direction,
    /// Collapse a subject's left/right records when they are identical.
    pub deduplicate_identical: bool,
    /// Set by [`merge_ears`]; right-ear keypoints are then stored mirrored.
    pub ears_merged: bool,
    pub records: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        acquisition: Acquisition,
        sample_rate_hz: f64,
        records: Vec<SubjectRecord>,
    ) -> Result<Self> {
        let d = Self {
            name: name.into(),
            acquisition,
            sample_rate_hz,
            direction: Direction::FRONT,
            deduplicate_identical: false,
            ears_merged: false,
            records,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dataset {} sample rate {}",
                self.name, self.sample_rate_hz
            )));
        }
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.key()) {
                return Err(Error::DuplicateRecord {
                    subject_id: r.subject_id.clone(),
                    ear: r.ear.to_string(),
                });
            }
            if r.hrir.is_none() && r.n1_label_hz.is_none() {
                return Err(Error::InvalidInput(format!(
                    "record ({}, {}) has neither an HRIR nor an N1 label",
                    r.subject_id, r.ear
                )));
            }
            if let Some(h) = &r.hrir {
                if h.sample_rate_hz != self.sample_rate_hz {
                    return Err(Error::SampleRateMismatch {
                        expected: self.sample_rate_hz,
                        found: h.sample_rate_hz,
                        subject_id: r.subject_id.clone(),
                    });
                }
                if h.azimuth_deg != self.direction.azimuth_deg
                    || h.elevation_deg != self.direction.elevation_deg
                {
                    return Err(Error::InvalidInput(format!(
                        "record ({}, {}) direction differs from the dataset's",
                        r.subject_id, r.ear
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn with_records(&self, records: Vec<SubjectRecord>) -> Self {
        Self {
            records,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Self {
        Self {
            name: self.name.clone(),
            acquisition: self.acquisition,
            sample_rate_hz: self.sample_rate_hz,
            direction: self.direction,
            deduplicate_identical: self.deduplicate_identical,
            ears_merged: self.ears_merged,
            records: Vec::new(),
        }
    }

    /// Features and labels of every record, in order.
    pub fn examples(&self) -> Result<Vec<(AnthroVector, f64)>> {
        self.records
            .iter()
            .map(|r| Ok((*r.require_anthro()?, r.require_label()?)))
            .collect()
    }

    /// Runs N1 extraction on every record that has an HRIR and stores the result
    /// as its label. Records without an HRIR keep their label and yield `None`.
    pub fn extract_labels(
        &self,
        params: &ExtractionParams,
    ) -> Result<(Dataset, Vec<Option<NotchFeatures>>)> {
        let features: Vec<Option<NotchFeatures>> = self
            .records
            .par_iter()
            .map(|r| {
                r.hrir
                    .as_ref()
                    .map(|h| {
                        extract_n1(h, params).map_err(|e| {
                            Error::InvalidInput(format!(
                                "extraction failed for ({}, {}): {e}",
                                r.subject_id, r.ear
                            ))
                        })
                    })
                    .transpose()
            })
            .collect::<Result<_>>()?;
        let records = self
            .records
            .iter()
            .zip(&features)
            .map(|(r, f)| {
                let mut r = r.clone();
                if let Some(f) = f {
                    r.n1_label_hz = f.n1_hz();
                    r.prominent = Some(f.prominent());
                }
                r
            })
            .collect();
        Ok((self.with_records(records), features))
    }
}

/// Keeps records with N1 ≥ `min_n1_hz` (inclusive) and, optionally, a prominent notch.
pub fn filter_records(d: &Dataset, min_n1_hz: f64, require_prominent: bool) -> Result<Dataset> {
    let mut kept = Vec::with_capacity(d.len());
    for r in &d.records {
        let prominent = r.prominent.ok_or_else(|| Error::MissingLabel {
            subject_id: r.subject_id.clone(),
            ear: r.ear.to_string(),
        })?;
        let Some(hz) = r.n1_label_hz else {
            // Extraction ran but found no notch at all.
            continue;
        };
        if hz >= min_n1_hz && (prominent || !require_prominent) {
            kept.push(r.clone());
        }
    }
    Ok(d.with_records(kept))
}

/// Treats every ear as an independent example.
///
/// Right-ear keypoints are mirrored into left-ear orientation. When the
/// dataset is flagged `deduplicate_identical`, a subject whose two ears carry
/// identical data contributes only its first record.
pub fn merge_ears(d: &Dataset) -> Dataset {
    if d.ears_merged {
        return d.clone();
    }
    let mut records: Vec<SubjectRecord> = Vec::with_capacity(d.len());
    for r in &d.records {
        if d.deduplicate_identical {
            let twin = records
                .iter()
                .any(|k| k.subject_id == r.subject_id && k.ear != r.ear && same_ear_data(k, r));
            if twin {
                continue;
            }
        }
        let mut r = r.clone();
        if r.ear == Ear::Right {
            r.keypoints = r.keypoints.as_deref().map(anthro::mirror_x);
        }
        records.push(r);
    }
    let mut out = d.with_records(records);
    out.ears_merged = true;
    out
}

fn same_ear_data(a: &SubjectRecord, b: &SubjectRecord) -> bool {
    match (&a.hrir, &b.hrir) {
        (Some(x), Some(y)) => x.samples == y.samples,
        (None, None) => a.n1_label_hz == b.n1_label_hz && a.anthro == b.anthro,
        _ => false,
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    name: String,
    acquisition: Acquisition,
    sample_rate_hz: f64,
    direction: Direction,
    #[serde(default)]
    deduplicate_identical: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    ears_merged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hrir_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anthro_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keypoint_mapping: Option<String>,
    records: Vec<ManifestRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    subject_id: String,
    ear: Ear,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anthro_csv_row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keypoints_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flare_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hrir_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n1_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prominent: Option<bool>,
}

/// Loads a manifest and every per-record resource it references.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::manifest(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |rel: &str| -> PathBuf { base.join(rel) };

    let anthro_rows = m
        .anthro_csv
        .as_deref()
        .map(|f| load_anthro_csv(&resolve(f)))
        .transpose()?;
    let mapping = m
        .keypoint_mapping
        .as_deref()
        .map(|f| KeypointMapping::load(&resolve(f)))
        .transpose()?;

    let mut records = Vec::with_capacity(m.records.len());
    for (i, rec) in m.records.into_iter().enumerate() {
        let bad = |reason: String| Error::manifest(path, format!("record {i}: {reason}"));
        if let Some(fs) = rec.sample_rate_hz {
            if fs != m.sample_rate_hz {
                return Err(Error::SampleRateMismatch {
                    expected: m.sample_rate_hz,
                    found: fs,
                    subject_id: rec.subject_id,
                });
            }
        }

        let keypoints = rec
            .keypoints_file
            .as_deref()
            .map(|f| anthro::load_keypoints(&resolve(f)))
            .transpose()?;

        let anthro = match (rec.anthro_csv_row, &keypoints) {
            (Some(row), _) => {
                let rows = anthro_rows
                    .as_ref()
                    .ok_or_else(|| bad("anthro_csv_row given but manifest has no anthro_csv".into()))?;
                Some(*rows.get(row).ok_or_else(|| {
                    bad(format!("anthro_csv_row {row} beyond {} rows", rows.len()))
                })?)
            }
            (None, Some(pts)) => match &mapping {
                Some(map) => {
                    let (rot, flare) = rec
                        .rotation_deg
                        .zip(rec.flare_deg)
                        .ok_or_else(|| bad("keypoint records need rotation_deg and flare_deg".into()))?;
                    let oriented = match rec.ear {
                        Ear::Right if !m.ears_merged => anthro::mirror_x(pts),
                        _ => pts.clone(),
                    };
                    Some(distances_from_keypoints(&oriented, map, rot, flare)?)
                }
                None => None,
            },
            (None, None) => None,
        };

        let hrir = match rec.hrir_file.as_deref() {
            Some(f) => {
                let file = resolve(f);
                let samples = read_f32_le(&file)?;
                if let Some(n) = m.hrir_length {
                    if samples.len() != n {
                        return Err(bad(format!(
                            "{} holds {} samples, manifest says {n}",
                            file.display(),
                            samples.len()
                        )));
                    }
                }
                Some(Hrir {
                    samples,
                    sample_rate_hz: m.sample_rate_hz,
                    azimuth_deg: m.direction.azimuth_deg,
                    elevation_deg: m.direction.elevation_deg,
                })
            }
            None => None,
        };

        if hrir.is_none() && rec.n1_hz.is_none() {
            return Err(bad("needs hrir_file or n1_hz".into()));
        }
        let prominent = rec.prominent.or(rec.n1_hz.map(|_| true));
        records.push(SubjectRecord {
            subject_id: rec.subject_id,
            ear: rec.ear,
            anthro,
            keypoints,
            hrir,
            n1_label_hz: rec.n1_hz,
            prominent,
        });
    }

    let d = Dataset {
        name: m.name,
        acquisition: m.acquisition,
        sample_rate_hz: m.sample_rate_hz,
        direction: m.direction,
        deduplicate_identical: m.deduplicate_identical,
        ears_merged: m.ears_merged,
        records,
    };
    d.validate()?;
    Ok(d)
}

/// Writes `d` as `manifest.json` plus resources under `dir`; returns the manifest path.
pub fn save_manifest(d: &Dataset, dir: &Path) -> Result<PathBuf> {
    d.validate()?;
    let hrir_length = d.records.iter().find_map(|r| r.hrir.as_ref().map(Hrir::len));
    if let Some(n) = hrir_length {
        if d.records.iter().any(|r| r.hrir.as_ref().is_some_and(|h| h.len() != n)) {
            return Err(Error::InvalidInput(
                "all HRIRs in a manifest must share one length".into(),
            ));
        }
    }

    let mut anthro_rows = Vec::new();
    let mut records = Vec::with_capacity(d.len());
    for (i, r) in d.records.iter().enumerate() {
        let anthro_csv_row = r.anthro.map(|a| {
            anthro_rows.push(a);
            anthro_rows.len() - 1
        });
        let keypoints_file = match &r.keypoints {
            Some(pts) => {
                let rel = format!("keypoints/r{i:05}.csv");
                let file = dir.join(&rel);
                std::fs::create_dir_all(file.parent().unwrap()).map_err(|e| Error::io(dir, e))?;
                anthro::save_keypoints(&file, pts)?;
                Some(rel)
            }
            None => None,
        };
        let hrir_file = match &r.hrir {
            Some(h) => {
                let rel = format!("hrir/r{i:05}.f32");
                write_atomic(&dir.join(&rel), &f32_le_bytes(&h.samples))?;
                Some(rel)
            }
            None => None,
        };
        records.push(ManifestRecord {
            subject_id: r.subject_id.clone(),
            ear: r.ear,
            anthro_csv_row,
            keypoints_file,
            rotation_deg: None,
            flare_deg: None,
            hrir_file,
            sample_rate_hz: None,
            n1_hz: r.n1_label_hz,
            prominent: r.prominent,
        });
    }

    let anthro_csv = if anthro_rows.is_empty() {
        None
    } else {
        let rel = "anthro.csv".to_string();
        save_anthro_csv(&dir.join(&rel), &anthro_rows)?;
        Some(rel)
    };

    let m = Manifest {
        name: d.name.clone(),
        acquisition: d.acquisition,
        sample_rate_hz: d.sample_rate_hz,
        direction: d.direction,
        deduplicate_identical: d.deduplicate_identical,
        ears_merged: d.ears_merged,
        hrir_length,
        anthro_csv,
        keypoint_mapping: None,
        records,
    };
    let path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&m).expect("manifest serializes");
    json.push('\n');
    write_atomic(&path, json.as_bytes())?;
    Ok(path)
}

/// Reads an anthropometry CSV; columns are located by header name.
pub fn load_anthro_csv(path: &Path) -> Result<Vec<AnthroVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let columns: Vec<usize> = FEATURE_NAMES
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| Error::Csv {
                path: path.into(),
                reason: format!("missing column {name}"),
            })
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let mut a = [0.0; 9];
        for (slot, &c) in a.iter_mut().zip(&columns) {
            let field = rec.get(c).unwrap_or("");
            *slot = field.parse().map_err(|_| Error::Csv {
                path: path.into(),
                reason: format!("row {row}: bad number {field:?}"),
            })?;
        }
        let v = AnthroVector::from_array(a);
        v.validate().map_err(|e| Error::Csv {
            path: path.into(),
            reason: format!("row {row}: {e}"),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn save_anthro_csv(path: &Path, rows: &[AnthroVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FEATURE_NAMES).map_err(|e| csv_error(path, e))?;
    for v in rows {
        w.write_record(v.to_array().iter().map(|x| x.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}
