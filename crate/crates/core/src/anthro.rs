//! CIPIC-style pinna anthropometry: seven distances plus rotation and flare.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 9;

/// Model input order. Weights are only portable between runs that agree on it.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "d1", "d2", "d3", "d4", "d5", "d6", "d7", "rotation", "flare",
];

pub type FeatureVector = [f64; NUM_FEATURES];

/// Pinna features: d1..d7 in centimeters, rotation and flare in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnthroVector {
    pub distances_cm: [f64; 7],
    pub rotation_deg: f64,
    pub flare_deg: f64,
}

impl AnthroVector {
    pub fn new(distances_cm: [f64; 7], rotation_deg: f64, flare_deg: f64) -> Result<Self> {
        let v = Self {
            distances_cm,
            rotation_deg,
            flare_deg,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in FEATURE_NAMES.iter().zip(self.distances_cm) {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidInput(format!("{name} = {d} cm, must be > 0")));
            }
        }
        if !self.rotation_deg.is_finite() || !self.flare_deg.is_finite() {
            return Err(Error::InvalidInput("pinna angles must be finite".into()));
        }
        Ok(())
    }

    pub fn to_array(&self) -> FeatureVector {
        let mut out = [0.0; NUM_FEATURES];
        out[..7].copy_from_slice(&self.distances_cm);
        out[7] = self.rotation_deg;
        out[8] = self.flare_deg;
        out
    }

    pub fn from_array(a: FeatureVector) -> Self {
        let mut distances_cm = [0.0; 7];
        distances_cm.copy_from_slice(&a[..7]);
        Self {
            distances_cm,
            rotation_deg: a[7],
            flare_deg: a[8],
        }
    }
}

/// Which keypoint pair approximates each CIPIC distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeypointMapping {
    pub pairs: [(usize, usize); 7],
}

impl KeypointMapping {
    /// Reads a JSON object `{"d1": [a, b], ..., "d7": [a, b]}`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidInput(reason) => Error::manifest(path, reason),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, [usize; 2]> = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("keypoint mapping: {e}")))?;
        let mut pairs = [(0, 0); 7];
        for (i, name) in FEATURE_NAMES[..7].iter().enumerate() {
            let [a, b] = raw.get(*name).ok_or_else(|| {
                Error::InvalidInput(format!("keypoint mapping lacks {name}"))
            })?;
            pairs[i] = (*a, *b);
        }
        if let Some(extra) = raw.keys().find(|k| !FEATURE_NAMES[..7].contains(&k.as_str())) {
            return Err(Error::InvalidInput(format!(
                "keypoint mapping has unknown feature {extra}"
            )));
        }
        Ok(Self { pairs })
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<&str, [usize; 2]> = FEATURE_NAMES[..7]
            .iter()
            .zip(self.pairs)
            .map(|(n, (a, b))| (*n, [a, b]))
            .collect();
        serde_json::to_string_pretty(&raw).expect("mapping serializes")
    }
}

/// Reads a keypoints CSV (rows `x,y,z` in millimeters, optional header).
pub fn load_keypoints(path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if row == 0 && rec.get(0).is_some_and(|s| s.eq_ignore_ascii_case("x")) {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::Csv {
                path: path.into(),
                reason: format!("row {row}: expected 3 columns, found {}", rec.len()),
            });
        }
        let mut p = [0.0; 3];
        for (c, field) in rec.iter().enumerate() {
            p[c] = field.parse().map_err(|_| Error::Csv {
                path: path.into(),
                reason: format!("row {row}: bad number {field:?}"),
            })?;
        }
        out.push(p);
    }
    Ok(out)
}

pub fn save_keypoints(path: &Path, pts: &[[f64; 3]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["x", "y", "z"]).map_err(|e| csv_error(path, e))?;
    for p in pts {
        w.write_record(p.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.into(),
        reason: e.to_string(),
    }
}

/// Mirrors a point set across the sagittal plane (x → −x).
pub fn mirror_x(pts: &[[f64; 3]]) -> Vec<[f64; 3]> {
    pts.iter().map(|[x, y, z]| [-x, *y, *z]).collect()
}

/// Approximate CIPIC distances from 3D keypoints (mm in, cm out); angles pass through.
pub fn distances_from_keypoints(
    pts: &[[f64; 3]],
    mapping: &KeypointMapping,
    rotation_deg: f64,
    flare_deg: f64,
) -> Result<AnthroVector> {
    for (i, &(a, b)) in mapping.pairs.iter().enumerate() {
        for index in [a, b] {
            if index >= pts.len() {
                return Err(Error::KeypointIndex {
                    feature: FEATURE_NAMES[i],
                    index,
                    len: pts.len(),
                });
            }
        }
    }
    let mut distances_cm = [0.0; 7];
    for (i, &(a, b)) in mapping.pairs.iter().enumerate() {
        let feature = FEATURE_NAMES[i];
        let (p, q) = (pts[a], pts[b]);
        let mm = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        if mm == 0.0 {
            return Err(Error::ZeroDistance { feature });
        }
        distances_cm[i] = mm / 10.0;
    }
    AnthroVector::new(distances_cm, rotation_deg, flare_deg)
}

/// Per-feature z-score statistics, fitted on a training split only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: FeatureVector,
    pub std: FeatureVector,
}

impl Normalizer {
    /// Population mean and standard deviation per feature.
    pub fn fit(train: &[AnthroVector]) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::DatasetTooSmall(format!(
                "normalizer needs at least 2 vectors, got {}",
                train.len()
            )));
        }
        let n = train.len() as f64;
        let mut mean = [0.0; NUM_FEATURES];
        for v in train {
            for (m, x) in mean.iter_mut().zip(v.to_array()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);

        let mut std = [0.0; NUM_FEATURES];
        for v in train {
            for ((s, m), x) in std.iter_mut().zip(&mean).zip(v.to_array()) {
                *s += (x - m).powi(2);
            }
        }
        for (i, s) in std.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12 * mean[i].abs().max(1.0)) {
                return Err(Error::DegenerateFeature {
                    feature: FEATURE_NAMES[i],
                });
            }
        }
        Ok(Self { mean, std })
    }

    /// `(x - mean) / std`, unclipped.
    pub fn apply(&self, v: &AnthroVector) -> FeatureVector {
        let mut out = v.to_array();
        for ((x, m), s) in out.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
        out
    }

    pub fn invert(&self, z: &FeatureVector) -> AnthroVector {
        let mut out = *z;
        for ((x, m), s) in out.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = *x * s + m;
        }
        AnthroVector::from_array(out)
    }
}

pub fn fit_normalizer(train: &[AnthroVector]) -> Result<Normalizer> {
    Normalizer::fit(train)
}

pub fn apply_normalizer(n: &Normalizer, v: &AnthroVector) -> FeatureVector {
    n.apply(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mapping() -> KeypointMapping {
        KeypointMapping {
            pairs: [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (0, 6)],
        }
    }

    fn random_vectors(n: usize, seed: u64) -> Vec<AnthroVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let d = std::array::from_fn(|_| rng.gen_range(0.5..7.0));
                AnthroVector::new(d, rng.gen_range(0.0..30.0), rng.gen_range(10.0..50.0)).unwrap()
            })
            .collect()
    }

    #[test]
    fn unit_conversion_mm_to_cm() {
        let mut pts = vec![[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        pts.extend((2..7).map(|i| [i as f64 * 3.0, 1.0, 2.0 * i as f64]));
        let m = KeypointMapping {
            pairs: [(0, 1), (2, 3), (3, 4), (4, 5), (5, 6), (2, 6), (0, 2)],
        };
        let v = distances_from_keypoints(&pts, &m, 12.0, 30.0).unwrap();
        assert_eq!(v.distances_cm[0], 1.0);
        assert_eq!((v.rotation_deg, v.flare_deg), (12.0, 30.0));
    }

    #[test]
    fn out_of_bounds_index() {
        let pts = vec![[0.0, 0.0, 1.0]; 3];
        assert!(matches!(
            distances_from_keypoints(&pts, &mapping(), 0.0, 0.0),
            Err(Error::KeypointIndex { index: 3, .. })
        ));
    }

    #[test]
    fn coincident_points_rejected() {
        let pts: Vec<[f64; 3]> = (0..7).map(|i| [i as f64, 0.0, 0.0]).collect();
        let mut pts2 = pts.clone();
        pts2[1] = pts2[0];
        assert!(distances_from_keypoints(&pts, &mapping(), 0.0, 0.0).is_ok());
        assert!(matches!(
            distances_from_keypoints(&pts2, &mapping(), 0.0, 0.0),
            Err(Error::ZeroDistance { feature: "d1" })
        ));
    }

    /// Second, independent route to the Euclidean distance.
    fn oracle_distance(p: [f64; 3], q: [f64; 3]) -> f64 {
        let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).abs()).collect();
        let scale = d.iter().cloned().fold(0.0, f64::max);
        scale * d.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
    }

    proptest! {
        #[test]
        fn distances_match_oracle_and_rigid_motion(
            coords in proptest::collection::vec(-40.0f64..40.0, 21),
            angle in 0.0f64..std::f64::consts::TAU,
            shift in proptest::array::uniform3(-100.0f64..100.0),
        ) {
            let pts: Vec<[f64; 3]> = coords.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            let m = mapping();
            let v = distances_from_keypoints(&pts, &m, 5.0, 25.0).unwrap();
            for (i, &(a, b)) in m.pairs.iter().enumerate() {
                let want = oracle_distance(pts[a], pts[b]) / 10.0;
                prop_assert!((v.distances_cm[i] - want).abs() <= 1e-12 * want.max(1.0));
            }
            let (s, c) = angle.sin_cos();
            let moved: Vec<[f64; 3]> = pts
                .iter()
                .map(|[x, y, z]| [c * x - s * y + shift[0], s * x + c * y + shift[1], z + shift[2]])
                .collect();
            let vm = distances_from_keypoints(&moved, &m, 5.0, 25.0).unwrap();
            let vr = distances_from_keypoints(&mirror_x(&pts), &m, 5.0, 25.0).unwrap();
            for i in 0..7 {
                prop_assert!((vm.distances_cm[i] - v.distances_cm[i]).abs() < 1e-9);
                prop_assert_eq!(vr.distances_cm[i], v.distances_cm[i]);
            }
        }
    }

    #[test]
    fn two_vector_normalizer() {
        let a = AnthroVector::new([1.0; 7], 10.0, 20.0).unwrap();
        let b = AnthroVector::new([3.0; 7], 30.0, 40.0).unwrap();
        let n = Normalizer::fit(&[a, b]).unwrap();
        assert_eq!(n.mean[0], 2.0);
        assert_eq!(n.std[0], 1.0);
        assert_eq!(n.mean[7], 20.0);
        assert_eq!(n.std[8], 10.0);
    }

    #[test]
    fn constant_feature_named_in_error() {
        let a = AnthroVector::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], 10.0, 20.0).unwrap();
        let mut b = a;
        b.distances_cm.iter_mut().for_each(|d| *d += 1.0);
        b.rotation_deg = 11.0;
        assert!(matches!(
            Normalizer::fit(&[a, b]),
            Err(Error::DegenerateFeature { feature: "flare" })
        ));
        assert!(Normalizer::fit(&[a]).is_err());
    }

    #[test]
    fn normalizer_ignores_test_vectors() {
        let train = random_vectors(50, 1);
        let n = Normalizer::fit(&train).unwrap();
        let _test_a = random_vectors(10, 2);
        let _test_b = random_vectors(10, 3);
        assert_eq!(Normalizer::fit(&train).unwrap(), n);
    }

    #[test]
    fn zscored_training_set_is_standard() {
        let train = random_vectors(200, 7);
        let n = Normalizer::fit(&train).unwrap();
        let z: Vec<FeatureVector> = train.iter().map(|v| n.apply(v)).collect();
        for f in 0..NUM_FEATURES {
            let m = z.iter().map(|r| r[f]).sum::<f64>() / z.len() as f64;
            let s = (z.iter().map(|r| (r[f] - m).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
            assert!(m.abs() < 1e-9, "{m}");
            assert!((s - 1.0).abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn mean_maps_to_zero_and_inverse_recovers() {
        let train = random_vectors(30, 11);
        let n = Normalizer::fit(&train).unwrap();
        let z = n.apply(&AnthroVector::from_array(n.mean));
        assert!(z.iter().all(|x| x.abs() < 1e-12));
        for v in &train {
            let back = n.invert(&n.apply(v)).to_array();
            for (a, b) in back.iter().zip(v.to_array()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_not_clipped() {
        let train = random_vectors(30, 12);
        let n = Normalizer::fit(&train).unwrap();
        let mut far = n.mean;
        far[2] = n.mean[2] + 10.0 * n.std[2];
        let z = n.apply(&AnthroVector::from_array(far));
        assert!((z[2] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn normalized_features_invariant_to_affine_rescaling() {
        let train = random_vectors(40, 5);
        let scale = |v: &AnthroVector| {
            let mut a = v.to_array();
            for (i, x) in a.iter_mut().enumerate() {
                *x = *x * (1.0 + i as f64) + 3.0;
            }
            AnthroVector::from_array(a)
        };
        let scaled: Vec<_> = train.iter().map(scale).collect();
        let n1 = Normalizer::fit(&train).unwrap();
        let n2 = Normalizer::fit(&scaled).unwrap();
        for (v, s) in train.iter().zip(&scaled) {
            for (a, b) in n1.apply(v).iter().zip(n2.apply(s)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mapping_json_round_trip_and_validation() {
        let m = mapping();
        assert_eq!(KeypointMapping::from_json(&m.to_json()).unwrap(), m);
        assert!(KeypointMapping::from_json(r#"{"d1":[0,1]}"#).is_err());
    }
}
