use std::fs;
use std::path::Path;

use pinnanotch::anthro::AnthroVector;
use pinnanotch::dataset::{self, load_manifest, save_manifest, Acquisition, Dataset, Ear, SubjectRecord};
use pinnanotch::notch::ExtractionParams;
use pinnanotch::synth::{synth_dataset, GenerativeSpec};
use pinnanotch::Error;

const ANTHRO_CSV: &str = "subject,d1,d2,d3,d4,d5,d6,d7,rotation,flare\n\
    S1,1.9,0.8,1.7,1.6,6.3,3.1,0.6,10,30\n\
    S1,1.8,0.7,1.6,1.5,6.2,3.0,0.7,12,28\n\
    S2,2.1,0.9,1.9,1.8,6.8,3.4,0.5,8,35\n\
    S2,2.0,0.9,1.8,1.7,6.7,3.3,0.6,9,33\n";

fn write_two_by_two(dir: &Path, duplicate: bool) -> std::path::PathBuf {
    fs::write(dir.join("anthro.csv"), ANTHRO_CSV).unwrap();
    let second_ear = if duplicate { "left" } else { "right" };
    let manifest = format!(
        r#"{{
  "name": "two-by-two",
  "acquisition": "measured",
  "sample_rate_hz": 48000,
  "direction": {{ "azimuth_deg": 0, "elevation_deg": 0 }},
  "deduplicate_identical": false,
  "anthro_csv": "anthro.csv",
  "records": [
    {{ "subject_id": "S1", "ear": "left", "anthro_csv_row": 0, "n1_hz": 7100.0 }},
    {{ "subject_id": "S1", "ear": "{second_ear}", "anthro_csv_row": 1, "n1_hz": 7300.5 }},
    {{ "subject_id": "S2", "ear": "left", "anthro_csv_row": 2, "n1_hz": 8800.0 }},
    {{ "subject_id": "S2", "ear": "right", "anthro_csv_row": 3, "n1_hz": 9050.25 }}
  ]
}}"#
    );
    let path = dir.join("manifest.json");
    fs::write(&path, manifest).unwrap();
    path
}

#[test]
fn two_subjects_two_ears_give_four_records() {
    let dir = tempfile::tempdir().unwrap();
    let d = load_manifest(&write_two_by_two(dir.path(), false)).unwrap();
    assert_eq!(d.len(), 4);
    assert_eq!(d.acquisition, Acquisition::Measured);
    assert_eq!(d.records[1].key(), ("S1", Ear::Right));
    assert_eq!(d.records[3].n1_label_hz, Some(9050.25));
    assert_eq!(d.records[2].anthro.unwrap().distances_cm[2], 1.9);
    assert_eq!(d.records[0].prominent, Some(true));
}

#[test]
fn duplicate_subject_ear_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_manifest(&write_two_by_two(dir.path(), true)).unwrap_err();
    assert!(matches!(err, Error::DuplicateRecord { .. }), "{err}");
}

#[test]
fn missing_resource_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_two_by_two(dir.path(), false);
    fs::remove_file(dir.path().join("anthro.csv")).unwrap();
    assert!(load_manifest(&path).is_err());
}

#[test]
fn synthetic_dataset_round_trips_field_for_field() {
    let spec = GenerativeSpec {
        n_examples: 40,
        seed: 5,
        ..Default::default()
    };
    let d = synth_dataset(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = save_manifest(&d, dir.path()).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(back, d);

    let dir2 = tempfile::tempdir().unwrap();
    let again = load_manifest(&save_manifest(&back, dir2.path()).unwrap()).unwrap();
    assert_eq!(again, back);
}

#[test]
fn extracted_and_filtered_dataset_round_trips() {
    let d = synth_dataset(&GenerativeSpec {
        n_examples: 20,
        ..Default::default()
    })
    .unwrap();
    let (labeled, _) = d.extract_labels(&ExtractionParams::default()).unwrap();
    let filtered = dataset::filter_records(&labeled, 5000.0, true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let back = load_manifest(&save_manifest(&filtered, dir.path()).unwrap()).unwrap();
    assert_eq!(back, filtered);
}

#[test]
fn labeled_records_without_hrirs_round_trip() {
    let records = vec![
        SubjectRecord::labeled(
            "A",
            Ear::Left,
            AnthroVector::new([1.0, 0.6, 1.5, 1.4, 6.0, 3.0, 0.55], 5.0, 31.25).unwrap(),
            6123.456789,
        ),
        SubjectRecord::labeled(
            "A",
            Ear::Right,
            AnthroVector::new([1.1, 0.7, 1.6, 1.3, 6.1, 3.1, 0.65], 6.0, 29.0).unwrap(),
            0.1 + 0.2,
        ),
    ];
    let d = Dataset::new("labels", Acquisition::Simulated, 44_100.0, records).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(load_manifest(&save_manifest(&d, dir.path()).unwrap()).unwrap(), d);
}
