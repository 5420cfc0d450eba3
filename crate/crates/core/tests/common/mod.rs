#![allow(dead_code)]

use std::path::{Path, PathBuf};

use leadone::densenet::{init_params, ModelConfig, Params};
use leadone::ecg_io::{write_csv_record, write_manifest, EcgRecord, ManifestEntry, ManifestKind};
use leadone::preprocess::{synth_dataset, SynthSpec};
use leadone::study::{CreatedStudy, ItemSource, NewStudy, StudyService};
use leadone::Label;

pub const TOY_REFS: [Label; 4] = [Label::Afib, Label::Afib, Label::Nsr, Label::Other];

/// Four synthetic 10 s items, record ids `toy0`..`toy3`, references [`TOY_REFS`].
pub fn toy_items() -> Vec<ItemSource> {
    let specs: Vec<SynthSpec> = TOY_REFS
        .iter()
        .enumerate()
        .map(|(i, &c)| SynthSpec::new(c, 10.0, 250.0, 40 + i as u64))
        .collect();
    synth_dataset(&specs)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, r)| ItemSource {
            record_id: format!("toy{i}"),
            segment_index: 0,
            dataset: "toy-source".into(),
            start_s: 0.0,
            reference_label: r.class,
            sampling_rate_hz: 250.0,
            samples_uv: r.record.lead("I").unwrap().to_vec(),
        })
        .collect()
}

pub fn create_toy(service: &mut StudyService, raters: &[&str]) -> CreatedStudy {
    service
        .create_study(NewStudy {
            study_id: Some("toy".into()),
            seed: 11,
            raters: raters.iter().map(|r| r.to_string()).collect(),
            items: toy_items(),
        })
        .unwrap()
}

pub fn token<'a>(created: &'a CreatedStudy, rater: &str) -> &'a str {
    &created
        .raters
        .iter()
        .find(|r| r.rater_id == rater)
        .unwrap()
        .token
}

/// Item id of toy record `i` in a study.
pub fn item_of(service: &StudyService, study: &str, i: usize) -> String {
    let s = service.study(study).unwrap();
    s.items()
        .iter()
        .find(|it| it.record_id == format!("toy{i}"))
        .unwrap()
        .item_id
        .clone()
}

/// Reduced model with a zero head and running statistics marked present:
/// every output is exactly uniform.
pub fn uniform_model() -> Params {
    let mut p = init_params(&ModelConfig::reduced(), 0).unwrap();
    p.stats_updates = 1;
    p
}

/// The scripted toy answers: per rater, label for toy records 0..3.
pub const ALICE: [&str; 4] = ["AFIB", "AFIB", "NSR", "NOT-SURE"];
pub const BOB: [&str; 4] = ["AFIB", "NSR", "NSR", "OTHER"];

pub fn answer_all(
    service: &mut StudyService,
    created: &CreatedStudy,
    rater: &str,
    labels: &[&str; 4],
) {
    for (i, l) in labels.iter().enumerate() {
        let item = item_of(service, &created.study_id, i);
        service
            .submit_annotation(&created.study_id, token(created, rater), &item, l)
            .unwrap();
    }
}

/// Reference manifest of the toy records, written under `dir`.
pub fn write_toy_manifest(dir: &Path) -> PathBuf {
    std::fs::create_dir_all(dir.join("records")).unwrap();
    let mut entries = Vec::new();
    for item in toy_items() {
        let rec = EcgRecord::new(
            item.record_id.clone(),
            250.0,
            vec!["I".into()],
            vec![item.samples_uv.clone()],
            None,
        )
        .unwrap();
        let rel = format!("records/{}.csv", item.record_id);
        std::fs::write(dir.join(&rel), write_csv_record(&rec)).unwrap();
        entries.push(ManifestEntry {
            record_id: item.record_id,
            path: rel.into(),
            label: item.reference_label,
            sampling_rate_hz: Some(250.0),
        });
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, write_manifest(ManifestKind::Reference, &entries)).unwrap();
    path
}
