use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::log::{Recovery, StudyLog};
use super::report::{build_report, AgreementReport};
use super::state::{
    default_choices, Annotation, Event, ItemFailure, ModelResult, ModelRun, RaterEntry, Source,
    Study, StudyCreated, StudyItem, Unlock,
};
use super::StudyError;
use crate::densenet::{Params, Pipeline};
use crate::ecg_io::DatasetManifest;
use crate::label::Label;
use crate::preprocess::{extract_lead, split_segments, Segment};

/// One study item before ids and orders are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemSource {
    pub record_id: String,
    pub segment_index: usize,
    pub dataset: String,
    pub start_s: f64,
    pub reference_label: Label,
    pub sampling_rate_hz: f64,
    pub samples_uv: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NewStudy {
    pub study_id: Option<String>,
    pub seed: u64,
    pub raters: Vec<String>,
    pub items: Vec<ItemSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterToken {
    pub rater_id: String,
    pub token: String,
}

/// Returned once at creation; tokens are only stored hashed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedStudy {
    pub study_id: String,
    pub admin_token: String,
    pub raters: Vec<RaterToken>,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayHints {
    pub paper_speed_mm_per_s: f64,
    pub gain_mm_per_mv: f64,
    pub sample_unit: String,
}

impl Default for DisplayHints {
    fn default() -> Self {
        Self {
            paper_speed_mm_per_s: 25.0,
            gain_mm_per_mv: 10.0,
            sample_unit: "uV".into(),
        }
    }
}

/// What a rater sees: the waveform and progress, nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindedItem {
    pub item_id: String,
    pub sampling_rate_hz: f64,
    pub samples_uv: Vec<f64>,
    pub position: usize,
    pub total: usize,
    pub display: DisplayHints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextItem {
    Item(BlindedItem),
    Done { done: bool, total: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub item_id: String,
    pub label: Label,
    pub seq: u64,
    pub answered: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRunSummary {
    pub run_id: String,
    pub model_version: String,
    pub predicted: usize,
    pub failures: Vec<ItemFailure>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn hash_token(token: &str) -> String {
    hex(&Sha256::digest(token.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn new_token() -> String {
    let bytes: [u8; 16] = rand::rng().random();
    hex(&bytes)
}

/// Seed for a rater's presentation order: SHA-256 of (study seed, rater id).
pub fn rater_seed(study_seed: u64, rater_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(study_seed.to_le_bytes());
    h.update(rater_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Items from a reference manifest: lead I of every record, split into
/// 10–30 s segments, each inheriting the record's reference label.
pub fn items_from_manifest(manifest: &DatasetManifest) -> Result<Vec<ItemSource>, StudyError> {
    let mut items = Vec::new();
    for entry in &manifest.entries {
        let record = manifest
            .load_record(entry)
            .map_err(|e| StudyError::Argument(format!("{}: {e}", entry.record_id)))?;
        let label = record.reference_label().ok_or_else(|| {
            StudyError::Argument(format!("{} has no reference label", entry.record_id))
        })?;
        let signal = extract_lead(&record, "I").map_err(|e| StudyError::Argument(e.to_string()))?;
        for seg in split_segments(&signal).map_err(|e| StudyError::Argument(e.to_string()))? {
            items.push(ItemSource {
                record_id: seg.parent_id,
                segment_index: seg.segment_index,
                dataset: manifest.dataset_name.clone(),
                start_s: seg.start_s,
                reference_label: label,
                sampling_rate_hz: seg.sampling_rate_hz,
                samples_uv: seg.samples,
            });
        }
    }
    Ok(items)
}

fn segment_of(item: &StudyItem) -> Segment {
    Segment {
        parent_id: item.item_id.clone(),
        segment_index: item.segment_index,
        lead_name: "I".into(),
        duration_s: item.samples_uv.len() as f64 / item.sampling_rate_hz,
        samples: item.samples_uv.clone(),
        sampling_rate_hz: item.sampling_rate_hz,
        start_s: item.start_s,
        reference_label: None,
    }
}

struct OpenStudy {
    study: Study,
    log: StudyLog,
}

/// All studies under `<root>/studies`, one log file each.
pub struct StudyService {
    dir: PathBuf,
    studies: BTreeMap<String, OpenStudy>,
}

impl StudyService {
    /// Opens (or initializes) the data directory and replays every study log.
    pub fn open(root: &Path) -> Result<Self, StudyError> {
        let dir = root.join("studies");
        std::fs::create_dir_all(&dir)
            .map_err(|e| StudyError::Storage(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| StudyError::Storage(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        paths.sort();
        let mut studies = BTreeMap::new();
        for path in paths {
            let (log, records, recovery) = StudyLog::open(&path)?;
            if recovery
                != (Recovery {
                    records: records.len(),
                    ..Recovery::default()
                })
            {
                log::warn!("{}: recovered {} records", path.display(), recovery.records);
            }
            let study = Study::replay(&records)?;
            log::info!("loaded study {} ({} records)", study.id(), records.len());
            studies.insert(study.id().to_string(), OpenStudy { study, log });
        }
        Ok(Self { dir, studies })
    }

    pub fn study_ids(&self) -> Vec<String> {
        self.studies.keys().cloned().collect()
    }

    pub fn study(&self, study_id: &str) -> Result<&Study, StudyError> {
        self.studies
            .get(study_id)
            .map(|o| &o.study)
            .ok_or_else(|| StudyError::NotFound(format!("study {study_id}")))
    }

    fn open_mut(&mut self, study_id: &str) -> Result<&mut OpenStudy, StudyError> {
        self.studies
            .get_mut(study_id)
            .ok_or_else(|| StudyError::NotFound(format!("study {study_id}")))
    }

    fn commit(&mut self, study_id: &str, event: Event) -> Result<u64, StudyError> {
        let open = self.open_mut(study_id)?;
        open.study.validate(&event)?;
        let record = open.log.append(event.kind(), event.payload())?;
        open.study.apply(event);
        Ok(record.seq)
    }

    pub fn create_study(&mut self, spec: NewStudy) -> Result<CreatedStudy, StudyError> {
        if spec.items.is_empty() {
            return Err(StudyError::Argument(
                "a study needs at least one item".into(),
            ));
        }
        if spec.raters.is_empty() {
            return Err(StudyError::Argument(
                "a study needs at least one rater".into(),
            ));
        }
        if let Some(item) = spec
            .items
            .iter()
            .find(|i| !i.reference_label.is_reference())
        {
            return Err(StudyError::Argument(format!(
                "{} has reference label {}, not one of AFIB/NSR/OTHER",
                item.record_id, item.reference_label
            )));
        }
        for (i, r) in spec.raters.iter().enumerate() {
            if !valid_id(r) {
                return Err(StudyError::Argument(format!("invalid rater id {r:?}")));
            }
            if spec.raters[..i].contains(r) {
                return Err(StudyError::Argument(format!("duplicate rater id {r}")));
            }
        }
        let study_id = spec
            .study_id
            .clone()
            .unwrap_or_else(|| format!("study-{}", &new_token()[..8]));
        if !valid_id(&study_id) {
            return Err(StudyError::Argument(format!(
                "invalid study id {study_id:?}"
            )));
        }
        if self.studies.contains_key(&study_id) {
            return Err(StudyError::Conflict(format!("study {study_id} exists")));
        }

        // Item numbers come from a seeded permutation so ids reveal nothing
        // about manifest order.
        let mut numbers: Vec<usize> = (1..=spec.items.len()).collect();
        numbers.shuffle(&mut ChaCha8Rng::seed_from_u64(rater_seed(spec.seed, "")));
        let width = spec.items.len().to_string().len().max(4);
        let mut items: Vec<StudyItem> = spec
            .items
            .into_iter()
            .zip(&numbers)
            .map(|(s, n)| StudyItem {
                item_id: format!("item-{n:0width$}"),
                record_id: s.record_id,
                segment_index: s.segment_index,
                dataset: s.dataset,
                start_s: s.start_s,
                reference_label: s.reference_label,
                sampling_rate_hz: s.sampling_rate_hz,
                samples_uv: s.samples_uv,
            })
            .collect();
        items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        let ids: Vec<String> = items.iter().map(|i| i.item_id.clone()).collect();

        let admin_token = new_token();
        let mut tokens = Vec::new();
        let raters = spec
            .raters
            .iter()
            .map(|r| {
                let token = new_token();
                let mut order = ids.clone();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(rater_seed(spec.seed, r)));
                let entry = RaterEntry {
                    rater_id: r.clone(),
                    token_sha256: hash_token(&token),
                    order,
                };
                tokens.push(RaterToken {
                    rater_id: r.clone(),
                    token,
                });
                entry
            })
            .collect();
        let created = StudyCreated {
            study_id: study_id.clone(),
            seed: spec.seed,
            created_at_ms: now_ms(),
            choices: default_choices(),
            admin_token_sha256: hash_token(&admin_token),
            items,
            raters,
        };
        let study = Study::new(created.clone())?;
        let mut log = StudyLog::create(&self.dir.join(format!("{study_id}.ndjson")))?;
        let event = Event::Created(created);
        log.append(event.kind(), event.payload())?;
        let n_items = study.items().len();
        self.studies
            .insert(study_id.clone(), OpenStudy { study, log });
        Ok(CreatedStudy {
            study_id,
            admin_token,
            raters: tokens,
            items: n_items,
        })
    }

    fn rater_for(&self, study_id: &str, token: &str) -> Result<(&Study, &RaterEntry), StudyError> {
        let study = self.study(study_id)?;
        let rater = study
            .rater_by_token_hash(&hash_token(token))
            .ok_or_else(|| StudyError::Auth("unknown rater token".into()))?;
        Ok((study, rater))
    }

    pub fn check_admin(&self, study_id: &str, admin_token: &str) -> Result<(), StudyError> {
        if self.study(study_id)?.created.admin_token_sha256 != hash_token(admin_token) {
            return Err(StudyError::Auth("bad admin token".into()));
        }
        Ok(())
    }

    /// First unanswered item in the rater's order, blinded.
    pub fn next_item(&self, study_id: &str, token: &str) -> Result<NextItem, StudyError> {
        let (study, rater) = self.rater_for(study_id, token)?;
        let total = rater.order.len();
        let next = rater
            .order
            .iter()
            .enumerate()
            .find(|(_, id)| study.annotation(&rater.rater_id, id).is_none());
        Ok(match next {
            None => NextItem::Done { done: true, total },
            Some((position, id)) => {
                let item = study.item(id).expect("order lists study items");
                NextItem::Item(BlindedItem {
                    item_id: item.item_id.clone(),
                    sampling_rate_hz: item.sampling_rate_hz,
                    samples_uv: item.samples_uv.clone(),
                    position,
                    total,
                    display: DisplayHints::default(),
                })
            }
        })
    }

    pub fn submit_annotation(
        &mut self,
        study_id: &str,
        token: &str,
        item_id: &str,
        label: &str,
    ) -> Result<Ack, StudyError> {
        let (study, rater) = self.rater_for(study_id, token)?;
        let rater_id = rater.rater_id.clone();
        let total = rater.order.len();
        let label: Label = label.parse().map_err(|_| {
            StudyError::Argument(format!(
                "label {label:?} is not one of {:?}",
                study.created.choices
            ))
        })?;
        let event = Event::Annotation(Annotation {
            study_id: study_id.to_string(),
            rater_id: rater_id.clone(),
            item_id: item_id.to_string(),
            label,
            submitted_at_ms: now_ms(),
            source: Source::Human,
        });
        let seq = self.commit(study_id, event)?;
        Ok(Ack {
            item_id: item_id.to_string(),
            label,
            seq,
            answered: self.study(study_id)?.answered(&rater_id),
            total,
        })
    }

    /// Reopens a committed answer so the rater can decide again.
    pub fn unlock(
        &mut self,
        study_id: &str,
        admin_token: &str,
        rater_id: &str,
        item_id: &str,
        reason: &str,
    ) -> Result<u64, StudyError> {
        self.check_admin(study_id, admin_token)?;
        log::info!("study {study_id}: unlocking {item_id} for {rater_id}: {reason}");
        self.commit(
            study_id,
            Event::Unlock(Unlock {
                rater_id: rater_id.to_string(),
                item_id: item_id.to_string(),
                reason: reason.to_string(),
                at_ms: now_ms(),
            }),
        )
    }

    /// Runs the classifier over every item. Item failures are recorded and
    /// the run continues.
    pub fn run_model(
        &mut self,
        study_id: &str,
        admin_token: &str,
        params: &Params,
    ) -> Result<ModelRunSummary, StudyError> {
        self.check_admin(study_id, admin_token)?;
        let study = self.study(study_id)?;
        let mut pipeline = Pipeline::new(&params.config);
        let mut results = Vec::new();
        let mut failures = Vec::new();
        for item in study.items() {
            match pipeline.predict(params, &segment_of(item)) {
                Ok(p) => results.push(ModelResult {
                    item_id: item.item_id.clone(),
                    label: p.predicted_class,
                    probabilities: p.probabilities,
                }),
                Err(e) => {
                    log::warn!("study {study_id}: model failed on {}: {e}", item.item_id);
                    failures.push(ItemFailure {
                        item_id: item.item_id.clone(),
                        stage: e.stage.to_string(),
                        message: e.message,
                    });
                }
            }
        }
        let run = ModelRun {
            run_id: format!("run-{}", study.model_runs.len() + 1),
            model_version: params.model_version.clone(),
            at_ms: now_ms(),
            results,
            failures,
        };
        let summary = ModelRunSummary {
            run_id: run.run_id.clone(),
            model_version: run.model_version.clone(),
            predicted: run.results.len(),
            failures: run.failures.clone(),
        };
        self.commit(study_id, Event::ModelRun(run))?;
        Ok(summary)
    }

    pub fn report(&self, study_id: &str, admin_token: &str) -> Result<AgreementReport, StudyError> {
        self.check_admin(study_id, admin_token)?;
        build_report(self.study(study_id)?)
    }

    pub fn log_path(&self, study_id: &str) -> Result<PathBuf, StudyError> {
        self.studies
            .get(study_id)
            .map(|o| o.log.path().to_path_buf())
            .ok_or_else(|| StudyError::NotFound(format!("study {study_id}")))
    }
}
