use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::log::LogRecord;
use super::StudyError;
use crate::label::{Label, RATER_CHOICES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyItem {
    pub item_id: String,
    pub record_id: String,
    pub segment_index: usize,
    pub dataset: String,
    pub start_s: f64,
    pub reference_label: Label,
    pub sampling_rate_hz: f64,
    pub samples_uv: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterEntry {
    pub rater_id: String,
    pub token_sha256: String,
    /// Presentation order (item ids).
    pub order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCreated {
    pub study_id: String,
    pub seed: u64,
    pub created_at_ms: u64,
    pub choices: Vec<Label>,
    pub admin_token_sha256: String,
    pub items: Vec<StudyItem>,
    pub raters: Vec<RaterEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub study_id: String,
    pub rater_id: String,
    pub item_id: String,
    pub label: Label,
    pub submitted_at_ms: u64,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unlock {
    pub rater_id: String,
    pub item_id: String,
    pub reason: String,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub item_id: String,
    pub label: Label,
    /// Over (NSR, AFIB, OTHER, NOISE).
    pub probabilities: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub run_id: String,
    pub model_version: String,
    pub at_ms: u64,
    pub results: Vec<ModelResult>,
    pub failures: Vec<ItemFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Created(StudyCreated),
    Annotation(Annotation),
    Unlock(Unlock),
    ModelRun(ModelRun),
}

pub const KIND_CREATED: &str = "study_created";
pub const KIND_ANNOTATION: &str = "annotation";
pub const KIND_UNLOCK: &str = "unlock";
pub const KIND_MODEL_RUN: &str = "model_run";

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Created(_) => KIND_CREATED,
            Self::Annotation(_) => KIND_ANNOTATION,
            Self::Unlock(_) => KIND_UNLOCK,
            Self::ModelRun(_) => KIND_MODEL_RUN,
        }
    }

    pub fn payload(&self) -> serde_json::Value {
        let v = match self {
            Self::Created(e) => serde_json::to_value(e),
            Self::Annotation(e) => serde_json::to_value(e),
            Self::Unlock(e) => serde_json::to_value(e),
            Self::ModelRun(e) => serde_json::to_value(e),
        };
        v.expect("event types serialize")
    }

    pub fn from_record(r: &LogRecord) -> Result<Self, StudyError> {
        let bad = |e: serde_json::Error| {
            StudyError::Corrupt(format!("record {} ({}): {e}", r.seq, r.kind))
        };
        let p = r.payload.clone();
        Ok(match r.kind.as_str() {
            KIND_CREATED => Self::Created(serde_json::from_value(p).map_err(bad)?),
            KIND_ANNOTATION => Self::Annotation(serde_json::from_value(p).map_err(bad)?),
            KIND_UNLOCK => Self::Unlock(serde_json::from_value(p).map_err(bad)?),
            KIND_MODEL_RUN => Self::ModelRun(serde_json::from_value(p).map_err(bad)?),
            other => {
                return Err(StudyError::Corrupt(format!(
                    "record {}: unknown kind {other}",
                    r.seq
                )))
            }
        })
    }
}

/// Committed state of one study.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub created: StudyCreated,
    item_index: HashMap<String, usize>,
    /// Committed annotation per (rater, item).
    pub annotations: BTreeMap<(String, String), Annotation>,
    pub unlocks: Vec<Unlock>,
    pub model_runs: Vec<ModelRun>,
}

impl Study {
    pub fn new(created: StudyCreated) -> Result<Self, StudyError> {
        if created.items.is_empty() {
            return Err(StudyError::Argument(
                "a study needs at least one item".into(),
            ));
        }
        if created.raters.is_empty() {
            return Err(StudyError::Argument(
                "a study needs at least one rater".into(),
            ));
        }
        let mut item_index = HashMap::new();
        for (i, item) in created.items.iter().enumerate() {
            if item_index.insert(item.item_id.clone(), i).is_some() {
                return Err(StudyError::Argument(format!(
                    "duplicate item id {}",
                    item.item_id
                )));
            }
        }
        for (i, r) in created.raters.iter().enumerate() {
            if created.raters[..i].iter().any(|o| o.rater_id == r.rater_id) {
                return Err(StudyError::Argument(format!(
                    "duplicate rater id {}",
                    r.rater_id
                )));
            }
            let mut order = r.order.clone();
            order.sort();
            let mut ids: Vec<_> = created.items.iter().map(|it| it.item_id.clone()).collect();
            ids.sort();
            if order != ids {
                return Err(StudyError::Argument(format!(
                    "order of {} is not a permutation of the items",
                    r.rater_id
                )));
            }
        }
        Ok(Self {
            created,
            item_index,
            annotations: BTreeMap::new(),
            unlocks: Vec::new(),
            model_runs: Vec::new(),
        })
    }

    /// Rebuilds a study from its log records.
    pub fn replay(records: &[LogRecord]) -> Result<Self, StudyError> {
        let mut events = records.iter().map(Event::from_record);
        let mut study = match events.next() {
            Some(Ok(Event::Created(c))) => Study::new(c)?,
            Some(Err(e)) => return Err(e),
            _ => {
                return Err(StudyError::Corrupt(
                    "log does not start with study creation".into(),
                ))
            }
        };
        for event in events {
            let event = event?;
            study.validate(&event)?;
            study.apply(event);
        }
        Ok(study)
    }

    pub fn id(&self) -> &str {
        &self.created.study_id
    }

    pub fn item(&self, item_id: &str) -> Option<&StudyItem> {
        self.item_index
            .get(item_id)
            .map(|&i| &self.created.items[i])
    }

    pub fn items(&self) -> &[StudyItem] {
        &self.created.items
    }

    pub fn rater(&self, rater_id: &str) -> Option<&RaterEntry> {
        self.created.raters.iter().find(|r| r.rater_id == rater_id)
    }

    pub fn rater_by_token_hash(&self, hash: &str) -> Option<&RaterEntry> {
        self.created.raters.iter().find(|r| r.token_sha256 == hash)
    }

    pub fn annotation(&self, rater_id: &str, item_id: &str) -> Option<&Annotation> {
        self.annotations
            .get(&(rater_id.to_string(), item_id.to_string()))
    }

    pub fn answered(&self, rater_id: &str) -> usize {
        self.annotations
            .keys()
            .filter(|(r, _)| r == rater_id)
            .count()
    }

    pub fn latest_model_run(&self) -> Option<&ModelRun> {
        self.model_runs.last()
    }

    /// Checks an event against the current state without applying it.
    pub fn validate(&self, event: &Event) -> Result<(), StudyError> {
        match event {
            Event::Created(_) => Err(StudyError::Corrupt("study created twice".into())),
            Event::Annotation(a) => {
                if a.study_id != self.id() {
                    return Err(StudyError::Argument(format!(
                        "annotation for study {}",
                        a.study_id
                    )));
                }
                if self.rater(&a.rater_id).is_none() {
                    return Err(StudyError::NotFound(format!("rater {}", a.rater_id)));
                }
                if self.item(&a.item_id).is_none() {
                    return Err(StudyError::NotFound(format!("item {}", a.item_id)));
                }
                if a.source == Source::Human && !self.created.choices.contains(&a.label) {
                    return Err(StudyError::Argument(format!(
                        "{} is not one of the study choices",
                        a.label
                    )));
                }
                if self.annotation(&a.rater_id, &a.item_id).is_some() {
                    return Err(StudyError::Conflict(format!(
                        "{} already answered {}",
                        a.rater_id, a.item_id
                    )));
                }
                Ok(())
            }
            Event::Unlock(u) => {
                if self.annotation(&u.rater_id, &u.item_id).is_none() {
                    return Err(StudyError::NotFound(format!(
                        "no committed answer from {} on {}",
                        u.rater_id, u.item_id
                    )));
                }
                Ok(())
            }
            Event::ModelRun(run) => {
                for r in &run.results {
                    if self.item(&r.item_id).is_none() {
                        return Err(StudyError::NotFound(format!("item {}", r.item_id)));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn apply(&mut self, event: Event) {
        match event {
            Event::Created(_) => {}
            Event::Annotation(a) => {
                self.annotations
                    .insert((a.rater_id.clone(), a.item_id.clone()), a);
            }
            Event::Unlock(u) => {
                self.annotations
                    .remove(&(u.rater_id.clone(), u.item_id.clone()));
                self.unlocks.push(u);
            }
            Event::ModelRun(r) => self.model_runs.push(r),
        }
    }
}

/// Default rater choices.
pub fn default_choices() -> Vec<Label> {
    RATER_CHOICES.to_vec()
}
